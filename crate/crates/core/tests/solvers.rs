use distcomm_core::prob::{DistortionSpec, Distribution, JointDistribution};
use distcomm_core::rd::{distortion_range, rate_distortion, rd_curve, sanov_exponent, DEFAULT_TOL};
use distcomm_core::{Alphabet, SeededRng};
use rayon::prelude::*;

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn plogp(v: f64) -> f64 {
    if v > 0.0 {
        v * v.log2()
    } else {
        0.0
    }
}

/// Grid minimum of I(X;Y) over binary test channels meeting `E d <= target`.
fn grid_rate(p0: f64, d: [[f64; 2]; 2], target: f64, step: f64) -> f64 {
    let k = (1.0 / step).round() as usize;
    (0..=k)
        .into_par_iter()
        .map(|i| {
            let a = i as f64 * step;
            let mut best = f64::INFINITY;
            for j in 0..=k {
                let b = j as f64 * step;
                let w = [[1.0 - a, a], [b, 1.0 - b]];
                let px = [p0, 1.0 - p0];
                let ed: f64 = (0..2)
                    .flat_map(|x| (0..2).map(move |y| (x, y)))
                    .map(|(x, y)| px[x] * w[x][y] * d[x][y])
                    .sum();
                if ed > target + 1e-12 {
                    continue;
                }
                let qy = [
                    px[0] * w[0][0] + px[1] * w[1][0],
                    px[0] * w[0][1] + px[1] * w[1][1],
                ];
                let hy = -plogp(qy[0]) - plogp(qy[1]);
                let hyx: f64 = (0..2)
                    .map(|x| px[x] * (-plogp(w[x][0]) - plogp(w[x][1])))
                    .sum();
                best = best.min(hy - hyx);
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Grid minimum of D(q || p x q_Y) over 2x2 joints with |q_Z - p|_1 <= eps and `E_q d <= target`.
fn grid_exponent(p0: f64, d: [[f64; 2]; 2], target: f64, eps: f64, step: f64) -> f64 {
    let k = (1.0 / step).round() as usize;
    let px = [p0, 1.0 - p0];
    let zs: Vec<f64> = (0..=k)
        .map(|i| i as f64 * step)
        .filter(|z| 2.0 * (z - p0).abs() <= eps + 1e-12)
        .collect();
    let zs = if zs.is_empty() { vec![p0] } else { zs };
    zs.par_iter()
        .map(|&z| {
            let qz = [z, 1.0 - z];
            let mut best = f64::INFINITY;
            for i in 0..=k {
                let a = i as f64 * step;
                for j in 0..=k {
                    let b = j as f64 * step;
                    let q = [
                        [qz[0] * (1.0 - a), qz[0] * a],
                        [qz[1] * b, qz[1] * (1.0 - b)],
                    ];
                    let ed = q[0][0] * d[0][0]
                        + q[0][1] * d[0][1]
                        + q[1][0] * d[1][0]
                        + q[1][1] * d[1][1];
                    if ed > target + 1e-12 {
                        continue;
                    }
                    let qy = [q[0][0] + q[1][0], q[0][1] + q[1][1]];
                    let mut v = 0.0;
                    for x in 0..2 {
                        for y in 0..2 {
                            if q[x][y] > 0.0 {
                                v += q[x][y] * (q[x][y] / (px[x] * qy[y])).log2();
                            }
                        }
                    }
                    best = best.min(v);
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn spec2(d: [[f64; 2]; 2]) -> DistortionSpec {
    DistortionSpec::new(
        Alphabet::binary(),
        Alphabet::binary(),
        &[d[0].to_vec(), d[1].to_vec()],
    )
    .unwrap()
}

#[test]
fn binary_hamming_matches_closed_form() {
    let d = DistortionSpec::hamming(Alphabet::binary());
    for p in [0.2, 0.3, 0.5] {
        let dist = Distribution::bernoulli(p).unwrap();
        for i in 1..=10 {
            let target = p * i as f64 / 10.0;
            let r = rate_distortion(&dist, &d, target, DEFAULT_TOL).unwrap();
            let expect = if target >= p { 0.0 } else { h2(p) - h2(target) };
            assert!(
                (r.rate_bits - expect).abs() < 1e-3,
                "p={p} D={target}: {} vs {expect}",
                r.rate_bits
            );
        }
    }
}

#[test]
fn both_solvers_agree_with_grid_search() {
    let cases = [
        (0.5, [[0.0, 1.0], [1.0, 0.0]], 0.1, 0.0),
        (0.3, [[0.0, 1.0], [1.0, 0.0]], 0.1, 0.1),
        (0.4, [[0.1, 0.9], [0.6, 0.0]], 0.25, 0.0),
        (0.7, [[0.0, 2.0], [0.5, 0.2]], 0.3, 0.05),
    ];
    for (p0, dm, target, eps) in cases {
        let p = Distribution::new(Alphabet::binary(), vec![p0, 1.0 - p0]).unwrap();
        let d = spec2(dm);
        let r = rate_distortion(&p, &d, target, DEFAULT_TOL).unwrap();
        let g = grid_rate(p0, dm, target, 1e-3);
        assert!(
            (r.rate_bits - g).abs() <= 5e-3,
            "rate {} vs grid {g}",
            r.rate_bits
        );
        let e = sanov_exponent(&p, &Alphabet::binary(), &d, target, eps, DEFAULT_TOL).unwrap();
        let ge = grid_exponent(p0, dm, target, eps, 1e-3);
        assert!(
            (e.exponent_bits - ge).abs() <= 5e-3,
            "exponent {} vs grid {ge}",
            e.exponent_bits
        );
    }
}

fn random_instance(
    rng: &mut SeededRng,
    kx: usize,
    ky: usize,
) -> (Distribution, DistortionSpec, f64) {
    let ax = Alphabet::indexed(kx).unwrap();
    let ay = Alphabet::indexed(ky).unwrap();
    let w: Vec<f64> = (0..kx).map(|_| 0.05 + rng.uniform()).collect();
    let s: f64 = w.iter().sum();
    let p = Distribution::new(ax.clone(), w.iter().map(|v| v / s).collect()).unwrap();
    let rows: Vec<Vec<f64>> = (0..kx)
        .map(|_| {
            (0..ky)
                .map(|_| (rng.uniform() * 4.0).round() / 4.0)
                .collect()
        })
        .collect();
    let d = DistortionSpec::new(ax, ay, &rows).unwrap();
    let range = distortion_range(&p, &d).unwrap();
    let target = range.d_min + (0.1 + 0.8 * rng.uniform()) * (range.d_max - range.d_min);
    (p, d, target)
}

#[test]
fn curve_is_nonincreasing_and_convex() {
    let mut rng = SeededRng::new(11, 0);
    for _ in 0..8 {
        let (p, d, _) = random_instance(&mut rng, 3, 3);
        let range = distortion_range(&p, &d).unwrap();
        if range.d_max - range.d_min < 1e-6 {
            continue;
        }
        let grid: Vec<f64> = (0..=8)
            .map(|i| range.d_min + (range.d_max - range.d_min) * (0.05 + 0.1125 * i as f64))
            .collect();
        let pts = rd_curve(&p, &d, &grid, DEFAULT_TOL).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].rate_bits <= w[0].rate_bits + 2.0 * DEFAULT_TOL);
        }
        for w in pts.windows(3) {
            // Equally spaced grid: midpoint convexity.
            assert!(w[1].rate_bits <= 0.5 * (w[0].rate_bits + w[2].rate_bits) + 2.0 * DEFAULT_TOL);
        }
    }
}

#[test]
fn returned_test_channel_reproduces_rate() {
    let mut rng = SeededRng::new(12, 0);
    for _ in 0..10 {
        let (p, d, target) = random_instance(&mut rng, 3, 2);
        let r = rate_distortion(&p, &d, target, DEFAULT_TOL).unwrap();
        let j = JointDistribution::from_conditional(&p, &r.test_channel).unwrap();
        let mi = distcomm_core::prob::mutual_information(&j);
        assert!(
            (mi - r.rate_bits).abs() <= DEFAULT_TOL,
            "{mi} vs {}",
            r.rate_bits
        );
        assert!(j.expected_distortion(&d).unwrap() <= target + DEFAULT_TOL);
    }
}

#[test]
fn exponent_is_nonincreasing_in_eps() {
    let mut rng = SeededRng::new(13, 0);
    for _ in 0..5 {
        let (p, d, target) = random_instance(&mut rng, 2, 3);
        let ay = d.output().clone();
        let mut last = f64::INFINITY;
        for eps in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let e = sanov_exponent(&p, &ay, &d, target, eps, DEFAULT_TOL)
                .unwrap()
                .exponent_bits;
            assert!(e <= last + 2.0 * DEFAULT_TOL, "eps={eps}: {e} after {last}");
            last = last.min(e);
        }
    }
}

#[test]
fn exponent_equals_rate_at_zero_eps() {
    let mut rng = SeededRng::new(14, 0);
    for i in 0..12 {
        let (kx, ky) = (2 + i % 2, 2 + (i / 2) % 2);
        let (p, d, target) = random_instance(&mut rng, kx, ky);
        let r = rate_distortion(&p, &d, target, DEFAULT_TOL)
            .unwrap()
            .rate_bits;
        let e = sanov_exponent(&p, d.output(), &d, target, 0.0, DEFAULT_TOL)
            .unwrap()
            .exponent_bits;
        assert!(
            (r - e).abs() <= 2e-4 + 2.0 * DEFAULT_TOL,
            "instance {i}: {r} vs {e}"
        );
    }
}
