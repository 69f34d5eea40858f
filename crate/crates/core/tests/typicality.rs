use distcomm_core::channel_code::{
    build_channel_codebook, e2_exact, is_jointly_typical, jt_decode, sanov_bound_check,
    DecodeOutcome, JointTypicality,
};
use distcomm_core::prob::{sample_iid, DistortionSpec, Distribution};
use distcomm_core::{Alphabet, SeededRng, Sequence};

/// Sum of `p^n(z)` over all binary `z` jointly typical with `y`.
fn exhaustive_e2(y: &[u8], p1: f64, eps: f64, d: [[f64; 2]; 2], target: f64) -> f64 {
    let n = y.len();
    let mut total = 0.0;
    for z in 0u32..(1 << n) {
        let ones = z.count_ones() as usize;
        let l1 = (ones as f64 / n as f64 - p1).abs() * 2.0;
        if l1 > eps + 1e-12 {
            continue;
        }
        let dist: f64 = (0..n)
            .map(|t| d[((z >> t) & 1) as usize][y[t] as usize])
            .sum();
        if dist > n as f64 * target + 1e-9 {
            continue;
        }
        total += p1.powi(ones as i32) * (1.0 - p1).powi((n - ones) as i32);
    }
    total
}

fn spec2(d: [[f64; 2]; 2]) -> DistortionSpec {
    DistortionSpec::new(
        Alphabet::binary(),
        Alphabet::binary(),
        &[d[0].to_vec(), d[1].to_vec()],
    )
    .unwrap()
}

const HAMMING: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 0.0]];

#[test]
fn e2_matches_enumeration() {
    let cases = [
        (12, 6, 0.5, 0.2, HAMMING, 0.1),
        (12, 3, 0.3, 0.1, HAMMING, 0.25),
        (14, 7, 0.4, 0.0, HAMMING, 0.3),
        (16, 4, 0.5, 0.5, HAMMING, 0.2),
        (16, 10, 0.2, 0.3, [[0.0, 1.0], [0.5, 0.0]], 0.15),
        (15, 5, 0.6, 0.2, [[0.25, 1.0], [0.75, 0.0]], 0.4),
    ];
    for (n, ones, p1, eps, dm, target) in cases {
        let y: Vec<u8> = (0..n).map(|t| u8::from(t < ones)).collect();
        let oracle = exhaustive_e2(&y, p1, eps, dm, target);
        let y_type = Distribution::new(
            Alphabet::binary(),
            vec![1.0 - ones as f64 / n as f64, ones as f64 / n as f64],
        )
        .unwrap();
        let p = Distribution::bernoulli(p1).unwrap();
        let got = e2_exact(&y_type, &p, eps, &spec2(dm), target, n).unwrap();
        let rel = if oracle == 0.0 {
            got
        } else {
            (got - oracle).abs() / oracle
        };
        assert!(rel <= 1e-10, "n={n} ones={ones}: {got} vs {oracle}");
    }
}

#[test]
fn e2_grows_with_eps_and_distortion() {
    let p = Distribution::bernoulli(0.4).unwrap();
    let y_type = Distribution::bernoulli(0.3).unwrap();
    let d = spec2(HAMMING);
    let mut last = 0.0;
    for eps in [0.0, 0.05, 0.1, 0.2, 0.4, 1.0] {
        let v = e2_exact(&y_type, &p, eps, &d, 0.2, 50).unwrap();
        assert!(v >= last);
        last = v;
    }
    let mut last = 0.0;
    for target in [0.0, 0.1, 0.2, 0.3, 0.5, 1.0] {
        let v = e2_exact(&y_type, &p, 0.1, &d, target, 50).unwrap();
        assert!(v >= last);
        last = v;
    }
}

#[test]
fn sanov_bound_examples() {
    let p = Distribution::uniform(Alphabet::binary());
    let d = spec2(HAMMING);
    let c = sanov_bound_check(&p, 0.2, &d, 0.1, 0.3, 20, &p).unwrap();
    assert!(c.log2_union <= c.log2_bound);
    let huge = sanov_bound_check(&p, 2.0, &d, 1.0, 0.3, 20, &p).unwrap();
    assert!((huge.log2_union - 6.0).abs() < 1e-9);
    assert!(huge.log2_bound >= 6.0);
    for n in [20, 50, 100] {
        let y = Distribution::bernoulli(0.3).unwrap();
        let p7 = Distribution::bernoulli(0.7).unwrap();
        assert!(sanov_bound_check(&p7, 0.1, &d, 0.2, 0.2, n, &y)
            .unwrap()
            .holds());
    }
}

#[test]
fn boundary_pair_is_typical() {
    let p = Distribution::uniform(Alphabet::binary());
    let d = spec2(HAMMING);
    let x = Sequence::from_indices(Alphabet::binary(), &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
    let y = Sequence::from_indices(Alphabet::binary(), &[1, 1, 0, 1, 0, 1, 0, 1, 1, 1]).unwrap();
    assert!(is_jointly_typical(&x, &y, &p, 0.0, &d, 0.2).unwrap());
    assert!(!is_jointly_typical(&x, &y, &p, 0.0, &d, 0.19).unwrap());
}

#[test]
fn decoder_is_sound() {
    let p = Distribution::uniform(Alphabet::binary());
    let d = spec2(HAMMING);
    let rule = JointTypicality::new(p.clone(), 0.2, d.clone(), 0.25).unwrap();
    let cb = build_channel_codebook(&p, 0.4, 16, 3).unwrap();
    let mut rng = SeededRng::new(4, 0);
    let mut decoded = 0;
    for _ in 0..200 {
        let y = sample_iid(&p, 16, &mut rng).unwrap();
        let got = jt_decode(&y, &cb, &rule).unwrap();
        let passing: Vec<usize> = (0..cb.codewords().len())
            .filter(|&i| rule.check(&cb.codewords()[i], &y).unwrap())
            .collect();
        assert_eq!(got.candidates, passing.len());
        if let DecodeOutcome::Message(m) = got.outcome {
            assert_eq!(passing, vec![m as usize]);
            decoded += 1;
        }
    }
    assert!(decoded > 0);
}

#[test]
fn codebook_edge_cases() {
    let point = Distribution::point_mass(Alphabet::binary(), 0).unwrap();
    let cb = build_channel_codebook(&point, 0.5, 6, 1).unwrap();
    assert_eq!(cb.codewords().len(), 8);
    assert!(cb
        .codewords()
        .iter()
        .all(|c| c.values().iter().all(|&v| v == 0)));
    let one =
        build_channel_codebook(&Distribution::uniform(Alphabet::binary()), 0.1, 5, 1).unwrap();
    assert_eq!(one.codewords().len(), 1);
    let again =
        build_channel_codebook(&Distribution::uniform(Alphabet::binary()), 0.5, 10, 9).unwrap();
    let twice =
        build_channel_codebook(&Distribution::uniform(Alphabet::binary()), 0.5, 10, 9).unwrap();
    assert_eq!(again.codewords(), twice.codewords());
}
