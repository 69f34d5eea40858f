//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use distcomm_cli::output::ResultRow;
use distcomm_cli::{config, resolve, run};
use distcomm_core::channel_code::{
    e2_exact, sanov_bound_check, ChannelCode, E2Cache, JointTypicality,
};
use distcomm_core::layering::{behavioral_check, ConstantEncoder, DirectSource};
use distcomm_core::prob::{DistortionSpec, Distribution};
use distcomm_core::rd::{distortion_range, rate_distortion, sanov_exponent, DEFAULT_TOL};
use distcomm_core::{Alphabet, SeededRng, Sequence};
use serde_json::{json, Value};

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn bern(p1: f64) -> Value {
    json!({ "alphabet": "bit", "probs": [1.0 - p1, p1] })
}

fn ham() -> Value {
    json!({ "input": "bit", "output": "bit", "matrix": "hamming" })
}

fn config(seed: u64, experiment: Value) -> Value {
    json!({
        "schema_version": 1,
        "seed": seed,
        "alphabets": { "bit": 2 },
        "experiment": experiment,
    })
}

fn execute(cfg: &Value) -> Result<Vec<ResultRow>, String> {
    let cfg = config::parse(&cfg.to_string()).map_err(|e| e.to_string())?;
    let plan = resolve::resolve(&cfg).map_err(|e| e.to_string())?;
    run::execute(&plan, plan.seed).map_err(|e| e.to_string())
}

fn select<'a>(rows: &'a [ResultRow], metric: &str) -> Vec<&'a ResultRow> {
    rows.iter().filter(|r| r.metric == metric).collect()
}

/// Outcome of one criterion: pass flag and a one-line summary.
type Outcome = Result<(bool, String), String>;

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [0.2, 0.3, 0.5] {
        let grid: Vec<f64> = (1..=10).map(|i| p * i as f64 / 10.0).collect();
        let rows = execute(&config(
            0,
            json!({ "kind": "rd", "source": bern(p), "distortion": ham(), "d_grid": grid }),
        ))?;
        for r in select(&rows, "rate_bits") {
            let d = r.param.unwrap();
            let oracle = if d >= p { 0.0 } else { h2(p) - h2(d) };
            worst = worst.max((r.estimate - oracle).abs());
        }
    }
    Ok((
        worst <= 1e-3,
        format!("max |R - (h2(p) - h2(D))| = {worst:.2e} bits"),
    ))
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
                .map(|_| (rng.uniform() * 8.0).floor() / 4.0)
                .collect()
        })
        .collect();
    let d = DistortionSpec::new(ax, ay, &rows).unwrap();
    let range = distortion_range(&p, &d).unwrap();
    let target = range.d_min + (0.1 + 0.8 * rng.uniform()) * (range.d_max - range.d_min);
    (p, d, target)
}

fn criterion_2() -> Outcome {
    let mut rng = SeededRng::new(2024, 2);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (kx, ky) = (2 + i % 2, 2 + (i / 2) % 2);
        let (p, d, target) = random_instance(&mut rng, kx, ky);
        let r = rate_distortion(&p, &d, target, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let e = sanov_exponent(&p, d.output(), &d, target, 0.0, DEFAULT_TOL)
            .map_err(|e| e.to_string())?;
        worst = worst.max((r.rate_bits - e.exponent_bits).abs());
    }
    let bound = 2e-4 + 2.0 * DEFAULT_TOL;
    Ok((
        worst <= bound,
        format!("max |E(0) - R(D)| = {worst:.2e} over 20 instances (bound {bound:.1e})"),
    ))
}

/// Sum of `p^n(z)` over every binary `z` jointly typical with `y`, where `y`
/// has ones in its first `ones` positions.
fn exhaustive_e2(n: usize, ones: usize, p1: f64, eps: f64, target: f64) -> f64 {
    let y: u32 = if ones == 0 { 0 } else { (1u32 << ones) - 1 };
    let weight: Vec<f64> = (0..=n)
        .map(|k| p1.powi(k as i32) * (1.0 - p1).powi((n - k) as i32))
        .collect();
    let mut total = 0.0;
    for z in 0u32..(1u32 << n) {
        let k = z.count_ones() as usize;
        if 2.0 * (k as f64 / n as f64 - p1).abs() > eps + 1e-12 {
            continue;
        }
        if (z ^ y).count_ones() as f64 > n as f64 * target + 1e-9 {
            continue;
        }
        total += weight[k];
    }
    total
}

fn criterion_3() -> Outcome {
    let cases = [
        (20, 10, 0.5, 0.2, 0.1),
        (20, 6, 0.3, 0.1, 0.2),
        (18, 9, 0.5, 0.0, 0.3),
        (18, 4, 0.25, 0.15, 0.15),
        (16, 8, 0.4, 0.3, 0.25),
        (16, 2, 0.1, 0.2, 0.1),
        (20, 15, 0.7, 0.1, 0.2),
        (19, 7, 0.35, 0.05, 0.3),
        (17, 12, 0.6, 0.25, 0.05),
        (20, 0, 0.2, 0.4, 0.2),
        (15, 5, 0.5, 1.0, 0.4),
        (20, 20, 0.9, 0.2, 0.5),
    ];
    let d = DistortionSpec::hamming(Alphabet::binary());
    let mut worst: f64 = 0.0;
    for (n, ones, p1, eps, target) in cases {
        let oracle = exhaustive_e2(n, ones, p1, eps, target);
        let y = Distribution::new(
            Alphabet::binary(),
            vec![1.0 - ones as f64 / n as f64, ones as f64 / n as f64],
        )
        .map_err(|e| e.to_string())?;
        let p = Distribution::bernoulli(p1).map_err(|e| e.to_string())?;
        let got = e2_exact(&y, &p, eps, &d, target, n).map_err(|e| e.to_string())?;
        let rel = if oracle == 0.0 {
            got.abs()
        } else {
            (got - oracle).abs() / oracle
        };
        worst = worst.max(rel);
    }
    Ok((
        worst <= 1e-10,
        format!("max relative error {worst:.2e} over 12 cases, n <= 20"),
    ))
}

fn criterion_4() -> Outcome {
    let sets = [
        (0.5, 0.1, 0.1, 0.3, 0.5),
        (0.5, 0.2, 0.2, 0.2, 0.3),
        (0.3, 0.1, 0.1, 0.4, 0.3),
        (0.4, 0.05, 0.25, 0.1, 0.6),
        (0.7, 0.1, 0.2, 0.2, 0.7),
        (0.2, 0.2, 0.1, 0.3, 0.2),
        (0.5, 0.0, 0.15, 0.5, 0.5),
        (0.6, 0.3, 0.3, 0.1, 0.4),
    ];
    let d = DistortionSpec::hamming(Alphabet::binary());
    let (mut violations, mut checks) = (0, 0);
    let mut min_slack = f64::INFINITY;
    for (p1, eps, target, rate, y1) in sets {
        let p = Distribution::bernoulli(p1).map_err(|e| e.to_string())?;
        let y = Distribution::bernoulli(y1).map_err(|e| e.to_string())?;
        for n in [20, 50, 100, 200] {
            let c =
                sanov_bound_check(&p, eps, &d, target, rate, n, &y).map_err(|e| e.to_string())?;
            checks += 1;
            if !c.holds() {
                violations += 1;
            }
            if c.log2_union.is_finite() {
                min_slack = min_slack.min(c.log2_bound - c.log2_union);
            }
        }
    }
    Ok((
        violations == 0,
        format!("{violations} violations in {checks} checks, min slack {min_slack:.2} bits"),
    ))
}

fn source_code_channel(n_family: &[usize]) -> Value {
    json!({
        "type": "source_code", "source": bern(0.5), "distortion": ham(),
        "target": 0.1, "margin": 0.05, "n_family": n_family, "seed": 11
    })
}

const TREND_N: [usize; 4] = [200, 500, 1000, 2000];

fn criterion_5() -> Outcome {
    let rows = execute(&config(
        5,
        json!({
            "kind": "reliability",
            "input": bern(0.5), "distortion": ham(), "target": 0.1, "eps": 0.1,
            "channels": [source_code_channel(&TREND_N)],
            "rates": [0.4, 0.65], "n_list": TREND_N,
            "messages_sampled": 20, "trials_per_message": 100
        }),
    ))?;
    let series = |rate: f64| -> Vec<f64> {
        select(&rows, "max_message_error")
            .into_iter()
            .filter(|r| r.rate == Some(rate))
            .map(|r| r.estimate)
            .collect()
    };
    let low = series(0.4);
    let high = series(0.65);
    let trend = low.windows(2).all(|w| w[1] <= w[0]);
    let ok = low.len() == 4
        && high.len() == 4
        && trend
        && low[3] <= 0.05
        && high.iter().all(|&e| e >= 0.3);
    Ok((
        ok,
        format!("R=0.4 max-message error {low:?}; R=0.65 {high:?} (2000 trials per n)"),
    ))
}

fn sliding_window() -> Value {
    json!({
        "type": "sliding_window", "window": 3, "driver": bern(0.5),
        "kernels": [{ "type": "bsc", "flip": 0.02 }, { "type": "bsc", "flip": 0.08 }]
    })
}

fn criterion_6() -> Outcome {
    let rows = execute(&config(
        6,
        json!({
            "kind": "reliability",
            "input": bern(0.5), "distortion": ham(), "target": 0.1, "eps": 0.1,
            "channels": [
                { "type": "layered", "base": { "type": "bsc", "flip": 0.02 },
                  "layers": [{ "type": "scrambler", "seed": 3 }] },
                source_code_channel(&[2000]),
                sliding_window()
            ],
            "certify": { "n_list": [2000], "trials": 200, "max_excess": 0.1 },
            "rates": [0.4], "n_list": [2000],
            "messages_sampled": 10, "trials_per_message": 50
        }),
    ))?;
    let certified = select(&rows, "direct_excess").len();
    let per_member: Vec<String> = select(&rows, "max_message_error")
        .iter()
        .map(|r| format!("{}={:.3}", r.member, r.estimate))
        .collect();
    let worst = select(&rows, "max_member_error")
        .first()
        .map(|r| r.estimate)
        .ok_or("no max-member row")?;
    Ok((
        certified == 3 && worst <= 0.1,
        format!(
            "max-member error {worst:.3} at n=2000 [{}]",
            per_member.join(", ")
        ),
    ))
}

fn criterion_7() -> Outcome {
    let p = Distribution::uniform(Alphabet::binary());
    let d = DistortionSpec::hamming(Alphabet::binary());
    let rule = JointTypicality::new(p.clone(), 0.1, d, 0.1).map_err(|e| e.to_string())?;
    let cache = Arc::new(E2Cache::new(rule));
    let rng = SeededRng::new(7, 0);
    let mut worst: f64 = 0.0;
    let mut all = true;
    for rate in [0.4, 0.65] {
        for n in TREND_N {
            let code = ChannelCode::new(rate, n, 13, cache.clone()).map_err(|e| e.to_string())?;
            let trials = 100_000usize.div_ceil(n);
            let r = behavioral_check(&code, &p, trials, 0.02, &rng).map_err(|e| e.to_string())?;
            all &= r.passed;
            worst = worst.max(r.l1_distance);
        }
    }
    let direct = DirectSource {
        p_x: p.clone(),
        n: 1000,
    };
    all &= behavioral_check(&direct, &p, 100, 0.02, &rng)
        .map_err(|e| e.to_string())?
        .passed;
    let word = Sequence::new(Alphabet::binary(), vec![0; 1000]).map_err(|e| e.to_string())?;
    let constant = behavioral_check(&ConstantEncoder { word }, &p, 100, 0.02, &rng)
        .map_err(|e| e.to_string())?;
    Ok((
        all && !constant.passed,
        format!(
            "8 code stacks max L1 {worst:.4} <= 0.02; constant encoder L1 {:.3} rejected",
            constant.l1_distance
        ),
    ))
}

fn criterion_8() -> Outcome {
    // R(D) is just under 0.3, so the source code runs just under 0.4.
    let d = 0.1895;
    let rows = execute(&config(
        8,
        json!({
            "kind": "separation",
            "source": bern(0.5), "distortion": ham(), "target": d,
            "pipe": { "source": bern(0.5), "distortion": ham(), "target": 0.05 },
            "channels": [{ "type": "bsc", "flip": 0.02 }],
            "certify": { "n_list": [2000], "trials": 200, "max_excess": 0.05 },
            "source_margin": 0.1, "channel_rate": 0.4, "eps": 0.1,
            "n_list": [2000], "trials": 200
        }),
    ))?;
    let e = select(&rows, "excess_distortion")
        .first()
        .map(|r| r.estimate)
        .ok_or("no excess row")?;
    let sr = select(&rows, "source_rate")[0].estimate;
    Ok((
        e <= 0.1,
        format!("excess {e:.3} at n=2000 (source rate {sr:.4}, channel rate 0.4)"),
    ))
}

fn multiuser_config(shared_tag: bool) -> Value {
    let pairs: Vec<Value> = (0..3)
        .map(|k| {
            let tag = if shared_tag && k == 1 { 0 } else { k };
            json!({ "source": bern(0.5), "distortion": ham(), "target": 0.1,
                    "rate_fraction": 0.75, "seed_tag": tag })
        })
        .collect();
    let modes = if shared_tag {
        json!(["induction"])
    } else {
        json!(["reliable", "induction"])
    };
    config(
        9,
        json!({
            "kind": "multiuser",
            "medium": { "type": "shared_noise", "users": 3, "pairs": [[0, 1], [1, 2], [2, 0]],
                        "alphabet": "bit", "common": 0.03, "private": 0.02 },
            "pairs": pairs, "modes": modes, "eps": 0.1, "n_list": [200, 500, 1000],
            "messages_sampled": 10, "trials_per_message": 50,
            "induction": { "n": 500, "trials": 100, "threshold": 0.03 }
        }),
    )
}

fn criterion_9() -> Outcome {
    let rows = execute(&multiuser_config(false))?;
    let mut ok = true;
    let mut finals = Vec::new();
    for k in ["pair 0->1", "pair 1->2", "pair 2->0"] {
        let errs: Vec<f64> = select(&rows, "max_message_error")
            .iter()
            .filter(|r| r.member == k)
            .map(|r| r.estimate)
            .collect();
        ok &= errs.len() == 3 && errs.windows(2).all(|w| w[1] <= w[0]) && errs[2] <= 0.1;
        finals.push(format!("{k}: {errs:?}"));
    }
    let induction = select(&rows, "induction_passed")[0].estimate == 1.0;
    let control = execute(&multiuser_config(true))?;
    let indep_max = select(&control, "independence_l1")
        .iter()
        .map(|r| r.estimate)
        .fold(0.0, f64::max);
    let control_fails = indep_max > 0.03;
    Ok((
        ok && induction && control_fails,
        format!(
            "{}; induction check {}; shared-seed control independence L1 {indep_max:.3}",
            finals.join("; "),
            if induction { "passed" } else { "failed" }
        ),
    ))
}

fn criterion_10() -> Outcome {
    let rows = execute(&config(
        10,
        json!({
            "kind": "equivalence",
            "pipe": { "source": bern(0.5), "distortion": ham(), "target": 0.1,
                      "channel": source_code_channel(&TREND_N) },
            "payload": { "source": bern(0.2), "distortion": ham(), "target": 0.05 },
            "certify": { "n_list": [2000], "trials": 200, "max_excess": 0.05 }
        }),
    ))?;
    let cells = select(&rows, "excess_distortion");
    let last = cells.iter().max_by_key(|r| r.n).ok_or("no excess rows")?;
    let trend: Vec<String> = cells
        .iter()
        .map(|r| format!("{}:{:.3}", r.n.unwrap(), r.estimate))
        .collect();
    Ok((
        last.estimate <= 0.15,
        format!("excess by n [{}]", trend.join(", ")),
    ))
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = config(
        11,
        json!({
            "kind": "reliability",
            "input": bern(0.5), "distortion": ham(), "target": 0.1, "eps": 0.1,
            "channels": [{ "type": "bsc", "flip": 0.03 }, sliding_window()],
            "rates": [0.3], "n_list": [100, 400],
            "messages_sampled": 8, "trials_per_message": 25
        }),
    );
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, cfg.to_string()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_distcomm"))
            .args([
                "run",
                path.to_str().unwrap(),
                "--quiet",
                "--plot-format",
                "none",
                "--workers",
                workers,
            ])
            .arg("--out-dir")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run {i} exited with {status}"));
        }
        outputs.push(std::fs::read(out.join("reliability.csv")).map_err(|e| e.to_string())?);
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    Ok((
        same,
        format!(
            "{} byte CSV identical across --workers 1, 4, 4",
            outputs[0].len()
        ),
    ))
}

type Criterion = (u32, &'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "RD oracle", criterion_1, Duration::from_secs(5)),
        (
            2,
            "solver cross-check",
            criterion_2,
            Duration::from_secs(60),
        ),
        (3, "exact E2 oracle", criterion_3, Duration::from_secs(120)),
        (
            4,
            "Sanov bound domination",
            criterion_4,
            Duration::from_secs(300),
        ),
        (
            5,
            "achievability trend",
            criterion_5,
            Duration::from_secs(1800),
        ),
        (
            6,
            "compound universality",
            criterion_6,
            Duration::from_secs(1800),
        ),
        (7, "behavioral check", criterion_7, Duration::from_secs(120)),
        (8, "separation", criterion_8, Duration::from_secs(900)),
        (9, "multi-user", criterion_9, Duration::from_secs(2700)),
        (
            10,
            "equivalence demo",
            criterion_10,
            Duration::from_secs(1200),
        ),
        (11, "determinism", criterion_11, Duration::from_secs(60)),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, f, budget) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && took <= budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {id} ({name}): {detail} [{:.1}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
