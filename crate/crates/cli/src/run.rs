//! Executes a resolved plan and flattens the results into CSV rows.

use std::sync::Arc;

use distcomm_core::channel_code::{run_reliability, sanov_bound_check, ReliabilityParams};
use distcomm_core::channels::{verify_direct_communication, CompoundSet, DirectCommEvidence};
use distcomm_core::layering::{
    equivalence_demo, separation_architecture, Certificate, EquivalenceParams, ExcessCell,
    SeparationParams,
};
use distcomm_core::multiuser::{
    behavioral_induction_check, direct_evidence, run_direct_multiuser, run_reliable_multiuser,
    separation_multiuser, MultiSeparationParams, PairMetric, PairReport, ReliableParams,
    UnicastSession,
};
use distcomm_core::prob::stream_key;
use distcomm_core::rd::{rate_distortion, sanov_exponent};
use distcomm_core::source_code::{measure_distortion, rd_output_marginal, SourceCode};
use distcomm_core::SeededRng;

use crate::config::Mode;
use crate::error::CliError;
use crate::output::ResultRow;
use crate::resolve::{Body, Certify, Fidelity, Plan};

const CERTIFY_STREAM: u64 = 1;
const MAIN_STREAM: u64 = 2;

fn certify(
    kind: &str,
    set: &CompoundSet,
    pipe: &Fidelity,
    c: &Certify,
    seed: u64,
    rows: &mut Vec<ResultRow>,
) -> Result<Vec<Certificate>, CliError> {
    let evidence = verify_direct_communication(
        set,
        &pipe.p,
        &pipe.d,
        pipe.target,
        &c.n_list,
        c.trials,
        &SeededRng::new(seed, CERTIFY_STREAM),
    )?;
    certificates(kind, &evidence, c.max_excess, rows)
}

fn certificates(
    kind: &str,
    evidence: &[DirectCommEvidence],
    max_excess: f64,
    rows: &mut Vec<ResultRow>,
) -> Result<Vec<Certificate>, CliError> {
    for ev in evidence {
        for (n, p) in &ev.per_n {
            rows.push(
                ResultRow::proportion(kind, "direct_excess", p)
                    .member(&ev.channel_id)
                    .n(*n)
                    .param(ev.target),
            );
        }
    }
    evidence
        .iter()
        .map(|ev| Certificate::from_evidence(ev, max_excess).map_err(Into::into))
        .collect()
}

fn excess_rows(kind: &str, cells: &[ExcessCell], rate: f64, rows: &mut Vec<ResultRow>) {
    for c in cells {
        rows.push(
            ResultRow::proportion(kind, "excess_distortion", &c.excess)
                .member(&c.member_label)
                .n(c.n)
                .rate(rate),
        );
        rows.push(
            ResultRow::mean(kind, "mean_distortion", &c.mean_distortion)
                .member(&c.member_label)
                .n(c.n)
                .rate(rate),
        );
    }
}

fn pair_rows(
    kind: &str,
    session: &UnicastSession,
    reports: &[PairReport],
    rows: &mut Vec<ResultRow>,
) {
    for r in reports {
        let metric = match r.metric {
            PairMetric::ExcessDistortion => "excess_distortion",
            PairMetric::MaxMessageError => "max_message_error",
        };
        let label = session.pair_label(r.pair);
        let rate = session.pairs()[r.pair].rate;
        rows.push(
            ResultRow::proportion(kind, metric, &r.estimate)
                .member(&label)
                .n(r.n)
                .rate(rate),
        );
        if let Some(p) = &r.pooled {
            rows.push(
                ResultRow::proportion(kind, "pooled_error", p)
                    .member(&label)
                    .n(r.n)
                    .rate(rate),
            );
        }
    }
}

/// Runs `plan` with master seed `seed`. Parallelism comes from the ambient
/// rayon pool; the rows do not depend on its size.
pub fn execute(plan: &Plan, seed: u64) -> Result<Vec<ResultRow>, CliError> {
    let kind = plan.kind;
    let main = SeededRng::new(seed, MAIN_STREAM);
    let mut rows = Vec::new();
    match &plan.body {
        Body::Rd { src, grid, tol } => {
            for &d in grid {
                let r = rate_distortion(&src.p, &src.d, d, *tol)?;
                rows.push(ResultRow::exact(kind, "rate_bits", r.rate_bits).param(d));
                rows.push(
                    ResultRow::exact(kind, "achieved_distortion", r.achieved_distortion).param(d),
                );
            }
        }
        Body::Exponent { src, eps_grid, tol } => {
            for &eps in eps_grid {
                let e = sanov_exponent(&src.p, src.d.output(), &src.d, src.target, eps, *tol)?;
                rows.push(ResultRow::exact(kind, "exponent_bits", e.exponent_bits).param(eps));
            }
        }
        Body::Source {
            src,
            codeword_law,
            rates,
            n_list,
            trials,
        } => {
            let rd = rate_distortion(&src.p, &src.d, src.target, distcomm_core::rd::DEFAULT_TOL)?;
            rows.push(ResultRow::exact(kind, "rd_rate", rd.rate_bits).param(src.target));
            let q = match codeword_law {
                Some(q) => q.clone(),
                None => rd_output_marginal(&src.p, &src.d, src.target)?,
            };
            for (ri, &rate) in rates.iter().enumerate() {
                for &n in n_list {
                    let code_seed = stream_key(&[seed, ri as u64, n as u64]);
                    let code = SourceCode::new(&q, &src.d, rate, n, code_seed)?;
                    let rep = measure_distortion(
                        &src.p,
                        &code,
                        &src.d,
                        src.target,
                        *trials,
                        &main.derive(&[ri as u64, n as u64]),
                    )?;
                    rows.push(
                        ResultRow::proportion(kind, "excess_distortion", &rep.excess)
                            .n(n)
                            .rate(rate)
                            .param(src.target),
                    );
                    rows.push(
                        ResultRow::mean(kind, "mean_distortion", &rep.mean_distortion)
                            .n(n)
                            .rate(rate)
                            .param(src.target),
                    );
                }
            }
        }
        Body::Reliability {
            rule,
            set,
            rates,
            n_list,
            messages_sampled,
            trials_per_message,
            certify: cert,
        } => {
            if let Some(c) = cert {
                let pipe = Fidelity {
                    p: rule.p_x.clone(),
                    d: rule.d.clone(),
                    target: rule.target,
                };
                certify(kind, set, &pipe, c, seed, &mut rows)?;
            }
            for (ri, &rate) in rates.iter().enumerate() {
                let params = ReliabilityParams {
                    rule: rule.clone(),
                    rate,
                    n_list: n_list.clone(),
                    messages_sampled: *messages_sampled,
                    trials_per_message: *trials_per_message,
                };
                let rep = run_reliability(set, &params, &main.derive(&[ri as u64]))?;
                for c in &rep.cells {
                    for (metric, p) in [
                        ("max_message_error", &c.max_message_error),
                        ("pooled_error", &c.pooled_error),
                    ] {
                        rows.push(
                            ResultRow::proportion(kind, metric, p)
                                .member(&c.member_label)
                                .n(c.n)
                                .rate(rate),
                        );
                    }
                }
                for &n in n_list {
                    let worst = rep.cells.iter().filter(|c| c.n == n).max_by(|a, b| {
                        a.max_message_error
                            .estimate
                            .total_cmp(&b.max_message_error.estimate)
                    });
                    if let Some(w) = worst {
                        rows.push(
                            ResultRow::proportion(kind, "max_member_error", &w.max_message_error)
                                .member("max")
                                .n(n)
                                .rate(rate),
                        );
                    }
                }
            }
        }
        Body::Separation {
            src,
            pipe,
            set,
            certify: c,
            source_margin,
            channel_rate,
            eps,
            n_list,
            trials,
        } => {
            let certs = certify(kind, set, pipe, c, seed, &mut rows)?;
            let params = SeparationParams {
                source_margin: *source_margin,
                channel_rate: *channel_rate,
                eps: *eps,
                n_list: n_list.clone(),
                seed: stream_key(&[seed, MAIN_STREAM]),
            };
            let sys =
                separation_architecture(&src.p, &src.d, src.target, set.clone(), &certs, &params)?;
            let rep = sys.run(*trials, &main)?;
            rows.push(ResultRow::exact(kind, "source_rate", rep.source_rate));
            rows.push(ResultRow::exact(kind, "channel_rate", rep.channel_rate));
            excess_rows(kind, &rep.cells, rep.channel_rate, &mut rows);
        }
        Body::Multiuser {
            medium,
            pairs,
            modes,
            eps,
            n_list,
            trials,
            messages_sampled,
            trials_per_message,
            induction,
            separation,
        } => {
            let session = UnicastSession::new(Arc::clone(medium), pairs.clone(), seed)?;
            for (mi, mode) in modes.iter().enumerate() {
                let rng = main.derive(&[mi as u64]);
                match mode {
                    Mode::Direct => {
                        let reps = run_direct_multiuser(&session, n_list, *trials, &rng)?;
                        pair_rows(kind, &session, &reps, &mut rows);
                    }
                    Mode::Reliable => {
                        let params = ReliableParams {
                            eps: *eps,
                            n_list: n_list.clone(),
                            messages_sampled: *messages_sampled,
                            trials_per_message: *trials_per_message,
                        };
                        let reps = run_reliable_multiuser(&session, &params, &rng)?;
                        pair_rows(kind, &session, &reps, &mut rows);
                    }
                    Mode::Induction => {
                        let i = induction.as_ref().expect("resolver checks induction");
                        let rep = behavioral_induction_check(
                            &session,
                            *eps,
                            i.n,
                            i.trials,
                            i.threshold,
                            &rng,
                        )?;
                        for (k, m) in rep.marginals.iter().enumerate() {
                            rows.push(
                                ResultRow::exact(kind, "marginal_l1", m.l1_distance)
                                    .member(session.pair_label(k))
                                    .n(i.n)
                                    .param(m.threshold),
                            );
                        }
                        for (metric, checks) in [
                            ("independence_l1", &rep.independence),
                            ("joint_match_l1", &rep.joint_match),
                        ] {
                            for c in checks {
                                let member = format!(
                                    "{} & {}",
                                    session.pair_label(c.pairs.0),
                                    session.pair_label(c.pairs.1)
                                );
                                rows.push(
                                    ResultRow::exact(kind, metric, c.l1_distance)
                                        .member(member)
                                        .n(i.n)
                                        .param(rep.threshold),
                                );
                            }
                        }
                        for c in &rep.terminal_match {
                            rows.push(
                                ResultRow::exact(kind, "terminal_match_l1", c.l1_distance)
                                    .member(session.pair_label(c.pairs.0))
                                    .n(i.n)
                                    .param(rep.threshold),
                            );
                        }
                        let passed = if rep.passed() { 1.0 } else { 0.0 };
                        rows.push(
                            ResultRow::exact(kind, "induction_passed", passed)
                                .n(i.n)
                                .param(rep.threshold),
                        );
                    }
                    Mode::Separation => {
                        let s = separation.as_ref().expect("resolver checks separation");
                        let reps = run_direct_multiuser(
                            &session,
                            &s.certify.n_list,
                            s.certify.trials,
                            &rng.derive(&[CERTIFY_STREAM]),
                        )?;
                        let evidence = direct_evidence(&session, &reps);
                        let certs = certificates(kind, &evidence, s.certify.max_excess, &mut rows)?;
                        let payloads: Vec<_> = s
                            .payloads
                            .iter()
                            .map(|f| distcomm_core::multiuser::Payload {
                                p_x: f.p.clone(),
                                d: f.d.clone(),
                                target: f.target,
                            })
                            .collect();
                        let params = MultiSeparationParams {
                            source_margin: s.source_margin,
                            channel_margin: s.channel_margin,
                            eps: *eps,
                            n_list: s.n_list.clone(),
                            trials: s.trials,
                        };
                        let cells =
                            separation_multiuser(&session, &payloads, &certs, &params, &rng)?;
                        for c in &cells {
                            rows.push(
                                ResultRow::proportion(kind, "separation_excess", &c.excess)
                                    .member(&c.member_label)
                                    .n(c.n),
                            );
                        }
                    }
                }
            }
        }
        Body::Equivalence {
            pipe,
            channel,
            payload,
            certify: c,
            params,
        } => {
            let set = CompoundSet::single(Arc::clone(channel));
            let certs = certify(kind, &set, pipe, c, seed, &mut rows)?;
            let params = EquivalenceParams {
                seed: stream_key(&[seed, MAIN_STREAM]),
                ..params.clone()
            };
            let rep = equivalence_demo(
                &pipe.p,
                &pipe.d,
                pipe.target,
                &payload.p,
                &payload.d,
                payload.target,
                Arc::clone(channel),
                &certs[0],
                &params,
                &main,
            )?;
            rows.push(ResultRow::exact(kind, "pipe_rate", rep.pipe_rate));
            rows.push(ResultRow::exact(kind, "payload_rate", rep.payload_rate));
            let sep = &rep.separation;
            rows.push(ResultRow::exact(kind, "source_rate", sep.source_rate));
            rows.push(ResultRow::exact(kind, "channel_rate", sep.channel_rate));
            excess_rows(kind, &sep.cells, sep.channel_rate, &mut rows);
        }
        Body::SanovCheck {
            src,
            eps,
            rate,
            n_list,
            y_types,
        } => {
            let mut violations = 0u32;
            for (i, y) in y_types.iter().enumerate() {
                for &n in n_list {
                    let c = sanov_bound_check(&src.p, *eps, &src.d, src.target, *rate, n, y)?;
                    if !c.holds() {
                        violations += 1;
                    }
                    let member = format!("y{i}");
                    rows.push(
                        ResultRow::exact(kind, "log2_union", c.log2_union)
                            .member(&member)
                            .n(n)
                            .rate(*rate)
                            .param(*eps),
                    );
                    rows.push(
                        ResultRow::exact(kind, "log2_bound", c.log2_bound)
                            .member(&member)
                            .n(n)
                            .rate(*rate)
                            .param(*eps),
                    );
                }
            }
            rows.push(ResultRow::exact(kind, "violations", violations as f64));
        }
    }
    Ok(rows)
}
