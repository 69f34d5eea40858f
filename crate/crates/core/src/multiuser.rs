//! Unicast sessions over a joint medium: direct, reliable and separated
//! modes, plus the medium-terminal distribution checks.
//!
//! Every pair draws its source, messages and codebooks from streams keyed by
//! its `seed_tag`, so distinct tags give independent pairs.

use std::sync::Arc;

use rayon::prelude::*;

use crate::channel_code::{ChannelCode, E2Cache, JointTypicality, Sent};
use crate::channels::{DirectCommEvidence, Medium};
use crate::error::{invalid, Error, Result};
use crate::layering::{
    behavioral_check_counts, BehavioralCheckResult, Certificate, ExcessCell, SeparationCodec,
    SeparationParams,
};
use crate::prob::{
    ensure_same, n_letter_distortion, sample_iid, stream_key, within_distortion, DistortionSpec,
    Distribution, SeededRng, Sequence,
};
use crate::rd::{rate_distortion, DEFAULT_TOL};
use crate::stats::Proportion;

const SOURCE_TAG: u64 = 0x5005_0001;
const MEDIUM_TAG: u64 = 0x3ED1_0001;
const ENCODER_TAG: u64 = 0xE5C0_0001;
const DECODER_TAG: u64 = 0xDEC0_0001;
const CODE_TAG: u64 = 0xC0DE_0001;

#[derive(Clone, Debug, PartialEq)]
pub enum PairEncoder {
    RandomCode,
    /// Sends the all-`symbol` word whatever the message.
    Constant(u8),
}

#[derive(Clone, Debug)]
pub struct PairSpec {
    pub p_x: Distribution,
    pub d: DistortionSpec,
    pub target: f64,
    pub rate: f64,
    pub seed_tag: u64,
    pub encoder: PairEncoder,
}

impl PairSpec {
    pub fn new(
        p_x: Distribution,
        d: DistortionSpec,
        target: f64,
        rate: f64,
        seed_tag: u64,
    ) -> Self {
        Self {
            p_x,
            d,
            target,
            rate,
            seed_tag,
            encoder: PairEncoder::RandomCode,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UnicastSession {
    medium: Arc<dyn Medium>,
    pairs: Vec<PairSpec>,
    seed: u64,
}

impl UnicastSession {
    /// One spec per medium pair, in the medium's pair order.
    pub fn new(medium: Arc<dyn Medium>, pairs: Vec<PairSpec>, seed: u64) -> Result<Self> {
        if pairs.len() != medium.pairs().len() {
            return invalid(format!(
                "medium has {} pairs, got {} specs",
                medium.pairs().len(),
                pairs.len()
            ));
        }
        for (k, p) in pairs.iter().enumerate() {
            ensure_same(
                p.p_x.alphabet(),
                medium.input_alphabet(k),
                "pair source vs medium input",
            )?;
            ensure_same(
                p.d.input(),
                medium.input_alphabet(k),
                "pair distortion input",
            )?;
            ensure_same(
                p.d.output(),
                medium.output_alphabet(k),
                "pair distortion output",
            )?;
            if let PairEncoder::Constant(s) = p.encoder {
                if s as usize >= p.p_x.alphabet().size() {
                    return invalid(format!("pair {k}: constant symbol outside the alphabet"));
                }
            }
        }
        Ok(Self {
            medium,
            pairs,
            seed,
        })
    }

    pub fn medium(&self) -> &Arc<dyn Medium> {
        &self.medium
    }

    pub fn pairs(&self) -> &[PairSpec] {
        &self.pairs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pair_label(&self, k: usize) -> String {
        let (i, j) = self.medium.pairs()[k];
        format!("pair {i}->{j}")
    }

    fn sources(&self, n: usize, r: &SeededRng) -> Result<Vec<Sequence>> {
        self.pairs
            .iter()
            .map(|p| sample_iid(&p.p_x, n, &mut r.derive(&[SOURCE_TAG, p.seed_tag])))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMetric {
    ExcessDistortion,
    /// Worst sampled message's decoding error.
    MaxMessageError,
}

#[derive(Clone, Debug)]
pub struct PairReport {
    pub pair: usize,
    pub users: (usize, usize),
    pub n: usize,
    pub metric: PairMetric,
    pub estimate: Proportion,
    /// Errors pooled over every sampled message (reliable mode).
    pub pooled: Option<Proportion>,
}

/// Feeds i.i.d. sources into every pair at once and measures per-pair
/// excess distortion.
pub fn run_direct_multiuser(
    session: &UnicastSession,
    n_list: &[usize],
    trials: usize,
    rng: &SeededRng,
) -> Result<Vec<PairReport>> {
    if trials == 0 {
        return invalid("trials must be >= 1");
    }
    let np = session.pairs.len();
    let mut out = Vec::new();
    for &n in n_list {
        let excess = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<bool>> {
                let r = rng.derive(&[n as u64, t as u64]);
                let x = session.sources(n, &r)?;
                let y = session.medium.transmit(&x, &mut r.derive(&[MEDIUM_TAG]))?;
                session
                    .pairs
                    .iter()
                    .zip(x.iter().zip(&y))
                    .map(|(p, (x, y))| {
                        Ok(!within_distortion(
                            n_letter_distortion(x, y, &p.d)?,
                            n,
                            p.target,
                        ))
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        for k in 0..np {
            let count = excess.iter().filter(|e| e[k]).count() as u64;
            out.push(PairReport {
                pair: k,
                users: session.medium.pairs()[k],
                n,
                metric: PairMetric::ExcessDistortion,
                estimate: Proportion::new(count, trials as u64)?,
                pooled: None,
            });
        }
    }
    Ok(out)
}

/// Direct-mode reports as per-pair certification evidence, labeled by
/// [`UnicastSession::pair_label`].
pub fn direct_evidence(
    session: &UnicastSession,
    reports: &[PairReport],
) -> Vec<DirectCommEvidence> {
    (0..session.pairs.len())
        .map(|k| {
            let p = &session.pairs[k];
            DirectCommEvidence {
                channel_id: session.pair_label(k),
                p_x: p.p_x.clone(),
                d: p.d.clone(),
                target: p.target,
                per_n: reports
                    .iter()
                    .filter(|r| r.pair == k && r.metric == PairMetric::ExcessDistortion)
                    .map(|r| (r.n, r.estimate))
                    .collect(),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ReliableParams {
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub messages_sampled: usize,
    pub trials_per_message: usize,
}

struct PairCodes {
    rules: Vec<Arc<E2Cache>>,
}

impl PairCodes {
    fn new(session: &UnicastSession, eps: f64) -> Result<Self> {
        let rules = session
            .pairs
            .iter()
            .map(|p| {
                Ok(Arc::new(E2Cache::new(JointTypicality::new(
                    p.p_x.clone(),
                    eps,
                    p.d.clone(),
                    p.target,
                )?)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { rules })
    }

    /// Code and message of pair `k` in batch `b`.
    fn code(
        &self,
        session: &UnicastSession,
        k: usize,
        n: usize,
        b: usize,
    ) -> Result<(ChannelCode, u64)> {
        let p = &session.pairs[k];
        let seed = stream_key(&[session.seed, CODE_TAG, p.seed_tag, n as u64, b as u64]);
        let code = ChannelCode::new(p.rate, n, seed, self.rules[k].clone())?;
        let message = code.sample_message(&mut SeededRng::new(seed, stream_key(&[ENCODER_TAG])));
        Ok((code, message))
    }

    fn encode(
        session: &UnicastSession,
        k: usize,
        code: &ChannelCode,
        message: u64,
        r: &SeededRng,
    ) -> Result<Sent> {
        let p = &session.pairs[k];
        let mut enc_rng = r.derive(&[ENCODER_TAG, p.seed_tag]);
        match p.encoder {
            PairEncoder::RandomCode => code.encode(message, &mut enc_rng),
            PairEncoder::Constant(s) => Ok(Sent {
                message,
                codeword: Sequence::new(p.p_x.alphabet().clone(), vec![s; code.n()])?,
            }),
        }
    }
}

fn check_rates(session: &UnicastSession) -> Result<()> {
    for (k, p) in session.pairs.iter().enumerate() {
        if p.rate <= 0.0 {
            return invalid(format!("pair {k}: rate must be > 0"));
        }
        let r = rate_distortion(&p.p_x, &p.d, p.target, DEFAULT_TOL)?.rate_bits;
        if p.rate >= r {
            return Err(Error::Precondition(format!(
                "pair {k}: rate {} is not below R(D) = {r:.4}",
                p.rate
            )));
        }
    }
    Ok(())
}

/// Every pair runs its own random code; all pairs share the medium.
pub fn run_reliable_multiuser(
    session: &UnicastSession,
    params: &ReliableParams,
    rng: &SeededRng,
) -> Result<Vec<PairReport>> {
    if params.messages_sampled == 0 || params.trials_per_message == 0 {
        return invalid("messages_sampled and trials_per_message must be >= 1");
    }
    check_rates(session)?;
    let codes = PairCodes::new(session, params.eps)?;
    let np = session.pairs.len();
    let mut out = Vec::new();
    for &n in &params.n_list {
        let batches = (0..params.messages_sampled)
            .into_par_iter()
            .map(|b| {
                (0..np)
                    .map(|k| codes.code(session, k, n, b))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, usize)> = (0..params.messages_sampled)
            .flat_map(|b| (0..params.trials_per_message).map(move |t| (b, t)))
            .collect();
        let errors = jobs
            .par_iter()
            .map(|&(b, t)| -> Result<Vec<bool>> {
                let r = rng.derive(&[n as u64, b as u64, t as u64]);
                let sent = (0..np)
                    .map(|k| PairCodes::encode(session, k, &batches[b][k].0, batches[b][k].1, &r))
                    .collect::<Result<Vec<_>>>()?;
                let inputs: Vec<Sequence> = sent.iter().map(|s| s.codeword.clone()).collect();
                let y = session
                    .medium
                    .transmit(&inputs, &mut r.derive(&[MEDIUM_TAG]))?;
                (0..np)
                    .map(|k| {
                        let rec = batches[b][k].0.decode(
                            &y[k],
                            &sent[k],
                            &mut r.derive(&[DECODER_TAG, k as u64]),
                        )?;
                        Ok(rec.is_error(sent[k].message))
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let tpm = params.trials_per_message as u64;
        for k in 0..np {
            let mut per_message = vec![0u64; params.messages_sampled];
            for (&(b, _), e) in jobs.iter().zip(&errors) {
                per_message[b] += u64::from(e[k]);
            }
            let worst = *per_message.iter().max().expect("at least one message");
            out.push(PairReport {
                pair: k,
                users: session.medium.pairs()[k],
                n,
                metric: PairMetric::MaxMessageError,
                estimate: Proportion::new(worst, tpm)?,
                pooled: Some(Proportion::new(
                    per_message.iter().sum(),
                    tpm * params.messages_sampled as u64,
                )?),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PairwiseCheck {
    pub pairs: (usize, usize),
    pub l1_distance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct InductionReport {
    pub threshold: f64,
    /// Channel-input marginal of each pair against its source law.
    pub marginals: Vec<BehavioralCheckResult>,
    /// Joint input letters of two pairs against the product of their marginals.
    pub independence: Vec<PairwiseCheck>,
    /// Joint input letters of two pairs, reliable mode against direct mode.
    pub joint_match: Vec<PairwiseCheck>,
    /// Per-pair input/output letter law at the medium terminals, reliable mode against direct mode.
    pub terminal_match: Vec<PairwiseCheck>,
}

impl InductionReport {
    pub fn passed(&self) -> bool {
        self.marginals.iter().all(|m| m.passed)
            && self.independence.iter().all(|c| c.passed)
            && self.joint_match.iter().all(|c| c.passed)
            && self.terminal_match.iter().all(|c| c.passed)
    }

    pub fn independence_passed(&self) -> bool {
        self.independence.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Default)]
struct Tally {
    /// Per pair, input letter counts.
    marginal: Vec<Vec<u64>>,
    /// Per pair of pairs `(a < b)`, joint input letter counts, row-major.
    joint: Vec<Vec<u64>>,
    /// Per pair, joint input/output letter counts.
    terminal: Vec<Vec<u64>>,
}

impl Tally {
    fn new(session: &UnicastSession) -> Self {
        let m = &session.medium;
        let np = session.pairs.len();
        let ka = |k: usize| m.input_alphabet(k).size();
        let marginal = (0..np).map(|k| vec![0; ka(k)]).collect();
        let joint = pair_indices(np)
            .map(|(a, b)| vec![0; ka(a) * ka(b)])
            .collect();
        let terminal = (0..np)
            .map(|k| vec![0; ka(k) * m.output_alphabet(k).size()])
            .collect();
        Self {
            marginal,
            joint,
            terminal,
        }
    }

    fn add(&mut self, session: &UnicastSession, x: &[Sequence], y: &[Sequence]) {
        let m = &session.medium;
        for (k, xs) in x.iter().enumerate() {
            let ky = m.output_alphabet(k).size();
            for (&a, &b) in xs.values().iter().zip(y[k].values()) {
                self.marginal[k][a as usize] += 1;
                self.terminal[k][a as usize * ky + b as usize] += 1;
            }
        }
        for (slot, (a, b)) in pair_indices(x.len()).enumerate() {
            let kb = m.input_alphabet(b).size();
            for (&u, &v) in x[a].values().iter().zip(x[b].values()) {
                self.joint[slot][u as usize * kb + v as usize] += 1;
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in [
            (&mut self.marginal, &other.marginal),
            (&mut self.joint, &other.joint),
            (&mut self.terminal, &other.terminal),
        ] {
            for (u, v) in a.iter_mut().zip(b) {
                for (s, t) in u.iter_mut().zip(v) {
                    *s += t;
                }
            }
        }
        self
    }
}

fn pair_indices(np: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..np).flat_map(move |a| (a + 1..np).map(move |b| (a, b)))
}

fn l1_counts(a: &[u64], b: &[u64]) -> f64 {
    let (sa, sb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / sa - y as f64 / sb).abs())
        .sum()
}

fn independence_l1(joint: &[u64], ka: usize, kb: usize) -> f64 {
    let total = joint.iter().sum::<u64>() as f64;
    let row: Vec<f64> = (0..ka)
        .map(|u| (0..kb).map(|v| joint[u * kb + v]).sum::<u64>() as f64 / total)
        .collect();
    let col: Vec<f64> = (0..kb)
        .map(|v| (0..ka).map(|u| joint[u * kb + v]).sum::<u64>() as f64 / total)
        .collect();
    (0..ka)
        .flat_map(|u| (0..kb).map(move |v| (u, v)))
        .map(|(u, v)| (joint[u * kb + v] as f64 / total - row[u] * col[v]).abs())
        .sum()
}

/// Runs reliable-mode encoders and direct sources side by side at
/// blocklength `n` (a fresh code per trial) and compares what reaches the
/// medium terminals.
pub fn behavioral_induction_check(
    session: &UnicastSession,
    eps: f64,
    n: usize,
    trials: usize,
    threshold: f64,
    rng: &SeededRng,
) -> Result<InductionReport> {
    if trials == 0 || n == 0 {
        return invalid("n and trials must be >= 1");
    }
    let codes = PairCodes::new(session, eps)?;
    let np = session.pairs.len();
    let (reliable, direct) = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(Tally, Tally)> {
            let r = rng.derive(&[n as u64, t as u64]);
            let sent = (0..np)
                .map(|k| {
                    let (code, message) = codes.code(session, k, n, t)?;
                    Ok(PairCodes::encode(session, k, &code, message, &r)?.codeword)
                })
                .collect::<Result<Vec<_>>>()?;
            let y_rel = session
                .medium
                .transmit(&sent, &mut r.derive(&[MEDIUM_TAG]))?;
            let direct = session.sources(n, &r)?;
            let y_dir = session
                .medium
                .transmit(&direct, &mut r.derive(&[MEDIUM_TAG, 1]))?;
            let mut a = Tally::new(session);
            a.add(session, &sent, &y_rel);
            let mut b = Tally::new(session);
            b.add(session, &direct, &y_dir);
            Ok((a, b))
        })
        .try_reduce(
            || (Tally::new(session), Tally::new(session)),
            |(a1, b1), (a2, b2)| Ok((a1.merge(a2), b1.merge(b2))),
        )?;
    let marginals = (0..np)
        .map(|k| {
            behavioral_check_counts(
                &reliable.marginal[k],
                &session.pairs[k].p_x,
                trials,
                threshold,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let check = |pairs, l1_distance: f64| PairwiseCheck {
        pairs,
        l1_distance,
        passed: l1_distance <= threshold,
    };
    let m = &session.medium;
    let independence = pair_indices(np)
        .enumerate()
        .map(|(s, (a, b))| {
            check(
                (a, b),
                independence_l1(
                    &reliable.joint[s],
                    m.input_alphabet(a).size(),
                    m.input_alphabet(b).size(),
                ),
            )
        })
        .collect();
    let joint_match = pair_indices(np)
        .enumerate()
        .map(|(s, ab)| check(ab, l1_counts(&reliable.joint[s], &direct.joint[s])))
        .collect();
    let terminal_match = (0..np)
        .map(|k| {
            check(
                (k, k),
                l1_counts(&reliable.terminal[k], &direct.terminal[k]),
            )
        })
        .collect();
    Ok(InductionReport {
        threshold,
        marginals,
        independence,
        joint_match,
        terminal_match,
    })
}

/// What one pair carries in separated mode.
#[derive(Clone, Debug)]
pub struct Payload {
    pub p_x: Distribution,
    pub d: DistortionSpec,
    pub target: f64,
}

#[derive(Clone, Debug)]
pub struct MultiSeparationParams {
    /// Source code rate above each payload's `R(D)`.
    pub source_margin: f64,
    /// Channel code rate below each certified pair's `R(D)`.
    pub channel_margin: f64,
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub trials: usize,
}

/// Per-pair source code plus channel code over the medium. Pair `k` must hold
/// a certificate labeled [`UnicastSession::pair_label`]`(k)`.
pub fn separation_multiuser(
    session: &UnicastSession,
    payloads: &[Payload],
    certificates: &[Certificate],
    params: &MultiSeparationParams,
    rng: &SeededRng,
) -> Result<Vec<ExcessCell>> {
    let np = session.pairs.len();
    if payloads.len() != np {
        return invalid(format!("expected {np} payloads, got {}", payloads.len()));
    }
    if params.trials == 0 {
        return invalid("trials must be >= 1");
    }
    let codecs = (0..np)
        .map(|k| {
            let label = session.pair_label(k);
            let cert = certificates
                .iter()
                .find(|c| c.channel_id == label)
                .ok_or_else(|| Error::Certification(format!("{label} carries no certificate")))?;
            let pipe_rate =
                rate_distortion(&cert.p_in, &cert.d, cert.target, DEFAULT_TOL)?.rate_bits;
            let pl = &payloads[k];
            SeparationCodec::build(
                &pl.p_x,
                &pl.d,
                pl.target,
                cert,
                &SeparationParams {
                    source_margin: params.source_margin,
                    channel_rate: pipe_rate - params.channel_margin,
                    eps: params.eps,
                    n_list: params.n_list.clone(),
                    seed: stream_key(&[session.seed, session.pairs[k].seed_tag]),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for &n in &params.n_list {
        let per_trial = (0..params.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<(f64, Vec<u64>)>> {
                let r = rng.derive(&[n as u64, t as u64]);
                let mut xs = Vec::with_capacity(np);
                let mut outs = Vec::with_capacity(np);
                for (k, c) in codecs.iter().enumerate() {
                    let tag = session.pairs[k].seed_tag;
                    let x = sample_iid(c.source(), n, &mut r.derive(&[SOURCE_TAG, tag]))?;
                    outs.push(c.send(&x, &mut r.derive(&[ENCODER_TAG, tag]))?);
                    xs.push(x);
                }
                let inputs: Vec<Sequence> = outs.iter().map(|o| o.codeword().clone()).collect();
                let y = session
                    .medium
                    .transmit(&inputs, &mut r.derive(&[MEDIUM_TAG]))?;
                (0..np)
                    .map(|k| {
                        let c = &codecs[k];
                        let x_hat =
                            c.receive(&y[k], &outs[k], &mut r.derive(&[DECODER_TAG, k as u64]))?;
                        let counts = inputs[k].counts().into_iter().map(|v| v as u64).collect();
                        Ok((n_letter_distortion(&xs[k], &x_hat, c.distortion())?, counts))
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, c) in codecs.iter().enumerate() {
            let rows: Vec<(f64, Vec<u64>)> = per_trial.iter().map(|v| v[k].clone()).collect();
            let ka = session.medium.input_alphabet(k).size();
            cells.push(ExcessCell::from_trials(
                k,
                &session.pair_label(k),
                n,
                c.target(),
                &rows,
                ka,
            )?);
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{Channel, ChannelModel, ParallelMedium};
    use crate::prob::{Alphabet, Kernel};

    fn identity_session(np: usize, target: f64) -> UnicastSession {
        let a = Alphabet::binary();
        let chans: Vec<Arc<dyn Channel>> = (0..np)
            .map(|_| {
                Arc::new(ChannelModel::dmc("id", Kernel::identity(a.clone()))) as Arc<dyn Channel>
            })
            .collect();
        let pairs: Vec<(usize, usize)> = (0..np).map(|k| (k, (k + 1) % (np + 1))).collect();
        let medium = ParallelMedium::new(np + 1, pairs, chans).unwrap();
        let specs = (0..np)
            .map(|k| {
                PairSpec::new(
                    Distribution::uniform(a.clone()),
                    DistortionSpec::hamming(a.clone()),
                    target,
                    0.3,
                    k as u64,
                )
            })
            .collect();
        UnicastSession::new(Arc::new(medium), specs, 7).unwrap()
    }

    #[test]
    fn identity_medium_has_no_excess() {
        let s = identity_session(2, 0.0);
        let reps = run_direct_multiuser(&s, &[50], 20, &SeededRng::new(1, 0)).unwrap();
        assert!(reps.iter().all(|r| r.estimate.successes == 0));
    }

    #[test]
    fn shared_tag_breaks_independence() {
        let mut s = identity_session(2, 0.1);
        let check =
            behavioral_induction_check(&s, 0.1, 100, 50, 0.05, &SeededRng::new(2, 0)).unwrap();
        assert!(check.independence_passed());
        s.pairs[1].seed_tag = s.pairs[0].seed_tag;
        let check =
            behavioral_induction_check(&s, 0.1, 100, 50, 0.05, &SeededRng::new(2, 0)).unwrap();
        assert!(!check.independence_passed());
    }
}
