//! Random channel codes with the distortion-based joint-typicality decoder.
//!
//! A codeword is jointly typical with `y^n` when it is `eps`-typical for
//! `p_X` and its per-letter distortion to `y^n` is at most `D`. The decoder
//! accepts only a unique jointly typical codeword.
//!
//! As with source codes, codebooks over the letter budget are realized in
//! law: the sent codeword is drawn i.i.d. `p_X`, and the number of other
//! codewords passing the test is drawn exactly from its binomial law, whose
//! success probability depends on `y^n` only through its type.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::RngCore;
use rayon::prelude::*;

use crate::channels::CompoundSet;
use crate::error::{invalid, Error, Result};
use crate::prob::{
    ensure_same, is_typical, message_bits, n_letter_distortion, sample_iid, stream_key,
    within_distortion, Alphabet, DistortionSpec, Distribution, SeededRng, Sequence,
};
use crate::rd::{sanov_exponent, DEFAULT_TOL};
use crate::source_code::{fits_budget, simulate_explicitly};
use crate::stats::Proportion;
use crate::typedp::{log2_prob_typical_within, sample_hit_count, HitCount, IntegerCosts};

const CODEBOOK_TAG: u64 = 0xC0DE_B00C;

/// Parameters of the joint-typicality test.
#[derive(Clone, Debug)]
pub struct JointTypicality {
    pub p_x: Distribution,
    pub eps: f64,
    pub d: DistortionSpec,
    pub target: f64,
    /// Test distortion against `D + eps` instead of `D`.
    pub eps_in_distortion: bool,
}

impl JointTypicality {
    pub fn new(p_x: Distribution, eps: f64, d: DistortionSpec, target: f64) -> Result<Self> {
        if eps.is_nan() || eps < 0.0 {
            return invalid("eps must be >= 0");
        }
        if target.is_nan() || target < 0.0 {
            return invalid("distortion level must be >= 0");
        }
        ensure_same(
            p_x.alphabet(),
            d.input(),
            "joint typicality (input alphabet)",
        )?;
        Ok(Self {
            p_x,
            eps,
            d,
            target,
            eps_in_distortion: false,
        })
    }

    pub fn with_eps_in_distortion(mut self, on: bool) -> Self {
        self.eps_in_distortion = on;
        self
    }

    pub fn distortion_threshold(&self) -> f64 {
        if self.eps_in_distortion {
            self.target + self.eps
        } else {
            self.target
        }
    }

    pub fn input_alphabet(&self) -> &Alphabet {
        self.p_x.alphabet()
    }

    pub fn output_alphabet(&self) -> &Alphabet {
        self.d.output()
    }

    pub fn check(&self, x: &Sequence, y: &Sequence) -> Result<bool> {
        if x.len() != y.len() {
            return invalid(format!("length mismatch: {} vs {}", x.len(), y.len()));
        }
        if !is_typical(x, &self.p_x, self.eps)? {
            return Ok(false);
        }
        let total = n_letter_distortion(x, y, &self.d)?;
        Ok(within_distortion(
            total,
            x.len(),
            self.distortion_threshold(),
        ))
    }
}

pub fn is_jointly_typical(
    x: &Sequence,
    y: &Sequence,
    p_x: &Distribution,
    eps: f64,
    d: &DistortionSpec,
    target: f64,
) -> Result<bool> {
    JointTypicality::new(p_x.clone(), eps, d.clone(), target)?.check(x, y)
}

#[derive(Clone, Debug)]
pub struct ChannelCodebook {
    rate_bits: f64,
    n: usize,
    codewords: Vec<Sequence>,
    seed: u64,
    p_x: Distribution,
}

impl ChannelCodebook {
    /// Codebook from explicit codewords (all of one length and alphabet).
    pub fn from_codewords(p_x: Distribution, codewords: Vec<Sequence>) -> Result<Self> {
        let n = codewords
            .first()
            .map(Sequence::len)
            .ok_or_else(|| Error::InvalidArgument("empty codebook".into()))?;
        for c in &codewords {
            ensure_same(c.alphabet(), p_x.alphabet(), "codebook")?;
            if c.len() != n {
                return invalid("codewords differ in length");
            }
        }
        let rate_bits = (codewords.len() as f64).log2() / n as f64;
        Ok(Self {
            rate_bits,
            n,
            codewords,
            seed: 0,
            p_x,
        })
    }

    pub fn rate_bits(&self) -> f64 {
        self.rate_bits
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn codewords(&self) -> &[Sequence] {
        &self.codewords
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p_x(&self) -> &Distribution {
        &self.p_x
    }
}

/// `2^{floor(nR)}` codewords drawn i.i.d. `p_x`, reproducible from `seed`.
pub fn build_channel_codebook(
    p_x: &Distribution,
    rate: f64,
    n: usize,
    seed: u64,
) -> Result<ChannelCodebook> {
    if rate <= 0.0 {
        return invalid("channel code rate must be > 0");
    }
    if n == 0 {
        return invalid("blocklength must be >= 1");
    }
    let bits = message_bits(rate, n)?;
    if !fits_budget(bits, n) {
        return Err(Error::Resource(format!(
            "2^{bits} codewords of length {n} exceed the 2^26-letter budget"
        )));
    }
    let mut rng = SeededRng::new(seed, stream_key(&[CODEBOOK_TAG, n as u64]));
    let codewords = (0..1usize << bits)
        .map(|_| sample_iid(p_x, n, &mut rng))
        .collect::<Result<_>>()?;
    Ok(ChannelCodebook {
        rate_bits: rate,
        n,
        codewords,
        seed,
        p_x: p_x.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeOutcome {
    Message(u64),
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub outcome: DecodeOutcome,
    /// Number of jointly typical codewords seen (saturates at 2 for ensemble codes).
    pub candidates: usize,
}

pub fn jt_decode(y: &Sequence, cb: &ChannelCodebook, rule: &JointTypicality) -> Result<Decoded> {
    ensure_same(y.alphabet(), rule.output_alphabet(), "jt_decode")?;
    let mut found = None;
    let mut candidates = 0;
    for (i, c) in cb.codewords.iter().enumerate() {
        if rule.check(c, y)? {
            candidates += 1;
            found = Some(i as u64);
        }
    }
    let outcome = match (candidates, found) {
        (1, Some(i)) => DecodeOutcome::Message(i),
        _ => DecodeOutcome::Error,
    };
    Ok(Decoded {
        outcome,
        candidates,
    })
}

/// `log2 P(Z^n jointly typical with y^n)` for `Z^n` i.i.d. `p_X`, where
/// `y_counts` is the symbol count vector of `y^n`.
pub fn log2_e2_exact(y_counts: &[usize], rule: &JointTypicality) -> Result<f64> {
    if y_counts.len() != rule.output_alphabet().size() {
        return invalid("type length does not match the output alphabet");
    }
    let n: usize = y_counts.iter().sum();
    let costs = IntegerCosts::from_spec(&rule.d)?;
    let max_cost = match costs.threshold(n, rule.distortion_threshold()) {
        Some(c) => c,
        None => return Ok(f64::NEG_INFINITY),
    };
    log2_prob_typical_within(
        y_counts,
        rule.p_x.probs(),
        rule.p_x.probs(),
        &costs,
        Some(rule.eps),
        max_cost,
    )
}

/// Exact probability that one i.i.d. `p_X` codeword is jointly typical with a
/// fixed `y^n` of type `y_type`.
pub fn e2_exact(
    y_type: &Distribution,
    p_x: &Distribution,
    eps: f64,
    d: &DistortionSpec,
    target: f64,
    n: usize,
) -> Result<f64> {
    if n == 0 || n > 1000 {
        return invalid("e2_exact supports 1 <= n <= 1000");
    }
    if p_x.alphabet().size() > 4 || d.output().size() > 4 {
        return invalid("e2_exact supports alphabets of at most 4 symbols");
    }
    ensure_same(y_type.alphabet(), d.output(), "e2_exact (type alphabet)")?;
    let counts = realizable_counts(y_type, n)?;
    let rule = JointTypicality::new(p_x.clone(), eps, d.clone(), target)?;
    Ok(log2_e2_exact(&counts, &rule)?.exp2())
}

fn realizable_counts(t: &Distribution, n: usize) -> Result<Vec<usize>> {
    let counts: Vec<usize> = t
        .probs()
        .iter()
        .map(|p| (p * n as f64).round() as usize)
        .collect();
    let exact = t
        .probs()
        .iter()
        .zip(&counts)
        .all(|(p, &c)| (p * n as f64 - c as f64).abs() < 1e-9);
    if !exact || counts.iter().sum::<usize>() != n {
        return invalid(format!(
            "type {:?} is not realizable at blocklength {n}",
            t.probs()
        ));
    }
    Ok(counts)
}

/// Both sides of the impostor bound, in log2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SanovCheck {
    /// `floor(nR) + log2 e2_exact`: union bound over impostors.
    pub log2_union: f64,
    /// `|X||Y| log2(n+1) + floor(nR) - n * exponent`.
    pub log2_bound: f64,
    pub exponent: f64,
}

impl SanovCheck {
    /// The bound must dominate whenever the union term is a probability.
    pub fn holds(&self) -> bool {
        self.log2_union > 0.0 || self.log2_union <= self.log2_bound + 1e-9
    }
}

pub fn sanov_bound_check(
    p_x: &Distribution,
    eps: f64,
    d: &DistortionSpec,
    target: f64,
    rate: f64,
    n: usize,
    y_type: &Distribution,
) -> Result<SanovCheck> {
    let bits = message_bits(rate, n)? as f64;
    let e2 = e2_exact(y_type, p_x, eps, d, target, n)?;
    let ex = sanov_exponent(p_x, d.output(), d, target, eps, DEFAULT_TOL)?;
    let cells = (p_x.alphabet().size() * d.output().size()) as f64;
    Ok(SanovCheck {
        log2_union: bits + e2.log2(),
        log2_bound: cells * ((n + 1) as f64).log2() + bits - n as f64 * ex.exponent_bits,
        exponent: ex.exponent_bits,
    })
}

/// Cache of `log2_e2_exact` by output type, shared across codes with one rule.
#[derive(Debug)]
pub struct E2Cache {
    rule: JointTypicality,
    values: Mutex<HashMap<Vec<usize>, f64>>,
}

impl E2Cache {
    pub fn new(rule: JointTypicality) -> Self {
        Self {
            rule,
            values: Mutex::new(HashMap::new()),
        }
    }

    pub fn rule(&self) -> &JointTypicality {
        &self.rule
    }

    pub fn log2_prob(&self, y_counts: &[usize]) -> Result<f64> {
        if let Some(&v) = self.values.lock().expect("cache lock").get(y_counts) {
            return Ok(v);
        }
        let v = log2_e2_exact(y_counts, &self.rule)?;
        self.values
            .lock()
            .expect("cache lock")
            .insert(y_counts.to_vec(), v);
        Ok(v)
    }
}

/// A blocklength-`n` channel code: explicit codebook or its ensemble realization.
#[derive(Debug)]
pub enum ChannelCode {
    Explicit {
        codebook: ChannelCodebook,
        rule: JointTypicality,
    },
    Ensemble {
        n: usize,
        bits: usize,
        cache: Arc<E2Cache>,
    },
}

/// What the encoder put on the channel.
#[derive(Clone, Debug)]
pub struct Sent {
    pub message: u64,
    pub codeword: Sequence,
}

/// Decoder result with the error-event breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Received {
    pub decoded: Decoded,
    /// The sent codeword failed the joint-typicality test.
    pub e1: bool,
    /// Some other codeword passed it.
    pub e2: bool,
}

impl Received {
    pub fn is_error(&self, message: u64) -> bool {
        self.decoded.outcome != DecodeOutcome::Message(message)
    }
}

impl ChannelCode {
    /// Explicit when the codebook fits the simulation letter budget, ensemble otherwise.
    pub fn new(rate: f64, n: usize, seed: u64, cache: Arc<E2Cache>) -> Result<Self> {
        let bits = message_bits(rate, n)?;
        if rate <= 0.0 {
            return invalid("channel code rate must be > 0");
        }
        if simulate_explicitly(bits, n) {
            let rule = cache.rule().clone();
            return Ok(Self::Explicit {
                codebook: build_channel_codebook(&rule.p_x, rate, n, seed)?,
                rule,
            });
        }
        Ok(Self::Ensemble { n, bits, cache })
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Explicit { codebook, .. } => codebook.n,
            Self::Ensemble { n, .. } => *n,
        }
    }

    pub fn bits(&self) -> usize {
        match self {
            Self::Explicit { codebook, .. } => codebook.codewords.len().trailing_zeros() as usize,
            Self::Ensemble { bits, .. } => *bits,
        }
    }

    pub fn rule(&self) -> &JointTypicality {
        match self {
            Self::Explicit { rule, .. } => rule,
            Self::Ensemble { cache, .. } => cache.rule(),
        }
    }

    /// Uniform message label.
    pub fn sample_message(&self, rng: &mut SeededRng) -> u64 {
        let bits = self.bits();
        if bits >= 64 {
            rng.next_u64()
        } else {
            rng.next_u64() & ((1u64 << bits) - 1)
        }
    }

    /// Codeword of `message`. Ensemble codes draw it fresh from `rng`.
    pub fn encode(&self, message: u64, rng: &mut SeededRng) -> Result<Sent> {
        let codeword = match self {
            Self::Explicit { codebook, .. } => codebook
                .codewords
                .get(message as usize)
                .cloned()
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("message {message} outside the codebook"))
                })?,
            Self::Ensemble { n, cache, .. } => sample_iid(&cache.rule().p_x, *n, rng)?,
        };
        Ok(Sent { message, codeword })
    }

    pub fn decode(&self, y: &Sequence, sent: &Sent, rng: &mut SeededRng) -> Result<Received> {
        let rule = self.rule();
        let sent_ok = rule.check(&sent.codeword, y)?;
        match self {
            Self::Explicit { codebook, .. } => {
                let decoded = jt_decode(y, codebook, rule)?;
                let impostors = decoded.candidates - usize::from(sent_ok);
                Ok(Received {
                    decoded,
                    e1: !sent_ok,
                    e2: impostors > 0,
                })
            }
            Self::Ensemble { bits, cache, .. } => {
                ensure_same(y.alphabet(), rule.output_alphabet(), "decode")?;
                let log2_p = cache.log2_prob(&y.counts())?;
                let log2_others = if *bits == 0 {
                    f64::NEG_INFINITY
                } else {
                    *bits as f64 + (-(-(*bits as f64)).exp2()).ln_1p() / std::f64::consts::LN_2
                };
                let hits = sample_hit_count(log2_p, log2_others, rng);
                let others = match hits {
                    HitCount::Zero => 0,
                    HitCount::One => 1,
                    HitCount::Many => 2,
                };
                let candidates = (usize::from(sent_ok) + others).min(2);
                let outcome = match (sent_ok, hits) {
                    (true, HitCount::Zero) => DecodeOutcome::Message(sent.message),
                    (false, HitCount::One) => {
                        // A single impostor wins: any label other than the sent one.
                        let mut other = rng.next_u64();
                        if *bits < 64 {
                            other &= (1u64 << bits) - 1;
                        }
                        if other == sent.message {
                            other ^= 1;
                        }
                        DecodeOutcome::Message(other)
                    }
                    _ => DecodeOutcome::Error,
                };
                Ok(Received {
                    decoded: Decoded {
                        outcome,
                        candidates,
                    },
                    e1: !sent_ok,
                    e2: others > 0,
                })
            }
        }
    }
}

/// Reliability-run parameters. Each sampled message gets its own freshly
/// drawn codebook (one batch), which is shared by every compound member.
#[derive(Clone, Debug)]
pub struct ReliabilityParams {
    pub rule: JointTypicality,
    pub rate: f64,
    pub n_list: Vec<usize>,
    pub messages_sampled: usize,
    pub trials_per_message: usize,
}

#[derive(Clone, Debug)]
pub struct ReliabilityCell {
    pub member: usize,
    pub member_label: String,
    pub n: usize,
    pub rate: f64,
    /// Error estimate of the worst sampled message.
    pub max_message_error: Proportion,
    /// Errors pooled over all sampled messages.
    pub pooled_error: Proportion,
    pub e1_count: u64,
    pub e2_count: u64,
    /// Channel-input letter counts over all trials.
    pub input_counts: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct ReliabilityReport {
    pub cells: Vec<ReliabilityCell>,
}

impl ReliabilityReport {
    /// Largest worst-message error over members at blocklength `n`.
    pub fn max_member_error(&self, n: usize) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.n == n)
            .map(|c| c.max_message_error.estimate)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

#[derive(Clone, Copy, Default)]
struct TrialTally {
    error: bool,
    e1: bool,
    e2: bool,
}

/// Error probability of the random-code ensemble over every member of `set`.
pub fn run_reliability(
    set: &CompoundSet,
    params: &ReliabilityParams,
    rng: &SeededRng,
) -> Result<ReliabilityReport> {
    let rule = &params.rule;
    if params.rate <= 0.0 {
        return invalid("rate must be > 0");
    }
    if params.messages_sampled == 0 || params.trials_per_message == 0 {
        return invalid("messages_sampled and trials_per_message must be >= 1");
    }
    ensure_same(
        set.input_alphabet(),
        rule.input_alphabet(),
        "run_reliability (input alphabet)",
    )?;
    ensure_same(
        set.output_alphabet(),
        rule.output_alphabet(),
        "run_reliability (output alphabet)",
    )?;
    let cache = Arc::new(E2Cache::new(rule.clone()));
    let k = rule.input_alphabet().size();
    let mut cells = Vec::new();
    for &n in &params.n_list {
        let codes = (0..params.messages_sampled)
            .into_par_iter()
            .map(|b| {
                let seed = stream_key(&[rng.seed(), rng.stream_id(), n as u64, b as u64]);
                let code = ChannelCode::new(params.rate, n, seed, cache.clone())?;
                let message = code.sample_message(&mut rng.derive(&[n as u64, b as u64, u64::MAX]));
                Ok((code, message))
            })
            .collect::<Result<Vec<_>>>()?;
        for (m, ch) in set.members().iter().enumerate() {
            let jobs: Vec<(usize, usize)> = (0..params.messages_sampled)
                .flat_map(|b| (0..params.trials_per_message).map(move |t| (b, t)))
                .collect();
            let results = jobs
                .par_iter()
                .map(|&(b, t)| -> Result<(TrialTally, Vec<u64>)> {
                    let (code, message) = &codes[b];
                    let mut r = rng.derive(&[n as u64, b as u64, t as u64]);
                    let sent = code.encode(*message, &mut r)?;
                    let mut ch_rng = r.derive(&[m as u64]);
                    let y = ch.transmit(&sent.codeword, &mut ch_rng)?;
                    let rec = code.decode(&y, &sent, &mut ch_rng)?;
                    let mut counts = vec![0u64; k];
                    for &v in sent.codeword.values() {
                        counts[v as usize] += 1;
                    }
                    Ok((
                        TrialTally {
                            error: rec.is_error(*message),
                            e1: rec.e1,
                            e2: rec.e2,
                        },
                        counts,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut per_message = vec![0u64; params.messages_sampled];
            let (mut e1, mut e2) = (0, 0);
            let mut input_counts = vec![0u64; k];
            for (&(b, _), (tally, counts)) in jobs.iter().zip(&results) {
                per_message[b] += u64::from(tally.error);
                e1 += u64::from(tally.e1);
                e2 += u64::from(tally.e2);
                for (a, c) in input_counts.iter_mut().zip(counts) {
                    *a += c;
                }
            }
            let tpm = params.trials_per_message as u64;
            let worst = *per_message.iter().max().expect("at least one message");
            let total: u64 = per_message.iter().sum();
            cells.push(ReliabilityCell {
                member: m,
                member_label: ch.label().to_string(),
                n,
                rate: params.rate,
                max_message_error: Proportion::new(worst, tpm)?,
                pooled_error: Proportion::new(total, tpm * params.messages_sampled as u64)?,
                e1_count: e1,
                e2_count: e2,
                input_counts,
            });
        }
    }
    Ok(ReliabilityReport { cells })
}
