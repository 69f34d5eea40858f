//! Layers stacked above black-box channels, separation systems and the
//! input-distribution (behavioral) check.
//!
//! A [`Layer`] is a pair of deterministic sequence maps seeded from one
//! shared seed. Stacking layers over a channel gives a [`ComposedChannel`],
//! itself a [`Channel`], so layers nest freely.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::channel_code::{ChannelCode, DecodeOutcome, E2Cache, JointTypicality, Sent};
use crate::channels::{Channel, CompoundSet, DirectCommEvidence};
use crate::error::{invalid, Error, Result};
use crate::prob::{
    ensure_same, n_letter_distortion, sample_iid, stream_key, within_distortion, Alphabet,
    DistortionSpec, Distribution, SeededRng, Sequence,
};
use crate::rd::{distortion_range, rate_distortion, DEFAULT_TOL};
use crate::source_code::SourceCode;
use crate::stats::{MeanEstimate, Proportion, DEFAULT_LEVEL};

const SCRAMBLE_TAG: u64 = 0x5C4A_3B1E;
const PERMUTE_TAG: u64 = 0x9E43_0001;
const SEPARATION_TAG: u64 = 0x5E9A_0001;

/// Deterministic map between sequence spaces of equal length.
#[derive(Clone, Debug, PartialEq)]
pub enum SequenceMap {
    Identity(Alphabet),
    /// Adds (or with `inverse`, subtracts) a seeded uniform key sequence
    /// modulo the alphabet size.
    Scramble {
        alphabet: Alphabet,
        seed: u64,
        inverse: bool,
    },
    /// Reorders positions by a seeded permutation.
    Permute {
        alphabet: Alphabet,
        seed: u64,
        inverse: bool,
    },
    /// Letter-by-letter relabeling.
    Symbols {
        from: Alphabet,
        to: Alphabet,
        table: Vec<u8>,
    },
    /// Every input goes to the all-`symbol` sequence.
    Constant {
        from: Alphabet,
        to: Alphabet,
        symbol: u8,
    },
    /// Applied first to last.
    Chain(Vec<SequenceMap>),
}

fn key_sequence(seed: u64, n: usize, k: usize) -> Vec<u8> {
    let mut rng = SeededRng::new(seed, stream_key(&[SCRAMBLE_TAG, n as u64]));
    (0..n).map(|_| rng.random_range(0..k) as u8).collect()
}

fn position_permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = SeededRng::new(seed, stream_key(&[PERMUTE_TAG, n as u64]));
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    p
}

impl SequenceMap {
    pub fn symbols(from: Alphabet, to: Alphabet, table: Vec<u8>) -> Result<Self> {
        if table.len() != from.size() || table.iter().any(|&t| t as usize >= to.size()) {
            return invalid(
                "symbol table does not map the input alphabet into the output alphabet",
            );
        }
        Ok(Self::Symbols { from, to, table })
    }

    pub fn constant(from: Alphabet, to: Alphabet, symbol: u8) -> Result<Self> {
        if symbol as usize >= to.size() {
            return invalid("constant symbol outside the output alphabet");
        }
        Ok(Self::Constant { from, to, symbol })
    }

    pub fn chain(maps: Vec<SequenceMap>) -> Result<Self> {
        if maps.is_empty() {
            return invalid("empty chain");
        }
        for w in maps.windows(2) {
            ensure_same(w[0].output_alphabet(), w[1].input_alphabet(), "map chain")?;
        }
        Ok(Self::Chain(maps))
    }

    pub fn input_alphabet(&self) -> &Alphabet {
        match self {
            Self::Identity(a)
            | Self::Scramble { alphabet: a, .. }
            | Self::Permute { alphabet: a, .. } => a,
            Self::Symbols { from, .. } | Self::Constant { from, .. } => from,
            Self::Chain(maps) => maps[0].input_alphabet(),
        }
    }

    pub fn output_alphabet(&self) -> &Alphabet {
        match self {
            Self::Identity(a)
            | Self::Scramble { alphabet: a, .. }
            | Self::Permute { alphabet: a, .. } => a,
            Self::Symbols { to, .. } | Self::Constant { to, .. } => to,
            Self::Chain(maps) => maps[maps.len() - 1].output_alphabet(),
        }
    }

    pub fn apply(&self, x: &Sequence) -> Result<Sequence> {
        ensure_same(x.alphabet(), self.input_alphabet(), "sequence map")?;
        let xs = x.values();
        let n = xs.len();
        let values = match self {
            Self::Identity(_) => return Ok(x.clone()),
            Self::Scramble {
                alphabet,
                seed,
                inverse,
            } => {
                let k = alphabet.size();
                let key = key_sequence(*seed, n, k);
                xs.iter()
                    .zip(&key)
                    .map(|(&a, &s)| {
                        let s = if *inverse { k - s as usize } else { s as usize };
                        ((a as usize + s) % k) as u8
                    })
                    .collect()
            }
            Self::Permute { seed, inverse, .. } => {
                let p = position_permutation(*seed, n);
                let mut out = vec![0u8; n];
                for (t, &src) in p.iter().enumerate() {
                    if *inverse {
                        out[src] = xs[t];
                    } else {
                        out[t] = xs[src];
                    }
                }
                out
            }
            Self::Symbols { table, .. } => xs.iter().map(|&a| table[a as usize]).collect(),
            Self::Constant { symbol, .. } => vec![*symbol; n],
            Self::Chain(maps) => {
                let mut cur = x.clone();
                for m in maps {
                    cur = m.apply(&cur)?;
                }
                return Ok(cur);
            }
        };
        Sequence::new(self.output_alphabet().clone(), values)
    }

    /// Inverse map, when one exists.
    pub fn inverse(&self) -> Option<SequenceMap> {
        match self {
            Self::Identity(a) => Some(Self::Identity(a.clone())),
            Self::Scramble {
                alphabet,
                seed,
                inverse,
            } => Some(Self::Scramble {
                alphabet: alphabet.clone(),
                seed: *seed,
                inverse: !inverse,
            }),
            Self::Permute {
                alphabet,
                seed,
                inverse,
            } => Some(Self::Permute {
                alphabet: alphabet.clone(),
                seed: *seed,
                inverse: !inverse,
            }),
            Self::Symbols { from, to, table } => {
                if from.size() != to.size() {
                    return None;
                }
                let mut inv = vec![u8::MAX; to.size()];
                for (a, &b) in table.iter().enumerate() {
                    if inv[b as usize] != u8::MAX {
                        return None;
                    }
                    inv[b as usize] = a as u8;
                }
                Some(Self::Symbols {
                    from: to.clone(),
                    to: from.clone(),
                    table: inv,
                })
            }
            Self::Constant { .. } => None,
            Self::Chain(maps) => maps
                .iter()
                .rev()
                .map(Self::inverse)
                .collect::<Option<Vec<_>>>()
                .map(Self::Chain),
        }
    }
}

/// Encoder above a channel and the decoder below it, from one shared seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub encoder: SequenceMap,
    pub decoder: SequenceMap,
    pub seed: u64,
}

impl Layer {
    pub fn new(encoder: SequenceMap, decoder: SequenceMap, seed: u64) -> Self {
        Self {
            encoder,
            decoder,
            seed,
        }
    }

    pub fn identity(alphabet: Alphabet) -> Self {
        Self::new(
            SequenceMap::Identity(alphabet.clone()),
            SequenceMap::Identity(alphabet),
            0,
        )
    }

    /// Additive scrambler and its descrambler.
    pub fn scrambler(alphabet: Alphabet, seed: u64) -> Self {
        let enc = SequenceMap::Scramble {
            alphabet,
            seed,
            inverse: false,
        };
        let dec = enc.inverse().expect("scrambles invert");
        Self::new(enc, dec, seed)
    }

    /// Position interleaver and its deinterleaver.
    pub fn interleaver(alphabet: Alphabet, seed: u64) -> Self {
        let enc = SequenceMap::Permute {
            alphabet,
            seed,
            inverse: false,
        };
        let dec = enc.inverse().expect("permutations invert");
        Self::new(enc, dec, seed)
    }
}

/// Channel `decoder ∘ inner ∘ encoder`, with layers listed innermost first.
#[derive(Clone, Debug)]
pub struct ComposedChannel {
    base: Arc<dyn Channel>,
    layers: Vec<Layer>,
    label: String,
}

pub fn compose(ch: Arc<dyn Channel>, layer: Layer) -> Result<ComposedChannel> {
    let label = format!("layered({})", ch.label());
    ComposedChannel {
        base: ch,
        layers: Vec::new(),
        label,
    }
    .stack(layer)
}

impl ComposedChannel {
    /// Adds `layer` on top.
    pub fn stack(mut self, layer: Layer) -> Result<Self> {
        ensure_same(
            layer.encoder.output_alphabet(),
            self.input_alphabet(),
            "layer encoder output",
        )?;
        ensure_same(
            layer.decoder.input_alphabet(),
            self.output_alphabet(),
            "layer decoder input",
        )?;
        self.layers.push(layer);
        Ok(self)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn base(&self) -> &Arc<dyn Channel> {
        &self.base
    }

    /// The same channel with all layers merged into one.
    pub fn flatten(&self) -> ComposedChannel {
        let enc = self
            .layers
            .iter()
            .rev()
            .map(|l| l.encoder.clone())
            .collect();
        let dec = self.layers.iter().map(|l| l.decoder.clone()).collect();
        let seed = self.layers.last().map_or(0, |l| l.seed);
        ComposedChannel {
            base: self.base.clone(),
            layers: vec![Layer::new(
                SequenceMap::Chain(enc),
                SequenceMap::Chain(dec),
                seed,
            )],
            label: self.label.clone(),
        }
    }
}

impl Channel for ComposedChannel {
    fn label(&self) -> &str {
        &self.label
    }

    fn input_alphabet(&self) -> &Alphabet {
        self.layers
            .last()
            .map_or(self.base.input_alphabet(), |l| l.encoder.input_alphabet())
    }

    fn output_alphabet(&self) -> &Alphabet {
        self.layers
            .last()
            .map_or(self.base.output_alphabet(), |l| l.decoder.output_alphabet())
    }

    fn transmit(&self, x: &Sequence, rng: &mut SeededRng) -> Result<Sequence> {
        let mut cur = x.clone();
        for l in self.layers.iter().rev() {
            cur = l.encoder.apply(&cur)?;
        }
        cur = self.base.transmit(&cur, rng)?;
        for l in &self.layers {
            cur = l.decoder.apply(&cur)?;
        }
        Ok(cur)
    }
}

/// Counts the letters entering the wrapped channel.
#[derive(Debug)]
pub struct TappedChannel {
    inner: Arc<dyn Channel>,
    counts: Vec<AtomicU64>,
}

impl TappedChannel {
    pub fn new(inner: Arc<dyn Channel>) -> Self {
        let counts = (0..inner.input_alphabet().size())
            .map(|_| AtomicU64::new(0))
            .collect();
        Self { inner, counts }
    }

    pub fn counts(&self) -> Vec<u64> {
        self.counts
            .iter()
            .map(|c| c.load(Ordering::Relaxed))
            .collect()
    }
}

impl Channel for TappedChannel {
    fn label(&self) -> &str {
        self.inner.label()
    }

    fn input_alphabet(&self) -> &Alphabet {
        self.inner.input_alphabet()
    }

    fn output_alphabet(&self) -> &Alphabet {
        self.inner.output_alphabet()
    }

    fn transmit(&self, x: &Sequence, rng: &mut SeededRng) -> Result<Sequence> {
        for (c, n) in self.counts.iter().zip(x.counts()) {
            c.fetch_add(n as u64, Ordering::Relaxed);
        }
        self.inner.transmit(x, rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BehavioralCheckResult {
    pub l1_distance: f64,
    pub threshold: f64,
    pub trials: usize,
    pub letters: u64,
    pub passed: bool,
}

/// `3 sqrt(k / letters)`: a multinomial deviation bound for the empirical L1 distance.
pub fn multinomial_threshold(alphabet_size: usize, letters: u64) -> f64 {
    3.0 * (alphabet_size as f64 / letters as f64).sqrt()
}

/// Compares aggregated channel-input letter counts with `p_x`.
pub fn behavioral_check_counts(
    counts: &[u64],
    p_x: &Distribution,
    trials: usize,
    threshold: f64,
) -> Result<BehavioralCheckResult> {
    if counts.len() != p_x.alphabet().size() {
        return invalid("count vector does not match the alphabet");
    }
    let letters: u64 = counts.iter().sum();
    if letters == 0 {
        return invalid("no channel-input letters observed");
    }
    let l1_distance = counts
        .iter()
        .zip(p_x.probs())
        .map(|(&c, &p)| (c as f64 / letters as f64 - p).abs())
        .sum::<f64>();
    Ok(BehavioralCheckResult {
        l1_distance,
        threshold,
        trials,
        letters,
        passed: l1_distance <= threshold,
    })
}

/// Anything that puts sequences on a channel for a random message.
pub trait InputSource: Send + Sync {
    fn input_alphabet(&self) -> &Alphabet;
    fn channel_input(&self, rng: &mut SeededRng) -> Result<Sequence>;
}

impl InputSource for ChannelCode {
    fn input_alphabet(&self) -> &Alphabet {
        self.rule().input_alphabet()
    }

    fn channel_input(&self, rng: &mut SeededRng) -> Result<Sequence> {
        let m = self.sample_message(rng);
        Ok(self.encode(m, rng)?.codeword)
    }
}

/// Feeds the source straight into the channel.
#[derive(Clone, Debug)]
pub struct DirectSource {
    pub p_x: Distribution,
    pub n: usize,
}

impl InputSource for DirectSource {
    fn input_alphabet(&self) -> &Alphabet {
        self.p_x.alphabet()
    }

    fn channel_input(&self, rng: &mut SeededRng) -> Result<Sequence> {
        sample_iid(&self.p_x, self.n, rng)
    }
}

/// Sends the same word whatever the message.
#[derive(Clone, Debug)]
pub struct ConstantEncoder {
    pub word: Sequence,
}

impl InputSource for ConstantEncoder {
    fn input_alphabet(&self) -> &Alphabet {
        self.word.alphabet()
    }

    fn channel_input(&self, _rng: &mut SeededRng) -> Result<Sequence> {
        Ok(self.word.clone())
    }
}

pub fn behavioral_check(
    system: &dyn InputSource,
    p_x: &Distribution,
    trials: usize,
    threshold: f64,
    rng: &SeededRng,
) -> Result<BehavioralCheckResult> {
    if trials == 0 {
        return invalid("behavioral check needs at least one trial");
    }
    ensure_same(system.input_alphabet(), p_x.alphabet(), "behavioral check")?;
    let k = p_x.alphabet().size();
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<u64>> {
            let x = system.channel_input(&mut rng.derive(&[t as u64]))?;
            Ok(x.counts().into_iter().map(|c| c as u64).collect())
        })
        .try_reduce(
            || vec![0; k],
            |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()),
        )?;
    behavioral_check_counts(&counts, p_x, trials, threshold)
}

/// Passed direct-communication evidence, reduced to what a channel code needs.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub channel_id: String,
    pub p_in: Distribution,
    pub d: DistortionSpec,
    pub target: f64,
    pub n: usize,
    /// Upper confidence bound on the excess-distortion probability at `n`.
    pub excess_upper: f64,
}

impl Certificate {
    /// Certifies when the upper confidence bound at the largest tested
    /// blocklength is at most `max_excess`.
    pub fn from_evidence(ev: &DirectCommEvidence, max_excess: f64) -> Result<Self> {
        let (n, p) = ev.largest_n().ok_or_else(|| {
            Error::Certification(format!("no evidence recorded for {}", ev.channel_id))
        })?;
        if p.ci_high > max_excess {
            return Err(Error::Certification(format!(
                "{}: excess-distortion upper bound {:.4} at n={} exceeds {}",
                ev.channel_id, p.ci_high, n, max_excess
            )));
        }
        Ok(Self {
            channel_id: ev.channel_id.clone(),
            p_in: ev.p_x.clone(),
            d: ev.d.clone(),
            target: ev.target,
            n: *n,
            excess_upper: p.ci_high,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SeparationParams {
    /// Source code rate above `R(D)`.
    pub source_margin: f64,
    pub channel_rate: f64,
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug)]
struct Stage {
    source: SourceCode,
    /// Codebook index to channel message, and back (explicit source codes only).
    perm: Option<(Vec<u64>, Vec<usize>)>,
    channel: ChannelCode,
}

/// What the channel carries for one source block.
#[derive(Clone, Debug)]
pub struct Outbound {
    sent: Sent,
    /// Source index when the source codebook is explicit.
    index: Option<usize>,
    reproduction: Sequence,
}

impl Outbound {
    pub fn codeword(&self) -> &Sequence {
        &self.sent.codeword
    }
}

/// Source code followed by a channel code, independent of the channel used.
#[derive(Debug)]
pub struct SeparationCodec {
    p_x: Distribution,
    d: DistortionSpec,
    target: f64,
    p_in: Distribution,
    source_rate: f64,
    channel_rate: f64,
    q_y: Distribution,
    /// Output letter when no rate is needed.
    constant: Option<u8>,
    n_list: Vec<usize>,
    stages: BTreeMap<usize, Stage>,
}

impl SeparationCodec {
    /// Codes for sending `p_x` within `target` over a pipe holding `cert`.
    pub fn build(
        p_x: &Distribution,
        d: &DistortionSpec,
        target: f64,
        cert: &Certificate,
        params: &SeparationParams,
    ) -> Result<Self> {
        if params.n_list.is_empty() || params.n_list.contains(&0) {
            return invalid("n_list must be nonempty with blocklengths >= 1");
        }
        ensure_same(d.input(), p_x.alphabet(), "source distortion input")?;
        let range = distortion_range(p_x, d)?;
        let mut codec = Self {
            p_x: p_x.clone(),
            d: d.clone(),
            target,
            p_in: cert.p_in.clone(),
            source_rate: 0.0,
            channel_rate: params.channel_rate,
            q_y: Distribution::uniform(d.output().clone()),
            constant: None,
            n_list: params.n_list.clone(),
            stages: BTreeMap::new(),
        };
        if target >= range.d_max {
            let expected = |y: usize| -> f64 {
                p_x.probs()
                    .iter()
                    .enumerate()
                    .map(|(x, p)| p * d.get(x, y))
                    .sum()
            };
            let best = (0..d.output().size()).min_by(|&a, &b| expected(a).total_cmp(&expected(b)));
            codec.constant = best.map(|y| y as u8);
            return Ok(codec);
        }
        let point = rate_distortion(p_x, d, target, DEFAULT_TOL)?;
        let pipe_rate = rate_distortion(&cert.p_in, &cert.d, cert.target, DEFAULT_TOL)?.rate_bits;
        let source_rate = point.rate_bits + params.source_margin;
        if params.channel_rate >= pipe_rate {
            return Err(Error::Precondition(format!(
                "channel rate {} is not below the certified pipe's R(D) = {pipe_rate:.4}",
                params.channel_rate
            )));
        }
        if params.channel_rate < source_rate {
            return Err(Error::Precondition(format!(
                "channel rate {} is below the source rate {source_rate:.4}",
                params.channel_rate
            )));
        }
        let rule =
            JointTypicality::new(cert.p_in.clone(), params.eps, cert.d.clone(), cert.target)?;
        let cache = Arc::new(E2Cache::new(rule));
        codec.source_rate = source_rate;
        codec.q_y = point.output_marginal.clone();
        for &n in &params.n_list {
            let seed = stream_key(&[params.seed, SEPARATION_TAG, n as u64]);
            let source = SourceCode::new(&point.output_marginal, d, source_rate, n, seed)?;
            let perm = source.codeword(0).map(|_| {
                let size = 1usize << source.bits();
                let mut fwd: Vec<u64> = (0..size as u64).collect();
                fwd.shuffle(&mut SeededRng::new(seed, stream_key(&[PERMUTE_TAG])));
                let mut back = vec![0usize; size];
                for (i, &m) in fwd.iter().enumerate() {
                    back[m as usize] = i;
                }
                (fwd, back)
            });
            let channel = ChannelCode::new(
                params.channel_rate,
                n,
                stream_key(&[seed, 1]),
                cache.clone(),
            )?;
            codec.stages.insert(
                n,
                Stage {
                    source,
                    perm,
                    channel,
                },
            );
        }
        Ok(codec)
    }

    pub fn source_rate(&self) -> f64 {
        self.source_rate
    }

    pub fn channel_rate(&self) -> f64 {
        self.channel_rate
    }

    pub fn is_zero_rate(&self) -> bool {
        self.constant.is_some()
    }

    pub fn blocklengths(&self) -> &[usize] {
        &self.n_list
    }

    pub fn source(&self) -> &Distribution {
        &self.p_x
    }

    pub fn distortion(&self) -> &DistortionSpec {
        &self.d
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn input_alphabet(&self) -> &Alphabet {
        self.p_in.alphabet()
    }

    fn stage(&self, n: usize) -> Result<&Stage> {
        self.stages
            .get(&n)
            .ok_or_else(|| Error::InvalidArgument(format!("blocklength {n} was not built")))
    }

    /// Encodes `x` down to a channel codeword. A zero-rate codec still
    /// occupies the channel, with i.i.d. filler from the certified input law.
    pub fn send(&self, x: &Sequence, rng: &mut SeededRng) -> Result<Outbound> {
        ensure_same(x.alphabet(), self.p_x.alphabet(), "separation input")?;
        if let Some(c) = self.constant {
            let codeword = sample_iid(&self.p_in, x.len(), rng)?;
            let reproduction = Sequence::new(self.d.output().clone(), vec![c; x.len()])?;
            return Ok(Outbound {
                sent: Sent {
                    message: 0,
                    codeword,
                },
                index: None,
                reproduction,
            });
        }
        let stage = self.stage(x.len())?;
        let enc = stage.source.encode(x)?;
        let message = match (&stage.perm, enc.index) {
            (Some((fwd, _)), Some(i)) => fwd[i],
            _ => rng.random_range(0..=message_mask(stage.source.bits())),
        };
        let sent = stage.channel.encode(message, rng)?;
        Ok(Outbound {
            sent,
            index: enc.index,
            reproduction: enc.reproduction,
        })
    }

    /// Reproduction from the channel output `y` of `out`. Wrong or failed
    /// decodes fall back to codeword 0 (explicit) or a fresh `q_Y` draw.
    pub fn receive(&self, y: &Sequence, out: &Outbound, rng: &mut SeededRng) -> Result<Sequence> {
        if self.constant.is_some() {
            return Ok(out.reproduction.clone());
        }
        let stage = self.stage(y.len())?;
        let rec = stage.channel.decode(y, &out.sent, rng)?;
        match (rec.decoded.outcome, &stage.perm) {
            (DecodeOutcome::Message(m), _) if m == out.sent.message => match out.index {
                Some(i) => Ok(stage.source.codeword(i).expect("explicit index").clone()),
                None => Ok(out.reproduction.clone()),
            },
            (DecodeOutcome::Message(m), Some((_, back))) if (m as usize) < back.len() => Ok(stage
                .source
                .codeword(back[m as usize])
                .expect("explicit index")
                .clone()),
            (_, Some(_)) => Ok(stage.source.codeword(0).expect("explicit codebook").clone()),
            (_, None) => sample_iid(&self.q_y, y.len(), rng),
        }
    }

    /// Channel-input view at blocklength `n`.
    pub fn at(&self, n: usize) -> Result<SeparationInput<'_>> {
        if !self.n_list.contains(&n) {
            return invalid(format!("blocklength {n} was not built"));
        }
        Ok(SeparationInput { codec: self, n })
    }
}

/// Per member and blocklength end-to-end excess distortion.
#[derive(Clone, Debug)]
pub struct ExcessCell {
    pub member: usize,
    pub member_label: String,
    pub n: usize,
    pub excess: Proportion,
    pub mean_distortion: MeanEstimate,
    /// Channel-input letter counts over all trials.
    pub input_counts: Vec<u64>,
}

impl ExcessCell {
    pub(crate) fn from_trials(
        member: usize,
        label: &str,
        n: usize,
        target: f64,
        per_trial: &[(f64, Vec<u64>)],
        k: usize,
    ) -> Result<Self> {
        let excess = per_trial
            .iter()
            .filter(|(v, _)| !within_distortion(*v, n, target))
            .count() as u64;
        let per_letter: Vec<f64> = per_trial.iter().map(|(v, _)| v / n as f64).collect();
        let mut input_counts = vec![0u64; k];
        for (_, c) in per_trial {
            for (a, b) in input_counts.iter_mut().zip(c) {
                *a += b;
            }
        }
        Ok(Self {
            member,
            member_label: label.to_string(),
            n,
            excess: Proportion::new(excess, per_trial.len() as u64)?,
            mean_distortion: MeanEstimate::from_samples(&per_letter, DEFAULT_LEVEL)?,
            input_counts,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SeparationReport {
    pub source_rate: f64,
    pub channel_rate: f64,
    pub cells: Vec<ExcessCell>,
}

impl SeparationReport {
    pub fn max_excess(&self, n: usize) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.n == n)
            .map(|c| c.excess.estimate)
            .reduce(f64::max)
    }
}

/// A separation codec over every member of a compound set.
#[derive(Debug)]
pub struct SeparationSystem {
    codec: SeparationCodec,
    set: CompoundSet,
    certificates: Vec<Certificate>,
}

/// Builds a separation system. Every member of `set` must hold a certificate
/// (matched by label) and all certificates must share one input law and rule.
pub fn separation_architecture(
    p_x: &Distribution,
    d: &DistortionSpec,
    target: f64,
    set: CompoundSet,
    certificates: &[Certificate],
    params: &SeparationParams,
) -> Result<SeparationSystem> {
    let mut certs = Vec::new();
    for m in set.members() {
        let c = certificates
            .iter()
            .find(|c| c.channel_id == m.label())
            .ok_or_else(|| {
                Error::Certification(format!("member {} carries no certificate", m.label()))
            })?;
        certs.push(c.clone());
    }
    let cert = &certs[0];
    for c in &certs[1..] {
        if c.p_in != cert.p_in || c.d != cert.d || c.target != cert.target {
            return invalid("certificates disagree on the certified input law or distortion");
        }
    }
    ensure_same(
        cert.p_in.alphabet(),
        set.input_alphabet(),
        "certificate input alphabet",
    )?;
    let codec = SeparationCodec::build(p_x, d, target, cert, params)?;
    Ok(SeparationSystem {
        codec,
        set,
        certificates: certs,
    })
}

impl SeparationSystem {
    pub fn codec(&self) -> &SeparationCodec {
        &self.codec
    }

    pub fn certificates(&self) -> &[Certificate] {
        &self.certificates
    }

    /// End-to-end reproduction of `x` through member `member`.
    pub fn transmit(&self, member: usize, x: &Sequence, rng: &mut SeededRng) -> Result<Sequence> {
        let ch = self
            .set
            .members()
            .get(member)
            .ok_or_else(|| Error::InvalidArgument("no such member".into()))?;
        let out = self.codec.send(x, rng)?;
        let y = ch.transmit(out.codeword(), rng)?;
        self.codec.receive(&y, &out, rng)
    }

    pub fn run(&self, trials: usize, rng: &SeededRng) -> Result<SeparationReport> {
        if trials == 0 {
            return invalid("trials must be >= 1");
        }
        let codec = &self.codec;
        let k = self.set.input_alphabet().size();
        let mut cells = Vec::new();
        for (m, ch) in self.set.members().iter().enumerate() {
            for &n in codec.blocklengths() {
                let per_trial = (0..trials)
                    .into_par_iter()
                    .map(|t| -> Result<(f64, Vec<u64>)> {
                        let mut r = rng.derive(&[n as u64, t as u64]);
                        let x = sample_iid(&codec.p_x, n, &mut r)?;
                        let out = codec.send(&x, &mut r)?;
                        let counts = out
                            .codeword()
                            .counts()
                            .into_iter()
                            .map(|c| c as u64)
                            .collect();
                        let mut ch_rng = r.derive(&[m as u64]);
                        let y = ch.transmit(out.codeword(), &mut ch_rng)?;
                        let x_hat = codec.receive(&y, &out, &mut ch_rng)?;
                        Ok((n_letter_distortion(&x, &x_hat, &codec.d)?, counts))
                    })
                    .collect::<Result<Vec<_>>>()?;
                cells.push(ExcessCell::from_trials(
                    m,
                    ch.label(),
                    n,
                    codec.target,
                    &per_trial,
                    k,
                )?);
            }
        }
        Ok(SeparationReport {
            source_rate: codec.source_rate,
            channel_rate: codec.channel_rate,
            cells,
        })
    }
}

fn message_mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// A separation codec seen as a channel-input generator at one blocklength.
pub struct SeparationInput<'a> {
    codec: &'a SeparationCodec,
    n: usize,
}

impl InputSource for SeparationInput<'_> {
    fn input_alphabet(&self) -> &Alphabet {
        self.codec.input_alphabet()
    }

    fn channel_input(&self, rng: &mut SeededRng) -> Result<Sequence> {
        let x = sample_iid(&self.codec.p_x, self.n, rng)?;
        Ok(self.codec.send(&x, rng)?.sent.codeword)
    }
}

#[derive(Clone, Debug)]
pub struct EquivalenceParams {
    /// Required gap `R_X(D) - R_{X'}(D')`; zero allows equality.
    pub margin: f64,
    /// Where the source and channel rates sit inside the gap, as fractions of it.
    pub source_fraction: f64,
    pub channel_fraction: f64,
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for EquivalenceParams {
    fn default() -> Self {
        Self {
            margin: 0.05,
            source_fraction: 0.45,
            channel_fraction: 0.7,
            eps: 0.1,
            n_list: vec![200, 500, 1000, 2000],
            trials: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub pipe_rate: f64,
    pub payload_rate: f64,
    pub separation: SeparationReport,
}

impl EquivalenceReport {
    /// Excess estimate at the largest tested blocklength.
    pub fn final_excess(&self) -> Option<f64> {
        self.separation
            .cells
            .iter()
            .max_by_key(|c| c.n)
            .map(|c| c.excess.estimate)
    }
}

/// Carries source `p_x2` within `target2` over `pipe`, a channel certified to
/// deliver `p_x` within `target`, through a reliable layer and a separation
/// stack.
#[allow(clippy::too_many_arguments)]
pub fn equivalence_demo(
    p_x: &Distribution,
    d: &DistortionSpec,
    target: f64,
    p_x2: &Distribution,
    d2: &DistortionSpec,
    target2: f64,
    pipe: Arc<dyn Channel>,
    certificate: &Certificate,
    params: &EquivalenceParams,
    rng: &SeededRng,
) -> Result<EquivalenceReport> {
    if certificate.p_in != *p_x || certificate.d != *d || certificate.target != target {
        return Err(Error::Certification(
            "certificate does not cover the pipe's source and distortion".into(),
        ));
    }
    if !(0.0..1.0).contains(&params.source_fraction)
        || !(params.source_fraction..1.0).contains(&params.channel_fraction)
    {
        return invalid("need 0 <= source_fraction <= channel_fraction < 1");
    }
    let pipe_rate = rate_distortion(p_x, d, target, DEFAULT_TOL)?.rate_bits;
    let payload_rate = rate_distortion(p_x2, d2, target2, DEFAULT_TOL)?.rate_bits;
    let ok = if params.margin > 0.0 {
        payload_rate < pipe_rate - params.margin
    } else {
        payload_rate <= pipe_rate
    };
    if !ok {
        return Err(Error::Precondition(format!(
            "payload R(D') = {payload_rate:.4} is not below pipe R(D) = {pipe_rate:.4} minus margin {}",
            params.margin
        )));
    }
    let gap = pipe_rate - payload_rate;
    let sep = SeparationParams {
        source_margin: gap * params.source_fraction,
        channel_rate: payload_rate + gap * params.channel_fraction,
        eps: params.eps,
        n_list: params.n_list.clone(),
        seed: params.seed,
    };
    let sys = separation_architecture(
        p_x2,
        d2,
        target2,
        CompoundSet::single(pipe),
        std::slice::from_ref(certificate),
        &sep,
    )?;
    Ok(EquivalenceReport {
        pipe_rate,
        payload_rate,
        separation: sys.run(params.trials, rng)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::ChannelModel;

    fn all_binary(n: usize) -> impl Iterator<Item = Sequence> {
        (0..1usize << n).map(move |v| {
            let bits: Vec<usize> = (0..n).map(|i| (v >> i) & 1).collect();
            Sequence::from_indices(Alphabet::binary(), &bits).unwrap()
        })
    }

    #[test]
    fn maps_invert() {
        let a = Alphabet::indexed(3).unwrap();
        for map in [
            SequenceMap::Scramble {
                alphabet: a.clone(),
                seed: 4,
                inverse: false,
            },
            SequenceMap::Permute {
                alphabet: a.clone(),
                seed: 4,
                inverse: false,
            },
            SequenceMap::symbols(a.clone(), a.clone(), vec![2, 0, 1]).unwrap(),
        ] {
            let inv = map.inverse().unwrap();
            let x = Sequence::from_indices(a.clone(), &[0, 1, 2, 2, 1, 0, 0]).unwrap();
            assert_eq!(inv.apply(&map.apply(&x).unwrap()).unwrap(), x);
        }
        assert!(SequenceMap::constant(a.clone(), a, 0)
            .unwrap()
            .inverse()
            .is_none());
    }

    #[test]
    fn identity_layer_is_transparent() {
        let bsc: Arc<dyn Channel> = Arc::new(ChannelModel::bsc(0.3).unwrap());
        let layered = compose(bsc.clone(), Layer::identity(Alphabet::binary())).unwrap();
        for x in all_binary(6) {
            let a = bsc.transmit(&x, &mut SeededRng::new(1, 2)).unwrap();
            let b = layered.transmit(&x, &mut SeededRng::new(1, 2)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tap_counts_inputs() {
        let tap = TappedChannel::new(Arc::new(ChannelModel::bsc(0.1).unwrap()));
        let x = Sequence::from_indices(Alphabet::binary(), &[0, 1, 1]).unwrap();
        tap.transmit(&x, &mut SeededRng::new(0, 0)).unwrap();
        tap.transmit(&x, &mut SeededRng::new(0, 1)).unwrap();
        assert_eq!(tap.counts(), vec![2, 4]);
    }

    #[test]
    fn missing_certificate_is_refused() {
        let set = CompoundSet::single(Arc::new(ChannelModel::bsc(0.02).unwrap()));
        let p = Distribution::uniform(Alphabet::binary());
        let d = DistortionSpec::hamming(Alphabet::binary());
        let params = SeparationParams {
            source_margin: 0.1,
            channel_rate: 0.5,
            eps: 0.1,
            n_list: vec![10],
            seed: 0,
        };
        let err = separation_architecture(&p, &d, 0.2, set, &[], &params).unwrap_err();
        assert!(matches!(err, Error::Certification(_)));
    }
}
