//! Blocklength-indexed channels, finite compound sets and multi-user media.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::prob::{
    ensure_same, n_letter_distortion, sample_iid, within_distortion, Alphabet, CdfSampler,
    DistortionSpec, Distribution, Kernel, SeededRng, Sequence,
};
use crate::source_code::SourceCodeChannel;
use crate::stats::Proportion;

/// A stochastic box mapping `x^n` to `y^n` of the same length.
pub trait Channel: Send + Sync + fmt::Debug {
    fn label(&self) -> &str;
    fn input_alphabet(&self) -> &Alphabet;
    fn output_alphabet(&self) -> &Alphabet;
    fn transmit(&self, x: &Sequence, rng: &mut SeededRng) -> Result<Sequence>;
}

#[derive(Clone, Debug)]
struct RowSamplers {
    kernel: Kernel,
    rows: Vec<CdfSampler>,
}

impl RowSamplers {
    fn new(kernel: Kernel) -> Self {
        let rows = (0..kernel.input().size())
            .map(|x| CdfSampler::new(kernel.row(x)))
            .collect();
        Self { kernel, rows }
    }

    fn draw(&self, x: u8, rng: &mut SeededRng) -> u8 {
        self.rows[x as usize].draw(rng)
    }
}

#[derive(Clone, Debug)]
pub enum ChannelKind {
    Dmc(Kernel),
    /// Letter `t` goes through `kernels[s]`, where `s` is the sum of the last
    /// `window` driver symbols (i.i.d. `driver`) modulo the number of kernels.
    SlidingWindowNoise {
        window: usize,
        driver: Distribution,
        kernels: Vec<Kernel>,
    },
    SourceCodeComposition(Arc<SourceCodeChannel>),
    /// Letter `t` goes through `kernels[(t / period) % kernels.len()]`.
    AdversarialSwitch {
        kernels: Vec<Kernel>,
        period: usize,
    },
}

#[derive(Clone, Debug)]
enum Realized {
    Dmc(RowSamplers),
    Sliding {
        window: usize,
        driver: CdfSampler,
        kernels: Vec<RowSamplers>,
    },
    SourceCode(Arc<SourceCodeChannel>),
    Switch {
        kernels: Vec<RowSamplers>,
        period: usize,
    },
}

#[derive(Clone, Debug)]
pub struct ChannelModel {
    label: String,
    input: Alphabet,
    output: Alphabet,
    kind: ChannelKind,
    realized: Realized,
}

fn shared_alphabets(kernels: &[Kernel]) -> Result<(Alphabet, Alphabet)> {
    let first = kernels
        .first()
        .ok_or_else(|| crate::error::Error::InvalidArgument("no kernels given".into()))?;
    for k in kernels {
        ensure_same(k.input(), first.input(), "kernel family (input)")?;
        ensure_same(k.output(), first.output(), "kernel family (output)")?;
    }
    Ok((first.input().clone(), first.output().clone()))
}

impl ChannelModel {
    pub fn new(label: impl Into<String>, kind: ChannelKind) -> Result<Self> {
        let (input, output, realized) = match &kind {
            ChannelKind::Dmc(k) => (
                k.input().clone(),
                k.output().clone(),
                Realized::Dmc(RowSamplers::new(k.clone())),
            ),
            ChannelKind::SlidingWindowNoise {
                window,
                driver,
                kernels,
            } => {
                if *window == 0 {
                    return invalid("sliding window must be >= 1");
                }
                let (i, o) = shared_alphabets(kernels)?;
                let realized = Realized::Sliding {
                    window: *window,
                    driver: CdfSampler::new(driver.probs()),
                    kernels: kernels.iter().cloned().map(RowSamplers::new).collect(),
                };
                (i, o, realized)
            }
            ChannelKind::SourceCodeComposition(sc) => (
                sc.input_alphabet().clone(),
                sc.output_alphabet().clone(),
                Realized::SourceCode(sc.clone()),
            ),
            ChannelKind::AdversarialSwitch { kernels, period } => {
                if *period == 0 {
                    return invalid("switching period must be >= 1");
                }
                let (i, o) = shared_alphabets(kernels)?;
                let realized = Realized::Switch {
                    kernels: kernels.iter().cloned().map(RowSamplers::new).collect(),
                    period: *period,
                };
                (i, o, realized)
            }
        };
        Ok(Self {
            label: label.into(),
            input,
            output,
            kind,
            realized,
        })
    }

    pub fn dmc(label: impl Into<String>, kernel: Kernel) -> Self {
        Self::new(label, ChannelKind::Dmc(kernel)).expect("a DMC is always valid")
    }

    pub fn bsc(p: f64) -> Result<Self> {
        Ok(Self::dmc(format!("bsc({p})"), Kernel::bsc(p)?))
    }

    pub fn kind(&self) -> &ChannelKind {
        &self.kind
    }
}

impl Channel for ChannelModel {
    fn label(&self) -> &str {
        &self.label
    }

    fn input_alphabet(&self) -> &Alphabet {
        &self.input
    }

    fn output_alphabet(&self) -> &Alphabet {
        &self.output
    }

    fn transmit(&self, x: &Sequence, rng: &mut SeededRng) -> Result<Sequence> {
        ensure_same(x.alphabet(), &self.input, "transmit")?;
        let xs = x.values();
        let values = match &self.realized {
            Realized::Dmc(k) => xs.iter().map(|&a| k.draw(a, rng)).collect(),
            Realized::Sliding {
                window,
                driver,
                kernels,
            } => {
                let mut recent = std::collections::VecDeque::with_capacity(*window);
                let mut sum = 0usize;
                xs.iter()
                    .map(|&a| {
                        let s = driver.draw(rng) as usize;
                        recent.push_back(s);
                        sum += s;
                        if recent.len() > *window {
                            sum -= recent.pop_front().expect("nonempty window");
                        }
                        kernels[sum % kernels.len()].draw(a, rng)
                    })
                    .collect()
            }
            Realized::SourceCode(sc) => return sc.reproduce(x),
            Realized::Switch { kernels, period } => xs
                .iter()
                .enumerate()
                .map(|(t, &a)| kernels[(t / period) % kernels.len()].draw(a, rng))
                .collect(),
        };
        Sequence::new(self.output.clone(), values)
    }
}

/// Kernel of a DMC member, if it is one.
pub fn dmc_kernel(ch: &ChannelModel) -> Option<&Kernel> {
    match &ch.realized {
        Realized::Dmc(k) => Some(&k.kernel),
        _ => None,
    }
}

/// Finite nonempty set of channels over common alphabets.
#[derive(Clone, Debug)]
pub struct CompoundSet {
    members: Vec<Arc<dyn Channel>>,
}

impl CompoundSet {
    pub fn new(members: Vec<Arc<dyn Channel>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| crate::error::Error::InvalidArgument("compound set is empty".into()))?;
        for m in &members {
            ensure_same(
                m.input_alphabet(),
                first.input_alphabet(),
                "compound set (input)",
            )?;
            ensure_same(
                m.output_alphabet(),
                first.output_alphabet(),
                "compound set (output)",
            )?;
        }
        Ok(Self { members })
    }

    pub fn single(ch: Arc<dyn Channel>) -> Self {
        Self { members: vec![ch] }
    }

    pub fn members(&self) -> &[Arc<dyn Channel>] {
        &self.members
    }

    pub fn input_alphabet(&self) -> &Alphabet {
        self.members[0].input_alphabet()
    }

    pub fn output_alphabet(&self) -> &Alphabet {
        self.members[0].output_alphabet()
    }
}

/// Monte Carlo evidence that a channel communicates i.i.d. `p_x` within `target`.
#[derive(Clone, Debug)]
pub struct DirectCommEvidence {
    pub channel_id: String,
    pub p_x: Distribution,
    pub d: DistortionSpec,
    pub target: f64,
    /// Excess-distortion estimate per tested blocklength.
    pub per_n: Vec<(usize, Proportion)>,
}

impl DirectCommEvidence {
    pub fn largest_n(&self) -> Option<&(usize, Proportion)> {
        self.per_n.iter().max_by_key(|(n, _)| *n)
    }
}

/// Excess-distortion estimate `Pr(d^n(X^n, Y^n)/n > D)` of feeding i.i.d.
/// `p_x` straight into each member.
pub fn verify_direct_communication(
    set: &CompoundSet,
    p_x: &Distribution,
    d: &DistortionSpec,
    target: f64,
    n_list: &[usize],
    trials: usize,
    rng: &SeededRng,
) -> Result<Vec<DirectCommEvidence>> {
    if trials < 100 {
        return invalid("direct-communication check needs at least 100 trials");
    }
    ensure_same(
        p_x.alphabet(),
        set.input_alphabet(),
        "verify_direct_communication (input)",
    )?;
    ensure_same(
        d.input(),
        set.input_alphabet(),
        "verify_direct_communication (distortion input)",
    )?;
    ensure_same(
        d.output(),
        set.output_alphabet(),
        "verify_direct_communication (distortion output)",
    )?;
    set.members()
        .iter()
        .enumerate()
        .map(|(m, ch)| {
            let per_n = n_list
                .iter()
                .map(|&n| {
                    let excess = (0..trials)
                        .into_par_iter()
                        .map(|t| -> Result<u64> {
                            let mut r = rng.derive(&[m as u64, n as u64, t as u64]);
                            let x = sample_iid(p_x, n, &mut r)?;
                            let y = ch.transmit(&x, &mut r)?;
                            let total = n_letter_distortion(&x, &y, d)?;
                            Ok(u64::from(!within_distortion(total, n, target)))
                        })
                        .collect::<Result<Vec<u64>>>()?
                        .into_iter()
                        .sum();
                    Ok((n, Proportion::new(excess, trials as u64)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DirectCommEvidence {
                channel_id: ch.label().to_string(),
                p_x: p_x.clone(),
                d: d.clone(),
                target,
                per_n,
            })
        })
        .collect()
}

/// Joint transition law over all ordered user pairs.
pub trait Medium: Send + Sync + fmt::Debug {
    fn num_users(&self) -> usize;
    fn pairs(&self) -> &[(usize, usize)];
    fn input_alphabet(&self, pair: usize) -> &Alphabet;
    fn output_alphabet(&self, pair: usize) -> &Alphabet;
    /// One input sequence per pair, in `pairs()` order.
    fn transmit(&self, inputs: &[Sequence], rng: &mut SeededRng) -> Result<Vec<Sequence>>;
}

pub const MAX_USERS: usize = 6;
pub const MAX_PAIRS: usize = 12;

fn check_pairs(users: usize, pairs: &[(usize, usize)]) -> Result<()> {
    if users == 0 || users > MAX_USERS {
        return invalid(format!("number of users must be in 1..={MAX_USERS}"));
    }
    if pairs.is_empty() || pairs.len() > MAX_PAIRS {
        return invalid(format!("number of pairs must be in 1..={MAX_PAIRS}"));
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            return invalid(format!("pair {k} connects user {i} to itself"));
        }
        if i >= users || j >= users {
            return invalid(format!("pair {k} names a user outside 0..{users}"));
        }
        if pairs[..k].contains(&(i, j)) {
            return invalid(format!("pair ({i}, {j}) listed twice"));
        }
    }
    Ok(())
}

fn check_inputs(m: &dyn Medium, inputs: &[Sequence]) -> Result<usize> {
    if inputs.len() != m.pairs().len() {
        return invalid(format!(
            "medium expects {} pair inputs, got {}",
            m.pairs().len(),
            inputs.len()
        ));
    }
    let n = inputs[0].len();
    for (k, x) in inputs.iter().enumerate() {
        ensure_same(x.alphabet(), m.input_alphabet(k), "medium input")?;
        if x.len() != n {
            return invalid("all pair inputs must share one blocklength");
        }
    }
    Ok(n)
}

/// Independent channel per pair.
#[derive(Clone, Debug)]
pub struct ParallelMedium {
    users: usize,
    pairs: Vec<(usize, usize)>,
    channels: Vec<Arc<dyn Channel>>,
}

impl ParallelMedium {
    pub fn new(
        users: usize,
        pairs: Vec<(usize, usize)>,
        channels: Vec<Arc<dyn Channel>>,
    ) -> Result<Self> {
        check_pairs(users, &pairs)?;
        if channels.len() != pairs.len() {
            return invalid("one channel per pair required");
        }
        Ok(Self {
            users,
            pairs,
            channels,
        })
    }
}

impl Medium for ParallelMedium {
    fn num_users(&self) -> usize {
        self.users
    }

    fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn input_alphabet(&self, pair: usize) -> &Alphabet {
        self.channels[pair].input_alphabet()
    }

    fn output_alphabet(&self, pair: usize) -> &Alphabet {
        self.channels[pair].output_alphabet()
    }

    fn transmit(&self, inputs: &[Sequence], rng: &mut SeededRng) -> Result<Vec<Sequence>> {
        check_inputs(self, inputs)?;
        self.channels
            .iter()
            .zip(inputs)
            .enumerate()
            .map(|(k, (ch, x))| ch.transmit(x, &mut rng.derive(&[k as u64])))
            .collect()
    }
}

/// Additive noise modulo the alphabet size: every letter position draws one
/// common noise symbol, added to all pairs, plus an independent private one
/// per pair. Each noise symbol is zero with probability `1 - p` and uniform
/// over the nonzero symbols otherwise.
#[derive(Clone, Debug)]
pub struct SharedNoiseMedium {
    users: usize,
    pairs: Vec<(usize, usize)>,
    alphabet: Alphabet,
    common: f64,
    private: f64,
}

impl SharedNoiseMedium {
    pub fn new(
        users: usize,
        pairs: Vec<(usize, usize)>,
        alphabet: Alphabet,
        common: f64,
        private: f64,
    ) -> Result<Self> {
        check_pairs(users, &pairs)?;
        if alphabet.size() < 2 {
            return invalid("shared-noise medium needs at least two symbols");
        }
        for p in [common, private] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("noise probability {p} outside [0, 1]"));
            }
        }
        Ok(Self {
            users,
            pairs,
            alphabet,
            common,
            private,
        })
    }

    /// Per-pair probability that the output letter differs from the input.
    pub fn effective_flip(&self) -> f64 {
        // The two noises cancel when the private symbol inverts the common one.
        let k = self.alphabet.size() as f64;
        self.common + self.private - self.common * self.private * (1.0 + 1.0 / (k - 1.0))
    }

    fn noise(&self, p: f64, rng: &mut SeededRng) -> usize {
        if rng.uniform() >= p {
            0
        } else {
            1 + (rng.uniform() * (self.alphabet.size() - 1) as f64) as usize
        }
    }
}

impl Medium for SharedNoiseMedium {
    fn num_users(&self) -> usize {
        self.users
    }

    fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn input_alphabet(&self, _pair: usize) -> &Alphabet {
        &self.alphabet
    }

    fn output_alphabet(&self, _pair: usize) -> &Alphabet {
        &self.alphabet
    }

    fn transmit(&self, inputs: &[Sequence], rng: &mut SeededRng) -> Result<Vec<Sequence>> {
        let n = check_inputs(self, inputs)?;
        let k = self.alphabet.size();
        let mut common_rng = rng.derive(&[u64::MAX]);
        let shared: Vec<usize> = (0..n)
            .map(|_| self.noise(self.common, &mut common_rng).min(k - 1))
            .collect();
        inputs
            .iter()
            .enumerate()
            .map(|(p, x)| {
                let mut r = rng.derive(&[p as u64]);
                let values = x
                    .values()
                    .iter()
                    .zip(&shared)
                    .map(|(&a, &s)| {
                        ((a as usize + s + self.noise(self.private, &mut r).min(k - 1)) % k) as u8
                    })
                    .collect();
                Sequence::new(self.alphabet.clone(), values)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(v: &[usize]) -> Sequence {
        Sequence::from_indices(Alphabet::binary(), v).unwrap()
    }

    #[test]
    fn degenerate_bsc() {
        let x = bin(&[0, 1, 1, 0, 1]);
        let mut rng = SeededRng::new(1, 0);
        assert_eq!(
            ChannelModel::bsc(0.0)
                .unwrap()
                .transmit(&x, &mut rng)
                .unwrap(),
            x
        );
        let flipped = ChannelModel::bsc(1.0)
            .unwrap()
            .transmit(&x, &mut rng)
            .unwrap();
        assert_eq!(flipped, bin(&[1, 0, 0, 1, 0]));
    }

    #[test]
    fn identity_dmc_and_length() {
        let ch = ChannelModel::dmc("id", Kernel::identity(Alphabet::indexed(3).unwrap()));
        let x = Sequence::from_indices(Alphabet::indexed(3).unwrap(), &[2, 0, 1, 1]).unwrap();
        assert_eq!(ch.transmit(&x, &mut SeededRng::new(0, 0)).unwrap(), x);
        assert!(ch.transmit(&bin(&[0]), &mut SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn switch_uses_kernels_periodically() {
        let kernels = vec![Kernel::bsc(0.0).unwrap(), Kernel::bsc(1.0).unwrap()];
        let ch =
            ChannelModel::new("sw", ChannelKind::AdversarialSwitch { kernels, period: 2 }).unwrap();
        let y = ch
            .transmit(&bin(&[0; 6]), &mut SeededRng::new(0, 0))
            .unwrap();
        assert_eq!(y, bin(&[0, 0, 1, 1, 0, 0]));
    }

    #[test]
    fn sliding_window_with_one_kernel_is_that_kernel() {
        let kernels = vec![Kernel::bsc(0.0).unwrap()];
        let driver = Distribution::bernoulli(0.5).unwrap();
        let ch = ChannelModel::new(
            "sl",
            ChannelKind::SlidingWindowNoise {
                window: 3,
                driver,
                kernels,
            },
        )
        .unwrap();
        let x = bin(&[1, 0, 1, 1, 0, 0, 1]);
        assert_eq!(ch.transmit(&x, &mut SeededRng::new(4, 0)).unwrap(), x);
    }

    #[test]
    fn media_validate_pairs() {
        let a = Alphabet::binary();
        assert!(SharedNoiseMedium::new(2, vec![(0, 0)], a.clone(), 0.1, 0.0).is_err());
        assert!(SharedNoiseMedium::new(2, vec![(0, 1), (0, 1)], a.clone(), 0.1, 0.0).is_err());
        assert!(SharedNoiseMedium::new(7, vec![(0, 1)], a.clone(), 0.1, 0.0).is_err());
        let m = SharedNoiseMedium::new(2, vec![(0, 1), (1, 0)], a, 0.0, 0.0).unwrap();
        let xs = vec![bin(&[0, 1, 1]), bin(&[1, 1, 0])];
        assert_eq!(m.transmit(&xs, &mut SeededRng::new(2, 0)).unwrap(), xs);
        assert!(m.transmit(&xs[..1], &mut SeededRng::new(2, 0)).is_err());
    }

    #[test]
    fn effective_flip_binary() {
        let m = SharedNoiseMedium::new(2, vec![(0, 1)], Alphabet::binary(), 0.1, 0.2).unwrap();
        assert!((m.effective_flip() - (0.1 * 0.8 + 0.2 * 0.9)).abs() < 1e-15);
    }
}
