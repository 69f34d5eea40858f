//! Random-codebook lossy source codes.
//!
//! Codebooks small enough to hold (at most 2^26 letters) are built
//! explicitly and searched exhaustively. Larger ones are realized in law: for
//! an input `x^n`, the minimum block distortion over `2^{floor(nR)}` i.i.d.
//! `q_Y` codewords and the minimizing codeword given that distortion are
//! drawn exactly from their type-class laws. The draw is keyed by the seed and
//! by `x^n` itself, so the realized code is a deterministic map.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::prob::{
    ensure_same, message_bits, n_letter_distortion, sample_iid, sequence_key, stream_key,
    within_distortion, Alphabet, DistortionSpec, Distribution, SeededRng, Sequence,
};
use crate::rd::{rate_distortion, DEFAULT_TOL};
use crate::stats::{MeanEstimate, Proportion, DEFAULT_LEVEL};
use crate::typedp::{CostLaw, IntegerCosts};

/// Upper limit on `codewords * blocklength` for explicit codebooks.
pub const CODEBOOK_LETTER_BUDGET: u64 = 1 << 26;

const CODEBOOK_TAG: u64 = 0x5C0D_EB00;
const ENSEMBLE_TAG: u64 = 0x5C0D_E5E1;

/// Simulations switch to the ensemble realization above this many letters;
/// every trial scans the whole codebook.
pub const SIMULATION_LETTER_BUDGET: u64 = 1 << 21;

pub(crate) fn fits_budget(bits: usize, n: usize) -> bool {
    within(bits, n, CODEBOOK_LETTER_BUDGET)
}

pub(crate) fn simulate_explicitly(bits: usize, n: usize) -> bool {
    within(bits, n, SIMULATION_LETTER_BUDGET)
}

fn within(bits: usize, n: usize, budget: u64) -> bool {
    bits < 40 && (1u64 << bits).saturating_mul(n as u64) <= budget
}

#[derive(Clone, Debug)]
pub struct SourceCodebook {
    rate_bits: f64,
    n: usize,
    codewords: Vec<Sequence>,
    q_y: Distribution,
    seed: u64,
}

impl SourceCodebook {
    pub fn rate_bits(&self) -> f64 {
        self.rate_bits
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn codewords(&self) -> &[Sequence] {
        &self.codewords
    }

    pub fn q_y(&self) -> &Distribution {
        &self.q_y
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// `2^{floor(nR)}` codewords drawn i.i.d. from `q_y`, reproducible from `seed`.
pub fn build_codebook(
    q_y: &Distribution,
    rate: f64,
    n: usize,
    seed: u64,
) -> Result<SourceCodebook> {
    if rate <= 0.0 {
        return invalid("source code rate must be > 0");
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
        .map(|_| sample_iid(q_y, n, &mut rng))
        .collect::<Result<_>>()?;
    Ok(SourceCodebook {
        rate_bits: rate,
        n,
        codewords,
        q_y: q_y.clone(),
        seed,
    })
}

/// Index of the codeword closest to `x`; ties go to the lowest index.
pub fn encode_min_distortion(
    x: &Sequence,
    cb: &SourceCodebook,
    d: &DistortionSpec,
) -> Result<usize> {
    if x.len() != cb.n {
        return invalid(format!(
            "input length {} does not match blocklength {}",
            x.len(),
            cb.n
        ));
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in cb.codewords.iter().enumerate() {
        let v = n_letter_distortion(x, c, d)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    Ok(best.0)
}

/// Large codebook realized through the exact law of its minimum-distortion output.
#[derive(Debug)]
pub struct EnsembleSourceCode {
    n: usize,
    bits: usize,
    q_y: Distribution,
    costs: IntegerCosts,
    seed: u64,
    laws: Mutex<HashMap<Vec<usize>, Arc<CostLaw>>>,
}

impl EnsembleSourceCode {
    fn law(&self, counts: &[usize]) -> Result<Arc<CostLaw>> {
        if let Some(l) = self.laws.lock().expect("cache lock").get(counts) {
            return Ok(l.clone());
        }
        let law = Arc::new(CostLaw::new(counts, self.q_y.probs(), &self.costs)?);
        self.laws
            .lock()
            .expect("cache lock")
            .insert(counts.to_vec(), law.clone());
        Ok(law)
    }

    fn reproduce(&self, x: &Sequence) -> Result<Sequence> {
        let law = self.law(&x.counts())?;
        let mut rng = SeededRng::new(
            self.seed,
            stream_key(&[ENSEMBLE_TAG, self.n as u64, sequence_key(x)]),
        );
        let cost = law.sample_min_cost(self.bits as f64, &mut rng);
        let values = law
            .sample_given_cost(x.values(), cost, &mut rng)
            .ok_or_else(|| Error::InvalidArgument("sampled cost has zero probability".into()))?;
        Sequence::new(self.q_y.alphabet().clone(), values)
    }
}

/// A blocklength-`n` source code: explicit codebook or its ensemble realization.
#[derive(Debug)]
pub enum SourceCode {
    Explicit {
        codebook: SourceCodebook,
        d: DistortionSpec,
    },
    Ensemble(EnsembleSourceCode),
}

/// Encoder output: the codeword index when the codebook is explicit, and the reproduction.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub index: Option<usize>,
    pub reproduction: Sequence,
}

impl SourceCode {
    /// Explicit when the codebook fits [`SIMULATION_LETTER_BUDGET`], ensemble otherwise.
    pub fn new(
        q_y: &Distribution,
        d: &DistortionSpec,
        rate: f64,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        ensure_same(
            q_y.alphabet(),
            d.output(),
            "source code (codeword alphabet)",
        )?;
        let bits = message_bits(rate, n)?;
        if simulate_explicitly(bits, n) {
            return Ok(Self::Explicit {
                codebook: build_codebook(q_y, rate, n, seed)?,
                d: d.clone(),
            });
        }
        Self::ensemble(q_y, d, rate, n, seed)
    }

    pub fn ensemble(
        q_y: &Distribution,
        d: &DistortionSpec,
        rate: f64,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        ensure_same(
            q_y.alphabet(),
            d.output(),
            "source code (codeword alphabet)",
        )?;
        if rate <= 0.0 {
            return invalid("source code rate must be > 0");
        }
        Ok(Self::Ensemble(EnsembleSourceCode {
            n,
            bits: message_bits(rate, n)?,
            q_y: q_y.clone(),
            costs: IntegerCosts::from_spec(d)?,
            seed,
            laws: Mutex::new(HashMap::new()),
        }))
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Explicit { codebook, .. } => codebook.n,
            Self::Ensemble(e) => e.n,
        }
    }

    pub fn bits(&self) -> usize {
        match self {
            Self::Explicit { codebook, .. } => {
                message_bits(codebook.rate_bits, codebook.n).expect("validated rate")
            }
            Self::Ensemble(e) => e.bits,
        }
    }

    pub fn q_y(&self) -> &Distribution {
        match self {
            Self::Explicit { codebook, .. } => &codebook.q_y,
            Self::Ensemble(e) => &e.q_y,
        }
    }

    pub fn encode(&self, x: &Sequence) -> Result<Encoded> {
        if x.len() != self.n() {
            return invalid(format!(
                "input length {} does not match blocklength {}",
                x.len(),
                self.n()
            ));
        }
        match self {
            Self::Explicit { codebook, d } => {
                let i = encode_min_distortion(x, codebook, d)?;
                Ok(Encoded {
                    index: Some(i),
                    reproduction: codebook.codewords[i].clone(),
                })
            }
            Self::Ensemble(e) => Ok(Encoded {
                index: None,
                reproduction: e.reproduce(x)?,
            }),
        }
    }

    /// Codeword `index` of an explicit codebook.
    pub fn codeword(&self, index: usize) -> Option<&Sequence> {
        match self {
            Self::Explicit { codebook, .. } => codebook.codewords.get(index),
            Self::Ensemble(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DistortionReport {
    pub excess: Proportion,
    pub mean_distortion: MeanEstimate,
    pub trials: usize,
    pub target: f64,
}

/// Monte Carlo excess-distortion probability and mean per-letter distortion
/// of `code` on i.i.d. `p_x` inputs.
pub fn measure_distortion(
    p_x: &Distribution,
    code: &SourceCode,
    d: &DistortionSpec,
    target: f64,
    trials: usize,
    rng: &SeededRng,
) -> Result<DistortionReport> {
    if trials < 100 {
        return invalid("distortion measurement needs at least 100 trials");
    }
    let n = code.n();
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut r = rng.derive(&[t as u64]);
            let x = sample_iid(p_x, n, &mut r)?;
            let y = code.encode(&x)?.reproduction;
            n_letter_distortion(&x, &y, d)
        })
        .collect::<Result<Vec<f64>>>()?;
    let excess = per_trial
        .iter()
        .filter(|&&v| !within_distortion(v, n, target))
        .count() as u64;
    let per_letter: Vec<f64> = per_trial.iter().map(|v| v / n as f64).collect();
    Ok(DistortionReport {
        excess: Proportion::new(excess, trials as u64)?,
        mean_distortion: MeanEstimate::from_samples(&per_letter, DEFAULT_LEVEL)?,
        trials,
        target,
    })
}

/// Output marginal of the rate-distortion optimal test channel.
pub fn rd_output_marginal(
    p_x: &Distribution,
    d: &DistortionSpec,
    target: f64,
) -> Result<Distribution> {
    Ok(rate_distortion(p_x, d, target, DEFAULT_TOL)?.output_marginal)
}

/// The deterministic map `x^n -> decoder(encoder(x^n))` of a rate
/// `R(D) + margin` source code, one code per blocklength of the family.
#[derive(Debug)]
pub struct SourceCodeChannel {
    input: Alphabet,
    output: Alphabet,
    rate: f64,
    target: f64,
    codes: BTreeMap<usize, SourceCode>,
}

impl SourceCodeChannel {
    pub fn input_alphabet(&self) -> &Alphabet {
        &self.input
    }

    pub fn output_alphabet(&self) -> &Alphabet {
        &self.output
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn code(&self, n: usize) -> Option<&SourceCode> {
        self.codes.get(&n)
    }

    pub fn reproduce(&self, x: &Sequence) -> Result<Sequence> {
        ensure_same(x.alphabet(), &self.input, "source-code channel input")?;
        let code = self.codes.get(&x.len()).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "blocklength {} not in the channel's family",
                x.len()
            ))
        })?;
        Ok(code.encode(x)?.reproduction)
    }
}

/// Source-code composition channel at rate `R(D) + rate_margin` with
/// codewords drawn from the optimal output marginal.
pub fn make_source_code_channel(
    p_x: &Distribution,
    d: &DistortionSpec,
    target: f64,
    rate_margin: f64,
    n_family: &[usize],
    seed: u64,
) -> Result<crate::channels::ChannelModel> {
    if rate_margin <= 0.0 {
        return invalid("rate margin must be > 0");
    }
    if n_family.is_empty() {
        return invalid("blocklength family is empty");
    }
    let point = rate_distortion(p_x, d, target, DEFAULT_TOL)?;
    let rate = point.rate_bits + rate_margin;
    let codes = n_family
        .iter()
        .map(|&n| {
            Ok((
                n,
                SourceCode::new(&point.output_marginal, d, rate, n, seed)?,
            ))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let sc = SourceCodeChannel {
        input: p_x.alphabet().clone(),
        output: d.output().clone(),
        rate,
        target,
        codes,
    };
    crate::channels::ChannelModel::new(
        format!("source-code(D={target}, R={rate:.4})"),
        crate::channels::ChannelKind::SourceCodeComposition(Arc::new(sc)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> Distribution {
        Distribution::uniform(Alphabet::binary())
    }

    #[test]
    fn codebook_sizes() {
        assert_eq!(
            build_codebook(&uniform(), 0.1, 5, 1)
                .unwrap()
                .codewords()
                .len(),
            1
        );
        assert_eq!(
            build_codebook(&uniform(), 0.5, 4, 1)
                .unwrap()
                .codewords()
                .len(),
            4
        );
        assert!(matches!(
            build_codebook(&uniform(), 0.5, 200, 1),
            Err(Error::Resource(_))
        ));
        assert!(build_codebook(&uniform(), 0.0, 4, 1).is_err());
    }

    #[test]
    fn codebook_is_reproducible() {
        let a = build_codebook(&uniform(), 0.5, 8, 9).unwrap();
        let b = build_codebook(&uniform(), 0.5, 8, 9).unwrap();
        assert_eq!(a.codewords(), b.codewords());
        let c = build_codebook(&uniform(), 0.5, 8, 10).unwrap();
        assert_ne!(a.codewords(), c.codewords());
    }

    #[test]
    fn ensemble_reproduction_is_deterministic_in_x() {
        let d = DistortionSpec::hamming(Alphabet::binary());
        let code = SourceCode::ensemble(&uniform(), &d, 0.6, 300, 3).unwrap();
        let x = sample_iid(&uniform(), 300, &mut SeededRng::new(1, 1)).unwrap();
        let a = code.encode(&x).unwrap().reproduction;
        let b = code.encode(&x).unwrap().reproduction;
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
    }
}
