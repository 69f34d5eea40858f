//! Finite-alphabet probability machinery.
//!
//! Distributions, empirical types, L1 typical sets, divergences, additive
//! distortion and reproducible sampling. Information quantities are in bits.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Ordered set of distinct symbol names. Index `i` is the i-th symbol.
///
/// Symbols are stored as `u8` indices inside sequences, so an alphabet holds
/// at most 256 symbols.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Alphabet {
    symbols: Arc<[String]>,
}

impl Alphabet {
    pub const MAX_SIZE: usize = 256;

    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return invalid("alphabet must contain at least one symbol");
        }
        if symbols.len() > Self::MAX_SIZE {
            return invalid(format!("alphabet larger than {} symbols", Self::MAX_SIZE));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return invalid(format!("duplicate symbol {s:?} in alphabet"));
            }
        }
        Ok(Self {
            symbols: symbols.into(),
        })
    }

    /// Alphabet `{"0", "1", ..., "size-1"}`.
    pub fn indexed(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| i.to_string()))
    }

    pub fn binary() -> Self {
        Self::indexed(2).expect("binary alphabet")
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.symbols.iter()).finish()
    }
}

fn check_mass<T: Real>(probs: &[T], what: &str) -> Result<()> {
    let mut total = T::zero();
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < T::zero() {
            return invalid(format!(
                "{what}: entry {i} is {p}, expected a finite value >= 0"
            ));
        }
        total += p;
    }
    if (total - T::one()).abs() > T::normalization_tolerance() {
        return invalid(format!("{what}: total mass {total} is not 1"));
    }
    Ok(())
}

/// Probability mass function over a finite alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution<T = f64> {
    alphabet: Alphabet,
    probs: Vec<T>,
}

impl<T: Real> Distribution<T> {
    /// Rejects vectors whose mass is off by more than the normalization
    /// tolerance instead of renormalizing them.
    pub fn new(alphabet: Alphabet, probs: Vec<T>) -> Result<Self> {
        if probs.len() != alphabet.size() {
            return invalid(format!(
                "distribution has {} entries for an alphabet of size {}",
                probs.len(),
                alphabet.size()
            ));
        }
        check_mass(&probs, "distribution")?;
        Ok(Self { alphabet, probs })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let k = T::from_usize_lossy(alphabet.size());
        let probs = vec![T::one() / k; alphabet.size()];
        Self { alphabet, probs }
    }

    pub fn point_mass(alphabet: Alphabet, index: usize) -> Result<Self> {
        if index >= alphabet.size() {
            return invalid(format!("point mass at {index} outside alphabet"));
        }
        let mut probs = vec![T::zero(); alphabet.size()];
        probs[index] = T::one();
        Ok(Self { alphabet, probs })
    }

    /// Bernoulli(p) over the binary alphabet: `probs = (1 - p, p)`.
    pub fn bernoulli(p: T) -> Result<Self> {
        Self::new(Alphabet::binary(), vec![T::one() - p, p])
    }

    /// Normalized counts. Fails if every count is zero.
    pub fn from_counts(alphabet: Alphabet, counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return invalid("cannot normalize an all-zero count vector");
        }
        let n = T::from_usize_lossy(total);
        let probs = counts.iter().map(|&c| T::from_usize_lossy(c) / n).collect();
        Self::new(alphabet, probs)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> T {
        self.probs[index]
    }

    pub fn entropy(&self) -> T {
        -self
            .probs
            .iter()
            .map(|&p| {
                if p > T::zero() {
                    p * p.log2()
                } else {
                    T::zero()
                }
            })
            .sum::<T>()
    }

    pub fn l1_distance(&self, other: &Self) -> Result<T> {
        ensure_same(&self.alphabet, &other.alphabet, "l1_distance")?;
        Ok(l1(&self.probs, &other.probs))
    }

    pub fn to_f64(&self) -> Distribution<f64> {
        Distribution {
            alphabet: self.alphabet.clone(),
            probs: self.probs.iter().map(|p| p.as_f64()).collect(),
        }
    }
}

pub(crate) fn l1<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

/// Inclusive `l1 <= eps`, with slack for rounding in the L1 sum.
pub fn within_l1<T: Real>(l1: T, eps: T) -> bool {
    l1 <= eps + T::normalization_tolerance()
}

/// L1 distance between the type of a count vector and `p`, computed exactly
/// the way [`is_typical`] computes it so that both agree at the boundary.
pub fn type_l1_from_counts<T: Real>(counts: &[usize], n: usize, p: &[T]) -> T {
    let n = T::from_usize_lossy(n);
    counts
        .iter()
        .zip(p)
        .map(|(&c, &px)| (T::from_usize_lossy(c) / n - px).abs())
        .sum()
}

pub(crate) fn ensure_same(a: &Alphabet, b: &Alphabet, op: &str) -> Result<()> {
    if a != b {
        return invalid(format!("{op}: alphabet mismatch ({a:?} vs {b:?})"));
    }
    Ok(())
}

/// Probability mass function over `rows x cols`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution<T = f64> {
    rows: Alphabet,
    cols: Alphabet,
    probs: Vec<T>,
}

impl<T: Real> JointDistribution<T> {
    pub fn new(rows: Alphabet, cols: Alphabet, probs: Vec<T>) -> Result<Self> {
        if probs.len() != rows.size() * cols.size() {
            return invalid(format!(
                "joint distribution needs {} entries, got {}",
                rows.size() * cols.size(),
                probs.len()
            ));
        }
        check_mass(&probs, "joint distribution")?;
        Ok(Self { rows, cols, probs })
    }

    /// Rows given as nested vectors, e.g. `[[0.4, 0.1], [0.1, 0.4]]`.
    pub fn from_rows(rows: Alphabet, cols: Alphabet, matrix: &[Vec<T>]) -> Result<Self> {
        if matrix.len() != rows.size() || matrix.iter().any(|r| r.len() != cols.size()) {
            return invalid("joint distribution matrix shape does not match alphabets");
        }
        Self::new(rows, cols, matrix.concat())
    }

    pub fn product(p: &Distribution<T>, q: &Distribution<T>) -> Self {
        let probs = p
            .probs
            .iter()
            .flat_map(|&a| q.probs.iter().map(move |&b| a * b))
            .collect();
        Self {
            rows: p.alphabet.clone(),
            cols: q.alphabet.clone(),
            probs,
        }
    }

    /// `p(x) W(y|x)` from an input distribution and a row-stochastic kernel.
    pub fn from_conditional(p: &Distribution<T>, kernel: &Kernel<T>) -> Result<Self> {
        ensure_same(&p.alphabet, &kernel.input, "from_conditional")?;
        let cols = kernel.output.size();
        let probs = (0..p.alphabet.size())
            .flat_map(|x| (0..cols).map(move |y| (x, y)))
            .map(|(x, y)| p.probs[x] * kernel.prob(x, y))
            .collect();
        Self::new(p.alphabet.clone(), kernel.output.clone(), probs)
    }

    pub(crate) fn from_raw(rows: Alphabet, cols: Alphabet, probs: Vec<T>) -> Self {
        debug_assert_eq!(probs.len(), rows.size() * cols.size());
        Self { rows, cols, probs }
    }

    pub fn row_alphabet(&self) -> &Alphabet {
        &self.rows
    }

    pub fn col_alphabet(&self) -> &Alphabet {
        &self.cols
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.probs[row * self.cols.size() + col]
    }

    pub fn row_marginal(&self) -> Distribution<T> {
        let c = self.cols.size();
        let probs = self
            .probs
            .chunks(c)
            .map(|r| r.iter().copied().sum())
            .collect();
        Distribution {
            alphabet: self.rows.clone(),
            probs,
        }
    }

    pub fn col_marginal(&self) -> Distribution<T> {
        let c = self.cols.size();
        let mut probs = vec![T::zero(); c];
        for row in self.probs.chunks(c) {
            for (acc, &v) in probs.iter_mut().zip(row) {
                *acc += v;
            }
        }
        Distribution {
            alphabet: self.cols.clone(),
            probs,
        }
    }

    /// Expected single-letter distortion `sum q(x,y) d(x,y)`.
    pub fn expected_distortion(&self, d: &DistortionSpec<T>) -> Result<T> {
        ensure_same(&self.rows, &d.input, "expected_distortion")?;
        ensure_same(&self.cols, &d.output, "expected_distortion")?;
        Ok(self.probs.iter().zip(&d.matrix).map(|(&q, &c)| q * c).sum())
    }
}

/// Row-stochastic matrix `W(y|x)`; the single-letter law of a memoryless
/// channel or a test channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<T = f64> {
    input: Alphabet,
    output: Alphabet,
    probs: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(input: Alphabet, output: Alphabet, rows: &[Vec<T>]) -> Result<Self> {
        if rows.len() != input.size() {
            return invalid(format!(
                "kernel has {} rows, input alphabet {}",
                rows.len(),
                input.size()
            ));
        }
        for (x, r) in rows.iter().enumerate() {
            if r.len() != output.size() {
                return invalid(format!("kernel row {x} has {} entries", r.len()));
            }
            check_mass(r, &format!("kernel row {x}"))?;
        }
        Ok(Self {
            input,
            output,
            probs: rows.concat(),
        })
    }

    pub fn identity(alphabet: Alphabet) -> Self {
        let k = alphabet.size();
        let probs = (0..k * k)
            .map(|i| if i / k == i % k { T::one() } else { T::zero() })
            .collect();
        Self {
            input: alphabet.clone(),
            output: alphabet,
            probs,
        }
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: T) -> Result<Self> {
        let b = Alphabet::binary();
        Self::new(
            b.clone(),
            b,
            &[vec![T::one() - p, p], vec![p, T::one() - p]],
        )
    }

    pub(crate) fn from_raw(input: Alphabet, output: Alphabet, probs: Vec<T>) -> Self {
        Self {
            input,
            output,
            probs,
        }
    }

    pub fn input(&self) -> &Alphabet {
        &self.input
    }

    pub fn output(&self) -> &Alphabet {
        &self.output
    }

    pub fn prob(&self, x: usize, y: usize) -> T {
        self.probs[x * self.output.size() + y]
    }

    pub fn row(&self, x: usize) -> &[T] {
        let c = self.output.size();
        &self.probs[x * c..(x + 1) * c]
    }

    pub fn to_f64(&self) -> Kernel<f64> {
        Kernel {
            input: self.input.clone(),
            output: self.output.clone(),
            probs: self.probs.iter().map(|p| p.as_f64()).collect(),
        }
    }
}

/// Finite sequence of symbol indices over an alphabet.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Sequence {
    alphabet: Alphabet,
    values: Vec<u8>,
}

impl Sequence {
    pub fn new(alphabet: Alphabet, values: Vec<u8>) -> Result<Self> {
        if values.is_empty() {
            return invalid("sequence must be nonempty");
        }
        if let Some(&v) = values.iter().find(|&&v| v as usize >= alphabet.size()) {
            return invalid(format!(
                "symbol index {v} outside alphabet of size {}",
                alphabet.size()
            ));
        }
        Ok(Self { alphabet, values })
    }

    pub fn from_indices(alphabet: Alphabet, values: &[usize]) -> Result<Self> {
        let values = values
            .iter()
            .map(|&v| {
                u8::try_from(v)
                    .map_err(|_| Error::InvalidArgument(format!("symbol index {v} too large")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, values)
    }

    pub(crate) fn from_raw(alphabet: Alphabet, values: Vec<u8>) -> Self {
        debug_assert!(values.iter().all(|&v| (v as usize) < alphabet.size()));
        Self { alphabet, values }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Per-symbol occurrence counts.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.alphabet.size()];
        for &v in &self.values {
            c[v as usize] += 1;
        }
        c
    }

    pub fn concat(&self, other: &Sequence) -> Result<Sequence> {
        ensure_same(&self.alphabet, &other.alphabet, "concat")?;
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Sequence {
            alphabet: self.alphabet.clone(),
            values,
        })
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sequence(")?;
        for v in &self.values {
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Per-letter distortion matrix `d(x, y)`, row-major, extended additively to
/// blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionSpec<T = f64> {
    input: Alphabet,
    output: Alphabet,
    matrix: Vec<T>,
}

impl<T: Real> DistortionSpec<T> {
    pub fn new(input: Alphabet, output: Alphabet, rows: &[Vec<T>]) -> Result<Self> {
        if rows.len() != input.size() || rows.iter().any(|r| r.len() != output.size()) {
            return invalid("distortion matrix shape does not match alphabets");
        }
        let matrix = rows.concat();
        if let Some(v) = matrix.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return invalid(format!("distortion entry {v} must be finite and >= 0"));
        }
        Ok(Self {
            input,
            output,
            matrix,
        })
    }

    pub fn hamming(alphabet: Alphabet) -> Self {
        let k = alphabet.size();
        let matrix = (0..k * k)
            .map(|i| if i / k == i % k { T::zero() } else { T::one() })
            .collect();
        Self {
            input: alphabet.clone(),
            output: alphabet,
            matrix,
        }
    }

    pub fn constant(input: Alphabet, output: Alphabet, c: T) -> Result<Self> {
        let rows = vec![vec![c; output.size()]; input.size()];
        Self::new(input, output, &rows)
    }

    pub fn input(&self) -> &Alphabet {
        &self.input
    }

    pub fn output(&self) -> &Alphabet {
        &self.output
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.matrix[x * self.output.size() + y]
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    pub fn max_entry(&self) -> T {
        self.matrix.iter().copied().fold(T::zero(), T::max)
    }

    pub fn to_f64(&self) -> DistortionSpec<f64> {
        DistortionSpec {
            input: self.input.clone(),
            output: self.output.clone(),
            matrix: self.matrix.iter().map(|v| v.as_f64()).collect(),
        }
    }
}

/// Reproducible random stream identified by `(seed, stream_id)`.
///
/// Distinct stream ids select disjoint ChaCha streams under the same key.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream under the same seed, keyed by `self.stream_id` and `tags`.
    pub fn derive(&self, tags: &[u64]) -> SeededRng {
        let mut key = vec![self.stream_id];
        key.extend_from_slice(tags);
        SeededRng::new(self.seed, stream_key(&key))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a list of tags into one 64-bit stream id.
pub fn stream_key(tags: &[u64]) -> u64 {
    tags.iter().fold(0x243F_6A88_85A3_08D3u64, |acc, &t| {
        splitmix64(acc ^ splitmix64(t))
    })
}

/// Stream id derived from the contents of a sequence.
pub fn sequence_key(s: &Sequence) -> u64 {
    let mut tags = Vec::with_capacity(s.len() / 8 + 2);
    tags.push(s.len() as u64);
    for chunk in s.values.chunks(8) {
        let mut word = 0u64;
        for (i, &v) in chunk.iter().enumerate() {
            word |= (v as u64) << (8 * i);
        }
        tags.push(word);
    }
    stream_key(&tags)
}

/// Empirical distribution (type) of a sequence.
pub fn empirical_type<T: Real>(s: &Sequence) -> Result<Distribution<T>> {
    if s.is_empty() {
        return invalid("empirical type of an empty sequence");
    }
    Distribution::from_counts(s.alphabet.clone(), &s.counts())
}

/// Whether `s` lies in the typical set: L1 distance of its type to `p` is at
/// most `eps` (inclusive).
pub fn is_typical<T: Real>(s: &Sequence, p: &Distribution<T>, eps: T) -> Result<bool> {
    ensure_same(&s.alphabet, &p.alphabet, "is_typical")?;
    if eps < T::zero() {
        return invalid("typicality radius must be >= 0");
    }
    if s.is_empty() {
        return invalid("typicality of an empty sequence");
    }
    Ok(within_l1(
        type_l1_from_counts(&s.counts(), s.len(), &p.probs),
        eps,
    ))
}

/// `D(p || q)` in bits; `+inf` when `p` is not absolutely continuous w.r.t. `q`.
pub fn kl_divergence<T: Real>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T> {
    ensure_same(&p.alphabet, &q.alphabet, "kl_divergence")?;
    Ok(kl_bits(&p.probs, &q.probs))
}

pub(crate) fn kl_bits<T: Real>(p: &[T], q: &[T]) -> T {
    let v: T = p.iter().zip(q).map(|(&a, &b)| T::xlog2_ratio(a, b)).sum();
    // Rounding can leave tiny negative values for p == q.
    if v < T::zero() {
        T::zero()
    } else {
        v
    }
}

/// `I(X;Y) = D(j || j_X j_Y)` in bits.
pub fn mutual_information<T: Real>(j: &JointDistribution<T>) -> T {
    let px = j.row_marginal();
    let py = j.col_marginal();
    let c = j.cols.size();
    let v: T = j
        .probs
        .iter()
        .enumerate()
        .map(|(i, &q)| T::xlog2_ratio(q, px.probs[i / c] * py.probs[i % c]))
        .sum();
    if v < T::zero() {
        T::zero()
    } else {
        v
    }
}

/// Additive block distortion `sum_i d(x_i, y_i)`.
pub fn n_letter_distortion<T: Real>(
    x: &Sequence,
    y: &Sequence,
    d: &DistortionSpec<T>,
) -> Result<T> {
    if x.len() != y.len() {
        return invalid(format!("length mismatch: {} vs {}", x.len(), y.len()));
    }
    ensure_same(&x.alphabet, &d.input, "n_letter_distortion (input)")?;
    ensure_same(&y.alphabet, &d.output, "n_letter_distortion (output)")?;
    Ok(x.values
        .iter()
        .zip(&y.values)
        .map(|(&a, &b)| d.get(a as usize, b as usize))
        .sum())
}

/// `floor(n R)`, the number of message bits of a rate-`R` blocklength-`n` code.
pub fn message_bits(rate: f64, n: usize) -> Result<usize> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return invalid(format!("rate must be finite and >= 0, got {rate}"));
    }
    // Guard against 0.4 * 2000 landing just below 800.
    Ok((n as f64 * rate * (1.0 + 1e-12) + 1e-9).floor() as usize)
}

/// Whether a block distortion `total` over `n` letters stays within `max_per_letter`
/// per letter; the comparison is inclusive up to rounding.
pub fn within_distortion(total: f64, n: usize, max_per_letter: f64) -> bool {
    total <= n as f64 * max_per_letter * (1.0 + 1e-12) + 1e-9
}

/// Inverse-CDF sampler for a fixed distribution.
#[derive(Clone, Debug)]
pub(crate) struct CdfSampler {
    cdf: Vec<f64>,
}

impl CdfSampler {
    pub fn new<T: Real>(probs: &[T]) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p.as_f64();
                acc
            })
            .collect();
        // The last symbol with positive mass absorbs rounding slack.
        if let Some(last) = probs.iter().rposition(|p| *p > T::zero()) {
            for c in &mut cdf[last..] {
                *c = f64::INFINITY;
            }
        }
        Self { cdf }
    }

    pub fn sample(&self, u: f64) -> u8 {
        self.cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cdf.len() - 1) as u8
    }

    pub fn draw(&self, rng: &mut SeededRng) -> u8 {
        self.sample(rng.uniform())
    }
}

/// `n` independent draws from `p`.
pub fn sample_iid<T: Real>(p: &Distribution<T>, n: usize, rng: &mut SeededRng) -> Result<Sequence> {
    if n == 0 {
        return invalid("sample length must be >= 1");
    }
    let sampler = CdfSampler::new(&p.probs);
    let values = (0..n).map(|_| sampler.draw(rng)).collect();
    Ok(Sequence::from_raw(p.alphabet.clone(), values))
}

#[cfg(test)]
pub(crate) fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}
