//! Exact type-class computations on an integer distortion grid.
//!
//! Given a fixed sequence (only its type matters) and a second sequence drawn
//! i.i.d. from some distribution, these routines give the exact law of the
//! block distortion between the two, optionally jointly with the type of the
//! random sequence. All probabilities are carried as base-2 logarithms so
//! blocklengths in the thousands do not underflow.

use std::f64::consts::LN_2;

use crate::error::{invalid, Error, Result};
use crate::prob::{type_l1_from_counts, within_l1, DistortionSpec, SeededRng};

const MAX_DENOMINATOR: i64 = 1_000_000;
const MAX_SCALE: u64 = 1 << 40;
const MAX_DENSE_STATES: usize = 60_000_000;

/// `log2(2^a + 2^b)`.
pub fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp2().ln_1p() / LN_2
}

/// `log2(-ln(1 - p))` for `p = 2^log2_p`; stays accurate for tiny `p`.
pub fn log2_neg_ln_complement(log2_p: f64) -> f64 {
    if log2_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log2_p >= 0.0 {
        return f64::INFINITY;
    }
    if log2_p < -1000.0 {
        return log2_p;
    }
    let p = log2_p.exp2();
    (-(-p).ln_1p()).log2()
}

/// Natural log of `(1 - p)^k` with `p = 2^log2_p`, `k = 2^log2_k`.
pub fn ln_pow_complement(log2_p: f64, log2_k: f64) -> f64 {
    if log2_k == f64::NEG_INFINITY || log2_p == f64::NEG_INFINITY {
        return 0.0;
    }
    -(log2_k + log2_neg_ln_complement(log2_p)).exp2()
}

/// Rational approximation `num/den` with `den <= MAX_DENOMINATOR`, accepted
/// only if it reproduces `v` to within a few ulps.
fn rationalize(v: f64) -> Option<(i64, i64)> {
    if v == 0.0 {
        return Some((0, 1));
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut x = v;
    for _ in 0..64 {
        let a = x.floor();
        if a > 1e15 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > MAX_DENOMINATOR {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - v).abs() <= 4.0 * f64::EPSILON * v.abs() {
            return Some((h1, k1));
        }
        let frac = x - a as f64;
        if frac == 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    (k1 > 0 && ((h1 as f64 / k1 as f64) - v).abs() <= 4.0 * f64::EPSILON * v.abs())
        .then_some((h1, k1))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Distortion matrix rescaled by the LCM of its entries' denominators so that
/// every entry, and hence every block distortion, is an integer.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegerCosts {
    rows: usize,
    cols: usize,
    scale: u64,
    costs: Vec<u64>,
}

impl IntegerCosts {
    pub fn from_spec(d: &DistortionSpec<f64>) -> Result<Self> {
        let mut fracs = Vec::with_capacity(d.matrix().len());
        let mut scale = 1u64;
        for &v in d.matrix() {
            let (num, den) = rationalize(v).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "distortion entry {v} is not a rational with denominator <= {MAX_DENOMINATOR}"
                ))
            })?;
            let den = den as u64;
            scale = scale / gcd(scale, den) * den;
            if scale > MAX_SCALE {
                return invalid("distortion entries need a common denominator beyond 2^40");
            }
            fracs.push((num as u64, den));
        }
        let costs = fracs
            .iter()
            .map(|&(num, den)| num * (scale / den))
            .collect();
        Ok(Self {
            rows: d.input().size(),
            cols: d.output().size(),
            scale,
            costs,
        })
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.costs[row * self.cols + col]
    }

    /// Largest integer block cost whose per-letter distortion is `<= max_per_letter`.
    pub fn threshold(&self, n: usize, max_per_letter: f64) -> Option<u64> {
        if max_per_letter < 0.0 {
            return None;
        }
        let t = n as f64 * max_per_letter * self.scale as f64;
        Some(
            (t * (1.0 + 1e-12) + 1e-9)
                .floor()
                .min(u64::MAX as f64 / 2.0) as u64,
        )
    }

    /// Cost matrix with rows and columns swapped.
    pub fn transposed(&self) -> Self {
        let mut costs = vec![0; self.costs.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                costs[c * self.rows + r] = self.costs[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            scale: self.scale,
            costs,
        }
    }
}

/// `log2 k!` for `k = 0..=n`.
fn log2_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).log2();
        out.push(acc);
    }
    out
}

/// One conditional type of a block of `size` i.i.d. letters.
#[derive(Clone, Debug)]
struct GroupOutcome {
    counts: Vec<u32>,
    cost: u64,
    log2p: f64,
}

/// Every count vector for `size` i.i.d. draws from `probs`, with its
/// multinomial probability and the cost under `cost_of_symbol`.
fn group_outcomes(
    size: usize,
    probs: &[f64],
    cost_of_symbol: &[u64],
    lf: &[f64],
) -> Vec<GroupOutcome> {
    let k = probs.len();
    let log2p: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { p.log2() } else { f64::NEG_INFINITY })
        .collect();
    let mut out = Vec::new();
    let mut counts = vec![0u32; k];

    #[allow(clippy::too_many_arguments)]
    fn rec(
        i: usize,
        left: usize,
        counts: &mut Vec<u32>,
        log2p: &[f64],
        costs: &[u64],
        lf: &[f64],
        size: usize,
        out: &mut Vec<GroupOutcome>,
    ) {
        let k = counts.len();
        if i == k - 1 {
            if left > 0 && log2p[i] == f64::NEG_INFINITY {
                return;
            }
            counts[i] = left as u32;
            let mut lp = lf[size];
            let mut cost = 0u64;
            for (j, &c) in counts.iter().enumerate() {
                lp -= lf[c as usize];
                if c > 0 {
                    lp += c as f64 * log2p[j];
                    cost += c as u64 * costs[j];
                }
            }
            out.push(GroupOutcome {
                counts: counts.clone(),
                cost,
                log2p: lp,
            });
            return;
        }
        let max = if log2p[i] == f64::NEG_INFINITY {
            0
        } else {
            left
        };
        for c in 0..=max {
            counts[i] = c as u32;
            rec(i + 1, left - c, counts, log2p, costs, lf, size, out);
        }
        counts[i] = 0;
    }

    rec(
        0,
        size,
        &mut counts,
        &log2p,
        cost_of_symbol,
        lf,
        size,
        &mut out,
    );
    out
}

/// `log2` of the probability that an i.i.d.-`probs` sequence `Z` satisfies
/// both `type(Z)` within L1 `eps` of `probs_ref` and block cost to a fixed
/// sequence with per-symbol counts `fixed_counts` at most `max_cost`.
///
/// `costs` is indexed `(random symbol, fixed symbol)`. `eps = None` drops the
/// type constraint.
pub fn log2_prob_typical_within(
    fixed_counts: &[usize],
    probs: &[f64],
    probs_ref: &[f64],
    costs: &IntegerCosts,
    eps: Option<f64>,
    max_cost: u64,
) -> Result<f64> {
    let n: usize = fixed_counts.iter().sum();
    let k = probs.len();
    if n == 0 {
        return invalid("empty fixed sequence");
    }
    let lf = log2_factorials(n);
    let radix = n + 1;
    let dims = k - 1;
    let count_states = radix
        .checked_pow(dims as u32)
        .filter(|c| c.saturating_mul(max_cost as usize + 1) <= MAX_DENSE_STATES)
        .ok_or_else(|| {
            Error::Resource(format!(
                "type DP state space too large (n = {n}, |X| = {k})"
            ))
        })?;
    let width = max_cost as usize + 1;
    let encode = |counts: &[u32]| -> usize {
        counts[..dims]
            .iter()
            .rev()
            .fold(0usize, |acc, &c| acc * radix + c as usize)
    };

    let mut state = vec![f64::NEG_INFINITY; count_states * width];
    state[0] = 0.0;
    let mut live: Vec<usize> = vec![0];
    for (b, &nb) in fixed_counts.iter().enumerate() {
        if nb == 0 {
            continue;
        }
        let col: Vec<u64> = (0..k).map(|x| costs.get(x, b)).collect();
        let outcomes: Vec<(usize, u64, f64)> = group_outcomes(nb, probs, &col, &lf)
            .into_iter()
            .filter(|o| o.cost <= max_cost)
            .map(|o| (encode(&o.counts), o.cost, o.log2p))
            .collect();
        let mut next = vec![f64::NEG_INFINITY; count_states * width];
        let mut next_live = Vec::new();
        for &s in &live {
            let base = state[s];
            let (ci, cost) = (s / width, (s % width) as u64);
            for &(oi, oc, lp) in &outcomes {
                let c = cost + oc;
                if c > max_cost {
                    continue;
                }
                let t = (ci + oi) * width + c as usize;
                if next[t] == f64::NEG_INFINITY {
                    next_live.push(t);
                    next[t] = base + lp;
                } else {
                    next[t] = lse2(next[t], base + lp);
                }
            }
        }
        state = next;
        live = next_live;
    }

    let mut total = f64::NEG_INFINITY;
    let mut counts = vec![0usize; k];
    for &s in &live {
        let mut ci = s / width;
        let mut used = 0;
        for c in counts.iter_mut().take(dims) {
            *c = ci % radix;
            ci /= radix;
            used += *c;
        }
        counts[dims] = n - used;
        let ok = match eps {
            Some(e) => within_l1(type_l1_from_counts(&counts, n, probs_ref), e),
            None => true,
        };
        if ok {
            total = lse2(total, state[s]);
        }
    }
    Ok(total)
}

/// Exact law of the block cost between a fixed sequence and an i.i.d. random
/// one, with enough structure kept to sample the random sequence conditioned
/// on its cost.
#[derive(Clone, Debug)]
pub struct CostLaw {
    n: usize,
    /// Per fixed symbol: outcomes of the random letters at those positions.
    groups: Vec<(usize, Vec<GroupOutcome>)>,
    /// `prefix[g][c]`: log2 P(cost of groups 0..=g equals c).
    prefix: Vec<Vec<f64>>,
    /// log2 P(cost <= c) and log2 P(cost > c).
    log2_cdf: Vec<f64>,
    log2_sf: Vec<f64>,
}

impl CostLaw {
    /// `costs` is indexed `(fixed symbol, random symbol)`.
    pub fn new(fixed_counts: &[usize], probs: &[f64], costs: &IntegerCosts) -> Result<Self> {
        let n: usize = fixed_counts.iter().sum();
        if n == 0 {
            return invalid("empty fixed sequence");
        }
        let lf = log2_factorials(n);
        let max_row = |a: usize| (0..probs.len()).map(|y| costs.get(a, y)).max().unwrap_or(0);
        let max_total: u64 = fixed_counts
            .iter()
            .enumerate()
            .map(|(a, &c)| c as u64 * max_row(a))
            .sum();
        if max_total as usize > MAX_DENSE_STATES {
            return Err(Error::Resource(format!(
                "cost range {max_total} too large for exact law"
            )));
        }
        let width = max_total as usize + 1;
        let mut groups = Vec::new();
        let mut prefix: Vec<Vec<f64>> = Vec::new();
        let mut acc = vec![f64::NEG_INFINITY; width];
        acc[0] = 0.0;
        let mut acc_max = 0usize;
        for (a, &na) in fixed_counts.iter().enumerate() {
            if na == 0 {
                continue;
            }
            let row: Vec<u64> = (0..probs.len()).map(|y| costs.get(a, y)).collect();
            let outs = group_outcomes(na, probs, &row, &lf);
            let mut pmf: Vec<(usize, f64)> = Vec::new();
            {
                let mut by_cost = std::collections::BTreeMap::<u64, f64>::new();
                for o in &outs {
                    let e = by_cost.entry(o.cost).or_insert(f64::NEG_INFINITY);
                    *e = lse2(*e, o.log2p);
                }
                pmf.extend(by_cost.into_iter().map(|(c, p)| (c as usize, p)));
            }
            let mut next = vec![f64::NEG_INFINITY; width];
            let mut next_max = 0;
            for (c0, &p0) in acc[..=acc_max].iter().enumerate() {
                if p0 == f64::NEG_INFINITY {
                    continue;
                }
                for &(c1, p1) in &pmf {
                    let t = c0 + c1;
                    next[t] = lse2(next[t], p0 + p1);
                    next_max = next_max.max(t);
                }
            }
            acc = next;
            acc_max = next_max;
            prefix.push(acc.clone());
            groups.push((a, outs));
        }
        let mut log2_cdf = vec![f64::NEG_INFINITY; width];
        let mut run = f64::NEG_INFINITY;
        for c in 0..width {
            run = lse2(run, acc[c]);
            log2_cdf[c] = run;
        }
        let mut log2_sf = vec![f64::NEG_INFINITY; width];
        let mut run = f64::NEG_INFINITY;
        for c in (0..width).rev() {
            log2_sf[c] = run;
            run = lse2(run, acc[c]);
        }
        Ok(Self {
            n,
            groups,
            prefix,
            log2_cdf,
            log2_sf,
        })
    }

    pub fn max_cost(&self) -> u64 {
        (self.log2_cdf.len() - 1) as u64
    }

    /// log2 P(cost <= c).
    pub fn log2_cdf(&self, c: u64) -> f64 {
        let c = (c as usize).min(self.log2_cdf.len() - 1);
        self.log2_cdf[c]
    }

    /// Smallest cost among `2^log2_count` independent draws, sampled exactly.
    pub fn sample_min_cost(&self, log2_count: f64, rng: &mut SeededRng) -> u64 {
        // P(min <= t) = 1 - (1 - F(t))^M  >=  U   <=>
        // log2 M + log2(-ln(1 - F(t)))  >=  log2(-ln(1 - U)).
        let u = 1.0 - rng.uniform();
        let target = (-u.ln()).log2();
        let level = |c: usize| -> f64 {
            let lf = self.log2_cdf[c];
            if lf == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let l = if lf < -20.0 {
                log2_neg_ln_complement(lf)
            } else if self.log2_sf[c] == f64::NEG_INFINITY {
                f64::INFINITY
            } else {
                (-(self.log2_sf[c] * LN_2)).log2()
            };
            log2_count + l
        };
        let (mut lo, mut hi) = (0usize, self.log2_cdf.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if level(mid) >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo as u64
    }

    /// Random letters (one per position of the fixed sequence `fixed`),
    /// sampled conditionally on the block cost being exactly `cost`.
    pub fn sample_given_cost(
        &self,
        fixed: &[u8],
        cost: u64,
        rng: &mut SeededRng,
    ) -> Option<Vec<u8>> {
        debug_assert_eq!(fixed.len(), self.n);
        let mut remaining = cost as usize;
        if self
            .prefix
            .last()?
            .get(remaining)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
            == f64::NEG_INFINITY
        {
            return None;
        }
        let mut chosen: Vec<&GroupOutcome> = vec![&self.groups[0].1[0]; self.groups.len()];
        for g in (0..self.groups.len()).rev() {
            let outs = &self.groups[g].1;
            let weight = |o: &GroupOutcome| -> f64 {
                let c = o.cost as usize;
                if c > remaining {
                    return f64::NEG_INFINITY;
                }
                let rest = if g == 0 {
                    if remaining == c {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    self.prefix[g - 1]
                        .get(remaining - c)
                        .copied()
                        .unwrap_or(f64::NEG_INFINITY)
                };
                o.log2p + rest
            };
            let weights: Vec<f64> = outs.iter().map(weight).collect();
            let top = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                return None;
            }
            let lin: Vec<f64> = weights.iter().map(|w| (w - top).exp2()).collect();
            let total: f64 = lin.iter().sum();
            let mut u = rng.uniform() * total;
            let mut pick = lin.len() - 1;
            for (i, w) in lin.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            while lin[pick] == 0.0 {
                pick -= 1;
            }
            chosen[g] = &outs[pick];
            remaining -= outs[pick].cost as usize;
        }
        let mut out = vec![0u8; fixed.len()];
        for (g, (symbol, _)) in self.groups.iter().enumerate() {
            let mut letters: Vec<u8> = chosen[g]
                .counts
                .iter()
                .enumerate()
                .flat_map(|(y, &c)| std::iter::repeat_n(y as u8, c as usize))
                .collect();
            // Fisher-Yates: positions within a group are exchangeable.
            for i in (1..letters.len()).rev() {
                let j = (rng.uniform() * (i + 1) as f64) as usize;
                letters.swap(i, j.min(i));
            }
            let mut it = letters.into_iter();
            for (pos, &f) in fixed.iter().enumerate() {
                if f as usize == *symbol {
                    out[pos] = it.next()?;
                }
            }
        }
        Some(out)
    }
}

/// Outcome class of the number of successes among `2^log2_k` independent
/// trials with success probability `2^log2_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitCount {
    Zero,
    One,
    Many,
}

/// Samples whether a binomial count is 0, 1 or at least 2, exactly.
pub fn sample_hit_count(log2_p: f64, log2_k: f64, rng: &mut SeededRng) -> HitCount {
    if log2_k == f64::NEG_INFINITY || log2_p == f64::NEG_INFINITY {
        return HitCount::Zero;
    }
    let p0;
    let p1;
    if log2_p >= 0.0 {
        // Certain success per trial.
        p0 = 0.0;
        p1 = if log2_k == 0.0 { 1.0 } else { 0.0 };
    } else {
        let ln_q = -(log2_neg_ln_complement(log2_p)).exp2();
        let ln_p0 = ln_pow_complement(log2_p, log2_k);
        p0 = ln_p0.exp();
        let ln_p1 = log2_k * LN_2 + log2_p * LN_2 + ln_p0 - ln_q;
        p1 = ln_p1.exp();
    }
    let u = rng.uniform();
    if u < p0 {
        HitCount::Zero
    } else if u < p0 + p1 {
        HitCount::One
    } else {
        HitCount::Many
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::Alphabet;

    #[test]
    fn rationalizes_common_entries() {
        assert_eq!(rationalize(0.1), Some((1, 10)));
        assert_eq!(rationalize(0.25), Some((1, 4)));
        assert_eq!(rationalize(2.0), Some((2, 1)));
        assert_eq!(rationalize(1.0 / 3.0), Some((1, 3)));
        assert!(rationalize(std::f64::consts::PI).is_none());
    }

    #[test]
    fn integer_costs_share_a_scale() {
        let a = Alphabet::binary();
        let d = DistortionSpec::new(a.clone(), a, &[vec![0.0, 0.5], vec![1.0 / 3.0, 0.0]]).unwrap();
        let c = IntegerCosts::from_spec(&d).unwrap();
        assert_eq!(c.scale(), 6);
        assert_eq!(c.get(0, 1), 3);
        assert_eq!(c.get(1, 0), 2);
        assert_eq!(c.threshold(10, 0.1), Some(6));
    }

    #[test]
    fn lse_matches_direct() {
        let v = lse2(0.25f64.log2(), 0.5f64.log2());
        assert!((v - 0.75f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn cost_law_is_binomial_for_hamming() {
        let a = Alphabet::binary();
        let d = DistortionSpec::<f64>::hamming(a);
        let c = IntegerCosts::from_spec(&d).unwrap();
        let law = CostLaw::new(&[3, 2], &[0.5, 0.5], &c).unwrap();
        // Cost ~ Binomial(5, 1/2) regardless of the fixed sequence.
        let cdf2 = law.log2_cdf(2).exp2();
        assert!((cdf2 - 16.0 / 32.0).abs() < 1e-14);
        let mut rng = SeededRng::new(3, 1);
        let fixed = [0u8, 1, 0, 1, 0];
        for cost in 0..=5u64 {
            let y = law.sample_given_cost(&fixed, cost, &mut rng).unwrap();
            let got = fixed.iter().zip(&y).filter(|(a, b)| a != b).count() as u64;
            assert_eq!(got, cost);
        }
    }

    #[test]
    fn hit_count_limits() {
        let mut rng = SeededRng::new(0, 0);
        assert_eq!(
            sample_hit_count(f64::NEG_INFINITY, 10.0, &mut rng),
            HitCount::Zero
        );
        assert_eq!(
            sample_hit_count(-1.0, f64::NEG_INFINITY, &mut rng),
            HitCount::Zero
        );
        assert_eq!(sample_hit_count(0.0, 0.0, &mut rng), HitCount::One);
        assert_eq!(sample_hit_count(0.0, 3.0, &mut rng), HitCount::Many);
        // 2^40 trials at p = 2^-10: zero hits has probability ~exp(-2^30).
        assert_eq!(sample_hit_count(-10.0, 40.0, &mut rng), HitCount::Many);
    }

    #[test]
    fn hit_count_frequencies() {
        // k = 4, p = 1/4: P0 = (3/4)^4, P1 = 4 (1/4)(3/4)^3.
        let mut rng = SeededRng::new(11, 0);
        let (mut z, mut o) = (0, 0);
        let trials = 200_000;
        for _ in 0..trials {
            match sample_hit_count(-2.0, 2.0, &mut rng) {
                HitCount::Zero => z += 1,
                HitCount::One => o += 1,
                HitCount::Many => {}
            }
        }
        let p0 = 0.75f64.powi(4);
        let p1 = 0.75f64.powi(3);
        assert!((z as f64 / trials as f64 - p0).abs() < 0.005);
        assert!((o as f64 / trials as f64 - p1).abs() < 0.005);
    }
}
