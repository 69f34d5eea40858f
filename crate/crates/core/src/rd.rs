//! Rate-distortion function and the impostor-probability exponent.
//!
//! [`rate_distortion`] computes `R(D) = min I(X;Y)` over test channels with
//! expected distortion at most `D` by alternating minimization at a fixed
//! slope, with the slope found by bisection. [`sanov_exponent`] minimizes
//! `D(q_ZY || p_X q_Y)` over joint distributions whose `Z` marginal is within
//! L1 radius `eps` of `p_X` and whose expected distortion is at most `D`; it
//! runs exponentiated-gradient steps on the joint, factored as row marginal
//! times conditional rows, under an augmented Lagrangian for the constraints.

use crate::error::{invalid, Error, Result};
use crate::prob::{
    kl_bits, mutual_information, Alphabet, DistortionSpec, Distribution, JointDistribution, Kernel,
};
use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 1e-4;

/// One point of the rate-distortion curve together with its optimal test channel.
#[derive(Clone, Debug)]
pub struct RdPoint<T = f64> {
    pub distortion_d: T,
    pub rate_bits: T,
    /// Expected distortion actually achieved by `test_channel`.
    pub achieved_distortion: T,
    pub test_channel: Kernel<T>,
    pub output_marginal: Distribution<T>,
    /// `dR/dD` at this point, in bits per unit distortion (<= 0).
    pub slope_parameter: T,
}

#[derive(Clone, Debug)]
pub struct ExponentResult<T = f64> {
    /// `+inf` when the constraint set is empty.
    pub exponent_bits: T,
    pub minimizer: Option<JointDistribution<T>>,
    pub epsilon: T,
    pub distortion_d: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionRange<T = f64> {
    pub d_min: T,
    pub d_max: T,
}

fn check_source<T: Real>(p: &Distribution<T>, d: &DistortionSpec<T>) -> Result<()> {
    if p.alphabet() != d.input() {
        return invalid("source alphabet does not match distortion input alphabet");
    }
    Ok(())
}

/// `d_min = sum_x p(x) min_y d(x,y)`; `d_max = min_y sum_x p(x) d(x,y)`.
pub fn distortion_range<T: Real>(
    p: &Distribution<T>,
    d: &DistortionSpec<T>,
) -> Result<DistortionRange<T>> {
    check_source(p, d)?;
    let ky = d.output().size();
    let d_min = p
        .probs()
        .iter()
        .enumerate()
        .map(|(x, &px)| px * (0..ky).map(|y| d.get(x, y)).fold(T::infinity(), T::min))
        .sum();
    let d_max = best_constant(p, d).1;
    Ok(DistortionRange { d_min, d_max })
}

fn best_constant<T: Real>(p: &Distribution<T>, d: &DistortionSpec<T>) -> (usize, T) {
    (0..d.output().size())
        .map(|y| {
            let v: T = p
                .probs()
                .iter()
                .enumerate()
                .map(|(x, &px)| px * d.get(x, y))
                .sum();
            (y, v)
        })
        .fold(
            (0, T::infinity()),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

/// Fixed-slope alternating minimization state.
struct SlopeSolver<'a, T: Real> {
    p: &'a [T],
    d: &'a DistortionSpec<T>,
    kx: usize,
    ky: usize,
    /// `min_y d(x, y)` per row, subtracted before exponentiating.
    row_min: Vec<T>,
    tol: T,
}

struct SlopeSolution<T> {
    kernel: Vec<T>,
    q: Vec<T>,
    rate: T,
    distortion: T,
}

impl<'a, T: Real> SlopeSolver<'a, T> {
    fn new(p: &'a [T], d: &'a DistortionSpec<T>, tol: T) -> Self {
        let kx = p.len();
        let ky = d.output().size();
        let row_min = (0..kx)
            .map(|x| (0..ky).map(|y| d.get(x, y)).fold(T::infinity(), T::min))
            .collect();
        Self {
            p,
            d,
            kx,
            ky,
            row_min,
            tol,
        }
    }

    /// `beta = None` is the infinite-slope limit: each row may only use its
    /// minimum-distortion outputs.
    fn weight(&self, x: usize, y: usize, beta: Option<T>) -> T {
        let gap = self.d.get(x, y) - self.row_min[x];
        match beta {
            Some(b) => (-b * gap).exp(),
            None => {
                if gap <= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    fn solve(&self, beta: Option<T>, q_init: &[T]) -> SlopeSolution<T> {
        let (kx, ky) = (self.kx, self.ky);
        let w: Vec<T> = (0..kx * ky)
            .map(|i| self.weight(i / ky, i % ky, beta))
            .collect();
        let mut q = q_init.to_vec();
        let mut kernel = vec![T::zero(); kx * ky];
        let mut history: Vec<T> = Vec::new();
        let window = 50;
        let max_iter = 200_000;
        let stop = self.tol / T::lit(10.0);
        for it in 0..max_iter {
            for x in 0..kx {
                let row = &mut kernel[x * ky..(x + 1) * ky];
                let mut z = T::zero();
                for y in 0..ky {
                    row[y] = q[y] * w[x * ky + y];
                    z += row[y];
                }
                if z > T::zero() {
                    for v in row.iter_mut() {
                        *v /= z;
                        // Subnormal mass would vanish from the output marginal.
                        if *v < T::min_positive_value() {
                            *v = T::zero();
                        }
                    }
                }
            }
            let mut q_new = vec![T::zero(); ky];
            for x in 0..kx {
                for y in 0..ky {
                    q_new[y] += self.p[x] * kernel[x * ky + y];
                }
            }
            q = q_new;
            let (rate, dist) = self.evaluate(&kernel, &q);
            let objective = match beta {
                Some(b) => rate + b * dist / T::LN_2(),
                None => rate,
            };
            history.push(objective);
            if it >= window && history[it - window] - objective < stop {
                break;
            }
        }
        let (rate, distortion) = self.evaluate(&kernel, &q);
        SlopeSolution {
            kernel,
            q,
            rate,
            distortion,
        }
    }

    fn evaluate(&self, kernel: &[T], q: &[T]) -> (T, T) {
        let ky = self.ky;
        let mut rate = T::zero();
        let mut dist = T::zero();
        for x in 0..self.kx {
            for y in 0..ky {
                let wxy = kernel[x * ky + y];
                rate += self.p[x] * T::xlog2_ratio(wxy, q[y]);
                dist += self.p[x] * wxy * self.d.get(x, y);
            }
        }
        (rate.max(T::zero()), dist)
    }
}

/// `R(D)` in bits, the minimizing test channel and its output marginal.
pub fn rate_distortion<T: Real>(
    p: &Distribution<T>,
    d: &DistortionSpec<T>,
    target: T,
    tol: T,
) -> Result<RdPoint<T>> {
    check_source(p, d)?;
    if tol <= T::zero() {
        return invalid("solver tolerance must be > 0");
    }
    let range = distortion_range(p, d)?;
    let slack = T::lit(1e-12) * range.d_max.max(T::one());
    if target < range.d_min - slack {
        return Err(Error::Infeasible(format!(
            "distortion {target} below the minimum achievable {}",
            range.d_min
        )));
    }
    let (kx, ky) = (p.alphabet().size(), d.output().size());
    if target >= range.d_max {
        let (y0, dist) = best_constant(p, d);
        let rows: Vec<Vec<T>> = (0..kx)
            .map(|_| {
                (0..ky)
                    .map(|y| if y == y0 { T::one() } else { T::zero() })
                    .collect()
            })
            .collect();
        let test_channel = Kernel::new(p.alphabet().clone(), d.output().clone(), &rows)?;
        return Ok(RdPoint {
            distortion_d: target,
            rate_bits: T::zero(),
            achieved_distortion: dist,
            test_channel,
            output_marginal: Distribution::point_mass(d.output().clone(), y0)?,
            slope_parameter: T::zero(),
        });
    }

    let solver = SlopeSolver::new(p.probs(), d, tol);
    let uniform = vec![T::one() / T::from_usize_lossy(ky); ky];
    // Warm starts keep every output in play: an output marginal that has
    // collapsed near zero escapes the zero-rate fixed point very slowly.
    let blend = |q: &[T]| -> Vec<T> {
        q.iter()
            .zip(&uniform)
            .map(|(&a, &u)| (a + u) / T::lit(2.0))
            .collect()
    };
    let finish = |sol: SlopeSolution<T>, beta: Option<T>| -> Result<RdPoint<T>> {
        Ok(RdPoint {
            distortion_d: target,
            rate_bits: sol.rate,
            achieved_distortion: sol.distortion,
            test_channel: Kernel::from_raw(p.alphabet().clone(), d.output().clone(), sol.kernel),
            output_marginal: Distribution::new(d.output().clone(), sol.q)?,
            slope_parameter: beta.map_or(T::neg_infinity(), |b| -b / T::LN_2()),
        })
    };

    // Bracket the slope: distortion decreases as beta grows.
    let mut lo = T::zero();
    let mut hi = T::one();
    let mut hi_sol = solver.solve(Some(hi), &uniform);
    let beta_cap = T::lit(1e4) / min_positive_gap(&solver).max(T::lit(1e-12));
    while hi_sol.distortion > target {
        lo = hi;
        hi *= T::lit(2.0);
        if hi > beta_cap {
            // Target sits at the minimum distortion: use the limiting channel.
            let sol = solver.solve(None, &uniform);
            return finish(sol, None);
        }
        hi_sol = solver.solve(Some(hi), &blend(&hi_sol.q));
    }
    for _ in 0..100 {
        if hi - lo <= T::lit(1e-10) * hi.max(T::one())
            || target - hi_sol.distortion <= T::lit(1e-10)
        {
            break;
        }
        let mid = (lo + hi) / T::lit(2.0);
        let sol = solver.solve(Some(mid), &blend(&hi_sol.q));
        if sol.distortion > target {
            lo = mid;
        } else {
            hi = mid;
            hi_sol = sol;
        }
    }
    finish(hi_sol, Some(hi))
}

fn min_positive_gap<T: Real>(s: &SlopeSolver<'_, T>) -> T {
    let mut g = T::infinity();
    for x in 0..s.kx {
        for y in 0..s.ky {
            let v = s.d.get(x, y) - s.row_min[x];
            if v > T::zero() {
                g = g.min(v);
            }
        }
    }
    if g.is_finite() {
        g
    } else {
        T::one()
    }
}

/// Sweep of [`rate_distortion`] over a grid of distortion levels.
pub fn rd_curve<T: Real>(
    p: &Distribution<T>,
    d: &DistortionSpec<T>,
    grid: &[T],
    tol: T,
) -> Result<Vec<RdPoint<T>>> {
    let range = distortion_range(p, d)?;
    for &g in grid {
        if g < range.d_min || g > range.d_max {
            return invalid(format!(
                "grid value {g} outside [{}, {}]",
                range.d_min, range.d_max
            ));
        }
    }
    grid.iter()
        .map(|&g| rate_distortion(p, d, g, tol))
        .collect()
}

/// Linear constraint `a . q <= b` on the flattened joint.
struct Constraint<T> {
    a: Vec<T>,
    b: T,
}

/// Greedy minimum-distortion joint inside the constraint set: move up to
/// `eps / 2` of mass from the costliest rows to the cheapest, and send each
/// row to its cheapest output.
fn min_distortion_point<T: Real>(p: &[T], d: &DistortionSpec<T>, eps: T) -> (Vec<T>, T) {
    let (kx, ky) = (p.len(), d.output().size());
    let best: Vec<(usize, T)> = (0..kx)
        .map(|x| {
            (0..ky)
                .map(|y| (y, d.get(x, y)))
                .fold((0, T::infinity()), |b, c| if c.1 < b.1 { c } else { b })
        })
        .collect();
    let mut qz = p.to_vec();
    let cheapest = (0..kx).fold(0, |b, x| if best[x].1 < best[b].1 { x } else { b });
    let mut budget = eps / T::lit(2.0);
    let mut order: Vec<usize> = (0..kx).collect();
    order.sort_by(|&a, &b| best[b].1.partial_cmp(&best[a].1).unwrap());
    for x in order {
        if budget <= T::zero() || x == cheapest || best[x].1 <= best[cheapest].1 {
            continue;
        }
        let mv = budget.min(qz[x]);
        qz[x] -= mv;
        qz[cheapest] += mv;
        budget -= mv;
    }
    let mut q = vec![T::zero(); kx * ky];
    let mut dist = T::zero();
    for x in 0..kx {
        q[x * ky + best[x].0] = qz[x];
        dist += qz[x] * best[x].1;
    }
    (q, dist)
}

/// Makes an approximate minimizer exactly feasible: rescale rows so the row
/// marginal lies in the L1 ball, then blend toward `feasible` (same ball,
/// distortion within budget) until the distortion constraint holds.
fn restore_feasibility<T: Real>(
    mut q: Vec<T>,
    p: &[T],
    ky: usize,
    d: &[T],
    target: T,
    eps: T,
    feasible: &[T],
) -> Vec<T> {
    let kx = p.len();
    let qz: Vec<T> = q.chunks(ky).map(|r| r.iter().copied().sum()).collect();
    let dist_l1: T = qz.iter().zip(p).map(|(&a, &b)| (a - b).abs()).sum();
    if dist_l1 > eps {
        let lambda = if dist_l1 > T::zero() {
            eps / dist_l1
        } else {
            T::zero()
        };
        for x in 0..kx {
            let r = p[x] + lambda * (qz[x] - p[x]);
            let row = &mut q[x * ky..(x + 1) * ky];
            if qz[x] > T::zero() {
                let f = r / qz[x];
                row.iter_mut().for_each(|v| *v *= f);
            } else {
                let frow = &feasible[x * ky..(x + 1) * ky];
                let fz: T = frow.iter().copied().sum();
                for (v, &fv) in row.iter_mut().zip(frow) {
                    *v = if fz > T::zero() {
                        r * fv / fz
                    } else {
                        r / T::from_usize_lossy(ky)
                    };
                }
            }
        }
    }
    let dq = dot(d, &q);
    if dq > target {
        let df = dot(d, feasible);
        let t = if dq > df {
            ((dq - target) / (dq - df)).min(T::one())
        } else {
            T::one()
        };
        q = q
            .iter()
            .zip(feasible)
            .map(|(&a, &b)| (T::one() - t) * a + t * b)
            .collect();
    }
    q
}

/// `D(q || p_X q_Y)` in bits where `q_Y` is the column marginal of `q`.
fn joint_objective<T: Real>(q: &[T], p: &[T], ky: usize) -> T {
    let mut qy = vec![T::zero(); ky];
    for (i, &v) in q.iter().enumerate() {
        qy[i % ky] += v;
    }
    let reference: Vec<T> = (0..q.len()).map(|i| p[i / ky] * qy[i % ky]).collect();
    kl_bits(q, &reference)
}

struct Lagrangian<'a, T> {
    p: &'a [T],
    ky: usize,
    cons: &'a [Constraint<T>],
    mu: Vec<T>,
    rho: T,
    /// Entries forced to zero (rows with `p(x) = 0`).
    frozen: Vec<bool>,
}

impl<'a, T: Real> Lagrangian<'a, T> {
    fn value(&self, q: &[T]) -> T {
        let mut v = joint_objective(q, self.p, self.ky);
        for (c, &mu) in self.cons.iter().zip(&self.mu) {
            let g = dot(&c.a, q) - c.b;
            let s = (mu + self.rho * g).max(T::zero());
            v += (s * s - mu * mu) / (T::lit(2.0) * self.rho);
        }
        v
    }

    fn gradient(&self, q: &[T]) -> Vec<T> {
        let ky = self.ky;
        let mut qy = vec![T::zero(); ky];
        for (i, &v) in q.iter().enumerate() {
            qy[i % ky] += v;
        }
        let mut g: Vec<T> = (0..q.len())
            .map(|i| {
                if self.frozen[i] {
                    T::zero()
                } else {
                    let r = q[i] / (self.p[i / ky] * qy[i % ky]);
                    r.max(T::min_positive_value()).log2()
                }
            })
            .collect();
        for (c, &mu) in self.cons.iter().zip(&self.mu) {
            let s = (mu + self.rho * (dot(&c.a, q) - c.b)).max(T::zero());
            if s > T::zero() {
                for (gi, &ai) in g.iter_mut().zip(&c.a) {
                    *gi += s * ai;
                }
            }
        }
        g
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn max_violation<T: Real>(cons: &[Constraint<T>], q: &[T]) -> T {
    cons.iter()
        .map(|c| dot(&c.a, q) - c.b)
        .fold(T::zero(), T::max)
}

/// Factored iterate `q(x, y) = q_Z(x) W(y | x)`. Mirror steps on the rows
/// of `W` leave the row marginal untouched, which keeps the stiff marginal
/// constraints out of the step-size selection for `W`.
struct Factored<T> {
    qz: Vec<T>,
    w: Vec<T>,
    ky: usize,
}

impl<T: Real> Factored<T> {
    fn joint(&self) -> Vec<T> {
        self.w
            .iter()
            .enumerate()
            .map(|(i, &v)| self.qz[i / self.ky] * v)
            .collect()
    }
}

/// Multiplicative update `v * exp(-eta * g)` renormalized over `v`, skipping
/// frozen entries.
fn tilt<T: Real>(v: &[T], g: &[T], eta: T, frozen: impl Fn(usize) -> bool) -> Vec<T> {
    let shift = (0..v.len())
        .filter(|&i| !frozen(i))
        .map(|i| g[i])
        .fold(T::infinity(), T::min);
    let mut out: Vec<T> = (0..v.len())
        .map(|i| {
            if frozen(i) {
                T::zero()
            } else {
                v[i] * (-eta * (g[i] - shift)).exp()
            }
        })
        .collect();
    let z: T = out.iter().copied().sum();
    for c in out.iter_mut() {
        *c /= z;
        if *c < T::min_positive_value() && *c > T::zero() {
            *c = T::min_positive_value();
        }
    }
    out
}

/// Block mirror descent on the augmented Lagrangian: an entropic step on
/// every row of `W`, then (when the marginal may move) one on `q_Z`, each
/// with its own Armijo-controlled step size.
fn minimize_inner<T: Real>(
    lag: &Lagrangian<'_, T>,
    state: &mut Factored<T>,
    steps: &mut [T; 2],
    move_marginal: bool,
    tol: T,
) {
    let ky = state.ky;
    let window = 50;
    let mut history: Vec<T> = Vec::new();
    let mut value = lag.value(&state.joint());
    let armijo = |cand_value: T, value: T, lin: T, bregman: T, eta: T| {
        cand_value <= value + lin + bregman / eta + T::lit(1e-15)
    };
    for it in 0..20_000 {
        let grad = lag.gradient(&state.joint());
        let mut moved = false;
        for _ in 0..60 {
            let eta = steps[0];
            let mut w = Vec::with_capacity(state.w.len());
            let mut lin = T::zero();
            let mut bregman = T::zero();
            for x in 0..state.qz.len() {
                let row = &state.w[x * ky..(x + 1) * ky];
                let g = &grad[x * ky..(x + 1) * ky];
                if lag.frozen[x * ky] {
                    w.extend_from_slice(row);
                    continue;
                }
                let new_row = tilt(row, g, eta, |_| false);
                lin += state.qz[x]
                    * g.iter()
                        .zip(new_row.iter().zip(row))
                        .map(|(&gi, (&a, &b))| gi * (a - b))
                        .sum::<T>();
                bregman += state.qz[x] * kl_bits(&new_row, row) * T::LN_2();
                w.extend(new_row);
            }
            let cand = Factored {
                qz: state.qz.clone(),
                w,
                ky,
            };
            let cand_value = lag.value(&cand.joint());
            if armijo(cand_value, value, lin, bregman, eta) {
                moved |= cand_value < value;
                *state = cand;
                value = cand_value;
                steps[0] = eta * T::lit(1.5);
                break;
            }
            steps[0] = eta / T::lit(2.0);
        }
        if move_marginal {
            let grad = lag.gradient(&state.joint());
            let h: Vec<T> = (0..state.qz.len())
                .map(|x| {
                    (0..ky)
                        .map(|y| state.w[x * ky + y] * grad[x * ky + y])
                        .sum()
                })
                .collect();
            for _ in 0..60 {
                let eta = steps[1];
                let qz = tilt(&state.qz, &h, eta, |x| lag.frozen[x * ky]);
                let lin: T = h
                    .iter()
                    .zip(qz.iter().zip(&state.qz))
                    .map(|(&g, (&a, &b))| g * (a - b))
                    .sum();
                let bregman = kl_bits(&qz, &state.qz) * T::LN_2();
                let cand = Factored {
                    qz,
                    w: state.w.clone(),
                    ky,
                };
                let cand_value = lag.value(&cand.joint());
                if armijo(cand_value, value, lin, bregman, eta) {
                    moved |= cand_value < value;
                    *state = cand;
                    value = cand_value;
                    steps[1] = eta * T::lit(1.5);
                    break;
                }
                steps[1] = eta / T::lit(2.0);
            }
        }
        history.push(value);
        if !moved {
            break;
        }
        if it >= window && history[it - window] - value < tol {
            break;
        }
    }
}

fn augmented_lagrangian<T: Real>(
    lag: &mut Lagrangian<'_, T>,
    state: &mut Factored<T>,
    move_marginal: bool,
    inner_tol: T,
) {
    let (px, ky) = (lag.p, lag.ky);
    let mut steps = [T::one(); 2];
    let mut last_violation = T::infinity();
    let mut last_objective = T::infinity();
    for _ in 0..300 {
        minimize_inner(lag, state, &mut steps, move_marginal, inner_tol);
        let q = state.joint();
        let violation = max_violation(lag.cons, &q);
        // Complementary slackness: a slack constraint must carry no multiplier.
        let slackness = lag
            .cons
            .iter()
            .zip(&lag.mu)
            .map(|(c, &mu)| mu * (c.b - dot(&c.a, &q)).max(T::zero()))
            .fold(T::zero(), T::max);
        let rho = lag.rho;
        for (mu, c) in lag.mu.iter_mut().zip(lag.cons) {
            *mu = (*mu + rho * (dot(&c.a, &q) - c.b)).max(T::zero());
        }
        if violation > last_violation / T::lit(4.0) && lag.rho < T::lit(1e6) {
            lag.rho *= T::lit(4.0);
        }
        let objective = joint_objective(&q, px, ky);
        if violation < T::lit(1e-10)
            && slackness < T::lit(1e-10)
            && (last_objective - objective).abs() < inner_tol
        {
            break;
        }
        last_violation = violation;
        last_objective = objective;
    }
}

/// `inf D(q_ZY || p_X q_Y)` over the set `{ |q_Z - p_X|_1 <= eps, E_q d <= D }`,
/// with `q_Y` the column marginal of the optimization variable. Returns `+inf`
/// and no minimizer when the set is empty.
pub fn sanov_exponent<T: Real>(
    p: &Distribution<T>,
    y_support: &Alphabet,
    d: &DistortionSpec<T>,
    target: T,
    eps: T,
    tol: T,
) -> Result<ExponentResult<T>> {
    check_source(p, d)?;
    if y_support != d.output() {
        return invalid("output alphabet does not match distortion output alphabet");
    }
    if eps < T::zero() {
        return invalid("eps must be >= 0");
    }
    if tol <= T::zero() {
        return invalid("solver tolerance must be > 0");
    }
    let (kx, ky) = (p.alphabet().size(), y_support.size());
    if kx > 12 {
        return Err(Error::Resource(
            "exponent solver supports at most 12 input symbols".into(),
        ));
    }
    let px = p.probs();
    let infeasible = ExponentResult {
        exponent_bits: T::infinity(),
        minimizer: None,
        epsilon: eps,
        distortion_d: target,
    };
    let (feasible_q, feasible_dist) = min_distortion_point(px, d, eps);
    if feasible_dist > target + T::lit(1e-12) * target.abs().max(T::one()) {
        return Ok(infeasible);
    }
    let (y0, constant_dist) = best_constant(p, d);
    if constant_dist <= target {
        // p_X times a point mass is feasible and has zero divergence.
        let q = (0..kx * ky)
            .map(|i| if i % ky == y0 { px[i / ky] } else { T::zero() })
            .collect();
        let minimizer = JointDistribution::from_raw(p.alphabet().clone(), y_support.clone(), q);
        return Ok(ExponentResult {
            exponent_bits: T::zero(),
            minimizer: Some(minimizer),
            epsilon: eps,
            distortion_d: target,
        });
    }

    let mut cons = vec![Constraint {
        a: d.matrix().to_vec(),
        b: target,
    }];
    // With eps = 0 the marginal is pinned to p_X and never moves.
    let move_marginal = eps > T::zero();
    if move_marginal {
        for mask in 1..(1u32 << kx) - 1 {
            let sign = |x: usize| {
                if mask >> x & 1 == 1 {
                    T::one()
                } else {
                    -T::one()
                }
            };
            let a = (0..kx * ky).map(|i| sign(i / ky)).collect();
            let b = eps + (0..kx).map(|x| sign(x) * px[x]).sum::<T>();
            cons.push(Constraint { a, b });
        }
    }
    let frozen: Vec<bool> = (0..kx * ky).map(|i| px[i / ky] <= T::zero()).collect();

    // Start from q_Z = p_X and rows halfway between uniform and the
    // conditional of the feasible point.
    let half = T::lit(0.5);
    let uniform = T::one() / T::from_usize_lossy(ky);
    let mut w = Vec::with_capacity(kx * ky);
    for x in 0..kx {
        let frow = &feasible_q[x * ky..(x + 1) * ky];
        let fz: T = frow.iter().copied().sum();
        for &fv in frow {
            let cond = if fz > T::zero() { fv / fz } else { uniform };
            w.push(half * uniform + half * cond);
        }
    }
    let mut state = Factored {
        qz: px.to_vec(),
        w,
        ky,
    };

    let mut lag = Lagrangian {
        p: px,
        ky,
        cons: &cons,
        mu: vec![T::zero(); cons.len()],
        rho: T::lit(10.0),
        frozen,
    };
    let inner_tol = tol / T::lit(10.0) / T::lit(100.0);
    let matrix = d.matrix().to_vec();
    augmented_lagrangian(&mut lag, &mut state, move_marginal, inner_tol);
    let mut q = restore_feasibility(state.joint(), px, ky, &matrix, target, eps, &feasible_q);
    let mut exponent = joint_objective(&q, px, ky);
    // A collapsed output column is nearly a fixed point of the mirror steps;
    // pull the rows back toward uniform and solve again until nothing improves.
    for _ in 0..8 {
        state.w.iter_mut().for_each(|v| *v = half * (*v + uniform));
        lag.rho = T::lit(10.0);
        augmented_lagrangian(&mut lag, &mut state, move_marginal, inner_tol);
        let cand = restore_feasibility(state.joint(), px, ky, &matrix, target, eps, &feasible_q);
        let value = joint_objective(&cand, px, ky);
        let improved = value < exponent - tol / T::lit(10.0);
        if value < exponent {
            q = cand;
            exponent = value;
        }
        if !improved {
            break;
        }
    }
    let minimizer = JointDistribution::from_raw(p.alphabet().clone(), y_support.clone(), q);
    Ok(ExponentResult {
        exponent_bits: exponent,
        minimizer: Some(minimizer),
        epsilon: eps,
        distortion_d: target,
    })
}

/// `D(q_Z || p_X) + I(Z;Y)` for a joint `q`; equals the exponent objective.
pub fn objective_decomposition<T: Real>(
    q: &JointDistribution<T>,
    p: &Distribution<T>,
) -> Result<(T, T)> {
    let qz = q.row_marginal();
    Ok((kl_bits(qz.probs(), p.probs()), mutual_information(q)))
}

/// The exponent objective evaluated at an arbitrary joint.
pub fn exponent_objective<T: Real>(q: &JointDistribution<T>, p: &Distribution<T>) -> T {
    joint_objective(q.probs(), p.probs(), q.col_alphabet().size())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn h2(p: f64) -> f64 {
        crate::prob::binary_entropy(p)
    }

    fn ham() -> DistortionSpec<f64> {
        DistortionSpec::hamming(Alphabet::binary())
    }

    #[test]
    fn binary_hamming_examples() {
        let p = Distribution::bernoulli(0.5).unwrap();
        let r = rate_distortion(&p, &ham(), 0.1, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(r.rate_bits, 1.0 - h2(0.1), epsilon = 1e-4);
        assert_abs_diff_eq!(r.rate_bits, 0.5310, epsilon = 1e-4);
        assert!(r.achieved_distortion <= 0.1 + 1e-9);

        let p = Distribution::bernoulli(0.2).unwrap();
        let r = rate_distortion(&p, &ham(), 0.05, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(r.rate_bits, h2(0.2) - h2(0.05), epsilon = 1e-4);
        assert_abs_diff_eq!(r.rate_bits, 0.4356, epsilon = 1e-4);
    }

    #[test]
    fn zero_rate_at_d_max() {
        let p = Distribution::bernoulli(0.3).unwrap();
        let range = distortion_range(&p, &ham()).unwrap();
        assert_abs_diff_eq!(range.d_max, 0.3, epsilon = 1e-15);
        assert_eq!(range.d_min, 0.0);
        let r = rate_distortion(&p, &ham(), range.d_max, DEFAULT_TOL).unwrap();
        assert_eq!(r.rate_bits, 0.0);
        assert_eq!(r.test_channel.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn infeasible_distortion() {
        let a = Alphabet::binary();
        let d = DistortionSpec::new(a.clone(), a, &[vec![0.2, 1.0], vec![1.0, 0.2]]).unwrap();
        let p = Distribution::bernoulli(0.5).unwrap();
        assert!(matches!(
            rate_distortion(&p, &d, 0.1, DEFAULT_TOL),
            Err(Error::Infeasible(_))
        ));
        // Exactly at d_min: the limiting channel is deterministic, rate H(X).
        let r = rate_distortion(&p, &d, 0.2, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(r.rate_bits, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_distortion_range() {
        let a = Alphabet::indexed(3).unwrap();
        let d = DistortionSpec::constant(a.clone(), a.clone(), 0.7).unwrap();
        let p = Distribution::new(a, vec![0.2, 0.3, 0.5]).unwrap();
        let r = distortion_range(&p, &d).unwrap();
        assert_abs_diff_eq!(r.d_min, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.d_max, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn curve_is_monotone() {
        let p = Distribution::bernoulli(0.5).unwrap();
        let pts = rd_curve(&p, &ham(), &[0.05, 0.1, 0.2], DEFAULT_TOL).unwrap();
        for (pt, dd) in pts.iter().zip([0.05, 0.1, 0.2]) {
            assert_abs_diff_eq!(pt.rate_bits, 1.0 - h2(dd), epsilon = 1e-4);
        }
        assert!(pts.windows(2).all(|w| w[1].rate_bits <= w[0].rate_bits));
        let single = rd_curve(&p, &ham(), &[0.5], DEFAULT_TOL).unwrap();
        assert_eq!(single[0].rate_bits, 0.0);
        assert!(rd_curve(&p, &ham(), &[0.6], DEFAULT_TOL).is_err());
    }

    #[test]
    fn exponent_matches_rate_at_zero_eps() {
        let p = Distribution::bernoulli(0.5).unwrap();
        let e = sanov_exponent(&p, &Alphabet::binary(), &ham(), 0.1, 0.0, DEFAULT_TOL).unwrap();
        let r = rate_distortion(&p, &ham(), 0.1, DEFAULT_TOL).unwrap();
        assert!(
            (e.exponent_bits - r.rate_bits).abs() <= 2.0 * DEFAULT_TOL,
            "{} vs {}",
            e.exponent_bits,
            r.rate_bits
        );
        let wide = sanov_exponent(&p, &Alphabet::binary(), &ham(), 0.1, 0.2, DEFAULT_TOL).unwrap();
        assert!(wide.exponent_bits <= e.exponent_bits + 1e-9);
    }

    #[test]
    fn exponent_zero_at_d_max() {
        let p = Distribution::bernoulli(0.3).unwrap();
        let e = sanov_exponent(&p, &Alphabet::binary(), &ham(), 0.3, 0.0, DEFAULT_TOL).unwrap();
        assert!(e.exponent_bits.abs() <= 2.0 * DEFAULT_TOL);
    }

    #[test]
    fn exponent_infeasible_set() {
        let a = Alphabet::binary();
        let d =
            DistortionSpec::new(a.clone(), a.clone(), &[vec![0.2, 1.0], vec![1.0, 0.2]]).unwrap();
        let p = Distribution::bernoulli(0.5).unwrap();
        let e = sanov_exponent(&p, &a, &d, 0.1, 0.5, DEFAULT_TOL).unwrap();
        assert!(e.exponent_bits.is_infinite());
        assert!(e.minimizer.is_none());
    }

    #[test]
    fn minimizer_is_feasible_and_decomposes() {
        let a = Alphabet::indexed(3).unwrap();
        let d = DistortionSpec::new(
            a.clone(),
            a.clone(),
            &[
                vec![0.0, 1.0, 2.0],
                vec![1.0, 0.0, 1.0],
                vec![2.0, 1.0, 0.0],
            ],
        )
        .unwrap();
        let p = Distribution::new(a.clone(), vec![0.5, 0.3, 0.2]).unwrap();
        let e = sanov_exponent(&p, &a, &d, 0.3, 0.1, DEFAULT_TOL).unwrap();
        let q = e.minimizer.unwrap();
        assert!(q.expected_distortion(&d).unwrap() <= 0.3 + 1e-9);
        assert!(q.row_marginal().l1_distance(&p).unwrap() <= 0.1 + 1e-9);
        let (kl, mi) = objective_decomposition(&q, &p).unwrap();
        assert_abs_diff_eq!(kl + mi, e.exponent_bits, epsilon = 1e-9);
    }

    #[test]
    fn single_precision_solver() {
        let p = Distribution::<f32>::bernoulli(0.5).unwrap();
        let d = DistortionSpec::<f32>::hamming(Alphabet::binary());
        let r = rate_distortion(&p, &d, 0.1, 1e-4).unwrap();
        assert!((r.rate_bits as f64 - (1.0 - h2(0.1))).abs() < 2e-3);
    }
}
