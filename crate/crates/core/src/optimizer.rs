//! High-loss attack optimization and unambiguous-discrimination limits.
//!
//! Once the channel loss exceeds what discarding single- and two-photon
//! signals can absorb, the eavesdropper filters the n-photon signals with
//! 3 <= n <= s and measures everything beyond s unfiltered. The optimal
//! truncated attack solves
//!
//! ```text
//! maximize   sum_{n=3..s} w_n (gamma_0 + gamma_2)(gamma_1 + gamma_3)
//! subject to sum_{n=3..s} w_n sum_j gamma_j^2 = budget,
//!            0 <= gamma_j(n) <= c_j(n),
//! ```
//!
//! with w_n = mu^n/n! and budget = e^mu (1 - e^(-mu eta_t)) - P(N > s) e^mu —
//! the click mass left to the filtered range after the unfiltered tail is
//! accounted for. The maximized objective yields the error-rate upper bound
//! e^s.
//!
//! The problem separates across photon numbers once the budget constraint is
//! priced by a multiplier: the solver bisects the multiplier (budget usage is
//! monotone in it) and solves each 4-variable box-constrained subproblem by
//! projected gradient over deterministic multi-starts followed by exact
//! cyclic coordinate polish. With every subproblem at its box maximum and the
//! budget tight, the multiplier argument certifies a global maximum; an
//! independent projected-gradient oracle in the acceptance suite re-derives
//! the same optima from random restarts.
//!
//! The budget floor sum_n w_n 4 c_min(n)^2 is the unambiguous-discrimination
//! limit: uniform gains orthogonalize the four states, so below that floor
//! the filtered range contributes no errors at all.

use crate::attack::{regime_classify, ChannelScenario, FilterGains, GainSchedule, Regime};
use crate::error::Error;
use crate::scalar::{KahanSum, Real};
use crate::symstates::{coefficients, poisson_tail, DEFAULT_N_MAX};
use crate::Result;

/// Truncation used in the published figures.
pub const DEFAULT_S: u32 = 5;
/// Largest supported filter cutoff.
pub const MAX_S: u32 = 12;

/// How a high-loss solve terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SolverStatus {
    /// Budget constraint met within tolerance.
    Converged,
    /// Budget below the USD floor: uniform (error-free) gains scaled to the
    /// available budget; the filtered range contributes no errors.
    BudgetClamped,
    /// The bisection could not meet the budget within tolerance; the
    /// nearest-feasible solution is returned and the residual reported.
    Infeasible,
}

impl SolverStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::BudgetClamped => "budget-clamped",
            SolverStatus::Infeasible => "infeasible",
        }
    }
}

/// Solver tolerances and series truncation.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Absolute width at which the multiplier bisection stops.
    pub lambda_tol: f64,
    /// Step-norm tolerance of the inner projected gradient.
    pub gradient_tol: f64,
    /// Acceptable budget residual |usage - budget|.
    pub budget_tol: f64,
    /// Poisson series truncation for tail sums.
    pub n_max: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda_tol: 1e-12,
            gradient_tol: 1e-10,
            budget_tol: 1e-9,
            n_max: DEFAULT_N_MAX,
        }
    }
}

/// The finite-dimensional high-loss problem data.
#[derive(Debug, Clone)]
pub struct TruncatedProblem<T> {
    s: u32,
    /// w_n = mu^n/n! for n = 3..=s.
    weights: Vec<T>,
    /// Coefficient boxes c_j(n) for n = 3..=s.
    boxes: Vec<[T; 4]>,
    budget: T,
    /// sum_n w_n 4 c_min(n)^2 — budget usage of the pure USD configuration.
    usd_floor: T,
    /// sum_n w_n — budget usage of the identity configuration.
    box_mass: T,
}

impl<T: Real> TruncatedProblem<T> {
    pub fn new(mu: T, eta_t: T, s: u32) -> Result<Self> {
        if !(3..=MAX_S).contains(&s) {
            return Err(Error::out_of_range("s", s, "3..=12"));
        }
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(Error::out_of_range("mu", mu, "(0, inf)"));
        }
        if !(eta_t > T::zero() && eta_t <= T::one()) {
            return Err(Error::out_of_range("eta_t", eta_t, "(0, 1]"));
        }
        let mut weights = Vec::with_capacity((s - 2) as usize);
        let mut boxes = Vec::with_capacity((s - 2) as usize);
        let mut w = mu * mu * mu / T::of(6.0);
        let mut usd_floor = T::zero();
        let mut box_mass = T::zero();
        for n in 3..=s {
            if n > 3 {
                w = w * mu / T::of(n as f64);
            }
            let coeff = coefficients::<T>(n)?;
            let c_min = coeff.min_magnitude();
            weights.push(w);
            boxes.push(coeff.magnitudes());
            usd_floor = usd_floor + w * T::of(4.0) * c_min * c_min;
            box_mass = box_mass + w;
        }
        let click_scaled = -mu.exp() * (-mu * eta_t).exp_m1();
        let tail_w = poisson_tail(mu, s) * mu.exp();
        let budget = click_scaled - tail_w;
        Ok(Self {
            s,
            weights,
            boxes,
            budget,
            usd_floor,
            box_mass,
        })
    }

    pub fn budget(&self) -> T {
        self.budget
    }

    pub fn usd_floor(&self) -> T {
        self.usd_floor
    }

    pub fn box_mass(&self) -> T {
        self.box_mass
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    /// Photon-number weights w_n for n = 3..=s.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Coefficient boxes for n = 3..=s.
    pub fn boxes(&self) -> &[[T; 4]] {
        &self.boxes
    }

    /// Budget usage sum_n w_n sum_j gamma_j^2 of a candidate gain set.
    pub fn usage(&self, gains: &[[T; 4]]) -> T {
        let mut acc = KahanSum::new();
        for (w, g) in self.weights.iter().zip(gains) {
            acc.add(*w * g.iter().map(|&x| x * x).sum());
        }
        acc.value()
    }

    /// Objective sum_n w_n (g_0 + g_2)(g_1 + g_3) of a candidate gain set.
    pub fn objective(&self, gains: &[[T; 4]]) -> T {
        let mut acc = KahanSum::new();
        for (w, g) in self.weights.iter().zip(gains) {
            acc.add(*w * (g[0] + g[2]) * (g[1] + g[3]));
        }
        acc.value()
    }
}

/// A complete attack description for one operating point, in any regime.
#[derive(Debug, Clone)]
pub struct AttackSolution<T> {
    pub scenario: ChannelScenario<T>,
    pub regime: Regime,
    pub s: u32,
    pub schedule: GainSchedule<T>,
    /// Maximized sum_n w_n (gamma_0+gamma_2)(gamma_1+gamma_3) over the
    /// filtered range (closed-form value in the low-loss regimes).
    pub objective: T,
    /// Error rate e (low loss) or upper bound e^s (high loss).
    pub error_rate: T,
    /// Loss-matching residual of the schedule, in click-probability units.
    pub constraint_residual: T,
    pub status: SolverStatus,
}

/// Uniform gains gamma_j = c_min(n): the filter that renders the four
/// n-photon states exactly orthogonal, enabling error-free discrimination.
/// Needs n >= 3; below that some coefficient vanishes.
pub fn usd_gains<T: Real>(n: u32) -> Result<FilterGains<T>> {
    if n < 3 {
        return Err(Error::PhotonNumber { min: 3, got: n });
    }
    let c_min = coefficients::<T>(n)?.min_magnitude();
    debug_assert!(c_min > T::zero());
    FilterGains::new(n, [c_min; 4])
}

/// Probability that unambiguous discrimination of a weak coherent BB84 pulse
/// succeeds,
///
/// ```text
/// P_D = 1 - e^-mu (sqrt(2) sinh(mu/sqrt2) + 2 cosh(mu/sqrt2) - 1),
/// ```
///
/// evaluated through expm1 so the O(mu^3) result survives the cancellation
/// at small mu.
pub fn p_usd<T: Real>(mu: T) -> T {
    let plus = T::one() + T::FRAC_1_SQRT_2();
    let minus = T::one() - T::FRAC_1_SQRT_2();
    (-mu).exp_m1() - plus * (-minus * mu).exp_m1() - minus * (-plus * mu).exp_m1()
}

/// Loss limit of the truncated USD attack: the transmittance eta_t^s at
/// which USD-filtering every 3 <= n <= s exactly mimics the channel, and the
/// matching click probability P_s.
pub fn usd_threshold<T: Real>(mu: T, s: u32) -> Result<(T, T)> {
    if s < 3 {
        return Err(Error::out_of_range("s", s, "3.."));
    }
    if !(mu > T::zero()) || !mu.is_finite() {
        return Err(Error::out_of_range("mu", mu, "(0, inf)"));
    }
    let mut acc = KahanSum::new();
    let mut w = (-mu).exp() * mu * mu * mu / T::of(6.0);
    for n in 3..=s {
        if n > 3 {
            w = w * mu / T::of(n as f64);
        }
        let c_min = coefficients::<T>(n)?.min_magnitude();
        acc.add(w * T::of(4.0) * c_min * c_min);
    }
    acc.add(poisson_tail(mu, s));
    let p_s = acc.value();
    let eta = -(-p_s).ln_1p() / mu;
    Ok((eta, p_s))
}

/// Upper bound on the truncation suboptimality e^s - e,
///
/// ```text
/// e^s - e < e^-mu sum_{n>s} mu^n/n! / (1 - e^(-mu eta_t)).
/// ```
pub fn gap_bound<T: Real>(mu: T, eta_t: T, s: u32) -> T {
    poisson_tail(mu, s) / (-(-mu * eta_t).exp_m1())
}

/// sum_{n=from..n_max} mu^n/n! (1 - S(n))/2 with S(n) the identity-filter
/// cross sum: the error mass of unfiltered signals.
fn residual_error_series<T: Real>(mu: T, from: u32, n_max: u32) -> T {
    let mut acc = KahanSum::new();
    let mut w = T::one();
    for k in 1..=from {
        w = w * mu / T::of(k as f64);
    }
    let mut n = from;
    while n <= n_max {
        let cross = coefficients::<T>(n).expect("n >= 1").cross_sum();
        acc.add(w * (T::one() - cross) * T::half());
        n += 1;
        if n <= n_max {
            w = w * mu / T::of(n as f64);
        }
    }
    acc.value()
}

/// Exact single-coordinate maximizer of (g0+g2)(g1+g3) - lambda sum g^2
/// along coordinate `j`, holding the others fixed.
fn coordinate_update<T: Real>(g: &mut [T; 4], bounds: &[T; 4], lambda: T, j: usize) {
    let partner = match j {
        0 | 2 => g[1] + g[3],
        _ => g[0] + g[2],
    };
    g[j] = (partner / (T::two() * lambda)).max(T::zero()).min(bounds[j]);
}

fn lagrangian<T: Real>(g: &[T; 4], lambda: T) -> T {
    (g[0] + g[2]) * (g[1] + g[3]) - lambda * g.iter().map(|&x| x * x).sum()
}

/// Global maximizer of the 4-variable subproblem over its box, by projected
/// gradient from deterministic multi-starts followed by exact cyclic
/// coordinate polish.
fn inner_maximize<T: Real>(bounds: &[T; 4], lambda: T, options: &SolverOptions) -> [T; 4] {
    let mut starts: Vec<[T; 4]> = Vec::with_capacity(32);
    let c_min = bounds.iter().copied().fold(bounds[0], T::min);
    starts.push(*bounds);
    starts.push([c_min; 4]);
    starts.push(bounds.map(|b| b * T::half()));
    for f in [[0.9, 0.2, 0.9, 0.2], [0.2, 0.9, 0.2, 0.9], [0.7, 0.4, 0.3, 0.8]] {
        starts.push([
            bounds[0] * T::of(f[0]),
            bounds[1] * T::of(f[1]),
            bounds[2] * T::of(f[2]),
            bounds[3] * T::of(f[3]),
        ]);
    }
    // Stationary-point candidates for every clamp pattern: free even
    // coordinates sit at B/(2 lambda), free odd ones at A/(2 lambda), the
    // clamped ones at their bound; (A, B) solve a 2x2 linear system.
    for mask in 0u8..16 {
        let clamped = |j: usize| mask & (1 << j) != 0;
        let mut even_clamped = T::zero();
        let mut odd_clamped = T::zero();
        let mut n_even = T::zero();
        let mut n_odd = T::zero();
        for j in 0..4 {
            if clamped(j) {
                if j % 2 == 0 {
                    even_clamped += bounds[j];
                } else {
                    odd_clamped += bounds[j];
                }
            } else if j % 2 == 0 {
                n_even += T::one();
            } else {
                n_odd += T::one();
            }
        }
        let denom = T::one() - n_even * n_odd / (T::of(4.0) * lambda * lambda);
        if denom <= T::of(1e-12) {
            continue;
        }
        let a_sum = (even_clamped + n_even * odd_clamped / (T::two() * lambda)) / denom;
        let b_sum = odd_clamped + n_odd * a_sum / (T::two() * lambda);
        let value = |j: usize| -> T {
            if clamped(j) {
                bounds[j]
            } else if j % 2 == 0 {
                b_sum / (T::two() * lambda)
            } else {
                a_sum / (T::two() * lambda)
            }
        };
        let candidate = [value(0), value(1), value(2), value(3)];
        if candidate.iter().all(|&x| x >= -T::of(1e-12)) {
            starts.push(candidate.map(|x| x.max(T::zero())));
        }
    }

    let step_tol = T::of(options.gradient_tol);
    let mut best = [T::zero(); 4];
    let mut best_value = T::neg_infinity();
    for start in starts {
        let mut g = [
            start[0].min(bounds[0]),
            start[1].min(bounds[1]),
            start[2].min(bounds[2]),
            start[3].min(bounds[3]),
        ];
        // Projected gradient with backtracking.
        let mut step = T::one() / (T::two() * (T::one() + lambda));
        let mut value = lagrangian(&g, lambda);
        for _ in 0..200 {
            let a_sum = g[0] + g[2];
            let b_sum = g[1] + g[3];
            let grad = [
                b_sum - T::two() * lambda * g[0],
                a_sum - T::two() * lambda * g[1],
                b_sum - T::two() * lambda * g[2],
                a_sum - T::two() * lambda * g[3],
            ];
            let mut candidate = [T::zero(); 4];
            let mut moved = T::zero();
            for j in 0..4 {
                candidate[j] = (g[j] + step * grad[j]).max(T::zero()).min(bounds[j]);
                moved = moved + (candidate[j] - g[j]).abs();
            }
            let candidate_value = lagrangian(&candidate, lambda);
            if candidate_value < value {
                step = step * T::half();
                if step < T::of(1e-8) {
                    break;
                }
                continue;
            }
            let improved = candidate_value - value;
            g = candidate;
            value = candidate_value;
            if moved < step_tol && improved < step_tol {
                break;
            }
        }
        // Exact cyclic coordinate polish to a fixed point.
        for _ in 0..500 {
            let before = g;
            for j in 0..4 {
                coordinate_update(&mut g, bounds, lambda, j);
            }
            let drift = (0..4)
                .map(|j| (g[j] - before[j]).abs())
                .fold(T::zero(), T::max);
            if drift < T::of(1e-16) {
                break;
            }
        }
        let polished_value = lagrangian(&g, lambda);
        if polished_value > best_value {
            best_value = polished_value;
            best = g;
        }
    }
    canonicalize(&mut best, bounds);
    best
}

/// Among objective-equivalent solutions pick the representative with
/// gamma_0 >= gamma_2 and gamma_1 >= gamma_3 where the boxes permit the
/// swap. Keeps solver output reproducible.
fn canonicalize<T: Real>(g: &mut [T; 4], bounds: &[T; 4]) {
    if (bounds[0] - bounds[2]).abs() < T::of(1e-14) && g[0] < g[2] {
        g.swap(0, 2);
    }
    if (bounds[1] - bounds[3]).abs() < T::of(1e-14) && g[1] < g[3] {
        g.swap(1, 3);
    }
}

struct DualSolve<T> {
    gains: Vec<[T; 4]>,
    usage: T,
}

fn solve_at_lambda<T: Real>(
    problem: &TruncatedProblem<T>,
    lambda: T,
    options: &SolverOptions,
) -> DualSolve<T> {
    let gains: Vec<[T; 4]> = problem
        .boxes
        .iter()
        .map(|bounds| inner_maximize(bounds, lambda, options))
        .collect();
    let usage = problem.usage(&gains);
    DualSolve { gains, usage }
}

/// Solve the truncated high-loss problem at one operating point.
///
/// Requires the scenario to classify as high loss. Below the truncated USD
/// threshold the budget is clamped: uniform sub-USD gains spend exactly the
/// available budget with zero filtered-range error, which is optimal there.
pub fn solve_high_loss<T: Real>(
    mu: T,
    eta_t: T,
    s: u32,
    options: &SolverOptions,
) -> Result<AttackSolution<T>> {
    let regime = regime_classify(mu, eta_t);
    if regime != Regime::HighLoss {
        return Err(Error::RegimeMismatch {
            expected: "high-loss",
            found: regime.label(),
        });
    }
    let problem = TruncatedProblem::new(mu, eta_t, s)?;
    let budget = problem.budget();
    let box_mass = problem.box_mass();
    let floor = problem.usd_floor();
    if budget > box_mass * (T::one() + T::of(1e-12)) {
        return Err(Error::InfeasibleBudget {
            budget: budget.to_f64().unwrap_or(f64::NAN),
            reason: "budget exceeds the identity-filter mass; not a high-loss point",
        });
    }

    let slack = T::of(1e-12) * floor;
    let (gains, status) = if budget <= floor + slack {
        // At or below the truncated USD threshold.
        let scale = (budget.max(T::zero()) / floor).sqrt().min(T::one());
        let gains: Vec<[T; 4]> = problem
            .boxes
            .iter()
            .map(|bounds| {
                let c_min = bounds.iter().copied().fold(bounds[0], T::min);
                [c_min * scale; 4]
            })
            .collect();
        let status = if budget >= floor - slack {
            SolverStatus::Converged
        } else {
            SolverStatus::BudgetClamped
        };
        (gains, status)
    } else if budget >= box_mass * (T::one() - T::of(1e-14)) {
        // Exactly at the discard-doubles boundary: identity gains.
        (problem.boxes.clone(), SolverStatus::Converged)
    } else {
        // Bisection on the budget multiplier; usage is monotone
        // nonincreasing in lambda.
        let mut lo = T::of(1e-9);
        let mut hi = T::one();
        let mut sol_lo = solve_at_lambda(&problem, lo, options);
        let mut sol_hi = solve_at_lambda(&problem, hi, options);
        debug_assert!(sol_lo.usage >= budget);
        let lambda_tol = T::of(options.lambda_tol);
        for _ in 0..120 {
            if hi - lo <= lambda_tol {
                break;
            }
            let mid = (lo + hi) * T::half();
            let sol_mid = solve_at_lambda(&problem, mid, options);
            if sol_mid.usage > budget {
                lo = mid;
                sol_lo = sol_mid;
            } else {
                hi = mid;
                sol_hi = sol_mid;
            }
        }
        let budget_tol = T::of(options.budget_tol);
        let pick_lo = (sol_lo.usage - budget).abs() <= (sol_hi.usage - budget).abs();
        let nearest = if pick_lo { &sol_lo } else { &sol_hi };
        if (nearest.usage - budget).abs() <= budget_tol {
            (nearest.gains.clone(), SolverStatus::Converged)
        } else {
            // Degenerate multiplier plateau: blend the bracketing solutions.
            // Both ends are box-feasible and the box is convex, so every
            // blend stays feasible.
            let blend = |t: T| -> Vec<[T; 4]> {
                sol_lo
                    .gains
                    .iter()
                    .zip(&sol_hi.gains)
                    .map(|(a, b)| {
                        let mut g = [T::zero(); 4];
                        for j in 0..4 {
                            g[j] = a[j] * t + b[j] * (T::one() - t);
                        }
                        g
                    })
                    .collect()
            };
            let mut t_lo = T::zero();
            let mut t_hi = T::one();
            for _ in 0..120 {
                let t = (t_lo + t_hi) * T::half();
                if problem.usage(&blend(t)) > budget {
                    t_hi = t;
                } else {
                    t_lo = t;
                }
            }
            let blended = blend((t_lo + t_hi) * T::half());
            let status = if (problem.usage(&blended) - budget).abs() <= budget_tol {
                SolverStatus::Converged
            } else {
                SolverStatus::Infeasible
            };
            (blended, status)
        }
    };

    let objective = problem.objective(&gains);
    let usage = problem.usage(&gains);

    // e^s assembled in residual form so the value stays exact as it
    // approaches zero at the USD threshold:
    // e^s = e^-mu [ (budget - M)/2 + sum_{n>s} w_n (1 - S(n))/2 ] / click.
    let click = -(-mu * eta_t).exp_m1();
    let tail_error = residual_error_series(mu, s + 1, options.n_max);
    let error_rate =
        ((-mu).exp() * ((budget - objective) * T::half() + tail_error) / click).max(T::zero());

    let mut schedule = GainSchedule::identity(options.n_max);
    schedule.set(FilterGains::discard(1)?);
    schedule.set(FilterGains::discard(2)?);
    for (i, g) in gains.iter().enumerate() {
        schedule.set(FilterGains::new(3 + i as u32, *g)?);
    }
    let constraint_residual = (-mu).exp() * (usage - budget);

    Ok(AttackSolution {
        scenario: ChannelScenario::new(mu, eta_t, T::one())?,
        regime,
        s,
        schedule,
        objective,
        error_rate,
        constraint_residual,
        status,
    })
}

/// Solve an operating point in whatever regime it falls in, producing the
/// complete attack description the joint-distribution and simulation stages
/// consume.
pub fn solve_attack<T: Real>(
    scenario: &ChannelScenario<T>,
    s: u32,
    options: &SolverOptions,
) -> Result<AttackSolution<T>> {
    let mu = scenario.mu();
    let eta_t = scenario.eta_t();
    let regime = regime_classify(mu, eta_t);
    if regime == Regime::HighLoss {
        let mut solution = solve_high_loss(mu, eta_t, s, options)?;
        solution.scenario = *scenario;
        return Ok(solution);
    }
    let schedule = crate::attack::case1_schedule(mu, eta_t, options.n_max)?;
    let error_rate = crate::attack::error_rate_case1(mu, eta_t, options.n_max)?;
    let mut objective = KahanSum::new();
    let mut w = mu;
    for n in 1..=options.n_max {
        if n > 1 {
            w = w * mu / T::of(n as f64);
        }
        objective.add(w * schedule.gains(n)?.cross_sum());
    }
    let constraint_residual = crate::attack::loss_constraint_residual(mu, eta_t, &schedule);
    Ok(AttackSolution {
        scenario: *scenario,
        regime,
        s,
        schedule,
        objective: objective.value(),
        error_rate,
        constraint_residual,
        status: SolverStatus::Converged,
    })
}
