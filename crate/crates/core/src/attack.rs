//! The intercept-resend attack: filter operation, square-root measurement,
//! loss matching, and the closed-form error rates at low channel loss.
//!
//! For every n-photon signal the eavesdropper applies a two-outcome filter
//! whose success branch rescales the symmetric-state coefficients c_j(n) to
//! gains gamma_j(n) = alpha_j(n) c_j(n), with |alpha_j| <= 1. A successful
//! filter is followed by the square-root measurement, which is the
//! minimum-error measurement for equiprobable symmetric pure states. Failed
//! filters are disguised as channel loss, which pins the total success
//! probability to the click rate Bob expects:
//!
//! ```text
//! e^-mu sum_n mu^n/n! Pr_succ(n) = 1 - e^(-mu eta_t).
//! ```
//!
//! Three loss regimes admit closed forms (no filtering helps for n <= 2, so
//! the eavesdropper spends the available loss discarding single- then
//! two-photon signals); the genuinely high-loss regime is handled by the
//! [`crate::optimizer`] module.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::scalar::{KahanSum, Real};
use crate::symstates::{coefficients, poisson_weight};
use crate::Result;

/// Box-constrained filter gains gamma_j(n) for one photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterGains<T> {
    n: u32,
    gamma: [T; 4],
}

impl<T: Real> FilterGains<T> {
    /// Gains validated against 0 <= gamma_j <= c_j(n) (the Kraus validity
    /// condition |alpha_j|^2 <= 1). A small slack absorbs roundoff from
    /// optimizers that land on the box boundary.
    pub fn new(n: u32, gamma: [T; 4]) -> Result<Self> {
        let c = coefficients::<T>(n)?.magnitudes();
        let slack = T::of(1e-12);
        for (j, (&g, &bound)) in gamma.iter().zip(c.iter()).enumerate() {
            if !(g >= T::zero()) || g > bound + slack {
                return Err(Error::GainAboveBound {
                    index: j,
                    gamma: g.to_f64().unwrap_or(f64::NAN),
                    bound: bound.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self {
            n,
            gamma: gamma
                .iter()
                .zip(c.iter())
                .map(|(&g, &bound)| g.min(bound))
                .collect::<Vec<_>>()
                .try_into()
                .unwrap(),
        })
    }

    /// The identity filter: gamma_j = c_j(n), success probability one.
    pub fn identity(n: u32) -> Result<Self> {
        let c = coefficients::<T>(n)?.magnitudes();
        Ok(Self { n, gamma: c })
    }

    /// Identity filter scaled to success probability `p`:
    /// gamma_j = sqrt(p) c_j(n).
    pub fn scaled_identity(n: u32, p: T) -> Result<Self> {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::out_of_range("success probability", p, "[0, 1]"));
        }
        let c = coefficients::<T>(n)?.magnitudes();
        let root = p.sqrt();
        Ok(Self {
            n,
            gamma: c.map(|x| x * root),
        })
    }

    /// All gains zero: the filter always fails and the signal is discarded.
    pub fn discard(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::PhotonNumber { min: 1, got: 0 });
        }
        Ok(Self {
            n,
            gamma: [T::zero(); 4],
        })
    }

    pub fn photon_number(&self) -> u32 {
        self.n
    }

    pub fn gamma(&self) -> [T; 4] {
        self.gamma
    }

    /// Filter success probability sum_j gamma_j^2.
    pub fn success_prob(&self) -> T {
        self.gamma.iter().map(|&g| g * g).sum()
    }

    /// (gamma_0 + gamma_2)(gamma_1 + gamma_3), the term this photon number
    /// contributes to the error-rate objective.
    pub fn cross_sum(&self) -> T {
        (self.gamma[0] + self.gamma[2]) * (self.gamma[1] + self.gamma[3])
    }
}

/// See [`FilterGains::success_prob`].
pub fn filter_success_prob<T: Real>(gains: &FilterGains<T>) -> T {
    gains.success_prob()
}

/// Square-root-measurement outcome probabilities for one filtered n-photon
/// signal set. The matrix Pr_{k k~} is circulant: it depends on k and the
/// measured label k~ only through (k~ - k) mod 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrmProbabilities<T> {
    by_shift: [T; 4],
}

impl<T: Real> SrmProbabilities<T> {
    /// Probability of measuring `k_tilde` when the filtered input was `k`.
    pub fn probability(&self, k: u8, k_tilde: u8) -> T {
        self.by_shift[((k_tilde + 4 - k) % 4) as usize]
    }

    /// Probabilities indexed by the shift (k~ - k) mod 4.
    pub fn by_shift(&self) -> [T; 4] {
        self.by_shift
    }

    /// One row of the 4x4 matrix.
    pub fn row(&self, k: u8) -> [T; 4] {
        [
            self.probability(k, 0),
            self.probability(k, 1),
            self.probability(k, 2),
            self.probability(k, 3),
        ]
    }
}

/// Square-root-measurement probabilities
///
/// ```text
/// Pr_{k k~}(n) = sum_{l,m} |gamma_l gamma_m| cos(2 pi (k~-k)(l-m)/4) / (4 Pr_succ)
/// ```
///
/// reduced over the shift classes of (l - m) mod 4.
pub fn srm_probabilities<T: Real>(gains: &FilterGains<T>) -> Result<SrmProbabilities<T>> {
    let p = gains.success_prob();
    if p <= T::zero() {
        return Err(Error::ZeroGains);
    }
    let [g0, g1, g2, g3] = gains.gamma();
    let norm = T::of(4.0) * p;
    let total = g0 + g1 + g2 + g3;
    let even_odd = (g0 - g2) * (g0 - g2) + (g1 - g3) * (g1 - g3);
    let alternating = g0 + g2 - g1 - g3;
    Ok(SrmProbabilities {
        by_shift: [
            total * total / norm,
            even_odd / norm,
            alternating * alternating / norm,
            even_odd / norm,
        ],
    })
}

/// Partial error rate of an n-photon signal under the given gains:
/// the orthogonal outcome counts fully, the two adjacent outcomes count
/// half, which collapses to
///
/// ```text
/// e(n) = 1/2 - (gamma_0 + gamma_2)(gamma_1 + gamma_3) / (2 sum_j gamma_j^2).
/// ```
pub fn partial_error<T: Real>(gains: &FilterGains<T>) -> Result<T> {
    let p = gains.success_prob();
    if p <= T::zero() {
        return Err(Error::ZeroGains);
    }
    Ok(T::half() - gains.cross_sum() / (T::two() * p))
}

/// A channel/detector operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScenario<T> {
    mu: T,
    eta_t: T,
    eta_det: T,
}

impl<T: Real> ChannelScenario<T> {
    pub fn new(mu: T, eta_t: T, eta_det: T) -> Result<Self> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(Error::out_of_range("mu", mu, "(0, inf)"));
        }
        if !(eta_t > T::zero() && eta_t <= T::one()) {
            return Err(Error::out_of_range("eta_t", eta_t, "(0, 1]"));
        }
        if !(eta_det > T::zero() && eta_det <= T::one()) {
            return Err(Error::out_of_range("eta_det", eta_det, "(0, 1]"));
        }
        Ok(Self { mu, eta_t, eta_det })
    }

    /// Operating point specified by channel loss in dB.
    pub fn from_loss_db(mu: T, loss_db: T, eta_det: T) -> Result<Self> {
        if loss_db < T::zero() {
            return Err(Error::out_of_range("loss_db", loss_db, "[0, inf)"));
        }
        let eta_t = T::of(10.0).powf(-loss_db / T::of(10.0));
        Self::new(mu, eta_t, eta_det)
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn eta_t(&self) -> T {
        self.eta_t
    }

    pub fn eta_det(&self) -> T {
        self.eta_det
    }

    /// Channel loss in dB, -10 log10(eta_t) (standard fiber convention).
    pub fn loss_db(&self) -> T {
        -T::of(10.0) * self.eta_t.log10()
    }

    /// Expected click rate at Bob's side, 1 - e^(-mu eta_t).
    pub fn click_rate(&self) -> T {
        -(-self.mu * self.eta_t).exp_m1()
    }

    pub fn regime(&self) -> Regime {
        regime_classify(self.mu, self.eta_t)
    }
}

/// Channel-loss regime of the optimal attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Regime {
    /// eta_t = 1: the filter is the identity for every n.
    NoLoss,
    /// Available loss is spent discarding single-photon signals.
    DiscardSingles,
    /// Singles are gone; loss is spent discarding two-photon signals.
    DiscardDoubles,
    /// Singles and doubles are gone; multi-photon signals get filtered.
    HighLoss,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::NoLoss => "no-loss",
            Regime::DiscardSingles => "discard-singles",
            Regime::DiscardDoubles => "discard-doubles",
            Regime::HighLoss => "high-loss",
        }
    }
}

/// Transmittance below which every single-photon signal is discarded:
/// 1 - ln(1 + mu)/mu.
pub fn discard_singles_boundary<T: Real>(mu: T) -> T {
    T::one() - (T::one() + mu).ln() / mu
}

/// Transmittance below which every two-photon signal is also discarded:
/// 1 - ln(1 + mu + mu^2/2)/mu.
pub fn discard_doubles_boundary<T: Real>(mu: T) -> T {
    T::one() - (T::one() + mu + mu * mu * T::half()).ln() / mu
}

/// Classify an operating point. Exact boundary hits resolve to the
/// higher-loss regime; the error-rate formulas agree there, so the choice is
/// observationally irrelevant.
pub fn regime_classify<T: Real>(mu: T, eta_t: T) -> Regime {
    if eta_t >= T::one() {
        Regime::NoLoss
    } else if eta_t > discard_singles_boundary(mu) {
        Regime::DiscardSingles
    } else if eta_t > discard_doubles_boundary(mu) {
        Regime::DiscardDoubles
    } else {
        Regime::HighLoss
    }
}

/// Probability of discarding single-photon signals in the discard-singles
/// regime, (e^(mu(1 - eta_t)) - 1)/mu.
pub fn pr_fail_single<T: Real>(mu: T, eta_t: T) -> Result<T> {
    match regime_classify(mu, eta_t) {
        Regime::NoLoss | Regime::DiscardSingles => {}
        other => {
            return Err(Error::RegimeMismatch {
                expected: "no-loss or discard-singles",
                found: other.label(),
            })
        }
    }
    Ok((mu * (T::one() - eta_t)).exp_m1() / mu)
}

/// sum_{n=from}^{n_max} mu^n/n! (c_0 + c_2)(c_1 + c_3), the identity-filter
/// part of the error-rate series.
fn cross_sum_series<T: Real>(mu: T, from: u32, n_max: u32) -> T {
    debug_assert!(from >= 1);
    let mut weight = T::one();
    for k in 1..from {
        weight = weight * mu / T::of(k as f64);
    }
    weight = weight * mu / T::of(from as f64).max(T::one());
    // weight now holds mu^from / from!
    let mut acc = KahanSum::new();
    let mut n = from;
    loop {
        let cross = coefficients::<T>(n).expect("n >= 1").cross_sum();
        acc.add(weight * cross);
        if n == n_max {
            break;
        }
        n += 1;
        weight = weight * mu / T::of(n as f64);
    }
    acc.value()
}

fn assemble_error<T: Real>(mu: T, eta_t: T, bracket: T) -> T {
    let click = -(-mu * eta_t).exp_m1();
    T::half() * (T::one() - (-mu).exp() * bracket / click)
}

/// Error rate at eta_t = 1: identity filter for every photon number.
pub fn error_rate_noloss<T: Real>(mu: T, n_max: u32) -> T {
    assemble_error(mu, T::one(), cross_sum_series(mu, 1, n_max))
}

/// Error rate while single-photon signals are being discarded.
pub fn error_rate_discard_singles<T: Real>(mu: T, eta_t: T, n_max: u32) -> T {
    let single_term = T::half() * (mu - (mu * (T::one() - eta_t)).exp_m1());
    assemble_error(mu, eta_t, single_term + cross_sum_series(mu, 2, n_max))
}

/// Error rate while two-photon signals are being discarded.
pub fn error_rate_discard_doubles<T: Real>(mu: T, eta_t: T, n_max: u32) -> T {
    let double_term = (mu + mu * mu * T::half() - (mu * (T::one() - eta_t)).exp_m1())
        * T::FRAC_1_SQRT_2();
    assemble_error(mu, eta_t, double_term + cross_sum_series(mu, 3, n_max))
}

/// Closed-form error rate in the three low-loss regimes. High-loss points
/// are rejected; they need the numerical optimizer.
pub fn error_rate_case1<T: Real>(mu: T, eta_t: T, n_max: u32) -> Result<T> {
    match regime_classify(mu, eta_t) {
        Regime::NoLoss => Ok(error_rate_noloss(mu, n_max)),
        Regime::DiscardSingles => Ok(error_rate_discard_singles(mu, eta_t, n_max)),
        Regime::DiscardDoubles => Ok(error_rate_discard_doubles(mu, eta_t, n_max)),
        Regime::HighLoss => Err(Error::RegimeMismatch {
            expected: "no-loss, discard-singles or discard-doubles",
            found: Regime::HighLoss.label(),
        }),
    }
}

/// Filter gains for every photon number up to `n_max`: explicitly stored
/// entries, identity elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule<T> {
    explicit: BTreeMap<u32, FilterGains<T>>,
    n_max: u32,
}

impl<T: Real> GainSchedule<T> {
    /// The identity schedule: no filtering anywhere.
    pub fn identity(n_max: u32) -> Self {
        Self {
            explicit: BTreeMap::new(),
            n_max,
        }
    }

    pub fn set(&mut self, gains: FilterGains<T>) {
        self.explicit.insert(gains.photon_number(), gains);
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    /// Gains for photon number `n` (identity where nothing explicit is set).
    pub fn gains(&self, n: u32) -> Result<FilterGains<T>> {
        match self.explicit.get(&n) {
            Some(g) => Ok(*g),
            None => FilterGains::identity(n),
        }
    }

    /// Filter success probability for photon number `n`.
    pub fn success_prob(&self, n: u32) -> T {
        match self.explicit.get(&n) {
            Some(g) => g.success_prob(),
            None => T::one(),
        }
    }

    pub fn explicit_entries(&self) -> impl Iterator<Item = (&u32, &FilterGains<T>)> {
        self.explicit.iter()
    }
}

/// Signed loss-matching residual
///
/// ```text
/// e^-mu sum_n mu^n/n! Pr_succ(n) - (1 - e^(-mu eta_t));
/// ```
///
/// zero when the schedule exactly mimics the channel loss.
pub fn loss_constraint_residual<T: Real>(mu: T, eta_t: T, schedule: &GainSchedule<T>) -> T {
    let mut acc = KahanSum::new();
    for n in 1..=schedule.n_max() {
        acc.add(poisson_weight(mu, n) * schedule.success_prob(n));
    }
    acc.value() - (-(-mu * eta_t).exp_m1())
}

/// Generic error-rate evaluator over an arbitrary gain schedule,
///
/// ```text
/// e = e^-mu / (1 - e^(-mu eta_t)) sum_n mu^n/n! Pr_succ(n) e(n),
/// ```
///
/// assembled from [`partial_error`], [`FilterGains::success_prob`] and the
/// Poisson weights. Discarded photon numbers contribute nothing.
pub fn error_rate_from_gains<T: Real>(
    mu: T,
    eta_t: T,
    schedule: &GainSchedule<T>,
) -> Result<T> {
    let mut acc = KahanSum::new();
    for n in 1..=schedule.n_max() {
        let gains = schedule.gains(n)?;
        let succ = gains.success_prob();
        if succ > T::zero() {
            acc.add(poisson_weight(mu, n) * succ * partial_error(&gains)?);
        }
    }
    let click = -(-mu * eta_t).exp_m1();
    if click <= T::zero() {
        return Err(Error::NoClicks);
    }
    Ok(acc.value() / click)
}

/// The explicit gain schedule realizing a low-loss-regime attack: scaled or
/// discarded filters for n <= 2 per regime, identity beyond. Proportional
/// gains are exactly optimal for n = 1, 2, so the scaled identity is exact,
/// not a heuristic.
pub fn case1_schedule<T: Real>(mu: T, eta_t: T, n_max: u32) -> Result<GainSchedule<T>> {
    let mut schedule = GainSchedule::identity(n_max);
    match regime_classify(mu, eta_t) {
        Regime::NoLoss => {}
        Regime::DiscardSingles => {
            let succ = T::one() - pr_fail_single(mu, eta_t)?;
            schedule.set(FilterGains::scaled_identity(1, succ.max(T::zero()))?);
        }
        Regime::DiscardDoubles => {
            schedule.set(FilterGains::discard(1)?);
            let numerator = mu + mu * mu * T::half() - (mu * (T::one() - eta_t)).exp_m1();
            let succ = numerator / (mu * mu * T::half());
            schedule.set(FilterGains::scaled_identity(
                2,
                succ.max(T::zero()).min(T::one()),
            )?);
        }
        Regime::HighLoss => {
            return Err(Error::RegimeMismatch {
                expected: "no-loss, discard-singles or discard-doubles",
                found: Regime::HighLoss.label(),
            })
        }
    }
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symstates::DEFAULT_N_MAX;
    use proptest::prelude::*;

    fn gains(n: u32, g: [f64; 4]) -> FilterGains<f64> {
        FilterGains::new(n, g).unwrap()
    }

    /// Brute-force evaluation of the SRM probability via the complex
    /// double sum, independent of the reduced shift-class formula.
    fn srm_brute_force(g: &FilterGains<f64>, k: u8, k_tilde: u8) -> f64 {
        let gamma = g.gamma();
        let shift = (k_tilde as i32 - k as i32).rem_euclid(4);
        let mut re = 0.0;
        for l in 0..4i32 {
            for m in 0..4i32 {
                let phase = std::f64::consts::PI * (shift * (l - m)) as f64 / 2.0;
                re += gamma[l as usize] * gamma[m as usize] * phase.cos();
            }
        }
        re / (4.0 * g.success_prob())
    }

    #[test]
    fn success_prob_identity_and_uniform() {
        assert!((FilterGains::<f64>::identity(7).unwrap().success_prob() - 1.0).abs() < 1e-14);
        let g = gains(3, [0.3535533905932738; 4]);
        assert!((g.success_prob() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn box_constraint_enforced() {
        // c_2(1) = 0, so any positive gamma_2 is invalid for n = 1.
        assert!(matches!(
            FilterGains::new(1, [0.1, 0.1, 0.1, 0.0]),
            Err(Error::GainAboveBound { index: 2, .. })
        ));
        assert!(FilterGains::new(1, [0.5, 0.5, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn srm_identity_single_photon() {
        // Frozen from the brute-force complex sum with c(1) = (r, r, 0, 0).
        let srm = srm_probabilities(&FilterGains::<f64>::identity(1).unwrap()).unwrap();
        let by_shift = srm.by_shift();
        assert!((by_shift[0] - 0.5).abs() < 1e-14);
        assert!((by_shift[1] - 0.25).abs() < 1e-14);
        assert!(by_shift[2].abs() < 1e-14);
        assert!((by_shift[3] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn srm_uniform_gains_are_orthogonal() {
        let srm = srm_probabilities(&gains(3, [0.2; 4])).unwrap();
        assert!((srm.probability(1, 1) - 1.0).abs() < 1e-14);
        for k_tilde in [0, 2, 3] {
            assert!(srm.probability(1, k_tilde).abs() < 1e-14);
        }
    }

    #[test]
    fn srm_matches_brute_force() {
        let cases = [
            gains(3, [0.3, 0.6, 0.1, 0.35]),
            gains(4, [0.35, 0.2, 0.6, 0.5]),
            gains(5, [0.433, 0.1, 0.559, 0.2]),
            FilterGains::identity(2).unwrap(),
        ];
        for g in &cases {
            let srm = srm_probabilities(g).unwrap();
            for k in 0..4u8 {
                let mut row_sum = 0.0;
                for k_tilde in 0..4u8 {
                    let brute = srm_brute_force(g, k, k_tilde);
                    assert!((srm.probability(k, k_tilde) - brute).abs() < 1e-13);
                    row_sum += brute;
                }
                assert!((row_sum - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_gains_rejected() {
        let dead = FilterGains::<f64>::discard(3).unwrap();
        assert!(matches!(srm_probabilities(&dead), Err(Error::ZeroGains)));
        assert!(matches!(partial_error(&dead), Err(Error::ZeroGains)));
    }

    #[test]
    fn partial_error_identity_values() {
        let e1 = partial_error(&FilterGains::<f64>::identity(1).unwrap()).unwrap();
        assert!((e1 - 0.25).abs() < 1e-14);
        let e2 = partial_error(&FilterGains::<f64>::identity(2).unwrap()).unwrap();
        assert!((e2 - (2.0 - std::f64::consts::SQRT_2) / 4.0).abs() < 1e-14);
        let e3 = partial_error(&FilterGains::<f64>::identity(3).unwrap()).unwrap();
        assert!((e3 - 0.033493649053890345).abs() < 1e-14);
    }

    #[test]
    fn regime_boundaries() {
        assert_eq!(regime_classify(0.1, 1.0), Regime::NoLoss);
        assert_eq!(regime_classify(0.1, 0.05), Regime::DiscardSingles);
        assert_eq!(regime_classify(0.1, 0.002), Regime::DiscardDoubles);
        assert_eq!(regime_classify(0.1, 0.001), Regime::HighLoss);
        // Frozen boundary values for mu = 0.1.
        assert!((discard_singles_boundary(0.1f64) - 0.04689820195675140).abs() < 1e-15);
        assert!((discard_doubles_boundary(0.1f64) - 0.0015466503028386115).abs() < 1e-15);
        // Exact boundary hits resolve to the higher-loss regime.
        assert_eq!(
            regime_classify(0.1, discard_singles_boundary(0.1)),
            Regime::DiscardDoubles
        );
        assert_eq!(
            regime_classify(0.1, discard_doubles_boundary(0.1)),
            Regime::HighLoss
        );
    }

    #[test]
    fn pr_fail_single_values() {
        assert!(pr_fail_single(0.1f64, 1.0).unwrap().abs() < 1e-15);
        let at_boundary: f64 = pr_fail_single(0.1, discard_singles_boundary(0.1) + 1e-15).unwrap();
        assert!((at_boundary - 1.0).abs() < 1e-12);
        assert!((pr_fail_single(0.1f64, 0.5).unwrap() - 0.5127109637602404).abs() < 1e-15);
        assert!(pr_fail_single(0.1f64, 0.001).is_err());
    }

    #[test]
    fn case1_error_rates_frozen() {
        // Values cross-checked against an independent 50-digit evaluation
        // of the three closed forms.
        let nmax = DEFAULT_N_MAX;
        assert!((error_rate_case1(0.1f64, 1.0, nmax).unwrap() - 0.24472437293305913).abs() < 1e-14);
        assert!((error_rate_case1(0.1f64, 0.1, nmax).unwrap() - 0.19954433116858783).abs() < 1e-14);
        let eta_25db = 10f64.powf(-2.5);
        assert!(
            (error_rate_case1(0.1, eta_25db, nmax).unwrap() - 0.09099511311680918).abs() < 1e-14
        );
        assert!(error_rate_case1(0.1f64, 0.001, nmax).is_err());
    }

    #[test]
    fn small_mu_limit_is_single_photon_error() {
        let e: f64 = error_rate_case1(1e-8, 1.0, 10).unwrap();
        assert!((e - 0.25).abs() < 1e-8);
    }

    #[test]
    fn case1_continuous_across_boundaries() {
        for mu in [0.1f64, 0.2, 0.3, 0.4] {
            let nmax = DEFAULT_N_MAX;
            let b1 = discard_singles_boundary(mu);
            let e_singles = error_rate_discard_singles(mu, b1, nmax);
            let e_doubles = error_rate_discard_doubles(mu, b1, nmax);
            assert!((e_singles - e_doubles).abs() < 1e-10, "mu={mu}");
            // Also continuous into the no-loss point.
            let e_noloss = error_rate_noloss(mu, nmax);
            let e_singles_at_one = error_rate_discard_singles(mu, 1.0, nmax);
            assert!((e_noloss - e_singles_at_one).abs() < 1e-10, "mu={mu}");
        }
    }

    #[test]
    fn case1_monotone_within_regimes() {
        let nmax = DEFAULT_N_MAX;
        let mut previous = f64::INFINITY;
        for i in 0..200 {
            let eta_t = 1.0 - 0.9984 * i as f64 / 199.0; // down into discard-doubles
            if regime_classify(0.1, eta_t) == Regime::HighLoss {
                break;
            }
            let e: f64 = error_rate_case1(0.1, eta_t, nmax).unwrap();
            assert!(e <= previous + 1e-12, "eta_t={eta_t}");
            previous = e;
        }
    }

    #[test]
    fn loss_residual_identity_cases() {
        let schedule = GainSchedule::<f64>::identity(DEFAULT_N_MAX);
        assert!(loss_constraint_residual(0.1, 1.0, &schedule).abs() < 1e-15);
        // Identity filtering over a lossy channel over-delivers clicks by
        // e^(-mu eta_t) - e^-mu.
        let residual = loss_constraint_residual(0.1, 0.5, &schedule);
        assert!((residual - 0.046392006464754436).abs() < 1e-14);
    }

    #[test]
    fn case1_schedules_mimic_the_channel() {
        for (mu, eta_t) in [(0.1f64, 1.0), (0.1, 0.1), (0.1, 0.003), (0.4, 0.5), (0.3, 0.05)] {
            let schedule = case1_schedule(mu, eta_t, DEFAULT_N_MAX).unwrap();
            let residual: f64 = loss_constraint_residual(mu, eta_t, &schedule);
            assert!(residual.abs() < 1e-14, "mu={mu} eta_t={eta_t}: {residual}");
        }
    }

    #[test]
    fn closed_forms_match_generic_evaluator() {
        for (mu, eta_t) in [(0.1f64, 1.0), (0.1, 0.06), (0.2, 0.01), (0.4, 0.3), (0.3, 0.02)] {
            let schedule = case1_schedule(mu, eta_t, DEFAULT_N_MAX).unwrap();
            let generic: f64 = error_rate_from_gains(mu, eta_t, &schedule).unwrap();
            let closed = error_rate_case1(mu, eta_t, DEFAULT_N_MAX).unwrap();
            assert!(
                (generic - closed).abs() < 1e-12,
                "mu={mu} eta_t={eta_t}: {generic} vs {closed}"
            );
        }
    }

    #[test]
    fn scenario_loss_roundtrip() {
        let scenario = ChannelScenario::from_loss_db(0.1f64, 29.7, 0.2).unwrap();
        assert!((scenario.loss_db() - 29.7).abs() < 1e-12);
        assert!((scenario.eta_t() - 10f64.powf(-2.97)).abs() < 1e-15);
        assert!(ChannelScenario::new(0.1, 0.0, 0.2).is_err());
        assert!(ChannelScenario::new(0.1, 1.5, 0.2).is_err());
    }

    fn admissible_gains(n: u32) -> impl Strategy<Value = FilterGains<f64>> {
        let c = coefficients::<f64>(n).unwrap().magnitudes();
        [
            (0.0..=1.0f64),
            (0.0..=1.0f64),
            (0.0..=1.0f64),
            (0.0..=1.0f64),
        ]
        .prop_filter_map("nonzero gains", move |t| {
            let gamma = [t[0] * c[0], t[1] * c[1], t[2] * c[2], t[3] * c[3]];
            let g = FilterGains::new(n, gamma).ok()?;
            (g.success_prob() > 1e-12).then_some(g)
        })
    }

    proptest! {
        #[test]
        fn srm_rows_sum_to_one(n in 1u32..20, t in proptest::array::uniform4(0.01..=1.0f64)) {
            let c = coefficients::<f64>(n).unwrap().magnitudes();
            let g = FilterGains::new(n, [t[0]*c[0], t[1]*c[1], t[2]*c[2], t[3]*c[3]]).unwrap();
            prop_assume!(g.success_prob() > 1e-12);
            let srm = srm_probabilities(&g).unwrap();
            let sum: f64 = srm.by_shift().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-13);
            prop_assert!((srm.probability(2, 3) - srm.probability(2, 1)).abs() < 1e-15);
        }

        #[test]
        fn partial_error_range_and_scale_invariance(g in admissible_gains(5), t in 0.01..=1.0f64) {
            let e = partial_error(&g).unwrap();
            prop_assert!((0.0..=0.5 + 1e-15).contains(&e));
            let scaled = FilterGains::new(5, g.gamma().map(|x| x * t)).unwrap();
            let e_scaled = partial_error(&scaled).unwrap();
            prop_assert!((e - e_scaled).abs() < 1e-12);
        }

        #[test]
        fn single_photon_error_floor(g in admissible_gains(1)) {
            // e(1) >= 1/4 for every admissible gain vector.
            prop_assert!(partial_error(&g).unwrap() >= 0.25 - 1e-12);
        }

        #[test]
        fn two_photon_error_floor(g in admissible_gains(2)) {
            let floor = (2.0 - std::f64::consts::SQRT_2) / 4.0;
            prop_assert!(partial_error(&g).unwrap() >= floor - 1e-12);
        }
    }
}
