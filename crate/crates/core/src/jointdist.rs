//! The joint probability distribution P(A, B) observed by Alice and Bob
//! after the attack, and its symmetry diagnostics.
//!
//! Each matrix element P(A_k, F_i^beta) factorizes over what the
//! eavesdropper resends,
//!
//! ```text
//! P(A_k, F_i^beta) = 1/4 sum_{k~=0..4} Pr(resend k~ | sent k) Pr(F_i^beta | k~),
//! ```
//!
//! where k~ = 4 labels the vacuum resend. The resend conditional inherits the
//! circulant structure of the square-root measurement — it depends on k and
//! k~ only through (k~ - k) mod 4 — which is what makes the distribution
//! carry the symmetries expected of an unbiased BB84 session: the
//! correct-result probability is the same for every k, and basis-mismatched
//! single clicks split evenly between the two detectors.
//!
//! Basis convention (the one place polarization indices meet basis labels):
//! k = 0, 2 belong to basis `+` with k = 0 on detector 0; k = 1, 3 belong to
//! basis `x` with k = 1 on detector 0.

use crate::attack::FilterGains;
use crate::detector::{
    click_parameters, column, conditional_table, Basis, ConditionalTable, DetectorModel, Outcome,
    COLUMN_LABELS,
};
use crate::error::Error;
use crate::optimizer::AttackSolution;
use crate::scalar::{KahanSum, Real};
use crate::Result;

/// Basis in which Alice prepared polarization `k`.
pub fn matched_basis(k: u8) -> Basis {
    Basis::of_polarization(k)
}

/// Column of the correct single-click outcome for polarization `k`, in the
/// matched basis.
pub fn correct_column(k: u8) -> usize {
    let outcome = if k < 2 { Outcome::Click0 } else { Outcome::Click1 };
    column(matched_basis(k), outcome)
}

/// Column of the orthogonal (always wrong) single-click outcome for
/// polarization `k`.
pub fn orthogonal_column(k: u8) -> usize {
    let outcome = if k < 2 { Outcome::Click1 } else { Outcome::Click0 };
    column(matched_basis(k), outcome)
}

/// Conditional probabilities Pr(resend k~ | sent k). Circulant over the
/// polarization labels, with a constant vacuum column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResendConditional<T> {
    /// q_shift for (k~ - k) mod 4 = 0..3.
    by_shift: [T; 4],
    /// Pr(vacuum | sent k), the same for every k.
    vacuum: T,
}

impl<T: Real> ResendConditional<T> {
    /// Assemble directly from shift-class probabilities; mostly useful for
    /// constructing hypothetical resend strategies in tests.
    pub fn from_parts(by_shift: [T; 4], vacuum: T) -> Self {
        Self { by_shift, vacuum }
    }

    pub fn probability(&self, k: u8, k_tilde: u8) -> T {
        if k_tilde == 4 {
            self.vacuum
        } else {
            self.by_shift[((k_tilde + 4 - k) % 4) as usize]
        }
    }

    pub fn by_shift(&self) -> [T; 4] {
        self.by_shift
    }

    pub fn vacuum(&self) -> T {
        self.vacuum
    }

    /// One row of the 4x5 matrix (columns k~ = 0..3 plus vacuum).
    pub fn row(&self, k: u8) -> [T; 5] {
        [
            self.probability(k, 0),
            self.probability(k, 1),
            self.probability(k, 2),
            self.probability(k, 3),
            self.vacuum,
        ]
    }
}

/// Unnormalized shift-class masses of one filtered signal set:
/// Pr_succ(n) · Pr_shift(n), well defined even for discarded signals.
pub(crate) fn shift_mass<T: Real>(gains: &FilterGains<T>) -> [T; 4] {
    let [g0, g1, g2, g3] = gains.gamma();
    let quarter = T::quarter();
    let total = g0 + g1 + g2 + g3;
    let even_odd = (g0 - g2) * (g0 - g2) + (g1 - g3) * (g1 - g3);
    let alternating = g0 + g2 - g1 - g3;
    [
        total * total * quarter,
        even_odd * quarter,
        alternating * alternating * quarter,
        even_odd * quarter,
    ]
}

/// Assemble the resend conditional from an attack solution:
///
/// ```text
/// Pr(k~ | k) = e^-mu/4 sum_n mu^n/n! sum_{l,m} gamma_l gamma_m
///                cos(2 pi (k~-k)(l-m)/4),
/// ```
///
/// and Pr(vacuum | k) = e^(-mu eta_t), the loss the eavesdropper mimics.
pub fn resend_conditional<T: Real>(solution: &AttackSolution<T>) -> Result<ResendConditional<T>> {
    let mu = solution.scenario.mu();
    let schedule = &solution.schedule;
    let mut shifts = [KahanSum::new(); 4];
    let mut weight = (-mu).exp() * mu;
    for n in 1..=schedule.n_max() {
        if n > 1 {
            weight = weight * mu / T::of(n as f64);
        }
        let mass = shift_mass(&schedule.gains(n)?);
        for (acc, m) in shifts.iter_mut().zip(mass) {
            acc.add(weight * m);
        }
    }
    Ok(ResendConditional {
        by_shift: shifts.map(|acc| acc.value()),
        vacuum: (-mu * solution.scenario.eta_t()).exp(),
    })
}

/// The 4x8 joint distribution P(A_k, F_i^beta), rows labeled by Alice's
/// polarization, columns in the standard outcome layout.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution<T> {
    p: [[T; 8]; 4],
    mu: T,
    eta_t: T,
    eta_det: T,
}

impl<T: Real> JointDistribution<T> {
    pub fn cell(&self, k: usize, column: usize) -> T {
        self.p[k][column]
    }

    pub fn rows(&self) -> &[[T; 8]; 4] {
        &self.p
    }

    pub fn row_sum(&self, k: usize) -> T {
        let mut acc = KahanSum::new();
        for &x in &self.p[k] {
            acc.add(x);
        }
        acc.value()
    }

    pub fn total_mass(&self) -> T {
        let mut acc = KahanSum::new();
        for row in &self.p {
            for &x in row {
                acc.add(x);
            }
        }
        acc.value()
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

    /// Copy with one cell shifted by `delta`; used to inject a controlled
    /// corruption when self-testing the Monte Carlo comparison harness.
    pub fn perturbed(mut self, k: usize, column: usize, delta: T) -> Self {
        self.p[k][column] = self.p[k][column] + delta;
        self
    }

    /// Bare CSV table: header line plus one row per polarization.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,");
        out.push_str(&COLUMN_LABELS.join(","));
        out.push('\n');
        for (k, row) in self.p.iter().enumerate() {
            out.push_str(&k.to_string());
            for &x in row {
                out.push(',');
                out.push_str(&format!("{}", x.to_f64().unwrap()));
            }
            out.push('\n');
        }
        out
    }

    /// JSON document with an explicit schema version.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .p
            .iter()
            .enumerate()
            .map(|(k, row)| {
                serde_json::json!({
                    "k": k,
                    "values": row.iter().map(|x| x.to_f64().unwrap()).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "schema_version": 1,
            "kind": "joint_distribution",
            "mu": self.mu.to_f64().unwrap(),
            "eta_t": self.eta_t.to_f64().unwrap(),
            "eta_det": self.eta_det.to_f64().unwrap(),
            "columns": COLUMN_LABELS,
            "rows": rows,
        })
    }
}

/// Build the joint distribution from a resend conditional and the detector's
/// conditional table, under uniform signal priors.
pub fn joint_from_resend<T: Real>(
    resend: &ResendConditional<T>,
    table: &ConditionalTable<T>,
    mu: T,
    eta_t: T,
    eta_det: T,
) -> JointDistribution<T> {
    let quarter = T::quarter();
    let mut p = [[T::zero(); 8]; 4];
    for k in 0..4usize {
        for col in 0..8usize {
            let mut acc = KahanSum::new();
            for k_tilde in 0..5usize {
                acc.add(resend.probability(k as u8, k_tilde as u8) * table.row(k_tilde)[col]);
            }
            p[k][col] = quarter * acc.value();
        }
    }
    JointDistribution {
        p,
        mu,
        eta_t,
        eta_det,
    }
}

/// Full pipeline: attack solution plus detector model to P(A, B).
pub fn joint_distribution<T: Real>(
    solution: &AttackSolution<T>,
    detector: &DetectorModel<T>,
) -> Result<JointDistribution<T>> {
    let scenario = &solution.scenario;
    if (detector.eta_det() - scenario.eta_det()).abs() > T::of(1e-12) {
        return Err(Error::DetectorMismatch {
            scenario: scenario.eta_det().to_f64().unwrap_or(f64::NAN),
            detector: detector.eta_det().to_f64().unwrap_or(f64::NAN),
        });
    }
    let resend = resend_conditional(solution)?;
    let params = click_parameters(scenario.mu(), scenario.eta_t(), scenario.eta_det())?;
    let table = conditional_table(&params);
    Ok(joint_from_resend(
        &resend,
        &table,
        scenario.mu(),
        scenario.eta_t(),
        scenario.eta_det(),
    ))
}

/// Generalized error rate in the sifted key, read off the joint
/// distribution: over basis-matched events, wrong single clicks count fully
/// and double clicks count half, normalized by the total click probability.
pub fn sifted_error_from_joint<T: Real>(joint: &JointDistribution<T>) -> Result<T> {
    let mut errors = KahanSum::new();
    let mut clicks = KahanSum::new();
    for k in 0..4u8 {
        let basis = matched_basis(k);
        let double = joint.cell(k as usize, column(basis, Outcome::Double));
        errors.add(joint.cell(k as usize, orthogonal_column(k)));
        errors.add(T::half() * double);
        clicks.add(joint.cell(k as usize, column(basis, Outcome::Click0)));
        clicks.add(joint.cell(k as usize, column(basis, Outcome::Click1)));
        clicks.add(double);
    }
    let clicks = clicks.value();
    if clicks <= T::zero() {
        return Err(Error::NoClicks);
    }
    Ok(errors.value() / clicks)
}

/// Deviations from the symmetries an unbiased session must show.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SymmetryReport<T> {
    /// Spread of the correct-result probability across the four k.
    pub correct_spread: T,
    /// Spread of the orthogonal-result probability across the four k.
    pub orthogonal_spread: T,
    /// Largest |P(A_k, F_0^beta) - P(A_k, F_1^beta)| over basis-mismatched
    /// events.
    pub mismatch_imbalance: T,
    /// Largest of the three.
    pub max_deviation: T,
}

/// Evaluate the symmetry diagnostics of a joint distribution.
pub fn symmetry_check<T: Real>(joint: &JointDistribution<T>) -> SymmetryReport<T> {
    let spread = |values: [T; 4]| -> T {
        let max = values.iter().copied().fold(values[0], T::max);
        let min = values.iter().copied().fold(values[0], T::min);
        max - min
    };
    let correct_spread = spread([0, 1, 2, 3].map(|k| joint.cell(k as usize, correct_column(k))));
    let orthogonal_spread =
        spread([0, 1, 2, 3].map(|k| joint.cell(k as usize, orthogonal_column(k))));
    let mut mismatch_imbalance = T::zero();
    for k in 0..4u8 {
        let other = match matched_basis(k) {
            Basis::Plus => Basis::Cross,
            Basis::Cross => Basis::Plus,
        };
        let first = joint.cell(k as usize, column(other, Outcome::Click0));
        let second = joint.cell(k as usize, column(other, Outcome::Click1));
        mismatch_imbalance = mismatch_imbalance.max((first - second).abs());
    }
    let max_deviation = correct_spread
        .max(orthogonal_spread)
        .max(mismatch_imbalance);
    SymmetryReport {
        correct_spread,
        orthogonal_spread,
        mismatch_imbalance,
        max_deviation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::ChannelScenario;
    use crate::optimizer::{solve_attack, usd_threshold, SolverOptions};

    fn pipeline(
        mu: f64,
        eta_t: f64,
        eta_det: f64,
        s: u32,
    ) -> (AttackSolution<f64>, JointDistribution<f64>) {
        let scenario = ChannelScenario::new(mu, eta_t, eta_det).unwrap();
        let solution = solve_attack(&scenario, s, &SolverOptions::default()).unwrap();
        let detector = DetectorModel::new(eta_det).unwrap();
        let joint = joint_distribution(&solution, &detector).unwrap();
        (solution, joint)
    }

    /// Brute-force shift masses via the complex double sum.
    fn shift_mass_brute(g: &FilterGains<f64>, shift: usize) -> f64 {
        let gamma = g.gamma();
        let mut total = 0.0;
        for l in 0..4i32 {
            for m in 0..4i32 {
                let phase = std::f64::consts::PI * (shift as i32 * (l - m)) as f64 / 2.0;
                total += gamma[l as usize] * gamma[m as usize] * phase.cos();
            }
        }
        total / 4.0
    }

    #[test]
    fn shift_mass_matches_brute_force() {
        let g = FilterGains::new(4, [0.3, 0.2, 0.5, 0.45]).unwrap();
        let mass = shift_mass(&g);
        for shift in 0..4 {
            assert!((mass[shift] - shift_mass_brute(&g, shift)).abs() < 1e-14);
        }
        let total: f64 = mass.iter().sum();
        assert!((total - g.success_prob()).abs() < 1e-14);
    }

    #[test]
    fn resend_rows_normalized_and_vacuum_constant() {
        for eta_t in [1.0, 0.1, 0.003, 0.001] {
            let (solution, _) = pipeline(0.1, eta_t, 0.2, 5);
            let resend = resend_conditional(&solution).unwrap();
            for k in 0..4u8 {
                let row = resend.row(k);
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-13, "eta_t={eta_t} k={k}: {sum}");
            }
            assert!((resend.vacuum() - (-0.1 * eta_t).exp()).abs() < 1e-15);
            let q = resend.by_shift();
            assert!((q[1] - q[3]).abs() < 1e-16);
        }
    }

    #[test]
    fn low_mu_identity_structure() {
        // mu = 0.01, eta_t = 1: single photons dominate; non-vacuum mass is
        // the click rate and the shift masses are ordered q0 > q1 > q2.
        let (solution, _) = pipeline(0.01, 1.0, 0.5, 5);
        let resend = resend_conditional(&solution).unwrap();
        let q = resend.by_shift();
        let non_vacuum: f64 = q.iter().sum();
        assert!((non_vacuum - (1.0 - (-0.01f64).exp())).abs() < 1e-14);
        assert!(q[0] > q[1] && q[1] > q[2]);
    }

    #[test]
    fn usd_limit_has_vanishing_misidentification() {
        let (eta5, _) = usd_threshold(0.1, 5).unwrap();
        let (solution, _) = pipeline(0.1, eta5, 0.2, 5);
        let resend = resend_conditional(&solution).unwrap();
        let q = resend.by_shift();
        // Only the unfiltered n > s tail can land on a wrong label.
        let tail_mass = crate::symstates::poisson_tail(0.1, 5);
        assert!(q[1] <= tail_mass && q[2] <= tail_mass);
        assert!(q[1] >= 0.0 && q[2] >= 0.0);
    }

    #[test]
    fn joint_mass_and_rows() {
        for eta_t in [1.0, 0.05, 0.003, 0.0011] {
            let (_, joint) = pipeline(0.1, eta_t, 0.2, 5);
            assert!((joint.total_mass() - 1.0).abs() < 1e-12);
            for k in 0..4 {
                assert!((joint.row_sum(k) - 0.25).abs() < 1e-13);
                assert!(joint.rows()[k].iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn sifted_error_matches_analytic_rate() {
        // The detector efficiency cancels from the sifted error: mismatched
        // single clicks and doubles combine as 2c + d = b.
        for eta_det in [0.1, 0.2, 0.5, 1.0] {
            for eta_t in [1.0, 0.1, 0.003, 0.0011] {
                let (solution, joint) = pipeline(0.1, eta_t, eta_det, 5);
                let sifted = sifted_error_from_joint(&joint).unwrap();
                assert!(
                    (sifted - solution.error_rate).abs() < 1e-12,
                    "eta_det={eta_det} eta_t={eta_t}: {sifted} vs {}",
                    solution.error_rate
                );
            }
        }
    }

    #[test]
    fn hypothetical_resends_pin_the_error_range() {
        let params = click_parameters(0.1, 0.5, 0.4).unwrap();
        let table = conditional_table(&params);
        let perfect = ResendConditional::<f64>::from_parts([1.0, 0.0, 0.0, 0.0], 0.0);
        let joint = joint_from_resend(&perfect, &table, 0.1, 0.5, 0.4);
        assert!(sifted_error_from_joint(&joint).unwrap().abs() < 1e-15);
        let orthogonal = ResendConditional::<f64>::from_parts([0.0, 0.0, 1.0, 0.0], 0.0);
        let joint = joint_from_resend(&orthogonal, &table, 0.1, 0.5, 0.4);
        assert!((sifted_error_from_joint(&joint).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dead_distribution_rejected() {
        let params = click_parameters(0.1, 0.5, 0.4).unwrap();
        let table = conditional_table(&params);
        let vacuum_only = ResendConditional::<f64>::from_parts([0.0; 4], 1.0);
        let joint = joint_from_resend(&vacuum_only, &table, 0.1, 0.5, 0.4);
        assert!(matches!(
            sifted_error_from_joint(&joint),
            Err(Error::NoClicks)
        ));
    }

    #[test]
    fn symmetries_hold_and_perturbations_are_flagged() {
        let (_, joint) = pipeline(0.1, 0.0011, 0.2, 5);
        let report = symmetry_check(&joint);
        assert!(report.max_deviation < 1e-12);
        let perturbed = joint.perturbed(2, correct_column(2), 1e-6);
        let report = symmetry_check(&perturbed);
        assert!((report.correct_spread - 1e-6).abs() < 1e-9);
        assert!(report.max_deviation >= 1e-6 - 1e-9);
    }

    #[test]
    fn table_structure_equal_cells() {
        // Within a row: vacuum cells agree across bases; each column role is
        // constant across k. High loss: vacuum cells dominate each row.
        let (_, joint) = pipeline(0.1, 10f64.powf(-2.97), 0.2, 5);
        for k in 0..4u8 {
            let vac_plus = joint.cell(k as usize, column(Basis::Plus, Outcome::Vac));
            let vac_cross = joint.cell(k as usize, column(Basis::Cross, Outcome::Vac));
            assert!((vac_plus - vac_cross).abs() < 1e-15);
            assert!(vac_plus > 0.12 && vac_plus < 0.125);
        }
        for k in 1..4u8 {
            let first = joint.cell(0, correct_column(0));
            assert!((joint.cell(k as usize, correct_column(k)) - first).abs() < 1e-15);
        }
    }

    #[test]
    fn detector_mismatch_rejected() {
        let scenario = ChannelScenario::new(0.1, 0.5, 0.2).unwrap();
        let solution = solve_attack(&scenario, 5, &SolverOptions::default()).unwrap();
        let detector = DetectorModel::new(0.3).unwrap();
        assert!(matches!(
            joint_distribution(&solution, &detector),
            Err(Error::DetectorMismatch { .. })
        ));
    }

    #[test]
    fn csv_and_json_agree() {
        let (_, joint) = pipeline(0.1, 0.05, 0.2, 5);
        let csv = joint.to_csv();
        let json = joint.to_json();
        let rows = json["rows"].as_array().unwrap();
        for (k, line) in csv.lines().skip(1).enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], k.to_string());
            let values = rows[k]["values"].as_array().unwrap();
            for (column, value) in values.iter().enumerate() {
                let from_csv: f64 = fields[column + 1].parse().unwrap();
                assert_eq!(from_csv, value.as_f64().unwrap(), "k={k} col={column}");
            }
        }
    }
}
