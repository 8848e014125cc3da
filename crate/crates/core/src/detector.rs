//! Bob's threshold-detector model.
//!
//! Bob picks one of the two polarization bases at random and feeds the pulse
//! to a polarizing beam splitter with one threshold detector per output port.
//! Detection efficiency `eta_det` is modeled as a beam splitter in front of
//! ideal detectors, so an n-photon pulse escapes detection with probability
//! (1 - eta_det)^n. Dark counts are not modeled: the analysis only charges
//! the eavesdropper with errors created in the channel.
//!
//! Because the eavesdropper resends a zero-truncated Poissonian of mean
//! mu·eta_t, every conditional click probability collapses to four scalars
//! a, b, c, d; the full 5x8 conditional table over resend states (the four
//! polarizations plus vacuum) is assembled from them.

use crate::error::Error;
use crate::scalar::Real;
use crate::Result;

/// The two BB84 polarization bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Basis {
    /// Rectilinear (`+`): polarizations k = 0 and k = 2.
    Plus,
    /// Diagonal (`x`): polarizations k = 1 and k = 3.
    Cross,
}

impl Basis {
    /// Basis a polarization index belongs to.
    pub fn of_polarization(k: u8) -> Basis {
        if k % 2 == 0 {
            Basis::Plus
        } else {
            Basis::Cross
        }
    }
}

/// Detector outcome within one basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Outcome {
    /// No click.
    Vac,
    /// Single click in detector 0.
    Click0,
    /// Single click in detector 1.
    Click1,
    /// Both detectors clicked.
    Double,
}

/// Column index in the 8-wide outcome layout
/// (F_vac^+, F_0^+, F_1^+, F_D^+, F_vac^x, F_0^x, F_1^x, F_D^x).
pub fn column(basis: Basis, outcome: Outcome) -> usize {
    let offset = match basis {
        Basis::Plus => 0,
        Basis::Cross => 4,
    };
    offset
        + match outcome {
            Outcome::Vac => 0,
            Outcome::Click0 => 1,
            Outcome::Click1 => 2,
            Outcome::Double => 3,
        }
}

/// Human-readable labels for the 8 outcome columns, in layout order.
pub const COLUMN_LABELS: [&str; 8] = [
    "f_vac_plus",
    "f_0_plus",
    "f_1_plus",
    "f_d_plus",
    "f_vac_cross",
    "f_0_cross",
    "f_1_cross",
    "f_d_cross",
];

/// Bob's detection setup: two threshold detectors of efficiency `eta_det`
/// behind a polarizing beam splitter, basis chosen uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel<T> {
    eta_det: T,
}

impl<T: Real> DetectorModel<T> {
    pub fn new(eta_det: T) -> Result<Self> {
        if !(eta_det > T::zero() && eta_det <= T::one()) {
            return Err(Error::out_of_range("eta_det", eta_det, "(0, 1]"));
        }
        Ok(Self { eta_det })
    }

    pub fn eta_det(&self) -> T {
        self.eta_det
    }
}

/// The four click probabilities governing Bob's outcomes on a resent signal
/// (zero-truncated Poissonian of mean mu·eta_t through the eta_det beam
/// splitter, including the 1/2 basis-choice factor):
///
/// * `a` — no click,
/// * `b` — click in the matching detector when bases agree,
/// * `c` — single click in either detector when bases disagree,
/// * `d` — double click when bases disagree.
///
/// They satisfy a + b = 1/2 and a + 2c + d = 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickParameters<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

/// Closed-form click parameters for mean photon number `mu`, channel
/// transmittance `eta_t` and detector efficiency `eta_det`.
pub fn click_parameters<T: Real>(mu: T, eta_t: T, eta_det: T) -> Result<ClickParameters<T>> {
    if !(mu > T::zero()) || !mu.is_finite() {
        return Err(Error::out_of_range("mu", mu, "(0, inf)"));
    }
    if !(eta_t > T::zero() && eta_t <= T::one()) {
        return Err(Error::out_of_range("eta_t", eta_t, "(0, 1]"));
    }
    if !(eta_det > T::zero() && eta_det <= T::one()) {
        return Err(Error::out_of_range("eta_det", eta_det, "(0, 1]"));
    }
    let nu = mu * eta_t;
    // 2 (1 - e^-nu), kept accurate for small nu via expm1.
    let denom = -T::two() * (-nu).exp_m1();
    let half_click = -(-nu * eta_det * T::half()).exp_m1(); // 1 - e^(-nu eta/2)
    let full_click = -(-nu * eta_det).exp_m1(); // 1 - e^(-nu eta)
    let a = (-nu).exp() * (nu * (T::one() - eta_det)).exp_m1() / denom;
    let b = full_click / denom;
    let c = (T::one() - half_click) * half_click / denom;
    let d = half_click * half_click / denom;
    Ok(ClickParameters { a, b, c, d })
}

/// Conditional outcome table Pr(F_i^beta | resend state), rows indexed by the
/// resend label (0..3 = polarizations, 4 = vacuum), columns in the standard
/// 8-outcome layout. Each row sums to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalTable<T> {
    rows: [[T; 8]; 5],
}

impl<T: Real> ConditionalTable<T> {
    pub fn rows(&self) -> &[[T; 8]; 5] {
        &self.rows
    }

    pub fn row(&self, resend: usize) -> &[T; 8] {
        &self.rows[resend]
    }
}

/// Assemble the conditional table from click parameters.
///
/// A resent polarization measured in its own basis can only fire the matching
/// detector: the in-basis block reads (a, b, 0, 0) with b placed on the
/// detector matching the polarization. Measured in the conjugate basis the
/// photons split, giving the (a, c, c, d) block. Vacuum never clicks.
pub fn conditional_table<T: Real>(params: &ClickParameters<T>) -> ConditionalTable<T> {
    let ClickParameters { a, b, c, d } = *params;
    let z = T::zero();
    let matched = |detector: usize| -> [T; 4] {
        if detector == 0 {
            [a, b, z, z]
        } else {
            [a, z, b, z]
        }
    };
    let mismatched = [a, c, c, d];
    let mut rows = [[z; 8]; 5];
    for k_tilde in 0..4usize {
        // Polarizations 0, 2 live in basis +, with 0 -> detector 0 and
        // 2 -> detector 1; polarizations 1, 3 likewise in basis x.
        let detector = if k_tilde < 2 { 0 } else { 1 };
        let (plus, cross) = match Basis::of_polarization(k_tilde as u8) {
            Basis::Plus => (matched(detector), mismatched),
            Basis::Cross => (mismatched, matched(detector)),
        };
        rows[k_tilde][..4].copy_from_slice(&plus);
        rows[k_tilde][4..].copy_from_slice(&cross);
    }
    rows[4][0] = T::half();
    rows[4][4] = T::half();
    ConditionalTable { rows }
}
