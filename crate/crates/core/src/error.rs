//! Crate error type.

/// Errors reported by the analysis routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Photon number 0 carries no polarization information.
    #[error("photon number must be at least {min}, got {got}")]
    PhotonNumber { min: u32, got: u32 },

    /// A scalar parameter is outside its admissible range.
    #[error("{name} = {value} outside admissible range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    /// Filter gains are identically zero; the filtered state is undefined.
    #[error("filter gains are all zero")]
    ZeroGains,

    /// Gains exceed the coefficient box, i.e. |alpha_j| > 1.
    #[error("gain {gamma} exceeds coefficient bound {bound} at component {index}")]
    GainAboveBound {
        index: usize,
        gamma: f64,
        bound: f64,
    },

    /// An operation was invoked outside the channel-loss regime it covers.
    #[error("scenario is in the {found} regime, expected {expected}")]
    RegimeMismatch {
        expected: &'static str,
        found: &'static str,
    },

    /// The loss-matching constraint cannot be met by any admissible gains.
    #[error("loss-matching budget {budget} is infeasible ({reason})")]
    InfeasibleBudget { budget: f64, reason: &'static str },

    /// Detector efficiency disagrees between scenario and detector model.
    #[error("detector efficiency mismatch: scenario has {scenario}, detector has {detector}")]
    DetectorMismatch { scenario: f64, detector: f64 },

    /// Division by a vanishing click probability.
    #[error("click probability is zero; conditional error rate undefined")]
    NoClicks,
}

impl Error {
    pub(crate) fn out_of_range<T: num_traits::ToPrimitive>(
        name: &'static str,
        value: T,
        range: &'static str,
    ) -> Self {
        Error::OutOfRange {
            name,
            value: value.to_f64().unwrap_or(f64::NAN),
            range,
        }
    }
}
