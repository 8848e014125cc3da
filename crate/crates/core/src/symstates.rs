//! Symmetric-state coefficients and Poisson source statistics.
//!
//! An n-photon BB84 signal set {|n_k>, k = 0..3} is symmetric under a fixed
//! unitary of order four, so each state decomposes over a common orthogonal
//! basis with coefficient magnitudes
//!
//! ```text
//! |c_j(n)|^2 = 1/4 ± 2^-(1+n/2) · {cos, sin}(pi n / 4),   j = 0..3,
//! ```
//!
//! the `+` sign applying to j = 0 (cos) and j = 1 (sin), the `-` sign to
//! j = 2 and j = 3. The source itself is a phase-randomized weak coherent
//! pulse: photon numbers follow a Poissonian of mean `mu`.
//!
//! Only the magnitudes matter anywhere in this crate: every probability
//! downstream is invariant under the coefficient phases, so they are fixed
//! to zero.

use num_complex::Complex;

use crate::error::Error;
use crate::scalar::{KahanSum, Real};
use crate::Result;

/// Default series truncation: for mu <= 1 the Poisson tail beyond n = 60
/// is far below 1e-14.
pub const DEFAULT_N_MAX: u32 = 60;

/// The four non-negative coefficient magnitudes |c_j(n)| of an n-photon
/// BB84 signal set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonCoefficients<T> {
    n: u32,
    c: [T; 4],
}

impl<T: Real> PhotonCoefficients<T> {
    /// Closed-form coefficients for an `n`-photon signal set, `n >= 1`.
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::PhotonNumber { min: 1, got: 0 });
        }
        let quarter = T::quarter();
        // 2^-(1+n/2)
        let scale = T::two().powf(-(T::one() + T::of(n as f64) * T::half()));
        let (cos, sin) = trig_eighth::<T>(n);
        let sq = [
            quarter + scale * cos,
            quarter + scale * sin,
            quarter - scale * cos,
            quarter - scale * sin,
        ];
        // The closed form can dip a few ulp below zero where a coefficient
        // vanishes exactly (n = 1, 2).
        let c = sq.map(|x| x.max(T::zero()).sqrt());
        Ok(Self { n, c })
    }

    pub fn photon_number(&self) -> u32 {
        self.n
    }

    /// The four magnitudes in index order.
    pub fn magnitudes(&self) -> [T; 4] {
        self.c
    }

    /// Smallest of the four magnitudes; positive for every n >= 3.
    pub fn min_magnitude(&self) -> T {
        self.c.iter().copied().fold(self.c[0], T::min)
    }

    /// (c_0 + c_2)(c_1 + c_3): the quantity an identity filter contributes
    /// to the error-rate series.
    pub fn cross_sum(&self) -> T {
        (self.c[0] + self.c[2]) * (self.c[1] + self.c[3])
    }
}

/// Exact cos/sin of pi·n/4 from an n mod 8 lookup, avoiding argument
/// reduction error at large n.
fn trig_eighth<T: Real>(n: u32) -> (T, T) {
    let r = T::FRAC_1_SQRT_2();
    match n % 8 {
        0 => (T::one(), T::zero()),
        1 => (r, r),
        2 => (T::zero(), T::one()),
        3 => (-r, r),
        4 => (-T::one(), T::zero()),
        5 => (-r, -r),
        6 => (T::zero(), -T::one()),
        _ => (r, -r),
    }
}

/// Convenience wrapper around [`PhotonCoefficients::new`].
pub fn coefficients<T: Real>(n: u32) -> Result<PhotonCoefficients<T>> {
    PhotonCoefficients::new(n)
}

/// Poissonian photon-number distribution of mean `mu`, truncated at `n_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonSource<T> {
    mu: T,
    n_max: u32,
}

impl<T: Real> PoissonSource<T> {
    /// Source with the default truncation (`n_max` = 60, tail < 1e-14 for
    /// mu <= 1).
    pub fn new(mu: T) -> Result<Self> {
        Self::with_n_max(mu, DEFAULT_N_MAX)
    }

    /// Source with an explicit truncation index. Rejected if the truncated
    /// tail mass exceeds 1e-14.
    pub fn with_n_max(mu: T, n_max: u32) -> Result<Self> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(Error::out_of_range("mu", mu, "(0, inf)"));
        }
        let source = Self { mu, n_max };
        let tail = source.tail(n_max);
        if tail.to_f64().unwrap_or(1.0) >= 1e-14 && mu.to_f64().unwrap_or(2.0) <= 1.0 {
            return Err(Error::out_of_range(
                "n_max",
                n_max,
                "truncated tail must stay below 1e-14",
            ));
        }
        Ok(source)
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    /// P(N = n) = e^-mu mu^n / n!.
    pub fn weight(&self, n: u32) -> T {
        poisson_weight(self.mu, n)
    }

    /// P(N > s).
    pub fn tail(&self, s: u32) -> T {
        poisson_tail(self.mu, s)
    }
}

/// Poisson probability e^-mu mu^n / n!.
///
/// Evaluated by the multiplicative recurrence p_n = p_{n-1} · mu / n, which
/// never forms mu^n or n! separately and therefore cannot overflow; the
/// relative error grows only linearly in n.
pub fn poisson_weight<T: Real>(mu: T, n: u32) -> T {
    debug_assert!(mu > T::zero());
    let mut p = (-mu).exp();
    for k in 1..=n {
        p = p * mu / T::of(k as f64);
    }
    p
}

/// Poisson tail probability P(N > s) = 1 - sum_{n=0..s} e^-mu mu^n / n!,
/// with the cumulative sum compensated.
pub fn poisson_tail<T: Real>(mu: T, s: u32) -> T {
    debug_assert!(mu > T::zero());
    let mut cumulative = KahanSum::new();
    let mut term = (-mu).exp();
    cumulative.add(term);
    for n in 1..=s {
        term = term * mu / T::of(n as f64);
        cumulative.add(term);
    }
    (T::one() - cumulative.value()).max(T::zero())
}

/// Overlap <n_0 | n_k> reconstructed from the coefficient magnitudes,
///
/// ```text
/// <n_0|n_k> = sum_j |c_j(n)|^2 e^{2 pi i k j / 4}.
/// ```
///
/// Serves as a consistency oracle for [`coefficients`]: the magnitude must
/// come out as 2^-n/2 for k = 1, 3 and exactly 0 for k = 2.
pub fn gram_overlap<T: Real>(n: u32, k: u8) -> Result<Complex<T>> {
    if k > 3 {
        return Err(Error::out_of_range("k", k, "{0, 1, 2, 3}"));
    }
    let c = coefficients::<T>(n)?.magnitudes();
    let mut re = T::zero();
    let mut im = T::zero();
    for (j, cj) in c.iter().enumerate() {
        let c2 = *cj * *cj;
        // i^(k j)
        match (k as usize * j) % 4 {
            0 => re += c2,
            1 => im += c2,
            2 => re += -c2,
            _ => im += -c2,
        }
    }
    Ok(Complex::new(re, im))
}
