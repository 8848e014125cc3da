//! Stochastic end-to-end simulation of the attack.
//!
//! The simulator composes only the primitive conditionals — Poissonian
//! photon numbers, the per-n filter Bernoulli, the square-root-measurement
//! categorical and the detector's conditional outcome table — and never
//! consults the assembled joint distribution, so it serves as a genuinely
//! independent oracle for every analytic probability in the crate.
//!
//! Trials are partitioned into fixed-size blocks; each block draws from its
//! own counter-derived ChaCha stream, so parallel runs reproduce serial
//! results bit for bit under any thread schedule.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::detector::{click_parameters, conditional_table, Outcome};
use crate::jointdist::{
    matched_basis, orthogonal_column, sifted_error_from_joint, JointDistribution,
};
use crate::optimizer::AttackSolution;
use crate::scalar::Real;
use crate::Result;
use crate::{detector, error::Error};

const BLOCK_TRIALS: u64 = 1 << 16;

/// One simulation request.
#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub solution: AttackSolution<T>,
    pub trials: u64,
    pub seed: u64,
}

/// Raw counts from a simulation run.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SimReport {
    /// counts[k][column]: Alice's polarization by Bob's outcome column.
    pub counts: [[u64; 8]; 4],
    /// Trials in which the eavesdropper resent vacuum (n = 0 or filter
    /// failure).
    pub vacuum_resends: u64,
    pub trials: u64,
    pub seed: u64,
}

impl SimReport {
    pub fn total_counts(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Empirical cell frequencies.
    pub fn frequencies(&self) -> [[f64; 8]; 4] {
        let n = self.trials as f64;
        let mut out = [[0.0; 8]; 4];
        for k in 0..4 {
            for col in 0..8 {
                out[k][col] = self.counts[k][col] as f64 / n;
            }
        }
        out
    }

    /// Basis-matched clicks and error weight, as (errors, clicks).
    fn sifted_tallies(&self) -> (f64, u64) {
        let mut errors = 0.0;
        let mut clicks = 0u64;
        for k in 0..4u8 {
            let basis = matched_basis(k);
            let row = &self.counts[k as usize];
            let double = row[detector::column(basis, Outcome::Double)];
            let click0 = row[detector::column(basis, Outcome::Click0)];
            let click1 = row[detector::column(basis, Outcome::Click1)];
            errors += row[orthogonal_column(k)] as f64 + 0.5 * double as f64;
            clicks += click0 + click1 + double;
        }
        (errors, clicks)
    }

    /// Empirical sifted error rate; `None` when no basis-matched clicks
    /// occurred.
    pub fn empirical_sifted_error(&self) -> Option<f64> {
        let (errors, clicks) = self.sifted_tallies();
        (clicks > 0).then(|| errors / clicks as f64)
    }

    /// Counts as CSV (row label k plus the eight outcome columns).
    pub fn counts_to_csv(&self) -> String {
        let mut out = String::from("k,");
        out.push_str(&detector::COLUMN_LABELS.join(","));
        out.push('\n');
        for (k, row) in self.counts.iter().enumerate() {
            out.push_str(&k.to_string());
            for &c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "kind": "sim_report",
            "trials": self.trials,
            "seed": self.seed,
            "vacuum_resends": self.vacuum_resends,
            "columns": detector::COLUMN_LABELS,
            "counts": self.counts,
        })
    }
}

/// Sampling tables in f64, precomputed once per run.
struct SampleTables {
    poisson_cdf: Vec<f64>,
    /// Per photon number (index n, 0 unused): filter success probability.
    success: Vec<f64>,
    /// Per photon number: CDF over the SRM shift classes.
    srm_cdf: Vec<[f64; 4]>,
    /// Per resend label 0..4 and basis: CDF over the four outcomes.
    outcome_cdf: [[[f64; 4]; 2]; 5],
}

fn build_tables<T: Real>(solution: &AttackSolution<T>) -> Result<SampleTables> {
    let scenario = &solution.scenario;
    let mu = scenario.mu().to_f64().unwrap();
    let n_max = solution.schedule.n_max();

    let mut poisson_cdf = Vec::with_capacity(n_max as usize + 1);
    let mut term = (-mu).exp();
    let mut cumulative = term;
    poisson_cdf.push(cumulative);
    for n in 1..=n_max {
        term = term * mu / n as f64;
        cumulative += term;
        poisson_cdf.push(cumulative);
    }

    let mut success = vec![0.0; n_max as usize + 1];
    let mut srm_cdf = vec![[0.0; 4]; n_max as usize + 1];
    for n in 1..=n_max {
        let gains = solution.schedule.gains(n)?;
        let p = gains.success_prob().to_f64().unwrap();
        success[n as usize] = p;
        if p > 0.0 {
            let srm = crate::attack::srm_probabilities(&gains)?;
            let shifts = srm.by_shift().map(|x| x.to_f64().unwrap());
            let mut acc = 0.0;
            for (slot, v) in srm_cdf[n as usize].iter_mut().zip(shifts) {
                acc += v;
                *slot = acc;
            }
        }
    }

    let params = click_parameters(scenario.mu(), scenario.eta_t(), scenario.eta_det())?;
    let table = conditional_table(&params);
    let mut outcome_cdf = [[[0.0; 4]; 2]; 5];
    for k_tilde in 0..5usize {
        let row = table.row(k_tilde);
        for (b, offset) in [(0usize, 0usize), (1, 4)] {
            let mut acc = 0.0;
            for i in 0..4 {
                // Conditioned on the basis choice, outcome probabilities are
                // twice the table entries.
                acc += 2.0 * row[offset + i].to_f64().unwrap();
                outcome_cdf[k_tilde][b][i] = acc;
            }
        }
    }

    Ok(SampleTables {
        poisson_cdf,
        success,
        srm_cdf,
        outcome_cdf,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn uniform(rng: &mut ChaCha12Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn search_cdf(cdf: &[f64], u: f64) -> usize {
    match cdf.iter().position(|&c| u < c) {
        Some(i) => i,
        None => cdf.len() - 1,
    }
}

#[derive(Clone, Copy, Default)]
struct BlockCounts {
    counts: [[u64; 8]; 4],
    vacuum_resends: u64,
}

fn run_block(tables: &SampleTables, seed: u64, block: u64, trials: u64) -> BlockCounts {
    let mut rng = ChaCha12Rng::seed_from_u64(splitmix64(seed ^ block.wrapping_mul(0xA24BAED4963EE407)));
    let mut out = BlockCounts::default();
    for _ in 0..trials {
        let k = (rng.next_u32() & 3) as u8;
        let n = search_cdf(&tables.poisson_cdf, uniform(&mut rng));
        let k_tilde: u8 = if n == 0 {
            4
        } else {
            let p = tables.success[n];
            if p > 0.0 && uniform(&mut rng) < p {
                let shift = search_cdf(&tables.srm_cdf[n], uniform(&mut rng) * p) as u8;
                (k + shift) % 4
            } else {
                4
            }
        };
        if k_tilde == 4 {
            out.vacuum_resends += 1;
        }
        let basis = (rng.next_u32() & 1) as usize;
        let outcome = search_cdf(&tables.outcome_cdf[k_tilde as usize][basis], uniform(&mut rng));
        out.counts[k as usize][4 * basis + outcome] += 1;
    }
    out
}

/// Run the simulation: one sample of (Alice's k, Bob's outcome) per trial,
/// deterministic under a fixed seed.
pub fn simulate<T: Real>(config: &SimConfig<T>) -> Result<SimReport> {
    if config.trials == 0 {
        return Err(Error::out_of_range("trials", 0u32, "1.."));
    }
    let tables = build_tables(&config.solution)?;
    let blocks = config.trials.div_ceil(BLOCK_TRIALS);
    let partials: Vec<BlockCounts> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let trials = BLOCK_TRIALS.min(config.trials - block * BLOCK_TRIALS);
            run_block(&tables, config.seed, block, trials)
        })
        .collect();
    let mut counts = [[0u64; 8]; 4];
    let mut vacuum_resends = 0u64;
    for partial in partials {
        vacuum_resends += partial.vacuum_resends;
        for k in 0..4 {
            for col in 0..8 {
                counts[k][col] += partial.counts[k][col];
            }
        }
    }
    Ok(SimReport {
        counts,
        vacuum_resends,
        trials: config.trials,
        seed: config.seed,
    })
}

/// Comparison verdict for one cell.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CellComparison {
    pub k: usize,
    pub column: usize,
    pub expected_probability: f64,
    pub expected_count: f64,
    pub count: u64,
    pub z: f64,
    /// Whether the normal approximation is trustworthy for this cell
    /// (both expected tails at least ten counts).
    pub sufficient: bool,
}

/// Outcome of comparing a simulation against the analytic distribution.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Comparison {
    pub cells: Vec<CellComparison>,
    /// Largest |z| over cells with a trustworthy normal approximation.
    pub max_abs_z: f64,
    pub sifted_analytic: f64,
    pub sifted_empirical: Option<f64>,
    pub sifted_z: Option<f64>,
    /// Too few trials to resolve the requested confidence anywhere.
    pub insufficient_trials: bool,
    pub pass: bool,
}

impl Comparison {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("comparison serializes")
    }
}

/// z-score threshold used for the pass/fail verdict.
pub const Z_LIMIT: f64 = 5.0;

/// Compare empirical counts against the analytic joint distribution:
/// per-cell binomial z-scores plus the sifted error. Cells too rare for the
/// normal approximation are flagged rather than failed, but a count grossly
/// above its Poisson range still fails.
pub fn compare<T: Real>(report: &SimReport, analytic: &JointDistribution<T>) -> Result<Comparison> {
    let n = report.trials as f64;
    let mut cells = Vec::with_capacity(32);
    let mut max_abs_z: f64 = 0.0;
    let mut any_sufficient = false;
    let mut pass = true;
    for k in 0..4usize {
        for col in 0..8usize {
            let p = analytic.cell(k, col).to_f64().unwrap();
            let expected = n * p;
            let count = report.counts[k][col];
            let variance = n * p * (1.0 - p);
            let z = if variance > 0.0 {
                (count as f64 - expected) / variance.sqrt()
            } else if count as f64 == expected {
                0.0
            } else {
                f64::INFINITY
            };
            let sufficient = expected >= 10.0 && (n - expected) >= 10.0;
            if sufficient {
                any_sufficient = true;
                max_abs_z = max_abs_z.max(z.abs());
                if z.abs() > Z_LIMIT {
                    pass = false;
                }
            } else if count as f64 > expected + Z_LIMIT * expected.max(1.0).sqrt() + Z_LIMIT {
                // Even a rare cell cannot overshoot its Poisson range.
                pass = false;
            }
            cells.push(CellComparison {
                k,
                column: col,
                expected_probability: p,
                expected_count: expected,
                count,
                z,
                sufficient,
            });
        }
    }

    let sifted_analytic = sifted_error_from_joint(analytic)?.to_f64().unwrap();
    let (_, clicks) = report.sifted_tallies();
    let sifted_empirical = report.empirical_sifted_error();
    let sifted_z = sifted_empirical.map(|empirical| {
        let sigma = (sifted_analytic * (1.0 - sifted_analytic) / clicks as f64).sqrt();
        if sigma > 0.0 {
            (empirical - sifted_analytic) / sigma
        } else if empirical == sifted_analytic {
            0.0
        } else {
            f64::INFINITY
        }
    });
    if let Some(z) = sifted_z {
        if clicks >= 25 && z.abs() > Z_LIMIT {
            pass = false;
        }
    }
    let insufficient_trials = report.trials < 1000 || !any_sufficient;

    Ok(Comparison {
        cells,
        max_abs_z,
        sifted_analytic,
        sifted_empirical,
        sifted_z,
        insufficient_trials,
        pass,
    })
}
