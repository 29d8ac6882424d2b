//! Least-squares reconstruction of a target potential as a cosine train
//! `offset - Σ n c_n cos(φ/n)`, and conversion of negative coefficients into
//! branch phases and loop fluxes.
//!
//! The model is linear in `c_n`, so the fit is a linear least-squares problem
//! solved by Householder QR. A negative `c_n` is realized by a per-junction
//! phase shift of π (branch phase `n·π`), since `cos(x + π) = -cos(x)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{sample_potential, validate_branch_set, Branch, Potential, TrainmonCircuit};

/// Default magnitude below which a fitted coefficient is pruned, GHz.
pub const DEFAULT_DROP_TOL: f64 = 1e-9;

/// Column rank test: a column whose QR diagonal falls below this fraction of
/// its own norm is treated as dependent on the preceding columns.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub samples: Vec<(f64, f64)>,
    pub branch_set: Vec<u32>,
    pub include_offset: bool,
}

impl FitProblem {
    pub fn new(samples: Vec<(f64, f64)>, branch_set: Vec<u32>) -> Self {
        Self {
            samples,
            branch_set,
            include_offset: true,
        }
    }

    pub fn without_offset(mut self) -> Self {
        self.include_offset = false;
        self
    }

    fn validate(&self) -> Result<()> {
        validate_branch_set(&self.branch_set)?;
        let columns = self.branch_set.len() + usize::from(self.include_offset);
        if self.samples.len() < self.branch_set.len() + 1 || self.samples.len() < columns {
            return Err(Error::invalid(format!(
                "{} samples are not enough for {} basis columns",
                self.samples.len(),
                columns
            )));
        }
        if self.samples.iter().any(|(p, u)| !p.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("fit samples must be finite"));
        }
        Ok(())
    }
}

/// Branch phases and loop fluxes realizing a signed coefficient set.
///
/// All phases are integer multiples of π, stored as integers so fluxoid
/// quantization can be checked exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluxAssignment {
    /// Branch phase `φ_n` in units of π, keyed by `n`.
    pub branch_phases_pi: BTreeMap<u32, i64>,
    /// Loop flux `φ_e^l` in units of π for each consecutive branch pair.
    pub loop_fluxes_pi: Vec<i64>,
    pub fluxoid_ints: Vec<i64>,
}

impl FluxAssignment {
    pub fn branch_phase(&self, n: u32) -> Option<f64> {
        self.branch_phases_pi.get(&n).map(|&k| k as f64 * PI)
    }

    pub fn loop_fluxes(&self) -> Vec<f64> {
        self.loop_fluxes_pi.iter().map(|&k| k as f64 * PI).collect()
    }

    /// Loop fluxes reduced into `(-π, π]`.
    pub fn reduced_loop_fluxes(&self) -> Vec<f64> {
        self.loop_fluxes_pi
            .iter()
            .map(|&k| {
                // k·π reduced mod 2π: odd k → π, even k → 0
                if k.rem_euclid(2) == 1 {
                    PI
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Loop fluxes in units of Φ0 (`Φ/Φ0 = φ/2π`).
    pub fn loop_fluxes_phi0(&self) -> Vec<f64> {
        self.loop_fluxes_pi.iter().map(|&k| k as f64 / 2.0).collect()
    }

    /// `φ_{n_i} - φ_{n_{i+1}} + φ_e^l - 2π z_l` for every loop, in units of π.
    pub fn fluxoid_residuals_pi(&self) -> Vec<i64> {
        let phases: Vec<i64> = self.branch_phases_pi.values().copied().collect();
        phases
            .windows(2)
            .zip(&self.loop_fluxes_pi)
            .zip(&self.fluxoid_ints)
            .map(|((w, &loop_pi), &z)| w[0] - w[1] + loop_pi - 2 * z)
            .collect()
    }
}

/// Converts signed coefficients into branch phases and canonical (`z = 0`)
/// loop fluxes. Zero coefficients must be pruned beforehand.
pub fn assign_fluxes(coefficients: &BTreeMap<u32, f64>) -> Result<FluxAssignment> {
    if let Some((n, _)) = coefficients.iter().find(|(_, c)| **c == 0.0 || !c.is_finite()) {
        return Err(Error::invalid(format!(
            "coefficient for n = {n} must be non-zero and finite before flux assignment"
        )));
    }
    let branch_phases_pi: BTreeMap<u32, i64> = coefficients
        .iter()
        .map(|(&n, &c)| (n, if c < 0.0 { n as i64 } else { 0 }))
        .collect();
    let phases: Vec<i64> = branch_phases_pi.values().copied().collect();
    let loop_fluxes_pi: Vec<i64> = phases.windows(2).map(|w| w[1] - w[0]).collect();
    let fluxoid_ints = vec![0; loop_fluxes_pi.len()];
    Ok(FluxAssignment {
        branch_phases_pi,
        loop_fluxes_pi,
        fluxoid_ints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    /// `max |ΔU| / (max U_target - min U_target)` over the fit window.
    pub max_rel_error: f64,
    pub rmse: f64,
    /// Pearson correlation; `None` when either series has zero variance.
    pub correlation: Option<f64>,
}

/// Pearson correlation coefficient, `None` for zero-variance input.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn compute_metrics(
    target: &[f64],
    reconstruction: &[f64],
    corr_target: &[f64],
    corr_reconstruction: &[f64],
) -> Result<FitMetrics> {
    if target.len() != reconstruction.len() || target.is_empty() {
        return Err(Error::invalid("target and reconstruction grids differ"));
    }
    if corr_target.len() != corr_reconstruction.len() {
        return Err(Error::invalid("correlation window grids differ"));
    }
    let max_abs = target
        .iter()
        .zip(reconstruction)
        .map(|(t, r)| (t - r).abs())
        .fold(0.0, f64::max);
    let hi = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = target.iter().copied().fold(f64::INFINITY, f64::min);
    let span = hi - lo;
    let max_rel_error = if span > 0.0 {
        max_abs / span
    } else if max_abs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let rmse = (target
        .iter()
        .zip(reconstruction)
        .map(|(t, r)| (t - r).powi(2))
        .sum::<f64>()
        / target.len() as f64)
        .sqrt();
    Ok(FitMetrics {
        max_rel_error,
        rmse,
        correlation: pearson(corr_target, corr_reconstruction),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Signed `c_n` in GHz, keyed by `n` (before pruning).
    pub coefficients: BTreeMap<u32, f64>,
    pub offset: f64,
    pub assignment: FluxAssignment,
    pub metrics: FitMetrics,
}

impl FitResult {
    /// Fitted potential `offset - Σ n c_n cos(φ/n)`.
    pub fn evaluate(&self, phi: f64) -> f64 {
        self.offset + cosine_train(&self.coefficients, phi)
    }

    /// Branches surviving the drop tolerance, with their realized phases.
    pub fn branches(&self) -> Vec<Branch> {
        self.assignment
            .branch_phases_pi
            .keys()
            .map(|&n| {
                Branch::new(
                    n,
                    self.coefficients[&n].abs(),
                    self.assignment.branch_phase(n).unwrap_or(0.0),
                )
            })
            .collect()
    }

    /// The equivalent circuit (no offset: constants are not realizable).
    pub fn to_circuit(&self, e_c: f64, n_g: f64) -> Result<TrainmonCircuit> {
        let branches = self.branches();
        if branches.is_empty() {
            return Err(Error::invalid("every fitted coefficient was pruned"));
        }
        TrainmonCircuit::new(e_c, branches)?.with_gate_charge(n_g)
    }
}

/// `-Σ n c_n cos(φ/n)`
pub fn cosine_train(coefficients: &BTreeMap<u32, f64>, phi: f64) -> f64 {
    coefficients
        .iter()
        .map(|(&n, &c)| {
            let n = n as f64;
            -n * c * (phi / n).cos()
        })
        .sum()
}

fn column_name(j: usize, branch_set: &[u32]) -> String {
    match branch_set.get(j) {
        Some(n) => format!("n={n}"),
        None => "offset".to_string(),
    }
}

/// Least-squares fit of the cosine train to `p.samples`.
pub fn fit_coefficients(p: &FitProblem, drop_tol: f64) -> Result<FitResult> {
    p.validate()?;
    let rows = p.samples.len();
    let cols = p.branch_set.len() + usize::from(p.include_offset);
    let design = DMatrix::from_fn(rows, cols, |i, j| {
        let phi = p.samples[i].0;
        match p.branch_set.get(j) {
            Some(&n) => {
                let n = n as f64;
                -n * (phi / n).cos()
            }
            None => 1.0,
        }
    });
    let rhs = DVector::from_iterator(rows, p.samples.iter().map(|s| s.1));

    let qr = design.clone().qr();
    let r = qr.r();
    for j in 0..cols {
        let norm = design.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            // express column j through the earlier ones to name the collision
            let mut colliding = Vec::new();
            if j > 0 {
                let head = r.view((0, 0), (j, j)).into_owned();
                let col = r.view((0, j), (j, 1)).into_owned();
                if let Some(w) = head.solve_upper_triangular(&col) {
                    let scale = w.amax().max(f64::MIN_POSITIVE);
                    for (i, wi) in w.iter().enumerate() {
                        if wi.abs() > 1e-8 * scale {
                            colliding.push(column_name(i, &p.branch_set));
                        }
                    }
                }
            }
            return Err(Error::DegenerateBasis {
                column: column_name(j, &p.branch_set),
                colliding,
            });
        }
    }
    let qty = qr.q().transpose() * &rhs;
    let solution = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::DegenerateBasis {
            column: "?".into(),
            colliding: vec![],
        })?;

    let coefficients: BTreeMap<u32, f64> = p
        .branch_set
        .iter()
        .enumerate()
        .map(|(j, &n)| (n, solution[j]))
        .collect();
    let offset = if p.include_offset {
        solution[cols - 1]
    } else {
        0.0
    };
    let kept: BTreeMap<u32, f64> = coefficients
        .iter()
        .filter(|(_, c)| c.abs() >= drop_tol)
        .map(|(&n, &c)| (n, c))
        .collect();
    let assignment = assign_fluxes(&kept)?;

    let target: Vec<f64> = p.samples.iter().map(|s| s.1).collect();
    let recon: Vec<f64> = p
        .samples
        .iter()
        .map(|s| offset + cosine_train(&coefficients, s.0))
        .collect();
    let metrics = compute_metrics(&target, &recon, &target, &recon)?;
    Ok(FitResult {
        coefficients,
        offset,
        assignment,
        metrics,
    })
}

/// Samples a target over `window`, fits it, and evaluates the correlation
/// over `correlation_window` (defaults to the fit window).
pub fn fit_target(
    target: &dyn Potential,
    window: (f64, f64),
    samples: usize,
    branch_set: &[u32],
    include_offset: bool,
    drop_tol: f64,
    correlation_window: Option<(f64, f64)>,
) -> Result<FitResult> {
    let data = sample_potential(target, window.0, window.1, samples)?;
    let problem = FitProblem {
        samples: data,
        branch_set: branch_set.to_vec(),
        include_offset,
    };
    let mut fit = fit_coefficients(&problem, drop_tol)?;
    if let Some((lo, hi)) = correlation_window {
        let wide = sample_potential(target, lo, hi, samples)?;
        let t: Vec<f64> = wide.iter().map(|s| s.1).collect();
        let r: Vec<f64> = wide.iter().map(|s| fit.evaluate(s.0)).collect();
        fit.metrics.correlation = pearson(&t, &r);
    }
    Ok(fit)
}
