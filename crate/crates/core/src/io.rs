//! JSON configurations, result envelopes and CSV writers used by the CLI.
//!
//! JSON floats use the shortest representation that round-trips; infinite
//! dephasing times are written as the string `"inf"`. CSV files use `,` as
//! separator and always carry a header row.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use crate::charge_solver::{converged_spectrum, spectrum_at, Convergence, HermitianMatrix};
use crate::error::{Error, Result};
use crate::fitter::{fit_target, pearson, FitMetrics, FitResult, DEFAULT_DROP_TOL};
use crate::noise::{
    dephasing_report, dephasing_sweep, DephasingReport, DispersionGrid, Extremum, LoopDephasing,
    NoiseModel, DEFAULT_FLUX_STEP,
};
use crate::phase_oracle::{solve_phase_grid, Boundary, PhaseGridProblem};
use crate::potentials::{sample_potential, validate_branch_set, Potential, PotentialSpec, TrainmonCircuit};
use crate::spectrum::{transition_energies, Spectrum};

/// Serde adapter for `f64` fields that may hold `+∞`.
pub mod inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Reads a circuit file, or the `circuit` member of a fit output.
pub fn read_circuit(path: &Path) -> Result<TrainmonCircuit> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let inner = match value.get("circuit") {
        Some(c) if value.get("branches").is_none() => c.clone(),
        _ => value,
    };
    Ok(serde_json::from_value(inner)?)
}

fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else {
        x.to_string()
    }
}

/// Branch set given either as `"1,2,4"` or `[1, 2, 4]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct BranchList(pub Vec<u32>);

impl std::str::FromStr for BranchList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ns = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::invalid(format!("bad branch index {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        validate_branch_set(&ns)?;
        Ok(BranchList(ns))
    }
}

impl<'de> Deserialize<'de> for BranchList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            List(Vec<u32>),
        }
        let list = match Repr::deserialize(d)? {
            Repr::Text(t) => return t.parse().map_err(serde::de::Error::custom),
            Repr::List(ns) => ns,
        };
        validate_branch_set(&list).map_err(serde::de::Error::custom)?;
        Ok(BranchList(list))
    }
}

fn default_samples() -> usize {
    1001
}
fn default_true() -> bool {
    true
}
fn default_drop_tol() -> f64 {
    DEFAULT_DROP_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub target: PotentialSpec,
    /// Fit window, rad.
    pub window: (f64, f64),
    pub branches: BranchList,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_true")]
    pub include_offset: bool,
    #[serde(default = "default_drop_tol")]
    pub drop_tol: f64,
    /// Window for the reported correlation; defaults to the fit window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_window: Option<(f64, f64)>,
    /// Charging energy of the emitted circuit; defaults to the target's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_c: Option<f64>,
    #[serde(default)]
    pub n_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub fit: FitResult,
    /// Loop fluxes, rad.
    pub loop_fluxes: Vec<f64>,
    /// Loop fluxes folded into (-π, π], rad.
    pub reduced_loop_fluxes: Vec<f64>,
    pub loop_fluxes_phi0: Vec<f64>,
    pub normalization: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<TrainmonCircuit>,
}

pub fn run_fit(req: &FitRequest) -> Result<FitOutput> {
    req.target.validate()?;
    let fit = fit_target(
        &req.target,
        req.window,
        req.samples,
        &req.branches.0,
        req.include_offset,
        req.drop_tol,
        req.correlation_window,
    )?;
    let circuit = match req.e_c.or_else(|| req.target.charging_energy()) {
        Some(e_c) => Some(fit.to_circuit(e_c, req.n_g)?),
        None => None,
    };
    Ok(FitOutput {
        loop_fluxes: fit.assignment.loop_fluxes(),
        reduced_loop_fluxes: fit.assignment.reduced_loop_fluxes(),
        loop_fluxes_phi0: fit.assignment.loop_fluxes_phi0(),
        normalization: "max_rel_error = max|U_fit - U_target| / (max U_target - min U_target) over the fit window".into(),
        fit,
        circuit,
    })
}

/// `phi,target,fit,residual` over the fit window.
pub fn reconstruction_csv(req: &FitRequest, out: &FitOutput) -> Result<String> {
    let mut s = String::from("phi,target,fit,residual\n");
    for (phi, u) in sample_potential(&req.target, req.window.0, req.window.1, req.samples)? {
        let f = out.fit.evaluate(phi);
        let _ = writeln!(s, "{},{},{},{}", num(phi), num(u), num(f), num(f - u));
    }
    Ok(s)
}

pub fn eigenvalues_csv(s: &Spectrum) -> String {
    let mut out = String::from("level,energy_ghz\n");
    for (i, e) in s.eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", num(*e));
    }
    out
}

pub fn matrix_csv(h: &HermitianMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for (i, j, re, im) in h.triplets() {
        let _ = writeln!(out, "{i},{j},{},{}", num(re), num(im));
    }
    out
}

/// Converged solve, or a fixed cutoff when `k_max` is given.
pub fn run_spectrum(c: &TrainmonCircuit, levels: usize, tol: f64, k_max: Option<usize>) -> Result<Spectrum> {
    if levels == 0 {
        return Err(Error::invalid("levels must be >= 1"));
    }
    match k_max {
        Some(k) => spectrum_at(c, levels, k),
        None => converged_spectrum(c, levels, &Convergence::with_tol(tol)),
    }
}

fn default_domain() -> (f64, f64) {
    (-6.0 * PI, 6.0 * PI)
}
fn default_boundary() -> Boundary {
    Boundary::HardWall
}
fn default_points() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub target: PotentialSpec,
    /// Charging energy for the target solve; defaults to the target's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_c: Option<f64>,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Window for the potential-shape metrics; defaults to `domain`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_window: Option<(f64, f64)>,
    #[serde(default)]
    pub convergence: Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    pub e01: f64,
    pub e12: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: Transitions,
    pub trainmon: Transitions,
    /// Trainmon minus reference, GHz.
    pub delta_e01: f64,
    pub delta_e12: f64,
    /// `delta / reference`; absent when the reference value is zero.
    pub rel_e01: Option<f64>,
    pub rel_e12: Option<f64>,
    /// Shape agreement of the two potentials after removing their mean offset.
    pub metrics: FitMetrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn new(reference: Transitions, trainmon: Transitions, metrics: FitMetrics) -> Self {
        let delta_e01 = trainmon.e01 - reference.e01;
        let delta_e12 = trainmon.e12 - reference.e12;
        let rel = |d: f64, r: f64| (r != 0.0).then(|| d / r);
        Self {
            reference,
            trainmon,
            delta_e01,
            delta_e12,
            rel_e01: rel(delta_e01, reference.e01),
            rel_e12: rel(delta_e12, reference.e12),
            metrics,
            warnings: Vec::new(),
        }
    }

    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let rel = |r: Option<f64>| r.map_or("n/a".to_string(), |x| format!("{x:.3e}"));
        let mut s = String::new();
        let _ = writeln!(s, "{:<10}{:>16}{:>16}{:>14}{:>12}", "", "reference", "trainmon", "delta", "rel");
        let _ = writeln!(
            s,
            "{:<10}{:>16.8}{:>16.8}{:>14.3e}{:>12}",
            "E01 (GHz)",
            self.reference.e01,
            self.trainmon.e01,
            self.delta_e01,
            rel(self.rel_e01)
        );
        let _ = writeln!(
            s,
            "{:<10}{:>16.8}{:>16.8}{:>14.3e}{:>12}",
            "E12 (GHz)",
            self.reference.e12,
            self.trainmon.e12,
            self.delta_e12,
            rel(self.rel_e12)
        );
        match self.metrics.correlation {
            Some(r) => {
                let _ = writeln!(s, "correlation {r:.6}");
            }
            None => {
                let _ = writeln!(s, "correlation n/a");
            }
        }
        s
    }
}

fn transitions(s: &Spectrum) -> Result<Transitions> {
    let (e01, e12) = transition_energies(s)?;
    Ok(Transitions { e01, e12 })
}

/// Solves the target on the phase grid and the circuit in the charge basis.
pub fn run_compare(cfg: &CompareConfig, circuit: &TrainmonCircuit) -> Result<ComparisonReport> {
    cfg.target.validate()?;
    let e_c = cfg
        .e_c
        .or_else(|| cfg.target.charging_energy())
        .ok_or_else(|| Error::invalid("target has no charging energy; set e_c"))?;
    let reference = solve_phase_grid(&PhaseGridProblem {
        e_c,
        potential: &cfg.target,
        phi_min: cfg.domain.0,
        phi_max: cfg.domain.1,
        boundary: cfg.boundary,
        points: cfg.points,
        levels: 3,
    })?;
    let trainmon = converged_spectrum(circuit, 3, &cfg.convergence)?;

    let (lo, hi) = cfg.metrics_window.unwrap_or(cfg.domain);
    let samples = sample_potential(&cfg.target, lo, hi, 2001)?;
    let t: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let mut r = samples
        .iter()
        .map(|s| circuit.eval(s.0))
        .collect::<Result<Vec<f64>>>()?;
    let shift = (t.iter().sum::<f64>() - r.iter().sum::<f64>()) / t.len() as f64;
    r.iter_mut().for_each(|x| *x += shift);
    let mut metrics = crate::fitter::compute_metrics(&t, &r, &t, &r)?;
    metrics.correlation = pearson(&t, &r);

    let mut report = ComparisonReport::new(transitions(&reference)?, transitions(&trainmon)?, metrics);
    report.warnings.extend(reference.warnings.iter().map(|w| format!("reference: {w}")));
    report.warnings.extend(trainmon.warnings.iter().map(|w| format!("trainmon: {w}")));
    Ok(report)
}

fn default_grid() -> (usize, usize) {
    (21, 21)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    /// Loop-1 flux range, rad.
    pub range1: (f64, f64),
    /// Loop-2 flux range, rad.
    pub range2: (f64, f64),
    #[serde(default = "default_grid")]
    pub grid: (usize, usize),
    #[serde(default)]
    pub convergence: Convergence,
}

/// `phi1,phi2,e01_ghz,e12_ghz`, one row per node, `i1` outer.
pub fn dispersion_csv(g: &DispersionGrid) -> String {
    let mut s = String::from("phi1,phi2,e01_ghz,e12_ghz\n");
    for (i1, p1) in g.axis1.iter().enumerate() {
        for (i2, p2) in g.axis2.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", num(*p1), num(*p2), num(g.e01[i1][i2]), num(g.e12[i1][i2]));
        }
    }
    s
}

pub fn extrema_csv(g: &DispersionGrid) -> String {
    let mut s = String::from("surface,i1,i2,phi1,phi2,kind,value_ghz\n");
    let mut emit = |name: &str, list: &[Extremum], surface: &[Vec<f64>]| {
        for e in list {
            let kind = match e.kind {
                crate::noise::ExtremumKind::Min => "min",
                crate::noise::ExtremumKind::Max => "max",
            };
            let _ = writeln!(
                s,
                "{name},{},{},{},{},{kind},{}",
                e.i1,
                e.i2,
                num(g.axis1[e.i1]),
                num(g.axis2[e.i2]),
                num(surface[e.i1][e.i2])
            );
        }
    };
    emit("e01", &g.extrema_e01, &g.e01);
    emit("e12", &g.extrema_e12, &g.e12);
    s
}

fn default_step() -> f64 {
    DEFAULT_FLUX_STEP
}
fn default_span() -> f64 {
    0.05
}
fn default_sweep_points() -> usize {
    21
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Half-width around the bias, Φ_0.
    #[serde(default = "default_span")]
    pub span: f64,
    #[serde(default = "default_sweep_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingConfig {
    #[serde(default)]
    pub noise: NoiseModel,
    /// Derivative step, Φ_0.
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub convergence: Convergence,
    /// Optional per-loop bias sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for DephasingConfig {
    fn default() -> Self {
        Self {
            noise: NoiseModel::default(),
            step: default_step(),
            convergence: Convergence::default(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingOutput {
    pub report: DephasingReport,
    /// Sweep points keyed by loop index.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweeps: BTreeMap<usize, Vec<LoopDephasing>>,
}

pub fn run_dephasing(c: &TrainmonCircuit, cfg: &DephasingConfig) -> Result<DephasingOutput> {
    let report = dephasing_report(c, &cfg.noise, cfg.step, &cfg.convergence)?;
    let mut sweeps = BTreeMap::new();
    if let Some(sw) = &cfg.sweep {
        for lp in 0..c.loop_count() {
            let pts = dephasing_sweep(c, lp, sw.span, sw.points, &cfg.noise, cfg.step, &cfg.convergence)?;
            sweeps.insert(lp, pts);
        }
    }
    Ok(DephasingOutput { report, sweeps })
}

fn micros(t: f64) -> String {
    if t == f64::INFINITY {
        "INF".to_string()
    } else {
        format!("{:.1}", t * 1e6)
    }
}

/// Plain-text dephasing summary in microseconds.
pub fn dephasing_table(r: &DephasingReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6}{:>14}{:>14}{:>14}{:>16}{:>16}",
        "loop", "T1st (us)", "T2nd (us)", "T (us)", "d1 (rad/s/Φ0)", "d2 (rad/s/Φ0²)"
    );
    for l in &r.loops {
        let _ = writeln!(
            s,
            "{:<6}{:>14}{:>14}{:>14}{:>16.4e}{:>16.4e}",
            l.loop_index + 1,
            micros(l.t_first_only),
            micros(l.t_second_only),
            micros(l.t_combined),
            l.d1,
            l.d2
        );
    }
    let _ = writeln!(s, "total {} us", micros(r.total));
    s
}

pub fn sweep_csv(sweeps: &BTreeMap<usize, Vec<LoopDephasing>>) -> String {
    let mut s = String::from("loop,loop_flux,d1,d2,t_first_only,t_second_only,t_combined\n");
    for pts in sweeps.values() {
        for p in pts {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                p.loop_index,
                num(p.loop_flux),
                num(p.d1),
                num(p.d2),
                num(p.t_first_only),
                num(p.t_second_only),
                num(p.t_combined)
            );
        }
    }
    s
}
