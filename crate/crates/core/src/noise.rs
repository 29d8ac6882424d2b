//! Loop-flux dispersion scans, sweet-spot detection and 1/f flux-noise
//! dephasing estimates.
//!
//! Flux derivatives are taken with respect to the loop flux in units of the
//! flux quantum (`φ_e = 2π Φ/Φ_0`) of the angular transition frequency
//! `ω = 2π·10⁹·E01[GHz]`, so `A_Φ·∂ω/∂Φ` is in rad/s.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::charge_solver::{converged_spectrum, spectrum_at, Convergence};
use crate::error::{Error, Result};
use crate::io::inf_f64;
use crate::potentials::{Branch, TrainmonCircuit};

pub const DEFAULT_FLUX_STEP: f64 = 1e-4;
/// Allowed relative disagreement between the `h` and `h/2` derivatives.
pub const STEP_DRIFT_TOL: f64 = 0.01;

const GHZ_TO_RAD_S: f64 = 2.0 * PI * 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Flux-noise amplitude, Φ_0.
    #[serde(default = "default_a_phi")]
    pub a_phi: f64,
    /// Infrared cutoff, rad/s.
    #[serde(default = "default_omega_ir")]
    pub omega_ir: f64,
    /// Ultraviolet cutoff, rad/s.
    #[serde(default = "default_omega_uv")]
    pub omega_uv: f64,
    /// Measurement time, s.
    #[serde(default = "default_t_exp")]
    pub t_exp: f64,
}

fn default_a_phi() -> f64 {
    1e-6
}
fn default_omega_ir() -> f64 {
    2.0 * PI
}
fn default_omega_uv() -> f64 {
    2.0 * PI * 3e9
}
fn default_t_exp() -> f64 {
    1e-5
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            a_phi: default_a_phi(),
            omega_ir: default_omega_ir(),
            omega_uv: default_omega_uv(),
            t_exp: default_t_exp(),
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_phi", self.a_phi),
            ("omega_ir", self.omega_ir),
            ("omega_uv", self.omega_uv),
            ("t_exp", self.t_exp),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite")));
            }
        }
        if self.omega_ir >= self.omega_uv {
            return Err(Error::invalid("omega_ir must be below omega_uv"));
        }
        if (self.omega_ir * self.t_exp - 1.0).abs() < 1e-12 {
            return Err(Error::invalid("omega_ir * t_exp = 1 makes the first-order term vanish"));
        }
        Ok(())
    }
}

/// 1/f dephasing time in seconds from `d1 = ∂ω/∂Φ` (rad/s per Φ_0) and
/// `d2 = ∂²ω/∂Φ²` (rad/s per Φ_0²). `+∞` when both vanish.
pub fn dephasing_time(d1: f64, d2: f64, m: &NoiseModel) -> f64 {
    let a2 = m.a_phi * m.a_phi;
    let ln_t = (m.omega_ir * m.t_exp).ln();
    let ln_band = (m.omega_uv / m.omega_ir).ln();
    let first = 2.0 * a2 * d1 * d1 * ln_t.abs();
    let second = 2.0 * a2 * a2 * d2 * d2 * (ln_band * ln_band + 2.0 * ln_t * ln_t);
    let rate2 = first + second;
    if rate2 == 0.0 {
        f64::INFINITY
    } else {
        rate2.powf(-0.5)
    }
}

/// Harmonic sum `1/T = Σ 1/T_l`; infinite entries contribute nothing.
pub fn combine_dephasing(times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::invalid("no dephasing times to combine"));
    }
    let mut rate = 0.0;
    for &t in times {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("dephasing time {t} is not positive")));
        }
        rate += 1.0 / t;
    }
    Ok(if rate == 0.0 { f64::INFINITY } else { 1.0 / rate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxDerivatives {
    /// rad/s per Φ_0.
    pub d1: f64,
    /// rad/s per Φ_0².
    pub d2: f64,
    /// ω at the centre, rad/s.
    pub omega: f64,
    /// Step in Φ_0.
    pub step: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn central(omega: &impl Fn(f64) -> Result<f64>, x: f64, w0: f64, h: f64) -> Result<(f64, f64)> {
    let plus = omega(x + h)?;
    let minus = omega(x - h)?;
    Ok(((plus - minus) / (2.0 * h), (plus - 2.0 * w0 + minus) / (h * h)))
}

/// Central differences of `omega(Φ)` (rad/s, Φ in Φ_0) at `center`, with a
/// halved-step drift check.
pub fn flux_derivatives_with(
    omega: impl Fn(f64) -> Result<f64>,
    center: f64,
    step: f64,
) -> Result<FluxDerivatives> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("derivative step must be > 0"));
    }
    let w0 = omega(center)?;
    let (d1, d2) = central(&omega, center, w0, step)?;
    let (d1_half, d2_half) = central(&omega, center, w0, 0.5 * step)?;

    let mut warnings = Vec::new();
    // differences below these floors are resolution noise, not drift
    let d1_floor = 1e-3 * d2.abs().max(d2_half.abs()) * step;
    let d2_floor = 1e-10 * w0.abs() / (step * step);
    for (name, a, b, floor) in [("d1", d1, d1_half, d1_floor), ("d2", d2, d2_half, d2_floor)] {
        let scale = a.abs().max(b.abs());
        if scale > floor && (a - b).abs() > STEP_DRIFT_TOL * scale {
            warnings.push(format!(
                "{name} changes from {a:e} to {b:e} when the step is halved"
            ));
        }
    }
    Ok(FluxDerivatives {
        d1,
        d2,
        omega: w0,
        step,
        warnings,
    })
}

fn check_loop(c: &TrainmonCircuit, lp: usize) -> Result<()> {
    if lp >= c.loop_count() {
        return Err(Error::invalid(format!(
            "loop {lp} out of range: circuit has {} loops",
            c.loop_count()
        )));
    }
    Ok(())
}

/// Adds `delta` radians to loop `lp`, keeping the first-branch gauge and the
/// circuit's own fluxoid integers.
fn shift_loop(c: &TrainmonCircuit, lp: usize, delta: f64) -> Result<TrainmonCircuit> {
    let branches: Vec<Branch> = c
        .branches()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut b = *b;
            if i > lp {
                b.phi_branch += delta;
            }
            b
        })
        .collect();
    let mut loops = c.loop_fluxes().to_vec();
    loops[lp] += delta;
    TrainmonCircuit::new(c.e_c(), branches)?
        .with_gate_charge(c.n_g())?
        .record_loop_fluxes(&loops)
}

/// Flux derivatives of ω for loop `lp` around the circuit's bias. All stencil
/// points use the charge cutoff that converged at the centre.
pub fn flux_derivatives(
    c: &TrainmonCircuit,
    lp: usize,
    step: f64,
    conv: &Convergence,
) -> Result<FluxDerivatives> {
    check_loop(c, lp)?;
    let centre = converged_spectrum(c, 2, conv)?;
    let k = centre.k_max_used.unwrap_or(conv.k_limit);
    let omega = |phi: f64| -> Result<f64> {
        let s = spectrum_at(&shift_loop(c, lp, 2.0 * PI * phi)?, 2, k)?;
        Ok(GHZ_TO_RAD_S * s.e01.unwrap_or(0.0))
    };
    flux_derivatives_with(omega, 0.0, step)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopDephasing {
    pub loop_index: usize,
    /// Loop flux at the bias point, rad.
    pub loop_flux: f64,
    /// rad/s per Φ_0.
    pub d1: f64,
    /// rad/s per Φ_0².
    pub d2: f64,
    #[serde(with = "inf_f64")]
    pub t_first_only: f64,
    #[serde(with = "inf_f64")]
    pub t_second_only: f64,
    #[serde(with = "inf_f64")]
    pub t_combined: f64,
}

impl LoopDephasing {
    fn new(loop_index: usize, loop_flux: f64, d1: f64, d2: f64, m: &NoiseModel) -> Self {
        Self {
            loop_index,
            loop_flux,
            d1,
            d2,
            t_first_only: dephasing_time(d1, 0.0, m),
            t_second_only: dephasing_time(0.0, d2, m),
            t_combined: dephasing_time(d1, d2, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingReport {
    pub model: NoiseModel,
    /// Derivative step, Φ_0.
    pub step: f64,
    /// Qubit frequency E01 at the bias point, GHz.
    pub e01: f64,
    pub loops: Vec<LoopDephasing>,
    #[serde(with = "inf_f64")]
    pub total: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Per-loop and total dephasing at the circuit's own bias.
pub fn dephasing_report(
    c: &TrainmonCircuit,
    m: &NoiseModel,
    step: f64,
    conv: &Convergence,
) -> Result<DephasingReport> {
    m.validate()?;
    if c.loop_count() == 0 {
        return Err(Error::NothingToScan("circuit has no loops".into()));
    }
    let mut loops = Vec::with_capacity(c.loop_count());
    let mut warnings = Vec::new();
    let mut e01 = 0.0;
    for lp in 0..c.loop_count() {
        let d = flux_derivatives(c, lp, step, conv)?;
        e01 = d.omega / GHZ_TO_RAD_S;
        warnings.extend(d.warnings.iter().map(|w| format!("loop {lp}: {w}")));
        loops.push(LoopDephasing::new(lp, c.loop_fluxes()[lp], d.d1, d.d2, m));
    }
    let total = combine_dephasing(&loops.iter().map(|l| l.t_combined).collect::<Vec<_>>())?;
    Ok(DephasingReport {
        model: *m,
        step,
        e01,
        loops,
        total,
        warnings,
    })
}

/// Dephasing of loop `lp` at `points` biases spread over `±span` Φ_0 around
/// the circuit's own bias.
pub fn dephasing_sweep(
    c: &TrainmonCircuit,
    lp: usize,
    span: f64,
    points: usize,
    m: &NoiseModel,
    step: f64,
    conv: &Convergence,
) -> Result<Vec<LoopDephasing>> {
    m.validate()?;
    check_loop(c, lp)?;
    if points < 2 || !(span > 0.0) {
        return Err(Error::invalid("sweep needs span > 0 and at least 2 points"));
    }
    (0..points)
        .into_par_iter()
        .map(|i| {
            let offset = -span + 2.0 * span * i as f64 / (points - 1) as f64;
            let biased = shift_loop(c, lp, 2.0 * PI * offset)?;
            let d = flux_derivatives(&biased, lp, step, conv)?;
            Ok(LoopDephasing::new(lp, biased.loop_fluxes()[lp], d.d1, d.d2, m))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extremum {
    pub i1: usize,
    pub i2: usize,
    pub kind: ExtremumKind,
}

/// Strict 4-neighbour extrema of `surface[i1][i2]`, interior nodes only.
pub fn find_extrema(surface: &[Vec<f64>]) -> Vec<Extremum> {
    let n1 = surface.len();
    let n2 = surface.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    if n1 < 3 || n2 < 3 {
        return out;
    }
    for i1 in 1..n1 - 1 {
        for i2 in 1..n2 - 1 {
            let v = surface[i1][i2];
            let nb = [
                surface[i1 - 1][i2],
                surface[i1 + 1][i2],
                surface[i1][i2 - 1],
                surface[i1][i2 + 1],
            ];
            let kind = if nb.iter().all(|&x| v < x) {
                ExtremumKind::Min
            } else if nb.iter().all(|&x| v > x) {
                ExtremumKind::Max
            } else {
                continue;
            };
            out.push(Extremum { i1, i2, kind });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionGrid {
    /// Loop-1 flux values, rad.
    pub axis1: Vec<f64>,
    /// Loop-2 flux values, rad.
    pub axis2: Vec<f64>,
    /// `e01[i1][i2]`, GHz.
    pub e01: Vec<Vec<f64>>,
    pub e12: Vec<Vec<f64>>,
    pub extrema_e01: Vec<Extremum>,
    pub extrema_e12: Vec<Extremum>,
}

fn axis(range: (f64, f64), n: usize) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !lo.is_finite() || !hi.is_finite() || lo > hi || n == 0 {
        return Err(Error::invalid(format!("invalid scan axis [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    if lo == hi {
        return Err(Error::invalid("scan range is empty"));
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

/// E01 and E12 over a grid of the first two loop fluxes (rad); any further
/// loops keep their values. Branch phases are re-derived at each node with
/// the first-branch gauge and zero fluxoid integers.
pub fn dispersion_scan(
    c: &TrainmonCircuit,
    range1: (f64, f64),
    range2: (f64, f64),
    grid: (usize, usize),
    conv: &Convergence,
) -> Result<DispersionGrid> {
    if c.loop_count() < 2 {
        return Err(Error::NothingToScan(format!(
            "circuit has {} loop(s), two are needed",
            c.loop_count()
        )));
    }
    let axis1 = axis(range1, grid.0)?;
    let axis2 = axis(range2, grid.1)?;
    let n2 = axis2.len();
    let nodes: Vec<(f64, f64)> = (0..axis1.len() * n2)
        .into_par_iter()
        .map(|idx| {
            let (i1, i2) = (idx / n2, idx % n2);
            let at = |e: Error| Error::AtNode {
                i1,
                i2,
                source: Box::new(e),
            };
            let mut loops = c.loop_fluxes().to_vec();
            loops[0] = axis1[i1];
            loops[1] = axis2[i2];
            let node = c.with_loop_fluxes(&loops).map_err(at)?;
            let s = converged_spectrum(&node, 3, conv).map_err(at)?;
            Ok((s.e01.unwrap_or(0.0), s.e12.unwrap_or(0.0)))
        })
        .collect::<Result<_>>()?;
    let e01: Vec<Vec<f64>> = nodes.chunks(n2).map(|r| r.iter().map(|x| x.0).collect()).collect();
    let e12: Vec<Vec<f64>> = nodes.chunks(n2).map(|r| r.iter().map(|x| x.1).collect()).collect();
    Ok(DispersionGrid {
        extrema_e01: find_extrema(&e01),
        extrema_e12: find_extrema(&e12),
        axis1,
        axis2,
        e01,
        e12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn default_model() {
        let m = NoiseModel::default();
        m.validate().unwrap();
        assert_eq!(m.a_phi, 1e-6);
        assert!(NoiseModel { omega_uv: 1.0, ..m }.validate().is_err());
        assert!(NoiseModel { t_exp: 1.0 / m.omega_ir, ..m }.validate().is_err());
        assert!(NoiseModel { a_phi: 0.0, ..m }.validate().is_err());
    }

    #[test]
    fn zero_derivatives_never_dephase() {
        assert_eq!(dephasing_time(0.0, 0.0, &NoiseModel::default()), f64::INFINITY);
    }

    #[test]
    fn first_order_hand_evaluation() {
        let m = NoiseModel {
            a_phi: 1e-6,
            omega_ir: 2.0 * PI,
            t_exp: 1e-5,
            ..NoiseModel::default()
        };
        let d1 = 2.0 * PI * 1e9;
        // ω_ir t = 2π·1e-5
        let ln = (2.0 * PI * 1e-5_f64).ln().abs();
        let expected = 1.0 / (2.0 * 1e-12 * d1 * d1 * ln).sqrt();
        assert!(rel(dephasing_time(d1, 0.0, &m), expected) < 1e-10);
    }

    #[test]
    fn combined_hand_evaluation() {
        let m = NoiseModel::default();
        let (d1, d2) = (3.7e8, -2.2e12);
        let lt = (2.0 * PI * 1e-5_f64).ln();
        let lb = (3e9_f64).ln();
        let rate2 = 2e-12 * d1 * d1 * lt.abs() + 2e-24 * d2 * d2 * (lb * lb + 2.0 * lt * lt);
        assert!(rel(dephasing_time(d1, d2, &m), 1.0 / rate2.sqrt()) < 1e-10);
    }

    #[test]
    fn combination() {
        let t = combine_dephasing(&[2821.0, 13739.0]).unwrap();
        assert!((t - 2340.0).abs() <= 1.0, "{t}");
        assert_eq!(combine_dephasing(&[7.0]).unwrap(), 7.0);
        assert_eq!(combine_dephasing(&[3.0, 3.0]).unwrap(), 1.5);
        assert_eq!(combine_dephasing(&[5.0, f64::INFINITY]).unwrap(), 5.0);
        assert_eq!(combine_dephasing(&[f64::INFINITY]).unwrap(), f64::INFINITY);
        assert!(combine_dephasing(&[]).is_err());
        assert!(combine_dephasing(&[-1.0]).is_err());
    }

    #[test]
    fn stub_quadratic_dispersion() {
        let a = 3.3e11;
        let d = flux_derivatives_with(|x| Ok(a * x * x), 0.0, 1e-4).unwrap();
        assert!(rel(d.d2, 2.0 * a) < 1e-6);
        assert!(d.d1.abs() <= 1e-3 * d.d2.abs() * 1e-4);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn stub_linear_dispersion() {
        let b = 2.0 * PI * 1e9;
        let d = flux_derivatives_with(|x| Ok(b * x), 0.0, 1e-4).unwrap();
        assert!(rel(d.d1, b) < 1e-8);
        assert!(d.d2.abs() <= 1e-8 * b);
    }

    #[test]
    fn step_drift_warns() {
        let d = flux_derivatives_with(|x| Ok((1e3 * x).sin()), 0.3, 1e-2).unwrap();
        assert!(!d.warnings.is_empty());
        assert!(flux_derivatives_with(Ok, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn dephasing_is_monotone(d1 in -1e10f64..1e10, d2 in -1e14f64..1e14, k in 1.0f64..10.0) {
            let m = NoiseModel::default();
            let t = dephasing_time(d1, d2, &m);
            prop_assert!(dephasing_time(k * d1, d2, &m) <= t);
            prop_assert!(dephasing_time(d1, k * d2, &m) <= t);
            prop_assert!(t <= dephasing_time(d1, 0.0, &m));
            prop_assert!(t <= dephasing_time(0.0, d2, &m));
        }

        #[test]
        fn combination_is_harmonic(ts in proptest::collection::vec(1e-6f64..1.0, 1..6)) {
            let t = combine_dephasing(&ts).unwrap();
            // one ulp of slack for the reciprocal round trip
            prop_assert!(ts.iter().all(|&x| t <= x * (1.0 + f64::EPSILON)));
            let inv: f64 = ts.iter().map(|x| 1.0 / x).sum();
            prop_assert!((1.0 / t - inv).abs() <= 1e-12 * inv);
        }
    }

    #[test]
    fn extrema_examples() {
        let grid = |f: &dyn Fn(f64, f64) -> f64| -> Vec<Vec<f64>> {
            (-2..=2)
                .map(|i| (-2..=2).map(|j| f(i as f64, j as f64)).collect())
                .collect()
        };
        assert!(find_extrema(&grid(&|_, _| 1.0)).is_empty());
        assert_eq!(
            find_extrema(&grid(&|x, y| x * x + y * y)),
            vec![Extremum { i1: 2, i2: 2, kind: ExtremumKind::Min }]
        );
        assert!(find_extrema(&grid(&|x, y| x * x - y * y)).is_empty());
        assert_eq!(
            find_extrema(&grid(&|x, y| -(x * x + y * y))),
            vec![Extremum { i1: 2, i2: 2, kind: ExtremumKind::Max }]
        );
        // boundary extremum ignored
        assert!(find_extrema(&grid(&|x, y| x + y)).is_empty());
    }

    fn demo() -> TrainmonCircuit {
        TrainmonCircuit::new(
            0.5,
            vec![
                Branch::new(1, 2.0, 0.0),
                Branch::new(2, 1.0, 0.0),
                Branch::new(4, 0.6, 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_node_scan_matches_solver() {
        let c = demo().with_loop_fluxes(&[0.3, -0.7]).unwrap();
        let conv = Convergence::with_tol(1e-10);
        let g = dispersion_scan(&c, (0.3, 0.3), (-0.7, -0.7), (1, 1), &conv).unwrap();
        let s = converged_spectrum(&c, 3, &conv).unwrap();
        assert_eq!(g.e01, vec![vec![s.e01.unwrap()]]);
        assert_eq!(g.e12, vec![vec![s.e12.unwrap()]]);
    }

    #[test]
    fn scan_needs_two_loops() {
        let c = TrainmonCircuit::new(0.5, vec![Branch::new(1, 2.0, 0.0)]).unwrap();
        let r = dispersion_scan(&c, (0.0, 1.0), (0.0, 1.0), (3, 3), &Convergence::default());
        assert!(matches!(r, Err(Error::NothingToScan(_))));
    }

    #[test]
    fn scan_is_periodic_in_each_loop() {
        let c = demo();
        let conv = Convergence::with_tol(1e-11);
        let (a, b) = (0.4, -1.1);
        let g = dispersion_scan(&c, (a, a + 2.0 * PI), (b, b + 4.0 * PI), (2, 2), &conv).unwrap();
        // loop 1 shifts branches 2 and 4 together; loop 2 moves only branch 4
        assert!((g.e01[0][0] - g.e01[1][0]).abs() < 1e-8);
        assert!((g.e01[0][0] - g.e01[0][1]).abs() < 1e-8);
        assert!((g.e01[0][0] - g.e01[1][1]).abs() < 1e-8);
    }

    #[test]
    fn solver_failure_names_the_node() {
        let c = demo();
        let conv = Convergence {
            tol: 1e-30,
            k_start: 2,
            k_limit: 4,
        };
        match dispersion_scan(&c, (0.0, 1.0), (0.0, 1.0), (3, 3), &conv) {
            Err(Error::AtNode { i1: 0, i2: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn derivatives_vanish_at_symmetric_bias() {
        // zero flux makes E01 even in each loop flux
        let conv = Convergence::with_tol(1e-11);
        for lp in 0..2 {
            let d = flux_derivatives(&demo(), lp, DEFAULT_FLUX_STEP, &conv).unwrap();
            assert!(d.d1.abs() <= 1e-3 * d.d2.abs() * DEFAULT_FLUX_STEP, "{d:?}");
        }
    }

    #[test]
    fn sweet_spot_consistency() {
        let c = demo();
        let conv = Convergence::with_tol(1e-11);
        let w = 0.2;
        let g = dispersion_scan(&c, (-w, w), (-w, w), (5, 5), &conv).unwrap();
        assert!(!g.extrema_e01.is_empty());
        let spacing = (g.axis1[1] - g.axis1[0]) / (2.0 * PI);
        let mut slope: f64 = 0.0;
        for i in 0..5 {
            for j in 0..4 {
                slope = slope.max((g.e01[i][j + 1] - g.e01[i][j]).abs());
                slope = slope.max((g.e01[j + 1][i] - g.e01[j][i]).abs());
            }
        }
        let slope = GHZ_TO_RAD_S * slope / spacing;
        for e in &g.extrema_e01 {
            let node = c.with_loop_fluxes(&[g.axis1[e.i1], g.axis2[e.i2]]).unwrap();
            for lp in 0..2 {
                let d = flux_derivatives(&node, lp, DEFAULT_FLUX_STEP, &conv).unwrap();
                assert!(d.d1.abs() <= 1e-2 * slope, "{d:?} vs {slope}");
            }
        }
    }

    #[test]
    fn report_combines_loops() {
        let c = demo().with_loop_fluxes(&[0.5, 0.9]).unwrap();
        let m = NoiseModel::default();
        let r = dephasing_report(&c, &m, DEFAULT_FLUX_STEP, &Convergence::with_tol(1e-11)).unwrap();
        assert_eq!(r.loops.len(), 2);
        for l in &r.loops {
            assert!(l.t_combined <= l.t_first_only.min(l.t_second_only));
        }
        assert!(r.total <= r.loops.iter().map(|l| l.t_combined).fold(f64::INFINITY, f64::min));
        let expected = combine_dephasing(&[r.loops[0].t_combined, r.loops[1].t_combined]).unwrap();
        assert_eq!(r.total, expected);
    }

    #[test]
    fn sweep_bounds_hold_at_every_bias() {
        let c = demo().with_loop_fluxes(&[0.5, 0.9]).unwrap();
        let pts = dephasing_sweep(
            &c,
            1,
            0.05,
            5,
            &NoiseModel::default(),
            DEFAULT_FLUX_STEP,
            &Convergence::with_tol(1e-11),
        )
        .unwrap();
        assert_eq!(pts.len(), 5);
        assert!((pts[2].loop_flux - 0.9).abs() < 1e-12);
        for p in &pts {
            assert!(p.t_combined <= p.t_first_only && p.t_combined <= p.t_second_only);
        }
    }
}
