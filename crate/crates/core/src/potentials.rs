//! Target potentials and the junction-array circuit potential.
//!
//! Every energy is a frequency `E/h` in GHz and every phase is in radians.
//! Flux quoted "in units of Φ0" maps to phase through `φ = 2π·Φ/Φ0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can be evaluated as a potential energy `U(φ)` in GHz.
pub trait Potential: Send + Sync {
    fn eval(&self, phi: f64) -> Result<f64>;
}

/// Wraps a plain closure as a [`Potential`].
pub struct FnPotential<F>(pub F);

impl<F> Potential for FnPotential<F>
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    fn eval(&self, phi: f64) -> Result<f64> {
        Ok((self.0)(phi))
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {x}")))
    }
}

/// Array of `N` junctions (ratio `γ`) in parallel with one small junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartonParams {
    pub gamma: f64,
    pub n_array: u32,
    pub e_j: f64,
    pub phi_e: f64,
}

impl QuartonParams {
    pub fn new(gamma: f64, n_array: u32, e_j: f64, phi_e: f64) -> Result<Self> {
        let p = Self {
            gamma,
            n_array,
            e_j,
            phi_e,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("gamma", self.gamma)?;
        check_finite("e_j", self.e_j)?;
        check_finite("phi_e", self.phi_e)?;
        if self.n_array < 1 {
            return Err(Error::invalid("quarton n_array must be >= 1"));
        }
        if self.e_j <= 0.0 {
            return Err(Error::invalid("quarton e_j must be > 0"));
        }
        if self.gamma < 0.0 {
            return Err(Error::invalid("quarton gamma must be >= 0"));
        }
        Ok(())
    }

    /// `-γ E_J N cos(φ/N) - E_J cos(φ + φ_e)`
    pub fn value(&self, phi: f64) -> f64 {
        let n = self.n_array as f64;
        -self.gamma * self.e_j * n * (phi / n).cos() - self.e_j * (phi + self.phi_e).cos()
    }
}

impl Potential for QuartonParams {
    fn eval(&self, phi: f64) -> Result<f64> {
        Ok(self.value(phi))
    }
}

/// Single junction shunted by an inductor (and a capacitor, used by the solvers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxoniumParams {
    pub e_j: f64,
    pub e_c: f64,
    pub e_l: f64,
    pub phi_ext: f64,
    #[serde(default)]
    pub n_g: f64,
}

impl FluxoniumParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("e_j", self.e_j),
            ("e_c", self.e_c),
            ("e_l", self.e_l),
            ("phi_ext", self.phi_ext),
            ("n_g", self.n_g),
        ] {
            check_finite(name, x)?;
        }
        if self.e_j <= 0.0 {
            return Err(Error::invalid("fluxonium e_j must be > 0"));
        }
        if self.e_c <= 0.0 {
            return Err(Error::invalid("fluxonium e_c must be > 0"));
        }
        if self.e_l < 0.0 {
            return Err(Error::invalid("fluxonium e_l must be >= 0"));
        }
        Ok(())
    }

    /// Potential part of the generic single-node Hamiltonian:
    /// `-E_J cos(φ - φ_ext) + ½ E_L φ²`.
    pub fn value(&self, phi: f64) -> f64 {
        -self.e_j * (phi - self.phi_ext).cos() + 0.5 * self.e_l * phi * phi
    }
}

impl Potential for FluxoniumParams {
    fn eval(&self, phi: f64) -> Result<f64> {
        Ok(self.value(phi))
    }
}

/// Piecewise-linear potential through user-supplied samples.
///
/// Evaluation outside the sampled range is an error; there is no extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedRepr", into = "TabulatedRepr")]
pub struct TabulatedPotential {
    phi: Vec<f64>,
    u: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TabulatedRepr {
    samples: Vec<(f64, f64)>,
}

impl TryFrom<TabulatedRepr> for TabulatedPotential {
    type Error = Error;
    fn try_from(r: TabulatedRepr) -> Result<Self> {
        Self::new(r.samples)
    }
}

impl From<TabulatedPotential> for TabulatedRepr {
    fn from(t: TabulatedPotential) -> Self {
        TabulatedRepr {
            samples: t.samples().collect(),
        }
    }
}

impl TabulatedPotential {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("tabulated potential needs at least 2 samples"));
        }
        for &(phi, u) in &samples {
            check_finite("tabulated phi", phi)?;
            check_finite("tabulated u", u)?;
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("tabulated phi values must be strictly increasing"));
        }
        let (phi, u) = samples.into_iter().unzip();
        Ok(Self { phi, u })
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.phi.iter().copied().zip(self.u.iter().copied())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.phi[0], self.phi[self.phi.len() - 1])
    }
}

impl Potential for TabulatedPotential {
    fn eval(&self, phi: f64) -> Result<f64> {
        let (min, max) = self.range();
        if !(min..=max).contains(&phi) {
            return Err(Error::OutOfDomain { phi, min, max });
        }
        // index of the first node strictly greater than phi
        let hi = self.phi.partition_point(|&x| x <= phi);
        if hi == self.phi.len() {
            return Ok(self.u[hi - 1]);
        }
        let lo = hi - 1;
        let t = (phi - self.phi[lo]) / (self.phi[hi] - self.phi[lo]);
        Ok(self.u[lo] + t * (self.u[hi] - self.u[lo]))
    }
}

/// One parallel branch: `n` identical junctions in series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub n: u32,
    /// Josephson energy of each junction in the branch, GHz.
    pub e_j: f64,
    /// Total branch phase offset; each junction is shifted by `phi_branch / n`.
    pub phi_branch: f64,
}

impl Branch {
    pub fn new(n: u32, e_j: f64, phi_branch: f64) -> Self {
        Self { n, e_j, phi_branch }
    }

    /// This branch's contribution `-n E_J cos(φ/n + φ_n/n)`.
    pub fn value(&self, phi: f64) -> f64 {
        let n = self.n as f64;
        -n * self.e_j * ((phi + self.phi_branch) / n).cos()
    }
}

/// Parallel junction-array branches sharing one shunt capacitor.
///
/// Loop `l` is formed by branches `l` and `l + 1` (ascending `n`). Its reduced
/// external flux obeys fluxoid quantization
/// `φ_{n_l} - φ_{n_{l+1}} + φ_e^l = 2π z_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitRepr", into = "CircuitRepr")]
pub struct TrainmonCircuit {
    e_c: f64,
    n_g: f64,
    branches: Vec<Branch>,
    loop_fluxes: Vec<f64>,
    fluxoid_ints: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct BranchRepr {
    n: u32,
    e_j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi_branch: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitRepr {
    e_c: f64,
    #[serde(default)]
    n_g: f64,
    branches: Vec<BranchRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loop_fluxes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fluxoid_ints: Option<Vec<i64>>,
}

impl TryFrom<CircuitRepr> for TrainmonCircuit {
    type Error = Error;

    fn try_from(r: CircuitRepr) -> Result<Self> {
        let any_phase = r.branches.iter().any(|b| b.phi_branch.is_some());
        let branches: Vec<Branch> = r
            .branches
            .iter()
            .map(|b| Branch::new(b.n, b.e_j, b.phi_branch.unwrap_or(0.0)))
            .collect();
        let base = TrainmonCircuit::new(r.e_c, branches)?.with_gate_charge(r.n_g)?;
        match (r.loop_fluxes, any_phase) {
            (None, _) => Ok(base),
            // fluxes only: derive branch phases in the gauge φ_first = 0
            (Some(loops), false) => base.with_loop_fluxes(&loops),
            (Some(loops), true) => {
                let c = base.record_loop_fluxes(&loops)?;
                if let Some(z) = r.fluxoid_ints {
                    if z != c.fluxoid_ints {
                        return Err(Error::invalid(format!(
                            "fluxoid integers {z:?} disagree with branch phases ({:?})",
                            c.fluxoid_ints
                        )));
                    }
                }
                Ok(c)
            }
        }
    }
}

impl From<TrainmonCircuit> for CircuitRepr {
    fn from(c: TrainmonCircuit) -> Self {
        CircuitRepr {
            e_c: c.e_c,
            n_g: c.n_g,
            branches: c
                .branches
                .iter()
                .map(|b| BranchRepr {
                    n: b.n,
                    e_j: b.e_j,
                    phi_branch: Some(b.phi_branch),
                })
                .collect(),
            loop_fluxes: Some(c.loop_fluxes),
            fluxoid_ints: Some(c.fluxoid_ints),
        }
    }
}

pub fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Least common multiple of a set of positive integers.
pub fn lcm_of(ns: impl IntoIterator<Item = u32>) -> u64 {
    ns.into_iter()
        .fold(1u64, |acc, n| acc / gcd(acc, n as u64) * n as u64)
}

/// Validates a branch set: non-empty, positive, strictly ascending.
pub fn validate_branch_set(ns: &[u32]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::invalid("branch set is empty"));
    }
    if ns.contains(&0) {
        return Err(Error::invalid("branch junction counts must be >= 1"));
    }
    for w in ns.windows(2) {
        if w[1] == w[0] {
            return Err(Error::invalid(format!("duplicate branch n = {}", w[0])));
        }
        if w[1] < w[0] {
            return Err(Error::invalid("branch set must be ascending"));
        }
    }
    Ok(())
}

impl TrainmonCircuit {
    /// Builds a circuit from branches; loop fluxes are derived with `z = 0`.
    ///
    /// Branch energies may be zero (an "empty" branch), never negative: sign
    /// changes are expressed through branch phases.
    pub fn new(e_c: f64, branches: Vec<Branch>) -> Result<Self> {
        check_finite("e_c", e_c)?;
        if e_c < 0.0 {
            return Err(Error::invalid("e_c must be >= 0"));
        }
        let ns: Vec<u32> = branches.iter().map(|b| b.n).collect();
        validate_branch_set(&ns)?;
        for b in &branches {
            check_finite("branch e_j", b.e_j)?;
            check_finite("branch phi_branch", b.phi_branch)?;
            if b.e_j < 0.0 {
                return Err(Error::invalid(format!(
                    "branch n = {} has negative e_j; use a branch phase instead",
                    b.n
                )));
            }
        }
        let loop_fluxes = branches
            .windows(2)
            .map(|w| w[1].phi_branch - w[0].phi_branch)
            .collect::<Vec<_>>();
        let fluxoid_ints = vec![0; loop_fluxes.len()];
        Ok(Self {
            e_c,
            n_g: 0.0,
            branches,
            loop_fluxes,
            fluxoid_ints,
        })
    }

    pub fn with_gate_charge(mut self, n_g: f64) -> Result<Self> {
        check_finite("n_g", n_g)?;
        self.n_g = n_g;
        Ok(self)
    }

    /// Replaces the loop fluxes and re-derives branch phases with gauge
    /// `φ_first = 0` and `z = 0`, i.e. `φ_{n_{l+1}} = φ_{n_l} + φ_e^l`.
    pub fn with_loop_fluxes(&self, loops: &[f64]) -> Result<Self> {
        if loops.len() != self.loop_count() {
            return Err(Error::invalid(format!(
                "expected {} loop fluxes, got {}",
                self.loop_count(),
                loops.len()
            )));
        }
        for &l in loops {
            check_finite("loop flux", l)?;
        }
        let mut branches = self.branches.clone();
        branches[0].phi_branch = 0.0;
        for (l, &flux) in loops.iter().enumerate() {
            branches[l + 1].phi_branch = branches[l].phi_branch + flux;
        }
        Ok(Self {
            branches,
            loop_fluxes: loops.to_vec(),
            fluxoid_ints: vec![0; loops.len()],
            ..self.clone()
        })
    }

    /// Keeps the branch phases and records the given loop fluxes, solving
    /// fluxoid quantization for the integers `z_l`.
    pub fn record_loop_fluxes(&self, loops: &[f64]) -> Result<Self> {
        if loops.len() != self.loop_count() {
            return Err(Error::invalid(format!(
                "expected {} loop fluxes, got {}",
                self.loop_count(),
                loops.len()
            )));
        }
        let mut ints = Vec::with_capacity(loops.len());
        for (l, &flux) in loops.iter().enumerate() {
            let lhs =
                self.branches[l].phi_branch - self.branches[l + 1].phi_branch + flux;
            let z = (lhs / (2.0 * PI)).round();
            if (lhs - 2.0 * PI * z).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "loop {l}: flux {flux} violates fluxoid quantization with the branch phases"
                )));
            }
            ints.push(z as i64);
        }
        Ok(Self {
            loop_fluxes: loops.to_vec(),
            fluxoid_ints: ints,
            ..self.clone()
        })
    }

    pub fn e_c(&self) -> f64 {
        self.e_c
    }

    pub fn n_g(&self) -> f64 {
        self.n_g
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_set(&self) -> Vec<u32> {
        self.branches.iter().map(|b| b.n).collect()
    }

    pub fn loop_count(&self) -> usize {
        self.branches.len() - 1
    }

    pub fn loop_fluxes(&self) -> &[f64] {
        &self.loop_fluxes
    }

    pub fn fluxoid_ints(&self) -> &[i64] {
        &self.fluxoid_ints
    }

    pub fn lcm(&self) -> u64 {
        lcm_of(self.branch_set())
    }

    /// Period of the potential, `2π·lcm(n)`.
    pub fn period(&self) -> f64 {
        2.0 * PI * self.lcm() as f64
    }

    /// Same circuit with every branch phase negated.
    pub fn conjugate(&self) -> Self {
        let branches: Vec<Branch> = self
            .branches
            .iter()
            .map(|b| Branch::new(b.n, b.e_j, -b.phi_branch))
            .collect();
        Self {
            loop_fluxes: self.loop_fluxes.iter().map(|x| -x).collect(),
            fluxoid_ints: self.fluxoid_ints.iter().map(|z| -z).collect(),
            branches,
            ..self.clone()
        }
    }

    /// `min_n E_J^n / E_C`; large values are needed for the quasi-1D reduction
    /// to hold. `None` when `E_C = 0`.
    pub fn validity_ratio(&self) -> Option<f64> {
        if self.e_c == 0.0 {
            return None;
        }
        let min = self
            .branches
            .iter()
            .map(|b| b.e_j)
            .fold(f64::INFINITY, f64::min);
        Some(min / self.e_c)
    }

    /// `-Σ n E_J^n cos(φ/n + φ_n/n)`
    pub fn value(&self, phi: f64) -> f64 {
        self.branches.iter().map(|b| b.value(phi)).sum()
    }
}

impl Potential for TrainmonCircuit {
    fn eval(&self, phi: f64) -> Result<f64> {
        Ok(self.value(phi))
    }
}

/// JSON potential description, discriminated by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialSpec {
    Quarton(QuartonParams),
    Fluxonium(FluxoniumParams),
    Tabulated(TabulatedPotential),
    Trainmon(TrainmonCircuit),
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Quarton(p) => p.validate(),
            PotentialSpec::Fluxonium(p) => p.validate(),
            // validated on construction
            PotentialSpec::Tabulated(_) | PotentialSpec::Trainmon(_) => Ok(()),
        }
    }

    /// Charging energy carried by the spec itself, if any.
    pub fn charging_energy(&self) -> Option<f64> {
        match self {
            PotentialSpec::Fluxonium(p) => Some(p.e_c),
            PotentialSpec::Trainmon(c) => Some(c.e_c()),
            _ => None,
        }
    }
}

impl Potential for PotentialSpec {
    fn eval(&self, phi: f64) -> Result<f64> {
        match self {
            PotentialSpec::Quarton(p) => p.eval(phi),
            PotentialSpec::Fluxonium(p) => p.eval(phi),
            PotentialSpec::Tabulated(p) => p.eval(phi),
            PotentialSpec::Trainmon(p) => p.eval(phi),
        }
    }
}

/// `count` uniformly spaced nodes over `[phi_min, phi_max]`, endpoints included.
pub fn phase_nodes(phi_min: f64, phi_max: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::invalid("sample count must be >= 2"));
    }
    if !(phi_min < phi_max) || !phi_min.is_finite() || !phi_max.is_finite() {
        return Err(Error::invalid(format!(
            "invalid phase window [{phi_min}, {phi_max}]"
        )));
    }
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|j| {
            if j == count - 1 {
                phi_max
            } else {
                phi_min + (phi_max - phi_min) * (j as f64 / last)
            }
        })
        .collect())
}

/// Evaluates `target` on [`phase_nodes`].
pub fn sample_potential(
    target: &dyn Potential,
    phi_min: f64,
    phi_max: f64,
    count: usize,
) -> Result<Vec<(f64, f64)>> {
    phase_nodes(phi_min, phi_max, count)?
        .into_iter()
        .map(|phi| Ok((phi, target.eval(phi)?)))
        .collect()
}
