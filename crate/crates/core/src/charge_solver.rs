//! Charge-basis Hamiltonian of a junction-array circuit.
//!
//! A branch of `n` junctions contributes `cos(φ/n + φ_n/n)`, which shifts the
//! charge by `±1/n`. With branch set `I` all shifts live on the lattice
//! `k = m / (i·lcm(I))`, so the Hamiltonian is a banded matrix on that lattice:
//! kinetic energy `4E_C (k - n_g)²` on the diagonal and
//! `-(n E_J / 2) e^{±iφ_n/n}` between `k` and `k ± 1/n`. The lattice is
//! truncated at `|k| ≤ k_max` with open boundaries.
//!
//! For resolution `i > 1` the lattice splits into `i` sublattices that no
//! operator couples; the convergence driver solves the one containing `k = 0`,
//! which coincides with the `i = 1` lattice.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{lcm_of, TrainmonCircuit};
use crate::spectrum::Spectrum;

/// Hermiticity tolerance (absolute, GHz).
pub const HERMITIAN_TOL: f64 = 1e-14;

/// `min E_J / E_C` below which solves carry a validity warning.
pub const VALIDITY_WARN_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeGrid {
    pub lcm: u64,
    pub resolution: u64,
    pub k_max: usize,
    pub values: Vec<f64>,
}

impl ChargeGrid {
    /// Lattice points per unit charge.
    pub fn steps_per_unit(&self) -> u64 {
        self.lcm * self.resolution
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Index of `k = 0`.
    pub fn zero_index(&self) -> usize {
        self.values.len() / 2
    }

    /// The sublattice that contains `k = 0`, i.e. the same grid at resolution 1.
    pub fn zero_sublattice(&self) -> ChargeGrid {
        let half = self.k_max as i64 * self.lcm as i64;
        ChargeGrid {
            lcm: self.lcm,
            resolution: 1,
            k_max: self.k_max,
            values: (-half..=half).map(|m| m as f64 / self.lcm as f64).collect(),
        }
    }
}

pub fn build_charge_grid(branch_set: &[u32], k_max: usize, resolution: u64) -> Result<ChargeGrid> {
    if branch_set.is_empty() {
        return Err(Error::invalid("charge grid needs a non-empty branch set"));
    }
    if branch_set.contains(&0) {
        return Err(Error::invalid("branch junction counts must be >= 1"));
    }
    if k_max < 1 || resolution < 1 {
        return Err(Error::invalid("k_max and resolution must be >= 1"));
    }
    let lcm = lcm_of(branch_set.iter().copied());
    let steps = lcm * resolution;
    let half = k_max as i64 * steps as i64;
    let values = (-half..=half).map(|m| m as f64 / steps as f64).collect();
    Ok(ChargeGrid {
        lcm,
        resolution,
        k_max,
        values,
    })
}

/// Dense Hermitian matrix in GHz.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(pub DMatrix<Complex64>);

impl HermitianMatrix {
    pub fn dimension(&self) -> usize {
        self.0.nrows()
    }

    /// `max |H_ij - conj(H_ji)|`
    pub fn hermiticity_deviation(&self) -> f64 {
        let m = &self.0;
        let n = m.nrows();
        if m.ncols() != n {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.0.map(|z| z.re)
    }

    /// Dense `(row, col, re, im)` listing in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64, f64)> {
        let n = self.dimension();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.0[(i, j)];
                // adding +0.0 folds -0.0 into 0.0
                out.push((i, j, z.re + 0.0, z.im + 0.0));
            }
        }
        out
    }
}

/// `e^{iθ}` with exact `±1` for phases that are whole multiples of π.
fn unit_phase(theta: f64) -> Complex64 {
    let (s, c) = theta.sin_cos();
    if s.abs() < 8.0 * f64::EPSILON * theta.abs().max(1.0) {
        Complex64::new(c.signum(), 0.0)
    } else {
        Complex64::new(c, s)
    }
}

pub fn build_hamiltonian(c: &TrainmonCircuit, g: &ChargeGrid) -> Result<HermitianMatrix> {
    let steps = g.steps_per_unit();
    let dim = g.dimension();
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for (i, &k) in g.values.iter().enumerate() {
        let q = k - c.n_g();
        h[(i, i)] = Complex64::new(4.0 * c.e_c() * q * q, 0.0);
    }
    for b in c.branches() {
        if !steps.is_multiple_of(b.n as u64) {
            return Err(Error::invalid(format!(
                "branch n = {} does not fit a lattice with spacing 1/{steps}",
                b.n
            )));
        }
        let shift = (steps / b.n as u64) as usize;
        let n = b.n as f64;
        // <k + 1/n| H |k> = -(n E_J / 2) e^{i φ_n / n}
        let up = unit_phase(b.phi_branch / n) * (-0.5 * n * b.e_j);
        for i in 0..dim.saturating_sub(shift) {
            h[(i + shift, i)] += up;
            h[(i, i + shift)] += up.conj();
        }
    }
    Ok(HermitianMatrix(h))
}

/// Eigenvalues (ascending) and, optionally, eigenvectors of a Hermitian matrix.
fn diagonalize(h: &HermitianMatrix, vectors: bool) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let dev = h.hermiticity_deviation();
    if !(dev <= HERMITIAN_TOL) {
        return Err(Error::NonHermitian { deviation: dev });
    }
    let (values, vecs): (Vec<f64>, Option<DMatrix<Complex64>>) = if h.is_real() {
        let m = h.real_part();
        if vectors {
            let eig = m.symmetric_eigen();
            let vecs = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
            (eig.eigenvalues.iter().copied().collect(), Some(vecs))
        } else {
            (m.symmetric_eigenvalues().iter().copied().collect(), None)
        }
    } else if vectors {
        let eig = h.0.clone().symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), Some(eig.eigenvectors))
    } else {
        (h.0.symmetric_eigenvalues().iter().copied().collect(), None)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&i| values[i]).collect();
    let states = match vecs {
        Some(v) => order
            .iter()
            .map(|&i| v.column(i).iter().copied().collect())
            .collect(),
        None => Vec::new(),
    };
    Ok((sorted, states))
}

/// Lowest `levels` eigenvalues of `h`.
pub fn eigensolve(h: &HermitianMatrix, levels: usize) -> Result<Spectrum> {
    let dim = h.dimension();
    if levels == 0 || levels > dim {
        return Err(Error::invalid(format!(
            "requested {levels} levels from a {dim}-dimensional matrix"
        )));
    }
    let (mut values, _) = diagonalize(h, false)?;
    values.truncate(levels);
    Ok(Spectrum::from_eigenvalues(values, dim))
}

/// Like [`eigensolve`] but also returns the eigenvectors of the returned levels.
pub fn eigensolve_with_states(
    h: &HermitianMatrix,
    levels: usize,
) -> Result<(Spectrum, Vec<Vec<Complex64>>)> {
    let dim = h.dimension();
    if levels == 0 || levels > dim {
        return Err(Error::invalid(format!(
            "requested {levels} levels from a {dim}-dimensional matrix"
        )));
    }
    let (mut values, mut states) = diagonalize(h, true)?;
    values.truncate(levels);
    states.truncate(levels);
    Ok((Spectrum::from_eigenvalues(values, dim), states))
}

/// Truncation control for [`converged_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// Maximum allowed change of any requested transition energy, GHz.
    pub tol: f64,
    #[serde(default = "default_k_start")]
    pub k_start: usize,
    #[serde(default = "default_k_limit")]
    pub k_limit: usize,
}

fn default_k_start() -> usize {
    8
}

fn default_k_limit() -> usize {
    512
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            k_start: default_k_start(),
            k_limit: default_k_limit(),
        }
    }
}

impl Convergence {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Solves at a fixed charge cutoff.
pub fn spectrum_at(c: &TrainmonCircuit, levels: usize, k_max: usize) -> Result<Spectrum> {
    let grid = build_charge_grid(&c.branch_set(), k_max, 1)?;
    let h = build_hamiltonian(c, &grid)?;
    let mut s = eigensolve(&h, levels)?;
    s.k_max_used = Some(k_max);
    annotate_validity(c, &mut s);
    Ok(s)
}

fn annotate_validity(c: &TrainmonCircuit, s: &mut Spectrum) {
    s.validity_ratio = c.validity_ratio();
    if let Some(r) = s.validity_ratio {
        if r < VALIDITY_WARN_RATIO {
            s.warnings.push(format!(
                "min E_J/E_C = {r:.3} < {VALIDITY_WARN_RATIO}: the quasi-1D branch reduction may not hold"
            ));
        }
    }
}

/// Quantities compared between successive truncations: adjacent transition
/// energies, or the ground energy when only one level is requested.
fn convergence_probe(s: &Spectrum) -> Vec<f64> {
    if s.eigenvalues.len() == 1 {
        s.eigenvalues.clone()
    } else {
        s.eigenvalues.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Doubles `k_max` from `conv.k_start` until every requested transition energy
/// moves by less than `conv.tol`.
pub fn converged_spectrum(c: &TrainmonCircuit, levels: usize, conv: &Convergence) -> Result<Spectrum> {
    if !(conv.tol > 0.0) {
        return Err(Error::invalid("convergence tolerance must be > 0"));
    }
    if levels == 0 {
        return Err(Error::invalid("levels must be >= 1"));
    }
    let lcm = c.lcm() as usize;
    let mut k = conv.k_start.max(1);
    while 2 * k * lcm + 1 < levels {
        k *= 2;
    }
    if k > conv.k_limit {
        return Err(Error::invalid(format!(
            "{levels} levels need a cutoff beyond k_max = {}",
            conv.k_limit
        )));
    }
    let mut prev = spectrum_at(c, levels, k)?;
    let mut last_change = f64::INFINITY;
    while 2 * k <= conv.k_limit {
        k *= 2;
        let next = spectrum_at(c, levels, k)?;
        last_change = convergence_probe(&prev)
            .iter()
            .zip(convergence_probe(&next))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if last_change < conv.tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Truncation {
        k_max: k,
        tol: conv.tol,
        last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Branch;
    use std::f64::consts::PI;

    fn unit_124(e_c: f64, phases: [f64; 3]) -> TrainmonCircuit {
        TrainmonCircuit::new(
            e_c,
            vec![
                Branch::new(1, 1.0, phases[0]),
                Branch::new(2, 1.0, phases[1]),
                Branch::new(4, 1.0, phases[2]),
            ],
        )
        .unwrap()
    }

    /// Cyclic Jacobi rotations for a real symmetric matrix.
    #[allow(clippy::needless_range_loop)]
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn grid_examples() {
        let g = build_charge_grid(&[1, 2, 4], 1, 1).unwrap();
        assert_eq!(g.lcm, 4);
        assert_eq!(
            g.values,
            vec![-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0]
        );
        let g = build_charge_grid(&[1], 2, 1).unwrap();
        assert_eq!(g.values, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let g = build_charge_grid(&[2, 3], 1, 1).unwrap();
        assert_eq!(g.lcm, 6);
        assert_eq!(g.dimension(), 13);
        for w in g.values.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 6.0).abs() < 1e-15);
        }
        assert!(build_charge_grid(&[], 1, 1).is_err());
        assert!(build_charge_grid(&[1], 0, 1).is_err());
    }

    #[test]
    fn finer_resolution_decouples_into_sublattices() {
        let c = unit_124(0.3, [0.0; 3]);
        let g = build_charge_grid(&[1, 2, 4], 3, 2).unwrap();
        assert_eq!(g.dimension(), 2 * 3 * 2 * 4 + 1);
        let h = build_hamiltonian(&c, &g).unwrap();
        for i in 0..g.dimension() {
            for j in 0..g.dimension() {
                if (i as i64 - j as i64) % 2 != 0 {
                    assert_eq!(h.0[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
        let sub = g.zero_sublattice();
        let reference = build_charge_grid(&[1, 2, 4], 3, 1).unwrap();
        assert_eq!(sub, reference);
    }

    #[test]
    fn unit_124_matrix() {
        let c = unit_124(0.0, [0.0; 3]);
        let g = build_charge_grid(&[1, 2, 4], 1, 1).unwrap();
        let h = build_hamiltonian(&c, &g).unwrap();
        assert!(h.is_real());
        let m = h.real_part();
        for i in 0..9usize {
            for j in 0..9usize {
                let expected = match i.abs_diff(j) {
                    1 => -2.0,
                    2 => -1.0,
                    4 => -0.5,
                    _ => 0.0,
                };
                assert_eq!(m[(i, j)], expected, "({i},{j})");
            }
        }
    }

    #[test]
    fn branch_phase_of_2pi_flips_half_band() {
        let c = unit_124(0.0, [0.0, 2.0 * PI, 0.0]);
        let g = build_charge_grid(&[1, 2, 4], 1, 1).unwrap();
        let m = build_hamiltonian(&c, &g).unwrap().real_part();
        assert_eq!(m[(0, 2)], 1.0);
        assert_eq!(m[(2, 0)], 1.0);
        assert_eq!(m[(0, 1)], -2.0);
    }

    #[test]
    fn kinetic_diagonal() {
        let c = TrainmonCircuit::new(1.0, vec![Branch::new(1, 0.0, 0.0), Branch::new(2, 0.0, 0.0)])
            .unwrap();
        let g = build_charge_grid(&[1, 2], 2, 1).unwrap();
        let h = build_hamiltonian(&c, &g).unwrap();
        for (i, k) in g.values.iter().enumerate() {
            assert_eq!(h.0[(i, i)].re, 4.0 * k * k);
        }
        let with_gate = c.with_gate_charge(0.25).unwrap();
        let h = build_hamiltonian(&with_gate, &g).unwrap();
        assert_eq!(h.0[(g.zero_index(), g.zero_index())].re, 0.25);
    }

    #[test]
    fn rejects_branch_off_lattice() {
        let c = TrainmonCircuit::new(1.0, vec![Branch::new(3, 1.0, 0.0)]).unwrap();
        let g = build_charge_grid(&[1, 2], 2, 1).unwrap();
        assert!(build_hamiltonian(&c, &g).is_err());
    }

    #[test]
    fn eigensolve_examples() {
        let d = HermitianMatrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(16.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(4.0, 0.0),
        ])));
        assert_eq!(eigensolve(&d, 3).unwrap().eigenvalues, vec![0.0, 4.0, 16.0]);

        let two = HermitianMatrix(DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        ));
        let s = eigensolve(&two, 2).unwrap();
        assert!((s.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-15);

        assert!(eigensolve(&two, 3).is_err());
        assert!(eigensolve(&two, 0).is_err());
    }

    #[test]
    fn demo_matrix_matches_jacobi_oracle() {
        let c = unit_124(0.0, [0.0; 3]);
        let g = build_charge_grid(&[1, 2, 4], 1, 1).unwrap();
        let h = build_hamiltonian(&c, &g).unwrap();
        let m = h.real_part();
        let rows: Vec<Vec<f64>> = (0..9).map(|i| (0..9).map(|j| m[(i, j)]).collect()).collect();
        let oracle = jacobi_eigenvalues(rows);
        let s = eigensolve(&h, 9).unwrap();
        for (a, b) in s.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn complex_matrix_matches_real_embedding() {
        // H = A + iB  ↔  [[A, -B], [B, A]] has every eigenvalue twice
        let c = unit_124(0.4, [0.3, -1.1, 2.5]);
        let g = build_charge_grid(&[1, 2, 4], 2, 1).unwrap();
        let h = build_hamiltonian(&c, &g).unwrap();
        assert!(!h.is_real());
        let n = h.dimension();
        let mut rows = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                let z = h.0[(i, j)];
                rows[i][j] = z.re;
                rows[i + n][j + n] = z.re;
                rows[i][j + n] = -z.im;
                rows[i + n][j] = z.im;
            }
        }
        let doubled = jacobi_eigenvalues(rows);
        let s = eigensolve(&h, n).unwrap();
        for (i, e) in s.eigenvalues.iter().enumerate() {
            assert!((e - doubled[2 * i]).abs() < 1e-10);
            assert!((e - doubled[2 * i + 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let m = HermitianMatrix(DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0 + 1e-12, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        ));
        assert!(matches!(eigensolve(&m, 1), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn transmon_limit_converges_early() {
        let c = TrainmonCircuit::new(0.2, vec![Branch::new(1, 20.0, 0.0)]).unwrap();
        let at16 = spectrum_at(&c, 3, 16).unwrap();
        let at32 = spectrum_at(&c, 3, 32).unwrap();
        assert!((at16.e01.unwrap() - at32.e01.unwrap()).abs() < 1e-10);
        let s = converged_spectrum(&c, 3, &Convergence::with_tol(1e-10)).unwrap();
        // the 16 vs 32 comparison is the one that settles
        assert!(s.k_max_used.unwrap() <= 32);
    }

    #[test]
    fn free_rotor_is_exact() {
        let c = TrainmonCircuit::new(1.0, vec![Branch::new(1, 0.0, 0.0)]).unwrap();
        let s = converged_spectrum(&c, 5, &Convergence::with_tol(1e-12)).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0, 4.0, 4.0, 16.0, 16.0]);
        assert_eq!(s.k_max_used, Some(16));
        let s = spectrum_at(&c, 5, 2).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0, 4.0, 4.0, 16.0, 16.0]);
    }

    #[test]
    fn truncation_failure_is_reported() {
        let c = TrainmonCircuit::new(0.001, vec![Branch::new(1, 1000.0, 0.0)]).unwrap();
        let conv = Convergence {
            tol: 1e-9,
            k_start: 2,
            k_limit: 8,
        };
        assert!(matches!(
            converged_spectrum(&c, 3, &conv),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn validity_warning() {
        let c = TrainmonCircuit::new(1.0, vec![Branch::new(1, 5.0, 0.0)]).unwrap();
        let s = spectrum_at(&c, 3, 8).unwrap();
        assert_eq!(s.validity_ratio, Some(5.0));
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn zero_flux_ground_state_is_even() {
        let c = TrainmonCircuit::new(
            0.3,
            vec![
                Branch::new(1, 1.7, 0.0),
                Branch::new(2, 0.4, 0.0),
                Branch::new(4, 2.2, 0.0),
            ],
        )
        .unwrap();
        let g = build_charge_grid(&c.branch_set(), 12, 1).unwrap();
        let h = build_hamiltonian(&c, &g).unwrap();
        let (_, states) = eigensolve_with_states(&h, 1).unwrap();
        let v = &states[0];
        let n = v.len();
        // fix the global phase on the largest component
        let pivot = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        let phase = pivot.conj() / pivot.norm();
        let v: Vec<Complex64> = v.iter().map(|z| z * phase).collect();
        let dev = (0..n).map(|i| (v[i] - v[n - 1 - i]).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-8, "parity deviation {dev}");
    }
}
