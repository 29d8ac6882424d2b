//! Finite-difference Schrödinger solver on a uniform phase grid.
//!
//! `H = -4E_C ∂²/∂φ² + U(φ)` with the second-order central stencil: diagonal
//! `U(φ_j) + 8E_C/h²`, nearest-neighbour coupling `-4E_C/h²`. Hard-wall grids
//! place `N` interior nodes between the walls; periodic grids place `N` nodes
//! with the duplicate endpoint dropped and wrap the last node onto the first.
//!
//! The matrix is (cyclic) tridiagonal, so eigenvalues are isolated by
//! bisection on Sylvester inertia counts and then polished with inverse
//! iteration and a Rayleigh quotient evaluated in difference form. The
//! periodic corner is handled by a bordered LDLᵀ: the last node is eliminated
//! through its Schur complement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    HardWall,
}

pub struct PhaseGridProblem<'a> {
    pub e_c: f64,
    pub potential: &'a dyn Potential,
    pub phi_min: f64,
    pub phi_max: f64,
    pub boundary: Boundary,
    pub points: usize,
    pub levels: usize,
}

impl PhaseGridProblem<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.e_c > 0.0) || !self.e_c.is_finite() {
            return Err(Error::invalid("e_c must be > 0"));
        }
        if !(self.phi_min < self.phi_max) || !self.phi_min.is_finite() || !self.phi_max.is_finite()
        {
            return Err(Error::invalid(format!(
                "invalid domain [{}, {}]",
                self.phi_min, self.phi_max
            )));
        }
        if self.points < 16 {
            return Err(Error::invalid("phase grid needs at least 16 points"));
        }
        if self.levels == 0 || self.levels > self.points {
            return Err(Error::invalid(format!(
                "cannot return {} levels from {} grid points",
                self.levels, self.points
            )));
        }
        Ok(())
    }

    /// Grid spacing.
    pub fn spacing(&self) -> f64 {
        let len = self.phi_max - self.phi_min;
        match self.boundary {
            Boundary::Periodic => len / self.points as f64,
            Boundary::HardWall => len / (self.points + 1) as f64,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        let first = match self.boundary {
            Boundary::Periodic => 0,
            Boundary::HardWall => 1,
        };
        (0..self.points)
            .map(|j| self.phi_min + (j + first) as f64 * h)
            .collect()
    }
}

/// `-a` nearest-neighbour coupling with diagonal `v_j + 2a`.
struct Stencil {
    v: Vec<f64>,
    a: f64,
    periodic: bool,
}

impl Stencil {
    fn new(p: &PhaseGridProblem) -> Result<Self> {
        let h = p.spacing();
        let v = p
            .nodes()
            .into_iter()
            .map(|x| p.potential.eval(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            v,
            a: 4.0 * p.e_c / (h * h),
            periodic: p.boundary == Boundary::Periodic,
        })
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    fn bounds(&self) -> (f64, f64) {
        let lo = self.v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - 1.0, hi + 4.0 * self.a + 1.0)
    }

    fn tiny(&self) -> f64 {
        f64::EPSILON * self.a.max(1.0) * 1e-3
    }

    /// LDLᵀ pivots of the open tridiagonal block on nodes `0..m`, shifted by `sigma`.
    fn pivots(&self, m: usize, sigma: f64) -> Vec<f64> {
        let a2 = self.a * self.a;
        let tiny = self.tiny();
        let mut p = Vec::with_capacity(m);
        let mut prev = f64::INFINITY;
        for j in 0..m {
            let mut d = self.v[j] + 2.0 * self.a - sigma;
            if j > 0 {
                d -= a2 / prev;
            }
            if d == 0.0 {
                d = -tiny;
            }
            p.push(d);
            prev = d;
        }
        p
    }

    /// Solves the open tridiagonal block on nodes `0..m` with given pivots.
    fn solve_block(&self, piv: &[f64], rhs: &[f64]) -> Vec<f64> {
        let m = piv.len();
        let off = -self.a;
        // L y = rhs with L unit lower bidiagonal, L_{j,j-1} = off / p_{j-1}
        let mut y = rhs.to_vec();
        for j in 1..m {
            y[j] -= off / piv[j - 1] * y[j - 1];
        }
        // D Lᵀ x = y
        let mut x = vec![0.0; m];
        for j in (0..m).rev() {
            let mut z = y[j] / piv[j];
            if j + 1 < m {
                z -= off / piv[j] * x[j + 1];
            }
            x[j] = z;
        }
        x
    }

    /// Border of the periodic matrix: couplings of the last node to the block.
    fn border(&self) -> Vec<f64> {
        let m = self.len() - 1;
        let mut b = vec![0.0; m];
        b[0] -= self.a;
        b[m - 1] -= self.a;
        b
    }

    /// Number of eigenvalues strictly below `sigma`.
    ///
    /// One forward LDLᵀ sweep; for the periodic wrap the border is carried
    /// along as `y = L⁻¹b`, so `bᵀT⁻¹b = Σ y_j² / p_j`.
    fn count_below(&self, sigma: f64) -> usize {
        let n = self.len();
        let m = if self.periodic { n - 1 } else { n };
        let a2 = self.a * self.a;
        let tiny = self.tiny();
        let mut below = 0;
        let (mut prev, mut y_prev, mut border) = (f64::INFINITY, 0.0, 0.0);
        for j in 0..m {
            let mut d = self.v[j] + 2.0 * self.a - sigma;
            if j > 0 {
                d -= a2 / prev;
            }
            if d == 0.0 {
                d = -tiny;
            }
            below += usize::from(d < 0.0);
            if self.periodic {
                let mut b = 0.0;
                if j == 0 {
                    b -= self.a;
                }
                if j == m - 1 {
                    b -= self.a;
                }
                let y = if j > 0 { b + self.a / prev * y_prev } else { b };
                border += y * y / d;
                y_prev = y;
            }
            prev = d;
        }
        if self.periodic {
            let schur = self.v[m] + 2.0 * self.a - sigma - border;
            below += usize::from(schur < 0.0);
        }
        below
    }

    /// Rounding scale of the matrix entries.
    fn resolution(&self) -> f64 {
        let vmax = self.v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        4.0 * f64::EPSILON * (vmax + 4.0 * self.a)
    }

    /// Solves `(A - sigma) x = rhs`.
    fn solve(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        if !self.periodic {
            let piv = self.pivots(n, sigma);
            return self.solve_block(&piv, rhs);
        }
        let m = n - 1;
        let piv = self.pivots(m, sigma);
        let b = self.border();
        let u = self.solve_block(&piv, &rhs[..m]);
        let w = self.solve_block(&piv, &b);
        let mut schur = self.v[m] + 2.0 * self.a - sigma - dot(&b, &w);
        if schur == 0.0 {
            schur = self.tiny();
        }
        let last = (rhs[m] - dot(&b, &u)) / schur;
        let mut x: Vec<f64> = u.iter().zip(&w).map(|(ui, wi)| ui - wi * last).collect();
        x.push(last);
        x
    }

    /// `xᵀ A x / xᵀ x`, with the kinetic part summed as squared differences.
    fn rayleigh(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut kinetic: f64 = x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        if self.periodic {
            kinetic += (x[0] - x[n - 1]).powi(2);
        } else {
            kinetic += x[0] * x[0] + x[n - 1] * x[n - 1];
        }
        let potential: f64 = x.iter().zip(&self.v).map(|(xi, vi)| vi * xi * xi).sum();
        (self.a * kinetic + potential) / dot(x, x)
    }

    /// `k`-th smallest eigenvalue (0-based) by bisection.
    fn bisect(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.bounds();
        let tol = self.resolution();
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Normalized eigenvector near `lambda` by inverse iteration.
    fn inverse_iteration(&self, lambda: f64, seed: usize) -> Vec<f64> {
        let n = self.len();
        let mut x: Vec<f64> = (0..n)
            .map(|j| 1.0 + 0.5 * ((j * (seed + 1)) as f64 * 0.7548776662466927).sin())
            .collect();
        normalize(&mut x);
        for _ in 0..4 {
            x = self.solve(lambda, &x);
            normalize(&mut x);
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) {
    let norm = dot(x, x).sqrt();
    if norm > 0.0 && norm.is_finite() {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Eigenvalues and unit eigenvectors of the stencil's lowest `levels` states.
fn lowest_states(st: &Stencil, levels: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    // counts lose accuracy where the open block is singular (degenerate
    // periodic levels), so the window is set by the matrix norm
    let window = 1e-9 * st.resolution() / (4.0 * f64::EPSILON);
    let mut values = Vec::with_capacity(levels);
    let mut states = Vec::with_capacity(levels);
    for k in 0..levels {
        let coarse = st.bisect(k);
        let x = st.inverse_iteration(coarse, k);
        let rq = st.rayleigh(&x);
        // keep the polished value only if it stayed on this eigenvalue
        let value = if (rq - coarse).abs() <= window {
            rq
        } else {
            coarse
        };
        values.push(value);
        states.push(x);
    }
    (values, states)
}

fn check_problem(p: &PhaseGridProblem, st: &Stencil, warnings: &mut Vec<String>) -> Result<()> {
    match p.boundary {
        Boundary::Periodic => {
            let a = p.potential.eval(p.phi_min)?;
            let b = p.potential.eval(p.phi_max)?;
            if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                warnings.push(format!(
                    "periodic domain: U(phi_min) = {a} differs from U(phi_max) = {b}"
                ));
            }
        }
        Boundary::HardWall => {
            // same spacing, domain widened by 20%
            let h = p.spacing();
            let pad = 0.1 * (p.phi_max - p.phi_min);
            let wide = PhaseGridProblem {
                phi_min: p.phi_min - pad,
                phi_max: p.phi_max + pad,
                points: ((p.phi_max - p.phi_min + 2.0 * pad) / h).round() as usize - 1,
                levels: 1,
                ..*p
            };
            match Stencil::new(&wide) {
                Ok(wst) => {
                    let e0 = st.bisect(0);
                    let e0_wide = wst.bisect(0);
                    let scale = e0.abs().max(p.e_c);
                    if (e0 - e0_wide).abs() > 1e-3 * scale {
                        warnings.push(format!(
                            "hard-wall domain too small: ground state moves from {e0} to {e0_wide} GHz when widened by 20%"
                        ));
                    }
                }
                Err(_) => warnings.push(
                    "hard-wall domain check skipped: potential not defined on the widened domain"
                        .to_string(),
                ),
            }
        }
    }
    Ok(())
}

/// Lowest `p.levels` eigenvalues, ascending.
pub fn solve_phase_grid(p: &PhaseGridProblem) -> Result<Spectrum> {
    solve_phase_grid_states(p).map(|(s, _)| s)
}

/// As [`solve_phase_grid`], also returning unit-norm eigenvectors on [`PhaseGridProblem::nodes`].
pub fn solve_phase_grid_states(p: &PhaseGridProblem) -> Result<(Spectrum, Vec<Vec<f64>>)> {
    p.validate()?;
    let st = Stencil::new(p)?;
    let mut warnings = Vec::new();
    check_problem(p, &st, &mut warnings)?;
    let (values, states) = lowest_states(&st, p.levels);
    let mut s = Spectrum::from_eigenvalues(values, p.points);
    s.warnings = warnings;
    Ok((s, states))
}

/// `|E(2N) - E(N)|` per level.
pub fn richardson_check(p: &PhaseGridProblem) -> Result<Vec<f64>> {
    p.validate()?;
    let coarse = lowest_states(&Stencil::new(p)?, p.levels).0;
    let fine_problem = PhaseGridProblem {
        points: 2 * p.points,
        ..*p
    };
    let fine = lowest_states(&Stencil::new(&fine_problem)?, p.levels).0;
    Ok(coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).collect())
}
