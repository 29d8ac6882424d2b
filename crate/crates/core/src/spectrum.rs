use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest eigenvalues of a solved Hamiltonian, GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub e01: Option<f64>,
    pub e12: Option<f64>,
    /// Charge cutoff of the solve that produced these values (charge basis only).
    pub k_max_used: Option<usize>,
    pub dimension: usize,
    /// `min_n E_J^n / E_C` for charge-basis solves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Spectrum {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>, dimension: usize) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let diff = |i: usize| {
            (eigenvalues.len() > i + 1).then(|| eigenvalues[i + 1] - eigenvalues[i])
        };
        let (e01, e12) = (diff(0), diff(1));
        Self {
            eigenvalues,
            e01,
            e12,
            k_max_used: None,
            dimension,
            validity_ratio: None,
            warnings: Vec::new(),
        }
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// `(E1 - E0, E2 - E1)`; needs three levels.
pub fn transition_energies(s: &Spectrum) -> Result<(f64, f64)> {
    let e = &s.eigenvalues;
    if e.len() < 3 {
        return Err(Error::NotEnoughLevels {
            needed: 3,
            have: e.len(),
        });
    }
    Ok((e[1] - e[0], e[2] - e[1]))
}
