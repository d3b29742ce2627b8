//! Lagrangian mass grid on the unit torus.
//!
//! Cell `i` spans nodes `i` (left) and `i + 1` (right), indices modulo `n`.
//! Node `j` therefore sits between cells `j - 1` and `j` and carries the mass
//! `(m[j-1] + m[j]) / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicMassGrid {
    cell_mass: Vec<f64>,
    node_mass: Vec<f64>,
    total_mass: f64,
}

impl PeriodicMassGrid {
    pub fn new(cell_mass: Vec<f64>) -> Result<Self> {
        let n = cell_mass.len();
        if n < 3 {
            return Err(invalid(format!("need at least 3 cells, got {n}")));
        }
        if let Some((i, m)) = cell_mass.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(invalid(format!("cell {i} has non-positive mass {m}")));
        }
        let node_mass = (0..n).map(|j| 0.5 * (cell_mass[(j + n - 1) % n] + cell_mass[j])).collect();
        let total_mass = cell_mass.iter().sum();
        Ok(PeriodicMassGrid {
            cell_mass,
            node_mass,
            total_mass,
        })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.cell_mass.len()
    }

    #[inline]
    pub fn cell_mass(&self) -> &[f64] {
        &self.cell_mass
    }

    #[inline]
    pub fn node_mass(&self) -> &[f64] {
        &self.node_mass
    }

    #[inline]
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Cell widths `m_i v_i`.
    pub fn widths(&self, v: &[f64]) -> Vec<f64> {
        self.cell_mass.iter().zip(v).map(|(m, v)| m * v).collect()
    }

    /// Node positions `x_0, x_0 + w_0, ...` (length `n`, unwrapped).
    pub fn node_positions(&self, x0: f64, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_cells());
        let mut x = x0;
        for (m, v) in self.cell_mass.iter().zip(v) {
            out.push(x);
            x += m * v;
        }
        out
    }

    /// Mass-coordinate difference `(u[i+1] - u[i]) / m_i` of a node field, per cell.
    pub fn cell_gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_cells();
        (0..n).map(|i| (u[(i + 1) % n] - u[i]) / self.cell_mass[i]).collect()
    }
}

/// Midpoint-sampled cell masses of a density profile on `n` uniform cells.
pub fn sample_cell_masses(n: usize, rho: impl Fn(f64) -> f64) -> Vec<f64> {
    let h = 1.0 / n as f64;
    (0..n).map(|i| rho((i as f64 + 0.5) * h) * h).collect()
}
