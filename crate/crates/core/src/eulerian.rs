//! Transfer of Lagrangian cell/node data onto a uniform Eulerian grid.

use crate::error::{invalid, Result};

/// Cell geometry of a Lagrangian snapshot: left position of cell 0 and the
/// cell widths, which tile one period.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub x0: f64,
    pub widths: Vec<f64>,
}

impl CellGeometry {
    pub fn new(x0: f64, widths: Vec<f64>) -> Self {
        CellGeometry { x0, widths }
    }

    /// Unwrapped node positions, length `n + 1` (last = first + period).
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.widths.len() + 1);
        let mut x = self.x0;
        out.push(x);
        for w in &self.widths {
            x += w;
            out.push(x);
        }
        out
    }

    /// Bin averages of a piecewise-constant cell field over `n` uniform bins.
    ///
    /// The integral over the torus is preserved: `sum(bins) / n == sum(f_i w_i)`.
    pub fn remap_cells(&self, f: &[f64], n: usize) -> Result<Vec<f64>> {
        if f.len() != self.widths.len() {
            return Err(invalid("cell field length differs from the geometry"));
        }
        if n == 0 {
            return Err(invalid("zero Eulerian samples"));
        }
        let nf = n as f64;
        let mut acc = vec![0.0; n];
        let mut a = self.x0;
        for (fi, w) in f.iter().zip(&self.widths) {
            let b = a + w;
            let mut lo = a;
            while lo < b {
                let k = (lo * nf).floor();
                let mut hi = (k + 1.0) / nf;
                if hi <= lo {
                    // floor landed on the bin edge below `lo` after rounding
                    hi = (k + 2.0) / nf;
                }
                let seg_end = hi.min(b);
                let bin = (k as i64).rem_euclid(n as i64) as usize;
                acc[bin] += fi * (seg_end - lo);
                lo = seg_end;
            }
            a = b;
        }
        acc.iter_mut().for_each(|v| *v *= nf);
        Ok(acc)
    }

    /// Periodic piecewise-linear interpolation of a node field (node `j` is the
    /// left node of cell `j`) at the bin midpoints.
    pub fn sample_nodes(&self, u: &[f64], n: usize) -> Result<Vec<f64>> {
        let nc = self.widths.len();
        if u.len() != nc {
            return Err(invalid("node field length differs from the geometry"));
        }
        let nodes = self.nodes();
        let period = nodes[nc] - nodes[0];
        let out = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) / n as f64;
                let y = self.x0 + (s - self.x0).rem_euclid(period);
                // last j with nodes[j] <= y
                let j = match nodes.partition_point(|&x| x <= y) {
                    0 => 0,
                    p => (p - 1).min(nc - 1),
                };
                let t = ((y - nodes[j]) / (nodes[j + 1] - nodes[j])).clamp(0.0, 1.0);
                u[j] * (1.0 - t) + u[(j + 1) % nc] * t
            })
            .collect();
        Ok(out)
    }
}

/// Uniform-grid view of one snapshot (mesoscopic or macroscopic).
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianSnapshot {
    pub time: f64,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl EulerianSnapshot {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f.as_slice())
    }

    pub fn n_samples(&self) -> usize {
        self.fields.first().map_or(0, |(_, f)| f.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cell_profile_by_hand() {
        // cells [0.25, 0.5) and [0.5, 1.25) on 4 bins
        let g = CellGeometry::new(0.25, vec![0.25, 0.75]);
        let bins = g.remap_cells(&[2.0, 6.0], 4).unwrap();
        assert_eq!(bins, vec![6.0, 2.0, 6.0, 6.0]);
        // 8 bins with a cell edge inside a bin
        let g = CellGeometry::new(0.1, vec![0.3, 0.7]);
        let bins = g.remap_cells(&[1.0, 3.0], 4).unwrap();
        // bin 0 = [0,0.25): 0.1 of cell 1 (wrapped) + 0.15 of cell 0
        let expect0 = (0.1 * 3.0 + 0.15 * 1.0) * 4.0;
        assert!((bins[0] - expect0).abs() < 1e-14);
        assert!((bins[1] - (0.15 * 1.0 + 0.1 * 3.0) * 4.0).abs() < 1e-14);
        assert!((bins[2] - 3.0).abs() < 1e-14);

        let u = g.sample_nodes(&[0.0, 1.0], 4).unwrap();
        // node 0 at 0.1 (u=0), node 1 at 0.4 (u=1), node 2 at 1.1 (u=0)
        let lerp = |x: f64| if x < 0.4 && x >= 0.1 { (x - 0.1) / 0.3 } else { let y = if x < 0.1 { x + 1.0 } else { x }; 1.0 - (y - 0.4) / 0.7 };
        for (k, val) in u.iter().enumerate() {
            let x = (k as f64 + 0.5) / 4.0;
            assert!((val - lerp(x)).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn remap_preserves_integral() {
        let widths: Vec<f64> = (0..37).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7).sin()).collect();
        let total: f64 = widths.iter().sum();
        let widths: Vec<f64> = widths.iter().map(|w| w / total).collect();
        let f: Vec<f64> = (0..37).map(|i| 1.0 + (i as f64).cos()).collect();
        let g = CellGeometry::new(-0.137, widths.clone());
        let bins = g.remap_cells(&f, 100).unwrap();
        let exact: f64 = f.iter().zip(&widths).map(|(a, b)| a * b).sum();
        let approx: f64 = bins.iter().sum::<f64>() / 100.0;
        assert!((exact - approx).abs() < 1e-13 * exact);
    }
}
