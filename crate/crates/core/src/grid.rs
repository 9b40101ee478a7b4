//! Discretization of the rescaled time axis `(0, 1]` into `L` equal cells.
//!
//! Log-intensities are piecewise constant on cells, so integrals of
//! `exp(g)` become cell sums. An interval `(a, b]` is attributed the cells
//! `⌈aL⌉+1 ..= ⌈bL⌉` (1-based), which makes interval integrals over a
//! partition add up exactly to the integral over the union.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when taking `⌈tL⌉`, so that times lying on a cell boundary
/// up to rounding are attributed to the lower cell.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    cells: usize,
}

impl GridSpec {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::validation(format!("grid needs at least 2 cells, got {cells}")));
        }
        Ok(GridSpec { cells })
    }

    pub fn len(&self) -> usize {
        self.cells
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_length(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// `s_l = (l − 1/2)/L`.
    pub fn cell_centers(&self) -> Vec<f64> {
        let l = self.cells as f64;
        (0..self.cells).map(|i| (i as f64 + 0.5) / l).collect()
    }

    /// Right edges `l/L`.
    pub fn cell_edges(&self) -> Vec<f64> {
        let l = self.cells as f64;
        (1..=self.cells).map(|i| i as f64 / l).collect()
    }

    /// `⌈tL⌉` for `t ∈ [0, 1]`, clamped to `0..=L`.
    pub(crate) fn ceil_cells(&self, t: f64) -> usize {
        let x = t * self.cells as f64;
        let c = (x - CEIL_SLACK * x.abs().max(1.0)).ceil();
        (c.max(0.0) as usize).min(self.cells)
    }

    /// Zero-based half-open range of cells attributed to `(a, b]`.
    pub fn cell_range(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let lo = self.ceil_cells(a);
        let hi = self.ceil_cells(b).max(lo);
        lo..hi
    }
}

/// One-based index `⌈tL⌉` of the cell holding rescaled time `t ∈ (0, 1]`.
pub fn cell_index(t: f64, grid: &GridSpec) -> Result<usize> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("rescaled time {t} outside (0, 1]")));
    }
    Ok(grid.ceil_cells(t).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Observation,
    Event,
}

impl Process {
    pub fn index(self) -> usize {
        match self {
            Process::Observation => 0,
            Process::Event => 1,
        }
    }
}

/// Log baseline intensity on the grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCurve {
    pub values: Vec<f64>,
    pub mean_level: f64,
    pub which: Process,
}

impl LatentCurve {
    pub fn constant(grid: &GridSpec, level: f64, which: Process) -> Self {
        LatentCurve {
            values: vec![level; grid.len()],
            mean_level: level,
            which,
        }
    }

    pub fn integral(&self, grid: &GridSpec, a: f64, b: f64) -> f64 {
        integral_exp(&self.values, grid, a, b)
    }
}

/// `∫_a^b exp(g)` under the piecewise-constant approximation:
/// `(1/L) Σ_{l = ⌈aL⌉+1}^{⌈bL⌉} exp(g_l)`.
pub fn integral_exp(values: &[f64], grid: &GridSpec, a: f64, b: f64) -> f64 {
    debug_assert_eq!(values.len(), grid.len());
    let range = grid.cell_range(a, b);
    values[range].iter().map(|g| g.exp()).sum::<f64>() * grid.cell_length()
}

/// Cumulative curve `C_l = (1/L) Σ_{j ≤ l} exp(g_j)`, `l = 1..=L`.
///
/// Under the cell attribution a time `t` counts through cell `⌈tL⌉`, so for
/// visit times spread over a cell `C_l` estimates the cumulative intensity
/// at the cell center `s_l`, not at the right edge.
pub fn cumulative_curve(values: &[f64], grid: &GridSpec) -> Vec<f64> {
    let h = grid.cell_length();
    let mut acc = 0.0;
    values
        .iter()
        .map(|g| {
            acc += g.exp() * h;
            acc
        })
        .collect()
}

/// Cumulative curve divided by its final value, so that it ends at one.
pub fn rescaled_cumulative(values: &[f64], grid: &GridSpec) -> Vec<f64> {
    let mut c = cumulative_curve(values, grid);
    let total = *c.last().expect("grid is nonempty");
    for v in &mut c {
        *v /= total;
    }
    if let Some(last) = c.last_mut() {
        *last = 1.0;
    }
    c
}

/// Cumulative intensity at rescaled `t ∈ [0, 1]`: the piecewise-linear
/// interpolant through `(0, 0)` and `(s_l, C_l)`, held at `C_L` after `s_L`.
pub fn cumulative_at(values: &[f64], grid: &GridSpec, t: f64) -> f64 {
    let l = grid.len();
    let h = grid.cell_length();
    // Position in units of cells, measured from the first center.
    let x = t.clamp(0.0, 1.0) * l as f64 - 0.5;
    if x <= 0.0 {
        let first = values[0].exp() * h;
        return first * (x + 0.5) / 0.5;
    }
    let k = (x.floor() as usize).min(l - 1);
    let c_k: f64 = values[..=k].iter().map(|g| g.exp() * h).sum();
    if k + 1 >= l {
        return c_k;
    }
    c_k + values[k + 1].exp() * h * (x - k as f64)
}

/// `cumulative_at(t) / C_L`, which is one from `s_L` on.
pub fn rescaled_cumulative_at(values: &[f64], grid: &GridSpec, t: f64) -> f64 {
    let total: f64 = values.iter().map(|g| g.exp()).sum::<f64>() * grid.cell_length();
    cumulative_at(values, grid, t) / total
}

/// Prefix sums `P_k = (1/L) Σ_{l<k} exp(g_l)`, with `P_0 = 0`; the integral
/// over cells `lo..hi` is `P_hi − P_lo`.
pub(crate) fn exp_prefix(values: &[f64], grid: &GridSpec) -> Vec<f64> {
    let h = grid.cell_length();
    let mut out = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for g in values {
        acc += g.exp() * h;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_index_examples() {
        let grid = GridSpec::new(100).unwrap();
        assert_eq!(cell_index(0.5, &grid).unwrap(), 50);
        assert_eq!(cell_index(0.001, &grid).unwrap(), 1);
        assert_eq!(cell_index(1.0, &grid).unwrap(), 100);
        assert_eq!(cell_index(0.07, &grid).unwrap(), 7);
        assert!(cell_index(0.0, &grid).is_err());
        assert!(cell_index(1.2, &grid).is_err());
    }

    #[test]
    fn constant_curve_integrates_exactly() {
        let grid = GridSpec::new(37).unwrap();
        let g = vec![0.4; 37];
        assert!((integral_exp(&g, &grid, 0.0, 1.0) - 0.4f64.exp()).abs() < 1e-14);
        assert_eq!(integral_exp(&g, &grid, 0.3, 0.3), 0.0);
    }

    #[test]
    fn linear_log_curve() {
        let grid = GridSpec::new(1000).unwrap();
        let g = grid.cell_centers();
        let v = integral_exp(&g, &grid, 0.0, 1.0);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 2e-3);
    }

    #[test]
    fn cumulative_of_zero_curve() {
        let grid = GridSpec::new(10).unwrap();
        let c = cumulative_curve(&[0.0; 10], &grid);
        for (l, v) in c.iter().enumerate() {
            assert!((v - (l + 1) as f64 / 10.0).abs() < 1e-14);
        }
        let r = rescaled_cumulative(&[0.3, -1.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5], &grid);
        assert_eq!(*r.last().unwrap(), 1.0);
    }

    #[test]
    fn cumulative_at_interpolates_between_centers() {
        let grid = GridSpec::new(4).unwrap();
        let g = [0.0, 2f64.ln(), 0.0, 0.0];
        let close = |t: f64, v: f64| (cumulative_at(&g, &grid, t) - v).abs() < 1e-15;
        assert!(close(0.0, 0.0));
        assert!(close(0.0625, 0.125));
        assert!(close(0.125, 0.25));
        assert!(close(0.375, 0.75));
        assert!(close(0.5, 0.875));
        assert!(close(0.875, 1.25));
        assert!(close(1.0, 1.25));
        assert_eq!(rescaled_cumulative_at(&g, &grid, 1.0), 1.0);
    }

    #[test]
    fn grid_rejects_single_cell() {
        assert!(GridSpec::new(1).is_err());
    }
}
