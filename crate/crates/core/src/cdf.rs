//! Distribution functions on the real line and sup-distances between them.
//!
//! A grid measure is read as a cell-uniform density, so its CDF is piecewise
//! linear through the cell boundaries. Configurations are read as empirical
//! measures `(1/m) Σ δ_{z_j}` with step CDFs; distances to them are exact
//! Kolmogorov sup-distances (both one-sided limits at every atom).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Cell, GridSet};
use crate::kernel::DiscreteMeasure;

/// `1/2 + arcsin(x)/π` rescaled to `[a, b]`.
pub fn arcsine_cdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        0.0
    } else if x >= b {
        1.0
    } else {
        let t = (2.0 * x - a - b) / (b - a);
        0.5 + t.asin() / PI
    }
}

/// CDF of the semicircle law `sqrt(r² - x²) · 2/(π r²)` on `[-r, r]`.
pub fn semicircle_cdf(x: f64, r: f64) -> f64 {
    if x <= -r {
        0.0
    } else if x >= r {
        1.0
    } else {
        let t = x / r;
        0.5 + (t * (1.0 - t * t).sqrt() + t.asin()) / PI
    }
}

/// Uniform CDF on `[a, b]`.
pub fn uniform_cdf(x: f64, a: f64, b: f64) -> f64 {
    ((x - a) / (b - a)).clamp(0.0, 1.0)
}

fn cells(grid: &GridSet) -> Result<&[Cell]> {
    grid.cells
        .as_deref()
        .ok_or_else(|| Error::Structural("CDFs need a sorted real grid".into()))
}

/// Grid measure CDF at the right boundary of every cell.
pub fn grid_cdf(mu: &DiscreteMeasure, grid: &GridSet) -> Result<Vec<f64>> {
    mu.check_grid(grid)?;
    cells(grid)?;
    let total = mu.mass();
    let mut acc = 0.0;
    Ok(mu
        .weights
        .iter()
        .map(|w| {
            acc += w;
            acc / total
        })
        .collect())
}

/// Sup-distance between a grid measure and a continuous CDF, checked at every
/// cell boundary and cell midpoint.
pub fn sup_distance_grid_to(mu: &DiscreteMeasure, grid: &GridSet, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let cs = cells(grid)?;
    let right = grid_cdf(mu, grid)?;
    let mut d: f64 = 0.0;
    let mut prev = 0.0;
    for (i, c) in cs.iter().enumerate() {
        let mid = 0.5 * (prev + right[i]);
        d = d
            .max((prev - cdf(c.lo)).abs())
            .max((mid - cdf(0.5 * (c.lo + c.hi))).abs())
            .max((right[i] - cdf(c.hi)).abs());
        prev = right[i];
    }
    Ok(d)
}

/// Kolmogorov distance between the empirical measure of `points` and a
/// continuous CDF.
pub fn sup_distance_empirical_to(points: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = points.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

/// Value of the piecewise-linear grid CDF at `x`.
fn grid_cdf_at(cs: &[Cell], right: &[f64], x: f64) -> f64 {
    let j = cs.partition_point(|c| c.hi <= x);
    if j >= cs.len() {
        return 1.0;
    }
    let left = if j == 0 { 0.0 } else { right[j - 1] };
    let c = cs[j];
    if x <= c.lo {
        return left;
    }
    left + (right[j] - left) * (x - c.lo) / (c.hi - c.lo)
}

/// Sup-distance between a grid measure (cell-uniform) and the empirical
/// measure of `points`.
pub fn sup_distance_grid_to_empirical(mu: &DiscreteMeasure, grid: &GridSet, points: &[f64]) -> Result<f64> {
    let cs = cells(grid)?;
    let right = grid_cdf(mu, grid)?;
    Ok(sup_distance_empirical_to(points, |x| grid_cdf_at(cs, &right, x)))
}

/// Sup-distance between two measures on the same grid.
pub fn sup_distance_grid(a: &DiscreteMeasure, b: &DiscreteMeasure, grid: &GridSet) -> Result<f64> {
    let fa = grid_cdf(a, grid)?;
    let fb = grid_cdf(b, grid)?;
    Ok(fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Cell-averaged weights of a continuous CDF on a real grid.
pub fn discretize_cdf(grid: &GridSet, cdf: impl Fn(f64) -> f64) -> Result<DiscreteMeasure> {
    let cs = cells(grid)?;
    let w = cs.iter().map(|c| (cdf(c.hi) - cdf(c.lo)).max(0.0)).collect();
    DiscreteMeasure::probability(grid, w)
}

/// Empirical CDF of `points` evaluated at the grid points.
pub fn empirical_cdf_on_grid(points: &[f64], grid: &GridSet) -> Vec<f64> {
    let mut xs = points.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = xs.len() as f64;
    grid.points
        .iter()
        .map(|z| xs.partition_point(|&x| x <= z.re) as f64 / m)
        .collect()
}
