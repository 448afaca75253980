//! Green functions of intervals and disks, Fekete-slice lower bounds for the
//! weighted extremal function, and Bernstein-Walsh gap probes.
//!
//! Removing one point from a configuration of `k+1` points leaves the slice
//! `h_k(t) = Π_i (t - a_i)(f(t) - f(a_i))` (up to a constant factor, which
//! cancels). Normalizing `h_k e^{-kQ}` to unit sup norm on the grid gives a
//! member of the class defining `W_{K,Q}`, hence
//! `L_k(z) = (1/k) [log|h_k(z)| - log ||h_k e^{-kQ}||_K] <= W_{K,Q}(z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fekete::Configuration;
use crate::geometry::{GridSet, MapSpec, Point, WeightSpec};

/// Green function of `C \ [a, b]` with pole at infinity; zero on `[a, b]`.
pub fn green_interval(z: Point, a: f64, b: f64) -> f64 {
    if z.im == 0.0 && z.re >= a && z.re <= b {
        return 0.0;
    }
    let w = (2.0 * z - a - b) / (b - a);
    let s = (w * w - 1.0).sqrt();
    let m = (w + s).norm().max((w - s).norm());
    m.ln().max(0.0)
}

/// `log+(|z - c| / R)`.
pub fn green_disk(z: Point, c: Point, r: f64) -> f64 {
    ((z - c).norm() / r).ln().max(0.0)
}

/// Compact set with a closed-form Green function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GreenFunctionSpec {
    Interval {
        a: f64,
        b: f64,
    },
    Disk {
        center_re: f64,
        center_im: f64,
        radius: f64,
    },
}

impl GreenFunctionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GreenFunctionSpec::Interval { a, b } if !(a < b) => {
                Err(Error::Parameter(format!("interval needs a < b (got [{a}, {b}])")))
            }
            GreenFunctionSpec::Disk { radius, .. } if !(radius > 0.0) => {
                Err(Error::Parameter("disk radius must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, z: Point) -> f64 {
        match *self {
            GreenFunctionSpec::Interval { a, b } => green_interval(z, a, b),
            GreenFunctionSpec::Disk {
                center_re,
                center_im,
                radius,
            } => green_disk(z, Point::new(center_re, center_im), radius),
        }
    }

    /// Logarithmic capacity.
    pub fn capacity(&self) -> f64 {
        match *self {
            GreenFunctionSpec::Interval { a, b } => (b - a) / 4.0,
            GreenFunctionSpec::Disk { radius, .. } => radius,
        }
    }
}

fn slice_log(t: Point, ft: Point, anchors: &[Point], f_anchors: &[Point]) -> f64 {
    anchors
        .iter()
        .zip(f_anchors)
        .map(|(a, fa)| (t - a).norm().ln() + (ft - fa).norm().ln())
        .sum()
}

/// `L_k(z)` for the slice through the given `k` anchor points.
pub fn wkq_slice_estimate(z: Point, anchors: &[Point], grid: &GridSet, q: &WeightSpec, f: &MapSpec) -> Result<f64> {
    if anchors.is_empty() {
        return Err(Error::Parameter("a slice needs at least one anchor point".into()));
    }
    let k = anchors.len() as f64;
    let fa = f.eval_all(anchors)?;
    let fv = f.eval_all(&grid.points)?;
    let qv = q.eval_all(&grid.points)?;
    let norm = grid
        .points
        .iter()
        .zip(fv.iter().zip(&qv))
        .map(|(&t, (&ft, &qt))| slice_log(t, ft, anchors, &fa) - k * qt)
        .fold(f64::NEG_INFINITY, f64::max);
    if norm == f64::NEG_INFINITY {
        return Err(Error::Structural("slice vanishes at every grid point".into()));
    }
    Ok((slice_log(z, f.eval(z)?, anchors, &fa) - norm) / k)
}

/// Best slice bound over the choice of the free coordinate of `config`.
pub fn wkq_lower_estimate(
    z: Point,
    config: &Configuration,
    grid: &GridSet,
    q: &WeightSpec,
    f: &MapSpec,
) -> Result<f64> {
    if !config.log_vdm.is_finite() {
        return Err(Error::Precondition("configuration has a collision".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut anchors = Vec::with_capacity(config.k);
    for free in 0..config.points.len() {
        anchors.clear();
        anchors.extend(
            config
                .points
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != free)
                .map(|(_, &p)| p),
        );
        best = best.max(wkq_slice_estimate(z, &anchors, grid, q, f)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BwRow {
    pub k: usize,
    pub z_re: f64,
    pub z_im: f64,
    pub l_k: f64,
    pub b_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BwReport {
    pub rows: Vec<BwRow>,
    /// `max_z B_k(z)` per k, in input order.
    pub per_k_max: Vec<(usize, f64)>,
    pub max: f64,
    /// Range of the per-k maxima.
    pub spread: f64,
    /// The last increment exceeds the first one (growth is not levelling off).
    pub trending_up: bool,
    pub pass: bool,
}

/// Spread tolerance for the per-k maxima of `B_k`.
pub const BW_SPREAD_TOL: f64 = 0.5;

/// `B_k(z) = L_k(z) - V_D(z) - V_D(f(z))` over configurations and test points.
pub fn bw_bound_check(
    configs: &[Configuration],
    test_points: &[Point],
    d_a: &GreenFunctionSpec,
    grid: &GridSet,
    q: &WeightSpec,
    f: &MapSpec,
) -> Result<BwReport> {
    if configs.len() < 2 {
        return Err(Error::Parameter("need configurations for at least two k values".into()));
    }
    if test_points.is_empty() {
        return Err(Error::Parameter("no test points".into()));
    }
    d_a.validate()?;
    let mut rows = Vec::new();
    let mut per_k_max = Vec::new();
    for c in configs {
        let mut m = f64::NEG_INFINITY;
        for &z in test_points {
            let l_k = wkq_lower_estimate(z, c, grid, q, f)?;
            let b_k = l_k - d_a.eval(z) - d_a.eval(f.eval(z)?);
            m = m.max(b_k);
            rows.push(BwRow {
                k: c.k,
                z_re: z.re,
                z_im: z.im,
                l_k,
                b_k,
            });
        }
        per_k_max.push((c.k, m));
    }
    let vals: Vec<f64> = per_k_max.iter().map(|p| p.1).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    let m = vals.len();
    let first = vals[1] - vals[0];
    let last = vals[m - 1] - vals[m - 2];
    let trending_up = last > 0.0 && last > first.max(0.0);
    Ok(BwReport {
        rows,
        per_k_max,
        max,
        spread,
        trending_up,
        pass: spread < BW_SPREAD_TOL && !trending_up,
    })
}
