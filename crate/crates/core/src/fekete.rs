//! Weighted f-Vandermondes and grid-constrained Fekete search.
//!
//! `log |VDM_k^Q| = Σ_{i<j} [log|z_i - z_j| + log|f(z_i) - f(z_j)|] - k Σ_i Q(z_i)`
//! is evaluated in the log domain and is `-inf` on collisions (no
//! regularization: configurations are point sets, not measures).
//!
//! Search is greedy (weighted Leja) followed by coordinate exchange passes.
//! Holding all points but `z_j` fixed, the objective in `z_j` is
//! `log|p(z_j)| + log|q(f(z_j))| - k Q(z_j)` for polynomials `p`, `q` of
//! degree `k`, so each exchange is an exact argmax over the grid.

use serde::{Deserialize, Serialize};

use crate::cdf::empirical_cdf_on_grid;
use crate::error::{Error, Result};
use crate::geometry::{GridSet, MapSpec, Point, WeightSpec};

/// An ordered `(k+1)`-tuple of grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub indices: Vec<usize>,
    pub points: Vec<Point>,
    pub k: usize,
    pub log_vdm: f64,
}

impl Configuration {
    pub fn from_indices(grid: &GridSet, indices: Vec<usize>, q: &WeightSpec, f: &MapSpec) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::Parameter("a configuration needs at least two points".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= grid.len()) {
            return Err(Error::Structural(format!("index {i} outside the grid")));
        }
        let points: Vec<Point> = indices.iter().map(|&i| grid.points[i]).collect();
        let log_vdm = log_vdm(&points, q, f)?;
        Ok(Configuration {
            k: indices.len() - 1,
            indices,
            points,
            log_vdm,
        })
    }

    pub fn reals(&self) -> Vec<f64> {
        self.points.iter().map(|z| z.re).collect()
    }
}

#[inline]
pub(crate) fn pair_log(a: Point, b: Point, fa: Point, fb: Point) -> f64 {
    (a - b).norm().ln() + (fa - fb).norm().ln()
}

/// `log |VDM_k^Q(z_0, ..., z_k)|` with `k = points.len() - 1`.
pub fn log_vdm(points: &[Point], q: &WeightSpec, f: &MapSpec) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Parameter("log_vdm needs at least two points".into()));
    }
    let fv = f.eval_all(points)?;
    let qv = q.eval_all(points)?;
    Ok(log_vdm_raw(points, &fv, &qv))
}

pub(crate) fn log_vdm_raw(points: &[Point], fv: &[Point], qv: &[f64]) -> f64 {
    let k = (points.len() - 1) as f64;
    let mut s = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            s += pair_log(points[i], points[j], fv[i], fv[j]);
        }
    }
    s - k * qv.iter().sum::<f64>()
}

/// `δ_k = exp(2 log|VDM| / (k(k+1)))`, zero for colliding configurations.
pub fn delta_k(config: &Configuration) -> f64 {
    if config.log_vdm == f64::NEG_INFINITY {
        return 0.0;
    }
    let k = config.k as f64;
    (2.0 * config.log_vdm / (k * (k + 1.0))).exp()
}

/// Grid values of `f` and `Q` shared by the search routines.
pub(crate) struct GridTables<'a> {
    pub pts: &'a [Point],
    pub fv: Vec<Point>,
    pub qv: Vec<f64>,
}

impl<'a> GridTables<'a> {
    pub fn new(grid: &'a GridSet, q: &WeightSpec, f: &MapSpec) -> Result<Self> {
        Ok(GridTables {
            pts: &grid.points,
            fv: f.eval_all(&grid.points)?,
            qv: q.eval_all(&grid.points)?,
        })
    }

    #[inline]
    pub fn pair(&self, a: usize, b: usize) -> f64 {
        pair_log(self.pts[a], self.pts[b], self.fv[a], self.fv[b])
    }

    fn config(&self, indices: Vec<usize>) -> Configuration {
        let points: Vec<Point> = indices.iter().map(|&i| self.pts[i]).collect();
        let fv: Vec<Point> = indices.iter().map(|&i| self.fv[i]).collect();
        let qv: Vec<f64> = indices.iter().map(|&i| self.qv[i]).collect();
        Configuration {
            k: indices.len() - 1,
            log_vdm: log_vdm_raw(&points, &fv, &qv),
            indices,
            points,
        }
    }
}

/// First index of the maximum, `None` if every value is `-inf`/NaN.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() || v == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Weighted Leja sequence of `k+1` grid points.
///
/// Starts at the grid point maximizing `-2Q`, then repeatedly appends the grid
/// point maximizing the new factor `Σ_i [log|t - z_i| + log|f(t) - f(z_i)|] - k Q(t)`.
/// Ties go to the lowest grid index.
pub fn greedy_leja(grid: &GridSet, k: usize, q: &WeightSpec, f: &MapSpec) -> Result<Configuration> {
    if k == 0 {
        return Err(Error::Parameter("order k must be at least 1".into()));
    }
    if grid.len() < k + 1 {
        return Err(Error::Parameter(format!(
            "grid of {} points cannot hold k + 1 = {} points",
            grid.len(),
            k + 1
        )));
    }
    let t = GridTables::new(grid, q, f)?;
    let kf = k as f64;
    let neg_q: Vec<f64> = t.qv.iter().map(|v| -2.0 * v).collect();
    let first = argmax(&neg_q).ok_or_else(|| Error::Numerical("Q is infinite on the grid".into()))?;
    let mut chosen = vec![first];
    let mut acc = vec![0.0; grid.len()];
    let mut objective = vec![0.0; grid.len()];
    let mut last = first;
    while chosen.len() < k + 1 {
        for (s, a) in acc.iter_mut().enumerate() {
            *a += t.pair(s, last);
        }
        for s in 0..grid.len() {
            objective[s] = acc[s] - kf * t.qv[s];
        }
        let next = argmax(&objective)
            .ok_or_else(|| Error::Structural("no grid point extends the configuration without collision".into()))?;
        chosen.push(next);
        last = next;
    }
    Ok(t.config(chosen))
}

/// Result of exchange passes with the value after every pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeTrace {
    pub config: Configuration,
    /// `log_vdm` before the first pass followed by its value after each pass.
    pub pass_values: Vec<f64>,
    pub passes: usize,
}

/// Coordinate exchange: each `z_j` in turn moves to the grid argmax of its
/// slice; a move happens only on strict improvement. A pass without any move
/// falls back to pairwise neighbour shifts before stopping.
pub fn exchange_optimize(
    config: &Configuration,
    grid: &GridSet,
    q: &WeightSpec,
    f: &MapSpec,
    max_passes: usize,
) -> Result<Configuration> {
    Ok(exchange_optimize_traced(config, grid, q, f, max_passes)?.config)
}

pub fn exchange_optimize_traced(
    config: &Configuration,
    grid: &GridSet,
    q: &WeightSpec,
    f: &MapSpec,
    max_passes: usize,
) -> Result<ExchangeTrace> {
    let t = GridTables::new(grid, q, f)?;
    if config.indices.iter().any(|&i| i >= grid.len()) {
        return Err(Error::Structural("configuration is not on this grid".into()));
    }
    let kf = config.k as f64;
    let mut idx = config.indices.clone();
    let mut pass_values = vec![t.config(idx.clone()).log_vdm];
    let mut slice = vec![0.0; grid.len()];
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut moved = false;
        for j in 0..idx.len() {
            for (s, v) in slice.iter_mut().enumerate() {
                let mut acc = -kf * t.qv[s];
                for (i, &zi) in idx.iter().enumerate() {
                    if i != j {
                        acc += t.pair(s, zi);
                    }
                }
                *v = acc;
            }
            if let Some(best) = argmax(&slice) {
                if slice[best] > slice[idx[j]] {
                    idx[j] = best;
                    moved = true;
                }
            }
        }
        if !moved {
            moved = pair_shift(&t, &mut idx);
        }
        pass_values.push(t.config(idx.clone()).log_vdm);
        if !moved {
            break;
        }
    }
    Ok(ExchangeTrace {
        config: t.config(idx),
        pass_values,
        passes,
    })
}

/// Joint move of two coordinates to neighbouring grid indices. Coordinate-wise
/// optimality on a grid does not imply optimality, so a stalled pass tries
/// all `(±1, ±1)` index shifts of every pair and applies the best strict gain.
fn pair_shift(t: &GridTables<'_>, idx: &mut [usize]) -> bool {
    let n = t.pts.len() as isize;
    let current = t.config(idx.to_vec()).log_vdm;
    let mut best: Option<(f64, usize, usize, usize, usize)> = None;
    let mut cand = idx.to_vec();
    for j in 0..idx.len() {
        for l in (j + 1)..idx.len() {
            for dj in [-1isize, 1] {
                for dl in [-1isize, 1] {
                    let (a, b) = (idx[j] as isize + dj, idx[l] as isize + dl);
                    if a < 0 || b < 0 || a >= n || b >= n {
                        continue;
                    }
                    cand[j] = a as usize;
                    cand[l] = b as usize;
                    let v = t.config(cand.clone()).log_vdm;
                    if v > current && best.is_none_or(|(bv, ..)| v > bv) {
                        best = Some((v, j, a as usize, l, b as usize));
                    }
                    cand[j] = idx[j];
                    cand[l] = idx[l];
                }
            }
        }
    }
    match best {
        Some((_, j, a, l, b)) => {
            idx[j] = a;
            idx[l] = b;
            true
        }
        None => false,
    }
}

/// Default cap on exchange passes.
pub const DEFAULT_MAX_PASSES: usize = 200;

/// Greedy start plus exchange passes.
pub fn fekete_search(grid: &GridSet, k: usize, q: &WeightSpec, f: &MapSpec) -> Result<ExchangeTrace> {
    let start = greedy_leja(grid, k, q, f)?;
    exchange_optimize_traced(&start, grid, q, f, DEFAULT_MAX_PASSES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeketeStep {
    pub k: usize,
    pub delta: f64,
    pub log_vdm: f64,
    pub points: Vec<f64>,
    pub points_im: Vec<f64>,
    /// Empirical CDF at the grid points (real grids only).
    pub cdf: Option<Vec<f64>>,
    pub passes: usize,
    /// Exchange passes never decreased `log_vdm`.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeketeSeries {
    pub steps: Vec<FeketeStep>,
    /// `exp(-V_w)` when an equilibrium energy was supplied.
    pub reference_delta: Option<f64>,
}

/// Fekete search for every `k = 1..=k_max`.
pub fn fekete_sequence(
    grid: &GridSet,
    k_max: usize,
    q: &WeightSpec,
    f: &MapSpec,
    reference_v_w: Option<f64>,
) -> Result<FeketeSeries> {
    if k_max < 2 {
        return Err(Error::Parameter(format!("k_max must be at least 2 (got {k_max})")));
    }
    let mut steps = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let trace = fekete_search(grid, k, q, f)?;
        let c = &trace.config;
        let cdf = grid.is_real().then(|| empirical_cdf_on_grid(&c.reals(), grid));
        steps.push(FeketeStep {
            k,
            delta: delta_k(c),
            log_vdm: c.log_vdm,
            points: c.points.iter().map(|z| z.re).collect(),
            points_im: c.points.iter().map(|z| z.im).collect(),
            cdf,
            passes: trace.passes,
            monotone: trace.pass_values.windows(2).all(|w| w[1] >= w[0]),
        });
    }
    Ok(FeketeSeries {
        steps,
        reference_delta: reference_v_w.map(|v| (-v).exp()),
    })
}

/// Fraction of the points in the closed disk `|z| <= m`.
pub fn tightness_report(config: &Configuration, m: f64) -> f64 {
    let inside = config.points.iter().filter(|z| z.norm() <= m).count();
    inside as f64 / config.points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, re, DomainSet};
    use std::f64::consts::LN_2;

    fn pts(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| re(x)).collect()
    }

    #[test]
    fn log_vdm_examples() {
        let id = MapSpec::Identity;
        let v = log_vdm(&pts(&[-1.0, 0.0, 1.0]), &WeightSpec::zero(), &id).unwrap();
        assert!((v - 2.0 * LN_2).abs() < 1e-15);
        let v = log_vdm(&pts(&[-1.0, 0.0, 1.0]), &WeightSpec::monomial(1.0, 2.0), &id).unwrap();
        assert!((v - (2.0 * LN_2 - 4.0)).abs() < 1e-15);
        for f in [MapSpec::Identity, MapSpec::Exp, MapSpec::Power { theta: 2.0 }] {
            let v = log_vdm(&pts(&[0.3, 0.3, 1.0]), &WeightSpec::zero(), &f).unwrap();
            assert_eq!(v, f64::NEG_INFINITY);
        }
        assert!(matches!(
            log_vdm(&pts(&[0.3]), &WeightSpec::zero(), &id),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn f_collision_gives_minus_infinity() {
        let v = log_vdm(
            &pts(&[-0.5, 0.5, 0.9]),
            &WeightSpec::zero(),
            &MapSpec::Polynomial {
                coefficients: vec![0.0, 0.0, 1.0],
            },
        )
        .unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn delta_examples() {
        let g = GridSet::from_reals(&[-1.0, 0.0, 1.0], 0.25).unwrap();
        let c = Configuration::from_indices(&g, vec![0, 1, 2], &WeightSpec::zero(), &MapSpec::Identity).unwrap();
        assert!((delta_k(&c) - 2f64.powf(2.0 / 3.0)).abs() < 1e-14);
        let c = Configuration::from_indices(&g, vec![0, 2], &WeightSpec::zero(), &MapSpec::Identity).unwrap();
        assert!((delta_k(&c) - 4.0).abs() < 1e-14);
        let c = Configuration::from_indices(&g, vec![0, 0, 2], &WeightSpec::zero(), &MapSpec::Identity).unwrap();
        assert_eq!(delta_k(&c), 0.0);
    }

    #[test]
    fn leja_k1_picks_endpoints() {
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let g = GridSet::from_reals(&xs, 0.05).unwrap();
        let c = greedy_leja(&g, 1, &WeightSpec::zero(), &MapSpec::Identity).unwrap();
        let mut r = c.reals();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(r, vec![-1.0, 1.0]);
    }

    #[test]
    fn leja_and_exchange_on_three_points() {
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let g = GridSet::from_reals(&xs, 0.05).unwrap();
        let (q, f) = (WeightSpec::zero(), MapSpec::Identity);
        let start = greedy_leja(&g, 2, &q, &f).unwrap();
        let out = exchange_optimize(&start, &g, &q, &f, 50).unwrap();
        let mut r = out.reals();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((r[0] + 1.0).abs() < 1e-12 && r[1].abs() < 1e-12 && (r[2] - 1.0).abs() < 1e-12);
        // fixed point: one more pass changes nothing
        let again = exchange_optimize_traced(&out, &g, &q, &f, 50).unwrap();
        assert_eq!(again.config.indices, out.indices);
        assert_eq!(again.passes, 1);
    }

    #[test]
    fn leja_guard() {
        let g = GridSet::from_reals(&[0.0, 1.0, 2.0], 0.5).unwrap();
        assert!(matches!(
            greedy_leja(&g, 3, &WeightSpec::zero(), &MapSpec::Identity),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn collision_is_repaired_in_first_pass() {
        let g = build_grid(&DomainSet::interval(-1.0, 1.0).unwrap(), 30).unwrap();
        let (q, f) = (WeightSpec::zero(), MapSpec::Identity);
        let bad = Configuration::from_indices(&g, vec![4, 4, 20], &q, &f).unwrap();
        assert_eq!(bad.log_vdm, f64::NEG_INFINITY);
        let tr = exchange_optimize_traced(&bad, &g, &q, &f, 1).unwrap();
        assert!(tr.config.log_vdm.is_finite());
    }

    #[test]
    fn sequence_guard_and_tightness() {
        let g = build_grid(&DomainSet::interval(-1.0, 1.0).unwrap(), 40).unwrap();
        assert!(matches!(
            fekete_sequence(&g, 1, &WeightSpec::zero(), &MapSpec::Identity, None),
            Err(Error::Parameter(_))
        ));
        let c = greedy_leja(&g, 5, &WeightSpec::zero(), &MapSpec::Identity).unwrap();
        assert_eq!(tightness_report(&c, 2.0), 1.0);
        assert_eq!(tightness_report(&c, 0.0), 0.0);
    }
}
