//! Regularized modified kernel, kernel matrices, energies and potentials.
//!
//! Both logarithmic factors are cut off at the grid scale:
//! `k_eps(x, y) = -log max(|x-y|, eps) - log max(|f(x)-f(y)|, eps_f) + Q(x) + Q(y)`
//! where `eps_f = eps * max(|f'(x)|, |f'(y)|, eps)` is the grid scale carried
//! through f. For `f = id` both cutoffs coincide, so `E^Q = 2 I + 2 ∫Q` is an
//! exact identity of the discretized quantities. Atomic measures get finite
//! (regularized) energies.

use rayon::prelude::*;

use crate::equilibrium::{minimize_energy, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{GridSet, MapSpec, Point, WeightSpec};

/// Default cap on the number of grid points for dense assembly.
pub const DEFAULT_MAX_GRID: usize = 4096;

/// Environment variable overriding [`DEFAULT_MAX_GRID`].
pub const MAX_GRID_ENV: &str = "BIORTHEQ_MAX_GRID";

/// Effective dense-assembly cap (environment override or default).
pub fn max_grid_size() -> usize {
    std::env::var(MAX_GRID_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_GRID)
}

#[inline]
pub(crate) fn neg_log_reg(d: f64, eps: f64) -> f64 {
    -d.max(eps).ln()
}

/// Cutoff for `|f(x) - f(y)|` given `|f'|` at both points.
#[inline]
pub fn f_cutoff(eps: f64, dfx: f64, dfy: f64) -> f64 {
    eps * dfx.max(dfy).max(eps)
}

/// `f` and `|f'|` at the grid points.
pub(crate) struct FTable {
    pub fv: Vec<Point>,
    pub dv: Vec<f64>,
}

impl FTable {
    pub fn new(points: &[Point], f: &MapSpec) -> Result<Self> {
        Ok(FTable {
            fv: f.eval_all(points)?,
            dv: points
                .iter()
                .map(|&z| f.derivative(z).map(|d| d.norm()))
                .collect::<Result<_>>()?,
        })
    }
}

/// Nonnegative weights over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub weights: Vec<f64>,
    grid_id: u64,
}

impl DiscreteMeasure {
    pub fn new(grid: &GridSet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::Structural(format!(
                "{} weights for a grid of {} points",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Parameter("weights must be finite and nonnegative".into()));
        }
        Ok(DiscreteMeasure {
            weights,
            grid_id: grid.id(),
        })
    }

    /// Normalizes `weights` to unit mass.
    pub fn probability(grid: &GridSet, weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Structural("measure has zero mass".into()));
        }
        Self::new(grid, weights.into_iter().map(|w| w / s).collect())
    }

    pub fn uniform(grid: &GridSet) -> Self {
        let n = grid.len();
        DiscreteMeasure {
            weights: vec![1.0 / n as f64; n],
            grid_id: grid.id(),
        }
    }

    /// Unit mass on grid point `i`.
    pub fn atom(grid: &GridSet, i: usize) -> Result<Self> {
        if i >= grid.len() {
            return Err(Error::Structural(format!("atom index {i} outside the grid")));
        }
        let mut w = vec![0.0; grid.len()];
        w[i] = 1.0;
        Self::new(grid, w)
    }

    pub(crate) fn from_parts(weights: Vec<f64>, grid_id: u64) -> Self {
        DiscreteMeasure { weights, grid_id }
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    /// True when all mass sits on one grid point (its energy is regularized).
    pub fn is_atomic(&self) -> bool {
        self.weights.iter().filter(|&&w| w > 0.0).count() == 1
    }

    pub fn check_grid(&self, grid: &GridSet) -> Result<()> {
        if self.grid_id != grid.id() || self.len() != grid.len() {
            return Err(Error::Structural("measure was built on a different grid".into()));
        }
        Ok(())
    }

    pub(crate) fn check_probability(&self) -> Result<()> {
        if (self.mass() - 1.0).abs() > 1e-12 {
            return Err(Error::Structural(format!(
                "expected a probability measure (mass {})",
                self.mass()
            )));
        }
        Ok(())
    }

    /// `∫ Q dμ` for per-point values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// `k_eps(x, y)`.
pub fn modified_kernel(x: Point, y: Point, q: &WeightSpec, f: &MapSpec, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Parameter("regularization scale must be positive".into()));
    }
    let (fx, fy) = (f.eval(x)?, f.eval(y)?);
    let eps_f = f_cutoff(eps, f.derivative(x)?.norm(), f.derivative(y)?.norm());
    Ok(neg_log_reg((x - y).norm(), eps) + neg_log_reg((fx - fy).norm(), eps_f) + (q.eval(x)? + q.eval(y)?))
}

/// Dense symmetric kernel matrix on a grid, row-major.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub n: usize,
    pub values: Vec<f64>,
    pub eps: f64,
    /// Q at the grid points (zero for the single-log kernel).
    pub q_values: Vec<f64>,
    grid_id: u64,
}

impl KernelMatrix {
    /// Modified kernel `k_eps` at the grid points with `eps = grid.spacing`.
    pub fn assemble(grid: &GridSet, q: &WeightSpec, f: &MapSpec, cap: usize) -> Result<Self> {
        guard(grid, cap)?;
        let FTable { fv, dv } = FTable::new(&grid.points, f)?;
        let qv = q.eval_all(&grid.points)?;
        let eps = grid.spacing;
        let n = grid.len();
        let pts = &grid.points;
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for j in 0..=i {
                row[j] = neg_log_reg((pts[i] - pts[j]).norm(), eps)
                    + neg_log_reg((fv[i] - fv[j]).norm(), f_cutoff(eps, dv[i], dv[j]))
                    + qv[i]
                    + qv[j];
            }
        });
        mirror_lower(&mut values, n);
        let km = KernelMatrix {
            n,
            values,
            eps,
            q_values: qv,
            grid_id: grid.id(),
        };
        km.check_finite()?;
        Ok(km)
    }

    /// Single-log kernel `-log max(|x-y|, eps)` with no field.
    pub fn assemble_log(grid: &GridSet, cap: usize) -> Result<Self> {
        guard(grid, cap)?;
        let eps = grid.spacing;
        let n = grid.len();
        let pts = &grid.points;
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for j in 0..=i {
                row[j] = neg_log_reg((pts[i] - pts[j]).norm(), eps);
            }
        });
        mirror_lower(&mut values, n);
        Ok(KernelMatrix {
            n,
            values,
            eps,
            q_values: vec![0.0; n],
            grid_id: grid.id(),
        })
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(p) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "kernel entry ({}, {}) is not finite",
                p / self.n,
                p % self.n
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    /// `K w`, each row summed left to right.
    pub fn matvec(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(w, &mut out);
        out
    }

    pub fn matvec_into(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n;
        if n >= 256 {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = dot(&self.values[i * n..(i + 1) * n], w));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&self.values[i * n..(i + 1) * n], w);
            }
        }
    }

    /// `wᵀ K w`.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        dot(w, &self.matvec(w))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn guard(grid: &GridSet, cap: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Structural("grid has no points".into()));
    }
    if grid.len() > cap {
        return Err(Error::Resource(format!(
            "grid of {} points exceeds the dense-matrix cap {cap} (set {MAX_GRID_ENV})",
            grid.len()
        )));
    }
    Ok(())
}

fn mirror_lower(values: &mut [f64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            values[i * n + j] = values[j * n + i];
        }
    }
}

/// [`KernelMatrix::assemble`] with the environment-configured cap.
pub fn assemble_kernel_matrix(grid: &GridSet, q: &WeightSpec, f: &MapSpec) -> Result<KernelMatrix> {
    KernelMatrix::assemble(grid, q, f, max_grid_size())
}

fn check_matrix(mu: &DiscreteMeasure, km: &KernelMatrix) -> Result<()> {
    if mu.grid_id() != km.grid_id() || mu.len() != km.n {
        return Err(Error::Structural(
            "measure and kernel matrix use different grids".into(),
        ));
    }
    Ok(())
}

/// `E^Q(μ) = Σ_ij w_i w_j k_eps(x_i, x_j)`, diagonal included.
pub fn energy(mu: &DiscreteMeasure, km: &KernelMatrix) -> Result<f64> {
    check_matrix(mu, km)?;
    mu.check_probability()?;
    let e = km.quadratic_form(&mu.weights);
    if !e.is_finite() {
        return Err(Error::Numerical("energy is not finite".into()));
    }
    Ok(e)
}

/// `Σ_ij w_i w_j (-log max(|c_i - c_j|, eps_ij))`, `eps_ij = f_cutoff(eps, d_i, d_j)`
/// when derivative scales `d` are given and `eps` otherwise.
fn pair_sum(w: &[f64], coords: &[Point], eps: f64, d: Option<&[f64]>) -> f64 {
    w.iter()
        .enumerate()
        .map(|(i, wi)| {
            if *wi == 0.0 {
                return 0.0;
            }
            let row: f64 = w
                .iter()
                .zip(coords)
                .enumerate()
                .map(|(j, (wj, zj))| {
                    let e = d.map_or(eps, |d| f_cutoff(eps, d[i], d[j]));
                    wj * neg_log_reg((coords[i] - zj).norm(), e)
                })
                .sum();
            wi * row
        })
        .sum()
}

/// Regularized logarithmic energy `I(μ)`.
pub fn log_energy(mu: &DiscreteMeasure, grid: &GridSet) -> Result<f64> {
    mu.check_grid(grid)?;
    Ok(pair_sum(&mu.weights, &grid.points, grid.spacing, None))
}

/// `I^Q(μ) = I(μ) + 2 ∫Q dμ`.
pub fn weighted_log_energy(mu: &DiscreteMeasure, grid: &GridSet, q: &WeightSpec) -> Result<f64> {
    let qv = q.eval_all(&grid.points)?;
    Ok(log_energy(mu, grid)? + 2.0 * mu.integrate(&qv))
}

/// `I(f_* μ)`, regularized at the grid scale carried through f.
pub fn pushforward_energy(mu: &DiscreteMeasure, grid: &GridSet, f: &MapSpec) -> Result<f64> {
    mu.check_grid(grid)?;
    let ft = FTable::new(&grid.points, f)?;
    Ok(pair_sum(&mu.weights, &ft.fv, grid.spacing, Some(&ft.dv)))
}

/// `p_μ(z) = Σ w_j (-log max(|z - x_j|, eps))`.
pub fn potential(mu: &DiscreteMeasure, grid: &GridSet, z: Point) -> Result<f64> {
    mu.check_grid(grid)?;
    Ok(mu
        .weights
        .iter()
        .zip(&grid.points)
        .map(|(w, x)| w * neg_log_reg((z - x).norm(), grid.spacing))
        .sum())
}

/// Potential of the push-forward at `f(z)` plus the field.
pub fn modified_potential(mu: &DiscreteMeasure, grid: &GridSet, z: Point, q: &WeightSpec, f: &MapSpec) -> Result<f64> {
    let ft = FTable::new(&grid.points, f)?;
    modified_potential_with(mu, grid, &ft, z, q, f)
}

/// As [`modified_potential`] with `f` pre-evaluated on the grid.
pub(crate) fn modified_potential_with(
    mu: &DiscreteMeasure,
    grid: &GridSet,
    ft: &FTable,
    z: Point,
    q: &WeightSpec,
    f: &MapSpec,
) -> Result<f64> {
    mu.check_grid(grid)?;
    let fz = f.eval(z)?;
    let dz = f.derivative(z)?.norm();
    let eps = grid.spacing;
    let s: f64 = mu
        .weights
        .iter()
        .zip(grid.points.iter().zip(ft.fv.iter().zip(&ft.dv)))
        .map(|(w, (x, (fx, dx)))| {
            w * (neg_log_reg((z - x).norm(), eps) + neg_log_reg((fz - fx).norm(), f_cutoff(eps, dz, *dx)))
        })
        .sum();
    Ok(s + q.eval(z)?)
}

/// `exp(-min I)` over probability measures on the grid (single-log kernel).
pub fn classical_capacity(grid: &GridSet) -> Result<f64> {
    let km = KernelMatrix::assemble_log(grid, max_grid_size())?;
    let res = minimize_energy(&km, &km.q_values.clone(), &SolverOptions::default())?;
    Ok((-res.v_w).exp())
}
