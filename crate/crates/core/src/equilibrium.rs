//! Minimization of the discretized energy over the probability simplex.
//!
//! Projected gradient descent with Armijo backtracking. The Frostman data of
//! the minimizer come for free from the gradient: with `U = K w - ∫Q dμ` the
//! modified potential at the grid points and `F_w = V_w - ∫Q dμ`, the KKT
//! conditions of the simplex problem are exactly the discrete Frostman
//! inequalities (`U >= F_w` everywhere, `U <= F_w` on the support).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSet, MapSpec, WeightSpec};
use crate::kernel::{
    assemble_kernel_matrix, dot, energy, modified_potential_with, DiscreteMeasure, FTable, KernelMatrix,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative energy decrease regarded as stalled.
    pub tol_energy: f64,
    /// Stop as soon as the Frostman residual drops below this.
    pub tol_frostman: f64,
    /// Consecutive stalled iterations needed to stop.
    pub stall_window: usize,
    /// Armijo sufficient-decrease factor.
    pub armijo: f64,
    /// Weights above this count as support; `None` means `1e-8 / n`.
    pub support_threshold: Option<f64>,
    /// Keep the energy after every iteration.
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 100_000,
            tol_energy: 1e-10,
            tol_frostman: 1e-4,
            stall_window: 10,
            armijo: 1e-4,
            support_threshold: None,
            record_history: false,
        }
    }
}

/// Violations of the two Frostman inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max (F_w - U)_+` over all grid points.
    pub r_minus: f64,
    /// `max (U - F_w)_+` over the support.
    pub r_plus: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ResidualReport {
    fn new(r_minus: f64, r_plus: f64, tol: f64) -> Self {
        ResidualReport {
            r_minus,
            r_plus,
            tol,
            pass: r_minus.max(r_plus) <= tol,
        }
    }

    pub fn max(&self) -> f64 {
        self.r_minus.max(self.r_plus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub mu_star: DiscreteMeasure,
    /// Minimal energy.
    pub v_w: f64,
    /// Frostman constant `V_w - ∫Q dμ*`.
    pub f_w: f64,
    pub q_integral: f64,
    pub support_idx: Vec<usize>,
    pub residual: ResidualReport,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Euclidean projection onto `{w >= 0, Σw = 1}` by sort and threshold.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn support(w: &[f64], tau: f64) -> Vec<usize> {
    w.iter().enumerate().filter(|(_, &x)| x > tau).map(|(i, _)| i).collect()
}

/// Residuals from `Kw` (the gradient is `2 Kw`).
fn residuals_from_kw(w: &[f64], kw: &[f64], q: &[f64], tau: f64, tol: f64) -> (f64, f64, ResidualReport) {
    let qi = dot(w, q);
    let e = dot(w, kw);
    let f_w = e - qi;
    let mut r_minus: f64 = 0.0;
    let mut r_plus: f64 = 0.0;
    for i in 0..w.len() {
        let u = kw[i] - qi;
        r_minus = r_minus.max(f_w - u);
        if w[i] > tau {
            r_plus = r_plus.max(u - f_w);
        }
    }
    (e, qi, ResidualReport::new(r_minus, r_plus, tol))
}

/// Minimizes `wᵀ K w` over the simplex starting from uniform weights.
pub fn minimize_energy(km: &KernelMatrix, q_values: &[f64], opts: &SolverOptions) -> Result<EquilibriumResult> {
    let n = km.n;
    minimize_energy_from(km, q_values, vec![1.0 / n as f64; n], opts)
}

/// As [`minimize_energy`] from a given point of the simplex.
pub fn minimize_energy_from(
    km: &KernelMatrix,
    q_values: &[f64],
    init: Vec<f64>,
    opts: &SolverOptions,
) -> Result<EquilibriumResult> {
    let n = km.n;
    if n == 0 {
        return Err(Error::Structural("empty kernel matrix".into()));
    }
    if q_values.len() != n || init.len() != n {
        return Err(Error::Structural(
            "Q values / initial weights do not match the matrix".into(),
        ));
    }
    let tau = opts.support_threshold.unwrap_or(1e-8 / n as f64);
    let mut w = project_simplex(&init);
    let mut kw = km.matvec(&w);
    let mut e = dot(&w, &kw);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(e);
    }
    let mut stalled = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut trial_kw = vec![0.0; n];

    let (_, _, mut report) = residuals_from_kw(&w, &kw, q_values, tau, opts.tol_frostman);
    if report.max() < opts.tol_frostman {
        converged = true;
    }

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let grad: Vec<f64> = kw.iter().map(|v| 2.0 * v).collect();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient at iteration {iterations} (energy {e})"
            )));
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-30 {
            let step: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - t * gi).collect();
            let cand = project_simplex(&step);
            let dir: f64 = cand.iter().zip(&w).zip(&grad).map(|((c, wi), g)| g * (c - wi)).sum();
            if dir >= 0.0 {
                // projected step is not a descent direction: stationary to rounding
                break;
            }
            km.matvec_into(&cand, &mut trial_kw);
            let e_new = dot(&cand, &trial_kw);
            if e_new <= e + opts.armijo * dir {
                accepted = Some((cand, e_new));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, e_new)) = accepted else {
            converged = true;
            break;
        };
        let decrease = (e - e_new) / e_new.abs().max(1.0);
        w = cand;
        std::mem::swap(&mut kw, &mut trial_kw);
        e = e_new;
        if opts.record_history {
            history.push(e);
        }
        stalled = if decrease < opts.tol_energy { stalled + 1 } else { 0 };
        let (_, _, r) = residuals_from_kw(&w, &kw, q_values, tau, opts.tol_frostman);
        report = r;
        if stalled >= opts.stall_window || report.max() < opts.tol_frostman {
            converged = true;
        }
    }

    let (v_w, q_integral, residual) = residuals_from_kw(&w, &kw, q_values, tau, opts.tol_frostman);
    let support_idx = support(&w, tau);
    let mu_star = DiscreteMeasure::new_for_matrix(km, w);
    Ok(EquilibriumResult {
        mu_star,
        v_w,
        f_w: v_w - q_integral,
        q_integral,
        support_idx,
        residual,
        iterations,
        converged,
        history,
    })
}

/// Assembles the kernel on `grid` and minimizes the energy.
pub fn solve_equilibrium(
    grid: &GridSet,
    q: &WeightSpec,
    f: &MapSpec,
    opts: &SolverOptions,
) -> Result<EquilibriumResult> {
    let km = assemble_kernel_matrix(grid, q, f)?;
    minimize_energy(&km, &km.q_values, opts)
}

/// Recomputes the modified potential of `μ*` at every grid point and checks
/// the Frostman inequalities against `F_w` ("q.e." read as "every grid point").
pub fn frostman_check(
    res: &EquilibriumResult,
    grid: &GridSet,
    q: &WeightSpec,
    f: &MapSpec,
    tol: f64,
) -> Result<ResidualReport> {
    let u = modified_potentials(&res.mu_star, grid, q, f)?;
    let on_support: Vec<bool> = {
        let mut s = vec![false; grid.len()];
        for &i in &res.support_idx {
            s[i] = true;
        }
        s
    };
    let mut r_minus: f64 = 0.0;
    let mut r_plus: f64 = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        r_minus = r_minus.max(res.f_w - ui);
        if on_support[i] {
            r_plus = r_plus.max(ui - res.f_w);
        }
    }
    Ok(ResidualReport::new(r_minus, r_plus, tol))
}

fn modified_potentials(mu: &DiscreteMeasure, grid: &GridSet, q: &WeightSpec, f: &MapSpec) -> Result<Vec<f64>> {
    mu.check_grid(grid)?;
    let ft = FTable::new(&grid.points, f)?;
    grid.points
        .iter()
        .map(|&z| modified_potential_with(mu, grid, &ft, z, q, f))
        .collect()
}

/// Outcome of [`certify_minimizer`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub pass: bool,
    /// Median of the modified potential over the support.
    pub constant: f64,
    /// Largest violation of either inequality.
    pub violation: f64,
    /// One-point support: the upper inequality holds trivially.
    pub degenerate: bool,
}

/// Checks that some constant `C` makes both Frostman inequalities hold,
/// taking `C` as the support median of the modified potential.
pub fn certify_minimizer(
    mu: &DiscreteMeasure,
    grid: &GridSet,
    q: &WeightSpec,
    f: &MapSpec,
    tol: f64,
) -> Result<Certificate> {
    mu.check_grid(grid)?;
    let tau = 1e-8 / grid.len() as f64;
    let supp = support(&mu.weights, tau);
    if supp.is_empty() {
        return Err(Error::Structural("measure has empty support".into()));
    }
    let u = modified_potentials(mu, grid, q, f)?;
    let mut on: Vec<f64> = supp.iter().map(|&i| u[i]).collect();
    on.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = on.len();
    let c = if m % 2 == 1 {
        on[m / 2]
    } else {
        0.5 * (on[m / 2 - 1] + on[m / 2])
    };
    let below = u.iter().map(|&x| c - x).fold(0.0, f64::max);
    let above = on.iter().map(|&x| x - c).fold(0.0, f64::max);
    let violation = below.max(above);
    Ok(Certificate {
        pass: violation <= tol,
        constant: c,
        violation,
        degenerate: m == 1,
    })
}

/// Rate function `E^Q(μ) - V_w`.
pub fn rate_function(mu: &DiscreteMeasure, res: &EquilibriumResult, km: &KernelMatrix) -> Result<f64> {
    if mu.grid_id() != res.mu_star.grid_id() {
        return Err(Error::Structural(
            "measure and equilibrium result use different grids".into(),
        ));
    }
    Ok(energy(mu, km)? - res.v_w)
}

impl DiscreteMeasure {
    pub(crate) fn new_for_matrix(km: &KernelMatrix, weights: Vec<f64>) -> Self {
        DiscreteMeasure::from_parts(weights, km.grid_id())
    }
}
