//! Biorthogonal ensemble on a grid: sampling, partition functions, tail and
//! neighbourhood masses.
//!
//! The ensemble has density `|VDM_k^Q|` against `ν^{⊗(k+1)}`, where `ν` is a
//! finite measure given by nonnegative weights on the grid points. The
//! Metropolis chain updates one coordinate at a time with an independent
//! proposal from `ν/ν(K)`, so the `ν` factors cancel in the acceptance ratio
//! and only the `O(k)` terms of `log|VDM|` touching the moved point enter.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cdf::{arcsine_cdf, semicircle_cdf, sup_distance_empirical_to, uniform_cdf};
use crate::error::{Error, Result};
use crate::geometry::{GridSet, MapSpec, Point, WeightSpec};

/// Finite base measure `ν` on the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasure {
    pub weights: Vec<f64>,
    /// Optional mass-density parameters `(T, r0)`.
    pub mass_density: Option<(f64, f64)>,
    /// Optional decay exponent `α` for unbounded K.
    pub decay_alpha: Option<f64>,
    grid_id: u64,
}

impl BaseMeasure {
    pub fn new(grid: &GridSet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::Structural("base measure does not match the grid".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Parameter(
                "base measure weights must be finite and nonnegative".into(),
            ));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::Structural("base measure has zero total mass".into()));
        }
        Ok(BaseMeasure {
            weights,
            mass_density: None,
            decay_alpha: None,
            grid_id: grid.id(),
        })
    }

    /// Length/area/arc-length measure: the cell masses.
    pub fn lebesgue(grid: &GridSet) -> Self {
        BaseMeasure {
            weights: grid.cell_mass.clone(),
            mass_density: None,
            decay_alpha: None,
            grid_id: grid.id(),
        }
    }

    /// `dν = density(z) dz`, midpoint rule.
    pub fn with_density(grid: &GridSet, density: impl Fn(Point) -> f64) -> Result<Self> {
        let w = grid
            .points
            .iter()
            .zip(&grid.cell_mass)
            .map(|(&z, m)| density(z) * m)
            .collect();
        Self::new(grid, w)
    }

    pub fn scaled(&self, c: f64) -> Self {
        BaseMeasure {
            weights: self.weights.iter().map(|w| w * c).collect(),
            ..self.clone()
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn check(&self, grid: &GridSet) -> Result<()> {
        if self.grid_id != grid.id() || self.weights.len() != grid.len() {
            return Err(Error::Structural("base measure was built on a different grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassDensityReport {
    pub pass: bool,
    /// Smallest `ν(D(z, r)) / r^T` seen.
    pub worst_ratio: f64,
    /// First violation `(Re z, Im z, r)`, scanning radii from `r0` down.
    pub violation: Option<(f64, f64, f64)>,
}

/// Mass inside the open disk `D(z, r)`: exact cell overlap on real grids
/// (cell-uniform reading of `ν`), cell centres otherwise.
fn disk_mass(grid: &GridSet, nu: &BaseMeasure, z: Point, r: f64) -> f64 {
    match &grid.cells {
        Some(cells) if z.im == 0.0 => cells
            .iter()
            .zip(&nu.weights)
            .map(|(c, w)| {
                let lo = c.lo.max(z.re - r);
                let hi = c.hi.min(z.re + r);
                if hi > lo {
                    w * (hi - lo) / (c.hi - c.lo)
                } else {
                    0.0
                }
            })
            .sum(),
        _ => grid
            .points
            .iter()
            .zip(&nu.weights)
            .filter(|(p, _)| (**p - z).norm() < r)
            .map(|(_, w)| w)
            .sum(),
    }
}

/// Checks `ν(D(z, r)) >= r^T` at every grid point for `r = r0 / 2^m`, `m = 0..=12`.
pub fn mass_density_check(grid: &GridSet, nu: &BaseMeasure, t: f64, r0: f64) -> Result<MassDensityReport> {
    nu.check(grid)?;
    if !(t > 0.0) || !(r0 > 0.0) {
        return Err(Error::Parameter("mass-density check needs T > 0 and r0 > 0".into()));
    }
    let mut worst_ratio = f64::INFINITY;
    let mut violation = None;
    for m in 0..=12 {
        let r = r0 / 2f64.powi(m);
        for &z in &grid.points {
            let ratio = disk_mass(grid, nu, z, r) / r.powf(t);
            worst_ratio = worst_ratio.min(ratio);
            if ratio < 1.0 && violation.is_none() {
                violation = Some((z.re, z.im, r));
            }
        }
    }
    Ok(MassDensityReport {
        pass: violation.is_none(),
        worst_ratio,
        violation,
    })
}

/// Precomputed grid data for the chain and the estimators.
struct Tables {
    pts: Vec<Point>,
    fv: Vec<Point>,
    qv: Vec<f64>,
    /// Normalized cumulative `ν`.
    cum: Vec<f64>,
    proposal: WeightedIndex<f64>,
    log_nu: Vec<f64>,
    mass: f64,
}

impl Tables {
    fn new(grid: &GridSet, nu: &BaseMeasure, q: &WeightSpec, f: &MapSpec) -> Result<Self> {
        nu.check(grid)?;
        let mass = nu.total_mass();
        let mut acc = 0.0;
        let cum = nu
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc / mass
            })
            .collect();
        Ok(Tables {
            pts: grid.points.clone(),
            fv: f.eval_all(&grid.points)?,
            qv: q.eval_all(&grid.points)?,
            cum,
            proposal: WeightedIndex::new(&nu.weights)
                .map_err(|e| Error::Structural(format!("base measure cannot be sampled: {e}")))?,
            log_nu: nu.weights.iter().map(|w| w.ln()).collect(),
            mass,
        })
    }

    /// `log|a - b| + log|f(a) - f(b)|`.
    #[inline]
    fn pair(&self, a: usize, b: usize) -> f64 {
        0.5 * ((self.pts[a] - self.pts[b]).norm_sqr() * (self.fv[a] - self.fv[b]).norm_sqr()).ln()
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        self.proposal.sample(rng)
    }

    fn log_vdm(&self, idx: &[usize]) -> f64 {
        let k = (idx.len() - 1) as f64;
        let mut s = 0.0;
        for i in 0..idx.len() {
            for j in (i + 1)..idx.len() {
                s += self.pair(idx[i], idx[j]);
            }
        }
        s - k * idx.iter().map(|&i| self.qv[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    /// Single-site proposals in total.
    pub steps: u64,
    pub burn: u64,
    pub thin: u64,
    pub seed: u64,
    /// Recompute `log|VDM|` from scratch every this many steps.
    pub checkpoint_every: u64,
}

impl ChainOptions {
    /// Defaults: burn-in 25% of the steps, thinning `k n / 10` proposals.
    pub fn with_defaults(steps: u64, k: usize, n: usize, seed: u64) -> Self {
        ChainOptions {
            steps,
            burn: steps / 4,
            thin: ((k * n) as u64 / 10).max(1),
            seed,
            checkpoint_every: 10_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps <= self.burn {
            return Err(Error::Parameter("steps must exceed burn-in".into()));
        }
        if self.thin == 0 || self.checkpoint_every == 0 {
            return Err(Error::Parameter("thin and checkpoint interval must be positive".into()));
        }
        Ok(())
    }
}

/// Thinned output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub k: usize,
    /// Grid indices of each kept configuration.
    pub configs: Vec<Vec<usize>>,
    pub log_vdm: Vec<f64>,
    /// Mean empirical measure over the kept samples (grid weights).
    pub mean_measure: Vec<f64>,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub steps: u64,
    pub burn: u64,
    pub thin: u64,
    /// Largest gap between the cached and recomputed log-density.
    pub max_drift: f64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// `|VDM_k^Q|^{2/k(k+1)}` per kept sample.
    pub fn roots(&self) -> Vec<f64> {
        let k = self.k as f64;
        self.log_vdm.iter().map(|l| (2.0 * l / (k * (k + 1.0))).exp()).collect()
    }

    pub fn sample_points(&self, grid: &GridSet, s: usize) -> Vec<Point> {
        self.configs[s].iter().map(|&i| grid.points[i]).collect()
    }
}

/// Spreads `k+1` distinct indices over the support of `ν` at its quantiles.
fn initial_state(t: &Tables, k: usize) -> Result<Vec<usize>> {
    let support: Vec<usize> = (0..t.cum.len()).filter(|&i| t.log_nu[i].is_finite()).collect();
    if support.len() < k + 1 {
        return Err(Error::Structural(format!(
            "ν charges {} grid points, fewer than k + 1 = {}",
            support.len(),
            k + 1
        )));
    }
    let mut idx: Vec<usize> = (0..=k)
        .map(|j| {
            let u = (j as f64 + 0.5) / (k + 1) as f64;
            let p = t.cum.partition_point(|&c| c <= u).min(t.cum.len() - 1);
            support.partition_point(|&s| s < p).min(support.len() - 1)
        })
        .collect();
    // make positions in `support` strictly increasing
    for j in 1..idx.len() {
        if idx[j] <= idx[j - 1] {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let overflow = idx[k].saturating_sub(support.len() - 1);
    for v in idx.iter_mut() {
        *v -= overflow;
    }
    let state: Vec<usize> = idx.into_iter().map(|p| support[p]).collect();
    if t.log_vdm(&state) == f64::NEG_INFINITY {
        return Err(Error::Structural(
            "could not find a starting configuration with finite density".into(),
        ));
    }
    Ok(state)
}

/// Chain state and the single-site update.
struct Chain<'a> {
    t: &'a Tables,
    state: Vec<usize>,
    log_density: f64,
    kf: f64,
    rng: ChaCha8Rng,
    accepted: u64,
}

impl<'a> Chain<'a> {
    fn new(t: &'a Tables, k: usize, seed: u64) -> Result<Self> {
        let state = initial_state(t, k)?;
        let log_density = t.log_vdm(&state);
        Ok(Chain {
            t,
            state,
            log_density,
            kf: k as f64,
            rng: ChaCha8Rng::seed_from_u64(seed),
            accepted: 0,
        })
    }

    fn step(&mut self) {
        let j = self.rng.gen_range(0..self.state.len());
        let s = self.t.draw(&mut self.rng);
        let old = self.state[j];
        let u: f64 = self.rng.gen();
        if s == old {
            self.accepted += 1;
            return;
        }
        let mut delta = -self.kf * (self.t.qv[s] - self.t.qv[old]);
        for (i, &zi) in self.state.iter().enumerate() {
            if i != j {
                delta += self.t.pair(s, zi) - self.t.pair(old, zi);
            }
        }
        if delta >= 0.0 || u < delta.exp() {
            self.state[j] = s;
            self.log_density += delta;
            self.accepted += 1;
        }
    }

    fn checkpoint(&mut self) -> f64 {
        let exact = self.t.log_vdm(&self.state);
        let drift = (exact - self.log_density).abs();
        self.log_density = exact;
        drift
    }

    /// Runs the chain and calls `keep` at every kept step.
    fn run(&mut self, opts: &ChainOptions, mut keep: impl FnMut(&[usize], f64)) -> f64 {
        let mut max_drift: f64 = 0.0;
        for step in 1..=opts.steps {
            self.step();
            if step % opts.checkpoint_every == 0 {
                max_drift = max_drift.max(self.checkpoint());
            }
            if step > opts.burn && (step - opts.burn).is_multiple_of(opts.thin) {
                keep(&self.state, self.log_density);
            }
        }
        max_drift
    }
}

/// Single-site Metropolis sampling of the ensemble.
pub fn mcmc_sample(
    grid: &GridSet,
    nu: &BaseMeasure,
    k: usize,
    q: &WeightSpec,
    f: &MapSpec,
    opts: &ChainOptions,
) -> Result<SampleBatch> {
    if k == 0 {
        return Err(Error::Parameter("order k must be at least 1".into()));
    }
    opts.validate()?;
    let t = Tables::new(grid, nu, q, f)?;
    let mut chain = Chain::new(&t, k, opts.seed)?;
    let expected = ((opts.steps - opts.burn) / opts.thin) as usize;
    let mut configs = Vec::with_capacity(expected);
    let mut logs = Vec::with_capacity(expected);
    let mut counts = vec![0u64; grid.len()];
    let max_drift = chain.run(opts, |state, ld| {
        configs.push(state.to_vec());
        logs.push(ld);
        for &i in state {
            counts[i] += 1;
        }
    });
    let denom = (configs.len() * (k + 1)).max(1) as f64;
    Ok(SampleBatch {
        k,
        mean_measure: counts.iter().map(|&c| c as f64 / denom).collect(),
        configs,
        log_vdm: logs,
        acceptance_rate: chain.accepted as f64 / opts.steps as f64,
        seed: opts.seed,
        steps: opts.steps,
        burn: opts.burn,
        thin: opts.thin,
        max_drift,
    })
}

/// Default work budget (number of tuples `n^{k+1}`) for exact enumeration.
pub const DEFAULT_EXACT_BUDGET: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZkValue {
    pub log_z: f64,
    pub z: f64,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

/// Exact `Z_k` by enumeration of all grid tuples.
///
/// `|VDM|` is symmetric and vanishes on repeated indices, so only strictly
/// increasing index tuples are visited and the sum is scaled by `(k+1)!`.
pub fn exact_zk_grid(
    grid: &GridSet,
    nu: &BaseMeasure,
    k: usize,
    q: &WeightSpec,
    f: &MapSpec,
    budget: f64,
) -> Result<ZkValue> {
    if k == 0 {
        return Err(Error::Parameter("order k must be at least 1".into()));
    }
    let n = grid.len();
    if (n as f64).powi(k as i32 + 1) > budget {
        return Err(Error::Resource(format!(
            "n^(k+1) = {n}^{} exceeds the enumeration budget {budget:e}",
            k + 1
        )));
    }
    let t = Tables::new(grid, nu, q, f)?;
    let support: Vec<usize> = (0..n).filter(|&i| t.log_nu[i].is_finite()).collect();
    let kf = k as f64;
    // partial term of a point: its ν weight and its share of the field
    let single: Vec<f64> = (0..n).map(|i| t.log_nu[i] - kf * t.qv[i]).collect();
    let mut acc = f64::NEG_INFINITY;
    let mut stack: Vec<usize> = Vec::with_capacity(k + 1);
    enumerate(&t, &support, &single, k + 1, 0, 0.0, &mut stack, &mut acc);
    let log_z = acc + ln_factorial(k + 1);
    Ok(ZkValue { log_z, z: log_z.exp() })
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    t: &Tables,
    support: &[usize],
    single: &[f64],
    m: usize,
    from: usize,
    partial: f64,
    stack: &mut Vec<usize>,
    acc: &mut f64,
) {
    if stack.len() == m {
        *acc = log_add(*acc, partial);
        return;
    }
    let remaining = m - stack.len();
    for p in from..=(support.len().saturating_sub(remaining)) {
        if p >= support.len() {
            break;
        }
        let s = support[p];
        let mut add = single[s];
        for &z in stack.iter() {
            add += t.pair(s, z);
        }
        if add == f64::NEG_INFINITY {
            continue;
        }
        stack.push(s);
        enumerate(t, support, single, m, p + 1, partial + add, stack, acc);
        stack.pop();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZkEstimate {
    pub log_estimate: f64,
    /// Log of the standard error of the estimate.
    pub log_stderr: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Every draw had a collision; the estimate is zero.
    pub degenerate: bool,
}

/// Plain Monte Carlo estimate of `Z_k` from iid draws of `(ν/ν(K))^{k+1}`.
///
/// Averages are formed in the log domain. The standard error is the
/// leave-one-out jackknife error of the mean, which for a sample mean has the
/// closed form `s / sqrt(N)`.
pub fn estimate_zk_mc(
    grid: &GridSet,
    nu: &BaseMeasure,
    k: usize,
    q: &WeightSpec,
    f: &MapSpec,
    samples: usize,
    seed: u64,
) -> Result<ZkEstimate> {
    if samples < 100 {
        return Err(Error::Parameter(format!("need at least 100 samples (got {samples})")));
    }
    if k == 0 {
        return Err(Error::Parameter("order k must be at least 1".into()));
    }
    let t = Tables::new(grid, nu, q, f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(samples);
    let mut idx = vec![0usize; k + 1];
    for _ in 0..samples {
        for v in idx.iter_mut() {
            *v = t.draw(&mut rng);
        }
        logs.push(t.log_vdm(&idx));
    }
    let scale = (k + 1) as f64 * t.mass.ln();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(ZkEstimate {
            log_estimate: f64::NEG_INFINITY,
            log_stderr: f64::NEG_INFINITY,
            estimate: 0.0,
            stderr: 0.0,
            samples,
            degenerate: true,
        });
    }
    let nf = samples as f64;
    let scaled: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / nf;
    let var = scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let log_estimate = m + mean.ln() + scale;
    let log_stderr = m + 0.5 * (var / nf).ln() + scale;
    Ok(ZkEstimate {
        log_estimate,
        log_stderr,
        estimate: log_estimate.exp(),
        stderr: log_stderr.exp(),
        samples,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZkMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZkRoot {
    pub k: usize,
    pub log_z: f64,
    /// `Z_k^{2/k(k+1)}`.
    pub root: f64,
    pub method: ZkMethod,
    pub log_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZkRootSeries {
    pub entries: Vec<ZkRoot>,
    pub reference_delta: Option<f64>,
    /// Roots strictly decrease along the supplied k order.
    pub monotone_decreasing: bool,
}

/// `Z_k^{2/k(k+1)}` for each k, exactly when `n^{k+1}` fits the budget and by
/// Monte Carlo (seed `seed + k`) otherwise.
#[allow(clippy::too_many_arguments)]
pub fn zk_root_sequence(
    grid: &GridSet,
    nu: &BaseMeasure,
    k_list: &[usize],
    q: &WeightSpec,
    f: &MapSpec,
    samples: usize,
    seed: u64,
    exact_budget: f64,
    reference_v_w: Option<f64>,
) -> Result<ZkRootSeries> {
    if k_list.is_empty() {
        return Err(Error::Parameter("k list is empty".into()));
    }
    let mut entries = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let kf = k as f64;
        let expo = 2.0 / (kf * (kf + 1.0));
        let entry = if (grid.len() as f64).powi(k as i32 + 1) <= exact_budget {
            let z = exact_zk_grid(grid, nu, k, q, f, exact_budget)?;
            ZkRoot {
                k,
                log_z: z.log_z,
                root: (expo * z.log_z).exp(),
                method: ZkMethod::Exact,
                log_stderr: None,
            }
        } else {
            let e = estimate_zk_mc(grid, nu, k, q, f, samples, seed.wrapping_add(k as u64))?;
            ZkRoot {
                k,
                log_z: e.log_estimate,
                root: (expo * e.log_estimate).exp(),
                method: ZkMethod::MonteCarlo,
                log_stderr: Some(e.log_stderr),
            }
        };
        entries.push(entry);
    }
    let monotone_decreasing = entries.windows(2).all(|w| w[1].root < w[0].root);
    Ok(ZkRootSeries {
        entries,
        reference_delta: reference_v_w.map(|v| (-v).exp()),
        monotone_decreasing,
    })
}

/// Fraction of samples with `|VDM|^{2/k(k+1)} < δ_ref - η`; zero once the
/// threshold is not positive.
pub fn tail_probability(batch: &SampleBatch, eta: f64, delta_ref: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Structural("empty sample batch".into()));
    }
    if !(delta_ref > 0.0) || !(eta >= 0.0) {
        return Err(Error::Parameter("need delta_ref > 0 and eta >= 0".into()));
    }
    let threshold = delta_ref - eta;
    if threshold <= 0.0 {
        return Ok(0.0);
    }
    let below = batch.roots().into_iter().filter(|&r| r < threshold).count();
    Ok(below as f64 / batch.len() as f64)
}

/// Reference distribution for CDF balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReferenceCdf {
    Arcsine { a: f64, b: f64 },
    Uniform { a: f64, b: f64 },
    Semicircle { radius: f64 },
}

impl ReferenceCdf {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ReferenceCdf::Arcsine { a, b } => arcsine_cdf(x, a, b),
            ReferenceCdf::Uniform { a, b } => uniform_cdf(x, a, b),
            ReferenceCdf::Semicircle { radius } => semicircle_cdf(x, radius),
        }
    }
}

/// Sup-distance ball around a reference CDF, for empirical measures of
/// configurations on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfBall {
    pub reference: ReferenceCdf,
    pub radius: f64,
}

impl CdfBall {
    pub fn distance(&self, points: &[f64]) -> f64 {
        sup_distance_empirical_to(points, |x| self.reference.eval(x))
    }

    pub fn contains(&self, points: &[f64]) -> bool {
        self.distance(points) < self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodMass {
    pub k: usize,
    pub hits: u64,
    pub samples: u64,
    /// Estimated `σ_k(G)`.
    pub sigma: f64,
    /// `(2 / k(k+1)) log σ`.
    pub root: f64,
    /// No sample fell in G: `sigma` is only an upper-bound-free zero.
    pub zero_hits: bool,
}

impl NeighborhoodMass {
    fn from_counts(k: usize, hits: u64, samples: u64) -> Self {
        let sigma = if samples == 0 {
            0.0
        } else {
            hits as f64 / samples as f64
        };
        let kf = k as f64;
        NeighborhoodMass {
            k,
            hits,
            samples,
            sigma,
            root: 2.0 / (kf * (kf + 1.0)) * sigma.ln(),
            zero_hits: hits == 0,
        }
    }
}

/// `σ_k(G)` from a stored batch.
pub fn neighborhood_mass_from_batch(batch: &SampleBatch, grid: &GridSet, ball: &CdfBall) -> Result<NeighborhoodMass> {
    check_ball(grid, ball)?;
    let mut xs = vec![0.0; batch.k + 1];
    let mut hits = 0u64;
    for c in &batch.configs {
        for (x, &i) in xs.iter_mut().zip(c) {
            *x = grid.points[i].re;
        }
        if ball.contains(&xs) {
            hits += 1;
        }
    }
    Ok(NeighborhoodMass::from_counts(batch.k, hits, batch.len() as u64))
}

fn check_ball(grid: &GridSet, ball: &CdfBall) -> Result<()> {
    if !(ball.radius > 0.0) {
        return Err(Error::Parameter("ball radius must be positive".into()));
    }
    if !grid.is_real() {
        return Err(Error::Structural("CDF balls need a real grid".into()));
    }
    Ok(())
}

/// `σ_k(G)` by running a chain and testing membership at every kept step
/// without storing configurations.
pub fn neighborhood_mass(
    grid: &GridSet,
    nu: &BaseMeasure,
    k: usize,
    q: &WeightSpec,
    f: &MapSpec,
    ball: &CdfBall,
    opts: &ChainOptions,
) -> Result<NeighborhoodMass> {
    check_ball(grid, ball)?;
    if k == 0 {
        return Err(Error::Parameter("order k must be at least 1".into()));
    }
    opts.validate()?;
    let t = Tables::new(grid, nu, q, f)?;
    let mut chain = Chain::new(&t, k, opts.seed)?;
    let mut xs = vec![0.0; k + 1];
    let (mut hits, mut samples) = (0u64, 0u64);
    chain.run(opts, |state, _| {
        for (x, &i) in xs.iter_mut().zip(state) {
            *x = grid.points[i].re;
        }
        samples += 1;
        if ball.contains(&xs) {
            hits += 1;
        }
    });
    Ok(NeighborhoodMass::from_counts(k, hits, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub ks: Vec<usize>,
    pub roots: Vec<f64>,
    /// Least-squares slope of the roots against k (finite roots only).
    pub slope: f64,
    pub mean_root: f64,
    /// `-𝓘` of the ball centre.
    pub reference_root: f64,
    pub sigma_strictly_decreasing: bool,
    /// Every root negative with magnitude within a factor 3 of the reference.
    pub within_factor_three: bool,
    /// Fewer than three k-values had a nonzero mass.
    pub degenerate: bool,
}

/// Compares the finite-k roots `(2/k(k+1)) log σ_k(G)` with `-𝓘(centre)`.
pub fn ldp_slope(series: &[NeighborhoodMass], rate_ref: f64) -> Result<LdpReport> {
    if series.len() < 3 {
        return Err(Error::Parameter(format!(
            "need at least three k-values (got {})",
            series.len()
        )));
    }
    let ks: Vec<usize> = series.iter().map(|s| s.k).collect();
    let roots: Vec<f64> = series.iter().map(|s| s.root).collect();
    let finite: Vec<(f64, f64)> = series
        .iter()
        .filter(|s| !s.zero_hits)
        .map(|s| (s.k as f64, s.root))
        .collect();
    let degenerate = finite.len() < 3;
    let (slope, mean_root) = if finite.is_empty() {
        (f64::NAN, f64::NEG_INFINITY)
    } else {
        let m = finite.len() as f64;
        let mk = finite.iter().map(|p| p.0).sum::<f64>() / m;
        let mr = finite.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = finite.iter().map(|p| (p.0 - mk).powi(2)).sum();
        let sxy: f64 = finite.iter().map(|p| (p.0 - mk) * (p.1 - mr)).sum();
        (if sxx > 0.0 { sxy / sxx } else { 0.0 }, mr)
    };
    let sigma_strictly_decreasing = series.windows(2).all(|w| w[1].sigma < w[0].sigma);
    let within_factor_three = !degenerate
        && rate_ref > 0.0
        && series
            .iter()
            .all(|s| s.root < 0.0 && -s.root <= 3.0 * rate_ref && -s.root >= rate_ref / 3.0);
    Ok(LdpReport {
        ks,
        roots,
        slope,
        mean_root,
        reference_root: -rate_ref,
        sigma_strictly_decreasing,
        within_factor_three,
        degenerate,
    })
}

/// Exact `Prob_k` masses of ordered grid tuples for tiny problems (testing aid).
pub fn exact_probabilities(
    grid: &GridSet,
    nu: &BaseMeasure,
    k: usize,
    q: &WeightSpec,
    f: &MapSpec,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let n = grid.len();
    if (n as f64).powi(k as i32 + 1) > 1e7 {
        return Err(Error::Resource("too many tuples to list".into()));
    }
    let t = Tables::new(grid, nu, q, f)?;
    let mut out = Vec::new();
    let mut idx = vec![0usize; k + 1];
    loop {
        let l = if idx.iter().enumerate().any(|(a, x)| idx[..a].contains(x)) {
            f64::NEG_INFINITY
        } else {
            t.log_vdm(&idx) + idx.iter().map(|&i| t.log_nu[i]).sum::<f64>()
        };
        out.push((idx.clone(), l));
        let mut p = 0;
        loop {
            if p == idx.len() {
                let m = out.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = out.iter().map(|o| (o.1 - m).exp()).sum();
                return Ok(out.into_iter().map(|(i, l)| (i, (l - m).exp() / total)).collect());
            }
            idx[p] += 1;
            if idx[p] < n {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}
