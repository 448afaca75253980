//! Batch driver: JSON config in, summary JSON, CSV tables and a hashed
//! manifest out.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence (all
//! artifacts are still written), 4 resource guard, 1 I/O failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cdf::{grid_cdf, sup_distance_grid_to};
use crate::ensemble::{
    mass_density_check, mcmc_sample, neighborhood_mass_from_batch, tail_probability, zk_root_sequence, BaseMeasure,
    CdfBall, ChainOptions, ReferenceCdf, DEFAULT_EXACT_BUDGET,
};
use crate::equilibrium::{certify_minimizer, frostman_check, solve_equilibrium, EquilibriumResult, SolverOptions};
use crate::error::{Error, Result};
use crate::extremal::{bw_bound_check, GreenFunctionSpec};
use crate::fekete::{fekete_search, fekete_sequence, tightness_report};
use crate::geometry::{
    adaptive_truncation, build_grid, check_f_admissible, check_strong_f_admissible, DomainSet, GridSet, MapSpec, Point,
    TruncationOptions, WeightSpec,
};
use crate::kernel::max_grid_size;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Equilibrium,
    Fekete,
    Sample,
    Partition,
    Frostman,
    Extremal,
    Admissibility,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Equilibrium => "equilibrium",
            TaskKind::Fekete => "fekete",
            TaskKind::Sample => "sample",
            TaskKind::Partition => "partition",
            TaskKind::Frostman => "frostman",
            TaskKind::Extremal => "extremal",
            TaskKind::Admissibility => "admissibility",
        }
    }

    fn stochastic(self) -> bool {
        matches!(self, TaskKind::Sample | TaskKind::Partition)
    }
}

/// The set K as written in a config. `null` interval ends are infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomainSpec {
    Intervals {
        parts: Vec<(Option<f64>, Option<f64>)>,
    },
    Rectangle {
        re_lo: f64,
        re_hi: f64,
        im_lo: f64,
        im_hi: f64,
    },
    Circle {
        center_re: f64,
        center_im: f64,
        radius: f64,
    },
}

impl DomainSpec {
    pub fn build(&self) -> Result<DomainSet> {
        match self {
            DomainSpec::Intervals { parts } => {
                let p: Vec<(f64, f64)> = parts
                    .iter()
                    .map(|&(a, b)| (a.unwrap_or(f64::NEG_INFINITY), b.unwrap_or(f64::INFINITY)))
                    .collect();
                DomainSet::intervals(&p)
            }
            DomainSpec::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => DomainSet::rectangle(*re_lo, *re_hi, *im_lo, *im_hi),
            DomainSpec::Circle {
                center_re,
                center_im,
                radius,
            } => DomainSet::circle(Point::new(*center_re, *center_im), *radius),
        }
    }
}

/// Base measure ν for sampling and partition functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseMeasureSpec {
    /// Length, area or arc length.
    #[default]
    Lebesgue,
    /// `|z|^exponent` times Lebesgue.
    PowerDensity { exponent: f64 },
}

impl BaseMeasureSpec {
    fn build(&self, grid: &GridSet) -> Result<BaseMeasure> {
        match *self {
            BaseMeasureSpec::Lebesgue => Ok(BaseMeasure::lebesgue(grid)),
            BaseMeasureSpec::PowerDensity { exponent } => BaseMeasure::with_density(grid, |z| z.norm().powf(exponent)),
        }
    }
}

fn default_n() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub domain: DomainSpec,
    #[serde(default = "default_map")]
    pub f: MapSpec,
    #[serde(default)]
    pub q: WeightSpec,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub truncation: TruncationOptions,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub base_measure: BaseMeasureSpec,
}

fn default_map() -> MapSpec {
    MapSpec::Identity
}

/// Task parameters; unset values get per-task defaults when resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TaskConfig {
    #[serde(rename = "type")]
    pub kind: Option<TaskKind>,
    pub k: Option<usize>,
    pub k_max: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub steps: Option<u64>,
    pub burn: Option<u64>,
    pub thin: Option<u64>,
    /// Monte Carlo sample count.
    #[serde(rename = "N", alias = "n_samples")]
    pub n_samples: Option<usize>,
    pub eta: Option<f64>,
    pub rho: Option<f64>,
    pub seed: Option<u64>,
    /// Strong-admissibility margin.
    pub delta: Option<f64>,
    /// Frostman tolerance.
    pub tol: Option<f64>,
    /// Reference CDF for comparison columns and CDF balls.
    pub reference: Option<ReferenceCdf>,
    pub delta_ref: Option<f64>,
    pub exact_budget: Option<f64>,
    pub test_points: Option<Vec<(f64, f64)>>,
    pub green: Option<GreenFunctionSpec>,
    /// Solve the equilibrium problem for reference values.
    pub with_reference: Option<bool>,
    /// `(T, r0)` for the mass-density check.
    pub mass_density: Option<(f64, f64)>,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fills every task default for `kind`.
    pub fn resolve(&mut self, kind: TaskKind) {
        self.problem.truncation.n = self.problem.n;
        let t = &mut self.task;
        t.kind = Some(kind);
        let n = self.problem.n;
        match kind {
            TaskKind::Equilibrium | TaskKind::Frostman => {
                t.tol.get_or_insert(5e-3);
            }
            TaskKind::Fekete => {
                let k = *t.k_max.get_or_insert(t.k.unwrap_or(10));
                t.k.get_or_insert(k);
                t.with_reference.get_or_insert(true);
            }
            TaskKind::Sample => {
                let k = *t.k.get_or_insert(10);
                let steps = *t.steps.get_or_insert(1_000_000);
                t.burn.get_or_insert(steps / 4);
                t.thin.get_or_insert(((k * n) as u64 / 10).max(1));
                t.with_reference.get_or_insert(true);
            }
            TaskKind::Partition => {
                t.k_list.get_or_insert_with(|| vec![1, 2, 3]);
                t.n_samples.get_or_insert(10_000);
                t.exact_budget.get_or_insert(DEFAULT_EXACT_BUDGET);
                t.with_reference.get_or_insert(true);
            }
            TaskKind::Extremal => {
                t.k_list.get_or_insert_with(|| vec![5, 10, 20, 40]);
            }
            TaskKind::Admissibility => {}
        }
    }
}

/// Every problem with the config, as human-readable diagnostics. Empty means
/// `run` will get past validation.
pub fn validate(config: &RunConfig, kind: TaskKind) -> Vec<String> {
    let mut d = Vec::new();
    if let Some(k) = config.task.kind {
        if k != kind {
            d.push(format!(
                "config task '{}' does not match requested task '{}'",
                k.name(),
                kind.name()
            ));
        }
    }
    let p = &config.problem;
    match p.domain.build() {
        Ok(domain) => {
            if let Err(e) = p.f.check_domain(&domain) {
                d.push(e.to_string());
            }
        }
        Err(e) => d.push(format!("domain: {e}")),
    }
    if let Err(e) = p.f.validate() {
        d.push(e.to_string());
    }
    if p.n < 2 {
        d.push(format!("grid size n must be at least 2 (got {})", p.n));
    }
    if !(p.truncation.r_init > 0.0) || !(p.truncation.margin > 0.0 && p.truncation.margin < 1.0) {
        d.push("truncation needs r_init > 0 and margin in (0, 1)".into());
    }
    if p.solver.max_iters == 0 || !(p.solver.tol_energy >= 0.0) || !(p.solver.tol_frostman >= 0.0) {
        d.push("solver needs max_iters > 0 and nonnegative tolerances".into());
    }
    if let BaseMeasureSpec::PowerDensity { exponent } = p.base_measure {
        if !exponent.is_finite() || exponent < 0.0 {
            d.push("power density exponent must be finite and nonnegative".into());
        }
    }

    let t = &config.task;
    if kind.stochastic() && t.seed.is_none() {
        d.push(format!("task '{}' is stochastic and needs a seed", kind.name()));
    }
    let positive_k = |name: &str, v: Option<usize>, d: &mut Vec<String>| {
        if v == Some(0) {
            d.push(format!("{name} must be at least 1"));
        }
    };
    positive_k("k", t.k, &mut d);
    if let Some(km) = t.k_max {
        if km < 2 && kind == TaskKind::Fekete {
            d.push(format!("k_max must be at least 2 (got {km})"));
        }
    }
    if let Some(list) = &t.k_list {
        if list.is_empty() {
            d.push("k_list is empty".into());
        }
        if list.contains(&0) {
            d.push("k_list entries must be at least 1".into());
        }
        if kind == TaskKind::Extremal && list.len() < 2 {
            d.push("extremal task needs at least two k values".into());
        }
    }
    if let (Some(s), Some(b)) = (t.steps, t.burn) {
        if s <= b {
            d.push(format!("steps ({s}) must exceed burn ({b})"));
        }
    }
    if t.thin == Some(0) {
        d.push("thin must be positive".into());
    }
    if let Some(n) = t.n_samples {
        if n < 100 {
            d.push(format!("N must be at least 100 (got {n})"));
        }
    }
    if let Some(eta) = t.eta {
        if !(eta >= 0.0) {
            d.push("eta must be nonnegative".into());
        }
    }
    if let Some(rho) = t.rho {
        if !(rho > 0.0) {
            d.push("rho must be positive".into());
        }
        if t.reference.is_none() {
            d.push("rho needs a reference CDF".into());
        }
    }
    if let Some(delta) = t.delta {
        if !(delta > 0.0 && delta < 1.0) {
            d.push(format!("delta must lie in (0, 1) (got {delta})"));
        }
    }
    if let Some(tol) = t.tol {
        if !(tol > 0.0) {
            d.push("tol must be positive".into());
        }
    }
    if let Some(r) = t.delta_ref {
        if !(r > 0.0) {
            d.push("delta_ref must be positive".into());
        }
    }
    if let Some((tt, r0)) = t.mass_density {
        if !(tt > 0.0 && r0 > 0.0) {
            d.push("mass_density needs T > 0 and r0 > 0".into());
        }
    }
    if kind == TaskKind::Extremal {
        match &t.green {
            None => d.push("extremal task needs a Green-function set 'green'".into()),
            Some(g) => {
                if let Err(e) = g.validate() {
                    d.push(e.to_string());
                }
            }
        }
        if t.test_points.as_ref().is_none_or(|v| v.is_empty()) {
            d.push("extremal task needs test_points".into());
        }
    }
    if config.output.directory.is_empty() {
        d.push("output directory is empty".into());
    }
    d
}

/// Files produced by a run, kept in memory until written.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Writes all files and `manifest.csv` (filename, bytes, sha256).
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut rows = Vec::new();
        let mut paths = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            rows.push(vec![
                name.clone(),
                bytes.len().to_string(),
                hex::encode(Sha256::digest(bytes)),
            ]);
            paths.push(path);
        }
        let manifest = csv_bytes(&["filename", "bytes", "sha256"], &rows)?;
        let path = dir.join("manifest.csv");
        std::fs::write(&path, manifest)?;
        paths.push(path);
        Ok(paths)
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|f| f.0.as_str()).collect()
    }
}

/// Round-trip float text: 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn bytes(&self) -> Result<Vec<u8>> {
        let h: Vec<&str> = self.header.iter().map(String::as_str).collect();
        csv_bytes(&h, &self.rows)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::Domain(_) | Error::Structural(_) | Error::Precondition(_) | Error::Json(_) => {
            EXIT_VALIDATION
        }
        Error::Resource(_) => EXIT_RESOURCE,
        Error::Numerical(_) | Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        Error::Io(_) => EXIT_IO,
    }
}

/// Grid and (optionally) equilibrium data shared by the tasks.
struct Prepared {
    domain: DomainSet,
    grid: GridSet,
    radius: f64,
    doublings: usize,
    eq: Option<EquilibriumResult>,
}

fn prepare(p: &ProblemConfig, need_eq: bool) -> Result<Prepared> {
    let domain = p.domain.build()?;
    p.f.check_domain(&domain)?;
    let mut opts = p.truncation;
    opts.n = p.n;
    if domain.is_bounded() && !need_eq {
        let grid = build_grid(&domain, p.n)?;
        return Ok(Prepared {
            radius: domain.max_modulus(),
            domain,
            grid,
            doublings: 0,
            eq: None,
        });
    }
    let tr = adaptive_truncation(&domain, &p.q, &p.f, &opts, |g| {
        solve_equilibrium(g, &p.q, &p.f, &p.solver)
    })?;
    Ok(Prepared {
        domain: tr.domain,
        grid: tr.grid,
        radius: tr.radius,
        doublings: tr.doublings,
        eq: Some(tr.result),
    })
}

fn truncation_json(pr: &Prepared) -> Value {
    json!({
        "radius": pr.radius,
        "doublings": pr.doublings,
        "grid_points": pr.grid.len(),
        "spacing": pr.grid.spacing,
        "domain": format!("{:?}", pr.domain),
    })
}

fn equilibrium_json(r: &EquilibriumResult, grid: &GridSet) -> Value {
    let supp: Vec<f64> = r.support_idx.iter().map(|&i| grid.points[i].re).collect();
    json!({
        "V_w": r.v_w,
        "F_w": r.f_w,
        "q_integral": r.q_integral,
        "delta_reference": (-r.v_w).exp(),
        "converged": r.converged,
        "iterations": r.iterations,
        "residual": r.residual,
        "support_size": r.support_idx.len(),
        "support_re_min": supp.iter().copied().fold(f64::INFINITY, f64::min),
        "support_re_max": supp.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

fn measure_table(r: &EquilibriumResult, grid: &GridSet, reference: Option<&ReferenceCdf>) -> Result<Table> {
    let mut t = Table::new(&["x", "y", "weight", "cell_right", "cdf", "reference"]);
    let cdf = if grid.is_real() {
        Some(grid_cdf(&r.mu_star, grid)?)
    } else {
        None
    };
    for (i, z) in grid.points.iter().enumerate() {
        let c = grid.cells.as_ref().map(|c| c[i].hi);
        t.push(vec![
            fmt_f64(z.re),
            fmt_f64(z.im),
            fmt_f64(r.mu_star.weights[i]),
            opt(c),
            opt(cdf.as_ref().map(|c| c[i])),
            opt(reference.zip(c).map(|(rf, x)| rf.eval(x))),
        ]);
    }
    Ok(t)
}

/// Outcome of [`run`]: exit code, summary and the files to write.
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: Value,
    pub artifacts: Artifacts,
    pub error: Option<String>,
}

/// Runs `kind` on a config that already passed [`validate`]. Never panics on
/// bad numerics; failures are mapped to exit codes and still produce a summary.
pub fn execute(config: &RunConfig, kind: TaskKind) -> RunOutcome {
    let mut config = config.clone();
    config.resolve(kind);
    let mut art = Artifacts::default();
    let (code, results, error) = match dispatch(&config, kind, &mut art) {
        Ok((code, v)) => (code, v, None),
        Err(Error::NoConvergence {
            radius,
            doublings,
            last,
        }) => {
            let msg = format!("no convergence after {doublings} doublings (last radius {radius})");
            (
                EXIT_NO_CONVERGENCE,
                json!({ "last_radius": radius, "doublings": doublings, "last_result": {
                    "V_w": last.v_w, "converged": last.converged, "residual": last.residual,
                    "iterations": last.iterations } }),
                Some(msg),
            )
        }
        Err(e) => (exit_code(&e), Value::Null, Some(e.to_string())),
    };
    let summary = json!({
        "program": "biortheq",
        "version": env!("CARGO_PKG_VERSION"),
        "task": kind.name(),
        "exit_code": code,
        "error": error,
        "config": config,
        "max_grid": max_grid_size(),
        "results": results,
    });
    RunOutcome {
        exit_code: code,
        summary,
        artifacts: art,
        error,
    }
}

/// Validates, executes and writes everything under `out`.
pub fn run(config: &RunConfig, kind: TaskKind, out: &Path) -> RunOutcome {
    let diagnostics = validate(config, kind);
    if !diagnostics.is_empty() {
        let summary = json!({
            "program": "biortheq",
            "version": env!("CARGO_PKG_VERSION"),
            "task": kind.name(),
            "exit_code": EXIT_VALIDATION,
            "diagnostics": diagnostics,
            "config": config,
        });
        return RunOutcome {
            exit_code: EXIT_VALIDATION,
            summary,
            artifacts: Artifacts::default(),
            error: Some(diagnostics.join("; ")),
        };
    }
    let mut outcome = execute(config, kind);
    let json_on = config.output.formats.iter().any(|f| f == "json");
    let csv_on = config.output.formats.iter().any(|f| f == "csv");
    if !csv_on {
        outcome.artifacts.files.retain(|(n, _)| !n.ends_with(".csv"));
    }
    if json_on {
        let bytes = serde_json::to_vec_pretty(&outcome.summary).expect("summary serializes");
        outcome.artifacts.add("summary.json", bytes);
    }
    if let Err(e) = outcome.artifacts.write(out) {
        outcome.error = Some(e.to_string());
        outcome.exit_code = EXIT_IO;
    }
    outcome
}

fn dispatch(c: &RunConfig, kind: TaskKind, art: &mut Artifacts) -> Result<(i32, Value)> {
    match kind {
        TaskKind::Equilibrium => task_equilibrium(c, art, false),
        TaskKind::Frostman => task_equilibrium(c, art, true),
        TaskKind::Fekete => task_fekete(c, art),
        TaskKind::Sample => task_sample(c, art),
        TaskKind::Partition => task_partition(c, art),
        TaskKind::Extremal => task_extremal(c, art),
        TaskKind::Admissibility => task_admissibility(c, art),
    }
}

fn task_equilibrium(c: &RunConfig, art: &mut Artifacts, frostman: bool) -> Result<(i32, Value)> {
    let p = &c.problem;
    let t = &c.task;
    let pr = prepare(p, true)?;
    let r = pr.eq.as_ref().expect("equilibrium solved");
    let tol = t.tol.unwrap_or(5e-3);
    let check = frostman_check(r, &pr.grid, &p.q, &p.f, tol)?;
    let mut res = equilibrium_json(r, &pr.grid);
    res["frostman"] = json!(check);
    res["frostman_verdict"] = json!(if check.pass { "PASS" } else { "FAIL" });
    res["truncation"] = truncation_json(&pr);
    if let (Some(rf), true) = (&t.reference, pr.grid.is_real()) {
        res["cdf_distance_to_reference"] = json!(sup_distance_grid_to(&r.mu_star, &pr.grid, |x| rf.eval(x))?);
    }
    art.add(
        "measure.csv",
        measure_table(r, &pr.grid, t.reference.as_ref())?.bytes()?,
    );
    if frostman {
        let cert = certify_minimizer(&r.mu_star, &pr.grid, &p.q, &p.f, tol)?;
        res["certificate"] = json!(cert);
        let mut tab = Table::new(&["x", "y", "potential", "F_w", "on_support"]);
        let mut on = vec![false; pr.grid.len()];
        for &i in &r.support_idx {
            on[i] = true;
        }
        let ft = crate::kernel::FTable::new(&pr.grid.points, &p.f)?;
        for (i, &z) in pr.grid.points.iter().enumerate() {
            let u = crate::kernel::modified_potential_with(&r.mu_star, &pr.grid, &ft, z, &p.q, &p.f)?;
            tab.push(vec![
                fmt_f64(z.re),
                fmt_f64(z.im),
                fmt_f64(u),
                fmt_f64(r.f_w),
                (on[i] as u8).to_string(),
            ]);
        }
        art.add("potential.csv", tab.bytes()?);
    }
    let code = if r.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE };
    Ok((code, res))
}

fn task_fekete(c: &RunConfig, art: &mut Artifacts) -> Result<(i32, Value)> {
    let p = &c.problem;
    let t = &c.task;
    let with_ref = t.with_reference.unwrap_or(true);
    let pr = prepare(p, with_ref)?;
    let k_max = t.k_max.unwrap_or(10);
    let series = fekete_sequence(&pr.grid, k_max, &p.q, &p.f, pr.eq.as_ref().map(|r| r.v_w))?;
    let mut tab = Table::new(&["k", "delta", "log_vdm", "passes", "monotone", "reference"]);
    for s in &series.steps {
        tab.push(vec![
            s.k.to_string(),
            fmt_f64(s.delta),
            fmt_f64(s.log_vdm),
            s.passes.to_string(),
            (s.monotone as u8).to_string(),
            opt(series.reference_delta),
        ]);
    }
    art.add("fekete_delta.csv", tab.bytes()?);
    let last = series.steps.last().expect("k_max >= 2");
    let mut pts = Table::new(&["index", "x", "y"]);
    for (i, (x, y)) in last.points.iter().zip(&last.points_im).enumerate() {
        pts.push(vec![i.to_string(), fmt_f64(*x), fmt_f64(*y)]);
    }
    art.add("fekete_points.csv", pts.bytes()?);
    let mut res = json!({
        "k_max": k_max,
        "delta_series": series.steps.iter().map(|s| json!({"k": s.k, "delta": s.delta, "log_vdm": s.log_vdm, "passes": s.passes, "monotone": s.monotone})).collect::<Vec<_>>(),
        "all_monotone": series.steps.iter().all(|s| s.monotone),
        "reference_delta": series.reference_delta,
        "truncation": truncation_json(&pr),
    });
    if let Some(cdf) = &last.cdf {
        let eq_cdf = match &pr.eq {
            Some(r) => Some(grid_cdf(&r.mu_star, &pr.grid)?),
            None => None,
        };
        let mut tab = Table::new(&["x", "fekete_cdf", "equilibrium_cdf", "reference"]);
        for (i, z) in pr.grid.points.iter().enumerate() {
            tab.push(vec![
                fmt_f64(z.re),
                fmt_f64(cdf[i]),
                opt(eq_cdf.as_ref().map(|e| e[i])),
                opt(t.reference.as_ref().map(|rf| rf.eval(z.re))),
            ]);
        }
        art.add("fekete_cdf.csv", tab.bytes()?);
        if let Some(r) = &pr.eq {
            let d = crate::cdf::sup_distance_grid_to_empirical(&r.mu_star, &pr.grid, &last.points)?;
            res["cdf_distance_to_equilibrium"] = json!(d);
        }
    }
    let config = fekete_search(&pr.grid, k_max, &p.q, &p.f)?.config;
    res["tightness_at_radius"] = json!(tightness_report(&config, pr.radius));
    Ok((EXIT_OK, res))
}

fn chain_options(t: &TaskConfig, k: usize, n: usize) -> ChainOptions {
    let steps = t.steps.unwrap_or(1_000_000);
    let mut o = ChainOptions::with_defaults(steps, k, n, t.seed.unwrap_or(0));
    if let Some(b) = t.burn {
        o.burn = b;
    }
    if let Some(th) = t.thin {
        o.thin = th;
    }
    o
}

fn task_sample(c: &RunConfig, art: &mut Artifacts) -> Result<(i32, Value)> {
    let p = &c.problem;
    let t = &c.task;
    let pr = prepare(p, t.with_reference.unwrap_or(true))?;
    let grid = &pr.grid;
    let nu = p.base_measure.build(grid)?;
    let k = t.k.unwrap_or(10);
    let opts = chain_options(t, k, grid.len());
    let mut res = json!({ "truncation": truncation_json(&pr) });
    if let Some((tt, r0)) = t.mass_density {
        res["mass_density"] = json!(mass_density_check(grid, &nu, tt, r0)?);
    }
    let batch = mcmc_sample(grid, &nu, k, &p.q, &p.f, &opts)?;

    let mut header: Vec<String> = Vec::new();
    let complex = !grid.is_real();
    for i in 0..=k {
        if complex {
            header.push(format!("z{i}_re"));
            header.push(format!("z{i}_im"));
        } else {
            header.push(format!("z{i}"));
        }
    }
    header.push("log_vdm".into());
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut tab = Table::new(&h);
    for (cfg, l) in batch.configs.iter().zip(&batch.log_vdm) {
        let mut row = Vec::with_capacity(h.len());
        for &i in cfg {
            row.push(fmt_f64(grid.points[i].re));
            if complex {
                row.push(fmt_f64(grid.points[i].im));
            }
        }
        row.push(fmt_f64(*l));
        tab.push(row);
    }
    art.add("samples.csv", tab.bytes()?);

    if grid.is_real() {
        let mean = crate::kernel::DiscreteMeasure::probability(grid, batch.mean_measure.clone())?;
        let cdf = grid_cdf(&mean, grid)?;
        let eq_cdf = match &pr.eq {
            Some(r) => Some(grid_cdf(&r.mu_star, grid)?),
            None => None,
        };
        let cells = grid.cells.as_ref().expect("real grid");
        let mut tab = Table::new(&["x", "mean_cdf", "equilibrium_cdf", "reference"]);
        for (i, cell) in cells.iter().enumerate() {
            tab.push(vec![
                fmt_f64(cell.hi),
                fmt_f64(cdf[i]),
                opt(eq_cdf.as_ref().map(|e| e[i])),
                opt(t.reference.as_ref().map(|rf| rf.eval(cell.hi))),
            ]);
        }
        art.add("sample_cdf.csv", tab.bytes()?);
        if let Some(rf) = &t.reference {
            res["mean_cdf_distance_to_reference"] = json!(sup_distance_grid_to(&mean, grid, |x| rf.eval(x))?);
        }
        if let Some(r) = &pr.eq {
            res["mean_cdf_distance_to_equilibrium"] = json!(crate::cdf::sup_distance_grid(&mean, &r.mu_star, grid)?);
        }
    }
    let roots = batch.roots();
    res["k"] = json!(k);
    res["samples"] = json!(batch.len());
    res["acceptance_rate"] = json!(batch.acceptance_rate);
    res["max_drift"] = json!(batch.max_drift);
    res["seed"] = json!(batch.seed);
    res["steps"] = json!(batch.steps);
    res["burn"] = json!(batch.burn);
    res["thin"] = json!(batch.thin);
    res["mean_root"] = json!(roots.iter().sum::<f64>() / roots.len().max(1) as f64);
    let delta_ref = t.delta_ref.or(pr.eq.as_ref().map(|r| (-r.v_w).exp()));
    if let (Some(eta), Some(dr)) = (t.eta, delta_ref) {
        res["tail"] = json!({ "eta": eta, "delta_ref": dr, "fraction": tail_probability(&batch, eta, dr)? });
    }
    if let (Some(rho), Some(rf)) = (t.rho, &t.reference) {
        let ball = CdfBall {
            reference: rf.clone(),
            radius: rho,
        };
        res["neighborhood"] = json!(neighborhood_mass_from_batch(&batch, grid, &ball)?);
    }
    Ok((EXIT_OK, res))
}

fn task_partition(c: &RunConfig, art: &mut Artifacts) -> Result<(i32, Value)> {
    let p = &c.problem;
    let t = &c.task;
    let pr = prepare(p, t.with_reference.unwrap_or(true))?;
    let nu = p.base_measure.build(&pr.grid)?;
    let mut res = json!({ "truncation": truncation_json(&pr) });
    if let Some((tt, r0)) = t.mass_density {
        let md = mass_density_check(&pr.grid, &nu, tt, r0)?;
        let pass = md.pass;
        res["mass_density"] = json!(md);
        if !pass {
            return Err(Error::Precondition("base measure fails the mass-density check".into()));
        }
    }
    let k_list = t.k_list.clone().unwrap_or_else(|| vec![1, 2, 3]);
    let series = zk_root_sequence(
        &pr.grid,
        &nu,
        &k_list,
        &p.q,
        &p.f,
        t.n_samples.unwrap_or(10_000),
        t.seed.unwrap_or(0),
        t.exact_budget.unwrap_or(DEFAULT_EXACT_BUDGET),
        pr.eq.as_ref().map(|r| r.v_w),
    )?;
    let mut tab = Table::new(&["k", "log_z", "root", "method", "log_stderr", "reference"]);
    for e in &series.entries {
        tab.push(vec![
            e.k.to_string(),
            fmt_f64(e.log_z),
            fmt_f64(e.root),
            match e.method {
                crate::ensemble::ZkMethod::Exact => "exact".into(),
                crate::ensemble::ZkMethod::MonteCarlo => "monte_carlo".into(),
            },
            opt(e.log_stderr),
            opt(series.reference_delta),
        ]);
    }
    art.add("partition.csv", tab.bytes()?);
    res["series"] = json!(series);
    Ok((EXIT_OK, res))
}

fn task_extremal(c: &RunConfig, art: &mut Artifacts) -> Result<(i32, Value)> {
    let p = &c.problem;
    let t = &c.task;
    let pr = prepare(p, false)?;
    let green = t.green.expect("validated");
    let tests: Vec<Point> = t
        .test_points
        .as_ref()
        .expect("validated")
        .iter()
        .map(|&(x, y)| Point::new(x, y))
        .collect();
    let k_list = t.k_list.clone().unwrap_or_else(|| vec![5, 10, 20, 40]);
    let configs = k_list
        .iter()
        .map(|&k| fekete_search(&pr.grid, k, &p.q, &p.f).map(|tr| tr.config))
        .collect::<Result<Vec<_>>>()?;
    let report = bw_bound_check(&configs, &tests, &green, &pr.grid, &p.q, &p.f)?;
    let mut tab = Table::new(&["k", "z_re", "z_im", "l_k", "b_k", "green_z", "green_fz"]);
    for r in &report.rows {
        let z = Point::new(r.z_re, r.z_im);
        tab.push(vec![
            r.k.to_string(),
            fmt_f64(r.z_re),
            fmt_f64(r.z_im),
            fmt_f64(r.l_k),
            fmt_f64(r.b_k),
            fmt_f64(green.eval(z)),
            fmt_f64(green.eval(p.f.eval(z)?)),
        ]);
    }
    art.add("extremal.csv", tab.bytes()?);
    Ok((
        EXIT_OK,
        json!({
            "per_k_max": report.per_k_max,
            "max": report.max,
            "spread": report.spread,
            "trending_up": report.trending_up,
            "verdict": if report.pass { "PASS" } else { "FAIL" },
        }),
    ))
}

fn task_admissibility(c: &RunConfig, art: &mut Artifacts) -> Result<(i32, Value)> {
    let p = &c.problem;
    let domain = p.domain.build()?;
    let shells = p.truncation.shells;
    let report = check_f_admissible(&domain, &p.q, &p.f, &shells)?;
    let mut tab = Table::new(&["inner", "outer", "min_psi"]);
    for s in &report.shells {
        tab.push(vec![fmt_f64(s.inner), fmt_f64(s.outer), opt(s.min_psi)]);
    }
    art.add("shells.csv", tab.bytes()?);
    let mut res = json!({ "f_admissible": report });
    if let Some(delta) = c.task.delta {
        res["strong"] = json!(check_strong_f_admissible(&domain, &p.q, &p.f, delta, &shells)?);
    }
    Ok((EXIT_OK, res))
}

/// One-line human summary for the terminal.
pub fn describe(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    let _ = write!(s, "exit {}", outcome.exit_code);
    if let Some(e) = &outcome.error {
        let _ = write!(s, ": {e}");
    }
    s
}
