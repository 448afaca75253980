//! The set K, the map f, the external field Q and their discretization.
//!
//! Points are carried as [`Point`] (a complex number); interval domains keep
//! the imaginary part at zero. Grids are midpoint-uniform per component and
//! record the regularization scale `spacing` (half the smallest cell width)
//! that the kernel uses on and near the diagonal.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumResult;
use crate::error::{Error, Result};

pub type Point = Complex64;

/// Real point helper.
pub fn re(x: f64) -> Point {
    Complex64::new(x, 0.0)
}

/// A closed real interval; `lo` may be `-inf` and `hi` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// The closed set K.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSet {
    /// Disjoint real intervals sorted left to right.
    Intervals(Vec<Interval>),
    /// Axis-aligned closed rectangle `[re_lo, re_hi] x [im_lo, im_hi]`.
    Rectangle {
        re_lo: f64,
        re_hi: f64,
        im_lo: f64,
        im_hi: f64,
    },
    /// A circle `|z - center| = radius`, measured by arc length.
    Circle { center: Point, radius: f64 },
}

impl DomainSet {
    /// Validated union of real intervals. Only the first component may start
    /// at `-inf` and only the last may end at `+inf`; at most one component
    /// may be unbounded.
    pub fn intervals(parts: &[(f64, f64)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Parameter("domain needs at least one interval".into()));
        }
        let comps: Vec<Interval> = parts.iter().map(|&(lo, hi)| Interval { lo, hi }).collect();
        for (i, c) in comps.iter().enumerate() {
            if c.lo.is_nan() || c.hi.is_nan() || !(c.lo < c.hi) {
                return Err(Error::Parameter(format!(
                    "interval {i} must satisfy a < b (got [{}, {}])",
                    c.lo, c.hi
                )));
            }
            if c.lo == f64::INFINITY || c.hi == f64::NEG_INFINITY {
                return Err(Error::Parameter(format!("interval {i} is empty")));
            }
            if c.lo.is_infinite() && i != 0 {
                return Err(Error::Parameter("only the first interval may extend to -inf".into()));
            }
            if c.hi.is_infinite() && i + 1 != comps.len() {
                return Err(Error::Parameter("only the last interval may extend to +inf".into()));
            }
        }
        for w in comps.windows(2) {
            if !(w[0].hi < w[1].lo) {
                return Err(Error::Parameter(
                    "intervals must be sorted and pairwise disjoint".into(),
                ));
            }
        }
        let unbounded = comps.iter().filter(|c| !c.is_bounded()).count();
        if unbounded > 1 {
            return Err(Error::Parameter("at most one unbounded component is supported".into()));
        }
        Ok(DomainSet::Intervals(comps))
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::intervals(&[(a, b)])
    }

    pub fn half_line(a: f64) -> Result<Self> {
        Self::intervals(&[(a, f64::INFINITY)])
    }

    pub fn real_line() -> Self {
        DomainSet::Intervals(vec![Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }])
    }

    pub fn rectangle(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Result<Self> {
        let ok = [re_lo, re_hi, im_lo, im_hi].iter().all(|v| v.is_finite()) && re_lo < re_hi && im_lo < im_hi;
        if !ok {
            return Err(Error::Parameter("rectangle needs finite lo < hi on both axes".into()));
        }
        Ok(DomainSet::Rectangle {
            re_lo,
            re_hi,
            im_lo,
            im_hi,
        })
    }

    pub fn circle(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter("circle radius must be positive".into()));
        }
        Ok(DomainSet::Circle { center, radius })
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            DomainSet::Intervals(c) => c.iter().all(Interval::is_bounded),
            _ => true,
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, DomainSet::Intervals(_))
    }

    pub fn contains(&self, z: Point) -> bool {
        match self {
            DomainSet::Intervals(c) => z.im == 0.0 && c.iter().any(|i| i.contains(z.re)),
            DomainSet::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => z.re >= *re_lo && z.re <= *re_hi && z.im >= *im_lo && z.im <= *im_hi,
            DomainSet::Circle { center, radius } => ((z - center).norm() - radius).abs() <= 1e-9 * radius.max(1.0),
        }
    }

    /// Length, area or arc length.
    pub fn measure(&self) -> f64 {
        match self {
            DomainSet::Intervals(c) => c.iter().map(Interval::length).sum(),
            DomainSet::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => (re_hi - re_lo) * (im_hi - im_lo),
            DomainSet::Circle { radius, .. } => 2.0 * PI * radius,
        }
    }

    /// Largest modulus of a point of K (infinite for unbounded sets).
    pub fn max_modulus(&self) -> f64 {
        match self {
            DomainSet::Intervals(c) => c.iter().map(|i| i.lo.abs().max(i.hi.abs())).fold(0.0, f64::max),
            DomainSet::Rectangle {
                re_lo,
                re_hi,
                im_lo,
                im_hi,
            } => {
                let x = re_lo.abs().max(re_hi.abs());
                let y = im_lo.abs().max(im_hi.abs());
                x.hypot(y)
            }
            DomainSet::Circle { center, radius } => center.norm() + radius,
        }
    }

    /// Smallest real part over K (used for branch checks).
    pub fn min_real(&self) -> f64 {
        match self {
            DomainSet::Intervals(c) => c[0].lo,
            DomainSet::Rectangle { re_lo, .. } => *re_lo,
            DomainSet::Circle { center, radius } => center.re - radius,
        }
    }

    /// `K ∩ {|z| <= r}` for interval unions; bounded sets are returned unchanged.
    pub fn truncate(&self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::Parameter("truncation radius must be positive".into()));
        }
        match self {
            DomainSet::Intervals(c) => {
                let parts: Vec<(f64, f64)> = c
                    .iter()
                    .filter_map(|i| {
                        let lo = i.lo.max(-r);
                        let hi = i.hi.min(r);
                        (lo < hi).then_some((lo, hi))
                    })
                    .collect();
                if parts.is_empty() {
                    return Err(Error::Domain(format!("K does not meet the disk of radius {r}")));
                }
                Self::intervals(&parts)
            }
            other => Ok(other.clone()),
        }
    }
}

/// The map f.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MapSpec {
    Identity,
    /// Principal branch of `z^theta`, used on the closed right half plane.
    Power {
        theta: f64,
    },
    Exp,
    /// Principal logarithm on the open right half plane.
    Log,
    /// Real coefficients in increasing degree.
    Polynomial {
        coefficients: Vec<f64>,
    },
}

impl MapSpec {
    /// Whether the map needs `Re z >= 0` (power) or `Re z > 0` (log).
    pub fn requires_positive_branch(&self) -> bool {
        matches!(self, MapSpec::Power { .. } | MapSpec::Log)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MapSpec::Power { theta } if !(*theta > 0.0 && theta.is_finite()) => Err(Error::Parameter(format!(
                "power exponent must be positive (got {theta})"
            ))),
            MapSpec::Polynomial { coefficients } if coefficients.is_empty() => {
                Err(Error::Parameter("polynomial map needs coefficients".into()))
            }
            _ => Ok(()),
        }
    }

    /// Checks that K sits inside the branch domain of f.
    pub fn check_domain(&self, domain: &DomainSet) -> Result<()> {
        self.validate()?;
        match self {
            MapSpec::Power { .. } if domain.min_real() < 0.0 => Err(Error::Domain(
                "branch domain violated: power map needs K in the closed right half plane".into(),
            )),
            MapSpec::Log if domain.min_real() <= 0.0 => Err(Error::Domain(
                "branch domain violated: log map needs K in the open right half plane".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, z: Point) -> Result<Point> {
        let v = match self {
            MapSpec::Identity => z,
            MapSpec::Power { theta } => {
                if z.im == 0.0 && z.re >= 0.0 {
                    re(z.re.powf(*theta))
                } else if z.re > 0.0 {
                    (z.ln() * theta).exp()
                } else {
                    return Err(Error::Domain(format!("power branch undefined at {z} (needs Re z > 0)")));
                }
            }
            MapSpec::Exp => z.exp(),
            MapSpec::Log => {
                if z.re <= 0.0 {
                    return Err(Error::Domain(format!("log branch undefined at {z}")));
                }
                if z.im == 0.0 {
                    re(z.re.ln())
                } else {
                    z.ln()
                }
            }
            MapSpec::Polynomial { coefficients } => coefficients
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c),
        };
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("f({z}) is not finite")))
        }
    }

    pub fn derivative(&self, z: Point) -> Result<Point> {
        match self {
            MapSpec::Identity => Ok(re(1.0)),
            MapSpec::Power { theta } => {
                if z.im == 0.0 && z.re > 0.0 {
                    Ok(re(theta * z.re.powf(theta - 1.0)))
                } else if z.re > 0.0 {
                    Ok((z.ln() * (theta - 1.0)).exp() * theta)
                } else {
                    Err(Error::Domain(format!("power derivative undefined at {z}")))
                }
            }
            MapSpec::Exp => Ok(z.exp()),
            MapSpec::Log => {
                if z.re <= 0.0 {
                    Err(Error::Domain(format!("log branch undefined at {z}")))
                } else {
                    Ok(z.inv())
                }
            }
            MapSpec::Polynomial { coefficients } => Ok(coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, (d, &c)| acc * z + c * d as f64)),
        }
    }

    pub fn eval_all(&self, points: &[Point]) -> Result<Vec<Point>> {
        points.iter().map(|&z| self.eval(z)).collect()
    }

    /// `log|f(z)|`, without overflow for `Exp`.
    pub fn log_modulus(&self, z: Point) -> Result<f64> {
        match self {
            MapSpec::Exp => Ok(z.re),
            _ => Ok(self.eval(z)?.norm().ln()),
        }
    }
}

/// `log(1 + e^t)`.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// One additive term of the external field Q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightTerm {
    /// `coef * x^power` for real x.
    Monomial { coef: f64, power: f64 },
    /// `coef * |z|^power`.
    Modulus { coef: f64, power: f64 },
    /// `coef * log(1 + |z|^2)`.
    LogOnePlusSquare { coef: f64 },
}

/// Tabulated values on sorted real abscissae, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl Tabulated {
    fn eval(&self, x: f64) -> Result<f64> {
        let n = self.x.len();
        if n == 0 || n != self.values.len() {
            return Err(Error::Parameter("tabulated weight needs matching x/values".into()));
        }
        if x < self.x[0] || x > self.x[n - 1] {
            return Err(Error::Domain(format!("{x} outside the tabulated range")));
        }
        let j = self.x.partition_point(|&t| t <= x);
        if j == 0 {
            return Ok(self.values[0]);
        }
        if j >= n {
            return Ok(self.values[n - 1]);
        }
        let (x0, x1) = (self.x[j - 1], self.x[j]);
        let t = (x - x0) / (x1 - x0);
        Ok(self.values[j - 1] * (1.0 - t) + self.values[j] * t)
    }
}

/// The external field Q (all variants continuous, hence lower semicontinuous).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(default)]
    pub terms: Vec<WeightTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Tabulated>,
}

impl WeightSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(coef: f64, power: f64) -> Self {
        WeightSpec {
            terms: vec![WeightTerm::Monomial { coef, power }],
            table: None,
        }
    }

    pub fn with_term(mut self, term: WeightTerm) -> Self {
        self.terms.push(term);
        self
    }

    /// `Q + c`.
    pub fn shifted(&self, c: f64) -> Self {
        self.clone().with_term(WeightTerm::Monomial { coef: c, power: 0.0 })
    }

    /// `s * Q`.
    pub fn scaled(&self, s: f64) -> Self {
        WeightSpec {
            terms: self
                .terms
                .iter()
                .map(|t| match *t {
                    WeightTerm::Monomial { coef, power } => WeightTerm::Monomial { coef: coef * s, power },
                    WeightTerm::Modulus { coef, power } => WeightTerm::Modulus { coef: coef * s, power },
                    WeightTerm::LogOnePlusSquare { coef } => WeightTerm::LogOnePlusSquare { coef: coef * s },
                })
                .collect(),
            table: self.table.as_ref().map(|t| Tabulated {
                x: t.x.clone(),
                values: t.values.iter().map(|v| v * s).collect(),
            }),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.table.is_none()
    }

    pub fn eval(&self, z: Point) -> Result<f64> {
        let mut q = 0.0;
        for t in &self.terms {
            q += match *t {
                WeightTerm::Monomial { coef, power } => {
                    if z.im != 0.0 {
                        return Err(Error::Domain(format!("real monomial weight evaluated at non-real {z}")));
                    }
                    let v = if power.fract() == 0.0 && power.abs() < i32::MAX as f64 {
                        z.re.powi(power as i32)
                    } else {
                        z.re.powf(power)
                    };
                    coef * v
                }
                WeightTerm::Modulus { coef, power } => coef * z.norm().powf(power),
                WeightTerm::LogOnePlusSquare { coef } => coef * z.norm_sqr().ln_1p(),
            };
        }
        if let Some(tab) = &self.table {
            if z.im != 0.0 {
                return Err(Error::Domain("tabulated weight is real-only".into()));
            }
            q += tab.eval(z.re)?;
        }
        if q.is_nan() || q == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("Q({z}) is undefined")));
        }
        Ok(q)
    }

    pub fn eval_all(&self, points: &[Point]) -> Result<Vec<f64>> {
        points.iter().map(|&z| self.eval(z)).collect()
    }
}

/// `psi(z) = Q(z) - 1/2 log[(1 + |z|^2)(1 + |f(z)|^2)]`.
pub fn psi(z: Point, q: &WeightSpec, f: &MapSpec) -> Result<f64> {
    let lf = f.log_modulus(z)?;
    Ok(q.eval(z)? - 0.5 * z.norm_sqr().ln_1p() - 0.5 * softplus(2.0 * lf))
}

/// Real cell `[lo, hi]` of a grid point on an interval domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
}

/// Quadrature discretization of a bounded set.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub points: Vec<Point>,
    pub cell_mass: Vec<f64>,
    /// Regularization scale: half the smallest cell width.
    pub spacing: f64,
    /// Cell bounds, present for real grids sorted left to right.
    pub cells: Option<Vec<Cell>>,
    pub parent: Option<DomainSet>,
    id: u64,
}

impl GridSet {
    /// Grid from explicit points. Real sorted point lists get cells bounded by
    /// neighbour midpoints (outer cells extend by `spacing`).
    pub fn from_points(points: Vec<Point>, cell_mass: Vec<f64>, spacing: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Structural("grid has no points".into()));
        }
        if points.len() != cell_mass.len() {
            return Err(Error::Structural("points and cell masses differ in length".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::Parameter("grid spacing must be positive".into()));
        }
        if cell_mass.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Parameter("cell masses must be positive".into()));
        }
        let real_sorted = points.iter().all(|z| z.im == 0.0) && points.windows(2).all(|w| w[0].re < w[1].re);
        let cells = real_sorted.then(|| {
            let n = points.len();
            (0..n)
                .map(|i| Cell {
                    lo: if i == 0 {
                        points[0].re - spacing
                    } else {
                        0.5 * (points[i - 1].re + points[i].re)
                    },
                    hi: if i + 1 == n {
                        points[n - 1].re + spacing
                    } else {
                        0.5 * (points[i].re + points[i + 1].re)
                    },
                })
                .collect()
        });
        Ok(Self::assemble(points, cell_mass, spacing, cells, None))
    }

    /// Real grid from coordinates with unit cell masses.
    pub fn from_reals(xs: &[f64], spacing: f64) -> Result<Self> {
        Self::from_points(xs.iter().map(|&x| re(x)).collect(), vec![1.0; xs.len()], spacing)
    }

    fn assemble(
        points: Vec<Point>,
        cell_mass: Vec<f64>,
        spacing: f64,
        cells: Option<Vec<Cell>>,
        parent: Option<DomainSet>,
    ) -> Self {
        let mut h = DefaultHasher::new();
        for (z, m) in points.iter().zip(&cell_mass) {
            z.re.to_bits().hash(&mut h);
            z.im.to_bits().hash(&mut h);
            m.to_bits().hash(&mut h);
        }
        spacing.to_bits().hash(&mut h);
        GridSet {
            points,
            cell_mass,
            spacing,
            cells,
            parent,
            id: h.finish(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fingerprint used to detect measures and matrices built on different grids.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn is_real(&self) -> bool {
        self.points.iter().all(|z| z.im == 0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_mass.iter().sum()
    }

    pub fn reals(&self) -> Vec<f64> {
        self.points.iter().map(|z| z.re).collect()
    }
}

/// Midpoint grid with about `n` points.
///
/// Interval unions split `n` proportionally to component length (largest
/// remainder, every component gets at least one point). Rectangles use an
/// `nx x ny` tensor grid with `nx * ny` close to `n` and near-square cells.
/// Circles get `n` equal arcs.
pub fn build_grid(domain: &DomainSet, n: usize) -> Result<GridSet> {
    if n < 2 {
        return Err(Error::Parameter(format!("grid needs n >= 2 (got {n})")));
    }
    if !domain.is_bounded() {
        return Err(Error::Parameter(
            "cannot grid an unbounded domain; truncate it first".into(),
        ));
    }
    match domain {
        DomainSet::Intervals(comps) => {
            if n < comps.len() {
                return Err(Error::Parameter(format!(
                    "n = {n} is smaller than the number of components ({})",
                    comps.len()
                )));
            }
            let total: f64 = comps.iter().map(Interval::length).sum();
            let mut counts: Vec<usize> = vec![1; comps.len()];
            let spare = n - comps.len();
            let ideal: Vec<f64> = comps
                .iter()
                .map(|c| n as f64 * c.length() / total - 1.0)
                .map(|v| v.max(0.0))
                .collect();
            let ideal_sum: f64 = ideal.iter().sum();
            let scaled: Vec<f64> = ideal
                .iter()
                .map(|v| {
                    if ideal_sum > 0.0 {
                        v * spare as f64 / ideal_sum
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut assigned = 0;
            for (c, s) in counts.iter_mut().zip(&scaled) {
                let f = s.floor() as usize;
                *c += f;
                assigned += f;
            }
            let mut order: Vec<usize> = (0..comps.len()).collect();
            order.sort_by(|&a, &b| {
                let fa = scaled[a] - scaled[a].floor();
                let fb = scaled[b] - scaled[b].floor();
                fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
            });
            for &i in order.iter().take(spare - assigned) {
                counts[i] += 1;
            }

            let mut points = Vec::with_capacity(n);
            let mut mass = Vec::with_capacity(n);
            let mut cells = Vec::with_capacity(n);
            let mut min_width = f64::INFINITY;
            for (c, &m) in comps.iter().zip(&counts) {
                let h = c.length() / m as f64;
                min_width = min_width.min(h);
                for j in 0..m {
                    let lo = c.lo + h * j as f64;
                    let hi = if j + 1 == m { c.hi } else { c.lo + h * (j + 1) as f64 };
                    points.push(re(c.lo + h * (j as f64 + 0.5)));
                    mass.push(h);
                    cells.push(Cell { lo, hi });
                }
            }
            Ok(GridSet::assemble(
                points,
                mass,
                0.5 * min_width,
                Some(cells),
                Some(domain.clone()),
            ))
        }
        DomainSet::Rectangle {
            re_lo,
            re_hi,
            im_lo,
            im_hi,
        } => {
            let w = re_hi - re_lo;
            let hgt = im_hi - im_lo;
            let nx = ((n as f64 * w / hgt).sqrt().round() as usize).max(1);
            let ny = ((n as f64 / nx as f64).round() as usize).max(1);
            let dx = w / nx as f64;
            let dy = hgt / ny as f64;
            let mut points = Vec::with_capacity(nx * ny);
            for iy in 0..ny {
                for ix in 0..nx {
                    points.push(Complex64::new(
                        re_lo + dx * (ix as f64 + 0.5),
                        im_lo + dy * (iy as f64 + 0.5),
                    ));
                }
            }
            let mass = vec![dx * dy; points.len()];
            Ok(GridSet::assemble(
                points,
                mass,
                0.5 * dx.min(dy),
                None,
                Some(domain.clone()),
            ))
        }
        DomainSet::Circle { center, radius } => {
            let arc = 2.0 * PI * radius / n as f64;
            let points = (0..n)
                .map(|j| {
                    let t = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                    center + Complex64::from_polar(*radius, t)
                })
                .collect();
            Ok(GridSet::assemble(
                points,
                vec![arc; n],
                0.5 * arc,
                None,
                Some(domain.clone()),
            ))
        }
    }
}

/// Outcome of the admissibility screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Admissible,
    Suspect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellRecord {
    pub inner: f64,
    pub outer: f64,
    /// Minimum of psi over the sampled shell, `None` when K misses the shell.
    pub min_psi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub verdict: Verdict,
    pub shells: Vec<ShellRecord>,
    pub offending_shell: Option<usize>,
    pub notes: Vec<String>,
}

/// Geometric shell schedule `R_j = r0 * 2^j`, `j = 0..=count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShellSchedule {
    pub r0: f64,
    pub count: usize,
    /// psi must exceed this on the last shell.
    pub threshold: f64,
    pub samples_per_shell: usize,
}

impl Default for ShellSchedule {
    fn default() -> Self {
        ShellSchedule {
            r0: 1.0,
            count: 20,
            threshold: 1.0,
            samples_per_shell: 64,
        }
    }
}

/// Real sample points of `K ∩ {r_in <= |x| < r_out}`.
fn shell_samples(comps: &[Interval], r_in: f64, r_out: f64, m: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let pieces = [(r_in, r_out), (-r_out, -r_in)];
    for c in comps {
        for &(a, b) in &pieces {
            let lo = c.lo.max(a);
            let hi = c.hi.min(b);
            if lo < hi {
                out.extend((0..m).map(|j| lo + (hi - lo) * j as f64 / m as f64));
            } else if lo == hi && lo.abs() >= r_in && lo.abs() < r_out {
                out.push(lo);
            }
        }
    }
    out
}

/// Numeric screen for f-admissibility: psi must grow without bound on K.
pub fn check_f_admissible(
    domain: &DomainSet,
    q: &WeightSpec,
    f: &MapSpec,
    shells: &ShellSchedule,
) -> Result<AdmissibilityReport> {
    f.check_domain(domain)?;
    if domain.is_bounded() {
        let probe = build_grid(domain, 16)?;
        let finite = probe
            .points
            .iter()
            .any(|&z| q.eval(z).map(f64::is_finite).unwrap_or(false));
        if !finite {
            return Err(Error::Domain("Q is infinite on every probe point of K".into()));
        }
        return Ok(AdmissibilityReport {
            verdict: Verdict::Admissible,
            shells: Vec::new(),
            offending_shell: None,
            notes: vec!["compact K: every continuous weight is admissible".into()],
        });
    }
    if !(shells.r0 > 0.0) || shells.count == 0 || shells.samples_per_shell == 0 {
        return Err(Error::Parameter("shell schedule needs r0 > 0 and count > 0".into()));
    }
    let DomainSet::Intervals(comps) = domain else {
        unreachable!("only interval unions can be unbounded")
    };

    let mut records = Vec::with_capacity(shells.count);
    let mut notes = Vec::new();
    for j in 0..shells.count {
        let inner = shells.r0 * 2f64.powi(j as i32);
        let outer = 2.0 * inner;
        let xs = shell_samples(comps, inner, outer, shells.samples_per_shell);
        let min_psi = if xs.is_empty() {
            notes.push(format!("shell {j} [{inner}, {outer}) misses K; skipped"));
            None
        } else {
            let mut m = f64::INFINITY;
            for x in xs {
                m = m.min(psi(re(x), q, f)?);
            }
            Some(m)
        };
        records.push(ShellRecord { inner, outer, min_psi });
    }

    let filled: Vec<(usize, f64)> = records
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.min_psi.map(|m| (j, m)))
        .collect();
    let Some(&(last_j, last)) = filled.last() else {
        return Err(Error::Domain("every admissibility shell misses K".into()));
    };
    let record = filled[..filled.len() - 1]
        .iter()
        .copied()
        .fold(None::<(usize, f64)>, |acc, (j, m)| match acc {
            Some((_, best)) if best >= m => acc,
            _ => Some((j, m)),
        });

    let (verdict, offending) = if !(last > shells.threshold) {
        notes.push(format!(
            "psi minimum {last:.6e} on the last shell does not exceed the threshold {}",
            shells.threshold
        ));
        (Verdict::Suspect, Some(last_j))
    } else if let Some((j, best)) = record.filter(|&(_, best)| best >= last) {
        notes.push(format!(
            "shell {j} already reached {best:.6e} >= last-shell minimum {last:.6e}"
        ));
        (Verdict::Suspect, Some(j))
    } else {
        (Verdict::Admissible, None)
    };
    Ok(AdmissibilityReport {
        verdict,
        shells: records,
        offending_shell: offending,
        notes,
    })
}

/// Screen for strong admissibility: `(1 - delta) Q` must be f-admissible.
pub fn check_strong_f_admissible(
    domain: &DomainSet,
    q: &WeightSpec,
    f: &MapSpec,
    delta: f64,
    shells: &ShellSchedule,
) -> Result<AdmissibilityReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta must lie in (0, 1) (got {delta})")));
    }
    check_f_admissible(domain, &q.scaled(1.0 - delta), f, shells)
}

/// Options for [`adaptive_truncation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationOptions {
    pub r_init: f64,
    /// Grid size used on every truncated domain.
    pub n: usize,
    pub max_doublings: usize,
    /// Support inside `|z| >= (1 - margin) R` counts as touching the boundary.
    pub margin: f64,
    pub shells: ShellSchedule,
}

impl Default for TruncationOptions {
    fn default() -> Self {
        TruncationOptions {
            r_init: 2.0,
            n: 400,
            max_doublings: 8,
            margin: 0.05,
            shells: ShellSchedule::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Truncation {
    pub radius: f64,
    pub domain: DomainSet,
    pub grid: GridSet,
    pub result: EquilibriumResult,
    pub doublings: usize,
}

/// Solves on `K ∩ {|z| <= R}` and doubles `R` until the computed support
/// stays clear of the outer `margin` fraction of the disk.
///
/// A bounded K is solved once, with `R = max |z|` over K.
pub fn adaptive_truncation(
    domain: &DomainSet,
    q: &WeightSpec,
    f: &MapSpec,
    opts: &TruncationOptions,
    mut solve: impl FnMut(&GridSet) -> Result<EquilibriumResult>,
) -> Result<Truncation> {
    if domain.is_bounded() {
        f.check_domain(domain)?;
        let grid = build_grid(domain, opts.n)?;
        let result = solve(&grid)?;
        return Ok(Truncation {
            radius: domain.max_modulus(),
            domain: domain.clone(),
            grid,
            result,
            doublings: 0,
        });
    }
    if !(opts.r_init > 0.0) || !(opts.margin > 0.0 && opts.margin < 1.0) {
        return Err(Error::Parameter(
            "truncation needs r_init > 0 and margin in (0, 1)".into(),
        ));
    }
    let report = check_f_admissible(domain, q, f, &opts.shells)?;
    if report.verdict != Verdict::Admissible {
        return Err(Error::Precondition(format!(
            "Q is not f-admissible on K: {}",
            report.notes.join("; ")
        )));
    }
    let mut r = opts.r_init;
    let mut doublings = 0;
    loop {
        let truncated = domain.truncate(r)?;
        let grid = build_grid(&truncated, opts.n)?;
        let result = solve(&grid)?;
        let edge = (1.0 - opts.margin) * r;
        let touches = result.support_idx.iter().any(|&i| grid.points[i].norm() >= edge);
        if !touches {
            return Ok(Truncation {
                radius: r,
                domain: truncated,
                grid,
                result,
                doublings,
            });
        }
        if doublings == opts.max_doublings {
            return Err(Error::NoConvergence {
                radius: r,
                doublings,
                last: Box::new(result),
            });
        }
        r *= 2.0;
        doublings += 1;
    }
}
