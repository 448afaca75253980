//! Closed-form references checked against the solvers.

use biortheq::cdf::{semicircle_cdf, sup_distance_grid_to};
use biortheq::ensemble::{exact_zk_grid, BaseMeasure};
use biortheq::equilibrium::{solve_equilibrium, SolverOptions};
use biortheq::extremal::{bw_bound_check, green_interval, GreenFunctionSpec};
use biortheq::fekete::fekete_search;
use biortheq::geometry::{build_grid, re, DomainSet, MapSpec, WeightSpec};
use std::f64::consts::PI;

/// Density of the Fuss-Catalan law of order 2 on `[0, 27/4]`.
fn fuss_catalan_density(y: f64) -> f64 {
    let a = 27.0 + 3.0 * (81.0 - 12.0 * y).max(0.0).sqrt();
    let c = 2f64.cbrt();
    c * 3f64.sqrt() / (12.0 * PI) * (c * a.powf(2.0 / 3.0) - 6.0 * y.cbrt()) / (y.powf(2.0 / 3.0) * a.cbrt())
}

/// CDF of the Fuss-Catalan law by the midpoint rule after `y = s^3`, which
/// removes the `y^{-2/3}` singularity at the origin.
fn fuss_catalan_cdf(y: f64) -> f64 {
    let top = y.clamp(0.0, 6.75).cbrt();
    if top == 0.0 {
        return 0.0;
    }
    let m = 4000;
    let h = top / m as f64;
    let acc: f64 = (0..m)
        .map(|i| {
            let s = (i as f64 + 0.5) * h;
            fuss_catalan_density(s * s * s) * 3.0 * s * s
        })
        .sum();
    (acc * h).min(1.0)
}

#[test]
fn fuss_catalan_reference_is_a_probability_law_with_known_moments() {
    assert!((fuss_catalan_cdf(6.75) - 1.0).abs() < 1e-4);
    let m = 4000;
    let h = 6.75f64.cbrt() / m as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..m {
        let s = (i as f64 + 0.5) * h;
        let y = s * s * s;
        let w = fuss_catalan_density(y) * 3.0 * s * s * h;
        m1 += y * w;
        m2 += y * y * w;
    }
    assert!((m1 - 1.0).abs() < 1e-3, "{m1}");
    assert!((m2 - 3.0).abs() < 3e-3, "{m2}");
}

#[test]
fn muttalib_borodin_equilibrium_matches_fuss_catalan() {
    let q = WeightSpec::monomial(1.0, 1.0);
    let f = MapSpec::Power { theta: 2.0 };
    let g = build_grid(&DomainSet::interval(0.0, 8.0).unwrap(), 400).unwrap();
    let r = solve_equilibrium(&g, &q, &f, &SolverOptions::default()).unwrap();
    // x -> x^2/4 pushes the equilibrium measure onto the Fuss-Catalan law.
    let d = sup_distance_grid_to(&r.mu_star, &g, |x| fuss_catalan_cdf(x * x / 4.0)).unwrap();
    assert!(d < 0.03, "cdf distance {d}");
    // Dilation identity: the mean equals 3/2.
    let mean: f64 = r.mu_star.weights.iter().zip(&g.points).map(|(w, z)| w * z.re).sum();
    assert!((mean - 1.5).abs() < 0.02, "mean {mean}");
    let edge = r.support_idx.iter().map(|&i| g.points[i].re).fold(0.0, f64::max);
    assert!((edge - 27f64.sqrt()).abs() < 0.1, "edge {edge}");
}

#[test]
fn semicircle_energy_and_cdf_on_the_line() {
    let q = WeightSpec::monomial(0.5, 2.0);
    let g = build_grid(&DomainSet::interval(-4.0, 4.0).unwrap(), 400).unwrap();
    let r = solve_equilibrium(&g, &q, &MapSpec::Identity, &SolverOptions::default()).unwrap();
    // 2 I(semicircle) + 2 ∫ x^2/2 = 2/4 + 1.
    assert!((r.v_w - 1.5).abs() < 0.03, "{}", r.v_w);
    let d = sup_distance_grid_to(&r.mu_star, &g, |x| semicircle_cdf(x, 2.0)).unwrap();
    assert!(d < 0.02, "{d}");
}

/// Selberg value of `∫_{[-1,1]^m} Π_{i<j} (x_i - x_j)^2 dx`.
fn selberg_legendre(m: usize) -> f64 {
    let mut v: f64 = (1..=m).map(|i| i as f64).product();
    for j in 0..m {
        let jf: f64 = (1..=j).map(|i| i as f64).product();
        let j2f: f64 = (1..=2 * j).map(|i| i as f64).product();
        v *= 2f64.powi(2 * j as i32 + 1) * jf.powi(4) / (j2f * j2f * (2 * j + 1) as f64);
    }
    v
}

#[test]
fn grid_partition_function_converges_to_selberg() {
    let g = build_grid(&DomainSet::interval(-1.0, 1.0).unwrap(), 120).unwrap();
    let nu = BaseMeasure::lebesgue(&g);
    for k in 1..=2 {
        let z = exact_zk_grid(&g, &nu, k, &WeightSpec::zero(), &MapSpec::Identity, 1e8).unwrap();
        let exact = selberg_legendre(k + 1);
        assert!((z.z / exact - 1.0).abs() < 2e-3, "k={k}: {} vs {exact}", z.z);
    }
    assert!((selberg_legendre(2) - 8.0 / 3.0).abs() < 1e-12);
}

#[test]
fn interval_green_function_at_three() {
    assert!((green_interval(re(3.0), -1.0, 1.0) - (3.0 + 8f64.sqrt()).ln()).abs() < 1e-14);
}

#[test]
fn bernstein_walsh_gap_on_interval_stays_below_limit() {
    let g = build_grid(&DomainSet::interval(-1.0, 1.0).unwrap(), 400).unwrap();
    let (q, f) = (WeightSpec::zero(), MapSpec::Identity);
    let ks = [5, 10, 20, 40];
    let configs: Vec<_> = ks
        .iter()
        .map(|&k| fekete_search(&g, k, &q, &f).unwrap().config)
        .collect();
    let d = GreenFunctionSpec::Disk {
        center_re: 0.0,
        center_im: 0.0,
        radius: 2.0,
    };
    let r = bw_bound_check(&configs, &[re(3.0)], &d, &g, &q, &f).unwrap();
    // For f = Identity the slice bound tends to 2 V_[-1,1](3).
    let limit = 2.0 * (3.0 + 8f64.sqrt()).ln() - 2.0 * 1.5f64.ln();
    let vals: Vec<f64> = r.per_k_max.iter().map(|p| p.1).collect();
    assert!(vals.iter().all(|&v| v < limit));
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
    let inc: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(inc.windows(2).all(|w| w[1] < w[0]));
    assert!(!r.trending_up);
}
