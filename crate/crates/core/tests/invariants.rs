use biortheq::equilibrium::{minimize_energy, SolverOptions};
use biortheq::extremal::{green_disk, green_interval, wkq_lower_estimate, GreenFunctionSpec};
use biortheq::fekete::{fekete_search, log_vdm, Configuration};
use biortheq::geometry::{build_grid, re, DomainSet, MapSpec, Point, WeightSpec};
use biortheq::kernel::{
    assemble_kernel_matrix, classical_capacity, energy, modified_kernel, pushforward_energy, weighted_log_energy,
    DiscreteMeasure,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_probability(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(3)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

fn maps() -> impl Strategy<Value = MapSpec> {
    prop_oneof![
        Just(MapSpec::Identity),
        (0.5f64..3.0).prop_map(|theta| MapSpec::Power { theta }),
        Just(MapSpec::Exp),
        Just(MapSpec::Polynomial {
            coefficients: vec![0.0, 1.0, 0.5]
        }),
    ]
}

proptest! {
    #[test]
    fn kernel_is_symmetric(x in 0.0f64..4.0, y in 0.0f64..4.0, f in maps(), c in 0.0f64..2.0, eps in 1e-4f64..0.1) {
        let q = WeightSpec::monomial(c, 2.0);
        let a = modified_kernel(re(x), re(y), &q, &f, eps).unwrap();
        let b = modified_kernel(re(y), re(x), &q, &f, eps).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn field_shift_moves_energy_by_twice_the_constant(seed in 0u64..1000, c in -3.0f64..3.0) {
        let g = build_grid(&DomainSet::interval(0.0, 2.0).unwrap(), 40).unwrap();
        let q = WeightSpec::monomial(1.0, 1.0);
        let f = MapSpec::Power { theta: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let km = assemble_kernel_matrix(&g, &q, &f).unwrap();
        let ks = assemble_kernel_matrix(&g, &q.shifted(c), &f).unwrap();
        let w = random_probability(&mut rng, g.len());
        let mu = DiscreteMeasure::probability(&g, w).unwrap();
        let diff = energy(&mu, &ks).unwrap() - energy(&mu, &km).unwrap();
        prop_assert!((diff - 2.0 * c).abs() < 1e-10);
    }

    #[test]
    fn identity_energy_decomposes(seed in 0u64..1000, c in 0.0f64..2.0) {
        let g = build_grid(&DomainSet::interval(-1.0, 1.5).unwrap(), 50).unwrap();
        let q = WeightSpec::monomial(c, 2.0);
        let km = assemble_kernel_matrix(&g, &q, &MapSpec::Identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = DiscreteMeasure::probability(&g, random_probability(&mut rng, g.len())).unwrap();
        let e = energy(&mu, &km).unwrap();
        let split = weighted_log_energy(&mu, &g, &q).unwrap() + pushforward_energy(&mu, &g, &MapSpec::Identity).unwrap();
        prop_assert!((e - split).abs() < 1e-12);
    }

    #[test]
    fn log_vdm_ignores_order(
        xs in proptest::collection::vec(0.01f64..3.0, 2..8),
        f in maps(),
        shuffle_seed in 0u64..1000,
    ) {
        let pts: Vec<Point> = xs.iter().map(|&x| re(x)).collect();
        let q = WeightSpec::monomial(0.7, 1.0);
        let a = log_vdm(&pts, &q, &f).unwrap();
        let mut perm = pts.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let b = log_vdm(&perm, &q, &f).unwrap();
        if a.is_finite() {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        } else {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn green_functions_vanish_on_their_sets(t in 0.0f64..1.0, a in -3.0f64..0.0, len in 0.1f64..4.0, theta in 0.0f64..6.3, s in 0.0f64..1.0) {
        let b = a + len;
        prop_assert_eq!(green_interval(re(a + t * len), a, b), 0.0);
        let c = Point::new(0.3, -0.2);
        let z = c + Point::from_polar(2.0 * s, theta);
        prop_assert_eq!(green_disk(z, c, 2.0), 0.0);
    }

    #[test]
    fn green_functions_are_log_minus_log_capacity_at_infinity(theta in 0.0f64..6.3, a in -3.0f64..0.0, len in 0.1f64..4.0) {
        let z = Point::from_polar(1e7, theta);
        let spec = GreenFunctionSpec::Interval { a, b: a + len };
        let g = spec.eval(z) - z.norm().ln() + spec.capacity().ln();
        prop_assert!(g.abs() < 1e-5);
    }
}

/// `Σ_{i≠j} w_i w_j k_ε(z_i, z_j) = -2 log_vdm / (k+1)^2` for the empirical
/// measure of a configuration whose gaps exceed the cutoffs.
#[test]
fn empirical_off_diagonal_energy_matches_log_vdm() {
    let g = build_grid(&DomainSet::interval(0.0, 3.0).unwrap(), 300).unwrap();
    let q = WeightSpec::monomial(1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for f in [MapSpec::Identity, MapSpec::Power { theta: 2.0 }] {
        for _ in 0..50 {
            let k = rng.gen_range(1..8);
            let mut idx: Vec<usize> = Vec::new();
            while idx.len() < k + 1 {
                let i = rng.gen_range(0..g.len());
                if idx.iter().all(|&j| (j as i64 - i as i64).abs() > 20) {
                    idx.push(i);
                }
            }
            let c = Configuration::from_indices(&g, idx.clone(), &q, &f).unwrap();
            let w = 1.0 / (k + 1) as f64;
            let mut off = 0.0;
            for &i in &idx {
                for &j in &idx {
                    if i != j {
                        off += w * w * modified_kernel(g.points[i], g.points[j], &q, &f, g.spacing).unwrap();
                    }
                }
            }
            let expect = -2.0 * c.log_vdm / ((k + 1) * (k + 1)) as f64;
            assert!(
                (off - expect).abs() < 1e-12 * expect.abs().max(1.0),
                "{off} vs {expect}"
            );
        }
    }
}

#[test]
fn energy_is_convex_on_random_pairs() {
    let g = build_grid(&DomainSet::interval(0.0, 3.0).unwrap(), 60).unwrap();
    let q = WeightSpec::monomial(1.0, 1.0);
    let f = MapSpec::Power { theta: 2.0 };
    let km = assemble_kernel_matrix(&g, &q, &f).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let a = random_probability(&mut rng, g.len());
        let b = random_probability(&mut rng, g.len());
        let t: f64 = rng.gen();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let e = |w: Vec<f64>| energy(&DiscreteMeasure::probability(&g, w).unwrap(), &km).unwrap();
        let lhs = e(mix);
        let rhs = t * e(a) + (1.0 - t) * e(b);
        assert!(lhs <= rhs + 1e-10 * rhs.abs().max(1.0));
    }
}

#[test]
fn slice_bounds_stay_below_field_on_k() {
    let q = WeightSpec::monomial(1.0, 1.0);
    let f = MapSpec::Power { theta: 2.0 };
    let g = build_grid(&DomainSet::interval(0.0, 6.0).unwrap(), 240).unwrap();
    for k in [3, 6, 10] {
        let c = fekete_search(&g, k, &q, &f).unwrap().config;
        for &z in g.points.iter().step_by(5) {
            let l = wkq_lower_estimate(z, &c, &g, &q, &f).unwrap();
            assert!(l <= q.eval(z).unwrap() + 1e-12, "k={k} z={z}");
        }
    }
    let q0 = WeightSpec::zero();
    let g = build_grid(&DomainSet::interval(-1.0, 1.0).unwrap(), 200).unwrap();
    let c = fekete_search(&g, 8, &q0, &MapSpec::Identity).unwrap().config;
    for &z in &g.points {
        assert!(wkq_lower_estimate(z, &c, &g, &q0, &MapSpec::Identity).unwrap() <= 1e-12);
    }
}

#[test]
fn green_asymptotics_agree_with_discrete_capacity() {
    let a = GreenFunctionSpec::Interval { a: -1.0, b: 1.0 };
    let cap = classical_capacity(&build_grid(&DomainSet::interval(-1.0, 1.0).unwrap(), 400).unwrap()).unwrap();
    assert!((cap / a.capacity() - 1.0).abs() < 0.02, "{cap}");
    let d = GreenFunctionSpec::Disk {
        center_re: 0.0,
        center_im: 0.0,
        radius: 1.5,
    };
    let circle = DomainSet::circle(Point::new(0.0, 0.0), 1.5).unwrap();
    let cap = classical_capacity(&build_grid(&circle, 400).unwrap()).unwrap();
    assert!((cap / d.capacity() - 1.0).abs() < 0.02, "{cap}");
}

#[test]
fn minimizer_is_probability_and_beats_uniform() {
    let g = build_grid(&DomainSet::interval(0.0, 4.0).unwrap(), 120).unwrap();
    let q = WeightSpec::monomial(1.0, 1.0);
    let f = MapSpec::Power { theta: 2.0 };
    let km = assemble_kernel_matrix(&g, &q, &f).unwrap();
    let r = minimize_energy(&km, &km.q_values.clone(), &SolverOptions::default()).unwrap();
    let s: f64 = r.mu_star.weights.iter().sum();
    assert!((s - 1.0).abs() < 1e-12);
    assert!(r.mu_star.weights.iter().all(|&w| w >= 0.0));
    let u = DiscreteMeasure::uniform(&g);
    assert!(r.v_w <= energy(&u, &km).unwrap());
}
