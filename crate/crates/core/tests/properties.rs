mod common;

use common::*;
use homog_core::lattice::{
    apply_operator, dirichlet_form, divergence_star, gradient, local_drift, masked_product,
};
use homog_core::*;
use proptest::prelude::*;

fn topology() -> impl Strategy<Value = Topology> {
    prop_oneof![Just(Topology::Torus), Just(Topology::Box)]
}

fn field(lattice: &Lattice, seed: u64) -> LatticeField {
    // cheap deterministic pseudo-random values in [-1, 1)
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    LatticeField::from_fn(lattice, |_| {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    })
}

fn vector_field(lattice: &Lattice, seed: u64) -> VectorField {
    let a = field(lattice, seed);
    let b = field(lattice, seed ^ 0xABCD);
    let vals = a
        .values()
        .iter()
        .zip(b.values())
        .flat_map(|(x, y)| [*x, *y])
        .collect();
    VectorField::new(lattice.clone(), vals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_is_symmetric(n in 2usize..7, m in 2usize..7, seed in any::<u64>(), top in topology(), mu in 0.0f64..2.0) {
        let env = uniform_env(&[n, m], seed, top);
        let u = field(env.lattice(), seed.wrapping_add(1));
        let v = field(env.lattice(), seed.wrapping_add(2));
        let lu = apply_operator(&env, mu, &u).unwrap();
        let lv = apply_operator(&env, mu, &v).unwrap();
        let a: f64 = v.values().iter().zip(lu.values()).map(|(x, y)| x * y).sum();
        let b: f64 = u.values().iter().zip(lv.values()).map(|(x, y)| x * y).sum();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn energy_is_within_ellipticity_bounds(n in 2usize..7, seed in any::<u64>(), top in topology()) {
        let env = uniform_env(&[n, n], seed, top);
        let (alpha, beta) = env.bounds();
        let u = field(env.lattice(), seed);
        let g = gradient(&u);
        let sites = env.lattice().num_sites() as f64;
        let grad_sq: f64 = g.values().iter().map(|x| x * x).sum::<f64>() / sites;
        let e = dirichlet_form(&env, &u, &u).unwrap();
        prop_assert!(e >= alpha * grad_sq * (1.0 - 1e-12));
        prop_assert!(e <= beta * grad_sq * (1.0 + 1e-12));
        // on a box the operator also carries the inflow edges, so u·Lu ≥ form
        let lu = apply_operator(&env, 0.0, &u).unwrap();
        let quad: f64 = u.values().iter().zip(lu.values()).map(|(x, y)| x * y).sum::<f64>() / sites;
        if top == Topology::Torus {
            prop_assert!((quad - e).abs() <= 1e-10 * (1.0 + e));
        } else {
            prop_assert!(quad >= e - 1e-10 * (1.0 + e));
        }
    }

    #[test]
    fn gradient_and_divergence_are_adjoint(n in 2usize..8, m in 2usize..8, seed in any::<u64>()) {
        let lat = Lattice::torus(vec![n, m]).unwrap();
        let u = field(&lat, seed);
        let v = vector_field(&lat, seed.wrapping_add(9));
        let lhs: f64 = v.values().iter().zip(gradient(&u).values()).map(|(x, y)| x * y).sum();
        let rhs: f64 = u.values().iter().zip(divergence_star(&v).values()).map(|(x, y)| x * y).sum();
        prop_assert!((lhs + rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn drift_has_zero_mean_on_torus(n in 2usize..7, seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        prop_assume!(a.abs() + b.abs() > 1e-3);
        let env = uniform_torus(n, seed);
        let xi = Direction::normalized(vec![a, b]).unwrap();
        let d = local_drift(&env, &xi).unwrap();
        prop_assert!(d.mean().abs() <= 1e-12);
    }

    #[test]
    fn masks_are_normalized(side in 3usize..40, frac in 0.05f64..1.0, order in 0u32..4, bump in any::<bool>()) {
        let lat = Lattice::cube_box(side, 2).unwrap();
        let half_width = (frac * (side + 1) as f64 / 2.0).max(1.0);
        let filter = if bump { Filter::SmoothBump } else { Filter::Polynomial(order) };
        let mask = build_mask(filter, half_width, &lat).unwrap();
        prop_assert!((mask.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(mask.values().iter().all(|w| *w >= 0.0));
        let one = LatticeField::constant(&lat, 1.0);
        prop_assert!((masked_product(&one, &one, &mask).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn corrector_set_is_ordered_by_shift(seed in any::<u64>(), mu in 0.01f64..1.0) {
        // ‖φ_{2μ}‖ ≤ ‖φ_μ‖: larger shifts damp the resolvent
        let env = uniform_env(&[6, 6], seed, Topology::Box);
        let set = solve_corrector_set(&env, mu, 3, &Direction::unit(1, 2), &SolveConfig::default()).unwrap();
        for w in set.fields.windows(2) {
            prop_assert!(w[1].norm() <= w[0].norm() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn sampling_is_a_function_of_position(seed in any::<u64>(), stream in 0u64..1000, n in 2usize..8) {
        let law = EnvironmentLaw::new(LawKind::Uniform { alpha: 0.5, beta: 2.0 }, 2, seed).unwrap();
        let a = sample_environment(&law, &[n, n], Topology::Torus, stream).unwrap();
        let b = sample_environment(&law, &[n, n], Topology::Torus, stream).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.conductances().iter().all(|c| (0.5..2.0).contains(c)));
    }
}
