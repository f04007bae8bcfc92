#![allow(dead_code)]

use homog_core::{sample_environment, Environment, EnvironmentLaw, LawKind, Topology};
use nalgebra::{DMatrix, DVector};

pub fn uniform_env(extents: &[usize], seed: u64, topology: Topology) -> Environment {
    let law = EnvironmentLaw::new(
        LawKind::Uniform {
            alpha: 1.0,
            beta: 10.0,
        },
        extents.len(),
        seed,
    )
    .unwrap();
    sample_environment(&law, extents, topology, 0).unwrap()
}

pub fn uniform_torus(n: usize, seed: u64) -> Environment {
    uniform_env(&[n, n], seed, Topology::Torus)
}

/// Dense matrix of `μ + L`, assembled column by column from the operator.
pub fn dense_from_operator(env: &Environment, mu: f64) -> DMatrix<f64> {
    let lat = env.lattice();
    let n = lat.num_sites();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let u = homog_core::LatticeField::new(lat.clone(), e).unwrap();
        let col = homog_core::lattice::apply_operator(env, mu, &u).unwrap();
        for (i, v) in col.values().iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Direct solve of `(μ + L) x = b` by LU.
pub fn dense_solve(env: &Environment, mu: f64, b: &[f64]) -> Vec<f64> {
    let m = dense_from_operator(env, mu);
    let x = m.lu().solve(&DVector::from_column_slice(b)).unwrap();
    x.iter().copied().collect()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
