//! Exact rational coefficient tables of the order-`k` scheme.
//!
//! The scheme replaces `(μ+L)^{-1}⋯(2^{k-1}μ+L)^{-1}𝔡` by the combination
//! `μ^{k-1} 𝔡_{μ,k} = Σ_i a_{k,i} φ_{2^i μ}` of modified correctors and
//! writes `ξ·A_{μ,k}ξ` as the corrector energy plus
//! `μ Σ_i η_{k,i} ⟨φ_{2^iμ}²⟩ + μ Σ_{i<j} ν_{k,i,j} ⟨φ_{2^iμ} φ_{2^jμ}⟩`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational number: numerator and positive denominator in lowest terms.
pub type Rational = BigRational;

/// Largest supported order; the weights involve factors `2^{k²}`.
pub const MAX_ORDER: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeCoefficients {
    k: usize,
    c: Vec<Rational>,
    a: Vec<Rational>,
    eta: Vec<Rational>,
    /// Upper triangle, row `i` holds `ν_{k,i,j}` for `j = i+1..k`.
    nu: Vec<Vec<Rational>>,
}

fn pow2(e: usize) -> Rational {
    Rational::from_integer(BigInt::one() << e)
}

fn inv_pow2(e: usize) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << e)
}

/// One step of the recursions: tables of order `k` to order `k+1`.
fn step(prev: &SchemeCoefficients) -> SchemeCoefficients {
    let k = prev.k;
    let ck = &prev.c[k - 1];
    let shrink = inv_pow2(k - 1) * ck; // 2^{1-k} c_k

    let mut a = Vec::with_capacity(k + 1);
    a.push(ck * &prev.a[0]);
    for i in 1..k {
        a.push(ck * &prev.a[i] - &shrink * &prev.a[i - 1]);
    }
    a.push(-(&shrink * &prev.a[k - 1]));

    let base = k * (k - 1);
    let mut eta = Vec::with_capacity(k + 1);
    for i in 0..k {
        let w = pow2(base + i) - pow2(k * k + 1);
        eta.push(&prev.eta[i] + w * &a[i] * &a[i]);
    }
    eta.push(-(pow2(k * k) * &a[k] * &a[k]));

    let mut nu: Vec<Vec<Rational>> = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let mut row = Vec::with_capacity(k - i);
        for j in i + 1..=k {
            let value = if j == k {
                (pow2(base + i) - Rational::from_integer(BigInt::from(3)) * pow2(k * k))
                    * &a[i]
                    * &a[k]
            } else {
                let w = pow2(base) * (pow2(i) + pow2(j)) - pow2(k * k + 2);
                &prev.nu[i][j - i - 1] + w * &a[i] * &a[j]
            };
            row.push(value);
        }
        nu.push(row);
    }

    let mut c = prev.c.clone();
    // c_{k+1} = (2/c_k + 1)^{-1}
    let two = Rational::from_integer(BigInt::from(2));
    c.push((two / ck + Rational::one()).recip());

    SchemeCoefficients {
        k: k + 1,
        c,
        a,
        eta,
        nu,
    }
}

/// Coefficient tables for the scheme of order `k` (`1 ≤ k ≤ 12`).
pub fn coefficients(k: usize) -> Result<SchemeCoefficients> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "scheme order k must satisfy 1 ≤ k ≤ {MAX_ORDER}, got {k}"
        )));
    }
    let mut table = SchemeCoefficients {
        k: 1,
        c: vec![Rational::one()],
        a: vec![Rational::one()],
        eta: vec![Rational::zero()],
        nu: vec![Vec::new()],
    };
    while table.k < k {
        table = step(&table);
    }
    Ok(table)
}

impl SchemeCoefficients {
    pub fn k(&self) -> usize {
        self.k
    }

    /// `c_1, …, c_k`.
    pub fn c(&self) -> &[Rational] {
        &self.c
    }

    /// `a_{k,0}, …, a_{k,k-1}`.
    pub fn a(&self) -> &[Rational] {
        &self.a
    }

    /// `η_{k,0}, …, η_{k,k-1}`.
    pub fn eta(&self) -> &[Rational] {
        &self.eta
    }

    /// `ν_{k,i,j}` for `i < j < k`.
    pub fn nu(&self, i: usize, j: usize) -> &Rational {
        assert!(i < j && j < self.k, "ν_{{k,i,j}} needs i < j < k");
        &self.nu[i][j - i - 1]
    }

    /// All `(i, j, ν_{k,i,j})` in lexicographic order.
    pub fn nu_entries(&self) -> impl Iterator<Item = (usize, usize, &Rational)> {
        self.nu.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(move |(off, v)| (i, i + 1 + off, v))
        })
    }

    /// Floating-point weights used by the estimator.
    pub fn weights(&self) -> SchemeWeights {
        SchemeWeights {
            a: self.a.iter().map(to_f64).collect(),
            eta: self.eta.iter().map(to_f64).collect(),
            nu: self
                .nu_entries()
                .map(|(i, j, v)| (i, j, to_f64(v)))
                .collect(),
        }
    }
}

/// The coefficient tables rounded to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeWeights {
    pub a: Vec<f64>,
    pub eta: Vec<f64>,
    pub nu: Vec<(usize, usize, f64)>,
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
