//! Sparse multivariate polynomials in multi-index form.
//!
//! `x^alpha = prod_k (x_k)^(alpha_k)` with `|alpha| = sum_k alpha_k`. Used
//! for exponential-polynomial densities and for the polynomial factor that
//! appears when differentiating `exp(quadratic)`.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::ops::{Add, Mul};

/// Exponent vector of a monomial.
pub type MultiIndex = Vec<u32>;

/// Total degree of a multi-index.
pub fn total_degree(alpha: &[u32]) -> u32 {
    alpha.iter().sum()
}

/// Scalar types usable as polynomial coefficients.
pub trait Coeff:
    Copy + PartialEq + Add<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self>
{
    const ZERO: Self;
    const ONE: Self;
    fn is_negligible(&self) -> bool;
}

impl Coeff for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    fn is_negligible(&self) -> bool {
        *self == 0.0
    }
}

impl Coeff for Complex64 {
    const ZERO: Complex64 = Complex64::new(0.0, 0.0);
    const ONE: Complex64 = Complex64::new(1.0, 0.0);
    fn is_negligible(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
}

/// Sparse polynomial over `dim` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<C: Coeff> {
    pub dim: usize,
    pub terms: BTreeMap<MultiIndex, C>,
}

impl<C: Coeff> Poly<C> {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: C) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (MultiIndex, C)>) -> Self {
        let mut p = Self::zero(dim);
        for (alpha, c) in terms {
            assert_eq!(alpha.len(), dim, "multi-index length must equal dim");
            p.add_term(alpha, c);
        }
        p
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: C) {
        if c.is_negligible() && !self.terms.contains_key(&alpha) {
            return;
        }
        let entry = self.terms.entry(alpha.clone()).or_insert(C::ZERO);
        *entry = *entry + c;
        if entry.is_negligible() {
            self.terms.remove(&alpha);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| c.is_negligible())
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, c)| !c.is_negligible())
            .map(|(a, _)| total_degree(a))
            .max()
            .unwrap_or(0)
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (alpha, &c) in &self.terms {
            if alpha[var] == 0 {
                continue;
            }
            let mut beta = alpha.clone();
            let k = beta[var];
            beta[var] -= 1;
            out.add_term(beta, c * (k as f64));
        }
        out
    }

    /// `d^beta` applied coordinatewise; over-differentiation gives zero.
    pub fn derivative_multi(&self, beta: &[u32]) -> Self {
        let mut p = self.clone();
        for (var, &reps) in beta.iter().enumerate() {
            for _ in 0..reps {
                p = p.derivative(var);
            }
        }
        p
    }

    pub fn scale(&self, s: C) -> Self {
        let mut out = Self::zero(self.dim);
        for (alpha, &c) in &self.terms {
            out.add_term(alpha.clone(), c * s);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (alpha, &c) in &other.terms {
            out.add_term(alpha.clone(), c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                let alpha: MultiIndex = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(alpha, ca * cb);
            }
        }
        out
    }
}

impl Poly<f64> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (alpha, &c) in &self.terms {
            let mut m = c;
            for (k, &e) in alpha.iter().enumerate() {
                m *= x[k].powi(e as i32);
            }
            acc += m;
        }
        acc
    }
}

impl Poly<Complex64> {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (alpha, &c) in &self.terms {
            let mut m = 1.0;
            for (k, &e) in alpha.iter().enumerate() {
                m *= x[k].powi(e as i32);
            }
            acc += c * m;
        }
        acc
    }
}
