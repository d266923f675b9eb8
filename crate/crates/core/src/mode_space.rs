//! Mode vectors, mode weights and truncated power series.
//!
//! The mode weights are `f_n = √((G)_n / n!)` for a finite weight parameter
//! and `f_n = 1/√(n!)` in the infinite case. They are always built from
//! running products of ratios; Γ-function quotients are never formed.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{overflow, Error, Result};

/// Truncated vector of complex mode amplitudes `α_0..α_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    amplitudes: Vec<Complex64>,
}

impl ModeVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument(
                "a mode vector needs at least one amplitude".into(),
            ));
        }
        if let Some(n) = amplitudes.iter().position(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "amplitude {n} is not finite"
            )));
        }
        Ok(Self { amplitudes })
    }

    pub fn zeros(cutoff: usize) -> Self {
        Self {
            amplitudes: vec![Complex64::new(0.0, 0.0); cutoff + 1],
        }
    }

    /// Unit amplitude on mode `k`.
    pub fn unit(cutoff: usize, k: usize) -> Result<Self> {
        if k > cutoff {
            return Err(Error::InvalidArgument(format!(
                "mode {k} exceeds cutoff {cutoff}"
            )));
        }
        let mut v = Self::zeros(cutoff);
        v.amplitudes[k] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.amplitudes.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.is_finite())
    }

    pub(crate) fn check_cutoff(&self, expected: usize) -> Result<()> {
        if self.cutoff() != expected {
            return Err(Error::CutoffMismatch {
                expected,
                actual: self.cutoff(),
            });
        }
        Ok(())
    }
}

impl Index<usize> for ModeVector {
    type Output = Complex64;
    fn index(&self, n: usize) -> &Complex64 {
        &self.amplitudes[n]
    }
}

impl IndexMut<usize> for ModeVector {
    fn index_mut(&mut self, n: usize) -> &mut Complex64 {
        &mut self.amplitudes[n]
    }
}

/// The weight parameter `G` of a family: a positive real or the `G → ∞`
/// limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightParameter {
    Finite(f64),
    Infinite,
}

impl WeightParameter {
    pub fn finite(g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight parameter must be positive, got {g}"
            )));
        }
        Ok(Self::Finite(g))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Finite(g) => Some(*g),
            Self::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Self::Infinite)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinite") {
            return Ok(Self::Infinite);
        }
        let g: f64 = t
            .parse()
            .map_err(|_| Error::Parse(format!("bad weight parameter `{s}`")))?;
        Self::finite(g)
    }
}

impl fmt::Display for WeightParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(g) => write!(f, "{g}"),
            Self::Infinite => write!(f, "inf"),
        }
    }
}

/// Rising factorial `(g)_n = g(g+1)…(g+n-1)`.
pub fn pochhammer(g: f64, n: usize) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pochhammer needs g > 0, got {g}"
        )));
    }
    let mut acc = 1.0_f64;
    for j in 0..n {
        acc *= g + j as f64;
        if !acc.is_finite() {
            return Err(overflow(format!("({g})_{n}")));
        }
    }
    Ok(acc)
}

/// `(g)_n / n!`, the diagonal factor of `∂_z^{g-1} z^{g-1}` on `z^n`
/// (with the overall `Γ(g)` dropped).
pub fn fractional_diagonal(g: f64, n: usize) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fractional diagonal needs g > 0, got {g}"
        )));
    }
    let mut acc = 1.0_f64;
    for j in 0..n {
        acc *= (g + j as f64) / (j as f64 + 1.0);
        if !acc.is_finite() || acc == 0.0 {
            return Err(overflow(format!("({g})_{n}/{n}!")));
        }
    }
    Ok(acc)
}

pub fn mode_weight(g: WeightParameter, n: usize) -> Result<f64> {
    Ok(mode_weights(g, n)?[n])
}

/// `f_0..f_cutoff` in one running product.
pub fn mode_weights(g: WeightParameter, cutoff: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cutoff + 1);
    match g {
        WeightParameter::Finite(g) => {
            if !(g > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "weight parameter must be positive, got {g}"
                )));
            }
            let mut ratio = 1.0_f64;
            out.push(1.0);
            for j in 0..cutoff {
                ratio *= (g + j as f64) / (j as f64 + 1.0);
                let f = ratio.sqrt();
                if !f.is_finite() || f == 0.0 {
                    return Err(overflow(format!("mode weight f_{} at G={g}", j + 1)));
                }
                out.push(f);
            }
        }
        WeightParameter::Infinite => {
            let mut f = 1.0_f64;
            out.push(1.0);
            for j in 0..cutoff {
                f /= (j as f64 + 1.0).sqrt();
                if !f.is_normal() {
                    return Err(overflow(format!("mode weight 1/sqrt({}!)", j + 1)));
                }
                out.push(f);
            }
        }
    }
    Ok(out)
}

/// `β_n = α_n / f_n`.
pub fn alpha_to_beta(alpha: &ModeVector, g: WeightParameter) -> Result<ModeVector> {
    let f = mode_weights(g, alpha.cutoff())?;
    ModeVector::new(alpha.iter().zip(&f).map(|(a, f)| a / f).collect())
}

/// `α_n = f_n β_n`.
pub fn beta_to_alpha(beta: &ModeVector, g: WeightParameter) -> Result<ModeVector> {
    let f = mode_weights(g, beta.cutoff())?;
    ModeVector::new(beta.iter().zip(&f).map(|(b, f)| b * f).collect())
}

/// Taylor coefficients `c_0..c_K` of a function holomorphic at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    coefficients: Vec<Complex64>,
}

impl PowerSeries {
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidArgument("empty power series".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(overflow("power series coefficient"));
        }
        Ok(Self { coefficients })
    }

    /// The polynomial with the given coefficients, padded with zeros.
    pub fn from_polynomial(coefficients: &[Complex64], cutoff: usize) -> Result<Self> {
        let mut c = vec![Complex64::new(0.0, 0.0); cutoff + 1];
        for (dst, src) in c.iter_mut().zip(coefficients) {
            *dst = *src;
        }
        Self::new(c)
    }

    pub fn cutoff(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<Complex64> {
        self.coefficients
    }
}

impl Index<usize> for PowerSeries {
    type Output = Complex64;
    fn index(&self, n: usize) -> &Complex64 {
        &self.coefficients[n]
    }
}

/// Series of `(1 - p z)^{-a}`: coefficient `n` is `(a)_n/n! · p^n`.
pub fn binomial_series(a: f64, p: Complex64, cutoff: usize) -> Result<PowerSeries> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "binomial series exponent must be positive, got {a}"
        )));
    }
    let mut c = Vec::with_capacity(cutoff + 1);
    let mut term = Complex64::new(1.0, 0.0);
    c.push(term);
    for j in 0..cutoff {
        term *= p * ((a + j as f64) / (j as f64 + 1.0));
        c.push(term);
    }
    PowerSeries::new(c)
}

/// Cauchy product truncated at the common cutoff.
pub fn series_product(f: &PowerSeries, g: &PowerSeries) -> Result<PowerSeries> {
    if f.cutoff() != g.cutoff() {
        return Err(Error::CutoffMismatch {
            expected: f.cutoff(),
            actual: g.cutoff(),
        });
    }
    let k = f.cutoff();
    let (a, b) = (f.coefficients(), g.coefficients());
    let c = (0..=k)
        .map(|n| (0..=n).map(|j| a[j] * b[n - j]).sum())
        .collect();
    PowerSeries::new(c)
}
