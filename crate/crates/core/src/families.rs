//! Interaction-coefficient families.
//!
//! Every family is exposed through [`CoefficientFamily`], which knows its
//! arity, its weight parameter `G`, and how to evaluate the coefficient at an
//! index tuple in both normalizations,
//!
//! ```text
//! S_{n…k…} = (∏ f) · C_{n…k…}
//! ```
//!
//! Tuples are ordered bra group first: `(n, m, k, l)` for cubic families and
//! `(n, m, i, k, l, j)` for quintic ones.
//!
//! Besides single evaluations, each family exposes its coefficients in one of
//! two separable forms ([`CStructure`]), which the engine uses for fast
//! contractions at large cutoffs:
//!
//! * factorized: `C = ∏_a w(a) · g(bra sum)`;
//! * product integral: `C = Σ_q W_q ∏_a φ_a(x_q)` with an exact quadrature.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{overflow, Error, Result};
use crate::mode_space::{mode_weights, WeightParameter};
use crate::special_functions::{
    chebyshev_u_table, gauss_hermite_scaled, gauss_legendre, gauss_order_for_degree,
    hermite_scaled_table, legendre_table, periodic_trapezoid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arity {
    Cubic,
    Quintic,
}

impl Arity {
    /// Number of indices in a tuple.
    pub fn width(self) -> usize {
        match self {
            Arity::Cubic => 4,
            Arity::Quintic => 6,
        }
    }

    /// Number of indices in each of the two groups.
    pub fn group(self) -> usize {
        self.width() / 2
    }

    pub fn name(self) -> &'static str {
        match self {
            Arity::Cubic => "cubic",
            Arity::Quintic => "quintic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cubic" => Ok(Arity::Cubic),
            "quintic" => Ok(Arity::Quintic),
            _ => Err(Error::Parse(format!("unknown arity `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    SForm,
    CForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// `S = min(n,m,k,l) + 1`, `G = 2`.
    CubicConformal,
    /// `C ≡ 1`; outside the solvable class.
    CubicSzego,
    /// `S = 1/((s+1)(s+2))`, `s = n+m+i`, `G = 1`.
    QuinticInversePair,
    /// Γ-ratio family with `G = δ`.
    QuinticGammaRatio { delta: f64 },
    /// `S = (8/π) ∫₀^π ∏ sin((n_a+1)x)/sin²x dx`, `G = 2`.
    QuinticSine,
    /// `S = 3^{-s} s!/(n!m!i!k!l!j!)`, `G = ∞`.
    QuinticMultinomial,
    /// Harmonic-trap quintic NLS, `G = ∞`.
    QuinticHermite,
    /// Quintic conformal flow on the two-sphere, `G = 1`.
    QuinticLegendre,
}

pub const FAMILY_NAMES: [&str; 8] = [
    "cubic_conformal",
    "cubic_szego",
    "quintic_inverse_pair",
    "quintic_gamma_ratio",
    "quintic_sine",
    "quintic_multinomial",
    "quintic_hermite",
    "quintic_legendre",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientFamily {
    kind: FamilyKind,
}

impl CoefficientFamily {
    pub fn new(kind: FamilyKind) -> Result<Self> {
        if let FamilyKind::QuinticGammaRatio { delta } = kind {
            if !(delta.is_finite() && delta > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "gamma-ratio family needs delta > 0, got {delta}"
                )));
            }
        }
        Ok(Self { kind })
    }

    /// Looks a family up by name. `delta` is only used by
    /// `quintic_gamma_ratio` (default 1).
    pub fn from_name(name: &str, delta: Option<f64>) -> Result<Self> {
        let kind = match name {
            "cubic_conformal" => FamilyKind::CubicConformal,
            "cubic_szego" => FamilyKind::CubicSzego,
            "quintic_inverse_pair" => FamilyKind::QuinticInversePair,
            "quintic_gamma_ratio" => FamilyKind::QuinticGammaRatio {
                delta: delta.unwrap_or(1.0),
            },
            "quintic_sine" => FamilyKind::QuinticSine,
            "quintic_multinomial" => FamilyKind::QuinticMultinomial,
            "quintic_hermite" => FamilyKind::QuinticHermite,
            "quintic_legendre" | "quintic_conformal" => FamilyKind::QuinticLegendre,
            other => return Err(Error::UnknownFamily(other.to_string())),
        };
        Self::new(kind)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::CubicConformal => "cubic_conformal",
            FamilyKind::CubicSzego => "cubic_szego",
            FamilyKind::QuinticInversePair => "quintic_inverse_pair",
            FamilyKind::QuinticGammaRatio { .. } => "quintic_gamma_ratio",
            FamilyKind::QuinticSine => "quintic_sine",
            FamilyKind::QuinticMultinomial => "quintic_multinomial",
            FamilyKind::QuinticHermite => "quintic_hermite",
            FamilyKind::QuinticLegendre => "quintic_legendre",
        }
    }

    pub fn arity(&self) -> Arity {
        match self.kind {
            FamilyKind::CubicConformal | FamilyKind::CubicSzego => Arity::Cubic,
            _ => Arity::Quintic,
        }
    }

    pub fn weight(&self) -> WeightParameter {
        match self.kind {
            FamilyKind::CubicConformal | FamilyKind::QuinticSine => WeightParameter::Finite(2.0),
            FamilyKind::CubicSzego
            | FamilyKind::QuinticInversePair
            | FamilyKind::QuinticLegendre => WeightParameter::Finite(1.0),
            FamilyKind::QuinticGammaRatio { delta } => WeightParameter::Finite(delta),
            FamilyKind::QuinticMultinomial | FamilyKind::QuinticHermite => {
                WeightParameter::Infinite
            }
        }
    }

    /// The normalization in which the family is naturally defined.
    pub fn native(&self) -> Normalization {
        match self.kind {
            FamilyKind::CubicSzego | FamilyKind::QuinticHermite | FamilyKind::QuinticLegendre => {
                Normalization::CForm
            }
            _ => Normalization::SForm,
        }
    }

    /// Whether the family is claimed to satisfy the solvability condition.
    pub fn in_solvable_class(&self) -> bool {
        !matches!(self.kind, FamilyKind::CubicSzego)
    }

    fn check_tuple(&self, idx: &[usize]) -> Result<()> {
        if idx.len() != self.arity().width() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {} indices, got {}",
                self.name(),
                self.arity().width(),
                idx.len()
            )));
        }
        Ok(())
    }

    /// Evaluator for repeated lookups with every index `<= max_index`.
    pub fn tabulate(&self, max_index: usize) -> Result<Tabulator> {
        let table = match self.kind {
            FamilyKind::QuinticSine | FamilyKind::QuinticHermite | FamilyKind::QuinticLegendre => {
                Some(self.native_product_table(max_index)?)
            }
            _ => None,
        };
        Ok(Tabulator {
            family: *self,
            max_index,
            weights: mode_weights(self.weight(), max_index)?,
            table,
        })
    }

    pub fn s(&self, idx: &[usize]) -> Result<f64> {
        self.check_tuple(idx)?;
        self.tabulate(*idx.iter().max().unwrap())?.s(idx)
    }

    pub fn c(&self, idx: &[usize]) -> Result<f64> {
        self.check_tuple(idx)?;
        self.tabulate(*idx.iter().max().unwrap())?.c(idx)
    }

    /// `S` in exact rational arithmetic, for the closed-form families whose
    /// values are rational.
    pub fn exact_s(&self, idx: &[usize]) -> Option<BigRational> {
        if idx.len() != self.arity().width() {
            return None;
        }
        match self.kind {
            FamilyKind::CubicConformal => {
                Some(BigRational::from_integer(BigInt::from(cubic_conformal_s(idx) as i64)))
            }
            FamilyKind::CubicSzego => Some(BigRational::one()),
            FamilyKind::QuinticInversePair => {
                let s = BigInt::from((idx[0] + idx[1] + idx[2]) as u64);
                let one = BigInt::one();
                let two = BigInt::from(2);
                Some(BigRational::new(one, (&s + 1) * (s + two)))
            }
            FamilyKind::QuinticMultinomial => {
                let s = idx[0] + idx[1] + idx[2];
                let num = factorial_big(s);
                let mut den = BigInt::from(3).pow(s as u32);
                for &a in idx {
                    den *= factorial_big(a);
                }
                Some(BigRational::new(num, den))
            }
            _ => None,
        }
    }

    /// Product-integral table in the family's native normalization.
    fn native_product_table(&self, max_index: usize) -> Result<ProductTable> {
        match self.kind {
            FamilyKind::QuinticSine => sine_table(6, max_index, 8.0 / PI, None),
            FamilyKind::QuinticHermite => hermite_table(max_index),
            FamilyKind::QuinticLegendre => legendre_product_table(max_index),
            _ => Err(Error::InvalidArgument(format!(
                "{} has no product-integral form",
                self.name()
            ))),
        }
    }

    /// The separable form of the `C` coefficients for indices `<= cutoff`.
    pub fn c_structure(&self, cutoff: usize) -> Result<CStructure> {
        let group = self.arity().group();
        let max_shell = group * cutoff;
        let f = mode_weights(self.weight(), cutoff)?;
        let factorized = |mode: Vec<f64>, shell: Vec<f64>| -> Result<CStructure> {
            if mode.iter().chain(&shell).any(|v| !v.is_finite()) {
                return Err(overflow(format!("{} separable form", self.name())));
            }
            Ok(CStructure::Factorized(FactorizedForm { mode, shell }))
        };
        match self.kind {
            FamilyKind::CubicSzego => factorized(vec![1.0; cutoff + 1], vec![1.0; max_shell + 1]),
            FamilyKind::QuinticInversePair => factorized(
                vec![1.0; cutoff + 1],
                (0..=max_shell)
                    .map(|s| 1.0 / ((s as f64 + 1.0) * (s as f64 + 2.0)))
                    .collect(),
            ),
            FamilyKind::QuinticGammaRatio { delta } => {
                // S = Γ(δ)⁶/Γ(3δ) ∏ (δ)_a/a! · s!/(3δ)_s and f_a² = (δ)_a/a!
                let k0 = gamma_prefactor(delta)?;
                let mut shell = Vec::with_capacity(max_shell + 1);
                let mut h = k0;
                shell.push(h);
                for j in 0..max_shell {
                    h *= (j as f64 + 1.0) / (3.0 * delta + j as f64);
                    shell.push(h);
                }
                factorized(f.clone(), shell)
            }
            FamilyKind::QuinticMultinomial => {
                let mut shell = Vec::with_capacity(max_shell + 1);
                let mut h = 1.0;
                shell.push(h);
                for j in 1..=max_shell {
                    h *= j as f64 / 3.0;
                    shell.push(h);
                }
                factorized(f.clone(), shell)
            }
            FamilyKind::CubicConformal => Ok(CStructure::ProductIntegral(sine_table(
                4,
                cutoff,
                2.0 / PI,
                Some(&f),
            )?)),
            FamilyKind::QuinticSine => Ok(CStructure::ProductIntegral(sine_table(
                6,
                cutoff,
                8.0 / PI,
                Some(&f),
            )?)),
            FamilyKind::QuinticHermite => Ok(CStructure::ProductIntegral(hermite_table(cutoff)?)),
            FamilyKind::QuinticLegendre => {
                Ok(CStructure::ProductIntegral(legendre_product_table(cutoff)?))
            }
        }
    }
}

/// Fast evaluator of one family for indices up to a fixed bound.
#[derive(Debug, Clone)]
pub struct Tabulator {
    family: CoefficientFamily,
    max_index: usize,
    weights: Vec<f64>,
    table: Option<ProductTable>,
}

impl Tabulator {
    pub fn family(&self) -> &CoefficientFamily {
        &self.family
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    fn check(&self, idx: &[usize]) -> Result<()> {
        self.family.check_tuple(idx)?;
        if let Some(&a) = idx.iter().find(|&&a| a > self.max_index) {
            return Err(Error::InvalidArgument(format!(
                "index {a} exceeds tabulated bound {}",
                self.max_index
            )));
        }
        Ok(())
    }

    fn weight_product(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&a| self.weights[a]).product()
    }

    /// Value in the family's native normalization.
    pub fn native(&self, idx: &[usize]) -> Result<f64> {
        self.check(idx)?;
        let v = match self.family.kind {
            FamilyKind::CubicConformal => cubic_conformal_s(idx) as f64,
            FamilyKind::CubicSzego => 1.0,
            FamilyKind::QuinticInversePair => quintic_inverse_pair_s(idx),
            FamilyKind::QuinticGammaRatio { delta } => quintic_gamma_ratio_s(idx, delta)?,
            FamilyKind::QuinticMultinomial => quintic_multinomial_s(idx)?,
            FamilyKind::QuinticSine | FamilyKind::QuinticHermite | FamilyKind::QuinticLegendre => {
                self.table.as_ref().expect("product table").eval(idx)
            }
        };
        if !v.is_finite() {
            return Err(overflow(format!("{} at {idx:?}", self.family.name())));
        }
        Ok(v)
    }

    pub fn s(&self, idx: &[usize]) -> Result<f64> {
        let v = self.native(idx)?;
        Ok(match self.family.native() {
            Normalization::SForm => v,
            Normalization::CForm => v * self.weight_product(idx),
        })
    }

    pub fn c(&self, idx: &[usize]) -> Result<f64> {
        let v = self.native(idx)?;
        let c = match self.family.native() {
            Normalization::CForm => v,
            Normalization::SForm => v / self.weight_product(idx),
        };
        if !c.is_finite() {
            return Err(overflow(format!("C of {} at {idx:?}", self.family.name())));
        }
        Ok(c)
    }
}

/// Convert an `S` value at `idx` to `C`.
pub fn to_c(family: &CoefficientFamily, idx: &[usize], s: f64) -> Result<f64> {
    let max = *idx.iter().max().unwrap_or(&0);
    let f = mode_weights(family.weight(), max)?;
    Ok(s / idx.iter().map(|&a| f[a]).product::<f64>())
}

/// Convert a `C` value at `idx` to `S`.
pub fn to_s(family: &CoefficientFamily, idx: &[usize], c: f64) -> Result<f64> {
    let max = *idx.iter().max().unwrap_or(&0);
    let f = mode_weights(family.weight(), max)?;
    Ok(c * idx.iter().map(|&a| f[a]).product::<f64>())
}

/// `C = ∏_a mode[a] · shell[bra sum]`.
#[derive(Debug, Clone)]
pub struct FactorizedForm {
    pub mode: Vec<f64>,
    pub shell: Vec<f64>,
}

/// `C = Σ_q weights[q] ∏_a basis[a][q]`.
#[derive(Debug, Clone)]
pub struct ProductTable {
    pub weights: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl ProductTable {
    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn eval(&self, idx: &[usize]) -> f64 {
        let rows: Vec<&[f64]> = idx.iter().map(|&a| self.basis[a].as_slice()).collect();
        (0..self.weights.len())
            .map(|q| self.weights[q] * rows.iter().map(|r| r[q]).product::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone)]
pub enum CStructure {
    Factorized(FactorizedForm),
    ProductIntegral(ProductTable),
}

impl CStructure {
    pub fn eval(&self, idx: &[usize]) -> f64 {
        match self {
            CStructure::Factorized(f) => {
                let bra: usize = idx[..idx.len() / 2].iter().sum();
                idx.iter().map(|&a| f.mode[a]).product::<f64>() * f.shell[bra]
            }
            CStructure::ProductIntegral(t) => t.eval(idx),
        }
    }
}

/// `prefactor · ½ ∫₀^{2π} sin^{r-2}x ∏ U_{n_a}(cos x) dx`, optionally with
/// each basis row divided by a mode weight.
fn sine_table(
    width: usize,
    max_index: usize,
    prefactor: f64,
    divide_by: Option<&[f64]>,
) -> Result<ProductTable> {
    let points = width * (max_index + 1) + 1;
    let rule = periodic_trapezoid(points)?;
    let power = width as i32 - 2;
    let weights = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| 0.5 * prefactor * w * x.sin().powi(power))
        .collect();
    let mut basis = vec![Vec::with_capacity(points); max_index + 1];
    for &x in &rule.nodes {
        for (a, u) in chebyshev_u_table(max_index, x.cos()).into_iter().enumerate() {
            basis[a].push(match divide_by {
                Some(f) => u / f[a],
                None => u,
            });
        }
    }
    Ok(ProductTable { weights, basis })
}

/// `∫ e^{-3x²} ∏ h_a(x) dx` with `h_a = H_a/√(2^a a!)`; for resonant tuples
/// this equals `∫ e^{-3x²} ∏ H_a / (2^{n+m+i} √(∏ a!))`.
fn hermite_table(max_index: usize) -> Result<ProductTable> {
    let rule = gauss_hermite_scaled(gauss_order_for_degree(6 * max_index))?;
    let mut basis = vec![Vec::with_capacity(rule.order()); max_index + 1];
    for &x in &rule.nodes {
        for (a, h) in hermite_scaled_table(max_index, x).into_iter().enumerate() {
            if !h.is_finite() {
                return Err(overflow(format!("scaled Hermite h_{a}({x})")));
            }
            basis[a].push(h);
        }
    }
    Ok(ProductTable {
        weights: rule.weights.clone(),
        basis,
    })
}

fn legendre_product_table(max_index: usize) -> Result<ProductTable> {
    let rule = gauss_legendre(gauss_order_for_degree(6 * max_index))?;
    let mut basis = vec![Vec::with_capacity(rule.order()); max_index + 1];
    for &x in &rule.nodes {
        for (a, p) in legendre_table(max_index, x).into_iter().enumerate() {
            basis[a].push(p);
        }
    }
    Ok(ProductTable {
        weights: rule.weights.clone(),
        basis,
    })
}

fn gamma_prefactor(delta: f64) -> Result<f64> {
    use statrs::function::gamma::gamma;
    let v = gamma(delta).powi(6) / gamma(3.0 * delta);
    if !v.is_finite() || v <= 0.0 {
        return Err(overflow(format!("Γ(δ)⁶/Γ(3δ) at δ={delta}")));
    }
    Ok(v)
}

fn factorial_big(n: usize) -> BigInt {
    (1..=n as u64).fold(BigInt::one(), |acc, j| acc * j)
}

/// `min(n,m,k,l) + 1`.
pub fn cubic_conformal_s(idx: &[usize]) -> usize {
    idx.iter().copied().min().unwrap_or(0) + 1
}

/// Szegő coefficients, constant 1.
pub fn cubic_szego_s(_idx: &[usize]) -> f64 {
    1.0
}

/// `1/((n+m+i+1)(n+m+i+2))`.
pub fn quintic_inverse_pair_s(idx: &[usize]) -> f64 {
    let s = (idx[0] + idx[1] + idx[2]) as f64;
    1.0 / ((s + 1.0) * (s + 2.0))
}

/// `∏_a Γ(a+δ)/Γ(a+1) · Γ(s+1)/Γ(s+3δ)` with `s = n+m+i`, written as
/// `Γ(δ)⁶/Γ(3δ) · ∏_a (δ)_a/a! · s!/(3δ)_s`.
pub fn quintic_gamma_ratio_s(idx: &[usize], delta: f64) -> Result<f64> {
    let mut v = gamma_prefactor(delta)?;
    for &a in idx {
        for j in 0..a {
            v *= (delta + j as f64) / (j as f64 + 1.0);
        }
    }
    let s = idx[0] + idx[1] + idx[2];
    for j in 0..s {
        v *= (j as f64 + 1.0) / (3.0 * delta + j as f64);
    }
    if !v.is_finite() {
        return Err(overflow(format!("gamma-ratio coefficient at {idx:?}")));
    }
    Ok(v)
}

/// `3^{-s} s!/(n!m!i!k!l!j!)` with `s = n+m+i`.
pub fn quintic_multinomial_s(idx: &[usize]) -> Result<f64> {
    let s = idx[0] + idx[1] + idx[2];
    let mut v = 1.0_f64;
    for j in 1..=s {
        v *= j as f64 / 3.0;
    }
    if !v.is_finite() {
        return Err(overflow(format!("s!/3^s at s={s}")));
    }
    for &a in idx {
        for j in 1..=a {
            v /= j as f64;
        }
    }
    Ok(v)
}

/// `∫ e^{-3x²} H_nH_mH_iH_kH_lH_j dx / (2^{n+m+i} √(n!m!i!k!l!j!))`.
pub fn quintic_hermite_c(idx: &[usize; 6]) -> Result<f64> {
    CoefficientFamily::new(FamilyKind::QuinticHermite)?.c(idx)
}

/// `∫₋₁¹ P_nP_mP_iP_kP_lP_j dx`.
pub fn quintic_legendre_c(idx: &[usize; 6]) -> Result<f64> {
    CoefficientFamily::new(FamilyKind::QuinticLegendre)?.c(idx)
}

/// `(8/π) ∫₀^π ∏ sin((n_a+1)x)/sin²x dx`.
pub fn quintic_sine_s(idx: &[usize; 6]) -> Result<f64> {
    CoefficientFamily::new(FamilyKind::QuinticSine)?.s(idx)
}

/// The binomial-sum expression for the Legendre sextuple integral,
///
/// ```text
/// 1/(1+N) Σ_{j_1..j_6} (-1)^J ∏ binom(n_k, j_k)² / binom(N, J)
/// ```
///
/// with `N = Σ n_k`, `J = Σ j_k`, evaluated exactly. The six-fold sum is
/// grouped by `J`: the number of ways to reach each `J`, weighted by the
/// squared binomials, is the coefficient of `x^J` in
/// `∏_k Σ_j binom(n_k, j)² x^j`.
pub fn quintic_legendre_combinatorial(idx: &[usize; 6]) -> BigRational {
    let total: usize = idx.iter().sum();
    let mut poly = vec![BigInt::one()];
    for &n in idx {
        let row = binomial_row(n);
        let mut next = vec![BigInt::zero(); poly.len() + n];
        for (i, a) in poly.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                next[i + j] += a * b * b;
            }
        }
        poly = next;
    }
    let big_row = binomial_row(total);
    let mut sum = BigRational::zero();
    for (j, c) in poly.iter().enumerate() {
        let term = BigRational::new(c.clone(), big_row[j].clone());
        if j % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum / BigRational::from_integer(BigInt::from(total as u64 + 1))
}

pub fn quintic_legendre_combinatorial_f64(idx: &[usize; 6]) -> f64 {
    rational_to_f64(&quintic_legendre_combinatorial(idx))
}

fn binomial_row(n: usize) -> Vec<BigInt> {
    let mut row = vec![BigInt::one()];
    for k in 0..n {
        let next = &row[k] * BigInt::from((n - k) as u64) / BigInt::from(k as u64 + 1);
        row.push(next);
    }
    row
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Canonical representative of a tuple under the coupling symmetries:
/// each group sorted ascending, and the lexicographically smaller group
/// first.
pub fn canonical_tuple(idx: &[usize]) -> Vec<usize> {
    let half = idx.len() / 2;
    let mut bra = idx[..half].to_vec();
    let mut ket = idx[half..].to_vec();
    bra.sort_unstable();
    ket.sort_unstable();
    if ket < bra {
        std::mem::swap(&mut bra, &mut ket);
    }
    bra.extend(ket);
    bra
}

/// Number of distinct orderings of a multiset.
pub fn distinct_permutations(group: &[usize]) -> u64 {
    let mut sorted = group.to_vec();
    sorted.sort_unstable();
    let mut count = (1..=sorted.len() as u64).product::<u64>();
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
            count /= run;
        } else {
            run = 1;
        }
    }
    count
}

/// Number of distinct ordered tuples in the symmetry orbit of a tuple.
pub fn orbit_size(idx: &[usize]) -> u64 {
    let half = idx.len() / 2;
    let (bra, ket) = idx.split_at(half);
    let mut b = bra.to_vec();
    let mut k = ket.to_vec();
    b.sort_unstable();
    k.sort_unstable();
    let swap = if b == k { 1 } else { 2 };
    distinct_permutations(bra) * distinct_permutations(ket) * swap
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fam(name: &str) -> CoefficientFamily {
        CoefficientFamily::from_name(name, None).unwrap()
    }

    #[test]
    fn conformal_values() {
        let f = fam("cubic_conformal");
        assert_eq!(f.s(&[1, 2, 0, 3]).unwrap(), 1.0);
        assert_eq!(f.s(&[2, 2, 2, 2]).unwrap(), 3.0);
        assert_eq!(f.s(&[0, 0, 0, 0]).unwrap(), 1.0);
        assert_eq!(f.c(&[0, 0, 0, 0]).unwrap(), 1.0);
        assert_relative_eq!(f.c(&[1, 1, 1, 1]).unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn szego_is_constant() {
        let f = fam("cubic_szego");
        for idx in [[0, 0, 0, 0], [3, 1, 2, 2], [5, 0, 4, 1]] {
            assert_eq!(f.s(&idx).unwrap(), 1.0);
            assert_eq!(f.c(&idx).unwrap(), 1.0);
        }
        assert!(!f.in_solvable_class());
    }

    #[test]
    fn inverse_pair_values() {
        let f = fam("quintic_inverse_pair");
        assert_eq!(f.s(&[0; 6]).unwrap(), 0.5);
        assert_relative_eq!(f.s(&[1, 0, 0, 0, 0, 0]).unwrap(), 1.0 / 6.0, max_relative = 1e-15);
        assert_eq!(f.s(&[2, 1, 0, 3, 0, 0]).unwrap(), f.s(&[0, 2, 1, 0, 3, 0]).unwrap());
    }

    #[test]
    fn gamma_ratio_reduces_to_inverse_pair_at_delta_one() {
        let g = CoefficientFamily::from_name("quintic_gamma_ratio", Some(1.0)).unwrap();
        let inv = fam("quintic_inverse_pair");
        let tg = g.tabulate(12).unwrap();
        let ti = inv.tabulate(12).unwrap();
        for_each_resonant_sextet(12, |idx| {
            let a = tg.s(idx).unwrap();
            let b = ti.s(idx).unwrap();
            assert!((a - b).abs() <= 1e-14 * b, "{idx:?}: {a} vs {b}");
        });
    }

    #[test]
    fn gamma_ratio_origin_value() {
        use statrs::function::gamma::gamma;
        for delta in [0.5, 1.0, 2.5] {
            let g = CoefficientFamily::from_name("quintic_gamma_ratio", Some(delta)).unwrap();
            let expected = gamma(delta).powi(6) / gamma(3.0 * delta);
            assert_relative_eq!(g.s(&[0; 6]).unwrap(), expected, max_relative = 1e-14);
            let a = g.s(&[2, 1, 0, 1, 1, 1]).unwrap();
            let b = g.s(&[1, 1, 1, 2, 1, 0]).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        assert!(CoefficientFamily::from_name("quintic_gamma_ratio", Some(-1.0)).is_err());
    }

    #[test]
    fn sine_family_values() {
        let f = fam("quintic_sine");
        assert_relative_eq!(f.s(&[0; 6]).unwrap(), 3.0, max_relative = 1e-14);
        assert!(f.s(&[1, 0, 0, 0, 0, 0]).unwrap().abs() < 1e-13);
        assert!(f.s(&[2, 1, 0, 0, 2, 0]).unwrap().abs() < 1e-13);
    }

    #[test]
    fn multinomial_values() {
        let f = fam("quintic_multinomial");
        assert_eq!(f.s(&[0; 6]).unwrap(), 1.0);
        assert_relative_eq!(f.s(&[1, 0, 0, 1, 0, 0]).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(
            f.exact_s(&[1, 0, 0, 1, 0, 0]).unwrap(),
            BigRational::new(BigInt::from(1), BigInt::from(3))
        );
        assert_relative_eq!(
            f.s(&[2, 1, 0, 0, 3, 0]).unwrap(),
            f.s(&[0, 1, 2, 3, 0, 0]).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn hermite_values() {
        let c0 = (PI / 3.0).sqrt();
        assert_relative_eq!(quintic_hermite_c(&[0; 6]).unwrap(), c0, max_relative = 1e-14);
        assert_relative_eq!(
            quintic_hermite_c(&[1, 0, 0, 1, 0, 0]).unwrap(),
            c0 / 3.0,
            max_relative = 1e-14
        );
        assert!(quintic_hermite_c(&[1, 0, 0, 0, 0, 0]).unwrap().abs() < 1e-15);
        // S = C / √(∏ a!)
        let f = fam("quintic_hermite");
        assert_relative_eq!(f.s(&[2, 0, 0, 1, 1, 0]).unwrap(), f.c(&[2, 0, 0, 1, 1, 0]).unwrap() / 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn hermite_matches_unscaled_formula() {
        // independent route: plain H_n with the 2^{n+m+i} √(∏ a!) prefactor
        use crate::special_functions::hermite_eval;
        let idx = [3usize, 2, 1, 2, 2, 2];
        let rule = gauss_hermite_scaled(gauss_order_for_degree(12)).unwrap();
        let integral = rule.integrate(|x| idx.iter().map(|&n| hermite_eval(n, x).unwrap()).product());
        let fact: f64 = idx.iter().map(|&a| (1..=a).map(|j| j as f64).product::<f64>()).product();
        let expected = integral / (2f64.powi(6) * fact.sqrt());
        assert_relative_eq!(quintic_hermite_c(&idx).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn legendre_values() {
        assert_relative_eq!(quintic_legendre_c(&[0; 6]).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(quintic_legendre_c(&[1, 1, 0, 0, 0, 0]).unwrap(), 2.0 / 3.0, max_relative = 1e-14);
        assert!(quintic_legendre_c(&[1, 0, 0, 0, 0, 0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn combinatorial_values() {
        assert_eq!(quintic_legendre_combinatorial(&[0; 6]), BigRational::one());
        assert_eq!(
            quintic_legendre_combinatorial(&[1, 1, 0, 0, 0, 0]),
            BigRational::new(BigInt::from(1), BigInt::from(3))
        );
    }

    #[test]
    fn combinatorial_matches_brute_force_sum() {
        // literal six-fold sum over (j_1..j_6)
        fn brute(idx: &[usize; 6]) -> BigRational {
            let total: usize = idx.iter().sum();
            let row = |n: usize| binomial_row(n);
            let rows: Vec<Vec<BigInt>> = idx.iter().map(|&n| row(n)).collect();
            let big = row(total);
            let mut sum = BigRational::zero();
            let mut j = [0usize; 6];
            loop {
                let jt: usize = j.iter().sum();
                let mut num = BigInt::one();
                for k in 0..6 {
                    num *= &rows[k][j[k]] * &rows[k][j[k]];
                }
                let term = BigRational::new(num, big[jt].clone());
                if jt % 2 == 0 { sum += term } else { sum -= term }
                let mut k = 0;
                loop {
                    if k == 6 {
                        return sum / BigRational::from_integer(BigInt::from(total as u64 + 1));
                    }
                    j[k] += 1;
                    if j[k] <= idx[k] {
                        break;
                    }
                    j[k] = 0;
                    k += 1;
                }
            }
        }
        for idx in [[2, 1, 1, 0, 0, 0], [2, 2, 1, 1, 0, 0], [3, 1, 2, 0, 1, 1]] {
            assert_eq!(quintic_legendre_combinatorial(&idx), brute(&idx));
        }
    }

    #[test]
    fn s_and_c_round_trip() {
        for name in FAMILY_NAMES {
            let f = fam(name);
            let idx: Vec<usize> = if f.arity() == Arity::Cubic {
                vec![2, 3, 1, 4]
            } else {
                vec![2, 1, 3, 0, 4, 2]
            };
            let s = f.s(&idx).unwrap();
            let c = f.c(&idx).unwrap();
            assert_relative_eq!(to_c(&f, &idx, s).unwrap(), c, max_relative = 1e-13);
            assert_relative_eq!(to_s(&f, &idx, to_c(&f, &idx, s).unwrap()).unwrap(), s, max_relative = 1e-13);
        }
    }

    #[test]
    fn structures_match_tabulated_c() {
        for name in FAMILY_NAMES {
            let f = fam(name);
            let k = 5;
            let tab = f.tabulate(k).unwrap();
            let st = f.c_structure(k).unwrap();
            let w = f.arity().width();
            let mut idx = vec![0usize; w];
            loop {
                let half = w / 2;
                if idx[..half].iter().sum::<usize>() == idx[half..].iter().sum::<usize>() {
                    let a = tab.c(&idx).unwrap();
                    let b = st.eval(&idx);
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-3), "{name} {idx:?}: {a} vs {b}");
                }
                let mut p = 0;
                while p < w {
                    idx[p] += 1;
                    if idx[p] <= k {
                        break;
                    }
                    idx[p] = 0;
                    p += 1;
                }
                if p == w {
                    break;
                }
            }
        }
    }

    #[test]
    fn canonical_and_orbits() {
        assert_eq!(canonical_tuple(&[3, 1, 0, 2]), vec![0, 2, 1, 3]);
        assert_eq!(canonical_tuple(&[0, 2, 3, 1]), vec![0, 2, 1, 3]);
        assert_eq!(orbit_size(&[0, 0, 0, 0]), 1);
        assert_eq!(orbit_size(&[1, 0, 0, 1]), 4);
        assert_eq!(orbit_size(&[1, 1, 2, 0]), 4);
        assert_eq!(orbit_size(&[0, 1, 2, 3, 2, 1]), 6 * 6 * 2);
        assert_eq!(distinct_permutations(&[1, 1, 2]), 3);
    }

    #[test]
    fn unknown_family_rejected() {
        assert_eq!(
            CoefficientFamily::from_name("nope", None),
            Err(Error::UnknownFamily("nope".into()))
        );
        assert!(fam("quintic_hermite").s(&[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn rational_conversion() {
        let r = BigRational::new(BigInt::from(-7), BigInt::from(3));
        assert_relative_eq!(rational_to_f64(&r), -7.0 / 3.0, max_relative = 1e-15);
        let huge = BigRational::new(factorial_big(200), factorial_big(199));
        assert_relative_eq!(rational_to_f64(&huge), 200.0, max_relative = 1e-15);
    }

    fn for_each_resonant_sextet(max_total: usize, mut f: impl FnMut(&[usize])) {
        for s in 0..=max_total {
            for n in 0..=s {
                for m in 0..=s - n {
                    let i = s - n - m;
                    for k in 0..=s {
                        for l in 0..=s - k {
                            let j = s - k - l;
                            f(&[n, m, i, k, l, j]);
                        }
                    }
                }
            }
        }
    }
}
