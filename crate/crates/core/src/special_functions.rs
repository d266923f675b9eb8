//! Orthogonal polynomial recurrences and the quadrature rules used to
//! evaluate overlap integrals exactly.
//!
//! Gaussian rules are built Golub–Welsch style: eigenvalues of the Jacobi
//! matrix give the nodes, which are then polished by Newton steps on the
//! orthonormal recurrence; weights come from the Christoffel function
//! `w_i = 1 / Σ_k p̂_k(x_i)²`, which avoids the overflow of the classical
//! closed-form weight formulas at high order.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{overflow, Error, Result};

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite_eval(n: usize, x: f64) -> Result<f64> {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
        if !cur.is_finite() {
            return Err(overflow(format!("H_{n}({x})")));
        }
    }
    Ok(cur)
}

/// `H_0(x)..H_n(x)` scaled by `1/√(2^k k!)`.
///
/// `h_{k+1} = √(2/(k+1)) x h_k − √(k/(k+1)) h_{k−1}`.
pub fn hermite_scaled_table(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(2f64.sqrt() * x);
    for k in 1..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// Legendre polynomial `P_n(x)`.
pub fn legendre_eval(n: usize, x: f64) -> f64 {
    legendre_table(n, x)[n]
}

/// `P_0(x)..P_n(x)` via `(k+1)P_{k+1} = (2k+1)xP_k − kP_{k−1}`.
pub fn legendre_table(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(x);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// `P_n'(x)` via `P'_{k+1} = P'_{k−1} + (2k+1) P_k`.
pub fn legendre_derivative(n: usize, x: f64) -> f64 {
    let p = legendre_table(n, x);
    let mut d = vec![0.0; n + 1];
    for k in 1..=n {
        let prev2 = if k >= 2 { d[k - 2] } else { 0.0 };
        d[k] = prev2 + (2.0 * (k as f64 - 1.0) + 1.0) * p[k - 1];
    }
    d[n]
}

/// Chebyshev polynomials of the second kind `U_0(x)..U_n(x)`.
pub fn chebyshev_u_table(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(2.0 * x);
    for k in 1..n {
        out.push(2.0 * x * out[k] - out[k - 1]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuadratureKind {
    /// Weight 1 on `[-1, 1]`.
    GaussLegendre,
    /// Weight `e^{-3x²}` on the real line.
    GaussHermiteScaled,
    /// Uniform midpoint nodes on `[0, 2π)`.
    PeriodicTrapezoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: QuadratureKind,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Smallest Gauss order exact for polynomials of the given degree.
pub fn gauss_order_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

fn rule_cache() -> &'static Mutex<HashMap<(QuadratureKind, usize), Arc<QuadratureRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<(QuadratureKind, usize), Arc<QuadratureRule>>>> =
        OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached<F>(kind: QuadratureKind, order: usize, build: F) -> Result<Arc<QuadratureRule>>
where
    F: FnOnce() -> Result<QuadratureRule>,
{
    if let Some(rule) = rule_cache().lock().unwrap().get(&(kind, order)) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(build()?);
    rule_cache()
        .lock()
        .unwrap()
        .insert((kind, order), rule.clone());
    Ok(rule)
}

/// Orthonormal three-term recurrence with zero diagonal:
/// `b_{k+1} p̂_{k+1} = x p̂_k − b_k p̂_{k−1}`, `p̂_0 = 1/√μ₀`.
struct SymmetricRecurrence {
    /// `b_1..b_M`.
    off: Vec<f64>,
    mu0: f64,
}

impl SymmetricRecurrence {
    /// Returns `(p̂_M(x), p̂'_M(x), Σ_{k<M} p̂_k(x)²)`.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let m = self.off.len();
        let mut p_prev = 0.0;
        let mut p = 1.0 / self.mu0.sqrt();
        let mut d_prev = 0.0;
        let mut d = 0.0;
        let mut sum_sq = 0.0;
        for k in 0..m {
            sum_sq += p * p;
            let b_k = if k == 0 { 0.0 } else { self.off[k - 1] };
            let b_next = self.off[k];
            let p_next = (x * p - b_k * p_prev) / b_next;
            let d_next = (p + x * d - b_k * d_prev) / b_next;
            p_prev = p;
            p = p_next;
            d_prev = d;
            d = d_next;
        }
        (p, d, sum_sq)
    }

    fn rule(&self, kind: QuadratureKind) -> Result<QuadratureRule> {
        let m = self.off.len();
        let mut jacobi = DMatrix::<f64>::zeros(m, m);
        for k in 0..m.saturating_sub(1) {
            jacobi[(k, k + 1)] = self.off[k];
            jacobi[(k + 1, k)] = self.off[k];
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut weights = Vec::with_capacity(m);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (p, d, _) = self.eval(*x);
                if d == 0.0 || !p.is_finite() {
                    break;
                }
                let step = p / d;
                *x -= step;
                if step.abs() <= 1e-17 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, _, sum_sq) = self.eval(*x);
            let w = 1.0 / sum_sq;
            if !w.is_finite() || w <= 0.0 {
                return Err(overflow(format!("{kind:?} weight of order {m}")));
            }
            weights.push(w);
        }
        // symmetric weight functions: enforce exact mirror symmetry
        for i in 0..m / 2 {
            let j = m - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            nodes[i] = -x;
            nodes[j] = x;
            let w = 0.5 * (weights[i] + weights[j]);
            weights[i] = w;
            weights[j] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            kind,
        })
    }
}

/// Gauss–Legendre rule of the given order on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Result<Arc<QuadratureRule>> {
    if order == 0 {
        return Err(Error::InvalidArgument("quadrature order must be >= 1".into()));
    }
    cached(QuadratureKind::GaussLegendre, order, || {
        let off = (1..=order)
            .map(|k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            })
            .collect();
        SymmetricRecurrence { off, mu0: 2.0 }.rule(QuadratureKind::GaussLegendre)
    })
}

/// Gauss rule for `∫ f(x) e^{-3x²} dx`, from the `e^{-y²}` rule with
/// `x = y/√3`.
pub fn gauss_hermite_scaled(order: usize) -> Result<Arc<QuadratureRule>> {
    if order == 0 {
        return Err(Error::InvalidArgument("quadrature order must be >= 1".into()));
    }
    cached(QuadratureKind::GaussHermiteScaled, order, || {
        let off = (1..=order).map(|k| (k as f64 / 2.0).sqrt()).collect();
        let mut rule = SymmetricRecurrence {
            off,
            mu0: PI.sqrt(),
        }
        .rule(QuadratureKind::GaussHermiteScaled)?;
        let s = 3f64.sqrt();
        rule.nodes.iter_mut().for_each(|x| *x /= s);
        rule.weights.iter_mut().for_each(|w| *w /= s);
        Ok(rule)
    })
}

/// `L` midpoint nodes `2π(j+½)/L` with equal weights `2π/L`; exact for
/// trigonometric polynomials of degree `< L`.
pub fn periodic_trapezoid(points: usize) -> Result<Arc<QuadratureRule>> {
    if points == 0 {
        return Err(Error::InvalidArgument("need at least one node".into()));
    }
    cached(QuadratureKind::PeriodicTrapezoid, points, || {
        let h = 2.0 * PI / points as f64;
        Ok(QuadratureRule {
            nodes: (0..points).map(|j| h * (j as f64 + 0.5)).collect(),
            weights: vec![h; points],
            kind: QuadratureKind::PeriodicTrapezoid,
        })
    })
}

/// Node count that integrates `sin^{r-2}(x) ∏ U_{n_a}(cos x)` exactly.
pub fn sine_product_points(indices: &[usize]) -> usize {
    indices.iter().sum::<usize>() + indices.len() + 1
}

/// `∫₀^π ∏_a sin((n_a+1)x) / sin²x dx` for two or more indices.
///
/// The integrand equals `sin^{r-2}(x) ∏ U_{n_a}(cos x)`, an even
/// trigonometric polynomial, so the periodic rule on `[0, 2π)` is exact
/// once it has more nodes than the degree.
pub fn sine_product_integral(indices: &[usize]) -> Result<f64> {
    if indices.len() < 2 {
        return Err(Error::InvalidArgument(
            "sine product integral needs at least two indices".into(),
        ));
    }
    sine_product_integral_with(indices, sine_product_points(indices))
}

pub(crate) fn sine_product_integral_with(indices: &[usize], points: usize) -> Result<f64> {
    let rule = periodic_trapezoid(points)?;
    let max = *indices.iter().max().unwrap();
    let power = indices.len() as i32 - 2;
    let total = rule.integrate(|x| {
        let u = chebyshev_u_table(max, x.cos());
        x.sin().powi(power) * indices.iter().map(|&n| u[n]).product::<f64>()
    });
    Ok(0.5 * total)
}

/// `(8/π) ∫₀^π ∏_{a=1}^{6} sin((n_a+1)x) / sin²x dx`.
pub fn trig_product_integral(indices: &[usize; 6]) -> Result<f64> {
    Ok(8.0 / PI * sine_product_integral(indices)?)
}
