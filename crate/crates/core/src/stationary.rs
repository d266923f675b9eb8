//! Closed-form stationary states and their verification.
//!
//! A stationary state is `α_n(t) = e^{-iλt} A_n`, i.e. `F(A) = λA`. The
//! bifurcating families are built in Taylor-coefficient space:
//!
//! * mode 0: `β_n = pⁿ`;
//! * mode `N`: `β_n = t_n / ((G)_n/n!)` where `t_n` are the Taylor
//!   coefficients of `(p̄ − z)^N / (1 − pz)^{N+G}`. The overall constant
//!   `Γ(G)` of the fractional operator is dropped, so amplitudes are
//!   unnormalized; rescaling by `c` rescales `λ` by `|c|²` (cubic) or
//!   `|c|⁴` (quintic);
//! * `G = ∞`: magnetic translations of single modes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine::{conserved_set, Dynamics, Trajectory};
use crate::error::{Error, Result};
use crate::mode_space::{
    beta_to_alpha, binomial_series, fractional_diagonal, series_product, ModeVector, PowerSeries,
    WeightParameter,
};

/// Output of [`verify_stationary`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// `Re(Σ ᾱ_n F_n / Σ|α_n|²)` over the window.
    pub lambda: f64,
    /// Imaginary part of the same ratio; zero for any state, since
    /// `Σ ᾱF` is real, so it only flags numerical trouble.
    pub lambda_imag: f64,
    /// `‖F − λα‖/‖α‖` over the window.
    pub residual: f64,
    /// Highest mode included.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryState {
    pub alpha: Vec<Complex64>,
    /// Mode the family bifurcates from at `p = 0`.
    pub mode: usize,
    pub p: Complex64,
    pub g: WeightParameter,
    pub verification: Option<Verification>,
}

impl StationaryState {
    pub fn amplitudes(&self) -> Result<ModeVector> {
        ModeVector::new(self.alpha.clone())
    }

    pub fn verify(&mut self, system: &dyn Dynamics, window: usize) -> Result<Verification> {
        let v = verify_stationary(system, &self.amplitudes()?, window)?;
        self.verification = Some(v);
        Ok(v)
    }

    /// Single-row CSV in the trajectory format.
    pub fn to_csv(&self, system: &dyn Dynamics) -> Result<String> {
        let a = self.amplitudes()?;
        Ok(Trajectory {
            times: vec![0.0],
            conserved: vec![conserved_set(&a, self.g, system)?],
            states: vec![a],
        }
        .to_csv())
    }
}

fn check_disc(p: Complex64) -> Result<()> {
    if !(p.norm() < 1.0) {
        return Err(Error::InvalidArgument(format!("need |p| < 1, got |p| = {}", p.norm())));
    }
    Ok(())
}

/// `α_n = f_n pⁿ`.
pub fn mode0_state(g: WeightParameter, p: Complex64, cutoff: usize) -> Result<StationaryState> {
    check_disc(p)?;
    let beta = ModeVector::new(binomial_series(1.0, p, cutoff)?.into_coefficients())?;
    Ok(StationaryState {
        alpha: beta_to_alpha(&beta, g)?.into_vec(),
        mode: 0,
        p,
        g,
        verification: None,
    })
}

/// Taylor coefficients `t_n` of `(p̄ − z)^N / (1 − pz)^{N+G}`.
pub fn mode_n_target(g: f64, p: Complex64, n: usize, cutoff: usize) -> Result<PowerSeries> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for _ in 0..n {
        // multiply by (p̄ − z)
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (j, c) in poly.iter().enumerate() {
            next[j] += c * p.conj();
            next[j + 1] -= c;
        }
        poly = next;
    }
    let num = PowerSeries::from_polynomial(&poly, cutoff)?;
    series_product(&num, &binomial_series(n as f64 + g, p, cutoff)?)
}

/// `β_n = t_n / ((G)_n/n!)`, `α_n = f_n β_n`.
pub fn mode_n_state(g: f64, p: Complex64, n: usize, cutoff: usize) -> Result<StationaryState> {
    check_disc(p)?;
    let gw = WeightParameter::finite(g)?;
    let t = mode_n_target(g, p, n, cutoff)?;
    let beta = t
        .coefficients()
        .iter()
        .enumerate()
        .map(|(j, &c)| Ok(c / fractional_diagonal(g, j)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(StationaryState {
        alpha: beta_to_alpha(&ModeVector::new(beta)?, gw)?.into_vec(),
        mode: n,
        p,
        g: gw,
        verification: None,
    })
}

/// Coefficients of `u(z) = Σ_{k≤N} c_k / (1 − pz)^{k+1}` reproducing the
/// mode-`N` series `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialFractions {
    pub coefficients: Vec<Complex64>,
    /// `max_n |Σ c_k (k+1)_n/n! pⁿ − β_n| / max_n |β_n|` up to the cutoff.
    pub mismatch: f64,
}

impl PartialFractions {
    /// Taylor coefficients of `Σ c_k (1 − pz)^{-(k+1)}`.
    pub fn series(&self, p: Complex64, cutoff: usize) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); cutoff + 1];
        for (k, c) in self.coefficients.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(binomial_series(k as f64 + 1.0, p, cutoff)?.coefficients()) {
                *o += c * b;
            }
        }
        Ok(out)
    }
}

/// Smallest `|p|` accepted by [`mode_n_partial_fractions`]; the basis
/// `(1 − pz)^{-(k+1)}` collapses as `p → 0`.
pub const MIN_PARTIAL_FRACTION_P: f64 = 1e-3;

/// Solves the `(N+1)×(N+1)` system matching the first `N+1` coefficients,
/// then measures agreement up to `cutoff`.
pub fn mode_n_partial_fractions(g: f64, p: Complex64, n: usize, cutoff: usize) -> Result<PartialFractions> {
    check_disc(p)?;
    if p.norm() < MIN_PARTIAL_FRACTION_P {
        return Err(Error::Degenerate(format!(
            "partial fractions need |p| >= {MIN_PARTIAL_FRACTION_P}, got {}",
            p.norm()
        )));
    }
    let cutoff = cutoff.max(n);
    let target = mode_n_state(g, p, n, cutoff)?;
    let beta: Vec<Complex64> = crate::mode_space::alpha_to_beta(&target.amplitudes()?, target.g)?.into_vec();
    let columns = (0..=n)
        .map(|k| binomial_series(k as f64 + 1.0, p, n).map(PowerSeries::into_coefficients))
        .collect::<Result<Vec<_>>>()?;
    let m = DMatrix::from_fn(n + 1, n + 1, |row, col| columns[col][row]);
    let rhs = DVector::from_iterator(n + 1, beta[..=n].iter().copied());
    let c = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("partial-fraction system at N={n}, p={p}")))?;
    let mut pf = PartialFractions {
        coefficients: c.iter().copied().collect(),
        mismatch: 0.0,
    };
    let recon = pf.series(p, cutoff)?;
    let scale = beta.iter().map(|b| b.norm()).fold(0.0, f64::max);
    pf.mismatch = recon
        .iter()
        .zip(&beta)
        .map(|(r, b)| (r - b).norm())
        .fold(0.0, f64::max)
        / scale;
    Ok(pf)
}

fn sqrt_binomial(n: usize, k: usize) -> f64 {
    // √(n!/(k!(n−k)!)) as a running product of √ ratios
    let k = k.min(n - k);
    (0..k)
        .map(|j| ((n - j) as f64 / (j + 1) as f64).sqrt())
        .product()
}

/// `u(z) ↦ u(z − p̄) e^{pz − |p|²/2}` on `u = Σ α_n zⁿ/√n!`, truncated at
/// the input cutoff.
///
/// Both factors are applied in the orthonormal basis `zⁿ/√n!`:
///
/// ```text
/// shift:    d_j = Σ_{n≥j} α_n √C(n,j) (−p̄)^{n−j} / √((n−j)!)
/// multiply: α'_m = e^{−|p|²/2} Σ_{j≤m} d_j √C(m,j) p^{m−j} / √((m−j)!)
/// ```
pub fn magnetic_translate(alpha: &ModeVector, p: Complex64) -> Result<ModeVector> {
    let k = alpha.cutoff();
    // powers x^j/√(j!) for both displacement directions
    let scaled_powers = |x: Complex64| {
        let mut v = Vec::with_capacity(k + 1);
        let mut t = Complex64::new(1.0, 0.0);
        v.push(t);
        for j in 1..=k {
            t *= x / (j as f64).sqrt();
            v.push(t);
        }
        v
    };
    let shift = scaled_powers(-p.conj());
    let mult = scaled_powers(p);
    let a = alpha.as_slice();
    let d: Vec<Complex64> = (0..=k)
        .map(|j| (j..=k).map(|n| a[n] * shift[n - j] * sqrt_binomial(n, j)).sum())
        .collect();
    let norm = (-0.5 * p.norm_sqr()).exp();
    let out = (0..=k)
        .map(|m| (0..=m).map(|j| d[j] * mult[m - j] * sqrt_binomial(m, j)).sum::<Complex64>() * norm)
        .collect();
    ModeVector::new(out)
}

/// Magnetic translation of the unit state on mode `n` (`G = ∞`).
pub fn translated_mode_state(n: usize, p: Complex64, cutoff: usize) -> Result<StationaryState> {
    let a = magnetic_translate(&ModeVector::unit(cutoff, n)?, p)?;
    Ok(StationaryState {
        alpha: a.into_vec(),
        mode: n,
        p,
        g: WeightParameter::Infinite,
        verification: None,
    })
}

/// Fits `λ` and measures `‖F − λα‖/‖α‖` on modes `n <= window`.
pub fn verify_stationary(system: &dyn Dynamics, alpha: &ModeVector, window: usize) -> Result<Verification> {
    let f = system.rhs(alpha)?;
    let w = window.min(alpha.cutoff());
    let a = &alpha.as_slice()[..=w];
    let f = &f.as_slice()[..=w];
    let norm2: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(Error::Degenerate("zero state has no frequency".into()));
    }
    let ratio: Complex64 = a.iter().zip(f).map(|(x, y)| x.conj() * y).sum::<Complex64>() / norm2;
    let lambda = ratio.re;
    let res2: f64 = a.iter().zip(f).map(|(x, y)| (y - x * lambda).norm_sqr()).sum();
    Ok(Verification {
        lambda,
        lambda_imag: ratio.im,
        residual: (res2 / norm2).sqrt(),
        window: w,
    })
}

/// `λ = 1/(1 − |p|²)^G`.
pub fn lambda_mode0_closed_form(g: f64, p: Complex64) -> Result<f64> {
    check_disc(p)?;
    Ok((1.0 - p.norm_sqr()).powf(-g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::CouplingTensor;
    use crate::families::CoefficientFamily;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tensor(name: &str, k: usize) -> CouplingTensor {
        CouplingTensor::build(&CoefficientFamily::from_name(name, None).unwrap(), k).unwrap()
    }

    #[test]
    fn mode0_examples() {
        let s = mode0_state(WeightParameter::Finite(2.0), c(0.5, 0.0), 6).unwrap();
        assert_relative_eq!(s.alpha[2].re, 3f64.sqrt() * 0.25, epsilon = 1e-15);
        let z = mode0_state(WeightParameter::Finite(2.0), c(0.0, 0.0), 6).unwrap();
        assert_eq!(z.amplitudes().unwrap(), ModeVector::unit(6, 0).unwrap());
        let p = c(0.3, -0.2);
        let g1 = mode0_state(WeightParameter::Finite(1.0), p, 6).unwrap();
        for n in 0..=6 {
            assert!((g1.alpha[n] - p.powu(n as u32)).norm() < 1e-15);
        }
        assert!(mode0_state(WeightParameter::Finite(1.0), c(1.0, 0.0), 3).is_err());
    }

    #[test]
    fn mode_n_examples() {
        // p = 0: single mode N with sign (−1)^N
        let s = mode_n_state(2.0, c(0.0, 0.0), 3, 8).unwrap();
        for (n, a) in s.alpha.iter().enumerate() {
            if n == 3 {
                assert!(a.re < 0.0 && a.im == 0.0);
            } else {
                assert_eq!(a.norm(), 0.0);
            }
        }
        // N = 0 reduces to mode 0
        let p = c(0.4, 0.1);
        let a = mode_n_state(1.7, p, 0, 10).unwrap();
        let b = mode0_state(WeightParameter::Finite(1.7), p, 10).unwrap();
        for n in 0..=10 {
            assert!((a.alpha[n] - b.alpha[n]).norm() < 1e-14);
        }
        // N = 1, G = 1: t_1 = 2|p|² − 1
        let s = mode_n_state(1.0, p, 1, 4).unwrap();
        assert_relative_eq!(s.alpha[1].re, 2.0 * p.norm_sqr() - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn partial_fractions_reconstruct() {
        let p = c(0.5, 0.0);
        let pf = mode_n_partial_fractions(1.0, p, 0, 10).unwrap();
        assert_relative_eq!(pf.coefficients[0].re, 1.0, epsilon = 1e-15);
        for g in [1.0, 2.0] {
            for n in 0..=4 {
                let pf = mode_n_partial_fractions(g, c(0.3, 0.2), n, 30).unwrap();
                assert!(pf.mismatch < 1e-11, "g={g} n={n} mismatch={}", pf.mismatch);
            }
        }
        assert!(matches!(
            mode_n_partial_fractions(1.0, c(1e-4, 0.0), 2, 10),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn translation_examples() {
        let p = c(0.6, -0.3);
        let id = magnetic_translate(&ModeVector::unit(5, 2).unwrap(), c(0.0, 0.0)).unwrap();
        assert_eq!(id, ModeVector::unit(5, 2).unwrap());
        let s = translated_mode_state(0, p, 40).unwrap();
        let mut fact = 1.0;
        for n in 0..=40 {
            if n > 0 {
                fact *= n as f64;
            }
            let expected = (-0.5 * p.norm_sqr()).exp() * p.powu(n as u32) / fact.sqrt();
            assert!((s.alpha[n] - expected).norm() < 1e-15);
        }
        let norm: f64 = s.alpha.iter().map(|x| x.norm_sqr()).sum();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn verify_single_modes() {
        let t = tensor("cubic_conformal", 8);
        let mut a = ModeVector::zeros(8);
        a[3] = c(0.5, 0.0);
        let v = verify_stationary(&t, &a, 8).unwrap();
        assert_relative_eq!(v.lambda, t.get(&[3, 3, 3, 3]) * 0.25, epsilon = 1e-15);
        assert!(v.residual < 1e-15);
        let q = tensor("quintic_legendre", 3);
        let v = verify_stationary(&q, &ModeVector::unit(3, 0).unwrap(), 3).unwrap();
        assert_relative_eq!(v.lambda, 2.0, epsilon = 1e-14);
        assert!(verify_stationary(&t, &ModeVector::zeros(8), 8).is_err());
    }

    #[test]
    fn conformal_mode0_lambda() {
        let t = tensor("cubic_conformal", 48);
        let mut s = mode0_state(WeightParameter::Finite(2.0), c(0.5, 0.0), 48).unwrap();
        let v = s.verify(&t, 32).unwrap();
        assert_relative_eq!(v.lambda, 16.0 / 9.0, max_relative = 1e-8);
        assert!(v.residual < 1e-9);
        assert_relative_eq!(lambda_mode0_closed_form(1.0, c(0.6, 0.0)).unwrap(), 1.5625, epsilon = 1e-14);
        assert_eq!(lambda_mode0_closed_form(3.0, c(0.0, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn state_csv_has_one_row() {
        let t = tensor("cubic_conformal", 4);
        let s = mode0_state(WeightParameter::Finite(2.0), c(0.2, 0.0), 4).unwrap();
        assert_eq!(s.to_csv(&t).unwrap().lines().count(), 2);
    }
}
