//! Finite-difference solvability conditions.
//!
//! Cubic (`n+m−1 = k+l`):
//!
//! ```text
//! (n−1+G)S_{n−1,m,k,l} + (m−1+G)S_{n,m−1,k,l} − (k+1)S_{n,m,k+1,l} − (l+1)S_{n,m,k,l+1} = 0
//! ```
//!
//! Quintic (`n+m+i = k+l+j+1`), with the three lowering coefficients
//! `(a−1+G)` replaced by 1 in the `G → ∞` case:
//!
//! ```text
//! Σ_{a∈{n,m,i}} (a−1+G) S_{…a−1…} − Σ_{b∈{k,l,j}} (b+1) S_{…b+1…} = 0
//! ```
//!
//! `S` at a negative index is zero. Families with rational closed forms are
//! checked in exact arithmetic; the rest in floating point, where a tuple
//! passes when `|LHS| <= tol · max|term|`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{rational_to_f64, Arity, CoefficientFamily, Tabulator};
use crate::mode_space::WeightParameter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionTag {
    CubicAodef,
    QuinticQuintid,
    QuinticIdinf,
}

impl ConditionTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionTag::CubicAodef => "cubic_AOdef",
            ConditionTag::QuinticQuintid => "quintic_quintid",
            ConditionTag::QuinticIdinf => "quintic_idinf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub family: String,
    pub condition: ConditionTag,
    pub g: WeightParameter,
    /// `"max_index"` (cubic, per-index bound) or `"max_total"` (quintic,
    /// bra-side index sum).
    pub bound_kind: String,
    pub bound: usize,
    pub tolerance: f64,
    pub exact: bool,
    pub tuples_checked: usize,
    pub failing_tuples: usize,
    pub max_abs_residual: f64,
    pub min_abs_residual: f64,
    /// Max over tuples of `|LHS| / max|term|`.
    pub max_scaled_residual: f64,
    pub worst_tuple: Vec<usize>,
    pub passed: bool,
}

impl IdentityReport {
    /// Line-oriented `key: value` summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("family: {}\n", self.family));
        s.push_str(&format!("condition: {}\n", self.condition.as_str()));
        s.push_str(&format!("G: {}\n", self.g));
        s.push_str(&format!("{}: {}\n", self.bound_kind, self.bound));
        s.push_str(&format!("arithmetic: {}\n", if self.exact { "exact" } else { "float" }));
        s.push_str(&format!("tolerance: {:.16e}\n", self.tolerance));
        s.push_str(&format!("tuples_checked: {}\n", self.tuples_checked));
        s.push_str(&format!("failing_tuples: {}\n", self.failing_tuples));
        s.push_str(&format!("max_abs_residual: {:.16e}\n", self.max_abs_residual));
        s.push_str(&format!("min_abs_residual: {:.16e}\n", self.min_abs_residual));
        s.push_str(&format!("max_scaled_residual: {:.16e}\n", self.max_scaled_residual));
        s.push_str(&format!("worst_tuple: {:?}\n", self.worst_tuple));
        s.push_str(&format!("result: {}\n", if self.passed { "PASS" } else { "FAIL" }));
        s
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// All `(n,m,k,l)` with every index `<= max_index` and `n+m−1 = k+l`, in
/// lexicographic order.
pub fn enumerate_cubic_offset_tuples(max_index: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for n in 0..=max_index {
        for m in 0..=max_index {
            if n + m == 0 {
                continue;
            }
            let t = n + m - 1;
            for k in 0..=max_index.min(t) {
                let l = t - k;
                if l <= max_index {
                    out.push([n, m, k, l]);
                }
            }
        }
    }
    out
}

/// All `(n,m,i,k,l,j)` with `n+m+i = k+l+j+1 <= max_total`, in
/// lexicographic order.
pub fn enumerate_quintic_offset_tuples(max_total: usize) -> Vec<[usize; 6]> {
    let mut out = Vec::new();
    for n in 0..=max_total {
        for m in 0..=max_total - n {
            for i in 0..=max_total - n - m {
                let s = n + m + i;
                if s == 0 {
                    continue;
                }
                let t = s - 1;
                for k in 0..=t {
                    for l in 0..=t - k {
                        out.push([n, m, i, k, l, t - k - l]);
                    }
                }
            }
        }
    }
    out
}

/// One signed term `coefficient · S(shifted tuple)` of the identity.
struct Term {
    coefficient: f64,
    tuple: Vec<i64>,
}

fn identity_terms(idx: &[usize], g: Option<f64>) -> Vec<Term> {
    let half = idx.len() / 2;
    let base: Vec<i64> = idx.iter().map(|&a| a as i64).collect();
    let mut terms = Vec::with_capacity(idx.len());
    for p in 0..half {
        let mut t = base.clone();
        t[p] -= 1;
        let coefficient = match g {
            Some(g) => base[p] as f64 - 1.0 + g,
            None => 1.0,
        };
        terms.push(Term { coefficient, tuple: t });
    }
    for p in half..idx.len() {
        let mut t = base.clone();
        t[p] += 1;
        terms.push(Term {
            coefficient: -(base[p] as f64 + 1.0),
            tuple: t,
        });
    }
    terms
}

fn to_indices(t: &[i64]) -> Option<Vec<usize>> {
    if t.iter().any(|&a| a < 0) {
        None
    } else {
        Some(t.iter().map(|&a| a as usize).collect())
    }
}

struct TupleOutcome {
    tuple: Vec<usize>,
    abs: f64,
    scaled: f64,
    passed: bool,
}

fn float_outcome(tab: &Tabulator, idx: &[usize], g: Option<f64>, tol: f64) -> Result<TupleOutcome> {
    let mut lhs = 0.0;
    let mut largest = 0.0_f64;
    for term in identity_terms(idx, g) {
        let Some(t) = to_indices(&term.tuple) else { continue };
        let v = term.coefficient * tab.s(&t)?;
        largest = largest.max(v.abs());
        lhs += v;
    }
    let abs = lhs.abs();
    let scaled = if largest > 0.0 { abs / largest } else { 0.0 };
    // Mixed test: quadrature leaves round-off where a coefficient vanishes
    // exactly, so a purely relative bound would reject tuples whose terms
    // are all zero up to noise.
    Ok(TupleOutcome {
        tuple: idx.to_vec(),
        abs,
        scaled,
        passed: abs <= tol * largest.max(1.0),
    })
}

fn exact_outcome(
    family: &CoefficientFamily,
    idx: &[usize],
    g: Option<&BigRational>,
    tol: f64,
) -> Option<TupleOutcome> {
    let half = idx.len() / 2;
    let mut lhs = BigRational::zero();
    let mut largest = BigRational::zero();
    for (p, term) in identity_terms(idx, None).into_iter().enumerate() {
        let Some(t) = to_indices(&term.tuple) else { continue };
        let coefficient = if p < half {
            match g {
                Some(g) => BigRational::from_integer(BigInt::from(idx[p] as i64 - 1)) + g,
                None => BigRational::from_integer(BigInt::from(1)),
            }
        } else {
            BigRational::from_integer(BigInt::from(-(idx[p] as i64) - 1))
        };
        let v = coefficient * family.exact_s(&t)?;
        if v.abs() > largest {
            largest = v.abs();
        }
        lhs += v;
    }
    let abs = rational_to_f64(&lhs.abs());
    let big = rational_to_f64(&largest);
    Some(TupleOutcome {
        tuple: idx.to_vec(),
        abs,
        scaled: if big > 0.0 { abs / big } else { 0.0 },
        passed: abs <= tol * big || lhs.is_zero(),
    })
}

#[allow(clippy::too_many_arguments)]
fn reduce(
    family: &CoefficientFamily,
    condition: ConditionTag,
    g: WeightParameter,
    bound_kind: &str,
    bound: usize,
    tolerance: f64,
    exact: bool,
    outcomes: Vec<TupleOutcome>,
) -> IdentityReport {
    let mut report = IdentityReport {
        family: family.name().to_string(),
        condition,
        g,
        bound_kind: bound_kind.to_string(),
        bound,
        tolerance,
        exact,
        tuples_checked: outcomes.len(),
        failing_tuples: 0,
        max_abs_residual: 0.0,
        min_abs_residual: if outcomes.is_empty() { 0.0 } else { f64::INFINITY },
        max_scaled_residual: 0.0,
        worst_tuple: Vec::new(),
        passed: true,
    };
    for o in outcomes {
        if !o.passed {
            report.failing_tuples += 1;
            report.passed = false;
        }
        if o.abs > report.max_abs_residual || report.worst_tuple.is_empty() {
            if o.abs > report.max_abs_residual || report.worst_tuple.is_empty() {
                report.worst_tuple = o.tuple.clone();
            }
            report.max_abs_residual = report.max_abs_residual.max(o.abs);
        }
        report.min_abs_residual = report.min_abs_residual.min(o.abs);
        report.max_scaled_residual = report.max_scaled_residual.max(o.scaled);
    }
    report
}

fn require_arity(family: &CoefficientFamily, arity: Arity) -> Result<()> {
    if family.arity() != arity {
        return Err(Error::InvalidArgument(format!(
            "{} is {}, expected a {} family",
            family.name(),
            family.arity().name(),
            arity.name()
        )));
    }
    Ok(())
}

fn check_positive(tolerance: f64) -> Result<()> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    Ok(())
}

fn run_checks<const W: usize>(
    family: &CoefficientFamily,
    tuples: &[[usize; W]],
    g: Option<f64>,
    tolerance: f64,
    max_index: usize,
) -> Result<(bool, Vec<TupleOutcome>)> {
    let exact_g = match g {
        Some(g) => BigRational::from_float(g).map(Some),
        None => Some(None),
    };
    let has_exact = family.exact_s(&[0; W][..]).is_some();
    if let (true, Some(exact_g)) = (has_exact, exact_g) {
        let out: Option<Vec<TupleOutcome>> = tuples
            .par_iter()
            .map(|t| exact_outcome(family, t, exact_g.as_ref(), tolerance))
            .collect();
        if let Some(out) = out {
            return Ok((true, out));
        }
    }
    let tab = family.tabulate(max_index)?;
    let out = tuples
        .par_iter()
        .map(|t| float_outcome(&tab, t, g, tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok((false, out))
}

/// Checks the cubic condition for every tuple with indices `<= max_index`.
pub fn check_cubic_identity(
    family: &CoefficientFamily,
    g: f64,
    max_index: usize,
    tolerance: f64,
) -> Result<IdentityReport> {
    require_arity(family, Arity::Cubic)?;
    check_positive(tolerance)?;
    let g_param = WeightParameter::finite(g)?;
    let tuples = enumerate_cubic_offset_tuples(max_index);
    let (exact, outcomes) = run_checks(family, &tuples, Some(g), tolerance, max_index + 1)?;
    Ok(reduce(
        family,
        ConditionTag::CubicAodef,
        g_param,
        "max_index",
        max_index,
        tolerance,
        exact,
        outcomes,
    ))
}

/// Checks the quintic condition at finite `G` over bra sums `<= max_total`.
pub fn check_quintic_identity(
    family: &CoefficientFamily,
    g: f64,
    max_total: usize,
    tolerance: f64,
) -> Result<IdentityReport> {
    require_arity(family, Arity::Quintic)?;
    check_positive(tolerance)?;
    let g_param = WeightParameter::finite(g)?;
    let tuples = enumerate_quintic_offset_tuples(max_total);
    let (exact, outcomes) = run_checks(family, &tuples, Some(g), tolerance, max_total.max(1))?;
    Ok(reduce(
        family,
        ConditionTag::QuinticQuintid,
        g_param,
        "max_total",
        max_total,
        tolerance,
        exact,
        outcomes,
    ))
}

/// Checks the `G → ∞` quintic condition over bra sums `<= max_total`.
pub fn check_quintic_identity_inf(
    family: &CoefficientFamily,
    max_total: usize,
    tolerance: f64,
) -> Result<IdentityReport> {
    require_arity(family, Arity::Quintic)?;
    check_positive(tolerance)?;
    if !family.weight().is_infinite() {
        return Err(Error::InvalidArgument(format!(
            "{} is not an infinite-G family",
            family.name()
        )));
    }
    let tuples = enumerate_quintic_offset_tuples(max_total);
    let (exact, outcomes) = run_checks(family, &tuples, None, tolerance, max_total.max(1))?;
    Ok(reduce(
        family,
        ConditionTag::QuinticIdinf,
        WeightParameter::Infinite,
        "max_total",
        max_total,
        tolerance,
        exact,
        outcomes,
    ))
}

/// Runs whichever condition applies to the family. `g` overrides the
/// family's own weight parameter.
pub fn check_identity(
    family: &CoefficientFamily,
    g: Option<WeightParameter>,
    bound: usize,
    tolerance: f64,
) -> Result<IdentityReport> {
    let g = g.unwrap_or(family.weight());
    match (family.arity(), g) {
        (Arity::Cubic, WeightParameter::Finite(g)) => {
            check_cubic_identity(family, g, bound, tolerance)
        }
        (Arity::Cubic, WeightParameter::Infinite) => Err(Error::InvalidArgument(
            "the cubic condition is only implemented at finite G".into(),
        )),
        (Arity::Quintic, WeightParameter::Finite(g)) => {
            check_quintic_identity(family, g, bound, tolerance)
        }
        (Arity::Quintic, WeightParameter::Infinite) => {
            check_quintic_identity_inf(family, bound, tolerance)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(name: &str) -> CoefficientFamily {
        CoefficientFamily::from_name(name, None).unwrap()
    }

    #[test]
    fn cubic_enumeration() {
        assert!(enumerate_cubic_offset_tuples(0).is_empty());
        assert_eq!(
            enumerate_cubic_offset_tuples(1),
            vec![[0, 1, 0, 0], [1, 0, 0, 0], [1, 1, 0, 1], [1, 1, 1, 0]]
        );
        let mut prev = 0;
        for b in 0..8 {
            let n = enumerate_cubic_offset_tuples(b).len();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn quintic_enumeration_constraint() {
        for t in enumerate_quintic_offset_tuples(5) {
            assert_eq!(t[0] + t[1] + t[2], t[3] + t[4] + t[5] + 1);
            assert!(t[0] + t[1] + t[2] <= 5);
        }
        assert_eq!(enumerate_quintic_offset_tuples(1).len(), 3);
    }

    #[test]
    fn conformal_single_tuple() {
        // 2·S_0000 + 1·0 − S_1010 − S_1001 = 2 − 1 − 1
        let f = fam("cubic_conformal");
        let tab = f.tabulate(2).unwrap();
        let o = float_outcome(&tab, &[1, 0, 0, 0], Some(2.0), 1e-12).unwrap();
        assert_eq!(o.abs, 0.0);
    }

    #[test]
    fn conformal_exact_pass() {
        let r = check_cubic_identity(&fam("cubic_conformal"), 2.0, 12, 1e-10).unwrap();
        assert!(r.exact && r.passed);
        assert_eq!(r.max_abs_residual, 0.0);
    }

    #[test]
    fn conformal_fails_at_wrong_g() {
        let r = check_cubic_identity(&fam("cubic_conformal"), 1.0, 6, 1e-10).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn szego_residual_is_one_everywhere() {
        let r = check_cubic_identity(&fam("cubic_szego"), 1.0, 8, 1e-10).unwrap();
        assert!(r.exact);
        assert!(!r.passed);
        assert_eq!(r.max_abs_residual, 1.0);
        assert_eq!(r.min_abs_residual, 1.0);
        assert_eq!(r.failing_tuples, r.tuples_checked);
    }

    #[test]
    fn quintic_single_tuples() {
        let inv = fam("quintic_inverse_pair").tabulate(2).unwrap();
        let o = float_outcome(&inv, &[1, 0, 0, 0, 0, 0], Some(1.0), 1e-12).unwrap();
        assert!(o.abs < 1e-16);
        let leg = fam("quintic_legendre").tabulate(2).unwrap();
        let o = float_outcome(&leg, &[1, 0, 0, 0, 0, 0], Some(1.0), 1e-12).unwrap();
        assert!(o.abs < 1e-14);
        let her = fam("quintic_hermite").tabulate(2).unwrap();
        let o = float_outcome(&her, &[1, 0, 0, 0, 0, 0], None, 1e-12).unwrap();
        assert!(o.abs < 1e-14);
        let mul = fam("quintic_multinomial").tabulate(2).unwrap();
        let o = float_outcome(&mul, &[1, 0, 0, 0, 0, 0], None, 1e-12).unwrap();
        assert!(o.abs < 1e-15);
    }

    #[test]
    fn dispatch_and_arity_errors() {
        assert!(check_quintic_identity(&fam("cubic_conformal"), 2.0, 3, 1e-10).is_err());
        assert!(check_quintic_identity_inf(&fam("quintic_legendre"), 3, 1e-10).is_err());
        assert!(check_cubic_identity(&fam("cubic_conformal"), 2.0, 3, 0.0).is_err());
        let r = check_identity(&fam("quintic_multinomial"), None, 4, 1e-10).unwrap();
        assert_eq!(r.condition, ConditionTag::QuinticIdinf);
        assert!(r.exact && r.passed);
    }

    #[test]
    fn report_text_is_line_oriented() {
        let r = check_cubic_identity(&fam("cubic_conformal"), 2.0, 3, 1e-10).unwrap();
        let text = r.to_text();
        assert!(text.lines().all(|l| l.contains(": ")));
        assert!(text.contains("result: PASS"));
    }
}
