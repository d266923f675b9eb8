//! Coupling tensors, equations of motion, conserved quantities and time
//! integration.
//!
//! The runtime object is always `C`-normalized. Two evaluators implement
//! [`Dynamics`]:
//!
//! * [`CouplingTensor`]: the explicit sparse tensor over resonant tuples,
//!   stored canonically with orbit multiplicities and expanded once for
//!   contraction. Exact, and fast for cubic systems or small cutoffs.
//! * [`StructuredRhs`]: uses the separable form of the family
//!   ([`CStructure`]) to contract by index convolutions, in
//!   `O(Q·K²)` per evaluation instead of `O(K^{2r-1})`. This is what makes
//!   quintic systems at cutoffs of 40–60 tractable.
//!
//! Time is normalized exactly as in `i dα_n/dt = F_n(α)` with the family's
//! `C` coefficients; no coupling constants are absorbed.

use std::fmt::Write as _;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{
    canonical_tuple, distinct_permutations, orbit_size, Arity, CStructure, CoefficientFamily,
};
use crate::mode_space::{ModeVector, WeightParameter};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Anything that can evaluate `F_n = ∂H/∂ᾱ_n` for a truncated system.
pub trait Dynamics: Sync {
    fn arity(&self) -> Arity;
    fn cutoff(&self) -> usize;
    /// Writes `F(alpha)` into `out`; both slices have length `cutoff+1`.
    fn rhs_into(&self, alpha: &[Complex64], out: &mut [Complex64]);

    fn rhs(&self, alpha: &ModeVector) -> Result<ModeVector> {
        alpha.check_cutoff(self.cutoff())?;
        let mut out = vec![ZERO; alpha.len()];
        self.rhs_into(alpha.as_slice(), &mut out);
        ModeVector::new(out)
    }

    /// `H = (1/r) Σ ᾱ_n F_n` with `r = 2` (cubic) or `3` (quintic).
    fn hamiltonian(&self, alpha: &[Complex64]) -> f64 {
        let mut f = vec![ZERO; alpha.len()];
        self.rhs_into(alpha, &mut f);
        hamiltonian_from_rhs(self.arity(), alpha, &f)
    }
}

fn hamiltonian_from_rhs(arity: Arity, alpha: &[Complex64], f: &[Complex64]) -> f64 {
    let s: Complex64 = alpha.iter().zip(f).map(|(a, f)| a.conj() * f).sum();
    s.re / arity.group() as f64
}

/// One canonical tuple of a [`CouplingTensor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    /// Each group sorted ascending, smaller group first.
    pub indices: Vec<usize>,
    /// Number of ordered tuples in the symmetry orbit.
    pub multiplicity: u64,
    /// `C` at the tuple.
    pub value: f64,
}

/// Ordered tuples `(n, m.., k..)` with their coefficients, flattened.
#[derive(Debug, Clone)]
struct Expanded {
    width: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

/// Sparse `C` tensor over resonant tuples with all indices `<= cutoff`.
#[derive(Debug, Clone)]
pub struct CouplingTensor {
    family: String,
    arity: Arity,
    g: WeightParameter,
    cutoff: usize,
    entries: Vec<TensorEntry>,
    expanded: OnceLock<Expanded>,
}

impl PartialEq for CouplingTensor {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.arity == other.arity
            && self.g == other.g
            && self.cutoff == other.cutoff
            && self.entries == other.entries
    }
}

/// Non-decreasing sequences of `len` integers in `0..=max` summing to `sum`.
fn sorted_groups(len: usize, max: usize, sum: usize) -> Vec<Vec<usize>> {
    fn rec(len: usize, lo: usize, max: usize, sum: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if len == 0 {
            if sum == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for a in lo..=max.min(sum) {
            // The remaining len-1 entries are >= a.
            if a * len > sum {
                break;
            }
            if sum - a > (len - 1) * max {
                continue;
            }
            cur.push(a);
            rec(len - 1, a, max, sum - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(len, 0, max, sum, &mut Vec::with_capacity(len), &mut out);
    out
}

/// Canonical resonant tuples with indices `<= cutoff`, in deterministic
/// order (by shell, then bra, then ket).
pub fn canonical_resonant_tuples(arity: Arity, cutoff: usize) -> Vec<Vec<usize>> {
    let group = arity.group();
    let mut out = Vec::new();
    for s in 0..=group * cutoff {
        let groups = sorted_groups(group, cutoff, s);
        for (a, bra) in groups.iter().enumerate() {
            for ket in &groups[a..] {
                let mut t = bra.clone();
                t.extend_from_slice(ket);
                out.push(t);
            }
        }
    }
    out
}

/// Number of ordered resonant tuples with indices `<= cutoff`.
pub fn ordered_resonant_count(arity: Arity, cutoff: usize) -> u64 {
    let group = arity.group();
    // ways[s] = number of ordered groups summing to s
    let mut ways = vec![1u64];
    for _ in 0..group {
        let mut next = vec![0u64; ways.len() + cutoff];
        for (s, &w) in ways.iter().enumerate() {
            for a in 0..=cutoff {
                next[s + a] += w;
            }
        }
        ways = next;
    }
    ways.iter().map(|w| w * w).sum()
}

impl CouplingTensor {
    /// Tabulates `C` over all canonical resonant tuples up to `cutoff`.
    pub fn build(family: &CoefficientFamily, cutoff: usize) -> Result<Self> {
        let tab = family.tabulate(cutoff)?;
        let tuples = canonical_resonant_tuples(family.arity(), cutoff);
        let entries = tuples
            .into_par_iter()
            .map(|t| {
                let value = tab.c(&t)?;
                Ok(TensorEntry {
                    multiplicity: orbit_size(&t),
                    indices: t,
                    value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family: family.name().to_string(),
            arity: family.arity(),
            g: family.weight(),
            cutoff,
            entries,
            expanded: OnceLock::new(),
        })
    }

    pub fn from_entries(
        family: &str,
        arity: Arity,
        g: WeightParameter,
        cutoff: usize,
        mut entries: Vec<TensorEntry>,
    ) -> Result<Self> {
        let group = arity.group();
        for e in &entries {
            if e.indices.len() != arity.width() {
                return Err(Error::Parse(format!("tuple {:?} has wrong width", e.indices)));
            }
            if e.indices.iter().any(|&a| a > cutoff) {
                return Err(Error::Parse(format!("tuple {:?} exceeds cutoff {cutoff}", e.indices)));
            }
            let bra: usize = e.indices[..group].iter().sum();
            let ket: usize = e.indices[group..].iter().sum();
            if bra != ket {
                return Err(Error::Parse(format!("tuple {:?} is not resonant", e.indices)));
            }
            if canonical_tuple(&e.indices) != e.indices {
                return Err(Error::Parse(format!("tuple {:?} is not canonical", e.indices)));
            }
        }
        entries.sort_by(|x, y| canonical_order(&x.indices, arity).cmp(&canonical_order(&y.indices, arity)));
        Ok(Self {
            family: family.to_string(),
            arity,
            g,
            cutoff,
            entries,
            expanded: OnceLock::new(),
        })
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn g(&self) -> WeightParameter {
        self.g
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    /// Number of ordered tuples represented (sum of multiplicities).
    pub fn ordered_count(&self) -> u64 {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    /// `C` at an arbitrary ordered tuple; zero off the resonance or the
    /// cutoff.
    pub fn get(&self, idx: &[usize]) -> f64 {
        if idx.len() != self.arity.width() || idx.iter().any(|&a| a > self.cutoff) {
            return 0.0;
        }
        let c = canonical_tuple(idx);
        self.entries
            .binary_search_by(|e| canonical_order(&e.indices, self.arity).cmp(&canonical_order(&c, self.arity)))
            .map(|i| self.entries[i].value)
            .unwrap_or(0.0)
    }

    /// Contraction list: for each canonical entry and each distinct
    /// choice of output index `n` from either group, the remaining bra
    /// indices and the ket, each kept sorted, with the number of ordered
    /// tuples they stand for folded into the coefficient.
    fn expanded(&self) -> &Expanded {
        self.expanded.get_or_init(|| {
            let group = self.arity.group();
            let width = self.arity.width();
            let mut indices = Vec::new();
            let mut values = Vec::new();
            for e in &self.entries {
                let (bra, ket) = e.indices.split_at(group);
                let mut push = |x: &[usize], y: &[usize]| {
                    let ket_ways = distinct_permutations(y) as f64;
                    for (j, &n) in x.iter().enumerate() {
                        if j > 0 && x[j - 1] == n {
                            continue;
                        }
                        let rest: Vec<usize> = x[..j].iter().chain(&x[j + 1..]).copied().collect();
                        let ways = distinct_permutations(&rest) as f64 * ket_ways;
                        indices.push(n as u32);
                        indices.extend(rest.iter().chain(y).map(|&v| v as u32));
                        values.push(e.value * ways);
                    }
                };
                push(bra, ket);
                if bra != ket {
                    push(ket, bra);
                }
            }
            debug_assert_eq!(indices.len(), values.len() * width);
            Expanded { width, indices, values }
        })
    }
}

/// Sort key matching the build order: shell, then bra, then ket.
fn canonical_order(t: &[usize], arity: Arity) -> (usize, &[usize]) {
    let s = t[..arity.group()].iter().sum();
    (s, t)
}

impl Dynamics for CouplingTensor {
    fn arity(&self) -> Arity {
        self.arity
    }

    fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn rhs_into(&self, alpha: &[Complex64], out: &mut [Complex64]) {
        let ex = self.expanded();
        let group = self.arity.group();
        out.iter_mut().for_each(|v| *v = ZERO);
        for (t, &c) in ex.indices.chunks_exact(ex.width).zip(&ex.values) {
            let mut prod = Complex64::new(c, 0.0);
            for &m in &t[1..group] {
                prod *= alpha[m as usize].conj();
            }
            for &k in &t[group..] {
                prod *= alpha[k as usize];
            }
            out[t[0] as usize] += prod;
        }
    }
}

/// Convolution-based evaluator built from a family's separable form.
///
/// With `a_k = φ_k(x_q) α_k`, `A = a^{*r}` and `B = ā^{*(r-1)}`,
///
/// ```text
/// F_n = Σ_q W_q φ_n(x_q) Σ_t B_t h_{n+t} A_{n+t}
/// ```
///
/// where `h` is the shell factor of a factorized family (one node, `W = 1`)
/// and `h ≡ 1` for product-integral families.
#[derive(Debug, Clone)]
pub struct StructuredRhs {
    family: String,
    arity: Arity,
    g: WeightParameter,
    cutoff: usize,
    weights: Vec<f64>,
    /// `phi[q][a]`
    phi: Vec<Vec<f64>>,
    shell: Vec<f64>,
}

impl StructuredRhs {
    pub fn build(family: &CoefficientFamily, cutoff: usize) -> Result<Self> {
        let group = family.arity().group();
        let (weights, phi, shell) = match family.c_structure(cutoff)? {
            CStructure::Factorized(f) => (vec![1.0], vec![f.mode], f.shell),
            CStructure::ProductIntegral(t) => {
                let q = t.nodes();
                let phi = (0..q)
                    .map(|j| t.basis.iter().map(|row| row[j]).collect())
                    .collect();
                (t.weights, phi, vec![1.0; group * cutoff + 1])
            }
        };
        Ok(Self {
            family: family.name().to_string(),
            arity: family.arity(),
            g: family.weight(),
            cutoff,
            weights,
            phi,
            shell,
        })
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn g(&self) -> WeightParameter {
        self.g
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    fn node_contribution(&self, q: usize, alpha: &[Complex64], out: &mut [Complex64]) {
        let phi = &self.phi[q];
        let a: Vec<Complex64> = alpha.iter().zip(phi).map(|(x, p)| x * p).collect();
        let abar: Vec<Complex64> = a.iter().map(|x| x.conj()).collect();
        let group = self.arity.group();
        let mut big = a.clone();
        for _ in 1..group {
            big = convolve(&big, &a);
        }
        let mut small = vec![Complex64::new(1.0, 0.0)];
        for _ in 1..group {
            small = convolve(&small, &abar);
        }
        for (s, v) in big.iter_mut().enumerate() {
            *v *= self.shell[s];
        }
        let w = self.weights[q];
        for (n, o) in out.iter_mut().enumerate() {
            let acc: Complex64 = small.iter().zip(&big[n..]).map(|(b, g)| b * g).sum();
            *o += acc * (w * phi[n]);
        }
    }
}

fn convolve(x: &[Complex64], y: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; x.len() + y.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Work above which node contributions are computed in parallel.
const PARALLEL_WORK: usize = 1 << 18;

impl Dynamics for StructuredRhs {
    fn arity(&self) -> Arity {
        self.arity
    }

    fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn rhs_into(&self, alpha: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        let k = self.cutoff + 1;
        let work = self.nodes() * k * k * self.arity.group();
        if work < PARALLEL_WORK {
            for q in 0..self.nodes() {
                self.node_contribution(q, alpha, out);
            }
            return;
        }
        // Per-node partials summed in node order, so results do not depend
        // on the thread schedule.
        let partials: Vec<Vec<Complex64>> = (0..self.nodes())
            .into_par_iter()
            .map(|q| {
                let mut part = vec![ZERO; out.len()];
                self.node_contribution(q, alpha, &mut part);
                part
            })
            .collect();
        for part in partials {
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
    }
}

/// A truncated system with whichever evaluator suits its size.
#[derive(Debug, Clone)]
pub enum System {
    Tensor(CouplingTensor),
    Structured(StructuredRhs),
}

/// Ordered-tuple count above which [`System::auto`] prefers the structured
/// evaluator.
pub const TENSOR_LIMIT: u64 = 400_000;

impl System {
    /// Tensor for small problems, structured contraction otherwise.
    pub fn auto(family: &CoefficientFamily, cutoff: usize) -> Result<Self> {
        if ordered_resonant_count(family.arity(), cutoff) <= TENSOR_LIMIT {
            Ok(System::Tensor(CouplingTensor::build(family, cutoff)?))
        } else {
            Ok(System::Structured(StructuredRhs::build(family, cutoff)?))
        }
    }

    pub fn family(&self) -> &str {
        match self {
            System::Tensor(t) => t.family(),
            System::Structured(s) => s.family(),
        }
    }

    pub fn g(&self) -> WeightParameter {
        match self {
            System::Tensor(t) => t.g(),
            System::Structured(s) => s.g(),
        }
    }
}

impl Dynamics for System {
    fn arity(&self) -> Arity {
        match self {
            System::Tensor(t) => t.arity(),
            System::Structured(s) => s.arity(),
        }
    }

    fn cutoff(&self) -> usize {
        match self {
            System::Tensor(t) => t.cutoff(),
            System::Structured(s) => s.cutoff(),
        }
    }

    fn rhs_into(&self, alpha: &[Complex64], out: &mut [Complex64]) {
        match self {
            System::Tensor(t) => t.rhs_into(alpha, out),
            System::Structured(s) => s.rhs_into(alpha, out),
        }
    }
}

pub fn build_tensor(family: &CoefficientFamily, cutoff: usize) -> Result<CouplingTensor> {
    CouplingTensor::build(family, cutoff)
}

fn require(d: &dyn Dynamics, arity: Arity) -> Result<()> {
    if d.arity() != arity {
        return Err(Error::InvalidArgument(format!(
            "expected a {} system, got {}",
            arity.name(),
            d.arity().name()
        )));
    }
    Ok(())
}

/// `F_n = Σ_{n+m=k+l} C_{nmkl} ᾱ_m α_k α_l`.
pub fn rhs_cubic(system: &dyn Dynamics, alpha: &ModeVector) -> Result<ModeVector> {
    require(system, Arity::Cubic)?;
    system.rhs(alpha)
}

/// `F_n = Σ C_{n m i k l j} ᾱ_m ᾱ_i α_k α_l α_j` over `n+m+i = k+l+j`.
pub fn rhs_quintic(system: &dyn Dynamics, alpha: &ModeVector) -> Result<ModeVector> {
    require(system, Arity::Quintic)?;
    system.rhs(alpha)
}

/// Norm, energy, Hamiltonian and charge of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedSet {
    pub norm: f64,
    pub energy: f64,
    pub hamiltonian: f64,
    pub charge: Complex64,
}

/// `Z = Σ_{n<K} √((n+1)(n+G)) ᾱ_{n+1} α_n`, or `√(n+1)` when `G = ∞`.
pub fn charge(alpha: &[Complex64], g: WeightParameter) -> Complex64 {
    alpha
        .windows(2)
        .enumerate()
        .map(|(n, w)| {
            let n = n as f64;
            let c = match g {
                WeightParameter::Finite(g) => ((n + 1.0) * (n + g)).sqrt(),
                WeightParameter::Infinite => (n + 1.0).sqrt(),
            };
            w[1].conj() * w[0] * c
        })
        .sum()
}

pub fn conserved_set(
    alpha: &ModeVector,
    g: WeightParameter,
    system: &dyn Dynamics,
) -> Result<ConservedSet> {
    alpha.check_cutoff(system.cutoff())?;
    let a = alpha.as_slice();
    Ok(ConservedSet {
        norm: alpha.norm_sqr(),
        energy: a.iter().enumerate().map(|(n, x)| n as f64 * x.norm_sqr()).sum(),
        hamiltonian: system.hamiltonian(a),
        charge: charge(a, g),
    })
}

/// Fixed-step RK4 with an optional step-doubling error controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Nominal (maximum) step.
    pub step: f64,
    /// Record a sample every this many nominal steps.
    pub sample_every: usize,
    /// When set, each step is compared against two half steps and halved
    /// until the difference (relative to the state norm) is below this.
    pub tolerance: Option<f64>,
}

impl StepControl {
    pub fn fixed(step: f64, sample_every: usize) -> Self {
        Self {
            step,
            sample_every,
            tolerance: None,
        }
    }
}

/// Maximum deviation of each conserved quantity from its initial value,
/// relative to that value (absolute when the initial value is zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub norm: f64,
    pub energy: f64,
    pub hamiltonian: f64,
    pub charge_abs: f64,
}

impl DriftSummary {
    pub fn max(&self) -> f64 {
        self.norm.max(self.energy).max(self.hamiltonian).max(self.charge_abs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ModeVector>,
    pub conserved: Vec<ConservedSet>,
}

fn relative(x: f64, x0: f64) -> f64 {
    if x0.abs() > 0.0 {
        (x - x0).abs() / x0.abs()
    } else {
        x.abs()
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&ModeVector> {
        self.states.last()
    }

    pub fn drift(&self) -> DriftSummary {
        let Some(c0) = self.conserved.first() else {
            return DriftSummary { norm: 0.0, energy: 0.0, hamiltonian: 0.0, charge_abs: 0.0 };
        };
        let mut d = DriftSummary { norm: 0.0, energy: 0.0, hamiltonian: 0.0, charge_abs: 0.0 };
        for c in &self.conserved {
            d.norm = d.norm.max(relative(c.norm, c0.norm));
            d.energy = d.energy.max(relative(c.energy, c0.energy));
            d.hamiltonian = d.hamiltonian.max(relative(c.hamiltonian, c0.hamiltonian));
            d.charge_abs = d.charge_abs.max(relative(c.charge.norm(), c0.charge.norm()));
        }
        d
    }

    /// CSV with columns `t, re_0, im_0, …, N, E, H, re_Z, im_Z`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        if let Some(first) = self.states.first() {
            s.push('t');
            for n in 0..first.len() {
                let _ = write!(s, ",re_{n},im_{n}");
            }
            s.push_str(",N,E,H,re_Z,im_Z\n");
        }
        for ((t, a), c) in self.times.iter().zip(&self.states).zip(&self.conserved) {
            s.push_str(&fmt_num(*t));
            for x in a.iter() {
                let _ = write!(s, ",{},{}", fmt_num(x.re), fmt_num(x.im));
            }
            let _ = writeln!(
                s,
                ",{},{},{},{},{}",
                fmt_num(c.norm),
                fmt_num(c.energy),
                fmt_num(c.hamiltonian),
                fmt_num(c.charge.re),
                fmt_num(c.charge.im)
            );
        }
        s
    }
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `dα/dt = -i F(α)`.
fn velocity(system: &dyn Dynamics, a: &[Complex64], out: &mut [Complex64]) {
    system.rhs_into(a, out);
    for v in out.iter_mut() {
        *v *= -I;
    }
}

struct Rk4Work {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![ZERO; n],
            k2: vec![ZERO; n],
            k3: vec![ZERO; n],
            k4: vec![ZERO; n],
            tmp: vec![ZERO; n],
        }
    }
}

fn rk4_step(system: &dyn Dynamics, a: &mut [Complex64], h: f64, w: &mut Rk4Work) {
    velocity(system, a, &mut w.k1);
    for j in 0..a.len() {
        w.tmp[j] = a[j] + w.k1[j] * (0.5 * h);
    }
    velocity(system, &w.tmp, &mut w.k2);
    for j in 0..a.len() {
        w.tmp[j] = a[j] + w.k2[j] * (0.5 * h);
    }
    velocity(system, &w.tmp, &mut w.k3);
    for j in 0..a.len() {
        w.tmp[j] = a[j] + w.k3[j] * h;
    }
    velocity(system, &w.tmp, &mut w.k4);
    for j in 0..a.len() {
        a[j] += (w.k1[j] + (w.k2[j] + w.k3[j]) * 2.0 + w.k4[j]) * (h / 6.0);
    }
}

/// Advances `a` by exactly `span`, adapting the step by step doubling.
fn adaptive_advance(
    system: &dyn Dynamics,
    a: &mut [Complex64],
    span: f64,
    h_max: f64,
    h: &mut f64,
    tol: f64,
    w: &mut Rk4Work,
    t0: f64,
) -> Result<()> {
    let mut done = 0.0;
    let mut full = a.to_vec();
    let mut half = a.to_vec();
    while done < span {
        let step = h.min(span - done);
        full.copy_from_slice(a);
        half.copy_from_slice(a);
        rk4_step(system, &mut full, step, w);
        rk4_step(system, &mut half, 0.5 * step, w);
        rk4_step(system, &mut half, 0.5 * step, w);
        let scale = half.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        let err = full
            .iter()
            .zip(&half)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / scale;
        if !err.is_finite() {
            return Err(Error::Integration { time: t0 + done });
        }
        if err > tol {
            *h = 0.5 * step;
            if *h < 1e-14 * span.max(1.0) {
                return Err(Error::Integration { time: t0 + done });
            }
            continue;
        }
        a.copy_from_slice(&half);
        done += step;
        if err < tol / 32.0 {
            *h = (2.0 * *h).min(h_max);
        }
    }
    Ok(())
}

/// Integrates `i dα/dt = F(α)` from `alpha0` to `t_end`.
///
/// The nominal step is shrunk slightly if needed so that `t_end` is hit
/// exactly; samples are recorded at `t = 0`, every `sample_every` steps, and
/// at `t_end`.
pub fn integrate(
    system: &dyn Dynamics,
    g: WeightParameter,
    alpha0: &ModeVector,
    t_end: f64,
    control: StepControl,
) -> Result<Trajectory> {
    alpha0.check_cutoff(system.cutoff())?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    if !(control.step > 0.0 && control.step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {}", control.step)));
    }
    if control.sample_every == 0 {
        return Err(Error::InvalidArgument("sample_every must be at least 1".into()));
    }
    if let Some(tol) = control.tolerance {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
    }
    let mut steps = (t_end / control.step).round().max(1.0) as usize;
    if (steps as f64 * control.step - t_end).abs() > 1e-12 * t_end {
        steps = (t_end / control.step).ceil() as usize;
    }
    let h = t_end / steps as f64;

    let mut a = alpha0.as_slice().to_vec();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![alpha0.clone()],
        conserved: vec![conserved_set(alpha0, g, system)?],
    };
    let mut work = Rk4Work::new(a.len());
    let mut h_adapt = h;
    let mut j = 0;
    while j < steps {
        let chunk = control.sample_every.min(steps - j);
        let t0 = j as f64 * h;
        match control.tolerance {
            None => {
                for _ in 0..chunk {
                    rk4_step(system, &mut a, h, &mut work);
                }
            }
            Some(tol) => {
                adaptive_advance(system, &mut a, chunk as f64 * h, h, &mut h_adapt, tol, &mut work, t0)?;
            }
        }
        j += chunk;
        let t = if j == steps { t_end } else { j as f64 * h };
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration { time: t });
        }
        let state = ModeVector::new(a.clone())?;
        traj.conserved.push(conserved_set(&state, g, system)?);
        traj.times.push(t);
        traj.states.push(state);
    }
    Ok(traj)
}

/// Decaying random data `α_n = u_n 2^{-n} e^{iθ_n}` with `u_n ∈ [½, 1)` and
/// uniform phases, from a seeded ChaCha8 stream.
pub fn random_decaying_state(cutoff: usize, seed: u64) -> ModeVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = (0..=cutoff)
        .map(|n| {
            let u: f64 = rng.random_range(0.5..1.0);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(u * 0.5_f64.powi(n as i32), theta)
        })
        .collect();
    ModeVector::new(amps).expect("finite amplitudes")
}

/// Header line and one line per canonical tuple:
/// `indices… multiplicity value`.
pub fn write_tensor(t: &CouplingTensor) -> String {
    let mut s = format!(
        "# family={} arity={} G={} cutoff={} entries={} ordered={}\n",
        t.family,
        t.arity.name(),
        t.g,
        t.cutoff,
        t.entries.len(),
        t.ordered_count()
    );
    for e in &t.entries {
        for a in &e.indices {
            let _ = write!(s, "{a} ");
        }
        let _ = writeln!(s, "{} {}", e.multiplicity, fmt_num(e.value));
    }
    s
}

pub fn read_tensor(text: &str) -> Result<CouplingTensor> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::Parse("missing tensor header".into()))?;
    let mut family = None;
    let mut arity = None;
    let mut g = None;
    let mut cutoff = None;
    for kv in header.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field `{kv}`")))?;
        match k {
            "family" => family = Some(v.to_string()),
            "arity" => arity = Some(Arity::parse(v)?),
            "G" => g = Some(WeightParameter::parse(v)?),
            "cutoff" => {
                cutoff = Some(v.parse::<usize>().map_err(|_| Error::Parse(format!("bad cutoff `{v}`")))?)
            }
            _ => {}
        }
    }
    let (Some(family), Some(arity), Some(g), Some(cutoff)) = (family, arity, g, cutoff) else {
        return Err(Error::Parse("incomplete tensor header".into()));
    };
    let width = arity.width();
    let mut entries = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != width + 2 {
            return Err(Error::Parse(format!("bad tensor record `{line}`")));
        }
        let bad = || Error::Parse(format!("bad tensor record `{line}`"));
        let indices = fields[..width]
            .iter()
            .map(|f| f.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let multiplicity = fields[width].parse::<u64>().map_err(|_| bad())?;
        let value = fields[width + 1].parse::<f64>().map_err(|_| bad())?;
        if multiplicity != orbit_size(&indices) {
            return Err(Error::Parse(format!("inconsistent multiplicity in `{line}`")));
        }
        entries.push(TensorEntry { indices, multiplicity, value });
    }
    CouplingTensor::from_entries(&family, arity, g, cutoff, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::families::FAMILY_NAMES;

    fn fam(name: &str) -> CoefficientFamily {
        CoefficientFamily::from_name(name, Some(2.5)).unwrap()
    }

    /// Direct constraint-filtered sum from the family evaluator.
    fn brute_rhs(family: &CoefficientFamily, alpha: &[Complex64]) -> Vec<Complex64> {
        let k = alpha.len() - 1;
        let tab = family.tabulate(k).unwrap();
        let mut out = vec![ZERO; k + 1];
        match family.arity() {
            Arity::Cubic => {
                for n in 0..=k {
                    for m in 0..=k {
                        for kk in 0..=k {
                            for l in 0..=k {
                                if n + m == kk + l {
                                    out[n] += tab.c(&[n, m, kk, l]).unwrap()
                                        * alpha[m].conj()
                                        * alpha[kk]
                                        * alpha[l];
                                }
                            }
                        }
                    }
                }
            }
            Arity::Quintic => {
                let r = 0..=k;
                for n in r.clone() {
                    for m in r.clone() {
                        for i in r.clone() {
                            for a in r.clone() {
                                for b in r.clone() {
                                    for c in r.clone() {
                                        if n + m + i == a + b + c {
                                            out[n] += tab.c(&[n, m, i, a, b, c]).unwrap()
                                                * alpha[m].conj()
                                                * alpha[i].conj()
                                                * alpha[a]
                                                * alpha[b]
                                                * alpha[c];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn cubic_counts() {
        let f = fam("cubic_conformal");
        let t = CouplingTensor::build(&f, 2).unwrap();
        assert_eq!(t.ordered_count(), 19);
        assert_eq!(ordered_resonant_count(Arity::Cubic, 2), 19);
        let t0 = CouplingTensor::build(&f, 0).unwrap();
        assert_eq!(t0.entries().len(), 1);
        assert_eq!(t0.entries()[0].indices, vec![0, 0, 0, 0]);
        for k in 0..6 {
            let t = CouplingTensor::build(&fam("quintic_inverse_pair"), k).unwrap();
            assert_eq!(t.ordered_count(), ordered_resonant_count(Arity::Quintic, k));
        }
    }

    #[test]
    fn tensor_get_matches_family() {
        let f = fam("quintic_legendre");
        let t = CouplingTensor::build(&f, 3).unwrap();
        for e in t.entries() {
            assert_eq!(t.get(&e.indices), e.value);
        }
        assert_relative_eq!(t.get(&[1, 2, 0, 0, 3, 0]), f.c(&[1, 2, 0, 0, 3, 0]).unwrap(), epsilon = 1e-15);
        assert_eq!(t.get(&[1, 0, 0, 0, 0, 0]), 0.0);
    }

    #[test]
    fn unit_mode_zero_rhs() {
        let t = CouplingTensor::build(&fam("cubic_conformal"), 5).unwrap();
        let f = rhs_cubic(&t, &ModeVector::unit(5, 0).unwrap()).unwrap();
        assert_relative_eq!(f[0].re, 1.0, epsilon = 1e-15);
        assert!(f.iter().skip(1).all(|x| x.norm() == 0.0));
        let q = CouplingTensor::build(&fam("quintic_legendre"), 3).unwrap();
        let f = rhs_quintic(&q, &ModeVector::unit(3, 0).unwrap()).unwrap();
        assert_relative_eq!(f[0].re, 2.0, epsilon = 1e-14);
        assert!(rhs_cubic(&q, &ModeVector::zeros(3)).is_err());
        let z = rhs_quintic(&q, &ModeVector::zeros(3)).unwrap();
        assert!(z.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn tensor_and_structured_match_brute_force() {
        for name in FAMILY_NAMES {
            let f = fam(name);
            let k = if f.arity() == Arity::Cubic { 6 } else { 3 };
            let alpha = random_decaying_state(k, 11);
            let oracle = brute_rhs(&f, alpha.as_slice());
            let scale = oracle.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let t = CouplingTensor::build(&f, k).unwrap();
            let s = StructuredRhs::build(&f, k).unwrap();
            let ft = t.rhs(&alpha).unwrap();
            let fs = s.rhs(&alpha).unwrap();
            for n in 0..=k {
                assert!((ft[n] - oracle[n]).norm() <= 1e-13 * scale, "{name} tensor n={n}");
                assert!((fs[n] - oracle[n]).norm() <= 1e-12 * scale, "{name} structured n={n}");
            }
        }
    }

    #[test]
    fn structured_parallel_path_matches_tensor() {
        let f = fam("quintic_hermite");
        let k = 12;
        let alpha = random_decaying_state(k, 3);
        let s = StructuredRhs::build(&f, k).unwrap();
        assert!(s.nodes() * (k + 1) * (k + 1) * 3 < PARALLEL_WORK);
        let big = StructuredRhs::build(&f, 40).unwrap();
        assert!(big.nodes() * 41 * 41 * 3 >= PARALLEL_WORK);
        let t = CouplingTensor::build(&f, k).unwrap();
        let a = t.rhs(&alpha).unwrap();
        let b = s.rhs(&alpha).unwrap();
        for n in 0..=k {
            assert!((a[n] - b[n]).norm() < 1e-13);
        }
    }

    #[test]
    fn conserved_examples() {
        let t = CouplingTensor::build(&fam("cubic_conformal"), 4).unwrap();
        let g = WeightParameter::Finite(2.0);
        let mut a = ModeVector::zeros(4);
        a[0] = Complex64::new(1.0, 0.0);
        a[1] = Complex64::new(1.0, 0.0);
        let c = conserved_set(&a, g, &t).unwrap();
        assert_relative_eq!(c.charge.re, 2f64.sqrt(), epsilon = 1e-15);
        let u = ModeVector::unit(4, 3).unwrap();
        let c = conserved_set(&u, g, &t).unwrap();
        assert_eq!((c.norm, c.energy, c.charge), (1.0, 3.0, ZERO));
        let c = conserved_set(&ModeVector::unit(4, 0).unwrap(), g, &t).unwrap();
        assert_relative_eq!(c.hamiltonian, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn single_mode_rotates() {
        let f = fam("cubic_conformal");
        let k = 6;
        let t = CouplingTensor::build(&f, k).unwrap();
        let amp = 0.7;
        let mut a = ModeVector::zeros(k);
        a[2] = Complex64::new(amp, 0.0);
        let lambda = t.get(&[2, 2, 2, 2]) * amp * amp;
        let traj = integrate(&t, f.weight(), &a, 2.0, StepControl::fixed(1e-3, 100)).unwrap();
        for (time, s) in traj.times.iter().zip(&traj.states) {
            assert!((s[2].norm() - amp).abs() < 1e-10);
            let expected = Complex64::from_polar(amp, -lambda * time);
            assert!((s[2] - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn reversibility() {
        let f = fam("cubic_conformal");
        let t = CouplingTensor::build(&f, 10).unwrap();
        let a0 = random_decaying_state(10, 5);
        let fwd = integrate(&t, f.weight(), &a0, 3.0, StepControl::fixed(1e-3, 3000)).unwrap();
        // Backward flow: conjugate, evolve forward, conjugate back.
        let conj = ModeVector::new(fwd.last().unwrap().iter().map(|x| x.conj()).collect()).unwrap();
        let back = integrate(&t, f.weight(), &conj, 3.0, StepControl::fixed(1e-3, 3000)).unwrap();
        let end: Vec<Complex64> = back.last().unwrap().iter().map(|x| x.conj()).collect();
        let err: f64 = end.iter().zip(a0.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err / a0.norm_sqr().sqrt() < 1e-8, "{err}");
    }

    #[test]
    fn adaptive_matches_fixed() {
        let f = fam("cubic_conformal");
        let t = CouplingTensor::build(&f, 8).unwrap();
        let a0 = random_decaying_state(8, 2);
        let fixed = integrate(&t, f.weight(), &a0, 1.0, StepControl::fixed(1e-3, 100)).unwrap();
        let ctl = StepControl { step: 0.1, sample_every: 1, tolerance: Some(1e-12) };
        let adaptive = integrate(&t, f.weight(), &a0, 1.0, ctl).unwrap();
        assert_eq!(adaptive.times.len(), 11);
        let x = fixed.last().unwrap();
        let y = adaptive.last().unwrap();
        for n in 0..=8 {
            assert!((x[n] - y[n]).norm() < 1e-9);
        }
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let t = CouplingTensor::build(&fam("cubic_conformal"), 2).unwrap();
        let a = ModeVector::unit(2, 0).unwrap();
        let g = WeightParameter::Finite(2.0);
        assert!(integrate(&t, g, &a, 0.0, StepControl::fixed(0.1, 1)).is_err());
        assert!(integrate(&t, g, &a, 1.0, StepControl::fixed(0.0, 1)).is_err());
        assert!(integrate(&t, g, &a, 1.0, StepControl::fixed(0.1, 0)).is_err());
        assert!(integrate(&t, g, &ModeVector::unit(3, 0).unwrap(), 1.0, StepControl::fixed(0.1, 1)).is_err());
    }

    #[test]
    fn tensor_text_round_trip() {
        let t = CouplingTensor::build(&fam("quintic_legendre"), 3).unwrap();
        let text = write_tensor(&t);
        let back = read_tensor(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(write_tensor(&back), text);
        assert!(read_tensor("# family=x arity=cubic G=1\n").is_err());
        assert!(read_tensor("# family=x arity=cubic G=1 cutoff=1\n1 0 0 0 1 1.0\n").is_err());
    }

    #[test]
    fn trajectory_csv_shape() {
        let t = CouplingTensor::build(&fam("cubic_szego"), 3).unwrap();
        let a = random_decaying_state(3, 1);
        let traj = integrate(&t, WeightParameter::Finite(1.0), &a, 0.1, StepControl::fixed(0.01, 5)).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + traj.len());
        assert_eq!(traj.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 1 + 2 * 4 + 5));
    }

    #[test]
    fn random_state_is_seeded_and_decaying() {
        let a = random_decaying_state(20, 9);
        assert_eq!(a, random_decaying_state(20, 9));
        assert_ne!(a, random_decaying_state(20, 10));
        for (n, x) in a.iter().enumerate() {
            assert!(x.norm() <= 0.5_f64.powi(n as i32));
        }
    }
}
