//! The three-parameter invariant manifold `β_n = (b + n a) pⁿ` of cubic
//! systems in the solvable class, and periodicity of its spectrum `|β_n|²`.
//!
//! Membership is judged by reconstruction residual rather than by parameter
//! distance: the chart `(a, b, p) ↦ β` has exact degeneracies (for `a = 0`
//! only `b pⁿ` is seen).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{integrate, Dynamics, StepControl, Trajectory};
use crate::error::{Error, Result};
use crate::families::Arity;
use crate::mode_space::{alpha_to_beta, beta_to_alpha, ModeVector, WeightParameter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    pub a: Complex64,
    pub b: Complex64,
    pub p: Complex64,
}

impl ManifoldPoint {
    pub fn new(a: Complex64, b: Complex64, p: Complex64) -> Result<Self> {
        if !(p.norm() < 1.0) {
            return Err(Error::InvalidArgument(format!("need |p| < 1, got {}", p.norm())));
        }
        if a.norm() == 0.0 && b.norm() == 0.0 {
            return Err(Error::InvalidArgument("a and b cannot both vanish".into()));
        }
        Ok(Self { a, b, p })
    }

    /// `(b + n a) pⁿ` for `n = 0..=cutoff`.
    pub fn beta(&self, cutoff: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(cutoff + 1);
        let mut pn = Complex64::new(1.0, 0.0);
        for n in 0..=cutoff {
            out.push((self.b + self.a * n as f64) * pn);
            pn *= self.p;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldFitReport {
    pub point: ManifoldPoint,
    /// `‖β − (b+na)pⁿ‖ / ‖β‖`.
    pub residual: f64,
}

/// `α_n = f_n (b + n a) pⁿ`.
pub fn manifold_state(point: &ManifoldPoint, g: WeightParameter, cutoff: usize) -> Result<ModeVector> {
    beta_to_alpha(&ModeVector::new(point.beta(cutoff))?, g)
}

fn cost(beta: &[Complex64], point: &ManifoldPoint) -> f64 {
    beta.iter()
        .zip(point.beta(beta.len() - 1))
        .map(|(x, y)| (x - y).norm_sqr())
        .sum()
}

/// Best `(a, b)` at fixed `p` by linear least squares.
fn inner_fit(beta: &[Complex64], p: Complex64) -> ManifoldPoint {
    let k = beta.len();
    let mut m = DMatrix::<Complex64>::zeros(k, 2);
    let mut pn = Complex64::new(1.0, 0.0);
    for n in 0..k {
        m[(n, 0)] = pn;
        m[(n, 1)] = pn * n as f64;
        pn *= p;
    }
    let rhs = DVector::from_column_slice(beta);
    let sol = m
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(2));
    ManifoldPoint { b: sol[0], a: sol[1], p }
}

/// Levenberg–Marquardt on the holomorphic model in `(a, b, p)`.
fn refine(beta: &[Complex64], start: ManifoldPoint) -> ManifoldPoint {
    let k = beta.len();
    let mut x = start;
    let mut c = cost(beta, &x);
    let mut mu = 1e-3;
    for _ in 0..200 {
        let mut jac = DMatrix::<Complex64>::zeros(k, 3);
        let mut r = DVector::<Complex64>::zeros(k);
        let mut pn = Complex64::new(1.0, 0.0);
        let mut pn1 = Complex64::new(0.0, 0.0); // p^{n-1}
        for n in 0..k {
            let nf = n as f64;
            let amp = x.b + x.a * nf;
            r[n] = beta[n] - amp * pn;
            jac[(n, 0)] = pn * nf;
            jac[(n, 1)] = pn;
            jac[(n, 2)] = amp * nf * pn1;
            pn1 = pn;
            pn *= x.p;
        }
        let jh = jac.adjoint();
        let normal = &jh * &jac;
        let grad = &jh * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut lhs = normal.clone();
            for d in 0..3 {
                lhs[(d, d)] += Complex64::new(mu * normal[(d, d)].re.max(1e-300), 0.0);
            }
            let Some(delta) = lhs.lu().solve(&grad) else {
                mu *= 10.0;
                continue;
            };
            let trial = ManifoldPoint {
                a: x.a + delta[0],
                b: x.b + delta[1],
                p: x.p + delta[2],
            };
            if trial.p.norm() < 1.0 {
                let tc = cost(beta, &trial);
                if tc < c {
                    let step = delta.norm();
                    x = trial;
                    c = tc;
                    mu = (mu / 3.0).max(1e-15);
                    improved = step > 1e-16 * (1.0 + x.a.norm() + x.b.norm());
                    break;
                }
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    x
}

/// Candidate `p` from the recurrence `β_{n+2} = c₁β_{n+1} + c₀β_n` that
/// manifold data satisfy with the double root `x² − c₁x − c₀ = (x − p)²`.
/// The midpoint `c₁/2` and both roots are returned when inside the disc.
/// Along the narrow valley where `a` and `p` trade off, these seeds land
/// much closer to the minimum than any grid point.
fn recurrence_roots(beta: &[Complex64]) -> Vec<Complex64> {
    let k = beta.len();
    if k < 4 {
        return Vec::new();
    }
    let mut m = DMatrix::<Complex64>::zeros(k - 2, 2);
    let mut rhs = DVector::<Complex64>::zeros(k - 2);
    for n in 0..k - 2 {
        m[(n, 0)] = beta[n + 1];
        m[(n, 1)] = beta[n];
        rhs[n] = beta[n + 2];
    }
    let Ok(c) = m.svd(true, true).solve(&rhs, 1e-14) else {
        return Vec::new();
    };
    let half = c[0] / 2.0;
    let disc = (half * half + c[1]).sqrt();
    [half, half + disc, half - disc]
        .into_iter()
        .filter(|p| p.is_finite() && p.norm() < 1.0)
        .collect()
}

/// Minimizes `Σ_n |β_n − (b+na)pⁿ|²`: coarse polar grid over `|p| <= 0.95`
/// with exact inner least squares for `(a, b)`, then Levenberg–Marquardt
/// from the best grid points and from the recurrence estimate of `p`.
pub fn fit_manifold(beta: &ModeVector) -> Result<ManifoldFitReport> {
    let b = beta.as_slice();
    let scale = b.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let significant = b.iter().filter(|x| x.norm() > 1e-14 * scale).count();
    if scale == 0.0 || significant < 4 {
        return Err(Error::Degenerate(format!(
            "manifold fit needs at least 4 significant modes, got {significant}"
        )));
    }
    const RADII: usize = 20;
    const ANGLES: usize = 72;
    let mut grid = vec![Complex64::new(0.0, 0.0)];
    for i in 1..=RADII {
        let r = 0.95 * i as f64 / RADII as f64;
        for j in 0..ANGLES {
            grid.push(Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / ANGLES as f64));
        }
    }
    let mut scored: Vec<(f64, ManifoldPoint)> = grid
        .iter()
        .map(|&p| {
            let pt = inner_fit(b, p);
            (cost(b, &pt), pt)
        })
        .collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
    let norm2: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    let mut starts: Vec<ManifoldPoint> = scored.iter().take(4).map(|(_, pt)| *pt).collect();
    starts.extend(recurrence_roots(b).into_iter().map(|p| inner_fit(b, p)));
    let best = starts
        .iter()
        .map(|start| {
            let pt = refine(b, *start);
            (cost(b, &pt), pt)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("non-empty grid");
    Ok(ManifoldFitReport {
        point: best.1,
        residual: (best.0 / norm2).sqrt(),
    })
}

/// Fit reports at every sample of a trajectory from manifold data.
#[derive(Debug, Clone)]
pub struct ManifoldTrack {
    pub trajectory: Trajectory,
    pub fits: Vec<ManifoldFitReport>,
}

impl ManifoldTrack {
    pub fn max_residual(&self) -> f64 {
        self.fits.iter().map(|f| f.residual).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_residual() <= tolerance
    }

    /// CSV rows of the trajectory with `residual,abs_a,abs_b,abs_p`
    /// appended.
    pub fn to_csv(&self) -> String {
        let base = self.trajectory.to_csv();
        let mut out = String::with_capacity(base.len() + 80 * self.fits.len());
        for (i, line) in base.lines().enumerate() {
            out.push_str(line);
            if i == 0 {
                out.push_str(",residual,abs_a,abs_b,abs_p\n");
            } else {
                let f = &self.fits[i - 1];
                out.push_str(&format!(
                    ",{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    f.residual,
                    f.point.a.norm(),
                    f.point.b.norm(),
                    f.point.p.norm()
                ));
            }
        }
        out
    }
}

/// Integrates from `manifold_state(point0)` and fits every sample.
pub fn track_manifold(
    system: &dyn Dynamics,
    g: WeightParameter,
    point0: &ManifoldPoint,
    t_end: f64,
    control: StepControl,
) -> Result<ManifoldTrack> {
    if system.arity() != Arity::Cubic {
        return Err(Error::InvalidArgument(
            "the invariant manifold is only defined for cubic systems".into(),
        ));
    }
    let alpha0 = manifold_state(point0, g, system.cutoff())?;
    let trajectory = integrate(system, g, &alpha0, t_end, control)?;
    let fits = trajectory
        .states
        .par_iter()
        .map(|a| fit_manifold(&alpha_to_beta(a, g)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ManifoldTrack { trajectory, fits })
}

/// `D(t) = Σ_n (|β_n(t)|² − |β_n(0)|²)²`.
pub fn spectrum_distance(beta: &[Complex64], beta0: &[Complex64]) -> f64 {
    beta.iter()
        .zip(beta0)
        .map(|(x, y)| (x.norm_sqr() - y.norm_sqr()).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PeriodResult {
    /// The spectrum does not move.
    Degenerate { d_max: f64 },
    /// No recurrence within the trajectory.
    NotFound { d_max: f64 },
    Found {
        /// First recurrence time.
        period: f64,
        /// `D` at the refined period.
        mismatch: f64,
        d_max: f64,
        /// All refined recurrence times in the trajectory.
        recurrences: Vec<f64>,
    },
}

impl PeriodResult {
    pub fn period(&self) -> Option<f64> {
        match self {
            PeriodResult::Found { period, .. } => Some(*period),
            _ => None,
        }
    }
}

/// `D_max / Σ|β_n(0)|⁴` below which the spectrum counts as frozen; this
/// sits above the integrator's error floor (`|Δ|β|²| ~ 1e-8`).
pub const DEGENERATE_SPECTRUM: f64 = 1e-16;

/// Sampled minima of `D` below this fraction of `D_max` are refined.
pub const CANDIDATE_THRESHOLD: f64 = 1e-2;

/// Default acceptance level for a refined minimum, relative to `D_max`.
/// Turning points of the spectrum also produce shallow local minima of `D`
/// (around `1e-3 · D_max` for typical data); a recurrence goes to zero.
pub const RECURRENCE_THRESHOLD: f64 = 1e-4;

/// Vertex of the parabola through three points.
fn parabola_vertex(t: [f64; 3], d: [f64; 3]) -> (f64, f64) {
    let (t0, t1, t2) = (t[0], t[1], t[2]);
    let (d0, d1, d2) = (d[0], d[1], d[2]);
    let den = (t0 - t1) * (t0 - t2) * (t1 - t2);
    let a = (t2 * (d1 - d0) + t1 * (d0 - d2) + t0 * (d2 - d1)) / den;
    let b = (t2 * t2 * (d0 - d1) + t1 * t1 * (d2 - d0) + t0 * t0 * (d1 - d2)) / den;
    if a <= 0.0 {
        return (t1, d1);
    }
    let tv = -b / (2.0 * a);
    let c = d1 - a * t1 * t1 - b * t1;
    (tv, (a * tv * tv + b * tv + c).max(0.0))
}

/// Detects the recurrence time of the spectrum `|β_n|²` along a sampled
/// trajectory.
///
/// Local minima of `D` below `CANDIDATE_THRESHOLD · D_max` are located on
/// the samples and refined; those whose refined value is at most
/// `threshold · D_max` count as recurrences. With a `system`, each
/// refinement re-integrates from the nearest sample and iterates a
/// parabola on exact evaluations of `D`, and the reported mismatch is the
/// true `D` there. Without one, every `|β_n|²` is interpolated by a local
/// cubic through four samples and `D` is minimized on the interpolants.
pub fn spectrum_period(
    trajectory: &Trajectory,
    g: WeightParameter,
    system: Option<&dyn Dynamics>,
    threshold: f64,
) -> Result<PeriodResult> {
    let betas = trajectory
        .states
        .iter()
        .map(|a| alpha_to_beta(a, g).map(ModeVector::into_vec))
        .collect::<Result<Vec<_>>>()?;
    let Some(beta0) = betas.first() else {
        return Ok(PeriodResult::NotFound { d_max: 0.0 });
    };
    let d: Vec<f64> = betas.iter().map(|b| spectrum_distance(b, beta0)).collect();
    let d_max = d.iter().copied().fold(0.0, f64::max);
    let size: f64 = beta0.iter().map(|x| x.norm_sqr().powi(2)).sum();
    if d_max <= DEGENERATE_SPECTRUM * size.max(1e-300) {
        return Ok(PeriodResult::Degenerate { d_max });
    }
    let t = &trajectory.times;
    let mut recurrences = Vec::new();
    let mut first_mismatch = None;
    for i in 1..d.len().saturating_sub(1) {
        if !(d[i] <= d[i - 1] && d[i] < d[i + 1] && d[i] < CANDIDATE_THRESHOLD * d_max) {
            continue;
        }
        let (tv, dv) = match system {
            None => interpolated_minimum(t, &betas, beta0, i),
            Some(sys) => refine_minimum(sys, g, trajectory, beta0, i, &d)?,
        };
        if dv > threshold * d_max {
            continue;
        }
        if first_mismatch.is_none() {
            first_mismatch = Some(dv);
        }
        recurrences.push(tv);
    }
    match first_mismatch {
        None => Ok(PeriodResult::NotFound { d_max }),
        Some(mismatch) => Ok(PeriodResult::Found {
            period: recurrences[0],
            mismatch,
            d_max,
            recurrences,
        }),
    }
}

/// Minimizes `D` on cubic interpolants of each `|β_n(t)|²` over
/// `[t_{i−1}, t_{i+1}]`.
fn interpolated_minimum(t: &[f64], betas: &[Vec<Complex64>], beta0: &[Complex64], i: usize) -> (f64, f64) {
    // four consecutive samples around i, shifted inward at the ends
    let start = if i + 2 < t.len() { i - 1 } else { i.saturating_sub(2) };
    let idx: Vec<usize> = (start..(start + 4).min(t.len())).collect();
    let nodes: Vec<f64> = idx.iter().map(|&j| t[j]).collect();
    let values: Vec<Vec<f64>> = idx
        .iter()
        .map(|&j| betas[j].iter().zip(beta0).map(|(b, b0)| b.norm_sqr() - b0.norm_sqr()).collect())
        .collect();
    let dist = |x: f64| -> f64 {
        let weights: Vec<f64> = (0..nodes.len())
            .map(|a| {
                (0..nodes.len())
                    .filter(|&b| b != a)
                    .map(|b| (x - nodes[b]) / (nodes[a] - nodes[b]))
                    .product()
            })
            .collect();
        (0..beta0.len())
            .map(|n| weights.iter().zip(&values).map(|(w, v)| w * v[n]).sum::<f64>().powi(2))
            .sum()
    };
    let (lo, hi) = (t[i - 1], t[i + 1]);
    // coarse scan, then golden section around the best point
    let scan = 64;
    let h = (hi - lo) / scan as f64;
    let best = (0..=scan)
        .map(|k| lo + k as f64 * h)
        .min_by(|x, y| dist(*x).total_cmp(&dist(*y)))
        .unwrap();
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 * hi.abs().max(1.0) {
        let (c, d) = (b - ratio * (b - a), a + ratio * (b - a));
        if dist(c) < dist(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let tv = 0.5 * (a + b);
    (tv, dist(tv))
}

/// `D` at time `t` in `[t_{i−1}, t_{i+1}]`, integrating from sample `i−1`.
fn distance_at(
    system: &dyn Dynamics,
    g: WeightParameter,
    trajectory: &Trajectory,
    beta0: &[Complex64],
    i: usize,
    t: f64,
) -> Result<f64> {
    let t0 = trajectory.times[i - 1];
    let span = t - t0;
    let state = if span <= 0.0 {
        trajectory.states[i - 1].clone()
    } else {
        let step = (span / (span / 1e-3).ceil()).min(span);
        let traj = integrate(system, g, &trajectory.states[i - 1], span, StepControl::fixed(step, usize::MAX))?;
        traj.last().expect("final state").clone()
    };
    Ok(spectrum_distance(alpha_to_beta(&state, g)?.as_slice(), beta0))
}

fn refine_minimum(
    system: &dyn Dynamics,
    g: WeightParameter,
    trajectory: &Trajectory,
    beta0: &[Complex64],
    i: usize,
    d: &[f64],
) -> Result<(f64, f64)> {
    let times = &trajectory.times;
    let (lo, hi) = (times[i - 1], times[i + 1]);
    let mut pts = [(times[i - 1], d[i - 1]), (times[i], d[i]), (times[i + 1], d[i + 1])];
    for _ in 0..12 {
        pts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (tv, _) = parabola_vertex([pts[0].0, pts[1].0, pts[2].0], [pts[0].1, pts[1].1, pts[2].1]);
        let tv = tv.clamp(lo, hi);
        let dv = distance_at(system, g, trajectory, beta0, i, tv)?;
        // replace the worst point
        let worst = (0..3).max_by(|&x, &y| pts[x].1.total_cmp(&pts[y].1)).unwrap();
        let moved = (pts.iter().map(|p| (p.0 - tv).abs()).fold(f64::INFINITY, f64::min)) < 1e-13 * hi;
        if dv >= pts[worst].1 || moved {
            let best = pts.iter().copied().chain(std::iter::once((tv, dv))).min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
            return Ok(best);
        }
        pts[worst] = (tv, dv);
    }
    Ok(pts.iter().copied().min_by(|x, y| x.1.total_cmp(&y.1)).unwrap())
}
