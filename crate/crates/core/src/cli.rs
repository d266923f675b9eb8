//! The `resonant` command-line front end.
//!
//! Every subcommand resolves its configuration from an optional TOML file
//! (`--config`) overridden by flags, echoes the resolved configuration into
//! the output directory, and writes a JSON summary next to its data files.
//!
//! Exit codes: 0 pass, 1 fail or abort, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{
    build_tensor, integrate, ordered_resonant_count, random_decaying_state, write_tensor, Dynamics,
    StepControl, System,
};
use crate::error::{Error, Result};
use crate::families::{Arity, CoefficientFamily};
use crate::identity::check_identity;
use crate::manifold::{spectrum_period, track_manifold, ManifoldPoint, PeriodResult, RECURRENCE_THRESHOLD};
use crate::mode_space::{ModeVector, WeightParameter};
use crate::stationary::{
    lambda_mode0_closed_form, mode0_state, mode_n_state, translated_mode_state, StationaryState,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "resonant", version, about = "Partially solvable resonant systems toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the solvability condition for a family.
    CheckIdentity(Flags),
    /// Tabulate the coupling tensor.
    GenTensor(Flags),
    /// Integrate the equations of motion.
    Evolve(Flags),
    /// Build and verify a stationary state.
    Stationary(Flags),
    /// Track the invariant manifold and the spectrum period.
    Manifold(Flags),
}

/// A complex number given as `re`, `re,im`, or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexSpec {
    pub fn value(&self) -> Complex64 {
        match *self {
            ComplexSpec::Real(re) => Complex64::new(re, 0.0),
            ComplexSpec::Pair([re, im]) => Complex64::new(re, im),
        }
    }

    fn parse(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| format!("bad complex number `{s}`"));
        match parts.as_slice() {
            [re] => Ok(ComplexSpec::Real(num(re)?)),
            [re, im] => Ok(ComplexSpec::Pair([num(re)?, num(im)?])),
            _ => Err(format!("bad complex number `{s}`; use `re` or `re,im`")),
        }
    }
}

/// Flags shared by every subcommand; anything unset falls back to the
/// config file, then to per-command defaults.
#[derive(Debug, Clone, Default, Args)]
struct Flags {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    /// Weight parameter: a positive number or `inf`.
    #[arg(long = "G")]
    g: Option<String>,
    /// Parameter of the gamma-ratio family.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    max_index: Option<usize>,
    #[arg(long)]
    max_total: Option<usize>,
    #[arg(long, value_parser = ComplexSpec::parse, allow_hyphen_values = true)]
    p: Option<ComplexSpec>,
    /// Mode number (bifurcation mode, or the excited mode for single-mode data).
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long, value_parser = ComplexSpec::parse, allow_hyphen_values = true)]
    a: Option<ComplexSpec>,
    #[arg(long, value_parser = ComplexSpec::parse, allow_hyphen_values = true)]
    b: Option<ComplexSpec>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    sample_every: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial data for `evolve`: single, manifold, stationary or random.
    #[arg(long)]
    init: Option<String>,
    /// Amplitude of single-mode initial data.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Verification window for stationary states.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fully resolved run configuration, as echoed to `config.toml`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<String>,
    #[serde(rename = "G")]
    pub g: Option<String>,
    pub delta: Option<f64>,
    pub cutoff: Option<usize>,
    pub max_index: Option<usize>,
    pub max_total: Option<usize>,
    pub p: Option<ComplexSpec>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub a: Option<ComplexSpec>,
    pub b: Option<ComplexSpec>,
    pub t_end: Option<f64>,
    pub step: Option<f64>,
    pub sample_every: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub init: Option<String>,
    pub amplitude: Option<f64>,
    pub window: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    fn overlay(mut self, f: &Flags) -> Self {
        macro_rules! over {
            ($($field:ident),*) => {
                $(if f.$field.is_some() { self.$field = f.$field.clone(); })*
            };
        }
        over!(family, g, delta, cutoff, max_index, max_total, p, n, a, b, t_end, step, sample_every, tol, seed, init, amplitude, window, out);
        self
    }
}

/// Usage-level failure (exit 2) versus a run that could not complete (1).
enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::UnknownFamily(_) | Error::Parse(_) | Error::CutoffMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("i/o error: {e}"))
    }
}

type CmdResult = std::result::Result<bool, Failure>;

/// Runs the CLI on an argument list (first item is the program name) and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let (name, flags) = match &cli.command {
        Command::CheckIdentity(f) => ("check-identity", f),
        Command::GenTensor(f) => ("gen-tensor", f),
        Command::Evolve(f) => ("evolve", f),
        Command::Stationary(f) => ("stationary", f),
        Command::Manifold(f) => ("manifold", f),
    };
    let outcome = load_config(flags).and_then(|cfg| match cli.command {
        Command::CheckIdentity(_) => cmd_check_identity(cfg),
        Command::GenTensor(_) => cmd_gen_tensor(cfg),
        Command::Evolve(_) => cmd_evolve(cfg),
        Command::Stationary(_) => cmd_stationary(cfg),
        Command::Manifold(_) => cmd_manifold(cfg),
    });
    match outcome {
        Ok(true) => {
            println!("{name}: PASS");
            EXIT_PASS
        }
        Ok(false) => {
            println!("{name}: FAIL");
            EXIT_FAIL
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAIL
        }
    }
}

fn load_config(flags: &Flags) -> std::result::Result<RunConfig, Failure> {
    let base = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    Ok(base.overlay(flags))
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn family_of(cfg: &RunConfig) -> std::result::Result<CoefficientFamily, Failure> {
    let name = cfg.family.as_deref().ok_or_else(|| usage("--family is required"))?;
    Ok(CoefficientFamily::from_name(name, cfg.delta)?)
}

fn weight_of(cfg: &mut RunConfig, family: &CoefficientFamily) -> std::result::Result<WeightParameter, Failure> {
    let g = match &cfg.g {
        Some(g) => WeightParameter::parse(g)?,
        None => family.weight(),
    };
    cfg.g = Some(g.to_string());
    Ok(g)
}

fn positive(name: &str, v: f64) -> std::result::Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

fn in_disc(p: Complex64) -> std::result::Result<Complex64, Failure> {
    if p.norm() < 1.0 {
        Ok(p)
    } else {
        Err(usage(format!("need |p| < 1, got {}", p.norm())))
    }
}

/// Creates the output directory and writes the resolved configuration.
fn prepare_out(cfg: &mut RunConfig, default: &str) -> std::result::Result<PathBuf, Failure> {
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(default));
    cfg.out = Some(out.clone());
    fs::create_dir_all(&out)?;
    let text = toml::to_string(cfg).map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(out.join("config.toml"), text)?;
    Ok(out)
}

fn write_summary(out: &Path, value: &serde_json::Value) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(out.join("summary.json"), text + "\n")?;
    Ok(())
}

fn complex_json(z: Complex64) -> serde_json::Value {
    json!([z.re, z.im])
}

fn cmd_check_identity(mut cfg: RunConfig) -> CmdResult {
    let family = family_of(&cfg)?;
    let g = weight_of(&mut cfg, &family)?;
    let tol = positive("tol", *cfg.tol.get_or_insert(1e-10))?;
    let bound = match family.arity() {
        Arity::Cubic => *cfg.max_index.get_or_insert(20),
        Arity::Quintic => *cfg.max_total.get_or_insert(8),
    };
    let report = check_identity(&family, Some(g), bound, tol)?;
    let out = prepare_out(&mut cfg, "resonant-out")?;
    let text = report.to_text();
    print!("{text}");
    fs::write(out.join("report.txt"), &text)?;
    let value = serde_json::to_value(&report).map_err(|e| Failure::Run(e.to_string()))?;
    write_summary(&out, &value)?;
    Ok(report.passed)
}

fn cmd_gen_tensor(mut cfg: RunConfig) -> CmdResult {
    let family = family_of(&cfg)?;
    let cutoff = *cfg.cutoff.get_or_insert(4);
    let tensor = build_tensor(&family, cutoff)?;
    let out = prepare_out(&mut cfg, "resonant-out")?;
    fs::write(out.join("tensor.txt"), write_tensor(&tensor))?;
    let ordered = tensor.ordered_count();
    write_summary(
        &out,
        &json!({
            "family": family.name(),
            "arity": family.arity().name(),
            "G": family.weight().to_string(),
            "cutoff": cutoff,
            "canonical_entries": tensor.entries().len(),
            "ordered_tuples": ordered,
            "expected_ordered_tuples": ordered_resonant_count(family.arity(), cutoff),
        }),
    )?;
    println!("canonical entries: {}", tensor.entries().len());
    println!("ordered tuples: {ordered}");
    Ok(ordered == ordered_resonant_count(family.arity(), cutoff))
}

fn stationary_for(
    cfg: &mut RunConfig,
    g: WeightParameter,
    cutoff: usize,
) -> std::result::Result<StationaryState, Failure> {
    let n = *cfg.n.get_or_insert(0);
    let p = in_disc(cfg.p.get_or_insert(ComplexSpec::Real(0.5)).value())?;
    Ok(match g {
        WeightParameter::Infinite => translated_mode_state(n, p, cutoff)?,
        WeightParameter::Finite(gv) if n == 0 => {
            let mut s = mode0_state(g, p, cutoff)?;
            s.g = WeightParameter::Finite(gv);
            s
        }
        WeightParameter::Finite(gv) => mode_n_state(gv, p, n, cutoff)?,
    })
}

fn cmd_evolve(mut cfg: RunConfig) -> CmdResult {
    let family = family_of(&cfg)?;
    let g = weight_of(&mut cfg, &family)?;
    let cutoff = *cfg.cutoff.get_or_insert(24);
    let t_end = positive("t_end", *cfg.t_end.get_or_insert(10.0))?;
    let step = positive("step", *cfg.step.get_or_insert(1e-3))?;
    let sample_every = *cfg.sample_every.get_or_insert(100);
    if sample_every == 0 {
        return Err(usage("sample_every must be at least 1"));
    }
    let tol = positive("tol", *cfg.tol.get_or_insert(1e-8))?;
    let init = cfg.init.get_or_insert_with(|| "random".into()).clone();
    let system = System::auto(&family, cutoff)?;
    let (alpha0, single) = match init.as_str() {
        "random" => (random_decaying_state(cutoff, *cfg.seed.get_or_insert(0)), None),
        "single" => {
            let k = *cfg.n.get_or_insert(0);
            let amp = *cfg.amplitude.get_or_insert(1.0);
            let mut a = ModeVector::unit(cutoff, k)?;
            a[k] = Complex64::new(amp, 0.0);
            (a, Some((k, amp)))
        }
        "manifold" => {
            let pt = manifold_point(&mut cfg)?;
            (crate::manifold::manifold_state(&pt, g, cutoff)?, None)
        }
        "stationary" => (stationary_for(&mut cfg, g, cutoff)?.amplitudes()?, None),
        other => return Err(usage(format!("unknown initial data `{other}`"))),
    };
    let out = prepare_out(&mut cfg, "resonant-out")?;
    let traj = integrate(&system, g, &alpha0, t_end, StepControl::fixed(step, sample_every))?;
    fs::write(out.join("trajectory.csv"), traj.to_csv())?;
    let drift = traj.drift();
    let conserves = drift.norm <= tol && drift.energy <= tol && drift.hamiltonian <= tol;
    let charge_ok = drift.charge_abs <= tol;
    let mut summary = json!({
        "family": family.name(),
        "G": g.to_string(),
        "cutoff": cutoff,
        "t_end": t_end,
        "step": step,
        "samples": traj.len(),
        "drift": drift,
        "tolerance": tol,
        "charge_conserved": charge_ok,
    });
    println!("max relative drift: N {:.3e}  E {:.3e}  H {:.3e}  |Z| {:.3e}", drift.norm, drift.energy, drift.hamiltonian, drift.charge_abs);
    if !charge_ok {
        println!("WARNING: |Z| is not conserved (relative drift {:.3e})", drift.charge_abs);
    }
    let mut passed = conserves && charge_ok;
    if let Some((k, amp)) = single {
        let c = system_coefficient(&system, k);
        let power = 2 * (family.arity().group() as i32 - 1);
        let lambda = c * amp.powi(power);
        let err = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, s)| (s[k] - Complex64::from_polar(amp, -lambda * t)).norm())
            .fold(0.0, f64::max);
        let rotation_ok = err <= tol * amp.max(1.0);
        println!("single-mode phase rotation: lambda {lambda:.16e}, max deviation {err:.3e}");
        summary["phase_rotation"] = json!({"mode": k, "lambda": lambda, "max_deviation": err, "passed": rotation_ok});
        passed = passed && rotation_ok;
    }
    summary["passed"] = json!(passed);
    write_summary(&out, &summary)?;
    Ok(passed)
}

/// The diagonal coupling of mode `k`, read off the system by applying it to a unit vector.
fn system_coefficient(system: &System, k: usize) -> f64 {
    let a = ModeVector::unit(system.cutoff(), k).expect("mode within cutoff");
    system.rhs(&a).map(|f| f[k].re).unwrap_or(f64::NAN)
}

fn cmd_stationary(mut cfg: RunConfig) -> CmdResult {
    let family = family_of(&cfg)?;
    let g = weight_of(&mut cfg, &family)?;
    let cutoff = *cfg.cutoff.get_or_insert(if g.is_infinite() { 60 } else { 48 });
    let window = *cfg.window.get_or_insert(if g.is_infinite() { 40 } else { 32 });
    if window > cutoff {
        return Err(usage(format!("window {window} exceeds cutoff {cutoff}")));
    }
    let tol = positive("tol", *cfg.tol.get_or_insert(1e-9))?;
    let mut state = stationary_for(&mut cfg, g, cutoff)?;
    let out = prepare_out(&mut cfg, "resonant-out")?;
    let system = System::auto(&family, cutoff)?;
    let v = state.verify(&system, window)?;
    fs::write(out.join("state.csv"), state.to_csv(&system)?)?;
    let mut summary = json!({
        "family": family.name(),
        "G": g.to_string(),
        "construction": if g.is_infinite() { "magnetic_translation" } else { "mode_n" },
        "N": state.mode,
        "p": complex_json(state.p),
        "cutoff": cutoff,
        "window": v.window,
        "lambda": v.lambda,
        "lambda_imag": v.lambda_imag,
        "residual": v.residual,
        "tolerance": tol,
        "passed": v.residual <= tol,
    });
    println!("lambda: {:.16e}", v.lambda);
    println!("residual: {:.3e}", v.residual);
    if let (WeightParameter::Finite(gv), 0, Arity::Cubic) = (g, state.mode, family.arity()) {
        let closed = lambda_mode0_closed_form(gv, state.p)?;
        summary["lambda_closed_form"] = json!(closed);
        summary["lambda_relative_difference"] = json!((v.lambda - closed).abs() / closed);
        println!("closed form 1/(1-|p|^2)^G: {closed:.16e}");
    }
    write_summary(&out, &summary)?;
    Ok(v.residual <= tol)
}

fn manifold_point(cfg: &mut RunConfig) -> std::result::Result<ManifoldPoint, Failure> {
    let a = cfg.a.get_or_insert(ComplexSpec::Real(0.1)).value();
    let b = cfg.b.get_or_insert(ComplexSpec::Real(1.0)).value();
    let p = cfg.p.get_or_insert(ComplexSpec::Real(0.3)).value();
    Ok(ManifoldPoint::new(a, b, p)?)
}

fn cmd_manifold(mut cfg: RunConfig) -> CmdResult {
    let family = family_of(&cfg)?;
    if family.arity() != Arity::Cubic {
        return Err(usage("the invariant manifold is only defined for cubic families"));
    }
    let g = weight_of(&mut cfg, &family)?;
    let cutoff = *cfg.cutoff.get_or_insert(48);
    let t_end = positive("t_end", *cfg.t_end.get_or_insert(95.0))?;
    let step = positive("step", *cfg.step.get_or_insert(1e-2))?;
    let sample_every = *cfg.sample_every.get_or_insert(10);
    if sample_every == 0 {
        return Err(usage("sample_every must be at least 1"));
    }
    let tol = positive("tol", *cfg.tol.get_or_insert(1e-6))?;
    let pt = manifold_point(&mut cfg)?;
    let out = prepare_out(&mut cfg, "resonant-out")?;
    let system = System::auto(&family, cutoff)?;
    let track = track_manifold(&system, g, &pt, t_end, StepControl::fixed(step, sample_every))?;
    fs::write(out.join("track.csv"), track.to_csv())?;
    let period = spectrum_period(&track.trajectory, g, Some(&system), RECURRENCE_THRESHOLD)?;
    let invariant = track.passed(tol);
    println!("max manifold residual: {:.3e}", track.max_residual());
    match &period {
        PeriodResult::Found { period, mismatch, recurrences, .. } => {
            println!("spectrum period: {period:.16e} (mismatch {mismatch:.3e}, {} recurrences)", recurrences.len())
        }
        PeriodResult::Degenerate { .. } => println!("spectrum period: degenerate (stationary spectrum)"),
        PeriodResult::NotFound { .. } => println!("spectrum period: no recurrence within t_end"),
    }
    write_summary(
        &out,
        &json!({
            "family": family.name(),
            "G": g.to_string(),
            "cutoff": cutoff,
            "a": complex_json(pt.a),
            "b": complex_json(pt.b),
            "p": complex_json(pt.p),
            "t_end": t_end,
            "max_residual": track.max_residual(),
            "tolerance": tol,
            "invariant": invariant,
            "period": period,
            "passed": invariant,
        }),
    )?;
    Ok(invariant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_spec_forms() {
        assert_eq!(ComplexSpec::parse("0.5").unwrap().value(), Complex64::new(0.5, 0.0));
        assert_eq!(ComplexSpec::parse("0.2, -0.3").unwrap().value(), Complex64::new(0.2, -0.3));
        assert!(ComplexSpec::parse("1,2,3").is_err());
        assert!(ComplexSpec::parse("x").is_err());
    }

    #[test]
    fn config_parses_and_overlays() {
        let cfg = RunConfig::from_toml("family = \"cubic_szego\"\nG = \"1\"\np = [0.1, 0.2]\ncutoff = 6\n").unwrap();
        assert_eq!(cfg.p.unwrap().value(), Complex64::new(0.1, 0.2));
        let flags = Flags { cutoff: Some(9), ..Flags::default() };
        let merged = cfg.overlay(&flags);
        assert_eq!(merged.cutoff, Some(9));
        assert_eq!(merged.family.as_deref(), Some("cubic_szego"));
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["resonant", "check-identity", "--family", "nope"]), EXIT_USAGE);
        assert_eq!(run(["resonant", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["resonant", "check-identity"]), EXIT_USAGE);
    }
}
