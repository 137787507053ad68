//! Command-line front end.
//!
//! Exit codes: 0 ok, 2 criteria not met, 3 simulation aborted, 64 usage,
//! 65 bad data or non-physical parameters, 66 unreadable or unwritable file.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::controller::{ControlMode, Setpoint, TrackerConfig};
use crate::design::{
    self, anneal_gains, assemble_gain_matrix, closed_loop_poles, pole_cost, AnnealConfig,
    GainVector, PoleSpec,
};
use crate::numerics::ComplexRoot;
use crate::sim::{self, Injection, ScenarioConfig, SimLog};
use crate::vehicle::VehicleParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CRITERIA: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;

/// Tolerance on each pole component when checking the built-in gains against
/// their published poles.
pub const PAPER_POLE_TOL: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(
    name = "quadgain",
    version,
    about = "Quadrotor gain design and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for gains whose closed-loop poles lie in the band.
    Design(DesignArgs),
    /// Print closed-loop poles of a gain set and check them against the band.
    Verify(VerifyArgs),
    /// Run a closed-loop nonlinear simulation scenario.
    Simulate(SimulateArgs),
    /// Print effective vehicle parameters and the hover rotor speed.
    Params(ParamsArgs),
}

#[derive(Debug, Args)]
pub struct ParamSource {
    /// Parameter overrides: a key=value file, or inline `key=value`. Repeatable.
    #[arg(long = "params", value_name = "FILE|KEY=VALUE")]
    pub params: Vec<String>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct GainSource {
    /// Gain file with twelve values, one per line.
    #[arg(long, value_name = "FILE")]
    pub gains: Option<PathBuf>,
    /// Use the built-in published gains.
    #[arg(long)]
    pub paper_gains: bool,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pole real-part band as MIN:MAX.
    #[arg(long, default_value = "-30:-6", allow_hyphen_values = true)]
    pub band: PoleSpec,
    #[arg(long)]
    pub initial_temp: Option<f64>,
    #[arg(long)]
    pub cooling_ratio: Option<f64>,
    #[arg(long)]
    pub steps_per_temp: Option<usize>,
    #[arg(long)]
    pub min_temp: Option<f64>,
    #[arg(long)]
    pub step_scale: Option<f64>,
    /// Where to write the gain file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamSource,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub gains: GainSource,
    #[arg(long, default_value = "-30:-6", allow_hyphen_values = true)]
    pub band: PoleSpec,
    #[command(flatten)]
    pub params: ParamSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Hover after a short pulse disturbance.
    Perturb,
    /// Hover under normally distributed disturbances.
    Random,
    /// Fly to a setpoint under moderate disturbances.
    Track,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InjectionArg {
    Force,
    SpeedOffset,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub scenario: Scenario,
    #[command(flatten)]
    pub gains: GainSource,
    #[command(flatten)]
    pub params: ParamSource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to run, starting at --seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    /// Simulated time, s.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Tracking setpoint as X,Y,Z,PSI (m, m, m, rad).
    #[arg(long, value_name = "X,Y,Z,PSI", allow_hyphen_values = true)]
    pub setpoint: Option<String>,
    /// How disturbances act on the plant.
    #[arg(long, value_enum, default_value_t = InjectionArg::Force)]
    pub injection: InjectionArg,
    #[arg(long)]
    pub dt_physics: Option<f64>,
    #[arg(long)]
    pub dt_control: Option<f64>,
    /// CSV log path. With several runs, `_seedN` is appended to the stem.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// Summary output path (key=value text). Same naming rule as --csv.
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[command(flatten)]
    pub params: ParamSource,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn new(code: i32, msg: impl Into<String>) -> Self {
        Self {
            code,
            msg: msg.into(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Design(a) => cmd_design(a, out, err),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Simulate(a) => cmd_simulate(a, out, err),
        Command::Params(a) => cmd_params(a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

fn io_fail(path: &Path, e: io::Error) -> Failure {
    Failure::new(EXIT_NO_INPUT, format!("{}: {e}", path.display()))
}

fn out_fail(e: io::Error) -> Failure {
    Failure::new(EXIT_NO_INPUT, format!("writing output: {e}"))
}

/// Defaults merged with every `--params` entry in order, without validation.
fn load_params(src: &ParamSource) -> Result<VehicleParams, Failure> {
    let mut params = VehicleParams::default();
    for entry in &src.params {
        let path = Path::new(entry);
        let text = if entry.contains('=') && !path.exists() {
            entry.clone()
        } else {
            fs::read_to_string(path).map_err(|e| io_fail(path, e))?
        };
        params
            .merge_kv(&text)
            .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    }
    Ok(params)
}

fn load_valid_params(src: &ParamSource) -> Result<VehicleParams, Failure> {
    let params = load_params(src)?;
    params
        .validate()
        .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    Ok(params)
}

fn load_gains(src: &GainSource) -> Result<GainVector, Failure> {
    match &src.gains {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
            GainVector::from_text(&text).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))
        }
        None => Ok(GainVector::PAPER),
    }
}

fn write_pole_table(out: &mut dyn Write, poles: &[ComplexRoot], band: &PoleSpec) -> io::Result<()> {
    writeln!(out, "pole         re          im  in_band")?;
    for (i, p) in poles.iter().enumerate() {
        let flag = if band.contains(p.re) { "yes" } else { "no" };
        writeln!(out, "{:>4} {:>10.4} {:>11.4}  {flag}", i + 1, p.re, p.im)?;
    }
    Ok(())
}

fn cmd_design(a: &DesignArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let params = load_valid_params(&a.params)?;
    let mut cfg = AnnealConfig::with_seed(a.seed);
    if let Some(v) = a.initial_temp {
        cfg.initial_temp = v;
    }
    if let Some(v) = a.cooling_ratio {
        cfg.cooling_ratio = v;
    }
    if let Some(v) = a.steps_per_temp {
        cfg.steps_per_temp = v;
    }
    if let Some(v) = a.min_temp {
        cfg.min_temp = v;
    }
    if let Some(v) = a.step_scale {
        cfg.step_scale = v;
    }
    cfg.validate()
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;

    let outcome = anneal_gains(&cfg, &a.band, params.g)
        .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    let poles = closed_loop_poles(&outcome.gains, params.g)
        .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    let cost = pole_cost(&poles, &a.band);

    let mut report = || -> io::Result<()> {
        writeln!(out, "seed={}", a.seed)?;
        writeln!(out, "band={}", a.band)?;
        writeln!(out, "iterations={}", outcome.iterations)?;
        writeln!(out, "pole_cost={cost}")?;
        for (i, g) in outcome.gains.0.iter().enumerate() {
            writeln!(out, "g{}={g}", i + 1)?;
        }
        write_pole_table(out, &poles, &a.band)
    };
    report().map_err(out_fail)?;

    if let Some(path) = &a.out {
        fs::write(path, outcome.gains.to_text()).map_err(|e| io_fail(path, e))?;
    }
    if cost > 0.0 {
        let _ = writeln!(err, "search ended with poles outside {}", a.band);
        return Ok(EXIT_CRITERIA);
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let params = load_valid_params(&a.params)?;
    let gains = load_gains(&a.gains)?;
    let poles =
        closed_loop_poles(&gains, params.g).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    let cost = pole_cost(&poles, &a.band);
    let mut ok = cost == 0.0;

    write_pole_table(out, &poles, &a.band).map_err(out_fail)?;
    writeln!(out, "band={}", a.band).map_err(out_fail)?;
    writeln!(out, "pole_cost={cost}").map_err(out_fail)?;
    if a.gains.paper_gains {
        let dev = design::max_pole_deviation(&poles, &design::paper_poles())
            .expect("twelve poles on both sides");
        writeln!(out, "max_deviation_from_published={dev:.6}").map_err(out_fail)?;
        ok &= dev < PAPER_POLE_TOL;
    }
    writeln!(out, "result={}", if ok { "PASS" } else { "FAIL" }).map_err(out_fail)?;
    Ok(if ok { EXIT_OK } else { EXIT_CRITERIA })
}

fn parse_setpoint(text: &str) -> Result<Setpoint, Failure> {
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Failure::new(EXIT_USAGE, format!("bad setpoint `{text}`")))?;
    match values.as_slice() {
        &[x, y, z, psi] => Ok(Setpoint {
            p_inertial_des: [x, y, z],
            psi_des: psi,
        }),
        _ => Err(Failure::new(
            EXIT_USAGE,
            format!("setpoint needs 4 values X,Y,Z,PSI, got `{text}`"),
        )),
    }
}

fn scenario_config(a: &SimulateArgs, seed: u64) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match a.scenario {
        Scenario::Perturb => ScenarioConfig::perturbation(),
        Scenario::Random => ScenarioConfig::random_hover(seed),
        Scenario::Track => ScenarioConfig::tracking(seed),
    };
    if let Some(text) = &a.setpoint {
        if a.scenario != Scenario::Track {
            return Err(Failure::new(EXIT_USAGE, "--setpoint only applies to track"));
        }
        cfg.mode = ControlMode::Track(parse_setpoint(text)?);
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    if let Some(dt) = a.dt_physics {
        cfg.dt_physics = dt;
    }
    if let Some(dt) = a.dt_control {
        cfg.dt_control = dt;
    }
    cfg.disturbance = cfg.disturbance.with_injection(match a.injection {
        InjectionArg::Force => Injection::Force,
        InjectionArg::SpeedOffset => Injection::SpeedOffset,
    });
    cfg.validate()
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    Ok(cfg)
}

/// `dir/stem.ext` becomes `dir/stem_seedN.ext` when several runs share a path.
fn per_seed_path(path: &Path, seed: u64, several: bool) -> PathBuf {
    if !several {
        return path.to_path_buf();
    }
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}_seed{seed}"),
    };
    path.with_file_name(name)
}

fn write_run_outputs(
    a: &SimulateArgs,
    seed: u64,
    log: &SimLog,
    summary: &str,
) -> Result<(), Failure> {
    let several = a.runs > 1;
    if let Some(path) = &a.csv {
        let path = per_seed_path(path, seed, several);
        let file = fs::File::create(&path).map_err(|e| io_fail(&path, e))?;
        let mut w = io::BufWriter::new(file);
        log.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_fail(&path, e))?;
    }
    if let Some(path) = &a.summary {
        let path = per_seed_path(path, seed, several);
        fs::write(&path, summary).map_err(|e| io_fail(&path, e))?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let params = load_valid_params(&a.params)?;
    let gains = assemble_gain_matrix(&load_gains(&a.gains)?);
    let seeds: Vec<u64> = (0..a.runs).map(|i| a.seed.wrapping_add(i)).collect();
    let configs = seeds
        .iter()
        .map(|&s| scenario_config(a, s))
        .collect::<Result<Vec<_>, _>>()?;

    let results = sim::run_batch(&configs, &gains, &TrackerConfig::default(), &params);
    let mut aborted = false;
    for (&seed, result) in seeds.iter().zip(results) {
        let log = result.map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
        let summary = sim::summarize(&log);
        let mut text = format!("scenario={:?}\nseed={seed}\n", a.scenario).to_lowercase();
        if let sim::SimOutcome::Aborted { t, reason } = &log.outcome {
            aborted = true;
            text.push_str(&format!(
                "aborted_at={}\nabort_reason={reason}\n",
                sim::fmt_sig9(*t)
            ));
            let _ = writeln!(err, "seed {seed}: aborted at t={t}: {reason}");
        }
        text.push_str(&summary.to_kv_string());
        write_run_outputs(a, seed, &log, &text)?;
        write!(out, "{text}").map_err(out_fail)?;
        if a.runs > 1 {
            writeln!(out).map_err(out_fail)?;
        }
    }
    Ok(if aborted { EXIT_ABORT } else { EXIT_OK })
}

fn cmd_params(a: &ParamsArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let params = load_params(&a.params)?;
    write!(out, "{params}").map_err(out_fail)?;
    writeln!(out, "hover_rotor_speed={:.4}", params.hover_rotor_speed()).map_err(out_fail)?;
    writeln!(out, "hover_feasible={}", params.hover_feasible()).map_err(out_fail)?;
    if let Err(e) = params.validate() {
        if !params.hover_feasible() {
            let _ = writeln!(
                err,
                "warning: hover needs {:.2} rad/s per rotor but omega_max is {} rad/s",
                params.hover_rotor_speed(),
                params.omega_max
            );
        }
        return Err(Failure::new(EXIT_DATA, e.to_string()));
    }
    Ok(EXIT_OK)
}
