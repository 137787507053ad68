//! Closed-loop nonlinear simulation with seeded disturbances and CSV logs.
//!
//! The controller runs at `dt_control` with a zero-order hold on rotor
//! speeds; the plant is integrated with RK4 at `dt_physics` in between.

use std::io::{self, BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::controller::{self, wrap_angle, ControlMode, SatFlags, Setpoint, TrackerConfig};
use crate::design::GainMatrix;
use crate::numerics::{self, NumericsError};
use crate::vehicle::{
    self, idx, BodyDisturbance, ModelError, RigidState, VehicleParams, STATE_DIM,
};

pub const DEFAULT_DT_CONTROL: f64 = 0.01;
pub const DEFAULT_DT_PHYSICS: f64 = 0.001;

/// Column header of the CSV log.
pub const CSV_HEADER: &str = "t,vx,vy,vz,X,Y,Z,wx,wy,wz,phi,theta,psi,u1,u2,u3,u4,\
wm1,wm2,wm3,wm4,d_vx,d_vy,d_vz,d_wx,d_wy,d_wz,sat_flags";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Params(#[from] ModelError),
    #[error("malformed CSV log at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisturbanceMode {
    None,
    /// Constant disturbance on `[t0, t1)`, zero elsewhere.
    Pulse {
        dv: [f64; 3],
        domega: [f64; 3],
        t0: f64,
        t1: f64,
    },
    /// Zero-mean normal draws, resampled every control interval.
    Gaussian {
        std_v: f64,
        std_w: f64,
        seed: u64,
    },
}

/// How a sampled [`BodyDisturbance`] acts on the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Injection {
    /// Held over the control interval as a specific force (`dv`, m/s^2) and
    /// specific torque (`domega`, rad/s^2).
    #[default]
    Force,
    /// Added once to the speed states at the start of the interval.
    SpeedOffset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceSpec {
    pub mode: DisturbanceMode,
    pub injection: Injection,
}

impl DisturbanceSpec {
    pub fn none() -> Self {
        Self {
            mode: DisturbanceMode::None,
            injection: Injection::default(),
        }
    }

    /// Same magnitude on every linear and every angular channel.
    pub fn pulse(dv: f64, domega: f64, t0: f64, t1: f64) -> Self {
        Self {
            mode: DisturbanceMode::Pulse {
                dv: [dv; 3],
                domega: [domega; 3],
                t0,
                t1,
            },
            injection: Injection::default(),
        }
    }

    pub fn gaussian(std_v: f64, std_w: f64, seed: u64) -> Self {
        Self {
            mode: DisturbanceMode::Gaussian { std_v, std_w, seed },
            injection: Injection::default(),
        }
    }

    pub fn with_injection(mut self, injection: Injection) -> Self {
        self.injection = injection;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self.mode {
            DisturbanceMode::None => Ok(()),
            DisturbanceMode::Pulse { dv, domega, t0, t1 } => {
                if !(t0.is_finite() && t1.is_finite())
                    || t0 >= t1
                    || dv.iter().chain(&domega).any(|v| !v.is_finite())
                {
                    return Err(SimError::InvalidConfig(format!(
                        "pulse needs t0 < t1 and finite magnitudes, got [{t0}, {t1}]"
                    )));
                }
                Ok(())
            }
            DisturbanceMode::Gaussian { std_v, std_w, .. } => {
                if !(std_v >= 0.0 && std_w >= 0.0 && std_v.is_finite() && std_w.is_finite()) {
                    return Err(SimError::InvalidConfig(format!(
                        "standard deviations must be finite and >= 0, got {std_v}, {std_w}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Fresh random stream for this spec.
    pub fn rng(&self) -> ChaCha8Rng {
        let seed = match self.mode {
            DisturbanceMode::Gaussian { seed, .. } => seed,
            _ => 0,
        };
        ChaCha8Rng::seed_from_u64(seed)
    }
}

// Window edges are compared with a little slack so that `k * dt` lands on
// the intended side of `t1`.
const WINDOW_EPS: f64 = 1e-9;

/// Disturbance in effect at `t`. Gaussian draws consume six normals from
/// `rng`, in the order vx, vy, vz, wx, wy, wz.
pub fn sample_disturbance(spec: &DisturbanceSpec, t: f64, rng: &mut ChaCha8Rng) -> BodyDisturbance {
    match spec.mode {
        DisturbanceMode::None => BodyDisturbance::default(),
        DisturbanceMode::Pulse { dv, domega, t0, t1 } => {
            if t >= t0 - WINDOW_EPS && t < t1 - WINDOW_EPS {
                BodyDisturbance { dv, domega }
            } else {
                BodyDisturbance::default()
            }
        }
        DisturbanceMode::Gaussian { std_v, std_w, .. } => {
            let mut draw = |std: f64| {
                std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            };
            let dv = [draw(std_v), draw(std_v), draw(std_v)];
            let domega = [draw(std_w), draw(std_w), draw(std_w)];
            BodyDisturbance { dv, domega }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub mode: ControlMode,
    pub duration: f64,
    pub dt_physics: f64,
    pub dt_control: f64,
    pub disturbance: DisturbanceSpec,
    pub initial: RigidState,
}

impl ScenarioConfig {
    pub fn new(mode: ControlMode, duration: f64, disturbance: DisturbanceSpec) -> Self {
        Self {
            mode,
            duration,
            dt_physics: DEFAULT_DT_PHYSICS,
            dt_control: DEFAULT_DT_CONTROL,
            disturbance,
            initial: RigidState::default(),
        }
    }

    /// Hover under a 0.5 s pulse of 1 m/s and 0.1 rad/s on every channel.
    pub fn perturbation() -> Self {
        Self::new(
            ControlMode::Hover,
            5.0,
            DisturbanceSpec::pulse(1.0, 0.1, 0.0, 0.5),
        )
    }

    /// Hover under heavy normally distributed disturbances.
    pub fn random_hover(seed: u64) -> Self {
        Self::new(
            ControlMode::Hover,
            10.0,
            DisturbanceSpec::gaussian(10.0, 1.0, seed),
        )
    }

    /// Fly from the origin to (10, 5, -2) m with yaw 3 rad under moderate
    /// disturbances.
    pub fn tracking(seed: u64) -> Self {
        Self::new(
            ControlMode::Track(Setpoint {
                p_inertial_des: [10.0, 5.0, -2.0],
                psi_des: 3.0,
            }),
            15.0,
            DisturbanceSpec::gaussian(1.0, 0.1, seed),
        )
    }

    /// Number of control intervals.
    pub fn intervals(&self) -> usize {
        (self.duration / self.dt_control).round() as usize
    }

    fn substeps(&self) -> usize {
        (self.dt_control / self.dt_physics).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        if !(self.dt_physics > 0.0 && self.dt_physics <= self.dt_control) {
            return bad(format!(
                "need 0 < dt_physics <= dt_control, got {} and {}",
                self.dt_physics, self.dt_control
            ));
        }
        let ratio = self.dt_control / self.dt_physics;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return bad(format!(
                "dt_control {} is not an integer multiple of dt_physics {}",
                self.dt_control, self.dt_physics
            ));
        }
        let n = self.duration / self.dt_control;
        if n.round() < 1.0 || (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return bad(format!(
                "duration {} is not a whole number of control intervals",
                self.duration
            ));
        }
        if !self.initial.is_finite() {
            return bad("initial state is not finite".into());
        }
        if let ControlMode::Track(sp) = self.mode {
            if sp.p_inertial_des.iter().any(|v| !v.is_finite()) || !sp.psi_des.is_finite() {
                return bad("setpoint is not finite".into());
            }
        }
        self.disturbance.validate()
    }

    fn reference(&self) -> Option<Setpoint> {
        match self.mode {
            ControlMode::Hover => None,
            ControlMode::Track(sp) => Some(sp),
        }
    }
}

/// One logged control interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: [f64; STATE_DIM],
    pub u: [f64; 4],
    pub rotors: [f64; 4],
    pub disturbance: [f64; 6],
    pub flags: SatFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimOutcome {
    Completed,
    Aborted { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
    pub outcome: SimOutcome,
    /// Setpoint of a tracking run; hover runs regulate to the origin.
    pub reference: Option<Setpoint>,
    pub dt_control: f64,
}

impl SimLog {
    pub fn completed(&self) -> bool {
        self.outcome == SimOutcome::Completed
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for row in &self.rows {
            let mut line = fmt_sig9(row.t);
            for v in row
                .state
                .iter()
                .chain(&row.u)
                .chain(&row.rotors)
                .chain(&row.disturbance)
            {
                line.push(',');
                line.push_str(&fmt_sig9(*v));
            }
            writeln!(out, "{line},{}", row.flags.bits())?;
        }
        Ok(())
    }
}

/// Parses rows written by [`SimLog::write_csv`].
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<LogRow>, SimError> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(CSV_HEADER) {
        return Err(SimError::Csv {
            line: 1,
            msg: "missing or unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 28 {
            return Err(SimError::Csv {
                line: line_no,
                msg: format!("expected 28 fields, found {}", fields.len()),
            });
        }
        let values = fields[..27]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimError::Csv {
                line: line_no,
                msg: e.to_string(),
            })?;
        let flags = fields[27].parse::<u8>().map_err(|e| SimError::Csv {
            line: line_no,
            msg: e.to_string(),
        })?;
        rows.push(LogRow {
            t: values[0],
            state: values[1..13].try_into().expect("12 values"),
            u: values[13..17].try_into().expect("4 values"),
            rotors: values[17..21].try_into().expect("4 values"),
            disturbance: values[21..27].try_into().expect("6 values"),
            flags: SatFlags::from_bits(flags),
        });
    }
    Ok(rows)
}

/// Formats like C's `%.9g`.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Error)]
enum StepError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Runs one scenario. Gimbal-guard hits and non-finite states end the run
/// early; the partial log is returned with [`SimOutcome::Aborted`].
pub fn run_scenario(
    cfg: &ScenarioConfig,
    gains: &GainMatrix,
    tracker: &TrackerConfig,
    params: &VehicleParams,
) -> Result<SimLog, SimError> {
    cfg.validate()?;
    params.validate()?;

    let n = cfg.intervals();
    let substeps = cfg.substeps();
    let mut rng = cfg.disturbance.rng();
    let mut x = cfg.initial.to_array();
    let mut rows = Vec::with_capacity(n + 1);
    let mut outcome = SimOutcome::Completed;

    'intervals: for k in 0..=n {
        let t = k as f64 * cfg.dt_control;
        let dist = sample_disturbance(&cfg.disturbance, t, &mut rng);
        if cfg.disturbance.injection == Injection::SpeedOffset {
            for i in 0..3 {
                x[idx::VX + i] += dist.dv[i];
                x[idx::WX + i] += dist.domega[i];
            }
        }
        let state = RigidState::from_array(&x);
        if !state.is_finite() {
            outcome = SimOutcome::Aborted {
                t,
                reason: "non-finite state".into(),
            };
            break;
        }
        let out = match controller::control_step(&state, &cfg.mode, gains, tracker, params) {
            Ok(out) => out,
            Err(e) => {
                outcome = SimOutcome::Aborted {
                    t,
                    reason: e.to_string(),
                };
                break;
            }
        };
        rows.push(LogRow {
            t,
            state: x,
            u: out.u,
            rotors: out.rotors.0,
            disturbance: dist.to_array(),
            flags: out.flags,
        });
        if k == n {
            break;
        }

        let force = match cfg.disturbance.injection {
            Injection::Force => dist,
            Injection::SpeedOffset => BodyDisturbance::default(),
        };
        for j in 0..substeps {
            let ts = t + j as f64 * cfg.dt_physics;
            let step = numerics::rk4_step::<STATE_DIM, StepError, _>(
                |_, s| {
                    Ok(vehicle::nonlinear_deriv(
                        &RigidState::from_array(s),
                        &out.rotors,
                        &force,
                        params,
                    )?)
                },
                &x,
                ts,
                cfg.dt_physics,
            );
            match step {
                Ok(next) => x = next,
                Err(e) => {
                    outcome = SimOutcome::Aborted {
                        t: ts,
                        reason: e.to_string(),
                    };
                    break 'intervals;
                }
            }
        }
    }

    Ok(SimLog {
        rows,
        outcome,
        reference: cfg.reference(),
        dt_control: cfg.dt_control,
    })
}

/// Runs independent scenarios on scoped threads; results keep input order.
pub fn run_batch(
    configs: &[ScenarioConfig],
    gains: &GainMatrix,
    tracker: &TrackerConfig,
    params: &VehicleParams,
) -> Vec<Result<SimLog, SimError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || run_scenario(cfg, gains, tracker, params)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

/// Channels checked for settling: inertial position and Euler angles.
pub const SETTLING_CHANNELS: [usize; 6] = [idx::X, idx::Y, idx::Z, idx::PHI, idx::THETA, idx::PSI];

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: usize,
    pub completed: bool,
    /// Largest |deviation from reference| per state channel.
    pub max_abs_dev: [f64; STATE_DIM],
    /// Largest position deviation on any axis.
    pub max_position_excursion: f64,
    /// End of the last interval with a nonzero disturbance.
    pub last_disturbance_end: Option<f64>,
    /// Time of the last sample where a settling channel lies outside 2% of
    /// its own peak deviation.
    pub settling_time: f64,
    /// `settling_time` measured from `last_disturbance_end`, never negative.
    pub settling_after_disturbance: f64,
    /// Euclidean position error at the final sample.
    pub final_position_error: f64,
    /// Wrapped yaw error at the final sample.
    pub final_yaw_error: f64,
    /// Fraction of samples with the rotor clamp flag set.
    pub rotor_saturation_duty: f64,
}

/// Deviation of each state channel from the log's reference at one row.
pub fn deviation(row: &LogRow, reference: Option<&Setpoint>) -> [f64; STATE_DIM] {
    let mut dev = row.state;
    if let Some(sp) = reference {
        for i in 0..3 {
            dev[idx::X + i] -= sp.p_inertial_des[i];
        }
        dev[idx::PSI] = wrap_angle(dev[idx::PSI] - sp.psi_des);
    }
    dev
}

pub fn summarize(log: &SimLog) -> Summary {
    let reference = log.reference.as_ref();
    let devs: Vec<[f64; STATE_DIM]> = log.rows.iter().map(|r| deviation(r, reference)).collect();

    let mut max_abs_dev = [0.0_f64; STATE_DIM];
    for d in &devs {
        for (m, v) in max_abs_dev.iter_mut().zip(d) {
            *m = m.max(v.abs());
        }
    }
    let max_position_excursion = max_abs_dev[idx::X..=idx::Z]
        .iter()
        .copied()
        .fold(0.0, f64::max);

    let last_disturbance_end = log
        .rows
        .iter()
        .rev()
        .find(|r| r.disturbance.iter().any(|v| *v != 0.0))
        .map(|r| r.t + log.dt_control);

    let mut settling_time: f64 = log.rows.first().map_or(0.0, |r| r.t);
    for &c in &SETTLING_CHANNELS {
        let band = 0.02 * max_abs_dev[c];
        if let Some(i) = devs.iter().rposition(|d| d[c].abs() > band) {
            settling_time = settling_time.max(log.rows[i].t);
        }
    }
    let settling_after_disturbance = (settling_time - last_disturbance_end.unwrap_or(0.0)).max(0.0);

    let (final_position_error, final_yaw_error) = devs.last().map_or((0.0, 0.0), |d| {
        let pos = (d[idx::X].powi(2) + d[idx::Y].powi(2) + d[idx::Z].powi(2)).sqrt();
        let yaw = if reference.is_some() {
            d[idx::PSI].abs()
        } else {
            wrap_angle(d[idx::PSI]).abs()
        };
        (pos, yaw)
    });

    let rotor_saturation_duty = if log.rows.is_empty() {
        0.0
    } else {
        log.rows.iter().filter(|r| r.flags.rotor).count() as f64 / log.rows.len() as f64
    };

    Summary {
        rows: log.rows.len(),
        completed: log.completed(),
        max_abs_dev,
        max_position_excursion,
        last_disturbance_end,
        settling_time,
        settling_after_disturbance,
        final_position_error,
        final_yaw_error,
        rotor_saturation_duty,
    }
}

impl Summary {
    /// Flat `key=value` text, one entry per line.
    pub fn to_kv_string(&self) -> String {
        const NAMES: [&str; STATE_DIM] = [
            "vx", "vy", "vz", "X", "Y", "Z", "wx", "wy", "wz", "phi", "theta", "psi",
        ];
        let mut s = String::new();
        s.push_str(&format!("rows={}\n", self.rows));
        s.push_str(&format!("completed={}\n", self.completed));
        for (name, v) in NAMES.iter().zip(&self.max_abs_dev) {
            s.push_str(&format!("max_abs_{name}={}\n", fmt_sig9(*v)));
        }
        s.push_str(&format!(
            "max_position_excursion={}\n",
            fmt_sig9(self.max_position_excursion)
        ));
        match self.last_disturbance_end {
            Some(t) => s.push_str(&format!("last_disturbance_end={}\n", fmt_sig9(t))),
            None => s.push_str("last_disturbance_end=none\n"),
        }
        s.push_str(&format!("settling_time={}\n", fmt_sig9(self.settling_time)));
        s.push_str(&format!(
            "settling_after_disturbance={}\n",
            fmt_sig9(self.settling_after_disturbance)
        ));
        s.push_str(&format!(
            "final_position_error={}\n",
            fmt_sig9(self.final_position_error)
        ));
        s.push_str(&format!(
            "final_yaw_error={}\n",
            fmt_sig9(self.final_yaw_error)
        ));
        s.push_str(&format!(
            "rotor_saturation_duty={}\n",
            fmt_sig9(self.rotor_saturation_duty)
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{assemble_gain_matrix, GainVector};

    fn zero_row(t: f64) -> LogRow {
        LogRow {
            t,
            state: [0.0; STATE_DIM],
            u: [0.0; 4],
            rotors: [0.0; 4],
            disturbance: [0.0; 6],
            flags: SatFlags::default(),
        }
    }

    #[test]
    fn no_disturbance_is_zero() {
        let spec = DisturbanceSpec::none();
        let mut rng = spec.rng();
        assert!(sample_disturbance(&spec, 0.3, &mut rng).is_zero());
    }

    #[test]
    fn pulse_window() {
        let spec = DisturbanceSpec::pulse(1.0, 0.1, 0.0, 0.5);
        let mut rng = spec.rng();
        let d = sample_disturbance(&spec, 0.25, &mut rng);
        assert_eq!(d.dv, [1.0; 3]);
        assert_eq!(d.domega, [0.1; 3]);
        assert!(sample_disturbance(&spec, 50.0 * 0.01, &mut rng).is_zero());
        assert!(!sample_disturbance(&spec, 49.0 * 0.01, &mut rng).is_zero());
        assert!(sample_disturbance(&spec, 0.7, &mut rng).is_zero());
    }

    #[test]
    fn gaussian_draws_are_seeded() {
        let spec = DisturbanceSpec::gaussian(2.0, 0.5, 11);
        let (mut a, mut b) = (spec.rng(), spec.rng());
        for i in 0..10 {
            let t = i as f64 * 0.01;
            assert_eq!(
                sample_disturbance(&spec, t, &mut a),
                sample_disturbance(&spec, t, &mut b)
            );
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScenarioConfig::perturbation();
        cfg.validate().unwrap();
        assert_eq!(cfg.intervals(), 500);
        cfg.dt_physics = 0.003;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::perturbation();
        cfg.dt_physics = 0.02;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::perturbation();
        cfg.duration = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::perturbation();
        cfg.disturbance = DisturbanceSpec::pulse(1.0, 0.1, 0.5, 0.5);
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::random_hover(1);
        cfg.disturbance = DisturbanceSpec::gaussian(-1.0, 0.1, 0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hover_equilibrium_is_fixed_point() {
        let cfg = ScenarioConfig::new(ControlMode::Hover, 1.0, DisturbanceSpec::none());
        let log = run_scenario(
            &cfg,
            &assemble_gain_matrix(&GainVector::PAPER),
            &TrackerConfig::default(),
            &VehicleParams::default(),
        )
        .unwrap();
        assert!(log.completed());
        assert_eq!(log.rows.len(), 101);
        for row in &log.rows {
            assert!(row.state.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn gimbal_abort_keeps_partial_log() {
        let mut cfg = ScenarioConfig::new(ControlMode::Hover, 1.0, DisturbanceSpec::none());
        cfg.initial.euler = [0.0, 1.52, 0.0];
        let log = run_scenario(
            &cfg,
            &assemble_gain_matrix(&GainVector::PAPER),
            &TrackerConfig::default(),
            &VehicleParams::default(),
        )
        .unwrap();
        assert!(matches!(log.outcome, SimOutcome::Aborted { .. }));
        assert!(log.rows.is_empty());
    }

    #[test]
    fn summary_of_zero_log() {
        let log = SimLog {
            rows: (0..5).map(|i| zero_row(i as f64 * 0.01)).collect(),
            outcome: SimOutcome::Completed,
            reference: None,
            dt_control: 0.01,
        };
        let s = summarize(&log);
        assert_eq!(s.max_abs_dev, [0.0; STATE_DIM]);
        assert_eq!(s.max_position_excursion, 0.0);
        assert_eq!(s.settling_time, 0.0);
        assert_eq!(s.settling_after_disturbance, 0.0);
        assert_eq!(s.final_position_error, 0.0);
        assert_eq!(s.rotor_saturation_duty, 0.0);
        assert_eq!(s.last_disturbance_end, None);
    }

    #[test]
    fn summary_single_step_settling() {
        let mut rows: Vec<LogRow> = (0..10).map(|i| zero_row(i as f64 * 0.01)).collect();
        rows[4].state[idx::THETA] = 0.2;
        let log = SimLog {
            rows,
            outcome: SimOutcome::Completed,
            reference: None,
            dt_control: 0.01,
        };
        let s = summarize(&log);
        assert_eq!(s.settling_time, 4.0 * 0.01);
        assert_eq!(s.max_abs_dev[idx::THETA], 0.2);
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-2.5), "-2.5");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(123456789.0), "123456789");
        assert_eq!(fmt_sig9(1234567891.0), "1.23456789e9");
        assert_eq!(fmt_sig9(1.5e-7), "1.5e-7");
        assert_eq!(fmt_sig9(558.691653451), "558.691653");
    }

    #[test]
    fn csv_header_is_exact() {
        let log = SimLog {
            rows: vec![zero_row(0.0)],
            outcome: SimOutcome::Completed,
            reference: None,
            dt_control: 0.01,
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,vx,vy,vz,X,Y,Z,wx,wy,wz,phi,theta,psi,u1,u2,u3,u4,wm1,wm2,wm3,wm4,\
             d_vx,d_vy,d_vz,d_wx,d_wy,d_wz,sat_flags"
        );
        assert_eq!(lines.next().unwrap().split(',').count(), 28);
        assert!(read_csv("bad header\n".as_bytes()).is_err());
    }
}
