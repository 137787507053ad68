//! Hover (`U = -G X`) and tracking (`U = -G e`) control laws.

use std::f64::consts::PI;
use std::fmt;

use crate::design::GainMatrix;
use crate::vehicle::{
    self, idx, mixer, ModelError, RigidState, RotorSpeeds, VehicleParams, INPUT_DIM, STATE_DIM,
};

/// Desired inertial position (NED, m) and yaw (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Setpoint {
    pub p_inertial_des: [f64; 3],
    pub psi_des: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Position error to speed error, 1/s.
    pub k1: f64,
    /// Yaw error to yaw-rate error, 1/s.
    pub k2: f64,
    /// Per-component limit on the linear speed error, m/s.
    pub v_sat: f64,
    /// Limit on the yaw-rate error, rad/s.
    pub w_sat: f64,
}

#[allow(clippy::approx_constant)]
impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            v_sat: 1.0,
            w_sat: 3.14,
        }
    }
}

/// Engineered error vector in the state ordering. Position and yaw slots are
/// always zero; their errors are folded into the speed and yaw-rate slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState {
    pub e: [f64; STATE_DIM],
    pub speed_saturated: bool,
    pub rate_saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlMode {
    /// Raw state feedback towards the origin.
    Hover,
    Track(Setpoint),
}

/// Saturation events of one control step, packed as a bit mask in logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SatFlags {
    pub speed_error: bool,
    pub rate_error: bool,
    pub rotor: bool,
}

impl SatFlags {
    pub const SPEED_ERROR: u8 = 1;
    pub const RATE_ERROR: u8 = 2;
    pub const ROTOR: u8 = 4;

    pub fn bits(&self) -> u8 {
        ((self.speed_error as u8) * Self::SPEED_ERROR)
            | ((self.rate_error as u8) * Self::RATE_ERROR)
            | ((self.rotor as u8) * Self::ROTOR)
    }

    pub fn from_bits(bits: u8) -> Self {
        Self {
            speed_error: bits & Self::SPEED_ERROR != 0,
            rate_error: bits & Self::RATE_ERROR != 0,
            rotor: bits & Self::ROTOR != 0,
        }
    }

    pub fn any(&self) -> bool {
        self.bits() != 0
    }
}

impl fmt::Display for SatFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: [f64; INPUT_DIM],
    pub rotors: RotorSpeeds,
    pub flags: SatFlags,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// `u = -G x`.
pub fn hover_input(x: &[f64; STATE_DIM], gains: &GainMatrix) -> [f64; INPUT_DIM] {
    gains.apply(x).map(|v| -v)
}

pub fn tracking_error(state: &RigidState, sp: &Setpoint, cfg: &TrackerConfig) -> ErrorState {
    let offset: [f64; 3] = std::array::from_fn(|i| state.p_inertial[i] - sp.p_inertial_des[i]);
    let r_ib = vehicle::rotation_inertial_to_body(state.euler);
    let pos_err = vehicle::rotate(&r_ib, offset);

    let mut e = [0.0; STATE_DIM];
    let mut speed_saturated = false;
    for i in 0..3 {
        let raw = state.v_body[i] + cfg.k1 * pos_err[i];
        let clamped = raw.clamp(-cfg.v_sat, cfg.v_sat);
        speed_saturated |= clamped != raw;
        e[idx::VX + i] = clamped;
    }

    e[idx::WX] = state.omega_body[0];
    e[idx::WY] = state.omega_body[1];
    let yaw_err = wrap_angle(state.euler[2] - sp.psi_des);
    let raw = state.omega_body[2] + cfg.k2 * yaw_err;
    let rate = raw.clamp(-cfg.w_sat, cfg.w_sat);
    e[idx::WZ] = rate;

    e[idx::PHI] = state.euler[0];
    e[idx::THETA] = state.euler[1];

    ErrorState {
        e,
        speed_saturated,
        rate_saturated: rate != raw,
    }
}

/// One controller evaluation: error construction, `u = -G e`, and the mixer.
pub fn control_step(
    state: &RigidState,
    mode: &ControlMode,
    gains: &GainMatrix,
    cfg: &TrackerConfig,
    params: &VehicleParams,
) -> Result<ControlOutput, ModelError> {
    state.check_gimbal()?;
    let (x, mut flags) = match mode {
        ControlMode::Hover => (state.feedback_vector(), SatFlags::default()),
        ControlMode::Track(sp) => {
            let err = tracking_error(state, sp, cfg);
            let flags = SatFlags {
                speed_error: err.speed_saturated,
                rate_error: err.rate_saturated,
                rotor: false,
            };
            (err.e, flags)
        }
    };
    let u = hover_input(&x, gains);
    let mixed = mixer(u, params);
    flags.rotor = mixed.clamped;
    Ok(ControlOutput {
        u,
        rotors: mixed.rotors,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{assemble_gain_matrix, GainVector};

    fn paper_gains() -> GainMatrix {
        assemble_gain_matrix(&GainVector::PAPER)
    }

    #[test]
    fn hover_law_examples() {
        let g = paper_gains();
        assert_eq!(hover_input(&[0.0; 12], &g), [0.0; 4]);

        let mut x = [0.0; 12];
        x[idx::Z] = 1.0;
        assert_eq!(hover_input(&x, &g)[0], -608.0);

        let mut x = [0.0; 12];
        x[idx::THETA] = 0.1;
        assert!((hover_input(&x, &g)[2] + 55.27).abs() < 1e-9);
    }

    #[test]
    fn error_at_setpoint_is_zero() {
        let state = RigidState {
            p_inertial: [10.0, 5.0, -2.0],
            euler: [0.0, 0.0, 3.0],
            ..Default::default()
        };
        let sp = Setpoint {
            p_inertial_des: [10.0, 5.0, -2.0],
            psi_des: 3.0,
        };
        let err = tracking_error(&state, &sp, &TrackerConfig::default());
        assert_eq!(err.e, [0.0; 12]);
        assert!(!err.speed_saturated && !err.rate_saturated);
    }

    #[test]
    fn speed_error_saturates_after_combination() {
        let sp = Setpoint {
            p_inertial_des: [10.0, 5.0, -2.0],
            psi_des: 0.0,
        };
        let err = tracking_error(&RigidState::default(), &sp, &TrackerConfig::default());
        assert_eq!(&err.e[0..3], &[-1.0, -1.0, 1.0]);
        assert!(err.speed_saturated);

        // A speed that cancels the position term must not be clamped first.
        let state = RigidState {
            v_body: [9.5, 0.0, 0.0],
            ..Default::default()
        };
        let err = tracking_error(&state, &sp, &TrackerConfig::default());
        assert!((err.e[idx::VX] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn yaw_rate_error() {
        let state = RigidState {
            euler: [0.0, 0.0, 3.0],
            ..Default::default()
        };
        let err = tracking_error(&state, &Setpoint::default(), &TrackerConfig::default());
        assert_eq!(err.e[idx::WZ], 3.0);
        assert!(!err.rate_saturated);
        assert_eq!(err.e[idx::PSI], 0.0);
    }

    #[test]
    fn yaw_error_takes_the_short_way() {
        let state = RigidState {
            euler: [0.0, 0.0, -3.0],
            ..Default::default()
        };
        let sp = Setpoint {
            psi_des: 3.0,
            ..Default::default()
        };
        let err = tracking_error(&state, &sp, &TrackerConfig::default());
        assert!((err.e[idx::WZ] - (2.0 * PI - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.5), 0.5);
    }

    #[test]
    fn control_step_at_setpoint_hovers() {
        let params = VehicleParams::default();
        let g = paper_gains();
        let cfg = TrackerConfig::default();
        let sp = Setpoint {
            p_inertial_des: [1.0, 2.0, -3.0],
            psi_des: 0.4,
        };
        let state = RigidState {
            p_inertial: sp.p_inertial_des,
            euler: [0.0, 0.0, 0.4],
            ..Default::default()
        };
        let tracked = control_step(&state, &ControlMode::Track(sp), &g, &cfg, &params).unwrap();
        for w in tracked.rotors.0 {
            assert!((w - params.hover_rotor_speed()).abs() < 1e-9);
        }
        assert!(!tracked.flags.any());

        let hover = control_step(
            &RigidState::default(),
            &ControlMode::Hover,
            &g,
            &cfg,
            &params,
        )
        .unwrap();
        assert_eq!(hover, tracked);
    }

    #[test]
    fn altitude_demand_bounded_by_speed_saturation() {
        let params = VehicleParams::default();
        let sp = Setpoint {
            p_inertial_des: [0.0, 0.0, -100.0],
            psi_des: 0.0,
        };
        let out = control_step(
            &RigidState::default(),
            &ControlMode::Track(sp),
            &paper_gains(),
            &TrackerConfig::default(),
            &params,
        )
        .unwrap();
        assert!((out.u[0] + 32.8).abs() < 1e-12);
        assert!(out.flags.speed_error);
    }

    #[test]
    fn gimbal_guard_propagates() {
        let state = RigidState {
            euler: [0.0, 1.5, 0.0],
            ..Default::default()
        };
        let res = control_step(
            &state,
            &ControlMode::Hover,
            &paper_gains(),
            &TrackerConfig::default(),
            &VehicleParams::default(),
        );
        assert!(matches!(res, Err(ModelError::GimbalProximity { .. })));
    }

    #[test]
    fn flag_bits_round_trip() {
        for bits in 0..8u8 {
            assert_eq!(SatFlags::from_bits(bits).bits(), bits);
        }
    }
}
