//! Quadrotor rigid-body model: parameters, attitude kinematics, the nonlinear
//! equations of motion, their hover linearization and the rotor mixer.
//!
//! Frames are NED: inertial z and body z both point down, so collective
//! thrust acts along body -z and hover needs `w1 = g m / k`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numerics::Mat;

/// Pitch magnitude beyond which Euler-rate kinematics are refused.
pub const GIMBAL_LIMIT: f64 = 85.0 * std::f64::consts::PI / 180.0;

/// Length of the full state vector.
pub const STATE_DIM: usize = 12;
/// Length of the input vector `(u1, u2, u3, u4)`.
pub const INPUT_DIM: usize = 4;

/// Indices into the 12-element state ordering
/// `(vx, vy, vz, x, y, z, wx, wy, wz, phi, theta, psi)`.
pub mod idx {
    pub const VX: usize = 0;
    pub const VY: usize = 1;
    pub const VZ: usize = 2;
    pub const X: usize = 3;
    pub const Y: usize = 4;
    pub const Z: usize = 5;
    pub const WX: usize = 6;
    pub const WY: usize = 7;
    pub const WZ: usize = 8;
    pub const PHI: usize = 9;
    pub const THETA: usize = 10;
    pub const PSI: usize = 11;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("pitch {theta:.4} rad is within the gimbal guard (|theta| >= 85 deg)")]
    GimbalProximity { theta: f64 },
    #[error("non-physical vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("unknown parameter key `{0}`")]
    UnknownKey(String),
    #[error("malformed parameter line `{0}`")]
    Malformed(String),
}

/// Physical constants of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Half distance between opposite rotors, m.
    pub l: f64,
    /// Mass, kg.
    pub m: f64,
    /// Rotor speed squared to thrust, N s^2.
    pub k: f64,
    /// Rotor speed squared to drag torque, N m s^2.
    pub b: f64,
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    /// Maximum rotor speed, rad/s.
    pub omega_max: f64,
    /// Gravitational acceleration, m/s^2.
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            l: 0.27,
            m: 1.4,
            k: 11e-6,
            b: 1.1e-6,
            ix: 8.1e-3,
            iy: 8.1e-3,
            iz: 14.2e-3,
            omega_max: 637.75,
            g: 9.81,
        }
    }
}

const PARAM_KEYS: [&str; 9] = ["L", "m", "k", "b", "Ix", "Iy", "Iz", "omega_max", "g"];

impl VehicleParams {
    /// Rotor speed at which the four rotors together carry the weight.
    pub fn hover_rotor_speed(&self) -> f64 {
        (self.g * self.m / (4.0 * self.k)).sqrt()
    }

    pub fn hover_feasible(&self) -> bool {
        self.hover_rotor_speed() <= self.omega_max
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (key, value) in PARAM_KEYS.iter().zip(self.values()) {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParams(format!(
                    "{key} = {value} must be finite and positive"
                )));
            }
        }
        if !self.hover_feasible() {
            return Err(ModelError::InvalidParams(format!(
                "hover rotor speed {:.2} rad/s exceeds omega_max = {} rad/s",
                self.hover_rotor_speed(),
                self.omega_max
            )));
        }
        Ok(())
    }

    fn values(&self) -> [f64; 9] {
        [
            self.l,
            self.m,
            self.k,
            self.b,
            self.ix,
            self.iy,
            self.iz,
            self.omega_max,
            self.g,
        ]
    }

    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "L" => &mut self.l,
            "m" => &mut self.m,
            "k" => &mut self.k,
            "b" => &mut self.b,
            "Ix" => &mut self.ix,
            "Iy" => &mut self.iy,
            "Iz" => &mut self.iz,
            "omega_max" => &mut self.omega_max,
            "g" => &mut self.g,
            _ => return None,
        })
    }

    /// Applies a single `key=value` override. No validation is done here.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ModelError> {
        *self
            .slot(key)
            .ok_or_else(|| ModelError::UnknownKey(key.to_string()))? = value;
        Ok(())
    }

    /// Merges a flat `key = value` text (one pair per line, `#` comments)
    /// into `self`.
    pub fn merge_kv(&mut self, text: &str) -> Result<(), ModelError> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Malformed(line.to_string()))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| ModelError::Malformed(line.to_string()))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        PARAM_KEYS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

impl FromStr for VehicleParams {
    type Err = ModelError;

    /// Parses a key-value text on top of the default parameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut params = VehicleParams::default();
        params.merge_kv(s)?;
        Ok(params)
    }
}

impl fmt::Display for VehicleParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv_string())
    }
}

/// Full vehicle state. Position is inertial (NED); velocities are body-axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidState {
    pub v_body: [f64; 3],
    pub p_inertial: [f64; 3],
    pub omega_body: [f64; 3],
    /// Roll, pitch, yaw.
    pub euler: [f64; 3],
}

impl RigidState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let mut x = [0.0; STATE_DIM];
        x[0..3].copy_from_slice(&self.v_body);
        x[3..6].copy_from_slice(&self.p_inertial);
        x[6..9].copy_from_slice(&self.omega_body);
        x[9..12].copy_from_slice(&self.euler);
        x
    }

    pub fn from_array(x: &[f64; STATE_DIM]) -> Self {
        Self {
            v_body: [x[0], x[1], x[2]],
            p_inertial: [x[3], x[4], x[5]],
            omega_body: [x[6], x[7], x[8]],
            euler: [x[9], x[10], x[11]],
        }
    }

    /// Inertial position expressed in the current body axes.
    pub fn body_position(&self) -> [f64; 3] {
        rotate(&rotation_inertial_to_body(self.euler), self.p_inertial)
    }

    /// State vector with the position slots in body axes, as used by the
    /// linear controller.
    pub fn feedback_vector(&self) -> [f64; STATE_DIM] {
        let mut x = self.to_array();
        x[3..6].copy_from_slice(&self.body_position());
        x
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn check_gimbal(&self) -> Result<(), ModelError> {
        check_pitch(self.euler[1])
    }
}

fn check_pitch(theta: f64) -> Result<(), ModelError> {
    if theta.abs() >= GIMBAL_LIMIT || !theta.is_finite() {
        Err(ModelError::GimbalProximity { theta })
    } else {
        Ok(())
    }
}

/// Rotor speeds `(wM1, wM2, wM3, wM4)`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorSpeeds(pub [f64; 4]);

impl RotorSpeeds {
    pub fn uniform(speed: f64) -> Self {
        Self([speed; 4])
    }

    /// The aggregates `(w1, w2, w3, w4)`: total, roll and pitch differentials
    /// and the yaw (spin-direction) differential of squared speeds.
    pub fn aggregates(&self) -> [f64; 4] {
        let [s1, s2, s3, s4] = self.0.map(|w| w * w);
        [s1 + s2 + s3 + s4, s2 - s4, s1 - s3, s1 - s2 + s3 - s4]
    }
}

/// Additive disturbance on the linear and angular speed channels.
///
/// How the simulator applies it (as a rate through the force/torque channel
/// or as a one-off speed jump) is decided by the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyDisturbance {
    pub dv: [f64; 3],
    pub domega: [f64; 3],
}

impl BodyDisturbance {
    pub fn is_zero(&self) -> bool {
        self.dv.iter().chain(&self.domega).all(|v| *v == 0.0)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.dv[0],
            self.dv[1],
            self.dv[2],
            self.domega[0],
            self.domega[1],
            self.domega[2],
        ]
    }
}

/// Z-Y-X rotation taking inertial-frame vectors into the body frame.
pub fn rotation_inertial_to_body(euler: [f64; 3]) -> Mat {
    let [phi, theta, psi] = euler;
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Mat::from_vec(
        3,
        3,
        vec![
            ct * cp,
            ct * sp,
            -st,
            sf * st * cp - cf * sp,
            sf * st * sp + cf * cp,
            sf * ct,
            cf * st * cp + sf * sp,
            cf * st * sp - sf * cp,
            cf * ct,
        ],
    )
    .expect("3x3")
}

pub(crate) fn rotate(r: &Mat, v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = r.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
    }
    out
}

pub(crate) fn rotate_transposed(r: &Mat, v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|i| r[(i, j)] * v[i]).sum();
    }
    out
}

/// Z-Y-X Euler angle rates from body angular velocity.
pub fn euler_rates(euler: [f64; 3], omega_body: [f64; 3]) -> Result<[f64; 3], ModelError> {
    let [phi, theta, _] = euler;
    check_pitch(theta)?;
    let [wx, wy, wz] = omega_body;
    let (sf, cf) = phi.sin_cos();
    let lateral = wy * sf + wz * cf;
    Ok([
        wx + theta.tan() * lateral,
        wy * cf - wz * sf,
        lateral / theta.cos(),
    ])
}

/// Time derivative of the 12-element state under the given rotor speeds.
///
/// `dist` enters as a force per unit mass (`dv`, m/s^2) and torque per unit
/// inertia (`domega`, rad/s^2); pass [`BodyDisturbance::default`] for none.
pub fn nonlinear_deriv(
    state: &RigidState,
    rotors: &RotorSpeeds,
    dist: &BodyDisturbance,
    params: &VehicleParams,
) -> Result<[f64; STATE_DIM], ModelError> {
    let [phi, theta, _] = state.euler;
    let euler_dot = euler_rates(state.euler, state.omega_body)?;
    let [w1, w2, w3, w4] = rotors.aggregates();
    let VehicleParams {
        l,
        m,
        k,
        b,
        ix,
        iy,
        iz,
        g,
        ..
    } = *params;

    let mut d = [0.0; STATE_DIM];
    d[idx::VX] = -g * theta.sin() + dist.dv[0];
    d[idx::VY] = g * phi.sin() * theta.cos() + dist.dv[1];
    d[idx::VZ] = g * phi.cos() * theta.cos() - w1 * k / m + dist.dv[2];

    let p_dot = rotate_transposed(&rotation_inertial_to_body(state.euler), state.v_body);
    d[idx::X..=idx::Z].copy_from_slice(&p_dot);

    d[idx::WX] = -w2 * k * l / ix + dist.domega[0];
    d[idx::WY] = -w3 * k * l / iy + dist.domega[1];
    d[idx::WZ] = w4 * b * l / iz + dist.domega[2];

    d[idx::PHI..=idx::PSI].copy_from_slice(&euler_dot);
    Ok(d)
}

/// Hover linearization `(A, B)`; only `g` enters.
pub fn linearized_ab(params: &VehicleParams) -> (Mat, Mat) {
    use idx::*;
    let mut a = Mat::zeros(STATE_DIM, STATE_DIM);
    a[(VX, THETA)] = -params.g;
    a[(VY, PHI)] = params.g;
    a[(X, VX)] = 1.0;
    a[(Y, VY)] = 1.0;
    a[(Z, VZ)] = 1.0;
    a[(PHI, WX)] = 1.0;
    a[(THETA, WY)] = 1.0;
    a[(PSI, WZ)] = 1.0;

    let mut b = Mat::zeros(STATE_DIM, INPUT_DIM);
    b[(VZ, 0)] = 1.0;
    b[(WX, 1)] = 1.0;
    b[(WY, 2)] = 1.0;
    b[(WZ, 3)] = 1.0;
    (a, b)
}

/// The abstract inputs produced by a set of aggregates.
pub fn inputs_from_aggregates(w: [f64; 4], params: &VehicleParams) -> [f64; 4] {
    let VehicleParams {
        l,
        m,
        k,
        b,
        ix,
        iy,
        iz,
        g,
        ..
    } = *params;
    [
        g - w[0] * k / m,
        -w[1] * k * l / ix,
        -w[2] * k * l / iy,
        w[3] * b * l / iz,
    ]
}

pub fn aggregates_from_inputs(u: [f64; 4], params: &VehicleParams) -> [f64; 4] {
    let VehicleParams {
        l,
        m,
        k,
        b,
        ix,
        iy,
        iz,
        g,
        ..
    } = *params;
    [
        (g - u[0]) * m / k,
        -u[1] * ix / (k * l),
        -u[2] * iy / (k * l),
        u[3] * iz / (b * l),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixerOutput {
    pub rotors: RotorSpeeds,
    /// True when the demanded inputs could not be met within `[0, omega_max]`.
    pub clamped: bool,
}

/// Converts abstract inputs to rotor speeds.
///
/// Demands that fit are met exactly. Otherwise squared speeds are
/// desaturated in priority order: the roll/pitch differential is scaled into
/// the available span first, then the yaw differential is cut back to what
/// is left, and finally the collective is shifted into range. Collective
/// thrust alone above `4 omega_max^2` puts every rotor at `omega_max`.
pub fn mixer(u: [f64; 4], params: &VehicleParams) -> MixerOutput {
    let [w1, w2, w3, w4] = aggregates_from_inputs(u, params);
    let cap = params.omega_max * params.omega_max;
    let slack = cap * 1e-12;
    let mut clamped = false;

    let mut attitude = [w3 / 2.0, w2 / 2.0, -w3 / 2.0, -w2 / 2.0];
    let yaw = [w4 / 4.0, -w4 / 4.0, w4 / 4.0, -w4 / 4.0];

    let span_rp = span(&attitude);
    if span_rp > cap + slack {
        let scale = cap / span_rp;
        attitude.iter_mut().for_each(|r| *r *= scale);
        clamped = true;
    }

    // Largest yaw fraction keeping every pairwise difference within `cap`.
    let mut yaw_frac: f64 = 1.0;
    for i in 0..4 {
        for j in 0..4 {
            let dy = yaw[i] - yaw[j];
            let excess = attitude[i] - attitude[j] + dy - cap;
            if dy > 0.0 && excess > slack {
                yaw_frac = yaw_frac.min(((cap - (attitude[i] - attitude[j])) / dy).max(0.0));
            }
        }
    }
    if yaw_frac < 1.0 {
        clamped = true;
    }
    let diff: [f64; 4] = std::array::from_fn(|i| attitude[i] + yaw_frac * yaw[i]);

    let lo = -diff.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cap - diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut base = w1 / 4.0;
    if base < lo - slack {
        base = lo;
        clamped = true;
    } else if base > hi + slack {
        base = hi;
        clamped = true;
    }

    let rotors = RotorSpeeds(diff.map(|d| (base + d).clamp(0.0, cap).sqrt()));
    MixerOutput { rotors, clamped }
}

fn span(v: &[f64; 4]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}
