//! Gain design for the structured hover controller.
//!
//! Under the twelve-slot gain sparsity the closed loop `A - B G` splits into
//! four independent subsystems (altitude, roll, pitch, yaw), so every pole
//! comes from a quadratic or a quartic. None of the factors involve the
//! vehicle's mass, arm length, rotor constants or inertia; gravity is the
//! only physical constant left.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numerics::{self, ComplexRoot, Mat, NumericsError, Poly};
use crate::vehicle::{idx, INPUT_DIM, STATE_DIM};

pub const GAIN_COUNT: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid pole band: {0}")]
    InvalidBand(String),
    #[error("invalid second-order parameters: zeta = {zeta}, omega_n = {omega_n}")]
    InvalidSecondOrder { zeta: f64, omega_n: f64 },
    #[error("invalid annealing configuration: {0}")]
    InvalidAnneal(String),
    #[error("gain file: {0}")]
    GainFile(String),
}

/// The twelve scalar gains `g1..g12`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainVector(pub [f64; GAIN_COUNT]);

impl GainVector {
    /// Published hover gains.
    pub const PAPER: GainVector = GainVector([
        32.8, 608.0, 394.5, 862.9, 47.1, 657.9, -397.8, -1124.2, 39.4, 552.7, 30.1, 623.4,
    ]);

    /// Gain `g_n` with the 1-based numbering.
    pub fn g(&self, n: usize) -> f64 {
        self.0[n - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Sign pattern expected of stabilizing solutions: `g7, g8 < 0`, the rest
    /// positive.
    pub fn has_stabilizing_signs(&self) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, &v)| if i == 6 || i == 7 { v < 0.0 } else { v > 0.0 })
    }

    /// One value per line, `g1` first, with 17 significant digits.
    pub fn to_text(&self) -> String {
        self.0.iter().map(|v| format!("{v:.16e}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self, DesignError> {
        let values = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| DesignError::GainFile(format!("not a number: `{l}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let gains: [f64; GAIN_COUNT] = values.as_slice().try_into().map_err(|_| {
            DesignError::GainFile(format!("expected 12 values, found {}", values.len()))
        })?;
        let gains = GainVector(gains);
        if !gains.is_finite() {
            return Err(DesignError::GainFile("non-finite gain".into()));
        }
        Ok(gains)
    }
}

/// Published closed-loop poles `(re, im)` for [`GainVector::PAPER`].
#[allow(clippy::approx_constant)]
pub const PAPER_POLES: [(f64, f64); 12] = [
    (-28.32, 0.0),
    (-20.36, 0.0),
    (-6.47, 0.0),
    (-6.28, 0.0),
    (-16.40, 18.41),
    (-16.40, -18.41),
    (-15.05, 19.92),
    (-15.05, -19.92),
    (-6.29, 6.65),
    (-6.29, -6.65),
    (-6.25, 2.92),
    (-6.25, -2.92),
];

/// The 4x12 feedback matrix `G` in `U = -G X`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(Mat);

impl GainMatrix {
    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    /// `G x`.
    pub fn apply(&self, x: &[f64; STATE_DIM]) -> [f64; INPUT_DIM] {
        let mut out = [0.0; INPUT_DIM];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0.row(i).iter().zip(x).map(|(g, v)| g * v).sum();
        }
        out
    }
}

/// Slot of each gain in `G`: `(input row, state column)`.
pub const GAIN_SLOTS: [(usize, usize); GAIN_COUNT] = [
    (0, idx::VZ),
    (0, idx::Z),
    (1, idx::VY),
    (1, idx::Y),
    (1, idx::WX),
    (1, idx::PHI),
    (2, idx::VX),
    (2, idx::X),
    (2, idx::WY),
    (2, idx::THETA),
    (3, idx::WZ),
    (3, idx::PSI),
];

pub fn assemble_gain_matrix(g: &GainVector) -> GainMatrix {
    let mut m = Mat::zeros(INPUT_DIM, STATE_DIM);
    for (&(row, col), &v) in GAIN_SLOTS.iter().zip(&g.0) {
        m[(row, col)] = v;
    }
    GainMatrix(m)
}

/// `[B | AB | ... | A^(n-1) B]`.
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Result<Mat, NumericsError> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(NumericsError::DimensionMismatch {
            op: "controllability_matrix",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut q = b.clone();
    let mut block = b.clone();
    for _ in 1..n {
        block = numerics::mat_mul(a, &block)?;
        q = q.hstack(&block)?;
    }
    Ok(q)
}

/// Characteristic factors of the closed loop: altitude, roll, pitch, yaw.
pub fn closed_loop_factors(g: &GainVector, grav: f64) -> [Poly; 4] {
    let g = |n| g.g(n);
    [
        Poly::from_descending(&[1.0, g(1), g(2)]),
        Poly::from_descending(&[1.0, g(5), g(6), grav * g(3), grav * g(4)]),
        Poly::from_descending(&[1.0, g(9), g(10), -grav * g(7), -grav * g(8)]),
        Poly::from_descending(&[1.0, g(11), g(12)]),
    ]
}

/// The twelve closed-loop poles, grouped altitude, roll, pitch, yaw.
pub fn closed_loop_poles(g: &GainVector, grav: f64) -> Result<Vec<ComplexRoot>, NumericsError> {
    let mut poles = Vec::with_capacity(12);
    for factor in closed_loop_factors(g, grav) {
        poles.extend(numerics::poly_roots(&factor)?);
    }
    Ok(poles)
}

/// Admissible strip for pole real parts, `re_min <= re <= re_max < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleSpec {
    pub re_min: f64,
    pub re_max: f64,
}

impl Default for PoleSpec {
    fn default() -> Self {
        Self {
            re_min: -30.0,
            re_max: -6.0,
        }
    }
}

impl PoleSpec {
    pub fn new(re_min: f64, re_max: f64) -> Result<Self, DesignError> {
        if !(re_min.is_finite() && re_max.is_finite() && re_min < re_max && re_max < 0.0) {
            return Err(DesignError::InvalidBand(format!(
                "need re_min < re_max < 0, got [{re_min}, {re_max}]"
            )));
        }
        Ok(Self { re_min, re_max })
    }

    pub fn contains(&self, re: f64) -> bool {
        (self.re_min..=self.re_max).contains(&re)
    }
}

impl FromStr for PoleSpec {
    type Err = DesignError;

    /// Parses `re_min:re_max`, e.g. `-30:-6`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| DesignError::InvalidBand(format!("expected MIN:MAX, got `{s}`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| DesignError::InvalidBand(format!("not a number: `{v}`")))
        };
        PoleSpec::new(parse(lo)?, parse(hi)?)
    }
}

impl fmt::Display for PoleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.re_min, self.re_max)
    }
}

/// Sum over poles of the squared distance from each real part to the band.
pub fn pole_cost(poles: &[ComplexRoot], spec: &PoleSpec) -> f64 {
    poles
        .iter()
        .map(|p| {
            let d = if p.re < spec.re_min {
                spec.re_min - p.re
            } else if p.re > spec.re_max {
                p.re - spec.re_max
            } else {
                0.0
            };
            d * d
        })
        .sum()
}

pub fn paper_poles() -> Vec<ComplexRoot> {
    PAPER_POLES
        .iter()
        .map(|&(re, im)| ComplexRoot::new(re, im))
        .collect()
}

/// Largest real- or imaginary-part gap after pairing each reference pole
/// with a distinct computed pole, closest pairs first. `None` when the
/// counts differ.
pub fn max_pole_deviation(poles: &[ComplexRoot], reference: &[ComplexRoot]) -> Option<f64> {
    if poles.len() != reference.len() {
        return None;
    }
    let gap = |a: ComplexRoot, b: ComplexRoot| (a.re - b.re).abs().max((a.im - b.im).abs());
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(poles.len() * reference.len());
    for (i, &p) in poles.iter().enumerate() {
        for (j, &r) in reference.iter().enumerate() {
            pairs.push((gap(p, r), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used_p = vec![false; poles.len()];
    let mut used_r = vec![false; reference.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_p[i] && !used_r[j] {
            used_p[i] = true;
            used_r[j] = true;
            worst = worst.max(d);
        }
    }
    Some(worst)
}

/// Dominant-pair estimates of step-response shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderMetrics {
    /// 2% settling time, s.
    pub t_s: f64,
    /// 10-90% rise time, s.
    pub t_r: f64,
    /// Percent overshoot.
    pub os_pct: f64,
}

pub fn second_order_metrics(zeta: f64, omega_n: f64) -> Result<SecondOrderMetrics, DesignError> {
    if !(zeta > 0.0 && omega_n > 0.0 && zeta.is_finite() && omega_n.is_finite()) {
        return Err(DesignError::InvalidSecondOrder { zeta, omega_n });
    }
    let os_pct = if zeta >= 1.0 {
        0.0
    } else {
        100.0 * (-zeta * std::f64::consts::PI / (1.0 - zeta * zeta).sqrt()).exp()
    };
    Ok(SecondOrderMetrics {
        t_s: 4.0 / (zeta * omega_n),
        t_r: 1.8 / omega_n,
        os_pct,
    })
}

/// Same as [`second_order_metrics`] for a pair with real part `sigma < 0`.
pub fn second_order_metrics_from_real_part(
    zeta: f64,
    sigma: f64,
) -> Result<SecondOrderMetrics, DesignError> {
    second_order_metrics(zeta, -sigma / zeta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealConfig {
    pub seed: u64,
    pub initial_temp: f64,
    pub cooling_ratio: f64,
    pub steps_per_temp: usize,
    pub min_temp: f64,
    /// Proposal standard deviation at the initial temperature, as a fraction
    /// of each gain's search interval.
    pub step_scale: f64,
    pub gain_bounds: [(f64, f64); GAIN_COUNT],
}

impl AnnealConfig {
    pub const DEFAULT_BOUNDS: [(f64, f64); GAIN_COUNT] = [
        (1.0, 100.0),
        (100.0, 2000.0),
        (100.0, 2000.0),
        (100.0, 2000.0),
        (1.0, 100.0),
        (100.0, 2000.0),
        (-2000.0, -1.0),
        (-2000.0, -1.0),
        (1.0, 100.0),
        (100.0, 2000.0),
        (1.0, 100.0),
        (100.0, 2000.0),
    ];

    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            initial_temp: 10.0,
            cooling_ratio: 0.95,
            steps_per_temp: 200,
            min_temp: 1e-4,
            step_scale: 0.1,
            gain_bounds: Self::DEFAULT_BOUNDS,
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        let bad = |msg: String| Err(DesignError::InvalidAnneal(msg));
        if !(self.min_temp > 0.0 && self.initial_temp > self.min_temp) {
            return bad(format!(
                "need initial_temp > min_temp > 0, got {} and {}",
                self.initial_temp, self.min_temp
            ));
        }
        if !(self.cooling_ratio > 0.0 && self.cooling_ratio < 1.0) {
            return bad(format!(
                "cooling_ratio {} not in (0, 1)",
                self.cooling_ratio
            ));
        }
        if self.steps_per_temp == 0 {
            return bad("steps_per_temp must be positive".into());
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return bad(format!("step_scale {} must be positive", self.step_scale));
        }
        for (i, &(lo, hi)) in self.gain_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("bounds for g{} are [{lo}, {hi}]", i + 1));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealOutcome {
    /// Best gains seen during the search.
    pub gains: GainVector,
    pub cost: f64,
    /// Number of cost evaluations after the initial point.
    pub iterations: usize,
}

fn gain_cost(g: &GainVector, spec: &PoleSpec, grav: f64) -> f64 {
    match closed_loop_poles(g, grav) {
        Ok(poles) => pole_cost(&poles, spec),
        Err(_) => f64::INFINITY,
    }
}

fn reflect_into(v: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    let mut t = (v - lo).rem_euclid(2.0 * width);
    if t > width {
        t = 2.0 * width - t;
    }
    lo + t
}

/// Simulated-annealing search for gains whose closed-loop poles all lie in
/// `spec`.
///
/// Each proposal perturbs one uniformly chosen gain by a Gaussian step,
/// reflected back into its bounds. The step is `step_scale` times the gain's
/// interval width times `sqrt(T / initial_temp)`. Worse proposals are accepted with probability `exp(-dcost / T)`.
/// The temperature drops geometrically every `steps_per_temp` proposals; the
/// search stops at `min_temp` or as soon as a zero-cost point is found.
pub fn anneal_gains(
    cfg: &AnnealConfig,
    spec: &PoleSpec,
    grav: f64,
) -> Result<AnnealOutcome, DesignError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut current = GainVector(
        cfg.gain_bounds
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()),
    );
    let mut current_cost = gain_cost(&current, spec, grav);
    let mut best = current;
    let mut best_cost = current_cost;
    let mut iterations = 0;
    let mut temp = cfg.initial_temp;

    'cooling: while best_cost > 0.0 && temp > cfg.min_temp {
        let reach = cfg.step_scale * (temp / cfg.initial_temp).sqrt();
        for _ in 0..cfg.steps_per_temp {
            let i = rng.random_range(0..GAIN_COUNT);
            let (lo, hi) = cfg.gain_bounds[i];
            let step: f64 = rng.sample(StandardNormal);
            let mut candidate = current;
            candidate.0[i] = reflect_into(current.0[i] + reach * (hi - lo) * step, lo, hi);

            let cost = gain_cost(&candidate, spec, grav);
            iterations += 1;
            let delta = cost - current_cost;
            let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temp).exp();
            if accept {
                current = candidate;
                current_cost = cost;
            }
            if cost < best_cost {
                best = candidate;
                best_cost = cost;
                if best_cost == 0.0 {
                    break 'cooling;
                }
            }
        }
        temp *= cfg.cooling_ratio;
    }

    Ok(AnnealOutcome {
        gains: best,
        cost: best_cost,
        iterations,
    })
}
