use std::f64::consts::PI;

use proptest::prelude::*;
use quadgain::controller::{tracking_error, Setpoint, TrackerConfig};
use quadgain::design::{assemble_gain_matrix, closed_loop_factors, AnnealConfig, GainVector};
use quadgain::numerics::{mat_mul, poly_roots, rank, rk4_step, Mat, NumericsError, Poly};
use quadgain::vehicle::{
    euler_rates, idx, inputs_from_aggregates, linearized_ab, mixer, nonlinear_deriv,
    rotation_inertial_to_body, BodyDisturbance, RigidState, RotorSpeeds, VehicleParams,
};

fn params_strategy() -> impl Strategy<Value = VehicleParams> {
    (
        0.1..0.6f64,
        0.3..2.0f64,
        5e-6..3e-5f64,
        5e-7..3e-6f64,
        0.002..0.05f64,
        0.002..0.05f64,
        0.004..0.08f64,
    )
        .prop_map(|(l, m, k, b, ix, iy, iz)| {
            let mut p = VehicleParams {
                l,
                m,
                k,
                b,
                ix,
                iy,
                iz,
                ..VehicleParams::default()
            };
            // Keep hover feasible with some margin.
            p.omega_max = p.omega_max.max(1.5 * p.hover_rotor_speed());
            p
        })
}

fn gains_strategy() -> impl Strategy<Value = GainVector> {
    let bounds = AnnealConfig::DEFAULT_BOUNDS;
    bounds.map(|(lo, hi)| lo..hi).prop_map(GainVector)
}

fn mat_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-10.0..10.0f64, rows * cols)
        .prop_map(move |v| Mat::from_vec(rows, cols, v).unwrap())
}

fn naive_mul(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            c[(i, j)] = s;
        }
    }
    c
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).unwrap().max_abs()
}

/// Determinant by Gaussian elimination with partial pivoting.
fn determinant(m: &Mat) -> f64 {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
        }
    }
    det
}

fn closed_loop_matrix(params: &VehicleParams, gains: &GainVector) -> Mat {
    let (a, b) = linearized_ab(params);
    let bg = mat_mul(&b, assemble_gain_matrix(gains).as_mat()).unwrap();
    a.sub(&bg).unwrap()
}

fn skew(w: [f64; 3]) -> Mat {
    Mat::from_rows(&[[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]).unwrap()
}

fn hover_rotors(params: &VehicleParams) -> RotorSpeeds {
    RotorSpeeds::uniform(params.hover_rotor_speed())
}

fn deriv_at(x: &[f64; 12], rotors: &RotorSpeeds, params: &VehicleParams) -> [f64; 12] {
    nonlinear_deriv(
        &RigidState::from_array(x),
        rotors,
        &BodyDisturbance::default(),
        params,
    )
    .unwrap()
}

fn check_jacobian(params: &VehicleParams) {
    let (a, b) = linearized_ab(params);
    let rotors = hover_rotors(params);
    let h = 1e-6;
    for j in 0..12 {
        let mut xp = [0.0; 12];
        let mut xm = [0.0; 12];
        xp[j] = h;
        xm[j] = -h;
        let fp = deriv_at(&xp, &rotors, params);
        let fm = deriv_at(&xm, &rotors, params);
        for i in 0..12 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!(
                (fd - a[(i, j)]).abs() < 1e-5,
                "A[{i}][{j}] = {} but finite difference gives {fd}",
                a[(i, j)]
            );
        }
    }
    let hu = 1e-4;
    for j in 0..4 {
        let mut up = [0.0; 4];
        let mut um = [0.0; 4];
        up[j] = hu;
        um[j] = -hu;
        let mp = mixer(up, params);
        let mm = mixer(um, params);
        assert!(!mp.clamped && !mm.clamped);
        let fp = deriv_at(&[0.0; 12], &mp.rotors, params);
        let fm = deriv_at(&[0.0; 12], &mm.rotors, params);
        for i in 0..12 {
            let fd = (fp[i] - fm[i]) / (2.0 * hu);
            assert!(
                (fd - b[(i, j)]).abs() < 1e-5,
                "B[{i}][{j}] = {} but finite difference gives {fd}",
                b[(i, j)]
            );
        }
    }
}

#[test]
fn jacobian_matches_finite_differences_at_hover() {
    check_jacobian(&VehicleParams::default());
}

#[test]
fn rk4_fourth_order_convergence() {
    let params = VehicleParams::default();
    let hover = params.hover_rotor_speed();
    let rotors = RotorSpeeds([hover + 2.0, hover - 1.0, hover - 1.5, hover + 0.5]);
    let x0 = RigidState {
        v_body: [0.5, -0.3, 0.2],
        omega_body: [0.4, -0.2, 0.3],
        euler: [0.2, -0.1, 0.5],
        ..Default::default()
    }
    .to_array();
    let integrate = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let mut x = x0;
        for n in 0..steps {
            x = rk4_step::<12, NumericsError, _>(
                |_, s| Ok(deriv_at(s, &rotors, &params)),
                &x,
                n as f64 * dt,
                dt,
            )
            .unwrap();
        }
        x
    };
    let reference = integrate(1.0 / 3200.0);
    let err = |dt: f64| {
        integrate(dt)
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let dts = [0.04, 0.02, 0.01];
    let errors: Vec<f64> = dts.iter().map(|&dt| err(dt)).collect();
    for pair in errors.windows(2) {
        let slope = (pair[0] / pair[1]).log2();
        assert!(
            (slope - 4.0).abs() < 0.3,
            "observed order {slope} from errors {errors:?}"
        );
    }
}

#[test]
fn known_twelve_by_four_product() {
    let (_, b) = linearized_ab(&VehicleParams::default());
    let g = assemble_gain_matrix(&GainVector::PAPER);
    let bg = mat_mul(&b, g.as_mat()).unwrap();
    assert_eq!(bg, naive_mul(&b, g.as_mat()));
    assert_eq!(bg[(idx::VZ, idx::Z)], 608.0);
}

proptest! {
    #[test]
    fn rotation_is_orthonormal(
        phi in -1.4..1.4f64,
        theta in -1.4..1.4f64,
        psi in -PI..PI,
    ) {
        let r = rotation_inertial_to_body([phi, theta, psi]);
        let rrt = mat_mul(&r, &r.transpose()).unwrap();
        prop_assert!(max_diff(&rrt, &Mat::identity(3)) < 1e-12);
        let det = r[(0, 0)] * (r[(1, 1)] * r[(2, 2)] - r[(1, 2)] * r[(2, 1)])
            - r[(0, 1)] * (r[(1, 0)] * r[(2, 2)] - r[(1, 2)] * r[(2, 0)])
            + r[(0, 2)] * (r[(1, 0)] * r[(2, 1)] - r[(1, 1)] * r[(2, 0)]);
        prop_assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixer_round_trip(speeds in prop::array::uniform4(50.0..630.0f64)) {
        let params = VehicleParams::default();
        let rotors = RotorSpeeds(speeds);
        let u = inputs_from_aggregates(rotors.aggregates(), &params);
        let out = mixer(u, &params);
        prop_assert!(!out.clamped);
        for (got, want) in out.rotors.0.iter().zip(&speeds) {
            prop_assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn mixer_stays_in_range(
        u in prop::array::uniform4(-2000.0..2000.0f64),
        params in params_strategy(),
    ) {
        let out = mixer(u, &params);
        for w in out.rotors.0 {
            prop_assert!(w.is_finite() && (0.0..=params.omega_max).contains(&w));
        }
    }

    #[test]
    fn jacobian_holds_for_any_vehicle(params in params_strategy()) {
        check_jacobian(&params);
    }

    #[test]
    fn hover_is_a_fixed_point(
        params in params_strategy(),
        pos in prop::array::uniform3(-50.0..50.0f64),
        psi in -PI..PI,
    ) {
        let state = RigidState {
            p_inertial: pos,
            euler: [0.0, 0.0, psi],
            ..Default::default()
        };
        let d = nonlinear_deriv(
            &state,
            &hover_rotors(&params),
            &BodyDisturbance::default(),
            &params,
        )
        .unwrap();
        for v in d {
            prop_assert!(v.abs() < 1e-12, "derivative {d:?}");
        }
    }

    #[test]
    fn closed_loop_independent_of_vehicle(
        params in params_strategy(),
        gains in gains_strategy(),
    ) {
        let reference = closed_loop_matrix(&VehicleParams::default(), &gains);
        prop_assert_eq!(closed_loop_matrix(&params, &gains), reference);
    }

    #[test]
    fn characteristic_polynomial_factors(
        gains in gains_strategy(),
        grav in 1.0..25.0f64,
        s in prop::sample::select(vec![-45.0, -17.3, -6.5, -1.1, 0.0, 0.7, 4.0, 12.5]),
    ) {
        let params = VehicleParams { g: grav, ..VehicleParams::default() };
        let ac = closed_loop_matrix(&params, &gains);
        let mut shifted = Mat::zeros(12, 12);
        for i in 0..12 {
            for j in 0..12 {
                shifted[(i, j)] = if i == j { s } else { 0.0 } - ac[(i, j)];
            }
        }
        let direct = determinant(&shifted);
        let product: f64 = closed_loop_factors(&gains, grav).iter().map(|f| f.eval(s)).product();
        prop_assert!(
            (direct - product).abs() <= 1e-9 * product.abs().max(1.0),
            "det = {direct}, factors = {product}"
        );
    }

    #[test]
    fn mat_mul_matches_triple_loop(a in mat_strategy(12, 12), b in mat_strategy(12, 4)) {
        let c = mat_mul(&a, &b).unwrap();
        prop_assert!(max_diff(&c, &naive_mul(&a, &b)) < 1e-12);
    }

    #[test]
    fn mat_mul_is_associative(
        a in mat_strategy(3, 4),
        b in mat_strategy(4, 5),
        c in mat_strategy(5, 2),
    ) {
        let left = mat_mul(&mat_mul(&a, &b).unwrap(), &c).unwrap();
        let right = mat_mul(&a, &mat_mul(&b, &c).unwrap()).unwrap();
        prop_assert!(max_diff(&left, &right) < 1e-9 * left.max_abs().max(1.0));
    }

    #[test]
    fn rank_is_transpose_invariant(
        r in 1usize..5,
        seed_left in prop::collection::vec(-3i32..=3, 6 * 4),
        seed_right in prop::collection::vec(-3i32..=3, 4 * 7),
    ) {
        let left = Mat::from_vec(6, r, seed_left[..6 * r].iter().map(|&v| v as f64).collect()).unwrap();
        let right = Mat::from_vec(r, 7, seed_right[..r * 7].iter().map(|&v| v as f64).collect()).unwrap();
        let m = mat_mul(&left, &right).unwrap();
        let rk = rank(&m, 1e-9);
        prop_assert_eq!(rk, rank(&m.transpose(), 1e-9));
        prop_assert!(rk <= r);
    }

    #[test]
    fn roots_reconstruct_polynomial(
        reals in prop::collection::vec(-40.0..40.0f64, 4),
        ims in prop::array::uniform2(0.0..30.0f64),
        pairs in 0usize..3,
    ) {
        // Up to two conjugate pairs, the remaining roots real.
        let mut factors = Vec::new();
        for i in 0..pairs {
            let (re, im) = (reals[2 * i], ims[i]);
            factors.push(Poly::new(vec![re * re + im * im, -2.0 * re, 1.0]));
        }
        for &r in &reals[2 * pairs..] {
            factors.push(Poly::new(vec![-r, 1.0]));
        }
        let p = factors.iter().fold(Poly::new(vec![1.0]), |acc, f| acc.mul(f));
        let roots = poly_roots(&p).unwrap();
        prop_assert_eq!(roots.len(), 4);

        let mut rebuilt = vec![num_complex::Complex64::new(1.0, 0.0)];
        for z in &roots {
            let mut next = vec![num_complex::Complex64::new(0.0, 0.0); rebuilt.len() + 1];
            for (i, c) in rebuilt.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * z;
            }
            rebuilt = next;
        }
        let scale = p.max_abs_coeff().max(1.0);
        for (c, want) in rebuilt.iter().zip(p.coeffs()) {
            prop_assert!((c.re - want).abs() <= 1e-6 * scale, "{c} vs {want}");
            prop_assert!(c.im.abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn tracking_error_respects_limits(
        v in prop::array::uniform3(-20.0..20.0f64),
        w in prop::array::uniform3(-5.0..5.0f64),
        euler in (-1.2..1.2f64, -1.2..1.2f64, -10.0..10.0f64),
        p in prop::array::uniform3(-100.0..100.0f64),
        target in prop::array::uniform3(-100.0..100.0f64),
        psi_des in -10.0..10.0f64,
    ) {
        let cfg = TrackerConfig::default();
        let state = RigidState {
            v_body: v,
            p_inertial: p,
            omega_body: w,
            euler: [euler.0, euler.1, euler.2],
        };
        let sp = Setpoint { p_inertial_des: target, psi_des };
        let err = tracking_error(&state, &sp, &cfg);
        for i in 0..3 {
            prop_assert!(err.e[idx::VX + i].abs() <= cfg.v_sat);
            prop_assert_eq!(err.e[idx::X + i], 0.0);
        }
        prop_assert!(err.e[idx::WZ].abs() <= cfg.w_sat);
        prop_assert_eq!(err.e[idx::PSI], 0.0);
        prop_assert_eq!(err.e[idx::WX], w[0]);
        prop_assert_eq!(err.e[idx::WY], w[1]);
        prop_assert_eq!(err.e[idx::PHI], euler.0);
        prop_assert_eq!(err.e[idx::THETA], euler.1);

        // A full turn of yaw is the same heading.
        let turned = RigidState { euler: [euler.0, euler.1, euler.2 + 2.0 * PI], ..state };
        let again = tracking_error(&turned, &sp, &cfg);
        for i in 0..12 {
            prop_assert!((again.e[i] - err.e[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn altitude_error_ignores_yaw(
        psi in -PI..PI,
        xy in prop::array::uniform2(-20.0..20.0f64),
        dz in -3.0..3.0f64,
        vz in -2.0..2.0f64,
    ) {
        let cfg = TrackerConfig::default();
        let at_yaw = |yaw: f64| {
            let state = RigidState {
                v_body: [0.0, 0.0, vz],
                p_inertial: [xy[0], xy[1], dz],
                euler: [0.0, 0.0, yaw],
                ..Default::default()
            };
            let sp = Setpoint { p_inertial_des: [xy[0], xy[1], 0.0], psi_des: yaw };
            tracking_error(&state, &sp, &cfg).e
        };
        let (turned, level) = (at_yaw(psi), at_yaw(0.0));
        prop_assert!((turned[idx::VZ] - level[idx::VZ]).abs() < 1e-12);
        prop_assert_eq!(turned[idx::Z], level[idx::Z]);
    }

    #[test]
    fn euler_rates_track_rotation_kinematics(
        euler in (-0.8..0.8f64, -0.8..0.8f64, -PI..PI),
        w in prop::array::uniform3(-1.0..1.0f64),
    ) {
        let dt = 1e-3;
        let steps = 500;
        let mut angles = [euler.0, euler.1, euler.2];
        let r0 = rotation_inertial_to_body(angles);
        let mut r: [f64; 9] = r0.as_slice().try_into().unwrap();
        let omega_cross = skew(w);
        for n in 0..steps {
            let t = n as f64 * dt;
            angles = rk4_step::<3, NumericsError, _>(
                |_, a| Ok(euler_rates(*a, w).unwrap()),
                &angles,
                t,
                dt,
            )
            .unwrap();
            r = rk4_step::<9, NumericsError, _>(
                |_, m| {
                    let rm = Mat::from_vec(3, 3, m.to_vec()).unwrap();
                    let d = mat_mul(&omega_cross, &rm).unwrap();
                    Ok(std::array::from_fn(|i| -d.as_slice()[i]))
                },
                &r,
                t,
                dt,
            )
            .unwrap();
        }
        let from_angles = rotation_inertial_to_body(angles);
        let direct = Mat::from_vec(3, 3, r.to_vec()).unwrap();
        prop_assert!(max_diff(&from_angles, &direct) < 1e-8);
    }
}
