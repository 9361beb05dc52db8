//! Single-quadcopter nonlinear model with thrust-dynamics extension and the
//! feedback-linearization map from snap/yaw commands to rotor-level inputs.
//!
//! The extended state is (position, velocity, 3-2-1 Euler angles, body rates,
//! thrust, thrust rate); inputs are the thrust second derivative and body
//! torques. With the input extension the position becomes a chain of four
//! integrators driven by the snap command.

use crate::affine::{rotation_matrix, Mat3, Vec3};
use nalgebra::{Matrix3x4, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VehicleError {
    #[error("pitch angle {0} rad is within the margin of the +-pi/2 kinematic singularity")]
    AttitudeSingularity(f64),
    #[error("thrust {p} N is at or below the floor {floor} N")]
    ThrustTooLow { p: f64, floor: f64 },
    #[error("input map is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadParams {
    pub mass: f64,
    pub inertia: Mat3,
    pub gravity: f64,
    /// Sign of the gyroscopic term in the rotational dynamics
    /// `omega_dot = J^-1 (sign * omega x (J omega) + tau)`; -1 is the
    /// standard Euler equation.
    pub gyro_sign: f64,
    /// Thrust floor as a fraction of hover thrust, below which the input map
    /// is rejected.
    pub p_floor_factor: f64,
    /// Margin (rad) kept from the pitch singularity at +-pi/2.
    pub theta_margin: f64,
}

impl QuadParams {
    pub fn new(mass: f64, inertia_diag: Vec3) -> Self {
        Self {
            mass,
            inertia: Mat3::from_diagonal(&inertia_diag),
            gravity: 9.81,
            gyro_sign: -1.0,
            p_floor_factor: 0.1,
            theta_margin: 1e-3,
        }
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn p_floor(&self) -> f64 {
        self.p_floor_factor * self.hover_thrust()
    }
}

/// Extended state; `omega` holds body-frame rates, `euler` is (roll, pitch,
/// yaw) in the 3-2-1 convention.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadState {
    pub r: Vec3,
    pub v: Vec3,
    pub euler: Vec3,
    pub omega: Vec3,
    pub p: f64,
    pub p_dot: f64,
}

impl QuadState {
    /// At rest at `r` with thrust balancing gravity.
    pub fn hover(r: Vec3, params: &QuadParams) -> Self {
        Self {
            r,
            v: Vec3::zeros(),
            euler: Vec3::zeros(),
            omega: Vec3::zeros(),
            p: params.hover_thrust(),
            p_dot: 0.0,
        }
    }

    pub fn to_array(&self) -> [f64; 14] {
        let mut a = [0.0; 14];
        for k in 0..3 {
            a[k] = self.r[k];
            a[3 + k] = self.v[k];
            a[6 + k] = self.euler[k];
            a[9 + k] = self.omega[k];
        }
        a[12] = self.p;
        a[13] = self.p_dot;
        a
    }

    pub fn from_array(a: &[f64; 14]) -> Self {
        Self {
            r: Vec3::new(a[0], a[1], a[2]),
            v: Vec3::new(a[3], a[4], a[5]),
            euler: Vec3::new(a[6], a[7], a[8]),
            omega: Vec3::new(a[9], a[10], a[11]),
            p: a[12],
            p_dot: a[13],
        }
    }
}

/// Rotor-level input: thrust second derivative and body torques.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct QuadInput {
    pub u_p: f64,
    pub torque: Vec3,
}

/// Outer-loop command: position snap and yaw acceleration.
#[derive(Debug, Clone, Copy, Default)]
pub struct OuterCommand {
    pub s: Vec3,
    pub u_psi: f64,
}

/// Position-loop and yaw gains.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k_psi1: f64,
    pub k_psi2: f64,
}

/// Body rotation matrix: rows are the body axes expressed in the world frame
/// (world components v transform to body components as `R v`).
pub fn body_rotation(euler: &Vec3) -> Mat3 {
    rotation_matrix(euler.x, euler.y, euler.z)
}

/// Maps Euler angle rates (roll, pitch, yaw) to body rates.
pub fn gamma_matrix(phi: f64, theta: f64, _psi: f64) -> Mat3 {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Mat3::new(
        1.0, 0.0, -st, //
        0.0, cp, ct * sp, //
        0.0, -sp, cp * ct,
    )
}

fn check_theta(theta: f64, params: &QuadParams) -> Result<(), VehicleError> {
    if (std::f64::consts::FRAC_PI_2 - theta.abs()).abs() < params.theta_margin
        || theta.abs() > std::f64::consts::FRAC_PI_2
    {
        return Err(VehicleError::AttitudeSingularity(theta));
    }
    Ok(())
}

/// Euler angle rates from body rates.
pub fn euler_rates(state: &QuadState, params: &QuadParams) -> Result<Vec3, VehicleError> {
    check_theta(state.euler.y, params)?;
    let gamma = gamma_matrix(state.euler.x, state.euler.y, state.euler.z);
    gamma
        .try_inverse()
        .map(|gi| gi * state.omega)
        .ok_or(VehicleError::AttitudeSingularity(state.euler.y))
}

/// Body z-axis in world coordinates (thrust direction).
pub fn thrust_axis(euler: &Vec3) -> Vec3 {
    body_rotation(euler).row(2).transpose()
}

/// Translational acceleration implied by the current state.
pub fn acceleration(state: &QuadState, params: &QuadParams) -> Vec3 {
    (state.p / params.mass) * thrust_axis(&state.euler) - Vec3::new(0.0, 0.0, params.gravity)
}

/// Translational jerk implied by the current state (time derivative of the
/// thrust vector over mass).
pub fn jerk(state: &QuadState, params: &QuadParams) -> Vec3 {
    let rb = body_rotation(&state.euler);
    let kb = rb.row(2).transpose();
    let omega_world = rb.transpose() * state.omega;
    (state.p_dot * kb + state.p * omega_world.cross(&kb)) / params.mass
}

/// Time derivative of the extended state under the given input.
pub fn extended_derivative(
    state: &QuadState,
    input: &QuadInput,
    params: &QuadParams,
) -> Result<[f64; 14], VehicleError> {
    let eul_dot = euler_rates(state, params)?;
    let v_dot = acceleration(state, params);
    let j_omega = params.inertia * state.omega;
    let omega_dot = params
        .inertia
        .try_inverse()
        .expect("inertia is positive definite")
        * (params.gyro_sign * state.omega.cross(&j_omega) + input.torque);

    let mut d = [0.0; 14];
    for k in 0..3 {
        d[k] = state.v[k];
        d[3 + k] = v_dot[k];
        d[6 + k] = eul_dot[k];
        d[9 + k] = omega_dot[k];
    }
    d[12] = state.p_dot;
    d[13] = input.u_p;
    Ok(d)
}

/// One classical fixed-step RK4 step with the input held constant.
pub fn step_rk4(
    state: &QuadState,
    input: &QuadInput,
    params: &QuadParams,
    dt: f64,
) -> Result<QuadState, VehicleError> {
    let y0 = state.to_array();
    let add = |y: &[f64; 14], k: &[f64; 14], h: f64| {
        let mut out = *y;
        for i in 0..14 {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = extended_derivative(state, input, params)?;
    let k2 = extended_derivative(&QuadState::from_array(&add(&y0, &k1, dt / 2.0)), input, params)?;
    let k3 = extended_derivative(&QuadState::from_array(&add(&y0, &k2, dt / 2.0)), input, params)?;
    let k4 = extended_derivative(&QuadState::from_array(&add(&y0, &k3, dt)), input, params)?;
    let mut y = y0;
    for i in 0..14 {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(QuadState::from_array(&y))
}

/// Terms of the exact input map at one state: the snap/yaw command relates to
/// the rotor input as `v = M u + N`.
#[derive(Debug, Clone)]
pub struct LinearizationTerms {
    pub o1: Matrix3x4<f64>,
    pub o2: Vec3,
    pub o3: Matrix4<f64>,
    pub o4: Vector4<f64>,
    pub b1: Mat3,
    pub b2: Vec3,
    pub m: Matrix4<f64>,
    pub n: Vector4<f64>,
}

pub fn linearization_terms(
    state: &QuadState,
    params: &QuadParams,
) -> Result<LinearizationTerms, VehicleError> {
    check_theta(state.euler.y, params)?;
    let floor = params.p_floor();
    if state.p <= floor {
        return Err(VehicleError::ThrustTooLow {
            p: state.p,
            floor,
        });
    }

    let (phi, theta, psi) = (state.euler.x, state.euler.y, state.euler.z);
    // Intermediate frames of the 3-2-1 sequence: rows are the frame axes in
    // world coordinates.
    let r1 = rotation_matrix(0.0, 0.0, psi);
    let r2 = rotation_matrix(0.0, theta, psi);
    let rb = rotation_matrix(phi, theta, psi);
    let j1: Vec3 = r1.row(1).transpose();
    let k1: Vec3 = r1.row(2).transpose();
    let i2: Vec3 = r2.row(0).transpose();
    let j2: Vec3 = r2.row(1).transpose();
    let ib: Vec3 = rb.row(0).transpose();
    let jb: Vec3 = rb.row(1).transpose();
    let kb: Vec3 = rb.row(2).transpose();

    let eul_dot = euler_rates(state, params)?;
    let (phi_dot, theta_dot, psi_dot) = (eul_dot.x, eul_dot.y, eul_dot.z);
    let omega_world = rb.transpose() * state.omega;

    // Angular acceleration split: omega_dot = Bt1 (phi'', theta'', psi'') + Bt2,
    // all in world components.
    let bt1 = Mat3::from_columns(&[ib, j2, k1]);
    let bt2 = theta_dot * psi_dot * k1.cross(&j1)
        + phi_dot * (psi_dot * k1 + theta_dot * j2).cross(&i2);

    // Torque form of the same relation, in body components (the inertia
    // tensor is body-fixed, so the world-frame angular acceleration is
    // rotated into the body frame before applying it).
    let b1 = params.inertia * (rb * bt1);
    let j_omega = params.inertia * state.omega;
    let b2 = params.inertia * (rb * bt2) - params.gyro_sign * state.omega.cross(&j_omega);
    let b1_inv = b1
        .try_inverse()
        .ok_or(VehicleError::AttitudeSingularity(theta))?;

    // Second derivative of the thrust vector:
    // P'' = O1 (p'', phi'', theta'', psi'') + O2, world components.
    let p = state.p;
    let o1 = Matrix3x4::from_columns(&[
        kb,
        -p * jb,
        p * j2.cross(&kb),
        p * k1.cross(&kb),
    ]);
    // Full angular-acceleration bias Bt2 x kb (it has components along the
    // intermediate-frame x and y axes as well, not just -phi' theta' k2).
    let o2 = p * (bt2.cross(&kb) + omega_world.cross(&omega_world.cross(&kb)))
        + 2.0 * state.p_dot * omega_world.cross(&kb);

    // (p'', phi'', theta'', psi'') = O3 u + O4.
    let mut o3 = Matrix4::zeros();
    o3[(0, 0)] = 1.0;
    o3.view_mut((1, 1), (3, 3)).copy_from(&b1_inv);
    let mut o4 = Vector4::zeros();
    let minus_b1inv_b2 = -b1_inv * b2;
    for k in 0..3 {
        o4[1 + k] = minus_b1inv_b2[k];
    }

    // v = (s, u_psi) = M u + N: snap rows from P''/m, yaw row from the
    // psi'' component of O3 u + O4.
    let top = o1 * o3 / params.mass;
    let mut m = Matrix4::zeros();
    m.view_mut((0, 0), (3, 4)).copy_from(&top);
    m.row_mut(3).copy_from(&o3.row(3));
    let mut n = Vector4::zeros();
    let n_top = (o1 * o4 + o2) / params.mass;
    for k in 0..3 {
        n[k] = n_top[k];
    }
    n[3] = o4[3];

    let svd = m.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > 1e8 {
        return Err(VehicleError::IllConditioned(cond));
    }

    Ok(LinearizationTerms {
        o1,
        o2,
        o3,
        o4,
        b1,
        b2,
        m,
        n,
    })
}

/// Snap of the position implied by a rotor input at this state,
/// `s = (M u + N)` restricted to its translational rows.
pub fn predicted_snap(
    terms: &LinearizationTerms,
    input: &QuadInput,
) -> Vec3 {
    let u = Vector4::new(input.u_p, input.torque.x, input.torque.y, input.torque.z);
    let v = terms.m * u + terms.n;
    Vec3::new(v[0], v[1], v[2])
}

/// Inverts the input map: the rotor input realizing the commanded snap and
/// yaw acceleration exactly at this state.
pub fn feedback_linearize(
    state: &QuadState,
    cmd: &OuterCommand,
    params: &QuadParams,
) -> Result<QuadInput, VehicleError> {
    let terms = linearization_terms(state, params)?;
    let v = Vector4::new(cmd.s.x, cmd.s.y, cmd.s.z, cmd.u_psi);
    let u = terms
        .m
        .lu()
        .solve(&(v - terms.n))
        .ok_or(VehicleError::IllConditioned(f64::INFINITY))?;
    Ok(QuadInput {
        u_p: u[0],
        torque: Vec3::new(u[1], u[2], u[3]),
    })
}

/// Position outer loop on derivative errors plus a yaw damper:
/// `s = -k1 (jerk - jerk_d) - k2 (acc - acc_d) - k3 (vel - vel_d)
///      + k4 (r_d - r)`, `u_psi = -k_psi1 psi_dot - k_psi2 psi`.
/// `desired` holds the tracked position and its first three derivatives.
pub fn outer_loop(
    state: &QuadState,
    desired: &[Vec3; 4],
    gains: &Gains,
    params: &QuadParams,
) -> Result<OuterCommand, VehicleError> {
    let acc = acceleration(state, params);
    let jrk = jerk(state, params);
    let s = -gains.k1 * (jrk - desired[3])
        - gains.k2 * (acc - desired[2])
        - gains.k3 * (state.v - desired[1])
        + gains.k4 * (desired[0] - state.r);
    let psi_dot = euler_rates(state, params)?.z;
    let u_psi = -gains.k_psi1 * psi_dot - gains.k_psi2 * state.euler.z;
    Ok(OuterCommand { s, u_psi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> QuadParams {
        QuadParams::new(1.2, Vec3::new(0.015, 0.017, 0.021))
    }

    fn random_near_hover(rng: &mut ChaCha8Rng, params: &QuadParams) -> QuadState {
        let mut v3 = |scale: f64| {
            Vec3::new(
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
            )
        };
        QuadState {
            r: v3(5.0),
            v: v3(1.0),
            euler: v3(0.3),
            omega: v3(0.5),
            p: params.hover_thrust() * rng.gen_range(0.5..1.5),
            p_dot: rng.gen_range(-1.0..1.0),
        }
    }

    #[test]
    fn gamma_identity_and_determinant() {
        let g = gamma_matrix(0.0, 0.0, 0.0);
        assert_abs_diff_eq!((g - Mat3::identity()).norm(), 0.0, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let phi = rng.gen_range(-1.5..1.5);
            let theta = rng.gen_range(-1.4..1.4);
            let psi = rng.gen_range(-3.0..3.0);
            let det = gamma_matrix(phi, theta, psi).determinant();
            assert_abs_diff_eq!(det, theta.cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn gamma_matches_basis_vector_angular_velocity() {
        // Body rates from Gamma, rotated to world, must equal
        // psi_dot k1 + theta_dot j2 + phi_dot ib (world vectors).
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let phi = rng.gen_range(-1.4..1.4);
            let theta = rng.gen_range(-1.4..1.4);
            let psi = rng.gen_range(-3.0..3.0);
            let rates = Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let omega_body = gamma_matrix(phi, theta, psi) * rates;
            let rb = rotation_matrix(phi, theta, psi);
            let omega_world = rb.transpose() * omega_body;
            let k1: Vec3 = rotation_matrix(0.0, 0.0, psi).row(2).transpose();
            let j2: Vec3 = rotation_matrix(0.0, theta, psi).row(1).transpose();
            let ib: Vec3 = rb.row(0).transpose();
            let vector_formula = rates.z * k1 + rates.y * j2 + rates.x * ib;
            assert!((omega_world - vector_formula).norm() < 1e-12);
        }
    }

    #[test]
    fn hover_and_free_fall() {
        let params = params();
        let hover = QuadState::hover(Vec3::zeros(), &params);
        let d = extended_derivative(&hover, &QuadInput::default(), &params).unwrap();
        for k in 0..14 {
            assert_abs_diff_eq!(d[k], 0.0, epsilon = 1e-12);
        }
        let falling = QuadState {
            p: 0.0,
            ..hover
        };
        let d = extended_derivative(&falling, &QuadInput::default(), &params).unwrap();
        assert_abs_diff_eq!(d[5], -params.gravity, epsilon = 1e-12);
    }

    #[test]
    fn pitch_singularity_rejected() {
        let params = params();
        let mut state = QuadState::hover(Vec3::zeros(), &params);
        state.euler.y = std::f64::consts::FRAC_PI_2 - 1e-5;
        assert!(matches!(
            extended_derivative(&state, &QuadInput::default(), &params),
            Err(VehicleError::AttitudeSingularity(_))
        ));
    }

    #[test]
    fn low_thrust_rejected_by_input_map() {
        let params = params();
        let mut state = QuadState::hover(Vec3::zeros(), &params);
        state.p = 0.05 * params.hover_thrust();
        assert!(matches!(
            linearization_terms(&state, &params),
            Err(VehicleError::ThrustTooLow { .. })
        ));
    }

    #[test]
    fn hover_input_map_structure() {
        let params = params();
        let state = QuadState::hover(Vec3::zeros(), &params);
        let terms = linearization_terms(&state, &params).unwrap();
        // Thrust column of the snap block is kb / m = e3 / m.
        assert_abs_diff_eq!(terms.m[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(terms.m[(1, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(terms.m[(2, 0)], 1.0 / params.mass, epsilon = 1e-12);
        // All bias terms vanish at rest.
        assert_abs_diff_eq!(terms.o2.norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(terms.b2.norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(terms.n.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hover_equilibrium_and_vertical_snap() {
        let params = params();
        let state = QuadState::hover(Vec3::zeros(), &params);
        let u = feedback_linearize(&state, &OuterCommand::default(), &params).unwrap();
        assert_abs_diff_eq!(u.u_p, 0.0, epsilon = 1e-9);
        assert!(u.torque.norm() < 1e-9);

        let a = 0.7;
        let cmd = OuterCommand {
            s: Vec3::new(0.0, 0.0, a),
            u_psi: 0.0,
        };
        let u = feedback_linearize(&state, &cmd, &params).unwrap();
        assert_abs_diff_eq!(u.u_p, params.mass * a, epsilon = 1e-9);
        assert!(u.torque.norm() < 1e-9);
    }

    #[test]
    fn input_map_round_trip() {
        let params = params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let state = random_near_hover(&mut rng, &params);
            let cmd = OuterCommand {
                s: Vec3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ),
                u_psi: rng.gen_range(-1.0..1.0),
            };
            let u = feedback_linearize(&state, &cmd, &params).unwrap();
            let terms = linearization_terms(&state, &params).unwrap();
            let v = terms.m
                * Vector4::new(u.u_p, u.torque.x, u.torque.y, u.torque.z)
                + terms.n;
            assert!((v - Vector4::new(cmd.s.x, cmd.s.y, cmd.s.z, cmd.u_psi)).norm() < 1e-9);
        }
    }

    #[test]
    fn predicted_snap_matches_simulated_fourth_derivative() {
        let params = params();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let state = random_near_hover(&mut rng, &params);
            let input = QuadInput {
                u_p: rng.gen_range(-2.0..2.0),
                torque: Vec3::new(
                    rng.gen_range(-0.02..0.02),
                    rng.gen_range(-0.02..0.02),
                    rng.gen_range(-0.02..0.02),
                ),
            };
            let terms = match linearization_terms(&state, &params) {
                Ok(t) => t,
                Err(_) => continue,
            };
            let s_pred = predicted_snap(&terms, &input);

            // Central difference of the analytic jerk along the simulated
            // trajectory under the constant input.
            let h = 1e-4;
            let steps = 10;
            let dt = h / steps as f64;
            let propagate = |n_steps: i64| -> QuadState {
                let mut s = state;
                let back = n_steps < 0;
                for _ in 0..n_steps.abs() {
                    s = step_rk4(&s, &input, &params, if back { -dt } else { dt }).unwrap();
                }
                s
            };
            let j_plus = jerk(&propagate(steps), &params);
            let j_minus = jerk(&propagate(-steps), &params);
            let s_obs = (j_plus - j_minus) / (2.0 * h);
            let rel = (s_obs - s_pred).norm() / (1.0 + s_pred.norm());
            assert!(rel < 1e-4, "relative snap error {rel}");
        }
    }

    #[test]
    fn outer_loop_zero_error_and_proportional_term() {
        let params = params();
        let state = QuadState::hover(Vec3::new(1.0, 2.0, 3.0), &params);
        let gains = Gains {
            k1: 4.0,
            k2: 6.0,
            k3: 4.0,
            k4: 1.0,
            k_psi1: 2.0,
            k_psi2: 1.0,
        };
        let desired = [state.r, Vec3::zeros(), Vec3::zeros(), Vec3::zeros()];
        let cmd = outer_loop(&state, &desired, &gains, &params).unwrap();
        assert!(cmd.s.norm() < 1e-12);
        assert_abs_diff_eq!(cmd.u_psi, 0.0, epsilon = 1e-12);

        let gains_p = Gains {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            k4: 1.0,
            k_psi1: 0.0,
            k_psi2: 0.0,
        };
        let desired = [
            state.r + Vec3::new(1.0, 0.0, 0.0),
            Vec3::zeros(),
            Vec3::zeros(),
            Vec3::zeros(),
        ];
        let cmd = outer_loop(&state, &desired, &gains_p, &params).unwrap();
        assert!((cmd.s - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotational_energy_conserved_without_torque() {
        // With the standard gyroscopic sign and zero torque, omega' J omega
        // is an invariant of the rotational dynamics; RK4 should preserve it
        // to integrator order.
        let params = params();
        let mut state = QuadState::hover(Vec3::zeros(), &params);
        state.omega = Vec3::new(0.8, -0.5, 0.3);
        let energy = |s: &QuadState| s.omega.dot(&(params.inertia * s.omega));
        let e0 = energy(&state);
        let dt = 1e-3;
        let mut s = state;
        for _ in 0..1000 {
            s = step_rk4(&s, &QuadInput::default(), &params, dt).unwrap();
        }
        assert!((energy(&s) - e0).abs() / e0 < 1e-10);
    }

    #[test]
    fn yaw_damper_converges() {
        let params = params();
        let gains = Gains {
            k1: 4.0,
            k2: 6.0,
            k3: 4.0,
            k4: 1.0,
            k_psi1: 2.0,
            k_psi2: 1.0,
        };
        let mut state = QuadState::hover(Vec3::zeros(), &params);
        state.euler.z = 0.2;
        let desired = [Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), Vec3::zeros()];
        let dt = 1e-3;
        for _ in 0..20_000 {
            let cmd = outer_loop(&state, &desired, &gains, &params).unwrap();
            let input = feedback_linearize(&state, &cmd, &params).unwrap();
            state = step_rk4(&state, &input, &params, dt).unwrap();
        }
        assert!(state.euler.z.abs() < 1e-3, "psi = {}", state.euler.z);
    }
}
