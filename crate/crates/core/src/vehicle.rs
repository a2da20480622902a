//! Kinematic bicycle plant model shared by the simulator, MPC and MHE.

use std::f64::consts::PI;

/// Physical limits of the platform. `wheelbase` is the single kinematic
/// parameter of the model and the quantity the MHE estimates online.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steering: f64,
    pub max_accel: f64,
    pub max_speed: f64,
}

impl VehicleParams {
    pub fn is_valid(&self) -> bool {
        self.wheelbase > 0.0
            && self.max_steering > 0.0
            && self.max_steering < PI / 2.0
            && self.max_accel > 0.0
            && self.max_speed > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading, wrapped to (-pi, pi].
    pub heading: f64,
    /// Forward speed, clamped to [0, max_speed] at integration.
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub steering: f64,
    pub accel: f64,
}

impl ControlInput {
    pub fn clamped(self, p: &VehicleParams) -> Self {
        ControlInput {
            steering: self.steering.clamp(-p.max_steering, p.max_steering),
            accel: self.accel.clamp(-p.max_accel, p.max_accel),
        }
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

fn derivative(s: &[f64; 4], u: &ControlInput, wheelbase: f64) -> [f64; 4] {
    let (sin_h, cos_h) = s[2].sin_cos();
    [
        s[3] * cos_h,
        s[3] * sin_h,
        s[3] * u.steering.tan() / wheelbase,
        u.accel,
    ]
}

/// One RK4 step of the bicycle ODE
/// (x' = v cos psi, y' = v sin psi, psi' = v tan(delta)/L, v' = a),
/// with the speed clamped to [0, max_speed] and heading wrapped afterwards.
pub fn step(s: &VehicleState, u: &ControlInput, dt: f64, p: &VehicleParams) -> VehicleState {
    let y0 = [s.x, s.y, s.heading, s.speed];
    let k1 = derivative(&y0, u, p.wheelbase);
    let mut y1 = y0;
    for i in 0..4 {
        y1[i] = y0[i] + 0.5 * dt * k1[i];
    }
    let k2 = derivative(&y1, u, p.wheelbase);
    let mut y2 = y0;
    for i in 0..4 {
        y2[i] = y0[i] + 0.5 * dt * k2[i];
    }
    let k3 = derivative(&y2, u, p.wheelbase);
    let mut y3 = y0;
    for i in 0..4 {
        y3[i] = y0[i] + dt * k3[i];
    }
    let k4 = derivative(&y3, u, p.wheelbase);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    VehicleState {
        x: out[0],
        y: out[1],
        heading: wrap_angle(out[2]),
        speed: out[3].clamp(0.0, p.max_speed),
    }
}

/// Sequential application of [`step`]; the returned trajectory starts at `s0`
/// and has `controls.len() + 1` entries.
pub fn rollout(
    s0: &VehicleState,
    controls: &[ControlInput],
    dt: f64,
    p: &VehicleParams,
) -> Vec<VehicleState> {
    let mut traj = Vec::with_capacity(controls.len() + 1);
    traj.push(*s0);
    let mut s = *s0;
    for u in controls {
        s = step(&s, u, dt, p);
        traj.push(s);
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> VehicleParams {
        VehicleParams { wheelbase: 0.5, max_steering: 0.6, max_accel: 2.0, max_speed: 10.0 }
    }

    #[test]
    fn straight_line_motion() {
        let s = VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 2.0 };
        let n = step(&s, &ControlInput::default(), 0.1, &params());
        assert_relative_eq!(n.x, 0.2, epsilon = 1e-12);
        assert_relative_eq!(n.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(n.heading, 0.0, epsilon = 1e-12);
        assert_relative_eq!(n.speed, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pure_acceleration_from_rest() {
        let s = VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 0.0 };
        let n = step(&s, &ControlInput { steering: 0.0, accel: 1.0 }, 0.1, &params());
        assert_relative_eq!(n.speed, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn turning_radius_matches_closed_form() {
        // Constant steering at constant speed traces a circle of radius
        // L / tan(delta).
        let p = params();
        let expected = p.wheelbase / 0.3f64.tan();
        let dt = 0.01;
        let u = ControlInput { steering: 0.3, accel: 0.0 };
        let mut s = VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 1.0 };
        let mut pts = Vec::new();
        let mut total_turn = 0.0;
        let mut prev_heading = s.heading;
        while total_turn < 2.0 * PI {
            s = step(&s, &u, dt, &p);
            total_turn += wrap_angle(s.heading - prev_heading).abs();
            prev_heading = s.heading;
            pts.push((s.x, s.y));
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for &(x, y) in &pts {
            cx += x;
            cy += y;
        }
        cx /= pts.len() as f64;
        cy /= pts.len() as f64;
        let mean_r: f64 = pts.iter().map(|&(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()).sum::<f64>()
            / pts.len() as f64;
        assert!((mean_r - expected).abs() / expected < 1e-3, "radius {mean_r} vs {expected}");
    }

    #[test]
    fn speed_clamped_at_zero_and_max() {
        let p = params();
        let s = VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 0.05 };
        let n = step(&s, &ControlInput { steering: 0.0, accel: -2.0 }, 0.1, &p);
        assert_eq!(n.speed, 0.0);
        let s = VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 9.95 };
        let n = step(&s, &ControlInput { steering: 0.0, accel: 2.0 }, 0.1, &p);
        assert_eq!(n.speed, p.max_speed);
    }

    #[test]
    fn rollout_matches_chained_steps() {
        let p = params();
        let s0 = VehicleState { x: 1.0, y: -2.0, heading: 0.3, speed: 1.5 };
        let controls: Vec<ControlInput> = (0..10)
            .map(|i| ControlInput { steering: 0.05 * (i as f64 - 5.0), accel: 0.2 * ((i % 3) as f64 - 1.0) })
            .collect();
        let traj = rollout(&s0, &controls, 0.05, &p);
        assert_eq!(traj.len(), 11);
        let mut s = s0;
        for u in &controls {
            s = step(&s, u, 0.05, &p);
        }
        assert_eq!(traj[10], s);
    }

    #[test]
    fn empty_rollout_is_initial_state() {
        let s0 = VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 0.0 };
        assert_eq!(rollout(&s0, &[], 0.1, &params()), vec![s0]);
    }

    #[test]
    fn heading_stays_wrapped() {
        let p = params();
        let mut s = VehicleState { x: 0.0, y: 0.0, heading: 3.0, speed: 2.0 };
        let u = ControlInput { steering: 0.5, accel: 0.0 };
        for _ in 0..500 {
            s = step(&s, &u, 0.05, &p);
            assert!(s.heading > -PI && s.heading <= PI);
        }
    }
}
