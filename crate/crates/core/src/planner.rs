//! Constrained nonlinear MPC over the bicycle model.
//!
//! Single-shooting transcription solved by projected gradient descent with a
//! backtracking line search. Actuator boxes and the leg speed cap are
//! enforced by projection after every iterate, so the returned plan is
//! feasible whether or not the solver converged.

use crate::projection::GroundPoint;
use crate::vehicle::{rollout, ControlInput, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcWeights {
    pub w_pos: f64,
    pub w_head: f64,
    pub w_speed_track: f64,
    pub w_steer: f64,
    pub w_accel: f64,
    pub w_terminal: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        MpcWeights {
            w_pos: 1.0,
            w_head: 0.5,
            w_speed_track: 0.0,
            w_steer: 0.1,
            w_accel: 0.05,
            w_terminal: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub weights: MpcWeights,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub gradient_tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 20,
            dt: 0.1,
            weights: MpcWeights::default(),
            max_iterations: 60,
            initial_step: 0.05,
            gradient_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MpcProblem {
    pub state: VehicleState,
    /// Goal setpoint in the same frame as `state`.
    pub goal: GroundPoint,
    pub speed_limit: f64,
    pub params: VehicleParams,
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub controls: Vec<ControlInput>,
    pub trajectory: Vec<VehicleState>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after every accepted iterate, starting at the initial point.
    pub cost_history: Vec<f64>,
}

const FD_STEP: f64 = 1e-5;
const MAX_BACKTRACKS: usize = 10;

/// Project a raw control vector onto the feasible set: actuator boxes, then
/// acceleration clipping so no planned speed exceeds the cap.
fn project(u: &mut [f64], prob: &MpcProblem, dt: f64) {
    let p = &prob.params;
    let h = u.len() / 2;
    for k in 0..h {
        u[2 * k] = u[2 * k].clamp(-p.max_steering, p.max_steering);
        u[2 * k + 1] = u[2 * k + 1].clamp(-p.max_accel, p.max_accel);
    }
    // Speed re-projection: the speed recursion is exactly
    // v' = clamp(v + a*dt, 0, max_speed), so clipping a_k at
    // (limit - v_k)/dt keeps every planned speed at or below the cap.
    let mut v = prob.state.speed;
    for k in 0..h {
        let a_cap = (prob.speed_limit - v) / dt;
        if u[2 * k + 1] > a_cap {
            u[2 * k + 1] = a_cap.max(-p.max_accel);
        }
        v = (v + u[2 * k + 1] * dt).clamp(0.0, p.max_speed);
    }
}

fn controls_of(u: &[f64]) -> Vec<ControlInput> {
    u.chunks_exact(2).map(|c| ControlInput { steering: c[0], accel: c[1] }).collect()
}

fn cost(u: &[f64], prob: &MpcProblem, cfg: &MpcConfig) -> f64 {
    let controls = controls_of(u);
    let traj = rollout(&prob.state, &controls, cfg.dt, &prob.params);
    cost_of_trajectory(&traj, &controls, prob, cfg)
}

fn cost_of_trajectory(
    traj: &[VehicleState],
    controls: &[ControlInput],
    prob: &MpcProblem,
    cfg: &MpcConfig,
) -> f64 {
    let w = &cfg.weights;
    let mut j = 0.0;
    for (k, c) in controls.iter().enumerate() {
        let s = &traj[k + 1];
        let dx = prob.goal.x - s.x;
        let dy = prob.goal.y - s.y;
        j += w.w_pos * (dx * dx + dy * dy);
        let bearing = dy.atan2(dx);
        j += w.w_head * (1.0 - (s.heading - bearing).cos());
        if w.w_speed_track > 0.0 {
            let dv = s.speed - prob.speed_limit;
            j += w.w_speed_track * dv * dv;
        }
        j += w.w_steer * c.steering * c.steering + w.w_accel * c.accel * c.accel;
    }
    let last = traj.last().unwrap();
    let dx = prob.goal.x - last.x;
    let dy = prob.goal.y - last.y;
    j + w.w_terminal * (dx * dx + dy * dy)
}

/// Central finite-difference gradient of the shooting cost on the control
/// vector.
fn gradient(u: &[f64], prob: &MpcProblem, cfg: &MpcConfig, h: f64) -> Vec<f64> {
    let mut g = vec![0.0; u.len()];
    let mut probe = u.to_vec();
    for i in 0..u.len() {
        probe[i] = u[i] + h;
        let jp = cost(&probe, prob, cfg);
        probe[i] = u[i] - h;
        let jm = cost(&probe, prob, cfg);
        probe[i] = u[i];
        g[i] = (jp - jm) / (2.0 * h);
    }
    g
}

/// Solve the receding-horizon problem. Never fails: if the iteration budget
/// or the line search runs out, the best feasible iterate is returned with
/// `converged = false`.
pub fn solve(prob: &MpcProblem, cfg: &MpcConfig, warm: Option<&[ControlInput]>) -> MpcSolution {
    let h = cfg.horizon;
    let mut u = vec![0.0; 2 * h];
    if let Some(w) = warm {
        if w.len() == h {
            for (k, c) in w.iter().enumerate() {
                u[2 * k] = c.steering;
                u[2 * k + 1] = c.accel;
            }
        }
    }
    project(&mut u, prob, cfg.dt);
    let mut j = cost(&u, prob, cfg);
    let mut cost_history = vec![j];
    let mut alpha = cfg.initial_step;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..cfg.max_iterations {
        iterations += 1;
        let g = gradient(&u, prob, cfg, FD_STEP);
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < cfg.gradient_tol {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = u.iter().zip(&g).map(|(ui, gi)| ui - alpha * gi).collect();
            project(&mut trial, prob, cfg.dt);
            let jt = cost(&trial, prob, cfg);
            if jt < j {
                u = trial;
                j = jt;
                cost_history.push(j);
                alpha = (alpha * 1.5).min(1.0);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let controls = controls_of(&u);
    let trajectory = rollout(&prob.state, &controls, cfg.dt, &prob.params);
    MpcSolution { controls, trajectory, cost: j, iterations, converged, cost_history }
}

/// Receding-horizon warm start: drop the executed first control, duplicate
/// the last.
pub fn shift_warm_start(prev: &MpcSolution) -> Vec<ControlInput> {
    let mut shifted: Vec<ControlInput> = prev.controls.iter().skip(1).copied().collect();
    if let Some(&last) = prev.controls.last() {
        shifted.push(last);
    }
    shifted
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn params() -> VehicleParams {
        VehicleParams { wheelbase: 0.5, max_steering: 0.5, max_accel: 2.0, max_speed: 5.0 }
    }

    fn problem(state: VehicleState, goal: (f64, f64), limit: f64) -> MpcProblem {
        MpcProblem { state, goal: GroundPoint { x: goal.0, y: goal.1 }, speed_limit: limit, params: params() }
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> MpcProblem {
        let limit = rng.gen_range(0.5..5.0);
        problem(
            VehicleState {
                x: rng.gen_range(-2.0..2.0),
                y: rng.gen_range(-2.0..2.0),
                heading: rng.gen_range(-1.0..1.0),
                speed: rng.gen_range(0.0..limit),
            },
            (rng.gen_range(2.0..15.0), rng.gen_range(-6.0..6.0)),
            limit,
        )
    }

    #[test]
    fn straight_goal_needs_no_steering() {
        let prob = problem(VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 1.0 }, (10.0, 0.0), 3.0);
        let sol = solve(&prob, &MpcConfig::default(), None);
        let max_steer = sol.controls.iter().fold(0.0f64, |m, c| m.max(c.steering.abs()));
        assert!(max_steer <= 1e-3, "max steering {max_steer}");
    }

    #[test]
    fn goal_at_origin_keeps_vehicle_still() {
        let prob = problem(VehicleState { x: 0.0, y: 0.0, heading: 0.0, speed: 0.0 }, (0.0, 0.0), 3.0);
        let sol = solve(&prob, &MpcConfig::default(), None);
        let mean_speed: f64 =
            sol.trajectory.iter().map(|s| s.speed).sum::<f64>() / sol.trajectory.len() as f64;
        assert!(mean_speed <= 0.1, "mean planned speed {mean_speed}");
    }

    #[test]
    fn speed_cap_holds_by_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let mut prob = random_problem(&mut rng);
            prob.speed_limit = 1.5;
            prob.state.speed = prob.state.speed.min(1.5);
            let sol = solve(&prob, &MpcConfig::default(), None);
            for s in &sol.trajectory {
                assert!(s.speed <= 1.5 + 1e-9, "planned speed {}", s.speed);
            }
            for c in &sol.controls {
                assert!(c.steering.abs() <= prob.params.max_steering + 1e-12);
                assert!(c.accel.abs() <= prob.params.max_accel + 1e-12);
            }
        }
    }

    #[test]
    fn mirror_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut prob = random_problem(&mut rng);
            prob.state.heading = 0.0;
            prob.state.y = 0.0;
            let mirrored = MpcProblem {
                goal: GroundPoint { x: prob.goal.x, y: -prob.goal.y },
                ..prob
            };
            let cfg = MpcConfig { max_iterations: 30, ..Default::default() };
            let a = solve(&prob, &cfg, None);
            let b = solve(&mirrored, &cfg, None);
            for (ca, cb) in a.controls.iter().zip(&b.controls) {
                assert!((ca.steering + cb.steering).abs() <= 1e-6, "{} vs {}", ca.steering, cb.steering);
                assert!((ca.accel - cb.accel).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn line_search_cost_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let prob = random_problem(&mut rng);
            let sol = solve(&prob, &MpcConfig::default(), None);
            for w in sol.cost_history.windows(2) {
                assert!(w[1] <= w[0], "cost increased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn gradient_matches_half_step_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = MpcConfig::default();
        for _ in 0..5 {
            let prob = random_problem(&mut rng);
            let mut u = vec![0.0; 2 * cfg.horizon];
            for v in &mut u {
                *v = rng.gen_range(-0.2..0.2);
            }
            project(&mut u, &prob, cfg.dt);
            let g1 = gradient(&u, &prob, &cfg, FD_STEP);
            let g2 = gradient(&u, &prob, &cfg, FD_STEP / 2.0);
            let n1: f64 = g1.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff: f64 = g1.iter().zip(&g2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(diff <= 1e-4 * n1.max(1.0), "gradient mismatch {diff} vs norm {n1}");
        }
    }

    #[test]
    fn shift_warm_start_definition() {
        let sol = MpcSolution {
            controls: vec![
                ControlInput { steering: 0.1, accel: 0.2 },
                ControlInput { steering: 0.3, accel: 0.4 },
                ControlInput { steering: 0.5, accel: 0.6 },
            ],
            trajectory: vec![],
            cost: 0.0,
            iterations: 0,
            converged: true,
            cost_history: vec![],
        };
        let shifted = shift_warm_start(&sol);
        assert_eq!(shifted.len(), 3);
        assert_eq!(shifted[0], sol.controls[1]);
        assert_eq!(shifted[1], sol.controls[2]);
        assert_eq!(shifted[2], sol.controls[2]);
    }

    #[test]
    fn warm_start_not_worse_than_cold_on_unchanged_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = MpcConfig { max_iterations: 20, ..Default::default() };
        for _ in 0..100 {
            let prob = random_problem(&mut rng);
            let cold = solve(&prob, &cfg, None);
            // Descent is monotone, so re-solving from the previous optimum
            // can only hold or improve the cost.
            let warm = solve(&prob, &cfg, Some(&cold.controls));
            assert!(
                warm.cost <= cold.cost + 1e-12,
                "warm start regressed: {} > {}",
                warm.cost,
                cold.cost
            );
        }
    }
}
