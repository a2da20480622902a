//! Moving horizon estimation over the bicycle model.
//!
//! Smooths a sliding window of noisy pose measurements and applied controls
//! into a state estimate, jointly estimating the wheelbase. The decision
//! vector stacks every window state plus the wheelbase; a quadratic arrival
//! cost anchors the first state and a weighted process residual ties
//! consecutive states through one RK4 step of the model.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::vehicle::{step, wrap_angle, ControlInput, VehicleParams, VehicleState};

/// A pose observation (localization output): position plus heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeasurement {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone)]
pub struct MheWindow {
    pub dt: f64,
    /// N pose observations, oldest first.
    pub measurements: Vec<PoseMeasurement>,
    /// N-1 controls; `controls[k]` moved the plant from sample k to k+1.
    pub controls: Vec<ControlInput>,
    pub sigma_pos: f64,
    pub sigma_heading: f64,
    pub prior: VehicleState,
    pub prior_weight: f64,
}

impl MheWindow {
    pub fn horizon(&self) -> usize {
        self.measurements.len()
    }

    fn validate(&self) -> Result<(), MheError> {
        if self.measurements.len() < 2 || self.controls.len() + 1 != self.measurements.len() {
            return Err(MheError::InconsistentWindow {
                measurements: self.measurements.len(),
                controls: self.controls.len(),
            });
        }
        if self.dt <= 0.0 || self.sigma_pos <= 0.0 || self.sigma_heading <= 0.0 {
            return Err(MheError::InconsistentWindow {
                measurements: self.measurements.len(),
                controls: self.controls.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MheOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    /// Weight on the model-consistency residual; large values force the
    /// window toward a pure forward simulation of the estimated initial state.
    pub process_weight: f64,
    pub initial_damping: f64,
}

impl Default for MheOptions {
    fn default() -> Self {
        MheOptions {
            max_iterations: 30,
            gradient_tol: 1e-7,
            process_weight: 1e4,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MheSolution {
    /// Smoothed state at the window end.
    pub state: VehicleState,
    pub wheelbase: f64,
    pub cost: f64,
    pub iterations: usize,
    /// Full decision vector, reusable as a warm start for the next window.
    pub decision: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MheError {
    #[error("inconsistent window: {measurements} measurements, {controls} controls")]
    InconsistentWindow { measurements: usize, controls: usize },
    #[error("Gauss-Newton diverged: cost increased through {0} damping backoffs")]
    Diverged(usize),
}

const WHEELBASE_MIN: f64 = 0.05;
const WHEELBASE_MAX: f64 = 10.0;
const MAX_BACKOFFS: usize = 5;

fn state_at(z: &DVector<f64>, k: usize) -> VehicleState {
    VehicleState { x: z[4 * k], y: z[4 * k + 1], heading: z[4 * k + 2], speed: z[4 * k + 3] }
}

fn residuals(z: &DVector<f64>, w: &MheWindow, p: &VehicleParams, opts: &MheOptions) -> DVector<f64> {
    let n = w.measurements.len();
    let wheelbase = z[4 * n];
    let mut model = *p;
    model.wheelbase = wheelbase;
    let mut r = DVector::zeros(4 + 3 * n + 4 * (n - 1));
    let mut idx = 0;
    let pw = w.prior_weight.sqrt();
    let s0 = state_at(z, 0);
    r[idx] = pw * (s0.x - w.prior.x);
    r[idx + 1] = pw * (s0.y - w.prior.y);
    r[idx + 2] = pw * wrap_angle(s0.heading - w.prior.heading);
    r[idx + 3] = pw * (s0.speed - w.prior.speed);
    idx += 4;
    for (k, m) in w.measurements.iter().enumerate() {
        let s = state_at(z, k);
        r[idx] = (s.x - m.x) / w.sigma_pos;
        r[idx + 1] = (s.y - m.y) / w.sigma_pos;
        r[idx + 2] = wrap_angle(s.heading - m.heading) / w.sigma_heading;
        idx += 3;
    }
    let rho = opts.process_weight.sqrt();
    for (k, u) in w.controls.iter().enumerate() {
        let pred = step(&state_at(z, k), u, w.dt, &model);
        let next = state_at(z, k + 1);
        r[idx] = rho * (next.x - pred.x);
        r[idx + 1] = rho * (next.y - pred.y);
        r[idx + 2] = rho * wrap_angle(next.heading - pred.heading);
        r[idx + 3] = rho * (next.speed - pred.speed);
        idx += 4;
    }
    r
}

fn clamp_decision(z: &mut DVector<f64>, n: usize) {
    for k in 0..n {
        if z[4 * k + 3] < 0.0 {
            z[4 * k + 3] = 0.0;
        }
    }
    z[4 * n] = z[4 * n].clamp(WHEELBASE_MIN, WHEELBASE_MAX);
}

fn initial_guess(w: &MheWindow, p_guess: &VehicleParams) -> DVector<f64> {
    let n = w.measurements.len();
    let mut z = DVector::zeros(4 * n + 1);
    for (k, m) in w.measurements.iter().enumerate() {
        z[4 * k] = m.x;
        z[4 * k + 1] = m.y;
        z[4 * k + 2] = m.heading;
        let (a, b) = if k + 1 < n { (k, k + 1) } else { (k - 1, k) };
        let dx = w.measurements[b].x - w.measurements[a].x;
        let dy = w.measurements[b].y - w.measurements[a].y;
        z[4 * k + 3] = (dx.hypot(dy) / w.dt).max(0.0);
    }
    z[4 * n] = p_guess.wheelbase;
    z
}

/// Run damped Gauss-Newton with finite-difference Jacobians over the stacked
/// window states and the wheelbase.
pub fn mhe_estimate(
    w: &MheWindow,
    p_guess: &VehicleParams,
    opts: &MheOptions,
) -> Result<MheSolution, MheError> {
    mhe_estimate_warm(w, p_guess, opts, None)
}

/// Like [`mhe_estimate`] but seeded with a previous decision vector, the way
/// the control loop reuses the last window's solution.
pub fn mhe_estimate_warm(
    w: &MheWindow,
    p_guess: &VehicleParams,
    opts: &MheOptions,
    warm: Option<&[f64]>,
) -> Result<MheSolution, MheError> {
    w.validate()?;
    let n = w.measurements.len();
    let dim = 4 * n + 1;
    let mut z = match warm {
        Some(v) if v.len() == dim => DVector::from_column_slice(v),
        _ => initial_guess(w, p_guess),
    };
    clamp_decision(&mut z, n);

    let mut r = residuals(&z, w, p_guess, opts);
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;

    for _ in 0..opts.max_iterations {
        iterations += 1;
        // Forward-difference Jacobian, column by column.
        let m = r.len();
        let mut jac = DMatrix::zeros(m, dim);
        for j in 0..dim {
            let h = 1e-6 * (1.0 + z[j].abs());
            let mut zp = z.clone();
            zp[j] += h;
            let rp = residuals(&zp, w, p_guess, opts);
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let grad = jac.transpose() * &r;
        if grad.amax() < opts.gradient_tol {
            break;
        }
        let jtj = jac.transpose() * &jac;

        let mut backoffs = 0;
        loop {
            let mut damped = jtj.clone();
            for i in 0..dim {
                damped[(i, i)] += lambda;
            }
            let step_ok = damped.cholesky().map(|ch| ch.solve(&(-&grad)));
            if let Some(dz) = step_ok {
                let mut z_new = &z + dz;
                clamp_decision(&mut z_new, n);
                let r_new = residuals(&z_new, w, p_guess, opts);
                let cost_new = r_new.norm_squared();
                if cost_new <= cost {
                    z = z_new;
                    r = r_new;
                    cost = cost_new;
                    lambda = (lambda / 3.0).max(1e-12);
                    break;
                }
            }
            lambda *= 10.0;
            backoffs += 1;
            if backoffs >= MAX_BACKOFFS {
                return Err(MheError::Diverged(backoffs));
            }
        }
    }

    Ok(MheSolution {
        state: state_at(&z, n - 1),
        wheelbase: z[4 * n],
        cost,
        iterations,
        decision: z.as_slice().to_vec(),
    })
}
