use nalgebra::DVector;
use serde::Serialize;

use super::patch::{ManifoldPatch, Point};
use crate::error::{GeoError, Result};

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Relative metric-speed drift beyond which a run is rejected.
pub const MAX_SPEED_DRIFT: f64 = 1e-3;
/// Position norm treated as escape to infinity.
pub const BLOW_UP_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicState {
    pub position: Point,
    pub velocity: DVector<f64>,
    pub time: f64,
}

impl GeodesicState {
    pub fn new(position: Point, velocity: DVector<f64>, time: f64) -> Self {
        GeodesicState {
            position,
            velocity,
            time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    DomainBoundary,
    BlowUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exit {
    /// Estimated parameter time at which the trajectory leaves the domain.
    pub time: f64,
    pub reason: ExitReason,
}

/// Output of [`geodesic_flow`]: uniformly stepped states, truncated at an exit.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<GeodesicState>,
    pub exit: Option<Exit>,
    pub step: f64,
    /// Largest relative deviation of the metric speed from its initial value.
    pub speed_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> &GeodesicState {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn into_complete(self) -> Result<Trajectory> {
        match self.exit {
            Some(e) => Err(GeoError::DomainExit { time: e.time }),
            None => Ok(self),
        }
    }
}

fn accel(patch: &ManifoldPatch, x: &Point, v: &DVector<f64>) -> DVector<f64> {
    -patch.christoffel_raw(x).contract(v)
}

fn rk4_step(patch: &ManifoldPatch, x: &Point, v: &DVector<f64>, h: f64) -> (Point, DVector<f64>) {
    let k1x = v.clone();
    let k1v = accel(patch, x, v);
    let x2 = x + &k1x * (0.5 * h);
    let v2 = v + &k1v * (0.5 * h);
    let k2v = accel(patch, &x2, &v2);
    let x3 = x + &v2 * (0.5 * h);
    let v3 = v + &k2v * (0.5 * h);
    let k3v = accel(patch, &x3, &v3);
    let x4 = x + &v3 * h;
    let v4 = v + &k3v * h;
    let k4v = accel(patch, &x4, &v4);
    let xn = x + (k1x + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
    let vn = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    (xn, vn)
}

fn escaped(patch: &ManifoldPatch, x: &Point) -> Option<ExitReason> {
    if !x.iter().all(|c| c.is_finite()) || x.norm() > BLOW_UP_NORM {
        Some(ExitReason::BlowUp)
    } else if !patch.contains(x) {
        Some(ExitReason::DomainBoundary)
    } else {
        None
    }
}

/// Integrates `x'' + Γ(x)(x', x') = 0` with classical RK4 from `state0` to
/// time `t_end` (which may precede `state0.time`). The trajectory is cut at
/// the first step leaving the patch, with the exit time located by bisection
/// of that step.
pub fn geodesic_flow(
    patch: &ManifoldPatch,
    state0: &GeodesicState,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(GeoError::StepTooLarge {
            drift: f64::NAN,
            step,
        });
    }
    if !patch.contains(&state0.position) {
        return Err(GeoError::OutOfDomain {
            point: state0.position.iter().copied().collect(),
        });
    }
    let span = t_end - state0.time;
    let n = ((span.abs() / step).ceil() as usize).max(usize::from(span != 0.0));
    let h = if n == 0 { 0.0 } else { span / n as f64 };
    let speed0 = patch.norm(&state0.position, &state0.velocity);
    let mut states = Vec::with_capacity(n + 1);
    states.push(state0.clone());
    let mut drift: f64 = 0.0;
    let mut exit = None;
    for i in 0..n {
        let cur = &states[states.len() - 1];
        let (x, v) = rk4_step(patch, &cur.position, &cur.velocity, h);
        let t = state0.time + (i + 1) as f64 * h;
        if let Some(reason) = escaped(patch, &x) {
            // bisect the step for the exit time
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                let (xm, _) = rk4_step(patch, &cur.position, &cur.velocity, h * mid);
                if escaped(patch, &xm).is_some() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            exit = Some(Exit {
                time: cur.time + h * 0.5 * (lo + hi),
                reason,
            });
            break;
        }
        let speed = patch.norm(&x, &v);
        let rel = (speed - speed0).abs() / speed0.max(1e-300);
        if speed0 > 0.0 {
            drift = drift.max(rel);
        }
        if speed0 > 0.0 && rel > MAX_SPEED_DRIFT {
            return Err(GeoError::StepTooLarge { drift: rel, step });
        }
        states.push(GeodesicState::new(x, v, t));
    }
    Ok(Trajectory {
        states,
        exit,
        step: h.abs(),
        speed_drift: drift,
    })
}

/// Chart-level exponential map: position at parameter 1.
pub fn exp_point(patch: &ManifoldPatch, x: &Point, v: &DVector<f64>) -> Result<Point> {
    let traj = geodesic_flow(patch, &GeodesicState::new(x.clone(), v.clone(), 0.0), 1.0, DEFAULT_STEP)?
        .into_complete()?;
    Ok(traj.last().position.clone())
}
