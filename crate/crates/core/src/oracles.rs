//! Closed-form trajectories for the corner frame `C(t) = { x2 >= t + |x1| }`.
//!
//! A ball at rest inside the frame waits until the frame reaches it, slides
//! along the touching wing and then rides in the corner. With gravity
//! `g(t, x) = (0, g0 t)` it first falls freely.
//!
//! Branch intervals are half-open on the right; at a breakpoint the
//! right-hand formula is used.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{point, Point};

/// Absolute slack for membership of initial values.
const INITIAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("initial value {x0:?} is not in C(0) (violation {violation:e})")]
    InfeasibleInitial { x0: Vec<f64>, violation: f64 },
    #[error("oracle needs a point of dimension 2, got {0}")]
    Dimension(usize),
    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// `sign` with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(-1 + sqrt(1 + 2 g0 s)) / g0`, written so that it stays accurate as
/// `g0 -> 0` (where it tends to `s`).
fn fall_time(s: f64, g0: f64) -> f64 {
    2.0 * s / (1.0 + (1.0 + 2.0 * g0 * s).sqrt())
}

fn check_x0(x0: &Point) -> Result<(f64, f64), OracleError> {
    if x0.len() != 2 {
        return Err(OracleError::Dimension(x0.len()));
    }
    let violation = x0[0].abs() - x0[1];
    if violation > INITIAL_TOL {
        return Err(OracleError::InfeasibleInitial {
            x0: vec![x0[0], x0[1]],
            violation,
        });
    }
    Ok((x0[0], x0[1]))
}

fn check_t(t: f64, horizon: f64) -> Result<(), OracleError> {
    if !(0.0..=horizon).contains(&t) {
        return Err(OracleError::OutOfRange { t, horizon });
    }
    Ok(())
}

/// Phase-transition times of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakpoints {
    /// Time at which the frame reaches the resting ball: `x2 - |x1|`.
    pub t_bar: f64,
    /// Start of the sliding phase.
    pub theta1: f64,
    /// Start of the corner phase.
    pub theta2: f64,
    pub g0: f64,
}

impl Breakpoints {
    pub fn new(x0: &Point, g0: f64) -> Result<Self, OracleError> {
        if !(g0 >= 0.0 && g0.is_finite()) {
            return Err(OracleError::Invalid(format!("g0 must be >= 0, got {g0}")));
        }
        let (x1, x2) = check_x0(x0)?;
        let t_bar = (x2 - x1.abs()).max(0.0);
        Ok(Self {
            t_bar,
            theta1: fall_time(t_bar, g0),
            theta2: fall_time(t_bar + 2.0 * x1.abs(), g0),
            g0,
        })
    }

    pub fn times(&self) -> [f64; 3] {
        [self.t_bar, self.theta1, self.theta2]
    }
}

/// The corner trajectory from the origin, `(0, t)`.
pub fn example1(t: f64) -> Point {
    point(&[0.0, t])
}

/// Trajectory from `x0` without external force.
pub fn example2(x0: &Point, t: f64, horizon: f64) -> Result<Point, OracleError> {
    example3(x0, t, horizon, 0.0)
}

/// Trajectory from `x0` under `g(t, x) = (0, g0 t)`.
pub fn example3(x0: &Point, t: f64, horizon: f64, g0: f64) -> Result<Point, OracleError> {
    let bp = Breakpoints::new(x0, g0)?;
    check_t(t, horizon)?;
    let (x1, x2) = (x0[0], x0[1]);
    Ok(if t < bp.theta1 {
        point(&[x1, x2 - g0 * t * t / 2.0])
    } else if t < bp.theta2 {
        let s = (t - bp.t_bar) / 2.0;
        let fall = g0 * t * t / 4.0;
        point(&[x1 - sign(x1) * (s + fall), x2 + s - fall])
    } else {
        point(&[0.0, t])
    })
}

/// Right derivative of [`example3`].
pub fn example3_velocity(x0: &Point, t: f64, horizon: f64, g0: f64) -> Result<Point, OracleError> {
    let bp = Breakpoints::new(x0, g0)?;
    check_t(t, horizon)?;
    Ok(if t < bp.theta1 {
        point(&[0.0, -g0 * t])
    } else if t < bp.theta2 {
        let rate = (1.0 + g0 * t) / 2.0;
        point(&[-sign(x0[0]) * rate, rate - g0 * t])
    } else {
        point(&[0.0, 1.0])
    })
}

/// Terminal state at `T = 3` for the frame with lid `x2 <= t + 1`.
pub fn example4_endpoint(x0: &Point) -> Result<Point, OracleError> {
    let (_, x2) = check_x0(x0)?;
    if x2 - 1.0 > INITIAL_TOL {
        return Err(OracleError::InfeasibleInitial {
            x0: vec![x0[0], x0[1]],
            violation: x2 - 1.0,
        });
    }
    Ok(point(&[0.0, 3.0]))
}

/// A registered reference solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Oracle {
    Example1,
    Example2 { x0: [f64; 2] },
    Example3 { x0: [f64; 2], g0: f64 },
}

impl Oracle {
    pub fn eval(&self, t: f64, horizon: f64) -> Result<Point, OracleError> {
        match self {
            Oracle::Example1 => {
                check_t(t, horizon)?;
                Ok(example1(t))
            }
            Oracle::Example2 { x0 } => example2(&point(x0), t, horizon),
            Oracle::Example3 { x0, g0 } => example3(&point(x0), t, horizon, *g0),
        }
    }

    pub fn breakpoints(&self) -> Result<Option<Breakpoints>, OracleError> {
        match self {
            Oracle::Example1 => Ok(None),
            Oracle::Example2 { x0 } => Breakpoints::new(&point(x0), 0.0).map(Some),
            Oracle::Example3 { x0, g0 } => Breakpoints::new(&point(x0), *g0).map(Some),
        }
    }
}
