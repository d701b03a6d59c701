//! Projection onto general sublevel sets by an augmented-Lagrangian penalty
//! on `1/2 |y - p|^2`, minimised with damped Newton steps, followed by a
//! feasibility polish.

use nalgebra::DMatrix;

use crate::constraints::{ConstraintFamily, Piece, KINK_TOL};
use crate::Point;

/// Value of `f_i(t, y)`, the gradient of one maximising piece and its
/// (scalar) curvature `2 * scale`.
fn value_grad(family: &ConstraintFamily, i: usize, t: f64, y: &Point) -> (f64, Point, f64) {
    let c = &family.constraints[i];
    let (j, v) = c
        .pieces
        .iter()
        .map(|p| p.value(t, y))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (j, v)| if v > b.1 { (j, v) } else { b });
    let curv = match &c.pieces[j] {
        Piece::Quadratic(q) => 2.0 * q.scale,
        Piece::Affine(_) => 0.0,
    };
    (v, c.pieces[j].gradient(y), curv)
}

struct Merit<'a> {
    family: &'a ConstraintFamily,
    t: f64,
    target: &'a Point,
    lambda: Vec<f64>,
    penalty: f64,
}

impl Merit<'_> {
    fn value(&self, y: &Point) -> f64 {
        let mut phi = 0.5 * (y - self.target).norm_squared();
        for (i, c) in self.family.constraints.iter().enumerate() {
            let s = (self.lambda[i] + self.penalty * c.value(self.t, y)).max(0.0);
            phi += (s * s - self.lambda[i] * self.lambda[i]) / (2.0 * self.penalty);
        }
        phi
    }

    /// Gradient and generalised Hessian of the merit.
    fn derivatives(&self, y: &Point) -> (Point, DMatrix<f64>) {
        let n = y.len();
        let mut g = y - self.target;
        let mut h = DMatrix::<f64>::identity(n, n);
        for i in 0..self.family.len() {
            let (v, grad, curv) = value_grad(self.family, i, self.t, y);
            let s = (self.lambda[i] + self.penalty * v).max(0.0);
            if s > 0.0 {
                g += &grad * s;
                h += DMatrix::<f64>::identity(n, n) * (s * curv)
                    + &grad * grad.transpose() * self.penalty;
            }
        }
        (g, h)
    }

    /// Newton direction, regularised until the system is positive definite.
    fn direction(&self, g: &Point, h: &DMatrix<f64>) -> Point {
        let n = g.len();
        let mut shift = 0.0;
        for _ in 0..60 {
            let reg = h + DMatrix::<f64>::identity(n, n) * shift;
            if let Some(ch) = reg.cholesky() {
                let d = -ch.solve(g);
                if d.iter().all(|v| v.is_finite()) {
                    return d;
                }
            }
            shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
        }
        -g.clone()
    }
}

/// Runs one start. Returns a point feasible within `tol`, or `None` when the
/// iteration budget runs out or the polish cannot restore feasibility.
pub(crate) fn solve_from(
    family: &ConstraintFamily,
    t: f64,
    target: &Point,
    start: &Point,
    tol: f64,
    max_iter: usize,
) -> Option<Point> {
    let m = family.len();
    let mut merit = Merit {
        family,
        t,
        target,
        lambda: vec![0.0; m],
        penalty: 10.0,
    };
    let mut y = start.clone();
    let mut iters = 0usize;
    let mut prev_violation = f64::INFINITY;
    let mut converged = false;

    let mut outer_rounds = 0usize;

    'outer: while iters < max_iter && outer_rounds < 80 {
        outer_rounds += 1;
        // Inner minimisation of the augmented Lagrangian.
        let y_outer = y.clone();
        loop {
            let (g, h) = merit.derivatives(&y);
            if g.norm() <= 0.1 * tol || iters >= max_iter {
                break;
            }
            let mut d = merit.direction(&g, &h);
            let mut slope = g.dot(&d);
            if slope >= 0.0 {
                d = -g.clone();
                slope = -g.norm_squared();
            }
            let phi = merit.value(&y);
            let mut step = 1.0f64;
            let mut accepted = false;
            while step > 1e-16 {
                let trial = &y + &d * step;
                if merit.value(&trial) <= phi + 1e-4 * step * slope {
                    y = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            iters += 1;
            if !accepted || (&d * step).norm() <= 1e-3 * tol {
                break;
            }
        }

        let values: Vec<f64> = family.constraints.iter().map(|c| c.value(t, &y)).collect();
        let violation = values.iter().fold(0.0f64, |a, &v| a.max(v));
        for (l, v) in merit.lambda.iter_mut().zip(&values) {
            *l = (*l + merit.penalty * v).max(0.0);
        }
        let moved = (&y - &y_outer).norm();
        if violation <= 0.1 * tol && moved <= 0.1 * tol {
            converged = true;
            break 'outer;
        }
        if violation > 0.25 * prev_violation {
            merit.penalty = (merit.penalty * 10.0).min(1e10);
        }
        prev_violation = violation;
    }

    if !converged {
        return None;
    }
    polish(family, t, y, tol)
}

fn polish(family: &ConstraintFamily, t: f64, mut y: Point, tol: f64) -> Option<Point> {
    for _ in 0..200 {
        let (i, v) = family.max_violation(t, &y);
        if v <= 0.5 * tol {
            return Some(y);
        }
        let (_, g, _) = value_grad(family, i, t, &y);
        let gn2 = g.norm_squared();
        if gn2 <= KINK_TOL {
            return None;
        }
        y -= g * ((v + 0.25 * tol) / gn2);
    }
    family.membership(t, &y, tol).then_some(y)
}
