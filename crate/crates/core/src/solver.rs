//! Catching-up integration of `-x' ∈ N_{C(t)}(x) + g(t, x)`:
//!
//! ```text
//!   x_{k+1} = proj_{C(t_{k+1})}(x_k - h_k g(t_k, x_k))
//! ```
//!
//! plus the a priori bound on `|x' + g|` implied by the growth envelope of `g`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{certify, AssumptionReport, CertifyOptions, ConstraintFamily};
use crate::geometry::{GeometryError, ProjectionOptions, ProxCertificate, SetSlice};
use crate::quadrature::integrate;
use crate::sampling::QuasiRandom;
use crate::Point;

/// Smallest admissible step length.
pub const MIN_STEP: f64 = 1e-12;

/// Relative accuracy requested from the quadrature of the growth envelope.
const QUADRATURE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "x0 violates constraint f_{} by {violation:e} (distance {distance:e} to C(0), healing radius {radius:e})",
        index + 1
    )]
    InfeasibleInitial {
        /// Zero-based index of the most violated constraint.
        index: usize,
        violation: f64,
        distance: f64,
        radius: f64,
    },
    #[error("C({t}) is empty")]
    InfeasibleSlice { t: f64 },
    #[error("projection failed at step {step} (t = {t}): {source}")]
    NonConvergence {
        step: usize,
        t: f64,
        source: GeometryError,
    },
    #[error("assumption check refuted: {}", summary.join("; "))]
    Admission { summary: Vec<String> },
    #[error("perturbation envelope violated: {0}")]
    Perturbation(String),
}

/// Scalar function of time.
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Force term `g(t, x)`.
pub type ForceFn = Arc<dyn Fn(f64, &Point) -> Point + Send + Sync>;
/// Local Lipschitz envelope `(eta, t) -> k_eta(t)`.
pub type LipschitzFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Single-valued perturbation with growth envelope `beta` and local
/// Lipschitz envelope `k_eta`.
#[derive(Clone)]
pub enum Perturbation {
    Zero,
    /// `g(t, x) = g0 t e_n` (pulls down along the last axis); `beta(t) = g0 t`.
    Gravity { g0: f64 },
    /// `g(t, x) = c + s t`; `beta(t) = |c| + |s| t`.
    Affine { c: Vec<f64>, s: Vec<f64> },
    Custom {
        g: ForceFn,
        beta: TimeFn,
        /// `None` skips the Lipschitz sampling.
        k_eta: Option<LipschitzFn>,
    },
}

impl fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Zero => write!(f, "Zero"),
            Perturbation::Gravity { g0 } => write!(f, "Gravity {{ g0: {g0} }}"),
            Perturbation::Affine { c, s } => write!(f, "Affine {{ c: {c:?}, s: {s:?} }}"),
            Perturbation::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl Perturbation {
    pub fn eval(&self, t: f64, x: &Point) -> Point {
        let n = x.len();
        match self {
            Perturbation::Zero => Point::zeros(n),
            Perturbation::Gravity { g0 } => {
                let mut g = Point::zeros(n);
                g[n - 1] = g0 * t;
                g
            }
            Perturbation::Affine { c, s } => {
                Point::from_iterator(n, c.iter().zip(s).map(|(c, s)| c + s * t))
            }
            Perturbation::Custom { g, .. } => g(t, x),
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::Gravity { g0 } => g0.abs() * t,
            Perturbation::Affine { c, s } => norm(c) + norm(s) * t,
            Perturbation::Custom { beta, .. } => beta(t),
        }
    }

    /// `k_eta(t)`; zero for the forces that do not depend on `x`.
    pub fn k_eta(&self, eta: f64, t: f64) -> Option<f64> {
        match self {
            Perturbation::Custom { k_eta, .. } => k_eta.as_ref().map(|k| k(eta, t)),
            _ => Some(0.0),
        }
    }

    /// Closed form of `int_0^T beta`, where one is known.
    pub fn beta_integral_exact(&self, horizon: f64) -> Option<f64> {
        match self {
            Perturbation::Zero => Some(0.0),
            Perturbation::Gravity { g0 } => Some(g0.abs() * horizon * horizon / 2.0),
            Perturbation::Affine { c, s } => Some(norm(c) * horizon + norm(s) * horizon * horizon / 2.0),
            Perturbation::Custom { .. } => None,
        }
    }

    fn validate(&self, dim: usize) -> Result<(), SolverError> {
        match self {
            Perturbation::Gravity { g0 } if !g0.is_finite() => {
                Err(SolverError::Config(format!("g0 must be finite, got {g0}")))
            }
            Perturbation::Affine { c, s } if c.len() != dim || s.len() != dim => Err(
                SolverError::Config(format!("affine perturbation needs {dim} coefficients")),
            ),
            Perturbation::Affine { c, s } if c.iter().chain(s).any(|v| !v.is_finite()) => {
                Err(SolverError::Config("affine perturbation is not finite".into()))
            }
            _ => Ok(()),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct SweepingProblem {
    pub family: ConstraintFamily,
    pub perturbation: Perturbation,
    pub x0: Point,
    pub horizon: f64,
}

impl SweepingProblem {
    pub fn new(
        family: ConstraintFamily,
        perturbation: Perturbation,
        x0: Point,
        horizon: f64,
    ) -> Result<Self, SolverError> {
        let p = Self {
            family,
            perturbation,
            x0,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.family
            .validate()
            .map_err(|e| SolverError::Config(e.to_string()))?;
        if self.x0.len() != self.family.dim {
            return Err(SolverError::Config(format!(
                "x0 has dimension {}, family has {}",
                self.x0.len(),
                self.family.dim
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Config("x0 is not finite".into()));
        }
        if !(self.horizon > 0.0 && self.horizon <= self.family.horizon) {
            return Err(SolverError::Config(format!(
                "horizon {} must lie in (0, {}]",
                self.horizon, self.family.horizon
            )));
        }
        self.perturbation.validate(self.family.dim)
    }
}

/// Extra grid points placed geometrically around given times.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub breakpoints: Vec<f64>,
    /// Points `b ± h / 2^j` are added for `j = 1..=levels`.
    pub levels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub n_steps: usize,
    /// Projection tolerance; `None` uses the projector default.
    pub tol: Option<f64>,
    /// Seeds the multi-start projector.
    pub seed: u64,
    pub refine: Option<Refinement>,
    /// Sample budget of the admission checks.
    pub certify_budget: usize,
    /// Hypomonotonicity constant tested at admission.
    pub gamma: f64,
    /// Radius within which an infeasible `x0` is projected; `None` uses the
    /// certified prox radius `r`.
    pub heal_radius: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            tol: None,
            seed: 0,
            refine: None,
            certify_budget: 2000,
            gamma: CertifyOptions::default().gamma,
            heal_radius: None,
        }
    }
}

/// `t_k = T k / N`, endpoints exact.
pub fn uniform_grid(horizon: f64, n: usize) -> Result<Vec<f64>, SolverError> {
    if n < 2 {
        return Err(SolverError::Config(format!("need at least 2 steps, got {n}")));
    }
    if !(horizon.is_finite() && horizon / n as f64 >= MIN_STEP) {
        return Err(SolverError::Config(format!(
            "horizon {horizon} is shorter than {n} steps of length {MIN_STEP:e}"
        )));
    }
    Ok((0..=n)
        .map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 })
        .collect())
}

/// Uniform grid with geometric clusters around each breakpoint.
pub fn refined_grid(horizon: f64, n: usize, refine: &Refinement) -> Result<Vec<f64>, SolverError> {
    let mut grid = uniform_grid(horizon, n)?;
    let h = horizon / n as f64;
    for &b in &refine.breakpoints {
        if !(0.0..=horizon).contains(&b) {
            continue;
        }
        grid.push(b);
        for j in 1..=refine.levels {
            let d = h / 2f64.powi(j as i32);
            grid.extend([b - d, b + d].into_iter().filter(|t| (0.0..=horizon).contains(t)));
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < MIN_STEP);
    // keep the exact endpoints after deduplication
    *grid.first_mut().expect("grid is nonempty") = 0.0;
    *grid.last_mut().expect("grid is nonempty") = horizon;
    Ok(grid)
}

/// Discrete solution with per-step projection data.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<Point>,
    /// `|x_{k+1} - (x_k - h g)|`, the length of the projection at step `k`;
    /// entry 0 is the healing distance of `x0`.
    pub corrections: Vec<f64>,
    /// Projection tolerance used; states are feasible within `10 tol`.
    pub tol: f64,
    /// Distance `x0` was moved to make it feasible.
    pub healed: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn endpoint(&self) -> &Point {
        self.states.last().expect("trajectory is nonempty")
    }

    /// Backward differences `(x_k - x_{k-1}) / (t_k - t_{k-1})`, `k >= 1`.
    pub fn velocities(&self) -> Vec<Point> {
        self.states
            .windows(2)
            .zip(self.grid.windows(2))
            .map(|(x, t)| (&x[1] - &x[0]) / (t[1] - t[0]))
            .collect()
    }

    /// First grid time at which the projection moved the state by more than
    /// `threshold`.
    pub fn first_contact(&self, threshold: f64) -> Option<f64> {
        self.corrections
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, c)| **c > threshold)
            .map(|(k, _)| self.grid[k])
    }

    /// Piecewise-linear interpolant.
    pub fn interpolate(&self, t: f64) -> Point {
        let k = self.grid.partition_point(|s| *s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k >= self.grid.len() {
            return self.endpoint().clone();
        }
        let (t0, t1) = (self.grid[k - 1], self.grid[k]);
        let w = (t - t0) / (t1 - t0);
        &self.states[k - 1] * (1.0 - w) + &self.states[k] * w
    }
}

/// A problem that passed the admission checks.
#[derive(Clone, Debug)]
pub struct Solver {
    problem: SweepingProblem,
    opts: SolverOptions,
    report: AssumptionReport,
    cert: ProxCertificate,
}

impl Solver {
    /// Certifies A1-A4 on the family and samples the perturbation envelopes.
    pub fn admit(problem: SweepingProblem, opts: SolverOptions) -> Result<Self, SolverError> {
        problem.validate()?;
        let (report, cert) = certify(
            &problem.family,
            &CertifyOptions {
                budget: opts.certify_budget,
                gamma: opts.gamma,
                seed: opts.seed,
                ..CertifyOptions::default()
            },
        );
        let cert = match cert {
            Some(c) if report.all_passed() => c,
            _ => {
                return Err(SolverError::Admission {
                    summary: report.summary(),
                })
            }
        };
        check_envelopes(&problem, opts.certify_budget.min(1000), opts.seed)?;
        Ok(Self {
            problem,
            opts,
            report,
            cert,
        })
    }

    pub fn problem(&self) -> &SweepingProblem {
        &self.problem
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn report(&self) -> &AssumptionReport {
        &self.report
    }

    pub fn certificate(&self) -> &ProxCertificate {
        &self.cert
    }

    /// The same admitted problem with another step count.
    pub fn with_steps(&self, n_steps: usize) -> Self {
        let mut s = self.clone();
        s.opts.n_steps = n_steps;
        s
    }

    pub fn grid(&self) -> Result<Vec<f64>, SolverError> {
        match &self.opts.refine {
            Some(r) => refined_grid(self.problem.horizon, self.opts.n_steps, r),
            None => uniform_grid(self.problem.horizon, self.opts.n_steps),
        }
    }

    pub fn solve(&self) -> Result<Trajectory, SolverError> {
        self.solve_from(&self.problem.x0)
    }

    /// Same problem from another initial value; admission is shared.
    pub fn solve_from(&self, x0: &Point) -> Result<Trajectory, SolverError> {
        let radius = self.opts.heal_radius.unwrap_or(self.cert.r);
        run(
            &self.problem,
            x0,
            &self.grid()?,
            &self.projection_options(),
            radius,
        )
    }

    fn projection_options(&self) -> ProjectionOptions {
        ProjectionOptions {
            tol: self.opts.tol,
            seed: self.opts.seed,
            prox_radius: self.cert.r,
            ..ProjectionOptions::default()
        }
    }
}

/// Admits `problem` with default options and `n` uniform steps.
pub fn catching_up(problem: &SweepingProblem, n: usize) -> Result<Trajectory, SolverError> {
    let opts = SolverOptions {
        n_steps: n,
        ..SolverOptions::default()
    };
    Solver::admit(problem.clone(), opts)?.solve()
}

fn check_envelopes(problem: &SweepingProblem, samples: usize, seed: u64) -> Result<(), SolverError> {
    let fam = &problem.family;
    let pert = &problem.perturbation;
    let mut q = QuasiRandom::new(fam.dim, seed ^ 0x9e);
    let mut qt = QuasiRandom::new(1, seed ^ 0x9f);
    let eta = fam
        .bounds
        .iter()
        .map(|[lo, hi]| lo.abs().max(hi.abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    for _ in 0..samples {
        let t = qt.next_in_interval(0.0, problem.horizon);
        let slice = SetSlice::new(fam, t).map_err(|_| SolverError::InfeasibleSlice { t })?;
        let y = q.next_in_box(&fam.bounds);
        let Ok(x) = slice.pull_in(&y) else {
            continue;
        };
        let g = pert.eval(t, &x);
        let bound = pert.beta(t) * (1.0 + x.norm());
        if g.norm() > bound * (1.0 + 1e-12) + 1e-12 {
            return Err(SolverError::Perturbation(format!(
                "|g({t}, {:?})| = {} exceeds beta(t)(1 + |x|) = {bound}",
                x.as_slice(),
                g.norm()
            )));
        }
        if let Some(k) = pert.k_eta(eta, t) {
            let gy = pert.eval(t, &y);
            let lip = k * (&x - &y).norm();
            if (g - gy).norm() > lip * (1.0 + 1e-12) + 1e-12 {
                return Err(SolverError::Perturbation(format!(
                    "g({t}, .) is not {k}-Lipschitz on the ball of radius {eta}"
                )));
            }
        }
    }
    Ok(())
}

fn slice_at<'a>(
    fam: &'a ConstraintFamily,
    t: f64,
    popts: &ProjectionOptions,
) -> Result<SetSlice<'a>, SolverError> {
    SetSlice::with_options(fam, t, popts.clone()).map_err(|e| match e {
        GeometryError::EmptySlice { t } => SolverError::InfeasibleSlice { t },
        other => SolverError::Config(other.to_string()),
    })
}

fn run(
    problem: &SweepingProblem,
    x0: &Point,
    grid: &[f64],
    popts: &ProjectionOptions,
    heal_radius: f64,
) -> Result<Trajectory, SolverError> {
    let fam = &problem.family;
    if x0.len() != fam.dim {
        return Err(SolverError::Config(format!(
            "x0 has dimension {}, family has {}",
            x0.len(),
            fam.dim
        )));
    }
    let first = slice_at(fam, grid[0], popts)?;
    let tol = first.tol();
    let (index, violation) = fam.max_violation(grid[0], x0);
    let (start, healed) = if violation <= tol {
        (x0.clone(), None)
    } else {
        let pr = first.project_detailed(x0);
        let distance = pr.as_ref().map_or(f64::INFINITY, |p| p.distance);
        match pr {
            Ok(p) if distance <= heal_radius => {
                log::warn!(
                    "x0 violates f_{} by {violation:e}; projected onto C(0) (moved {distance:e})",
                    index + 1
                );
                (p.point, Some(distance))
            }
            _ => {
                return Err(SolverError::InfeasibleInitial {
                    index,
                    violation,
                    distance,
                    radius: heal_radius,
                })
            }
        }
    };

    let mut states = Vec::with_capacity(grid.len());
    let mut corrections = Vec::with_capacity(grid.len());
    states.push(start);
    corrections.push(healed.unwrap_or(0.0));
    for k in 0..grid.len() - 1 {
        let (t, t_next) = (grid[k], grid[k + 1]);
        let x = &states[k];
        let predicted = x - problem.perturbation.eval(t, x) * (t_next - t);
        let mut opts = popts.clone();
        opts.seed = popts.seed.wrapping_add(k as u64);
        let slice = slice_at(fam, t_next, &opts)?;
        let next = match slice.project_detailed(&predicted) {
            Ok(p) => p.point,
            Err(source) => {
                return Err(SolverError::NonConvergence {
                    step: k,
                    t: t_next,
                    source,
                })
            }
        };
        corrections.push((&next - &predicted).norm());
        states.push(next);
    }
    Ok(Trajectory {
        grid: grid.to_vec(),
        states,
        corrections,
        tol,
        healed,
    })
}

/// `M_{x0}` and the envelope `(1 + M) beta(t) + |v'|`.
#[derive(Clone, Debug)]
pub struct SolutionBound {
    pub m_x0: f64,
    /// `int_0^T beta`.
    pub beta_integral: f64,
    pub v_dot: f64,
    perturbation: Perturbation,
}

impl SolutionBound {
    pub fn envelope(&self, t: f64) -> f64 {
        (1.0 + self.m_x0) * self.perturbation.beta(t) + self.v_dot.abs()
    }
}

/// `M = |x0| + exp(2 int beta) * int (2 beta (1 + |x0|) + |v'|)` by quadrature.
pub fn solution_bound(problem: &SweepingProblem, v_dot: f64) -> SolutionBound {
    let pert = &problem.perturbation;
    let horizon = problem.horizon;
    let x0n = problem.x0.norm();
    let b = integrate(|s| pert.beta(s), 0.0, horizon, QUADRATURE_TOL);
    let inner = integrate(
        |s| 2.0 * pert.beta(s) * (1.0 + x0n) + v_dot.abs(),
        0.0,
        horizon,
        QUADRATURE_TOL,
    );
    SolutionBound {
        m_x0: x0n + (2.0 * b).exp() * inner,
        beta_integral: b,
        v_dot,
        perturbation: pert.clone(),
    }
}

/// `M_{x0}` from the antiderivative of `beta`, where one is registered.
pub fn solution_bound_exact(problem: &SweepingProblem, v_dot: f64) -> Option<f64> {
    let b = problem.perturbation.beta_integral_exact(problem.horizon)?;
    let x0n = problem.x0.norm();
    Some(x0n + (2.0 * b).exp() * (2.0 * b * (1.0 + x0n) + v_dot.abs() * problem.horizon))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    /// Per step: `envelope(t_k) + slack - |(x_{k+1} - x_k)/h + g(t_k, x_k)|`.
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub worst_step: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("velocity bound violated at step {step} by {excess:e}")]
pub struct BoundViolated {
    pub step: usize,
    pub excess: f64,
    pub report: BoundReport,
}

/// Checks `|(x_{k+1} - x_k)/h + g(t_k, x_k)| <= envelope(t_k) + slack`.
pub fn velocity_bound_check(
    traj: &Trajectory,
    problem: &SweepingProblem,
    bound: &SolutionBound,
    slack: f64,
) -> Result<BoundReport, BoundViolated> {
    let margins: Vec<f64> = traj
        .velocities()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let t = traj.grid[k];
            let lhs = (v + problem.perturbation.eval(t, &traj.states[k])).norm();
            bound.envelope(t) + slack - lhs
        })
        .collect();
    let (worst_step, worst_margin) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (k, m)| if m < b.1 { (k, m) } else { b });
    let report = BoundReport {
        margins,
        worst_margin,
        worst_step,
    };
    if worst_margin < 0.0 {
        Err(BoundViolated {
            step: worst_step,
            excess: -worst_margin,
            report,
        })
    } else {
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{catalog, oracles, point};

    fn corner_problem(x0: &[f64], pert: Perturbation, horizon: f64) -> SweepingProblem {
        SweepingProblem::new(catalog::corner_family(horizon), pert, point(x0), horizon).unwrap()
    }

    #[test]
    fn corner_trajectory_is_exact() {
        let p = corner_problem(&[0.0, 0.0], Perturbation::Zero, 3.0);
        for n in [2, 7, 100] {
            let tr = catching_up(&p, n).unwrap();
            for (t, x) in tr.grid.iter().zip(&tr.states) {
                assert!((x - point(&[0.0, *t])).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn interior_point_of_a_static_set_stays() {
        let p = SweepingProblem::new(
            catalog::unit_square_family(2.0),
            Perturbation::Zero,
            point(&[0.3, -0.4]),
            2.0,
        )
        .unwrap();
        let tr = catching_up(&p, 50).unwrap();
        assert!(tr.states.iter().all(|x| *x == point(&[0.3, -0.4])));
        assert!(tr.first_contact(0.0).is_none());
    }

    #[test]
    fn gravity_run_tracks_the_oracle() {
        let g0 = 9.8;
        let p = corner_problem(&[0.0, 1.0], Perturbation::Gravity { g0 }, 1.0);
        let n = 3000;
        let tr = catching_up(&p, n).unwrap();
        let h = 1.0 / n as f64;
        let x0 = point(&[0.0, 1.0]);
        for (t, x) in tr.grid.iter().zip(&tr.states) {
            let o = oracles::example3(&x0, *t, 1.0, g0).unwrap();
            assert!((x - o).norm() <= 10.0 * h);
        }
        let theta = oracles::Breakpoints::new(&x0, g0).unwrap().theta1;
        let contact = tr.first_contact(10.0 * tr.tol).unwrap();
        assert!((contact - theta).abs() <= 2.0 * h);
    }

    #[test]
    fn states_are_feasible() {
        let p = corner_problem(&[-0.8, 1.1], Perturbation::Gravity { g0: 2.0 }, 3.0);
        let tr = catching_up(&p, 400).unwrap();
        for (t, x) in tr.grid.iter().zip(&tr.states) {
            assert!(p.family.membership(*t, x, 10.0 * tr.tol));
        }
        assert_eq!(tr.states[0], p.x0);
    }

    #[test]
    fn seeds_do_not_change_the_solution() {
        let p = corner_problem(&[0.5, 1.0], Perturbation::Zero, 3.0);
        let run = |seed| {
            Solver::admit(
                p.clone(),
                SolverOptions {
                    n_steps: 300,
                    seed,
                    ..SolverOptions::default()
                },
            )
            .unwrap()
            .solve()
            .unwrap()
        };
        let (a, b) = (run(1), run(99));
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x - y).norm() <= 10.0 * a.tol);
        }
    }

    #[test]
    fn configuration_errors() {
        let p = corner_problem(&[0.0, 0.0], Perturbation::Zero, 3.0);
        assert!(matches!(catching_up(&p, 1), Err(SolverError::Config(_))));
        assert!(matches!(uniform_grid(1e-20, 10), Err(SolverError::Config(_))));
        assert!(SweepingProblem::new(
            catalog::corner_family(1.0),
            Perturbation::Zero,
            point(&[0.0, 0.0]),
            2.0
        )
        .is_err());
        assert!(SweepingProblem::new(
            catalog::corner_family(1.0),
            Perturbation::Affine {
                c: vec![1.0],
                s: vec![0.0, 0.0]
            },
            point(&[0.0, 0.0]),
            1.0
        )
        .is_err());
    }

    #[test]
    fn infeasible_start_names_the_constraint() {
        let p = SweepingProblem::new(
            catalog::capped_corner_family(),
            Perturbation::Zero,
            point(&[0.0, 3.0]),
            3.0,
        )
        .unwrap();
        let solver = Solver::admit(
            p,
            SolverOptions {
                n_steps: 10,
                heal_radius: Some(0.5),
                ..SolverOptions::default()
            },
        )
        .unwrap();
        let err = solver.solve().unwrap_err();
        assert!(matches!(err, SolverError::InfeasibleInitial { index: 1, .. }));
        assert!(err.to_string().contains("f_2"));
    }

    #[test]
    fn nearby_infeasible_start_is_healed() {
        let p = corner_problem(&[0.0, -0.01], Perturbation::Zero, 3.0);
        let tr = catching_up(&p, 30).unwrap();
        assert!((tr.healed.unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(tr.states[0], point(&[0.0, 0.0]));
    }

    #[test]
    fn admission_rejects_the_shell() {
        let p = SweepingProblem::new(
            catalog::shell_family(),
            Perturbation::Zero,
            point(&[1.5, 0.0]),
            1.0,
        )
        .unwrap();
        let err = Solver::admit(
            p,
            SolverOptions {
                gamma: 1.0,
                certify_budget: 300,
                ..SolverOptions::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, SolverError::Admission { .. }));
    }

    #[test]
    fn admission_rejects_a_bad_envelope() {
        let p = corner_problem(
            &[0.0, 0.0],
            Perturbation::Custom {
                g: Arc::new(|_, x: &Point| x * 2.0),
                beta: Arc::new(|_| 1.0),
                k_eta: None,
            },
            1.0,
        );
        let err = Solver::admit(p, SolverOptions::default()).unwrap_err();
        assert!(matches!(err, SolverError::Perturbation(_)));
    }

    #[test]
    fn refined_grid_clusters_near_breakpoints() {
        let g = refined_grid(
            1.0,
            10,
            &Refinement {
                breakpoints: vec![0.37],
                levels: 4,
            },
        )
        .unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.contains(&0.37));
        assert!(g.iter().any(|t| (t - (0.37 + 0.1 / 16.0)).abs() < 1e-15));
        assert_eq!(g.len(), 11 + 1 + 8);
    }

    #[test]
    fn interpolation_and_velocities() {
        let p = corner_problem(&[0.0, 0.0], Perturbation::Zero, 3.0);
        let tr = catching_up(&p, 3).unwrap();
        assert!((tr.interpolate(1.5) - point(&[0.0, 1.5])).norm() < 1e-12);
        assert_eq!(tr.interpolate(-1.0), tr.states[0]);
        assert_eq!(tr.interpolate(7.0), *tr.endpoint());
        for v in tr.velocities() {
            assert!((v - point(&[0.0, 1.0])).norm() < 1e-12);
        }
    }

    #[test]
    fn bound_without_force() {
        let p = corner_problem(&[0.0, 0.0], Perturbation::Zero, 3.0);
        let b = solution_bound(&p, 1.0);
        assert!((b.m_x0 - 3.0).abs() < 1e-12);
        let p = corner_problem(&[0.3, 0.4], Perturbation::Zero, 2.0);
        assert!((solution_bound(&p, 0.0).m_x0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bound_with_gravity_matches_the_antiderivative() {
        let g0 = 9.8;
        let p = corner_problem(&[0.0, 1.0], Perturbation::Gravity { g0 }, 1.0);
        let b = solution_bound(&p, 1.0);
        let exact = 1.0 + (9.8f64).exp() * (2.0 * 9.8 / 2.0 * 2.0 + 1.0);
        assert!(((b.m_x0 - exact) / exact).abs() < 1e-8);
        let alt = solution_bound_exact(&p, 1.0).unwrap();
        assert!(((alt - exact) / exact).abs() < 1e-14);
        assert!((b.beta_integral - 4.9).abs() < 1e-12);
    }

    #[test]
    fn velocity_bound_on_the_corner_is_tight() {
        let p = corner_problem(&[0.0, 0.0], Perturbation::Zero, 3.0);
        let tr = catching_up(&p, 100).unwrap();
        let b = solution_bound(&p, 1.0);
        let rep = velocity_bound_check(&tr, &p, &b, 0.0).unwrap_or_else(|e| {
            assert!(e.excess < 1e-12);
            e.report
        });
        assert!(rep.worst_margin.abs() < 1e-12);
        // an envelope that is too small is caught
        let small = SolutionBound {
            v_dot: 0.5,
            ..b
        };
        let err = velocity_bound_check(&tr, &p, &small, 0.0).unwrap_err();
        assert!((err.excess - 0.5).abs() < 1e-9);
    }
}
