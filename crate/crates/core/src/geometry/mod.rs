//! Distance, projection and normal-cone primitives on slices `C(t)`.
//!
//! Polyhedral families are projected exactly by active-set enumeration.
//! Anything else goes through a multi-start augmented-Lagrangian solver
//! whose answer is only guaranteed unique inside the prox-regularity tube;
//! outside it, equally near candidates are reported as ambiguous.

mod iterative;
mod polyhedral;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::constraints::{min_norm_direction, ConstraintFamily, Halfspace};
use crate::sampling::{cube_to_ball, QuasiRandom};
use crate::Point;

/// Feasibility tolerance of the exact polyhedral projector.
pub const EXACT_TOL: f64 = 1e-9;
/// Feasibility tolerance of the iterative projector.
pub const ITERATIVE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("projection did not converge from any of {starts} starts within {max_iter} iterations")]
    NonConvergence { starts: usize, max_iter: usize },
    #[error("projection is ambiguous: {} equally near points, chose {chosen:?}", candidates.len())]
    AmbiguousProjection {
        chosen: Vec<f64>,
        candidates: Vec<Vec<f64>>,
    },
    #[error("C({t}) is empty")]
    EmptySlice { t: f64 },
    #[error("time {t} outside the horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("no feasible sample found near the base point")]
    EmptySample,
    #[error("base point violates constraint {index} by {violation}")]
    NotInSet { index: usize, violation: f64 },
    #[error("direction must be nonzero")]
    ZeroDirection,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionOptions {
    /// Feasibility tolerance; `None` picks [`EXACT_TOL`] or [`ITERATIVE_TOL`].
    pub tol: Option<f64>,
    pub starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Inside this distance the projection is unique and ties are noise.
    pub prox_radius: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: None,
            starts: 8,
            max_iter: 10_000,
            seed: 0,
            prox_radius: 0.0,
        }
    }
}

/// Result of a projection with its tie information.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub point: Point,
    pub distance: f64,
    /// Other candidates at the same distance (within tolerance) that are
    /// separated from `point` by more than ten tolerances.
    pub ties: Vec<Point>,
}

/// The slice `C(t)` of a family, checked nonempty at construction.
#[derive(Clone, Debug)]
pub struct SetSlice<'a> {
    family: &'a ConstraintFamily,
    time: f64,
    polytope: Option<Vec<Halfspace>>,
    opts: ProjectionOptions,
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

impl<'a> SetSlice<'a> {
    pub fn new(family: &'a ConstraintFamily, t: f64) -> Result<Self, GeometryError> {
        Self::with_options(family, t, ProjectionOptions::default())
    }

    pub fn with_options(
        family: &'a ConstraintFamily,
        t: f64,
        opts: ProjectionOptions,
    ) -> Result<Self, GeometryError> {
        let slack = 1e-12 * family.horizon.max(1.0);
        if !(t >= -slack && t <= family.horizon + slack) {
            return Err(GeometryError::OutOfHorizon {
                t,
                horizon: family.horizon,
            });
        }
        let polytope = family.halfspaces(t).filter(|hs| {
            polyhedral::active_set_count(hs.len(), family.dim) <= polyhedral::MAX_ACTIVE_SETS
        });
        let slice = Self {
            family,
            time: t,
            polytope,
            opts,
        };
        slice.probe_nonempty()?;
        Ok(slice)
    }

    fn probe_nonempty(&self) -> Result<(), GeometryError> {
        let center = self.family.box_center();
        match &self.polytope {
            Some(hs) => polyhedral::candidates(&center, hs, self.tol())
                .map(|_| ())
                .ok_or(GeometryError::EmptySlice { t: self.time }),
            None => {
                if self.contains(&center, 0.0) {
                    return Ok(());
                }
                let mut q = QuasiRandom::new(self.family.dim, 0x5eed);
                for _ in 0..256 {
                    if self.contains(&q.next_in_box(&self.family.bounds), 0.0) {
                        return Ok(());
                    }
                }
                match self.project_detailed(&center) {
                    Ok(_) | Err(GeometryError::AmbiguousProjection { .. }) => Ok(()),
                    Err(_) => Err(GeometryError::EmptySlice { t: self.time }),
                }
            }
        }
    }

    pub fn family(&self) -> &'a ConstraintFamily {
        self.family
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn options(&self) -> &ProjectionOptions {
        &self.opts
    }

    pub fn is_exact(&self) -> bool {
        self.polytope.is_some()
    }

    /// Effective feasibility tolerance of this slice's projector.
    pub fn tol(&self) -> f64 {
        self.opts.tol.unwrap_or(if self.is_exact() {
            EXACT_TOL
        } else {
            ITERATIVE_TOL
        })
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        self.family.membership(self.time, x, tol)
    }

    fn check_dim(&self, p: &Point) -> Result<(), GeometryError> {
        if p.len() != self.family.dim {
            Err(GeometryError::Dimension {
                expected: self.family.dim,
                got: p.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Nearest point(s) of the slice to `p`.
    ///
    /// Ties are resolved to the lexicographically smallest candidate; when
    /// `p` lies beyond the prox radius the tie is also raised as
    /// [`GeometryError::AmbiguousProjection`].
    pub fn project_detailed(&self, p: &Point) -> Result<Projection, GeometryError> {
        self.check_dim(p)?;
        let tol = self.tol();
        let candidates = match &self.polytope {
            Some(hs) => polyhedral::candidates(p, hs, tol)
                .ok_or(GeometryError::EmptySlice { t: self.time })?,
            None => self.iterative_candidates(p, tol)?,
        };
        let best = candidates
            .iter()
            .map(|c| (p - c).norm())
            .fold(f64::INFINITY, f64::min);
        let mut near: Vec<Point> = Vec::new();
        for c in candidates {
            if (p - &c).norm() <= best + tol && !near.iter().any(|q| (q - &c).norm() <= 10.0 * tol)
            {
                near.push(c);
            }
        }
        near.sort_by(lex_cmp);
        let point = near.remove(0);
        let distance = (p - &point).norm();
        if !near.is_empty() && distance > self.opts.prox_radius {
            return Err(GeometryError::AmbiguousProjection {
                chosen: point.iter().copied().collect(),
                candidates: std::iter::once(&point)
                    .chain(near.iter())
                    .map(|c| c.iter().copied().collect())
                    .collect(),
            });
        }
        Ok(Projection {
            point,
            distance,
            ties: near,
        })
    }

    fn iterative_candidates(&self, p: &Point, tol: f64) -> Result<Vec<Point>, GeometryError> {
        if self.contains(p, tol) {
            return Ok(vec![p.clone()]);
        }
        let per_start = (self.opts.max_iter / self.opts.starts.max(1)).max(1);
        let mut out = Vec::new();
        let first =
            iterative::solve_from(self.family, self.time, p, p, tol, self.opts.max_iter.min(per_start * 2));
        let radius = first
            .as_ref()
            .map_or(1.0, |q| (p - q).norm().max(0.1));
        out.extend(first);
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let n = p.len();
        for _ in 1..self.opts.starts {
            let dir = loop {
                let d = Point::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let norm = d.norm();
                if norm > 1e-3 && norm <= 1.0 {
                    break d / norm;
                }
            };
            let start = p + dir * radius;
            out.extend(iterative::solve_from(
                self.family,
                self.time,
                p,
                &start,
                tol,
                per_start,
            ));
        }
        if out.is_empty() {
            Err(GeometryError::NonConvergence {
                starts: self.opts.starts,
                max_iter: self.opts.max_iter,
            })
        } else {
            Ok(out)
        }
    }

    /// Nearest point of the slice to `p`.
    pub fn project(&self, p: &Point) -> Result<Point, GeometryError> {
        self.project_detailed(p).map(|pr| pr.point)
    }

    /// `d(p, C(t))`; zero for points feasible within tolerance.
    pub fn distance(&self, p: &Point) -> Result<f64, GeometryError> {
        if self.contains(p, self.tol()) {
            return Ok(0.0);
        }
        match self.project_detailed(p) {
            Ok(pr) => Ok(pr.distance),
            Err(GeometryError::AmbiguousProjection { chosen, .. }) => {
                Ok((p - Point::from_vec(chosen)).norm())
            }
            Err(e) => Err(e),
        }
    }

    /// A point of the slice derived from `y`: `y` itself when feasible,
    /// otherwise its projection (which lies on the boundary).
    pub fn pull_in(&self, y: &Point) -> Result<Point, GeometryError> {
        if self.contains(y, 0.0) {
            return Ok(y.clone());
        }
        match self.project(y) {
            Ok(q) => Ok(q),
            Err(GeometryError::AmbiguousProjection { chosen, .. }) => Ok(Point::from_vec(chosen)),
            Err(e) => Err(e),
        }
    }
}

/// `d(p, S)` with an explicit feasibility tolerance.
pub fn distance(p: &Point, slice: &SetSlice<'_>, tol: f64) -> Result<f64, GeometryError> {
    let mut opts = slice.options().clone();
    opts.tol = Some(tol);
    SetSlice {
        opts,
        ..slice.clone()
    }
    .distance(p)
}

/// Nearest point of `S` to `p` with an explicit feasibility tolerance.
pub fn project(p: &Point, slice: &SetSlice<'_>, tol: f64) -> Result<Point, GeometryError> {
    let mut opts = slice.options().clone();
    opts.tol = Some(tol);
    SetSlice {
        opts,
        ..slice.clone()
    }
    .project(p)
}

/// Constants of A1-A4 and the quantities derived from them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProxCertificate {
    /// Enlargement radius; `+inf` allowed.
    pub rho: f64,
    /// Time-Lipschitz modulus of the constraints; zero for static families.
    pub l1: f64,
    /// Hypomonotonicity constant.
    pub gamma: f64,
    /// Descent margin.
    pub mu: f64,
    /// Prox-regularity radius `min(rho, mu / gamma)`.
    pub r: f64,
    /// Hausdorff-Lipschitz modulus of `t -> C(t)`.
    pub theta: f64,
}

impl ProxCertificate {
    /// Certificate with the smallest admissible modulus `theta = l1 / mu`.
    pub fn new(rho: f64, l1: f64, gamma: f64, mu: f64) -> Self {
        let mut cert = Self {
            rho,
            l1,
            gamma,
            mu,
            r: 0.0,
            theta: l1 / mu,
        };
        cert.r = prox_radius(&cert);
        cert
    }

    /// Replaces `theta`; any value at least `l1 / mu` is admissible.
    pub fn with_theta(mut self, theta: f64) -> Option<Self> {
        (theta >= self.l1 / self.mu).then(|| {
            self.theta = theta;
            self
        })
    }

    /// A unit direction `v` with `<xi, v> <= -mu` for every active
    /// subgradient at `(t, x)`. `None` where no constraint is active or
    /// no descent direction exists.
    pub fn vbar(&self, family: &ConstraintFamily, t: f64, x: &Point) -> Option<Point> {
        let gens = family.active_generators(t, x, EXACT_TOL);
        if gens.is_empty() {
            return None;
        }
        min_norm_direction(&gens).map(|(v, _)| v)
    }
}

/// `r = min(rho, mu / gamma)`.
pub fn prox_radius(cert: &ProxCertificate) -> f64 {
    cert.rho.min(cert.mu / cert.gamma)
}

const RESIDUAL_LEVELS: usize = 24;

/// `max_{x'} <v, x' - x> - |v| |x' - x|^2 / (2 r)` over sampled `x'` in
/// `S` within `r / 2` of `x`.
///
/// A value at or below tolerance means `v` passes the prox-regular normal
/// inequality at `x`. Samples are spread over geometrically shrinking balls
/// so both the local and the far part of the set are probed; infeasible
/// samples are replaced by their projections, which lie on the boundary.
pub fn proximal_normal_residual(
    x: &Point,
    v: &Point,
    slice: &SetSlice<'_>,
    r: f64,
    samples: usize,
) -> Result<f64, GeometryError> {
    slice.check_dim(x)?;
    slice.check_dim(v)?;
    let (index, violation) = slice.family().max_violation(slice.time(), x);
    if violation > 10.0 * slice.tol() {
        return Err(GeometryError::NotInSet { index, violation });
    }
    normal_residual_unchecked(x, v, slice, r, samples)
}

/// [`proximal_normal_residual`] without the membership precondition on `x`;
/// used to score states that a corrupted trajectory pushed off the set.
pub(crate) fn normal_residual_unchecked(
    x: &Point,
    v: &Point,
    slice: &SetSlice<'_>,
    r: f64,
    samples: usize,
) -> Result<f64, GeometryError> {
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return Err(GeometryError::ZeroDirection);
    }
    let reach = (0.5 * r).min(1e6);
    let smallest = reach.min(1e-7);
    let ratio = (smallest / reach).powf(1.0 / (RESIDUAL_LEVELS - 1) as f64);
    let mut q = QuasiRandom::new(x.len(), 0x9e37);
    let mut best = f64::NEG_INFINITY;
    for j in 0..samples {
        let radius = reach * ratio.powi((j % RESIDUAL_LEVELS) as i32);
        let y = x + cube_to_ball(&q.next_unit()) * radius;
        let Ok(xp) = slice.pull_in(&y) else {
            continue;
        };
        let d = &xp - x;
        let dn = d.norm();
        if dn > reach || dn == 0.0 {
            continue;
        }
        best = best.max(v.dot(&d) - vnorm * dn * dn / (2.0 * r));
    }
    if best == f64::NEG_INFINITY {
        Err(GeometryError::EmptySample)
    } else {
        Ok(best)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HausdorffEntry {
    pub s: f64,
    pub t: f64,
    pub estimate: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HausdorffReport {
    pub entries: Vec<HausdorffEntry>,
    pub worst_ratio: f64,
    pub passed: bool,
}

/// Number of points sampled per slice by [`hausdorff_check`].
pub const HAUSDORFF_SAMPLES: usize = 1000;

fn one_sided(
    from: &SetSlice<'_>,
    to: &SetSlice<'_>,
    samples: usize,
    seed: u64,
) -> Result<f64, GeometryError> {
    let fam = from.family();
    let mut q = QuasiRandom::new(fam.dim, seed);
    let mut sup = 0.0f64;
    for _ in 0..samples {
        let x = from.pull_in(&q.next_in_box(&fam.bounds))?;
        sup = sup.max(to.distance(&x)?);
    }
    Ok(sup)
}

/// Sampled Hausdorff distance between slices, checked against
/// `theta |t - s| + tol` for every pair.
pub fn hausdorff_check(
    family: &ConstraintFamily,
    cert: &ProxCertificate,
    time_pairs: &[(f64, f64)],
    tol: f64,
) -> Result<HausdorffReport, GeometryError> {
    let mut entries = Vec::with_capacity(time_pairs.len());
    for (k, &(s, t)) in time_pairs.iter().enumerate() {
        let bound = cert.theta * (t - s).abs();
        let estimate = if s == t {
            0.0
        } else {
            let cs = SetSlice::new(family, s)?;
            let ct = SetSlice::new(family, t)?;
            let seed = 2 * k as u64;
            one_sided(&ct, &cs, HAUSDORFF_SAMPLES, seed)?
                .max(one_sided(&cs, &ct, HAUSDORFF_SAMPLES, seed + 1)?)
        };
        let ratio = if bound > 0.0 {
            estimate / bound
        } else if estimate <= tol {
            0.0
        } else {
            f64::INFINITY
        };
        entries.push(HausdorffEntry {
            s,
            t,
            estimate,
            bound,
            ratio,
        });
    }
    let worst_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    let passed = entries.iter().all(|e| e.estimate <= e.bound + tol);
    Ok(HausdorffReport {
        entries,
        worst_ratio,
        passed,
    })
}

#[cfg(test)]
mod tests;
