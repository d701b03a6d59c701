//! Time-dependent sublevel constraint families.
//!
//! Each constraint is a pointwise maximum of pieces; a piece is affine or
//! quadratic in `x` and affine in `t`. Keeping the composition explicit is
//! what makes the Clarke subdifferential exact: at `x` it is the convex hull
//! of the gradients of the pieces attaining the maximum.

mod assumptions;

pub use assumptions::{
    certify, check_a1, check_a2, check_a3, check_a4, min_norm_direction, A1Report, A2Report,
    A3Report, A3Witness, A4Report, A4Witness, AssumptionReport, CertifyOptions,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Point;

/// Two piece values closer than this are both treated as attaining the max.
pub const KINK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("time {t} outside the horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("constraint index {index} out of range (family has {m} constraints)")]
    NoSuchConstraint { index: usize, m: usize },
    #[error("point at distance {distance} from C({t}) is outside the rho-enlargement (rho = {rho})")]
    OutOfDomain { t: f64, distance: f64, rho: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid constraint family: {0}")]
    Invalid(String),
}

/// `f(t, x) = <a, x> + t_coef * t + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    pub a: Vec<f64>,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub b: f64,
}

/// `f(t, x) = scale * |x - center|^2 + <a, x> + t_coef * t + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticPiece {
    pub scale: f64,
    pub center: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    Affine(AffinePiece),
    Quadratic(QuadraticPiece),
}

fn dot(a: &[f64], x: &Point) -> f64 {
    a.iter().zip(x.iter()).map(|(a, x)| a * x).sum()
}

impl Piece {
    pub fn affine(a: &[f64], t: f64, b: f64) -> Self {
        Piece::Affine(AffinePiece { a: a.to_vec(), t, b })
    }

    pub fn quadratic(scale: f64, center: &[f64], t: f64, b: f64) -> Self {
        Piece::Quadratic(QuadraticPiece {
            scale,
            center: center.to_vec(),
            a: None,
            t,
            b,
        })
    }

    fn dim(&self) -> usize {
        match self {
            Piece::Affine(p) => p.a.len(),
            Piece::Quadratic(p) => p.center.len(),
        }
    }

    pub fn value(&self, t: f64, x: &Point) -> f64 {
        match self {
            Piece::Affine(p) => dot(&p.a, x) + p.t * t + p.b,
            Piece::Quadratic(p) => {
                let sq: f64 = x
                    .iter()
                    .zip(&p.center)
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum();
                let lin = p.a.as_deref().map_or(0.0, |a| dot(a, x));
                p.scale * sq + lin + p.t * t + p.b
            }
        }
    }

    pub fn gradient(&self, x: &Point) -> Point {
        match self {
            Piece::Affine(p) => Point::from_column_slice(&p.a),
            Piece::Quadratic(p) => {
                let mut g = Point::from_iterator(
                    x.len(),
                    x.iter().zip(&p.center).map(|(x, c)| 2.0 * p.scale * (x - c)),
                );
                if let Some(a) = &p.a {
                    g += Point::from_column_slice(a);
                }
                g
            }
        }
    }

    /// `df/dt`, constant for every registered piece.
    pub fn time_slope(&self) -> f64 {
        match self {
            Piece::Affine(p) => p.t,
            Piece::Quadratic(p) => p.t,
        }
    }

    /// Smallest `gamma >= 0` with `<grad(x1) - grad(x2), x1 - x2> >= -gamma |x1 - x2|^2`.
    pub fn hypomonotonicity(&self) -> f64 {
        match self {
            Piece::Affine(_) => 0.0,
            Piece::Quadratic(p) => (-2.0 * p.scale).max(0.0),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Piece::Affine(_))
    }
}

/// One inequality `max_j piece_j(t, x) <= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub pieces: Vec<Piece>,
}

impl Constraint {
    pub fn new(pieces: Vec<Piece>) -> Self {
        Self { pieces }
    }

    pub fn value(&self, t: f64, x: &Point) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.value(t, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of the pieces within [`KINK_TOL`] of the maximum.
    fn active_pieces(&self, t: f64, x: &Point) -> Vec<usize> {
        let vals: Vec<f64> = self.pieces.iter().map(|p| p.value(t, x)).collect();
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        vals.iter()
            .enumerate()
            .filter(|(_, v)| **v >= top - KINK_TOL)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn subdifferential(&self, t: f64, x: &Point) -> SubdifferentialHull {
        let mut generators: Vec<Point> = Vec::new();
        for j in self.active_pieces(t, x) {
            let g = self.pieces[j].gradient(x);
            if !generators.iter().any(|h| (h - &g).amax() <= KINK_TOL) {
                generators.push(g);
            }
        }
        SubdifferentialHull { generators }
    }

    pub fn is_convex(&self) -> bool {
        self.pieces.iter().all(|p| p.hypomonotonicity() == 0.0)
    }
}

/// Finite generator set whose convex hull is the Clarke subdifferential.
#[derive(Clone, Debug, PartialEq)]
pub struct SubdifferentialHull {
    pub generators: Vec<Point>,
}

impl SubdifferentialHull {
    /// Whether `v` lies in the hull (up to `tol`), via the min-norm point of `hull - v`.
    pub fn contains(&self, v: &Point, tol: f64) -> bool {
        let shifted: Vec<Point> = self.generators.iter().map(|g| g - v).collect();
        match min_norm_direction(&shifted) {
            Some((_, dist)) => dist <= tol,
            None => true,
        }
    }
}

/// A unit-normalised halfspace `<normal, x> <= offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub normal: Point,
    pub offset: f64,
}

/// `C(t) = { x : f_i(t, x) <= 0 }` on `t in [0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFamily {
    pub dim: usize,
    pub horizon: f64,
    /// Enlargement radius of A2-A4; `None` means `+inf`.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Sampling box used by the certification checks and samplers.
    pub bounds: Vec<[f64; 2]>,
    pub constraints: Vec<Constraint>,
}

impl ConstraintFamily {
    pub fn new(
        dim: usize,
        horizon: f64,
        rho: Option<f64>,
        bounds: Vec<[f64; 2]>,
        constraints: Vec<Constraint>,
    ) -> Result<Self, ConstraintError> {
        let fam = Self {
            dim,
            horizon,
            rho,
            bounds,
            constraints,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        let bad = |s: String| Err(ConstraintError::Invalid(s));
        if self.dim == 0 {
            return bad("dimension must be at least 1".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0) {
                return bad(format!("rho must be positive, got {rho}"));
            }
        }
        if self.bounds.len() != self.dim {
            return bad(format!(
                "bounds has {} intervals for dimension {}",
                self.bounds.len(),
                self.dim
            ));
        }
        if self.bounds.iter().any(|[lo, hi]| !(lo < hi)) {
            return bad("every bounds interval needs lo < hi".into());
        }
        if self.constraints.is_empty() {
            return bad("at least one constraint is required".into());
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.pieces.is_empty() {
                return bad(format!("constraint {} has no pieces", i + 1));
            }
            for p in &c.pieces {
                if p.dim() != self.dim {
                    return bad(format!(
                        "constraint {} has a piece of dimension {} (family dimension {})",
                        i + 1,
                        p.dim(),
                        self.dim
                    ));
                }
                if let Piece::Quadratic(q) = p {
                    if q.a.as_ref().is_some_and(|a| a.len() != self.dim) {
                        return bad(format!("constraint {} has a malformed linear term", i + 1));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of inequalities `m`.
    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or(f64::INFINITY)
    }

    fn check_time(&self, t: f64) -> Result<(), ConstraintError> {
        // Tolerate grid round-off at the end of the horizon.
        let slack = 1e-12 * self.horizon.max(1.0);
        if t < -slack || t > self.horizon + slack || t.is_nan() {
            Err(ConstraintError::OutOfHorizon {
                t,
                horizon: self.horizon,
            })
        } else {
            Ok(())
        }
    }

    fn check_index(&self, i: usize) -> Result<(), ConstraintError> {
        if i >= self.len() {
            Err(ConstraintError::NoSuchConstraint {
                index: i,
                m: self.len(),
            })
        } else {
            Ok(())
        }
    }

    fn check_dim(&self, x: &Point) -> Result<(), ConstraintError> {
        if x.len() != self.dim {
            Err(ConstraintError::Dimension {
                expected: self.dim,
                got: x.len(),
            })
        } else {
            Ok(())
        }
    }

    /// `f_i(t, x)` for the zero-based index `i`.
    pub fn evaluate(&self, i: usize, t: f64, x: &Point) -> Result<f64, ConstraintError> {
        self.check_index(i)?;
        self.check_time(t)?;
        self.check_dim(x)?;
        Ok(self.constraints[i].value(t, x))
    }

    /// Clarke subdifferential of `f_i(t, .)` at `x`.
    ///
    /// With a finite `rho` the point must lie in the open enlargement
    /// `U_rho(C(t))`; checking that costs one projection.
    pub fn subdifferential(
        &self,
        i: usize,
        t: f64,
        x: &Point,
    ) -> Result<SubdifferentialHull, ConstraintError> {
        self.check_index(i)?;
        self.check_time(t)?;
        self.check_dim(x)?;
        if let Some(rho) = self.rho {
            let d = crate::geometry::SetSlice::new(self, t)
                .and_then(|s| s.distance(x))
                .map_err(|e| ConstraintError::Invalid(e.to_string()))?;
            if d >= rho {
                return Err(ConstraintError::OutOfDomain {
                    t,
                    distance: d,
                    rho,
                });
            }
        }
        Ok(self.constraints[i].subdifferential(t, x))
    }

    /// `max_i f_i(t, x) <= tol`.
    pub fn membership(&self, t: f64, x: &Point, tol: f64) -> bool {
        self.max_violation(t, x).1 <= tol
    }

    /// Index and value of the largest `f_i(t, x)`.
    pub fn max_violation(&self, t: f64, x: &Point) -> (usize, f64) {
        self.constraints
            .iter()
            .map(|c| c.value(t, x))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
    }

    /// Union of the subdifferential generators of the constraints with
    /// `f_i(t, x) >= -active_tol`.
    pub fn active_generators(&self, t: f64, x: &Point, active_tol: f64) -> Vec<Point> {
        let mut out: Vec<Point> = Vec::new();
        for c in &self.constraints {
            if c.value(t, x) >= -active_tol {
                for g in c.subdifferential(t, x).generators {
                    if !out.iter().any(|h| (h - &g).amax() <= KINK_TOL) {
                        out.push(g);
                    }
                }
            }
        }
        out
    }

    /// All pieces are affine, so every slice is a convex polyhedron.
    pub fn is_polyhedral(&self) -> bool {
        self.constraints
            .iter()
            .all(|c| c.pieces.iter().all(Piece::is_affine))
    }

    pub fn is_convex(&self) -> bool {
        self.constraints.iter().all(Constraint::is_convex)
    }

    /// The halfspace description of `C(t)` when the family is polyhedral.
    pub fn halfspaces(&self, t: f64) -> Option<Vec<Halfspace>> {
        if !self.is_polyhedral() {
            return None;
        }
        let mut out = Vec::new();
        for c in &self.constraints {
            for p in &c.pieces {
                if let Piece::Affine(a) = p {
                    let normal = Point::from_column_slice(&a.a);
                    let offset = -(a.t * t + a.b);
                    let n = normal.norm();
                    if n == 0.0 {
                        // 0 <= offset: either vacuous or an empty slice.
                        if offset < 0.0 {
                            out.push(Halfspace {
                                normal: Point::zeros(self.dim),
                                offset: -1.0,
                            });
                        }
                        continue;
                    }
                    out.push(Halfspace {
                        normal: normal / n,
                        offset: offset / n,
                    });
                }
            }
        }
        Some(out)
    }

    /// Registered time-Lipschitz modulus: `max |df/dt|` over all pieces.
    pub fn analytic_time_lipschitz(&self) -> f64 {
        self.constraints
            .iter()
            .flat_map(|c| c.pieces.iter())
            .map(|p| p.time_slope().abs())
            .fold(0.0, f64::max)
    }

    /// Registered hypomonotonicity constant of the pieces.
    pub fn analytic_hypomonotonicity(&self) -> f64 {
        self.constraints
            .iter()
            .flat_map(|c| c.pieces.iter())
            .map(Piece::hypomonotonicity)
            .fold(0.0, f64::max)
    }

    /// Centre of the sampling box.
    pub fn box_center(&self) -> Point {
        Point::from_iterator(self.dim, self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)))
    }

    pub fn box_diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|[lo, hi]| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }
}
