//! Sampled certification of A1-A4.
//!
//! Sampling can refute an assumption or fail to refute it; a passing report
//! means "no violation found at budget B", never a proof.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::ConstraintFamily;
use crate::geometry::{ProjectionOptions, ProxCertificate, SetSlice};
use crate::sampling::QuasiRandom;
use crate::Point;

/// Witnesses kept in a report beyond the worst one.
const KEPT_WITNESSES: usize = 32;

fn coords(p: &Point) -> Vec<f64> {
    p.iter().copied().collect()
}

/// Minimum-norm point `z` of the convex hull of `generators`, returned as
/// the unit direction `v = -z / |z|` and the margin `delta = |z|`.
///
/// `delta` is the optimal value of `max { d : <g, v> <= -d for all g, |v| <= 1 }`,
/// so `v` is the best common descent direction. `None` when the hull
/// contains the origin or is empty.
pub fn min_norm_direction(generators: &[Point]) -> Option<(Point, f64)> {
    let first = generators.first()?;
    let n = first.len();
    let max_k = generators.len().min(n + 1);
    let mut best: Option<Point> = None;
    for k in 1..=max_k {
        for idx in itertools::Itertools::combinations(0..generators.len(), k) {
            let z = if k == 1 {
                generators[idx[0]].clone()
            } else {
                let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
                for r in 0..k {
                    for c in 0..k {
                        kkt[(r, c)] = generators[idx[r]].dot(&generators[idx[c]]);
                    }
                    kkt[(r, k)] = 1.0;
                    kkt[(k, r)] = 1.0;
                }
                let mut rhs = Point::zeros(k + 1);
                rhs[k] = 1.0;
                let Some(sol) = kkt.lu().solve(&rhs) else {
                    continue;
                };
                if sol.iter().take(k).any(|l| *l < -1e-12 || !l.is_finite()) {
                    continue;
                }
                idx.iter()
                    .zip(sol.iter())
                    .fold(Point::zeros(n), |acc, (&j, l)| acc + &generators[j] * *l)
            };
            if best.as_ref().is_none_or(|b| z.norm() < b.norm()) {
                best = Some(z);
            }
        }
    }
    let z = best?;
    let delta = z.norm();
    if delta <= 1e-12 {
        None
    } else {
        Some((-z / delta, delta))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    pub budget: usize,
    /// Hypomonotonicity constant to test (A3).
    pub gamma: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            budget: 10_000,
            gamma: 1e-6,
            tol: 1e-9,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A1Report {
    /// Sampled `sup |f_i(s,x) - f_i(t,x)| / |s - t|` per constraint.
    pub per_constraint: Vec<f64>,
    pub l1_est: f64,
    /// Registered modulus `max |df/dt|` of the pieces.
    pub analytic: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A2Report {
    /// Lipschitz moduli of `f_i(t, .)` over the sampling box, read off the
    /// registered pieces. Not independently estimated.
    pub moduli: Vec<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A3Witness {
    pub t: f64,
    pub index: usize,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    /// `<xi1 - xi2, x1 - x2>`
    pub inner: f64,
    /// `|x1 - x2|^2`
    pub dist_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A3Report {
    pub gamma: f64,
    pub pairs_checked: usize,
    /// Smallest `<xi1 - xi2, x1 - x2> / |x1 - x2|^2` seen.
    pub min_ratio: f64,
    pub violation_count: usize,
    pub violations: Vec<A3Witness>,
    /// Whether every piece is convex, so monotonicity was also asserted.
    pub convex: bool,
    pub monotonicity_violations: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A4Witness {
    pub t: f64,
    pub x: Vec<f64>,
    /// Best unit direction (absent when the active hull contains 0).
    pub v: Option<Vec<f64>>,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A4Report {
    pub mu_est: f64,
    /// Samples at which at least one constraint was active.
    pub active_samples: usize,
    pub worst: Option<A4Witness>,
    pub witnesses: Vec<A4Witness>,
    /// Samples where no direction exists (`delta <= tol`).
    pub refutations: Vec<A4Witness>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub budget: usize,
    pub a1: A1Report,
    pub a2: A2Report,
    pub a3: A3Report,
    pub a4: A4Report,
}

impl AssumptionReport {
    pub fn passed(&self) -> [bool; 4] {
        [self.a1.passed, self.a2.passed, self.a3.passed, self.a4.passed]
    }

    pub fn all_passed(&self) -> bool {
        self.passed().iter().all(|p| *p)
    }

    pub fn summary(&self) -> Vec<String> {
        self.passed()
            .iter()
            .enumerate()
            .map(|(k, ok)| {
                if *ok {
                    format!("A{}: no violation found at budget {}", k + 1, self.budget)
                } else {
                    format!("A{}: REFUTED at budget {}", k + 1, self.budget)
                }
            })
            .collect()
    }
}

/// Sampled time-Lipschitz modulus of every constraint.
pub fn check_a1(family: &ConstraintFamily, budget: usize, seed: u64) -> A1Report {
    let mut q = QuasiRandom::new(family.dim, seed);
    let mut qt = QuasiRandom::new(2, seed ^ 0xa1);
    let samples: Vec<(Point, f64, f64)> = (0..budget)
        .map(|_| {
            let x = q.next_in_box(&family.bounds);
            let u = qt.next_unit();
            (x, u[0] * family.horizon, u[1] * family.horizon)
        })
        .collect();
    let per_constraint: Vec<f64> = family
        .constraints
        .iter()
        .map(|c| {
            samples
                .par_iter()
                .filter(|(_, s, t)| (s - t).abs() > 1e-9 * family.horizon)
                .map(|(x, s, t)| (c.value(*s, x) - c.value(*t, x)).abs() / (s - t).abs())
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    let l1_est = per_constraint.iter().copied().fold(0.0, f64::max);
    A1Report {
        passed: l1_est.is_finite(),
        per_constraint,
        l1_est,
        analytic: family.analytic_time_lipschitz(),
    }
}

/// Records the registered local Lipschitz moduli in `x`.
pub fn check_a2(family: &ConstraintFamily) -> A2Report {
    let corners: Vec<Point> = (0..(1usize << family.dim.min(16)))
        .map(|mask| {
            Point::from_iterator(
                family.dim,
                family
                    .bounds
                    .iter()
                    .enumerate()
                    .map(|(k, [lo, hi])| if mask >> k & 1 == 1 { *hi } else { *lo }),
            )
        })
        .collect();
    let moduli = family
        .constraints
        .iter()
        .map(|c| {
            c.pieces
                .iter()
                .map(|p| {
                    corners
                        .iter()
                        .map(|x| p.gradient(x).norm())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .collect::<Vec<_>>();
    A2Report {
        passed: moduli.iter().all(|m| m.is_finite()),
        moduli,
    }
}

fn in_enlargement(family: &ConstraintFamily, slice: &SetSlice<'_>, x: &Point) -> bool {
    match family.rho {
        None => true,
        Some(rho) => slice.distance(x).is_ok_and(|d| d < rho),
    }
}

/// Hypomonotonicity of the subdifferentials on sampled pairs in `U_rho(C(t))`.
///
/// Pairs cycle through three kinds: two box points, their projections onto
/// `C(t)` (boundary and kink points), and a box point with a close neighbour.
pub fn check_a3(family: &ConstraintFamily, gamma: f64, budget: usize, tol: f64, seed: u64) -> A3Report {
    let mut q = QuasiRandom::new(family.dim, seed ^ 0xa3);
    let mut qt = QuasiRandom::new(1, seed ^ 0xa33);
    let raw: Vec<(f64, Point, Point, usize)> = (0..budget)
        .map(|j| {
            let t = qt.next_in_interval(0.0, family.horizon);
            (t, q.next_in_box(&family.bounds), q.next_in_box(&family.bounds), j % 3)
        })
        .collect();
    let single_start = ProjectionOptions {
        starts: 1,
        ..ProjectionOptions::default()
    };
    let convex = family.is_convex();
    let diam = family.box_diameter();

    let per_pair: Vec<Vec<A3Witness>> = raw
        .par_iter()
        .filter_map(|(t, y1, y2, kind)| {
            let slice = SetSlice::with_options(family, *t, single_start.clone()).ok()?;
            let (x1, x2) = match kind {
                0 => (y1.clone(), y2.clone()),
                1 => (slice.pull_in(y1).ok()?, slice.pull_in(y2).ok()?),
                _ => {
                    let x2 = y1 + (y2 - y1) * (1e-3 * diam / (y2 - y1).norm().max(1e-300));
                    (y1.clone(), x2)
                }
            };
            if !in_enlargement(family, &slice, &x1) || !in_enlargement(family, &slice, &x2) {
                return None;
            }
            let dx = &x1 - &x2;
            let dist_sq = dx.norm_squared();
            if dist_sq.sqrt() <= 1e-9 * diam {
                return None;
            }
            let mut found = Vec::new();
            for (i, c) in family.constraints.iter().enumerate() {
                let h1 = c.subdifferential(*t, &x1);
                let h2 = c.subdifferential(*t, &x2);
                for xi1 in &h1.generators {
                    for xi2 in &h2.generators {
                        let inner = (xi1 - xi2).dot(&dx);
                        found.push(A3Witness {
                            t: *t,
                            index: i,
                            x1: coords(&x1),
                            x2: coords(&x2),
                            xi1: coords(xi1),
                            xi2: coords(xi2),
                            inner,
                            dist_sq,
                        });
                    }
                }
            }
            Some(found)
        })
        .collect();

    let pairs_checked = per_pair.len();
    let mut min_ratio = f64::INFINITY;
    let mut violations = Vec::new();
    let mut violation_count = 0;
    let mut monotonicity_violations = 0;
    for w in per_pair.into_iter().flatten() {
        min_ratio = min_ratio.min(w.inner / w.dist_sq);
        if convex && w.inner < -tol {
            monotonicity_violations += 1;
        }
        if w.inner < -gamma * w.dist_sq - tol {
            violation_count += 1;
            if violations.len() < KEPT_WITNESSES {
                violations.push(w);
            }
        }
    }
    A3Report {
        gamma,
        pairs_checked,
        min_ratio,
        violation_count,
        violations,
        convex,
        monotonicity_violations,
        passed: violation_count == 0 && monotonicity_violations == 0,
    }
}

/// Uniform descent direction over the active subgradients at sampled
/// `(t, x)` with `x` in `C(t)`. Infeasible box samples are replaced by their
/// projections so that boundary, edge and vertex points are all visited.
///
/// A constraint counts as active when `f_i(t, x) >= -10 tol`, with `tol`
/// the projector tolerance.
pub fn check_a4(family: &ConstraintFamily, budget: usize, seed: u64) -> A4Report {
    let mut q = QuasiRandom::new(family.dim, seed ^ 0xa4);
    let mut qt = QuasiRandom::new(1, seed ^ 0xa44);
    let raw: Vec<(f64, Point)> = (0..budget)
        .map(|_| {
            (
                qt.next_in_interval(0.0, family.horizon),
                q.next_in_box(&family.bounds),
            )
        })
        .collect();
    let results: Vec<Option<A4Witness>> = raw
        .par_iter()
        .map(|(t, y)| {
            let slice = SetSlice::new(family, *t).ok()?;
            let x = slice.pull_in(y).ok()?;
            let gens = family.active_generators(*t, &x, 10.0 * slice.tol());
            if gens.is_empty() {
                return None;
            }
            Some(match min_norm_direction(&gens) {
                Some((v, delta)) => A4Witness {
                    t: *t,
                    x: coords(&x),
                    v: Some(coords(&v)),
                    delta,
                },
                None => A4Witness {
                    t: *t,
                    x: coords(&x),
                    v: None,
                    delta: 0.0,
                },
            })
        })
        .collect();

    let mut mu_est = f64::INFINITY;
    let mut worst: Option<A4Witness> = None;
    let mut witnesses = Vec::new();
    let mut refutations = Vec::new();
    let mut active_samples = 0;
    for w in results.into_iter().flatten() {
        active_samples += 1;
        if w.delta < mu_est {
            mu_est = w.delta;
            worst = Some(w.clone());
        }
        if w.delta <= 1e-12 {
            if refutations.len() < KEPT_WITNESSES {
                refutations.push(w);
            }
        } else if witnesses.len() < KEPT_WITNESSES {
            witnesses.push(w);
        }
    }
    A4Report {
        passed: refutations.is_empty() && active_samples > 0,
        mu_est,
        active_samples,
        worst,
        witnesses,
        refutations,
    }
}

/// Runs A1-A4 and derives the certificate `(rho, L1, gamma, mu, r, theta)`.
/// The certificate is `None` when no positive descent margin was found.
pub fn certify(
    family: &ConstraintFamily,
    opts: &CertifyOptions,
) -> (AssumptionReport, Option<ProxCertificate>) {
    let a1 = check_a1(family, opts.budget, opts.seed);
    let a2 = check_a2(family);
    let a3 = check_a3(family, opts.gamma, opts.budget, opts.tol, opts.seed);
    let a4 = check_a4(family, opts.budget, opts.seed);
    let cert = (a4.passed && a4.mu_est.is_finite() && a4.mu_est > 0.0)
        .then(|| ProxCertificate::new(family.rho(), a1.l1_est, opts.gamma, a4.mu_est));
    (
        AssumptionReport {
            budget: opts.budget,
            a1,
            a2,
            a3,
            a4,
        },
        cert,
    )
}
