use itertools::Itertools;
use nalgebra::DMatrix;

use crate::constraints::Halfspace;
use crate::Point;

/// Enumeration is abandoned beyond this many active-set candidates.
pub(crate) const MAX_ACTIVE_SETS: usize = 200_000;

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

pub(crate) fn active_set_count(m: usize, n: usize) -> usize {
    (1..=n.min(m)).map(|k| binomial(m, k)).fold(0, usize::saturating_add)
}

pub(crate) fn feasible(hs: &[Halfspace], y: &Point, tol: f64) -> bool {
    hs.iter().all(|h| h.normal.dot(y) - h.offset <= tol)
}

/// Candidate nearest points of `{ y : <n_j, y> <= c_j }` to `p`.
///
/// Every face of the polyhedron is the intersection of at most `dim`
/// independent active hyperplanes; projecting onto each such affine set and
/// keeping the feasible results contains the true projection, and it is the
/// candidate of least distance. Returns all feasible candidates, or `None`
/// when the polyhedron is empty.
pub(crate) fn candidates(p: &Point, hs: &[Halfspace], tol: f64) -> Option<Vec<Point>> {
    if feasible(hs, p, tol) {
        return Some(vec![p.clone()]);
    }
    let n = p.len();
    let mut out = Vec::new();
    for k in 1..=n.min(hs.len()) {
        for idx in (0..hs.len()).combinations(k) {
            let a = DMatrix::from_fn(k, n, |r, c| hs[idx[r]].normal[c]);
            let gram = &a * a.transpose();
            let Some(chol) = gram.cholesky() else {
                continue;
            };
            if chol.l_dirty().diagonal().iter().any(|d| d.abs() < 1e-10) {
                continue;
            }
            let offsets = Point::from_iterator(k, idx.iter().map(|&j| hs[j].offset));
            let lambda = chol.solve(&(&a * p - offsets));
            let y = p - a.transpose() * lambda;
            if feasible(hs, &y, tol) {
                out.push(y);
            }
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}
