use std::f64::consts::FRAC_1_SQRT_2;

use proptest::prelude::*;

use super::*;
use crate::catalog;
use crate::constraints::{Constraint, Piece};
use crate::point;

/// Brute-force nearest point over a regular grid of the slice.
struct GridOracle {
    pts: Vec<[f64; 2]>,
    pitch: f64,
}

impl GridOracle {
    fn new(family: &ConstraintFamily, t: f64, lo: [f64; 2], hi: [f64; 2], n: usize) -> Self {
        let pitch = (hi[0] - lo[0]) / (n - 1) as f64;
        let ny = ((hi[1] - lo[1]) / pitch).round() as usize + 1;
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..ny {
                let x = [lo[0] + i as f64 * pitch, lo[1] + j as f64 * pitch];
                if family.membership(t, &point(&x), 0.0) {
                    pts.push(x);
                }
            }
        }
        Self { pts, pitch }
    }

    fn nearest(&self, p: &Point) -> ([f64; 2], f64) {
        self.pts
            .iter()
            .map(|q| (*q, ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }
}

#[test]
fn distance_examples_against_grid_oracle() {
    let fam = catalog::corner_family(3.0);
    let c0 = SetSlice::new(&fam, 0.0).unwrap();
    let oracle = GridOracle::new(&fam, 0.0, [-2.0, -2.0], [2.0, 2.0], 2001);

    assert_eq!(c0.distance(&point(&[0.0, 0.0])).unwrap(), 0.0);

    // (0,-1) sits in the normal cone of the apex: nearest point is (0,0).
    let p = point(&[0.0, -1.0]);
    let (q, d) = oracle.nearest(&p);
    assert!((d - 1.0).abs() < 1e-12 && q == [0.0, 0.0]);
    assert!((c0.distance(&p).unwrap() - 1.0).abs() < 1e-12);
    assert!((c0.project(&p).unwrap() - point(&[0.0, 0.0])).norm() < 1e-12);

    // (1,0) projects onto the right wing.
    let p = point(&[1.0, 0.0]);
    let (q, d) = oracle.nearest(&p);
    assert!((d - FRAC_1_SQRT_2).abs() < oracle.pitch);
    assert!((q[0] - 0.5).abs() <= oracle.pitch && (q[1] - 0.5).abs() <= oracle.pitch);
    assert!((c0.project(&p).unwrap() - point(&[0.5, 0.5])).norm() < 1e-12);
    assert!((c0.distance(&p).unwrap() - FRAC_1_SQRT_2).abs() < 1e-12);

    let capped = catalog::capped_corner_family();
    let c3 = SetSlice::new(&capped, 3.0).unwrap();
    let p = point(&[0.0, 5.0]);
    let oracle = GridOracle::new(&capped, 3.0, [-2.0, 2.0], [2.0, 6.0], 801);
    let (q, d) = oracle.nearest(&p);
    assert!((d - 1.0).abs() < 1e-12 && q == [0.0, 4.0]);
    assert!((c3.distance(&p).unwrap() - 1.0).abs() < 1e-12);
    assert!((c3.project(&p).unwrap() - point(&[0.0, 4.0])).norm() < 1e-12);
}

#[test]
fn explicit_tolerance_entry_points() {
    let fam = catalog::corner_family(3.0);
    let c0 = SetSlice::new(&fam, 0.0).unwrap();
    let p = point(&[1.0, 0.0]);
    assert!((distance(&p, &c0, 1e-9).unwrap() - FRAC_1_SQRT_2).abs() < 1e-12);
    assert!((project(&p, &c0, 1e-9).unwrap() - point(&[0.5, 0.5])).norm() < 1e-12);
    // within a loose tolerance a slightly infeasible point counts as feasible
    let q = point(&[0.0, -1e-4]);
    assert_eq!(distance(&q, &c0, 1e-3).unwrap(), 0.0);
}

#[test]
fn feasible_points_are_fixed() {
    let fam = catalog::capped_corner_family();
    let s = SetSlice::new(&fam, 1.0).unwrap();
    for p in [[0.0, 1.5], [0.3, 1.9], [0.0, 1.0], [1.0, 2.0]] {
        assert_eq!(s.project(&point(&p)).unwrap(), point(&p));
    }
}

#[test]
fn nonconvex_tie_beyond_prox_radius_is_ambiguous() {
    let fam = catalog::shell_family();
    let s = SetSlice::new(&fam, 0.0).unwrap();
    assert!(!s.is_exact());
    match s.project_detailed(&point(&[0.0, 0.0])) {
        Err(GeometryError::AmbiguousProjection { chosen, candidates }) => {
            assert!(candidates.len() >= 2);
            for c in &candidates {
                let n = (c[0] * c[0] + c[1] * c[1]).sqrt();
                assert!((n - 1.0).abs() < 1e-5, "{c:?}");
            }
            let mut sorted = candidates.clone();
            sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
            assert_eq!(chosen, sorted[0]);
        }
        other => panic!("expected ambiguity, got {other:?}"),
    }
    // distance still resolves to the common value
    assert!((s.distance(&point(&[0.0, 0.0])).unwrap() - 1.0).abs() < 1e-5);
}

#[test]
fn nonconvex_projection_inside_tube_is_unique() {
    let fam = catalog::shell_family();
    let s = SetSlice::new(&fam, 0.0).unwrap();
    let pr = s.project_detailed(&point(&[0.5, 0.0])).unwrap();
    assert!(pr.ties.is_empty());
    assert!((pr.point - point(&[1.0, 0.0])).norm() < 1e-5);
    assert!((pr.distance - 0.5).abs() < 1e-5);
}

#[test]
fn smooth_convex_projection() {
    let fam = catalog::disk_family(2.0);
    let s = SetSlice::new(&fam, 0.0).unwrap();
    let q = s.project(&point(&[3.0, 4.0])).unwrap();
    assert!((q - point(&[1.2, 1.6])).norm() < 1e-5);
}

#[test]
fn empty_slices_are_detected() {
    let fam = ConstraintFamily::new(
        2,
        1.0,
        None,
        vec![[-1.0, 1.0]; 2],
        vec![
            Constraint::new(vec![Piece::affine(&[1.0, 0.0], 0.0, 1.0)]),
            Constraint::new(vec![Piece::affine(&[-1.0, 0.0], 0.0, 1.0)]),
        ],
    )
    .unwrap();
    assert!(matches!(
        SetSlice::new(&fam, 0.5),
        Err(GeometryError::EmptySlice { .. })
    ));
    let corner = catalog::corner_family(3.0);
    assert!(matches!(
        SetSlice::new(&corner, 4.0),
        Err(GeometryError::OutOfHorizon { .. })
    ));
}

#[test]
fn prox_radius_examples() {
    let c = ProxCertificate::new(f64::INFINITY, 1.0, 1e-6, 1.0);
    assert!((prox_radius(&c) - 1e6).abs() < 1e-6);
    assert_eq!(prox_radius(&ProxCertificate::new(0.5, 1.0, 1.0, 1.0)), 0.5);
    assert_eq!(prox_radius(&ProxCertificate::new(2.0, 1.0, 1.0, 0.5)), 0.5);
    assert_eq!(c.r, prox_radius(&c));
    assert_eq!(c.theta, 1.0);
    assert!(c.clone().with_theta(0.5).is_none());
    assert_eq!(c.with_theta(2.0).unwrap().theta, 2.0);
}

#[test]
fn vbar_at_apex_points_up() {
    let fam = catalog::corner_family(3.0);
    let c = ProxCertificate::new(f64::INFINITY, 1.0, 1e-6, 1.0);
    let v = c.vbar(&fam, 1.0, &point(&[0.0, 1.0])).unwrap();
    assert!((v - point(&[0.0, 1.0])).norm() < 1e-12);
    assert!(c.vbar(&fam, 1.0, &point(&[0.0, 2.0])).is_none());
}

#[test]
fn residual_of_corner_normal_is_nonpositive() {
    let fam = catalog::corner_family(3.0);
    let s = SetSlice::new(&fam, 0.0).unwrap();
    let r = 1e6;
    let res = proximal_normal_residual(&point(&[0.0, 0.0]), &point(&[0.0, -1.0]), &s, r, 1000)
        .unwrap();
    assert!(res <= 1e-9, "{res}");
}

#[test]
fn residual_of_inward_direction_is_large() {
    let fam = catalog::corner_family(3.0);
    let s = SetSlice::new(&fam, 0.0).unwrap();
    let r = 1e6;
    let res =
        proximal_normal_residual(&point(&[0.0, 0.0]), &point(&[0.0, 1.0]), &s, r, 1000).unwrap();
    assert!(res > 0.4, "{res}");
    // small radius: the bound is set by the sampled reach r/2
    let res =
        proximal_normal_residual(&point(&[0.0, 0.0]), &point(&[0.0, 1.0]), &s, 2.0, 1000).unwrap();
    assert!(res > 0.4, "{res}");
}

#[test]
fn residual_scales_with_direction_norm() {
    let fam = catalog::unit_square_family(1.0);
    let s = SetSlice::new(&fam, 0.0).unwrap();
    let x = point(&[0.1, -0.2]);
    let r = 4.0;
    for eps in [1e-1, 1e-3, 1e-6] {
        let v = point(&[eps, 0.0]);
        let res = proximal_normal_residual(&x, &v, &s, r, 500).unwrap();
        assert!(res <= eps * r, "{eps}: {res}");
        assert!(res > 0.0);
    }
}

#[test]
fn residual_preconditions() {
    let fam = catalog::corner_family(3.0);
    let s = SetSlice::new(&fam, 0.0).unwrap();
    assert!(matches!(
        proximal_normal_residual(&point(&[0.0, -1.0]), &point(&[0.0, -1.0]), &s, 1.0, 10),
        Err(GeometryError::NotInSet { .. })
    ));
    assert!(matches!(
        proximal_normal_residual(&point(&[0.0, 1.0]), &point(&[0.0, 0.0]), &s, 1.0, 10),
        Err(GeometryError::ZeroDirection)
    ));
}

#[test]
fn hausdorff_of_translated_corner() {
    let fam = catalog::corner_family(3.0);
    let cert = ProxCertificate::new(f64::INFINITY, 1.0, 1e-6, 1.0);
    let rep = hausdorff_check(&fam, &cert, &[(0.0, 1.0), (1.0, 1.0)], 1e-9).unwrap();
    // The wings move by 1/sqrt(2); the apex of C(0) is at distance 1 from C(1).
    assert!((rep.entries[0].estimate - 1.0).abs() < 1e-9, "{:?}", rep.entries[0]);
    assert_eq!(rep.entries[0].bound, 1.0);
    assert!((rep.entries[0].ratio - 1.0).abs() < 1e-9);
    assert_eq!(rep.entries[1].estimate, 0.0);
    assert!(rep.passed);
}

#[test]
fn hausdorff_of_capped_corner() {
    let fam = catalog::capped_corner_family();
    let cert = ProxCertificate::new(f64::INFINITY, 1.0, 1e-6, 1.0 / 5f64.sqrt());
    let rep = hausdorff_check(&fam, &cert, &[(1.0, 2.0)], 1e-9).unwrap();
    assert!((rep.entries[0].estimate - 1.0).abs() < 1e-9);
    assert!(rep.entries[0].estimate <= rep.entries[0].bound);
    assert!(rep.passed);
    // an undersized modulus is caught
    let tight = ProxCertificate {
        theta: 0.5,
        ..cert
    };
    assert!(!hausdorff_check(&fam, &tight, &[(1.0, 2.0)], 1e-9).unwrap().passed);
}

fn slices() -> Vec<(ConstraintFamily, f64)> {
    vec![
        (catalog::corner_family(3.0), 0.0),
        (catalog::corner_family(3.0), 1.7),
        (catalog::capped_corner_family(), 0.0),
        (catalog::capped_corner_family(), 2.5),
    ]
}

#[test]
fn grid_equivalence_on_random_points() {
    let mut q = QuasiRandom::new(2, 11);
    for (fam, t) in slices() {
        let s = SetSlice::new(&fam, t).unwrap();
        let oracle = GridOracle::new(&fam, t, [-6.0, -3.0], [6.0, 9.0], 1201);
        for _ in 0..100 {
            let p = q.next_in_box(&[[-3.0, 3.0], [-3.0, 3.0]]);
            let d = s.distance(&p).unwrap();
            let (_, dg) = oracle.nearest(&p);
            assert!(
                (d - dg).abs() <= oracle.pitch + EXACT_TOL,
                "t={t} p={p:?}: {d} vs grid {dg}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_idempotent(x in -3.0f64..3.0, y in -3.0f64..3.0, which in 0usize..4) {
        let (fam, t) = slices().swap_remove(which);
        let s = SetSlice::new(&fam, t).unwrap();
        let p = point(&[x, y]);
        let q = s.project(&p).unwrap();
        let qq = s.project(&q).unwrap();
        prop_assert!((&q - &qq).norm() <= 2.0 * s.tol());
        prop_assert!(s.contains(&q, s.tol()));
        prop_assert!(((p - &q).norm() - s.distance(&point(&[x, y])).unwrap()).abs() <= s.tol());
    }

    #[test]
    fn projection_is_nonexpansive_on_convex_slices(
        a in prop::array::uniform2(-3.0f64..3.0),
        b in prop::array::uniform2(-3.0f64..3.0),
        which in 0usize..4,
    ) {
        let (fam, t) = slices().swap_remove(which);
        let s = SetSlice::new(&fam, t).unwrap();
        let (p, q) = (point(&a), point(&b));
        let pp = s.project(&p).unwrap();
        let qq = s.project(&q).unwrap();
        prop_assert!((pp - qq).norm() <= (p - q).norm() + 2.0 * s.tol());
    }
}
