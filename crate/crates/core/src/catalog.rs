//! Built-in constraint families.

use crate::constraints::{Constraint, ConstraintFamily, Piece};

/// `f(t, x) = t - x2 + |x1|`: the right-angle corner frame moving up the
/// `x2` axis with unit speed.
fn corner_constraint() -> Constraint {
    Constraint::new(vec![
        Piece::affine(&[1.0, -1.0], 1.0, 0.0),
        Piece::affine(&[-1.0, -1.0], 1.0, 0.0),
    ])
}

/// `C(t) = { x : -x2 + |x1| <= -t }` on `[0, horizon]`.
pub fn corner_family(horizon: f64) -> ConstraintFamily {
    ConstraintFamily::new(
        2,
        horizon,
        None,
        vec![[-4.0, 4.0], [-2.0, horizon + 5.0]],
        vec![corner_constraint()],
    )
    .expect("corner family is well formed")
}

/// The corner frame with the lid `x2 <= t + 1`, horizon 3.
pub fn capped_corner_family() -> ConstraintFamily {
    ConstraintFamily::new(
        2,
        3.0,
        None,
        vec![[-2.0, 2.0], [-1.0, 5.0]],
        vec![
            corner_constraint(),
            Constraint::new(vec![Piece::affine(&[0.0, 1.0], -1.0, -1.0)]),
        ],
    )
    .expect("capped corner family is well formed")
}

/// Exterior of the unit disk, `1 - |x|^2 <= 0`. Nonconvex and 1-prox-regular.
pub fn shell_family() -> ConstraintFamily {
    ConstraintFamily::new(
        2,
        1.0,
        Some(0.5),
        vec![[-2.0, 2.0], [-2.0, 2.0]],
        vec![Constraint::new(vec![Piece::quadratic(
            -1.0,
            &[0.0, 0.0],
            0.0,
            1.0,
        )])],
    )
    .expect("shell family is well formed")
}

/// The static square `[-1, 1]^2`.
pub fn unit_square_family(horizon: f64) -> ConstraintFamily {
    ConstraintFamily::new(
        2,
        horizon,
        None,
        vec![[-1.5, 1.5], [-1.5, 1.5]],
        vec![
            Constraint::new(vec![
                Piece::affine(&[1.0, 0.0], 0.0, -1.0),
                Piece::affine(&[-1.0, 0.0], 0.0, -1.0),
            ]),
            Constraint::new(vec![
                Piece::affine(&[0.0, 1.0], 0.0, -1.0),
                Piece::affine(&[0.0, -1.0], 0.0, -1.0),
            ]),
        ],
    )
    .expect("square family is well formed")
}

/// Static disk `|x|^2 - radius^2 <= 0`; a smooth convex slice.
pub fn disk_family(radius: f64) -> ConstraintFamily {
    ConstraintFamily::new(
        2,
        1.0,
        None,
        vec![[-2.0 * radius, 2.0 * radius]; 2],
        vec![Constraint::new(vec![Piece::quadratic(
            1.0,
            &[0.0, 0.0],
            0.0,
            -radius * radius,
        )])],
    )
    .expect("disk family is well formed")
}
