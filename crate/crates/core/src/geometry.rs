//! Planar rigid-body arithmetic.
//!
//! Agent frames use `x` to the right and `z` forward. A [`Transform2`] maps a
//! vector expressed in one agent frame into the next one:
//! `v' = R(beta) * v + xi` with `R(beta) = [[cos, -sin], [sin, cos]]` acting
//! on `(x, z)`. Because the transform updates coordinates (it does not move
//! the agent), a counter-clockwise (left) turn of the agent by `θ` produces
//! `beta = -θ`, and a forward step of `s` metres produces `xi = (0, -s)`.
//!
//! World poses use a right-handed `(x, y)` plane with headings measured
//! counter-clockwise from the world `+x` axis.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

/// Wraps an angle into the half-open interval `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % TAU;
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Rigid SE(2) motion between two agent frames. `xi.x` is the lateral
/// component, `xi.y` the forward (`z`) component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform2 {
    pub beta: f64,
    pub xi: Vec2,
}

impl Default for Transform2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Transform2 {
    pub const IDENTITY: Transform2 = Transform2 {
        beta: 0.0,
        xi: Vec2::ZERO,
    };

    pub fn new(beta: f64, xi_x: f64, xi_z: f64) -> Self {
        Self {
            beta: normalize_angle(beta),
            xi: Vec2::new(xi_x, xi_z),
        }
    }

    pub fn rotation(beta: f64) -> Self {
        Self::new(beta, 0.0, 0.0)
    }

    pub fn translation(xi_x: f64, xi_z: f64) -> Self {
        Self::new(0.0, xi_x, xi_z)
    }

    /// `(beta, xi_x, xi_z)`, the ordering used by the regression head.
    pub fn to_array(self) -> [f64; 3] {
        [self.beta, self.xi.x, self.xi.y]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Homogeneous 3x3 form.
    pub fn matrix(self) -> [[f64; 3]; 3] {
        let (s, c) = self.beta.sin_cos();
        [[c, -s, self.xi.x], [s, c, self.xi.y], [0.0, 0.0, 1.0]]
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        Self::new(m[1][0].atan2(m[0][0]), m[0][2], m[1][2])
    }

    /// `R v + xi`.
    pub fn apply(self, v: Vec2) -> Vec2 {
        v.rotated(self.beta) + self.xi
    }

    /// Matrix product `self * other`: applies `other` first.
    pub fn compose(self, other: Transform2) -> Transform2 {
        Transform2 {
            beta: normalize_angle(self.beta + other.beta),
            xi: other.xi.rotated(self.beta) + self.xi,
        }
    }

    pub fn inverse(self) -> Transform2 {
        Transform2 {
            beta: normalize_angle(-self.beta),
            xi: -(self.xi.rotated(-self.beta)),
        }
    }

    /// Conjugation by the horizontal reflection `x -> -x`; the transform seen
    /// through left-right flipped observations.
    pub fn mirror(self) -> Transform2 {
        Transform2::new(-self.beta, -self.xi.x, self.xi.y)
    }

    pub fn is_finite(self) -> bool {
        self.beta.is_finite() && self.xi.is_finite()
    }
}

/// Free function forms mirroring the operation names used across the crate.
pub fn compose(a: Transform2, b: Transform2) -> Transform2 {
    a.compose(b)
}

pub fn invert(t: Transform2) -> Transform2 {
    t.inverse()
}

pub fn apply(t: Transform2, v: Vec2) -> Vec2 {
    t.apply(v)
}

pub fn mirror(t: Transform2) -> Transform2 {
    t.mirror()
}

/// World-frame agent pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading: normalize_angle(heading),
        }
    }

    pub fn forward(self) -> Vec2 {
        Vec2::new(self.heading.cos(), self.heading.sin())
    }

    pub fn right(self) -> Vec2 {
        Vec2::new(self.heading.sin(), -self.heading.cos())
    }

    /// Expresses a world point in this pose's agent frame as `(x right, z forward)`.
    pub fn to_local(self, w: Vec2) -> Vec2 {
        let d = w - self.position;
        Vec2::new(d.dot(self.right()), d.dot(self.forward()))
    }

    pub fn to_world(self, v: Vec2) -> Vec2 {
        self.position + self.right() * v.x + self.forward() * v.y
    }

    /// The pose reached after a motion whose coordinate update is `t`.
    /// Inverse of [`relative_transform`]: `relative_transform(p, p.advance(t)) == t`.
    pub fn advance(self, t: Transform2) -> Pose2 {
        let origin_in_old = t.inverse().xi;
        let p = self.to_world(origin_in_old);
        Pose2::new(p.x, p.y, self.heading - t.beta)
    }
}

/// Goal position expressed in the current agent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalVector(pub Vec2);

impl GoalVector {
    pub fn new(x: f64, z: f64) -> Self {
        Self(Vec2::new(x, z))
    }

    pub fn distance(self) -> f64 {
        self.0.norm()
    }

    /// Bearing from the forward axis, positive to the right.
    pub fn bearing(self) -> f64 {
        self.0.x.atan2(self.0.y)
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

/// Re-expresses the goal after the agent's frame moves by `t_hat`.
pub fn update_goal(g: GoalVector, t_hat: Transform2) -> GoalVector {
    GoalVector(t_hat.apply(g.0))
}

/// Ground-truth coordinate update from frame `p_t` into frame `p_t1`.
pub fn relative_transform(p_t: Pose2, p_t1: Pose2) -> Transform2 {
    let beta = normalize_angle(p_t.heading - p_t1.heading);
    let c = p_t.to_local(p_t1.position);
    Transform2 {
        beta,
        xi: -(c.rotated(beta)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    fn close(a: Transform2, b: Transform2, tol: f64) -> bool {
        normalize_angle(a.beta - b.beta).abs() < tol
            && (a.xi.x - b.xi.x).abs() < tol
            && (a.xi.y - b.xi.y).abs() < tol
    }

    #[test]
    fn normalize_half_open() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.1 - TAU) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn compose_identity_and_inverse_rotations() {
        let t = Transform2::new(0.3, 1.0, -2.0);
        assert_eq!(Transform2::IDENTITY.compose(t), t);
        let a = Transform2::rotation(30f64.to_radians());
        let b = Transform2::rotation(-30f64.to_radians());
        assert!(close(a.compose(b), Transform2::IDENTITY, 1e-15));
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = Transform2::new(0.7, 0.3, -1.2);
        let b = Transform2::new(-2.1, 2.5, 0.4);
        let m = Transform2::from_matrix(mat_mul(a.matrix(), b.matrix()));
        assert!(close(a.compose(b), m, 1e-12));
    }

    #[test]
    fn invert_matches_matrix_inverse() {
        let t = Transform2::new(1.1, -0.4, 0.9);
        let m = t.matrix();
        // Rigid inverse [R^T, -R^T xi].
        let inv = [
            [m[0][0], m[1][0], -(m[0][0] * m[0][2] + m[1][0] * m[1][2])],
            [m[0][1], m[1][1], -(m[0][1] * m[0][2] + m[1][1] * m[1][2])],
            [0.0, 0.0, 1.0],
        ];
        assert!(close(t.inverse(), Transform2::from_matrix(inv), 1e-12));
        assert!(close(t.inverse().inverse(), t, 1e-12));
        assert_eq!(Transform2::IDENTITY.inverse(), Transform2::IDENTITY);
    }

    #[test]
    fn apply_quarter_turn_matches_rotation_matrix() {
        let t = Transform2::rotation(PI / 2.0);
        let m = t.matrix();
        let v = t.apply(Vec2::new(1.0, 0.0));
        assert!((v.x - m[0][0]).abs() < 1e-15);
        assert!((v.y - m[1][0]).abs() < 1e-15);
        assert!((v.y - 1.0).abs() < 1e-15);
        let pure = Transform2::translation(0.2, -0.5);
        assert_eq!(pure.apply(Vec2::ZERO), Vec2::new(0.2, -0.5));
    }

    #[test]
    fn forward_step_moves_goal_closer() {
        let start = Pose2::new(1.0, 2.0, 0.4);
        let end = Pose2 {
            position: start.position + start.forward() * 0.25,
            heading: start.heading,
        };
        let t = relative_transform(start, end);
        assert!(t.beta.abs() < 1e-12);
        assert!(t.xi.x.abs() < 1e-12);
        assert!((t.xi.y + 0.25).abs() < 1e-12);
        let g = update_goal(GoalVector::new(0.0, 1.0), t);
        assert!(g.0.x.abs() < 1e-12 && (g.0.y - 0.75).abs() < 1e-12);
    }

    #[test]
    fn left_turn_preserves_goal_distance() {
        let start = Pose2::new(0.0, 0.0, 1.0);
        let end = Pose2::new(0.0, 0.0, 1.0 + 30f64.to_radians());
        let t = relative_transform(start, end);
        assert!((t.beta + 30f64.to_radians()).abs() < 1e-12);
        assert!(t.xi.norm() < 1e-12);
        let g = GoalVector::new(0.7, 1.9);
        assert!((update_goal(g, t).distance() - g.distance()).abs() < 1e-9);
        // A landmark straight ahead drifts to the right after turning left.
        assert!(t.apply(Vec2::new(0.0, 1.0)).x > 0.0);
    }

    #[test]
    fn relative_transform_round_trips_landmark() {
        let p0 = Pose2::new(0.5, -1.0, 2.0);
        let p1 = Pose2::new(1.5, 0.25, -2.5);
        let w = Vec2::new(3.0, 4.0);
        let t = relative_transform(p0, p1);
        let moved = t.apply(p0.to_local(w));
        let direct = p1.to_local(w);
        assert!((moved - direct).norm() < 1e-12);
        assert_eq!(relative_transform(p0, p0), Transform2::new(0.0, 0.0, 0.0));
        let back = p0.advance(t);
        assert!((back.position - p1.position).norm() < 1e-12);
        assert!(normalize_angle(back.heading - p1.heading).abs() < 1e-12);
    }

    #[test]
    fn mirror_is_an_involution() {
        let t = Transform2::new(0.4, 0.1, -0.2);
        assert_eq!(t.mirror().mirror(), t);
        assert_eq!(Transform2::IDENTITY.mirror(), Transform2::IDENTITY);
    }
}
