//! Small spatial-math kernel: 3-vectors, rigid transforms, wrenches and a
//! truncated-SVD pseudo-inverse.
//!
//! Rotations are carried as 3×3 matrices. Compositions re-orthonormalize
//! through a polar decomposition once the drift from orthonormality exceeds
//! [`ORTHO_DRIFT_TOL`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat6 = Matrix6<f64>;
pub type Vec6 = Vector6<f64>;
/// Dense row/column matrix of small dynamic shape.
pub type MatMN = DMatrix<f64>;

/// Maximum tolerated ‖RᵀR − I‖ before a rotation is re-orthonormalized.
pub const ORTHO_DRIFT_TOL: f64 = 1e-9;

/// Relative singular-value cutoff used by [`pinv`].
pub const PINV_RCOND: f64 = 1e-10;

/// Rigid-body transform: `x ↦ rotation · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Transform) -> Transform {
        compose(self, other)
    }

    pub fn inverse(&self) -> Transform {
        inverse(self)
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).norm()
    }

    pub fn is_valid(&self) -> bool {
        self.rotation.iter().all(|x| x.is_finite())
            && self.translation.iter().all(|x| x.is_finite())
            && self.orthonormality_error() < 1e-9
            && (self.rotation.determinant() - 1.0).abs() < 1e-9
    }

    /// Re-projects the rotation onto SO(3) if it drifted.
    pub fn renormalized(mut self) -> Self {
        if self.orthonormality_error() > ORTHO_DRIFT_TOL {
            self.rotation = orthonormalize(&self.rotation);
        }
        self
    }

    /// Largest of translation distance and rotation angle to `other`.
    pub fn distance(&self, other: &Transform) -> (f64, f64) {
        let dp = (self.translation - other.translation).norm();
        let dr = log_so3(&(self.rotation.transpose() * other.rotation)).norm();
        (dp, dr)
    }
}

impl Mul for Transform {
    type Output = Transform;
    fn mul(self, rhs: Transform) -> Transform {
        compose(&self, &rhs)
    }
}

/// `a ∘ b`, the homogeneous product `A · B`.
pub fn compose(a: &Transform, b: &Transform) -> Transform {
    Transform {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
    .renormalized()
}

pub fn inverse(t: &Transform) -> Transform {
    let rt = t.rotation.transpose();
    Transform {
        rotation: rt,
        translation: -(rt * t.translation),
    }
}

/// Nearest rotation matrix (polar factor) via SVD.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * vt;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * vt;
    }
    out
}

/// Cross-product matrix: `skew(v) · w = v × w`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rodrigues formula for the rotation `exp([w]×)`.
pub fn exp_so3(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let k = skew(w);
    if theta < 1e-8 {
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + a * k + b * k * k
}

/// Rotation vector of `r` (inverse of [`exp_so3`]), angle in `[0, π]`.
pub fn log_so3(r: &Mat3) -> Vec3 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let vee = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if theta < 1e-6 {
        return 0.5 * vee;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // Near π the antisymmetric part vanishes; recover the axis from R + I.
        let m = (r + Mat3::identity()) * 0.5;
        let mut best = 0;
        for i in 1..3 {
            if m[(i, i)] > m[(best, best)] {
                best = i;
            }
        }
        let mut axis = m.column(best).into_owned();
        axis /= axis.norm();
        return axis * theta;
    }
    vee * (theta / (2.0 * theta.sin()))
}

/// Force/moment pair. Moments are taken about whatever point the producer
/// states; transport with [`Wrench::shifted`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub moment: Vec3,
}

impl Wrench {
    pub fn new(force: Vec3, moment: Vec3) -> Self {
        Self { force, moment }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_force(force: Vec3) -> Self {
        Self {
            force,
            moment: Vec3::zeros(),
        }
    }

    pub fn to_vec6(&self) -> Vec6 {
        Vec6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.moment.x,
            self.moment.y,
            self.moment.z,
        )
    }

    pub fn from_vec6(v: &Vec6) -> Self {
        Self {
            force: Vec3::new(v[0], v[1], v[2]),
            moment: Vec3::new(v[3], v[4], v[5]),
        }
    }

    /// Same wrench with the moment re-expressed about a point displaced by
    /// `-lever` from the application point (i.e. `lever` runs from the new
    /// reference point to the application point).
    pub fn shifted(&self, lever: &Vec3) -> Self {
        Self {
            force: self.force,
            moment: self.moment + lever.cross(&self.force),
        }
    }

    pub fn rotated(&self, r: &Mat3) -> Self {
        Self {
            force: r * self.force,
            moment: r * self.moment,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_vec6().norm()
    }
}

impl Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.force + rhs.force, self.moment + rhs.moment)
    }
}

impl Sub for Wrench {
    type Output = Wrench;
    fn sub(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.force - rhs.force, self.moment - rhs.moment)
    }
}

impl Neg for Wrench {
    type Output = Wrench;
    fn neg(self) -> Wrench {
        Wrench::new(-self.force, -self.moment)
    }
}

impl Mul<f64> for Wrench {
    type Output = Wrench;
    fn mul(self, rhs: f64) -> Wrench {
        Wrench::new(self.force * rhs, self.moment * rhs)
    }
}

/// Moore–Penrose pseudo-inverse. Singular values below
/// `PINV_RCOND · σ_max` are treated as zero.
pub fn pinv(m: &MatMN) -> MatMN {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return MatMN::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let vt = svd.v_t.as_ref().expect("svd computed with v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_RCOND * sigma_max;
    let mut out = MatMN::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let vk = vt.row(k).transpose();
        let uk = u.column(k);
        out += (vk * uk.transpose()) / s;
    }
    out
}

/// Convenience: is every component finite?
pub fn vec_is_finite(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &Transform, b: &Transform, tol: f64) -> bool {
        (a.rotation - b.rotation).abs().max() <= tol
            && (a.translation - b.translation).abs().max() <= tol
    }

    fn arb_transform() -> impl Strategy<Value = Transform> {
        (
            prop::array::uniform3(-3.0f64..3.0),
            prop::array::uniform3(-2.0f64..2.0),
        )
            .prop_map(|(w, t)| {
                Transform::new(exp_so3(&Vec3::from(w)), Vec3::from(t))
            })
    }

    #[test]
    fn compose_identity_is_noop() {
        let t = Transform::new(rot_z(0.3) * rot_x(-1.1), Vec3::new(1.0, -2.0, 0.5));
        assert!(close(&compose(&Transform::identity(), &t), &t, 0.0));
    }

    #[test]
    fn compose_quarter_turns() {
        let t = Transform::new(rot_z(FRAC_PI_2), Vec3::new(1.0, 0.0, 0.0));
        // Homogeneous product by hand: R = Rz(π), p = Rz(π/2)·[1,0,0] + [1,0,0].
        let expected = Transform::new(rot_z(std::f64::consts::PI), Vec3::new(1.0, 1.0, 0.0));
        assert!(close(&compose(&t, &t), &expected, 1e-12));
    }

    #[test]
    fn inverse_examples() {
        assert!(close(&inverse(&Transform::identity()), &Transform::identity(), 0.0));
        let t = Transform::from_translation(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(inverse(&t).translation, Vec3::new(-1.0, -2.0, -3.0));
        let t = Transform::new(rot_z(FRAC_PI_2), Vec3::new(1.0, 0.0, 0.0));
        let expected = Transform::new(rot_z(-FRAC_PI_2), Vec3::new(0.0, 1.0, 0.0));
        assert!(close(&inverse(&t), &expected, 1e-12));
        assert!(close(&compose(&t, &inverse(&t)), &Transform::identity(), 1e-12));
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        let e = skew(&Vec3::x()) * Vec3::y();
        assert_eq!(e, Vec3::z());
    }

    #[test]
    fn pinv_examples() {
        let i6 = MatMN::identity(6, 6);
        assert!((pinv(&i6) - &i6).abs().max() < 1e-14);
        let d = MatMN::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 4.0]));
        let p = pinv(&d);
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15 && (p[(1, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(p[(0, 1)], 0.0);
    }

    #[test]
    fn pinv_rank_deficient_truncates() {
        // Rank-1 matrix: u vᵀ.
        let u = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let v = nalgebra::DVector::from_vec(vec![1.0, -1.0]);
        let a = &u * v.transpose();
        let p = pinv(&a);
        assert!((&a * &p * &a - &a).abs().max() < 1e-12);
        assert!((&p * &a * &p - &p).abs().max() < 1e-12);
        let zero = MatMN::zeros(2, 3);
        assert_eq!(pinv(&zero), MatMN::zeros(3, 2));
    }

    #[test]
    fn log_exp_round_trip_near_pi() {
        let w = Vec3::new(0.0, 0.0, std::f64::consts::PI - 1e-9);
        let back = log_so3(&exp_so3(&w));
        assert!((back - w).norm() < 1e-6);
        let w = Vec3::new(1.0, 2.0, -0.5).normalize() * std::f64::consts::PI;
        let back = log_so3(&exp_so3(&w));
        assert!((exp_so3(&back) - exp_so3(&w)).abs().max() < 1e-9);
    }

    #[test]
    fn wrench_shift_matches_cross_product() {
        let w = Wrench::from_force(Vec3::new(0.0, 0.0, 10.0));
        let s = w.shifted(&Vec3::new(0.0, 0.1, 0.0));
        assert!((s.moment - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let mut r = rot_y(0.7) * rot_z(0.2);
        r[(0, 1)] += 1e-6;
        let t = Transform::from_rotation(r).renormalized();
        assert!(t.is_valid());
    }

    proptest! {
        #[test]
        fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let l = compose(&compose(&a, &b), &c);
            let r = compose(&a, &compose(&b, &c));
            prop_assert!(close(&l, &r, 1e-12));
        }

        #[test]
        fn inverse_round_trip(t in arb_transform()) {
            prop_assert!(close(&compose(&t, &inverse(&t)), &Transform::identity(), 1e-12));
            prop_assert!(t.is_valid());
        }

        #[test]
        fn skew_is_antisymmetric(v in prop::array::uniform3(-10.0f64..10.0), w in prop::array::uniform3(-10.0f64..10.0)) {
            let v = Vec3::from(v);
            let w = Vec3::from(w);
            let s = skew(&v);
            prop_assert_eq!(s.transpose(), -s);
            prop_assert!((s * w - v.cross(&w)).norm() <= 1e-12);
            prop_assert!((s * v).norm() <= 1e-15 * (1.0 + v.norm_squared()));
        }
    }
}
