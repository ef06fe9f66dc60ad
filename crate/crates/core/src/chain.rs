//! Closed-chain kinematics of two arms rigidly holding one object, and the
//! minimum-norm ("shared force") split of the object's required wrench
//! between the two end-effectors.
//!
//! Frames: `W` world, `L` object centroid, `b_i` arm base, `e_i` end-effector
//! (pad contact point). Lever arms run from the object centroid to the point
//! where a force is applied, so a force `f` at lever `r` contributes the
//! moment `r × f` about the centroid.

use serde::{Deserialize, Serialize};

use crate::math::{inverse, pinv, skew, Mat3, Mat6, MatMN, Transform, Vec3, Vec6, Wrench};

/// Fixed grasp of the object by both end-effectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspGeometry {
    /// `T^L_{e_i}`: end-effector pose in the object frame.
    pub t_obj_to_ee: [Transform; 2],
    /// Lever arms of the two grasp points.
    pub r_arm: [Vec3; 2],
    /// Lever arm of the environment contact point.
    pub r_env: Vec3,
}

impl GraspGeometry {
    /// Builds the geometry with lever arms taken from the grasp transforms.
    pub fn new(t_obj_to_ee: [Transform; 2], r_env: Vec3) -> Self {
        Self {
            r_arm: [t_obj_to_ee[0].translation, t_obj_to_ee[1].translation],
            t_obj_to_ee,
            r_env,
        }
    }

    /// Lever arms agree with the grasp transforms.
    pub fn is_consistent(&self) -> bool {
        (0..2).all(|i| (self.r_arm[i] - self.t_obj_to_ee[i].translation).norm() <= 1e-9)
    }

    /// Same grasp with every lever arm rotated into another frame (typically
    /// object → world with the object's current rotation).
    pub fn expressed_in(&self, rotation: &Mat3) -> Self {
        Self {
            t_obj_to_ee: self.t_obj_to_ee,
            r_arm: [rotation * self.r_arm[0], rotation * self.r_arm[1]],
            r_env: rotation * self.r_env,
        }
    }
}

/// Mass properties of the held object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectInertia {
    pub mass: f64,
    /// Body-frame inertia about the centroid.
    pub inertia: Mat3,
    pub gravity: Vec3,
}

impl ObjectInertia {
    /// Solid box with the given half extents.
    pub fn solid_box(mass: f64, half_extents: Vec3, gravity: Vec3) -> Self {
        let (a, b, c) = (
            2.0 * half_extents.x,
            2.0 * half_extents.y,
            2.0 * half_extents.z,
        );
        let k = mass / 12.0;
        Self {
            mass,
            inertia: Mat3::from_diagonal(&Vec3::new(
                k * (b * b + c * c),
                k * (a * a + c * c),
                k * (a * a + b * b),
            )),
            gravity,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mass > 0.0
            && (self.inertia - self.inertia.transpose()).abs().max() <= 1e-12
            && self.inertia.cholesky().is_some()
    }

    /// Gravity wrench at the centroid, `[m·g; 0]`.
    pub fn gravity_wrench(&self) -> Wrench {
        Wrench::from_force(self.gravity * self.mass)
    }

    /// Inertia about the centroid expressed in the world frame.
    pub fn world_inertia(&self, rotation: &Mat3) -> Mat3 {
        rotation * self.inertia * rotation.transpose()
    }
}

/// 6×6 map of a contact wrench to the equivalent wrench at the centroid:
/// `[[I, 0], [skew(r), I]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspMatrix(pub Mat6);

impl GraspMatrix {
    pub fn apply(&self, w: &Wrench) -> Wrench {
        Wrench::from_vec6(&(self.0 * w.to_vec6()))
    }

    /// Closed-form inverse `[[I, 0], [-skew(r), I]]`.
    pub fn inverse(&self) -> GraspMatrix {
        let mut m = self.0;
        let lower = -m.fixed_view::<3, 3>(3, 0).into_owned();
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&lower);
        GraspMatrix(m)
    }

    pub fn lever_block(&self) -> Mat3 {
        self.0.fixed_view::<3, 3>(3, 0).into_owned()
    }
}

pub fn grasp_matrix(r: &Vec3) -> GraspMatrix {
    let mut m = Mat6::identity();
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(r));
    GraspMatrix(m)
}

/// End-effector targets in each arm's base frame:
/// `T^{b_i}_{e_i} = (T^W_{b_i})⁻¹ · T^W_L · T^L_{e_i}`.
pub fn ee_targets_from_object(
    t_world_obj: &Transform,
    t_world_base: &[Transform; 2],
    grasp: &GraspGeometry,
) -> [Transform; 2] {
    std::array::from_fn(|i| {
        inverse(&t_world_base[i])
            .compose(t_world_obj)
            .compose(&grasp.t_obj_to_ee[i])
    })
}

/// World-frame end-effector targets, `T^W_L · T^L_{e_i}`.
pub fn ee_world_targets(t_world_obj: &Transform, grasp: &GraspGeometry) -> [Transform; 2] {
    std::array::from_fn(|i| t_world_obj.compose(&grasp.t_obj_to_ee[i]))
}

/// Inertial wrench `[m·v̇; I·ω̇ + ω × (I·ω)]`. `inertia` must already be in
/// the frame of the rates.
pub fn object_inertial_wrench(
    linear_accel: &Vec3,
    angular_accel: &Vec3,
    angular_velocity: &Vec3,
    mass: f64,
    inertia: &Mat3,
) -> Wrench {
    let iw = inertia * angular_velocity;
    Wrench::new(
        linear_accel * mass,
        inertia * angular_accel + angular_velocity.cross(&iw),
    )
}

/// Minimum-norm end-effector wrenches `(F₁, F₂)` satisfying the object
/// balance `Γ₁F₁ + Γ₂F₂ + Ḡ + Γ_L·F_env = F_IL`. All wrenches and lever
/// arms share one frame; end-effector wrenches are expressed at their grasp
/// points.
pub fn decompose_wrench(
    f_il: &Wrench,
    f_env: &Wrench,
    gravity_wrench: &Wrench,
    grasp: &GraspGeometry,
) -> (Wrench, Wrench) {
    let target = required_arm_wrench(f_il, f_env, gravity_wrench, grasp);
    let a = stacked_grasp_matrix(grasp);
    let x = pinv(&a) * nalgebra::DVector::from_column_slice(target.as_slice());
    let f1 = Vec6::from_iterator(x.iter().take(6).cloned());
    let f2 = Vec6::from_iterator(x.iter().skip(6).cloned());
    (Wrench::from_vec6(&f1), Wrench::from_vec6(&f2))
}

/// Right-hand side of the balance: `F_IL − Ḡ − Γ_L·F_env`.
pub fn required_arm_wrench(
    f_il: &Wrench,
    f_env: &Wrench,
    gravity_wrench: &Wrench,
    grasp: &GraspGeometry,
) -> Vec6 {
    let env_at_centroid = grasp_matrix(&grasp.r_env).apply(f_env);
    f_il.to_vec6() - gravity_wrench.to_vec6() - env_at_centroid.to_vec6()
}

/// `[Γ₁ Γ₂]` as a 6×12 matrix.
pub fn stacked_grasp_matrix(grasp: &GraspGeometry) -> MatMN {
    let mut a = MatMN::zeros(6, 12);
    for i in 0..2 {
        let g = grasp_matrix(&grasp.r_arm[i]).0;
        a.view_mut((0, 6 * i), (6, 6)).copy_from(&g);
    }
    a
}

/// Balance residual `‖Γ₁F₁ + Γ₂F₂ − rhs‖∞`.
pub fn balance_residual(
    f1: &Wrench,
    f2: &Wrench,
    f_il: &Wrench,
    f_env: &Wrench,
    gravity_wrench: &Wrench,
    grasp: &GraspGeometry,
) -> f64 {
    let lhs = grasp_matrix(&grasp.r_arm[0]).apply(f1).to_vec6()
        + grasp_matrix(&grasp.r_arm[1]).apply(f2).to_vec6();
    (lhs - required_arm_wrench(f_il, f_env, gravity_wrench, grasp)).amax()
}

/// Equal and opposite squeeze forces along the line joining the grasp
/// points, each pointing from its own grasp point toward the other. They
/// produce no net force or moment on the object.
pub fn internal_forces(grasp: &GraspGeometry, magnitude: f64) -> [Vec3; 2] {
    let d = grasp.r_arm[1] - grasp.r_arm[0];
    let n = d.norm();
    if n == 0.0 {
        return [Vec3::zeros(); 2];
    }
    let dir = d / n;
    [dir * magnitude, -dir * magnitude]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{compose, exp_so3, rot_x};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut impl Rng) -> Transform {
        let w = Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let t = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        Transform::new(exp_so3(&w), t)
    }

    fn symmetric_grasp() -> GraspGeometry {
        GraspGeometry::new(
            [
                Transform::new(rot_x(std::f64::consts::FRAC_PI_2), Vec3::new(0.0, 0.1, 0.0)),
                Transform::new(rot_x(-std::f64::consts::FRAC_PI_2), Vec3::new(0.0, -0.1, 0.0)),
            ],
            Vec3::new(0.18, 0.0, 0.0),
        )
    }

    #[test]
    fn identity_inputs_give_identity_targets() {
        let id = Transform::identity();
        let grasp = GraspGeometry::new([id, id], Vec3::zeros());
        let out = ee_targets_from_object(&id, &[id, id], &grasp);
        assert_eq!(out, [id, id]);
    }

    #[test]
    fn object_translation_moves_both_targets() {
        let id = Transform::identity();
        let grasp = GraspGeometry::new([id, id], Vec3::zeros());
        let obj = Transform::from_translation(Vec3::new(0.0, 0.0, 0.1));
        for t in ee_targets_from_object(&obj, &[id, id], &grasp) {
            assert_eq!(t.translation, Vec3::new(0.0, 0.0, 0.1));
        }
    }

    #[test]
    fn targets_round_trip_to_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let obj = random_transform(&mut rng);
            let bases = [random_transform(&mut rng), random_transform(&mut rng)];
            let grasp = GraspGeometry::new(
                [random_transform(&mut rng), random_transform(&mut rng)],
                Vec3::zeros(),
            );
            let out = ee_targets_from_object(&obj, &bases, &grasp);
            for i in 0..2 {
                let back = compose(
                    &compose(&out[i], &inverse(&grasp.t_obj_to_ee[i])),
                    &inverse(&obj),
                );
                let expected = inverse(&bases[i]);
                assert!((back.rotation - expected.rotation).abs().max() < 1e-12);
                assert!((back.translation - expected.translation).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn grasp_matrix_examples() {
        let g = grasp_matrix(&Vec3::zeros());
        assert_eq!(g.0, Mat6::identity());
        let g = grasp_matrix(&Vec3::new(0.0, 0.1, 0.0));
        let w = g.apply(&Wrench::from_force(Vec3::new(0.0, 0.0, 10.0)));
        assert!((w.force - Vec3::new(0.0, 0.0, 10.0)).norm() < 1e-15);
        assert!((w.moment - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn grasp_matrix_block_inverse() {
        let r = Vec3::new(0.3, -0.2, 0.7);
        let g = grasp_matrix(&r);
        let prod = g.0 * g.inverse().0;
        assert!((prod - Mat6::identity()).abs().max() < 1e-15);
        let gi = g.inverse();
        assert_eq!(gi.lever_block(), -skew(&r));
        assert!(g.0.fixed_view::<3, 3>(0, 3).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inertial_wrench_examples() {
        let z = Vec3::zeros();
        let w = object_inertial_wrench(&z, &z, &z, 2.0, &Mat3::identity());
        assert_eq!(w, Wrench::zero());
        let w = object_inertial_wrench(&Vec3::new(0.0, 0.0, 1.0), &z, &z, 2.0, &Mat3::identity());
        assert_eq!(w.force, Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(w.moment, z);
        let inertia = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0));
        let w = object_inertial_wrench(&z, &z, &Vec3::new(1.0, 1.0, 0.0), 1.0, &inertia);
        assert!((w.moment - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_load_gives_zero_arm_wrenches() {
        let grasp = symmetric_grasp();
        let (f1, f2) = decompose_wrench(&Wrench::zero(), &Wrench::zero(), &Wrench::zero(), &grasp);
        assert!(f1.norm() < 1e-15 && f2.norm() < 1e-15);
    }

    #[test]
    fn symmetric_grasp_splits_gravity() {
        let grasp = symmetric_grasp();
        let inertia = ObjectInertia::solid_box(10.0, Vec3::repeat(0.1), Vec3::new(0.0, 0.0, -9.81));
        let g = inertia.gravity_wrench();
        let (f1, f2) = decompose_wrench(&Wrench::zero(), &Wrench::zero(), &g, &grasp);
        assert!((f1 - f2).norm() < 1e-9);
        assert!((f1.force.z + f2.force.z - 98.1).abs() < 1e-9);
        assert!(balance_residual(&f1, &f2, &Wrench::zero(), &Wrench::zero(), &g, &grasp) < 1e-9);
    }

    #[test]
    fn squeeze_is_internal() {
        let grasp = symmetric_grasp();
        let [f1, f2] = internal_forces(&grasp, 10.0);
        assert!((f1 + f2).norm() < 1e-15);
        let moment = grasp.r_arm[0].cross(&f1) + grasp.r_arm[1].cross(&f2);
        assert!(moment.norm() < 1e-15);
        // Arm 1 sits on +y and pushes toward −y.
        assert!((f1 - Vec3::new(0.0, -10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn box_inertia_is_valid() {
        let i = ObjectInertia::solid_box(2.0, Vec3::new(0.1, 0.05, 0.2), Vec3::zeros());
        assert!(i.is_valid());
        assert!(symmetric_grasp().is_consistent());
    }

    fn arb_wrench() -> impl Strategy<Value = Wrench> {
        prop::array::uniform6(-50.0f64..50.0).prop_map(|a| Wrench::from_vec6(&Vec6::from(a)))
    }

    fn arb_lever() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-0.3f64..0.3).prop_map(Vec3::from)
    }

    proptest! {
        #[test]
        fn decomposition_balances(fil in arb_wrench(), fenv in arb_wrench(), g in arb_wrench(),
                                  r1 in arb_lever(), r2 in arb_lever(), re in arb_lever()) {
            let grasp = GraspGeometry {
                t_obj_to_ee: [Transform::from_translation(r1), Transform::from_translation(r2)],
                r_arm: [r1, r2],
                r_env: re,
            };
            let (f1, f2) = decompose_wrench(&fil, &fenv, &g, &grasp);
            prop_assert!(balance_residual(&f1, &f2, &fil, &fenv, &g, &grasp) <= 1e-9);
        }

        #[test]
        fn decomposition_is_minimum_norm(fil in arb_wrench(), r1 in arb_lever(), r2 in arb_lever(),
                                         z in prop::collection::vec(-1.0f64..1.0, 12)) {
            let grasp = GraspGeometry {
                t_obj_to_ee: [Transform::from_translation(r1), Transform::from_translation(r2)],
                r_arm: [r1, r2],
                r_env: Vec3::zeros(),
            };
            let (f1, f2) = decompose_wrench(&fil, &Wrench::zero(), &Wrench::zero(), &grasp);
            let x = nalgebra::DVector::from_iterator(12, f1.to_vec6().iter().chain(f2.to_vec6().iter()).cloned());
            // Project a random vector onto the null space of [Γ₁ Γ₂].
            let a = stacked_grasp_matrix(&grasp);
            let z = nalgebra::DVector::from_vec(z);
            let null = &z - pinv(&a) * (&a * &z);
            prop_assert!((&a * &null).amax() < 1e-9);
            prop_assert!(x.norm() <= (&x + &null).norm() + 1e-12);
        }
    }
}
