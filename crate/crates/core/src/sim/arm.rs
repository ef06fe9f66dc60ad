//! Six-joint serial arm: standard DH forward kinematics, geometric Jacobian
//! and damped least-squares inverse kinematics.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::math::{log_so3, rot_x, rot_z, Mat3, Transform, Vec3};

pub const DOF: usize = 6;
pub type JointVec = [f64; DOF];

/// One standard DH row: `Rz(θ + offset) · Tz(d) · Tx(a) · Rx(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhLink {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub offset: f64,
}

impl DhLink {
    fn transform(&self, q: f64) -> Transform {
        Transform::new(
            rot_z(q + self.offset) * rot_x(self.alpha),
            rot_z(q + self.offset) * Vec3::new(self.a, 0.0, self.d),
        )
    }
}

/// UR5-like geometry: ~0.85 m reach with a spherical-ish wrist.
pub fn ur5_links() -> [DhLink; DOF] {
    use std::f64::consts::FRAC_PI_2;
    [
        DhLink { a: 0.0, alpha: FRAC_PI_2, d: 0.089159, offset: 0.0 },
        DhLink { a: -0.425, alpha: 0.0, d: 0.0, offset: 0.0 },
        DhLink { a: -0.39225, alpha: 0.0, d: 0.0, offset: 0.0 },
        DhLink { a: 0.0, alpha: FRAC_PI_2, d: 0.10915, offset: 0.0 },
        DhLink { a: 0.0, alpha: -FRAC_PI_2, d: 0.09465, offset: 0.0 },
        DhLink { a: 0.0, alpha: 0.0, d: 0.0823, offset: 0.0 },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IkConfig {
    pub max_iterations: usize,
    /// DLS damping λ.
    pub damping: f64,
    pub position_tol: f64,
    pub orientation_tol: f64,
    /// Largest joint step per iteration, rad.
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            damping: 1e-3,
            position_tol: 1e-7,
            orientation_tol: 1e-6,
            max_step: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkFailure {
    pub best: JointVec,
    pub position_error: f64,
    pub orientation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    /// Base pose in the world.
    pub base: Transform,
    pub links: [DhLink; DOF],
    /// Flange → pad surface.
    pub tool: Transform,
    pub joint_min: JointVec,
    pub joint_max: JointVec,
}

impl ArmModel {
    pub fn new(base: Transform, links: [DhLink; DOF], tool_length: f64) -> Self {
        Self {
            base,
            links,
            tool: Transform::from_translation(Vec3::new(0.0, 0.0, tool_length)),
            joint_min: [-2.0 * std::f64::consts::PI; DOF],
            joint_max: [2.0 * std::f64::consts::PI; DOF],
        }
    }

    /// Upper bound on the distance from the base origin to the tool point.
    pub fn reach(&self) -> f64 {
        self.links.iter().map(|l| l.a.abs() + l.d.abs()).sum::<f64>() + self.tool.translation.norm()
    }

    /// World pose of the tool frame.
    pub fn fk(&self, q: &JointVec) -> Transform {
        let mut t = self.base;
        for (link, &qi) in self.links.iter().zip(q.iter()) {
            t = t.compose(&link.transform(qi));
        }
        t.compose(&self.tool)
    }

    /// Tool pose plus the geometric Jacobian (rows: linear, angular; world
    /// frame, tool origin).
    pub fn fk_jacobian(&self, q: &JointVec) -> (Transform, Matrix6<f64>) {
        let mut origins = [Vec3::zeros(); DOF];
        let mut axes = [Vec3::zeros(); DOF];
        let mut t = self.base;
        for i in 0..DOF {
            origins[i] = t.translation;
            axes[i] = t.rotation.column(2).into_owned();
            t = t.compose(&self.links[i].transform(q[i]));
        }
        let ee = t.compose(&self.tool);
        let mut j = Matrix6::zeros();
        for i in 0..DOF {
            let lin = axes[i].cross(&(ee.translation - origins[i]));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&axes[i]);
        }
        (ee, j)
    }

    pub fn clamp_joints(&self, q: &mut JointVec) {
        for i in 0..DOF {
            q[i] = q[i].clamp(self.joint_min[i], self.joint_max[i]);
        }
    }

    pub fn within_limits(&self, q: &JointVec) -> bool {
        (0..DOF).all(|i| q[i] >= self.joint_min[i] && q[i] <= self.joint_max[i])
    }

    /// Damped least squares from `q0`. Converges when both position and
    /// orientation residuals are under tolerance.
    pub fn solve_ik(&self, target: &Transform, q0: &JointVec, cfg: &IkConfig) -> Result<JointVec, IkFailure> {
        let mut q = *q0;
        self.clamp_joints(&mut q);
        let fail = |q: JointVec, pe: f64, oe: f64| IkFailure {
            best: q,
            position_error: pe,
            orientation_error: oe,
        };
        if (target.translation - self.base.translation).norm() > self.reach() {
            let ee = self.fk(&q);
            let (pe, oe) = pose_error_norms(&ee, target);
            return Err(fail(q, pe, oe));
        }
        let lambda2 = cfg.damping * cfg.damping;
        let mut last = (f64::INFINITY, f64::INFINITY);
        for _ in 0..=cfg.max_iterations {
            let (ee, j) = self.fk_jacobian(&q);
            let err = pose_error(&ee, target);
            let pe = err.fixed_rows::<3>(0).norm();
            let oe = err.fixed_rows::<3>(3).norm();
            last = (pe, oe);
            if pe <= cfg.position_tol && oe <= cfg.orientation_tol {
                return Ok(q);
            }
            let jjt = j * j.transpose() + Matrix6::identity() * lambda2;
            let Some(y) = jjt.lu().solve(&err) else {
                break;
            };
            let mut dq = j.transpose() * y;
            let step = dq.amax();
            if step > cfg.max_step {
                dq *= cfg.max_step / step;
            }
            for i in 0..DOF {
                q[i] += dq[i];
            }
            self.clamp_joints(&mut q);
        }
        Err(fail(q, last.0, last.1))
    }

    /// Tries each seed in turn and returns the first converged solution.
    pub fn solve_from_seeds(&self, target: &Transform, seeds: &[JointVec], cfg: &IkConfig) -> Option<JointVec> {
        seeds.iter().find_map(|s| self.solve_ik(target, s, cfg).ok())
    }
}

/// Twist-like error `[p_t − p; log(R_t Rᵀ)]` in the world frame.
pub fn pose_error(current: &Transform, target: &Transform) -> Vector6<f64> {
    let dp = target.translation - current.translation;
    let dr = log_so3(&(target.rotation * current.rotation.transpose()));
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

pub fn pose_error_norms(current: &Transform, target: &Transform) -> (f64, f64) {
    let e = pose_error(current, target);
    (e.fixed_rows::<3>(0).norm(), e.fixed_rows::<3>(3).norm())
}

/// Orientation whose z axis is `approach` and whose x axis is as close as
/// possible to `hint`.
pub fn frame_from_approach(approach: &Vec3, hint: &Vec3) -> Mat3 {
    let z = approach.normalize();
    let mut x = hint - z * hint.dot(&z);
    if x.norm() < 1e-9 {
        x = z.cross(&Vec3::x());
        if x.norm() < 1e-9 {
            x = z.cross(&Vec3::y());
        }
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Mat3::from_columns(&[x, y, z])
}

/// Joint-space seeds covering the usual elbow/wrist branches.
pub fn default_seeds() -> Vec<JointVec> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut seeds = Vec::new();
    for &base in &[0.0, FRAC_PI_2, -FRAC_PI_2, PI] {
        for &(shoulder, elbow) in &[(-FRAC_PI_2, FRAC_PI_2), (-PI / 3.0, PI / 2.5), (-2.0 * PI / 3.0, 2.0), (-1.0, -1.5)] {
            for &wrist in &[-FRAC_PI_2, FRAC_PI_2] {
                seeds.push([base, shoulder, elbow, -FRAC_PI_2, wrist, 0.0]);
            }
        }
    }
    seeds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::exp_so3;

    fn arm() -> ArmModel {
        ArmModel::new(Transform::from_translation(Vec3::new(0.0, 0.4, 0.0)), ur5_links(), 0.05)
    }

    fn home() -> JointVec {
        [-1.2, -1.4, 1.6, -1.8, -1.57, 0.3]
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let a = arm();
        let q = home();
        let (ee, j) = a.fk_jacobian(&q);
        let h = 1e-6;
        for i in 0..DOF {
            let mut qp = q;
            qp[i] += h;
            let mut qm = q;
            qm[i] -= h;
            let (tp, tm) = (a.fk(&qp), a.fk(&qm));
            let dp = (tp.translation - tm.translation) / (2.0 * h);
            let dr = log_so3(&(tp.rotation * tm.rotation.transpose())) / (2.0 * h);
            for k in 0..3 {
                assert!((dp[k] - j[(k, i)]).abs() < 1e-6);
                assert!((dr[k] - j[(3 + k, i)]).abs() < 1e-6);
            }
        }
        assert!((a.fk(&q).translation - ee.translation).norm() < 1e-15);
    }

    #[test]
    fn ik_fixed_point() {
        let a = arm();
        let q = home();
        let target = a.fk(&q);
        let sol = a.solve_ik(&target, &q, &IkConfig::default()).unwrap();
        assert_eq!(sol, q);
    }

    #[test]
    fn ik_small_offset() {
        let a = arm();
        let q = home();
        let mut target = a.fk(&q);
        target.translation.x += 0.01;
        let sol = a.solve_ik(&target, &q, &IkConfig::default()).unwrap();
        let fk = a.fk(&sol);
        assert!((fk.translation - target.translation).norm() < 1e-4);
        assert!(log_so3(&(fk.rotation * target.rotation.transpose())).norm() < 1e-3);
        assert!(a.within_limits(&sol));
    }

    #[test]
    fn ik_rotated_target() {
        let a = arm();
        let q = home();
        let mut target = a.fk(&q);
        target.rotation = exp_so3(&Vec3::new(0.05, -0.03, 0.1)) * target.rotation;
        target.translation += Vec3::new(-0.02, 0.01, 0.03);
        let sol = a.solve_ik(&target, &q, &IkConfig::default()).unwrap();
        let (pe, oe) = pose_error_norms(&a.fk(&sol), &target);
        assert!(pe < 1e-7 && oe < 1e-6);
    }

    #[test]
    fn ik_unreachable_fails() {
        let a = arm();
        let target = Transform::from_translation(Vec3::new(2.0, 0.4, 0.0));
        assert!(a.solve_ik(&target, &home(), &IkConfig::default()).is_err());
        // Inside the bounding sphere yet past the real workspace.
        let target = Transform::from_translation(Vec3::new(0.0, 0.4, 0.95));
        let cfg = IkConfig { max_iterations: 100, ..IkConfig::default() };
        let mut t = a.fk(&home());
        t.translation = target.translation;
        assert!(a.solve_ik(&t, &home(), &cfg).is_err());
    }

    #[test]
    fn approach_frame_is_rotation() {
        let r = frame_from_approach(&Vec3::new(0.0, -1.0, 0.0), &Vec3::x());
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((r.column(2) - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((r.column(0) - Vec3::x()).norm() < 1e-12);
    }
}
