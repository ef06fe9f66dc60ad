use serde::{Deserialize, Serialize};

use super::arm::{default_seeds, ur5_links, ArmModel, JointVec, DOF};
use super::config::SimConfig;
use super::contact::{
    hole_contact, pad_contact, pad_detached, BodyMotion, ContactRecord, HoleFrame, PadGeometry, PadState, PegGeometry,
};
use crate::chain::{GraspGeometry, ObjectInertia};
use crate::error::{LacError, Result};
use crate::math::{exp_so3, log_so3, rot_x, skew, vec_is_finite, Mat3, Transform, Vec3, Wrench};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub pose: Transform,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl ObjectState {
    pub fn at_rest(pose: Transform) -> Self {
        Self {
            pose,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }

    pub fn motion(&self) -> BodyMotion<'_> {
        BodyMotion {
            pose: &self.pose,
            linear_velocity: self.linear_velocity,
            angular_velocity: self.angular_velocity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub q: JointVec,
    pub qd: JointVec,
    /// Last command after rate limiting.
    pub command: Transform,
    /// FK(q).
    pub ee: Transform,
    pub ee_linear_velocity: Vec3,
    pub ee_angular_velocity: Vec3,
    pub ik_failures: u64,
}

impl ArmState {
    fn motion(&self) -> BodyMotion<'_> {
        BodyMotion {
            pose: &self.ee,
            linear_velocity: self.ee_linear_velocity,
            angular_velocity: self.ee_angular_velocity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub object: ObjectState,
    pub arms: [ArmState; 2],
    pub pads: [PadState; 2],
    /// Pad reactions felt by each arm, about the contact point, world frame.
    pub sensed: [Wrench; 2],
    /// Environment wrench on the object about its centroid.
    pub env_wrench: Wrench,
    pub contacts: Vec<ContactRecord>,
    /// Peg tip depth past the hole entry.
    pub depth: f64,
}

/// Object, two kinematic arms, gripper pads and an optional hole.
#[derive(Debug, Clone)]
pub struct World {
    pub cfg: SimConfig,
    pub arms: [ArmModel; 2],
    pub grasp: GraspGeometry,
    pub pads: [PadGeometry; 2],
    pub inertia: ObjectInertia,
    pub peg: PegGeometry,
    pub hole: Option<HoleFrame>,
    pub state: WorldState,
    home: [JointVec; 2],
    pending_offset: [Vec3; 2],
}

/// Object → pad transforms for a grasp on the ±y faces. Pad z points into
/// the object.
pub fn default_grasp(half_width: f64, peg_tip: Vec3) -> GraspGeometry {
    use std::f64::consts::FRAC_PI_2;
    GraspGeometry::new(
        [
            Transform::new(rot_x(FRAC_PI_2), Vec3::new(0.0, half_width, 0.0)),
            Transform::new(rot_x(-FRAC_PI_2), Vec3::new(0.0, -half_width, 0.0)),
        ],
        peg_tip,
    )
}

impl World {
    pub fn new(cfg: SimConfig, with_hole: bool) -> Result<Self> {
        cfg.validate().map_err(LacError::Config)?;
        let o = &cfg.object;
        let half = Vec3::from(o.half_extents);
        let gravity = Vec3::from(cfg.gravity);
        let inertia = ObjectInertia::solid_box(o.mass, half, gravity);
        let grasp = default_grasp(half.y, o.peg_tip());
        let pads = [0, 1].map(|i| {
            let t = grasp.t_obj_to_ee[i];
            PadGeometry {
                point: t.translation,
                normal: -t.rotation.column(2).into_owned(),
            }
        });
        let arms = [0, 1].map(|i| {
            ArmModel::new(
                Transform::from_translation(Vec3::from(cfg.arms.base_positions[i])),
                ur5_links(),
                cfg.arms.tool_length,
            )
        });
        let peg = PegGeometry {
            tip: o.peg_tip(),
            back: -Vec3::x(),
            radius: o.peg_radius,
            length: o.peg_length,
        };
        let hole = with_hole.then(|| HoleFrame::new(&cfg.hole, Vec3::zeros()));
        let nominal = Transform::from_translation(Vec3::from(o.nominal_position));
        let targets = grasp_targets(&nominal, &grasp, 0.0);
        let mut home = [[0.0; DOF]; 2];
        for i in 0..2 {
            home[i] = arms[i]
                .solve_from_seeds(&targets[i], &default_seeds(), &cfg.arms.ik)
                .ok_or_else(|| {
                    let (pe, oe) = (f64::NAN, f64::NAN);
                    LacError::IkNoConverge {
                        arm: i,
                        position_error: pe,
                        orientation_error: oe,
                    }
                })?;
        }
        let arm_state = |q: JointVec, ee: Transform| ArmState {
            q,
            qd: [0.0; DOF],
            command: ee,
            ee,
            ee_linear_velocity: Vec3::zeros(),
            ee_angular_velocity: Vec3::zeros(),
            ik_failures: 0,
        };
        let state = WorldState {
            time: 0.0,
            object: ObjectState::at_rest(nominal),
            arms: [arm_state(home[0], targets[0]), arm_state(home[1], targets[1])],
            pads: [0, 1].map(|i| PadState::anchored(&pads[i], &nominal, &targets[i])),
            sensed: [Wrench::zero(); 2],
            env_wrench: Wrench::zero(),
            contacts: Vec::new(),
            depth: 0.0,
        };
        let mut world = Self {
            cfg,
            arms,
            grasp,
            pads,
            inertia,
            peg,
            hole,
            state,
            home,
            pending_offset: [Vec3::zeros(); 2],
        };
        world.reset(nominal, Vec3::zeros())?;
        Ok(world)
    }

    /// Places the object at rest with both pads pressed to the preload force.
    pub fn reset(&mut self, object_pose: Transform, hole_offset: Vec3) -> Result<()> {
        if self.hole.is_some() {
            self.hole = Some(HoleFrame::new(&self.cfg.hole, hole_offset));
        }
        let squeeze = self.cfg.pads.preload / self.cfg.pads.stiffness;
        let targets = grasp_targets(&object_pose, &self.grasp, squeeze);
        for i in 0..2 {
            let arm = &self.arms[i];
            let q = arm
                .solve_ik(&targets[i], &self.home[i], &self.cfg.arms.ik)
                .ok()
                .or_else(|| arm.solve_from_seeds(&targets[i], &default_seeds(), &self.cfg.arms.ik))
                .ok_or(LacError::IkNoConverge {
                    arm: i,
                    position_error: f64::NAN,
                    orientation_error: f64::NAN,
                })?;
            let ee = arm.fk(&q);
            self.state.arms[i] = ArmState {
                q,
                qd: [0.0; DOF],
                command: ee,
                ee,
                ee_linear_velocity: Vec3::zeros(),
                ee_angular_velocity: Vec3::zeros(),
                ik_failures: 0,
            };
            self.state.pads[i] = PadState::anchored(&self.pads[i], &object_pose, &ee);
            self.state.pads[i].normal_force = self.cfg.pads.preload;
        }
        self.state.object = ObjectState::at_rest(object_pose);
        self.state.time = 0.0;
        self.state.sensed = [0, 1].map(|i| {
            let n = self.state.object.pose.rotation * self.pads[i].normal;
            Wrench::from_force(n * self.cfg.pads.preload)
        });
        self.state.env_wrench = Wrench::zero();
        self.state.contacts.clear();
        self.state.depth = self.hole.map_or(0.0, |h| {
            let tip = object_pose.transform_point(&self.peg.tip);
            h.coordinates(&tip).0.max(0.0)
        });
        self.pending_offset = [Vec3::zeros(); 2];
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    /// Shifts the next servo target of `arm` as if `force` pushed on it for
    /// one inner step.
    pub fn push_end_effector(&mut self, arm: usize, force: Vec3) {
        self.pending_offset[arm] += force / self.cfg.arms.servo_stiffness;
    }

    /// One inner step: servo the arms, resolve contacts, integrate the object.
    pub fn step(&mut self, commands: &[Transform; 2]) -> Result<()> {
        let dt = self.cfg.dt;
        for i in 0..2 {
            self.servo_arm(i, &commands[i], dt);
        }

        let obj = self.state.object;
        let mut total = self.inertia.gravity_wrench();
        self.state.contacts.clear();
        for i in 0..2 {
            let arm_motion = self.state.arms[i].motion();
            let c = pad_contact(
                &self.cfg.pads,
                i,
                &self.pads[i],
                &mut self.state.pads[i],
                &obj.motion(),
                &arm_motion,
            );
            total = total + c.on_object;
            self.state.sensed[i] = c.sensed;
            self.state.contacts.push(c.record);
        }
        self.state.env_wrench = Wrench::zero();
        if let Some(hole) = &self.hole {
            let hc = hole_contact(&self.cfg.hole, hole, &self.peg, &obj.motion());
            total = total + hc.on_object;
            self.state.env_wrench = hc.on_object;
            self.state.contacts.extend(hc.records);
            self.state.depth = hc.depth;
        }

        integrate_object(&mut self.state.object, &self.inertia, &total, dt);
        self.state.time += dt;
        self.check_finite()?;

        for i in 0..2 {
            let detached = pad_detached(&self.cfg.pads, &mut self.state.pads[i]);
            let slip = (self.state.pads[i].anchor - self.pads[i].point).norm();
            if detached || slip > self.cfg.pads.max_slip {
                return Err(LacError::GraspLost {
                    arm: i,
                    time: self.state.time,
                });
            }
        }
        Ok(())
    }

    fn servo_arm(&mut self, i: usize, command: &Transform, dt: f64) {
        let arm = &self.arms[i];
        let st = &mut self.state.arms[i];
        let cur = st.ee;
        let lin_max = self.cfg.arms.max_linear_rate * dt;
        let mut dp = command.translation - cur.translation;
        for k in 0..3 {
            dp[k] = dp[k].clamp(-lin_max, lin_max);
        }
        let mut dr = log_so3(&(command.rotation * cur.rotation.transpose()));
        let ang_max = self.cfg.arms.max_angular_rate * dt;
        if dr.norm() > ang_max {
            dr *= ang_max / dr.norm();
        }
        let limited = Transform::new(exp_so3(&dr) * cur.rotation, cur.translation + dp);
        st.command = limited;
        let mut target = limited;
        target.translation += std::mem::take(&mut self.pending_offset[i]);

        let q_prev = st.q;
        match arm.solve_ik(&target, &st.q, &self.cfg.arms.ik) {
            Ok(q) => st.q = q,
            Err(f) => {
                st.ik_failures += 1;
                // Accept a near miss; otherwise hold the last valid pose.
                if f.position_error < 1e-4 && f.orientation_error < 1e-3 {
                    st.q = f.best;
                }
            }
        }
        let ee = arm.fk(&st.q);
        for k in 0..DOF {
            st.qd[k] = (st.q[k] - q_prev[k]) / dt;
        }
        st.ee_linear_velocity = (ee.translation - cur.translation) / dt;
        st.ee_angular_velocity = log_so3(&(ee.rotation * cur.rotation.transpose())) / dt;
        st.ee = ee;
    }

    fn check_finite(&self) -> Result<()> {
        let o = &self.state.object;
        let ok = vec_is_finite(&o.pose.translation)
            && o.pose.rotation.iter().all(|v| v.is_finite())
            && vec_is_finite(&o.linear_velocity)
            && vec_is_finite(&o.angular_velocity)
            && o.pose.translation.norm() < 1e3
            && o.linear_velocity.norm() < 1e3;
        if ok {
            Ok(())
        } else {
            Err(LacError::NonFiniteState {
                time: self.state.time,
                what: "object state".into(),
            })
        }
    }

    /// Current pad positions as seen from the object: how far the chain has
    /// drifted from the rigid grasp, m.
    pub fn chain_residual(&self) -> f64 {
        (0..2)
            .map(|i| {
                let expected = self.state.object.pose.transform_point(&self.grasp.t_obj_to_ee[i].translation);
                let n = self.state.object.pose.rotation * self.pads[i].normal;
                let d = self.state.arms[i].ee.translation - expected;
                // Normal squeeze is intended; only tangential drift counts.
                (d - n * d.dot(&n)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Midpoint of the two pad surfaces.
    pub fn ee_midpoint(&self) -> Vec3 {
        (self.state.arms[0].ee.translation + self.state.arms[1].ee.translation) / 2.0
    }

    pub fn peg_tip(&self) -> Vec3 {
        self.state.object.pose.transform_point(&self.peg.tip)
    }
}

/// World pad targets for an object pose, pressed `squeeze` metres into the
/// faces.
pub fn grasp_targets(object: &Transform, grasp: &GraspGeometry, squeeze: f64) -> [Transform; 2] {
    [0, 1].map(|i| {
        let t = object.compose(&grasp.t_obj_to_ee[i]);
        let z = t.rotation.column(2).into_owned();
        Transform::new(t.rotation, t.translation + z * squeeze)
    })
}

/// Semi-implicit Euler with an implicit gyroscopic term so that torque-free
/// tumbling does not gain energy.
pub fn integrate_object(obj: &mut ObjectState, inertia: &ObjectInertia, wrench: &Wrench, dt: f64) {
    obj.linear_velocity += wrench.force * (dt / inertia.mass);
    let r = obj.pose.rotation;
    let i_body = inertia.inertia;
    let i_world = r * i_body * r.transpose();
    let w = obj.angular_velocity + i_world.try_inverse().unwrap_or_else(Mat3::zeros) * wrench.moment * dt;
    let wb0 = r.transpose() * w;
    let iw = i_body * wb0;
    let f = wb0.cross(&iw) * dt;
    let jac = i_body + (skew(&wb0) * i_body - skew(&iw)) * dt;
    let wb = match jac.try_inverse() {
        Some(j) => wb0 - j * f,
        None => wb0,
    };
    obj.angular_velocity = r * wb;

    obj.pose.translation += obj.linear_velocity * dt;
    obj.pose.rotation = exp_so3(&(obj.angular_velocity * dt)) * r;
    obj.pose = obj.pose.renormalized();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_object(gravity: [f64; 3]) -> (ObjectState, ObjectInertia) {
        let inertia = ObjectInertia::solid_box(2.0, Vec3::new(0.1, 0.1, 0.1), Vec3::from(gravity));
        (ObjectState::at_rest(Transform::identity()), inertia)
    }

    #[test]
    fn newton_first_law() {
        let (mut o, inertia) = free_object([0.0; 3]);
        o.linear_velocity = Vec3::x();
        for _ in 0..1000 {
            integrate_object(&mut o, &inertia, &Wrench::zero(), 0.001);
        }
        assert!((o.pose.translation - Vec3::x()).norm() < 1e-9);
    }

    #[test]
    fn free_fall_velocity() {
        let (mut o, inertia) = free_object([0.0, 0.0, -9.81]);
        for _ in 0..1000 {
            integrate_object(&mut o, &inertia, &inertia.gravity_wrench(), 0.001);
        }
        assert!((o.linear_velocity.z + 9.81).abs() < 1e-6);
    }

    #[test]
    fn tumbling_does_not_gain_energy() {
        let inertia = ObjectInertia::solid_box(2.0, Vec3::new(0.1, 0.05, 0.2), Vec3::zeros());
        let mut o = ObjectState::at_rest(Transform::identity());
        o.angular_velocity = Vec3::new(3.0, 0.2, -1.0);
        let energy = |o: &ObjectState| {
            let iw = o.pose.rotation * inertia.inertia * o.pose.rotation.transpose();
            0.5 * o.angular_velocity.dot(&(iw * o.angular_velocity))
        };
        let mut e = energy(&o);
        for _ in 0..5000 {
            integrate_object(&mut o, &inertia, &Wrench::zero(), 0.002);
            let e2 = energy(&o);
            assert!(e2 <= e * (1.0 + 1e-12));
            e = e2;
        }
    }

    #[test]
    fn nominal_world_builds_and_holds() {
        let mut w = World::new(SimConfig::default(), false).unwrap();
        let cmds = [w.state.arms[0].ee, w.state.arms[1].ee];
        for _ in 0..500 {
            w.step(&cmds).unwrap();
        }
        // Slips under gravity by the stick-spring sag only.
        let drop = w.cfg.object.nominal_position[2] - w.state.object.pose.translation.z;
        assert!(drop > 0.0 && drop < 1e-3, "drop {drop}");
        for i in 0..2 {
            assert!((w.arms[i].fk(&w.state.arms[i].q).translation - w.state.arms[i].ee.translation).norm() < 1e-9);
        }
    }
}
