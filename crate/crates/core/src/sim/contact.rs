//! Penalty contacts: the two gripper pads and the peg/hole pair.

use serde::{Deserialize, Serialize};

use super::config::{HoleConfig, PadConfig};
use crate::math::{exp_so3, log_so3, Mat3, Transform, Vec3, Wrench};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactKind {
    Pad(usize),
    Hole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub kind: ContactKind,
    pub point: Vec3,
    /// Unit normal pointing into the object.
    pub normal: Vec3,
    pub normal_force: f64,
    pub penetration: f64,
    /// Wrench this contact exerts on the object, about its centroid.
    pub wrench_on_object: Wrench,
}

/// Rigid-body kinematics needed to evaluate point velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyMotion<'a> {
    pub pose: &'a Transform,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl BodyMotion<'_> {
    pub fn point_velocity(&self, p: &Vec3) -> Vec3 {
        self.linear_velocity + self.angular_velocity.cross(&(p - self.pose.translation))
    }
}

/// Where a pad touches the object, in the object frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadGeometry {
    pub point: Vec3,
    /// Outward face normal.
    pub normal: Vec3,
}

/// Stick-slip memory of one pad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadState {
    /// Stick anchor on the object face, object frame.
    pub anchor: Vec3,
    /// Pad orientation relative to the object when sticking began.
    pub rotation_ref: Mat3,
    pub detached_steps: usize,
    pub normal_force: f64,
}

impl PadState {
    pub fn anchored(geom: &PadGeometry, object: &Transform, pad: &Transform) -> Self {
        Self {
            anchor: geom.point,
            rotation_ref: object.rotation.transpose() * pad.rotation,
            detached_steps: 0,
            normal_force: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadContact {
    /// Wrench on the object about its centroid.
    pub on_object: Wrench,
    /// Wrench sensed at the pad: reaction on the arm, about the contact point.
    pub sensed: Wrench,
    pub record: ContactRecord,
}

/// One pad against its object face: spring-damper normal force, stick spring
/// tangentially and torsionally, both capped by Coulomb friction.
pub fn pad_contact(
    cfg: &PadConfig,
    index: usize,
    geom: &PadGeometry,
    state: &mut PadState,
    object: &BodyMotion,
    pad: &BodyMotion,
) -> PadContact {
    let r = object.pose.rotation;
    let n_obj = geom.normal;
    let n_w = r * n_obj;
    let q_obj = object.pose.inverse().transform_point(&pad.pose.translation);
    let penetration = n_obj.dot(&(geom.point - q_obj));
    // Surface point under the pad.
    let s_obj = q_obj + n_obj * penetration;
    let s_w = object.pose.transform_point(&s_obj);
    let v_rel = pad.point_velocity(&s_w) - object.point_velocity(&s_w);
    let pen_rate = -n_w.dot(&v_rel);

    let normal = if penetration > 0.0 {
        (cfg.stiffness * penetration + cfg.damping * pen_rate).max(0.0)
    } else {
        0.0
    };

    let mut force = -n_w * normal;
    let mut moment = Vec3::zeros();
    let rel_rot = r.transpose() * pad.pose.rotation;
    if normal > 0.0 {
        let mut slide = s_obj - state.anchor;
        slide -= n_obj * slide.dot(&n_obj);
        let v_t = v_rel - n_w * v_rel.dot(&n_w);
        let spring = r * slide * cfg.tangential_stiffness;
        let mut ft = spring + v_t * cfg.tangential_damping;
        let cap = cfg.friction * normal;
        let ft_norm = ft.norm();
        if ft_norm > cap {
            ft *= cap / ft_norm;
            let sn = slide.norm();
            if sn > 0.0 {
                state.anchor = s_obj - slide * (cap / cfg.tangential_stiffness / sn).min(1.0);
            }
        }
        force += ft;

        let twist = log_so3(&(rel_rot * state.rotation_ref.transpose()));
        let w_rel = r.transpose() * (pad.angular_velocity - object.angular_velocity);
        let mut m = twist * cfg.torsional_stiffness + w_rel * cfg.torsional_damping;
        let mcap = cfg.friction * normal * cfg.radius;
        let m_norm = m.norm();
        if m_norm > mcap {
            m *= mcap / m_norm;
            let tn = twist.norm();
            if tn > 0.0 {
                let kept = twist * (mcap / cfg.torsional_stiffness / tn).min(1.0);
                state.rotation_ref = exp_so3(&-kept) * rel_rot;
            }
        }
        moment = r * m;
    } else {
        state.anchor = s_obj;
        state.rotation_ref = rel_rot;
    }
    state.normal_force = normal;

    let applied = Wrench::new(force, moment);
    let on_object = applied.shifted(&(s_w - object.pose.translation));
    PadContact {
        on_object,
        sensed: -applied,
        record: ContactRecord {
            kind: ContactKind::Pad(index),
            point: s_w,
            normal: -n_w,
            normal_force: normal,
            penetration: penetration.max(0.0),
            wrench_on_object: on_object,
        },
    }
}

/// Updates the detach counter; true once the dwell is exceeded.
pub fn pad_detached(cfg: &PadConfig, state: &mut PadState) -> bool {
    if state.normal_force < cfg.detach_threshold {
        state.detached_steps += 1;
    } else {
        state.detached_steps = 0;
    }
    state.detached_steps > cfg.dwell_steps
}

/// Cylindrical peg fixed to the object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PegGeometry {
    /// Tip centre, object frame.
    pub tip: Vec3,
    /// Axis from tip toward the object, object frame.
    pub back: Vec3,
    pub radius: f64,
    pub length: f64,
}

/// Frame of the hole with derived quantities cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleFrame {
    pub center: Vec3,
    pub axis: Vec3,
    pub radius: f64,
    pub depth: f64,
    pub chamfer: f64,
}

impl HoleFrame {
    pub fn new(cfg: &HoleConfig, center_offset: Vec3) -> Self {
        let axis = Vec3::from(cfg.axis).normalize();
        let offset = center_offset - axis * axis.dot(&center_offset);
        Self {
            center: Vec3::from(cfg.center) + offset,
            axis,
            radius: cfg.radius,
            depth: cfg.depth,
            chamfer: cfg.chamfer,
        }
    }

    /// Axial depth and radial vector of a world point.
    pub fn coordinates(&self, p: &Vec3) -> (f64, Vec3) {
        let rel = p - self.center;
        let s = self.axis.dot(&rel);
        (s, rel - self.axis * s)
    }

    /// Penetration depth and outward (peg-pushing) normal of a point inside
    /// the hole block, if any.
    pub fn penetration(&self, p: &Vec3) -> Option<(f64, Vec3)> {
        let (s, rho) = self.coordinates(p);
        if s <= 0.0 {
            return None;
        }
        let r = rho.norm();
        let rhat = if r > 1e-12 { rho / r } else { any_perpendicular(&self.axis) };
        let mouth = self.radius + self.chamfer;
        let open = if s < self.chamfer { mouth - s } else { self.radius };
        if r <= open {
            if s > self.depth {
                return Some((s - self.depth, -self.axis));
            }
            return None;
        }
        let mut best: Option<(f64, Vec3)> = None;
        let mut consider = |d: f64, n: Vec3| {
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, n));
            }
        };
        if r >= mouth {
            consider(s, -self.axis);
        }
        if s >= self.chamfer {
            consider(r - self.radius, -rhat);
        } else if self.chamfer > 0.0 {
            let d = (r + s - mouth) / std::f64::consts::SQRT_2;
            consider(d, (-rhat - self.axis) / std::f64::consts::SQRT_2);
        }
        best
    }
}

fn any_perpendicular(v: &Vec3) -> Vec3 {
    let c = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&c).normalize()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoleContact {
    /// Total environment wrench on the object about its centroid.
    pub on_object: Wrench,
    pub records: Vec<ContactRecord>,
    /// Tip depth past the entry plane (zero before entry).
    pub depth: f64,
}

/// Peg against hole: rim points of the tip plus the shaft at the chamfer end.
pub fn hole_contact(cfg: &HoleConfig, hole: &HoleFrame, peg: &PegGeometry, object: &BodyMotion) -> HoleContact {
    let pose = object.pose;
    let tip = pose.transform_point(&peg.tip);
    let u = -pose.transform_vector(&peg.back);
    let (s_tip, rho_tip) = hole.coordinates(&tip);
    let rim_dir = |rho: &Vec3| {
        let base = if rho.norm() > 1e-12 { rho.normalize() } else { any_perpendicular(&hole.axis) };
        let w = base - u * base.dot(&u);
        if w.norm() > 1e-9 { w.normalize() } else { any_perpendicular(&u) }
    };
    let w = rim_dir(&rho_tip);
    let mut points = vec![tip + w * peg.radius, tip - w * peg.radius];
    let cos = hole.axis.dot(&u);
    if cos > 0.5 {
        let lambda = (s_tip - hole.chamfer) / cos;
        if lambda > 0.0 && lambda <= peg.length {
            let c = tip - u * lambda;
            let (_, rho) = hole.coordinates(&c);
            let we = rim_dir(&rho);
            points.push(c + we * peg.radius);
            points.push(c - we * peg.radius);
        }
    }

    let mut total = Wrench::zero();
    let mut records = Vec::new();
    for p in points {
        let Some((pen, n)) = hole.penetration(&p) else { continue };
        let v = object.point_velocity(&p);
        let pen_rate = -n.dot(&v);
        let normal = (cfg.stiffness * pen + cfg.damping * pen_rate).max(0.0);
        if normal <= 0.0 {
            continue;
        }
        let vt = v - n * v.dot(&n);
        let vt_norm = vt.norm();
        let fric = -vt * (cfg.friction * normal / (vt_norm * vt_norm + cfg.friction_smoothing.powi(2)).sqrt());
        let f = n * normal + fric;
        let w = Wrench::from_force(f).shifted(&(p - pose.translation));
        total = total + w;
        records.push(ContactRecord {
            kind: ContactKind::Hole,
            point: p,
            normal: n,
            normal_force: normal,
            penetration: pen,
            wrench_on_object: w,
        });
    }
    HoleContact {
        on_object: total,
        records,
        depth: s_tip.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rot_x;

    fn still(pose: &Transform) -> BodyMotion<'_> {
        BodyMotion {
            pose,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }

    fn pad_setup(squeeze: f64) -> (PadGeometry, Transform, Transform) {
        let geom = PadGeometry {
            point: Vec3::new(0.0, 0.1, 0.0),
            normal: Vec3::y(),
        };
        let object = Transform::identity();
        let pad = Transform::new(rot_x(std::f64::consts::FRAC_PI_2), Vec3::new(0.0, 0.1 - squeeze, 0.0));
        (geom, object, pad)
    }

    #[test]
    fn pad_normal_force_is_spring() {
        let cfg = PadConfig::default();
        let (geom, obj, pad) = pad_setup(0.0005);
        let mut st = PadState::anchored(&geom, &obj, &pad);
        let c = pad_contact(&cfg, 0, &geom, &mut st, &still(&obj), &still(&pad));
        assert!((c.record.normal_force - 10.0).abs() < 1e-9);
        assert!((c.on_object.force - Vec3::new(0.0, -10.0, 0.0)).norm() < 1e-9);
        // Lever (0, 0.1, 0) parallel to the force: no moment.
        assert!(c.on_object.moment.norm() < 1e-12);
        assert!((c.sensed.force - Vec3::new(0.0, 10.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn pad_separated_gives_nothing() {
        let cfg = PadConfig::default();
        let (geom, obj, pad) = pad_setup(-0.001);
        let mut st = PadState::anchored(&geom, &obj, &pad);
        let c = pad_contact(&cfg, 0, &geom, &mut st, &still(&obj), &still(&pad));
        assert_eq!(c.on_object, Wrench::zero());
        for _ in 0..cfg.dwell_steps {
            assert!(!pad_detached(&cfg, &mut st));
        }
        assert!(pad_detached(&cfg, &mut st));
    }

    #[test]
    fn pad_friction_sticks_then_slips() {
        let cfg = PadConfig::default();
        let (geom, obj, mut pad) = pad_setup(0.0005);
        let mut st = PadState::anchored(&geom, &obj, &pad);
        pad.translation.z += 0.0005;
        let c = pad_contact(&cfg, 0, &geom, &mut st, &still(&obj), &still(&pad));
        // 10 N of stick force stays under μN = 15 N.
        assert!((c.on_object.force.z - 10.0).abs() < 1e-9);
        assert_eq!(st.anchor, geom.point);
        pad.translation.z += 0.01;
        let c = pad_contact(&cfg, 0, &geom, &mut st, &still(&obj), &still(&pad));
        assert!((c.on_object.force.z - 15.0).abs() < 1e-9);
        let slide = (Vec3::new(0.0, 0.1, 0.0105) - st.anchor).z;
        assert!((slide * cfg.tangential_stiffness - 15.0).abs() < 1e-9);
    }

    fn hole() -> (HoleConfig, HoleFrame, PegGeometry) {
        let cfg = HoleConfig {
            radius: 0.016,
            ..Default::default()
        };
        let frame = HoleFrame::new(&cfg, Vec3::zeros());
        let peg = PegGeometry {
            tip: Vec3::new(0.18, 0.0, 0.0),
            back: -Vec3::x(),
            radius: 0.015,
            length: 0.08,
        };
        (cfg, frame, peg)
    }

    #[test]
    fn hole_penetration_regions() {
        let (_, h, _) = hole();
        let c = h.center;
        assert!(h.penetration(&(c - Vec3::x() * 0.01)).is_none());
        assert!(h.penetration(&(c + Vec3::new(0.01, 0.01, 0.0))).is_none());
        let (d, n) = h.penetration(&(c + Vec3::new(0.001, 0.03, 0.0))).unwrap();
        assert!((d - 0.001).abs() < 1e-12 && (n + Vec3::x()).norm() < 1e-12);
        let (d, n) = h.penetration(&(c + Vec3::new(0.02, 0.0165, 0.0))).unwrap();
        assert!((d - 0.0005).abs() < 1e-12 && (n + Vec3::y()).norm() < 1e-12);
        let (d, _) = h.penetration(&(c + Vec3::new(0.06, 0.0, 0.0))).unwrap();
        assert!((d - 0.01).abs() < 1e-12);
        // Chamfer: r + s = 0.0185 + 0.002 exceeds the mouth 0.019 by 1.5 mm.
        let (d, n) = h.penetration(&(c + Vec3::new(0.002, 0.0, 0.0185))).unwrap();
        assert!((d - 0.0015 / 2f64.sqrt()).abs() < 1e-12);
        assert!(n.z < 0.0 && n.x < 0.0);
    }

    #[test]
    fn aligned_peg_slides_in_freely() {
        let (cfg, h, peg) = hole();
        let pose = Transform::from_translation(h.center + Vec3::new(-0.18 + 0.02, 0.0, 0.0));
        let c = hole_contact(&cfg, &h, &peg, &still(&pose));
        assert!(c.records.is_empty());
        assert!((c.depth - 0.02).abs() < 1e-12);
    }

    #[test]
    fn offset_peg_hits_face() {
        let (cfg, h, peg) = hole();
        let pose = Transform::from_translation(h.center + Vec3::new(-0.18 + 0.001, 0.0, 0.01));
        let c = hole_contact(&cfg, &h, &peg, &still(&pose));
        // Outer rim sits at r = 25 mm, beyond the 19 mm mouth: face contact.
        assert_eq!(c.records.len(), 1);
        assert!((c.on_object.force - Vec3::new(-10.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn lateral_wall_pushes_back() {
        let (cfg, h, peg) = hole();
        let pose = Transform::from_translation(h.center + Vec3::new(-0.18 + 0.02, 0.0015, 0.0));
        let c = hole_contact(&cfg, &h, &peg, &still(&pose));
        assert!(c.on_object.force.y < 0.0);
        assert!(c.on_object.force.x.abs() < 1e-9);
    }
}
