//! Position-based impedance: a discrete mass–spring–damper filter turning a
//! force error into a position adjustment `δX`, applied per translational
//! axis with diagonal `M_d`, `B_d`, `K_d`.
//!
//! The filter is the bilinear (Tustin) discretization of
//! `M·δẍ + B·δẋ + K·δx = E`:
//!
//! ```text
//! δX(t) = T²/ω₁ · (E(t) + 2E(t−1) + E(t−2)) − ω₂/ω₁ · δX(t−1) − ω₃/ω₁ · δX(t−2)
//! ω₁ = 4M + 2BT + KT²,  ω₂ = −8M + 2KT²,  ω₃ = 4M − 2BT + KT²
//! ```
//!
//! Two instantiations share it: the outer loop compliantly shifts the object
//! target away from environment contact, and the inner loop shifts each
//! end-effector target to track its desired grasp force.

use serde::{Deserialize, Serialize};

use crate::math::Vec3;

/// Diagonal impedance parameters per translational axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceParams {
    /// Desired inertia, kg.
    pub m_d: Vec3,
    /// Desired damping, N·s/m.
    pub b_d: Vec3,
    /// Desired stiffness, N/m.
    pub k_d: Vec3,
}

impl ImpedanceParams {
    pub fn new(m_d: Vec3, b_d: Vec3, k_d: Vec3) -> Self {
        Self { m_d, b_d, k_d }
    }

    pub fn uniform(m: f64, b: f64, k: f64) -> Self {
        Self::new(Vec3::repeat(m), Vec3::repeat(b), Vec3::repeat(k))
    }

    pub fn is_positive(&self) -> bool {
        self.m_d
            .iter()
            .chain(self.b_d.iter())
            .chain(self.k_d.iter())
            .all(|&x| x > 0.0 && x.is_finite())
    }

    /// Damping and stiffness projected into `bounds`; inertia untouched.
    pub fn clamped(&self, bounds: &ImpedanceBounds) -> Self {
        let mut out = *self;
        for i in 0..3 {
            out.b_d[i] = out.b_d[i].clamp(bounds.min[i], bounds.max[i]);
            out.k_d[i] = out.k_d[i].clamp(bounds.min[3 + i], bounds.max[3 + i]);
        }
        out
    }
}

/// Box on the adjustable half of the parameters, ordered
/// `[B_x, B_y, B_z, K_x, K_y, K_z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceBounds {
    pub min: [f64; 6],
    pub max: [f64; 6],
}

impl Default for ImpedanceBounds {
    fn default() -> Self {
        Self {
            min: [5.0, 5.0, 5.0, 50.0, 50.0, 50.0],
            max: [200.0, 200.0, 200.0, 2000.0, 2000.0, 2000.0],
        }
    }
}

impl ImpedanceBounds {
    pub fn validate(&self) -> Result<(), String> {
        for i in 0..6 {
            if !(self.min[i] > 0.0 && self.min[i] < self.max[i] && self.max[i].is_finite()) {
                return Err(format!(
                    "impedance bound {i}: need 0 < min < max, got [{}, {}]",
                    self.min[i], self.max[i]
                ));
            }
        }
        Ok(())
    }

    pub fn midpoint(&self, m_d: f64) -> ImpedanceParams {
        clamp_params(&[0.0; 6], self, m_d)
    }
}

/// Maps a raw action in `[−1, 1]⁶` affinely onto `[min, max]` for
/// `(B_d, K_d)`. Inertia is held at `m_d` on every axis.
pub fn clamp_params(raw: &[f64; 6], bounds: &ImpedanceBounds, m_d: f64) -> ImpedanceParams {
    let mut v = [0.0; 6];
    for i in 0..6 {
        let u = if raw[i].is_nan() { 0.0 } else { raw[i].clamp(-1.0, 1.0) };
        v[i] = bounds.min[i] + 0.5 * (u + 1.0) * (bounds.max[i] - bounds.min[i]);
    }
    ImpedanceParams::new(
        Vec3::repeat(m_d),
        Vec3::new(v[0], v[1], v[2]),
        Vec3::new(v[3], v[4], v[5]),
    )
}

/// Per-axis `(ω₁, ω₂, ω₃)`.
pub fn filter_weights(p: &ImpedanceParams, t_s: f64) -> (Vec3, Vec3, Vec3) {
    let t2 = t_s * t_s;
    let w1 = Vec3::from_fn(|i, _| 4.0 * p.m_d[i] + 2.0 * p.b_d[i] * t_s + p.k_d[i] * t2);
    let w2 = Vec3::from_fn(|i, _| -8.0 * p.m_d[i] + 2.0 * p.k_d[i] * t2);
    let w3 = Vec3::from_fn(|i, _| 4.0 * p.m_d[i] - 2.0 * p.b_d[i] * t_s + p.k_d[i] * t2);
    (w1, w2, w3)
}

/// History of one impedance loop. Single owner; reset between episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceFilter {
    /// `E(t−1)`, `E(t−2)`.
    e_hist: [Vec3; 2],
    /// `δX(t−1)`, `δX(t−2)`.
    dx_hist: [Vec3; 2],
    period: f64,
}

impl ImpedanceFilter {
    pub fn new(period: f64) -> Self {
        assert!(period > 0.0, "impedance sampling period must be positive");
        Self {
            e_hist: [Vec3::zeros(); 2],
            dx_hist: [Vec3::zeros(); 2],
            period,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn reset(&mut self) {
        self.e_hist = [Vec3::zeros(); 2];
        self.dx_hist = [Vec3::zeros(); 2];
    }

    /// Fills the history with a steady state: constant error `e` and the
    /// matching adjustment `dx`.
    pub fn prime(&mut self, dx: Vec3, e: Vec3) {
        self.e_hist = [e, e];
        self.dx_hist = [dx, dx];
    }

    /// Latest adjustment `δX(t−1)`.
    pub fn last_adjustment(&self) -> Vec3 {
        self.dx_hist[0]
    }

    /// Advances the filter by one sample and returns `δX(t)`. New parameters
    /// take effect immediately; histories are kept.
    pub fn step(&mut self, p: &ImpedanceParams, e_now: &Vec3) -> Vec3 {
        let (w1, w2, w3) = filter_weights(p, self.period);
        let t2 = self.period * self.period;
        let [e1, e2] = self.e_hist;
        let [d1, d2] = self.dx_hist;
        let dx = Vec3::from_fn(|i, _| {
            t2 / w1[i] * (e_now[i] + 2.0 * e1[i] + e2[i])
                - w2[i] / w1[i] * d1[i]
                - w3[i] / w1[i] * d2[i]
        });
        self.e_hist = [*e_now, e1];
        self.dx_hist = [dx, d1];
        dx
    }
}

/// Free function form of [`ImpedanceFilter::step`].
pub fn impedance_step(state: &mut ImpedanceFilter, p: &ImpedanceParams, e_now: &Vec3) -> Vec3 {
    state.step(p, e_now)
}

/// Outer (object–environment) loop: `X_o = X_d^o + δX(F_env)`. A positive
/// environment force along an axis shifts the object target along that axis,
/// i.e. away from the surface pushing on it.
pub fn apply_outer(
    x_d_obj: &Vec3,
    f_env: &Vec3,
    state: &mut ImpedanceFilter,
    p: &ImpedanceParams,
) -> Vec3 {
    x_d_obj + state.step(p, f_env)
}

/// Inner (arm–object) loop: `X_i = X_d^i + δX(F_d^i − F_i)`, forces being
/// those the end-effector applies to the object. A force deficit moves the
/// end-effector along the desired force, pressing harder into the object.
pub fn apply_inner(
    x_d_arm: &Vec3,
    f_err: &Vec3,
    state: &mut ImpedanceFilter,
    p: &ImpedanceParams,
) -> Vec3 {
    x_d_arm + state.step(p, f_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weights_examples() {
        let p = ImpedanceParams::uniform(1.0, 20.0, 100.0);
        let (w1, w2, w3) = filter_weights(&p, 0.01);
        assert!((w1.x - 4.41).abs() < 1e-12);
        assert!((w2.x + 7.98).abs() < 1e-12);
        assert!((w3.x - 3.61).abs() < 1e-12);
        let p = ImpedanceParams::new(Vec3::repeat(1.0), Vec3::zeros(), Vec3::zeros());
        let (w1, w2, w3) = filter_weights(&p, 0.01);
        assert_eq!((w1.x, w2.x, w3.x), (4.0, -8.0, 4.0));
    }

    #[test]
    fn zero_error_zero_adjustment() {
        let mut f = ImpedanceFilter::new(0.002);
        let p = ImpedanceParams::uniform(1.0, 50.0, 500.0);
        for _ in 0..10 {
            assert_eq!(f.step(&p, &Vec3::zeros()), Vec3::zeros());
        }
    }

    #[test]
    fn constant_error_settles_at_e_over_k() {
        let mut f = ImpedanceFilter::new(0.001);
        let p = ImpedanceParams::uniform(1.0, 20.0, 100.0);
        let mut dx = Vec3::zeros();
        for _ in 0..20_000 {
            dx = f.step(&p, &Vec3::new(10.0, 0.0, 0.0));
        }
        assert!((dx.x - 0.1).abs() < 1e-9, "{}", dx.x);
        assert_eq!(dx.y, 0.0);
    }

    #[test]
    fn outer_loop_examples() {
        let p = ImpedanceParams::uniform(1.0, 100.0, 500.0);
        let mut f = ImpedanceFilter::new(0.002);
        let xd = Vec3::new(0.4, 0.0, 0.3);
        assert_eq!(apply_outer(&xd, &Vec3::zeros(), &mut f, &p), xd);
        let mut xo = xd;
        for _ in 0..10_000 {
            xo = apply_outer(&xd, &Vec3::new(5.0, 0.0, 0.0), &mut f, &p);
        }
        assert!((xo - xd - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-9);
        let mut f = ImpedanceFilter::new(0.002);
        let first = apply_outer(&xd, &Vec3::new(1.0, 0.0, 0.0), &mut f, &p) - xd;
        assert!(first.x > 0.0);
    }

    #[test]
    fn inner_loop_examples() {
        let p = ImpedanceParams::uniform(1.0, 150.0, 1000.0);
        let xd = Vec3::new(0.4, 0.1, 0.3);
        let mut a = ImpedanceFilter::new(0.002);
        let mut b = ImpedanceFilter::new(0.002);
        assert_eq!(apply_inner(&xd, &Vec3::zeros(), &mut a, &p), xd);
        let mut x = xd;
        for _ in 0..10_000 {
            // Desired push of 10 N along −y, nothing measured yet.
            let e = Vec3::new(0.0, -10.0, 0.0);
            x = apply_inner(&xd, &e, &mut a, &p);
            assert_eq!(x, apply_inner(&xd, &e, &mut b, &p));
        }
        assert!((x - xd - Vec3::new(0.0, -0.01, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn clamp_examples() {
        let bounds = ImpedanceBounds::default();
        let lo = clamp_params(&[-1.0; 6], &bounds, 1.0);
        assert_eq!(lo.b_d, Vec3::repeat(5.0));
        assert_eq!(lo.k_d, Vec3::repeat(50.0));
        let hi = clamp_params(&[1.0; 6], &bounds, 1.0);
        assert_eq!(hi.b_d, Vec3::repeat(200.0));
        assert_eq!(hi.k_d, Vec3::repeat(2000.0));
        let mid = clamp_params(&[0.0; 6], &bounds, 1.0);
        assert_eq!(mid.b_d, Vec3::repeat(102.5));
        assert_eq!(mid.k_d, Vec3::repeat(1025.0));
        assert_eq!(mid.m_d, Vec3::repeat(1.0));
        // Out-of-range raw values saturate.
        assert_eq!(clamp_params(&[7.0; 6], &bounds, 1.0), hi);
    }

    #[test]
    fn reset_clears_history() {
        let p = ImpedanceParams::uniform(1.0, 20.0, 100.0);
        let mut f = ImpedanceFilter::new(0.002);
        f.step(&p, &Vec3::repeat(3.0));
        f.reset();
        assert_eq!(f, ImpedanceFilter::new(0.002));
    }

    proptest! {
        #[test]
        fn weights_sum_identity(m in 0.1f64..10.0, b in 0.0f64..500.0, k in 0.0f64..5000.0, t in 1e-4f64..0.05) {
            let p = ImpedanceParams::uniform(m, b, k);
            let (w1, w2, w3) = filter_weights(&p, t);
            let s = w1.x + w2.x + w3.x;
            prop_assert!((s - 4.0 * k * t * t).abs() <= 1e-12 * (1.0 + 4.0 * m));
        }

        #[test]
        fn clamping_is_idempotent(raw in prop::array::uniform6(-3.0f64..3.0),
                                  b in prop::array::uniform3(0.0f64..400.0),
                                  k in prop::array::uniform3(0.0f64..4000.0)) {
            let bounds = ImpedanceBounds::default();
            let p = clamp_params(&raw, &bounds, 1.0);
            prop_assert_eq!(p.clamped(&bounds), p);
            let q = ImpedanceParams::new(Vec3::repeat(1.0), Vec3::from(b), Vec3::from(k));
            prop_assert_eq!(q.clamped(&bounds).clamped(&bounds), q.clamped(&bounds));
        }

        #[test]
        fn free_response_decays(raw in prop::array::uniform6(-1.0f64..1.0), kick in -20.0f64..20.0) {
            let bounds = ImpedanceBounds::default();
            let p = clamp_params(&raw, &bounds, 1.0);
            let mut f = ImpedanceFilter::new(0.001);
            for _ in 0..200 {
                f.step(&p, &Vec3::repeat(kick));
            }
            let start = f.last_adjustment().norm();
            let mut dx = Vec3::zeros();
            for _ in 0..60_000 {
                dx = f.step(&p, &Vec3::zeros());
            }
            prop_assert!(dx.norm() <= 1e-3 * start.max(1e-12) + 1e-12);
        }
    }
}
