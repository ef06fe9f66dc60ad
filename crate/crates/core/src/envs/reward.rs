//! Scalar rewards for the two tasks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HandlingReward {
    pub f_min: f64,
    pub f_max: f64,
    /// Distance scale inside `tanh`, m.
    pub sigma_d: f64,
    /// Force-error scale inside `tanh`, N.
    pub sigma_f: f64,
    pub penalty: f64,
}

impl Default for HandlingReward {
    fn default() -> Self {
        Self {
            f_min: 1.0,
            f_max: 50.0,
            sigma_d: 1.0,
            sigma_f: 1.0,
            penalty: -3.0,
        }
    }
}

impl HandlingReward {
    /// `1 − (tanh(|d|/σ_d) + tanh(F_e/σ_f))/2` while the grasp force stays in
    /// band, the penalty otherwise.
    pub fn reward(&self, distance: f64, force_error: f64, grasp_force: f64) -> f64 {
        if !(grasp_force >= self.f_min && grasp_force <= self.f_max) {
            return self.penalty;
        }
        1.0 - ((distance.abs() / self.sigma_d).tanh() + (force_error.abs() / self.sigma_f).tanh()) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssemblyReward {
    pub f_max: f64,
    pub sigma_d: f64,
    pub sigma_f: f64,
    pub force_weight: f64,
    pub offset: f64,
    pub success_base: f64,
    pub success_bonus: f64,
    pub penalty: f64,
}

impl Default for AssemblyReward {
    fn default() -> Self {
        Self {
            f_max: 20.0,
            sigma_d: 1.0,
            sigma_f: 1.0,
            force_weight: 0.05,
            offset: 1.05,
            success_base: 100.0,
            success_bonus: 100.0,
            penalty: -10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssemblyOutcome {
    InProgress,
    Success,
    Unsafe,
}

impl AssemblyReward {
    /// `remaining` is `max(d_s − depth, 0)`; `t` the zero-based step index
    /// out of `horizon`.
    pub fn reward(&self, outcome: AssemblyOutcome, remaining: f64, env_force: f64, t: usize, horizon: usize) -> f64 {
        match outcome {
            AssemblyOutcome::Unsafe => self.penalty,
            AssemblyOutcome::Success => {
                self.success_base + (1.0 - t as f64 / horizon as f64) * self.success_bonus
            }
            AssemblyOutcome::InProgress => {
                self.offset
                    - (remaining.max(0.0) / self.sigma_d).tanh()
                    - self.force_weight * (env_force.abs() / self.sigma_f).tanh()
            }
        }
    }
}
