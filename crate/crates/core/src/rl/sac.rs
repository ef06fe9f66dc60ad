//! Soft actor-critic with twin critics, polyak targets and automatic
//! temperature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::buffer::Batch;
use super::critic::Critic;
use super::encoder::{EncoderKind, ObsDims};
use super::policy::{normal_noise, Actor};
use super::tensor::{polyak_update, Param, Parameterized, Real};
use crate::error::{LacError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum AlphaMode {
    /// Tuned toward target entropy `−action_dim`, starting at the value given.
    Auto(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub polyak: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub lstm_hidden: usize,
    pub feature_dim: usize,
    pub alpha: AlphaMode,
    pub buffer_capacity: usize,
    /// Uniform random actions before the first update.
    pub warmup_steps: usize,
    pub updates_per_step: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr_actor: 1e-3,
            lr_critic: 5e-4,
            gamma: 0.995,
            polyak: 0.995,
            batch_size: 128,
            hidden: vec![256, 256],
            lstm_hidden: 16,
            feature_dim: 3,
            alpha: AlphaMode::Auto(0.2),
            buffer_capacity: 1_000_000,
            warmup_steps: 1000,
            updates_per_step: 1,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let unit = |v: f64, n: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(format!("agent.{n} must lie in (0, 1), got {v}"))
            }
        };
        unit(self.gamma, "gamma")?;
        unit(self.polyak, "polyak")?;
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return Err("agent learning rates must be positive".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err("agent.batch_size must be positive and fit in the buffer".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("agent.hidden must list positive layer widths".into());
        }
        if self.lstm_hidden == 0 || self.feature_dim == 0 {
            return Err("agent.lstm_hidden and agent.feature_dim must be positive".into());
        }
        match self.alpha {
            AlphaMode::Auto(a) | AlphaMode::Fixed(a) if a >= 0.0 && a.is_finite() => Ok(()),
            _ => Err("agent.alpha must be non-negative".into()),
        }
    }
}

/// Temperature stored as `log α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Temperature<T> {
    pub log_alpha: Param<T>,
}

impl<T: Real> Parameterized<T> for Temperature<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.log_alpha]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.log_alpha]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub q_mean: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent<T: Real> {
    pub cfg: SacConfig,
    pub dims: ObsDims,
    pub action_dim: usize,
    pub actor: Actor<T>,
    pub critics: [Critic<T>; 2],
    pub targets: [Critic<T>; 2],
    pub temperature: Temperature<T>,
    actor_opt: Adam<T>,
    critic_opts: [Adam<T>; 2],
    alpha_opt: Adam<T>,
    pub updates: u64,
}

impl<T: Real> SacAgent<T> {
    pub fn new(cfg: SacConfig, kind: EncoderKind, dims: ObsDims, action_dim: usize, rng: &mut impl Rng) -> Self {
        let actor = Actor::new(kind, dims, action_dim, &cfg.hidden, cfg.lstm_hidden, cfg.feature_dim, rng);
        let critic = |name: &str, rng: &mut _| {
            Critic::new(name, kind, dims, action_dim, &cfg.hidden, cfg.lstm_hidden, cfg.feature_dim, rng)
        };
        let critics = [critic("q1", rng), critic("q2", rng)];
        let mut targets = critics.clone();
        for (t, name) in targets.iter_mut().zip(["q1_targ", "q2_targ"]) {
            for p in t.params_mut() {
                p.name = p.name.replacen(&p.name[..2], name, 1);
            }
        }
        let alpha0 = match cfg.alpha {
            AlphaMode::Auto(a) | AlphaMode::Fixed(a) => a,
        };
        let mut log_alpha = Param::zeros("log_alpha", &[1]);
        log_alpha.value[0] = T::lit(alpha0.max(1e-30).ln());
        let temperature = Temperature { log_alpha };
        Self {
            actor_opt: Adam::new(cfg.lr_actor, &actor),
            critic_opts: [Adam::new(cfg.lr_critic, &critics[0]), Adam::new(cfg.lr_critic, &critics[1])],
            alpha_opt: Adam::new(cfg.lr_actor, &temperature),
            cfg,
            dims,
            action_dim,
            actor,
            critics,
            targets,
            temperature,
            updates: 0,
        }
    }

    pub fn alpha(&self) -> T {
        match self.cfg.alpha {
            AlphaMode::Fixed(a) => T::lit(a),
            AlphaMode::Auto(_) => self.temperature.log_alpha.value[0].exp(),
        }
    }

    pub fn target_entropy(&self) -> T {
        T::lit(-(self.action_dim as f64))
    }

    /// Single-observation action.
    pub fn act(&self, m: &[T], f: &[T], deterministic: bool, rng: &mut impl Rng) -> Result<Vec<T>> {
        self.dims.check(m.len(), f.len())?;
        Ok(if deterministic {
            self.actor.deterministic(m, f, 1)
        } else {
            self.actor.sample(m, f, 1, rng).0
        })
    }

    /// Bootstrapped critic targets `r + γ(1−d)(min Q′(s′,a′) − α log π(a′|s′))`.
    pub fn critic_targets(&self, batch: &Batch<T>, eps_next: &[T]) -> Vec<T> {
        let b = batch.size;
        let next = self.actor.forward(&batch.next_m, &batch.next_f, b, eps_next);
        let a2 = &next.sample.action;
        let (q1, _) = self.targets[0].forward(&batch.next_m, &batch.next_f, a2, b);
        let (q2, _) = self.targets[1].forward(&batch.next_m, &batch.next_f, a2, b);
        let gamma = T::lit(self.cfg.gamma);
        let alpha = self.alpha();
        (0..b)
            .map(|i| {
                let soft = q1[i].min(q2[i]) - alpha * next.sample.log_prob[i];
                batch.reward[i] + gamma * (T::one() - batch.done[i]) * soft
            })
            .collect()
    }

    /// Twin-critic loss `Σ_j ½·mean (Q_j − y)²`; gradients accumulated into
    /// the critics after zeroing. Returns `(loss, mean Q)`.
    pub fn critic_loss_grad(&mut self, batch: &Batch<T>, eps_next: &[T]) -> (T, T) {
        let y = self.critic_targets(batch, eps_next);
        let b = batch.size;
        let inv_b = T::one() / T::lit(b as f64);
        let mut loss = T::zero();
        let mut q_sum = T::zero();
        for j in 0..2 {
            self.critics[j].zero_grad();
            let (q, cache) = self.critics[j].forward(&batch.m, &batch.f, &batch.action, b);
            let dq: Vec<T> = q.iter().zip(&y).map(|(q, y)| (*q - *y) * inv_b).collect();
            loss = loss + q.iter().zip(&y).map(|(q, y)| T::lit(0.5) * (*q - *y) * (*q - *y)).sum::<T>() * inv_b;
            q_sum = q_sum + q.iter().copied().sum::<T>() * inv_b;
            self.critics[j].backward(&cache, &dq, true);
        }
        (loss, q_sum / T::lit(2.0))
    }

    /// Actor loss `mean(α log π − min_j Q_j)`; gradients accumulated into the
    /// actor after zeroing. Returns `(loss, mean log π)`.
    pub fn actor_loss_grad(&mut self, batch: &Batch<T>, eps: &[T]) -> (T, T) {
        let b = batch.size;
        let inv_b = T::one() / T::lit(b as f64);
        let alpha = self.alpha();
        self.actor.zero_grad();
        let cache = self.actor.forward(&batch.m, &batch.f, b, eps);
        let a = &cache.sample.action;
        let (q1, c1) = self.critics[0].forward(&batch.m, &batch.f, a, b);
        let (q2, c2) = self.critics[1].forward(&batch.m, &batch.f, a, b);
        let mut dq1 = vec![T::zero(); b];
        let mut dq2 = vec![T::zero(); b];
        let mut loss = T::zero();
        let mut logp_mean = T::zero();
        for i in 0..b {
            let lp = cache.sample.log_prob[i];
            if q1[i] <= q2[i] {
                dq1[i] = -inv_b;
                loss = loss + (alpha * lp - q1[i]) * inv_b;
            } else {
                dq2[i] = -inv_b;
                loss = loss + (alpha * lp - q2[i]) * inv_b;
            }
            logp_mean = logp_mean + lp * inv_b;
        }
        let da1 = self.critics[0].backward(&c1, &dq1, false);
        let da2 = self.critics[1].backward(&c2, &dq2, false);
        let da: Vec<T> = da1.iter().zip(&da2).map(|(x, y)| *x + *y).collect();
        let dlogp = vec![alpha * inv_b; b];
        self.actor.backward(&cache, &da, &dlogp);
        (loss, logp_mean)
    }

    /// Critic step, actor step, temperature step, then target averaging.
    pub fn update(&mut self, batch: &Batch<T>, rng: &mut impl Rng) -> Result<LossReport> {
        let n = batch.size * self.action_dim;
        let eps_next = normal_noise(n, rng);
        let eps = normal_noise(n, rng);
        self.updates += 1;

        let (critic_loss, q_mean) = self.critic_loss_grad(batch, &eps_next);
        if !critic_loss.is_finite() {
            return Err(self.non_finite("critic loss", critic_loss));
        }
        for j in 0..2 {
            self.critic_opts[j].step(&mut self.critics[j]);
        }

        let (actor_loss, logp) = self.actor_loss_grad(batch, &eps);
        if !actor_loss.is_finite() {
            return Err(self.non_finite("actor loss", actor_loss));
        }
        self.actor_opt.step(&mut self.actor);

        if let AlphaMode::Auto(_) = self.cfg.alpha {
            let g = -(logp + self.target_entropy());
            self.temperature.log_alpha.grad[0] = g;
            self.alpha_opt.step(&mut self.temperature);
        }

        let rho = T::lit(self.cfg.polyak);
        for j in 0..2 {
            polyak_update(&self.critics[j], &mut self.targets[j], rho);
        }
        if !self.actor.all_finite() || !self.critics.iter().all(|c| c.all_finite()) {
            return Err(self.non_finite("parameters", T::nan()));
        }
        Ok(LossReport {
            critic_loss: critic_loss.to_f64().unwrap_or(f64::NAN),
            actor_loss: actor_loss.to_f64().unwrap_or(f64::NAN),
            alpha: self.alpha().to_f64().unwrap_or(f64::NAN),
            entropy: -logp.to_f64().unwrap_or(f64::NAN),
            q_mean: q_mean.to_f64().unwrap_or(f64::NAN),
        })
    }

    fn non_finite(&self, what: &str, v: T) -> LacError {
        LacError::NonFiniteLoss {
            update: self.updates,
            detail: format!("{what} = {v:?}, alpha = {:?}", self.alpha()),
        }
    }

    /// Every tensor in checkpoint order.
    pub fn all_params(&self) -> Vec<&Param<T>> {
        let mut p = self.actor.params();
        for c in self.critics.iter().chain(self.targets.iter()) {
            p.extend(c.params());
        }
        p.push(&self.temperature.log_alpha);
        p
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.actor.params_mut();
        for c in self.critics.iter_mut().chain(self.targets.iter_mut()) {
            p.extend(c.params_mut());
        }
        p.push(&mut self.temperature.log_alpha);
        p
    }
}
