//! Tanh-squashed diagonal Gaussian policy.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::encoder::{encode_state, EncoderCache, EncoderKind, ForceEncoder, ObsDims};
use super::nn::{Mlp, MlpCache};
use super::tensor::{split_cols, Param, Parameterized, Real};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Sampled actions are kept strictly inside (−1, 1).
pub const ACTION_BOUND: f64 = 1.0 - 1e-6;

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// A reparameterised batch of squashed samples and what is needed to
/// differentiate through it.
#[derive(Debug, Clone)]
pub struct SquashedSample<T> {
    pub batch: usize,
    pub dim: usize,
    pub action: Vec<T>,
    /// Per-row log density of `action`.
    pub log_prob: Vec<T>,
    pub u: Vec<T>,
    pub std: Vec<T>,
    pub eps: Vec<T>,
    /// Raw log-std inside the clamp range (gradient passes).
    pub active: Vec<bool>,
}

/// `a = tanh(μ + σ·ε)` with `log π(a) = Σ N(ε) − log σ − log(1 − tanh²u)`,
/// the last term written as `2(log 2 − u − softplus(−2u))` for stability.
pub fn squash<T: Real>(mean: &[T], log_std_raw: &[T], eps: &[T], batch: usize, dim: usize) -> SquashedSample<T> {
    let half_log_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let ln2 = T::lit(std::f64::consts::LN_2);
    let two = T::lit(2.0);
    let lo = T::lit(LOG_STD_MIN);
    let hi = T::lit(LOG_STD_MAX);
    let bound = T::lit(ACTION_BOUND);
    let n = batch * dim;
    let mut s = SquashedSample {
        batch,
        dim,
        action: Vec::with_capacity(n),
        log_prob: vec![T::zero(); batch],
        u: Vec::with_capacity(n),
        std: Vec::with_capacity(n),
        eps: eps.to_vec(),
        active: Vec::with_capacity(n),
    };
    for k in 0..n {
        let raw = log_std_raw[k];
        let ls = raw.max(lo).min(hi);
        let sd = ls.exp();
        let u = mean[k] + sd * eps[k];
        let corr = two * (ln2 - u - softplus(-two * u));
        s.log_prob[k / dim] = s.log_prob[k / dim] - T::lit(0.5) * eps[k] * eps[k] - ls - half_log_2pi - corr;
        s.action.push(u.tanh().max(-bound).min(bound));
        s.u.push(u);
        s.std.push(sd);
        s.active.push(raw >= lo && raw <= hi);
    }
    s
}

/// Gradients w.r.t. `(mean, raw log-std)` given upstream gradients on the
/// action and on the per-row log-probability.
pub fn squash_backward<T: Real>(s: &SquashedSample<T>, d_action: &[T], d_logp: &[T]) -> (Vec<T>, Vec<T>) {
    let two = T::lit(2.0);
    let n = s.batch * s.dim;
    let mut dm = vec![T::zero(); n];
    let mut ds = vec![T::zero(); n];
    for k in 0..n {
        let r = k / s.dim;
        let th = s.u[k].tanh();
        let du = d_action[k] * (T::one() - th * th) + d_logp[r] * two * th;
        dm[k] = du;
        if s.active[k] {
            ds[k] = du * s.std[k] * s.eps[k] - d_logp[r];
        }
    }
    (dm, ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor<T> {
    pub encoder: ForceEncoder<T>,
    pub mlp: Mlp<T>,
    pub dims: ObsDims,
    pub action_dim: usize,
}

#[derive(Debug, Clone)]
pub struct ActorCache<T> {
    enc: EncoderCache<T>,
    mlp: MlpCache<T>,
    pub sample: SquashedSample<T>,
}

impl<T: Real> Actor<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: EncoderKind,
        dims: ObsDims,
        action_dim: usize,
        hidden: &[usize],
        lstm_hidden: usize,
        feature: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let encoder = ForceEncoder::new(kind, "actor.enc", dims.series_width, lstm_hidden, feature, rng);
        let input = dims.motion + encoder.output_dim();
        Self {
            mlp: Mlp::new("actor.mlp", input, hidden, 2 * action_dim, rng),
            encoder,
            dims,
            action_dim,
        }
    }

    fn heads(&self, out: &[T], batch: usize) -> (Vec<T>, Vec<T>) {
        split_cols(out, self.action_dim, self.action_dim, batch)
    }

    /// Reparameterised sample with the supplied standard-normal noise.
    pub fn forward(&self, m: &[T], f: &[T], batch: usize, eps: &[T]) -> ActorCache<T> {
        let (c, enc) = encode_state(&self.encoder, m, f, batch, &self.dims);
        let (out, mlp) = self.mlp.forward(&c, batch);
        let (mean, log_std) = self.heads(&out, batch);
        ActorCache {
            enc,
            mlp,
            sample: squash(&mean, &log_std, eps, batch, self.action_dim),
        }
    }

    /// `tanh(mean)` per row.
    pub fn deterministic(&self, m: &[T], f: &[T], batch: usize) -> Vec<T> {
        let (c, _) = encode_state(&self.encoder, m, f, batch, &self.dims);
        let (out, _) = self.mlp.forward(&c, batch);
        let (mean, _) = self.heads(&out, batch);
        mean.into_iter().map(|v| v.tanh()).collect()
    }

    pub fn sample(&self, m: &[T], f: &[T], batch: usize, rng: &mut impl Rng) -> (Vec<T>, Vec<T>) {
        let eps = normal_noise(batch * self.action_dim, rng);
        let c = self.forward(m, f, batch, &eps);
        (c.sample.action, c.sample.log_prob)
    }

    pub fn backward(&mut self, cache: &ActorCache<T>, d_action: &[T], d_logp: &[T]) {
        let batch = cache.sample.batch;
        let (dm, ds) = squash_backward(&cache.sample, d_action, d_logp);
        let mut dout = Vec::with_capacity(batch * 2 * self.action_dim);
        for r in 0..batch {
            dout.extend_from_slice(&dm[r * self.action_dim..(r + 1) * self.action_dim]);
            dout.extend_from_slice(&ds[r * self.action_dim..(r + 1) * self.action_dim]);
        }
        let need_dx = matches!(self.encoder, ForceEncoder::Lstm(_));
        let dc = self.mlp.backward(&cache.mlp, &dout, true, need_dx);
        if need_dx {
            let (_, dfeat) = split_cols(&dc, self.dims.motion, self.encoder.output_dim(), batch);
            self.encoder.backward(&cache.enc, &dfeat);
        }
    }
}

impl<T: Real> Parameterized<T> for Actor<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.encoder.params();
        p.extend(self.mlp.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.encoder.params_mut();
        p.extend(self.mlp.params_mut());
        p
    }
}

pub fn normal_noise<T: Real>(n: usize, rng: &mut impl Rng) -> Vec<T> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z)
        })
        .collect()
}
