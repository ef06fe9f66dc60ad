use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{encode_state, EncoderCache, EncoderKind, ForceEncoder, ObsDims};
use super::nn::{Mlp, MlpCache};
use super::tensor::{concat_cols, split_cols, Param, Parameterized, Real};

/// Q(m, f, a) with its own force encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic<T> {
    pub encoder: ForceEncoder<T>,
    pub mlp: Mlp<T>,
    pub dims: ObsDims,
    pub action_dim: usize,
}

#[derive(Debug, Clone)]
pub struct CriticCache<T> {
    enc: EncoderCache<T>,
    mlp: MlpCache<T>,
    batch: usize,
}

impl<T: Real> Critic<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        kind: EncoderKind,
        dims: ObsDims,
        action_dim: usize,
        hidden: &[usize],
        lstm_hidden: usize,
        feature: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let encoder = ForceEncoder::new(kind, &format!("{name}.enc"), dims.series_width, lstm_hidden, feature, rng);
        let input = dims.motion + encoder.output_dim() + action_dim;
        Self {
            mlp: Mlp::new(&format!("{name}.mlp"), input, hidden, 1, rng),
            encoder,
            dims,
            action_dim,
        }
    }

    fn feature_dim(&self) -> usize {
        self.dims.motion + self.encoder.output_dim()
    }

    pub fn forward(&self, m: &[T], f: &[T], a: &[T], batch: usize) -> (Vec<T>, CriticCache<T>) {
        let (c, enc) = encode_state(&self.encoder, m, f, batch, &self.dims);
        let x = concat_cols(&c, self.feature_dim(), a, self.action_dim, batch);
        let (q, mlp) = self.mlp.forward(&x, batch);
        (q, CriticCache { enc, mlp, batch })
    }

    /// With `accumulate`, parameter gradients (encoder included) are added;
    /// otherwise only `dQ/da` is produced.
    pub fn backward(&mut self, cache: &CriticCache<T>, dq: &[T], accumulate: bool) -> Vec<T> {
        let dx = self.mlp.backward(&cache.mlp, dq, accumulate, true);
        let (dc, da) = split_cols(&dx, self.feature_dim(), self.action_dim, cache.batch);
        if accumulate && matches!(self.encoder, ForceEncoder::Lstm(_)) {
            let (_, dfeat) = split_cols(&dc, self.dims.motion, self.encoder.output_dim(), cache.batch);
            self.encoder.backward(&cache.enc, &dfeat);
        }
        da
    }
}

impl<T: Real> Parameterized<T> for Critic<T> {
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
