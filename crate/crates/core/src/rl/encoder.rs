//! Force-series front ends and the motion/force feature concatenation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{LstmCache, LstmEncoder};
use super::tensor::{concat_cols, Param, Parameterized, Real};
use crate::error::{LacError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Recurrent encoder over the whole series.
    Lstm,
    /// Last sample of the series, unprocessed.
    Latest,
    /// Force series ignored.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForceEncoder<T> {
    Lstm(Box<LstmEncoder<T>>),
    Latest { width: usize },
    None,
}

#[derive(Debug, Clone)]
pub enum EncoderCache<T> {
    Lstm(LstmCache<T>),
    Stateless,
}

/// Shape of the inputs an agent expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsDims {
    pub motion: usize,
    pub series_len: usize,
    pub series_width: usize,
}

impl ObsDims {
    pub fn series(&self) -> usize {
        self.series_len * self.series_width
    }

    pub fn check(&self, m: usize, f: usize) -> Result<()> {
        if m != self.motion || f != self.series() {
            return Err(LacError::ObservationSpec(format!(
                "expected motion {} and series {}×{}, got {m} and {f} values",
                self.motion, self.series_len, self.series_width
            )));
        }
        Ok(())
    }
}

impl<T: Real> ForceEncoder<T> {
    pub fn new(kind: EncoderKind, name: &str, width: usize, hidden: usize, feature: usize, rng: &mut impl Rng) -> Self {
        match kind {
            EncoderKind::Lstm => ForceEncoder::Lstm(Box::new(LstmEncoder::new(name, width, hidden, feature, rng))),
            EncoderKind::Latest => ForceEncoder::Latest { width },
            EncoderKind::None => ForceEncoder::None,
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            ForceEncoder::Lstm(_) => EncoderKind::Lstm,
            ForceEncoder::Latest { .. } => EncoderKind::Latest,
            ForceEncoder::None => EncoderKind::None,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ForceEncoder::Lstm(e) => e.feature_dim(),
            ForceEncoder::Latest { width } => *width,
            ForceEncoder::None => 0,
        }
    }

    pub fn forward(&self, f: &[T], batch: usize, dims: &ObsDims) -> (Vec<T>, EncoderCache<T>) {
        match self {
            ForceEncoder::Lstm(e) => {
                let (y, c) = e.forward(f, batch, dims.series_len);
                (y, EncoderCache::Lstm(c))
            }
            ForceEncoder::Latest { width } => {
                let per = dims.series();
                let mut y = Vec::with_capacity(batch * width);
                for r in 0..batch {
                    let end = (r + 1) * per;
                    y.extend_from_slice(&f[end - width..end]);
                }
                (y, EncoderCache::Stateless)
            }
            ForceEncoder::None => (Vec::new(), EncoderCache::Stateless),
        }
    }

    pub fn backward(&mut self, cache: &EncoderCache<T>, dfeat: &[T]) {
        if let (ForceEncoder::Lstm(e), EncoderCache::Lstm(c)) = (self, cache) {
            e.backward(c, dfeat);
        }
    }
}

impl<T: Real> Parameterized<T> for ForceEncoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        match self {
            ForceEncoder::Lstm(e) => e.params(),
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            ForceEncoder::Lstm(e) => e.params_mut(),
            _ => Vec::new(),
        }
    }
}

/// `c = [m, encoder(f)]` row-wise.
pub fn encode_state<T: Real>(
    enc: &ForceEncoder<T>,
    m: &[T],
    f: &[T],
    batch: usize,
    dims: &ObsDims,
) -> (Vec<T>, EncoderCache<T>) {
    let (v, cache) = enc.forward(f, batch, dims);
    (concat_cols(m, dims.motion, &v, enc.output_dim(), batch), cache)
}
