//! Dense layers and ReLU multilayer perceptrons with explicit caches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Param, Parameterized, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    pub input: usize,
    pub output: usize,
    /// `input × output`, row-major.
    pub w: Param<T>,
    pub b: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            input,
            output,
            w: Param::uniform(format!("{name}.w"), &[input, output], bound, rng),
            b: Param::uniform(format!("{name}.b"), &[output], bound, rng),
        }
    }

    pub fn zeros(name: &str, input: usize, output: usize) -> Self {
        Self {
            input,
            output,
            w: Param::zeros(format!("{name}.w"), &[input, output]),
            b: Param::zeros(format!("{name}.b"), &[output]),
        }
    }

    pub fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), batch * self.input);
        let mut y = Vec::with_capacity(batch * self.output);
        for _ in 0..batch {
            y.extend_from_slice(&self.b.value);
        }
        gemm(false, false, batch, self.output, self.input, T::one(), x, &self.w.value, T::one(), &mut y);
        y
    }

    /// Accumulates parameter gradients (when `accumulate`) and returns `dx`.
    pub fn backward(&mut self, x: &[T], dy: &[T], batch: usize, accumulate: bool, need_dx: bool) -> Vec<T> {
        if accumulate {
            gemm(true, false, self.input, self.output, batch, T::one(), x, dy, T::one(), &mut self.w.grad);
            for r in 0..batch {
                for (g, d) in self.b.grad.iter_mut().zip(&dy[r * self.output..(r + 1) * self.output]) {
                    *g = *g + *d;
                }
            }
        }
        if !need_dx {
            return Vec::new();
        }
        let mut dx = vec![T::zero(); batch * self.input];
        gemm(false, true, batch, self.input, self.output, T::one(), dy, &self.w.value, T::zero(), &mut dx);
        dx
    }
}

impl<T: Real> Parameterized<T> for Linear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// ReLU hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

/// Activations kept from a forward pass: `acts[0]` is the input, `acts[i]`
/// the (post-ReLU) input of layer `i`.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pub acts: Vec<Vec<T>>,
    pub batch: usize,
}

impl<T: Real> Mlp<T> {
    pub fn new(name: &str, input: usize, hidden: &[usize], output: usize, rng: &mut impl Rng) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{name}.l{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn forward(&self, x: &[T], batch: usize) -> (Vec<T>, MlpCache<T>) {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h, batch);
            if i < last {
                for v in &mut y {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            acts.push(h);
            h = y;
        }
        (h, MlpCache { acts, batch })
    }

    /// Backpropagates `dy`; parameter gradients are accumulated only when
    /// `accumulate` is set.
    pub fn backward(&mut self, cache: &MlpCache<T>, dy: &[T], accumulate: bool, need_dx: bool) -> Vec<T> {
        let batch = cache.batch;
        let mut g = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.acts[i];
            let want_dx = i > 0 || need_dx;
            let mut dx = self.layers[i].backward(x, &g, batch, accumulate, want_dx);
            if i > 0 {
                for (d, a) in dx.iter_mut().zip(x) {
                    if *a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            g = dx;
        }
        g
    }
}

impl<T: Real> Parameterized<T> for Mlp<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
