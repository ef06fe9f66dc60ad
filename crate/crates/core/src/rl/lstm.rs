//! Single-layer LSTM over a force series followed by a linear projection of
//! the final hidden state. Gate order in the packed weights: i, f, g, o.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::Linear;
use super::tensor::{gemm, Param, Parameterized, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmEncoder<T> {
    pub input: usize,
    pub hidden: usize,
    /// `input × 4H`.
    pub w_x: Param<T>,
    /// `H × 4H`.
    pub w_h: Param<T>,
    pub b: Param<T>,
    pub proj: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    batch: usize,
    len: usize,
    /// Per step, `B × input`.
    xs: Vec<Vec<T>>,
    /// `h_0 .. h_L`, each `B × H`.
    hs: Vec<Vec<T>>,
    cs: Vec<Vec<T>>,
    /// `tanh(c_t)` for `t = 1..=L`.
    tcs: Vec<Vec<T>>,
    /// Activated gates per step, `B × 4H`.
    gates: Vec<Vec<T>>,
}

impl<T: Real> LstmEncoder<T> {
    pub fn new(name: &str, input: usize, hidden: usize, feature: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut b = Param::uniform(format!("{name}.b"), &[4 * hidden], bound, rng);
        for v in &mut b.value[hidden..2 * hidden] {
            *v = *v + T::one();
        }
        Self {
            input,
            hidden,
            w_x: Param::uniform(format!("{name}.w_x"), &[input, 4 * hidden], bound, rng),
            w_h: Param::uniform(format!("{name}.w_h"), &[hidden, 4 * hidden], bound, rng),
            b,
            proj: Linear::new(&format!("{name}.proj"), hidden, feature, rng),
        }
    }

    pub fn zeros(name: &str, input: usize, hidden: usize, feature: usize) -> Self {
        Self {
            input,
            hidden,
            w_x: Param::zeros(format!("{name}.w_x"), &[input, 4 * hidden]),
            w_h: Param::zeros(format!("{name}.w_h"), &[hidden, 4 * hidden]),
            b: Param::zeros(format!("{name}.b"), &[4 * hidden]),
            proj: Linear::zeros(&format!("{name}.proj"), hidden, feature),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.proj.output
    }

    /// `seq` is `B × L × input`, row-major. Returns `B × feature`.
    pub fn forward(&self, seq: &[T], batch: usize, len: usize) -> (Vec<T>, LstmCache<T>) {
        assert!(len >= 1, "empty force series");
        assert_eq!(seq.len(), batch * len * self.input, "force series shape");
        let h4 = 4 * self.hidden;
        let hd = self.hidden;
        let mut cache = LstmCache {
            batch,
            len,
            xs: Vec::with_capacity(len),
            hs: vec![vec![T::zero(); batch * hd]],
            cs: vec![vec![T::zero(); batch * hd]],
            tcs: Vec::with_capacity(len),
            gates: Vec::with_capacity(len),
        };
        for t in 0..len {
            let mut x = Vec::with_capacity(batch * self.input);
            for r in 0..batch {
                let off = (r * len + t) * self.input;
                x.extend_from_slice(&seq[off..off + self.input]);
            }
            let mut z = Vec::with_capacity(batch * h4);
            for _ in 0..batch {
                z.extend_from_slice(&self.b.value);
            }
            gemm(false, false, batch, h4, self.input, T::one(), &x, &self.w_x.value, T::one(), &mut z);
            let h_prev = &cache.hs[t];
            gemm(false, false, batch, h4, hd, T::one(), h_prev, &self.w_h.value, T::one(), &mut z);
            let c_prev = &cache.cs[t];
            let mut c = vec![T::zero(); batch * hd];
            let mut h = vec![T::zero(); batch * hd];
            let mut tc = vec![T::zero(); batch * hd];
            for r in 0..batch {
                let zr = &mut z[r * h4..(r + 1) * h4];
                T::sigmoid_slice(&mut zr[..2 * hd]);
                T::tanh_slice(&mut zr[2 * hd..3 * hd]);
                T::sigmoid_slice(&mut zr[3 * hd..]);
                let (cr, cp) = (&mut c[r * hd..(r + 1) * hd], &c_prev[r * hd..(r + 1) * hd]);
                for j in 0..hd {
                    cr[j] = zr[hd + j] * cp[j] + zr[j] * zr[2 * hd + j];
                }
                let tr = &mut tc[r * hd..(r + 1) * hd];
                tr.copy_from_slice(cr);
                T::tanh_slice(tr);
                let hr = &mut h[r * hd..(r + 1) * hd];
                for j in 0..hd {
                    hr[j] = zr[3 * hd + j] * tr[j];
                }
            }
            cache.xs.push(x);
            cache.gates.push(z);
            cache.hs.push(h);
            cache.cs.push(c);
            cache.tcs.push(tc);
        }
        let out = self.proj.forward(&cache.hs[len], batch);
        (out, cache)
    }

    /// Backpropagation through time from the feature gradient. Parameter
    /// gradients are accumulated.
    pub fn backward(&mut self, cache: &LstmCache<T>, dfeat: &[T]) {
        let batch = cache.batch;
        let hd = self.hidden;
        let h4 = 4 * hd;
        let mut dh = self.proj.backward(&cache.hs[cache.len], dfeat, batch, true, true);
        let mut dc = vec![T::zero(); batch * hd];
        let mut dz = vec![T::zero(); batch * h4];
        for t in (0..cache.len).rev() {
            let gates = &cache.gates[t];
            let tcs = &cache.tcs[t];
            let c_prev = &cache.cs[t];
            for r in 0..batch {
                let g = &gates[r * h4..(r + 1) * h4];
                let (gi, rest) = g.split_at(hd);
                let (gf, rest) = rest.split_at(hd);
                let (gg, go) = rest.split_at(hd);
                let rows = r * hd..(r + 1) * hd;
                let (tr, cp, dhr) = (&tcs[rows.clone()], &c_prev[rows.clone()], &dh[rows.clone()]);
                let dcr = &mut dc[rows];
                let dzr = &mut dz[r * h4..(r + 1) * h4];
                let (dzi, rest) = dzr.split_at_mut(hd);
                let (dzf, rest) = rest.split_at_mut(hd);
                let (dzg, dzo) = rest.split_at_mut(hd);
                for j in 0..hd {
                    let (i, f, gv, o, tc) = (gi[j], gf[j], gg[j], go[j], tr[j]);
                    let dcv = dcr[j] + dhr[j] * o * (T::one() - tc * tc);
                    dcr[j] = dcv * f;
                    dzi[j] = dcv * gv * i * (T::one() - i);
                    dzf[j] = dcv * cp[j] * f * (T::one() - f);
                    dzg[j] = dcv * i * (T::one() - gv * gv);
                    dzo[j] = dhr[j] * tc * o * (T::one() - o);
                }
            }
            gemm(true, false, self.input, h4, batch, T::one(), &cache.xs[t], &dz, T::one(), &mut self.w_x.grad);
            gemm(true, false, hd, h4, batch, T::one(), &cache.hs[t], &dz, T::one(), &mut self.w_h.grad);
            for r in 0..batch {
                for (gb, d) in self.b.grad.iter_mut().zip(&dz[r * h4..(r + 1) * h4]) {
                    *gb = *gb + *d;
                }
            }
            if t > 0 {
                gemm(false, true, batch, hd, h4, T::one(), &dz, &self.w_h.value, T::zero(), &mut dh);
            }
        }
    }
}

impl<T: Real> Parameterized<T> for LstmEncoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w_x, &self.w_h, &self.b, &self.proj.w, &self.proj.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.b, &mut self.proj.w, &mut self.proj.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::nn::tests::check_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_zero_feature() {
        let enc = LstmEncoder::<f64>::zeros("e", 6, 16, 3);
        let (out, _) = enc.forward(&vec![0.0; 25 * 6], 1, 25);
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn output_shape_for_inner_rate_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = LstmEncoder::<f32>::new("e", 6, 16, 3, &mut rng);
        let seq: Vec<f32> = (0..2 * 25 * 6).map(|i| (i as f32 * 0.01).sin()).collect();
        let (out, _) = enc.forward(&seq, 2, 25);
        assert_eq!(out.len(), 2 * 3);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn order_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = LstmEncoder::<f64>::new("e", 6, 16, 3, &mut rng);
        let seq: Vec<f64> = (0..10 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rev = Vec::new();
        for t in (0..10).rev() {
            rev.extend_from_slice(&seq[t * 6..(t + 1) * 6]);
        }
        let (a, _) = enc.forward(&seq, 1, 10);
        let (b, _) = enc.forward(&rev, 1, 10);
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut enc = LstmEncoder::<f64>::new("e", 6, 4, 3, &mut rng);
        let (batch, len) = (2, 5);
        let seq: Vec<f64> = (0..batch * len * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..batch * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |e: &mut LstmEncoder<f64>| {
            let (y, _) = e.forward(&seq, batch, len);
            y.iter().zip(&w).map(|(a, b)| a * b + 0.5 * a * a).sum::<f64>()
        };
        let lg = |e: &mut LstmEncoder<f64>| {
            let (y, c) = e.forward(&seq, batch, len);
            let dy: Vec<f64> = y.iter().zip(&w).map(|(a, b)| b + a).collect();
            e.backward(&c, &dy);
            0.0
        };
        check_params(&mut enc, loss, lg, 1e-4);
    }
}
