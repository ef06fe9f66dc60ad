use serde::{Deserialize, Serialize};

use super::tensor::{Parameterized, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, model: &impl Parameterized<T>) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut impl Parameterized<T>) {
        self.t += 1;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let c1 = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let step = T::lit(self.lr * c2.sqrt() / c1);
        let eps = T::lit(self.eps * c2.sqrt());
        for ((p, m), v) in model.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.value.len() {
                let g = p.grad[k];
                m[k] = b1 * m[k] + (T::one() - b1) * g;
                v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                p.value[k] = p.value[k] - step * m[k] / (v[k].sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::tensor::Param;

    struct Scalar(Param<f64>);

    impl Parameterized<f64> for Scalar {
        fn params(&self) -> Vec<&Param<f64>> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = Scalar(Param::zeros("x", &[1]));
        s.0.grad[0] = 3.0;
        let mut opt = Adam::new(0.01, &s);
        opt.step(&mut s);
        assert!((s.0.value[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimises_quadratic() {
        let mut s = Scalar(Param::zeros("x", &[1]));
        let mut opt = Adam::new(0.05, &s);
        for _ in 0..2000 {
            s.0.grad[0] = 2.0 * (s.0.value[0] - 1.5);
            opt.step(&mut s);
        }
        assert!((s.0.value[0] - 1.5).abs() < 1e-3);
    }
}
