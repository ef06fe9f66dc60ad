//! Scalar abstraction, row-major GEMM and named parameter storage.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Send + Sync + 'static
{
    /// `C ← α·A·B + β·C` with explicit strides, as in `matrixmultiply`.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits")
    }

    /// `exp` used by the activations.
    #[inline]
    fn exp_act(self) -> Self {
        self.exp()
    }

    fn sigmoid_slice(x: &mut [Self]) {
        for v in x {
            *v = Self::one() / (Self::one() + (-*v).exp_act());
        }
    }

    fn tanh_slice(x: &mut [Self]) {
        for v in x {
            *v = tanh(*v);
        }
    }
}

macro_rules! real_impl {
    ($t:ty, $f:path, $exp:path) => {
        impl Real for $t {
            #[inline]
            fn exp_act(self) -> Self {
                $exp(self)
            }

            fn sigmoid_slice(x: &mut [Self]) {
                for v in x {
                    *v = 1.0 / (1.0 + $exp(-*v));
                }
            }

            fn tanh_slice(x: &mut [Self]) {
                for v in x {
                    let e = $exp(-2.0 * v.abs());
                    let t = (1.0 - e) / (1.0 + e);
                    *v = t.copysign(*v);
                }
            }

            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                assert!(c.len() >= m * n);
                // SAFETY: callers below guarantee that the strided extents of
                // A (m×k) and B (k×n) lie within the slices, and C is a dense
                // m×n row-major block checked above.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

real_impl!(f32, matrixmultiply::sgemm, exp_f32);
real_impl!(f64, matrixmultiply::dgemm, f64::exp);

/// Branch-free single-precision exp (Cephes polynomial, ~2 ulp), written so
/// the activation loops vectorise.
#[inline]
pub fn exp_f32(x: f32) -> f32 {
    const MAGIC: f32 = 12_582_912.0; // 1.5·2²³: adding it rounds to an integer.
    let x = x.clamp(-87.0, 88.0);
    let t = x * std::f32::consts::LOG2_E + MAGIC;
    let n = t - MAGIC;
    let r = x - n * 0.693_359_4 - n * -2.121_944_4e-4;
    let mut p = 1.987_569_1e-4_f32;
    p = p * r + 1.398_2e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 0.5;
    let y = p * r * r + r + 1.0;
    let k = t.to_bits().wrapping_sub(MAGIC.to_bits()).wrapping_add(127) << 23;
    y * f32::from_bits(k)
}

/// `tanh` through a single `exp`; the libm version is several times slower.
#[inline]
pub fn tanh<T: Real>(x: T) -> T {
    let e = (-(x.abs() + x.abs())).exp_act();
    let t = (T::one() - e) / (T::one() + e);
    if x < T::zero() {
        -t
    } else {
        t
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp_act())
}

/// `C (m×n) ← α·op(A)·op(B) + β·C`, all row-major. `A` is stored `m×k`
/// (or `k×m` when `ta`), `B` is stored `k×n` (or `n×k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    ta: bool,
    tb: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: T,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n, "gemm operand too small");
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    T::gemm_raw(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c);
}

/// A named tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn uniform(name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(name, shape);
        for v in &mut p.value {
            *v = T::lit(rng.random_range(-bound..=bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        let conv = |v: &T| U::from_f64(v.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero);
        Param {
            name: self.name.clone(),
            shape: self.shape.clone(),
            value: self.value.iter().map(conv).collect(),
            grad: self.grad.iter().map(conv).collect(),
        }
    }
}

/// Anything that owns trainable tensors, visited in a fixed order.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }
}

/// `target ← ρ·target + (1−ρ)·online`, elementwise.
pub fn polyak_update<T: Real>(online: &impl Parameterized<T>, target: &mut impl Parameterized<T>, rho: T) {
    let src = online.params();
    let dst = target.params_mut();
    assert_eq!(src.len(), dst.len(), "polyak: parameter lists differ");
    for (s, d) in src.into_iter().zip(dst) {
        assert_eq!(s.shape, d.shape, "polyak: shape mismatch on {}", s.name);
        for (dv, sv) in d.value.iter_mut().zip(&s.value) {
            *dv = rho * *dv + (T::one() - rho) * *sv;
        }
    }
}

/// Row-wise concatenation of `B×p` and `B×q` blocks.
pub fn concat_cols<T: Real>(a: &[T], p: usize, b: &[T], q: usize, batch: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * (p + q));
    for r in 0..batch {
        out.extend_from_slice(&a[r * p..(r + 1) * p]);
        out.extend_from_slice(&b[r * q..(r + 1) * q]);
    }
    out
}

/// Inverse of [`concat_cols`].
pub fn split_cols<T: Real>(x: &[T], p: usize, q: usize, batch: usize) -> (Vec<T>, Vec<T>) {
    let mut a = Vec::with_capacity(batch * p);
    let mut b = Vec::with_capacity(batch * q);
    for r in 0..batch {
        let row = &x[r * (p + q)..(r + 1) * (p + q)];
        a.extend_from_slice(&row[..p]);
        b.extend_from_slice(&row[p..]);
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(ta: bool, tb: bool, m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    let av = if ta { a[l * m + i] } else { a[i * k + l] };
                    let bv = if tb { b[j * k + l] } else { b[l * n + j] };
                    c[i * n + j] += av * bv;
                }
            }
        }
        c
    }

    #[test]
    fn gemm_all_transpose_modes() {
        let (m, n, k) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        for ta in [false, true] {
            for tb in [false, true] {
                let mut c = vec![1.0; m * n];
                gemm(ta, tb, m, n, k, 1.0, &a, &b, 0.0, &mut c);
                let want = naive(ta, tb, m, n, k, &a, &b);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gemm_accumulates_with_beta() {
        let a = [1.0f32, 2.0];
        let b = [3.0f32, 4.0];
        let mut c = [10.0f32];
        gemm(false, false, 1, 1, 2, 1.0, &a, &b, 1.0, &mut c);
        assert_eq!(c[0], 21.0);
    }

    #[test]
    fn fast_exp_accuracy() {
        for i in -8700..=8800 {
            let x = i as f32 * 0.01;
            let rel = (exp_f32(x) as f64 / (x as f64).exp() - 1.0).abs();
            assert!(rel < 1e-6, "x={x} rel={rel}");
        }
    }

    #[test]
    fn tanh_matches_std() {
        for i in -400..=400 {
            let x = i as f64 * 0.05;
            assert!((tanh(x) - x.tanh()).abs() < 1e-15);
        }
        assert_eq!(tanh(1e4f32), 1.0);
        assert_eq!(tanh(-1e4f32), -1.0);
    }

    #[test]
    fn concat_split_round_trip() {
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0];
        let c = concat_cols(&a, 2, &b, 1, 2);
        assert_eq!(c, vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let (x, y) = split_cols(&c, 2, 1, 2);
        assert_eq!((x.as_slice(), y.as_slice()), (&a[..], &b[..]));
    }
}
