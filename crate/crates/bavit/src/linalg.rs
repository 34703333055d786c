//! Scalar abstraction and the handful of dense kernels the network is built
//! from.
//!
//! Everything operates on row-major `&[F]` slices with explicit dimensions;
//! there is no tensor type. The training path instantiates these at `f32`,
//! while the finite-difference gradient checks re-run the same code at `f64`,
//! which is the whole reason the kernels are generic.

use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating-point scalar the model can run on. Implemented for `f32` and
/// `f64`; the two must produce structurally identical computation graphs so
/// that a check performed in `f64` validates the `f32` code.
pub trait Real:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// 0.5, handy for the GELU tanh form.
    fn half() -> Self {
        Self::from_f64(0.5)
    }
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// C[m,n] = A[m,k] * B[k,n]. The k-outer loop order keeps both the B row and
/// the C row streaming sequentially.
pub fn matmul<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![F::zero(); m * n];
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v += a_ip * b_v;
            }
        }
    }
    c
}

/// C[m,n] = A[m,k] * B[n,k]^T. Plain dot products: both operands are read
/// along contiguous rows.
pub fn matmul_nt<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![F::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (&a_v, &b_v) in a_row.iter().zip(b_row) {
                acc += a_v * b_v;
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// C[m,n] = A[k,m]^T * B[k,n]. Accumulates rank-one updates row by row of A
/// and B, which again keeps every inner access contiguous.
pub fn matmul_tn<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![F::zero(); m * n];
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_v) in a_row.iter().enumerate() {
            if a_v == F::zero() {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v += a_v * b_v;
            }
        }
    }
    c
}

/// Adds `bias` (length `cols`) to every row of `x` in place.
pub fn add_bias_rows<F: Real>(x: &mut [F], bias: &[F], cols: usize) {
    debug_assert_eq!(x.len() % cols, 0);
    debug_assert_eq!(bias.len(), cols);
    for row in x.chunks_exact_mut(cols) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Numerically stable softmax applied to each row of `x` in place.
pub fn softmax_rows_inplace<F: Real>(x: &mut [F], cols: usize) {
    debug_assert_eq!(x.len() % cols, 0);
    for row in x.chunks_exact_mut(cols) {
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Index-by-index reference with the textbook loop order.
    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut t = vec![0.0; a.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = a[r * cols + c];
            }
        }
        t
    }

    fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn matmul_matches_hand_example() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f32, 2.0, 3.0, 4.0];
        let b = [5.0f32, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn all_variants_agree_with_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 2), (8, 4, 8), (7, 13, 5)] {
            let a = rand_vec(&mut rng, m * k);
            let b = rand_vec(&mut rng, k * n);
            let want = naive_matmul(&a, &b, m, k, n);
            let got = matmul(&a, &b, m, k, n);
            let got_nt = matmul_nt(&a, &transpose(&b, k, n), m, k, n);
            let got_tn = matmul_tn(&transpose(&a, m, k), &b, m, k, n);
            for i in 0..m * n {
                assert!((got[i] - want[i]).abs() < 1e-12, "matmul at {i}");
                assert!((got_nt[i] - want[i]).abs() < 1e-12, "matmul_nt at {i}");
                assert!((got_tn[i] - want[i]).abs() < 1e-12, "matmul_tn at {i}");
            }
        }
    }

    #[test]
    fn bias_broadcasts_per_row() {
        let mut x = vec![0.0f32, 1.0, 2.0, 3.0, 4.0, 5.0];
        add_bias_rows(&mut x, &[10.0, 20.0, 30.0], 3);
        assert_eq!(x, vec![10.0, 21.0, 32.0, 13.0, 24.0, 35.0]);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut x = vec![1.0f64, 2.0, 3.0, -5.0, 0.0, 5.0];
        softmax_rows_inplace(&mut x, 3);
        for row in x.chunks(3) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
        // Larger logit, larger probability.
        assert!(x[2] > x[1] && x[1] > x[0]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let mut x = vec![1000.0f32, 1001.0, 999.0];
        softmax_rows_inplace(&mut x, 3);
        let sum: f32 = x.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(x.iter().all(|p| p.is_finite()));
    }
}
