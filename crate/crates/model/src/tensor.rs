//! Dense row-major f64 tensors and the handful of kernels the model needs.
//! Kernels are single-threaded and use a fixed summation order, so results
//! are bitwise reproducible.

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// SHA-256 over the shape and the little-endian bytes of the values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.shape {
            h.update((*d as u64).to_le_bytes());
        }
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// `out (m×n) += a (m×k) · b (k×n)`
pub fn matmul_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert!(out.len() == m * n && a.len() == m * k && b.len() == k * n);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `a (m×k) · b (k×n) + bias (n)`
pub fn linear(a: &[f64], w: &[f64], bias: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(bias);
    }
    matmul_acc(&mut out, a, w, m, k, n);
    out
}

/// `out (m×k) += a (m×n) · bᵀ` where `b` is (k×n).
pub fn matmul_bt_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, n: usize, k: usize) {
    debug_assert!(out.len() == m * k && a.len() == m * n && b.len() == k * n);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            out[i * k + j] += dot(arow, &b[j * n..(j + 1) * n]);
        }
    }
}

/// `out (k×n) += aᵀ · b` where `a` is (m×k) and `b` is (m×n).
pub fn matmul_at_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert!(out.len() == k * n && a.len() == m * k && b.len() == m * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Column sums of an (m×n) matrix added into `out`.
pub fn col_sum_acc(out: &mut [f64], a: &[f64], m: usize, n: usize) {
    for i in 0..m {
        for (o, v) in out.iter_mut().zip(&a[i * n..(i + 1) * n]) {
            *o += v;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums; fixed order keeps results reproducible
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn add_assign(out: &mut [f64], a: &[f64]) {
    for (o, v) in out.iter_mut().zip(a) {
        *o += v;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// tanh approximation of GELU
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// In-place softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub const LN_EPS: f64 = 1e-5;

/// LayerNorm over rows of width `n`. Returns (output, normalized input,
/// reciprocal standard deviations).
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = x.len() / n;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; m];
    for i in 0..m {
        let row = &x[i * n..(i + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..n {
            let h = (row[j] - mean) * r;
            xhat[i * n + j] = h;
            y[i * n + j] = gamma[j] * h + beta[j];
        }
    }
    (y, xhat, rstd)
}

/// Backward of [`layer_norm`]: adds into `dx`, and into `dgamma`/`dbeta`
/// when given.
pub fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    rstd: &[f64],
    gamma: &[f64],
    n: usize,
    dx: &mut [f64],
    mut dgamma: Option<&mut [f64]>,
    mut dbeta: Option<&mut [f64]>,
) {
    let m = rstd.len();
    for i in 0..m {
        let dyr = &dy[i * n..(i + 1) * n];
        let xr = &xhat[i * n..(i + 1) * n];
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for j in 0..n {
            let d = dyr[j] * gamma[j];
            mean_d += d;
            mean_dx += d * xr[j];
        }
        mean_d /= n as f64;
        mean_dx /= n as f64;
        for j in 0..n {
            let d = dyr[j] * gamma[j];
            dx[i * n + j] += rstd[i] * (d - mean_d - xr[j] * mean_dx);
        }
        if let Some(g) = dgamma.as_deref_mut() {
            for j in 0..n {
                g[j] += dyr[j] * xr[j];
            }
        }
        if let Some(b) = dbeta.as_deref_mut() {
            add_assign(b, dyr);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        out
    }

    fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
        let mut t = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                t[j * m + i] = a[i * n + j];
            }
        }
        t
    }

    fn seq(len: usize, s: f64) -> Vec<f64> {
        (0..len).map(|i| ((i as f64 + 1.0) * s).sin()).collect()
    }

    #[test]
    fn kernels_agree_with_naive() {
        let (m, k, n) = (3, 5, 7);
        let a = seq(m * k, 0.7);
        let b = seq(k * n, 1.3);
        let want = naive(&a, &b, m, k, n);

        let mut out = vec![0.0; m * n];
        matmul_acc(&mut out, &a, &b, m, k, n);
        out.iter().zip(&want).for_each(|(x, y)| assert!((x - y).abs() < 1e-12));

        let bt = transpose(&b, k, n);
        let mut out = vec![0.0; m * n];
        matmul_bt_acc(&mut out, &a, &bt, m, k, n);
        out.iter().zip(&want).for_each(|(x, y)| assert!((x - y).abs() < 1e-12));

        let at = transpose(&a, m, k);
        let mut out = vec![0.0; m * n];
        matmul_at_acc(&mut out, &at, &b, k, m, n);
        out.iter().zip(&want).for_each(|(x, y)| assert!((x - y).abs() < 1e-12));
    }

    #[test]
    fn gelu_derivative() {
        for x in [-3.0, -0.5, 0.0, 0.3, 2.0] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = seq(12, 0.9);
        let (y, _, _) = layer_norm(&x, &[1.0; 4], &[0.0; 4], 4);
        for r in y.chunks(4) {
            let mean: f64 = r.iter().sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn checksum_tracks_bits() {
        let a = Tensor::from_vec(&[2], vec![0.0, 1.0]);
        let b = Tensor::from_vec(&[2], vec![-0.0, 1.0]);
        assert_ne!(a.checksum(), b.checksum());
        assert!(!a.bit_eq(&b));
        assert!(a.bit_eq(&a.clone()));
    }
}
