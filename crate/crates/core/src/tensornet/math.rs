//! Scalar kernels for the hot loops.
//!
//! Dot products use four independent accumulators so the FP add chain
//! pipelines; the summation order is fixed, keeping results bit-identical
//! across runs and thread counts.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dot product with a fixed 4-way accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

/// `y = W x` for row-major `W` of shape `[rows, cols]`.
#[inline]
pub fn matvec(y: &mut [f64], w: &[f64], x: &[f64], rows: usize, cols: usize) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(x.len(), cols);
    for (r, yr) in y.iter_mut().enumerate() {
        *yr = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += W^T d` for row-major `W` of shape `[rows, cols]`.
#[inline]
pub fn matvec_t_acc(out: &mut [f64], w: &[f64], d: &[f64], rows: usize, cols: usize) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(out.len(), cols);
    debug_assert_eq!(d.len(), rows);
    for (r, &dr) in d.iter().enumerate() {
        if dr != 0.0 {
            axpy(out, dr, &w[r * cols..(r + 1) * cols]);
        }
    }
}

/// Rank-one accumulation `G += d x^T` into row-major `G` of shape `[rows, cols]`.
#[inline]
pub fn outer_acc(g: &mut [f64], d: &[f64], x: &[f64], rows: usize, cols: usize) {
    debug_assert_eq!(g.len(), rows * cols);
    for (r, &dr) in d.iter().enumerate().take(rows) {
        if dr != 0.0 {
            axpy(&mut g[r * cols..(r + 1) * cols], dr, x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn matvec_against_hand_example() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let x = [1.0, 0.5, -1.0];
        let mut y = [0.0; 2];
        matvec(&mut y, &w, &x, 2, 3);
        assert_eq!(y, [-1.0, 0.5]);

        let mut xt = [0.0; 3];
        matvec_t_acc(&mut xt, &w, &[1.0, -1.0], 2, 3);
        assert_eq!(xt, [-3.0, -3.0, -3.0]);
    }
}
