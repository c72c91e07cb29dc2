//! Minimal dense linear algebra on flat slices, generic over the scalar.

use crate::num::Real;

/// out += W x, with W stored row-major as rows x cols.
pub fn matvec_add<T: Real>(w: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::zero();
        for (a, b) in row.iter().zip(x) {
            acc = acc + *a * *b;
        }
        out[r] = out[r] + acc;
    }
}

/// dx += W^T dy.
pub fn matvec_t_add<T: Real>(w: &[T], rows: usize, cols: usize, dy: &[T], dx: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(dy.len(), rows);
    debug_assert_eq!(dx.len(), cols);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let g = dy[r];
        for (d, a) in dx.iter_mut().zip(row) {
            *d = *d + *a * g;
        }
    }
}

/// gw += dy ⊗ x (outer product).
pub fn outer_add<T: Real>(gw: &mut [T], dy: &[T], x: &[T]) {
    debug_assert_eq!(gw.len(), dy.len() * x.len());
    for (r, g) in dy.iter().enumerate() {
        let row = &mut gw[r * x.len()..(r + 1) * x.len()];
        for (w, a) in row.iter_mut().zip(x) {
            *w = *w + *g * *a;
        }
    }
}

pub fn add_assign<T: Real>(out: &mut [T], x: &[T]) {
    for (o, a) in out.iter_mut().zip(x) {
        *o = *o + *a;
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy loss of a softmax distribution and the gradient with
/// respect to the logits (p - onehot(target)).
pub fn softmax_ce<T: Real>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let probs = softmax(logits);
    let eps = T::from_f64_lossy(1e-30);
    let loss = -(probs[target] + eps).ln();
    let mut dlogits = probs;
    dlogits[target] = dlogits[target] - T::one();
    (loss, dlogits)
}
