//! Gated recurrent cell with manual forward and backward passes.
//!
//! Cell contract:
//!   z = sigmoid(Wz x + Uz h + bz)
//!   r = sigmoid(Wr x + Ur h + br)
//!   c = tanh(Wh x + Uh (r * h) + bh)
//!   h' = (1 - z) * h + z * c
//!
//! Parameters live in one flat vector shared by the whole model; each tensor
//! is addressed through a [`View`].

use super::math::{add_assign, matvec_add, matvec_t_add, outer_add, sigmoid};
use crate::num::Real;

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct View {
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
}

impl View {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn of<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        &params[self.off..self.off + self.len()]
    }

    pub fn of_mut<'a, T>(&self, params: &'a mut [T]) -> &'a mut [T] {
        &mut params[self.off..self.off + self.len()]
    }
}

/// One GRU layer: three gate kernels over the input, three over the state,
/// and three biases.
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    pub in_dim: usize,
    pub hid: usize,
    pub wz: View,
    pub uz: View,
    pub bz: View,
    pub wr: View,
    pub ur: View,
    pub br: View,
    pub wh: View,
    pub uh: View,
    pub bh: View,
}

/// Intermediate activations of one cell step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CellCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub c: Vec<T>,
}

impl Gru {
    /// Advances the cell one step, returning h' and the cache.
    pub fn step<T: Real>(&self, params: &[T], x: &[T], h_prev: &[T]) -> (Vec<T>, CellCache<T>) {
        let h = self.hid;
        let gate = |w: View, u: View, b: View, uin: &[T]| -> Vec<T> {
            let mut a = b.of(params).to_vec();
            matvec_add(w.of(params), h, self.in_dim, x, &mut a);
            matvec_add(u.of(params), h, h, uin, &mut a);
            a
        };
        let z: Vec<T> = gate(self.wz, self.uz, self.bz, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<T> = gate(self.wr, self.ur, self.br, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<T> = r.iter().zip(h_prev).map(|(&a, &b)| a * b).collect();
        let c: Vec<T> = gate(self.wh, self.uh, self.bh, &rh)
            .into_iter()
            .map(|a| a.tanh())
            .collect();
        let h_new: Vec<T> = (0..h)
            .map(|i| (T::one() - z[i]) * h_prev[i] + z[i] * c[i])
            .collect();
        let cache = CellCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            c,
        };
        (h_new, cache)
    }

    /// Backpropagates one step. `dh` is the loss gradient at h'; gradients
    /// are accumulated into `grads`, and the gradients with respect to the
    /// step input and previous state are returned.
    pub fn step_backward<T: Real>(
        &self,
        params: &[T],
        grads: &mut [T],
        cache: &CellCache<T>,
        dh: &[T],
    ) -> (Vec<T>, Vec<T>) {
        let h = self.hid;
        let one = T::one();
        let mut dx = vec![T::zero(); self.in_dim];
        let mut dh_prev: Vec<T> = (0..h).map(|i| dh[i] * (one - cache.z[i])).collect();

        // Candidate branch.
        let da_c: Vec<T> = (0..h)
            .map(|i| dh[i] * cache.z[i] * (one - cache.c[i] * cache.c[i]))
            .collect();
        let rh: Vec<T> = cache
            .r
            .iter()
            .zip(&cache.h_prev)
            .map(|(&a, &b)| a * b)
            .collect();
        outer_add(self.wh.of_mut(grads), &da_c, &cache.x);
        outer_add(self.uh.of_mut(grads), &da_c, &rh);
        add_assign(self.bh.of_mut(grads), &da_c);
        matvec_t_add(self.wh.of(params), h, self.in_dim, &da_c, &mut dx);
        let mut drh = vec![T::zero(); h];
        matvec_t_add(self.uh.of(params), h, h, &da_c, &mut drh);
        for i in 0..h {
            dh_prev[i] = dh_prev[i] + drh[i] * cache.r[i];
        }

        // Reset gate.
        let da_r: Vec<T> = (0..h)
            .map(|i| drh[i] * cache.h_prev[i] * cache.r[i] * (one - cache.r[i]))
            .collect();
        outer_add(self.wr.of_mut(grads), &da_r, &cache.x);
        outer_add(self.ur.of_mut(grads), &da_r, &cache.h_prev);
        add_assign(self.br.of_mut(grads), &da_r);
        matvec_t_add(self.wr.of(params), h, self.in_dim, &da_r, &mut dx);
        matvec_t_add(self.ur.of(params), h, h, &da_r, &mut dh_prev);

        // Update gate.
        let da_z: Vec<T> = (0..h)
            .map(|i| {
                dh[i] * (cache.c[i] - cache.h_prev[i]) * cache.z[i] * (one - cache.z[i])
            })
            .collect();
        outer_add(self.wz.of_mut(grads), &da_z, &cache.x);
        outer_add(self.uz.of_mut(grads), &da_z, &cache.h_prev);
        add_assign(self.bz.of_mut(grads), &da_z);
        matvec_t_add(self.wz.of(params), h, self.in_dim, &da_z, &mut dx);
        matvec_t_add(self.uz.of(params), h, h, &da_z, &mut dh_prev);

        (dx, dh_prev)
    }
}
