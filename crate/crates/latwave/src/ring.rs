//! Finite ring realization of a lattice state.

use serde::{Deserialize, Serialize};

/// `L` sites with `d` real components each, stored site-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingState {
    dim: usize,
    data: Vec<f64>,
}

impl RingState {
    pub fn zeros(sites: usize, dim: usize) -> Self {
        assert!(sites >= 1 && dim >= 1, "ring needs at least one site and one component");
        RingState { dim, data: vec![0.0; sites * dim] }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim >= 1 && !data.is_empty() && data.len().is_multiple_of(dim));
        RingState { dim, data }
    }

    pub fn from_fn(sites: usize, dim: usize, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut r = Self::zeros(sites, dim);
        for j in 0..sites {
            f(j, r.site_mut(j));
        }
        r
    }

    pub fn constant(sites: usize, value: &[f64]) -> Self {
        Self::from_fn(sites, value.len(), |_, s| s.copy_from_slice(value))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn site(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn site_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    /// Site `j + p` with cyclic wrap; `p` may be negative.
    pub fn site_offset(&self, j: usize, p: i64) -> &[f64] {
        let l = self.sites() as i64;
        self.site((j as i64 + p).rem_euclid(l) as usize)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn axpy(&mut self, a: f64, x: &RingState) {
        assert_eq!(self.data.len(), x.data.len());
        for (y, xi) in self.data.iter_mut().zip(&x.data) {
            *y += a * xi;
        }
    }

    pub fn scaled(&self, a: f64) -> RingState {
        RingState { dim: self.dim, data: self.data.iter().map(|x| a * x).collect() }
    }

    /// Cyclic rotation: result site `j` holds site `j + p`.
    pub fn rotated(&self, p: i64) -> RingState {
        Self::from_fn(self.sites(), self.dim, |j, s| s.copy_from_slice(self.site_offset(j, p)))
    }

    /// Sum over sites, per component.
    pub fn component_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        for j in 0..self.sites() {
            for (c, v) in self.site(j).iter().enumerate() {
                s[c] += v;
            }
        }
        s
    }
}
