use crate::ring::RingState;
use crate::shift::ShiftPolynomial;

/// A sequence-like object on which the class vector fields can be evaluated:
/// constant-coefficient shifts plus pointwise maps.
pub trait LatticeField: Clone {
    fn dim(&self) -> usize;
    fn apply_op(&self, op: &ShiftPolynomial) -> Self;
    fn map_local(&self, out_dim: usize, f: &dyn Fn(&[f64], &mut [f64])) -> Self;
    fn map_pair(&self, other: &Self, out_dim: usize, f: &dyn Fn(&[f64], &[f64], &mut [f64]))
        -> Self;
    fn add(&self, other: &Self) -> Self;
}

impl LatticeField for RingState {
    fn dim(&self) -> usize {
        RingState::dim(self)
    }

    fn apply_op(&self, op: &ShiftPolynomial) -> Self {
        op.apply(self)
    }

    fn map_local(&self, out_dim: usize, f: &dyn Fn(&[f64], &mut [f64])) -> Self {
        RingState::from_fn(self.sites(), out_dim, |j, o| f(self.site(j), o))
    }

    fn map_pair(
        &self,
        other: &Self,
        out_dim: usize,
        f: &dyn Fn(&[f64], &[f64], &mut [f64]),
    ) -> Self {
        assert_eq!(self.sites(), other.sites());
        RingState::from_fn(self.sites(), out_dim, |j, o| f(self.site(j), other.site(j), o))
    }

    fn add(&self, other: &Self) -> Self {
        let mut r = self.clone();
        r.axpy(1.0, other);
        r
    }
}
