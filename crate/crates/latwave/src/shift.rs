//! Constant-coefficient shift polynomials `Σ_p a_p 𝐓^p` with `(𝐓U)_j = U_{j+1}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::ring::RingState;

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftPolynomial {
    dim: usize,
    terms: BTreeMap<i64, DMatrix<f64>>,
}

impl ShiftPolynomial {
    pub fn zero(dim: usize) -> Self {
        ShiftPolynomial { dim, terms: BTreeMap::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::monomial(0, DMatrix::identity(dim, dim))
    }

    /// `𝐓^p` acting componentwise.
    pub fn shift(dim: usize, p: i64) -> Self {
        Self::monomial(p, DMatrix::identity(dim, dim))
    }

    pub fn monomial(p: i64, coeff: DMatrix<f64>) -> Self {
        assert!(coeff.is_square(), "shift coefficients must be square");
        let mut s = Self::zero(coeff.nrows());
        s.add_term(p, coeff);
        s
    }

    /// Scalar stencil `Σ c_p 𝐓^p` times the identity.
    pub fn scalar(dim: usize, stencil: &[(i64, f64)]) -> Self {
        let mut s = Self::zero(dim);
        for &(p, c) in stencil {
            s.add_term(p, DMatrix::identity(dim, dim) * c);
        }
        s
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (i64, DMatrix<f64>)>) -> Self {
        let mut s = Self::zero(dim);
        for (p, a) in terms {
            s.add_term(p, a);
        }
        s
    }

    fn add_term(&mut self, p: i64, a: DMatrix<f64>) {
        assert_eq!((a.nrows(), a.ncols()), (self.dim, self.dim), "coefficient dimension");
        let e = self.terms.entry(p).or_insert_with(|| DMatrix::zeros(self.dim, self.dim));
        *e += a;
        if e.iter().all(|x| *x == 0.0) {
            self.terms.remove(&p);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &DMatrix<f64>)> {
        self.terms.iter().map(|(p, a)| (*p, a))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, p: i64) -> DMatrix<f64> {
        self.terms.get(&p).cloned().unwrap_or_else(|| DMatrix::zeros(self.dim, self.dim))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_terms(self.dim, self.terms().map(|(p, a)| (p, a * s)))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut r = self.clone();
        for (p, a) in other.terms() {
            r.add_term(p, a.clone());
        }
        r
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    /// Operator product `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut r = Self::zero(self.dim);
        for (p, a) in self.terms() {
            for (q, b) in other.terms() {
                r.add_term(p + q, a * b);
            }
        }
        r
    }

    /// `m · self` (constant matrix applied after the operator).
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Self {
        Self::from_terms(self.dim, self.terms().map(|(p, a)| (p, m * a)))
    }

    /// `self · m` (constant matrix applied before the operator).
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Self {
        Self::from_terms(self.dim, self.terms().map(|(p, a)| (p, a * m)))
    }

    /// ℓ² adjoint: `Σ a_pᵀ 𝐓^{-p}`.
    pub fn adjoint(&self) -> Self {
        Self::from_terms(self.dim, self.terms().map(|(p, a)| (-p, a.transpose())))
    }

    /// Whether the operator maps every constant sequence to zero.
    pub fn annihilates_constants(&self) -> bool {
        let mut s = DMatrix::<f64>::zeros(self.dim, self.dim);
        let mut scale = 0.0f64;
        for (_, a) in self.terms() {
            s += a;
            scale = scale.max(a.amax());
        }
        s.amax() <= 1e-14 * scale.max(1.0)
    }

    /// `(PU)_j = Σ_p a_p U_{j+p mod L}`.
    pub fn apply(&self, u: &RingState) -> RingState {
        assert_eq!(u.dim(), self.dim, "ring dimension");
        let mut out = RingState::zeros(u.sites(), self.dim);
        for j in 0..u.sites() {
            let o = out.site_mut(j);
            for (p, a) in self.terms() {
                let src = u.site_offset(j, p);
                for r in 0..self.dim {
                    let mut acc = 0.0;
                    for c in 0..self.dim {
                        acc += a[(r, c)] * src[c];
                    }
                    o[r] += acc;
                }
            }
        }
        out
    }

    /// Bloch symbol on `N` sites: `𝐓 ↦ e^{iξ}𝐓_N`, an `Nd × Nd` complex matrix.
    pub fn symbol_matrix(&self, xi: f64, n: usize) -> DMatrix<Complex64> {
        assert!(n >= 1);
        let d = self.dim;
        let mut m = DMatrix::<Complex64>::zeros(n * d, n * d);
        for (p, a) in self.terms() {
            let phase = Complex64::from_polar(1.0, p as f64 * xi);
            for j in 0..n {
                let col = (j as i64 + p).rem_euclid(n as i64) as usize;
                for r in 0..d {
                    for c in 0..d {
                        m[(j * d + r, col * d + c)] += phase * a[(r, c)];
                    }
                }
            }
        }
        m
    }

    /// Symbol at a single plane wave `e^{iθj}`: `Σ_p a_p e^{ipθ}` (d × d).
    pub fn plane_wave_symbol(&self, theta: f64) -> DMatrix<Complex64> {
        let mut m = DMatrix::<Complex64>::zeros(self.dim, self.dim);
        for (p, a) in self.terms() {
            let phase = Complex64::from_polar(1.0, p as f64 * theta);
            m += a.map(|x| phase * x);
        }
        m
    }

    /// Action on a 1-periodic profile where `𝐓` is the shift by `k`:
    /// the block multiplying Fourier mode `n`.
    pub fn mode_block(&self, n: i64, k: f64) -> DMatrix<Complex64> {
        self.plane_wave_symbol(2.0 * PI * k * n as f64)
    }

    /// Coefficients of `iξ` and `(iξ)²` in the ξ-expansion of the symbol.
    pub fn bloch_expand(&self) -> (Self, Self) {
        let p1 = Self::from_terms(self.dim, self.terms().map(|(p, a)| (p, a * p as f64)));
        let p2 = Self::from_terms(
            self.dim,
            self.terms().map(|(p, a)| (p, a * (0.5 * (p * p) as f64))),
        );
        (p1, p2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn shift_moves_delta_backwards() {
        let mut u = RingState::zeros(4, 1);
        u.site_mut(0)[0] = 1.0;
        let v = ShiftPolynomial::shift(1, 1).apply(&u);
        assert_eq!(v.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn difference_kills_constants() {
        let p = ShiftPolynomial::scalar(2, &[(1, 0.7), (0, -0.7)]);
        assert!(p.annihilates_constants());
        let u = RingState::constant(5, &[1.3, -2.0]);
        assert!(p.apply(&u).max_abs() == 0.0);
    }

    #[test]
    fn laplacian_cosine_eigenvector() {
        let (l, mu) = (9usize, 0.4);
        let lap = ShiftPolynomial::scalar(1, &[(1, mu), (0, -2.0 * mu), (-1, mu)]);
        let u = RingState::from_fn(l, 1, |j, s| s[0] = (2.0 * PI * j as f64 / l as f64).cos());
        let v = lap.apply(&u);
        let lam = 2.0 * mu * ((2.0 * PI / l as f64).cos() - 1.0);
        for j in 0..l {
            assert!((v.site(j)[0] - lam * u.site(j)[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn symbol_of_shift_on_two_sites() {
        let xi = 0.3;
        let m = ShiftPolynomial::shift(1, 1).symbol_matrix(xi, 2);
        let e = Complex64::from_polar(1.0, xi);
        let expect = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), e, e, c(0.0, 0.0)]);
        assert!((m - expect).norm() < 1e-15);
    }

    #[test]
    fn symbol_of_laplacian_single_site() {
        let mu = 0.8;
        let xi = 1.1;
        let lap = ShiftPolynomial::scalar(1, &[(1, mu), (0, -2.0 * mu), (-1, mu)]);
        let m = lap.symbol_matrix(xi, 1);
        assert!((m[(0, 0)] - c(2.0 * mu * (xi.cos() - 1.0), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn laplacian_expansion() {
        let mu = 0.5;
        let lap = ShiftPolynomial::scalar(1, &[(1, mu), (0, -2.0 * mu), (-1, mu)]);
        let (p1, p2) = lap.bloch_expand();
        assert_eq!(p1, ShiftPolynomial::scalar(1, &[(1, mu), (-1, -mu)]));
        assert_eq!(p2, ShiftPolynomial::scalar(1, &[(1, 0.5 * mu), (-1, 0.5 * mu)]));
        let (i1, i2) = ShiftPolynomial::identity(3).bloch_expand();
        assert!(i1.is_zero() && i2.is_zero());
    }

    #[test]
    fn compose_matches_sequential_application() {
        let a = ShiftPolynomial::scalar(1, &[(1, 2.0), (0, -1.0)]);
        let b = ShiftPolynomial::scalar(1, &[(-1, 0.5), (2, 3.0)]);
        let u = RingState::from_fn(7, 1, |j, s| s[0] = (j as f64).sin());
        let lhs = a.compose(&b).apply(&u);
        let rhs = a.apply(&b.apply(&u));
        assert!((lhs.max_abs() - rhs.max_abs()).abs() < 1e-14);
        for j in 0..7 {
            assert!((lhs.site(j)[0] - rhs.site(j)[0]).abs() < 1e-14);
        }
    }

    fn arb_poly(d: usize) -> impl Strategy<Value = ShiftPolynomial> {
        prop::collection::vec((-3i64..=3, prop::collection::vec(-1.0f64..1.0, d * d)), 1..4)
            .prop_map(move |ts| {
                ShiftPolynomial::from_terms(
                    d,
                    ts.into_iter().map(|(p, v)| (p, DMatrix::from_vec(d, d, v))),
                )
            })
    }

    proptest! {
        #[test]
        fn apply_is_linear_and_rotation_equivariant(
            p in arb_poly(2),
            a in prop::collection::vec(-1.0f64..1.0, 10),
            b in prop::collection::vec(-1.0f64..1.0, 10),
            s in -2.0f64..2.0,
            rot in -6i64..6,
        ) {
            let ua = RingState::from_vec(2, a);
            let ub = RingState::from_vec(2, b);
            let mut comb = ua.clone();
            comb.axpy(s, &ub);
            let mut expect = p.apply(&ua);
            expect.axpy(s, &p.apply(&ub));
            let got = p.apply(&comb);
            for (x, y) in got.as_slice().iter().zip(expect.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let r1 = p.apply(&ua.rotated(rot));
            let r2 = p.apply(&ua).rotated(rot);
            for (x, y) in r1.as_slice().iter().zip(r2.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn symbol_conjugation_and_periodicity(p in arb_poly(2), xi in -3.0f64..3.0, n in 1usize..5) {
            let s = p.symbol_matrix(xi, n);
            let sm = p.symbol_matrix(-xi, n);
            prop_assert!((s.map(|z| z.conj()) - sm).norm() < 1e-12);
            let s2 = p.symbol_matrix(xi + 2.0 * PI, n);
            prop_assert!((s - s2).norm() < 1e-12);
        }

        #[test]
        fn expansion_matches_finite_differences(p in arb_poly(2), n in 1usize..4) {
            let (p1, p2) = p.bloch_expand();
            let h = 1e-2;
            let f = |x: f64| p.symbol_matrix(x, n);
            let r = |x: f64| Complex64::new(x, 0.0);
            let d1 = (f(-2.0 * h) - f(-h) * r(8.0) + f(h) * r(8.0) - f(2.0 * h)) * r(1.0 / (12.0 * h));
            let d2 = (-f(-2.0 * h) + f(-h) * r(16.0) - f(0.0) * r(30.0) + f(h) * r(16.0) - f(2.0 * h))
                * r(1.0 / (12.0 * h * h));
            let i = Complex64::i();
            // d/dξ = i·P1, d²/dξ² = 2·i²·P2
            let e1 = d1 - p1.symbol_matrix(0.0, n) * i;
            let e2 = d2 + p2.symbol_matrix(0.0, n) * r(2.0);
            prop_assert!(e1.norm() < 1e-6, "first {}", e1.norm());
            prop_assert!(e2.norm() < 1e-5, "second {}", e2.norm());
        }

        #[test]
        fn expansion_remainder_is_cubic(p in arb_poly(1)) {
            let (p1, p2) = p.bloch_expand();
            let i = Complex64::i();
            let rem = |x: f64| {
                (p.symbol_matrix(x, 3)
                    - p.symbol_matrix(0.0, 3)
                    - p1.symbol_matrix(0.0, 3) * (i * x)
                    - p2.symbol_matrix(0.0, 3) * (i * x) * (i * x))
                    .norm()
            };
            let (r1, r2) = (rem(0.01), rem(0.02));
            if r2 > 1e-12 {
                let slope = (r2 / r1).ln() / 2f64.ln();
                prop_assert!(slope > 2.7, "slope {}", slope);
            }
        }
    }
}
