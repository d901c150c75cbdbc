//! Discrete Bloch transform on rings of `L = N·P` sites.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::BlochError;
use crate::ring::RingState;

/// `f̌(j, ξ_m)` for `j < N` and the `P` sampled exponents `ξ_m = 2πm/L ∈ [−π/N, π/N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochSample {
    pub n: usize,
    pub p: usize,
    pub dim: usize,
    pub xi: Vec<f64>,
    /// `values[m][j·d + c]`.
    pub values: Vec<Vec<Complex64>>,
}

impl BlochSample {
    pub fn get(&self, j: usize, m: usize) -> &[Complex64] {
        &self.values[m][j * self.dim..(j + 1) * self.dim]
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().flatten().map(|z| z.norm_sqr()).sum()
    }
}

/// Sampled exponents `2πm/L` for `m = ⌈−P/2⌉, …, ⌈P/2⌉ − 1`.
pub fn sampled_exponents(n: usize, p: usize) -> Vec<f64> {
    let l = (n * p) as f64;
    let lo = -((p / 2) as i64);
    (0..p as i64).map(|i| 2.0 * std::f64::consts::PI * (lo + i) as f64 / l).collect()
}

pub fn dbt(f: &RingState, n: usize) -> Result<BlochSample, BlochError> {
    let l = f.sites();
    if n == 0 || !l.is_multiple_of(n) {
        return Err(BlochError::Divisibility { sites: l, n });
    }
    let p = l / n;
    let d = f.dim();
    let xi = sampled_exponents(n, p);
    let values = xi
        .iter()
        .map(|&x| {
            let mut v = vec![Complex64::new(0.0, 0.0); n * d];
            for kappa in 0..p {
                for j in 0..n {
                    let site = kappa * n + j;
                    let ph = Complex64::from_polar(1.0, -(site as f64) * x);
                    for (c, val) in f.site(site).iter().enumerate() {
                        v[j * d + c] += ph * *val;
                    }
                }
            }
            v
        })
        .collect();
    Ok(BlochSample { n, p, dim: d, xi, values })
}

/// Complex inverse transform, site-major.
pub fn idbt_complex(s: &BlochSample) -> Vec<Complex64> {
    let (n, p, d) = (s.n, s.p, s.dim);
    let mut out = vec![Complex64::new(0.0, 0.0); n * p * d];
    for (m, &x) in s.xi.iter().enumerate() {
        for kappa in 0..p {
            for j in 0..n {
                let site = kappa * n + j;
                let ph = Complex64::from_polar(1.0 / p as f64, site as f64 * x);
                for c in 0..d {
                    out[site * d + c] += ph * s.values[m][j * d + c];
                }
            }
        }
    }
    out
}

/// Inverse transform of the transform of a real ring state.
pub fn idbt(s: &BlochSample) -> RingState {
    RingState::from_vec(s.dim, idbt_complex(s).into_iter().map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delta_at_origin() {
        let mut f = RingState::zeros(12, 1);
        f.site_mut(0)[0] = 1.0;
        let s = dbt(&f, 3).unwrap();
        for m in 0..s.p {
            assert_eq!(s.get(0, m)[0], Complex64::new(1.0, 0.0));
            assert_eq!(s.get(1, m)[0], Complex64::new(0.0, 0.0));
            assert_eq!(s.get(2, m)[0], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn delta_at_site_three() {
        let mut f = RingState::zeros(8, 1);
        f.site_mut(3)[0] = 1.0;
        let s = dbt(&f, 2).unwrap();
        for m in 0..s.p {
            assert!((s.get(1, m)[0] - Complex64::from_polar(1.0, -3.0 * s.xi[m])).norm() < 1e-15);
            assert_eq!(s.get(0, m)[0], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn exponents_cover_the_reduced_zone() {
        let xi = sampled_exponents(3, 8);
        let lim = std::f64::consts::PI / 3.0;
        assert_eq!(xi.len(), 8);
        assert!((xi[0] + lim).abs() < 1e-15);
        assert!(xi.iter().all(|x| *x >= -lim - 1e-15 && *x < lim));
        let xi = sampled_exponents(2, 5);
        assert!(xi.iter().all(|x| *x >= -std::f64::consts::FRAC_PI_2 && *x < std::f64::consts::FRAC_PI_2));
    }

    #[test]
    fn divisibility_is_checked() {
        assert!(matches!(dbt(&RingState::zeros(10, 1), 3), Err(BlochError::Divisibility { .. })));
    }

    proptest! {
        #[test]
        fn roundtrip_and_parseval(data in prop::collection::vec(-1.0f64..1.0, 72), nsel in 0usize..3, psel in 0usize..2) {
            let n = [2usize, 3, 6][nsel];
            let p = [4usize, 8][psel];
            let l = n * p;
            let d = (72 / l).min(3);
            let f = RingState::from_vec(d, data[..l * d].to_vec());
            let s = dbt(&f, n).unwrap();
            let back = idbt(&s);
            let err = f.as_slice().iter().zip(back.as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            prop_assert!(err <= 1e-12);
            let lhs = s.norm_sq();
            let rhs = p as f64 * f.as_slice().iter().map(|x| x * x).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}
