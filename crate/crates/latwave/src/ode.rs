//! Dormand–Prince 5(4) integrator with step-size control and dense output.

use num_complex::Complex64;
use thiserror::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
}

/// Scalars the integrator can carry.
pub trait OdeScalar: Copy + Send + Sync + Default + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> + std::ops::Mul<f64, Output = Self> {
    fn modulus(self) -> f64;
    fn finite(self) -> bool;
}

impl OdeScalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl OdeScalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, ..Default::default() }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-10, h_init: None, max_steps: 2_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct OdeSolution<T> {
    pub y_end: Vec<T>,
    /// States at the requested sample times, in request order.
    pub samples: Vec<Vec<T>>,
    pub stats: OdeStats,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combo<T: OdeScalar>(out: &mut [T], y: &[T], h: f64, terms: &[(f64, &[T])]) {
    for i in 0..out.len() {
        let mut acc = T::default();
        for (c, k) in terms {
            if *c != 0.0 {
                acc = acc + k[i] * *c;
            }
        }
        out[i] = y[i] + acc * h;
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction), returning
/// the endpoint and dense-output states at `sample_times`; samples outside the span come back empty.
pub fn integrate<T: OdeScalar>(
    mut f: impl FnMut(f64, &[T], &mut [T]),
    t0: f64,
    y0: &[T],
    t_end: f64,
    sample_times: &[f64],
    opts: &OdeOptions,
) -> Result<OdeSolution<T>, OdeError> {
    let n = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut stats = OdeStats::default();
    let mut samples: Vec<Option<Vec<T>>> = vec![None; sample_times.len()];
    let mut order: Vec<usize> = (0..sample_times.len()).collect();
    order.sort_by(|&a, &b| (dir * sample_times[a]).total_cmp(&(dir * sample_times[b])));
    let mut next_sample = 0;
    let mut y = y0.to_vec();
    while next_sample < order.len() && (sample_times[order[next_sample]] - t0) * dir <= 0.0 {
        samples[order[next_sample]] = Some(y.clone());
        next_sample += 1;
    }
    if span == 0.0 {
        return Ok(OdeSolution { y_end: y, samples: samples.into_iter().map(|s| s.unwrap_or_default()).collect(), stats });
    }
    let err_norm = |a: &[T], b: &[T], e: &[T]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            let sc = opts.atol + opts.rtol * a[i].modulus().max(b[i].modulus());
            let r = e[i].modulus() / sc;
            s += r * r;
        }
        (s / n.max(1) as f64).sqrt()
    };
    let mut k1 = vec![T::default(); n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (k1.clone(), k1.clone(), k1.clone(), k1.clone(), k1.clone(), k1.clone());
    let mut tmp = k1.clone();
    let mut y1 = k1.clone();
    let mut err = k1.clone();
    let zero = k1.clone();
    let mut t = t0;
    f(t, &y, &mut k1);
    stats.evaluations += 1;
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => {
            let d0 = err_norm(&y, &y, &y);
            let d1 = err_norm(&y, &y, &k1);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span);
            combo(&mut tmp, &y, h0 * dir, &[(1.0, &k1)]);
            f(t + h0 * dir, &tmp, &mut k2);
            stats.evaluations += 1;
            for i in 0..n {
                err[i] = (k2[i] - k1[i]) * (1.0 / h0);
            }
            let d2 = err_norm(&y, &y, &err);
            let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
            (100.0 * h0).min(h1).min(span)
        }
    };
    let h_min = 16.0 * f64::EPSILON * (t0.abs().max(t_end.abs())).max(span);
    let mut last_rejected = false;
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OdeError::TooManySteps(opts.max_steps));
        }
        let remaining = (t_end - t) * dir;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < h_min {
            return Err(OdeError::StepUnderflow { t, h });
        }
        let hs = h * dir;
        combo(&mut tmp, &y, hs, &[(A21, &k1)]);
        f(t + C2 * hs, &tmp, &mut k2);
        combo(&mut tmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
        f(t + C3 * hs, &tmp, &mut k3);
        combo(&mut tmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(t + C4 * hs, &tmp, &mut k4);
        combo(&mut tmp, &y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        f(t + C5 * hs, &tmp, &mut k5);
        combo(&mut tmp, &y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        f(t + hs, &tmp, &mut k6);
        combo(&mut y1, &y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if last { t_end } else { t + hs };
        f(t_new, &y1, &mut k7);
        stats.evaluations += 6;
        combo(&mut err, &zero, hs, &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)]);
        let e = err_norm(&y, &y1, &err);
        if !e.is_finite() {
            if y1.iter().any(|z| !z.finite()) && h <= h_min * 1e3 {
                return Err(OdeError::NonFiniteState { t });
            }
            h *= 0.2;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }
        if e <= 1.0 {
            stats.accepted += 1;
            // Dense output for samples inside (t, t_new].
            while next_sample < order.len() && (sample_times[order[next_sample]] - t_new) * dir <= 0.0 {
                let ts = sample_times[order[next_sample]];
                let theta = (ts - t) / hs;
                let th1 = 1.0 - theta;
                let mut ys = vec![T::default(); n];
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = k1[i] * hs - ydiff;
                    let r4 = ydiff - k7[i] * hs - bspl;
                    let r5 = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * hs;
                    ys[i] = y[i] + (ydiff + (bspl + (r4 + r5 * th1) * theta) * th1) * theta;
                }
                samples[order[next_sample]] = Some(ys);
                next_sample += 1;
            }
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            if y.iter().any(|z| !z.finite()) {
                return Err(OdeError::NonFiniteState { t });
            }
            if last {
                break;
            }
            let mut fac = 0.9 * e.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * e.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    // Requests past the end by rounding only take the endpoint; farther ones stay empty.
    let slack = 1e-12 * t_end.abs().max(span);
    let samples = samples
        .into_iter()
        .zip(sample_times)
        .map(|(s, &ts)| s.unwrap_or_else(|| if (ts - t_end) * dir <= slack { y.clone() } else { Vec::new() }))
        .collect();
    Ok(OdeSolution { y_end: y, samples, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let sol = integrate(|_, y: &[f64], o: &mut [f64]| o[0] = -y[0], 0.0, &[1.0], 2.0, &[0.5, 1.0], &OdeOptions::with_tol(1e-12)).unwrap();
        assert!((sol.y_end[0] - (-2.0f64).exp()).abs() < 1e-11);
        assert!((sol.samples[0][0] - (-0.5f64).exp()).abs() < 1e-10);
        assert!((sol.samples[1][0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_backwards_and_complex() {
        let f = |_: f64, y: &[Complex64], o: &mut [Complex64]| o[0] = y[0] * Complex64::new(0.0, 1.0);
        let sol = integrate(f, 0.0, &[Complex64::new(1.0, 0.0)], -3.0, &[-1.5], &OdeOptions::with_tol(1e-12)).unwrap();
        assert!((sol.y_end[0] - Complex64::new(0.0, -3.0).exp()).norm() < 1e-10);
        assert!((sol.samples[0][0] - Complex64::new(0.0, -1.5).exp()).norm() < 1e-9);
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        let f = |t: f64, _: &[f64], o: &mut [f64]| o[0] = (3.0 * t).cos();
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.0931).collect();
        let sol = integrate(f, 0.0, &[0.0], 5.0, &times, &OdeOptions::with_tol(1e-11)).unwrap();
        for (t, s) in times.iter().zip(&sol.samples) {
            assert!((s[0] - (3.0 * t).sin() / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let r = integrate(|_, y: &[f64], o: &mut [f64]| o[0] = y[0] * y[0], 0.0, &[1.0], 2.0, &[], &OdeOptions::default());
        assert!(matches!(r, Err(OdeError::StepUnderflow { .. }) | Err(OdeError::NonFiniteState { .. })));
    }

    #[test]
    fn error_decreases_at_high_order() {
        let run = |tol: f64| {
            let s = integrate(|_, y: &[f64], o: &mut [f64]| { o[0] = y[1]; o[1] = -y[0]; }, 0.0, &[1.0, 0.0], 10.0, &[], &OdeOptions::with_tol(tol)).unwrap();
            ((s.y_end[0] - 10f64.cos()).abs(), s.stats.accepted)
        };
        let (e1, n1) = run(1e-6);
        let (e2, n2) = run(1e-9);
        assert!(e2 < e1);
        // Step counts scale like tol^(-1/5) for a fifth-order local error.
        let order = (1e3f64).ln() / (n2 as f64 / n1 as f64).ln();
        assert!(order > 4.0, "{order}");
    }
}
