//! Bernoulli relative entropy `i_p`, its sparse limit `h`, and their derivatives.
//!
//! Endpoints follow `0 log 0 = 0`. Derivatives at `q ∈ {0, 1}` are returned as
//! `±∞`; solvers keep iterates inside a box so they never see them.

use crate::error::{Error, Result};
use crate::graph::num_slots;
use crate::numeric::CompensatedSum;

/// A symmetric edge-probability vector `q ∈ [0, 1]^{C(n,2)}` indexed by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    n: usize,
    values: Vec<f64>,
}

impl EdgeWeights {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_slots(n) {
            return Err(Error::Dimension {
                expected: num_slots(n),
                got: values.len(),
            });
        }
        if let Some((s, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("weight {v} at slot {s} outside [0, 1]")));
        }
        Ok(EdgeWeights { n, values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        EdgeWeights::new(n, vec![c; num_slots(n)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.values[slot]
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(())
}

#[inline]
fn xlogy_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// `i_p(q) = q log(q/p) + (1-q) log((1-q)/(1-p))`.
pub fn i_p_scalar(q: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("q must lie in [0, 1], got {q}")));
    }
    Ok(i_p_unchecked(q, p))
}

#[inline]
pub(crate) fn i_p_unchecked(q: f64, p: f64) -> f64 {
    (xlogy_ratio(q, p) + xlogy_ratio(1.0 - q, 1.0 - p)).max(0.0)
}

/// `∂ i_p / ∂ q = log(q/p) - log((1-q)/(1-p))`.
#[inline]
pub fn i_p_derivative(q: f64, p: f64) -> f64 {
    if q <= 0.0 {
        f64::NEG_INFINITY
    } else if q >= 1.0 {
        f64::INFINITY
    } else {
        (q / p).ln() - ((1.0 - q) / (1.0 - p)).ln()
    }
}

/// Total relative entropy `Σ_e i_p(q_e)`.
pub fn i_p_total(q: &EdgeWeights, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(q.as_slice().iter().map(|&x| i_p_unchecked(x, p)).collect::<CompensatedSum>().value())
}

/// `h(x) = x log x - x + 1` on `[0, 1]`, `h(0) = 1`. The argument is clamped.
#[inline]
pub fn h(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x == 0.0 {
        1.0
    } else {
        x * x.ln() - x + 1.0
    }
}

/// `h'(x) = log x`.
#[inline]
pub fn h_prime(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

/// `Σ_e h(q_e)`.
pub fn h_total(values: &[f64]) -> f64 {
    values.iter().map(|&x| h(x)).collect::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn scalar_values() {
        assert_eq!(i_p_scalar(0.3, 0.3).unwrap(), 0.0);
        assert!((i_p_scalar(1.0, 0.5).unwrap() - LN_2).abs() < 1e-15);
        assert!((i_p_scalar(0.0, 0.5).unwrap() - LN_2).abs() < 1e-15);
        assert!(i_p_scalar(0.5, 0.0).is_err());
        assert!(i_p_scalar(0.5, 1.0).is_err());
        assert!(i_p_scalar(1.5, 0.5).is_err());
    }

    #[test]
    fn total_values() {
        let q = EdgeWeights::constant(5, 0.2).unwrap();
        assert_eq!(i_p_total(&q, 0.2).unwrap(), 0.0);
        let one = EdgeWeights::constant(3, 1.0).unwrap();
        assert!((i_p_total(&one, 0.5).unwrap() - 3.0 * LN_2).abs() < 1e-14);
    }

    /// Double-double accumulation as an extended-precision oracle.
    fn dd_sum(xs: &[f64]) -> f64 {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for &x in xs {
            let s = hi + x;
            let bp = s - hi;
            let err = (hi - (s - bp)) + (x - bp);
            let t = lo + err;
            hi = s + t;
            lo = t - (hi - s);
        }
        hi + lo
    }

    #[test]
    fn total_matches_extended_precision_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let n = 6;
            let vals: Vec<f64> = (0..num_slots(n)).map(|_| rng.random::<f64>()).collect();
            let p = rng.random_range(0.01..0.99);
            let terms: Vec<f64> = vals.iter().map(|&x| i_p_scalar(x, p).unwrap()).collect();
            let oracle = dd_sum(&terms);
            let got = i_p_total(&EdgeWeights::new(n, vals).unwrap(), p).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300));
        }
    }

    #[test]
    fn h_values_and_shape() {
        assert_eq!(h(1.0), 0.0);
        assert_eq!(h(0.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let mut v = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let [x, y, z] = v;
            if !(x < y && y < z) || x == 0.0 {
                continue;
            }
            let t = (y - x) / (z - x);
            assert!(h(y) <= (1.0 - t) * h(x) + t * h(z) + 1e-15);
            assert!(h(x) >= h(z));
        }
    }

    #[test]
    fn nonnegative_with_equality_only_at_p() {
        for pi in 1..20 {
            let p = pi as f64 / 20.0;
            for qi in 0..=200 {
                let q = qi as f64 / 200.0;
                let v = i_p_scalar(q, p).unwrap();
                assert!(v >= 0.0);
                if (q - p).abs() > 1e-9 {
                    assert!(v > 1e-14 || (q - p).abs() < 1e-6, "q={q} p={p} v={v}");
                } else {
                    assert!(v < 1e-14);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let step = 1e-6;
        for xi in 1..100 {
            let x = xi as f64 / 100.0;
            let fd = (h(x + step) - h(x - step)) / (2.0 * step);
            assert!((fd - h_prime(x)).abs() < 1e-6);
            for p in [0.1, 0.4, 0.8] {
                let fd = (i_p_unchecked(x + step, p) - i_p_unchecked(x - step, p)) / (2.0 * step);
                assert!((fd - i_p_derivative(x, p)).abs() < 1e-6);
            }
        }
        assert_eq!(h_prime(0.0), f64::NEG_INFINITY);
        assert_eq!(i_p_derivative(1.0, 0.3), f64::INFINITY);
    }

    #[test]
    fn sparse_limit_converges_uniformly() {
        let delta = 0.01;
        let sup_gap = |p: f64| {
            (0..=1000)
                .map(|k| delta + (1.0 - delta) * k as f64 / 1000.0)
                .map(|x| (i_p_unchecked(p * x, p) / p - h(x)).abs())
                .fold(0.0, f64::max)
        };
        let gaps: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|&p| sup_gap(p)).collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 1e-3);
    }

    #[test]
    fn weights_validation() {
        assert!(EdgeWeights::new(3, vec![0.1, 0.2]).is_err());
        assert!(EdgeWeights::new(3, vec![0.1, 0.2, 1.2]).is_err());
        assert!(EdgeWeights::new(3, vec![0.1, 0.2, f64::NAN]).is_err());
    }
}
