//! Small numerical helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Error-free product: returns (hi, lo) with hi + lo == a * b exactly.
#[inline]
pub fn two_product(a: f64, b: f64) -> (f64, f64) {
    let hi = a * b;
    let lo = a.mul_add(b, -hi);
    (hi, lo)
}

/// Floor of the double-double value hi + lo, for hi + lo well inside the u64 range.
pub fn floor_double_double(hi: f64, lo: f64) -> f64 {
    let f = hi.floor();
    // hi is an integer and lo pushes the true value below it
    if f == hi && lo < 0.0 {
        f - 1.0
    } else {
        f
    }
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// Falling factorial n (n-1) ... (n-k+1) as f64 (may be large).
pub fn falling_factorial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).map(|i| (n - i) as f64).product()
}

/// Ordinary least squares slope and intercept of y against x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Batch-means estimate of variance of the mean and effective sample size.
///
/// Returns `(mean, standard_error, ess)`; batch size is `floor(sqrt(len))`.
pub fn batch_means(series: &[f64]) -> (f64, f64, f64) {
    let len = series.len();
    if len == 0 {
        return (f64::NAN, f64::NAN, 0.0);
    }
    let mean = compensated_sum(series.iter().copied()) / len as f64;
    if len < 4 {
        return (mean, f64::NAN, len as f64);
    }
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (len - 1) as f64;
    let b = (len as f64).sqrt().floor() as usize;
    let batches = len / b;
    if batches < 2 {
        return (mean, (var / len as f64).sqrt(), len as f64);
    }
    let bmeans: Vec<f64> = (0..batches)
        .map(|k| series[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let bm_mean = bmeans.iter().sum::<f64>() / batches as f64;
    let bvar = bmeans.iter().map(|x| (x - bm_mean) * (x - bm_mean)).sum::<f64>() / (batches - 1) as f64;
    let sigma2 = b as f64 * bvar;
    if var == 0.0 {
        return (mean, 0.0, len as f64);
    }
    if sigma2 <= 0.0 {
        return (mean, (var / len as f64).sqrt(), len as f64);
    }
    let ess = (len as f64 * var / sigma2).min(len as f64);
    (mean, (sigma2 / len as f64).sqrt(), ess)
}

/// Linear-interpolated quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Formats a float with 17 significant digits, the text form used in reports.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16, 1.0, -1e16];
        v.extend(std::iter::repeat(1e-3).take(1000));
        let s = compensated_sum(v);
        assert!((s - 2.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn floor_dd_handles_integer_boundary() {
        assert_eq!(floor_double_double(3.0, -1e-20), 2.0);
        assert_eq!(floor_double_double(3.0, 1e-20), 3.0);
        assert_eq!(floor_double_double(2.5, 0.0), 2.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(40, 4), 91390);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.25 * x - 1.0).collect();
        let (s, c) = linear_fit(&xs, &ys).unwrap();
        assert!((s - 0.25).abs() < 1e-14 && (c + 1.0).abs() < 1e-14);
    }

    #[test]
    fn batch_means_iid_ess_is_near_length() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let (_, _, ess) = batch_means(&xs);
        assert!(ess > 5_000.0, "{ess}");
    }
}
