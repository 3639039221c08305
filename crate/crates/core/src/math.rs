//! Float helpers for a `no_std` build. Everything routes through `libm`.

use alloc::vec::Vec;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `log(sum(exp(xs)))` with max-shift.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + ln(s)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divides by `n - 1`).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) q`), the rule numpy uses by default.
///
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

/// Quantile of an equal-weight mixture of normals `N(means[i], sd^2)`,
/// found by bisection on the mixture CDF.
pub fn normal_mixture_quantile(means: &[f64], sd: f64, q: f64) -> f64 {
    debug_assert!(!means.is_empty() && sd > 0.0);
    let lo_m = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_m = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = lo_m - 10.0 * sd;
    let mut hi = hi_m + 10.0 * sd;
    let n = means.len() as f64;
    let cdf = |y: f64| means.iter().map(|m| normal_cdf((y - m) / sd)).sum::<f64>() / n;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + libm::fabs(mid)) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = alloc::vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = ranks(a);
    let rb = ranks(b);
    let ma = mean(&ra);
    let mb = mean(&rb);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    num / sqrt(da * db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_of_two_points() {
        let v = [0.0, 1.0];
        assert!((quantile_sorted(&v, 0.025) - 0.025).abs() < 1e-15);
        assert!((quantile_sorted(&v, 0.975) - 0.975).abs() < 1e-15);
    }

    #[test]
    fn single_normal_quantile() {
        let q = normal_mixture_quantile(&[2.0], 1.0, 0.975);
        assert!((q - (2.0 + 1.959_963_984_540_054)).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn spearman_perfect_decrease() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.3, 0.2, 0.1]) + 1.0).abs() < 1e-12);
    }
}
