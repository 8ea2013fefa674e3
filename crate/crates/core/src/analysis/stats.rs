//! Small statistical helpers used by the Monte Carlo experiments.

use statrs::distribution::{ContinuousCDF, Normal};

/// Asymptotic 1% critical constant of the one-sample Kolmogorov-Smirnov
/// statistic: `P(sup |F_n - F| > KS_CRIT_1PCT / sqrt(n)) -> 0.01`.
pub const KS_CRIT_1PCT: f64 = 1.62762;

/// Arithmetic mean; zero for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation (n - 1 denominator).
///
/// # Panics
/// Panics on fewer than two observations.
pub fn sample_std(xs: &[f64]) -> f64 {
    assert!(xs.len() >= 2, "sample_std needs at least two observations");
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Median (average of the central pair for even counts).
///
/// # Panics
/// Panics on an empty slice.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty sample");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Empirical quantile by linear interpolation of order statistics,
/// `q` in `[0, 1]`.
///
/// # Panics
/// Panics on an empty slice or `q` outside `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level outside [0, 1]");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

/// Sample covariance matrix (n - 1 denominator) of row vectors, flattened
/// row-major into `d * d` entries.
///
/// # Panics
/// Panics on fewer than two rows or inconsistent dimensions.
pub fn sample_cov(rows: &[&[f64]]) -> Vec<f64> {
    assert!(rows.len() >= 2, "sample_cov needs at least two rows");
    let d = rows[0].len();
    let mut mu = vec![0.0; d];
    for r in rows {
        assert_eq!(r.len(), d, "inconsistent row dimension");
        for (m, x) in mu.iter_mut().zip(*r) {
            *m += x;
        }
    }
    for m in &mut mu {
        *m /= rows.len() as f64;
    }
    let mut cov = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (r[i] - mu[i]) * (r[j] - mu[j]);
            }
        }
    }
    let denom = (rows.len() - 1) as f64;
    for c in &mut cov {
        *c /= denom;
    }
    cov
}

/// One-sample Kolmogorov-Smirnov statistic `sup_x |F_n(x) - F(x)|` against
/// the supplied distribution function.
///
/// # Panics
/// Panics on an empty sample.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!xs.is_empty(), "KS statistic of an empty sample");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = v.len() as f64;
    let mut d = 0.0_f64;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Distribution function of a centered Gaussian with standard deviation
/// `std`. A degenerate `std == 0` gives the point-mass step function.
pub fn centered_normal_cdf(std: f64) -> impl Fn(f64) -> f64 {
    let normal = if std > 0.0 {
        Some(Normal::new(0.0, std).expect("valid normal"))
    } else {
        None
    };
    move |x: f64| match &normal {
        Some(n) => n.cdf(x),
        None => {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Least-squares slope of `ln y` against `ln x`.
///
/// # Panics
/// Panics unless both slices have the same length of at least two and all
/// entries are positive.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "mismatched slope inputs");
    assert!(xs.len() >= 2, "slope needs at least two points");
    assert!(
        xs.iter().chain(ys).all(|v| *v > 0.0),
        "log-log slope needs positive data"
    );
    let u: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let v: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mu, mv) = (mean(&u), mean(&v));
    let sxy: f64 = u.iter().zip(&v).map(|(a, b)| (a - mu) * (b - mv)).sum();
    let sxx: f64 = u.iter().map(|a| (a - mu) * (a - mu)).sum();
    sxy / sxx
}
