//! Small statistical helpers used by the verification suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// One-sample Kolmogorov–Smirnov statistic for sorted samples.
pub fn ks_one_sample(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the one-sample KS statistic.
pub fn ks_one_sample_critical(n: usize, alpha: f64) -> f64 {
    ks_coefficient(alpha) / (n as f64).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_coefficient(alpha) * ((n + m) / (n * m)).sqrt()
}

fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Two-sample chi-square homogeneity test over shared bins.
///
/// Bins empty in both samples are skipped. Returns `(statistic, dof)`.
pub fn chi_square_two_sample(a: &[f64], b: &[f64]) -> (f64, usize) {
    let na: f64 = a.iter().sum();
    let nb: f64 = b.iter().sum();
    let k1 = (nb / na).sqrt();
    let k2 = (na / nb).sqrt();
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0.0 {
            continue;
        }
        bins += 1;
        let diff = k1 * x - k2 * y;
        stat += diff * diff / (x + y);
    }
    (stat, bins.saturating_sub(1))
}

/// Upper critical value of the chi-square distribution.
pub fn chi_square_critical(dof: usize, alpha: f64) -> f64 {
    let dist = ChiSquared::new(dof.max(1) as f64).expect("positive dof");
    dist.inverse_cdf(1.0 - alpha)
}

/// Chi-square goodness of fit of observed counts against expected counts.
pub fn chi_square_goodness(observed: &[f64], expected: &[f64]) -> (f64, usize) {
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            continue;
        }
        bins += 1;
        stat += (o - e) * (o - e) / e;
    }
    (stat, bins.saturating_sub(1))
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
