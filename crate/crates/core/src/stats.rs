//! Shared statistical helpers for the Monte Carlo layer and the test
//! suites.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Kolmogorov-Smirnov distance between a sorted sample and the CDF `f`.
pub fn ks_distance_sorted(sorted: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let fx = f(x);
        d = d.max((fx - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - fx).abs());
    }
    d
}

/// Exact two-sided binomial test of `a` successes in `n` trials at p = 1/2.
///
/// This is the conditional (exact) two-sample Poisson test: given
/// independent Poisson counts `a` and `b` with equal means, `a` is
/// Binomial(a + b, 1/2) conditionally on the total.
pub fn binomial_half_two_sided(a: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let lo = a.min(n - a);
    let bin = Binomial::new(0.5, n).expect("valid binomial");
    if 2 * lo == n {
        return 1.0;
    }
    // symmetric at p = 1/2: P(X <= lo) + P(X >= n - lo) = 2 P(X <= lo)
    (2.0 * bin.cdf(lo)).min(1.0)
}

/// Fisher combination of independent p-values: `T = -2 sum ln p_i` is
/// chi-square with `2m` degrees of freedom under the null.
pub fn fisher_combine(p_values: &[f64]) -> (f64, f64) {
    if p_values.is_empty() {
        return (0.0, 1.0);
    }
    let stat: f64 = p_values.iter().map(|p| -2.0 * p.max(1e-300).ln()).sum();
    let chi = ChiSquared::new(2.0 * p_values.len() as f64).expect("valid dof");
    (stat, chi.sf(stat))
}

/// Two-sample z-test p-value for equal means.
pub fn two_sample_mean_p(xs: &[f64], ys: &[f64]) -> f64 {
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let mx = xs.iter().sum::<f64>() / nx;
    let my = ys.iter().sum::<f64>() / ny;
    let vx = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>() / (nx - 1.0);
    let vy = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>() / (ny - 1.0);
    let z = (mx - my) / (vx / nx + vy / ny).sqrt();
    2.0 * normal_cdf(-z.abs())
}

/// Index of dispersion `(N-1) s^2 / xbar` for counts, which is chi-square
/// with `N-1` degrees of freedom under a Poisson null. Returns the
/// two-sided p-value.
pub fn poisson_dispersion_p(counts: &[u64]) -> f64 {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    if mean == 0.0 {
        return 1.0;
    }
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean) * (c as f64 - mean))
        .sum::<f64>()
        / (n - 1.0);
    let stat = (n - 1.0) * var / mean;
    let chi = ChiSquared::new(n - 1.0).expect("valid dof");
    let lower = chi.cdf(stat);
    2.0 * lower.min(1.0 - lower)
}
