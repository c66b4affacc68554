//! Small statistical helpers shared across modules.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator).
pub fn sample_stdev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Excess kurtosis (population moments): E[(x-mu)^4]/sigma^4 - 3.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2: f64 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4: f64 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    if m2 == 0.0 {
        return 0.0;
    }
    m4 / (m2 * m2) - 3.0
}

/// Pearson correlation coefficient of two equal-length series.
pub fn pearson_r(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    let denom = (da * db).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (num / denom).clamp(-1.0, 1.0)
    }
}

/// Two-sided p-value for a Pearson correlation with n samples, from the
/// t-distributed statistic r*sqrt((n-2)/(1-r^2)).
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    if 1.0 - r * r <= 0.0 {
        return 0.0;
    }
    let t_stat = r.abs() * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    2.0 * (1.0 - dist.cdf(t_stat))
}

/// Two-sided Student-t quantile for a mean confidence interval: returns
/// t such that P(|T_df| <= t) = 1 - alpha.
pub fn t_quantile_two_sided(alpha: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    dist.inverse_cdf(1.0 - alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kurtosis_of_constant_is_zero() {
        assert_eq!(excess_kurtosis(&[2.0; 10]), 0.0);
    }

    #[test]
    fn kurtosis_sign_for_known_shapes() {
        // Two-point distribution at +-1 is maximally sub-Gaussian.
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_relative_eq!(excess_kurtosis(&xs), -2.0, epsilon = 1e-12);
        // Sparse spike field is super-Gaussian.
        let mut ys = vec![0.0; 100];
        ys[0] = 10.0;
        ys[50] = -10.0;
        assert!(excess_kurtosis(&ys) > 1.0);
    }

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        assert_relative_eq!(pearson_r(&a, &b), 1.0);
        let c = [-2.0, -4.0, -6.0, -8.0];
        assert_relative_eq!(pearson_r(&a, &c), -1.0);
    }

    #[test]
    fn t_quantile_matches_tables() {
        // t_{0.975, 10} = 2.228 from standard tables.
        assert_relative_eq!(t_quantile_two_sided(0.05, 10.0), 2.228, epsilon = 1e-3);
    }
}
