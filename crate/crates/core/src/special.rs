//! Normal and Kolmogorov distribution functions used by the verifiers.

/// Complementary error function, relative error below 1e-12 over the range
/// the tests exercise (checked against 40-digit references in the suite).
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// CDF of the standard normal.
#[inline]
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Density of the zero-mean normal with the given variance.
#[inline]
pub fn normal_density(x: f64, variance: f64) -> f64 {
    (-x * x / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Survival function of the Kolmogorov distribution,
/// `Q(z) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 z^2)`.
///
/// The alternating series is used for z >= 1.18; below that the dual theta
/// expansion converges faster and avoids its cancellation. Terms are dropped
/// once they fall under 1e-12.
pub fn kolmogorov_sf(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z >= 1.18 {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..200 {
            let term = 2.0 * (-2.0 * (k * k) as f64 * z * z).exp();
            sum += sign * term;
            if term < 1e-12 {
                break;
            }
            sign = -sign;
        }
        sum.clamp(0.0, 1.0)
    } else {
        let factor = (2.0 * std::f64::consts::PI).sqrt() / z;
        let mut cdf = 0.0;
        for k in 1..200 {
            let odd = (2 * k - 1) as f64;
            let term = factor
                * (-odd * odd * std::f64::consts::PI * std::f64::consts::PI / (8.0 * z * z)).exp();
            cdf += term;
            if term < 1e-12 {
                break;
            }
        }
        (1.0 - cdf).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_matches_high_precision_references() {
        // 40-digit evaluations, truncated to f64.
        let cases = [
            (-6.0, 1.9999999999999999785),
            (-2.5, 1.9995930479825550411),
            (-0.3, 1.3286267594591274276),
            (0.0, 1.0),
            (0.2, 0.7772974107895215459),
            (0.46875, 0.5073865267820620084),
            (1.0, 0.15729920705028513066),
            (2.0, 4.677734981047265838e-3),
            (3.0, 2.2090496998585441373e-5),
            (4.0, 1.5417257900280018852e-8),
            (6.0, 2.1519736712498913117e-17),
            (10.0, 2.088487583762544757e-45),
            (20.0, 5.395865611607900929e-176),
        ];
        for (x, expect) in cases {
            let got = erfc(x);
            assert!(
                (got - expect).abs() <= 1e-12 * expect.abs(),
                "erfc({x}) = {got:e}, want {expect:e}"
            );
        }
    }

    #[test]
    fn normal_cdf_basics() {
        assert_eq!(standard_normal_cdf(0.0), 0.5);
        assert!((standard_normal_cdf(1.0) - 0.8413447460685429).abs() <= 1e-13);
        assert!((standard_normal_cdf(-1.0) + standard_normal_cdf(1.0) - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn kolmogorov_sf_matches_references() {
        // 40-digit evaluations of the alternating series.
        let cases = [
            (0.2, 0.9999999999994949593),
            (0.4, 0.9971923267772982668),
            (0.5, 0.9639452436648750944),
            (0.8, 0.5441424115741981490),
            (1.0, 0.2699996716773545212),
            (1.2, 0.1122496666707249609),
            (1.36, 0.04948587675537790994),
            (1.6275, 0.01000805065136952582),
            (2.0, 6.709252557796953465e-4),
            (2.5, 7.4533063441573416e-6),
            (3.0, 3.045995948942525687e-8),
        ];
        for (z, expect) in cases {
            let got = kolmogorov_sf(z);
            assert!(
                (got - expect).abs() <= 1e-10 * expect.max(1e-6),
                "sf({z}) = {got:e}, want {expect:e}"
            );
        }
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert_eq!(kolmogorov_sf(-1.0), 1.0);
    }
}
