//! Poisson variate generation.
//!
//! Sequential-search inversion below mean 10 (one uniform per variate),
//! Hörmann's transformed rejection with squeeze (PTRS) above. Both draw from
//! a [`StepRng`](crate::rng::StepRng), whose per-step keying makes the
//! variable draw count of the rejection loop invisible to every other step.

use crate::numeric::ln_factorial;
use crate::rng::StepRng;

/// Means below this use CDF inversion, above it transformed rejection.
pub const INVERSION_CUTOFF: f64 = 10.0;

// Hard stop for the inversion loop; for mean < 10 the CDF mass beyond here
// is far below one ulp.
const INVERSION_CAP: u64 = 256;

/// Draw one Poisson variate with the given mean.
pub fn sample_poisson(mean: f64, rng: &mut StepRng) -> u64 {
    debug_assert!(mean.is_finite() && mean >= 0.0);
    if mean == 0.0 {
        0
    } else if mean < INVERSION_CUTOFF {
        inversion(mean, rng)
    } else {
        transformed_rejection(mean, rng)
    }
}

fn inversion(mean: f64, rng: &mut StepRng) -> u64 {
    let u = rng.next_f64();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while u > cdf && k < INVERSION_CAP {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

// PTRS: W. Hörmann, "The transformed rejection method for generating Poisson
// random variables", valid for mean >= 10. Two uniforms per iteration,
// acceptance rate above 0.94 over the whole range.
fn transformed_rejection(mean: f64, rng: &mut StepRng) -> u64 {
    let b = 0.931 + 2.53 * mean.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    let ln_mean = mean.ln();
    loop {
        let u = rng.next_f64() - 0.5;
        let v = rng.next_f64();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
        if lhs <= k * ln_mean - mean - ln_factorial(k as u64) {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_pmf(mean: f64, max_k: usize) -> Vec<f64> {
        let mut pmf = vec![0.0; max_k + 1];
        pmf[0] = (-mean).exp();
        for k in 1..=max_k {
            pmf[k] = pmf[k - 1] * mean / k as f64;
        }
        pmf
    }

    // Total-variation distance between the empirical law of n draws and the
    // exact pmf; threshold 3 * sqrt(support / n) per the binomial
    // concentration of each cell.
    fn tv_check(mean: f64, n: u64, seed: u64) {
        let max_k = (mean + 12.0 * mean.sqrt() + 30.0) as usize;
        let pmf = exact_pmf(mean, max_k);
        let mut counts = vec![0u64; max_k + 2];
        for i in 0..n {
            let mut rng = StepRng::new(seed, i, 1);
            let k = sample_poisson(mean, &mut rng) as usize;
            counts[k.min(max_k + 1)] += 1;
        }
        assert_eq!(counts[max_k + 1], 0, "draw beyond plausible support");
        let tv: f64 = pmf
            .iter()
            .zip(&counts)
            .map(|(p, &c)| (p - c as f64 / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        let threshold = 3.0 * ((max_k as f64) / n as f64).sqrt();
        assert!(tv < threshold, "mean {mean}: TV {tv} >= {threshold}");
    }

    #[test]
    fn inversion_matches_exact_law() {
        tv_check(0.15, 1_000_000, 101);
        tv_check(0.5, 1_000_000, 102);
        tv_check(4.0, 500_000, 103);
        tv_check(9.9, 500_000, 104);
    }

    #[test]
    fn rejection_matches_exact_law() {
        tv_check(10.1, 500_000, 201);
        tv_check(30.0, 500_000, 202);
        tv_check(200.0, 200_000, 203);
    }

    #[test]
    fn rejection_moments() {
        let mean = 47.3;
        let n = 400_000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let mut rng = StepRng::new(9, i, 2);
            let k = sample_poisson(mean, &mut rng) as f64;
            s1 += k;
            s2 += k * k;
        }
        let m = s1 / n as f64;
        let var = s2 / n as f64 - m * m;
        assert!((m - mean).abs() < 4.0 * (mean / n as f64).sqrt());
        // Poisson variance = mean; sampling error of the variance is
        // ~ sqrt((2 mean^2 + mean) / n)
        let se_var = ((2.0 * mean * mean + mean) / n as f64).sqrt();
        assert!((var - mean).abs() < 5.0 * se_var, "var {var} vs {mean}");
    }

    #[test]
    fn zero_mean_draws_nothing() {
        let mut rng = StepRng::new(1, 0, 1);
        assert_eq!(sample_poisson(0.0, &mut rng), 0);
    }
}
