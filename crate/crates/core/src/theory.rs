//! Closed-form limits, variance constants, and moment bounds.
//!
//! With `rho = |alpha|_1 * E[mark] < 1` the long-run behaviour of the
//! process is pinned by a handful of scalars:
//!
//! ```text
//! N_t / t  ->  mu_N     = nu / (1 - rho)
//! L_t / t  ->  mu_L     = nu E[mark] / (1 - rho)
//! (N_t - mu_N t)/sqrt(t)  ->  N(0, sigma2_N),  sigma2_N = nu (1 + |alpha|_1^2 Var) / (1 - rho)^3
//! (L_t - mu_L t)/sqrt(t)  ->  N(0, sigma2_L),  sigma2_L = nu E[mark^2] / (1 - rho)^3
//! ```
//!
//! plus non-asymptotic certificates: `mu_N` and `mu_L` dominate `E[Z_t]` and
//! `E[X_t]` at every t, and `E[lambda_t^2]` stays below an explicit constant.
//! Everything here is a pure function of [`ModelParams`]; the exact moment
//! recursion provides the independent finite-horizon check used by the test
//! suites.

use serde::Serialize;

use crate::model::{ExcitationKernel, ModelParams};

/// The limit and bound package for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalLimits {
    /// LLN limit of N_t / t.
    pub mu_n: f64,
    /// LLN limit of L_t / t.
    pub mu_l: f64,
    /// CLT variance of the normalized count deviation.
    pub sigma2_n: f64,
    /// CLT variance of the normalized mark-total deviation.
    pub sigma2_l: f64,
    /// Uniform-in-t upper bound on E[Z_t] (coincides with mu_n).
    pub mean_bound_count: f64,
    /// Uniform-in-t upper bound on E[X_t] (coincides with mu_l).
    pub mean_bound_mark: f64,
    /// Uniform-in-t upper bound on E[lambda_t^2].
    pub lambda_second_moment_bound: f64,
}

impl TheoreticalLimits {
    pub fn for_params(params: &ModelParams) -> Self {
        Self {
            mu_n: lln_limit_counts(params),
            mu_l: lln_limit_marks(params),
            sigma2_n: clt_variance_counts(params),
            sigma2_l: clt_variance_marks(params),
            mean_bound_count: mean_bounds(params).0,
            mean_bound_mark: mean_bounds(params).1,
            lambda_second_moment_bound: lambda_second_moment_bound(params),
        }
    }
}

/// nu / (1 - rho).
pub fn lln_limit_counts(params: &ModelParams) -> f64 {
    params.nu() / (1.0 - params.branching_ratio())
}

/// nu E[mark] / (1 - rho).
pub fn lln_limit_marks(params: &ModelParams) -> f64 {
    lln_limit_counts(params) * params.marks().mean()
}

/// nu (1 + |alpha|_1^2 Var(mark)) / (1 - rho)^3.
pub fn clt_variance_counts(params: &ModelParams) -> f64 {
    let l1 = params.kernel().l1_norm();
    let variance = params.marks().moments().variance;
    let gap = 1.0 - params.branching_ratio();
    params.nu() * (1.0 + l1 * l1 * variance) / (gap * gap * gap)
}

/// nu E[mark^2] / (1 - rho)^3.
pub fn clt_variance_marks(params: &ModelParams) -> f64 {
    let gap = 1.0 - params.branching_ratio();
    params.nu() * params.marks().moments().second_raw / (gap * gap * gap)
}

/// (bound on E[Z_t], bound on E[X_t]), valid uniformly in t.
pub fn mean_bounds(params: &ModelParams) -> (f64, f64) {
    (lln_limit_counts(params), lln_limit_marks(params))
}

/// Uniform-in-t bound on E[lambda_t^2]:
/// `(nu |a|^2 Var / (1-rho) + nu^2 (1+rho) / (1-rho)) / (1 - |a|^2 E^2)`.
pub fn lambda_second_moment_bound(params: &ModelParams) -> f64 {
    let l1 = params.kernel().l1_norm();
    let moments = params.marks().moments();
    let rho = params.branching_ratio();
    let nu = params.nu();
    let gap = 1.0 - rho;
    // rho < 1 implies |a|^2 E^2 = rho^2 < 1
    (nu * l1 * l1 * moments.variance / gap + nu * nu * (1.0 + rho) / gap) / (1.0 - rho * rho)
}

/// Coefficients of the conditional fourth-moment identities
/// `E[D^4 | F] = lambda c1 + lambda^2 c2` for the two martingales whose
/// Lindeberg conditions drive the central limit theorems.
///
/// With w = |alpha|_1, m_k the centered mark moments, and B = Z - lambda,
/// S = sum of centered marks over the step's events:
///
/// - counts martingale, D = B + w S: expanding E[(B + w S)^4 | F] over
///   Poisson moments gives `c1 = 1 + 6 w^2 m2 + 4 w^3 m3 + w^4 m4` and
///   `c2 = 3 + 6 w^2 m2 + 3 w^4 m2^2`;
/// - marks martingale, D~ = w (E[mark] B + S) = w (X - lambda E[mark]), a
///   centered compound Poisson, so by its cumulants `c1 = E[mark^4]` and
///   `c2 = 3 E[mark^2]^2` (the w^4 prefactor is applied at use site).
///
/// Both collapse to (1, 3) resp. (E[mark]^4, 3 E[mark]^4) for constant
/// marks, matching the Poisson central fourth moment `lambda + 3 lambda^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementMomentConstants {
    pub c1_counts: f64,
    pub c2_counts: f64,
    pub c1_marks: f64,
    pub c2_marks: f64,
}

/// Evaluates the four constants. Total for every supported mark family:
/// they all carry finite fourth moments.
pub fn increment_moment_constants(params: &ModelParams) -> IncrementMomentConstants {
    let w = params.kernel().l1_norm();
    let m = params.marks().moments();
    let w2 = w * w;
    let w4 = w2 * w2;
    IncrementMomentConstants {
        c1_counts: 1.0
            + 6.0 * w2 * m.variance
            + 4.0 * w2 * w * m.centered_third
            + w4 * m.centered_fourth,
        c2_counts: 3.0 + 6.0 * w2 * m.variance + 3.0 * w4 * m.variance * m.variance,
        c1_marks: m.fourth_raw,
        c2_marks: 3.0 * m.second_raw * m.second_raw,
    }
}

/// One row of the exact moment recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub mean_lambda: f64,
    pub mean_count: f64,
    pub mean_mark_sum: f64,
}

/// Exact expectation series for t = 1..=horizon:
///
/// ```text
/// E[lambda_1] = nu
/// E[lambda_t] = nu + sum_{s=1}^{t-1} alpha(s) E[X_{t-s}]
/// E[Z_t] = E[lambda_t],  E[X_t] = E[mark] E[Z_t]
/// ```
///
/// O(horizon) for geometric kernels via the scalar recursion, O(horizon^2)
/// otherwise.
pub fn exact_moment_recursion(params: &ModelParams, horizon: usize) -> Vec<MomentRow> {
    assert!(horizon >= 1, "horizon must be at least 1");
    match params.kernel() {
        ExcitationKernel::Geometric { weight, ratio } => {
            recursion_geometric(params, horizon, *weight, *ratio)
        }
        _ => recursion_convolution(params, horizon),
    }
}

fn recursion_geometric(params: &ModelParams, horizon: usize, a: f64, b: f64) -> Vec<MomentRow> {
    let nu = params.nu();
    let mark_mean = params.marks().mean();
    let mut rows = Vec::with_capacity(horizon);
    let mut excitation = 0.0;
    for _ in 0..horizon {
        let mean_lambda = nu + excitation;
        let mean_mark_sum = mark_mean * mean_lambda;
        rows.push(MomentRow {
            mean_lambda,
            mean_count: mean_lambda,
            mean_mark_sum,
        });
        excitation = b * excitation + a * mean_mark_sum;
    }
    rows
}

fn recursion_convolution(params: &ModelParams, horizon: usize) -> Vec<MomentRow> {
    let nu = params.nu();
    let mark_mean = params.marks().mean();
    let kernel = params.kernel();
    let weights: Vec<f64> = (1..horizon).map(|s| kernel.value(s)).collect();
    let mut rows: Vec<MomentRow> = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut mean_lambda = nu;
        for s in 1..t {
            mean_lambda += weights[s - 1] * rows[t - s - 1].mean_mark_sum;
        }
        rows.push(MomentRow {
            mean_lambda,
            mean_count: mean_lambda,
            mean_mark_sum: mark_mean * mean_lambda,
        });
    }
    rows
}
