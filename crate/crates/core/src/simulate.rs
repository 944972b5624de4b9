//! Sample-path generation for the marked process and the 0-1 baseline.
//!
//! One path is a deterministic function of `(master_seed, path_index)`:
//! every time step draws from its own counter-keyed stream, so ensembles can
//! run on any number of workers (the ambient rayon pool) and reproduce
//! bit-identical results in path order.
//!
//! Per step t the generator computes `lambda_t = nu + sum alpha(s) X_{t-s}`,
//! draws `Z_t ~ Poisson(lambda_t)`, then draws `Z_t` marks and totals them
//! into `X_t`. Geometric kernels skip history storage entirely through the
//! exact scalar recursion `e_{t+1} = ratio * e_t + weight * X_t`; other
//! kernels convolve a ring buffer of recent mark totals, always newest lag
//! first, so the two code paths agree on `lambda` to rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ExcitationKernel, ModelParams};
use crate::poisson::sample_poisson;
use crate::rng::StepRng;

/// Kernel mass an explicit truncation window may drop before a path gets
/// flagged as inexact.
pub const TRUNCATION_MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon must be >= 1")]
    InvalidHorizon,
    #[error("n_paths must be >= 1")]
    InvalidPathCount,
    #[error("truncation window must be >= 1")]
    InvalidTruncation,
    #[error("baseline probability must lie in (0, 1), got {0}")]
    InvalidBernoulliBase(f64),
    #[error("baseline needs alpha0 + |alpha|_1 <= 1 so probabilities stay in [0,1], got {0}")]
    ProbabilityBudgetExceeded(f64),
    #[error("conditional probability exceeded 1 at step {t}: {probability}")]
    ProbabilityOverflow { t: usize, probability: f64 },
}

/// What to keep per path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    /// Terminal totals and the lambda accumulator only.
    TerminalOnly,
    /// Full per-step series (lambda, counts, mark totals).
    FullSeries,
}

/// Ensemble shape, seeding, and recording options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub n_paths: usize,
    pub master_seed: u64,
    pub record_mode: RecordMode,
    /// Optional kernel history window; absent means exact. Geometric
    /// kernels ignore it (the scalar recursion is already exact).
    pub truncation: Option<usize>,
}

impl SimulationConfig {
    pub fn new(
        horizon: usize,
        n_paths: usize,
        master_seed: u64,
        record_mode: RecordMode,
        truncation: Option<usize>,
    ) -> Result<Self, SimError> {
        if horizon < 1 {
            return Err(SimError::InvalidHorizon);
        }
        if n_paths < 1 {
            return Err(SimError::InvalidPathCount);
        }
        if truncation == Some(0) {
            return Err(SimError::InvalidTruncation);
        }
        Ok(Self {
            horizon,
            n_paths,
            master_seed,
            record_mode,
            truncation,
        })
    }

    pub fn terminal_only(horizon: usize, n_paths: usize, master_seed: u64) -> Self {
        Self::new(horizon, n_paths, master_seed, RecordMode::TerminalOnly, None)
            .expect("positive dimensions")
    }

    pub fn full_series(horizon: usize, n_paths: usize, master_seed: u64) -> Self {
        Self::new(horizon, n_paths, master_seed, RecordMode::FullSeries, None)
            .expect("positive dimensions")
    }
}

/// Per-step series of one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSeries {
    pub lambda: Vec<f64>,
    pub counts: Vec<u64>,
    pub mark_sums: Vec<f64>,
}

/// One realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub path_index: u64,
    pub horizon: usize,
    /// N_T: total event count.
    pub terminal_count: u64,
    /// L_T: total mark mass.
    pub terminal_mark_sum: f64,
    /// sum of lambda_t over the path — the martingale compensator.
    pub lambda_total: f64,
    /// Set when an explicit truncation window dropped kernel mass above
    /// [`TRUNCATION_MASS_TOLERANCE`].
    pub truncation_exceeded: bool,
    pub series: Option<PathSeries>,
}

impl PathResult {
    /// N_T - sum(lambda): the terminal value of the count martingale.
    pub fn martingale_residual(&self) -> f64 {
        self.terminal_count as f64 - self.lambda_total
    }
}

enum KernelState {
    Geometric {
        weight: f64,
        ratio: f64,
        excitation: f64,
    },
    Window {
        weights: Vec<f64>,
        history: Vec<f64>,
        head: usize,
        filled: usize,
    },
}

impl KernelState {
    fn auto(kernel: &ExcitationKernel, horizon: usize, truncation: Option<usize>) -> (Self, bool) {
        match kernel {
            ExcitationKernel::Geometric { weight, ratio } => (
                Self::Geometric {
                    weight: *weight,
                    ratio: *ratio,
                    excitation: 0.0,
                },
                false,
            ),
            _ => Self::window(kernel, horizon, truncation),
        }
    }

    // Window of min(needed lags, table support, truncation); the flag
    // reports whether the cap dropped real kernel mass.
    fn window(kernel: &ExcitationKernel, horizon: usize, truncation: Option<usize>) -> (Self, bool) {
        let needed = horizon.saturating_sub(1);
        let support = match kernel {
            ExcitationKernel::Table { values } => values.len().min(needed),
            _ => needed,
        };
        let window = truncation.map_or(support, |cap| cap.min(support));
        let exceeded = window < needed && kernel.tail_sum(window + 1) > TRUNCATION_MASS_TOLERANCE;
        let weights: Vec<f64> = (1..=window).map(|s| kernel.value(s)).collect();
        (
            Self::Window {
                weights,
                history: vec![0.0; window],
                head: 0,
                filled: 0,
            },
            exceeded,
        )
    }

    /// Current excitation `sum_s alpha(s) x_{t-s}`, newest lag first.
    #[inline]
    fn excitation(&self) -> f64 {
        match self {
            Self::Geometric { excitation, .. } => *excitation,
            Self::Window {
                weights,
                history,
                head,
                filled,
            } => {
                let window = history.len();
                let mut acc = 0.0;
                let mut idx = *head;
                for weight in weights.iter().take(*filled) {
                    idx = if idx == 0 { window - 1 } else { idx - 1 };
                    acc += weight * history[idx];
                }
                acc
            }
        }
    }

    #[inline]
    fn push(&mut self, x: f64) {
        match self {
            Self::Geometric {
                weight,
                ratio,
                excitation,
            } => *excitation = *ratio * *excitation + *weight * x,
            Self::Window {
                history,
                head,
                filled,
                ..
            } => {
                if !history.is_empty() {
                    history[*head] = x;
                    *head = (*head + 1) % history.len();
                    *filled = (*filled + 1).min(history.len());
                }
            }
        }
    }
}

fn run_path(
    params: &ModelParams,
    config: &SimulationConfig,
    path_index: u64,
    mut state: KernelState,
    truncation_exceeded: bool,
) -> PathResult {
    let horizon = config.horizon;
    let nu = params.nu();
    let marks = params.marks();
    let record = config.record_mode == RecordMode::FullSeries;
    let mut series = record.then(|| PathSeries {
        lambda: Vec::with_capacity(horizon),
        counts: Vec::with_capacity(horizon),
        mark_sums: Vec::with_capacity(horizon),
    });
    let mut terminal_count = 0u64;
    let mut terminal_mark_sum = 0.0;
    let mut lambda_total = 0.0;
    for t in 1..=horizon {
        let lambda = nu + state.excitation();
        let mut rng = StepRng::new(config.master_seed, path_index, t as u64);
        let count = sample_poisson(lambda, &mut rng);
        let mut mark_sum = 0.0;
        for _ in 0..count {
            mark_sum += marks.sample(&mut rng);
        }
        state.push(mark_sum);
        terminal_count += count;
        terminal_mark_sum += mark_sum;
        lambda_total += lambda;
        if let Some(series) = series.as_mut() {
            series.lambda.push(lambda);
            series.counts.push(count);
            series.mark_sums.push(mark_sum);
        }
    }
    PathResult {
        path_index,
        horizon,
        terminal_count,
        terminal_mark_sum,
        lambda_total,
        truncation_exceeded,
        series,
    }
}

/// Generate one path. Deterministic in `(master_seed, path_index)` alone.
pub fn simulate_path(params: &ModelParams, config: &SimulationConfig, path_index: u64) -> PathResult {
    let (state, exceeded) = KernelState::auto(params.kernel(), config.horizon, config.truncation);
    run_path(params, config, path_index, state, exceeded)
}

/// Same path as [`simulate_path`] but forcing the ring-buffer convolution
/// even for geometric kernels. Used to check the scalar recursion against
/// the direct evaluation.
pub fn simulate_path_direct(
    params: &ModelParams,
    config: &SimulationConfig,
    path_index: u64,
) -> PathResult {
    let (state, exceeded) =
        KernelState::window(params.kernel(), config.horizon, config.truncation);
    run_path(params, config, path_index, state, exceeded)
}

/// Generate the whole ensemble on the ambient rayon pool; output is ordered
/// by path index regardless of scheduling.
pub fn simulate_ensemble(params: &ModelParams, config: &SimulationConfig) -> Vec<PathResult> {
    (0..config.n_paths as u64)
        .into_par_iter()
        .map(|index| simulate_path(params, config, index))
        .collect()
}

/// Parameters of the 0-1 baseline: each step is a Bernoulli indicator with
/// success probability `alpha0 + sum alpha(s) x_{t-s}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeolParams {
    alpha0: f64,
    kernel: ExcitationKernel,
}

impl SeolParams {
    /// Requires `alpha0 + |alpha|_1 <= 1`, which keeps every conditional
    /// probability in [0, 1] without clamping.
    pub fn new(alpha0: f64, kernel: ExcitationKernel) -> Result<Self, SimError> {
        if !alpha0.is_finite() || alpha0 <= 0.0 || alpha0 >= 1.0 {
            return Err(SimError::InvalidBernoulliBase(alpha0));
        }
        let budget = alpha0 + kernel.l1_norm();
        if budget > 1.0 {
            return Err(SimError::ProbabilityBudgetExceeded(budget));
        }
        Ok(Self { alpha0, kernel })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn kernel(&self) -> &ExcitationKernel {
        &self.kernel
    }

    /// LLN limit of S_n / n: alpha0 / (1 - |alpha|_1).
    pub fn lln_limit(&self) -> f64 {
        self.alpha0 / (1.0 - self.kernel.l1_norm())
    }

    /// CLT variance of (S_n - mu n)/sqrt(n): mu (1 - mu) / (1 - |alpha|_1)^2.
    pub fn clt_variance(&self) -> f64 {
        let mu = self.lln_limit();
        let gap = 1.0 - self.kernel.l1_norm();
        mu * (1.0 - mu) / (gap * gap)
    }
}

/// One realization of the 0-1 baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeolPath {
    pub path_index: u64,
    pub horizon: usize,
    /// S_T: number of successes.
    pub terminal_sum: u64,
    pub indicators: Option<Vec<u8>>,
}

/// Generate one baseline path; errors if a conditional probability exceeds 1
/// at runtime (precondition violated).
pub fn simulate_seol_path(
    params: &SeolParams,
    config: &SimulationConfig,
    path_index: u64,
) -> Result<SeolPath, SimError> {
    let horizon = config.horizon;
    let (mut state, _) = KernelState::auto(&params.kernel, horizon, config.truncation);
    let record = config.record_mode == RecordMode::FullSeries;
    let mut indicators = record.then(|| Vec::with_capacity(horizon));
    let mut terminal_sum = 0u64;
    for t in 1..=horizon {
        let probability = params.alpha0 + state.excitation();
        if probability > 1.0 {
            return Err(SimError::ProbabilityOverflow { t, probability });
        }
        let mut rng = StepRng::new(config.master_seed, path_index, t as u64);
        let x = u64::from(rng.next_f64() < probability);
        state.push(x as f64);
        terminal_sum += x;
        if let Some(indicators) = indicators.as_mut() {
            indicators.push(x as u8);
        }
    }
    Ok(SeolPath {
        path_index,
        horizon,
        terminal_sum,
        indicators,
    })
}

/// Baseline ensemble, ordered by path index.
pub fn simulate_seol_ensemble(
    params: &SeolParams,
    config: &SimulationConfig,
) -> Result<Vec<SeolPath>, SimError> {
    (0..config.n_paths as u64)
        .into_par_iter()
        .map(|index| simulate_seol_path(params, config, index))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarkDistribution;

    fn preset() -> ModelParams {
        ModelParams::new(
            0.1,
            ExcitationKernel::geometric(0.05, 0.5).unwrap(),
            MarkDistribution::exponential(0.3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_base_intensity_stays_silent() {
        let params = ModelParams::new(
            0.0,
            ExcitationKernel::geometric(0.05, 0.5).unwrap(),
            MarkDistribution::exponential(0.3).unwrap(),
        )
        .unwrap();
        let config = SimulationConfig::full_series(500, 1, 7);
        let path = simulate_path(&params, &config, 0);
        assert_eq!(path.terminal_count, 0);
        assert_eq!(path.terminal_mark_sum, 0.0);
        assert!(path.series.unwrap().counts.iter().all(|&z| z == 0));
    }

    #[test]
    fn path_invariants_hold() {
        let params = preset();
        let config = SimulationConfig::full_series(2000, 1, 42);
        let path = simulate_path(&params, &config, 3);
        let series = path.series.as_ref().unwrap();
        assert_eq!(series.lambda[0], params.nu());
        let mut count_total = 0u64;
        let mut mark_total = 0.0;
        for t in 0..config.horizon {
            assert!(series.lambda[t] >= params.nu());
            assert_eq!(series.mark_sums[t] == 0.0, series.counts[t] == 0);
            count_total += series.counts[t];
            mark_total += series.mark_sums[t];
        }
        assert_eq!(count_total, path.terminal_count);
        assert!(
            (mark_total - path.terminal_mark_sum).abs()
                <= 1e-9 * path.terminal_mark_sum.abs().max(1.0)
        );
    }

    #[test]
    fn paths_do_not_depend_on_worker_count() {
        let params = preset();
        let config = SimulationConfig::terminal_only(300, 64, 99);
        let pooled = |workers: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap()
                .install(|| simulate_ensemble(&params, &config))
        };
        let single = pooled(1);
        let multi = pooled(4);
        assert_eq!(single.len(), 64);
        for (a, b) in single.iter().zip(&multi) {
            assert_eq!(a.path_index, b.path_index);
            assert_eq!(a.terminal_count, b.terminal_count);
            assert_eq!(a.terminal_mark_sum.to_bits(), b.terminal_mark_sum.to_bits());
            assert_eq!(a.lambda_total.to_bits(), b.lambda_total.to_bits());
        }
    }

    #[test]
    fn singleton_ensemble_equals_direct_call() {
        let params = preset();
        let config = SimulationConfig::terminal_only(200, 1, 5);
        let ensemble = simulate_ensemble(&params, &config);
        assert_eq!(ensemble[0], simulate_path(&params, &config, 0));
    }

    #[test]
    fn geometric_recursion_matches_direct_convolution() {
        let params = preset();
        let config = SimulationConfig::full_series(1000, 1, 2024);
        let fast = simulate_path(&params, &config, 0);
        let slow = simulate_path_direct(&params, &config, 0);
        let (fs, ss) = (fast.series.unwrap(), slow.series.unwrap());
        assert_eq!(fs.counts, ss.counts);
        assert_eq!(fs.mark_sums, ss.mark_sums);
        for (a, b) in fs.lambda.iter().zip(&ss.lambda) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn truncation_flag_reflects_dropped_mass() {
        let heavy = ModelParams::new(
            0.1,
            ExcitationKernel::power_law(0.05, 1.5).unwrap(),
            MarkDistribution::constant(1.0).unwrap(),
        )
        .unwrap();
        let mut config = SimulationConfig::terminal_only(400, 1, 1);
        config.truncation = Some(5);
        assert!(simulate_path(&heavy, &config, 0).truncation_exceeded);
        config.truncation = None;
        assert!(!simulate_path(&heavy, &config, 0).truncation_exceeded);

        // table support inside the window: nothing dropped
        let table = ModelParams::new(
            0.1,
            ExcitationKernel::table(vec![0.3, 0.1]).unwrap(),
            MarkDistribution::constant(1.0).unwrap(),
        )
        .unwrap();
        config.truncation = Some(2);
        assert!(!simulate_path(&table, &config, 0).truncation_exceeded);
    }

    #[test]
    fn martingale_residual_centers_near_zero() {
        let params = preset();
        let config = SimulationConfig::terminal_only(500, 4000, 77);
        let ensemble = simulate_ensemble(&params, &config);
        let n = ensemble.len() as f64;
        let mean_residual: f64 =
            ensemble.iter().map(PathResult::martingale_residual).sum::<f64>() / n;
        let mean_compensator: f64 = ensemble.iter().map(|p| p.lambda_total).sum::<f64>() / n;
        // Var(residual) = E[sum lambda]
        let se = (mean_compensator / n).sqrt();
        assert!(
            mean_residual.abs() < 4.0 * se,
            "residual {mean_residual}, se {se}"
        );
    }

    #[test]
    fn seol_validation() {
        assert!(SeolParams::new(0.2, ExcitationKernel::table(vec![0.3]).unwrap()).is_ok());
        let err = SeolParams::new(0.5, ExcitationKernel::table(vec![0.6]).unwrap()).unwrap_err();
        assert!(matches!(err, SimError::ProbabilityBudgetExceeded(b) if (b - 1.1).abs() < 1e-12));
        assert!(SeolParams::new(0.0, ExcitationKernel::zero()).is_err());
        assert!(SeolParams::new(1.0, ExcitationKernel::zero()).is_err());
    }

    #[test]
    fn seol_without_excitation_is_iid_bernoulli() {
        let params = SeolParams::new(0.2, ExcitationKernel::zero()).unwrap();
        assert_eq!(params.lln_limit(), 0.2);
        let config = SimulationConfig::terminal_only(100_000, 1, 31);
        let path = simulate_seol_path(&params, &config, 0).unwrap();
        let mean = path.terminal_sum as f64 / config.horizon as f64;
        let se = (0.2f64 * 0.8 / config.horizon as f64).sqrt();
        assert!((mean - 0.2).abs() < 4.0 * se);
    }

    // Exact law of S_3 by enumerating all 2^3 indicator paths.
    #[test]
    fn seol_mean_matches_exhaustive_enumeration() {
        let alpha0 = 0.2;
        let kernel = ExcitationKernel::table(vec![0.3, 0.1]).unwrap();
        let params = SeolParams::new(alpha0, kernel.clone()).unwrap();
        let horizon = 3usize;

        let mut exact_mean = 0.0;
        for bits in 0u32..(1 << horizon) {
            let xs: Vec<f64> = (0..horizon).map(|t| f64::from((bits >> t) & 1)).collect();
            let mut prob = 1.0;
            for t in 0..horizon {
                let mut p = alpha0;
                for s in 1..=t {
                    p += kernel.value(s) * xs[t - s];
                }
                prob *= if xs[t] == 1.0 { p } else { 1.0 - p };
            }
            exact_mean += prob * xs.iter().sum::<f64>();
        }

        let n = 200_000usize;
        let config = SimulationConfig::terminal_only(horizon, n, 404);
        let ensemble = simulate_seol_ensemble(&params, &config).unwrap();
        let mc_mean: f64 =
            ensemble.iter().map(|p| p.terminal_sum as f64).sum::<f64>() / n as f64;
        // S_3 is bounded by 3, variance below 9/4
        let se = (2.25 / n as f64).sqrt();
        assert!(
            (mc_mean - exact_mean).abs() < 4.0 * se,
            "{mc_mean} vs exact {exact_mean}"
        );
    }

    #[test]
    fn seol_lln_limit_example() {
        let params = SeolParams::new(0.2, ExcitationKernel::table(vec![0.3]).unwrap()).unwrap();
        assert!((params.lln_limit() - 2.0 / 7.0).abs() <= 1e-15);
        let mu = 2.0 / 7.0;
        let expect = mu * (1.0 - mu) / (0.7 * 0.7);
        assert!((params.clt_variance() - expect).abs() <= 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::new(0, 1, 0, RecordMode::TerminalOnly, None).is_err());
        assert!(SimulationConfig::new(1, 0, 0, RecordMode::TerminalOnly, None).is_err());
        assert!(SimulationConfig::new(1, 1, 0, RecordMode::TerminalOnly, Some(0)).is_err());
    }
}
