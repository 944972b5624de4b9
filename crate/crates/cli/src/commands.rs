//! The six subcommands: limits, simulate, verify, figure, seol, oracle.
//!
//! Every command is a pure function of the resolved configuration: outputs
//! land under the configured directory, worker counts change scheduling but
//! never results, and the only environment-dependent field is the
//! suppressible timestamp in the JSON documents.

use std::io;
use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

use dthawkes::model::{check_clt_tail_condition, ModelParams};
use dthawkes::oracle::{enumerate_distribution, oracle_crosscheck, OracleError};
use dthawkes::simulate::{simulate_ensemble, simulate_seol_ensemble, RecordMode};
use dthawkes::stats::{
    histogram, ks_test_normal, lindeberg_diagnostic_streamed, martingale_diagnostic, summarize,
    EnsembleSummary, GofReport, StatsError,
};
use dthawkes::theory::{exact_moment_recursion, increment_moment_constants, TheoreticalLimits};

use crate::config::{format_f64, CommandSetupError, ConfigError, RunConfig};
use crate::output::{
    verdict_document, write_histogram_csv, write_json, write_seol_csv, write_series_csv,
    write_summary_csv, write_terminal_csv, CheckOutcome,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Setup(#[from] CommandSetupError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl From<ConfigError> for CliError {
    fn from(err: ConfigError) -> Self {
        CliError::Setup(CommandSetupError::Config(err))
    }
}

impl From<dthawkes::model::ModelError> for CliError {
    fn from(err: dthawkes::model::ModelError) -> Self {
        CliError::Setup(CommandSetupError::Model(err))
    }
}

impl From<dthawkes::simulate::SimError> for CliError {
    fn from(err: dthawkes::simulate::SimError) -> Self {
        CliError::Setup(CommandSetupError::Sim(err))
    }
}

/// Exit codes: 0 pass, 1 verification failure, 2 config error, 3 model
/// assumption violated.
pub fn exit_code(err: &CliError) -> i32 {
    use dthawkes::model::ModelError;
    use dthawkes::simulate::SimError;
    match err {
        CliError::Setup(CommandSetupError::Model(ModelError::UnstableModel { .. })) => 3,
        CliError::Setup(CommandSetupError::Sim(
            SimError::ProbabilityBudgetExceeded(_) | SimError::ProbabilityOverflow { .. },
        )) => 3,
        _ => 2,
    }
}

fn with_pool<T: Send>(workers: Option<usize>, run: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match workers {
        Some(workers) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Pool(e.to_string()))?
            .install(run)),
        None => Ok(run()),
    }
}

fn ensure_out_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.out_dir)?;
    Ok(config.out_dir.clone())
}

/// `limits`: print the closed-form limit and bound certificates, write
/// limits.json.
pub fn cmd_limits(config: &RunConfig) -> Result<bool, CliError> {
    let params = config.model_params()?;
    let limits = TheoreticalLimits::for_params(&params);
    let constants = increment_moment_constants(&params);
    let rho = params.branching_ratio();

    println!("branching ratio rho        {}", format_f64(rho));
    println!("lln limit N_t/t            {}", format_f64(limits.mu_n));
    println!("lln limit L_t/t            {}", format_f64(limits.mu_l));
    println!("clt variance counts        {}", format_f64(limits.sigma2_n));
    println!("clt variance marks         {}", format_f64(limits.sigma2_l));
    println!("mean bound E[Z_t]          {}", format_f64(limits.mean_bound_count));
    println!("mean bound E[X_t]          {}", format_f64(limits.mean_bound_mark));
    println!(
        "bound E[lambda_t^2]        {}",
        format_f64(limits.lambda_second_moment_bound)
    );
    println!("increment c1 (counts)      {}", format_f64(constants.c1_counts));
    println!("increment c2 (counts)      {}", format_f64(constants.c2_counts));
    println!("increment c1 (marks)       {}", format_f64(constants.c1_marks));
    println!("increment c2 (marks)       {}", format_f64(constants.c2_marks));

    if config.json_outputs {
        let out = ensure_out_dir(config)?;
        let mut doc = serde_json::to_value(&limits).expect("limits serialize");
        let object = doc.as_object_mut().expect("limits object");
        object.insert("branching_ratio".into(), json!(rho));
        object.insert(
            "increment_constants".into(),
            serde_json::to_value(&constants).expect("constants serialize"),
        );
        object.insert("config_hash".into(), json!(config.config_hash()));
        write_json(&out.join("limits.json"), &doc)?;
    }
    Ok(true)
}

fn series_file_name(index: u64, n_paths: usize) -> String {
    let width = (n_paths.max(2) - 1).to_string().len();
    format!("path_{index:0width$}.csv")
}

/// `simulate`: write the terminal table (and per-path series when
/// requested).
pub fn cmd_simulate(config: &RunConfig) -> Result<bool, CliError> {
    let params = config.model_params()?;
    let sim = config.simulation_config()?;
    let ensemble = with_pool(config.workers, || simulate_ensemble(&params, &sim))?;
    let out = ensure_out_dir(config)?;
    write_terminal_csv(&out.join("terminal.csv"), &ensemble)?;
    if sim.record_mode == RecordMode::FullSeries {
        let series_dir = out.join("series");
        std::fs::create_dir_all(&series_dir)?;
        for path in &ensemble {
            write_series_csv(
                &series_dir.join(series_file_name(path.path_index, sim.n_paths)),
                path,
            )?;
        }
    }
    let truncated = ensemble.iter().filter(|p| p.truncation_exceeded).count();
    if truncated > 0 {
        eprintln!(
            "warning: truncation window dropped kernel mass above tolerance on {truncated} path(s)"
        );
    }
    println!(
        "simulated {} paths x {} steps -> {}",
        sim.n_paths,
        sim.horizon,
        out.join("terminal.csv").display()
    );
    Ok(true)
}

fn ks_outcome(name: &'static str, report: &GofReport) -> CheckOutcome {
    CheckOutcome::new(name, report.statistic, report.significance, report.verdict)
        .with_detail("p_value", json!(report.p_value))
        .with_detail("target_variance", json!(report.target_variance))
        .with_detail("n", json!(report.n))
}

fn z_score(difference: f64, standard_error: f64) -> f64 {
    if standard_error > 0.0 {
        difference.abs() / standard_error
    } else if difference == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn lln_outcomes(summary: &EnsembleSummary, limits: &TheoreticalLimits) -> Vec<CheckOutcome> {
    let n = summary.n_paths as f64;
    let se_counts = (summary.var_count_rate / n).sqrt();
    let se_marks = (summary.var_mark_rate / n).sqrt();
    vec![
        CheckOutcome::new(
            "lln_counts",
            z_score(summary.mean_count_rate - limits.mu_n, se_counts),
            4.0,
            z_score(summary.mean_count_rate - limits.mu_n, se_counts) < 4.0,
        )
        .with_detail("mean", json!(summary.mean_count_rate))
        .with_detail("limit", json!(limits.mu_n)),
        CheckOutcome::new(
            "lln_marks",
            z_score(summary.mean_mark_rate - limits.mu_l, se_marks),
            4.0,
            z_score(summary.mean_mark_rate - limits.mu_l, se_marks) < 4.0,
        )
        .with_detail("mean", json!(summary.mean_mark_rate))
        .with_detail("limit", json!(limits.mu_l)),
    ]
}

/// `verify`: LLN, CLT goodness of fit, martingale identities, Lindeberg
/// fourth-moment ratio, and the CLT tail condition; exit reflects the
/// conjunction of the selected checks.
pub fn cmd_verify(config: &RunConfig) -> Result<bool, CliError> {
    let params = config.model_params()?;
    let mut sim = config.simulation_config()?;
    // terminals are all the main ensemble needs; the fourth-moment pass
    // streams its own series below
    sim.record_mode = RecordMode::TerminalOnly;
    if sim.n_paths < 2 {
        return Err(ConfigError::Invalid("verify needs simulation.n_paths >= 2".into()).into());
    }
    let limits = TheoreticalLimits::for_params(&params);
    let ensemble = with_pool(config.workers, || simulate_ensemble(&params, &sim))?;
    let summary = summarize(&ensemble, &limits)?;

    let mut checks = Vec::new();
    if config.checks.lln {
        checks.extend(lln_outcomes(&summary, &limits));
    }
    if config.checks.clt {
        let sigma2_counts = config.sigma2_counts_override.unwrap_or(limits.sigma2_n);
        let sigma2_marks = config.sigma2_marks_override.unwrap_or(limits.sigma2_l);
        let counts = ks_test_normal(&summary.normalized_counts, sigma2_counts, config.significance)?;
        let marks = ks_test_normal(&summary.normalized_marks, sigma2_marks, config.significance)?;
        checks.push(ks_outcome("clt_counts_ks", &counts));
        checks.push(ks_outcome("clt_marks_ks", &marks));
    }
    if config.checks.martingale {
        let diag = martingale_diagnostic(&ensemble)?;
        let mean_threshold = 4.0 * (diag.mean_compensator / diag.n_paths as f64).sqrt();
        checks.push(
            CheckOutcome::new(
                "martingale_mean",
                diag.mean_residual.abs(),
                mean_threshold,
                diag.mean_residual.abs() < mean_threshold,
            )
            .with_detail("mean_compensator", json!(diag.mean_compensator)),
        );
        checks.push(
            CheckOutcome::new(
                "martingale_variance",
                (diag.variance_ratio - 1.0).abs(),
                0.05,
                (diag.variance_ratio - 1.0).abs() < 0.05,
            )
            .with_detail("variance_ratio", json!(diag.variance_ratio)),
        );
    }
    if config.checks.lindeberg {
        let constants = increment_moment_constants(&params);
        let diag = with_pool(config.workers, || {
            lindeberg_diagnostic_streamed(&params, &constants, &sim)
        })??;
        checks.push(
            CheckOutcome::new(
                "lindeberg_fourth_moment",
                (diag.ratio - 1.0).abs(),
                0.1,
                (diag.ratio - 1.0).abs() < 0.1,
            )
            .with_detail("empirical", json!(diag.empirical_mean_fourth))
            .with_detail("predicted", json!(diag.predicted_mean_fourth))
            .with_detail("samples", json!(diag.samples)),
        );
    }
    if config.checks.tail_condition {
        if let Some(outcome) = tail_condition_outcome(&params, sim.horizon)? {
            checks.push(outcome);
        }
    }

    for check in &checks {
        println!(
            "check {:<24} statistic={:<12.6} threshold={:<12.6} {}",
            check.name,
            check.statistic,
            check.threshold,
            if check.pass { "PASS" } else { "FAIL" }
        );
    }
    let out = ensure_out_dir(config)?;
    if config.json_outputs {
        let doc = verdict_document("verify", &config.config_hash(), &checks, config.emit_timestamp);
        write_json(&out.join("verify.json"), &doc)?;
    }
    if config.csv_outputs {
        write_summary_csv(&out.join("summary.csv"), &summary)?;
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn tail_condition_outcome(
    params: &ModelParams,
    horizon: usize,
) -> Result<Option<CheckOutcome>, CliError> {
    if horizon < 4 {
        return Ok(None);
    }
    let mut grid: Vec<usize> = [16, 8, 4, 2, 1]
        .iter()
        .map(|d| (horizon / d).max(2))
        .collect();
    grid.dedup();
    let report = check_clt_tail_condition(params.kernel(), &grid)?;
    let first = report.values.first().expect("non-empty grid").1;
    let last = report.values.last().expect("non-empty grid").1;
    Ok(Some(
        CheckOutcome::new("clt_tail_condition", last, first, report.holds)
            .with_detail(
                "grid",
                json!(report.values.iter().map(|&(t, _)| t).collect::<Vec<_>>()),
            )
            .with_detail(
                "values",
                json!(report.values.iter().map(|&(_, v)| v).collect::<Vec<_>>()),
            ),
    ))
}

/// `figure`: histogram plus overlay-density tables for both normalized
/// terminal statistics.
pub fn cmd_figure(config: &RunConfig) -> Result<bool, CliError> {
    let params = config.model_params()?;
    let mut sim = config.simulation_config()?;
    sim.record_mode = RecordMode::TerminalOnly;
    let limits = TheoreticalLimits::for_params(&params);
    let ensemble = with_pool(config.workers, || simulate_ensemble(&params, &sim))?;
    let summary = summarize(&ensemble, &limits)?;
    let counts_bins = histogram(&summary.normalized_counts, config.bins, limits.sigma2_n)?;
    let marks_bins = histogram(&summary.normalized_marks, config.bins, limits.sigma2_l)?;
    let out = ensure_out_dir(config)?;
    write_histogram_csv(&out.join("figure_counts.csv"), &counts_bins)?;
    write_histogram_csv(&out.join("figure_marks.csv"), &marks_bins)?;
    println!(
        "figure data for {} paths -> {} and {}",
        sim.n_paths,
        out.join("figure_counts.csv").display(),
        out.join("figure_marks.csv").display()
    );
    Ok(true)
}

/// `seol`: 0-1 baseline ensemble with its own LLN and CLT checks.
pub fn cmd_seol(config: &RunConfig) -> Result<bool, CliError> {
    let params = config.seol_params()?;
    let sim = config.simulation_config()?;
    if sim.n_paths < 2 {
        return Err(ConfigError::Invalid("seol needs simulation.n_paths >= 2".into()).into());
    }
    let ensemble = with_pool(config.workers, || simulate_seol_ensemble(&params, &sim))??;
    let mu = params.lln_limit();
    let variance = params.clt_variance();
    let horizon = sim.horizon as f64;
    let rates: Vec<f64> = ensemble
        .iter()
        .map(|p| p.terminal_sum as f64 / horizon)
        .collect();
    let n = rates.len() as f64;
    let mean_rate = rates.iter().sum::<f64>() / n;
    let var_rate =
        rates.iter().map(|r| (r - mean_rate).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var_rate / n).sqrt();
    let normalized: Vec<f64> = ensemble
        .iter()
        .map(|p| (p.terminal_sum as f64 - mu * horizon) / horizon.sqrt())
        .collect();
    let ks = ks_test_normal(&normalized, variance, config.significance)?;

    let lln_statistic = z_score(mean_rate - mu, se);
    let checks = vec![
        CheckOutcome::new("seol_lln", lln_statistic, 3.0, lln_statistic < 3.0)
            .with_detail("mean", json!(mean_rate))
            .with_detail("limit", json!(mu)),
        ks_outcome("seol_clt_ks", &ks),
    ];
    println!(
        "S_n/n = {} vs mu = {} ({} paths); clt variance {}",
        format_f64(mean_rate),
        format_f64(mu),
        ensemble.len(),
        format_f64(variance)
    );
    for check in &checks {
        println!(
            "check {:<24} statistic={:<12.6} threshold={:<12.6} {}",
            check.name,
            check.statistic,
            check.threshold,
            if check.pass { "PASS" } else { "FAIL" }
        );
    }
    let out = ensure_out_dir(config)?;
    if config.csv_outputs {
        write_seol_csv(&out.join("seol_terminal.csv"), &ensemble)?;
    }
    if config.json_outputs {
        let doc = verdict_document("seol", &config.config_hash(), &checks, config.emit_timestamp);
        write_json(&out.join("seol.json"), &doc)?;
    }
    Ok(checks.iter().all(|c| c.pass))
}

/// `oracle`: exhaustive enumeration at tiny scale cross-checked against
/// Monte Carlo in total variation.
pub fn cmd_oracle(config: &RunConfig) -> Result<bool, CliError> {
    let params = config.model_params()?;
    let sim = config.simulation_config()?;
    let laws = enumerate_distribution(&params, sim.horizon, config.oracle_z_cap)?;
    let report = with_pool(config.workers, || {
        oracle_crosscheck(
            &params,
            sim.horizon,
            config.oracle_z_cap,
            config.oracle_n_mc,
            sim.master_seed,
        )
    })??;
    let recursion_mean: f64 = exact_moment_recursion(&params, sim.horizon)
        .iter()
        .map(|row| row.mean_count)
        .sum();
    let mean_gap = (report.enumerated_mean - recursion_mean).abs();
    let checks = vec![
        CheckOutcome::new(
            "oracle_tv_distance",
            report.tv_distance,
            report.threshold,
            report.pass,
        )
        .with_detail("n_mc", json!(report.n_mc))
        .with_detail("truncation_mass", json!(report.truncation_mass)),
        CheckOutcome::new("oracle_mean_agreement", mean_gap, 1e-6, mean_gap < 1e-6)
            .with_detail("enumerated_mean", json!(report.enumerated_mean))
            .with_detail("recursion_mean", json!(recursion_mean))
            .with_detail("mc_mean", json!(report.mc_mean)),
    ];
    for check in &checks {
        println!(
            "check {:<24} statistic={:<12.6e} threshold={:<12.6e} {}",
            check.name,
            check.statistic,
            check.threshold,
            if check.pass { "PASS" } else { "FAIL" }
        );
    }
    let out = ensure_out_dir(config)?;
    if config.json_outputs {
        let mut doc = verdict_document("oracle", &config.config_hash(), &checks, config.emit_timestamp);
        let object = doc.as_object_mut().expect("verdict object");
        object.insert(
            "count_law".into(),
            serde_json::to_value(&laws.counts).expect("law serialize"),
        );
        write_json(&out.join("oracle.json"), &doc)?;
    }
    Ok(checks.iter().all(|c| c.pass))
}

