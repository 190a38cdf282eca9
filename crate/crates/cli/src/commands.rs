//! The five subcommands: `fit`, `sweep`, `simulate`, `analyze`, `stability`.
//!
//! Shared flow for everything that fits: validate flags, parse responses,
//! write a pending `fit.json` with the resolved configuration, run, write
//! result CSVs, rewrite `fit.json` complete. Degenerate fits still produce
//! reports; with `--fail-on-degenerate` the process then exits with the
//! degenerate status code.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use headroom_core::variational::fit_with_progress;
use headroom_core::{
    canonical_fixture, dataset_summaries, guessing_filter, sample_truth, simulate_responses,
    stability_check, sweep_sigma_alpha, unanimous_items, FitConfig, FitResult, GeneratorSpec,
    PriorConfig, ResponseMatrix, Statistic, SweepError,
};

use crate::errors::CliError;
use crate::input::{parse_responses, Format};
use crate::report::{
    read_fit_document, write_datasets_csv, write_fit_document, write_items_csv, write_json,
    write_responders_csv, write_responses_csv, ExclusionSection, FitDocument, GuessingSection,
    ResultSection, StabilityDocument, SweepSection, STATUS_COMPLETE,
};

// ============================================================================
// Shared flag groups
// ============================================================================

/// Where the responses come from.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Response file: one row/object per (responder, item) cell.
    #[arg(long)]
    pub responses: PathBuf,
    /// Layout of the response file.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Optimizer and prior settings for one fit.
#[derive(Debug, Args)]
pub struct FitFlags {
    /// Seed all Monte Carlo draws flow from.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Adam steps.
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    /// Adam learning rate.
    #[arg(long = "lr", default_value_t = 0.05)]
    pub learning_rate: f64,
    /// Monte Carlo samples per ELBO/gradient estimate.
    #[arg(long, default_value_t = 4)]
    pub mc_samples: usize,
    /// Standard deviation of the ability prior.
    #[arg(long, default_value_t = 1.0)]
    pub theta_prior_sd: f64,
    /// Mean of the logit-guessing prior.
    #[arg(long, default_value_t = 0.0)]
    pub logit_gamma_prior_mean: f64,
}

impl FitFlags {
    fn config(&self) -> Result<FitConfig, CliError> {
        let config = FitConfig {
            seed: self.seed,
            steps: self.steps,
            learning_rate: self.learning_rate,
            mc_samples: self.mc_samples,
        };
        config.validate().map_err(CliError::input)?;
        Ok(config)
    }

    fn prior(&self, sigma_alpha: f64) -> Result<PriorConfig, CliError> {
        let prior = PriorConfig {
            log_alpha_sigma: sigma_alpha,
            theta_sd: self.theta_prior_sd,
            logit_gamma_mean: self.logit_gamma_prior_mean,
        };
        prior.validate().map_err(CliError::input)?;
        Ok(prior)
    }
}

/// Report settings and the output directory.
#[derive(Debug, Args)]
pub struct ReportFlags {
    /// Percentile summarized per dataset in stability comparisons.
    #[arg(long, default_value_t = 75.0)]
    pub percentile: f64,
    /// Items with fitted guessing at or above this are counted as filtered.
    #[arg(long, default_value_t = 0.5)]
    pub gamma_threshold: f64,
    /// Directory the report files are written into.
    #[arg(long)]
    pub out: PathBuf,
    /// Exit with the degenerate status code if the fit is degenerate.
    #[arg(long)]
    pub fail_on_degenerate: bool,
}

impl ReportFlags {
    fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=100.0).contains(&self.percentile) {
            return Err(CliError::input(format!(
                "percentile must lie in [0, 100], got {}",
                self.percentile
            )));
        }
        if !(self.gamma_threshold > 0.0 && self.gamma_threshold < 1.0) {
            return Err(CliError::input(format!(
                "gamma-threshold must lie strictly between 0 and 1, got {}",
                self.gamma_threshold
            )));
        }
        Ok(())
    }
}

// ============================================================================
// Subcommand argument sets
// ============================================================================

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fitting: FitFlags,
    /// Standard deviation of the log-discrimination prior (use `sweep` to
    /// grid-search it instead).
    #[arg(long, default_value_t = 0.4)]
    pub sigma_alpha: f64,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fitting: FitFlags,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Generator description as JSON (see `truth.json`'s `spec` shape).
    #[arg(
        long,
        conflicts_with = "canonical",
        required_unless_present = "canonical"
    )]
    pub spec: Option<PathBuf>,
    /// Use the built-in benchmark population instead of --spec.
    #[arg(long)]
    pub canonical: bool,
    /// Seed for the response draw (parameter sampling uses the generator's
    /// own seed).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for responses.csv and truth.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeCmd {
    /// fit.json produced by an earlier `fit` or `sweep` run.
    #[arg(long)]
    pub fit: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("exclusion").required(true).multiple(false)))]
pub struct StabilityCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fitting: FitFlags,
    /// Standard deviation of the log-discrimination prior for both fits.
    #[arg(long, default_value_t = 0.4)]
    pub sigma_alpha: f64,
    #[command(flatten)]
    pub report: ReportFlags,
    /// Comma-separated responder ids to drop in the comparison fit.
    #[arg(long, group = "exclusion", value_delimiter = ',', num_args = 0..)]
    pub exclude_responders: Option<Vec<String>>,
    /// Drop the k responders with the highest fitted ability (0 drops none).
    #[arg(long, group = "exclusion")]
    pub exclude_top_k: Option<usize>,
    /// Drop items every responder answered identically.
    #[arg(long, group = "exclusion")]
    pub exclude_unanimous: bool,
    /// Per-dataset absolute difference that counts as exceeding.
    #[arg(long, default_value_t = 0.02)]
    pub diff_threshold: f64,
}

// ============================================================================
// Shared pipeline pieces
// ============================================================================

fn progress_printer(label: &str, steps: usize) -> impl FnMut(usize, f64) + '_ {
    let stride = (steps / 10).max(1);
    move |step, elbo| {
        let done = step + 1;
        if done % stride == 0 || done == steps {
            println!("{label}: step {done}/{steps} elbo {elbo:.3}");
        }
    }
}

/// Whether every fitted item is inside the curve's domain, so percentile
/// summaries and slope evaluations are meaningful.
fn summaries_computable(fit: &FitResult) -> bool {
    fit.theta_star.is_finite() && fit.point_items.iter().all(|it| it.validate().is_ok())
}

fn result_section(data: &ResponseMatrix, fit: &FitResult, gamma_threshold: f64) -> ResultSection {
    let (kept, filtered, kept_fraction) = guessing_filter(fit, gamma_threshold);
    ResultSection {
        n_responders: data.n_responders(),
        n_items: data.n_items(),
        n_datasets: data.n_datasets(),
        final_elbo: fit.final_elbo,
        degenerate: fit.degenerate,
        theta_star: fit.theta_star,
        guessing: GuessingSection {
            threshold: gamma_threshold,
            kept: kept.len(),
            filtered: filtered.len(),
            kept_fraction,
        },
        elbo_trace: fit.elbo_trace.clone(),
        posterior: fit.posterior.clone(),
    }
}

/// Writes the three result CSVs and the completed `fit.json`. A fit whose
/// parameters went non-finite still gets item and responder rows (rendered
/// as NaN) but a header-only datasets.csv, since percentiles of NaN are
/// meaningless.
fn finish_fit_outputs(
    out: &Path,
    data: &ResponseMatrix,
    fit: &FitResult,
    doc: &mut FitDocument,
    gamma_threshold: f64,
) -> Result<(), CliError> {
    write_items_csv(out, data, fit)?;
    write_responders_csv(out, data, fit)?;
    let summaries = if summaries_computable(fit) {
        dataset_summaries(fit, data).map_err(|e| CliError::input(e.to_string()))?
    } else {
        Vec::new()
    };
    write_datasets_csv(out, &summaries)?;
    doc.result = Some(result_section(data, fit, gamma_threshold));
    doc.status = STATUS_COMPLETE.to_string();
    write_fit_document(out, doc)
}

fn print_fit_summary(label: &str, fit: &FitResult) {
    println!(
        "{label}: final elbo {:.3}, best ability {:.3}, degenerate: {}",
        fit.final_elbo, fit.theta_star, fit.degenerate
    );
}

fn degenerate_gate(degenerate: bool, fail_on_degenerate: bool) -> Result<(), CliError> {
    if degenerate && fail_on_degenerate {
        Err(CliError::degenerate(
            "fit flagged degenerate (non-finite values, decreasing objective, or collapsed discrimination)",
        ))
    } else {
        Ok(())
    }
}

// ============================================================================
// fit
// ============================================================================

pub fn run_fit(cmd: FitCmd) -> Result<(), CliError> {
    cmd.report.validate()?;
    let config = cmd.fitting.config()?;
    let prior = cmd.fitting.prior(cmd.sigma_alpha)?;
    let data = parse_responses(&cmd.input.responses, cmd.input.format)?;

    let mut doc = FitDocument::pending("fit", config.seed);
    doc.responses = Some(cmd.input.responses.display().to_string());
    doc.format = Some(cmd.input.format.to_string());
    doc.config = Some(config);
    doc.prior = Some(prior);
    doc.percentile = Some(cmd.report.percentile);
    doc.gamma_threshold = Some(cmd.report.gamma_threshold);
    write_fit_document(&cmd.report.out, &doc)?;

    let fit = fit_with_progress(
        &data,
        &prior,
        &config,
        progress_printer("fit", config.steps),
    );
    print_fit_summary("fit", &fit);
    finish_fit_outputs(
        &cmd.report.out,
        &data,
        &fit,
        &mut doc,
        cmd.report.gamma_threshold,
    )?;
    degenerate_gate(fit.degenerate, cmd.report.fail_on_degenerate)
}

// ============================================================================
// sweep
// ============================================================================

pub fn run_sweep(cmd: SweepCmd) -> Result<(), CliError> {
    cmd.report.validate()?;
    let config = cmd.fitting.config()?;
    // The grid overrides log_alpha_sigma run by run; the base carries the
    // other prior settings.
    let base_prior = cmd.fitting.prior(PriorConfig::default().log_alpha_sigma)?;
    let data = parse_responses(&cmd.input.responses, cmd.input.format)?;

    let mut doc = FitDocument::pending("sweep", config.seed);
    doc.responses = Some(cmd.input.responses.display().to_string());
    doc.format = Some(cmd.input.format.to_string());
    doc.config = Some(config);
    doc.percentile = Some(cmd.report.percentile);
    doc.gamma_threshold = Some(cmd.report.gamma_threshold);
    doc.sweep = Some(SweepSection::planned());
    write_fit_document(&cmd.report.out, &doc)?;

    let outcome = sweep_sigma_alpha(&data, &base_prior, &config).map_err(|e| match e {
        SweepError::AllRunsDegenerate => CliError::degenerate(e.to_string()),
    })?;
    for run in &outcome.runs {
        println!(
            "sweep: sigma-alpha {:.2} seed {} elbo {:.3}{}",
            run.sigma_alpha,
            run.seed,
            run.final_elbo,
            if run.degenerate { " (degenerate)" } else { "" }
        );
    }
    println!("sweep: chose sigma-alpha {:.2}", outcome.chosen_sigma_alpha);
    print_fit_summary("sweep", &outcome.chosen);

    doc.prior = Some(outcome.chosen.prior);
    if let Some(sweep) = doc.sweep.as_mut() {
        sweep.chosen_sigma_alpha = Some(outcome.chosen_sigma_alpha);
        sweep.runs = outcome.runs.clone();
    }
    finish_fit_outputs(
        &cmd.report.out,
        &data,
        &outcome.chosen,
        &mut doc,
        cmd.report.gamma_threshold,
    )?;
    degenerate_gate(outcome.chosen.degenerate, cmd.report.fail_on_degenerate)
}

// ============================================================================
// simulate
// ============================================================================

fn load_generator_spec(path: &Path) -> Result<GeneratorSpec, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let spec: GeneratorSpec = serde_json::from_slice(&bytes).map_err(|e| {
        CliError::input(format!(
            "{}: not a valid generator spec: {e}",
            path.display()
        ))
    })?;
    spec.validate().map_err(CliError::input)?;
    Ok(spec)
}

pub fn run_simulate(cmd: SimulateCmd) -> Result<(), CliError> {
    let spec = match (&cmd.spec, cmd.canonical) {
        (Some(path), false) => load_generator_spec(path)?,
        (None, true) => canonical_fixture(),
        // clap's conflict/requirement rules prevent the other combinations.
        _ => unreachable!("clap enforces exactly one of --spec/--canonical"),
    };

    let mut doc = FitDocument::pending("simulate", cmd.seed);
    doc.generator = Some(spec.clone());
    write_fit_document(&cmd.out, &doc)?;

    let truth = sample_truth(&spec);
    let data = simulate_responses(&truth, cmd.seed);
    write_responses_csv(&cmd.out.join("responses.csv"), &data)?;
    write_json(&cmd.out.join("truth.json"), &truth)?;
    doc.status = STATUS_COMPLETE.to_string();
    write_fit_document(&cmd.out, &doc)?;
    println!(
        "simulate: {} responders x {} items across {} dataset(s)",
        data.n_responders(),
        data.n_items(),
        data.n_datasets()
    );
    Ok(())
}

// ============================================================================
// analyze
// ============================================================================

pub fn run_analyze(cmd: AnalyzeCmd) -> Result<(), CliError> {
    cmd.report.validate()?;
    let source = read_fit_document(&cmd.fit)?;
    let result = source.result.ok_or_else(|| {
        CliError::input(format!(
            "{}: document has no result section (status \"{}\")",
            cmd.fit.display(),
            source.status
        ))
    })?;
    let config = source
        .config
        .ok_or_else(|| CliError::input(format!("{}: document has no config", cmd.fit.display())))?;
    let prior = source
        .prior
        .ok_or_else(|| CliError::input(format!("{}: document has no prior", cmd.fit.display())))?;
    let data = parse_responses(&cmd.input.responses, cmd.input.format)?;
    if result.posterior.n_responders() != data.n_responders()
        || result.posterior.n_items() != data.n_items()
    {
        return Err(CliError::input(format!(
            "fit covers {} responders x {} items but responses have {} x {}",
            result.posterior.n_responders(),
            result.posterior.n_items(),
            data.n_responders(),
            data.n_items()
        )));
    }

    let point_items = result.posterior.point_items();
    let fit = FitResult {
        posterior: result.posterior,
        point_items,
        theta_star: result.theta_star,
        final_elbo: result.final_elbo,
        elbo_trace: result.elbo_trace,
        degenerate: result.degenerate,
        config,
        prior,
    };

    let mut doc = FitDocument::pending("analyze", config.seed);
    doc.responses = Some(cmd.input.responses.display().to_string());
    doc.format = Some(cmd.input.format.to_string());
    doc.config = Some(config);
    doc.prior = Some(prior);
    doc.percentile = Some(cmd.report.percentile);
    doc.gamma_threshold = Some(cmd.report.gamma_threshold);
    doc.source_fit = Some(cmd.fit.display().to_string());
    write_fit_document(&cmd.report.out, &doc)?;

    finish_fit_outputs(
        &cmd.report.out,
        &data,
        &fit,
        &mut doc,
        cmd.report.gamma_threshold,
    )?;
    print_fit_summary("analyze", &fit);
    degenerate_gate(fit.degenerate, cmd.report.fail_on_degenerate)
}

// ============================================================================
// stability
// ============================================================================

enum Exclusion {
    Responders(Vec<String>),
    TopK(usize),
    Unanimous,
}

impl StabilityCmd {
    fn exclusion(&self) -> Exclusion {
        if let Some(ids) = &self.exclude_responders {
            // An explicitly empty list (or empty string value) is the empty
            // exclusion set: the comparison fit equals the full fit.
            let ids: Vec<String> = ids.iter().filter(|s| !s.is_empty()).cloned().collect();
            Exclusion::Responders(ids)
        } else if let Some(k) = self.exclude_top_k {
            Exclusion::TopK(k)
        } else {
            debug_assert!(self.exclude_unanimous);
            Exclusion::Unanimous
        }
    }
}

/// Resolves the exclusion flags to concrete responder/item indices, using
/// the full fit where the rule depends on fitted abilities.
fn resolve_exclusion(
    exclusion: &Exclusion,
    data: &ResponseMatrix,
    full_fit: &FitResult,
) -> Result<(Vec<usize>, Vec<usize>, ExclusionSection), CliError> {
    match exclusion {
        Exclusion::Responders(ids) => {
            let mut indices = Vec::with_capacity(ids.len());
            let mut seen = HashSet::new();
            for id in ids {
                let i = data
                    .responder_ids()
                    .iter()
                    .position(|r| r == id)
                    .ok_or_else(|| CliError::input(format!("unknown responder id \"{id}\"")))?;
                if seen.insert(i) {
                    indices.push(i);
                }
            }
            indices.sort_unstable();
            let section = ExclusionSection {
                mode: "responders".to_string(),
                responders: indices
                    .iter()
                    .map(|&i| data.responder_ids()[i].clone())
                    .collect(),
                items: Vec::new(),
            };
            Ok((indices, Vec::new(), section))
        }
        Exclusion::TopK(k) => {
            let mut order: Vec<usize> = (0..data.n_responders()).collect();
            order.sort_by(|&a, &b| {
                full_fit.posterior.theta[b]
                    .mu
                    .partial_cmp(&full_fit.posterior.theta[a].mu)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut indices: Vec<usize> = order.into_iter().take(*k).collect();
            indices.sort_unstable();
            let section = ExclusionSection {
                mode: "top-k".to_string(),
                responders: indices
                    .iter()
                    .map(|&i| data.responder_ids()[i].clone())
                    .collect(),
                items: Vec::new(),
            };
            Ok((indices, Vec::new(), section))
        }
        Exclusion::Unanimous => {
            let (all_correct, all_incorrect) = unanimous_items(data);
            let mut items: Vec<usize> = all_correct.into_iter().chain(all_incorrect).collect();
            items.sort_unstable();
            let section = ExclusionSection {
                mode: "unanimous".to_string(),
                responders: Vec::new(),
                items: items.iter().map(|&j| data.item_ids()[j].clone()).collect(),
            };
            Ok((Vec::new(), items, section))
        }
    }
}

pub fn run_stability(cmd: StabilityCmd) -> Result<(), CliError> {
    cmd.report.validate()?;
    if !(cmd.diff_threshold.is_finite() && cmd.diff_threshold >= 0.0) {
        return Err(CliError::input(format!(
            "diff-threshold must be a non-negative number, got {}",
            cmd.diff_threshold
        )));
    }
    let config = cmd.fitting.config()?;
    let prior = cmd.fitting.prior(cmd.sigma_alpha)?;
    let data = parse_responses(&cmd.input.responses, cmd.input.format)?;
    let exclusion = cmd.exclusion();

    let mut doc = FitDocument::pending("stability", config.seed);
    doc.responses = Some(cmd.input.responses.display().to_string());
    doc.format = Some(cmd.input.format.to_string());
    doc.config = Some(config);
    doc.prior = Some(prior);
    doc.percentile = Some(cmd.report.percentile);
    doc.gamma_threshold = Some(cmd.report.gamma_threshold);
    doc.diff_threshold = Some(cmd.diff_threshold);
    write_fit_document(&cmd.report.out, &doc)?;

    // Full fit, reported into its own subdirectory.
    let full_out = cmd.report.out.join("full");
    let mut full_doc = FitDocument::pending("fit", config.seed);
    full_doc.responses = doc.responses.clone();
    full_doc.format = doc.format.clone();
    full_doc.config = Some(config);
    full_doc.prior = Some(prior);
    full_doc.gamma_threshold = Some(cmd.report.gamma_threshold);
    write_fit_document(&full_out, &full_doc)?;
    let full_fit = fit_with_progress(
        &data,
        &prior,
        &config,
        progress_printer("full", config.steps),
    );
    print_fit_summary("full", &full_fit);
    finish_fit_outputs(
        &full_out,
        &data,
        &full_fit,
        &mut full_doc,
        cmd.report.gamma_threshold,
    )?;

    // Exclusion refit on the reduced matrix, same seed and settings.
    let (drop_responders, drop_items, section) = resolve_exclusion(&exclusion, &data, &full_fit)?;
    let reduced = if !drop_responders.is_empty() {
        data.without_responders(&drop_responders)
    } else {
        data.without_items(&drop_items)
    }
    .map_err(|e| CliError::input(e.to_string()))?;

    let excluded_out = cmd.report.out.join("excluded");
    let mut excluded_doc = FitDocument::pending("fit", config.seed);
    excluded_doc.responses = doc.responses.clone();
    excluded_doc.format = doc.format.clone();
    excluded_doc.config = Some(config);
    excluded_doc.prior = Some(prior);
    excluded_doc.gamma_threshold = Some(cmd.report.gamma_threshold);
    excluded_doc.exclusion = Some(section.clone());
    write_fit_document(&excluded_out, &excluded_doc)?;
    let excluded_fit = fit_with_progress(
        &reduced,
        &prior,
        &config,
        progress_printer("excluded", config.steps),
    );
    print_fit_summary("excluded", &excluded_fit);
    finish_fit_outputs(
        &excluded_out,
        &reduced,
        &excluded_fit,
        &mut excluded_doc,
        cmd.report.gamma_threshold,
    )?;

    // The comparison itself. Out-of-domain fitted values make percentiles
    // meaningless, so that aborts as degenerate regardless of the flag.
    if !summaries_computable(&full_fit) || !summaries_computable(&excluded_fit) {
        return Err(CliError::degenerate(
            "a fit produced invalid parameters; stability comparison impossible",
        ));
    }
    let leh = stability_check(
        &full_fit,
        &data,
        &excluded_fit,
        &reduced,
        Statistic::Leh,
        cmd.report.percentile,
        cmd.diff_threshold,
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    let log_alpha = stability_check(
        &full_fit,
        &data,
        &excluded_fit,
        &reduced,
        Statistic::LogAlpha,
        cmd.report.percentile,
        cmd.diff_threshold,
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    println!(
        "stability: leh r {:.4} median |diff| {:.4}; log-alpha r {:.4} median |diff| {:.4}",
        leh.pearson_r, leh.median_abs_diff, log_alpha.pearson_r, log_alpha.median_abs_diff
    );

    let stability = StabilityDocument {
        percentile: cmd.report.percentile,
        diff_threshold: cmd.diff_threshold,
        exclusion: section.clone(),
        leh,
        log_alpha,
    };
    write_json(&cmd.report.out.join("stability.json"), &stability)?;
    doc.exclusion = Some(section);
    doc.status = STATUS_COMPLETE.to_string();
    write_fit_document(&cmd.report.out, &doc)?;

    degenerate_gate(
        full_fit.degenerate || excluded_fit.degenerate,
        cmd.report.fail_on_degenerate,
    )
}
