//! Output documents and report files.
//!
//! Every command writes `fit.json` first, holding the exact resolved
//! configuration and seed (status `"pending"`), and rewrites it with results
//! once the run finishes (status `"complete"`). Result CSVs use a fixed
//! column order and 6-decimal fixed-point reals; full precision lives in
//! `fit.json`. Reruns with identical inputs produce byte-identical files.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use headroom_core::model::leh_score;
use headroom_core::synthetic::GeneratorSpec;
use headroom_core::variational::{SweepRunSummary, SIGMA_ALPHA_GRID, SWEEP_SEED_STRIDE};
use headroom_core::{
    DatasetSummary, FitConfig, FitResult, PosteriorSet, PriorConfig, ResponseMatrix,
    StabilityReport,
};
use serde::{Deserialize, Serialize};

use crate::errors::CliError;

/// Status value while a run is still in flight.
pub const STATUS_PENDING: &str = "pending";
/// Status value once results are written.
pub const STATUS_COMPLETE: &str = "complete";

/// The `fit.json` document: resolved configuration plus (once finished)
/// the full-precision fit result. Sections not applicable to a command are
/// omitted from the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    /// Which subcommand produced this run.
    pub command: String,
    /// `"pending"` until results exist, then `"complete"`.
    pub status: String,
    /// The single seed all randomness flows from.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<FitConfig>,
    /// Prior actually used; after a sweep, the winning prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// For `analyze`: path of the fit document that was re-analyzed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_fit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion: Option<ExclusionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ResultSection>,
}

impl FitDocument {
    /// A bare pending document; callers fill in the command's sections.
    pub fn pending(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            status: STATUS_PENDING.to_string(),
            seed,
            responses: None,
            format: None,
            config: None,
            prior: None,
            percentile: None,
            gamma_threshold: None,
            sweep: None,
            generator: None,
            source_fit: None,
            exclusion: None,
            diff_threshold: None,
            result: None,
        }
    }
}

/// Sweep provenance: the grid tried, per-run outcomes, and the winner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSection {
    pub grid: Vec<f64>,
    pub seed_stride: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_sigma_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<SweepRunSummary>,
}

impl SweepSection {
    pub fn planned() -> Self {
        Self {
            grid: SIGMA_ALPHA_GRID.to_vec(),
            seed_stride: SWEEP_SEED_STRIDE,
            chosen_sigma_alpha: None,
            runs: Vec::new(),
        }
    }
}

/// Which responders or items a stability run dropped, by resolved id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExclusionSection {
    /// `"responders"`, `"top-k"`, or `"unanimous"`.
    pub mode: String,
    pub responders: Vec<String>,
    pub items: Vec<String>,
}

/// Guessing-threshold filter outcome over all items.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuessingSection {
    pub threshold: f64,
    pub kept: usize,
    pub filtered: usize,
    pub kept_fraction: f64,
}

/// Full-precision fit outcome embedded in `fit.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultSection {
    pub n_responders: usize,
    pub n_items: usize,
    pub n_datasets: usize,
    pub final_elbo: f64,
    pub degenerate: bool,
    /// Highest posterior-mean ability; LEH in the reports is the item
    /// characteristic curve's slope at this ability.
    pub theta_star: f64,
    pub guessing: GuessingSection,
    pub elbo_trace: Vec<f64>,
    pub posterior: PosteriorSet,
}

/// The `stability.json` document: the same percentile comparison for both
/// reported statistics, plus what was excluded.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityDocument {
    pub percentile: f64,
    pub diff_threshold: f64,
    pub exclusion: ExclusionSection,
    pub leh: StabilityReport,
    pub log_alpha: StabilityReport,
}

/// Six-decimal fixed-point rendering used by every CSV real.
pub fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(path, e))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes `fit.json` into `out`, creating the directory if needed.
pub fn write_fit_document(out: &Path, doc: &FitDocument) -> Result<(), CliError> {
    create_dir(out)?;
    write_json(&out.join("fit.json"), doc)
}

/// Reads a `fit.json` back; parse failures are input errors (the file is
/// caller-supplied), read failures are I/O errors.
pub fn read_fit_document(path: &Path) -> Result<FitDocument, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::input(format!("{}: not a valid fit document: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish_csv(mut w: csv::Writer<fs::File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `items.csv`: one row per item in matrix order.
pub fn write_items_csv(out: &Path, data: &ResponseMatrix, fit: &FitResult) -> Result<(), CliError> {
    let path = out.join("items.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "item_id",
        "dataset_id",
        "alpha",
        "log_alpha",
        "beta",
        "gamma",
        "leh",
    ])
    .map_err(|e| CliError::io(&path, e))?;
    for j in 0..data.n_items() {
        let item = &fit.point_items[j];
        // A diverged fit can push parameters outside the curve's domain
        // (infinite alpha, gamma pinned to 1); its slope is reported as NaN
        // rather than aborting the diagnostic report.
        let leh = if item.validate().is_ok() && fit.theta_star.is_finite() {
            leh_score(item, fit.theta_star)
        } else {
            f64::NAN
        };
        let row = [
            data.item_ids()[j].clone(),
            data.dataset_names()[data.dataset_of(j)].clone(),
            fixed6(item.alpha),
            fixed6(fit.posterior.log_alpha[j].mu),
            fixed6(item.beta),
            fixed6(item.gamma),
            fixed6(leh),
        ];
        w.write_record(&row).map_err(|e| CliError::io(&path, e))?;
    }
    finish_csv(w, &path)
}

/// `responders.csv`: one row per responder, ordered by descending fitted
/// ability (ties keep matrix order; non-finite abilities from a degenerate
/// fit sort as equal rather than aborting the report).
pub fn write_responders_csv(
    out: &Path,
    data: &ResponseMatrix,
    fit: &FitResult,
) -> Result<(), CliError> {
    let mut order: Vec<usize> = (0..data.n_responders()).collect();
    order.sort_by(|&a, &b| {
        fit.posterior.theta[b]
            .mu
            .partial_cmp(&fit.posterior.theta[a].mu)
            .unwrap_or(Ordering::Equal)
    });

    let path = out.join("responders.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["responder_id", "theta_mu", "theta_sigma", "mean_accuracy"])
        .map_err(|e| CliError::io(&path, e))?;
    for i in order {
        let g = fit.posterior.theta[i];
        let row = [
            data.responder_ids()[i].clone(),
            fixed6(g.mu),
            fixed6(g.sigma()),
            fixed6(data.responder_accuracy(i)),
        ];
        w.write_record(&row).map_err(|e| CliError::io(&path, e))?;
    }
    finish_csv(w, &path)
}

/// `datasets.csv`: one row per dataset in matrix order.
pub fn write_datasets_csv(out: &Path, summaries: &[DatasetSummary]) -> Result<(), CliError> {
    let path = out.join("datasets.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "dataset_id",
        "n_items",
        "leh_p25",
        "leh_p50",
        "leh_p75",
        "log_alpha_p25",
        "log_alpha_p50",
        "log_alpha_p75",
        "beta_p25",
        "beta_p50",
        "beta_p75",
        "gamma_p25",
        "gamma_p50",
        "gamma_p75",
        "gamma_below_half",
        "unanimous",
    ])
    .map_err(|e| CliError::io(&path, e))?;
    for s in summaries {
        let row = [
            s.dataset.clone(),
            s.n_items.to_string(),
            fixed6(s.leh.p25),
            fixed6(s.leh.p50),
            fixed6(s.leh.p75),
            fixed6(s.log_alpha.p25),
            fixed6(s.log_alpha.p50),
            fixed6(s.log_alpha.p75),
            fixed6(s.beta.p25),
            fixed6(s.beta.p50),
            fixed6(s.beta.p75),
            fixed6(s.gamma.p25),
            fixed6(s.gamma.p50),
            fixed6(s.gamma.p75),
            fixed6(s.gamma_below_half),
            s.unanimous.to_string(),
        ];
        w.write_record(&row).map_err(|e| CliError::io(&path, e))?;
    }
    finish_csv(w, &path)
}

/// `responses.csv`: the simulated matrix in the same layout
/// [`crate::input::parse_responses`] reads (responder-major row order).
pub fn write_responses_csv(path: &Path, data: &ResponseMatrix) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(crate::input::CSV_HEADER)
        .map_err(|e| CliError::io(path, e))?;
    for i in 0..data.n_responders() {
        for j in 0..data.n_items() {
            let row = [
                data.responder_ids()[i].clone(),
                data.item_ids()[j].clone(),
                data.dataset_names()[data.dataset_of(j)].clone(),
                if data.correct(i, j) {
                    "1".to_string()
                } else {
                    "0".to_string()
                },
            ];
            w.write_record(&row).map_err(|e| CliError::io(path, e))?;
        }
    }
    finish_csv(w, path)
}
