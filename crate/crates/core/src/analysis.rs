//! Statistics over a fitted model: per-dataset parameter distributions,
//! paired-fit stability checks, unanimous-item and guessing-based item
//! partitions, and the small numeric toolkit (percentile, Pearson,
//! Spearman) everything else leans on.
//!
//! All statistics are computed on posterior means — one number per item or
//! responder — not on posterior samples.

use std::collections::HashMap;

use thiserror::Error;

use crate::data::ResponseMatrix;
use crate::model::leh_score;
use crate::variational::FitResult;

/// Errors from statistical routines with unmet preconditions.
#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least one value")]
    EmptyInput,
    #[error("percentile must lie in [0, 100], got {0}")]
    InvalidPercentile(f64),
    #[error("need equally many values on both sides, got {left} and {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least two value pairs, got {0}")]
    TooFewValues(usize),
    #[error("correlation undefined: {side} side has zero variance")]
    ZeroVariance { side: &'static str },
    #[error("fit shape ({fit_responders} responders, {fit_items} items) does not match data ({data_responders}, {data_items})")]
    DimensionMismatch {
        fit_responders: usize,
        fit_items: usize,
        data_responders: usize,
        data_items: usize,
    },
    #[error("the two fits cover different datasets: {0:?} vs {1:?}")]
    DatasetMismatch(Vec<String>, Vec<String>),
}

/// Percentile by linear interpolation between closest ranks: the value at
/// fractional index `(n - 1) * p / 100` of the sorted list.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(AnalysisError::InvalidPercentile(p));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| {
        a.partial_cmp(b)
            .expect("percentile input must not contain NaN")
    });
    let index = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = index.floor() as usize;
    let hi = index.ceil() as usize;
    Ok(sorted[lo] + (index - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Product-moment correlation of two equally long samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooFewValues(x.len()));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mean_x, b - mean_y);
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 {
        return Err(AnalysisError::ZeroVariance { side: "left" });
    }
    if var_y == 0.0 {
        return Err(AnalysisError::ZeroVariance { side: "right" });
    }
    // Perfectly correlated inputs (identical vectors in particular) must
    // report exactly +-1; rounding in the square roots would otherwise land
    // a few ulp off in either direction.
    if cov * cov >= var_x * var_y {
        return Ok(1.0f64.copysign(cov));
    }
    Ok((cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

/// Rank correlation: Pearson correlation of the two rank vectors, with
/// tied values assigned their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("rank input must not contain NaN")
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Number of positions where the two value lists agree in ascending rank
/// (position `k` matches when the same index holds rank `k` on both sides).
/// Ties are broken by index, which keeps the count deterministic.
pub fn matching_rank_positions(a: &[f64], b: &[f64]) -> usize {
    assert_eq!(a.len(), b.len(), "rank comparison needs equally long lists");
    let rank_of = |v: &[f64]| {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).expect("no NaN").then(i.cmp(&j)));
        let mut rank = vec![0usize; v.len()];
        for (r, &idx) in order.iter().enumerate() {
            rank[idx] = r;
        }
        rank
    };
    rank_of(a)
        .iter()
        .zip(rank_of(b))
        .filter(|(ra, rb)| *ra == rb)
        .count()
}

/// 25th/50th/75th percentiles of one statistic over a dataset's items.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Percentiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

impl Percentiles {
    fn compute(values: &[f64]) -> Result<Self, AnalysisError> {
        Ok(Self {
            p25: percentile(values, 25.0)?,
            p50: percentile(values, 50.0)?,
            p75: percentile(values, 75.0)?,
        })
    }
}

/// Per-dataset distribution summary of the fitted item parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub n_items: usize,
    pub leh: Percentiles,
    pub log_alpha: Percentiles,
    pub beta: Percentiles,
    pub gamma: Percentiles,
    /// Fraction of the dataset's items with fitted guessing below 0.5.
    pub gamma_below_half: f64,
    /// Items every responder answered the same way.
    pub unanimous: usize,
}

fn check_dimensions(fit: &FitResult, data: &ResponseMatrix) -> Result<(), AnalysisError> {
    if fit.posterior.n_responders() != data.n_responders()
        || fit.point_items.len() != data.n_items()
    {
        return Err(AnalysisError::DimensionMismatch {
            fit_responders: fit.posterior.n_responders(),
            fit_items: fit.point_items.len(),
            data_responders: data.n_responders(),
            data_items: data.n_items(),
        });
    }
    Ok(())
}

/// One [`DatasetSummary`] per dataset, in the matrix's dataset order. LEH
/// is evaluated at the fit's best-responder ability.
pub fn dataset_summaries(
    fit: &FitResult,
    data: &ResponseMatrix,
) -> Result<Vec<DatasetSummary>, AnalysisError> {
    check_dimensions(fit, data)?;
    let (all_correct, all_incorrect) = unanimous_items(data);
    let mut unanimous_per_dataset = vec![0usize; data.n_datasets()];
    for &j in all_correct.iter().chain(&all_incorrect) {
        unanimous_per_dataset[data.dataset_of(j)] += 1;
    }
    let mut summaries = Vec::with_capacity(data.n_datasets());
    for (d, &unanimous) in unanimous_per_dataset.iter().enumerate() {
        let items: Vec<usize> = (0..data.n_items())
            .filter(|&j| data.dataset_of(j) == d)
            .collect();
        let gather = |f: &dyn Fn(usize) -> f64| items.iter().map(|&j| f(j)).collect::<Vec<_>>();
        let leh = gather(&|j| leh_score(&fit.point_items[j], fit.theta_star));
        let log_alpha = gather(&|j| fit.point_items[j].alpha.ln());
        let beta = gather(&|j| fit.point_items[j].beta);
        let gamma = gather(&|j| fit.point_items[j].gamma);
        let below = gamma.iter().filter(|&&g| g < 0.5).count() as f64 / items.len() as f64;
        summaries.push(DatasetSummary {
            dataset: data.dataset_names()[d].clone(),
            n_items: items.len(),
            leh: Percentiles::compute(&leh)?,
            log_alpha: Percentiles::compute(&log_alpha)?,
            beta: Percentiles::compute(&beta)?,
            gamma: Percentiles::compute(&gamma)?,
            gamma_below_half: below,
            unanimous,
        });
    }
    Ok(summaries)
}

/// Partitions item indices into (answered correctly by everyone, answered
/// incorrectly by everyone).
pub fn unanimous_items(data: &ResponseMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut all_correct = Vec::new();
    let mut all_incorrect = Vec::new();
    for j in 0..data.n_items() {
        let column = data.item_column(j);
        if column.iter().all(|&c| c != 0) {
            all_correct.push(j);
        } else if column.iter().all(|&c| c == 0) {
            all_incorrect.push(j);
        }
    }
    (all_correct, all_incorrect)
}

/// Which per-item statistic a stability comparison tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Leh,
    LogAlpha,
}

impl Statistic {
    fn of(self, fit: &FitResult, item: usize) -> f64 {
        match self {
            Statistic::Leh => leh_score(&fit.point_items[item], fit.theta_star),
            Statistic::LogAlpha => fit.point_items[item].alpha.ln(),
        }
    }
}

/// How strongly a per-dataset percentile statistic agrees between two fits.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilityReport {
    pub datasets: Vec<String>,
    /// Per-dataset percentile values under the first and second fit.
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    pub pearson_r: f64,
    pub median_abs_diff: f64,
    /// Sample standard deviation of the signed differences.
    pub diff_sd: f64,
    /// Datasets whose absolute difference exceeds the caller's threshold.
    pub exceeding: Vec<String>,
}

/// Compares the per-dataset `p`-th percentile of a statistic between two
/// fits. The second fit may cover a subset of responders or items (its own
/// matrix says which), but both must span the same datasets. Percentiles
/// are taken over the items present in *both* matrices (matched by item
/// id), so an item-exclusion comparison measures how much the surviving
/// items' statistics moved rather than the bookkeeping effect of the
/// excluded items sitting inside one side's percentile.
#[allow(clippy::too_many_arguments)]
pub fn stability_check(
    fit_a: &FitResult,
    data_a: &ResponseMatrix,
    fit_b: &FitResult,
    data_b: &ResponseMatrix,
    statistic: Statistic,
    p: f64,
    threshold: f64,
) -> Result<StabilityReport, AnalysisError> {
    check_dimensions(fit_a, data_a)?;
    check_dimensions(fit_b, data_b)?;
    let names_a = data_a.dataset_names();
    let names_b = data_b.dataset_names();
    let mut sorted_a = names_a.to_vec();
    let mut sorted_b = names_b.to_vec();
    sorted_a.sort();
    sorted_b.sort();
    if sorted_a != sorted_b {
        return Err(AnalysisError::DatasetMismatch(sorted_a, sorted_b));
    }

    let index_b: HashMap<&str, usize> = data_b
        .item_ids()
        .iter()
        .enumerate()
        .map(|(j, id)| (id.as_str(), j))
        .collect();

    let mut values_a = Vec::with_capacity(names_a.len());
    let mut values_b = Vec::with_capacity(names_a.len());
    for name in names_a {
        let d = data_a
            .dataset_names()
            .iter()
            .position(|n| n == name)
            .expect("checked above");
        let mut shared_a = Vec::new();
        let mut shared_b = Vec::new();
        for j in 0..data_a.n_items() {
            if data_a.dataset_of(j) != d {
                continue;
            }
            if let Some(&jb) = index_b.get(data_a.item_ids()[j].as_str()) {
                shared_a.push(statistic.of(fit_a, j));
                shared_b.push(statistic.of(fit_b, jb));
            }
        }
        values_a.push(percentile(&shared_a, p)?);
        values_b.push(percentile(&shared_b, p)?);
    }
    let diffs: Vec<f64> = values_a.iter().zip(&values_b).map(|(a, b)| a - b).collect();
    let abs_diffs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let diff_sd = if diffs.len() < 2 {
        0.0
    } else {
        (diffs
            .iter()
            .map(|d| (d - mean_diff) * (d - mean_diff))
            .sum::<f64>()
            / (diffs.len() - 1) as f64)
            .sqrt()
    };
    let exceeding = names_a
        .iter()
        .zip(&abs_diffs)
        .filter(|(_, &d)| d > threshold)
        .map(|(n, _)| n.clone())
        .collect();
    Ok(StabilityReport {
        datasets: names_a.to_vec(),
        pearson_r: pearson(&values_a, &values_b)?,
        median_abs_diff: percentile(&abs_diffs, 50.0)?,
        diff_sd,
        exceeding,
        values_a,
        values_b,
    })
}

/// Splits item indices by fitted guessing level: (kept with `gamma <
/// threshold`, filtered, kept fraction).
pub fn guessing_filter(fit: &FitResult, threshold: f64) -> (Vec<usize>, Vec<usize>, f64) {
    assert!(
        threshold > 0.0 && threshold < 1.0,
        "guessing threshold must lie strictly between 0 and 1"
    );
    let mut kept = Vec::new();
    let mut filtered = Vec::new();
    for (j, item) in fit.point_items.iter().enumerate() {
        if item.gamma < threshold {
            kept.push(j);
        } else {
            filtered.push(j);
        }
    }
    let fraction = kept.len() as f64 / fit.point_items.len() as f64;
    (kept, filtered, fraction)
}

/// One responder's fitted ability next to their raw accuracy.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AbilityAccuracy {
    pub responder: String,
    pub theta: f64,
    pub accuracy: f64,
}

/// Per-responder (ability posterior mean, unweighted mean accuracy) pairs,
/// ordered by descending ability.
pub fn ability_accuracy_pairs(
    fit: &FitResult,
    data: &ResponseMatrix,
) -> Result<Vec<AbilityAccuracy>, AnalysisError> {
    check_dimensions(fit, data)?;
    let mut pairs: Vec<AbilityAccuracy> = (0..data.n_responders())
        .map(|i| AbilityAccuracy {
            responder: data.responder_ids()[i].clone(),
            theta: fit.posterior.theta[i].mu,
            accuracy: data.responder_accuracy(i),
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.theta
            .partial_cmp(&a.theta)
            .expect("fitted abilities are finite")
    });
    Ok(pairs)
}
