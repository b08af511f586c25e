//! Detection-quality evaluation: sample N suspicious records, build
//! signatures from the sample, and score them against the rest of the
//! dataset.
//!
//! The percentages follow the reference formulas exactly:
//!
//! ```text
//! TP = 100 * detected_sensitive   / (total_sensitive - N)
//! FN = 100 * undetected_sensitive / (total_sensitive - N)
//! FP = 100 * detected_normal      / (total_normal    - N)
//! ```
//!
//! Note that the FP denominator also subtracts N even though the N sampled
//! records come from the sensitive group; the formula is reproduced as
//! published.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{agglomerate, cut};
use crate::config::PipelineConfig;
use crate::distance::{distance_matrix, DistanceError};
use crate::record::{label_sensitive, DeviceProfile, HttpRecord};
use crate::signature::{detect, generate_signatures, ConjunctionSignature, SignatureMetadata};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sample size {n} out of range 1..={max}")]
    SampleSize { n: usize, max: usize },
    #[error("zero denominator: {0}")]
    ZeroDenominator(String),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

/// Confusion counts and percentages for one signature set against one
/// dataset split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_sample: usize,
    pub total_sensitive: usize,
    pub total_normal: usize,
    pub detected_sensitive: usize,
    pub undetected_sensitive: usize,
    pub detected_normal: usize,
    pub tp_pct: f64,
    pub fn_pct: f64,
    pub fp_pct: f64,
    pub seed: u64,
    pub config: PipelineConfig,
}

/// One experiment point: the report plus the signatures that produced it.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: EvalReport,
    pub signatures: Vec<ConjunctionSignature>,
}

/// Uniform sample of `n` records without replacement, deterministic for a
/// fixed seed. The remainder keeps its original order.
pub fn sample_suspicious(
    suspicious: &[HttpRecord],
    n: usize,
    seed: u64,
) -> Result<(Vec<HttpRecord>, Vec<HttpRecord>), EvalError> {
    if n == 0 || n > suspicious.len() {
        return Err(EvalError::SampleSize {
            n,
            max: suspicious.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, suspicious.len(), n);
    let mut selected = vec![false; suspicious.len()];
    let sample: Vec<HttpRecord> = chosen
        .iter()
        .map(|i| {
            selected[i] = true;
            suspicious[i].clone()
        })
        .collect();
    let remainder: Vec<HttpRecord> = suspicious
        .iter()
        .enumerate()
        .filter(|(i, _)| !selected[*i])
        .map(|(_, r)| r.clone())
        .collect();
    Ok((sample, remainder))
}

fn count_detected(sigs: &[ConjunctionSignature], records: &[HttpRecord]) -> usize {
    detect(sigs, records)
        .iter()
        .filter(|ids| !ids.is_empty())
        .count()
}

/// Scores a signature set. `sensitive_remainder` is the sensitive group
/// minus the N generation samples; `normal` is the whole normal group.
pub fn evaluate(
    sigs: &[ConjunctionSignature],
    sensitive_remainder: &[HttpRecord],
    normal: &[HttpRecord],
    n_sample: usize,
    seed: u64,
    config: &PipelineConfig,
) -> Result<EvalReport, EvalError> {
    let total_sensitive = sensitive_remainder.len() + n_sample;
    let total_normal = normal.len();
    let sensitive_den = sensitive_remainder.len();
    if sensitive_den == 0 {
        return Err(EvalError::ZeroDenominator(
            "no sensitive records outside the sample".into(),
        ));
    }
    if total_normal <= n_sample {
        return Err(EvalError::ZeroDenominator(format!(
            "normal group ({total_normal}) not larger than sample size ({n_sample})"
        )));
    }
    let normal_den = total_normal - n_sample;

    let detected_sensitive = count_detected(sigs, sensitive_remainder);
    let undetected_sensitive = sensitive_den - detected_sensitive;
    let detected_normal = count_detected(sigs, normal);

    Ok(EvalReport {
        n_sample,
        total_sensitive,
        total_normal,
        detected_sensitive,
        undetected_sensitive,
        detected_normal,
        tp_pct: 100.0 * detected_sensitive as f64 / sensitive_den as f64,
        fn_pct: 100.0 * undetected_sensitive as f64 / sensitive_den as f64,
        fp_pct: 100.0 * detected_normal as f64 / normal_den as f64,
        seed,
        config: config.clone(),
    })
}

/// Runs the full protocol for each N: label, sample, cluster the sample,
/// cut, generate signatures, and score them on remainder + normal. N = 0
/// is the degenerate no-signature run.
pub fn run_experiment(
    dataset: &[HttpRecord],
    profile: &DeviceProfile,
    n_values: &[usize],
    seed: u64,
    config: &PipelineConfig,
) -> Result<Vec<ExperimentRun>, EvalError> {
    let labeled: Vec<HttpRecord> = dataset
        .iter()
        .map(|r| label_sensitive(r.clone(), profile))
        .collect();
    let (suspicious, normal): (Vec<HttpRecord>, Vec<HttpRecord>) =
        labeled.into_iter().partition(HttpRecord::is_suspicious);

    let mut runs = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let run = if n == 0 {
            ExperimentRun {
                report: evaluate(&[], &suspicious, &normal, 0, seed, config)?,
                signatures: Vec::new(),
            }
        } else {
            let (sample, remainder) = sample_suspicious(&suspicious, n, seed)?;
            let matrix = distance_matrix(&sample, config.compressor_level)?;
            let dendrogram = agglomerate(&matrix);
            let clusters = cut(&dendrogram, config.tau);
            let meta = SignatureMetadata {
                compressor_level: config.compressor_level,
                tau: config.tau,
                min_token_len: config.min_token_len,
                seed,
                n_sample: n,
                low_generality: false,
            };
            let signatures = generate_signatures(&clusters, &sample, &meta);
            ExperimentRun {
                report: evaluate(&signatures, &remainder, &normal, n, seed, config)?,
                signatures,
            }
        };
        runs.push(run);
    }
    Ok(runs)
}

/// Renders reports as CSV, one row per N, percentages at two decimals.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "n,tp_pct,fn_pct,fp_pct,detected_sensitive,undetected_sensitive,detected_normal\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{:.2},{:.2},{:.2},{},{},{}\n",
            r.n_sample,
            r.tp_pct,
            r.fn_pct,
            r.fp_pct,
            r.detected_sensitive,
            r.undetected_sensitive,
            r.detected_normal
        ));
    }
    out
}
