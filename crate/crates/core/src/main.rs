//! Command-line front end: wires corpus generation, labeling, signature
//! generation, detection, and evaluation into reproducible commands.
//!
//! Exit codes: 0 success, 1 detections found (only for `detect
//! --signal-detections`), 2 usage or input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use leaksig::cluster::{agglomerate, cut};
use leaksig::config::PipelineConfig;
use leaksig::corpus::{generate_corpus, CorpusSpec};
use leaksig::distance::distance_matrix;
use leaksig::eval::{reports_csv, run_experiment, sample_suspicious, EvalReport};
use leaksig::record::{label_sensitive, read_jsonl, write_jsonl, DeviceProfile, HttpRecord};
use leaksig::signature::{
    detect, generate_signatures, read_signatures, write_signatures, SignatureMetadata,
};

#[derive(Parser)]
#[command(
    name = "leaksig",
    version,
    about = "Signature-based detection of device-identifier leakage in mobile app HTTP traffic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: ConfigOverrides,
}

/// Configuration knobs. Precedence: flags > --config file > defaults. The
/// effective values are echoed into generated signature files and reports.
#[derive(Args)]
struct ConfigOverrides {
    /// TOML config file (keys: compressor_level, tau, min_token_len, seed,
    /// ncd_asymmetry_tolerance, threads)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for sampling and corpus generation
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dendrogram cut threshold
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Minimum signature token length in bytes
    #[arg(long, global = true)]
    min_token_len: Option<usize>,
    /// DEFLATE level for content distances (0-9)
    #[arg(long, global = true)]
    compressor_level: Option<u32>,
    /// Cap on parallel workers (0 = machine default)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus as JSONL records
    GenCorpus {
        /// Corpus spec JSON; omit to use the built-in default spec
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output JSONL path
        #[arg(long)]
        out: PathBuf,
    },
    /// Label records with the sensitive kinds their payloads carry
    Label {
        /// Input JSONL records
        #[arg(long)]
        input: PathBuf,
        /// Device profile JSON
        #[arg(long)]
        profile: PathBuf,
        /// Output JSONL path
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample suspicious records, cluster them, and emit signatures
    Gensig {
        /// Input JSONL records (labeled; unlabeled records are ignored)
        #[arg(long)]
        input: PathBuf,
        /// Output signature JSON path
        #[arg(long)]
        out: PathBuf,
        /// Sample size; omit to use every suspicious record
        #[arg(long)]
        n_sample: Option<usize>,
        /// Also write the merge tree as JSON
        #[arg(long)]
        dump_dendrogram: Option<PathBuf>,
    },
    /// Match signatures against records and write per-record verdicts
    Detect {
        /// Signature JSON file
        #[arg(long)]
        sigs: PathBuf,
        /// Input JSONL records
        #[arg(long)]
        input: PathBuf,
        /// Output verdicts JSONL path
        #[arg(long)]
        out: PathBuf,
        /// Exit with status 1 if any record is detected
        #[arg(long)]
        signal_detections: bool,
    },
    /// Run the sampling experiment over a range of N and write a CSV
    Eval {
        /// Input JSONL records
        #[arg(long)]
        input: PathBuf,
        /// Device profile JSON
        #[arg(long)]
        profile: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out_csv: PathBuf,
        /// Optional JSON report list
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Directory for the per-N signature files
        #[arg(long)]
        out_sigs: Option<PathBuf>,
        /// Sample sizes to evaluate
        #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250")]
        n_values: Vec<usize>,
    },
}

fn effective_config(overrides: &ConfigOverrides) -> Result<PipelineConfig> {
    let mut cfg = match &overrides.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            PipelineConfig::from_toml(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(tau) = overrides.tau {
        cfg.tau = tau;
    }
    if let Some(len) = overrides.min_token_len {
        cfg.min_token_len = len;
    }
    if let Some(level) = overrides.compressor_level {
        cfg.compressor_level = level;
    }
    if let Some(threads) = overrides.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_records(path: &Path) -> Result<Vec<HttpRecord>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_jsonl(&text)?)
}

fn read_profile(path: &Path) -> Result<DeviceProfile> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(DeviceProfile::from_json(&text)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Verdict<'a> {
    index: usize,
    app_id: &'a str,
    detected: bool,
    signatures: &'a [String],
}

fn cmd_gen_corpus(spec_path: Option<&Path>, out: &Path) -> Result<i32> {
    let spec = match spec_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading corpus spec {}", path.display()))?;
            CorpusSpec::from_json(&text)?
        }
        None => CorpusSpec::default_spec(),
    };
    let records = generate_corpus(&spec)?;
    write_file(out, &write_jsonl(&records))?;
    eprintln!("wrote {} records to {}", records.len(), out.display());
    Ok(0)
}

fn cmd_label(input: &Path, profile_path: &Path, out: &Path) -> Result<i32> {
    let profile = read_profile(profile_path)?;
    let records = read_records(input)?;
    let labeled: Vec<HttpRecord> = records
        .into_iter()
        .map(|r| label_sensitive(r, &profile))
        .collect();
    let suspicious = labeled.iter().filter(|r| r.is_suspicious()).count();
    write_file(out, &write_jsonl(&labeled))?;
    eprintln!(
        "labeled {} records ({} suspicious) into {}",
        labeled.len(),
        suspicious,
        out.display()
    );
    Ok(0)
}

fn cmd_gensig(
    input: &Path,
    out: &Path,
    n_sample: Option<usize>,
    dump_dendrogram: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<i32> {
    let records = read_records(input)?;
    let suspicious: Vec<HttpRecord> = records
        .into_iter()
        .filter(HttpRecord::is_suspicious)
        .collect();
    if suspicious.is_empty() {
        bail!("no suspicious (labeled) records in {}", input.display());
    }
    let n = n_sample.unwrap_or(suspicious.len());
    let (sample, _remainder) = sample_suspicious(&suspicious, n, cfg.seed)?;
    let matrix = distance_matrix(&sample, cfg.compressor_level)?;
    let dendrogram = agglomerate(&matrix);
    if let Some(path) = dump_dendrogram {
        write_file(path, &dendrogram.to_json())?;
    }
    let clusters = cut(&dendrogram, cfg.tau);
    let meta = SignatureMetadata {
        compressor_level: cfg.compressor_level,
        tau: cfg.tau,
        min_token_len: cfg.min_token_len,
        seed: cfg.seed,
        n_sample: n,
        low_generality: false,
    };
    let signatures = generate_signatures(&clusters, &sample, &meta);
    write_file(out, &write_signatures(&signatures))?;
    eprintln!(
        "generated {} signatures from {} clusters of {} sampled records",
        signatures.len(),
        clusters.clusters.len(),
        n
    );
    Ok(0)
}

fn cmd_detect(
    sigs_path: &Path,
    input: &Path,
    out: &Path,
    signal_detections: bool,
) -> Result<i32> {
    let sigs_text = fs::read_to_string(sigs_path)
        .with_context(|| format!("reading signatures {}", sigs_path.display()))?;
    let sigs = read_signatures(&sigs_text)?;
    let records = read_records(input)?;
    let verdicts = detect(&sigs, &records);
    let mut out_text = String::new();
    let mut n_detected = 0usize;
    for (index, (record, ids)) in records.iter().zip(&verdicts).enumerate() {
        let detected = !ids.is_empty();
        n_detected += usize::from(detected);
        let line = serde_json::to_string(&Verdict {
            index,
            app_id: &record.app_id,
            detected,
            signatures: ids,
        })?;
        out_text.push_str(&line);
        out_text.push('\n');
    }
    write_file(out, &out_text)?;
    eprintln!("{} of {} records detected", n_detected, records.len());
    if signal_detections && n_detected > 0 {
        return Ok(1);
    }
    Ok(0)
}

fn cmd_eval(
    input: &Path,
    profile_path: &Path,
    out_csv: &Path,
    out_json: Option<&Path>,
    out_sigs: Option<&Path>,
    n_values: &[usize],
    cfg: &PipelineConfig,
) -> Result<i32> {
    let profile = read_profile(profile_path)?;
    let dataset = read_records(input)?;
    let runs = run_experiment(&dataset, &profile, n_values, cfg.seed, cfg)?;
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    write_file(out_csv, &reports_csv(&reports))?;
    if let Some(path) = out_json {
        write_file(path, &format!("{}\n", serde_json::to_string_pretty(&reports)?))?;
    }
    if let Some(dir) = out_sigs {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating signature dir {}", dir.display()))?;
        for run in &runs {
            let path = dir.join(format!("signatures-n{:04}.json", run.report.n_sample));
            write_file(&path, &write_signatures(&run.signatures))?;
        }
    }
    for report in &reports {
        eprintln!(
            "N={:>4}  TP={:6.2}%  FN={:6.2}%  FP={:5.2}%",
            report.n_sample, report.tp_pct, report.fn_pct, report.fp_pct
        );
    }
    Ok(0)
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    let cfg = effective_config(&cli.overrides)?;
    if cfg.threads > 0 {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    match &cli.command {
        Command::GenCorpus { spec, out } => cmd_gen_corpus(spec.as_deref(), out),
        Command::Label {
            input,
            profile,
            out,
        } => cmd_label(input, profile, out),
        Command::Gensig {
            input,
            out,
            n_sample,
            dump_dendrogram,
        } => cmd_gensig(input, out, *n_sample, dump_dendrogram.as_deref(), &cfg),
        Command::Detect {
            sigs,
            input,
            out,
            signal_detections,
        } => cmd_detect(sigs, input, out, *signal_detections),
        Command::Eval {
            input,
            profile,
            out_csv,
            out_json,
            out_sigs,
            n_values,
        } => cmd_eval(
            input,
            profile,
            out_csv,
            out_json.as_deref(),
            out_sigs.as_deref(),
            n_values,
            &cfg,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
