//! Command-line surface and the subcommand implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use rrforge_core::io::{read_bundles, read_json, write_bundles, write_json, write_synth_segment, Manifest};
use rrforge_core::pipeline::reference_quality_model;
use rrforge_core::quality::{extract_quality_features, train_quality_model, QualityModel};
use rrforge_core::signal::{SegmentBundle, MODEL_RATE};
use rrforge_core::synth::{gen_segment, plan_corpus, CorpusSpec};
use rrforge_nn::RrModel;

use crate::config::{hash_bytes, hash_json, ArtifactMeta, RunConfig};
use crate::corpus::{list_segments, load_recording, subject_of, SegmentRef};
use crate::evaluate::{
    evaluate, read_estimates, read_labels, write_estimates, write_labels, write_per_subject, write_plot_data, EstimateRow, Report,
};
use crate::experiment::{baseline_rows, labels_of, run_experiment};
use crate::prepare::{prepare_stats, process_corpus, Stages, WindowOutcome};
use crate::split::{labelled_subjects, plan_split, train_split, ModelMeta};

pub const SEGMENTS_FILE: &str = "segments.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const QUALITY_FILE: &str = "quality.csv";
pub const REJECTED_FILE: &str = "rejected.csv";
pub const STATS_FILE: &str = "stats.json";
pub const GATE_FILE: &str = "quality_model.json";
pub const MODEL_FILE: &str = "model.bin";
pub const MODEL_META_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "rrforge", version, about = "Respiratory-rate estimation from wrist PPG and IMU recordings")]
pub struct Cli {
    /// Run configuration as JSON; missing fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed overriding the configured one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Cnn,
    Baseline,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (CSV recordings and manifest.json).
    Synth {
        /// Corpus specification as JSON.
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Output directory; its parent must exist.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Gate, extract, label and bundle every window of a corpus.
    Prepare {
        /// Corpus directory.
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        /// Output directory for segments.bin, labels.csv, quality.csv, rejected.csv and stats.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Trained quality model; the reference gate is used when absent.
        #[arg(long, value_name = "FILE")]
        quality_model: Option<PathBuf>,
    },
    /// Score window quality and list the accepted windows.
    Filter {
        /// Corpus directory.
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        /// Output CSV of accepted window IDs and scores.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Quality model to apply; the reference gate is used when absent.
        #[arg(long, value_name = "FILE", conflicts_with = "fit")]
        quality_model: Option<PathBuf>,
        /// Fit the gate on this corpus instead, treating it as clean.
        #[arg(long)]
        fit: bool,
        /// Where to save the quality model used.
        #[arg(long, value_name = "FILE")]
        save_model: Option<PathBuf>,
    },
    /// Write the ACC and GYR respiration waveforms of every window as CSV.
    ExtractResp {
        /// Corpus directory.
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        /// Output CSV (segment_id, t, acc_resp, gyr_resp).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Reference respiratory rates from the chest accelerometer.
    GtExtract {
        /// Corpus directory.
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        /// Output CSV (segment_id, rr_ref, confidence).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train the network on a prepared directory with a subject-disjoint split.
    Train {
        /// Directory written by `prepare`.
        #[arg(long, value_name = "DIR")]
        prepared: PathBuf,
        /// Output directory for model.bin, model.json and history.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Training subjects; defaults to every labelled subject not held out.
        #[arg(long, value_delimiter = ',')]
        train_subjects: Option<Vec<String>>,
        /// Validation subjects; defaults to the last remaining subject.
        #[arg(long, value_delimiter = ',')]
        val_subjects: Option<Vec<String>>,
        /// Held-out test subjects.
        #[arg(long, value_delimiter = ',')]
        test_subjects: Vec<String>,
    },
    /// Estimate respiratory rate per accepted window.
    Estimate {
        /// Estimator to run.
        #[arg(long, value_enum, default_value = "cnn")]
        method: Method,
        /// Directory written by `prepare`.
        #[arg(long, value_name = "DIR")]
        prepared: PathBuf,
        /// Directory written by `train`; required for the network.
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        /// Corpus directory; required for the baseline.
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        /// Restrict to these subjects.
        #[arg(long, value_delimiter = ',')]
        subjects: Option<Vec<String>>,
        /// Output CSV (segment_id, rr_est, quality, method).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score estimates against reference labels.
    Evaluate {
        /// Estimates CSV.
        #[arg(long, value_name = "FILE")]
        estimates: PathBuf,
        /// Labels CSV.
        #[arg(long, value_name = "FILE")]
        labels: PathBuf,
        /// Output report JSON.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Optional per-subject CSV.
        #[arg(long, value_name = "FILE")]
        per_subject: Option<PathBuf>,
        /// Directory for box-plot and Bland-Altman CSV data.
        #[arg(long, value_name = "DIR")]
        plot: Option<PathBuf>,
        /// Trained model directory, to report the network's parameter count.
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
    },
    /// Run the whole pipeline on an in-memory synthetic corpus.
    Experiment {
        /// Corpus specification as JSON.
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Held-out test subjects.
        #[arg(long, value_delimiter = ',', required = true)]
        test_subjects: Vec<String>,
        /// Output directory for report.json, history.csv and stats.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Writes `<path>.meta.json` with the config hash and seed.
fn write_meta(path: &Path, cfg: &RunConfig) -> Result<()> {
    let meta = PathBuf::from(format!("{}.meta.json", path.display()));
    write_json(&meta, &ArtifactMeta::of(cfg))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            bail!("parent directory {} does not exist", parent.display());
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn ensure_parent(file: &Path) -> Result<()> {
    match file.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(p) if !p.is_dir() => bail!("parent directory {} does not exist", p.display()),
        _ => Ok(()),
    }
}

fn load_gate(path: Option<&Path>, cfg: &RunConfig) -> Result<QualityModel> {
    match path {
        Some(p) => read_json(p).with_context(|| format!("reading quality model {}", p.display())),
        None => Ok(reference_quality_model(cfg.reference_gate, cfg.quality)?),
    }
}

fn corpus_windows(root: &Path, cfg: &RunConfig, gate: Option<&QualityModel>, stages: Stages) -> Result<(Vec<SegmentRef>, Vec<WindowOutcome>)> {
    let refs = list_segments(root)?;
    if refs.is_empty() {
        bail!("corpus {} holds no recordings", root.display());
    }
    let windows = process_corpus(refs.len(), |i| load_recording(root, &refs[i]), cfg, gate, stages)?;
    Ok((refs, windows))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Synth { spec, out } => synth(&spec, &out, cli.seed),
        Command::Prepare { corpus, out, quality_model } => prepare(&corpus, &out, quality_model.as_deref(), &cfg),
        Command::Filter { corpus, out, quality_model, fit, save_model } => {
            filter(&corpus, &out, quality_model.as_deref(), fit, save_model.as_deref(), &cfg)
        }
        Command::ExtractResp { corpus, out } => extract_resp(&corpus, &out, &cfg),
        Command::GtExtract { corpus, out } => gt_extract(&corpus, &out, &cfg),
        Command::Train { prepared, out, train_subjects, val_subjects, test_subjects } => {
            train_cmd(&prepared, &out, train_subjects.as_deref(), val_subjects.as_deref(), &test_subjects, &cfg)
        }
        Command::Estimate { method, prepared, model, corpus, subjects, out } => {
            estimate(method, &prepared, model.as_deref(), corpus.as_deref(), subjects.as_deref(), &out, &cfg)
        }
        Command::Evaluate { estimates, labels, out, per_subject, plot, model } => {
            evaluate_cmd(&estimates, &labels, &out, per_subject.as_deref(), plot.as_deref(), model.as_deref(), &cfg)
        }
        Command::Experiment { spec, test_subjects, out } => experiment(&spec, &test_subjects, &out, &cfg),
    }
}

fn read_spec(path: &Path, seed: Option<u64>) -> Result<CorpusSpec> {
    let mut spec: CorpusSpec = read_json(path).with_context(|| format!("reading corpus spec {}", path.display()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let spec = read_spec(spec_path, seed)?;
    ensure_dir(out)?;
    let rows = plan_corpus(&spec)?;
    rows.par_iter().try_for_each(|r| -> Result<()> {
        write_synth_segment(out, &r.subject, &r.segment, &gen_segment(&r.spec)?)?;
        Ok(())
    })?;
    let manifest = Manifest { config_hash: hash_json(&spec), seed: spec.seed, segments: rows };
    let path = out.join(crate::corpus::MANIFEST);
    write_json(&path, &manifest)?;
    let digest = hash_bytes(&std::fs::read(&path)?);
    println!("wrote {} segments to {}", manifest.segments.len(), out.display());
    println!("manifest sha256 {digest}");
    Ok(())
}

fn write_quality(path: &Path, windows: &[WindowOutcome], keep: impl Fn(&WindowOutcome) -> bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["segment_id", "score", "accepted"])?;
    for o in windows.iter().filter(|o| keep(o)) {
        let v = o.verdict.expect("gated window");
        w.write_record([o.id.as_str(), &v.score.to_string(), &v.accept.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn prepare(corpus: &Path, out: &Path, gate_path: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let gate = load_gate(gate_path, cfg)?;
    let stages = Stages { gate: true, bundles: true, chest: true, baseline: false, respiration: false };
    let (refs, windows) = corpus_windows(corpus, cfg, Some(&gate), stages)?;
    let stats = prepare_stats(cfg, refs.len(), &windows)?;
    ensure_dir(out)?;
    let bundles: Vec<SegmentBundle> = windows.iter().filter_map(|w| w.bundle.clone()).collect();
    write_bundles(&out.join(SEGMENTS_FILE), &bundles)?;
    let labels = labels_of(&windows);
    if labels.is_empty() {
        log::warn!("corpus has no usable chest recordings; labels omitted");
    }
    for (name, f) in [(LABELS_FILE, None), (QUALITY_FILE, Some(false)), (REJECTED_FILE, Some(true))] {
        let path = out.join(name);
        match f {
            None => write_labels(&path, &labels)?,
            Some(false) => write_quality(&path, &windows, |_| true)?,
            Some(true) => write_quality(&path, &windows, |o| !o.accepted())?,
        }
        write_meta(&path, cfg)?;
    }
    write_json(&out.join(GATE_FILE), &gate)?;
    write_json(&out.join(STATS_FILE), &stats)?;
    println!(
        "{} windows, {} accepted ({:.3}), {} labelled",
        stats.windows, stats.accepted, stats.acceptance_rate, stats.labelled
    );
    Ok(())
}

pub fn filter(corpus: &Path, out: &Path, gate_path: Option<&Path>, fit: bool, save: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    ensure_parent(out)?;
    let gate = if fit {
        let none = Stages::default();
        let (refs, _) = corpus_windows(corpus, cfg, None, none)?;
        let feats: Vec<_> = refs
            .par_iter()
            .map(|r| -> Result<Vec<_>> {
                let rec = load_recording(corpus, r)?;
                rrforge_core::pipeline::recording_windows(&rec.wrist, None, cfg.windowing)?
                    .iter()
                    .map(|w| Ok(extract_quality_features(&w.ppg, MODEL_RATE)?))
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        train_quality_model(&feats, cfg.quality)?
    } else {
        load_gate(gate_path, cfg)?
    };
    let stages = Stages { gate: true, ..Stages::default() };
    let (_, windows) = corpus_windows(corpus, cfg, Some(&gate), stages)?;
    write_quality(out, &windows, |o| o.accepted())?;
    write_meta(out, cfg)?;
    if let Some(p) = save {
        write_json(p, &gate)?;
    }
    let accepted = windows.iter().filter(|w| w.accepted()).count();
    println!("{accepted} of {} windows accepted", windows.len());
    Ok(())
}

pub fn extract_resp(corpus: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    ensure_parent(out)?;
    let stages = Stages { respiration: true, ..Stages::default() };
    let (_, windows) = corpus_windows(corpus, cfg, None, stages)?;
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    writeln!(w, "segment_id,t,acc_resp,gyr_resp")?;
    for o in &windows {
        let ex = o.respiration.as_ref().expect("respiration requested");
        for (i, (a, g)) in ex.acc.samples.iter().zip(&ex.gyr.samples).enumerate() {
            writeln!(w, "{},{},{a},{g}", o.id, i as f64 / MODEL_RATE)?;
        }
    }
    w.flush()?;
    write_meta(out, cfg)?;
    Ok(())
}

pub fn gt_extract(corpus: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    ensure_parent(out)?;
    let stages = Stages { chest: true, ..Stages::default() };
    let (_, windows) = corpus_windows(corpus, cfg, None, stages)?;
    if windows.iter().all(|w| w.chest_axes.is_none()) {
        bail!("corpus {} has no chest recordings", corpus.display());
    }
    write_labels(out, &labels_of(&windows))?;
    write_meta(out, cfg)?;
    Ok(())
}

fn load_prepared(dir: &Path) -> Result<Vec<SegmentBundle>> {
    let path = dir.join(SEGMENTS_FILE);
    read_bundles(&path).with_context(|| format!("reading {}", path.display()))
}

pub fn train_cmd(
    prepared: &Path,
    out: &Path,
    train: Option<&[String]>,
    val: Option<&[String]>,
    test: &[String],
    cfg: &RunConfig,
) -> Result<()> {
    let bundles = load_prepared(prepared)?;
    let subjects = labelled_subjects(&bundles);
    if subjects.is_empty() {
        bail!("{} holds no labelled windows; prepare a corpus with chest recordings", prepared.display());
    }
    let split = plan_split(&subjects, train, val, test)?;
    let (model, outcome, meta) = train_split(&bundles, &split, cfg)?;
    ensure_dir(out)?;
    rrforge_nn::serialize::save_file(&out.join(MODEL_FILE), &model.store)?;
    write_json(&out.join(MODEL_META_FILE), &meta)?;
    let history = out.join(HISTORY_FILE);
    let mut w = BufWriter::new(File::create(&history)?);
    writeln!(w, "epoch,train_loss,val_mae,lr")?;
    for r in &outcome.history {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_mae, r.lr)?;
    }
    w.flush()?;
    write_meta(&history, cfg)?;
    println!("best validation MAE {:.3} at epoch {}", outcome.best_val_mae, outcome.best_epoch);
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<(RrModel, ModelMeta)> {
    let meta_path = dir.join(MODEL_META_FILE);
    let bin = dir.join(MODEL_FILE);
    if !bin.exists() {
        bail!("model file {} does not exist", bin.display());
    }
    let meta: ModelMeta = read_json(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?;
    let mut model = RrModel::build(&meta.model, meta.seed)?;
    rrforge_nn::serialize::load_file(&bin, &mut model.store).with_context(|| format!("loading {}", bin.display()))?;
    Ok((model, meta))
}

fn read_quality_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        out.insert(rec[0].to_string(), rec[1].parse::<f64>()?);
    }
    Ok(out)
}

pub fn estimate(
    method: Method,
    prepared: &Path,
    model_dir: Option<&Path>,
    corpus: Option<&Path>,
    subjects: Option<&[String]>,
    out: &Path,
    cfg: &RunConfig,
) -> Result<()> {
    ensure_parent(out)?;
    let keep = |id: &str| subjects.is_none_or(|s| s.iter().any(|x| x == subject_of(id)));
    let mut bundles = load_prepared(prepared)?;
    bundles.retain(|b| keep(&b.segment_id));
    let accepted: BTreeSet<String> = bundles.iter().map(|b| b.segment_id.clone()).collect();
    let mut rows = Vec::new();
    if matches!(method, Method::Cnn | Method::Both) {
        let Some(dir) = model_dir else { bail!("--model is required for the network estimator") };
        let (model, _) = load_model(dir)?;
        let quality = read_quality_scores(&prepared.join(QUALITY_FILE))?;
        let inputs: Vec<Vec<f32>> = bundles.iter().map(|b| b.channels().concat()).collect();
        let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
        let preds = model.predict(&refs, cfg.train.batch_size)?;
        rows.extend(bundles.iter().zip(preds).map(|(b, p)| EstimateRow {
            segment_id: b.segment_id.clone(),
            rr_est: Some(p),
            quality: quality.get(&b.segment_id).copied().unwrap_or(f64::NAN),
            method: "cnn".into(),
        }));
    }
    if matches!(method, Method::Baseline | Method::Both) {
        let Some(root) = corpus else { bail!("--corpus is required for the baseline estimator") };
        let stages = Stages { baseline: true, ..Stages::default() };
        let (_, windows) = corpus_windows(root, cfg, None, stages)?;
        rows.extend(baseline_rows(&windows).into_iter().filter(|r| accepted.contains(&r.segment_id)));
    }
    rows.sort_by(|a, b| (&a.segment_id, &a.method).cmp(&(&b.segment_id, &b.method)));
    write_estimates(out, &rows)?;
    write_meta(out, cfg)?;
    Ok(())
}

pub fn evaluate_cmd(
    estimates: &Path,
    labels: &Path,
    out: &Path,
    per_subject: Option<&Path>,
    plot: Option<&Path>,
    model_dir: Option<&Path>,
    cfg: &RunConfig,
) -> Result<()> {
    ensure_parent(out)?;
    let est = read_estimates(estimates)?;
    let lab = read_labels(labels)?;
    let mut counts = BTreeMap::new();
    if let Some(dir) = model_dir {
        let meta: ModelMeta = read_json(&dir.join(MODEL_META_FILE))?;
        counts.insert("cnn".to_string(), meta.param_count);
    }
    let methods = evaluate(&est, &lab, &counts)?;
    if let Some(p) = per_subject {
        write_per_subject(p, &methods)?;
        write_meta(p, cfg)?;
    }
    if let Some(dir) = plot {
        write_plot_data(dir, &est, &lab)?;
    }
    for m in &methods {
        println!("{}: n={} mae={:.3} rmse={:.3}", m.metrics.method, m.metrics.n, m.metrics.mae, m.metrics.rmse);
    }
    write_json(out, &Report { config_hash: cfg.hash(), seed: cfg.seed, methods })?;
    Ok(())
}

pub fn experiment(spec_path: &Path, test: &[String], out: &Path, cfg: &RunConfig) -> Result<()> {
    let spec = read_spec(spec_path, None)?;
    ensure_dir(out)?;
    let outcome = run_experiment(&spec, cfg, test)?;
    let report = Report { config_hash: cfg.hash(), seed: cfg.seed, methods: outcome.reports.clone() };
    write_json(&out.join(REPORT_FILE), &report)?;
    write_json(&out.join(STATS_FILE), &outcome.stats)?;
    write_json(&out.join(MODEL_META_FILE), &outcome.model)?;
    let history = out.join(HISTORY_FILE);
    let mut w = BufWriter::new(File::create(&history)?);
    writeln!(w, "epoch,train_loss,val_mae,lr")?;
    for r in &outcome.history {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_mae, r.lr)?;
    }
    w.flush()?;
    write_meta(&history, cfg)?;
    for m in &outcome.reports {
        println!("{}: n={} mae={:.3} rmse={:.3}", m.metrics.method, m.metrics.n, m.metrics.mae, m.metrics.rmse);
    }
    Ok(())
}
