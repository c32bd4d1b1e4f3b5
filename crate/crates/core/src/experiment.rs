//! Experiment manifests, per-run JSON-lines files and their aggregation.
//!
//! Layout written for one population:
//!
//! ```text
//! <dir>/rep_000.jsonl   {"type":"epoch",...} per epoch, then {"type":"summary",...}
//! <dir>/rep_001.jsonl
//! <dir>/summary.json    every run summary plus per-metric spreads
//! <dir>/curves.csv      per-epoch mean/std of the accuracy and loss curves
//! <dir>/gradient_flow.csv
//! ```
//!
//! A manifest writes one such directory per declared rewire mode and, when a
//! treatment is declared, `comparison.{md,json,csv}` next to them.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_standard, DataSplits, DatasetKind};
use crate::error::{Error, Result};
use crate::initializers::InitMethod;
use crate::mlp::MlpArch;
use crate::stats::{compare, ComparisonReport, Metric, Spread, DEFAULT_ALPHA};
use crate::train::{split_stream, train_with, EpochRecord, RewireMode, RunSummary, TrainConfig};

/// Environment variable naming the default data directory.
pub const DATA_ENV: &str = "STRENGTH_INIT_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            lr0: 0.01,
            momentum: 0.9,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub dataset: DatasetKind,
    /// Falls back to `$STRENGTH_INIT_DATA`, then `./data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub arch: Vec<usize>,
    pub init: InitMethod,
    #[serde(default)]
    pub baseline: RewireMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<RewireMode>,
    pub global_seed: u64,
    pub repetitions: u32,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_true")]
    pub log_gradients: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl ExperimentManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        MlpArch::new(self.arch.clone())?;
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument(
                "repetitions must be positive".into(),
            ));
        }
        if self.treatment == Some(self.baseline) {
            return Err(Error::InvalidArgument(
                "baseline and treatment rewire modes must differ".into(),
            ));
        }
        self.train_config(self.baseline, 0)?.validate()
    }

    pub fn train_config(&self, rewire: RewireMode, repetition: u32) -> Result<TrainConfig> {
        Ok(TrainConfig {
            arch: MlpArch::new(self.arch.clone())?,
            epochs: self.schedule.epochs,
            batch_size: self.schedule.batch_size,
            lr0: self.schedule.lr0,
            momentum: self.schedule.momentum,
            global_seed: self.global_seed,
            repetition,
            init: self.init,
            rewire,
            log_gradients: self.log_gradients,
        })
    }

    pub fn resolved_data_dir(&self) -> PathBuf {
        resolve_data_dir(self.data_dir.as_deref())
    }
}

pub fn resolve_data_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Directory name for a population: the rewire mode with `:` replaced.
pub fn population_dir_name(mode: RewireMode) -> String {
    mode.to_string().replace(':', "-")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RunRecord {
    Epoch(EpochRecord),
    Summary(RunSummary),
    Diverged {
        repetition: u32,
        epoch: usize,
        loss: String,
    },
}

pub fn run_file_name(repetition: u32) -> String {
    format!("rep_{repetition:03}.jsonl")
}

fn write_line<W: Write>(out: &mut W, record: &RunRecord, path: &Path) -> Result<()> {
    let line = serde_json::to_string(record)?;
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))
}

/// Trains one repetition, streaming its records to `path`.
pub fn run_repetition(cfg: &TrainConfig, data: &DataSplits, path: &Path) -> Result<RunSummary> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write_err: Option<Error> = None;
    let result = train_with(cfg, data, |rec| {
        if write_err.is_none() {
            if let Err(e) = write_line(&mut out, &RunRecord::Epoch(rec.clone()), path) {
                write_err = Some(e);
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    match result {
        Ok(metrics) => {
            let summary = metrics.summary();
            write_line(&mut out, &RunRecord::Summary(summary.clone()), path)?;
            out.flush().map_err(|e| Error::io(path, e))?;
            Ok(summary)
        }
        Err(Error::Diverged { epoch, loss }) => {
            write_line(
                &mut out,
                &RunRecord::Diverged {
                    repetition: cfg.repetition,
                    epoch,
                    loss: loss.to_string(),
                },
                path,
            )?;
            out.flush().map_err(|e| Error::io(path, e))?;
            Err(Error::Diverged { epoch, loss })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub label: String,
    pub runs: Vec<RunSummary>,
    pub metrics: BTreeMap<String, Spread>,
}

impl PopulationSummary {
    pub fn new(label: &str, mut runs: Vec<RunSummary>) -> Result<Self> {
        runs.sort_by_key(|r| r.repetition);
        let mut metrics = BTreeMap::new();
        for m in Metric::ALL {
            let xs: Vec<f64> = runs.iter().map(|r| m.extract(r)).collect();
            let key = serde_json::to_value(m)?
                .as_str()
                .expect("metric is a string")
                .to_string();
            metrics.insert(key, Spread::of(&xs)?);
        }
        Ok(Self {
            label: label.to_string(),
            runs,
            metrics,
        })
    }
}

/// Runs repetitions `template.repetition ..` (`repetitions` of them) on a
/// pool of `jobs` workers (0 = one per core) and writes the population
/// directory.
pub fn run_population(
    template: &TrainConfig,
    repetitions: u32,
    data: &DataSplits,
    dir: &Path,
    jobs: usize,
) -> Result<PopulationSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<RunSummary>> = pool.install(|| {
        (0..repetitions)
            .into_par_iter()
            .map(|i| {
                let rep = template.repetition + i;
                let mut cfg = template.clone();
                cfg.repetition = rep;
                let path = dir.join(run_file_name(rep));
                log::info!("training {} repetition {rep}", template.rewire);
                run_repetition(&cfg, data, &path)
            })
            .collect()
    });
    // Merge sequentially; the first failure in repetition order wins.
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = PopulationSummary::new(&template.rewire.to_string(), runs)?;
    write_json(&dir.join("summary.json"), &summary)?;
    plot_export(dir)?;
    Ok(summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("rep_") && n.ends_with(".jsonl"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Parsed contents of one run file.
#[derive(Debug, Clone, Default)]
pub struct RunFile {
    pub epochs: Vec<EpochRecord>,
    pub summary: Option<RunSummary>,
    pub diverged: bool,
}

pub fn read_run_file(path: &Path) -> Result<RunFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut run = RunFile::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<RunRecord>(line)? {
            RunRecord::Epoch(e) => run.epochs.push(e),
            RunRecord::Summary(s) => run.summary = Some(s),
            RunRecord::Diverged { .. } => run.diverged = true,
        }
    }
    Ok(run)
}

/// Summaries of every completed run in a population directory.
pub fn load_population(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    for path in run_files(dir)? {
        match read_run_file(&path)?.summary {
            Some(s) => out.push(s),
            None => log::warn!("{} has no summary record; skipped", path.display()),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no completed runs in {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotExport {
    pub curves: PathBuf,
    pub gradient_flow: Option<PathBuf>,
}

/// Per-epoch mean/std curves over all complete runs in `dir`.
pub fn plot_export(dir: &Path) -> Result<PlotExport> {
    let runs: Vec<RunFile> = run_files(dir)?
        .iter()
        .map(|p| read_run_file(p))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|r| r.summary.is_some())
        .collect();
    if runs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no completed run files in {}",
            dir.display()
        )));
    }
    let epochs = runs[0].epochs.len();
    if runs.iter().any(|r| r.epochs.len() != epochs) {
        return Err(Error::InvalidArgument(
            "runs in one population have different epoch counts".into(),
        ));
    }

    let mut curves = String::from(
        "epoch,lr,train_acc_mean,train_acc_std,val_acc_mean,val_acc_std,val_loss_mean,val_loss_std,train_loss_mean,train_loss_std\n",
    );
    for e in 0..epochs {
        let col = |f: fn(&EpochRecord) -> f64| -> (f64, f64) {
            mean_std(&runs.iter().map(|r| f(&r.epochs[e])).collect::<Vec<_>>())
        };
        let (ta, tas) = col(|r| r.train_acc);
        let (va, vas) = col(|r| r.val_acc);
        let (vl, vls) = col(|r| r.val_loss);
        let (tl, tls) = col(|r| r.train_loss);
        curves.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            e + 1,
            runs[0].epochs[e].lr,
            ta,
            tas,
            va,
            vas,
            vl,
            vls,
            tl,
            tls
        ));
    }
    let curves_path = dir.join("curves.csv");
    fs::write(&curves_path, curves).map_err(|e| Error::io(&curves_path, e))?;

    let logged = runs
        .iter()
        .all(|r| r.epochs.iter().all(|e| e.grad_mean_abs.is_some()));
    let gradient_flow = if logged && epochs > 0 {
        let layers = runs[0].epochs[0].grad_mean_abs.as_ref().map_or(0, Vec::len);
        let mut out = String::from("epoch,layer,mean_abs_grad_mean,mean_abs_grad_std\n");
        for e in 0..epochs {
            for l in 0..layers {
                let xs: Vec<f64> = runs
                    .iter()
                    .map(|r| r.epochs[e].grad_mean_abs.as_ref().expect("logged")[l])
                    .collect();
                let (m, s) = mean_std(&xs);
                out.push_str(&format!("{},{},{:?},{:?}\n", e + 1, l, m, s));
            }
        }
        let path = dir.join("gradient_flow.csv");
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        Some(path)
    } else {
        None
    };
    Ok(PlotExport {
        curves: curves_path,
        gradient_flow,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::InvalidArgument(format!(
                "unknown report format {s:?}"
            ))),
        }
    }
}

pub fn render_report(report: &ComparisonReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Markdown => report.to_markdown(),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => report.to_csv(),
    })
}

#[derive(Debug, Clone)]
pub struct ManifestOutcome {
    pub populations: Vec<PopulationSummary>,
    pub comparison: Option<ComparisonReport>,
}

/// Loads the manifest's dataset and runs it.
pub fn run_manifest(manifest: &ExperimentManifest, jobs: usize) -> Result<ManifestOutcome> {
    manifest.validate()?;
    let (full_train, test) = load_standard(&manifest.resolved_data_dir(), manifest.dataset)?;
    let data =
        DataSplits::from_train_test(&full_train, test, &mut split_stream(manifest.global_seed))?;
    run_manifest_with_data(manifest, &data, jobs)
}

/// Runs every declared population on already-loaded data.
pub fn run_manifest_with_data(
    manifest: &ExperimentManifest,
    data: &DataSplits,
    jobs: usize,
) -> Result<ManifestOutcome> {
    manifest.validate()?;
    let out = &manifest.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut stored = manifest.clone();
    // Machine-specific paths are not part of the reproducible record.
    stored.data_dir = None;
    stored.output_dir = PathBuf::from(".");
    fs::write(out.join("manifest.json"), stored.to_json() + "\n")
        .map_err(|e| Error::io(out.join("manifest.json"), e))?;

    let modes: Vec<RewireMode> = std::iter::once(manifest.baseline)
        .chain(manifest.treatment)
        .collect();
    let mut populations = Vec::new();
    for mode in modes {
        let template = manifest.train_config(mode, 0)?;
        let dir = out.join(population_dir_name(mode));
        populations.push(run_population(
            &template,
            manifest.repetitions,
            data,
            &dir,
            jobs,
        )?);
    }

    let comparison = if populations.len() == 2 {
        let report = compare(
            &populations[0].label,
            &populations[0].runs,
            &populations[1].label,
            &populations[1].runs,
            manifest.alpha,
        )?;
        for (format, ext) in [
            (ReportFormat::Markdown, "md"),
            (ReportFormat::Json, "json"),
            (ReportFormat::Csv, "csv"),
        ] {
            let path = out.join(format!("comparison.{ext}"));
            fs::write(&path, render_report(&report, format)?).map_err(|e| Error::io(&path, e))?;
        }
        Some(report)
    } else {
        None
    };
    Ok(ManifestOutcome {
        populations,
        comparison,
    })
}
