//! Benchmark harness: the 2×2×2 grid (reader × allocation × preset), epoch
//! timing split into loading vs training, CSV reports, and text summaries.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use loadforge_core::augment::AugmentPreset;
use loadforge_core::plan::AllocationPolicy;
use loadforge_core::trainer::WeightVector;

use crate::error::{Error, Result};
use crate::pipeline::{build_pipeline, AugmentSpec, PipelineConfig};
use crate::store::{scan_directory, DatasetSource};
use crate::trainer::{probe_feature_dim, train_epoch, TrainHook};

pub use loadforge_core::metrics::{load_fraction, speedup};

/// How samples are stored on disk for a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReaderKind {
    FilePerSample,
    Container,
}

impl ReaderKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReaderKind::FilePerSample => "file",
            ReaderKind::Container => "container",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "file" => Some(ReaderKind::FilePerSample),
            "container" => Some(ReaderKind::Container),
            _ => None,
        }
    }
}

/// One grid point. Repeats and epochs live in [`BenchConfig`]; the case is
/// the workload identity only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchCase {
    pub reader: ReaderKind,
    pub allocation: AllocationPolicy,
    pub preset: AugmentPreset,
}

impl BenchCase {
    pub fn id(&self) -> String {
        format!("{}-{}-{}", self.reader.name(), self.allocation.name(), self.preset.name())
    }
}

/// The canonical eight-case grid, reader-major.
pub fn full_grid(offload_workers: u32) -> Vec<BenchCase> {
    let mut out = Vec::with_capacity(8);
    for reader in [ReaderKind::FilePerSample, ReaderKind::Container] {
        for allocation in
            [AllocationPolicy::HostOnly, AllocationPolicy::Shared { offload_workers }]
        {
            for preset in [AugmentPreset::Few, AugmentPreset::Extensive] {
                out.push(BenchCase { reader, allocation, preset });
            }
        }
    }
    out
}

/// "all", or comma-separated `reader:allocation:preset` triples, e.g.
/// `container:shared:extensive,file:hostonly:few`.
pub fn parse_grid(spec: &str, offload_workers: u32) -> Result<Vec<BenchCase>> {
    if spec == "all" {
        return Ok(full_grid(offload_workers));
    }
    let mut out = Vec::new();
    for triple in spec.split(',') {
        let parts: Vec<&str> = triple.split(':').collect();
        let [reader, allocation, preset] = parts.as_slice() else {
            return Err(Error::InvalidArgument(format!(
                "case spec `{triple}` is not reader:allocation:preset"
            )));
        };
        let reader = ReaderKind::from_name(reader).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown reader `{reader}` (file|container)"))
        })?;
        let allocation = match *allocation {
            "hostonly" => AllocationPolicy::HostOnly,
            "shared" => AllocationPolicy::Shared { offload_workers },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown allocation `{other}` (hostonly|shared)"
                )))
            }
        };
        let preset = AugmentPreset::from_name(preset).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown preset `{preset}` (few|extensive)"))
        })?;
        out.push(BenchCase { reader, allocation, preset });
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty case list".into()));
    }
    Ok(out)
}

/// Knobs shared by every case in a grid run.
#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    /// Measured epochs per repeat (a warm-up epoch runs on top unless
    /// `cold`).
    pub epochs: u32,
    pub repeats: u32,
    pub seed: u64,
    /// None → min(32, dataset size).
    pub batch_size: Option<u32>,
    pub host_workers: u32,
    pub offload_workers: u32,
    pub queue_depth: u32,
    pub eta: f64,
    pub fuse_ops: bool,
    /// Include the first (cold) epoch in the records instead of discarding
    /// it as warm-up.
    pub cold: bool,
    pub hook: TrainHook,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            epochs: 2,
            repeats: 3,
            seed: 0,
            batch_size: None,
            host_workers: 1,
            offload_workers: 1,
            queue_depth: 2,
            eta: 0.01,
            fuse_ops: true,
            cold: false,
            hook: TrainHook::None,
        }
    }
}

/// One measured epoch of one case repeat — a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub case_id: String,
    pub reader: String,
    pub allocation: String,
    pub preset: String,
    pub repeat: u32,
    pub epoch: u32,
    pub batches: u32,
    pub epoch_time_ms: f64,
    pub load_time_ms: f64,
    pub train_time_ms: f64,
}

impl EpochRecord {
    /// Data-loading share of the epoch, in percent.
    pub fn load_fraction(&self) -> Result<f64> {
        Ok(load_fraction(self.load_time_ms, self.epoch_time_ms)?)
    }

    /// Instrumentation sanity: the measured split accounts for the epoch
    /// within 5% overhead slack.
    pub fn additivity_ok(&self) -> bool {
        self.load_time_ms + self.train_time_ms <= self.epoch_time_ms * 1.05
    }
}

/// Per-case medians over all recorded epochs (repeats pooled).
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSummary {
    pub case_id: String,
    pub reader: String,
    pub allocation: String,
    pub preset: String,
    pub records: usize,
    pub median_epoch_ms: f64,
    pub median_load_ms: f64,
    pub median_train_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub cores: usize,
    pub dataset: String,
    pub records: Vec<EpochRecord>,
}

/// Median with the even-count mean-of-middles convention.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN timings"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

impl BenchReport {
    /// Group records by case id (first-appearance order) and take medians.
    pub fn case_summaries(&self) -> Vec<CaseSummary> {
        let mut order: Vec<&str> = Vec::new();
        for r in &self.records {
            if !order.contains(&r.case_id.as_str()) {
                order.push(&r.case_id);
            }
        }
        order
            .into_iter()
            .map(|id| {
                let rows: Vec<&EpochRecord> =
                    self.records.iter().filter(|r| r.case_id == id).collect();
                let first = rows[0];
                CaseSummary {
                    case_id: id.to_string(),
                    reader: first.reader.clone(),
                    allocation: first.allocation.clone(),
                    preset: first.preset.clone(),
                    records: rows.len(),
                    median_epoch_ms: median(
                        &rows.iter().map(|r| r.epoch_time_ms).collect::<Vec<_>>(),
                    ),
                    median_load_ms: median(
                        &rows.iter().map(|r| r.load_time_ms).collect::<Vec<_>>(),
                    ),
                    median_train_ms: median(
                        &rows.iter().map(|r| r.train_time_ms).collect::<Vec<_>>(),
                    ),
                }
            })
            .collect()
    }

    /// Human-readable summary: environment, per-case medians, and the
    /// directional comparisons the figures are about.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "bench: dataset {} | cores {} | {} records\n",
            self.dataset,
            self.cores,
            self.records.len()
        ));
        let summaries = self.case_summaries();
        out.push_str("case                              epochs  median_epoch_ms  median_load_ms  median_train_ms  load%\n");
        for s in &summaries {
            let pct = if s.median_epoch_ms > 0.0 {
                100.0 * s.median_load_ms / s.median_epoch_ms
            } else {
                0.0
            };
            out.push_str(&format!(
                "{:<34}{:>6}  {:>15.3}  {:>14.3}  {:>15.3}  {:>4.1}\n",
                s.case_id, s.records, s.median_epoch_ms, s.median_load_ms, s.median_train_ms, pct
            ));
        }
        // Pairwise speedups along each axis the grid varies.
        let find = |reader: &str, alloc: &str, preset: &str| {
            summaries
                .iter()
                .find(|s| s.reader == reader && s.allocation == alloc && s.preset == preset)
        };
        for preset in ["few", "extensive"] {
            for alloc in ["hostonly", "shared"] {
                if let (Some(file), Some(container)) =
                    (find("file", alloc, preset), find("container", alloc, preset))
                {
                    if let Ok(pct) =
                        speedup(file.median_epoch_ms, container.median_epoch_ms)
                    {
                        out.push_str(&format!(
                            "container vs file       ({alloc}, {preset}): {pct:+.1}%\n"
                        ));
                    }
                }
            }
            for reader in ["file", "container"] {
                if let (Some(host), Some(shared)) =
                    (find(reader, "hostonly", preset), find(reader, "shared", preset))
                {
                    if let Ok(pct) = speedup(host.median_epoch_ms, shared.median_epoch_ms) {
                        out.push_str(&format!(
                            "shared vs hostonly      ({reader}, {preset}): {pct:+.1}%\n"
                        ));
                    }
                }
            }
        }
        out
    }
}

/// The container a dataset directory's packed twin lives in: a sibling file
/// named after the directory with a `.brc` extension.
pub fn container_path(dataset_dir: &Path) -> std::path::PathBuf {
    dataset_dir.with_extension("brc")
}

fn open_source(dataset_dir: &Path, reader: ReaderKind) -> Result<DatasetSource> {
    match reader {
        ReaderKind::FilePerSample => scan_directory(dataset_dir),
        ReaderKind::Container => {
            let path = container_path(dataset_dir);
            if !path.exists() {
                return Err(Error::MissingArtifact(path));
            }
            DatasetSource::open_container(&path)
        }
    }
}

/// Run one case: `repeats × (1 + epochs)` epochs, the first of each repeat
/// treated as warm-up (recorded only under `cold`). Weights persist across
/// a repeat's epochs, restarting fresh each repeat.
pub fn run_case(dataset_dir: &Path, case: &BenchCase, cfg: &BenchConfig) -> Result<Vec<EpochRecord>> {
    let source = std::sync::Arc::new(open_source(dataset_dir, case.reader)?);
    let n = source.len();
    let batch_size = cfg.batch_size.unwrap_or_else(|| 32.min(n.max(1) as u32));

    let mut pipe_cfg = PipelineConfig::new(source, AugmentSpec::Preset(case.preset));
    pipe_cfg.batch_size = batch_size;
    pipe_cfg.allocation = case.allocation;
    pipe_cfg.host_workers = cfg.host_workers;
    pipe_cfg.queue_depth = cfg.queue_depth;
    pipe_cfg.global_seed = cfg.seed;
    pipe_cfg.fuse_ops = cfg.fuse_ops;
    let mut pipeline = build_pipeline(pipe_cfg)?;
    let d = probe_feature_dim(&pipeline)?;

    let case_id = case.id();
    let mut records = Vec::new();
    for repeat in 0..cfg.repeats {
        let mut w = WeightVector::zeros(d);
        for epoch in 0..=cfg.epochs {
            let t0 = Instant::now();
            let outcome = train_epoch(&mut pipeline, epoch as u64, &mut w, cfg.eta, cfg.hook)?;
            let epoch_ms = t0.elapsed().as_secs_f64() * 1e3;
            let load_ms: f64 =
                pipeline.epoch_timings().iter().map(|t| t.wait_ns as f64 / 1e6).sum();
            let train_ms = outcome.train_time_ns as f64 / 1e6;
            if epoch == 0 && !cfg.cold {
                continue; // warm-up
            }
            let record = EpochRecord {
                case_id: case_id.clone(),
                reader: case.reader.name().to_string(),
                allocation: case.allocation.name().to_string(),
                preset: case.preset.name().to_string(),
                repeat,
                epoch,
                batches: outcome.batches,
                epoch_time_ms: epoch_ms,
                load_time_ms: load_ms,
                train_time_ms: train_ms,
            };
            // Loop and instrumentation overhead must stay small relative to
            // any epoch long enough to measure meaningfully.
            debug_assert!(
                record.epoch_time_ms < 50.0 || record.additivity_ok(),
                "load {} + train {} overshoot epoch {}",
                record.load_time_ms,
                record.train_time_ms,
                record.epoch_time_ms
            );
            records.push(record);
        }
    }
    Ok(records)
}

/// Run every case sequentially (parallel cases would contaminate each
/// other's timings) and collect one report.
pub fn run_grid(dataset_dir: &Path, grid: &[BenchCase], cfg: &BenchConfig) -> Result<BenchReport> {
    let mut records = Vec::new();
    for case in grid {
        records.extend(run_case(dataset_dir, case, cfg)?);
    }
    Ok(BenchReport {
        cores: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        dataset: dataset_dir.display().to_string(),
        records,
    })
}

pub const CSV_HEADER: &str =
    "case,reader,allocation,preset,repeat,epoch,batches,epoch_time_ms,load_time_ms,train_time_ms";

/// Render the report as CSV: the exact header, one row per record, times
/// with three decimals, LF line endings.
pub fn csv_string(report: &BenchReport) -> Result<String> {
    if report.records.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut out = String::with_capacity(64 * (report.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3},{:.3},{:.3}\n",
            r.case_id,
            r.reader,
            r.allocation,
            r.preset,
            r.repeat,
            r.epoch,
            r.batches,
            r.epoch_time_ms,
            r.load_time_ms,
            r.train_time_ms
        ));
    }
    Ok(out)
}

pub fn emit_csv(report: &BenchReport, path: &Path) -> Result<()> {
    let text = csv_string(report)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Parse a CSV produced by [`emit_csv`]; environment fields are not stored
/// in the CSV and come back as placeholders.
pub fn parse_csv(text: &str) -> Result<BenchReport> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        Some(h) => {
            return Err(Error::Format(format!("unexpected CSV header: {h}")));
        }
        None => return Err(Error::EmptyReport),
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(Error::Format(format!("row {}: expected 10 columns", n + 2)));
        }
        let parse_u32 = |s: &str, what: &str| {
            s.parse::<u32>()
                .map_err(|_| Error::Format(format!("row {}: bad {what} `{s}`", n + 2)))
        };
        let parse_f64 = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("row {}: bad {what} `{s}`", n + 2)))
        };
        records.push(EpochRecord {
            case_id: cols[0].to_string(),
            reader: cols[1].to_string(),
            allocation: cols[2].to_string(),
            preset: cols[3].to_string(),
            repeat: parse_u32(cols[4], "repeat")?,
            epoch: parse_u32(cols[5], "epoch")?,
            batches: parse_u32(cols[6], "batches")?,
            epoch_time_ms: parse_f64(cols[7], "epoch_time_ms")?,
            load_time_ms: parse_f64(cols[8], "load_time_ms")?,
            train_time_ms: parse_f64(cols[9], "train_time_ms")?,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyReport);
    }
    Ok(BenchReport { cores: 0, dataset: String::new(), records })
}
