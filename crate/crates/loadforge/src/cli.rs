//! Command-line surface: pack / inspect / verify / bench / train / plot /
//! synth, a flat `key = value` config file that flags override, and the
//! 0/1/2/3 exit-code contract.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::parser::ValueSource;
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use loadforge_core::augment::AugmentPreset;
use loadforge_core::plan::AllocationPolicy;
use loadforge_core::trainer::WeightVector;

use crate::bench::{emit_csv, parse_csv, parse_grid, run_grid, BenchConfig};
use crate::container::ContainerHandle;
use crate::error::{Error, Result};
use crate::pipeline::{build_pipeline, AugmentSpec, PipelineConfig};
use crate::plots::emit_plots;
use crate::store::{pack_directory, scan_directory};
use crate::synth::synth_dataset;
use crate::trainer::{probe_feature_dim, train_epoch, TrainHook};

/// Default worker count: the machine's parallelism, capped by the
/// `LOADFORGE_THREADS` environment variable when set.
pub fn default_workers() -> u32 {
    let n = std::thread::available_parallelism().map(|n| n.get() as u32).unwrap_or(1);
    match std::env::var("LOADFORGE_THREADS").ok().and_then(|s| s.parse::<u32>().ok()) {
        Some(cap) if cap >= 1 => n.min(cap),
        _ => n,
    }
}

fn path_arg(id: &'static str, help: &'static str) -> Arg {
    Arg::new(id).help(help).required(true).value_parser(value_parser!(PathBuf))
}

fn command() -> Command {
    Command::new("loadforge")
        .about("Training-data loading pipeline: containers, augmentation, benchmarks")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("pack")
                .about("Pack a class-per-folder dataset directory into a container file")
                .arg(path_arg("dir", "dataset directory (class subfolders of .ppm/.brt)"))
                .arg(
                    Arg::new("output")
                        .short('o')
                        .long("output")
                        .required(true)
                        .value_parser(value_parser!(PathBuf))
                        .help("container file to write"),
                )
                .arg(
                    Arg::new("chunk-bytes")
                        .long("chunk-bytes")
                        .value_parser(value_parser!(u64))
                        .default_value("1048576")
                        .help("target chunk payload size in bytes"),
                )
                .arg(
                    Arg::new("store-encoded")
                        .long("store-encoded")
                        .action(ArgAction::SetTrue)
                        .help("store PPM files as encoded bytes instead of decoded tensors"),
                ),
        )
        .subcommand(
            Command::new("inspect")
                .about("Print a container's header, footer, and chunk table")
                .arg(path_arg("container", "container file")),
        )
        .subcommand(
            Command::new("verify")
                .about("Check every record's checksums; exit 0 iff clean")
                .arg(path_arg("container", "container file")),
        )
        .subcommand(
            Command::new("bench")
                .about("Run the reader × allocation × preset benchmark grid")
                .arg(path_arg("dataset", "dataset directory (container twin: <dataset>.brc)"))
                .arg(
                    Arg::new("grid")
                        .long("grid")
                        .default_value("all")
                        .help("\"all\" or comma-separated reader:allocation:preset triples"),
                )
                .arg(
                    Arg::new("epochs")
                        .long("epochs")
                        .value_parser(value_parser!(u32))
                        .default_value("2")
                        .help("measured epochs per repeat (one warm-up epoch runs on top)"),
                )
                .arg(
                    Arg::new("repeats")
                        .long("repeats")
                        .value_parser(value_parser!(u32))
                        .default_value("3"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(value_parser!(u64))
                        .default_value("0"),
                )
                .arg(
                    Arg::new("workers")
                        .long("workers")
                        .value_parser(value_parser!(u32))
                        .help("host worker threads [default: cores, capped by LOADFORGE_THREADS]"),
                )
                .arg(
                    Arg::new("offload-workers")
                        .long("offload-workers")
                        .value_parser(value_parser!(u32))
                        .default_value("1")
                        .help("offload worker threads for shared-allocation cases"),
                )
                .arg(
                    Arg::new("queue-depth")
                        .long("queue-depth")
                        .value_parser(value_parser!(u32))
                        .default_value("2")
                        .help("prefetched batches per pipeline"),
                )
                .arg(
                    Arg::new("preset")
                        .long("preset")
                        .value_parser(["few", "extensive"])
                        .help("restrict the grid to one augmentation preset"),
                )
                .arg(
                    Arg::new("no-fuse")
                        .long("no-fuse")
                        .action(ArgAction::SetTrue)
                        .help("disable crop+normalize operator fusion"),
                )
                .arg(
                    Arg::new("batch-size")
                        .long("batch-size")
                        .value_parser(value_parser!(u32))
                        .help("samples per batch [default: min(32, dataset size)]"),
                )
                .arg(
                    Arg::new("cold")
                        .long("cold")
                        .action(ArgAction::SetTrue)
                        .help("record first (cold) epochs instead of discarding them as warm-up"),
                )
                .arg(
                    Arg::new("csv")
                        .long("csv")
                        .value_parser(value_parser!(PathBuf))
                        .help("write per-epoch records to this CSV file"),
                )
                .arg(
                    Arg::new("plots")
                        .long("plots")
                        .value_parser(value_parser!(PathBuf))
                        .help("render SVG charts into this directory"),
                )
                .arg(
                    Arg::new("config")
                        .long("config")
                        .value_parser(value_parser!(PathBuf))
                        .help("key = value file supplying defaults; flags override"),
                ),
        )
        .subcommand(
            Command::new("train")
                .about("Train the logistic probe over a dataset directory")
                .arg(path_arg("dataset", "dataset directory"))
                .arg(
                    Arg::new("eta")
                        .long("eta")
                        .value_parser(value_parser!(f64))
                        .default_value("0.01")
                        .help("SGD step size"),
                )
                .arg(
                    Arg::new("batch-size")
                        .long("batch-size")
                        .value_parser(value_parser!(u32))
                        .help("samples per batch [default: min(32, dataset size)]"),
                )
                .arg(
                    Arg::new("epochs")
                        .long("epochs")
                        .value_parser(value_parser!(u32))
                        .default_value("1"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(value_parser!(u64))
                        .default_value("0"),
                )
                .arg(
                    Arg::new("config")
                        .long("config")
                        .value_parser(value_parser!(PathBuf))
                        .help("key = value file supplying defaults; flags override"),
                ),
        )
        .subcommand(
            Command::new("plot")
                .about("Render SVG charts from a bench CSV")
                .arg(path_arg("csv", "CSV file written by `bench --csv`"))
                .arg(
                    Arg::new("output")
                        .short('o')
                        .long("output")
                        .required(true)
                        .value_parser(value_parser!(PathBuf))
                        .help("directory to write the SVG files into"),
                ),
        )
        .subcommand(
            Command::new("synth")
                .about("Generate a deterministic synthetic PPM dataset")
                .arg(path_arg("out-dir", "directory to create class folders under"))
                .arg(
                    Arg::new("classes")
                        .long("classes")
                        .value_parser(value_parser!(u32))
                        .default_value("2"),
                )
                .arg(
                    Arg::new("per-class")
                        .long("per-class")
                        .value_parser(value_parser!(u32))
                        .default_value("8"),
                )
                .arg(
                    Arg::new("height")
                        .long("height")
                        .value_parser(value_parser!(u32))
                        .default_value("32"),
                )
                .arg(
                    Arg::new("width")
                        .long("width")
                        .value_parser(value_parser!(u32))
                        .default_value("32"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(value_parser!(u64))
                        .default_value("0"),
                ),
        )
}

/// Parse a flat `key = value` config file; `#` lines and blanks ignored.
fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Format(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                n + 1
            )));
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn config_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Format(format!("config key `{key}`: bad value `{value}`")))
}

/// Resolved bench invocation: grid selection plus run knobs.
struct BenchSettings {
    grid: String,
    preset_filter: Option<AugmentPreset>,
    csv: Option<PathBuf>,
    plots: Option<PathBuf>,
    cfg: BenchConfig,
}

impl BenchSettings {
    fn apply_config(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "grid" => self.grid = value.to_string(),
            "epochs" => self.cfg.epochs = config_value(key, value)?,
            "repeats" => self.cfg.repeats = config_value(key, value)?,
            "seed" => self.cfg.seed = config_value(key, value)?,
            "workers" => self.cfg.host_workers = config_value(key, value)?,
            "offload-workers" => self.cfg.offload_workers = config_value(key, value)?,
            "queue-depth" => self.cfg.queue_depth = config_value(key, value)?,
            "batch-size" => self.cfg.batch_size = Some(config_value(key, value)?),
            "eta" => self.cfg.eta = config_value(key, value)?,
            "fuse" => self.cfg.fuse_ops = config_value(key, value)?,
            "cold" => self.cfg.cold = config_value(key, value)?,
            "preset" => {
                self.preset_filter = Some(AugmentPreset::from_name(value).ok_or_else(|| {
                    Error::Format(format!("config key `preset`: unknown preset `{value}`"))
                })?)
            }
            "csv" => self.csv = Some(PathBuf::from(value)),
            "plots" => self.plots = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Format(format!("config key `{other}` is not recognized")))
            }
        }
        Ok(())
    }
}

fn from_cli<T: Clone + Send + Sync + 'static>(matches: &ArgMatches, id: &str) -> Option<T> {
    if matches.value_source(id) == Some(ValueSource::CommandLine) {
        matches.get_one::<T>(id).cloned()
    } else {
        None
    }
}

fn bench_settings(matches: &ArgMatches) -> Result<BenchSettings> {
    let mut s = BenchSettings {
        grid: "all".to_string(),
        preset_filter: None,
        csv: None,
        plots: None,
        cfg: BenchConfig { host_workers: default_workers(), ..BenchConfig::default() },
    };
    if let Some(path) = matches.get_one::<PathBuf>("config") {
        for (key, value) in read_config_file(path)? {
            s.apply_config(&key, &value)?;
        }
    }
    // Command-line flags take precedence over config-file values.
    if let Some(v) = from_cli::<String>(matches, "grid") {
        s.grid = v;
    }
    if let Some(v) = from_cli(matches, "epochs") {
        s.cfg.epochs = v;
    }
    if let Some(v) = from_cli(matches, "repeats") {
        s.cfg.repeats = v;
    }
    if let Some(v) = from_cli(matches, "seed") {
        s.cfg.seed = v;
    }
    if let Some(v) = from_cli(matches, "workers") {
        s.cfg.host_workers = v;
    }
    if let Some(v) = from_cli(matches, "offload-workers") {
        s.cfg.offload_workers = v;
    }
    if let Some(v) = from_cli(matches, "queue-depth") {
        s.cfg.queue_depth = v;
    }
    if let Some(v) = from_cli(matches, "batch-size") {
        s.cfg.batch_size = Some(v);
    }
    if let Some(v) = from_cli::<String>(matches, "preset") {
        s.preset_filter = AugmentPreset::from_name(&v);
    }
    if matches.get_flag("no-fuse") {
        s.cfg.fuse_ops = false;
    }
    if matches.get_flag("cold") {
        s.cfg.cold = true;
    }
    if let Some(v) = from_cli(matches, "csv") {
        s.csv = Some(v);
    }
    if let Some(v) = from_cli(matches, "plots") {
        s.plots = Some(v);
    }
    Ok(s)
}

fn cmd_pack(matches: &ArgMatches) -> Result<i32> {
    let dir = matches.get_one::<PathBuf>("dir").unwrap();
    let output = matches.get_one::<PathBuf>("output").unwrap();
    let chunk_bytes = *matches.get_one::<u64>("chunk-bytes").unwrap();
    let store_encoded = matches.get_flag("store-encoded");
    let summary = pack_directory(dir, output, chunk_bytes, store_encoded)?;
    println!(
        "packed {} records into {} chunks ({} bytes) at {}",
        summary.record_count,
        summary.chunk_count,
        summary.total_bytes,
        output.display()
    );
    Ok(0)
}

fn cmd_inspect(matches: &ArgMatches) -> Result<i32> {
    let path = matches.get_one::<PathBuf>("container").unwrap();
    let handle = ContainerHandle::open(path)?;
    let records = handle.record_entries();
    let index_offset =
        records.last().map(|r| r.offset + r.frame_len).unwrap_or(0);
    println!("container: {}", path.display());
    println!("  file bytes:   {}", std::fs::metadata(path)?.len());
    println!("  chunk target: {} bytes", handle.chunk_target_bytes());
    println!("  records:      {}", handle.record_count());
    println!("  chunks:       {}", handle.chunk_count());
    println!("  index offset: {index_offset}");
    println!("chunk  first_record  records      bytes  offset_range");
    for (id, chunk) in handle.chunk_entries().iter().enumerate() {
        let first = &records[chunk.first_record as usize];
        let last = &records[(chunk.first_record + chunk.record_count - 1) as usize];
        let end = last.offset + last.frame_len;
        println!(
            "{id:>5}  {:>12}  {:>7}  {:>9}  {}..{end}",
            chunk.first_record,
            chunk.record_count,
            end - first.offset,
            first.offset
        );
    }
    Ok(0)
}

fn cmd_verify(matches: &ArgMatches) -> Result<i32> {
    let path = matches.get_one::<PathBuf>("container").unwrap();
    let handle = ContainerHandle::open(path)?;
    let report = handle.verify()?;
    if report.ok {
        println!("ok: {} records verified", handle.record_count());
        Ok(0)
    } else {
        let indices: Vec<String> =
            report.corrupt_records.iter().map(|i| i.to_string()).collect();
        println!("corrupt records: {}", indices.join(" "));
        Ok(2)
    }
}

fn cmd_bench(matches: &ArgMatches) -> Result<i32> {
    let dataset = matches.get_one::<PathBuf>("dataset").unwrap();
    let settings = bench_settings(matches)?;
    let mut grid = parse_grid(&settings.grid, settings.cfg.offload_workers)?;
    if let Some(preset) = settings.preset_filter {
        grid.retain(|case| case.preset == preset);
        if grid.is_empty() {
            return Err(Error::InvalidArgument(
                "preset filter removed every case from the grid".into(),
            ));
        }
    }
    if settings.cfg.cold {
        println!(
            "note: cold mode records each repeat's first epoch; OS page-cache eviction is \
             not performed — drop caches manually for true cold reads"
        );
    }
    let report = run_grid(dataset, &grid, &settings.cfg)?;
    print!("{}", report.render_text());
    if let Some(csv) = &settings.csv {
        emit_csv(&report, csv)?;
        println!("csv: {}", csv.display());
    }
    if let Some(dir) = &settings.plots {
        for written in emit_plots(&report, dir)? {
            println!("plot: {}", written.display());
        }
    }
    Ok(0)
}

fn cmd_train(matches: &ArgMatches) -> Result<i32> {
    let dataset = matches.get_one::<PathBuf>("dataset").unwrap();
    let mut eta = 0.01;
    let mut batch_size: Option<u32> = None;
    let mut epochs = 1u32;
    let mut seed = 0u64;
    if let Some(path) = matches.get_one::<PathBuf>("config") {
        for (key, value) in read_config_file(path)? {
            match key.as_str() {
                "eta" => eta = config_value(&key, &value)?,
                "batch-size" => batch_size = Some(config_value(&key, &value)?),
                "epochs" => epochs = config_value(&key, &value)?,
                "seed" => seed = config_value(&key, &value)?,
                other => {
                    return Err(Error::Format(format!(
                        "config key `{other}` is not recognized"
                    )))
                }
            }
        }
    }
    if let Some(v) = from_cli(matches, "eta") {
        eta = v;
    }
    if let Some(v) = from_cli(matches, "batch-size") {
        batch_size = Some(v);
    }
    if let Some(v) = from_cli(matches, "epochs") {
        epochs = v;
    }
    if let Some(v) = from_cli(matches, "seed") {
        seed = v;
    }

    let source = Arc::new(scan_directory(dataset)?);
    let n = source.len();
    let mut cfg = PipelineConfig::new(source, AugmentSpec::Preset(AugmentPreset::Few));
    cfg.batch_size = batch_size.unwrap_or_else(|| 32.min(n.max(1) as u32));
    cfg.allocation = AllocationPolicy::HostOnly;
    cfg.host_workers = default_workers();
    cfg.global_seed = seed;
    let mut pipeline = build_pipeline(cfg)?;
    let d = probe_feature_dim(&pipeline)?;
    let mut w = WeightVector::zeros(d);
    for epoch in 0..epochs as u64 {
        let outcome = train_epoch(&mut pipeline, epoch, &mut w, eta, TrainHook::None)?;
        println!(
            "epoch {epoch}: loss {:.6} grad_norm {:.6} samples {} train_ms {:.3}",
            outcome.stats.loss,
            outcome.stats.grad_norm,
            outcome.stats.samples_seen,
            outcome.train_time_ns as f64 / 1e6
        );
    }
    println!("done: {epochs} epochs over {n} samples (feature dim {d})");
    Ok(0)
}

fn cmd_plot(matches: &ArgMatches) -> Result<i32> {
    let csv = matches.get_one::<PathBuf>("csv").unwrap();
    let out_dir = matches.get_one::<PathBuf>("output").unwrap();
    let report = parse_csv(&std::fs::read_to_string(csv)?)?;
    for written in emit_plots(&report, out_dir)? {
        println!("plot: {}", written.display());
    }
    Ok(0)
}

fn cmd_synth(matches: &ArgMatches) -> Result<i32> {
    let out_dir = matches.get_one::<PathBuf>("out-dir").unwrap();
    let classes = *matches.get_one::<u32>("classes").unwrap();
    let per_class = *matches.get_one::<u32>("per-class").unwrap();
    let height = *matches.get_one::<u32>("height").unwrap();
    let width = *matches.get_one::<u32>("width").unwrap();
    let seed = *matches.get_one::<u64>("seed").unwrap();
    synth_dataset(out_dir, classes, per_class, height, width, seed)?;
    println!(
        "wrote {} files ({classes} classes × {per_class}) under {}",
        classes as u64 * per_class as u64,
        out_dir.display()
    );
    Ok(0)
}

/// Parse `argv` and run the selected subcommand, returning the process exit
/// code: 0 success, 1 usage error, 2 data/format error, 3 internal error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders help to stdout and errors to stderr itself.
            let _ = e.print();
            return code;
        }
    };
    let result = match matches.subcommand() {
        Some(("pack", m)) => cmd_pack(m),
        Some(("inspect", m)) => cmd_inspect(m),
        Some(("verify", m)) => cmd_verify(m),
        Some(("bench", m)) => cmd_bench(m),
        Some(("train", m)) => cmd_train(m),
        Some(("plot", m)) => cmd_plot(m),
        Some(("synth", m)) => cmd_synth(m),
        _ => unreachable!("subcommand_required"),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
