use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use rulkit::features::FeatureError;
use rulkit::ingest::{self, IngestError, Manifest, ManifestEntry, SampleReader, SegmentKind};
use rulkit::labeling::{self, LabelConfig, LabelError, LabelRecord};
use rulkit::pipeline::{self, LabeledCell, OnlinePredictor, PipelineError, Precision, TrainConfig};
use rulkit::simulate::{self, Profile, SimConfig, SimError};

/// Battery remaining-useful-life toolkit.
#[derive(Debug, Parser)]
#[command(name = "rulkit", version, about)]
struct Cli {
    /// Worker threads for per-cell and per-window parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log filter used when RUST_LOG is unset.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    ConstantCurrent,
    RandomizedPartial,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Subset {
    HeldOut,
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic fleet: cell CSVs, truth traces and a manifest.
    Simulate {
        /// Simulator config JSON; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for cells/, truth/ and manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
        /// Number of cells in the fleet.
        #[arg(long, default_value_t = 10)]
        n_cells: usize,
        /// Fleet seed; per-cell seeds are derived from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the profile from the config file.
        #[arg(long, value_enum)]
        profile: Option<ProfileArg>,
    },
    /// Validate every cell in a manifest and report its segments.
    Ingest {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Currents within this magnitude count as rest, amperes.
        #[arg(long, default_value_t = ingest::DEFAULT_DEADBAND_A)]
        deadband_a: f64,
        /// Rewrite each cell in canonical CSV form into this directory.
        #[arg(long)]
        canonicalize_dir: Option<PathBuf>,
    },
    /// Measure capacity, SOH and EOL, and write RUL labels as JSONL.
    Label {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Output JSONL of RUL labels.
        #[arg(long)]
        out: PathBuf,
        /// End-of-life SOH threshold, percent of nominal capacity.
        #[arg(long, default_value_t = labeling::EOL_THRESHOLD_PCT)]
        threshold_pct: f64,
        /// Currents within this magnitude count as rest, amperes.
        #[arg(long, default_value_t = ingest::DEFAULT_DEADBAND_A)]
        deadband_a: f64,
        /// Censoring report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the autoencoder and the RUL regressor.
    Train {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Labels JSONL written by `label`.
        #[arg(long)]
        labels: PathBuf,
        /// Training config JSON; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-epoch `epoch,train_loss,val_rmse` CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Stored parameter precision: f64 or f32.
        #[arg(long, default_value = "f64")]
        precision: Precision,
    },
    /// Score a checkpoint on labeled cells.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Labels JSONL written by `label`.
        #[arg(long)]
        labels: PathBuf,
        /// Which cells of the training split to score.
        #[arg(long, value_enum, default_value_t = Subset::HeldOut)]
        subset: Subset,
        /// Report JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stream a cell CSV through the model; prints `timestamp_s,remaining_ah`.
    Predict {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Cell CSV; reads stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// Failure mapped onto the exit-code contract.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Io(String),
    Version(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Io(_) => 3,
            Failure::Version(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Io(m) | Failure::Version(m) => m,
        }
    }
}

fn io_fail(context: &str, path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{context} {}: {e}", path.display()))
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<LabelError> for Failure {
    fn from(e: LabelError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::VersionMismatch { .. } => Failure::Version(e.to_string()),
            PipelineError::CorruptCheckpoint(_) | PipelineError::Io(_) | PipelineError::Ingest(IngestError::Io(_)) => {
                Failure::Io(e.to_string())
            }
            PipelineError::Feature(FeatureError::Io(_)) => Failure::Io(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once");
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Simulate {
            config,
            out_dir,
            n_cells,
            seed,
            profile,
        } => cmd_simulate(config.as_deref(), &out_dir, n_cells, seed, profile),
        Command::Ingest {
            manifest,
            deadband_a,
            canonicalize_dir,
        } => cmd_ingest(&manifest, deadband_a, canonicalize_dir.as_deref()),
        Command::Label {
            manifest,
            out,
            threshold_pct,
            deadband_a,
            report,
        } => cmd_label(&manifest, &out, threshold_pct, deadband_a, report.as_deref()),
        Command::Train {
            manifest,
            labels,
            config,
            out,
            seed,
            history,
            precision,
        } => cmd_train(&manifest, &labels, config.as_deref(), &out, seed, history.as_deref(), precision),
        Command::Eval {
            checkpoint,
            manifest,
            labels,
            subset,
            out,
        } => cmd_eval(&checkpoint, &manifest, &labels, subset, out.as_deref()),
        Command::Predict { checkpoint, input } => cmd_predict(&checkpoint, input.as_deref()),
    }
}

fn read_json_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| io_fail("cannot read", path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_fail("cannot create", dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_fail("cannot write", path, e))
}

fn log_config<T: Serialize>(name: &str, value: &T) {
    log::info!("{name}: {}", serde_json::to_string(value).expect("config serializes"));
}

fn load_manifest(path: &Path) -> Result<Manifest, Failure> {
    let manifest = Manifest::load(path)?;
    if manifest.cells.is_empty() {
        return Err(Failure::Invalid(format!("{}: manifest lists no cells", path.display())));
    }
    Ok(manifest)
}

fn cmd_simulate(config: Option<&Path>, out_dir: &Path, n_cells: usize, seed: u64, profile: Option<ProfileArg>) -> Outcome {
    let mut base: SimConfig = read_json_config(config)?;
    if let Some(p) = profile {
        base.profile = match p {
            ProfileArg::ConstantCurrent => Profile::ConstantCurrent,
            ProfileArg::RandomizedPartial => Profile::RandomizedPartial,
        };
    }
    log_config("simulator config", &base);
    log::info!("fleet: {n_cells} cells, seed {seed}, output {}", out_dir.display());
    if n_cells == 0 {
        return Err(Failure::Invalid("--n-cells must be at least 1".into()));
    }
    base.validate()?;
    for sub in ["cells", "truth"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| io_fail("cannot create", &dir, e))?;
    }
    let fleet = simulate::simulate_fleet(&base, n_cells, seed)?;
    let mut manifest = Manifest::default();
    for result in &fleet {
        let id = result.series.cell_id();
        let rel = PathBuf::from("cells").join(format!("{id}.csv"));
        let mut csv = Vec::new();
        ingest::write_cell_csv(&result.series, &mut csv).expect("in-memory write");
        write_file(&out_dir.join(&rel), &csv)?;
        let mut truth = Vec::new();
        result.write_truth_csv(&mut truth).expect("in-memory write");
        write_file(&out_dir.join("truth").join(format!("{id}.csv")), &truth)?;
        manifest.cells.push(ManifestEntry {
            cell_id: id.to_owned(),
            path: rel,
            nominal_capacity_ah: result.series.nominal_capacity_ah(),
        });
        log::info!(
            "{id}: {} samples, {:.2} Ah discharged",
            result.series.len(),
            result.discharge_throughput_ah()
        );
    }
    let mut json = manifest.to_json_pretty();
    json.push('\n');
    write_file(&out_dir.join("manifest.json"), json.as_bytes())
}

fn cmd_ingest(manifest_path: &Path, deadband_a: f64, canonicalize_dir: Option<&Path>) -> Outcome {
    let manifest = load_manifest(manifest_path)?;
    log::info!("ingest: manifest {}, deadband {deadband_a} A", manifest_path.display());
    let reports: Vec<Result<String, Failure>> = manifest
        .cells
        .par_iter()
        .map(|entry| {
            let series = manifest.read_cell(entry).map_err(|e| match Failure::from(e) {
                Failure::Invalid(m) => Failure::Invalid(format!("{}: {m}", entry.cell_id)),
                other => other,
            })?;
            let segments = ingest::segment_cycles(&series, deadband_a);
            let count = |k: SegmentKind| segments.iter().filter(|s| s.kind == k).count();
            if let Some(dir) = canonicalize_dir {
                let mut csv = Vec::new();
                ingest::write_cell_csv(&series, &mut csv).expect("in-memory write");
                write_file(&dir.join(format!("{}.csv", entry.cell_id)), &csv)?;
            }
            Ok(format!(
                "{},{},{},{},{},{}",
                entry.cell_id,
                series.len(),
                series.duration_s(),
                count(SegmentKind::Charge),
                count(SegmentKind::Discharge),
                count(SegmentKind::Rest)
            ))
        })
        .collect();
    let mut out = String::from("cell_id,samples,duration_s,charge_segments,discharge_segments,rest_segments\n");
    for r in reports {
        out.push_str(&r?);
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

#[derive(Serialize)]
struct LabeledSummary {
    cell_id: String,
    eol_throughput_ah: f64,
    capacity_points: usize,
}

#[derive(Serialize)]
struct CensoredSummary {
    cell_id: String,
    final_soh_pct: Option<f64>,
    total_throughput_ah: f64,
}

#[derive(Serialize)]
struct LabelReport {
    threshold_pct: f64,
    labeled: Vec<LabeledSummary>,
    censored: Vec<CensoredSummary>,
}

fn cmd_label(manifest_path: &Path, out: &Path, threshold_pct: f64, deadband_a: f64, report_path: Option<&Path>) -> Outcome {
    let manifest = load_manifest(manifest_path)?;
    let config = LabelConfig {
        threshold_pct,
        deadband_a,
        ..LabelConfig::default()
    };
    log_config("label config", &config);
    let labels: Vec<Result<labeling::CellLabels, Failure>> = manifest
        .cells
        .par_iter()
        .map(|entry| {
            let series = manifest.read_cell(entry)?;
            labeling::label_cell(&series, &config).map_err(|e| Failure::Invalid(format!("{}: {e}", entry.cell_id)))
        })
        .collect();
    let mut jsonl = String::new();
    let mut report = LabelReport {
        threshold_pct,
        labeled: Vec::new(),
        censored: Vec::new(),
    };
    for cell in labels {
        let cell = cell?;
        match (cell.records(), cell.eol.throughput_ah()) {
            (Some(records), Some(eol)) => {
                for r in &records {
                    jsonl.push_str(&serde_json::to_string(r).expect("record serializes"));
                    jsonl.push('\n');
                }
                report.labeled.push(LabeledSummary {
                    cell_id: cell.cell_id.clone(),
                    eol_throughput_ah: eol,
                    capacity_points: cell.capacity_points.len(),
                });
            }
            _ => {
                log::warn!("{}: censored, never reaches {threshold_pct} % SOH", cell.cell_id);
                report.censored.push(CensoredSummary {
                    cell_id: cell.cell_id.clone(),
                    final_soh_pct: cell.soh.last().map(|p| p.soh_pct),
                    total_throughput_ah: cell.total_throughput_ah,
                });
            }
        }
    }
    write_file(out, jsonl.as_bytes())?;
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    eprintln!(
        "labeled {} cells, censored {}: [{}]",
        report.labeled.len(),
        report.censored.len(),
        report.censored.iter().map(|c| c.cell_id.as_str()).collect::<Vec<_>>().join(", ")
    );
    if let Some(path) = report_path {
        write_file(path, format!("{report_json}\n").as_bytes())?;
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, Failure> {
    let file = File::open(path).map_err(|e| io_fail("cannot open", path, e))?;
    let mut records = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_fail("cannot read", path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LabelRecord = serde_json::from_str(&line)
            .map_err(|e| Failure::Invalid(format!("{}:{}: {e}", path.display(), k + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// Cells of the manifest that have labels; unlabeled (censored) cells are skipped.
fn labeled_cells(manifest: &Manifest, labels: &Path, only: Option<&[String]>) -> Result<Vec<LabeledCell>, Failure> {
    let mut targets = labeling::targets_by_cell(&read_labels(labels)?);
    let wanted: Vec<&ManifestEntry> = manifest
        .cells
        .iter()
        .filter(|e| only.is_none_or(|ids| ids.contains(&e.cell_id)))
        .filter(|e| {
            let has = targets.contains_key(&e.cell_id);
            if !has {
                log::warn!("{}: no labels, skipped", e.cell_id);
            }
            has
        })
        .collect();
    let series: Vec<Result<ingest::CellSeries, IngestError>> = wanted.par_iter().map(|e| manifest.read_cell(e)).collect();
    let mut cells = Vec::with_capacity(series.len());
    for (entry, s) in wanted.iter().zip(series) {
        cells.push(LabeledCell {
            series: s?,
            targets: targets.remove(&entry.cell_id).expect("filtered above"),
        });
    }
    Ok(cells)
}

fn cmd_train(
    manifest_path: &Path,
    labels: &Path,
    config_path: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    history_path: Option<&Path>,
    precision: Precision,
) -> Outcome {
    let mut config: TrainConfig = read_json_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;
    log_config("train config", &config);
    let manifest = load_manifest(manifest_path)?;
    let cells = labeled_cells(&manifest, labels, None)?;
    let trained = pipeline::train_pipeline(&cells, &config)?;
    let mut bytes = Vec::new();
    pipeline::save_bundle(&trained.bundle, &mut bytes, precision)?;
    write_file(out, &bytes)?;
    if let Some(path) = history_path {
        write_file(path, pipeline::history_csv(&trained.history).as_bytes())?;
    }
    log::info!("checkpoint written to {}", out.display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<pipeline::ModelBundle, Failure> {
    let file = File::open(path).map_err(|e| io_fail("cannot open", path, e))?;
    Ok(pipeline::load_bundle(BufReader::new(file))?)
}

fn cmd_eval(checkpoint: &Path, manifest_path: &Path, labels: &Path, subset: Subset, out: Option<&Path>) -> Outcome {
    let bundle = load_checkpoint(checkpoint)?;
    log_config("checkpoint config", &bundle.config);
    log_config("subset", &subset);
    let split = &bundle.split;
    let ids: Option<Vec<String>> = match subset {
        Subset::HeldOut => Some(split.held_out()),
        Subset::Train => Some(split.train.clone()),
        Subset::Val => Some(split.val.clone()),
        Subset::Test => Some(split.test.clone()),
        Subset::All => None,
    };
    let manifest = load_manifest(manifest_path)?;
    let cells = labeled_cells(&manifest, labels, ids.as_deref())?;
    let refs: Vec<&LabeledCell> = cells.iter().collect();
    let windows = pipeline::cell_windows(&refs, &bundle.config)?;
    if windows.is_empty() {
        return Err(Failure::Invalid("no evaluation windows for the selected cells".into()));
    }
    let report = pipeline::evaluate(&bundle, &windows)?;
    print!("{}", report.to_table());
    if let Some(path) = out {
        write_file(path, format!("{}\n", report.to_json_pretty()).as_bytes())?;
    }
    Ok(())
}

fn cmd_predict(checkpoint: &Path, input: Option<&Path>) -> Outcome {
    let bundle = load_checkpoint(checkpoint)?;
    log_config("checkpoint config", &bundle.config);
    let source: Box<dyn io::Read> = match input {
        Some(path) => Box::new(BufReader::new(File::open(path).map_err(|e| io_fail("cannot open", path, e))?)),
        None => Box::new(io::stdin().lock()),
    };
    let mut predictor = OnlinePredictor::new(Arc::new(bundle));
    let stdout = io::stdout();
    let mut sink = BufWriter::new(stdout.lock());
    let write_err = |e: io::Error| Failure::Io(format!("cannot write output: {e}"));
    // The header goes out with the first estimate, so a stream shorter than
    // one window prints nothing.
    let mut header_written = false;
    let mut emit = |sink: &mut BufWriter<_>, est: pipeline::Estimate| -> io::Result<()> {
        if !header_written {
            writeln!(sink, "timestamp_s,remaining_ah")?;
            header_written = true;
        }
        writeln!(sink, "{},{}", est.timestamp_s, est.remaining_ah)
    };
    for item in SampleReader::new(source)? {
        let (sample, _) = item?;
        for est in predictor.push(sample)? {
            emit(&mut sink, est).map_err(write_err)?;
        }
    }
    for est in predictor.finish() {
        emit(&mut sink, est).map_err(write_err)?;
    }
    sink.flush().map_err(write_err)
}
