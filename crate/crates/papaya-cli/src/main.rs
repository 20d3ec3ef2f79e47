//! `papaya`: fit training cost models, predict maximum throughput, and
//! decide whether a memory saver is worth switching on.
//!
//! Subcommands: `fit`, `advise`, `simulate`, `crossover`, `plotdata`.
//! Exit codes: 0 success, 1 input error, 2 analysis infeasibility/failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use papaya::report::{
    build_advisory_report, plot_data, render_advisory, render_fit_table, PlotData,
};
use papaya::scaling::{
    crossover_depth, crossover_width, scale_depth, score_at_depth, sweep_gpus,
    width_continuous_throughputs, DepthLawPair, MultiGpuLaw, WidthLawPair,
};
use papaya::score::papaya_score;
use papaya::{
    apply_mom, fit_cost_model, generate_profile, parse_profile, validate_series, CostModel,
    FitConfig, FragmentationConfig, MomTransform, ProfileFormat, ProfileSeries, WorkloadSpec,
};

#[derive(Parser)]
#[command(
    name = "papaya",
    version,
    about = "Cost-model advisor for memory-saving training methods"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit cost models from profile files and write them as JSON.
    Fit(FitArgs),
    /// Compare a baseline against one or more memory savers.
    Advise(AdviseArgs),
    /// Generate synthetic profiles from a workload spec.
    Simulate(SimulateArgs),
    /// Find where a memory saver starts to win as models or clusters grow.
    Crossover(CrossoverArgs),
    /// Emit measured-vs-predicted series and throughput curves for plotting.
    Plotdata(PlotdataArgs),
}

/// Flags shared by every subcommand. Each has a config-file equivalent;
/// explicit flags win over the file.
#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON config file with defaults for the flags below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for fit sampling and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fraction of profile points the least-squares solve uses, in (0, 1].
    #[arg(long, global = true)]
    sample_fraction: Option<f64>,
    /// Suffix r² the latency knee scan must reach.
    #[arg(long = "knee-r2", global = true)]
    knee_r2: Option<f64>,
    /// Minimum points per fit.
    #[arg(long, global = true)]
    min_points: Option<usize>,
    /// Effective memory ratio of the baseline after fragmentation.
    #[arg(long, global = true)]
    frag_original: Option<f64>,
    /// Effective memory ratio of the memory saver after fragmentation.
    #[arg(long, global = true)]
    frag_mom: Option<f64>,
    /// Output format for generated files.
    #[arg(long, global = true, value_enum)]
    format: Option<FileFormat>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    Csv,
    Json,
}

/// Config-file counterpart of the common flags.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    sample_fraction: Option<f64>,
    knee_r2: Option<f64>,
    min_points: Option<usize>,
    frag_original: Option<f64>,
    frag_mom: Option<f64>,
    format: Option<String>,
    out: Option<PathBuf>,
}

/// Effective settings after merging flags over the config file.
struct Settings {
    fit: FitConfig,
    fragmentation: Option<FragmentationConfig>,
    format: FileFormat,
    out: PathBuf,
}

enum CliError {
    /// Unreadable files, parse failures, bad flags.
    Input(String),
    /// The analysis itself cannot proceed (fit failure, infeasibility,
    /// mismatched devices).
    Analysis(String),
}

impl CliError {
    fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    fn analysis(e: impl std::fmt::Display) -> Self {
        CliError::Analysis(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Advise(args) => cmd_advise(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Crossover(args) => cmd_crossover(args),
        Command::Plotdata(args) => cmd_plotdata(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Analysis(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolve_settings(opts: &CommonOpts) -> Result<Settings, CliError> {
    let file: FileConfig = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let defaults = FitConfig::default();
    let fit = FitConfig {
        sample_fraction: opts
            .sample_fraction
            .or(file.sample_fraction)
            .unwrap_or(defaults.sample_fraction),
        knee_r2_threshold: opts
            .knee_r2
            .or(file.knee_r2)
            .unwrap_or(defaults.knee_r2_threshold),
        min_points: opts
            .min_points
            .or(file.min_points)
            .unwrap_or(defaults.min_points),
        rng_seed: opts.seed.or(file.seed).unwrap_or(defaults.rng_seed),
    };
    let frag_original = opts.frag_original.or(file.frag_original);
    let frag_mom = opts.frag_mom.or(file.frag_mom);
    let fragmentation = match (frag_original, frag_mom) {
        (None, None) => None,
        (f0, fm) => Some(
            FragmentationConfig::new(f0.unwrap_or(1.0), fm.unwrap_or(1.0))
                .map_err(CliError::input)?,
        ),
    };
    let format = opts.format.unwrap_or(match file.format.as_deref() {
        Some("json") => FileFormat::Json,
        Some("csv") | None => FileFormat::Csv,
        Some(other) => return Err(CliError::Input(format!("unknown format {other:?}"))),
    });
    let out = opts
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Settings {
        fit,
        fragmentation,
        format,
        out,
    })
}

// ---------------------------------------------------------------- fit ----

#[derive(Args)]
struct FitArgs {
    /// Profile files (.csv or .json).
    #[arg(required = true)]
    profiles: Vec<PathBuf>,
    #[command(flatten)]
    common: CommonOpts,
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let settings = resolve_settings(&args.common)?;
    ensure_out_dir(&settings.out)?;
    let mut models = Vec::new();
    for path in &args.profiles {
        let series = read_profile(path)?;
        for warning in validate_series(&series) {
            eprintln!("warning: {}: {warning}", path.display());
        }
        let model = fit_cost_model(&series, &settings.fit).map_err(CliError::analysis)?;
        let out_path = settings.out.join(format!(
            "{}_{}.model.json",
            series.model_id(),
            series.method_id()
        ));
        write_text(&out_path, &to_json(&model)?)?;
        println!("wrote {}", out_path.display());
        models.push(model);
    }
    print!("{}", render_fit_table(&models));
    Ok(())
}

// ------------------------------------------------------------- advise ----

#[derive(Args)]
struct AdviseArgs {
    /// Baseline input: a fitted model JSON or a profile to fit.
    #[arg(long)]
    baseline: PathBuf,
    /// Memory-saver inputs: fitted model JSONs or profiles to fit.
    #[arg(required = true)]
    moms: Vec<PathBuf>,
    #[command(flatten)]
    common: CommonOpts,
}

fn cmd_advise(args: AdviseArgs) -> Result<(), CliError> {
    let settings = resolve_settings(&args.common)?;
    ensure_out_dir(&settings.out)?;
    let baseline = read_model_or_fit(&args.baseline, &settings.fit)?;
    let mut moms = Vec::new();
    let mut inputs = vec![args.baseline.display().to_string()];
    for path in &args.moms {
        moms.push(read_model_or_fit(path, &settings.fit)?);
        inputs.push(path.display().to_string());
    }
    let report = build_advisory_report(
        &baseline,
        &moms,
        settings.fragmentation,
        inputs,
        Some(settings.fit),
    )
    .map_err(CliError::analysis)?;
    let out_path = settings.out.join("advisory.report.json");
    write_text(&out_path, &to_json(&report)?)?;
    print!("{}", render_advisory(&report));
    println!("wrote {}", out_path.display());
    Ok(())
}

// ----------------------------------------------------------- simulate ----

#[derive(Args)]
struct SimulateArgs {
    /// Workload spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Memory-saver transform JSONs, one profile per transform.
    #[arg(long = "mom")]
    moms: Vec<PathBuf>,
    /// Batch sizes: `start:end:step` or a comma-separated list.
    #[arg(long)]
    batches: String,
    /// Model label for the generated series.
    #[arg(long, default_value = "synthetic")]
    model_id: String,
    #[command(flatten)]
    common: CommonOpts,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let settings = resolve_settings(&args.common)?;
    ensure_out_dir(&settings.out)?;
    let mut spec: WorkloadSpec = read_json(&args.spec)?;
    if let Some(seed) = args.common.seed {
        spec.rng_seed = seed;
    }
    spec.validate()
        .map_err(|e| CliError::Input(format!("{}: {e}", args.spec.display())))?;
    let batches = parse_batches(&args.batches)?;

    let mut runs = vec![("original".to_string(), spec.clone())];
    for path in &args.moms {
        let transform: MomTransform = read_json(path)?;
        let shifted = apply_mom(&spec, &transform).map_err(CliError::input)?;
        runs.push((transform.name.clone(), shifted));
    }

    for (method, workload) in &runs {
        let series = generate_profile(workload, &batches, &args.model_id, method)
            .map_err(CliError::analysis)?;
        let (name, text) = match settings.format {
            FileFormat::Csv => (
                format!("{}_{}.profile.csv", args.model_id, method),
                papaya::profile::serialize_csv(&series),
            ),
            FileFormat::Json => (
                format!("{}_{}.profile.json", args.model_id, method),
                papaya::profile::serialize_json(&series),
            ),
        };
        let out_path = settings.out.join(name);
        write_text(&out_path, &text)?;
        println!("wrote {}", out_path.display());
    }
    Ok(())
}

// ---------------------------------------------------------- crossover ----

#[derive(Args)]
struct CrossoverArgs {
    /// Scaling mode.
    #[arg(long, value_enum)]
    mode: CrossoverMode,
    /// Law JSON: `{"original": .., "mom": ..}` for depth/width, a
    /// multi-GPU law for gpus.
    #[arg(long)]
    law: PathBuf,
    /// Baseline model JSON (gpus mode).
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Memory-saver model JSON (gpus mode).
    #[arg(long)]
    mom: Option<PathBuf>,
    /// Largest depth/width/GPU count to search. Defaults to 1024 for
    /// depth/width and to the law's configured count for gpus.
    #[arg(long)]
    max_size: Option<u32>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CrossoverMode {
    Depth,
    Width,
    Gpus,
}

fn cmd_crossover(args: CrossoverArgs) -> Result<(), CliError> {
    match args.mode {
        CrossoverMode::Depth => {
            let pair: DepthLawPair = read_json(&args.law)?;
            let max_size = args.max_size.unwrap_or(1024);
            let result = crossover_depth(&pair, max_size).map_err(CliError::analysis)?;
            match result.size {
                Some(d) => println!("smallest beneficial depth: {d}"),
                None => println!("no beneficial depth up to {max_size}"),
            }
            if let Some(root) = result.continuous_root {
                println!("continuous score/point crossing: {root:.3}");
            }
            println!(
                "{:<8} {:>10} {:>10} {:>11}",
                "depth", "score", "point", "beneficial"
            );
            for depth in sweep_sizes(max_size) {
                let (baseline, mom) = scale_depth(&pair, depth).map_err(CliError::analysis)?;
                let (score, _) = score_at_depth(&pair, depth).map_err(CliError::analysis)?;
                let point =
                    (baseline.device_memory - baseline.memory.beta) / baseline.latency.delta;
                let beneficial = match papaya::verdict(&baseline, &mom) {
                    Ok(v) => {
                        if v.by_necessity {
                            "necessity".to_string()
                        } else {
                            v.beneficial.to_string()
                        }
                    }
                    Err(_) => "infeasible".to_string(),
                };
                println!("{depth:<8} {score:>10.3} {point:>10.3} {beneficial:>11}");
            }
        }
        CrossoverMode::Width => {
            let pair: WidthLawPair = read_json(&args.law)?;
            let max_size = args.max_size.unwrap_or(1024);
            let result = crossover_width(&pair, max_size).map_err(CliError::analysis)?;
            match result.size {
                Some(w) => println!("smallest beneficial width: {w}"),
                None => println!("no beneficial width up to {max_size}"),
            }
            if let Some(root) = result.continuous_root {
                println!("continuous score/point crossing: {root:.3}");
            }
            println!(
                "{:<8} {:>12} {:>12} {:>11}",
                "width", "v_original", "v_mom", "beneficial"
            );
            for width in sweep_sizes(max_size) {
                match width_continuous_throughputs(&pair, width) {
                    Ok((v0, vm)) => {
                        println!("{width:<8} {v0:>12.3} {vm:>12.3} {:>11}", vm >= v0);
                    }
                    Err(_) => println!("{width:<8} {:>12} {:>12} {:>11}", "-", "-", "infeasible"),
                }
            }
        }
        CrossoverMode::Gpus => {
            let law: MultiGpuLaw = read_json(&args.law)?;
            let baseline_path = args
                .baseline
                .as_ref()
                .ok_or(CliError::Input("gpus mode needs --baseline".into()))?;
            let mom_path = args
                .mom
                .as_ref()
                .ok_or(CliError::Input("gpus mode needs --mom".into()))?;
            let baseline: CostModel = read_json(baseline_path)?;
            let mom: CostModel = read_json(mom_path)?;
            let max = args.max_size.unwrap_or(law.gpu_count).min(64);
            let sweep = sweep_gpus(&baseline, &mom, &law, max).map_err(CliError::analysis)?;
            let flip = sweep.iter().find(|e| e.verdict.beneficial).map(|e| e.gpus);
            match flip {
                Some(n) => println!("beneficial from {n} GPUs"),
                None => println!("not beneficial up to {max} GPUs"),
            }
            let (score, _) = papaya_score(&baseline, &mom);
            println!("score (GPU-count independent): {score:.3}");
            println!(
                "{:<6} {:>9} {:>10} {:>12} {:>12} {:>11}",
                "gpus", "delta s", "point", "v_original", "v_mom", "beneficial"
            );
            for entry in &sweep {
                let v0 = entry
                    .verdict
                    .baseline_prediction
                    .map_or("-".into(), |p| format!("{:.3}", p.max_throughput));
                let vm = entry
                    .verdict
                    .mom_prediction
                    .map_or("-".into(), |p| format!("{:.3}", p.max_throughput));
                println!(
                    "{:<6} {:>9.3} {:>10.3} {:>12} {:>12} {:>11}",
                    entry.gpus, entry.delta, entry.verdict.point, v0, vm, entry.verdict.beneficial
                );
            }
        }
    }
    Ok(())
}

/// Log-ish spread of sizes for the sweep table.
fn sweep_sizes(max: u32) -> Vec<u32> {
    let mut sizes = vec![1u32];
    let mut s = 1u32;
    while s < max {
        s = (s * 2).min(max);
        sizes.push(s);
    }
    sizes.dedup();
    sizes
}

// ----------------------------------------------------------- plotdata ----

#[derive(Args)]
struct PlotdataArgs {
    /// Fitted model JSONs.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Optional profiles to join as measured columns (matched by model and
    /// method labels).
    #[arg(long = "profile")]
    profiles: Vec<PathBuf>,
    #[command(flatten)]
    common: CommonOpts,
}

fn cmd_plotdata(args: PlotdataArgs) -> Result<(), CliError> {
    let settings = resolve_settings(&args.common)?;
    ensure_out_dir(&settings.out)?;
    let mut profiles = Vec::new();
    for path in &args.profiles {
        profiles.push(read_profile(path)?);
    }
    for path in &args.models {
        let model: CostModel = read_json(path)?;
        let matching = profiles
            .iter()
            .find(|s| s.model_id() == model.model_id && s.method_id() == model.method_id);
        let data = plot_data(&model, matching);
        match settings.format {
            FileFormat::Json => {
                let out_path = settings
                    .out
                    .join(format!("{}_{}.plot.json", model.model_id, model.method_id));
                write_text(&out_path, &to_json(&data)?)?;
                println!("wrote {}", out_path.display());
            }
            FileFormat::Csv => {
                for (kind, text) in plot_csv_files(&data) {
                    let out_path = settings.out.join(format!(
                        "{}_{}_{kind}.plot.csv",
                        model.model_id, model.method_id
                    ));
                    write_text(&out_path, &text)?;
                    println!("wrote {}", out_path.display());
                }
            }
        }
    }
    Ok(())
}

fn plot_csv_files(data: &PlotData) -> Vec<(&'static str, String)> {
    let mut memory = String::from("batch,measured_gb,predicted_gb\n");
    for row in &data.memory {
        memory.push_str(&format!(
            "{},{},{}\n",
            row.batch,
            row.measured.map(|v| v.to_string()).unwrap_or_default(),
            row.predicted
        ));
    }
    let mut latency = String::from("batch,measured_s,predicted_s\n");
    for row in &data.latency {
        latency.push_str(&format!(
            "{},{},{}\n",
            row.batch,
            row.measured.map(|v| v.to_string()).unwrap_or_default(),
            row.predicted
        ));
    }
    let mut throughput = String::from("batch,records_per_second,at_predicted_max\n");
    for row in &data.throughput {
        throughput.push_str(&format!(
            "{},{},{}\n",
            row.batch, row.records_per_second, row.at_predicted_max
        ));
    }
    vec![
        ("memory", memory),
        ("latency", latency),
        ("throughput", throughput),
    ]
}

// -------------------------------------------------------------- shared ----

fn read_profile(path: &Path) -> Result<ProfileSeries, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ProfileFormat::Json,
        _ => ProfileFormat::Csv,
    };
    parse_profile(&text, format).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Accept either a fitted model JSON or a profile file, fitting on the fly.
fn read_model_or_fit(path: &Path, config: &FitConfig) -> Result<CostModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if let Ok(model) = serde_json::from_str::<CostModel>(&text) {
        return Ok(model);
    }
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ProfileFormat::Json,
        _ => ProfileFormat::Csv,
    };
    let series = parse_profile(&text, format)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    fit_cost_model(&series, config).map_err(CliError::analysis)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(CliError::input)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))
}

fn parse_batches(spec: &str) -> Result<Vec<u32>, CliError> {
    let bad = |_| CliError::Input(format!("bad batch spec {spec:?}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Input(format!(
                "bad batch spec {spec:?}, expected start:end:step"
            )));
        }
        let start: u32 = parts[0].parse().map_err(bad)?;
        let end: u32 = parts[1].parse().map_err(bad)?;
        let step: u32 = parts[2].parse().map_err(bad)?;
        if start == 0 || step == 0 || end < start {
            return Err(CliError::Input(format!("bad batch spec {spec:?}")));
        }
        Ok((start..=end).step_by(step as usize).collect())
    } else {
        spec.split(',')
            .map(|t| t.trim().parse::<u32>().map_err(bad))
            .collect()
    }
}
