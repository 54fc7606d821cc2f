use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use neurolgp::data::{generate_synthetic, split_dataset, write_idx, SplitFractions, SyntheticSpec};
use neurolgp::decoder::{decode, NetworkConfig, Shape};
use neurolgp::engine::{idx_paths, run_experiment, Mode, RunConfig, SPLIT_NAMES};
use neurolgp::genotype::{mark_effective, repair, Genotype, GenotypeConfig};
use neurolgp::report::write_reports;
use neurolgp::rng::{derive_seed, tag};
use neurolgp::rundir::{read_run_dir, write_run_dir};
use neurolgp::Error;

#[derive(Parser)]
#[command(name = "neurolgp", version, about = "Neuroevolution of multi-branch CNNs encoded as linear genetic programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its result directory.
    Run(RunArgs),
    /// Decode a genotype file into a network graph.
    Decode(DecodeArgs),
    /// Build report CSVs from finished run directories.
    Analyze(AnalyzeArgs),
    /// Write a synthetic dataset as IDX files, one pair per split.
    SynthData(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, expensive, surrogate or surrogate_ps; overrides the config.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the number of available cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    genotype: PathBuf,
    /// Input shape as HxWxC.
    #[arg(long, default_value = "16x16x1")]
    input: Shape,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 512)]
    max_channels: usize,
    #[arg(long, default_value_t = 7)]
    registers: usize,
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Reject genotypes that never write r0 instead of redirecting the last
    /// instruction.
    #[arg(long)]
    no_repair: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Report budgets without a reduction column, so no expensive run is
    /// needed.
    #[arg(long)]
    no_reference: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthetic spec; the default is a 2-class 16x16 set.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    /// Exit code 2.
    Config(String),
    /// Exit code 3.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) => m,
        }
    }
}

fn config_error(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_error(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_json(&read_text(path)?)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(config_error)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    let evaluator = config.build_evaluator().map_err(config_error)?;
    info!(
        "{} run, seed {}, {} on {workers} worker(s)",
        config.mode,
        config.seed,
        config.dataset_name()
    );
    let output = run_experiment(&config, evaluator.as_ref(), workers).map_err(runtime_error)?;
    write_run_dir(&args.out, &output).map_err(runtime_error)?;
    let r = &output.result;
    if let Some(c) = &r.champion {
        println!(
            "champion: generation {} index {} fitness {:.4} report accuracy {:.4}",
            c.generation, c.index, c.fitness, c.report_accuracy
        );
    }
    println!("epochs charged: {} (evolution {})", r.budget.total(), r.budget.evolution());
    println!("wrote {}", args.out.display());
    Ok(())
}

fn decode_cmd(args: DecodeArgs) -> Result<(), Failure> {
    let text = read_text(&args.genotype)?;
    let gcfg = GenotypeConfig {
        min_len: 1,
        max_len: usize::MAX,
        registers: args.registers,
        ..GenotypeConfig::default()
    };
    let at = |e: Error| Failure::Config(format!("{}: {e}", args.genotype.display()));
    let mut g = Genotype::parse(&text, &gcfg).map_err(at)?;
    if !args.no_repair {
        g = repair(g);
    }
    let analysis = mark_effective(&g).map_err(at)?;
    let network = NetworkConfig {
        num_classes: args.classes,
        max_channels: args.max_channels,
        ..NetworkConfig::default()
    };
    let graph = decode(&g, args.input, &network).map_err(at)?;
    graph.validate(args.max_channels).map_err(at)?;

    println!("effective instructions: {} of {}", analysis.effective.len(), g.len());
    for &pos in &analysis.effective {
        println!("  {pos:>3}  {}", g.instructions[pos]);
    }
    for (pos, reg) in &analysis.input_bound_reads {
        println!("input read: instruction {pos} register r{reg}");
    }
    let stats = graph.stats();
    println!(
        "layer_count {} concat_count {} concat_fraction {}",
        stats.layer_count, stats.concat_count, stats.concat_fraction
    );
    if let Some(path) = &args.dot {
        write_text(path, &graph.to_dot())?;
    }
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&graph.to_json()).expect("graph json");
        write_text(path, &(json + "\n"))?;
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let runs = args
        .runs
        .iter()
        .map(|dir| read_run_dir(dir))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime_error)?;
    write_reports(&runs, &args.out, !args.no_reference).map_err(|e| match e {
        Error::Config(_) => config_error(e),
        other => runtime_error(other),
    })?;
    println!("wrote reports for {} run(s) to {}", runs.len(), args.out.display());
    Ok(())
}

fn synth_data(args: SynthArgs) -> Result<(), Failure> {
    let spec: SyntheticSpec = match &args.spec {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => SyntheticSpec::default(),
    };
    let data = generate_synthetic(&spec, derive_seed(args.seed, &[tag::DATA])).map_err(config_error)?;
    let splits = split_dataset(&data, SplitFractions::default(), derive_seed(args.seed, &[tag::SPLIT]))
        .map_err(config_error)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", args.out.display())))?;
    for (name, part) in SPLIT_NAMES
        .iter()
        .zip([&splits.train, &splits.validation, &splits.eval, &splits.report])
    {
        let (images, labels) = idx_paths(&args.out, name);
        write_idx(part, &images, &labels).map_err(runtime_error)?;
        println!("{name}: {} images", part.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NEUROLGP_LOG", "info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Analyze(a) => analyze(a),
        Command::SynthData(a) => synth_data(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
