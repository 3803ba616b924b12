//! `imac-sim`: evaluate, export and explore IMAC crossbar designs.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 numerical failure,
//! 3 internal invariant breach (netlist round-trip mismatch).

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use imac_core::circuit::{export_spice, parse_spice_subset, CircuitGraph, NetlistSkeleton};
use imac_core::dataio::{load_weights, save_weights, write_idx_images, write_idx_labels, Dataset, WeightsBundle};
use imac_core::harness::{
    run_eval, sweep, train_fixture, BlobSpec, HarnessError, SimOptions, SweepAxis, SweepResult,
};
use imac_core::params::{derive_partitions, load_config, HyperParams, Technology};

#[derive(Parser, Debug)]
#[command(name = "imac-sim", version, about = "Circuit-level simulator for memristive IMAC crossbars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score a test set on the simulated circuit.
    Simulate(SimulateArgs),
    /// Write the SPICE netlist of the circuit and verify it re-parses.
    ExportNetlist(ExportArgs),
    /// Evaluate one configuration per entry of an axis.
    Sweep(SweepArgs),
    /// Print the smallest partitioning per subarray size.
    DerivePartitions(PartitionArgs),
    /// Train a small network on synthetic blobs and write it with its data.
    TrainFixture(TrainArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Precision {
    F64,
    F32,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "PATH")]
    weights: PathBuf,
    #[arg(long, value_name = "PATH")]
    images: PathBuf,
    #[arg(long, value_name = "PATH")]
    labels: PathBuf,
    /// Samples to evaluate from the start of the set [default: all].
    #[arg(long, value_name = "INT")]
    n_samples: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads, 0 = all cores.
    #[arg(long, value_name = "INT", default_value_t = 0)]
    threads: usize,
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Include (predicted, label, power) per sample in JSON output.
    #[arg(long)]
    per_sample: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "PATH")]
    weights: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// `technology[:MRAM,PCM,..]`, `arrays:32,64,..` or `partitions:H/V;H/V`
    /// with comma-separated per-layer counts.
    #[arg(long, value_name = "SPEC")]
    axis: String,
    /// Array sizes for `--axis arrays` when the spec lists none.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    arrays: Vec<usize>,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[arg(long, value_name = "LIST", value_delimiter = ',', required = true)]
    topology: Vec<usize>,
    #[arg(long, value_name = "LIST", value_delimiter = ',', required = true)]
    arrays: Vec<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_name = "LIST", value_delimiter = ',', required = true)]
    topology: Vec<usize>,
    #[arg(long, value_name = "INT", default_value_t = 7)]
    seed: u64,
    #[arg(long, value_name = "INT", default_value_t = 60)]
    epochs: usize,
    #[arg(long, value_name = "FLOAT", default_value_t = 0.1)]
    lr: f64,
    /// Neuron and encoding settings; its topology must match `--topology`.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Weights manifest to write; binaries and IDX data go next to it.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

/// A failed command: message for stderr and the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn invariant(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_numerical() {
            Failure::numerical(e.to_string())
        } else {
            Failure::input(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_config(path: &Path) -> Result<HyperParams, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    load_config(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn read_weights(path: &Path) -> Result<WeightsBundle, Failure> {
    load_weights(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Failure::input(e.to_string()))
        }
    }
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn set_threads(threads: usize) -> CmdResult {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::input(format!("--threads: {e}")))?;
    }
    Ok(())
}

struct Loaded {
    params: HyperParams,
    weights: WeightsBundle,
    data: Dataset,
    n_samples: usize,
}

fn load_run(run: &RunArgs) -> Result<Loaded, Failure> {
    set_threads(run.threads)?;
    let params = read_config(&run.config)?;
    let weights = read_weights(&run.weights)?;
    let data = Dataset::load(&run.images, &run.labels).map_err(|e| Failure::input(e.to_string()))?;
    let n_samples = run.n_samples.unwrap_or(data.n_samples());
    Ok(Loaded { params, weights, data, n_samples })
}

fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let l = load_run(&args.run)?;
    let opts = SimOptions { per_sample: args.per_sample, ..SimOptions::default() };
    let report = match args.run.precision {
        Precision::F64 => run_eval::<f64>(&l.params, &l.weights, &l.data, l.n_samples, &opts),
        Precision::F32 => run_eval::<f32>(&l.params, &l.weights, &l.data, l.n_samples, &opts),
    }?;
    let text = match args.run.format {
        Format::Json => report.to_json(),
        Format::Table => report.to_table(),
    };
    emit(args.run.out.as_deref(), &with_newline(text))
}

fn cmd_export_netlist(args: &ExportArgs) -> CmdResult {
    let params = read_config(&args.config)?;
    let weights = read_weights(&args.weights)?;
    params.validate().map_err(|e| Failure::input(e.to_string()))?;
    let graph = CircuitGraph::<f64>::build(&params, &weights, Default::default())
        .map_err(|e| Failure::input(e.to_string()))?;
    let text = export_spice(&graph, None);
    let parsed = parse_spice_subset(&text).map_err(|e| Failure::invariant(format!("exported netlist does not parse: {e}")))?;
    if parsed != NetlistSkeleton::from_graph(&graph) {
        return Err(Failure::invariant("exported netlist does not match the circuit after re-parsing"));
    }
    emit(args.out.as_deref(), &text)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| Failure::input(format!("bad {what} entry {x:?}"))))
        .collect()
}

fn parse_axis(spec: &str, arrays: &[usize]) -> Result<SweepAxis, Failure> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let rest = rest.trim();
    match kind.trim().to_ascii_lowercase().as_str() {
        "technology" | "technologies" | "tech" => {
            if rest.is_empty() {
                Ok(SweepAxis::Technologies(Technology::ALL.to_vec()))
            } else {
                let techs = rest
                    .split(',')
                    .map(|t| t.parse::<Technology>().map_err(|e| Failure::input(e.to_string())))
                    .collect::<Result<_, _>>()?;
                Ok(SweepAxis::Technologies(techs))
            }
        }
        "arrays" | "array" | "array-size" | "array_size" => {
            let sizes = if rest.is_empty() { arrays.to_vec() } else { parse_list(rest, "array size")? };
            if sizes.is_empty() {
                return Err(Failure::input("--axis arrays needs sizes, e.g. arrays:32,64 or --arrays 32,64"));
            }
            Ok(SweepAxis::ArraySizes(sizes))
        }
        "partitions" | "partition" => {
            let pairs = rest
                .split(';')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    let (h, v) = p
                        .split_once('/')
                        .ok_or_else(|| Failure::input(format!("partition entry {p:?} must be H_P/V_P")))?;
                    Ok((parse_list(h, "h_p")?, parse_list(v, "v_p")?))
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            if pairs.is_empty() {
                return Err(Failure::input("--axis partitions needs at least one H_P/V_P entry"));
            }
            Ok(SweepAxis::Partitions(pairs))
        }
        _ => Err(Failure::input(format!("unknown sweep axis {spec:?}; use technology, arrays or partitions"))),
    }
}

fn cmd_sweep(args: &SweepArgs) -> CmdResult {
    let axis = parse_axis(&args.axis, &args.arrays)?;
    let l = load_run(&args.run)?;
    let opts = SimOptions { per_sample: false, ..SimOptions::default() };
    let result: SweepResult = match args.run.precision {
        Precision::F64 => sweep::<f64>(&l.params, &axis, &l.weights, &l.data, l.n_samples, &opts),
        Precision::F32 => sweep::<f32>(&l.params, &axis, &l.weights, &l.data, l.n_samples, &opts),
    }?;
    let text = match args.run.format {
        Format::Json => result.to_json(),
        Format::Table => result.to_table(),
    };
    emit(args.run.out.as_deref(), &with_newline(text))
}

fn cmd_derive_partitions(args: &PartitionArgs) -> CmdResult {
    let rows = args
        .arrays
        .iter()
        .map(|&n| {
            derive_partitions(&args.topology, n, n, true)
                .map(|p| (n, p))
                .map_err(|e| Failure::input(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let text = match args.format {
        Format::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|(n, p)| {
                    serde_json::json!({
                        "array": format!("{n}x{n}"),
                        "h_p": p.h_p,
                        "v_p": p.v_p,
                        "tiles": 2 * p.tile_count(),
                    })
                })
                .collect();
            serde_json::to_string_pretty(&serde_json::json!({ "topology": args.topology, "rows": rows }))
                .expect("json value serializes")
        }
        Format::Table => {
            let cells: Vec<[String; 4]> = rows
                .iter()
                .map(|(n, p)| {
                    [format!("{n}x{n}"), format!("{:?}", p.h_p), format!("{:?}", p.v_p), (2 * p.tile_count()).to_string()]
                })
                .collect();
            let header = ["array", "H_P", "V_P", "tiles"].map(String::from);
            let mut widths = [0usize; 4];
            for row in std::iter::once(&header).chain(&cells) {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.len());
                }
            }
            let mut out = String::new();
            for row in std::iter::once(&header).chain(&cells) {
                let line: Vec<String> = row.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
                let _ = writeln!(out, "{}", line.join("  ").trim_end());
            }
            out
        }
    };
    emit(args.out.as_deref(), &with_newline(text))
}

fn cmd_train_fixture(args: &TrainArgs) -> CmdResult {
    let params = match &args.config {
        Some(path) => {
            let p = read_config(path)?;
            if p.topology != args.topology {
                return Err(Failure::input(format!(
                    "config topology {:?} differs from --topology {:?}",
                    p.topology, args.topology
                )));
            }
            p
        }
        None => HyperParams::for_topology(&args.topology).map_err(|e| Failure::input(e.to_string()))?,
    };
    let cfg = imac_core::harness::FixtureConfig {
        blobs: BlobSpec::for_topology(&args.topology),
        seed: args.seed,
        epochs: args.epochs,
        lr: args.lr,
    };
    let fx = train_fixture(&cfg, &params)?;

    let io_err = |e: &dyn std::fmt::Display| Failure::input(format!("{}: {e}", args.out.display()));
    save_weights(&fx.weights, &args.out).map_err(|e| io_err(&e))?;
    let dir = args.out.parent().unwrap_or(Path::new("."));
    let stem = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("fixture");
    for (split, data) in [("train", &fx.train), ("test", &fx.test)] {
        fs::write(dir.join(format!("{stem}.{split}-images.idx")), write_idx_images(&data.images))
            .map_err(|e| io_err(&e))?;
        fs::write(dir.join(format!("{stem}.{split}-labels.idx")), write_idx_labels(&data.labels))
            .map_err(|e| io_err(&e))?;
    }
    let mut config_path = dir.join(stem);
    config_path.set_extension("config.json");
    fs::write(&config_path, params.to_json() + "\n").map_err(|e| io_err(&e))?;
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::ExportNetlist(a) => cmd_export_netlist(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::DerivePartitions(a) => cmd_derive_partitions(a),
        Command::TrainFixture(a) => cmd_train_fixture(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("imac-sim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
