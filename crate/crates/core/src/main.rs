use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gapent::bounds;
use gapent::capacity::{self, Convention};
use gapent::classify;
use gapent::featuregen::{
    plant_labeled_dataset, Envelope, Generator, HeavyTailSpec, LabeledDataset, PlantOptions,
};
use gapent::harness::acceptance::{self, VerifyOptions};
use gapent::harness::{self, EntropySweep, Experiment, ExperimentConfig, SCHEMA_VERSION};
use gapent::spectral::{self, Graph};
use gapent::{Error, NormSpec, RngStream};

#[derive(Parser)]
#[command(
    name = "gapent",
    version,
    about = "Capacity of gap-tolerant classifiers on heavy-tailed and spectral data"
)]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file, or output directory for `experiment run`. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a planted labeled dataset from a heavy-tailed model.
    Generate(GenerateArgs),
    /// Diffusion-map embedding of a graph.
    Embed(EmbedArgs),
    /// Train the maximum-margin classifier on a dataset CSV.
    Train(TrainArgs),
    /// Monte-Carlo annealed entropy against the theoretical bounds.
    Entropy(EntropyArgs),
    /// Search for the largest shattered set in a ball.
    Vcdim(VcdimArgs),
    /// Evaluate closed-form bounds.
    Bounds(BoundsArgs),
    /// Run experiment configs.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Execute a config file and write config.json, results.csv and summary.json.
    Run { config: PathBuf },
    /// Print a default config for an experiment kind.
    Template { kind: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Magnitude,
    Sparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvelopeArg {
    Exact,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Strict,
    Separating,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "magnitude")]
    model: Model,
    /// Number of coordinates.
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Envelope constant.
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "exact")]
    envelope: EnvelopeArg,
    /// Generator as JSON; overrides the model flags.
    #[arg(long)]
    generator: Option<PathBuf>,
}

impl ModelArgs {
    fn generator(&self) -> Result<Generator, Error> {
        if let Some(path) = &self.generator {
            let g: Generator = serde_json::from_str(&fs::read_to_string(path)?)?;
            g.validate()?;
            return Ok(g);
        }
        let spec = match self.model {
            Model::Magnitude => HeavyTailSpec::magnitude(
                self.n,
                self.c,
                self.alpha,
                match self.envelope {
                    EnvelopeArg::Exact => Envelope::Exact,
                    EnvelopeArg::Uniform => Envelope::Uniform,
                },
            ),
            Model::Sparse => HeavyTailSpec::sparse(self.n, self.c, self.alpha),
        };
        let g = Generator::HeavyTail(spec);
        g.validate()?;
        Ok(g)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of samples.
    #[arg(long, default_value_t = 100)]
    ell: usize,
    /// Planted margin.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Draw the planted offset from [-0.5, 0.5] instead of using 0.
    #[arg(long)]
    random_offset: bool,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
}

#[derive(Args)]
struct EmbedArgs {
    /// Edge list file: `u v [weight]` lines, optionally `n <count>`.
    #[arg(long, conflicts_with_all = ["vertices", "edge_probability"])]
    graph: Option<PathBuf>,
    /// Draw G(n, p) with this many vertices.
    #[arg(long)]
    vertices: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    edge_probability: f64,
    /// Diffusion time.
    #[arg(long, default_value_t = 1)]
    k: u32,
    /// Exclude the trivial top eigenfunction.
    #[arg(long)]
    drop_top: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV with columns `x_1..x_n,label`.
    data: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
}

#[derive(Args)]
struct EntropyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,10,12")]
    ells: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1")]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, value_enum, default_value = "strict")]
    convention: ConventionArg,
}

#[derive(Args)]
struct VcdimArgs {
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct BoundsArgs {
    /// Bound name; see `--list`.
    #[arg(required_unless_present_any = ["grid", "list"])]
    name: Option<String>,
    /// Parameters as `key=value`.
    #[arg(short = 'P', long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// CSV with a `name` column and one column per parameter; one bound per row.
    #[arg(long, conflicts_with = "name")]
    grid: Option<PathBuf>,
    /// List the available bounds.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let v = parse_number(v).ok_or_else(|| format!("{v:?} is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_number(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "Infinity" => Some(f64::INFINITY),
        t => t.parse().ok(),
    }
}

/// Failure modes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
    Criterion,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Parse(_) | Error::Config { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn output(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn norm_of(p: f64) -> Result<NormSpec, Error> {
    NormSpec::lp(p)
}

fn generate(cli: &Cli, a: &GenerateArgs) -> CliResult {
    let gen = a.model.generator()?;
    let opts = PlantOptions {
        random_offset: a.random_offset,
        norm: norm_of(a.p)?,
    };
    let mut rng = RngStream::new(cli.seed.unwrap_or(0), 0);
    let data = plant_labeled_dataset(&gen, a.ell, a.delta, opts, &mut rng)?;
    data.write_csv(output(&cli.out)?)?;
    Ok(())
}

fn embed(cli: &Cli, a: &EmbedArgs) -> CliResult {
    let graph = match (&a.graph, a.vertices) {
        (Some(path), _) => Graph::parse_edge_list(&fs::read_to_string(path)?)?,
        (None, Some(n)) => spectral::erdos_renyi(
            n,
            a.edge_probability,
            &mut RngStream::new(cli.seed.unwrap_or(0), 0),
        )?,
        (None, None) => return Err(Failure::Usage("give --graph or --vertices".into())),
    };
    let emb = spectral::diffusion_map_with(&graph, a.k, a.drop_top)?;
    emb.write_csv(output(&cli.out)?)?;
    eprintln!(
        "mean squared norm {:.12}, eigenvalue moment {:.12}",
        spectral::mean_squared_norm(&emb),
        spectral::eigenvalue_moment(&emb)
    );
    Ok(())
}

fn train(cli: &Cli, a: &TrainArgs) -> CliResult {
    let norm = norm_of(a.p)?;
    let file = fs::File::open(&a.data)
        .map_err(|e| Failure::Usage(format!("{}: {e}", a.data.display())))?;
    let data = LabeledDataset::read_csv(file, norm, &a.data.display().to_string())?;
    let t = classify::max_margin_train(&data)?;
    let mut out = output(&cli.out)?;
    writeln!(out, "{}", classify::classifier_to_json(&t.classifier)?)?;
    eprintln!(
        "margin {:.12e}, duality gap {:.3e}, {} iterations",
        t.margin, t.duality_gap, t.iterations
    );
    Ok(())
}

fn entropy(cli: &Cli, a: &EntropyArgs) -> CliResult {
    let sweep = EntropySweep {
        generator: a.model.generator()?,
        ells: a.ells.clone(),
        deltas: a.deltas.clone(),
        trials: a.trials,
        p: a.p,
        convention: match a.convention {
            ConventionArg::Strict => Convention::Strict,
            ConventionArg::Separating => Convention::Separating,
        },
    };
    let config = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        seed: cli.seed.unwrap_or(0),
        workers: cli.workers,
        output: None,
        experiment: Experiment::EntropySweep(sweep),
    };
    let config = ExperimentConfig::from_json(&config.to_json()?)?;
    let record = harness::run(&config, cli.workers)?;
    record.write_table(output(&cli.out)?, false)?;
    for r in record.rows.iter().filter(|r| !r.pass) {
        eprintln!("ell={} delta={}: {}", r.cells[0], r.cells[1], r.status);
    }
    if record.all_passed {
        Ok(())
    } else {
        Err(Failure::Criterion)
    }
}

fn vcdim(cli: &Cli, a: &VcdimArgs) -> CliResult {
    let norm = norm_of(a.p)?;
    let mut rng = RngStream::new(cli.seed.unwrap_or(0), 0);
    let r = capacity::vc_search(a.dim, a.radius, a.delta, norm, a.budget, &mut rng)?;
    let bound = if norm.is_euclidean() {
        Some(bounds::vc_bound_hilbert(a.radius, a.delta)? as f64)
    } else if a.p > 1.0 && a.p <= 2.0 {
        Some(bounds::vc_bound_banach(a.radius, a.delta, a.p, 1.0)?)
    } else {
        None
    };
    let mut out = output(&cli.out)?;
    let doc = json!({
        "m": r.m,
        "bound": bound,
        "candidates_tried": r.candidates_tried,
        "witness": r.witness,
    });
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&doc).map_err(Error::from)?
    )?;
    match bound {
        Some(b) if r.m as f64 > b => Err(Failure::Criterion),
        _ => Ok(()),
    }
}

fn bounds_cmd(cli: &Cli, a: &BoundsArgs) -> CliResult {
    let mut out = output(&cli.out)?;
    if a.list {
        for n in bounds::BOUND_NAMES {
            writeln!(out, "{n}")?;
        }
        return Ok(());
    }
    if let Some(path) = &a.grid {
        return bounds_grid(path, &mut out);
    }
    let name = a.name.as_deref().unwrap_or_default();
    let params: BTreeMap<String, f64> = a.params.iter().cloned().collect();
    let report = bounds::report(name, &params)?;
    match a.format {
        Format::Json => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&report).map_err(Error::from)?
        )?,
        Format::Table => {
            let mut rows = vec![report];
            while let Some(r) = rows.pop() {
                writeln!(
                    out,
                    "{:<28} {:>24.16e}  {}",
                    r.name,
                    r.value,
                    if r.normative { "" } else { "(non-normative)" }
                )?;
                for (k, v) in &r.inputs {
                    writeln!(out, "  {k:<26} {v:>24.16e}")?;
                }
                if !r.notes.is_empty() {
                    writeln!(out, "  note: {}", r.notes)?;
                }
                rows.extend(r.companions.into_iter().rev());
            }
        }
    }
    Ok(())
}

fn bounds_grid(path: &Path, out: &mut dyn Write) -> CliResult {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Failure::Usage(e.to_string()))?
        .clone();
    let name_col = header
        .iter()
        .position(|h| h == "name")
        .ok_or_else(|| Failure::Usage("grid needs a `name` column".into()))?;
    let mut w = csv::Writer::from_writer(out);
    let mut head: Vec<String> = header.iter().map(String::from).collect();
    head.extend(["value".into(), "normative".into(), "notes".into()]);
    w.write_record(&head).map_err(Error::from)?;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::Usage(e.to_string()))?;
        let mut params = BTreeMap::new();
        for (i, cell) in rec.iter().enumerate() {
            if i == name_col || cell.trim().is_empty() {
                continue;
            }
            let v = parse_number(cell).ok_or_else(|| {
                Failure::Usage(format!("row {}: {:?} is not a number", line + 1, cell))
            })?;
            params.insert(header[i].to_string(), v);
        }
        let mut cells: Vec<String> = rec.iter().map(String::from).collect();
        match bounds::report(&rec[name_col], &params) {
            Ok(r) => cells.extend([
                format!("{:.16e}", r.value),
                r.normative.to_string(),
                r.notes,
            ]),
            Err(e) => cells.extend([String::new(), String::new(), format!("error: {e}")]),
        }
        w.write_record(&cells).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn experiment(cli: &Cli, action: &ExperimentAction) -> CliResult {
    match action {
        ExperimentAction::Template { kind } => {
            let experiment = Experiment::default_for(kind)?;
            let config = ExperimentConfig {
                schema_version: SCHEMA_VERSION,
                seed: cli.seed.unwrap_or(0),
                workers: None,
                output: None,
                experiment,
            };
            writeln!(output(&cli.out)?, "{}", config.to_json()?)?;
            Ok(())
        }
        ExperimentAction::Run { config } => {
            let text = fs::read_to_string(config)
                .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
            let mut config = ExperimentConfig::from_json(&text)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let record = harness::run(&config, cli.workers)?;
            let root = cli
                .out
                .clone()
                .or_else(|| config.output.clone())
                .unwrap_or_else(|| PathBuf::from("runs"));
            let dir = harness::write_run(&config, &record, &root)?;
            println!("{}", dir.display());
            eprintln!(
                "{}: {} passed, {} failed ({} errors) in {:.1}s",
                record.kind, record.passed, record.failed, record.errors, record.wall_clock_secs
            );
            if record.all_passed {
                Ok(())
            } else {
                Err(Failure::Criterion)
            }
        }
    }
}

fn verify(cli: &Cli, a: &VerifyArgs) -> CliResult {
    let seed = cli.seed.unwrap_or(acceptance::DEFAULT_SEED);
    let summary = acceptance::verify_all(
        seed,
        &VerifyOptions {
            corrupt_tolerance: a.inject_fault,
        },
    );
    let doc = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    if a.json {
        println!("{doc}");
    } else {
        for c in &summary.criteria {
            println!("{c}");
        }
        let passed = summary.criteria.iter().filter(|c| c.passed).count();
        println!(
            "{passed}/{} criteria passed (seed {seed})",
            summary.criteria.len()
        );
    }
    if let Some(path) = &cli.out {
        fs::write(path, doc + "\n")?;
    }
    if summary.all_passed {
        Ok(())
    } else {
        Err(Failure::Criterion)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
    }
    let result = match &cli.command {
        Command::Generate(a) => generate(&cli, a),
        Command::Embed(a) => embed(&cli, a),
        Command::Train(a) => train(&cli, a),
        Command::Entropy(a) => entropy(&cli, a),
        Command::Vcdim(a) => vcdim(&cli, a),
        Command::Bounds(a) => bounds_cmd(&cli, a),
        Command::Experiment { action } => experiment(&cli, action),
        Command::Verify(a) => verify(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Criterion) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
