//! Command-line front end.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::accel::{simulate_network, SimResult};
use crate::config::NetworkConfig;
use crate::cost::{estimate_energy, estimate_resources, CostLibrary};
use crate::dse::{
    enumerate_configs, rows_to_csv, run_sweep, SweepInputs, SweepReport, SweepSpec, WeightSource,
};
use crate::error::{Error, Result};
use crate::golden::{decode_population, golden_forward, LayerSpikeTrace};
use crate::mapping::build_mapping;
use crate::model::{ModelBundle, NetworkWeights};
use crate::spike_io::{
    derive_seed, parse_idx, rate_encode, read_spike_file, write_spike_file, ImageSet, SpikeTensor,
    SPIKE_MAGIC,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "snndse",
    version,
    about = "SNN accelerator simulator and design-space explorer"
)]
struct Cli {
    /// Event log detail on stderr: 0 quiet, 1 per-phase events, 2 adds schedule.
    #[arg(long, global = true, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=2))]
    verbosity: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate-encode one image of an IDX file into an SNNSPK1 spike file.
    Encode(EncodeArgs),
    /// Run the cycle-accurate accelerator model on one input.
    Simulate(SimulateArgs),
    /// Compare the accelerator's per-layer spikes against reference traces.
    Validate(ValidateArgs),
    /// Write the reference (golden-model) per-layer spike traces.
    Golden(GoldenArgs),
    /// Estimate LUT/REG/BRAM and, given an input, energy per inference.
    Estimate(EstimateArgs),
    /// Sweep LHR / T / pcr and write one CSV row per configuration.
    Dse(DseArgs),
    /// Write a model directory with synthetic weights for a configuration.
    GenModel(GenModelArgs),
}

#[derive(Debug, Args)]
struct NetArgs {
    /// Network configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model directory (manifest.json + blobs).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    buffer_depth: Option<usize>,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// SNNSPK1 spike file or IDX image file (detected by magic number).
    #[arg(long)]
    input: PathBuf,
    /// Image to encode when the input is an IDX file.
    #[arg(long, default_value_t = 0)]
    index: usize,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 10)]
    timesteps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    input: InputArgs,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory to receive `layer_<i>.spk` for every layer.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Directory holding `layer_<i>.spk` reference traces.
    #[arg(long)]
    reference: PathBuf,
}

#[derive(Debug, Args)]
struct GoldenArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Optional input; when given, energy per inference is reported.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    cost_lib: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DseArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    sweep: PathBuf,
    /// IDX image file; synthetic images are used when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// IDX label file for accuracy.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    cost_lib: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenModelArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbosity);
    let result = match cli.command {
        Command::Encode(a) => encode(a),
        Command::Simulate(a) => simulate(a, cli.verbosity),
        Command::Validate(a) => validate(a),
        Command::Golden(a) => golden(a),
        Command::Estimate(a) => estimate(a),
        Command::Dse(a) => dse(a),
        Command::GenModel(a) => gen_model(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| match record.level() {
            log::Level::Warn | log::Level::Error => {
                writeln!(
                    buf,
                    "{}: {}",
                    record.level().as_str().to_lowercase(),
                    record.args()
                )
            }
            _ => writeln!(buf, "{}", record.args()),
        })
        .try_init();
}

/// Network config plus the weights to run it with.
struct Network {
    config: NetworkConfig,
    weights: NetworkWeights,
}

fn load_network(args: &NetArgs) -> Result<Network> {
    let bundle = args.model.as_deref().map(ModelBundle::load).transpose()?;
    let mut config = match (&args.config, &bundle) {
        (Some(path), Some(b)) => b.apply_to(&NetworkConfig::load(path)?)?,
        (Some(path), None) => NetworkConfig::load(path)?,
        (None, Some(b)) => b.default_config()?,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "one of --config or --model is required".into(),
            ))
        }
    };
    if let Some(d) = args.buffer_depth {
        config.buffer_depth = d;
        config.validate()?;
    }
    let weights = match bundle {
        Some(b) => b.weights,
        None => NetworkWeights::synthetic(&config, args.seed),
    };
    weights.check(&config)?;
    Ok(Network { config, weights })
}

/// Load a spike file as is, or rate-encode image `index` of an IDX file.
fn load_input(path: &Path, index: usize, timesteps: usize, seed: u64) -> Result<SpikeTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(SPIKE_MAGIC) {
        return SpikeTensor::from_bytes(&bytes);
    }
    let images = ImageSet::from_idx(parse_idx(&bytes)?, None)?;
    let image = images.images.get(index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "--index {index} out of range for {} images",
            images.len()
        ))
    })?;
    Ok(rate_encode(
        image,
        timesteps,
        derive_seed(seed, index as u64),
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_trace(dir: &Path, trace: &LayerSpikeTrace) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, layer) in trace.layers.iter().enumerate() {
        write_spike_file(layer, &dir.join(format!("layer_{i}.spk")))?;
    }
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<i32> {
    if a.timesteps == 0 {
        return Err(Error::InvalidArgument("--timesteps must be >= 1".into()));
    }
    let t = load_input(&a.input.input, a.input.index, a.timesteps, a.seed)?;
    write_spike_file(&t, &a.out)?;
    println!(
        "wrote {} timesteps x {} neurons to {}",
        t.timesteps(),
        t.size(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SimReport<'a> {
    topology: String,
    lhr: String,
    timesteps: usize,
    buffer_depth: usize,
    total_cycles: u64,
    stage_layers: &'a [usize],
    /// `[stage][t]` total cycles.
    stage_cycles: Vec<Vec<u64>>,
    compression_cycles: Vec<Vec<u64>>,
    accumulation_cycles: Vec<Vec<u64>>,
    activation_cycles: Vec<Vec<u64>>,
    start: &'a [Vec<u64>],
    finish: &'a [Vec<u64>],
    /// `[layer][t]` output spike counts.
    spike_events: Vec<Vec<usize>>,
    memory_reads: &'a [u64],
    predicted_class: Option<usize>,
    class_scores: Option<Vec<usize>>,
}

fn sim_report<'a>(config: &NetworkConfig, sim: &'a SimResult) -> SimReport<'a> {
    let phase = |f: fn(&crate::accel::LayerCycleCost) -> u64| {
        sim.costs
            .iter()
            .map(|row| row.iter().map(f).collect())
            .collect()
    };
    let decoded = decode_population(sim.trace.output(), config.classes, config.pcr).ok();
    SimReport {
        topology: config.topology_string(),
        lhr: config.lhr.to_string(),
        timesteps: sim.trace.output().timesteps(),
        buffer_depth: config.buffer_depth,
        total_cycles: sim.total_cycles,
        stage_layers: &sim.stage_layers,
        stage_cycles: sim.cost_totals(),
        compression_cycles: phase(|c| c.compression),
        accumulation_cycles: phase(|c| c.accumulation),
        activation_cycles: phase(|c| c.activation),
        start: &sim.schedule.start,
        finish: &sim.schedule.finish,
        spike_events: sim.spike_events(),
        memory_reads: &sim.memory_reads,
        predicted_class: decoded.as_ref().map(|d| d.class),
        class_scores: decoded.map(|d| d.scores),
    }
}

fn log_events(sim: &SimResult) {
    let steps = sim.costs.first().map_or(0, Vec::len);
    for t in 0..steps {
        for (s, &layer) in sim.stage_layers.iter().enumerate() {
            let c = &sim.costs[s][t];
            let spikes = sim.trace.layers[layer].count_step(t);
            for (phase, cycles) in [
                ("compress", c.compression),
                ("accumulate", c.accumulation),
                ("activate", c.activation),
            ] {
                log::info!("t={t} layer={layer} phase={phase} cycles={cycles} spikes={spikes}");
            }
            log::debug!(
                "t={t} layer={layer} start={} finish={}",
                sim.schedule.start[s][t],
                sim.schedule.finish[s][t]
            );
        }
    }
}

fn simulate(a: SimulateArgs, verbosity: u8) -> Result<i32> {
    let net = load_network(&a.net)?;
    let input = load_input(
        &a.input.input,
        a.input.index,
        net.config.timesteps,
        a.net.seed,
    )?;
    let sim = simulate_network(&net.config, &net.weights, &input)?;
    if verbosity > 0 {
        log_events(&sim);
    }
    if let Some(dir) = &a.trace_dir {
        write_trace(dir, &sim.trace)?;
    }
    if let Some(out) = &a.out {
        let mut json = serde_json::to_string_pretty(&sim_report(&net.config, &sim))
            .expect("report serializes");
        json.push('\n');
        write_text(out, &json)?;
    }
    println!("total_cycles {}", sim.total_cycles);
    Ok(EXIT_OK)
}

fn golden(a: GoldenArgs) -> Result<i32> {
    let net = load_network(&a.net)?;
    let input = load_input(
        &a.input.input,
        a.input.index,
        net.config.timesteps,
        a.net.seed,
    )?;
    let trace = golden_forward(&net.config, &net.weights, &input)?;
    write_trace(&a.out, &trace)?;
    println!(
        "wrote {} layer traces to {}",
        trace.layers.len(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs) -> Result<i32> {
    let net = load_network(&a.net)?;
    let input = load_input(
        &a.input.input,
        a.input.index,
        net.config.timesteps,
        a.net.seed,
    )?;
    let sim = simulate_network(&net.config, &net.weights, &input)?;
    let reference = LayerSpikeTrace {
        layers: (0..net.config.layers.len())
            .map(|i| read_spike_file(&a.reference.join(format!("layer_{i}.spk"))))
            .collect::<Result<_>>()?,
    };
    for (i, (r, s)) in reference.layers.iter().zip(&sim.trace.layers).enumerate() {
        if r.timesteps() != s.timesteps() || r.size() != s.size() {
            println!(
                "MISMATCH layer={i}: reference is {}x{}, simulated is {}x{}",
                r.timesteps(),
                r.size(),
                s.timesteps(),
                s.size()
            );
            return Ok(EXIT_MISMATCH);
        }
    }
    match sim.trace.first_divergence(&reference) {
        None => {
            println!("MATCH");
            Ok(EXIT_OK)
        }
        Some((layer, t, neuron)) => {
            println!("MISMATCH layer={layer} t={t} neuron={neuron}");
            Ok(EXIT_MISMATCH)
        }
    }
}

fn load_cost_lib(path: Option<&Path>) -> Result<CostLibrary> {
    match path {
        Some(p) => CostLibrary::load(p),
        None => Ok(CostLibrary::default()),
    }
}

fn estimate(a: EstimateArgs) -> Result<i32> {
    let lib = load_cost_lib(a.cost_lib.as_deref())?;
    let net = load_network(&a.net)?;
    let plan = build_mapping(&net.config);
    let mut report = estimate_resources(&net.config, &plan, &lib)?;
    if let Some(path) = &a.input {
        let input = load_input(path, a.index, net.config.timesteps, a.net.seed)?;
        let sim = simulate_network(&net.config, &net.weights, &input)?;
        report.energy_per_inference_j = Some(estimate_energy(
            sim.total_cycles as f64,
            &report,
            &lib.power,
        ));
    }
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    match &a.out {
        Some(out) => write_text(out, &json)?,
        None => print!("{json}"),
    }
    println!(
        "lut {} reg {} bram {}",
        report.total.lut, report.total.reg, report.total.bram
    );
    Ok(EXIT_OK)
}

fn dse(a: DseArgs) -> Result<i32> {
    let lib = load_cost_lib(a.cost_lib.as_deref())?;
    let spec = SweepSpec::load(&a.sweep)?;
    let bundle = a.net.model.as_deref().map(ModelBundle::load).transpose()?;
    let base = match (&a.net.config, &bundle) {
        (Some(path), Some(b)) => b.apply_to(&NetworkConfig::load(path)?)?,
        (Some(path), None) => NetworkConfig::load(path)?,
        (None, Some(b)) => b.default_config()?,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "one of --config or --model is required".into(),
            ))
        }
    };
    let mut base = base;
    if let Some(d) = a.net.buffer_depth {
        base.buffer_depth = d;
    }
    let images = match &a.input {
        Some(p) => ImageSet::load(p, a.labels.as_deref())?,
        None => {
            let (h, w) = match base.input {
                crate::config::Shape::Map { height, width, .. } => (height, width),
                crate::config::Shape::Flat(n) => (1, n),
            };
            ImageSet::synthetic(spec.sample_budget, h, w, base.classes, a.net.seed)
        }
    };
    images.validate(base.classes)?;
    let weights = match bundle {
        Some(b) => WeightSource::Fixed(b.weights),
        None => WeightSource::Synthetic { seed: a.net.seed },
    };
    let e = enumerate_configs(&spec, &base)?;
    let inputs = SweepInputs {
        weights: &weights,
        images: &images,
        cost_lib: &lib,
        sample_budget: spec.sample_budget,
        seed: a.net.seed,
    };
    let rows = run_sweep(&e.configs, &inputs)?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "config {} failed: {}",
            r.config_id,
            r.error.as_deref().unwrap_or_default()
        );
    }
    write_text(&a.out, &rows_to_csv(&rows))?;
    let n = rows.len();
    if let Some(path) = &a.report {
        let report = SweepReport::new(&spec, a.net.seed, rows, e.skipped);
        write_text(path, &report.to_json())?;
    }
    println!("wrote {n} rows to {}", a.out.display());
    Ok(EXIT_OK)
}

fn gen_model(a: GenModelArgs) -> Result<i32> {
    let config = NetworkConfig::load(&a.config)?;
    let weights = NetworkWeights::synthetic(&config, a.seed);
    ModelBundle::from_config(&config, weights)?.save(&a.out)?;
    println!("wrote model to {}", a.out.display());
    Ok(EXIT_OK)
}
