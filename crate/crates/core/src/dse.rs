//! Exhaustive design-space sweeps over LHR vectors, spike-train lengths and
//! population-coding ratios, plus Pareto-front extraction.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accel::simulate_with_plan;
use crate::config::NetworkConfig;
use crate::cost::{estimate_energy, estimate_resources, CostLibrary};
use crate::error::{Error, Result};
use crate::golden::decode_population;
use crate::mapping::build_mapping;
use crate::model::NetworkWeights;
use crate::spike_io::{derive_seed, rate_encode, ImageSet};

pub const CSV_HEADER: &str =
    "config_id,lhr,timesteps,pcr,cycles_mean,lut,reg,bram,energy_j,accuracy";
pub const DEFAULT_LHR_CHOICES: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Cycles,
    Lut,
    Energy,
    Accuracy,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::Cycles,
        Objective::Lut,
        Objective::Energy,
        Objective::Accuracy,
    ];

    pub fn maximize(self) -> bool {
        self == Objective::Accuracy
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LhrChoices {
    /// One candidate list shared by every mapped layer.
    Shared(Vec<usize>),
    PerLayer(Vec<Vec<usize>>),
}

/// A sweep definition. Absent choice lists fall back to the base
/// configuration's value (or powers of two up to 8 for LHR).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub lhr_choices: Option<LhrChoices>,
    /// Explicit LHR vectors; replaces the product of `lhr_choices`.
    #[serde(default)]
    pub lhr_vectors: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub timestep_choices: Option<Vec<usize>>,
    #[serde(default)]
    pub pcr_choices: Option<Vec<usize>>,
    #[serde(default = "default_budget")]
    pub sample_budget: usize,
    #[serde(default = "default_objectives")]
    pub objectives: Vec<Objective>,
    /// Resize a fully-connected output layer to `classes × pcr` for each pcr.
    #[serde(default = "default_true")]
    pub resize_output: bool,
}

fn default_budget() -> usize {
    10
}

fn default_objectives() -> Vec<Objective> {
    Objective::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lhr_choices: None,
            lhr_vectors: None,
            timestep_choices: None,
            pcr_choices: None,
            sample_budget: default_budget(),
            objectives: default_objectives(),
            resize_output: true,
        }
    }
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_budget == 0 {
            return Err(Error::Config("sample_budget must be >= 1".into()));
        }
        if self.objectives.is_empty() {
            return Err(Error::Config("objectives must not be empty".into()));
        }
        let empty = |name: &str| Error::Config(format!("{name} must not be empty"));
        match &self.lhr_choices {
            Some(LhrChoices::Shared(c)) if c.is_empty() => return Err(empty("lhr_choices")),
            Some(LhrChoices::PerLayer(c)) if c.is_empty() || c.iter().any(Vec::is_empty) => {
                return Err(empty("lhr_choices"))
            }
            _ => {}
        }
        for (name, list) in [
            ("lhr_vectors", self.lhr_vectors.as_ref().map(Vec::len)),
            (
                "timestep_choices",
                self.timestep_choices.as_ref().map(Vec::len),
            ),
            ("pcr_choices", self.pcr_choices.as_ref().map(Vec::len)),
        ] {
            if list == Some(0) {
                return Err(empty(name));
            }
        }
        Ok(())
    }

    /// LHR vectors in enumeration order (last layer varies fastest).
    pub fn lhr_vectors(&self, mapped: usize) -> Result<Vec<Vec<usize>>> {
        if let Some(v) = &self.lhr_vectors {
            return Ok(v.clone());
        }
        let per_layer = match &self.lhr_choices {
            None => vec![DEFAULT_LHR_CHOICES.to_vec(); mapped],
            Some(LhrChoices::Shared(c)) => vec![c.clone(); mapped],
            Some(LhrChoices::PerLayer(c)) => {
                if c.len() != mapped {
                    return Err(Error::Config(format!(
                        "lhr_choices has {} lists for {mapped} mapped layers",
                        c.len()
                    )));
                }
                c.clone()
            }
        };
        let mut out = vec![Vec::new()];
        for choices in &per_layer {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |&r| {
                        let mut v = prefix.clone();
                        v.push(r);
                        v
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

/// Result of enumeration: valid configs in order and a message per skipped
/// combination.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub configs: Vec<NetworkConfig>,
    pub skipped: Vec<String>,
}

/// Cartesian product pcr × T × LHR, in that nesting order.
pub fn enumerate_configs(spec: &SweepSpec, base: &NetworkConfig) -> Result<Enumeration> {
    spec.validate()?;
    let pcrs = spec.pcr_choices.clone().unwrap_or_else(|| vec![base.pcr]);
    let steps = spec
        .timestep_choices
        .clone()
        .unwrap_or_else(|| vec![base.timesteps]);
    let lhrs = spec.lhr_vectors(base.mapped_count())?;
    let mut configs = Vec::new();
    let mut skipped = Vec::new();
    for &pcr in &pcrs {
        for &t in &steps {
            for lhr in &lhrs {
                match materialize(base, t, lhr, pcr, spec.resize_output) {
                    Ok(c) => configs.push(c),
                    Err(e) => {
                        let lhr = lhr
                            .iter()
                            .map(usize::to_string)
                            .collect::<Vec<_>>()
                            .join("-");
                        let msg = format!("skipped lhr={lhr} timesteps={t} pcr={pcr}: {e}");
                        log::warn!("{msg}");
                        skipped.push(msg);
                    }
                }
            }
        }
    }
    Ok(Enumeration { configs, skipped })
}

fn materialize(
    base: &NetworkConfig,
    timesteps: usize,
    lhr: &[usize],
    pcr: usize,
    resize_output: bool,
) -> Result<NetworkConfig> {
    let mut c = base.clone();
    c.timesteps = timesteps;
    c.lhr.ratios = lhr.to_vec();
    if resize_output {
        c.with_pcr_resized(pcr)
    } else {
        c.pcr = pcr;
        c.validate().map(|_| c)
    }
}

#[derive(Debug, Clone)]
pub enum WeightSource {
    Fixed(NetworkWeights),
    /// Fresh synthetic weights per config topology.
    Synthetic {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config_id: usize,
    pub lhr: Vec<usize>,
    pub timesteps: usize,
    pub pcr: usize,
    pub cycles_mean: f64,
    pub lut: u64,
    pub reg: u64,
    pub bram: u64,
    pub energy_j: f64,
    /// `None` when the image set has no labels.
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(config_id: usize, config: &NetworkConfig, err: Error) -> Self {
        Self {
            config_id,
            lhr: config.lhr.ratios.clone(),
            timesteps: config.timesteps,
            pcr: config.pcr,
            cycles_mean: f64::NAN,
            lut: 0,
            reg: 0,
            bram: 0,
            energy_j: f64::NAN,
            accuracy: None,
            error: Some(err.to_string()),
        }
    }

    pub fn objective(&self, o: Objective) -> Option<f64> {
        if self.error.is_some() {
            return None;
        }
        match o {
            Objective::Cycles => Some(self.cycles_mean),
            Objective::Lut => Some(self.lut as f64),
            Objective::Energy => Some(self.energy_j),
            Objective::Accuracy => self.accuracy,
        }
    }
}

pub struct SweepInputs<'a> {
    pub weights: &'a WeightSource,
    pub images: &'a ImageSet,
    pub cost_lib: &'a CostLibrary,
    pub sample_budget: usize,
    pub seed: u64,
}

/// Evaluate one configuration over the first `sample_budget` images.
pub fn evaluate_config(config_id: usize, config: &NetworkConfig, inputs: &SweepInputs) -> SweepRow {
    evaluate(config_id, config, inputs).unwrap_or_else(|e| SweepRow::failed(config_id, config, e))
}

fn evaluate(config_id: usize, config: &NetworkConfig, inputs: &SweepInputs) -> Result<SweepRow> {
    if inputs.sample_budget == 0 {
        return Err(Error::InvalidArgument("sample_budget must be >= 1".into()));
    }
    config.validate()?;
    let synthetic;
    let weights = match inputs.weights {
        WeightSource::Fixed(w) => w,
        WeightSource::Synthetic { seed } => {
            synthetic = NetworkWeights::synthetic(config, *seed);
            &synthetic
        }
    };
    weights.check(config)?;
    let count = inputs.sample_budget.min(inputs.images.len());
    if count == 0 {
        return Err(Error::InvalidArgument("image set is empty".into()));
    }
    let px = inputs.images.height * inputs.images.width;
    if px != config.input.len() {
        return Err(Error::Shape(format!(
            "images have {px} pixels, network input is {}",
            config.input.len()
        )));
    }
    let plan = build_mapping(config);
    let labelled = !inputs.images.labels.is_empty();
    let mut cycles = 0u64;
    let mut correct = 0usize;
    for i in 0..count {
        let spikes = rate_encode(
            &inputs.images.images[i],
            config.timesteps,
            derive_seed(inputs.seed, i as u64),
        );
        let sim = simulate_with_plan(config, &plan, weights, &spikes)?;
        cycles += sim.total_cycles;
        if labelled {
            let d = decode_population(sim.trace.output(), config.classes, config.pcr)?;
            correct += usize::from(d.class == inputs.images.labels[i] as usize);
        }
    }
    let cycles_mean = cycles as f64 / count as f64;
    let report = estimate_resources(config, &plan, inputs.cost_lib)?;
    Ok(SweepRow {
        config_id,
        lhr: config.lhr.ratios.clone(),
        timesteps: config.timesteps,
        pcr: config.pcr,
        cycles_mean,
        lut: report.total.lut,
        reg: report.total.reg,
        bram: report.total.bram,
        energy_j: estimate_energy(cycles_mean, &report, &inputs.cost_lib.power),
        accuracy: labelled.then(|| correct as f64 / count as f64),
        error: None,
    })
}

/// Worker count from `SNNDSE_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("SNNDSE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Evaluate every config in parallel; rows come back in input order.
pub fn run_sweep(configs: &[NetworkConfig], inputs: &SweepInputs) -> Result<Vec<SweepRow>> {
    if inputs.sample_budget == 0 {
        return Err(Error::InvalidArgument("sample_budget must be >= 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, c)| evaluate_config(i, c, inputs))
            .collect()
    });
    Ok(rows)
}

/// True if `a` dominates `b`: no worse everywhere, strictly better somewhere.
fn dominates(a: &[f64], b: &[f64], maximize: &[bool]) -> bool {
    let mut strict = false;
    for ((&x, &y), &max) in a.iter().zip(b).zip(maximize) {
        let (x, y) = if max { (-x, -y) } else { (x, y) };
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

/// Indices of the non-dominated points, in input order.
pub fn pareto_indices(points: &[Vec<f64>], maximize: &[bool]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, p)| j != i && dominates(p, &points[i], maximize))
        })
        .collect()
}

/// Non-dominated rows under `objectives`. Rows lacking a value for any
/// objective (failed rows, unlabelled accuracy) are left out.
pub fn pareto_front<'a>(rows: &'a [SweepRow], objectives: &[Objective]) -> Vec<&'a SweepRow> {
    let maximize: Vec<bool> = objectives.iter().map(|o| o.maximize()).collect();
    let (candidates, points): (Vec<&SweepRow>, Vec<Vec<f64>>) = rows
        .iter()
        .filter_map(|r| {
            let p: Option<Vec<f64>> = objectives.iter().map(|&o| r.objective(o)).collect();
            p.map(|p| (r, p))
        })
        .unzip();
    pareto_indices(&points, &maximize)
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

/// C `%g`-style formatting with 6 significant digits: fixed notation for
/// exponents in `[-4, 6)`, otherwise `d.ddddde±XX`, trailing zeros removed.
pub fn format_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV table: fixed header, `\n` line endings, integers verbatim, reals via
/// [`format_g`]. Failed rows and missing accuracy leave their fields empty.
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let lhr = r
            .lhr
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("-");
        write!(out, "{},{},{},{},", r.config_id, lhr, r.timesteps, r.pcr).unwrap();
        if r.error.is_some() {
            out.push_str(",,,,,\n");
            continue;
        }
        let acc = r.accuracy.map(format_g).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            format_g(r.cycles_mean),
            r.lut,
            r.reg,
            r.bram,
            format_g(r.energy_j),
            acc
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub objectives: Vec<Objective>,
    pub sample_budget: usize,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    /// `config_id`s on the Pareto front.
    pub pareto: Vec<usize>,
    pub skipped: Vec<String>,
}

impl SweepReport {
    pub fn new(spec: &SweepSpec, seed: u64, rows: Vec<SweepRow>, skipped: Vec<String>) -> Self {
        let pareto = pareto_front(&rows, &spec.objectives)
            .into_iter()
            .map(|r| r.config_id)
            .collect();
        Self {
            objectives: spec.objectives.clone(),
            sample_budget: spec.sample_budget,
            seed,
            rows,
            pareto,
            skipped,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
