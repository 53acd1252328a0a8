//! Run configuration.
//!
//! Every model reads the same flat set of keys. A TOML file supplies base
//! values, command-line flags override them, and validation fills in
//! defaults and rejects keys that do not apply to the chosen model or engine.
//! The validated parameters serialize back to a file that parses to the same
//! configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Billiards,
    Deposition,
    Ising,
    Telecom,
    Circuitnet,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Billiards => "billiards",
            Model::Deposition => "deposition",
            Model::Ising => "ising",
            Model::Telecom => "telecom",
            Model::Circuitnet => "circuitnet",
        }
    }

    /// Accepted engines; the first is the default.
    pub fn engines(self) -> &'static [&'static str] {
        match self {
            Model::Billiards => &["anticipatory", "lazy", "timedriven"],
            Model::Deposition => &["sequential", "cautious", "lockstep"],
            Model::Ising => &["tree", "class", "uniformized"],
            Model::Telecom => &["event", "time"],
            Model::Circuitnet => &["sequential", "syncrelax"],
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Model::Billiards => &["n", "diameter", "growth", "width", "max_events"],
            Model::Deposition => &["length", "sectors", "count", "height_bins", "time_bins", "max_cycles"],
            Model::Ising => &["n", "temperature", "field", "update_count"],
            Model::Telecom => &[
                "n", "degree", "graph_file", "max_minutes", "p1_same", "p1_other", "p2_same", "p2_other", "alpha",
            ],
            Model::Circuitnet => &["n", "trunks", "rate", "holding", "policy", "boundaries", "eval"],
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "billiards" => Ok(Model::Billiards),
            "deposition" => Ok(Model::Deposition),
            "ising" => Ok(Model::Ising),
            "telecom" => Ok(Model::Telecom),
            "circuitnet" => Ok(Model::Circuitnet),
            other => Err(SimError::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Flat parameter set shared by every model. Unset keys are `None`.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,

    /// Random seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Simulated time to run.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Engine, scheduler or variant, depending on the model.
    #[arg(long, visible_aliases = ["scheduler", "variant"])]
    #[serde(skip_serializing_if = "Option::is_none", alias = "scheduler", alias = "variant")]
    pub engine: Option<String>,
    /// Worker threads of a parallel engine.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Time step of a time-driven engine.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Strip width of synchronous relaxation.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,

    /// Balls, lattice side, customers or nodes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    /// Diameter growth rate (swelling).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<f64>,
    /// Gutter width.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,

    /// Substrate length.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sectors: Option<usize>,
    /// Number of particles of a sequential deposition.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height_bins: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_bins: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cycles: Option<u64>,

    #[arg(long, visible_alias = "t")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[arg(long, visible_alias = "h")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update_count: Option<u64>,

    /// Mean number of calling partners (random sparse market).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<f64>,
    /// CSV of `i,j,minutes` calling volumes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_minutes: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1_same: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1_other: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2_same: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2_other: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,

    /// Trunks per link.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trunks: Option<u32>,
    /// Call arrival rate per node pair.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Mean holding time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holding: Option<f64>,
    /// `lba` or `alba`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    /// Load class boundaries, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundaries: Option<Vec<f64>>,
    /// `lazy` or `anticipatory`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<String>,
}

/// Keys every model accepts.
const COMMON: &[&str] = &["seed", "horizon", "engine", "workers", "out", "dt", "step"];

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Params {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat parameters serialize")
    }

    /// Values of `top` replace those of `self`.
    pub fn overlay(mut self, top: &Params) -> Self {
        overlay!(self, top; model, seed, horizon, engine, workers, out, dt, step, n, diameter, growth,
            width, max_events, length, sectors, count, height_bins, time_bins, max_cycles, temperature,
            field, update_count, degree, graph_file, max_minutes, p1_same, p1_other, p2_same, p2_other,
            alpha, trunks, rate, holding, policy, boundaries, eval);
        self
    }

    /// Names of the keys that are set.
    pub fn set_keys(&self) -> Vec<String> {
        let value = toml::Value::try_from(self).expect("flat parameters serialize");
        value
            .as_table()
            .map(|t| t.keys().cloned().collect())
            .unwrap_or_default()
    }
}

/// Validated configuration with every applicable default filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub model: Model,
    pub params: Params,
}

impl SimConfig {
    pub fn engine(&self) -> &str {
        self.params.engine.as_deref().expect("validated engine")
    }

    pub fn seed(&self) -> u64 {
        self.params.seed.expect("validated seed")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.params.out.clone().expect("validated output directory")
    }

    /// The effective configuration as TOML.
    pub fn echo(&self) -> String {
        self.params.to_toml()
    }
}

/// Builds the configuration for `model` from an optional file and flags.
pub fn parse_config(model: Model, file: Option<&Path>, flags: &Params) -> Result<SimConfig> {
    let base = match file {
        Some(path) => Params::from_file(path)?,
        None => Params::default(),
    };
    if let Some(m) = base.model {
        if m != model {
            return Err(SimError::Config(format!(
                "configuration file is for model '{m}', not '{model}'"
            )));
        }
    }
    validate(model, base.overlay(flags))
}

fn require<T>(missing: &mut Vec<&'static str>, name: &'static str, v: &Option<T>) {
    if v.is_none() {
        missing.push(name);
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => Err(SimError::Config(format!("{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

fn reject(engine: &str, keys: &[(&str, bool)]) -> Result<()> {
    let bad: Vec<&str> = keys.iter().filter(|(_, set)| *set).map(|(k, _)| *k).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(SimError::Config(format!(
            "{} not applicable with engine '{engine}'",
            bad.join(", ")
        )))
    }
}

/// Checks applicability, required keys and ranges, and fills defaults.
pub fn validate(model: Model, mut p: Params) -> Result<SimConfig> {
    let allowed: Vec<&str> = COMMON.iter().chain(model.keys()).copied().collect();
    let foreign: Vec<String> = p
        .set_keys()
        .into_iter()
        .filter(|k| k != "model" && !allowed.contains(&k.as_str()))
        .collect();
    if !foreign.is_empty() {
        return Err(SimError::Config(format!(
            "keys not used by {model}: {}",
            foreign.join(", ")
        )));
    }
    p.model = Some(model);
    p.seed.get_or_insert(0);
    p.out.get_or_insert_with(|| PathBuf::from("out"));
    if model == Model::Deposition && p.engine.as_deref() == Some("lockstep-emulation") {
        p.engine = Some("lockstep".into());
    }
    let engine = p.engine.get_or_insert_with(|| model.engines()[0].to_string()).clone();
    if !model.engines().contains(&engine.as_str()) {
        return Err(SimError::Config(format!(
            "engine '{engine}' not available for {model}; choose one of {}",
            model.engines().join(", ")
        )));
    }
    let mut missing = Vec::new();
    match model {
        Model::Billiards => {
            require(&mut missing, "n", &p.n);
            require(&mut missing, "horizon", &p.horizon);
            let timed = engine == "timedriven";
            if timed {
                require(&mut missing, "dt", &p.dt);
            } else if p.dt.is_some() {
                return Err(SimError::Config(format!(
                    "dt applies only to the time-driven scheduler; '{engine}' is event-driven"
                )));
            }
            reject(&engine, &[("workers", p.workers.is_some()), ("step", p.step.is_some())])?;
            if timed {
                reject(&engine, &[("max_events", p.max_events.is_some())])?;
            }
            let d = *p.diameter.get_or_insert(1.0);
            p.growth.get_or_insert(0.0);
            if let Some(n) = p.n {
                p.width.get_or_insert(2.0 * n as f64 * d);
            }
            positive("diameter", p.diameter)?;
            positive("width", p.width)?;
            positive("dt", p.dt)?;
        }
        Model::Deposition => {
            require(&mut missing, "length", &p.length);
            require(&mut missing, "sectors", &p.sectors);
            if engine == "sequential" {
                require(&mut missing, "count", &p.count);
                reject(
                    &engine,
                    &[
                        ("horizon", p.horizon.is_some()),
                        ("workers", p.workers.is_some()),
                        ("max_cycles", p.max_cycles.is_some()),
                    ],
                )?;
            } else {
                require(&mut missing, "horizon", &p.horizon);
                reject(&engine, &[("count", p.count.is_some())])?;
                if engine == "cautious" {
                    p.workers.get_or_insert(1);
                    reject(&engine, &[("max_cycles", p.max_cycles.is_some())])?;
                } else {
                    reject(&engine, &[("workers", p.workers.is_some())])?;
                }
            }
            reject(&engine, &[("dt", p.dt.is_some()), ("step", p.step.is_some())])?;
            p.height_bins.get_or_insert(20);
            p.time_bins.get_or_insert(10);
            positive("length", p.length)?;
        }
        Model::Ising => {
            require(&mut missing, "n", &p.n);
            require(&mut missing, "temperature", &p.temperature);
            if engine == "uniformized" {
                require(&mut missing, "update_count", &p.update_count);
                reject(&engine, &[("horizon", p.horizon.is_some())])?;
            } else {
                require(&mut missing, "horizon", &p.horizon);
                reject(&engine, &[("update_count", p.update_count.is_some())])?;
            }
            reject(
                &engine,
                &[
                    ("workers", p.workers.is_some()),
                    ("dt", p.dt.is_some()),
                    ("step", p.step.is_some()),
                ],
            )?;
            p.field.get_or_insert(0.0);
            positive("temperature", p.temperature)?;
        }
        Model::Telecom => {
            if p.graph_file.is_none() {
                require(&mut missing, "n", &p.n);
                p.degree.get_or_insert(4.0);
                p.max_minutes.get_or_insert(100);
            } else if p.n.is_some() || p.degree.is_some() || p.max_minutes.is_some() {
                return Err(SimError::Config(
                    "n, degree and max_minutes describe a random market; drop them when graph_file is given".into(),
                ));
            }
            require(&mut missing, "horizon", &p.horizon);
            if engine == "time" {
                require(&mut missing, "dt", &p.dt);
            } else if p.dt.is_some() {
                return Err(SimError::Config("dt applies only to the time-driven engine".into()));
            }
            reject(&engine, &[("workers", p.workers.is_some()), ("step", p.step.is_some())])?;
            p.p1_same.get_or_insert(0.10);
            p.p1_other.get_or_insert(0.25);
            p.p2_same.get_or_insert(0.10);
            p.p2_other.get_or_insert(0.25);
            p.alpha.get_or_insert(0.1);
            positive("dt", p.dt)?;
        }
        Model::Circuitnet => {
            require(&mut missing, "n", &p.n);
            require(&mut missing, "trunks", &p.trunks);
            require(&mut missing, "rate", &p.rate);
            require(&mut missing, "horizon", &p.horizon);
            p.holding.get_or_insert(1.0);
            let policy = p.policy.get_or_insert_with(|| "lba".into()).clone();
            match policy.as_str() {
                "lba" => reject("lba", &[("boundaries", p.boundaries.is_some())])?,
                "alba" => {
                    p.boundaries.get_or_insert_with(|| vec![0.8, 0.9]);
                }
                other => {
                    return Err(SimError::Config(format!("policy '{other}' is not lba or alba")));
                }
            }
            if engine == "sequential" {
                let eval = p.eval.get_or_insert_with(|| "lazy".into());
                if eval != "lazy" && eval != "anticipatory" {
                    return Err(SimError::Config(format!("eval '{eval}' is not lazy or anticipatory")));
                }
                reject(&engine, &[("workers", p.workers.is_some()), ("step", p.step.is_some())])?;
            } else {
                reject(&engine, &[("eval", p.eval.is_some())])?;
                p.workers.get_or_insert(1);
                if let Some(rate) = p.rate {
                    // About four events (arrivals and departures) per pair per strip.
                    p.step.get_or_insert(2.0 / rate.max(f64::MIN_POSITIVE));
                }
                positive("step", p.step)?;
            }
            reject(&engine, &[("dt", p.dt.is_some())])?;
            positive("holding", p.holding)?;
        }
    }
    if !missing.is_empty() {
        return Err(SimError::Config(format!(
            "missing required parameters for {model}: {}",
            missing.join(", ")
        )));
    }
    if let Some(h) = p.horizon {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(SimError::Config(format!("horizon must be nonnegative, got {h}")));
        }
    }
    if p.workers == Some(0) {
        return Err(SimError::Config("workers must be at least 1".into()));
    }
    Ok(SimConfig { model, params: p })
}
