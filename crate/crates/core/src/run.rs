//! Runs a validated configuration and writes its outputs.

use std::path::Path;
use std::time::Instant;

use crate::billiards::{self, GutterConfig, RunLimits};
use crate::circuitnet::{self, CircuitRelax, Evaluation, LoadClasses, Network, Policy, Traffic};
use crate::config::{Model, SimConfig};
use crate::deposition::{self, DensityProfile, DepositionRing};
use crate::error::Result;
use crate::ising::{self, IsingParams, KmcVariant, SpinLattice};
use crate::rng::RandomStream;
use crate::telecom::{self, Delegation, Market, Plan, TelecomParams};

/// Files produced by a run, plus metrics that do not depend on wall-clock.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
    pub metrics: Vec<(String, String)>,
}

impl RunOutput {
    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn metric(&mut self, key: &str, value: impl ToString) {
        self.metrics.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// Runs the model described by `cfg`.
pub fn run_config(cfg: &SimConfig) -> Result<RunOutput> {
    let p = &cfg.params;
    let seed = cfg.seed();
    let mut out = RunOutput::default();
    match cfg.model {
        Model::Billiards => {
            let n = p.n.expect("validated");
            let diameter = p.diameter.expect("validated");
            let gutter = GutterConfig::random(n, diameter, p.width.expect("validated"), seed)?
                .with_growth(p.growth.expect("validated"));
            let horizon = p.horizon.expect("validated");
            let limits = RunLimits {
                horizon,
                max_events: p.max_events,
            };
            let run = match cfg.engine() {
                "lazy" => billiards::run_lazy(&gutter, limits)?,
                "anticipatory" => billiards::run_anticipatory(&gutter, limits)?,
                _ => billiards::run_timedriven(&gutter, p.dt.expect("validated"), horizon)?,
            };
            out.file("events.csv", run.event_log().to_csv());
            out.file("final_state.csv", run.final_state_csv());
            out.metric("collisions", run.events.len());
            out.metric("advancements", run.advancements.len());
            out.metric("end_time", run.end_time);
            out.metric("outcome", format!("{:?}", run.outcome));
        }
        Model::Deposition => {
            let length = p.length.expect("validated");
            let sectors = p.sectors.expect("validated");
            let particles = match cfg.engine() {
                "sequential" => deposition::deposit_sequential(length, sectors, p.count.expect("validated"), seed)?,
                "cautious" => {
                    let ring = DepositionRing::new(length, sectors, seed)?;
                    deposition::deposit_parallel_cautious(&ring, p.horizon.expect("validated"), p.workers.expect("validated"))?
                }
                _ => {
                    let ring = DepositionRing::new(length, sectors, seed)?;
                    let (particles, run) = deposition::deposit_lockstep(&ring, p.horizon.expect("validated"), p.max_cycles)?;
                    out.metric("cycles", run.non_waiting.len());
                    out.metric("mean_non_waiting", run.mean_non_waiting());
                    particles
                }
            };
            out.metric("particles", particles.len());
            out.file("particles.csv", deposition::particles_csv(&particles));
            if !particles.is_empty() {
                let profile = DensityProfile::new(
                    &particles,
                    length,
                    p.height_bins.expect("validated"),
                    p.time_bins.expect("validated"),
                )?;
                out.file("density.csv", profile.to_csv());
            }
        }
        Model::Ising => {
            let params = IsingParams::new(p.temperature.expect("validated"), p.field.expect("validated"))?;
            let lattice = SpinLattice::random(p.n.expect("validated"), seed)?;
            let mut stream = RandomStream::new(seed, 1);
            let traj = match cfg.engine() {
                "uniformized" => {
                    let run = ising::run_uniformized(&lattice, &params, p.update_count.expect("validated"), &mut stream)?;
                    out.metric("updates", run.updates);
                    out.metric("acceptance_fraction", run.acceptance_fraction());
                    run.flips
                }
                engine => {
                    let variant = if engine == "class" {
                        KmcVariant::Class
                    } else {
                        KmcVariant::Tree
                    };
                    ising::run_dispenser_kmc(&lattice, &params, p.horizon.expect("validated"), &mut stream, variant)?
                }
            };
            out.metric("flips", traj.flips());
            out.metric("visits_per_selection", traj.visits_per_selection());
            out.metric("final_magnetization", traj.final_lattice.magnetization());
            out.file("magnetization.csv", traj.magnetization_csv());
            out.file("spins.csv", traj.final_lattice.to_csv());
        }
        Model::Telecom => {
            let market = match &p.graph_file {
                Some(path) => Market::from_csv_file(path, seed)?,
                None => Market::random_sparse(
                    p.n.expect("validated"),
                    p.degree.expect("validated"),
                    p.max_minutes.expect("validated"),
                    seed,
                )?,
            };
            let params = TelecomParams::new(
                Plan::friends_and_family(p.p1_same.expect("validated"), p.p1_other.expect("validated"))?,
                Plan::friends_and_family(p.p2_same.expect("validated"), p.p2_other.expect("validated"))?,
                p.alpha.expect("validated"),
            )?;
            let horizon = p.horizon.expect("validated");
            let mut stream = RandomStream::new(seed, 1);
            let run = match cfg.engine() {
                "event" => telecom::run_event_driven(&market, &params, horizon, &mut stream, Delegation::Tree)?,
                _ => telecom::run_time_driven(&market, &params, p.dt.expect("validated"), horizon, &mut stream)?,
            };
            let (a, b) = run.final_shares();
            out.metric("switches", run.events.len());
            out.metric("final_provider1", a);
            out.metric("final_provider2", b);
            out.metric("unhappy", run.unhappy);
            out.metric(
                "quiesced_at",
                run.quiesced_at.map_or_else(|| "none".to_string(), |t| t.to_string()),
            );
            out.file("switches.csv", run.events_csv());
            out.file("shares.csv", run.shares_csv());
        }
        Model::Circuitnet => {
            let n = p.n.expect("validated");
            let net = Network::uniform(n, p.trunks.expect("validated"))?;
            let traffic = Traffic::new(p.rate.expect("validated"), p.holding.expect("validated"))?;
            let policy = match p.policy.as_deref() {
                Some("alba") => Policy::Alba(LoadClasses::new(p.boundaries.clone().expect("validated"))?),
                _ => Policy::Lba,
            };
            let horizon = p.horizon.expect("validated");
            let run = if cfg.engine() == "syncrelax" {
                let model = CircuitRelax::new(net, traffic, policy, seed, horizon);
                let (run, relax) = circuitnet::run_network_relaxed(
                    &model,
                    p.step.expect("validated"),
                    p.workers.expect("validated"),
                )?;
                out.metric("strips", relax.strips.len());
                out.metric("iterations", join(&relax.iterations));
                out.metric("levels", join(&circuitnet::circuit_levels(&model, &relax)?));
                run
            } else {
                let eval = if p.eval.as_deref() == Some("anticipatory") {
                    Evaluation::Anticipatory
                } else {
                    Evaluation::Lazy
                };
                circuitnet::run_network(&net, &traffic, &policy, eval, horizon, seed)?
            };
            out.metric("offered", run.total_offered());
            out.metric("blocked", run.total_blocked());
            out.metric("blocking", run.blocking());
            out.file("blocking.csv", run.blocking_csv(n));
            out.file("counters.csv", run.counters_csv());
        }
    }
    Ok(out)
}

/// Runs `cfg` and writes its CSVs, `metrics.csv` and `config.toml` to the
/// configured output directory. Returns the output.
pub fn run_and_write(cfg: &SimConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let output = run_config(cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    write_outputs(&cfg.out_dir(), cfg, &output, elapsed)?;
    Ok(output)
}

pub fn write_outputs(dir: &Path, cfg: &SimConfig, output: &RunOutput, wall_seconds: f64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in &output.files {
        std::fs::write(dir.join(name), contents)?;
    }
    let mut metrics = String::from("metric,value\n");
    metrics.push_str(&format!("model,{}\nengine,{}\n", cfg.model, cfg.engine()));
    for (k, v) in &output.metrics {
        metrics.push_str(&format!("{k},{v}\n"));
    }
    metrics.push_str(&format!("wall_seconds,{wall_seconds}\n"));
    std::fs::write(dir.join("metrics.csv"), metrics)?;
    std::fs::write(dir.join("config.toml"), cfg.echo())?;
    Ok(())
}
