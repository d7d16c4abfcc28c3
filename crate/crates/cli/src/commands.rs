use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use gridconsensus_core::coordination::{
    check_realizability, coordinate_closed_form, coordinate_distributed, CoordinationError,
};
use gridconsensus_core::sim::{
    self, generate_demand_profile, generate_desired_profile, AuditMode, DemandSource,
    ScenarioConfig,
};
use log::{debug, info};
use thiserror::Error;

use crate::config::{ConfigError, ConfigFile, ModeSpec};
use crate::export::{fmt_f64, write_timeseries, Summary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Usage(String),
    #[error("audit failed at steps {0:?}")]
    AuditFailed(Vec<usize>),
}

impl CliError {
    /// 1 for domain and validation failures, 2 for I/O and parse failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(e) if e.is_parse_or_io() => 2,
            CliError::Io { .. } | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        let context = "writing CSV".to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io { context, source },
            other => CliError::Io {
                context,
                source: io::Error::other(format!("{other:?}")),
            },
        }
    }
}

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<ModeSpec>,
    pub continue_on_audit_failure: bool,
}

impl Overrides {
    pub fn load(&self) -> Result<ConfigFile, CliError> {
        let mut file = match &self.config {
            Some(path) => {
                info!("loading {}", path.display());
                ConfigFile::load(path)?
            }
            None => {
                info!("using the built-in six-node configuration");
                ConfigFile::builtin(self.mode.unwrap_or(ModeSpec::WithCoordination))
            }
        };
        if let Some(seed) = self.seed {
            file.seed = seed;
        }
        if let Some(mode) = self.mode {
            file.set_mode(mode);
        }
        if self.continue_on_audit_failure {
            file.audit = crate::config::AuditSpec::ContinueAndFlag;
        }
        Ok(file)
    }

    pub fn scenario(&self) -> Result<ScenarioConfig, CliError> {
        Ok(self.load()?.to_scenario()?)
    }
}

fn range(i: gridconsensus_core::coordination::Interval) -> String {
    format!("[{}, {}]", i.lo, i.hi)
}

pub fn validate<W: Write>(overrides: &Overrides, out: &mut W) -> Result<(), CliError> {
    let s = overrides.scenario()?;
    let caps = &s.capacities.base;
    let w =
        |out: &mut W, line: String| writeln!(out, "{line}").map_err(CliError::io("writing report"));

    w(
        out,
        format!(
            "topology: {} nodes, {} edges, connected{}",
            s.node_count(),
            s.topology.edges().len(),
            if s.topology.is_tree() { ", tree" } else { "" }
        ),
    )?;
    w(
        out,
        format!("capacities: {} nodes, all ranges ordered", caps.len()),
    )?;
    let plans = std::iter::once(caps).chain(s.capacities.schedule.iter().flatten());
    for (idx, plan) in plans.enumerate() {
        for node in plan.containment_violations() {
            let c = plan.get(node);
            let place = if idx == 0 {
                String::new()
            } else {
                format!(" at step {idx}")
            };
            w(
                out,
                format!(
                "warning: node {} generation range {} is not inside its net-power range {}{place}",
                node + 1,
                range(c.gen),
                range(c.net)
            ),
            )?;
        }
    }

    match (&s.demand, &s.desired) {
        (Some(DemandSource::UniformRandom), _) => {
            w(
                out,
                format!(
                    "demand: seeded uniform over [{}, {}] per step",
                    caps.gen_lo_sum(),
                    caps.gen_hi_sum()
                ),
            )?;
        }
        (Some(d @ DemandSource::Explicit(values)), _) => {
            for (k, &demand) in values.iter().enumerate() {
                let r = check_realizability(demand, s.capacities.at(k + 1));
                w(out, format!("demand step {}: {r}", k + 1))?;
            }
            generate_demand_profile(d, &s.capacities, s.horizon, s.seed)
                .map_err(|e| CliError::Domain(e.to_string()))?;
        }
        (None, Some(d)) => {
            generate_desired_profile(d, &s.capacities, s.horizon, s.seed)
                .map_err(|e| CliError::Domain(e.to_string()))?;
            w(
                out,
                format!(
                    "desired: {} profile within net-power bounds, totals within [{}, {}]",
                    match d {
                        sim::DesiredSource::UniformRandom => "seeded random",
                        sim::DesiredSource::Explicit(_) => "explicit",
                    },
                    caps.gen_lo_sum(),
                    caps.gen_hi_sum()
                ),
            )?;
        }
        (None, None) => unreachable!("scenario validation requires a source"),
    }
    w(out, "ok".into())
}

pub fn coordinate<W: Write>(
    overrides: &Overrides,
    demand: f64,
    out_dir: Option<&Path>,
    out: &mut W,
) -> Result<(), CliError> {
    let s = overrides.scenario()?;
    let caps = &s.capacities.base;
    let exact = coordinate_closed_form(demand, caps).map_err(|e| coordination_error(demand, e))?;
    let dist = coordinate_distributed(demand, caps, &s.topology, s.leader, &s.criteria)
        .map_err(|e| coordination_error(demand, e))?;
    debug!("distributed coordination took {} rounds", dist.iters);

    let mut report = String::new();
    report.push_str(&format!(
        "{:>4}  {:>20}  {:>20}  {:>10}\n",
        "node", "closed form", "distributed", "deviation"
    ));
    let mut max_dev: f64 = 0.0;
    for (i, (a, b)) in exact.desired.iter().zip(&dist.desired).enumerate() {
        let dev = (a - b).abs();
        max_dev = max_dev.max(dev);
        report.push_str(&format!(
            "{:>4}  {a:>20.12}  {b:>20.12}  {dev:>10.2e}\n",
            i + 1
        ));
    }
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    report.push_str(&format!(
        "{:>4}  {:>20.12}  {:>20.12}\n",
        "sum",
        sum(&exact.desired),
        sum(&dist.desired)
    ));
    report.push_str(&format!(
        "max deviation {max_dev:.3e}, consensus rounds {}\n",
        dist.iters
    ));
    out.write_all(report.as_bytes())
        .map_err(CliError::io("writing report"))?;

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
        let path = dir.join("coordinate.csv");
        let file =
            File::create(&path).map_err(CliError::io(format!("creating {}", path.display())))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["node", "closed_form", "distributed"])?;
        for (i, (a, b)) in exact.desired.iter().zip(&dist.desired).enumerate() {
            w.write_record([(i + 1).to_string(), fmt_f64(*a), fmt_f64(*b)])?;
        }
        w.flush()
            .map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    Ok(())
}

fn coordination_error(demand: f64, e: CoordinationError) -> CliError {
    match e {
        CoordinationError::NotRealizable(r) => CliError::Domain(format!(
            "demand {demand} is not realizable: lower margin {}, upper margin {} (needs both >= 0)",
            r.lower_margin(),
            r.upper_margin()
        )),
        e => CliError::Domain(e.to_string()),
    }
}

pub fn run<W: Write>(
    overrides: &Overrides,
    out_dir: &Path,
    out: &mut W,
) -> Result<Summary, CliError> {
    let s = overrides.scenario()?;
    fs::create_dir_all(out_dir).map_err(CliError::io(format!("creating {}", out_dir.display())))?;
    let csv_path = out_dir.join("timeseries.csv");
    let csv_file = File::create(&csv_path)
        .map_err(CliError::io(format!("creating {}", csv_path.display())))?;

    info!("running {} steps on {} nodes", s.horizon, s.node_count());
    let record = sim::run(&s).map_err(|e| CliError::Domain(e.to_string()))?;
    write_timeseries(&record, BufWriter::new(csv_file))?;

    let summary = Summary::new(&record);
    let json_path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&json_path, json + "\n")
        .map_err(CliError::io(format!("writing {}", json_path.display())))?;
    writeln!(out, "{summary}").map_err(CliError::io("writing report"))?;
    writeln!(
        out,
        "wrote {} and {}",
        csv_path.display(),
        json_path.display()
    )
    .map_err(CliError::io("writing report"))?;

    if s.audit_mode == AuditMode::ContinueAndFlag && !summary.audits_passed {
        return Err(CliError::AuditFailed(summary.failed_steps.clone()));
    }
    Ok(summary)
}
