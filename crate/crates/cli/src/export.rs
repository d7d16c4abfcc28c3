//! CSV time series and run summaries.

use std::io::Write;

use gridconsensus_core::sim::{Mode, SimulationRecord};
use serde::Serialize;

pub const COLUMNS: [&str; 12] = [
    "k",
    "node",
    "p_D",
    "p_d",
    "delta_pG",
    "p_G",
    "p_F_net",
    "p_net",
    "p_e",
    "coord_iters",
    "gen_iters",
    "flow_iters",
];

/// Seventeen significant digits, enough to read back the exact `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per node and one `total` row per step.
pub fn write_timeseries<W: Write>(record: &SimulationRecord, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for s in &record.steps {
        let iters = [s.coord_iters, s.gen_iters, s.flow_iters].map(|v| v.to_string());
        let demand = fmt_f64(s.demand);
        for i in 0..record.node_count {
            let values = [
                s.desired[i],
                s.delta[i],
                s.p_gen[i],
                s.flow_net[i],
                s.p_net[i],
                s.error[i],
            ];
            let mut row = vec![s.k.to_string(), (i + 1).to_string(), demand.clone()];
            row.extend(values.iter().map(|&v| fmt_f64(v)));
            row.extend(iters.iter().cloned());
            w.write_record(&row)?;
        }
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        let totals = [
            sum(&s.desired),
            sum(&s.delta),
            sum(&s.p_gen),
            sum(&s.flow_net),
            sum(&s.p_net),
            sum(&s.error),
        ];
        let mut row = vec![s.k.to_string(), "total".to_string(), demand];
        row.extend(totals.iter().map(|&v| fmt_f64(v)));
        row.extend(iters);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: String,
    pub steps: usize,
    pub nodes: usize,
    pub max_abs_error: f64,
    pub max_balance_residual: f64,
    pub max_consensus_iters: usize,
    pub max_abs_flow: f64,
    pub net_power_warnings: usize,
    pub failed_steps: Vec<usize>,
    pub audits_passed: bool,
}

impl Summary {
    pub fn new(record: &SimulationRecord) -> Self {
        Self {
            mode: match record.mode {
                Mode::WithCoordination => "with-coordination",
                Mode::WithoutCoordination => "without-coordination",
            }
            .to_string(),
            steps: record.steps.len(),
            nodes: record.node_count,
            max_abs_error: record.max_abs_error(),
            max_balance_residual: record.max_balance_residual(),
            max_consensus_iters: record.max_consensus_iters(),
            max_abs_flow: record.max_abs_flow(),
            net_power_warnings: record.net_warnings(),
            failed_steps: record.failed_steps(),
            audits_passed: record.audits_passed(),
        }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "mode                  {}", self.mode)?;
        writeln!(f, "steps                 {}", self.steps)?;
        writeln!(f, "nodes                 {}", self.nodes)?;
        writeln!(f, "max |p_e|             {:.3e}", self.max_abs_error)?;
        writeln!(f, "max balance residual  {:.3e}", self.max_balance_residual)?;
        writeln!(f, "max consensus iters   {}", self.max_consensus_iters)?;
        writeln!(f, "max |flow|            {:.6}", self.max_abs_flow)?;
        writeln!(f, "net-power warnings    {}", self.net_power_warnings)?;
        if !self.failed_steps.is_empty() {
            writeln!(f, "failed steps          {:?}", self.failed_steps)?;
        }
        write!(
            f,
            "audits                {}",
            if self.audits_passed { "pass" } else { "FAIL" }
        )
    }
}
