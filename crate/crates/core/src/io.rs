//! CSV artifacts and their readers.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! file parses back to the bit-identical values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::{CostReport, FlowSums, WorkPumpReport};
use crate::solver::Trajectory;
use crate::stochastic::StochasticTrajectory;
use crate::symplectic::PhasePoint;

/// The tabular content of a trajectory file: one row per state, the final
/// row without velocity, gap or sample columns.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub velocities: Vec<PhasePoint>,
    pub gaps: Vec<f64>,
    /// Sampled forces `η`, present for stochastic runs.
    pub forces: Option<Vec<Vec<f64>>>,
    pub acceptance_rates: Option<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            dim: traj.dim(),
            times: traj.times.clone(),
            states: traj.states.clone(),
            velocities: traj.velocities.clone(),
            gaps: traj.residual_gaps.clone(),
            forces: None,
            acceptance_rates: None,
        }
    }

    pub fn from_stochastic(run: &StochasticTrajectory) -> Self {
        Self {
            forces: Some(run.forces().map(|f| f.to_vec()).collect()),
            acceptance_rates: Some(run.acceptance_rates.clone()),
            ..Self::from_trajectory(&run.path)
        }
    }

    fn header(&self) -> Vec<String> {
        let n = self.dim;
        let mut cols = vec!["t".to_string()];
        for prefix in ["q", "p", "qdot", "pdot"] {
            cols.extend((0..n).map(|i| format!("{prefix}{i}")));
        }
        cols.push("gap".into());
        if self.forces.is_some() {
            cols.extend((0..n).map(|i| format!("eta{i}")));
            cols.push("acceptance_rate".into());
        }
        cols
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e)
}

pub fn write_trajectory_csv(table: &TrajectoryTable, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table.header()).map_err(csv_err)?;
    let steps = table.velocities.len();
    for (k, (t, z)) in table.times.iter().zip(&table.states).enumerate() {
        let mut row = vec![num(*t)];
        row.extend(z.q.iter().chain(&z.p).copied().map(num));
        if k < steps {
            let v = &table.velocities[k];
            row.extend(v.q.iter().chain(&v.p).copied().map(num));
            row.push(num(table.gaps[k]));
        } else {
            row.extend(std::iter::repeat_n(String::new(), 2 * table.dim + 1));
        }
        if let (Some(f), Some(a)) = (&table.forces, &table.acceptance_rates) {
            if k < steps {
                row.extend(f[k].iter().copied().map(num));
                row.push(num(a[k]));
            } else {
                row.extend(std::iter::repeat_n(String::new(), table.dim + 1));
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_cell(cell: &str, row: usize, col: &str) -> Result<f64> {
    cell.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}, column {col}: not a number: {cell:?}")))
}

pub fn read_trajectory_csv(input: impl Read) -> Result<TrajectoryTable> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let n = header.iter().filter(|c| c.starts_with('q') && !c.starts_with("qdot")).count();
    let stochastic = header.iter().any(|c| c == "acceptance_rate");
    let mut table = TrajectoryTable {
        dim: n,
        times: vec![],
        states: vec![],
        velocities: vec![],
        gaps: vec![],
        forces: stochastic.then(Vec::new),
        acceptance_rates: stochastic.then(Vec::new),
    };
    if n == 0 || table.header() != header {
        return Err(Error::Parse(format!("unexpected trajectory header {header:?}")));
    }
    let records: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    let rows = records.len();
    for (k, rec) in records.iter().enumerate() {
        let get = |j: usize| parse_cell(&rec[j], k, &header[j]);
        let vec_at = |from: usize| (from..from + n).map(get).collect::<Result<Vec<f64>>>();
        table.times.push(get(0)?);
        table.states.push(PhasePoint::new(vec_at(1)?, vec_at(1 + n)?)?);
        if k + 1 < rows {
            table.velocities.push(PhasePoint::new(vec_at(1 + 2 * n)?, vec_at(1 + 3 * n)?)?);
            table.gaps.push(get(1 + 4 * n)?);
            if let (Some(f), Some(a)) = (&mut table.forces, &mut table.acceptance_rates) {
                f.push(vec_at(2 + 4 * n)?);
                a.push(get(2 + 5 * n)?);
            }
        }
    }
    Ok(table)
}

/// One line per quantity; the reader gives back the same pairs.
pub fn write_key_values(pairs: &[(String, f64)], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "value"]).map_err(csv_err)?;
    for (k, v) in pairs {
        w.write_record([k.as_str(), &num(*v)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_key_values(input: impl Read) -> Result<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = vec![];
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("row {k}: expected two columns")));
        }
        out.push((rec[0].to_string(), parse_cell(&rec[1], k, "value")?));
    }
    Ok(out)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn cost_report_pairs(r: &CostReport) -> Vec<(String, f64)> {
    [
        ("alpha", r.alpha),
        ("beta", r.beta),
        ("resolution", r.resolution as f64),
        ("step", r.step),
        ("mu_0", r.mu_0),
        ("mu_t", r.mu_t),
        ("cost", r.cost),
        ("lhs", r.lhs),
        ("rhs", r.rhs),
        ("slack", r.slack),
        ("lhs_error", r.lhs_error),
        ("rhs_error", r.rhs_error),
        ("tol_total", r.tol_total),
        ("inequality_holds", flag(r.inequality_holds)),
        ("equality_tight", flag(r.equality_tight)),
        ("informative", flag(r.informative)),
        ("identity_residual", r.identity_residual),
        ("max_gap", r.max_gap),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn work_pump_pairs(r: &WorkPumpReport) -> Vec<(String, f64)> {
    [
        ("mu_0", r.mu_0),
        ("mu_t", r.mu_t),
        ("lhs", r.lhs),
        ("rhs", r.rhs),
        ("tol_total", r.tol_total),
        ("corollary_holds", flag(r.corollary_holds)),
        ("positive_work", flag(r.positive_work)),
        ("measure_increased", flag(r.measure_increased)),
        ("hypothesis_d_min", r.hypothesis_d_min),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Both sides of the cost inequality at one refinement level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub resolution: usize,
    pub step: f64,
    pub mu_0: f64,
    pub mu_t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl LevelRow {
    pub fn new(sums: &FlowSums, step: f64, beta: f64) -> Self {
        Self {
            resolution: sums.resolution,
            step,
            mu_0: sums.mu_0,
            mu_t: sums.mu_t,
            lhs: sums.mu_t - sums.mu_0,
            rhs: beta * sums.cost,
        }
    }
}

pub fn write_levels_csv(rows: &[LevelRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_levels_csv(input: impl Read) -> Result<Vec<LevelRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)
}
