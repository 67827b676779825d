//! Run artifacts: `trace.csv`, `beams.csv`, `result.json` and `sweep.csv`,
//! with readers for each so the files can be loaded back.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values.

use std::fs;
use std::path::{Path, PathBuf};

use isac_core::{BeamDims, BeamformingState, IterationRecord, RunResult, Scenario, SensingMode, Termination};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

pub const TRACE: &str = "trace.csv";
pub const BEAMS: &str = "beams.csv";
pub const RESULT: &str = "result.json";
pub const SWEEP: &str = "sweep.csv";

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Csv { path: path.to_path_buf(), msg: e.to_string() }
}

fn to_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(path, e))?;
    write_atomic(path, &bytes)
}

/// Header and rows of a CSV file.
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| csv_err(path, e))?;
        Ok(Table { path: path.to_path_buf(), header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| csv_err(&self.path, format!("missing column {name}")))
    }

    /// Columns named `prefix0`, `prefix1`, ... in order.
    pub fn indexed_columns(&self, prefix: &str) -> Vec<usize> {
        (0..).map_while(|i| self.header.iter().position(|h| *h == format!("{prefix}{i}"))).collect()
    }

    pub fn get<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let s = &self.rows[row][col];
        s.parse().map_err(|_| {
            csv_err(&self.path, format!("row {}: column {}: cannot parse {s:?}", row + 1, self.header[col]))
        })
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        (0..self.rows.len()).map(|r| self.get(r, c)).collect()
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::GradTol => "grad_tol",
        Termination::MaxIter => "max_iter",
        Termination::LineSearchStall => "line_search_stall",
    }
}

pub fn parse_termination(s: &str) -> Option<Termination> {
    match s {
        "grad_tol" => Some(Termination::GradTol),
        "max_iter" => Some(Termination::MaxIter),
        "line_search_stall" => Some(Termination::LineSearchStall),
        _ => None,
    }
}

const TRACE_FIXED: [&str; 9] =
    ["iter", "objective", "utility", "grad_norm", "step", "beta", "backtracks", "power_residual", "tangency_residual"];

/// One row per iterate; per-target CRLBs in `crlb0..` and per-user rates
/// (bits/s) in `rate0..`.
pub fn write_trace(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let q = trace.first().map_or(0, |r| r.crlbs.len());
    let k = trace.first().map_or(0, |r| r.rates.len());
    let mut header: Vec<String> = TRACE_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend((0..q).map(|i| format!("crlb{i}")));
    header.extend((0..k).map(|i| format!("rate{i}")));
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|r| {
            let mut row = vec![
                r.iter.to_string(),
                num(r.objective),
                num(r.utility),
                num(r.grad_norm),
                num(r.step),
                num(r.beta),
                r.backtracks.to_string(),
                num(r.power_residual),
                num(r.tangency_residual),
            ];
            row.extend(r.crlbs.iter().map(|&x| num(x)));
            row.extend(r.rates.iter().map(|&x| num(x)));
            row
        })
        .collect();
    to_csv(path, &header, &rows)
}

pub fn read_trace(path: &Path) -> Result<Vec<IterationRecord>> {
    let t = Table::read(path)?;
    let fixed: Vec<usize> = TRACE_FIXED.iter().map(|c| t.column(c)).collect::<Result<_>>()?;
    let crlb_cols = t.indexed_columns("crlb");
    let rate_cols = t.indexed_columns("rate");
    (0..t.rows.len())
        .map(|r| {
            Ok(IterationRecord {
                iter: t.get(r, fixed[0])?,
                objective: t.get(r, fixed[1])?,
                utility: t.get(r, fixed[2])?,
                grad_norm: t.get(r, fixed[3])?,
                step: t.get(r, fixed[4])?,
                beta: t.get(r, fixed[5])?,
                backtracks: t.get(r, fixed[6])?,
                power_residual: t.get(r, fixed[7])?,
                tangency_residual: t.get(r, fixed[8])?,
                crlbs: crlb_cols.iter().map(|&c| t.get(r, c)).collect::<Result<_>>()?,
                rates: rate_cols.iter().map(|&c| t.get(r, c)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Stacked order: for each subcarrier, blocks `0..K` are the communication
/// beams and block `K` is the sensing beam.
pub fn write_beams(path: &Path, beams: &BeamformingState) -> Result<()> {
    let d = beams.dims();
    let header: Vec<String> = ["subcarrier", "block", "antenna", "re", "im"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::with_capacity(d.len());
    for i in 0..d.n_sc {
        for b in 0..d.blocks() {
            for (p, z) in beams.block(i, b).iter().enumerate() {
                rows.push(vec![i.to_string(), b.to_string(), p.to_string(), num(z.re), num(z.im)]);
            }
        }
    }
    to_csv(path, &header, &rows)
}

pub fn read_beams(path: &Path) -> Result<BeamformingState> {
    let t = Table::read(path)?;
    let cols: Vec<usize> =
        ["subcarrier", "block", "antenna", "re", "im"].iter().map(|c| t.column(c)).collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(t.rows.len());
    let (mut n_sc, mut blocks, mut n_tx) = (0, 0, 0);
    for r in 0..t.rows.len() {
        let (i, b, p): (usize, usize, usize) = (t.get(r, cols[0])?, t.get(r, cols[1])?, t.get(r, cols[2])?);
        let z = Complex64::new(t.get(r, cols[3])?, t.get(r, cols[4])?);
        n_sc = n_sc.max(i + 1);
        blocks = blocks.max(b + 1);
        n_tx = n_tx.max(p + 1);
        entries.push((i, b, p, z));
    }
    if blocks < 2 {
        return Err(csv_err(path, "need at least one communication block and the sensing block"));
    }
    let dims = BeamDims { n_users: blocks - 1, n_sc, n_tx };
    if entries.len() != dims.len() {
        return Err(csv_err(
            path,
            format!("{} rows, expected {} for {n_sc}x{blocks}x{n_tx}", entries.len(), dims.len()),
        ));
    }
    let mut state = BeamformingState::zeros(dims);
    let mut seen = vec![false; dims.len()];
    for (i, b, p, z) in entries {
        let at = dims.offset(i, b) + p;
        if std::mem::replace(&mut seen[at], true) {
            return Err(csv_err(path, format!("duplicate entry ({i}, {b}, {p})")));
        }
        state.as_mut_slice()[at] = z;
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    /// tr(J^-1) in normalized delay/Doppler units squared.
    pub crlb: f64,
    /// Bound on the normalized-delay variance, `[J^-1]_11`.
    pub delay_var_bound: f64,
    /// `sqrt([J^-1]_11) / delta_f`, seconds.
    pub delay_rmse_bound_s: f64,
    /// Delay bound times the propagation speed, metres of bistatic path.
    pub path_rmse_bound_m: f64,
    /// Ground-truth normalized delay and Doppler of the BS (monostatic) link.
    pub tau_bar_bs: f64,
    pub fd_bar_bs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub mode: SensingMode,
    pub termination: Termination,
    pub iterations: usize,
    pub evaluations: usize,
    pub objective: f64,
    pub utility: f64,
    pub sum_crlb: f64,
    pub max_crlb: f64,
    pub min_crlb: f64,
    pub crlbs: Vec<f64>,
    /// Bits/s.
    pub rates: Vec<f64>,
    pub min_rate: f64,
    pub mean_rate: f64,
    pub r_min: f64,
    /// `max_k [r_min - R_k]_+`, bits/s.
    pub feasibility_residual: f64,
    pub targets: Vec<TargetSummary>,
    pub config: Value,
    /// Only field that varies between identical invocations.
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, res: &RunResult, mode: SensingMode, r_min: f64, config: Value) -> Result<Self> {
        let e = &res.final_eval;
        let p = scenario.params();
        let c0 = scenario.geometry().c0;
        let targets = e
            .fims
            .iter()
            .enumerate()
            .map(|(q, j)| {
                let delay_var_bound = j.j22 / j.det();
                let delay_rmse = delay_var_bound.sqrt() / p.delta_f;
                let (tau_bar_bs, fd_bar_bs) = scenario.link_delay_doppler(q, scenario.bs_node())?;
                Ok(TargetSummary {
                    crlb: e.crlbs[q],
                    delay_var_bound,
                    delay_rmse_bound_s: delay_rmse,
                    path_rmse_bound_m: delay_rmse * c0,
                    tau_bar_bs,
                    fd_bar_bs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let fold = |f: fn(f64, f64) -> f64, init: f64, v: &[f64]| v.iter().copied().fold(init, f);
        Ok(RunSummary {
            seed: scenario_seed(&config),
            mode,
            termination: res.termination,
            iterations: res.iterations(),
            evaluations: res.evaluations,
            objective: e.objective,
            utility: e.utility,
            sum_crlb: e.crlbs.iter().sum(),
            max_crlb: fold(f64::max, f64::NEG_INFINITY, &e.crlbs),
            min_crlb: fold(f64::min, f64::INFINITY, &e.crlbs),
            crlbs: e.crlbs.clone(),
            rates: e.rates.clone(),
            min_rate: fold(f64::min, f64::INFINITY, &e.rates),
            mean_rate: e.rates.iter().sum::<f64>() / e.rates.len() as f64,
            r_min,
            feasibility_residual: e.max_shortfall(),
            targets,
            config,
            wall_time_s: res.wall_time.as_secs_f64(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Json { path: path.to_path_buf(), msg: e.to_string() })
    }
}

fn scenario_seed(config: &Value) -> u64 {
    config["scenario"]["seed"].as_u64().unwrap_or(0)
}

/// Writes the run artifacts selected by the output formats.
pub fn write_run(dir: &Path, summary: &RunSummary, res: &RunResult, csv: bool, json: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    if csv {
        write_trace(&dir.join(TRACE), &res.trace)?;
        write_beams(&dir.join(BEAMS), &res.final_beams)?;
    }
    if json {
        summary.write(&dir.join(RESULT))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mode: SensingMode,
    pub sum_crlb: f64,
    pub max_crlb: f64,
    pub min_crlb: f64,
    pub crlbs: Vec<f64>,
    pub min_rate: f64,
    pub mean_rate: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub wall_time: f64,
    /// Sub-run directory relative to the sweep directory.
    pub run_dir: String,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let q = rows.iter().map(|r| r.crlbs.len()).max().unwrap_or(0);
    let mut header: Vec<String> =
        ["value", "mode", "sum_crlb", "max_crlb", "min_crlb"].iter().map(|s| s.to_string()).collect();
    header.extend((0..q).map(|i| format!("crlb{i}")));
    header.extend(
        ["min_rate", "mean_rate", "iterations", "termination", "wall_time", "run_dir"].iter().map(|s| s.to_string()),
    );
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row =
                vec![num(r.value), r.mode.as_str().to_string(), num(r.sum_crlb), num(r.max_crlb), num(r.min_crlb)];
            row.extend((0..q).map(|i| r.crlbs.get(i).map_or(String::new(), |&x| num(x))));
            row.extend([
                num(r.min_rate),
                num(r.mean_rate),
                r.iterations.to_string(),
                termination_name(r.termination).to_string(),
                num(r.wall_time),
                r.run_dir.clone(),
            ]);
            row
        })
        .collect();
    to_csv(path, &header, &body)
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let t = Table::read(path)?;
    let col = |n: &str| t.column(n);
    let (value, mode, sum, max, min) =
        (col("value")?, col("mode")?, col("sum_crlb")?, col("max_crlb")?, col("min_crlb")?);
    let (min_rate, mean_rate, iters, term, wall, dir) = (
        col("min_rate")?,
        col("mean_rate")?,
        col("iterations")?,
        col("termination")?,
        col("wall_time")?,
        col("run_dir")?,
    );
    let crlb_cols = t.indexed_columns("crlb");
    (0..t.rows.len())
        .map(|r| {
            let m: String = t.get(r, mode)?;
            let ts: String = t.get(r, term)?;
            Ok(SweepRow {
                value: t.get(r, value)?,
                mode: m.parse().map_err(|e| csv_err(path, e))?,
                sum_crlb: t.get(r, sum)?,
                max_crlb: t.get(r, max)?,
                min_crlb: t.get(r, min)?,
                crlbs: crlb_cols
                    .iter()
                    .filter(|&&c| !t.rows[r][c].is_empty())
                    .map(|&c| t.get(r, c))
                    .collect::<Result<_>>()?,
                min_rate: t.get(r, min_rate)?,
                mean_rate: t.get(r, mean_rate)?,
                iterations: t.get(r, iters)?,
                termination: parse_termination(&ts)
                    .ok_or_else(|| csv_err(path, format!("row {}: unknown termination {ts:?}", r + 1)))?,
                wall_time: t.get(r, wall)?,
                run_dir: t.get(r, dir)?,
            })
        })
        .collect()
}
