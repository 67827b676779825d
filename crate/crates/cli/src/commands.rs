//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use isac_core::optimizer::init_beams;
use isac_core::{
    evaluate, fd_gradient_oracle, grad_alpha_fairness, grad_objective, grad_rate, metrics, optimize, relative_error,
    BeamDims, BeamformingState, InitStrategy, ObjectiveParams, OptimizerConfig, Scenario, SensingMode, FD_STEP,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::artifacts::{
    read_beams, read_sweep, read_trace, termination_name, write_atomic, write_run, write_sweep, RunSummary, SweepRow,
    RESULT, SWEEP, TRACE,
};
use crate::config::{ExperimentConfig, SweepParam};
use crate::error::{CliError, Result};

/// `--mode` on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeChoice {
    Multistatic,
    Monostatic,
    Both,
}

impl ModeChoice {
    fn modes(self) -> Vec<SensingMode> {
        match self {
            ModeChoice::Multistatic => vec![SensingMode::Multistatic],
            ModeChoice::Monostatic => vec![SensingMode::Monostatic],
            ModeChoice::Both => vec![SensingMode::Multistatic, SensingMode::Monostatic],
        }
    }
}

/// Command-line overrides shared by `run` and `sweep`.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub mode: Option<ModeChoice>,
    pub seed: Option<u64>,
}

fn load(config: &Path, ov: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = ov.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(out) = &ov.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn provided_beams(cfg: &ExperimentConfig) -> Result<Option<BeamformingState>> {
    cfg.initial_beams.as_deref().map(read_beams).transpose()
}

/// Optimizes one configuration and writes its artifacts to `dir`.
fn run_one(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    opt: &OptimizerConfig,
    beams: Option<&BeamformingState>,
    dir: &Path,
) -> Result<RunSummary> {
    let res = optimize(scenario, opt, beams)?;
    let mut echo = cfg.echo(scenario);
    echo["optimizer"] = serde_json::to_value(opt).expect("optimizer config serializes");
    let summary = RunSummary::new(scenario, &res, opt.mode, opt.r_min, echo)?;
    write_run(dir, &summary, &res, cfg.output.csv, cfg.output.json)?;
    Ok(summary)
}

fn one_line(s: &RunSummary) -> String {
    format!(
        "{}: {} after {} iterations, sum CRLB {:.4e}, max CRLB {:.4e}, min rate {:.3} Mbps",
        s.mode.as_str(),
        termination_name(s.termination),
        s.iterations,
        s.sum_crlb,
        s.max_crlb,
        s.min_rate / 1e6
    )
}

/// `run`: one optimization per requested mode. With `--mode both` each mode
/// writes to its own subdirectory.
pub fn cmd_run(config: &Path, ov: &Overrides) -> Result<Vec<RunSummary>> {
    let cfg = load(config, ov)?;
    let scenario = cfg.scenario.build(None)?;
    let beams = provided_beams(&cfg)?;
    let choice = ov.mode.unwrap_or(match cfg.optimizer.mode {
        SensingMode::Multistatic => ModeChoice::Multistatic,
        SensingMode::Monostatic => ModeChoice::Monostatic,
    });
    let mut out = Vec::new();
    for mode in choice.modes() {
        let opt = OptimizerConfig { mode, ..cfg.optimizer };
        let dir = if choice == ModeChoice::Both { cfg.output.dir.join(mode.as_str()) } else { cfg.output.dir.clone() };
        let s = run_one(&cfg, &scenario, &opt, beams.as_ref(), &dir)?;
        println!("{}  -> {}", one_line(&s), dir.display());
        out.push(s);
    }
    Ok(out)
}

fn value_label(param: SweepParam, v: f64) -> String {
    match param {
        SweepParam::NUsers => format!("{}", v as usize),
        _ => format!("{v}"),
    }
}

/// `sweep`: one sub-run per (value, mode) with a fixed seed, aggregated into
/// `sweep.csv`.
pub fn cmd_sweep(config: &Path, ov: &Overrides) -> Result<Vec<SweepRow>> {
    let cfg = load(config, ov)?;
    let Some(sweep) = cfg.sweep.clone() else {
        return Err(CliError::invalid("sweep: missing section (parameter and values)"));
    };
    let modes = match (ov.mode, &sweep.modes) {
        (Some(m), _) => m.modes(),
        (None, Some(m)) if !m.is_empty() => m.clone(),
        _ => vec![cfg.optimizer.mode],
    };
    let beams = provided_beams(&cfg)?;
    let base = if sweep.parameter == SweepParam::NUsers { None } else { Some(cfg.scenario.build(None)?) };
    fs::create_dir_all(&cfg.output.dir).map_err(|e| CliError::io(&cfg.output.dir, e))?;
    let mut rows = Vec::new();
    for &v in &sweep.values {
        let built;
        let scenario = match &base {
            Some(s) => s,
            None => {
                built = cfg.scenario.build(Some(v as usize))?;
                &built
            }
        };
        for &mode in &modes {
            let mut opt = OptimizerConfig { mode, ..cfg.optimizer };
            match sweep.parameter {
                SweepParam::Alpha => opt.alpha = v,
                SweepParam::RMin => opt.r_min = v,
                SweepParam::NUsers => {}
            }
            let label = format!("{}_{}_{}", sweep.parameter.as_str(), value_label(sweep.parameter, v), mode.as_str());
            let run_dir = Path::new("runs").join(&label);
            let init = if sweep.parameter == SweepParam::NUsers { None } else { beams.as_ref() };
            let s = run_one(&cfg, scenario, &opt, init, &cfg.output.dir.join(&run_dir))?;
            println!("{} = {}  {}", sweep.parameter.as_str(), value_label(sweep.parameter, v), one_line(&s));
            rows.push(SweepRow {
                value: v,
                mode,
                sum_crlb: s.sum_crlb,
                max_crlb: s.max_crlb,
                min_crlb: s.min_crlb,
                crlbs: s.crlbs.clone(),
                min_rate: s.min_rate,
                mean_rate: s.mean_rate,
                iterations: s.iterations,
                termination: s.termination,
                wall_time: s.wall_time_s,
                run_dir: run_dir.to_string_lossy().into_owned(),
            });
        }
    }
    write_sweep(&cfg.output.dir.join(SWEEP), &rows)?;
    let meta = json!({
        "parameter": sweep.parameter.as_str(),
        "values": sweep.values,
        "modes": modes.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
    });
    write_atomic(
        &cfg.output.dir.join("sweep.json"),
        (serde_json::to_string_pretty(&meta).expect("serializes") + "\n").as_bytes(),
    )?;
    Ok(rows)
}

/// Worst relative error of one gradient family over all samples.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyError {
    pub family: String,
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub families: Vec<FamilyError>,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.families.iter().all(|f| f.worst < self.tolerance)
    }
}

/// Scales the block holding the largest gradient entry by 1.01.
fn perturb(g: &mut [Complex64], dims: BeamDims) {
    let (at, _) =
        g.iter().enumerate().fold((0, -1.0), |best, (n, c)| if c.norm() > best.1 { (n, c.norm()) } else { best });
    let start = at - at % dims.n_tx;
    g[start..start + dims.n_tx].iter_mut().for_each(|c| *c *= 1.01);
}

/// `check-grad`: analytic gradients against central differences on
/// `samples` random on-sphere states.
///
/// Families: each user rate, the utility at alpha 0 and 1, and the penalized
/// objective with the configured alpha and mode. For the objective the rate
/// floor is set 30% above the best user's rate so every penalty term is
/// active, and rho is chosen so the penalty equals the utility at the sample.
pub fn cmd_check_grad(config: &Path, samples: usize, seed: Option<u64>, perturbed: bool) -> Result<GradCheck> {
    if samples == 0 {
        return Err(CliError::invalid("samples: must be >= 1"));
    }
    let cfg = load(config, &Overrides { seed, ..Default::default() })?;
    let scenario = cfg.scenario.build(None)?;
    let dims = BeamDims::of(&scenario);
    let mode = cfg.optimizer.mode;
    let k_users = scenario.n_users();
    let mut worst = vec![0.0f64; k_users + 3];
    let state = |z: &[Complex64]| BeamformingState::from_stacked(dims, z.to_vec()).expect("dimensions match");

    for s in 0..samples {
        let sample_seed = cfg.scenario.seed.wrapping_add(s as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let p = init_beams(&scenario, InitStrategy::RandomGaussian { seed: sample_seed }, &mut rng)?;
        let b = state(p.as_slice());
        let mut compare = |slot: usize, mut g: Vec<Complex64>, fd: Vec<Complex64>| {
            if perturbed {
                perturb(&mut g, dims);
            }
            worst[slot] = worst[slot].max(relative_error(&g, &fd));
        };

        for k in 0..k_users {
            let g = grad_rate(&scenario, &b, k)?.into_vec();
            let fd = fd_gradient_oracle(|z| metrics::rate(&scenario, &state(z), k), b.as_slice(), FD_STEP)?;
            compare(k, g, fd);
        }
        for (slot, alpha) in [(k_users, 0.0), (k_users + 1, 1.0)] {
            let g = grad_alpha_fairness(&scenario, &b, alpha, mode)?.into_vec();
            let fd = fd_gradient_oracle(
                |z| metrics::alpha_fairness(&scenario, &state(z), alpha, mode).unwrap_or(f64::NAN),
                b.as_slice(),
                FD_STEP,
            )?;
            compare(slot, g, fd);
        }

        let probe = ObjectiveParams { alpha: cfg.optimizer.alpha, rho: 0.0, r_min: 0.0, mode };
        let e = evaluate(&scenario, &b, &probe)?;
        let r_min = 1.3 * e.rates.iter().copied().fold(0.0, f64::max);
        let sq: f64 = e.rates.iter().map(|r| (r_min - r).powi(2)).sum();
        let params = ObjectiveParams { rho: 2.0 * e.utility / sq, r_min, ..probe };
        let g = grad_objective(&scenario, &b, &params)?.into_vec();
        let fd = fd_gradient_oracle(
            |z| metrics::objective(&scenario, &state(z), &params).unwrap_or(f64::NAN),
            b.as_slice(),
            FD_STEP,
        )?;
        compare(k_users + 2, g, fd);
    }

    let mut families: Vec<FamilyError> =
        (0..k_users).map(|k| FamilyError { family: format!("rate[{k}]"), worst: worst[k] }).collect();
    families.push(FamilyError { family: "utility(alpha=0)".into(), worst: worst[k_users] });
    families.push(FamilyError { family: "utility(alpha=1)".into(), worst: worst[k_users + 1] });
    families
        .push(FamilyError { family: format!("objective(alpha={})", cfg.optimizer.alpha), worst: worst[k_users + 2] });
    let check = GradCheck { families, tolerance: 1e-5 };
    println!("gradient check over {samples} random states ({} mode)", mode.as_str());
    for f in &check.families {
        let verdict = if f.worst < check.tolerance { "ok" } else { "FAIL" };
        println!("  {:<22} worst relative error {:.3e}  {verdict}", f.family, f.worst);
    }
    Ok(check)
}

fn write_plot(path: &Path, columns: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut text = format!("# {}\n", columns.join(" "));
    for r in rows {
        let line: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
        let _ = writeln!(text, "{}", line.join(" "));
    }
    write_atomic(path, text.as_bytes())
}

fn convergence_plot(run_dir: &Path, out: &Path) -> Result<()> {
    let trace = read_trace(&run_dir.join(TRACE))?;
    write_plot(
        out,
        &["iter", "objective", "utility", "sum_crlb", "max_crlb", "min_rate_bps"],
        trace.iter().map(|r| {
            vec![
                r.iter as f64,
                r.objective,
                r.utility,
                r.crlbs.iter().sum(),
                r.crlbs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                r.rates.iter().copied().fold(f64::INFINITY, f64::min),
            ]
        }),
    )
}

/// Human-readable summary of one run directory.
pub fn summarize_run(s: &RunSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "mode            {}", s.mode.as_str());
    let _ = writeln!(t, "termination     {} after {} iterations", termination_name(s.termination), s.iterations);
    let _ = writeln!(t, "objective       {:.6e} (utility {:.6e})", s.objective, s.utility);
    let residual = if s.feasibility_residual > 0.0 { s.feasibility_residual } else { 0.0 };
    let _ = writeln!(t, "rate residual   {residual} bit/s  (max_k [r_min - R_k]_+, r_min = {} bit/s)", s.r_min);
    let _ = writeln!(t, "rates (Mbps)");
    for (k, r) in s.rates.iter().enumerate() {
        let _ = writeln!(t, "  user {k:<3} {:.6}", r / 1e6);
    }
    let _ = writeln!(t, "CRLBs (normalized delay/Doppler units^2) and delay RMSE bounds");
    for (q, g) in s.targets.iter().enumerate() {
        let _ = writeln!(
            t,
            "  target {q:<3} crlb {:.6e}  delay rmse >= {:.3e} s  (bistatic path {:.3e} m)  bs link tau {:.4} fd {:.3e}",
            g.crlb, g.delay_rmse_bound_s, g.path_rmse_bound_m, g.tau_bar_bs, g.fd_bar_bs
        );
    }
    let _ = writeln!(t, "sum CRLB {:.6e}   max CRLB {:.6e}", s.sum_crlb, s.max_crlb);
    t
}

/// `report`: summary text plus gnuplot-ready series under `plotdata/`.
/// Accepts a run directory, a `--mode both` run directory or a sweep
/// directory.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let plot = dir.join("plotdata");
    let mut text = String::new();
    if dir.join(SWEEP).is_file() {
        let rows = read_sweep(&dir.join(SWEEP))?;
        fs::create_dir_all(&plot).map_err(|e| CliError::io(&plot, e))?;
        let _ = writeln!(text, "sweep with {} sub-runs", rows.len());
        let _ = writeln!(
            text,
            "{:>12} {:>12} {:>13} {:>13} {:>13} {:>12}",
            "value", "mode", "sum_crlb", "max_crlb", "min_crlb", "min_Mbps"
        );
        let mut modes: Vec<SensingMode> = Vec::new();
        for r in &rows {
            let _ = writeln!(
                text,
                "{:>12} {:>12} {:>13.5e} {:>13.5e} {:>13.5e} {:>12.4}",
                r.value,
                r.mode.as_str(),
                r.sum_crlb,
                r.max_crlb,
                r.min_crlb,
                r.min_rate / 1e6
            );
            if !modes.contains(&r.mode) {
                modes.push(r.mode);
            }
            let label = Path::new(&r.run_dir).file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
            convergence_plot(&dir.join(&r.run_dir), &plot.join(format!("convergence_{label}.dat")))?;
        }
        for m in modes {
            write_plot(
                &plot.join(format!("sweep_{}.dat", m.as_str())),
                &["value", "sum_crlb", "max_crlb", "min_crlb", "min_rate_bps", "mean_rate_bps"],
                rows.iter()
                    .filter(|r| r.mode == m)
                    .map(|r| vec![r.value, r.sum_crlb, r.max_crlb, r.min_crlb, r.min_rate, r.mean_rate]),
            )?;
        }
    } else if dir.join(RESULT).is_file() {
        let s = RunSummary::read(&dir.join(RESULT))?;
        text.push_str(&summarize_run(&s));
        if dir.join(TRACE).is_file() {
            fs::create_dir_all(&plot).map_err(|e| CliError::io(&plot, e))?;
            convergence_plot(dir, &plot.join("convergence.dat"))?;
        }
    } else {
        let subs: Vec<PathBuf> = [SensingMode::Multistatic, SensingMode::Monostatic]
            .iter()
            .map(|m| dir.join(m.as_str()))
            .filter(|d| d.join(RESULT).is_file())
            .collect();
        if subs.is_empty() {
            return Err(CliError::MissingArtifact { dir: dir.to_path_buf(), name: RESULT });
        }
        fs::create_dir_all(&plot).map_err(|e| CliError::io(&plot, e))?;
        for d in subs {
            let s = RunSummary::read(&d.join(RESULT))?;
            text.push_str(&summarize_run(&s));
            text.push('\n');
            if d.join(TRACE).is_file() {
                convergence_plot(&d, &plot.join(format!("convergence_{}.dat", s.mode.as_str())))?;
            }
        }
    }
    write_atomic(&dir.join("summary.txt"), text.as_bytes())?;
    Ok(text)
}
