//! End-to-end acceptance checks on the shipped desk preset. Each criterion
//! prints one PASS/FAIL line; the test fails if any criterion fails.

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use isac_cli::artifacts::RunSummary;
use isac_cli::{cmd_check_grad, cmd_run, ExperimentConfig, Overrides};
use isac_core::optimizer::init_beams;
use isac_core::scenario::SPEED_OF_LIGHT;
use isac_core::{
    alpha_fairness, fim, optimize, steering_vector, BeamDims, BeamformingState, ChannelModel, Fim2x2, GainModel,
    Geometry, InitStrategy, OptimizerConfig, Scenario, ScenarioConfig, SensingMode, SystemParams,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn preset_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/presets/desk.json"))
}

fn preset() -> ExperimentConfig {
    ExperimentConfig::load(&preset_path()).unwrap()
}

fn desk(seed: u64) -> (Scenario, OptimizerConfig) {
    let mut cfg = preset();
    cfg.scenario.seed = seed;
    (cfg.scenario.build(None).unwrap(), cfg.optimizer)
}

fn random_scenario(rng: &mut ChaCha8Rng, n_tx: usize, n_sc: usize, n_sym: usize, k: usize, q: usize) -> Scenario {
    let mut point = || [rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0)];
    let user_pos = (0..k).map(|_| point()).collect();
    let target_pos = (0..q).map(|_| point()).collect();
    let noise = (0..=k).map(|_| rng.random_range(1e-12..1e-11)).collect();
    let params = SystemParams::new(n_tx, n_sc, n_sym, 28e9, 120e3, 1.07 / 120e3, 1.0, noise).unwrap();
    let geometry = Geometry {
        bs_pos: [0.0, 0.0],
        user_pos,
        target_pos,
        target_vel: (0..q).map(|_| rng.random_range(-20.0..20.0)).collect(),
        c0: SPEED_OF_LIGHT,
    };
    let cfg = ScenarioConfig {
        params,
        geometry,
        gain_model: GainModel { gain: rng.random_range(1.0..100.0), rcs: 1.0 },
        channel_model: ChannelModel::default(),
        seed: rng.random(),
    };
    Scenario::build(&cfg).unwrap()
}

fn random_state(s: &Scenario, seed: u64) -> BeamformingState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = init_beams(s, InitStrategy::RandomGaussian { seed }, &mut rng).unwrap();
    BeamformingState::from_stacked(BeamDims::of(s), p.into_vec()).unwrap()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn energy(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Every (node, subcarrier, symbol) term written out.
fn naive_fim(s: &Scenario, b: &BeamformingState, q: usize, mode: SensingMode) -> Fim2x2 {
    let k_users = s.n_users();
    let n_c = s.params().n_sc;
    let a_t = steering_vector(s.gains().aod[q], s.params().n_tx).unwrap();
    let nodes: Vec<usize> = match mode {
        SensingMode::Multistatic => (0..=k_users).collect(),
        SensingMode::Monostatic => vec![k_users],
    };
    let (mut j11, mut j12, mut j22) = (0.0, 0.0, 0.0);
    for &m in &nodes {
        let a2 = s.gains().a_bar[q][m].norm_sqr();
        for i in 0..n_c {
            let total = energy(b.w(i)) + (0..k_users).map(|l| energy(b.v(l, i))).sum::<f64>();
            let interference: f64 = if m < k_users {
                (0..k_users).filter(|&l| l != m).map(|l| inner(s.channels().h(m, i), b.v(l, i)).norm_sqr()).sum()
            } else {
                0.0
            };
            let noise = s.params().noise_power[m] + interference + a2 * total;
            let xi = 8.0 * PI * PI * a2 * inner(&a_t, b.w(i)).norm_sqr() / (n_c as f64 * noise);
            for mu in 0..s.params().n_sym {
                let (fi, fm) = (i as f64, mu as f64);
                j11 += fi * fi * xi;
                j12 -= fi * fm * xi;
                j22 += fm * fm * xi;
            }
        }
    }
    Fim2x2 { j11, j12, j22 }
}

fn trace_of_inverse(j: &Fim2x2) -> f64 {
    (j.j11 + j.j22) / (j.j11 * j.j22 - j.j12 * j.j12)
}

fn crlbs(s: &Scenario, b: &BeamformingState, mode: SensingMode) -> Vec<f64> {
    (0..s.n_targets()).map(|q| trace_of_inverse(&fim(s, b, q, mode))).collect()
}

fn final_state(s: &Scenario, cfg: &OptimizerConfig) -> (Vec<f64>, Vec<f64>, f64) {
    let res = optimize(s, cfg, None).unwrap();
    let c = crlbs(s, &res.final_beams, cfg.mode);
    let rates = res.final_eval.rates.clone();
    (c, rates, res.final_eval.max_shortfall())
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let check = cmd_check_grad(&preset_path(), 20, None, false).unwrap();
    let elapsed = t.elapsed();
    let worst = check.families.iter().map(|f| f.worst).fold(0.0, f64::max);
    outcome(
        check.passed() && worst < 1e-5 && elapsed < Duration::from_secs(60),
        format!("{} families, worst relative error {worst:.2e}, {:.1} s", check.families.len(), elapsed.as_secs_f64()),
    )
}

fn fim_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for instance in 0..50 {
        let dims = (
            rng.random_range(1..=4),
            rng.random_range(1..=8),
            rng.random_range(1..=4),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
        );
        let s = random_scenario(&mut rng, dims.0, dims.1, dims.2, dims.3, dims.4);
        let b = random_state(&s, instance);
        for q in 0..s.n_targets() {
            for mode in [SensingMode::Multistatic, SensingMode::Monostatic] {
                let got = fim(&s, &b, q, mode);
                let want = naive_fim(&s, &b, q, mode);
                let scale = want.j11.abs().max(want.j22.abs()).max(want.j12.abs());
                for (g, w) in [(got.j11, want.j11), (got.j12, want.j12), (got.j22, want.j22)] {
                    worst = worst.max((g - w).abs() / scale);
                }
            }
        }
    }
    let elapsed = t.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!("worst relative entry error {worst:.2e} over 50 instances, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn manifold() -> Outcome {
    let (s, opt) = desk(1);
    let cfg = OptimizerConfig { max_iter: 500, grad_tol: 0.0, ..opt };
    let res = optimize(&s, &cfg, None).unwrap();
    let power = res.trace.iter().map(|r| r.power_residual).fold(0.0, f64::max);
    let tangency = res.trace.iter().map(|r| r.tangency_residual).fold(0.0, f64::max);
    let p = s.params().p_total;
    let last = (energy(res.final_beams.as_slice()) - p).abs() / p;
    outcome(
        res.iterations() == 500 && power < 1e-9 && tangency < 1e-9 && last < 1e-9,
        format!("{} iterates, max power residual {power:.1e}, max tangency residual {tangency:.1e}", res.trace.len()),
    )
}

fn monotone() -> Outcome {
    let mut bad = Vec::new();
    let mut iters = 0;
    for seed in 1..=10 {
        let (s, opt) = desk(seed);
        let res = optimize(&s, &opt, None).unwrap();
        iters += res.iterations();
        if res.trace.windows(2).any(|w| w[1].objective > w[0].objective) {
            bad.push(seed);
        }
    }
    outcome(bad.is_empty(), format!("{iters} accepted iterations over 10 seeds, increases on seeds {bad:?}"))
}

fn penalty() -> Outcome {
    let t = Instant::now();
    let (s, opt) = desk(1);
    // best achievable min rate, estimated from runs that push a high floor
    let best = [2.0e8, 2.5e8, 3.0e8, 4.0e8]
        .into_iter()
        .map(|r_min| {
            let cfg = OptimizerConfig { r_min, rho: 1e4, max_iter: 1000, ..opt };
            min_of(&final_state(&s, &cfg).1)
        })
        .fold(0.0, f64::max);
    let r_min = 0.7 * best;
    let mut residuals = Vec::new();
    let mut min_rate = 0.0;
    for rho in [1e2, 1e3, 1e4] {
        let cfg = OptimizerConfig { r_min, rho, ..opt };
        let (_, rates, shortfall) = final_state(&s, &cfg);
        residuals.push(shortfall.max(0.0));
        min_rate = min_of(&rates);
    }
    let elapsed = t.elapsed();
    let trend = residuals.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        min_rate >= r_min * 0.98 && trend && elapsed < Duration::from_secs(300),
        format!(
            "best min rate ~{:.1} Mbps, floor {:.1} Mbps, min rate at rho 1e4 {:.1} Mbps, residuals {residuals:?}, {:.1} s",
            best / 1e6,
            r_min / 1e6,
            min_rate / 1e6,
            elapsed.as_secs_f64()
        ),
    )
}

fn fairness() -> Outcome {
    let (s, opt) = desk(1);
    let mut rows = Vec::new();
    for alpha in [0.0, 0.5, 1.0, 2.0] {
        let cfg = OptimizerConfig { alpha, r_min: 50e6, max_iter: 3000, grad_tol: 0.0, ..opt };
        let (c, _, _) = final_state(&s, &cfg);
        rows.push((c.iter().sum::<f64>(), max_of(&c), max_of(&c) / min_of(&c)));
    }
    let max_down = rows.windows(2).all(|w| w[1].1 <= w[0].1);
    let sum_up = rows.windows(2).all(|w| w[1].0 >= w[0].0);
    let ratio = rows[3].2 < rows[0].2;
    let fmt =
        |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(|r| format!("{:.4}", f(r))).collect::<Vec<_>>().join("/");
    outcome(
        max_down && sum_up && ratio,
        format!("alpha 0/0.5/1/2: sum {} max {} max/min {}", fmt(|r| r.0), fmt(|r| r.1), fmt(|r| r.2)),
    )
}

fn dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut violations = 0;
    for n in 0..100 {
        let s = random_scenario(&mut rng, 4, 6, 4, 3, 3);
        let b = random_state(&s, n);
        let multi = crlbs(&s, &b, SensingMode::Multistatic);
        let mono = crlbs(&s, &b, SensingMode::Monostatic);
        violations += multi.iter().zip(&mono).filter(|(m, o)| **m > **o * (1.0 + 1e-12)).count();
    }
    let mut sums = Vec::new();
    for seed in 1..=5 {
        let (s, opt) = desk(seed);
        let pair: Vec<f64> = [SensingMode::Multistatic, SensingMode::Monostatic]
            .into_iter()
            .map(|mode| final_state(&s, &OptimizerConfig { mode, ..opt }).0.iter().sum())
            .collect();
        sums.push((pair[0], pair[1]));
    }
    let optimized = sums.iter().all(|(m, o)| m < o);
    let shown: Vec<String> = sums.iter().map(|(m, o)| format!("{m:.3}<{o:.3}")).collect();
    outcome(
        violations == 0 && optimized,
        format!("{violations} per-target violations on 100 states; optimized sums {}", shown.join(" ")),
    )
}

fn alpha_zero() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for n in 0..50 {
        let s = random_scenario(&mut rng, 4, 8, 4, 3, 3);
        let b = random_state(&s, n);
        for mode in [SensingMode::Multistatic, SensingMode::Monostatic] {
            let f = alpha_fairness(&s, &b, 0.0, mode).unwrap();
            let direct: f64 = crlbs(&s, &b, mode).iter().sum();
            worst = worst.max((f - direct).abs() / direct.abs());
        }
    }
    outcome(worst <= 1e-12, format!("worst relative difference {worst:.1e} over 50 states"))
}

/// Seconds per iteration and per objective evaluation of a fixed-length
/// run, best of three.
fn per_iteration(n_tx: usize, n_sc: usize) -> (f64, f64) {
    let mut cfg = isac_core::presets::desk(1);
    let p = cfg.params.clone();
    cfg.params =
        SystemParams::new(n_tx, n_sc, p.n_sym, p.f_c, p.delta_f, p.t_sym, p.p_total, p.noise_power.clone()).unwrap();
    let s = Scenario::build(&cfg).unwrap();
    let opt = OptimizerConfig { max_iter: 30, grad_tol: 0.0, r_min: 1e8, ..Default::default() };
    (0..3)
        .map(|_| {
            let res = optimize(&s, &opt, None).unwrap();
            let t = res.wall_time.as_secs_f64();
            (t / res.iterations() as f64, t / res.evaluations as f64)
        })
        .fold((f64::INFINITY, f64::INFINITY), |a, b| (a.0.min(b.0), a.1.min(b.1)))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn complexity() -> Outcome {
    let n_c = [16.0, 32.0, 64.0, 128.0];
    let (t_c, e_c): (Vec<f64>, Vec<f64>) = n_c.iter().map(|&n| per_iteration(8, n as usize)).unzip();
    let n_t = [4.0, 8.0, 16.0];
    let (t_t, e_t): (Vec<f64>, Vec<f64>) = n_t.iter().map(|&n| per_iteration(n as usize, 64)).unzip();
    // the line-search length varies with the instance, so the gate uses the
    // per-evaluation time (per-iteration cost at a fixed number of trials)
    let (sc, st) = (slope(&n_c, &e_c), slope(&n_t, &e_t));
    outcome(
        sc <= 1.3 && st <= 1.3,
        format!(
            "log-log slope at fixed line-search length {sc:.2} in N_c, {st:.2} in N_T (raw per-iteration {:.2}, {:.2})",
            slope(&n_c, &t_c),
            slope(&n_t, &t_t)
        ),
    )
}

fn without_wall_time(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

fn determinism() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        cmd_run(&preset_path(), &Overrides { out: Some(d.clone()), ..Default::default() }).unwrap();
    }
    let trace_same =
        std::fs::read(dirs[0].join("trace.csv")).unwrap() == std::fs::read(dirs[1].join("trace.csv")).unwrap();
    let result_same =
        without_wall_time(&dirs[0].join("result.json")) == without_wall_time(&dirs[1].join("result.json"));
    let seed = RunSummary::read(&dirs[0].join("result.json")).unwrap().seed;
    outcome(
        trace_same && result_same,
        format!("seed {seed}: trace.csv identical {trace_same}, result.json identical {result_same}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", gradients),
        ("FIM oracle equivalence", fim_oracle),
        ("manifold invariants", manifold),
        ("monotone descent", monotone),
        ("penalty behaviour", penalty),
        ("fairness trend", fairness),
        ("multistatic dominance", dominance),
        ("alpha = 0 specialization", alpha_zero),
        ("complexity scaling", complexity),
        ("determinism", determinism),
    ];
    let mut lines = Vec::new();
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let o = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| outcome(false, "panicked"));
        if !o.pass {
            failed += 1;
        }
        lines.push(format!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, n + 1, o.detail));
    }
    // written past the test harness capture so the verdicts show in every run
    let mut out = std::io::stdout().lock();
    writeln!(out, "\n{}", lines.join("\n")).unwrap();
    out.flush().unwrap();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
