use isac_core::{optimize, presets, OptimizerConfig, Scenario};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args.get(1).map_or(0.0, |s| s.parse().unwrap());
    let r_min: f64 = args.get(2).map_or(0.0, |s| s.parse().unwrap());
    let rho: f64 = args.get(3).map_or(1e4, |s| s.parse().unwrap());
    let iters: usize = args.get(4).map_or(500, |s| s.parse().unwrap());
    let grad_tol: f64 = args.get(5).map_or(1e-6, |s| s.parse().unwrap());
    let scenario = Scenario::build(&presets::desk(1)).unwrap();
    let cfg = OptimizerConfig { alpha, r_min, rho, max_iter: iters, grad_tol, ..Default::default() };
    let res = optimize(&scenario, &cfg, None).unwrap();
    let t0 = &res.trace[0];
    println!("init obj {:e} crlbs {:?} rates {:?}", t0.objective, t0.crlbs, t0.rates);
    let stride: usize =
        std::env::var("STRIDE").ok().and_then(|s| s.parse().ok()).unwrap_or((res.trace.len() / 10).max(1));
    for r in res.trace.iter().step_by(stride) {
        println!(
            "{:4} obj {:.6e} g {:.3e} step {:.2e} beta {:.3e} bt {} crlb {:?}",
            r.iter, r.objective, r.grad_norm, r.step, r.beta, r.backtracks, r.crlbs
        );
    }
    let e = &res.final_eval;
    let last = res.trace.last().unwrap();
    println!(
        "term {:?} iters {} evals {} time {:?} stationarity {:e}",
        res.termination,
        res.iterations(),
        res.evaluations,
        res.wall_time,
        last.grad_norm / last.objective.abs()
    );
    println!(
        "final crlbs {:?} sum {:e} max {:e}",
        e.crlbs,
        e.crlbs.iter().sum::<f64>(),
        e.crlbs.iter().cloned().fold(0.0, f64::max)
    );
    println!("rates {:?} shortfall {:e}", e.rates, e.max_shortfall());
}
