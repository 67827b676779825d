//! Experiment configuration: one JSON document with `scenario`, `optimizer`,
//! `sweep` and `output` sections.
//!
//! Physical quantities may be raw SI numbers or annotated strings
//! (`"28 GHz"`, `"30 dBm"`, `"100 Mbps"`). Omitted scenario fields take the
//! full-scale defaults (20 antennas, 2048 subcarriers over 100 MHz at 28 GHz,
//! 64 symbols, 30 dBm, -97 dBm noise). Relative paths inside the document are
//! resolved against the directory of the config file.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use isac_core::channel_io::load_channels;
use isac_core::scenario::SPEED_OF_LIGHT;
use isac_core::{
    ArmijoConfig, ChannelModel, GainModel, Geometry, InitStrategy, OptimizerConfig, Scenario, ScenarioConfig,
    SensingMode, SystemParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};
use crate::units::{parse_quantity, watts_to_dbm, Kind};

/// Stream of the placement generator for `count` users; the core generator
/// uses streams 1 and 2 of the same seed.
const PLACEMENT_STREAM_BASE: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub enum UserPlacement {
    Explicit(Vec<[f64; 2]>),
    /// `count` users, user `k` uniform in a disk of `radius` around target
    /// `k mod Q`.
    AroundTargets {
        count: usize,
        radius: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSpec {
    Uniform(f64),
    Split {
        users: f64,
        bs: f64,
    },
    /// One entry per user followed by the BS.
    PerNode(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub n_tx: usize,
    pub n_sc: usize,
    pub n_sym: usize,
    pub f_c: f64,
    pub delta_f: f64,
    pub t_sym: f64,
    pub p_total: f64,
    pub noise: NoiseSpec,
    pub bs_pos: [f64; 2],
    pub users: UserPlacement,
    pub targets: Vec<[f64; 2]>,
    pub target_vel: Vec<f64>,
    pub c0: f64,
    pub gain_model: GainModel,
    pub rician_k: f64,
    pub seed: u64,
    pub channel_file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    RMin,
    NUsers,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::RMin => "r_min",
            SweepParam::NUsers => "n_users",
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "r_min" => Ok(SweepParam::RMin),
            "n_users" => Ok(SweepParam::NUsers),
            other => Err(format!("unknown sweep parameter {other:?} (expected alpha, r_min or n_users)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    /// Values in SI units (`r_min` in bits/s).
    pub values: Vec<f64>,
    pub modes: Option<Vec<SensingMode>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub optimizer: OptimizerConfig,
    /// Beams file for `init = provided`.
    pub initial_beams: Option<PathBuf>,
    pub sweep: Option<SweepSpec>,
    pub output: OutputSpec,
}

/// Collects every problem found while reading the document.
struct Checker {
    errors: Vec<String>,
}

impl Checker {
    fn err(&mut self, path: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match v {
            Value::Object(m) => Some(m),
            _ => {
                self.err(path, "expected an object");
                None
            }
        }
    }

    fn known(&mut self, obj: &Map<String, Value>, path: &str, keys: &[&str]) {
        for k in obj.keys() {
            if !keys.contains(&k.as_str()) {
                self.err(&join(path, k), format!("unknown field (expected one of: {})", keys.join(", ")));
            }
        }
    }

    fn quantity(&mut self, obj: &Map<String, Value>, path: &str, key: &str, kind: Kind) -> Option<f64> {
        let v = obj.get(key)?;
        match parse_quantity(v, kind) {
            Ok(x) if x.is_finite() => Some(x),
            Ok(x) => {
                self.err(&join(path, key), format!("must be finite, got {x}"));
                None
            }
            Err(e) => {
                self.err(&join(path, key), e);
                None
            }
        }
    }

    /// Strictly positive quantity with a default.
    fn positive(&mut self, obj: &Map<String, Value>, path: &str, key: &str, kind: Kind, default: f64) -> f64 {
        match self.quantity(obj, path, key, kind) {
            Some(x) if x > 0.0 => x,
            Some(x) => {
                self.err(&join(path, key), format!("must be > 0, got {x}"));
                default
            }
            None => default,
        }
    }

    fn nonneg(&mut self, obj: &Map<String, Value>, path: &str, key: &str, kind: Kind, default: f64) -> f64 {
        match self.quantity(obj, path, key, kind) {
            Some(x) if x >= 0.0 => x,
            Some(x) => {
                self.err(&join(path, key), format!("must be >= 0, got {x}"));
                default
            }
            None => default,
        }
    }

    fn uint(&mut self, obj: &Map<String, Value>, path: &str, key: &str, default: u64) -> u64 {
        match obj.get(key) {
            None => default,
            Some(v) => match v.as_u64() {
                Some(n) => n,
                None => {
                    self.err(&join(path, key), format!("expected a non-negative integer, got {v}"));
                    default
                }
            },
        }
    }

    fn count(&mut self, obj: &Map<String, Value>, path: &str, key: &str, default: usize) -> usize {
        let n = self.uint(obj, path, key, default as u64) as usize;
        if n == 0 {
            self.err(&join(path, key), "must be >= 1");
            return default.max(1);
        }
        n
    }

    fn point(&mut self, v: &Value, path: &str) -> Option<[f64; 2]> {
        match v.as_array().map(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>()) {
            Some(Some(p)) if p.len() == 2 && p.iter().all(|x| x.is_finite()) => Some([p[0], p[1]]),
            _ => {
                self.err(path, format!("expected a point [x, y] in metres, got {v}"));
                None
            }
        }
    }

    fn points(&mut self, v: &Value, path: &str) -> Vec<[f64; 2]> {
        match v.as_array() {
            Some(a) => a.iter().enumerate().filter_map(|(i, p)| self.point(p, &format!("{path}[{i}]"))).collect(),
            None => {
                self.err(path, "expected a list of points");
                Vec::new()
            }
        }
    }

    fn reals(&mut self, v: &Value, path: &str, kind: Kind) -> Vec<f64> {
        match v.as_array() {
            Some(a) => a
                .iter()
                .enumerate()
                .filter_map(|(i, x)| match parse_quantity(x, kind) {
                    Ok(x) if x.is_finite() => Some(x),
                    Ok(x) => {
                        self.err(&format!("{path}[{i}]"), format!("must be finite, got {x}"));
                        None
                    }
                    Err(e) => {
                        self.err(&format!("{path}[{i}]"), e);
                        None
                    }
                })
                .collect(),
            None => {
                self.err(path, "expected a list");
                Vec::new()
            }
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base).map_err(|e| match e {
            CliError::Json { msg, .. } => CliError::Json { path: path.to_path_buf(), msg },
            other => other,
        })
    }

    /// Parses and validates a document; every offending field is reported.
    pub fn from_json_str(text: &str, base: &Path) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Json { path: PathBuf::from("<config>"), msg: e.to_string() })?;
        let mut ck = Checker { errors: Vec::new() };
        let empty = Map::new();
        let root = ck.object(&doc, "<root>").unwrap_or(&empty);
        ck.known(root, "", &["scenario", "optimizer", "sweep", "output"]);

        let scenario = match root.get("scenario") {
            Some(v) => {
                let obj = ck.object(v, "scenario").unwrap_or(&empty);
                parse_scenario(&mut ck, obj, base)
            }
            None => {
                ck.err("scenario", "missing section");
                parse_scenario(&mut ck, &empty, base)
            }
        };
        let opt_obj = root.get("optimizer").and_then(|v| ck.object(v, "optimizer")).unwrap_or(&empty);
        let (optimizer, initial_beams) = parse_optimizer(&mut ck, opt_obj, base);
        let sweep = root.get("sweep").and_then(|v| ck.object(v, "sweep")).map(|obj| parse_sweep(&mut ck, obj));
        let out_obj = root.get("output").and_then(|v| ck.object(v, "output")).unwrap_or(&empty);
        let output = parse_output(&mut ck, out_obj);

        if let Some(s) = &sweep {
            if s.parameter == SweepParam::NUsers {
                if matches!(scenario.noise, NoiseSpec::PerNode(_)) {
                    ck.err("scenario.noise_power", "an n_users sweep needs a single value or {users, bs}");
                }
                if scenario.channel_file.is_some() {
                    ck.err("scenario.channel_file", "an n_users sweep regenerates channels; remove the file");
                }
            }
        }
        if ck.errors.is_empty() {
            if let Err(e) = optimizer.validate() {
                ck.err("optimizer", e);
            }
        }
        if !ck.errors.is_empty() {
            return Err(CliError::Invalid(ck.errors));
        }
        Ok(ExperimentConfig { scenario, optimizer, initial_beams, sweep, output })
    }

    /// Resolved configuration in SI units, echoed into `result.json`.
    pub fn echo(&self, scenario: &Scenario) -> Value {
        let p = scenario.params();
        let g = scenario.geometry();
        let s = &self.scenario;
        json!({
            "scenario": {
                "n_tx": p.n_tx,
                "n_sc": p.n_sc,
                "n_sym": p.n_sym,
                "f_c_hz": p.f_c,
                "delta_f_hz": p.delta_f,
                "bandwidth_hz": p.bandwidth,
                "t_sym_s": p.t_sym,
                "p_total_watts": p.p_total,
                "p_total_dbm": watts_to_dbm(p.p_total),
                "noise_power_watts": p.noise_power,
                "bs_pos": g.bs_pos,
                "user_pos": g.user_pos,
                "target_pos": g.target_pos,
                "target_vel": g.target_vel,
                "c0": g.c0,
                "gain": s.gain_model.gain,
                "rcs": s.gain_model.rcs,
                "rician_k": s.rician_k,
                "seed": s.seed,
                "channel_file": s.channel_file.as_ref().map(|p| p.display().to_string()),
            },
            "optimizer": serde_json::to_value(self.optimizer).expect("optimizer config serializes"),
        })
    }
}

fn parse_scenario(ck: &mut Checker, obj: &Map<String, Value>, base: &Path) -> ScenarioSpec {
    let path = "scenario";
    ck.known(
        obj,
        path,
        &[
            "n_tx",
            "n_sc",
            "n_sym",
            "f_c",
            "delta_f",
            "bandwidth",
            "t_sym",
            "p_total",
            "noise_power",
            "geometry",
            "gain",
            "rcs",
            "rician_k",
            "seed",
            "channel_file",
        ],
    );
    let n_tx = ck.count(obj, path, "n_tx", 20);
    let n_sc = ck.count(obj, path, "n_sc", 2048);
    let n_sym = ck.count(obj, path, "n_sym", 64);
    let f_c = ck.positive(obj, path, "f_c", Kind::Frequency, 28e9);
    let bw = obj.get("bandwidth").map(|_| ck.positive(obj, path, "bandwidth", Kind::Frequency, 100e6));
    let delta_f = match (obj.get("delta_f"), bw) {
        (Some(_), bw) => {
            let df = ck.positive(obj, path, "delta_f", Kind::Frequency, 100e6 / n_sc as f64);
            if let Some(b) = bw {
                let implied = df * n_sc as f64;
                if (b - implied).abs() > 1e-9 * b {
                    ck.err("scenario.bandwidth", format!("{b} Hz disagrees with n_sc * delta_f = {implied} Hz"));
                }
            }
            df
        }
        (None, Some(b)) => b / n_sc as f64,
        (None, None) => 100e6 / n_sc as f64,
    };
    let t_sym = ck.positive(obj, path, "t_sym", Kind::Time, 1.0 / delta_f);
    if t_sym * delta_f < 1.0 - 1e-12 {
        ck.err("scenario.t_sym", format!("{t_sym} s is shorter than 1/delta_f = {} s", 1.0 / delta_f));
    }
    let p_total = ck.positive(obj, path, "p_total", Kind::Power, 1.0);
    let noise = parse_noise(ck, obj.get("noise_power"));

    let empty = Map::new();
    let geo = match obj.get("geometry") {
        Some(v) => ck.object(v, "scenario.geometry").unwrap_or(&empty),
        None => {
            ck.err("scenario.geometry", "missing section");
            &empty
        }
    };
    let gpath = "scenario.geometry";
    ck.known(geo, gpath, &["bs", "users", "targets", "target_velocity", "c0"]);
    let bs_pos = geo.get("bs").and_then(|v| ck.point(v, "scenario.geometry.bs")).unwrap_or([0.0, 0.0]);
    let targets = match geo.get("targets") {
        Some(v) => ck.points(v, "scenario.geometry.targets"),
        None => {
            ck.err("scenario.geometry.targets", "missing");
            Vec::new()
        }
    };
    if geo.contains_key("targets") && targets.is_empty() && !ck.errors.iter().any(|e| e.contains("geometry.targets")) {
        ck.err("scenario.geometry.targets", "need at least one target");
    }
    let users = parse_users(ck, geo.get("users"));
    let target_vel = match geo.get("target_velocity") {
        Some(v) => ck.reals(v, "scenario.geometry.target_velocity", Kind::Plain),
        None => vec![0.0; targets.len()],
    };
    if target_vel.len() != targets.len() && geo.contains_key("target_velocity") {
        ck.err(
            "scenario.geometry.target_velocity",
            format!("{} velocities for {} targets", target_vel.len(), targets.len()),
        );
    }
    let c0 = ck.positive(geo, gpath, "c0", Kind::Plain, SPEED_OF_LIGHT);

    if let (NoiseSpec::PerNode(v), UserPlacement::Explicit(u)) = (&noise, &users) {
        if v.len() != u.len() + 1 {
            ck.err(
                "scenario.noise_power",
                format!("{} entries, expected one per user plus the BS ({})", v.len(), u.len() + 1),
            );
        }
    }

    let gain = ck.positive(obj, path, "gain", Kind::Plain, 1.0);
    let rcs = ck.positive(obj, path, "rcs", Kind::Plain, 1.0);
    let rician_k = ck.nonneg(obj, path, "rician_k", Kind::Plain, 10.0);
    let seed = ck.uint(obj, path, "seed", 0);
    let channel_file = match obj.get("channel_file") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(resolve(base, s)),
        Some(v) => {
            ck.err("scenario.channel_file", format!("expected a path string, got {v}"));
            None
        }
    };
    ScenarioSpec {
        n_tx,
        n_sc,
        n_sym,
        f_c,
        delta_f,
        t_sym,
        p_total,
        noise,
        bs_pos,
        users,
        targets,
        target_vel,
        c0,
        gain_model: GainModel { gain, rcs },
        rician_k,
        seed,
        channel_file,
    }
}

fn parse_noise(ck: &mut Checker, v: Option<&Value>) -> NoiseSpec {
    let path = "scenario.noise_power";
    let default = crate::units::dbm_to_watts(-97.0);
    let positive = |ck: &mut Checker, v: &Value, p: &str| match parse_quantity(v, Kind::Power) {
        Ok(x) if x > 0.0 && x.is_finite() => x,
        Ok(x) => {
            ck.err(p, format!("must be > 0, got {x}"));
            default
        }
        Err(e) => {
            ck.err(p, e);
            default
        }
    };
    match v {
        None => NoiseSpec::Uniform(default),
        Some(Value::Array(a)) => {
            NoiseSpec::PerNode(a.iter().enumerate().map(|(i, x)| positive(ck, x, &format!("{path}[{i}]"))).collect())
        }
        Some(Value::Object(m)) => {
            ck.known(m, path, &["users", "bs"]);
            let users = m.get("users").map_or(default, |x| positive(ck, x, "scenario.noise_power.users"));
            let bs = m.get("bs").map_or(default, |x| positive(ck, x, "scenario.noise_power.bs"));
            NoiseSpec::Split { users, bs }
        }
        Some(x) => NoiseSpec::Uniform(positive(ck, x, path)),
    }
}

fn parse_users(ck: &mut Checker, v: Option<&Value>) -> UserPlacement {
    let path = "scenario.geometry.users";
    match v {
        None => {
            ck.err(path, "missing (a list of points or {count, radius})");
            UserPlacement::Explicit(Vec::new())
        }
        Some(Value::Object(m)) => {
            ck.known(m, path, &["count", "radius"]);
            if !m.contains_key("count") {
                ck.err(&join(path, "count"), "missing");
            }
            let count = ck.count(m, path, "count", 1);
            let radius = ck.positive(m, path, "radius", Kind::Plain, 30.0);
            UserPlacement::AroundTargets { count, radius }
        }
        Some(v) => {
            let pts = ck.points(v, path);
            if v.as_array().is_some_and(|a| a.is_empty()) {
                ck.err(path, "need at least one user");
            }
            UserPlacement::Explicit(pts)
        }
    }
}

fn parse_optimizer(ck: &mut Checker, obj: &Map<String, Value>, base: &Path) -> (OptimizerConfig, Option<PathBuf>) {
    let path = "optimizer";
    ck.known(obj, path, &["alpha", "rho", "r_min", "max_iter", "grad_tol", "armijo", "restart_period", "mode", "init"]);
    let d = OptimizerConfig::default();
    let alpha = ck.nonneg(obj, path, "alpha", Kind::Plain, d.alpha);
    let rho = ck.nonneg(obj, path, "rho", Kind::Plain, d.rho);
    let r_min = ck.nonneg(obj, path, "r_min", Kind::Rate, d.r_min);
    if rho == 0.0 && r_min > 0.0 {
        ck.err("optimizer.rho", "must be > 0 when r_min > 0");
    }
    let max_iter = ck.uint(obj, path, "max_iter", d.max_iter as u64) as usize;
    let grad_tol = ck.nonneg(obj, path, "grad_tol", Kind::Plain, d.grad_tol);
    let restart_period = ck.count(obj, path, "restart_period", d.restart_period);

    let mut armijo = ArmijoConfig::default();
    if let Some(a) = obj.get("armijo").and_then(|v| ck.object(v, "optimizer.armijo")) {
        let ap = "optimizer.armijo";
        ck.known(a, ap, &["c1", "shrink", "init_step", "max_backtracks"]);
        if let Some(c1) = ck.quantity(a, ap, "c1", Kind::Plain) {
            if c1 > 0.0 && c1 <= 0.5 {
                armijo.c1 = c1;
            } else {
                ck.err("optimizer.armijo.c1", format!("must lie in (0, 0.5], got {c1}"));
            }
        }
        if let Some(s) = ck.quantity(a, ap, "shrink", Kind::Plain) {
            if s > 0.0 && s < 1.0 {
                armijo.shrink = s;
            } else {
                ck.err("optimizer.armijo.shrink", format!("must lie in (0, 1), got {s}"));
            }
        }
        armijo.init_step = ck.positive(a, ap, "init_step", Kind::Plain, armijo.init_step);
        armijo.max_backtracks = ck.uint(a, ap, "max_backtracks", armijo.max_backtracks as u64) as usize;
    }

    let mode = match obj.get("mode") {
        None => d.mode,
        Some(Value::String(s)) => s.parse().unwrap_or_else(|e| {
            ck.err("optimizer.mode", e);
            d.mode
        }),
        Some(v) => {
            ck.err("optimizer.mode", format!("expected \"multistatic\" or \"monostatic\", got {v}"));
            d.mode
        }
    };

    let mut beams = None;
    let init = match obj.get("init") {
        None => d.init,
        Some(Value::String(s)) if s == "mrt" => InitStrategy::Mrt,
        Some(Value::String(s)) if s == "random_gaussian" => InitStrategy::RandomGaussian { seed: 0 },
        Some(Value::Object(m)) => {
            let ip = "optimizer.init";
            match m.get("kind").and_then(Value::as_str) {
                Some("mrt") => {
                    ck.known(m, ip, &["kind"]);
                    InitStrategy::Mrt
                }
                Some("random_gaussian") => {
                    ck.known(m, ip, &["kind", "seed"]);
                    InitStrategy::RandomGaussian { seed: ck.uint(m, ip, "seed", 0) }
                }
                Some("provided") => {
                    ck.known(m, ip, &["kind", "path"]);
                    match m.get("path").and_then(Value::as_str) {
                        Some(p) => beams = Some(resolve(base, p)),
                        None => ck.err("optimizer.init.path", "provided init needs a beams.csv path"),
                    }
                    InitStrategy::Provided
                }
                _ => {
                    ck.err("optimizer.init.kind", "expected mrt, random_gaussian or provided");
                    d.init
                }
            }
        }
        Some(v) => {
            ck.err("optimizer.init", format!("expected \"mrt\", \"random_gaussian\" or an object, got {v}"));
            d.init
        }
    };

    let cfg = OptimizerConfig { alpha, rho, r_min, max_iter, grad_tol, armijo, restart_period, mode, init };
    (cfg, beams)
}

fn parse_sweep(ck: &mut Checker, obj: &Map<String, Value>) -> SweepSpec {
    let path = "sweep";
    ck.known(obj, path, &["parameter", "values", "modes"]);
    let parameter = match obj.get("parameter").and_then(Value::as_str) {
        Some(s) => s.parse().unwrap_or_else(|e| {
            ck.err("sweep.parameter", e);
            SweepParam::Alpha
        }),
        None => {
            ck.err("sweep.parameter", "missing (alpha, r_min or n_users)");
            SweepParam::Alpha
        }
    };
    let kind = if parameter == SweepParam::RMin { Kind::Rate } else { Kind::Plain };
    let values = match obj.get("values") {
        Some(v) => ck.reals(v, "sweep.values", kind),
        None => {
            ck.err("sweep.values", "missing");
            Vec::new()
        }
    };
    if obj.contains_key("values") && values.is_empty() {
        ck.err("sweep.values", "need at least one value");
    }
    for (i, &x) in values.iter().enumerate() {
        let bad = match parameter {
            SweepParam::NUsers => x < 1.0 || x.fract() != 0.0,
            _ => x < 0.0,
        };
        if bad {
            ck.err(&format!("sweep.values[{i}]"), format!("{x} is not a valid {}", parameter.as_str()));
        }
    }
    let modes = obj.get("modes").map(|v| match v.as_array() {
        Some(a) => a
            .iter()
            .enumerate()
            .filter_map(|(i, m)| match m.as_str().map(str::parse::<SensingMode>) {
                Some(Ok(mode)) => Some(mode),
                _ => {
                    ck.err(&format!("sweep.modes[{i}]"), format!("expected multistatic or monostatic, got {m}"));
                    None
                }
            })
            .collect(),
        None => {
            ck.err("sweep.modes", "expected a list");
            Vec::new()
        }
    });
    SweepSpec { parameter, values, modes }
}

fn parse_output(ck: &mut Checker, obj: &Map<String, Value>) -> OutputSpec {
    ck.known(obj, "output", &["dir", "formats"]);
    let dir = match obj.get("dir") {
        None => PathBuf::from("out"),
        Some(Value::String(s)) => PathBuf::from(s),
        Some(v) => {
            ck.err("output.dir", format!("expected a path string, got {v}"));
            PathBuf::from("out")
        }
    };
    let mut out = OutputSpec { dir, csv: true, json: true };
    if let Some(v) = obj.get("formats") {
        match v.as_array() {
            Some(a) => {
                out.csv = false;
                out.json = false;
                for (i, f) in a.iter().enumerate() {
                    match f.as_str() {
                        Some("csv") => out.csv = true,
                        Some("json") => out.json = true,
                        _ => ck.err(&format!("output.formats[{i}]"), format!("expected \"csv\" or \"json\", got {f}")),
                    }
                }
            }
            None => ck.err("output.formats", "expected a list"),
        }
    }
    out
}

impl ScenarioSpec {
    /// Number of users this spec describes.
    pub fn n_users(&self) -> usize {
        match &self.users {
            UserPlacement::Explicit(u) => u.len(),
            UserPlacement::AroundTargets { count, .. } => *count,
        }
    }

    /// Positions of `count` users around the targets. The generator is
    /// seeded with the scenario seed on a stream salted by `count`, so each
    /// user count has its own reproducible layout.
    pub fn place_users(&self, count: usize, radius: f64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(PLACEMENT_STREAM_BASE + count as u64);
        (0..count)
            .map(|k| {
                let t = self.targets[k % self.targets.len()];
                let r = radius * rng.random::<f64>().sqrt();
                let a = 2.0 * PI * rng.random::<f64>();
                [t[0] + r * a.cos(), t[1] + r * a.sin()]
            })
            .collect()
    }

    /// Builds the scenario, optionally with a different number of users
    /// (placed around the targets).
    pub fn build(&self, n_users: Option<usize>) -> Result<Scenario> {
        let user_pos = match (&self.users, n_users) {
            (UserPlacement::Explicit(u), None) => u.clone(),
            (UserPlacement::Explicit(_), Some(k)) => self.place_users(k, 30.0),
            (UserPlacement::AroundTargets { count, radius }, k) => self.place_users(k.unwrap_or(*count), *radius),
        };
        let k = user_pos.len();
        let noise_power = match &self.noise {
            NoiseSpec::Uniform(x) => vec![*x; k + 1],
            NoiseSpec::Split { users, bs } => {
                let mut v = vec![*users; k];
                v.push(*bs);
                v
            }
            NoiseSpec::PerNode(v) => v.clone(),
        };
        let params = SystemParams::new(
            self.n_tx,
            self.n_sc,
            self.n_sym,
            self.f_c,
            self.delta_f,
            self.t_sym,
            self.p_total,
            noise_power,
        )?;
        let geometry = Geometry {
            bs_pos: self.bs_pos,
            user_pos,
            target_pos: self.targets.clone(),
            target_vel: self.target_vel.clone(),
            c0: self.c0,
        };
        let cfg = ScenarioConfig {
            params,
            geometry,
            gain_model: self.gain_model,
            channel_model: ChannelModel { rician_k: self.rician_k },
            seed: self.seed,
        };
        let scenario = match &self.channel_file {
            Some(p) => Scenario::with_channels(&cfg, load_channels(p)?)?,
            None => Scenario::build(&cfg)?,
        };
        Ok(scenario)
    }
}
