//! Scenario generation, baselines, experiment sweeps and file formats.
//!
//! # Instance files
//!
//! TOML with a top-level `format = 1`, a `seed`, a `[config]` table with
//! the [`SystemConfig`] fields and one `[[users]]` table per
//! [`UserProfile`]. `fogcomp gen` writes this format.
//!
//! # Sweep files
//!
//! ```toml
//! format = 1
//! param = "b_in"              # any scenario key, or "k"
//! values = [1.6e6, 3.2e6]
//! seeds = [0, 1, 2]           # or: seed_count = 20
//! k = 5
//! algos = ["local", "nocomp", "jcora", "fixed@2.5", "pla@9", "osts", "iuts"]
//! epsilon = 1e-3
//! [overrides]                 # optional, applied before the swept value
//! d_max = 3.0e7
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jcora::{self, Solution};
use crate::model::{CompressionKind, CompressionModel, Instance, SystemConfig, UserProfile};
use crate::recompress::{solve_ext, ExtAlgorithm};

/// File format version accepted by the readers.
pub const FORMAT: u32 = 1;

/// Generator parameters. Every field can be overridden by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Cell radius in meters.
    pub radius_m: f64,
    /// Minimum user distance in meters.
    pub min_dist_m: f64,
    /// Task size range in CPU cycles.
    pub c_min: f64,
    pub c_max: f64,
    /// Fraction of the task that cannot be offloaded.
    pub local_fraction: f64,
    pub b_in: f64,
    pub t_max: f64,
    pub f_max: f64,
    pub p_max: f64,
    /// Circuit power per Hz of bandwidth.
    pub p_circuit: f64,
    pub alpha: f64,
    /// Delay weight; the energy weight is `1 - w_t`.
    pub w_t: f64,
    /// Cycles per input bit of the user-side codec (`gamma0 = kappa * b_in`).
    pub kappa: f64,
    /// Fog codec `gamma0` relative to the user codec.
    pub fog_kappa_ratio: f64,
    pub comp_gamma1: f64,
    pub comp_gamma2: f64,
    pub comp_gamma3: f64,
    pub decomp_gamma1: f64,
    pub decomp_gamma2: f64,
    pub decomp_gamma3: f64,
    pub omega_u_min: f64,
    pub omega_u_max: f64,
    pub fog_gamma1: f64,
    pub fog_gamma2: f64,
    pub fog_gamma3: f64,
    pub omega_f_min: f64,
    pub omega_f_max: f64,
    pub f_fog_max: f64,
    pub d_max: f64,
    pub t_cloud: f64,
    pub m0: f64,
    pub sigma_bs: f64,
    pub rho_max: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            radius_m: 800.0,
            min_dist_m: 10.0,
            c_min: 1.8e9,
            c_max: 2.4e9,
            local_fraction: 0.1,
            b_in: 4e6,
            t_max: 1.0,
            f_max: 2.4e9,
            p_max: 0.22,
            p_circuit: 22e-9,
            alpha: 1e-28,
            w_t: 1.0 / 3.0,
            kappa: 50.0,
            fog_kappa_ratio: 1.0,
            comp_gamma1: 0.03 * 2.6f64.powf(-32.28),
            comp_gamma2: 32.28,
            comp_gamma3: 0.3,
            decomp_gamma1: 0.115,
            decomp_gamma2: -0.9179,
            decomp_gamma3: 0.046,
            omega_u_min: 2.3,
            omega_u_max: 2.9,
            fog_gamma1: 0.076,
            fog_gamma2: 0.7116,
            fog_gamma3: 0.5794,
            omega_f_min: 3.4,
            omega_f_max: 11.2,
            f_fog_max: 15e9,
            d_max: 20e6,
            t_cloud: 0.2,
            m0: 5.0,
            sigma_bs: 3.18e-20,
            rho_max: 1e6,
        }
    }
}

impl ScenarioParams {
    /// Replaces the named field. Values are parsed as TOML, so plain
    /// numbers work.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parsed: toml::Value = format!("v = {value}")
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))?
            .remove("v")
            .unwrap();
        let parsed = match parsed {
            toml::Value::Integer(i) => toml::Value::Float(i as f64),
            v => v,
        };
        self.set_value(key, parsed)
    }

    pub fn set_f64(&mut self, key: &str, value: f64) -> Result<()> {
        self.set_value(key, toml::Value::Float(value))
    }

    fn set_value(&mut self, key: &str, value: toml::Value) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        if !table.contains_key(key) {
            return Err(Error::Config(format!("unknown parameter {key:?}")));
        }
        table.insert(key.to_string(), value);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    pub fn with_overrides<'a, I>(mut self, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (k, v) in overrides {
            self.set(k, v)?;
        }
        Ok(self)
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            f_fog_max: self.f_fog_max,
            d_max: self.d_max,
            t_cloud: self.t_cloud,
            m0: self.m0,
            sigma_bs: self.sigma_bs,
            w_bw: 0.0,
            w_c: 0.0,
        }
    }

    /// Profile of a user at `distance_m` with task size `c`.
    pub fn user(&self, distance_m: f64, c: f64) -> Result<UserProfile> {
        let g0 = self.kappa * self.b_in;
        let pl = 128.1 + 37.6 * (distance_m / 1000.0).log10();
        let (lo, hi) = (self.omega_u_min, self.omega_u_max);
        let u = UserProfile {
            c_total: c,
            c_local: self.local_fraction * c,
            c_offloadable: (1.0 - self.local_fraction) * c,
            b_in: self.b_in,
            t_max: self.t_max,
            f_max: self.f_max,
            p_max: self.p_max,
            p_circuit: self.p_circuit,
            alpha: self.alpha,
            beta_lin: 10f64.powf(-pl / 10.0),
            w_t: self.w_t,
            w_e: 1.0 - self.w_t,
            rho_max: self.rho_max,
            comp_user: CompressionModel::new(
                CompressionKind::Compress,
                g0,
                self.comp_gamma1,
                self.comp_gamma2,
                self.comp_gamma3,
                lo,
                hi,
            )?,
            decomp_user: CompressionModel::new(
                CompressionKind::Decompress,
                g0,
                self.decomp_gamma1,
                self.decomp_gamma2,
                self.decomp_gamma3,
                lo,
                hi,
            )?,
            quality_user: CompressionModel::lossless(lo, hi),
            comp_fog: CompressionModel::new(
                CompressionKind::Compress,
                g0 * self.fog_kappa_ratio,
                self.fog_gamma1,
                self.fog_gamma2,
                self.fog_gamma3,
                self.omega_f_min,
                self.omega_f_max,
            )?,
            q_min: None,
        };
        u.check()?;
        Ok(u)
    }

    /// Random instance with `k` users; deterministic in `seed`.
    pub fn generate(&self, seed: u64, k: usize) -> Result<Instance> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.min_dist_m > 0.0 && self.min_dist_m < self.radius_m) {
            return Err(Error::Config("need 0 < min_dist_m < radius_m".into()));
        }
        if !(self.c_min > 0.0 && self.c_min <= self.c_max) {
            return Err(Error::Config("need 0 < c_min <= c_max".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r0, r1) = (self.min_dist_m.powi(2), self.radius_m.powi(2));
        let mut users = Vec::with_capacity(k);
        for _ in 0..k {
            // Uniform over the annulus between the minimum distance and the
            // cell edge.
            let dist = (r0 + rng.gen::<f64>() * (r1 - r0)).sqrt();
            let c = self.c_min + rng.gen::<f64>() * (self.c_max - self.c_min);
            users.push(self.user(dist, c)?);
        }
        let inst = Instance {
            seed,
            config: self.system_config(),
            users,
        };
        inst.check()?;
        Ok(inst)
    }
}

/// Shared parameters of the default scenario.
pub fn default_config() -> SystemConfig {
    ScenarioParams::default().system_config()
}

/// Default scenario with `overrides` applied, as `(key, value)` strings.
pub fn generate_instance(seed: u64, k: usize, overrides: &[(String, String)]) -> Result<Instance> {
    ScenarioParams::default()
        .with_overrides(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))?
        .generate(seed, k)
}

/// Parses `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got {s:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

// ---------------------------------------------------------------------------
// Files

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format: u32,
    seed: u64,
    config: SystemConfig,
    users: Vec<UserProfile>,
}

pub fn instance_to_toml(inst: &Instance) -> Result<String> {
    let file = InstanceFile {
        format: FORMAT,
        seed: inst.seed,
        config: inst.config.clone(),
        users: inst.users.clone(),
    };
    toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
}

fn check_format(format: u32) -> Result<()> {
    if format != FORMAT {
        return Err(Error::Parse(format!("unsupported format {format}, expected {FORMAT}")));
    }
    Ok(())
}

pub fn instance_from_toml(text: &str) -> Result<Instance> {
    let file: InstanceFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    check_format(file.format)?;
    let inst = Instance {
        seed: file.seed,
        config: file.config,
        users: file.users,
    };
    inst.check()?;
    Ok(inst)
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    instance_from_toml(&std::fs::read_to_string(path)?)
}

pub fn write_instance(inst: &Instance, path: &Path) -> Result<()> {
    std::fs::write(path, instance_to_toml(inst)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Algorithms and baselines

/// Solver or baseline run by a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algo {
    /// Every user runs locally.
    Local,
    /// Exact solver with compression disabled.
    NoComp,
    Jcora,
    /// Exact solver with the user ratio pinned.
    FixedOmega(f64),
    Ext(ExtAlgorithm),
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algo::Local => write!(f, "local"),
            Algo::NoComp => write!(f, "nocomp"),
            Algo::Jcora => write!(f, "jcora"),
            Algo::FixedOmega(w) => write!(f, "fixed@{w}"),
            Algo::Ext(ExtAlgorithm::Pla { segments }) => write!(f, "pla@{segments}"),
            Algo::Ext(ExtAlgorithm::Osts { delta_lambda }) => write!(f, "osts@{delta_lambda}"),
            Algo::Ext(ExtAlgorithm::Iuts { max_iters, .. }) => write!(f, "iuts@{max_iters}"),
        }
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once('@') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad argument in {s:?}")))
        };
        let int = |a: &str| {
            a.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad argument in {s:?}")))
        };
        let ExtAlgorithm::Iuts { step, .. } = ExtAlgorithm::IUTS_DEFAULT else {
            unreachable!()
        };
        Ok(match (name, arg) {
            ("local", None) => Algo::Local,
            ("nocomp", None) => Algo::NoComp,
            ("jcora", None) => Algo::Jcora,
            ("fixed", Some(a)) => Algo::FixedOmega(num(a)?),
            ("pla", None) => Algo::Ext(ExtAlgorithm::PLA_DEFAULT),
            ("pla", Some(a)) => Algo::Ext(ExtAlgorithm::Pla { segments: int(a)? }),
            ("osts", None) => Algo::Ext(ExtAlgorithm::OSTS_DEFAULT),
            ("osts", Some(a)) => Algo::Ext(ExtAlgorithm::Osts { delta_lambda: num(a)? }),
            ("iuts", None) => Algo::Ext(ExtAlgorithm::IUTS_DEFAULT),
            ("iuts", Some(a)) => Algo::Ext(ExtAlgorithm::Iuts {
                max_iters: int(a)?,
                step,
            }),
            _ => return Err(Error::Config(format!("unknown algorithm {s:?}"))),
        })
    }
}

impl Serialize for Algo {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Algo {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Copy of the instance with compression disabled: unit ratio and no
/// codec workload.
pub fn without_compression(inst: &Instance) -> Instance {
    let mut out = inst.clone();
    for u in &mut out.users {
        for m in [&mut u.comp_user, &mut u.decomp_user] {
            *m = CompressionModel {
                gamma1: 0.0,
                gamma3: 0.0,
                ..m.pinned(1.0)
            };
        }
        u.quality_user = CompressionModel::lossless(1.0, 1.0);
    }
    out
}

/// Copy of the instance with the user ratio pinned to `omega`.
pub fn with_fixed_omega(inst: &Instance, omega: f64) -> Instance {
    let mut out = inst.clone();
    for u in &mut out.users {
        u.comp_user = u.comp_user.pinned(omega);
        u.decomp_user = u.decomp_user.pinned(omega);
        u.quality_user = u.quality_user.pinned(omega);
    }
    out
}

/// Largest local-execution cost over the users.
pub fn local_only_eta(inst: &Instance) -> f64 {
    inst.users.iter().map(jcora::eta_local).fold(0.0, f64::max)
}

/// Outcome of one algorithm on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: String,
    pub seed: u64,
    /// Value of the swept parameter (0 outside sweeps).
    pub param: f64,
    /// `inf` when infeasible, `NaN` on solver error.
    pub eta: f64,
    /// Users per mode: local, fog, cloud, recompressed.
    pub modes: [usize; 4],
    pub fog_hz: f64,
    pub backhaul_bps: f64,
    pub ms: f64,
    /// Empty on success, otherwise the error message.
    pub note: String,
}

fn record_from(algo: &Algo, inst: &Instance, param: f64, res: Result<Solution>, ms: f64) -> RunRecord {
    let base = RunRecord {
        algo: algo.to_string(),
        seed: inst.seed,
        param,
        eta: f64::NAN,
        modes: [0; 4],
        fog_hz: 0.0,
        backhaul_bps: 0.0,
        ms,
        note: String::new(),
    };
    match res {
        Ok(sol) => RunRecord {
            eta: sol.max_cost(inst),
            modes: sol.mode_counts(),
            fog_hz: sol.fog_total,
            backhaul_bps: sol.backhaul_total,
            ..base
        },
        Err(Error::Infeasible(m)) => RunRecord {
            eta: f64::INFINITY,
            note: m,
            ..base
        },
        Err(e) => RunRecord {
            note: e.to_string(),
            ..base
        },
    }
}

/// Runs one algorithm; `eta` in the record is the largest per-user cost of
/// the returned decisions.
pub fn run_algo(algo: &Algo, inst: &Instance, epsilon: f64, param: f64, timing: bool) -> RunRecord {
    let start = Instant::now();
    let res = match algo {
        Algo::Local => {
            let eta = local_only_eta(inst);
            let ms = if timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            return RunRecord {
                algo: algo.to_string(),
                seed: inst.seed,
                param,
                eta,
                modes: [inst.users.len(), 0, 0, 0],
                fog_hz: 0.0,
                backhaul_bps: 0.0,
                ms,
                note: String::new(),
            };
        }
        Algo::NoComp => jcora::solve(&without_compression(inst), epsilon),
        Algo::Jcora => jcora::solve(inst, epsilon),
        Algo::FixedOmega(w) => jcora::solve(&with_fixed_omega(inst, *w), epsilon),
        Algo::Ext(a) => solve_ext(inst, epsilon, *a),
    };
    let ms = if timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    record_from(algo, inst, param, res, ms)
}

/// User ratios of the default fixed-ratio baseline grid.
pub fn fixed_omega_grid(inst: &Instance, points: usize) -> Vec<f64> {
    let lo = inst
        .users
        .iter()
        .map(|u| u.comp_user.omega_min)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = inst
        .users
        .iter()
        .map(|u| u.comp_user.omega_max)
        .fold(f64::INFINITY, f64::min);
    if points < 2 || !(hi > lo) {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Local-only, no-compression, exact and fixed-ratio runs on one instance.
pub fn run_baselines(inst: &Instance, epsilon: f64) -> Vec<RunRecord> {
    let mut algos = vec![Algo::Local, Algo::NoComp, Algo::Jcora];
    algos.extend(fixed_omega_grid(inst, 7).into_iter().map(Algo::FixedOmega));
    algos
        .par_iter()
        .map(|a| run_algo(a, inst, epsilon, 0.0, false))
        .collect()
}

// ---------------------------------------------------------------------------
// Sweeps

fn default_epsilon() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub format: u32,
    pub param: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub seed_count: Option<u64>,
    pub k: usize,
    pub algos: Vec<Algo>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub overrides: BTreeMap<String, toml::Value>,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        check_format(spec.format)?;
        if spec.values.is_empty() || spec.algos.is_empty() || spec.seed_list().is_empty() {
            return Err(Error::Config("a sweep needs values, seeds and algos".into()));
        }
        spec.params_for(spec.values[0])?;
        Ok(spec)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match (&self.seeds, self.seed_count) {
            (Some(s), _) => s.clone(),
            (None, Some(n)) => (0..n).collect(),
            (None, None) => (0..100).collect(),
        }
    }

    fn params_for(&self, value: f64) -> Result<(ScenarioParams, usize)> {
        let mut p = ScenarioParams::default();
        for (k, v) in &self.overrides {
            let v = match v {
                toml::Value::Integer(i) => toml::Value::Float(*i as f64),
                v => v.clone(),
            };
            p.set_value(k, v)?;
        }
        if self.param == "k" {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::Config(format!("k must be a positive integer, got {value}")));
            }
            return Ok((p, value as usize));
        }
        p.set_f64(&self.param, value)?;
        Ok((p, self.k))
    }
}

/// Runs every (algorithm, value, seed) combination. Rows come back sorted
/// by algorithm (in spec order), value and seed.
pub fn run_sweep(spec: &SweepSpec, timing: bool) -> Result<Vec<RunRecord>> {
    let seeds = spec.seed_list();
    let jobs: Vec<(usize, usize, u64)> = (0..spec.values.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .flat_map(|(v, s)| (0..spec.algos.len()).map(move |a| (a, v, s)))
        .collect();
    let mut rows: Vec<((usize, usize, u64), RunRecord)> = jobs
        .par_iter()
        .map(|&(a, v, s)| {
            let value = spec.values[v];
            let algo = &spec.algos[a];
            let rec = match spec.params_for(value).and_then(|(p, k)| p.generate(s, k)) {
                Ok(inst) => run_algo(algo, &inst, spec.epsilon, value, timing),
                Err(e) => RunRecord {
                    algo: algo.to_string(),
                    seed: s,
                    param: value,
                    eta: f64::NAN,
                    modes: [0; 4],
                    fog_hz: 0.0,
                    backhaul_bps: 0.0,
                    ms: 0.0,
                    note: e.to_string(),
                },
            };
            ((a, v, s), rec)
        })
        .collect();
    rows.sort_by_key(|(key, _)| *key);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub const CSV_HEADER: [&str; 11] = [
    "algo",
    "seed",
    "param",
    "eta",
    "n_local",
    "n_fog",
    "n_cloud",
    "n_recomp",
    "fog_hz",
    "backhaul_bps",
    "ms",
];

pub fn write_runs_csv<W: std::io::Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.algo.clone(),
            r.seed.to_string(),
            r.param.to_string(),
            r.eta.to_string(),
            r.modes[0].to_string(),
            r.modes[1].to_string(),
            r.modes[2].to_string(),
            r.modes[3].to_string(),
            r.fog_hz.to_string(),
            r.backhaul_bps.to_string(),
            format!("{:.3}", r.ms),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Per (algorithm, value) means over the seeds with a finite cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub algo: String,
    pub param: f64,
    pub runs: usize,
    pub solved: usize,
    pub mean_eta: f64,
    pub mean_fog_hz: f64,
    pub mean_backhaul_bps: f64,
}

pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    for r in records {
        let same = |a: &AggregateRow| a.algo == r.algo && a.param.to_bits() == r.param.to_bits();
        let idx = match out.iter().position(same) {
            Some(i) => i,
            None => {
                out.push(AggregateRow {
                    algo: r.algo.clone(),
                    param: r.param,
                    runs: 0,
                    solved: 0,
                    mean_eta: 0.0,
                    mean_fog_hz: 0.0,
                    mean_backhaul_bps: 0.0,
                });
                out.len() - 1
            }
        };
        let a = &mut out[idx];
        a.runs += 1;
        if r.eta.is_finite() {
            a.solved += 1;
            a.mean_eta += r.eta;
            a.mean_fog_hz += r.fog_hz;
            a.mean_backhaul_bps += r.backhaul_bps;
        }
    }
    for a in &mut out {
        let n = a.solved as f64;
        if a.solved == 0 {
            a.mean_eta = f64::NAN;
        } else {
            a.mean_eta /= n;
            a.mean_fog_hz /= n;
            a.mean_backhaul_bps /= n;
        }
    }
    out
}

pub fn write_aggregate_csv<W: std::io::Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the sweep in `spec_path` and writes `runs.csv` and
/// `aggregate.csv` into `out_dir`.
pub fn sweep(spec_path: &Path, out_dir: &Path, timing: bool) -> Result<Vec<RunRecord>> {
    let spec = SweepSpec::from_toml(&std::fs::read_to_string(spec_path)?)?;
    std::fs::create_dir_all(out_dir)?;
    let records = run_sweep(&spec, timing)?;
    write_runs_csv(&records, std::fs::File::create(out_dir.join("runs.csv"))?)?;
    write_aggregate_csv(
        &aggregate(&records),
        std::fs::File::create(out_dir.join("aggregate.csv"))?,
    )?;
    Ok(records)
}
