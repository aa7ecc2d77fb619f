//! Mode 3: the fog decompresses the user payload, recompresses it harder
//! and forwards it to the cloud.
//!
//! Three feasibility engines decide whether a set of offloading users fits
//! the shared fog CPU and backhaul at a cost level `eta`:
//!
//! * PLA samples the exact Mode-3 trade-off curve `F(d)` (minimum fog CPU
//!   at backhaul `d`) at `L` points and selects modes with a
//!   multiple-choice knapsack over the piecewise-linear interpolant.
//! * OSTS fixes the device-side variables at their Mode-1 optimum, prices
//!   backhaul with a multiplier `lambda`, and sweeps `lambda` on a grid.
//! * IUTS uses the same two-stage reduction and updates `lambda` by
//!   projected sub-gradient steps.
//!
//! Multipliers are expressed in normalized units: fog CPU is measured in
//! units of the fog capacity and backhaul in units of the backhaul
//! capacity. A normalized `lambda` of 1 therefore prices the whole backhaul
//! at the whole fog CPU.

use rayon::prelude::*;

use crate::convex::{solve_p3, solve_p4, solve_p_dk, Stage1Result};
use crate::error::{Error, Result};
use crate::jcora::{self, Solution, Verified};
use crate::model::{Decision, Instance, Mode, SystemConfig, UserProfile, FEAS_TOL};
use crate::select::{pwl_eval, solve_mckp, SelectOption, Shape};

/// Lower end of the PLA backhaul grid, in bits/s.
pub const EPS_D: f64 = 1.0;

/// Reduced Mode-3 model with the device-side variables fixed.
///
/// With `w` the ratio the fog achieves on the payload it receives, the
/// fog-side time budget reads
/// `(g1t * w^g2 + g3t) / f_f + b_in / (w * d) <= nu0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode3Coefficients {
    /// Time left for fog processing and forwarding, in seconds.
    pub nu0: f64,
    pub g1t: f64,
    pub g2: f64,
    /// Constant fog cycles: recompression offset plus user-side decompression.
    pub g3t: f64,
    /// Payload reaching the fog (the user-compressed size), in bits.
    pub b_in: f64,
    pub omega_f_min: f64,
    pub omega_f_max: f64,
    /// Largest backhaul worth considering (the Mode-2 requirement, or the
    /// backhaul capacity).
    pub d_cap: f64,
    /// Fog CPU above which Mode 3 is dominated (the Mode-1 requirement, or
    /// the fog capacity).
    pub f_cap: f64,
}

impl Mode3Coefficients {
    fn work(&self, w: f64) -> f64 {
        let shape = if self.g1t == 0.0 {
            0.0
        } else {
            self.g1t * w.powf(self.g2)
        };
        shape + self.g3t
    }

    /// Feasibility edge `b_in / (nu0 * w_max)`.
    pub fn d_bar1(&self) -> f64 {
        self.b_in / (self.nu0 * self.omega_f_max)
    }

    pub fn d_bar2(&self) -> f64 {
        h1(self, self.omega_f_max)
    }

    pub fn d_bar3(&self) -> f64 {
        h1(self, self.omega_f_min)
    }

    fn decreasing_in_omega(&self) -> bool {
        self.g2 <= 0.0 || self.g1t == 0.0
    }
}

/// Minimum fog CPU at ratio `w` and backhaul `d`; `None` when the time
/// budget cannot absorb the forwarding delay.
pub fn h0(c: &Mode3Coefficients, w: f64, d: f64) -> Option<f64> {
    let den = c.nu0 * w * d - c.b_in;
    if !(den > 0.0) {
        return None;
    }
    if d.is_infinite() {
        return Some(c.work(w) / c.nu0);
    }
    Some(w * d * c.work(w) / den)
}

/// Backhaul at which `w` is the stationary point of `h0(., d)`.
pub fn h1(c: &Mode3Coefficients, w: f64) -> f64 {
    let num = c.b_in * (c.g1t * (c.g2 + 1.0) * w.powf(c.g2) + c.g3t);
    num / (c.nu0 * c.g1t * c.g2 * w.powf(c.g2 + 1.0))
}

/// Inverse of [`h1`] on the ratio box, clipped to the nearer bound.
pub fn inv_h1(c: &Mode3Coefficients, d: f64) -> f64 {
    let (mut lo, mut hi) = (c.omega_f_min, c.omega_f_max);
    if d >= h1(c, lo) {
        return lo;
    }
    if d <= h1(c, hi) {
        return hi;
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if h1(c, mid) > d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ratio minimizing `h0(., d)` on the box; `None` at or below the
/// feasibility edge.
pub fn optimal_omega_f(c: &Mode3Coefficients, d: f64) -> Option<f64> {
    if !(d > c.d_bar1()) {
        return None;
    }
    if c.decreasing_in_omega() || d <= c.d_bar2() {
        Some(c.omega_f_max)
    } else if d >= c.d_bar3() {
        Some(c.omega_f_min)
    } else {
        Some(inv_h1(c, d))
    }
}

/// Partial derivative of [`h0`] in `d` at fixed ratio.
pub fn dh0_dd(c: &Mode3Coefficients, w: f64, d: f64) -> Option<f64> {
    let den = c.nu0 * w * d - c.b_in;
    if !(den > 0.0) {
        return None;
    }
    Some(-c.b_in * w * c.work(w) / (den * den))
}

/// Slope of the optimal fog CPU `h0(optimal_omega_f(d), d)` in `d`.
pub fn composed_gradient(c: &Mode3Coefficients, d: f64) -> Option<f64> {
    dh0_dd(c, optimal_omega_f(c, d)?, d)
}

/// Backhaul at which the optimal fog CPU has slope `-lambda` (raw units,
/// Hz per bit/s), capped at `d_cap`.
///
/// `None` when Mode 3 is dominated at this price: the fog CPU at the root
/// reaches `f_cap`, or the root sits on the feasibility edge.
pub fn d_of_lambda(c: &Mode3Coefficients, lambda: f64) -> Option<f64> {
    let edge = c.d_bar1();
    if !(c.d_cap > edge) {
        return None;
    }
    let slope_at = |d: f64| composed_gradient(c, d).unwrap_or(f64::NEG_INFINITY);
    let d = if slope_at(c.d_cap) <= -lambda {
        c.d_cap
    } else {
        let mut hi = c.d_cap;
        if hi.is_infinite() {
            hi = if edge > 0.0 { 2.0 * edge } else { 1.0 };
            while slope_at(hi) <= -lambda && hi < f64::MAX / 4.0 {
                hi *= 2.0;
            }
        }
        let mut lo = edge;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope_at(mid) > -lambda {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        hi
    };
    if d - edge <= 1e-12 * edge {
        return None;
    }
    let f = h0(c, optimal_omega_f(c, d)?, d)?;
    (f < c.f_cap).then_some(d)
}

/// Reduced Mode-3 model of a user whose device-side variables are frozen at
/// `stage1`. `None` when no time is left for fog processing or the fog
/// ratio range is empty. Caps default to the system capacities.
pub fn mode3_coeffs(u: &UserProfile, cfg: &SystemConfig, eta: f64, stage1: &Stage1Result) -> Option<Mode3Coefficients> {
    let dec = &stage1.decision;
    let t_user = stage1.user_side_delay(u, cfg);
    let energy = stage1.energy(u, cfg);
    let by_cost = if u.w_t > 0.0 {
        (eta - u.w_e * energy) / u.w_t
    } else {
        f64::INFINITY
    };
    let nu0 = by_cost.min(u.t_max) - t_user - cfg.t_cloud;
    if !(nu0 > 0.0 && nu0.is_finite()) {
        return None;
    }
    let cf = &u.comp_fog;
    let w_lo = (cf.omega_min / dec.omega_u).max(1.0);
    let w_hi = cf.omega_max / dec.omega_u;
    if w_hi < w_lo {
        return None;
    }
    Some(Mode3Coefficients {
        nu0,
        g1t: cf.gamma0 * cf.gamma1,
        g2: cf.gamma2,
        g3t: cf.gamma0 * cf.gamma3 + u.decomp_user.eval_raw(dec.omega_u),
        b_in: u.b_in / dec.omega_u,
        omega_f_min: w_lo,
        omega_f_max: w_hi,
        d_cap: cfg.d_max,
        f_cap: cfg.f_fog_max,
    })
}

/// Piecewise-linear table of the Mode-3 trade-off curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaTable {
    pub breakpoints: Vec<f64>,
    pub f_values: Vec<f64>,
    /// Slope of segment `l`, between breakpoints `l` and `l + 1`.
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl PlaTable {
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Domain("breakpoints must be strictly increasing".into()));
        }
        let (breakpoints, f_values): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let slopes: Vec<f64> = points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect();
        let intercepts = slopes.iter().zip(points).map(|(a, p)| p.1 - a * p.0).collect();
        Ok(Self {
            breakpoints,
            f_values,
            slopes,
            intercepts,
        })
    }

    /// Interpolated value at `d` inside the breakpoint range.
    pub fn eval(&self, d: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .breakpoints
            .iter()
            .copied()
            .zip(self.f_values.iter().copied())
            .collect();
        pwl_eval(&pts, d)
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.breakpoints
            .iter()
            .copied()
            .zip(self.f_values.iter().copied())
            .collect()
    }
}

/// One candidate operating point of a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeOption {
    pub mode: Mode,
    pub fog_hz: f64,
    pub backhaul_bps: f64,
    pub decision: Decision,
}

/// Verdict of an extended feasibility engine on one offloading set.
#[derive(Debug, Clone, PartialEq)]
pub struct FvOutcome {
    pub assignments: Vec<(usize, Decision)>,
    /// Minimum total fog CPU found for the set.
    pub fog_total: f64,
    pub backhaul_total: f64,
    /// `fog_total` fits the fog capacity.
    pub feasible: bool,
    /// IUTS only: the iteration settled before the cap.
    pub converged: bool,
    /// Normalized multiplier of the returned assignment (OSTS, IUTS).
    pub lambda: Option<f64>,
}

impl FvOutcome {
    fn into_verified(self) -> Option<Verified> {
        self.feasible.then_some(Verified {
            decisions: self.assignments,
            fog_total: self.fog_total,
            backhaul_total: self.backhaul_total,
        })
    }
}

fn fits_fog(total: f64, cfg: &SystemConfig) -> bool {
    total <= cfg.f_fog_max * (1.0 + FEAS_TOL)
}

/// Selection engine for the extended problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtAlgorithm {
    /// `segments` is the number of PLA segments `L`.
    Pla { segments: usize },
    /// Normalized multiplier step.
    Osts { delta_lambda: f64 },
    /// Iteration cap and the fixed step of the relaxed mode update.
    Iuts { max_iters: usize, step: f64 },
}

impl ExtAlgorithm {
    pub const PLA_DEFAULT: Self = Self::Pla { segments: 17 };
    pub const OSTS_DEFAULT: Self = Self::Osts { delta_lambda: 5e-3 };
    pub const IUTS_DEFAULT: Self = Self::Iuts {
        max_iters: 200,
        step: 0.1,
    };

    pub fn name(&self) -> &'static str {
        match self {
            Self::Pla { .. } => "pla",
            Self::Osts { .. } => "osts",
            Self::Iuts { .. } => "iuts",
        }
    }
}

// ---------------------------------------------------------------------------
// Two-stage data shared by OSTS and IUTS.

/// Per-user data of the two-stage engines.
#[derive(Debug, Clone, PartialEq)]
pub struct TsaUser {
    pub user: usize,
    pub fog: Option<Stage1Result>,
    pub cloud: Option<Stage1Result>,
    pub coeffs: Option<Mode3Coefficients>,
}

impl TsaUser {
    fn stage1(&self) -> Option<&Stage1Result> {
        self.fog.as_ref().or(self.cloud.as_ref())
    }

    /// Mode-3 option at normalized multiplier `lambda`.
    fn mode3_at(&self, raw_lambda: f64) -> Option<ModeOption> {
        let c = self.coeffs.as_ref()?;
        let d = d_of_lambda(c, raw_lambda)?;
        let w = optimal_omega_f(c, d)?;
        let f = h0(c, w, d)?;
        let base = self.stage1()?.decision;
        let decision = Decision {
            mode: Mode::CloudRecompressed,
            omega_f: base.omega_u * w,
            f_f: f,
            d,
            ..base
        };
        Some(ModeOption {
            mode: Mode::CloudRecompressed,
            fog_hz: f,
            backhaul_bps: d,
            decision,
        })
    }

    fn fixed_options(&self) -> Vec<ModeOption> {
        let mut v = Vec::new();
        if let Some(r) = &self.fog {
            v.push(ModeOption {
                mode: Mode::Fog,
                fog_hz: r.resource,
                backhaul_bps: 0.0,
                decision: r.decision,
            });
        }
        if let Some(r) = &self.cloud {
            v.push(ModeOption {
                mode: Mode::Cloud,
                fog_hz: 0.0,
                backhaul_bps: r.resource,
                decision: r.decision,
            });
        }
        v
    }
}

/// Stage-1 solves and Mode-3 coefficients for `users` at level `eta`.
pub fn tsa_users(profiles: &[UserProfile], users: &[usize], cfg: &SystemConfig, eta: f64) -> Result<Vec<TsaUser>> {
    users
        .par_iter()
        .map(|&k| {
            let u = &profiles[k];
            let fog = solve_p3(u, cfg, eta)?;
            let cloud = solve_p4(u, cfg, eta)?;
            let coeffs = fog
                .as_ref()
                .or(cloud.as_ref())
                .and_then(|s| mode3_coeffs(u, cfg, eta, s))
                .map(|mut c| {
                    if let Some(r) = &cloud {
                        c.d_cap = r.resource.min(cfg.d_max);
                    }
                    if let Some(r) = &fog {
                        c.f_cap = r.resource.min(cfg.f_fog_max);
                    }
                    c
                });
            Ok(TsaUser {
                user: k,
                fog,
                cloud,
                coeffs,
            })
        })
        .collect()
}

fn lambda_scale(cfg: &SystemConfig) -> f64 {
    cfg.f_fog_max / cfg.d_max
}

fn options_at(users: &[TsaUser], raw_lambda: f64) -> Vec<Vec<ModeOption>> {
    users
        .iter()
        .map(|u| {
            let mut v = u.fixed_options();
            v.extend(u.mode3_at(raw_lambda));
            v
        })
        .collect()
}

fn to_select(opts: &[Vec<ModeOption>]) -> Vec<Vec<SelectOption>> {
    opts.iter()
        .map(|v| {
            v.iter()
                .map(|o| SelectOption {
                    mode: o.mode,
                    shape: Shape::Point {
                        backhaul: o.backhaul_bps,
                        fog: o.fog_hz,
                    },
                })
                .collect()
        })
        .collect()
}

fn outcome_from_choice(
    users: &[TsaUser],
    opts: &[Vec<ModeOption>],
    choice: &[usize],
    cfg: &SystemConfig,
    lambda: Option<f64>,
) -> FvOutcome {
    let picked: Vec<&ModeOption> = opts.iter().zip(choice).map(|(v, &i)| &v[i]).collect();
    let fog_total = picked.iter().map(|o| o.fog_hz).sum();
    let backhaul_total = picked.iter().map(|o| o.backhaul_bps).sum();
    FvOutcome {
        assignments: users.iter().zip(&picked).map(|(u, o)| (u.user, o.decision)).collect(),
        fog_total,
        backhaul_total,
        feasible: fits_fog(fog_total, cfg),
        converged: true,
        lambda,
    }
}

/// Exact three-option selection at one multiplier.
fn select_at(users: &[TsaUser], cfg: &SystemConfig, lambda: f64) -> Option<FvOutcome> {
    let opts = options_at(users, lambda * lambda_scale(cfg));
    if opts.iter().any(|v| v.is_empty()) {
        return None;
    }
    let sol = solve_mckp(&to_select(&opts), cfg.d_max)?;
    let choice: Vec<usize> = sol.picks.iter().map(|p| p.option).collect();
    Some(outcome_from_choice(users, &opts, &choice, cfg, Some(lambda)))
}

/// Exact Mode-1/Mode-2 selection, ignoring Mode 3.
fn base_split(users: &[TsaUser], cfg: &SystemConfig) -> Option<FvOutcome> {
    let opts: Vec<Vec<ModeOption>> = users.iter().map(TsaUser::fixed_options).collect();
    if opts.iter().any(|v| v.is_empty()) {
        return None;
    }
    let sol = solve_mckp(&to_select(&opts), cfg.d_max)?;
    let choice: Vec<usize> = sol.picks.iter().map(|p| p.option).collect();
    Some(outcome_from_choice(users, &opts, &choice, cfg, None))
}

fn empty_outcome() -> FvOutcome {
    FvOutcome {
        assignments: vec![],
        fog_total: 0.0,
        backhaul_total: 0.0,
        feasible: true,
        converged: true,
        lambda: None,
    }
}

/// Smallest normalized multiplier at which no user keeps a Mode-3 option.
pub fn lambda_max(users: &[TsaUser], cfg: &SystemConfig) -> f64 {
    let scale = lambda_scale(cfg);
    let none_left = |l: f64| users.iter().all(|u| u.mode3_at(l * scale).is_none());
    if none_left(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while !none_left(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if none_left(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// OSTS over a prepared user set. With `early_exit` the sweep stops at the
/// first feasible multiplier; otherwise it returns the sweep minimum.
pub fn osts_with(
    users: &[TsaUser],
    cfg: &SystemConfig,
    delta_lambda: f64,
    early_exit: bool,
) -> Result<Option<FvOutcome>> {
    if !(delta_lambda > 0.0) {
        return Err(Error::Config("lambda step must be positive".into()));
    }
    if users.is_empty() {
        return Ok(Some(empty_outcome()));
    }
    let top = lambda_max(users, cfg);
    let steps = (top / delta_lambda).floor() as usize;
    let mut best: Option<FvOutcome> = None;
    for i in 0..=steps {
        let Some(out) = select_at(users, cfg, i as f64 * delta_lambda) else {
            continue;
        };
        let done = early_exit && out.feasible;
        if best.as_ref().is_none_or(|b| out.fog_total < b.fog_total) {
            best = Some(out);
        }
        if done {
            break;
        }
    }
    Ok(best)
}

/// One-dimensional multiplier sweep.
pub fn solve_fv_osts(
    profiles: &[UserProfile],
    users: &[usize],
    cfg: &SystemConfig,
    eta: f64,
    delta_lambda: f64,
) -> Result<Option<FvOutcome>> {
    let tsa = tsa_users(profiles, users, cfg, eta)?;
    osts_with(&tsa, cfg, delta_lambda, true)
}

/// Euclidean projection onto `{s >= 0, sum(s) = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projected dual update `[lambda + step * excess]^+`.
pub fn lambda_update(lambda: f64, step: f64, excess: f64) -> f64 {
    (lambda + step * excess).max(0.0)
}

/// Greedy fix-up of a rounded choice: restore the backhaul cap by moving
/// users to the option that frees backhaul at the least fog cost, then
/// take the largest fog savings that still fit.
fn repair(opts: &[Vec<ModeOption>], choice: &mut [usize], cap: f64) -> bool {
    let bh = |c: &[usize]| -> f64 { c.iter().zip(opts).map(|(&i, v)| v[i].backhaul_bps).sum() };
    while bh(choice) > cap {
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, v) in opts.iter().enumerate() {
            let cur = &v[choice[k]];
            for (i, o) in v.iter().enumerate() {
                let freed = cur.backhaul_bps - o.backhaul_bps;
                if freed > 0.0 {
                    let rate = (o.fog_hz - cur.fog_hz) / freed;
                    if best.is_none_or(|b| rate < b.0) {
                        best = Some((rate, k, i));
                    }
                }
            }
        }
        match best {
            Some((_, k, i)) => choice[k] = i,
            None => return false,
        }
    }
    loop {
        let room = cap - bh(choice);
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, v) in opts.iter().enumerate() {
            let cur = &v[choice[k]];
            for (i, o) in v.iter().enumerate() {
                let saving = cur.fog_hz - o.fog_hz;
                if saving > 0.0 && o.backhaul_bps - cur.backhaul_bps <= room && best.is_none_or(|b| saving > b.0) {
                    best = Some((saving, k, i));
                }
            }
        }
        match best {
            Some((_, k, i)) => choice[k] = i,
            None => return true,
        }
    }
}

const SLOT_MODES: [Mode; 3] = [Mode::CloudRecompressed, Mode::Fog, Mode::Cloud];

/// IUTS over a prepared user set.
pub fn iuts_with(users: &[TsaUser], cfg: &SystemConfig, max_iters: usize, step: f64) -> Result<Option<FvOutcome>> {
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    if users.is_empty() {
        return Ok(Some(empty_outcome()));
    }
    let scale = lambda_scale(cfg);
    let (f_cap, d_cap) = (cfg.f_fog_max, cfg.d_max);
    // Relaxed mode weights in the order (Mode 3, Mode 1, Mode 2).
    let mut s: Vec<[f64; 3]> = users
        .iter()
        .map(|u| {
            let avail = [u.coeffs.is_some(), u.fog.is_some(), u.cloud.is_some()];
            let n = avail.iter().filter(|a| **a).count().max(1) as f64;
            avail.map(|a| if a { 1.0 / n } else { 0.0 })
        })
        .collect();
    let mut lambda = 1.0;
    // The exact split without Mode 3 is the starting incumbent, so IUTS is
    // never worse than the base feasibility check.
    let mut best = base_split(users, cfg);
    let mut converged = false;

    for n in 1..=max_iters {
        let raw = lambda * scale;
        let m3: Vec<Option<ModeOption>> = users.iter().map(|u| u.mode3_at(raw)).collect();
        let mut usage = 0.0;
        let mut max_move: f64 = 0.0;
        for (k, u) in users.iter().enumerate() {
            let inf = f64::INFINITY;
            let g = [
                m3[k].map_or(inf, |o| o.fog_hz / f_cap + lambda * o.backhaul_bps / d_cap),
                u.fog.map_or(inf, |r| r.resource / f_cap),
                u.cloud.map_or(inf, |r| lambda * r.resource / d_cap),
            ];
            let live: Vec<usize> = (0..3).filter(|&i| g[i].is_finite()).collect();
            if live.is_empty() {
                return Ok(None);
            }
            let stepped: Vec<f64> = live.iter().map(|&i| s[k][i] - step * g[i]).collect();
            let proj = project_simplex(&stepped);
            let mut next = [0.0; 3];
            for (j, &i) in live.iter().enumerate() {
                next[i] = proj[j];
            }
            for i in 0..3 {
                max_move = max_move.max((next[i] - s[k][i]).abs());
            }
            s[k] = next;
            usage += s[k][0] * m3[k].map_or(0.0, |o| o.backhaul_bps) + s[k][2] * u.cloud.map_or(0.0, |r| r.resource);
        }

        // Round, repair and keep the best integral assignment.
        let opts: Vec<Vec<ModeOption>> = users
            .iter()
            .zip(&m3)
            .map(|(u, o)| {
                let mut v = u.fixed_options();
                v.extend(*o);
                v
            })
            .collect();
        let mut choice: Vec<usize> = opts
            .iter()
            .zip(&s)
            .map(|(v, w)| {
                let top = (0..3)
                    .filter(|&i| v.iter().any(|o| o.mode == SLOT_MODES[i]))
                    .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
                top.and_then(|i| v.iter().position(|o| o.mode == SLOT_MODES[i]))
                    .unwrap_or(0)
            })
            .collect();
        if repair(&opts, &mut choice, cfg.d_max) {
            let out = outcome_from_choice(users, &opts, &choice, cfg, Some(lambda));
            if best.as_ref().is_none_or(|b| out.fog_total < b.fog_total) {
                best = Some(out);
            }
        }

        let next = lambda_update(lambda, 1.0 / (n as f64).sqrt(), usage / d_cap - 1.0);
        let settled = (next - lambda).abs() < 1e-9 && max_move < 1e-9;
        lambda = next;
        if settled {
            converged = true;
            break;
        }
    }
    Ok(best.map(|mut b| {
        b.converged = converged;
        b
    }))
}

/// Iterative multiplier update with relaxed mode weights.
pub fn solve_fv_iuts(
    profiles: &[UserProfile],
    users: &[usize],
    cfg: &SystemConfig,
    eta: f64,
    max_iters: usize,
    step: f64,
) -> Result<Option<FvOutcome>> {
    let tsa = tsa_users(profiles, users, cfg, eta)?;
    iuts_with(&tsa, cfg, max_iters, step)
}

// ---------------------------------------------------------------------------
// PLA

/// Per-user data of the PLA engine.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaUser {
    pub user: usize,
    pub fog: Option<Stage1Result>,
    pub cloud: Option<Stage1Result>,
    pub table: Option<PlaTable>,
}

/// Breakpoints `(d_top - EPS_D) * l / L` for `l = 1..=L`.
pub fn pla_breakpoints(d_top: f64, segments: usize) -> Vec<f64> {
    (1..=segments)
        .map(|l| (d_top - EPS_D) * l as f64 / segments as f64)
        .collect()
}

/// Samples the exact Mode-3 curve of each user.
pub fn pla_users(
    profiles: &[UserProfile],
    users: &[usize],
    cfg: &SystemConfig,
    eta: f64,
    segments: usize,
) -> Result<Vec<PlaUser>> {
    if segments < 2 {
        return Err(Error::Config("PLA needs at least 2 segments".into()));
    }
    users
        .par_iter()
        .map(|&k| {
            let u = &profiles[k];
            let fog = solve_p3(u, cfg, eta)?;
            let cloud = solve_p4(u, cfg, eta)?;
            let d_top = cloud.map_or(cfg.d_max, |r| r.resource.min(cfg.d_max));
            let mut pts = Vec::new();
            for d in pla_breakpoints(d_top, segments) {
                if let Some(p) = solve_p_dk(u, cfg, eta, d)? {
                    pts.push((d, p.fog_hz));
                }
            }
            let table = if pts.is_empty() {
                None
            } else {
                Some(PlaTable::from_points(&pts)?)
            };
            Ok(PlaUser {
                user: k,
                fog,
                cloud,
                table,
            })
        })
        .collect()
}

/// PLA selection over prepared tables.
pub fn pla_with(
    profiles: &[UserProfile],
    users: &[PlaUser],
    cfg: &SystemConfig,
    eta: f64,
) -> Result<Option<FvOutcome>> {
    if users.is_empty() {
        return Ok(Some(empty_outcome()));
    }
    let mut sel = Vec::with_capacity(users.len());
    for u in users {
        let mut v = Vec::new();
        if let Some(r) = &u.fog {
            v.push(SelectOption {
                mode: Mode::Fog,
                shape: Shape::Point {
                    backhaul: 0.0,
                    fog: r.resource,
                },
            });
        }
        if let Some(r) = &u.cloud {
            v.push(SelectOption {
                mode: Mode::Cloud,
                shape: Shape::Point {
                    backhaul: r.resource,
                    fog: 0.0,
                },
            });
        }
        if let Some(t) = &u.table {
            let pts = t.points();
            let shape = if pts.len() == 1 {
                Shape::Point {
                    backhaul: pts[0].0,
                    fog: pts[0].1,
                }
            } else {
                Shape::Curve(pts)
            };
            v.push(SelectOption {
                mode: Mode::CloudRecompressed,
                shape,
            });
        }
        if v.is_empty() {
            return Ok(None);
        }
        sel.push(v);
    }
    let Some(sol) = solve_mckp(&sel, cfg.d_max) else {
        return Ok(None);
    };

    let mut assignments = Vec::with_capacity(users.len());
    let (mut fog_total, mut backhaul_total) = (0.0, 0.0);
    for (u, pick) in users.iter().zip(&sol.picks) {
        let (decision, fog, bh) = match sel[assignments.len()][pick.option].mode {
            Mode::Fog => {
                let r = u.fog.unwrap();
                (r.decision, r.resource, 0.0)
            }
            Mode::Cloud => {
                let r = u.cloud.unwrap();
                (r.decision, 0.0, r.resource)
            }
            _ => {
                // The interpolant over-estimates the convex curve, so the
                // exact point at the chosen backhaul uses no more fog CPU.
                let p = solve_p_dk(&profiles[u.user], cfg, eta, pick.backhaul)?;
                match p {
                    Some(p) if p.fog_hz <= pick.fog * (1.0 + 1e-6) => (p.decision, p.fog_hz, pick.backhaul),
                    _ => {
                        let d = u
                            .table
                            .as_ref()
                            .unwrap()
                            .breakpoints
                            .iter()
                            .copied()
                            .find(|&b| b >= pick.backhaul);
                        let p = match d {
                            Some(d) => solve_p_dk(&profiles[u.user], cfg, eta, d)?,
                            None => None,
                        };
                        match p {
                            Some(p) => (p.decision, p.fog_hz, p.decision.d),
                            None => return Ok(None),
                        }
                    }
                }
            }
        };
        fog_total += fog;
        backhaul_total += bh;
        assignments.push((u.user, decision));
    }
    Ok(Some(FvOutcome {
        assignments,
        fog_total,
        backhaul_total,
        feasible: fits_fog(fog_total, cfg) && backhaul_total <= cfg.d_max * (1.0 + FEAS_TOL),
        converged: true,
        lambda: None,
    }))
}

/// Piecewise-linear approximation engine with `segments` pieces.
pub fn solve_fv_pla(
    profiles: &[UserProfile],
    users: &[usize],
    cfg: &SystemConfig,
    eta: f64,
    segments: usize,
) -> Result<Option<FvOutcome>> {
    let pla = pla_users(profiles, users, cfg, eta, segments)?;
    pla_with(profiles, &pla, cfg, eta)
}

/// Runs the chosen engine on an offloading set.
pub fn solve_fv(
    profiles: &[UserProfile],
    users: &[usize],
    cfg: &SystemConfig,
    eta: f64,
    algo: ExtAlgorithm,
) -> Result<Option<FvOutcome>> {
    match algo {
        ExtAlgorithm::Pla { segments } => solve_fv_pla(profiles, users, cfg, eta, segments),
        ExtAlgorithm::Osts { delta_lambda } => solve_fv_osts(profiles, users, cfg, eta, delta_lambda),
        ExtAlgorithm::Iuts { max_iters, step } => solve_fv_iuts(profiles, users, cfg, eta, max_iters, step),
    }
}

/// Min-max solve with Mode 3 available, using `algo` as the feasibility
/// engine inside the bisection on the cost level.
pub fn solve_ext(inst: &Instance, epsilon: f64, algo: ExtAlgorithm) -> Result<Solution> {
    let verify = |b: &[usize], eta: f64| -> Result<Option<Verified>> {
        Ok(solve_fv(&inst.users, b, &inst.config, eta, algo)?.and_then(FvOutcome::into_verified))
    };
    jcora::bisect(inst, epsilon, &verify)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_user;
    use proptest::prelude::*;

    fn toy(lo: f64, hi: f64) -> Mode3Coefficients {
        Mode3Coefficients {
            nu0: 1.0,
            g1t: 1.0,
            g2: 1.0,
            g3t: 1.0,
            b_in: 1.0,
            omega_f_min: lo,
            omega_f_max: hi,
            d_cap: 1e9,
            f_cap: f64::INFINITY,
        }
    }

    #[test]
    fn closed_form_references() {
        let c = toy(0.5, 4.0);
        assert_eq!(h0(&c, 1.0, 2.0), Some(4.0));
        assert_eq!(h0(&c, 1.0, 1.0), None);
        assert!((h0(&c, 1.0, f64::INFINITY).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(h1(&c, 1.0), 3.0);
        assert!((inv_h1(&c, 3.0) - 1.0).abs() < 1e-9);
        assert_eq!(dh0_dd(&c, 1.0, 2.0), Some(-2.0));
        assert_eq!(dh0_dd(&c, 1.0, 3.0), Some(-0.5));
        assert!(dh0_dd(&c, 1.0, 1e9).unwrap() > -1e-17);
    }

    #[test]
    fn gradient_scales_with_payload() {
        let c = toy(1.0, 1.0);
        let s = Mode3Coefficients { b_in: 3.0, ..c };
        // Scaling b_in and d by 3 divides the slope by 3.
        let (a, b) = (dh0_dd(&c, 1.0, 2.0).unwrap(), dh0_dd(&s, 1.0, 6.0).unwrap());
        assert!((b - a / 3.0).abs() < 1e-15);
    }

    #[test]
    fn omega_cases() {
        let c = Mode3Coefficients {
            g2: -0.5,
            ..toy(1.0, 4.0)
        };
        assert_eq!(optimal_omega_f(&c, 5.0), Some(4.0));
        let c = toy(1.0, 4.0);
        assert_eq!(optimal_omega_f(&c, 100.0), Some(1.0));
        assert_eq!(optimal_omega_f(&c, c.d_bar1()), None);
    }

    #[test]
    fn d_of_lambda_references() {
        let c = toy(1.0, 1.0);
        let d = d_of_lambda(&c, 0.5).unwrap();
        assert!((d - 3.0).abs() < 1e-9, "{d}");
        let uncapped = Mode3Coefficients {
            d_cap: f64::INFINITY,
            ..c
        };
        assert!((d_of_lambda(&uncapped, 0.5).unwrap() - 3.0).abs() < 1e-9);
        let capped = Mode3Coefficients { d_cap: 7.0, ..c };
        assert_eq!(d_of_lambda(&capped, 1e-9), Some(7.0));
        let bounded = Mode3Coefficients { f_cap: 10.0, ..c };
        assert_eq!(d_of_lambda(&bounded, 1e12), None);
    }

    #[test]
    fn projection_and_update() {
        let p = project_simplex(&[0.5, 0.8, 0.2]);
        let want = [1.0 / 3.0, 0.8 - 1.0 / 6.0, 1.0 / 30.0];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((lambda_update(1.0, 1.0, -0.4) - 0.6).abs() < 1e-15);
        assert_eq!(lambda_update(0.1, 1.0, -0.4), 0.0);
    }

    #[test]
    fn pla_table_arithmetic() {
        let t = PlaTable::from_points(&[(1.0, 10.0), (2.0, 6.0)]).unwrap();
        assert_eq!((t.slopes[0], t.intercepts[0]), (-4.0, 14.0));
        assert_eq!(t.eval(1.5), 8.0);
        assert!(PlaTable::from_points(&[(2.0, 1.0), (1.0, 2.0)]).is_err());
        assert_eq!(pla_breakpoints(9.0, 4), vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn coefficients_of_sample_user() {
        let u = sample_user();
        let cfg = crate::bench::default_config();
        let s = solve_p3(&u, &cfg, 0.9).unwrap().unwrap();
        let c = mode3_coeffs(&u, &cfg, 0.9, &s).unwrap();
        // Zero slack in the cost: the budget is the fog time of Mode 1 minus
        // the cloud latency.
        let c1 = mode3_coeffs(&u, &cfg, s.xi1, &s).unwrap();
        let fog_time = u.fog_cycles(s.decision.omega_u) / s.resource;
        let t_slack = u.t_max - s.t1;
        let want = (0.0f64).min(t_slack) + fog_time - cfg.t_cloud;
        assert!(
            (c1.nu0 - want).abs() < 1e-9 * want.abs().max(1.0),
            "{} vs {want}",
            c1.nu0
        );
        assert!(c.nu0 > c1.nu0);
        let late = SystemConfig {
            t_cloud: 10.0,
            ..cfg.clone()
        };
        assert!(mode3_coeffs(&u, &late, 0.9, &s).is_none());
    }

    proptest! {
        #[test]
        fn omega_choice_beats_random_ratios(
            g1 in 0.0f64..5.0, g2 in -2.0f64..3.0, g3 in 0.1f64..5.0, nu0 in 0.1f64..2.0,
            lo in 1.0f64..3.0, width in 0.0f64..5.0, dk in 1.01f64..50.0, t in 0.0f64..1.0,
        ) {
            let c = Mode3Coefficients {
                nu0, g1t: g1, g2, g3t: g3, b_in: 1.0,
                omega_f_min: lo, omega_f_max: lo + width, d_cap: 1e9, f_cap: f64::INFINITY,
            };
            let d = c.d_bar1() * dk;
            let w = optimal_omega_f(&c, d).unwrap();
            let best = h0(&c, w, d).unwrap();
            let other = lo + t * width;
            if let Some(v) = h0(&c, other, d) {
                prop_assert!(best <= v * (1.0 + 1e-9));
            }
        }
    }
}
