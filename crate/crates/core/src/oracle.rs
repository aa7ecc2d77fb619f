//! Brute-force reference solvers for small instances.
//!
//! [`grid_solve`] enumerates every mode tuple and grids the device-side
//! variables (ratio, CPU frequency, transmit power budget `P = rho * p` and
//! bandwidth). The shared fog CPU or backhaul share of an offloading user
//! is not gridded: for a fixed device-side point the smallest share that
//! meets a cost level follows in closed form from the delay budget, and the
//! shares of all users are then summed against the capacities. The result
//! is a feasible point, so its cost is an upper bound on the optimum.
//!
//! The device-side grid is separable. Delay and cost split into a
//! computation part that depends on `(omega, f_u)` and a transmission part
//! that depends on `(P, rho)` and scales with the payload. Only
//! Pareto-minimal `(cost, delay)` pairs can be optimal, and the Pareto set
//! of a sum lies in the sum of the Pareto sets, so full 60-point axes stay
//! cheap.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{self, Decision, Instance, Mode, SystemConfig, UserProfile};

/// Grid resolution and enumeration options.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Points per axis (at least 8) for the generated axes and for each
    /// refinement zoom.
    pub points: usize,
    /// Number of nested grids; level 2 and above zoom into the cells around
    /// the best points of the previous level.
    pub levels: usize,
    /// Log spacing for the ratio, frequency, power and bandwidth axes.
    pub log_scale: [bool; 4],
    /// Modes enumerated per user.
    pub modes: Vec<Mode>,
    /// Explicit per-user axes, replacing the generated ones.
    pub axes: Option<Vec<Axes>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 60,
            levels: 2,
            log_scale: [false, true, true, true],
            modes: vec![Mode::Local, Mode::Fog, Mode::Cloud],
            axes: None,
        }
    }
}

/// Device-side grid of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub omega: Vec<f64>,
    pub f_u: Vec<f64>,
    /// Total transmit power `rho * p` in W.
    pub power: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Axes {
    /// Generated axes: the admissible ratio range, three decades of CPU
    /// frequency, six of power and four of bandwidth.
    pub fn for_user(u: &UserProfile, points: usize, log: [bool; 4]) -> Result<Self> {
        let (lo, hi) = u.omega_u_range()?;
        Ok(Self {
            omega: spaced(lo, hi, points, log[0]),
            f_u: spaced(u.f_max * 1e-3, u.f_max, points, log[1]),
            power: spaced(u.p_max * 1e-6, u.p_max, points, log[2]),
            rho: spaced(u.rho_max * 1e-4, u.rho_max, points, log[3]),
        })
    }

    fn axis(&self, i: usize) -> &Vec<f64> {
        [&self.omega, &self.f_u, &self.power, &self.rho][i]
    }

    fn axis_mut(&mut self, i: usize) -> &mut Vec<f64> {
        match i {
            0 => &mut self.omega,
            1 => &mut self.f_u,
            2 => &mut self.power,
            _ => &mut self.rho,
        }
    }
}

fn spaced(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if log {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect()
}

/// Best grid point found.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub eta: f64,
    pub modes: Vec<Mode>,
    pub decisions: Vec<Decision>,
}

/// A device-side point with unlimited fog CPU / backhaul: its cost `xi`,
/// delay `t`, and the work left for the shared resource (cycles or bits).
#[derive(Debug, Clone, Copy)]
struct FrontPoint {
    xi: f64,
    t: f64,
    work: f64,
    x: [f64; 4],
}

fn pareto<T: Copy>(mut pts: Vec<(f64, f64, T)>) -> Vec<(f64, f64, T)> {
    pts.retain(|p| p.0.is_finite() && p.1.is_finite());
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64, T)> = Vec::new();
    for p in pts {
        if out.last().is_none_or(|q| p.1 < q.1) {
            out.push(p);
        }
    }
    out
}

/// Pareto set of one user in one offloading mode.
fn user_front(u: &UserProfile, cfg: &SystemConfig, mode: Mode, axes: &Axes) -> Vec<FrontPoint> {
    let b0 = model::beta0(u, cfg);
    // Transmission per payload bit, independent of the ratio.
    let mut per_bit = Vec::new();
    for &pw in &axes.power {
        for &rho in &axes.rho {
            let p = pw / rho;
            let bits_per_hz = (p * b0).ln_1p() / std::f64::consts::LN_2;
            if bits_per_hz > 0.0 {
                let t = 1.0 / (rho * bits_per_hz);
                let e = (p + u.p_circuit) / bits_per_hz;
                per_bit.push((u.w_t * t + u.w_e * e, t, (pw, rho)));
            }
        }
    }
    let tx = pareto(per_bit);
    let (extra_xi, extra_t) = match mode {
        Mode::Cloud => (u.w_t * cfg.t_cloud, cfg.t_cloud),
        _ => (0.0, 0.0),
    };
    let mut out = Vec::new();
    for &w in &axes.omega {
        let cycles = u.user_cycles(w);
        let b_out = u.b_in / w;
        let compute = pareto(
            axes.f_u
                .iter()
                .map(|&f| {
                    let t = cycles / f;
                    (u.w_t * t + u.w_e * u.alpha * f * f * cycles, t, f)
                })
                .collect(),
        );
        let mut sums = Vec::with_capacity(compute.len() * tx.len());
        for c in &compute {
            for s in &tx {
                sums.push((c.0 + s.0 * b_out + extra_xi, c.1 + s.1 * b_out + extra_t, (c.2, s.2)));
            }
        }
        let work = match mode {
            Mode::Fog => u.fog_cycles(w),
            _ => b_out,
        };
        for (xi, t, (f, (pw, rho))) in pareto(sums) {
            out.push(FrontPoint {
                xi,
                t,
                work,
                x: [w, f, pw, rho],
            });
        }
    }
    out
}

/// Shared-resource need of one user and the front point achieving it;
/// `None` for local users.
type Placement = Option<(f64, FrontPoint)>;

/// Best mode tuple at one grid level: cost, modes and placements.
type LevelBest = Option<(f64, Vec<Mode>, Vec<Placement>)>;

/// Smallest shared resource over the front at cost level `eta`, with the
/// point that attains it.
fn requirement(u: &UserProfile, front: &[FrontPoint], eta: f64) -> Option<(f64, FrontPoint)> {
    let mut best: Option<(f64, FrontPoint)> = None;
    for p in front {
        let by_cost = if u.w_t > 0.0 {
            (eta - p.xi) / u.w_t
        } else if p.xi <= eta {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        let budget = by_cost.min(u.t_max - p.t);
        if budget > 0.0 {
            let r = p.work / budget;
            if best.is_none_or(|b| r < b.0) {
                best = Some((r, *p));
            }
        }
    }
    best
}

struct UserGrid {
    eta_lo: f64,
    fog: Vec<FrontPoint>,
    cloud: Vec<FrontPoint>,
}

fn tuple_feasible(inst: &Instance, grids: &[UserGrid], tuple: &[Mode], eta: f64) -> Option<Vec<Placement>> {
    let mut fog = 0.0;
    let mut bh = 0.0;
    let mut picks = Vec::with_capacity(tuple.len());
    for ((u, g), m) in inst.users.iter().zip(grids).zip(tuple) {
        match m {
            Mode::Local => {
                if g.eta_lo > eta {
                    return None;
                }
                picks.push(None);
            }
            Mode::Fog => {
                let r = requirement(u, &g.fog, eta)?;
                fog += r.0;
                picks.push(Some(r));
            }
            _ => {
                let r = requirement(u, &g.cloud, eta)?;
                bh += r.0;
                picks.push(Some(r));
            }
        }
    }
    (fog <= inst.config.f_fog_max && bh <= inst.config.d_max).then_some(picks)
}

/// Smallest feasible level of one mode tuple.
fn tuple_value(inst: &Instance, grids: &[UserGrid], tuple: &[Mode]) -> Option<(f64, Vec<Placement>)> {
    let finite_lo = grids
        .iter()
        .map(|g| g.eta_lo)
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let mut hi = if finite_lo > 0.0 { finite_lo } else { 1.0 };
    let mut picks = None;
    for _ in 0..64 {
        if let Some(p) = tuple_feasible(inst, grids, tuple, hi) {
            picks = Some(p);
            break;
        }
        hi *= 2.0;
    }
    let mut picks = picks?;
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match tuple_feasible(inst, grids, tuple, mid) {
            Some(p) => {
                hi = mid;
                picks = p;
            }
            None => lo = mid,
        }
    }
    Some((hi, picks))
}

fn local_eta(u: &UserProfile) -> Result<f64> {
    let f_min = u.c_total / u.t_max;
    if f_min > u.f_max {
        return Ok(f64::INFINITY);
    }
    let q = |f: f64| u.w_e * u.alpha * f * f * u.c_total + u.w_t * u.c_total / f;
    if f_min == u.f_max {
        return Ok(q(f_min));
    }
    Ok(scan_min_1d(q, (f_min, u.f_max), 1000)?.1)
}

fn tuples(k: usize, modes: &[Mode]) -> Vec<Vec<Mode>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t| {
                modes.iter().map(move |&m| {
                    let mut t = t.clone();
                    t.push(m);
                    t
                })
            })
            .collect();
    }
    out
}

fn solve_level(inst: &Instance, spec: &GridSpec, axes: &[Axes]) -> Result<(LevelBest, Vec<UserGrid>)> {
    let grids: Vec<UserGrid> = inst
        .users
        .par_iter()
        .zip(axes)
        .map(|(u, a)| {
            let offload = |m: Mode| {
                if spec.modes.contains(&m) {
                    user_front(u, &inst.config, m, a)
                } else {
                    Vec::new()
                }
            };
            Ok(UserGrid {
                eta_lo: local_eta(u)?,
                fog: offload(Mode::Fog),
                cloud: offload(Mode::Cloud),
            })
        })
        .collect::<Result<_>>()?;
    let all = tuples(inst.users.len(), &spec.modes);
    let best = all
        .par_iter()
        .enumerate()
        .filter_map(|(i, t)| tuple_value(inst, &grids, t).map(|(v, p)| (v, i, t.clone(), p)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(v, _, t, p)| (v, t, p));
    Ok((best, grids))
}

fn zoom(axes: &mut Axes, x: &[f64; 4], points: usize, log: [bool; 4]) {
    for i in 0..4 {
        let axis = axes.axis(i);
        let Some(pos) = axis.iter().position(|v| *v == x[i]) else {
            continue;
        };
        let lo = axis[pos.saturating_sub(1)];
        let hi = axis[(pos + 1).min(axis.len() - 1)];
        let mut merged = axis.clone();
        merged.extend(spaced(lo, hi, points, log[i]));
        merged.sort_by(f64::total_cmp);
        merged.dedup();
        *axes.axis_mut(i) = merged;
    }
}

/// Best min-max cost over all mode tuples and grid points (K <= 3).
pub fn grid_solve(inst: &Instance, spec: &GridSpec) -> Result<GridResult> {
    inst.check()?;
    let k = inst.users.len();
    if k > 3 {
        return Err(Error::Config(format!("grid oracle supports at most 3 users, got {k}")));
    }
    if spec.modes.is_empty() || spec.levels == 0 {
        return Err(Error::Config("grid needs at least one mode and one level".into()));
    }
    let mut axes = match &spec.axes {
        Some(a) if a.len() == k => a.clone(),
        Some(_) => return Err(Error::Config("explicit axes must be given for every user".into())),
        None => {
            if spec.points < 8 {
                return Err(Error::Config("grid needs at least 8 points per axis".into()));
            }
            inst.users
                .iter()
                .map(|u| Axes::for_user(u, spec.points, spec.log_scale))
                .collect::<Result<_>>()?
        }
    };
    let mut best = None;
    for level in 0..spec.levels {
        let (found, _) = solve_level(inst, spec, &axes)?;
        let Some(found) = found else { break };
        if level + 1 < spec.levels {
            for (a, pick) in axes.iter_mut().zip(&found.2) {
                if let Some((_, p)) = pick {
                    zoom(a, &p.x, spec.points.max(8), spec.log_scale);
                }
            }
        }
        best = Some(found);
    }
    let (eta, modes, picks) = best.ok_or_else(|| Error::Infeasible("no grid point meets the constraints".into()))?;
    let decisions = inst
        .users
        .iter()
        .zip(&modes)
        .zip(&picks)
        .map(|((u, &m), pick)| match pick {
            None => {
                let f_min = u.c_total / u.t_max;
                let q = |f: f64| u.w_e * u.alpha * f * f * u.c_total + u.w_t * u.c_total / f;
                let f = if f_min >= u.f_max {
                    u.f_max
                } else {
                    scan_min_1d(q, (f_min, u.f_max), 1000).map(|r| r.0).unwrap_or(u.f_max)
                };
                Decision::local(f)
            }
            Some((r, p)) => {
                let [w, f, pw, rho] = p.x;
                let (f_f, d) = if m == Mode::Fog { (*r, 0.0) } else { (0.0, *r) };
                Decision {
                    mode: m,
                    omega_u: w,
                    omega_f: w,
                    f_u: f,
                    f_f,
                    p: pw / rho,
                    rho,
                    d,
                }
            }
        })
        .collect();
    Ok(GridResult { eta, modes, decisions })
}

/// Dense scan with `n` cells followed by golden-section refinement around
/// the best cell. Returns `(argmin, min)`.
pub fn scan_min_1d<F: Fn(f64) -> f64>(f: F, interval: (f64, f64), n: usize) -> Result<(f64, f64)> {
    let (a, b) = interval;
    if n < 100 {
        return Err(Error::Config("scan needs at least 100 cells".into()));
    }
    if !(a <= b) {
        return Err(Error::Domain(format!("empty interval [{a}, {b}]")));
    }
    let x_at = |i: usize| a + (b - a) * i as f64 / n as f64;
    let mut best = (a, f(a));
    let mut best_i = 0;
    for i in 1..=n {
        let x = x_at(i);
        let v = f(x);
        if v < best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let (mut lo, mut hi) = (x_at(best_i.saturating_sub(1)), x_at((best_i + 1).min(n)));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Largest relative gap between `grad` and a Richardson-extrapolated
/// central difference of `f` at `x`.
pub fn finite_diff_check(f: &dyn Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-3 * x[i].abs().max(1e-3);
        let mut central = |h: f64| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        };
        let num = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        let scale = grad[i].abs().max(num.abs());
        if scale > 0.0 {
            worst = worst.max((num - grad[i]).abs() / scale);
        }
    }
    worst
}
