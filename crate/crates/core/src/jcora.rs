//! Exact min-max solver for the local / fog / cloud problem.
//!
//! The solver bisects on the cost level `eta`. At a given level every user
//! whose best local cost is at most `eta` runs locally (set A) and the rest
//! (set B) must offload. Set B is feasible when each of its users has a
//! Mode-1 or Mode-2 option within `eta` and a 0-1 knapsack can route enough
//! of them to the cloud that the remaining fog demand fits.

use rayon::prelude::*;

use crate::convex::{solve_p3, solve_p4, Stage1Result};
use crate::error::{Error, Result};
use crate::model::{self, Decision, Instance, Mode, PeerTotals, SystemConfig, UserProfile, FEAS_TOL};
use crate::select::knapsack01;

/// Largest factor by which the initial upper bound may grow before the
/// instance is declared infeasible.
const UPPER_GROWTH_CAP: f64 = 1e6;

/// Best local frequency and the cost it achieves; cost is infinite when
/// the deadline cannot be met even at the maximum frequency.
pub fn local_optimum(u: &UserProfile) -> (f64, f64) {
    let c = u.c_total;
    let f_min = c / u.t_max;
    if f_min > u.f_max {
        return (u.f_max, f64::INFINITY);
    }
    let q = |f: f64| u.w_e * u.alpha * f * f * c + u.w_t * c / f;
    let f_sta = if u.w_e == 0.0 {
        f64::INFINITY
    } else {
        (u.w_t / (2.0 * u.w_e * u.alpha)).cbrt()
    };
    if f_sta >= f_min && f_sta <= u.f_max {
        return (f_sta, q(f_sta));
    }
    let (a, b) = (q(f_min), q(u.f_max));
    if a <= b {
        (f_min, a)
    } else {
        (u.f_max, b)
    }
}

/// Minimum cost of running the whole task on the device.
pub fn eta_local(u: &UserProfile) -> f64 {
    local_optimum(u).1
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    pub set_a: Vec<usize>,
    pub set_b: Vec<usize>,
}

/// Threshold split of users by their local costs; ties go to A.
pub fn classify_values(eta_lo: &[f64], eta: f64) -> Classification {
    let (set_a, set_b) = (0..eta_lo.len()).partition(|&k| eta_lo[k] <= eta);
    Classification { set_a, set_b }
}

pub fn classify(profiles: &[UserProfile], eta: f64) -> Classification {
    let lo: Vec<f64> = profiles.iter().map(eta_local).collect();
    classify_values(&lo, eta)
}

/// Stage-1 options of one offloading user.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOne {
    pub user: usize,
    pub fog: Option<Stage1Result>,
    pub cloud: Option<Stage1Result>,
}

/// Solves the Mode-1 and Mode-2 problems for `users` in parallel.
pub fn stage_one(profiles: &[UserProfile], users: &[usize], cfg: &SystemConfig, eta: f64) -> Result<Vec<StageOne>> {
    users
        .par_iter()
        .map(|&k| {
            let u = &profiles[k];
            Ok(StageOne {
                user: k,
                fog: solve_p3(u, cfg, eta)?,
                cloud: solve_p4(u, cfg, eta)?,
            })
        })
        .collect()
}

/// A verified assignment for the offloading users.
#[derive(Debug, Clone, PartialEq)]
pub struct Verified {
    pub decisions: Vec<(usize, Decision)>,
    pub fog_total: f64,
    pub backhaul_total: f64,
}

/// Minimum total fog demand over all Mode-1/Mode-2 splits that respect the
/// backhaul cap, with the users sent to the cloud. `None` when some user
/// has no option or the forced cloud users overflow the backhaul.
pub fn min_fog_split(stage: &[StageOne], cfg: &SystemConfig) -> Option<(f64, Vec<bool>)> {
    if stage.iter().any(|s| s.fog.is_none() && s.cloud.is_none()) {
        return None;
    }
    let values: Vec<f64> = stage.iter().map(|s| s.fog.map_or(0.0, |r| r.resource)).collect();
    let weights: Vec<f64> = stage.iter().map(|s| s.cloud.map_or(0.0, |r| r.resource)).collect();
    let forced_in: Vec<usize> = (0..stage.len()).filter(|&i| stage[i].fog.is_none()).collect();
    let forced_out: Vec<usize> = (0..stage.len()).filter(|&i| stage[i].cloud.is_none()).collect();
    let sel = knapsack01(&values, &weights, cfg.d_max, &forced_in, &forced_out)?;
    let mut cloud = vec![false; stage.len()];
    for &i in &sel.selected {
        cloud[i] = true;
    }
    let residual = values.iter().zip(&cloud).filter(|(_, c)| !**c).map(|(v, _)| v).sum();
    Some((residual, cloud))
}

/// Feasibility of offloading exactly the users in `users` at level `eta`.
pub fn verify_feasibility_b(
    profiles: &[UserProfile],
    users: &[usize],
    cfg: &SystemConfig,
    eta: f64,
) -> Result<Option<Verified>> {
    if users.is_empty() {
        return Ok(Some(Verified {
            decisions: vec![],
            fog_total: 0.0,
            backhaul_total: 0.0,
        }));
    }
    let stage = stage_one(profiles, users, cfg, eta)?;
    Ok(assemble(&stage, cfg))
}

fn assemble(stage: &[StageOne], cfg: &SystemConfig) -> Option<Verified> {
    let (fog_total, cloud) = min_fog_split(stage, cfg)?;
    if fog_total > cfg.f_fog_max * (1.0 + FEAS_TOL) {
        return None;
    }
    let mut decisions = Vec::with_capacity(stage.len());
    let mut backhaul_total = 0.0;
    for (s, &c) in stage.iter().zip(&cloud) {
        let r = if c { s.cloud.unwrap() } else { s.fog.unwrap() };
        if c {
            backhaul_total += r.resource;
        }
        decisions.push((s.user, r.decision));
    }
    Some(Verified {
        decisions,
        fog_total,
        backhaul_total,
    })
}

/// Global optimum of the min-max problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Certified cost level: every user's cost is at most this value.
    pub eta_star: f64,
    /// Largest level found infeasible; `eta_star - lower_bound <= epsilon`.
    pub lower_bound: f64,
    pub classification: Classification,
    pub decisions: Vec<Decision>,
    pub fog_total: f64,
    pub backhaul_total: f64,
    pub iterations: usize,
}

impl Solution {
    /// Largest per-user cost of the returned decisions.
    pub fn max_cost(&self, inst: &Instance) -> f64 {
        self.decisions
            .iter()
            .zip(&inst.users)
            .map(|(d, u)| model::wedc(d, u, &inst.config))
            .fold(0.0, f64::max)
    }

    pub fn totals(&self) -> PeerTotals {
        PeerTotals {
            fog_hz: self.fog_total,
            backhaul_bps: self.backhaul_total,
        }
    }

    /// Constraint violations per user (empty when feasible).
    pub fn violations(&self, inst: &Instance) -> Vec<(usize, Vec<&'static str>)> {
        self.decisions
            .iter()
            .zip(&inst.users)
            .enumerate()
            .filter_map(|(k, (d, u))| {
                let r = model::validate(d, u, &inst.config, self.totals());
                (!r.feasible()).then(|| (k, r.violations()))
            })
            .collect()
    }

    pub fn mode_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for d in &self.decisions {
            c[d.mode as usize] += 1;
        }
        c
    }
}

/// Feasibility oracle used by [`bisect`]: verifies the offloading set at a
/// level and returns the assignment when feasible.
pub type Verifier<'a> = dyn Fn(&[usize], f64) -> Result<Option<Verified>> + Sync + 'a;

/// Bisection on the cost level with threshold classification, shared by
/// the exact solver and the recompression extension.
pub fn bisect(inst: &Instance, epsilon: f64, verify: &Verifier<'_>) -> Result<Solution> {
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    inst.check()?;
    let local: Vec<(f64, f64)> = inst.users.iter().map(local_optimum).collect();
    let eta_lo: Vec<f64> = local.iter().map(|l| l.1).collect();
    let finite_max = eta_lo
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let start = if finite_max.is_finite() && finite_max > 0.0 {
        finite_max
    } else {
        1.0
    };

    let mut iterations = 0;
    let check = |eta: f64| -> Result<Option<(Classification, Verified)>> {
        let cls = classify_values(&eta_lo, eta);
        Ok(verify(&cls.set_b, eta)?.map(|v| (cls, v)))
    };

    let mut upper = start;
    let mut lower = 0.0;
    let mut best = loop {
        iterations += 1;
        if let Some(found) = check(upper)? {
            break found;
        }
        lower = upper;
        if upper >= start * UPPER_GROWTH_CAP {
            return Err(Error::Infeasible(describe_infeasibility(inst, &eta_lo)?));
        }
        upper *= 2.0;
    };
    while upper - lower > epsilon {
        iterations += 1;
        let mid = 0.5 * (lower + upper);
        match check(mid)? {
            Some(found) => {
                upper = mid;
                best = found;
            }
            None => lower = mid,
        }
    }

    let (classification, verified) = best;
    let mut decisions: Vec<Decision> = local.iter().map(|&(f, _)| Decision::local(f)).collect();
    for (k, d) in &verified.decisions {
        decisions[*k] = *d;
    }
    Ok(Solution {
        eta_star: upper,
        lower_bound: lower,
        classification,
        decisions,
        fog_total: verified.fog_total,
        backhaul_total: verified.backhaul_total,
        iterations,
    })
}

fn describe_infeasibility(inst: &Instance, eta_lo: &[f64]) -> Result<String> {
    let stuck: Vec<usize> = (0..inst.users.len()).filter(|&k| !eta_lo[k].is_finite()).collect();
    let stage = stage_one(&inst.users, &stuck, &inst.config, f64::INFINITY)?;
    let dead: Vec<String> = stage
        .iter()
        .filter(|s| s.fog.is_none() && s.cloud.is_none())
        .map(|s| s.user.to_string())
        .collect();
    Ok(if dead.is_empty() {
        "shared fog CPU and backhaul cannot serve the users that must offload".into()
    } else {
        format!("user(s) {} cannot meet their deadline in any mode", dead.join(", "))
    })
}

/// Solves the min-max problem over local, fog and cloud execution to within
/// `epsilon` in cost.
pub fn solve(inst: &Instance, epsilon: f64) -> Result<Solution> {
    let verify = |b: &[usize], eta: f64| verify_feasibility_b(&inst.users, b, &inst.config, eta);
    bisect(inst, epsilon, &verify)
}

/// Same as [`solve`] but also returns the per-mode stage-1 data of the
/// final offloading set, for diagnostics.
pub fn solve_with_stage(inst: &Instance, epsilon: f64) -> Result<(Solution, Vec<StageOne>)> {
    let sol = solve(inst, epsilon)?;
    let stage = stage_one(&inst.users, &sol.classification.set_b, &inst.config, sol.eta_star)?;
    Ok((sol, stage))
}

/// Whether `mode` is one of the three modes of the base problem.
pub fn is_base_mode(mode: Mode) -> bool {
    mode != Mode::CloudRecompressed
}
