//! Per-user stage-1 problems in log coordinates.
//!
//! With `lw = ln omega_u`, `lfu = ln f_u`, `lp = ln p`, `lr = ln rho` and
//! `lz = ln f_f` or `ln d`, every delay and energy term of the model is an
//! exponential of an affine function, or such an exponential divided by
//! `ln(1 + beta0 e^lp)`. The cost and deadline constraints are therefore
//! sums of log-convex atoms and the engine in [`super::engine`] applies.
//!
//! The transmission terms carry a factor `ln 2` because the rate uses
//! `log2` while the atoms use the natural logarithm.

use std::f64::consts::LN_2;

use super::engine::{minimize_convex, Atom, LinearConstraint, Outcome, ProblemDescriptor};
use crate::error::Result;
use crate::model::{self, Decision, Mode, SystemConfig, UserProfile};

/// Lower edge of the f_f and d boxes (1 Hz, 1 bit/s).
const RESOURCE_FLOOR: f64 = 1.0;
/// The user frequency and bandwidth boxes span this many decades below
/// their caps.
const DYNAMIC_RANGE: f64 = 1e6;

/// Optimal point of a stage-1 problem in log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedPoint {
    pub lw: f64,
    pub lf_u: f64,
    pub lf_f: Option<f64>,
    pub lp: f64,
    pub lr: f64,
    pub ld: Option<f64>,
    pub lw_f: Option<f64>,
}

/// Minimum fog CPU (Mode 1) or backhaul (Mode 2) with the solution that
/// achieves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1Result {
    /// `f_f` in Hz for Mode 1, `d` in bits/s for Mode 2.
    pub resource: f64,
    pub point: TransformedPoint,
    pub decision: Decision,
    /// Weighted cost at the optimum.
    pub xi1: f64,
    /// Delay at the optimum.
    pub t1: f64,
}

impl Stage1Result {
    /// Device-side delay: local compression plus uplink transmission.
    pub fn user_side_delay(&self, u: &UserProfile, cfg: &SystemConfig) -> f64 {
        let rate = model::uplink_rate(self.decision.rho, self.decision.p, model::beta0(u, cfg));
        u.user_cycles(self.decision.omega_u) / self.decision.f_u + u.b_in / (self.decision.omega_u * rate)
    }

    /// Device energy at the optimum.
    pub fn energy(&self, u: &UserProfile, cfg: &SystemConfig) -> f64 {
        model::total_energy(&self.decision, u, cfg)
    }
}

/// Mode-3 operating point at a fixed backhaul rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode3Point {
    pub fog_hz: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Fog,
    Cloud,
    Recompress { d: f64 },
}

const W: usize = 0;
const FU: usize = 1;
const P: usize = 2;
const R: usize = 3;
const Z: usize = 4;
const WF: usize = 5;

fn unit(n: usize, entries: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &(i, x) in entries {
        v[i] += x;
    }
    v
}

fn push(atoms: &mut Vec<Atom>, coef: f64, dir: Vec<f64>) {
    if coef > 0.0 {
        atoms.push(Atom::exp(coef, dir));
    }
}

fn scale(atoms: &[Atom], factor: f64) -> Vec<Atom> {
    atoms
        .iter()
        .map(|a| Atom {
            log_coef: a.log_coef + factor.ln(),
            ..a.clone()
        })
        .collect()
}

/// Builds the descriptor; `None` when the problem is trivially infeasible.
fn build(u: &UserProfile, cfg: &SystemConfig, eta: f64, kind: Kind) -> Option<ProblemDescriptor> {
    let b0 = model::beta0(u, cfg);
    if !(u.rho_max > 0.0) || !(b0 > 0.0) {
        return None;
    }
    let (w_lo, w_hi) = u.omega_u_range().ok()?;
    let n = if matches!(kind, Kind::Recompress { .. }) { 6 } else { 5 };
    let cu = &u.comp_user;
    let de = &u.decomp_user;

    let mut delay = Vec::new();
    push(&mut delay, u.c_local + cu.gamma0 * cu.gamma3, unit(n, &[(FU, -1.0)]));
    push(
        &mut delay,
        cu.gamma0 * cu.gamma1,
        unit(n, &[(FU, -1.0), (W, cu.gamma2)]),
    );
    delay.push(Atom::rate(u.b_in * LN_2, unit(n, &[(W, -1.0), (R, -1.0)]), P, b0));
    let mut const_delay = 0.0;
    match kind {
        Kind::Fog => {
            push(
                &mut delay,
                u.c_offloadable + de.gamma0 * de.gamma3,
                unit(n, &[(Z, -1.0)]),
            );
            push(&mut delay, de.gamma0 * de.gamma1, unit(n, &[(Z, -1.0), (W, de.gamma2)]));
        }
        Kind::Cloud => {
            push(&mut delay, u.b_in, unit(n, &[(W, -1.0), (Z, -1.0)]));
            const_delay = cfg.t_cloud;
        }
        Kind::Recompress { d } => {
            if !(d > 0.0) {
                return None;
            }
            let cf = &u.comp_fog;
            push(
                &mut delay,
                de.gamma0 * de.gamma3 + cf.gamma0 * cf.gamma3,
                unit(n, &[(Z, -1.0)]),
            );
            push(&mut delay, de.gamma0 * de.gamma1, unit(n, &[(Z, -1.0), (W, de.gamma2)]));
            push(
                &mut delay,
                cf.gamma0 * cf.gamma1,
                unit(n, &[(Z, -1.0), (WF, cf.gamma2), (W, -cf.gamma2)]),
            );
            push(&mut delay, u.b_in / d, unit(n, &[(WF, -1.0)]));
            const_delay = cfg.t_cloud;
        }
    }
    let mut energy = Vec::new();
    push(
        &mut energy,
        u.alpha * (u.c_local + cu.gamma0 * cu.gamma3),
        unit(n, &[(FU, 2.0)]),
    );
    push(
        &mut energy,
        u.alpha * cu.gamma0 * cu.gamma1,
        unit(n, &[(FU, 2.0), (W, cu.gamma2)]),
    );
    energy.push(Atom::rate(u.b_in * LN_2, unit(n, &[(P, 1.0), (W, -1.0)]), P, b0));
    if u.p_circuit > 0.0 {
        energy.push(Atom::rate(u.b_in * LN_2 * u.p_circuit, unit(n, &[(W, -1.0)]), P, b0));
    }

    let mut posy = Vec::new();
    if eta.is_finite() {
        let budget = eta - u.w_t * const_delay;
        if !(budget > 0.0) {
            return None;
        }
        let mut cost = Vec::new();
        if u.w_t > 0.0 {
            cost.extend(scale(&delay, u.w_t));
        }
        if u.w_e > 0.0 {
            cost.extend(scale(&energy, u.w_e));
        }
        posy.push(scale(&cost, 1.0 / budget));
    }
    if u.t_max.is_finite() {
        let budget = u.t_max - const_delay;
        if !(budget > 0.0) {
            return None;
        }
        posy.push(scale(&delay, 1.0 / budget));
    }

    let z_cap = match kind {
        Kind::Cloud => cfg.d_max,
        _ => cfg.f_fog_max,
    };
    let mut lower = vec![
        w_lo.ln(),
        (u.f_max / DYNAMIC_RANGE).ln(),
        (1e-6 / b0).ln(),
        (u.rho_max / DYNAMIC_RANGE).ln(),
        RESOURCE_FLOOR.ln(),
    ];
    let mut upper = vec![
        w_hi.ln(),
        u.f_max.ln(),
        (u.p_max * DYNAMIC_RANGE / u.rho_max).ln(),
        u.rho_max.ln(),
        z_cap.max(RESOURCE_FLOOR * 2.0).ln(),
    ];
    let mut linear = vec![LinearConstraint {
        a: unit(n, &[(P, 1.0), (R, 1.0)]),
        b: u.p_max.ln(),
    }];
    let mut start: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
    if lower[P] >= upper[P] {
        return None;
    }
    start[P] = (10.0 / b0).ln().clamp(lower[P] + 1e-3, upper[P] - 1e-3);
    if start[P] + start[R] >= u.p_max.ln() - 1e-3 {
        start[P] = u.p_max.ln() - start[R] - 1.0;
        if start[P] <= lower[P] {
            start[P] = 0.5 * (lower[P] + u.p_max.ln() - start[R]);
        }
    }
    if let Kind::Recompress { .. } = kind {
        let cf = &u.comp_fog;
        let (wf_lo, wf_hi) = (cf.omega_min.ln(), cf.omega_max.ln());
        if wf_hi < lower[W] {
            return None;
        }
        lower.push(wf_lo);
        upper.push(wf_hi);
        linear.push(LinearConstraint {
            a: unit(n, &[(W, 1.0), (WF, -1.0)]),
            b: 0.0,
        });
        let w_top = upper[W].min(wf_hi);
        start[W] = 0.5 * (lower[W] + w_top);
        start.push(0.5 * (start[W].max(wf_lo) + wf_hi));
    }
    Some(ProblemDescriptor {
        objective: unit(n, &[(Z, 1.0)]),
        quadratic: None,
        posy,
        linear,
        lower,
        upper,
        start,
    })
}

fn decision_from(x: &[f64], kind: Kind) -> (Decision, TransformedPoint) {
    let e = |i: usize| x[i].exp();
    let mut d = Decision {
        mode: Mode::Fog,
        omega_u: e(W),
        omega_f: e(W),
        f_u: e(FU),
        f_f: 0.0,
        p: e(P),
        rho: e(R),
        d: 0.0,
    };
    let mut tp = TransformedPoint {
        lw: x[W],
        lf_u: x[FU],
        lf_f: None,
        lp: x[P],
        lr: x[R],
        ld: None,
        lw_f: None,
    };
    match kind {
        Kind::Fog => {
            d.f_f = e(Z);
            tp.lf_f = Some(x[Z]);
        }
        Kind::Cloud => {
            d.mode = Mode::Cloud;
            d.d = e(Z);
            tp.ld = Some(x[Z]);
        }
        Kind::Recompress { d: bh } => {
            d.mode = Mode::CloudRecompressed;
            d.f_f = e(Z);
            d.d = bh;
            d.omega_f = e(WF);
            tp.lf_f = Some(x[Z]);
            tp.lw_f = Some(x[WF]);
        }
    }
    (d, tp)
}

fn solve(u: &UserProfile, cfg: &SystemConfig, eta: f64, kind: Kind) -> Result<Option<(Decision, TransformedPoint)>> {
    let Some(desc) = build(u, cfg, eta, kind) else {
        return Ok(None);
    };
    Ok(match minimize_convex(&desc)? {
        Outcome::Infeasible => None,
        Outcome::Optimal { x, .. } => Some(decision_from(&x, kind)),
    })
}

fn stage1(u: &UserProfile, cfg: &SystemConfig, eta: f64, kind: Kind) -> Result<Option<Stage1Result>> {
    Ok(solve(u, cfg, eta, kind)?.map(|(decision, point)| Stage1Result {
        resource: if kind == Kind::Fog { decision.f_f } else { decision.d },
        point,
        decision,
        xi1: model::wedc(&decision, u, cfg),
        t1: model::total_delay(&decision, u, cfg),
    }))
}

/// Minimum fog CPU that lets the user run in Mode 1 with cost at most `eta`
/// and within its deadline. `None` when no allocation works.
pub fn solve_p3(u: &UserProfile, cfg: &SystemConfig, eta: f64) -> Result<Option<Stage1Result>> {
    stage1(u, cfg, eta, Kind::Fog)
}

/// Minimum backhaul rate for Mode 2 under the same conditions.
pub fn solve_p4(u: &UserProfile, cfg: &SystemConfig, eta: f64) -> Result<Option<Stage1Result>> {
    stage1(u, cfg, eta, Kind::Cloud)
}

/// Minimum fog CPU for Mode 3 when the backhaul rate is fixed at `d`.
pub fn solve_p_dk(u: &UserProfile, cfg: &SystemConfig, eta: f64, d: f64) -> Result<Option<Mode3Point>> {
    Ok(
        solve(u, cfg, eta, Kind::Recompress { d })?.map(|(decision, _)| Mode3Point {
            fog_hz: decision.f_f,
            decision,
        }),
    )
}

/// Descriptor of the Mode-1 problem, exposed for curvature checks.
pub fn p3_descriptor(u: &UserProfile, cfg: &SystemConfig, eta: f64) -> Option<ProblemDescriptor> {
    build(u, cfg, eta, Kind::Fog)
}

/// Descriptor of the Mode-2 problem.
pub fn p4_descriptor(u: &UserProfile, cfg: &SystemConfig, eta: f64) -> Option<ProblemDescriptor> {
    build(u, cfg, eta, Kind::Cloud)
}

/// Descriptor of the Mode-3 problem at backhaul `d`.
pub fn p_dk_descriptor(u: &UserProfile, cfg: &SystemConfig, eta: f64, d: f64) -> Option<ProblemDescriptor> {
    build(u, cfg, eta, Kind::Recompress { d })
}
