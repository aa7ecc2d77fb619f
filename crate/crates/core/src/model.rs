//! System model: domain types and the closed-form cost and constraint
//! formulas for one user.
//!
//! Every solver in the crate evaluates delays, energies and weighted costs
//! through the functions here, so the formulas live in exactly one place.
//!
//! Units are SI throughout: cycles, bits, seconds, Hz, watts. Transmit
//! power `p` is a spectral density in W/Hz, so the radiated power is `rho * p`.
//!
//! An impossible evaluation (a zero CPU frequency, rate or backhaul that a
//! mode needs) yields `f64::INFINITY`. Infinity compares above every finite
//! cost, which is exactly how the solvers need to rank such points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking that a ratio lies inside its bounds.
const OMEGA_TOL: f64 = 1e-9;
/// Relative tolerance used by [`validate`].
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompressionKind {
    Compress,
    Decompress,
    Quality,
}

/// Power-law model `gamma0 * (gamma1 * omega^gamma2 + gamma3)` of the CPU
/// cycles spent by a (de)compression step at ratio `omega`, or the quality
/// score `gamma3 - gamma1 * omega^gamma2` for [`CompressionKind::Quality`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionModel {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub kind: CompressionKind,
}

impl CompressionModel {
    pub fn new(
        kind: CompressionKind,
        gamma0: f64,
        gamma1: f64,
        gamma2: f64,
        gamma3: f64,
        omega_min: f64,
        omega_max: f64,
    ) -> Result<Self> {
        let m = Self {
            gamma0,
            gamma1,
            gamma2,
            gamma3,
            omega_min,
            omega_max,
            kind,
        };
        m.check()?;
        Ok(m)
    }

    /// A quality model that is identically 1 (lossless coding).
    pub fn lossless(omega_min: f64, omega_max: f64) -> Self {
        Self {
            gamma0: 1.0,
            gamma1: 0.0,
            gamma2: 1.0,
            gamma3: 1.0,
            omega_min,
            omega_max,
            kind: CompressionKind::Quality,
        }
    }

    pub fn check(&self) -> Result<()> {
        let finite = [
            self.gamma0,
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.omega_min,
            self.omega_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("compression model has a non-finite parameter".into()));
        }
        if self.gamma1 < 0.0 || self.gamma3 < 0.0 {
            return Err(Error::Config("gamma1 and gamma3 must be non-negative".into()));
        }
        if !(1.0 <= self.omega_min && self.omega_min <= self.omega_max) {
            return Err(Error::Config(format!(
                "ratio bounds must satisfy 1 <= min <= max, got [{}, {}]",
                self.omega_min, self.omega_max
            )));
        }
        if self.kind != CompressionKind::Quality && self.gamma0 <= 0.0 {
            return Err(Error::Config("gamma0 must be positive for workload models".into()));
        }
        Ok(())
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.omega_min * (1.0 - OMEGA_TOL) && omega <= self.omega_max * (1.0 + OMEGA_TOL)
    }

    /// Evaluates the model without the range check. Solvers that keep
    /// `omega` inside the box by construction use this form.
    pub fn eval_raw(&self, omega: f64) -> f64 {
        let shape = if self.gamma1 == 0.0 {
            0.0
        } else {
            self.gamma1 * omega.powf(self.gamma2)
        };
        match self.kind {
            CompressionKind::Quality => self.gamma3 - shape,
            _ => self.gamma0 * (shape + self.gamma3),
        }
    }

    /// Same as [`comp_eval`].
    pub fn eval(&self, omega: f64) -> Result<f64> {
        comp_eval(self, omega)
    }

    /// Copy of the model restricted to a single ratio.
    pub fn pinned(&self, omega: f64) -> Self {
        Self {
            omega_min: omega,
            omega_max: omega,
            ..*self
        }
    }
}

/// Workload (cycles) or quality score of `model` at ratio `omega`.
pub fn comp_eval(model: &CompressionModel, omega: f64) -> Result<f64> {
    if !model.contains(omega) {
        return Err(Error::Domain(format!(
            "ratio {omega} outside [{}, {}]",
            model.omega_min, model.omega_max
        )));
    }
    Ok(model.eval_raw(omega))
}

/// Ratio interval on which the quality stays at or above `q_min`.
///
/// Returns a domain error when even the smallest ratio misses the floor.
pub fn feasible_omega_range(quality: &CompressionModel, q_min: Option<f64>) -> Result<(f64, f64)> {
    let (lo, hi) = (quality.omega_min, quality.omega_max);
    let Some(q_min) = q_min else { return Ok((lo, hi)) };
    if quality.eval_raw(lo) < q_min {
        return Err(Error::Domain(format!(
            "quality floor {q_min} unreachable at the smallest ratio {lo}"
        )));
    }
    if quality.gamma1 == 0.0 || quality.gamma2 <= 0.0 {
        // Quality is flat or rises with the ratio: nothing to clip.
        return Ok((lo, hi));
    }
    let cap = ((quality.gamma3 - q_min) / quality.gamma1).powf(1.0 / quality.gamma2);
    Ok((lo, hi.min(cap).max(lo)))
}

/// Per-user parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub c_total: f64,
    pub c_local: f64,
    pub c_offloadable: f64,
    pub b_in: f64,
    pub t_max: f64,
    pub f_max: f64,
    pub p_max: f64,
    pub p_circuit: f64,
    pub alpha: f64,
    pub beta_lin: f64,
    pub w_t: f64,
    pub w_e: f64,
    pub rho_max: f64,
    pub comp_user: CompressionModel,
    pub decomp_user: CompressionModel,
    pub quality_user: CompressionModel,
    pub comp_fog: CompressionModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_min: Option<f64>,
}

impl UserProfile {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("c_total", self.c_total),
            ("b_in", self.b_in),
            ("t_max", self.t_max),
            ("f_max", self.f_max),
            ("p_max", self.p_max),
            ("alpha", self.alpha),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("c_local", self.c_local),
            ("c_offloadable", self.c_offloadable),
            ("p_circuit", self.p_circuit),
            ("beta_lin", self.beta_lin),
            ("w_t", self.w_t),
            ("w_e", self.w_e),
            ("rho_max", self.rho_max),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if ((self.c_local + self.c_offloadable) - self.c_total).abs() > 1e-9 * self.c_total {
            return Err(Error::Config("c_local + c_offloadable must equal c_total".into()));
        }
        if (self.w_t + self.w_e - 1.0).abs() > 1e-9 {
            return Err(Error::Config("w_t + w_e must equal 1".into()));
        }
        self.comp_user.check()?;
        self.decomp_user.check()?;
        self.quality_user.check()?;
        self.comp_fog.check()?;
        Ok(())
    }

    /// Admissible user-side ratio interval: the compressor's range clipped
    /// by the quality floor.
    pub fn omega_u_range(&self) -> Result<(f64, f64)> {
        let (qlo, qhi) = feasible_omega_range(&self.quality_user, self.q_min)?;
        let lo = self.comp_user.omega_min.max(qlo);
        let hi = self.comp_user.omega_max.min(qhi);
        if lo > hi * (1.0 + OMEGA_TOL) {
            return Err(Error::Domain("empty user compression-ratio range".into()));
        }
        Ok((lo, hi.max(lo)))
    }

    /// Cycles executed on the device when offloading with ratio `omega_u`.
    pub fn user_cycles(&self, omega_u: f64) -> f64 {
        self.c_local + self.comp_user.eval_raw(omega_u)
    }

    /// Cycles executed at the fog in Mode 1.
    pub fn fog_cycles(&self, omega_u: f64) -> f64 {
        self.c_offloadable + self.decomp_user.eval_raw(omega_u)
    }

    /// Cycles executed at the fog when it recompresses the user payload.
    ///
    /// `omega_f` is the end-to-end ratio `b_in / b_out,f`, and the bounds of
    /// `comp_fog` apply to it. The fog compressor itself sees the payload
    /// `b_in / omega_u`, so its workload model is evaluated at the ratio it
    /// actually achieves on that payload, `omega_f / omega_u`.
    pub fn recompress_cycles(&self, omega_u: f64, omega_f: f64) -> f64 {
        self.decomp_user.eval_raw(omega_u) + self.comp_fog.eval_raw(omega_f / omega_u)
    }
}

/// Parameters shared by all users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub f_fog_max: f64,
    pub d_max: f64,
    pub t_cloud: f64,
    pub m0: f64,
    pub sigma_bs: f64,
    #[serde(default)]
    pub w_bw: f64,
    #[serde(default)]
    pub w_c: f64,
}

impl SystemConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.f_fog_max > 0.0) || !(self.d_max > 0.0) || !(self.t_cloud >= 0.0) {
            return Err(Error::Config("need f_fog_max > 0, d_max > 0, t_cloud >= 0".into()));
        }
        if !(self.sigma_bs > 0.0) || !(self.m0 >= 0.0) {
            return Err(Error::Config("need sigma_bs > 0 and m0 >= 0".into()));
        }
        Ok(())
    }

    /// Bandwidth cap derived from a price budget `theta_max` for offloading
    /// `c_offloadable` cycles. A negative budget means offloading is not
    /// allowed, which is encoded as zero bandwidth.
    pub fn rho_max_from_budget(&self, theta_max: f64, c_offloadable: f64) -> f64 {
        if self.w_bw <= 0.0 {
            return f64::INFINITY;
        }
        ((theta_max - self.w_c * c_offloadable) / self.w_bw).max(0.0)
    }
}

/// One problem instance: users plus shared system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub seed: u64,
    pub config: SystemConfig,
    pub users: Vec<UserProfile>,
}

impl Instance {
    pub fn check(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(Error::Config("an instance needs at least one user".into()));
        }
        self.config.check()?;
        for (k, u) in self.users.iter().enumerate() {
            u.check().map_err(|e| Error::Config(format!("user {k}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Local,
    Fog,
    Cloud,
    CloudRecompressed,
}

/// Full variable assignment for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub mode: Mode,
    pub omega_u: f64,
    pub omega_f: f64,
    pub f_u: f64,
    pub f_f: f64,
    pub p: f64,
    pub rho: f64,
    pub d: f64,
}

impl Decision {
    pub fn local(f_u: f64) -> Self {
        Self {
            mode: Mode::Local,
            omega_u: 1.0,
            omega_f: 1.0,
            f_u,
            f_f: 0.0,
            p: 0.0,
            rho: 0.0,
            d: 0.0,
        }
    }
}

/// `m0 * beta_lin / sigma_bs`.
pub fn beta0(profile: &UserProfile, config: &SystemConfig) -> f64 {
    config.m0 * profile.beta_lin / config.sigma_bs
}

/// `rho * log2(1 + p * beta0)` in bits/s.
pub fn uplink_rate(rho: f64, p: f64, beta0: f64) -> f64 {
    if rho == 0.0 || p == 0.0 {
        return 0.0;
    }
    rho * (p * beta0).ln_1p() / std::f64::consts::LN_2
}

fn div(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Completion delay of `decision`, including the cloud latency for the
/// cloud modes.
pub fn total_delay(d: &Decision, u: &UserProfile, cfg: &SystemConfig) -> f64 {
    if d.mode == Mode::Local {
        return div(u.c_total, d.f_u);
    }
    let rate = uplink_rate(d.rho, d.p, beta0(u, cfg));
    let b_out_u = u.b_in / d.omega_u;
    let t_user = div(u.user_cycles(d.omega_u), d.f_u) + div(b_out_u, rate);
    match d.mode {
        Mode::Local => unreachable!(),
        Mode::Fog => {
            let fwd = if d.d > 0.0 { b_out_u / d.d } else { 0.0 };
            t_user + div(u.fog_cycles(d.omega_u), d.f_f) + fwd
        }
        Mode::Cloud => t_user + div(b_out_u, d.d) + cfg.t_cloud,
        Mode::CloudRecompressed => {
            t_user + div(u.recompress_cycles(d.omega_u, d.omega_f), d.f_f) + div(u.b_in / d.omega_f, d.d) + cfg.t_cloud
        }
    }
}

/// Device energy: computation plus radio transmission (with circuit power).
pub fn total_energy(d: &Decision, u: &UserProfile, cfg: &SystemConfig) -> f64 {
    if d.mode == Mode::Local {
        return u.alpha * d.f_u * d.f_u * u.c_total;
    }
    let compute = u.alpha * d.f_u * d.f_u * u.user_cycles(d.omega_u);
    let bits_per_hz = (d.p * beta0(u, cfg)).ln_1p() / std::f64::consts::LN_2;
    let tx = div((d.p + u.p_circuit) * u.b_in / d.omega_u, bits_per_hz);
    compute + tx
}

/// Weighted energy-and-delay cost `w_t * T + w_e * xi`.
pub fn wedc(d: &Decision, u: &UserProfile, cfg: &SystemConfig) -> f64 {
    let t = if u.w_t == 0.0 {
        0.0
    } else {
        u.w_t * total_delay(d, u, cfg)
    };
    let e = if u.w_e == 0.0 {
        0.0
    } else {
        u.w_e * total_energy(d, u, cfg)
    };
    t + e
}

/// Outcome of one constraint check. `slack >= 0` means satisfied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub ok: bool,
    pub slack: f64,
}

impl Check {
    /// `value <= bound` with relative tolerance `tol`.
    fn le(value: f64, bound: f64, tol: f64) -> Self {
        let slack = bound - value;
        let ok = if bound.is_infinite() && bound > 0.0 {
            !value.is_nan()
        } else {
            slack >= -tol * bound.abs().max(1e-300) && value.is_finite()
        };
        Self { ok, slack }
    }

    fn flag(ok: bool) -> Self {
        Self {
            ok,
            slack: if ok { 0.0 } else { -1.0 },
        }
    }
}

/// Aggregate fog CPU and backhaul use of all users, for the shared checks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PeerTotals {
    pub fog_hz: f64,
    pub backhaul_bps: f64,
}

/// Per-constraint report. The `_ext` fields are the versions used when fog
/// recompression is allowed; for the first three modes they coincide with
/// their counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    /// User CPU frequency cap.
    pub c1: Check,
    /// Shared fog CPU.
    pub c2: Check,
    /// Binary offloading variables.
    pub c3: Check,
    /// Exactly one mode, with consistent mode-specific fields.
    pub c4: Check,
    /// Compression ratio inside its admissible range.
    pub c5: Check,
    /// Transmit power cap.
    pub c6: Check,
    /// Bandwidth cap.
    pub c7: Check,
    /// Shared backhaul.
    pub c8: Check,
    /// Deadline.
    pub c9: Check,
    pub c3_ext: Check,
    pub c4_ext: Check,
    pub c9_ext: Check,
    /// Fog ratio inside its range (recompression mode only).
    pub c10_ext: Check,
}

impl ConstraintReport {
    pub fn all(&self) -> [(&'static str, Check); 13] {
        [
            ("C1", self.c1),
            ("C2", self.c2),
            ("C3", self.c3),
            ("C4", self.c4),
            ("C5", self.c5),
            ("C6", self.c6),
            ("C7", self.c7),
            ("C8", self.c8),
            ("C9", self.c9),
            ("C3ext", self.c3_ext),
            ("C4ext", self.c4_ext),
            ("C9ext", self.c9_ext),
            ("C10ext", self.c10_ext),
        ]
    }

    pub fn feasible(&self) -> bool {
        self.all().iter().all(|(_, c)| c.ok)
    }

    pub fn violations(&self) -> Vec<&'static str> {
        self.all().iter().filter(|(_, c)| !c.ok).map(|(n, _)| *n).collect()
    }
}

/// Checks every constraint for one user; C2 and C8 use `totals`.
pub fn validate(d: &Decision, u: &UserProfile, cfg: &SystemConfig, totals: PeerTotals) -> ConstraintReport {
    let nonneg = [d.f_u, d.f_f, d.p, d.rho, d.d]
        .iter()
        .all(|v| *v >= 0.0 && v.is_finite());
    let consistent = nonneg
        && match d.mode {
            Mode::Local => d.f_f == 0.0 && d.d == 0.0 && d.rho == 0.0,
            Mode::CloudRecompressed => true,
            _ => d.omega_f == d.omega_u,
        };
    let c5 = if d.mode == Mode::Local {
        Check::flag(true)
    } else {
        match u.omega_u_range() {
            Ok((lo, hi)) => {
                let ok = d.omega_u >= lo * (1.0 - OMEGA_TOL) && d.omega_u <= hi * (1.0 + OMEGA_TOL);
                Check {
                    ok,
                    slack: (d.omega_u - lo).min(hi - d.omega_u),
                }
            }
            Err(_) => Check::flag(false),
        }
    };
    let c10 = if d.mode == Mode::CloudRecompressed {
        let ok = u.comp_fog.contains(d.omega_f) && d.omega_f >= d.omega_u * (1.0 - OMEGA_TOL);
        Check {
            ok,
            slack: if ok { 0.0 } else { -1.0 },
        }
    } else {
        Check::flag(true)
    };
    let t = total_delay(d, u, cfg);
    let c9 = Check::le(t, u.t_max, 1e-9);
    ConstraintReport {
        c1: Check::le(d.f_u, u.f_max, 1e-12),
        c2: Check::le(totals.fog_hz, cfg.f_fog_max, FEAS_TOL),
        c3: Check::flag(true),
        c4: Check::flag(consistent),
        c5,
        c6: Check::le(d.rho * d.p, u.p_max, 1e-9),
        c7: Check::le(d.rho, u.rho_max, 1e-12),
        c8: Check::le(totals.backhaul_bps, cfg.d_max, FEAS_TOL),
        c9,
        c3_ext: Check::flag(true),
        c4_ext: Check::flag(consistent),
        c9_ext: c9,
        c10_ext: c10,
    }
}

#[cfg(test)]
pub(crate) use tests::sample_user;

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_user() -> UserProfile {
        let b_in = 4e6;
        let g0 = 50.0 * b_in;
        UserProfile {
            c_total: 2e9,
            c_local: 2e8,
            c_offloadable: 1.8e9,
            b_in,
            t_max: 1.0,
            f_max: 2.4e9,
            p_max: 0.22,
            p_circuit: 22e-9,
            alpha: 1e-28,
            beta_lin: 3.584112630753176e-13,
            w_t: 1.0 / 3.0,
            w_e: 2.0 / 3.0,
            rho_max: 1e6,
            comp_user: CompressionModel::new(
                CompressionKind::Compress,
                g0,
                1.2072065474281839e-15,
                32.28,
                0.3,
                2.3,
                2.9,
            )
            .unwrap(),
            decomp_user: CompressionModel::new(CompressionKind::Decompress, g0, 0.115, -0.9179, 0.046, 2.3, 2.9)
                .unwrap(),
            quality_user: CompressionModel::lossless(2.3, 2.9),
            comp_fog: CompressionModel::new(CompressionKind::Compress, g0, 0.076, 0.7116, 0.5794, 3.4, 11.2).unwrap(),
            q_min: None,
        }
    }

    fn cfg() -> SystemConfig {
        SystemConfig {
            f_fog_max: 15e9,
            d_max: 20e6,
            t_cloud: 0.2,
            m0: 5.0,
            sigma_bs: 3.18e-20,
            w_bw: 0.0,
            w_c: 0.0,
        }
    }

    #[test]
    fn beta0_examples() {
        let mut u = sample_user();
        let mut c = cfg();
        u.beta_lin = 6.36e-21;
        assert!((beta0(&u, &c) - 1.0).abs() < 1e-12);
        c.m0 = 1.0;
        u.beta_lin = 0.0;
        assert_eq!(beta0(&u, &c), 0.0);
        // Reference from a 60-digit evaluation of the path-loss formula at 0.8 km.
        let pl = 128.1 + 37.6 * 0.8f64.log10();
        u.beta_lin = 10f64.powf(-pl / 10.0);
        let b = beta0(&u, &cfg());
        assert!((b / 56_353_972.181_653_71 - 1.0).abs() < 1e-12, "{b}");
    }

    #[test]
    fn rate_examples() {
        assert!((uplink_rate(1e6, 3.0, 1.0) - 2e6).abs() < 1e-6);
        assert_eq!(uplink_rate(0.0, 3.0, 1.0), 0.0);
        assert!((uplink_rate(1e6, 1.0, 1.0) - 1e6).abs() < 1e-6);
    }

    #[test]
    fn comp_eval_examples() {
        let m = CompressionModel::new(CompressionKind::Compress, 1.0, 0.076, 0.7117, 0.579, 1.0, 12.0).unwrap();
        // 60-digit reference 0.703467693054314...
        assert!((comp_eval(&m, 2.0).unwrap() - 0.703_467_693_054_314_3).abs() < 1e-14);
        assert!((comp_eval(&m, 1.0).unwrap() - (0.076 + 0.579)).abs() < 1e-15);
        let flat = CompressionModel {
            gamma1: 0.0,
            gamma0: 3.0,
            ..m
        };
        for w in [1.0, 4.0, 12.0] {
            assert_eq!(comp_eval(&flat, w).unwrap(), 3.0 * 0.579);
        }
        assert!(matches!(comp_eval(&m, 13.0), Err(Error::Domain(_))));
    }

    #[test]
    fn qos_range_examples() {
        let q = CompressionModel::new(CompressionKind::Quality, 1.0, 0.1, 2.0, 1.0, 1.0, 5.0).unwrap();
        let (lo, hi) = feasible_omega_range(&q, Some(0.6)).unwrap();
        assert_eq!(lo, 1.0);
        assert!((hi - 2.0).abs() < 1e-12);
        // Sampling check: quality at hi is the floor, slightly above is below it.
        assert!((q.eval_raw(hi) - 0.6).abs() < 1e-12);
        assert!(q.eval_raw(hi * 1.001) < 0.6);
        let at_max = q.eval_raw(5.0);
        let (_, hi2) = feasible_omega_range(&q, Some(at_max)).unwrap();
        assert!((hi2 - 5.0).abs() < 1e-9);
        let ll = CompressionModel::lossless(2.0, 3.0);
        assert_eq!(feasible_omega_range(&ll, Some(0.9)).unwrap(), (2.0, 3.0));
        assert!(feasible_omega_range(&q, Some(0.95)).is_err());
    }

    #[test]
    fn local_cost_examples() {
        let u = sample_user();
        let c = cfg();
        let d = Decision::local(2e9);
        assert!((total_delay(&d, &u, &c) - 1.0).abs() < 1e-15);
        assert!((total_energy(&d, &u, &c) - 0.8).abs() < 1e-12);
        assert!((wedc(&d, &u, &c) - 0.866_666_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn limits_and_sentinels() {
        let u = sample_user();
        let c = cfg();
        let mut d = Decision {
            mode: Mode::Fog,
            omega_u: 2.5,
            omega_f: 2.5,
            f_u: 1e9,
            f_f: f64::INFINITY,
            p: 1e-7,
            rho: f64::INFINITY,
            d: 0.0,
        };
        let t = total_delay(&d, &u, &c);
        assert!((t - u.user_cycles(2.5) / 1e9).abs() < 1e-15);
        d.rho = 1e6;
        d.p = 0.0;
        assert!(total_energy(&d, &u, &c).is_infinite());
        assert!(wedc(&d, &u, &c).is_infinite());
        let mut wt0 = u.clone();
        wt0.w_t = 0.0;
        wt0.w_e = 1.0;
        let l = Decision::local(2e9);
        assert_eq!(wedc(&l, &wt0, &c), total_energy(&l, &wt0, &c));
    }

    /// Straight-line transcription of the delay and energy formulas, written
    /// without the helpers above.
    fn naive_fog(u: &UserProfile, c: &SystemConfig, w: f64, fu: f64, ff: f64, p: f64, rho: f64) -> (f64, f64) {
        let b0 = c.m0 * u.beta_lin / c.sigma_bs;
        let r = rho * (1.0 + p * b0).log2();
        let cco = u.comp_user.gamma0 * (u.comp_user.gamma1 * w.powf(u.comp_user.gamma2) + u.comp_user.gamma3);
        let cde = u.decomp_user.gamma0 * (u.decomp_user.gamma1 * w.powf(u.decomp_user.gamma2) + u.decomp_user.gamma3);
        let cu = u.c_local + cco;
        let cf = u.c_offloadable + cde;
        let t = cu / fu + u.b_in / (w * r) + cf / ff;
        let e = u.alpha * fu * fu * cu + (p + u.p_circuit) * u.b_in / (w * (1.0 + p * b0).log2());
        (t, e)
    }

    #[test]
    fn dual_implementation_agreement() {
        use rand::{Rng, SeedableRng};
        let u = sample_user();
        let c = cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let w = rng.gen_range(2.3..2.9);
            let fu = rng.gen_range(1e8..2.4e9);
            let ff = rng.gen_range(1e8..1.5e10);
            let rho = rng.gen_range(1e4..1e6);
            let p = rng.gen_range(1e-9..0.22 / rho);
            let d = Decision {
                mode: Mode::Fog,
                omega_u: w,
                omega_f: w,
                f_u: fu,
                f_f: ff,
                p,
                rho,
                d: 0.0,
            };
            let (t, e) = naive_fog(&u, &c, w, fu, ff, p, rho);
            assert!((total_delay(&d, &u, &c) / t - 1.0).abs() < 1e-12);
            assert!((total_energy(&d, &u, &c) / e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn validate_examples() {
        let u = sample_user();
        let c = cfg();
        let d = Decision::local(u.f_max);
        let r = validate(&d, &u, &c, PeerTotals::default());
        assert!(r.c1.ok && r.c1.slack == 0.0);
        let bad = Decision {
            mode: Mode::Fog,
            omega_u: 2.5,
            omega_f: 2.5,
            f_u: 1e9,
            f_f: 1e9,
            p: 1e-6,
            rho: 1e6,
            d: 0.0,
        };
        let r = validate(&bad, &u, &c, PeerTotals::default());
        assert!(!r.c6.ok);
        assert!(!r.feasible());
        assert!(r.violations().contains(&"C6"));
    }

    #[test]
    fn wedc_decreasing_in_fog_and_backhaul() {
        let u = sample_user();
        let c = cfg();
        let mut d = Decision {
            mode: Mode::Cloud,
            omega_u: 2.5,
            omega_f: 2.5,
            f_u: 1e9,
            f_f: 0.0,
            p: 1e-7,
            rho: 1e6,
            d: 1e6,
        };
        let a = wedc(&d, &u, &c);
        d.d = 2e6;
        assert!(wedc(&d, &u, &c) < a);
        d.mode = Mode::Fog;
        d.d = 0.0;
        d.f_f = 1e9;
        let a = wedc(&d, &u, &c);
        d.f_f = 2e9;
        assert!(wedc(&d, &u, &c) < a);
    }
}
