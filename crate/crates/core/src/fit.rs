//! Least-squares fitting of compression workload curves.
//!
//! The workload model is `y = g1 * w^g2 + g3` with `g1, g3 >= 0`. Two
//! reference families are fitted for comparison: a straight line and the
//! exponential `e1 * (exp(e2 * w) - exp(e2))`.
//!
//! Internally every model is written against the normalized ratio
//! `w / w_ref`, where `w_ref` is the largest sampled ratio, so that
//! exponents above 100 stay representable during the iterations.

use std::path::Path;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CompressionKind, CompressionModel};

/// Starting exponents of the power-law multistart.
pub const POWER_STARTS: [f64; 10] = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0];
const EXP_STARTS: [f64; 9] = [-1.0, -0.1, 1e-4, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
const XTOL: f64 = 1e-10;
const MAX_ITER: usize = 500;

/// One measured point: compression ratio and normalized time (or quality).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    pub omega: f64,
    pub y: f64,
}

impl FitSample {
    pub fn new(omega: f64, y: f64) -> Self {
        Self { omega, y }
    }
}

/// Anything that predicts `y` from a ratio.
pub trait Curve {
    fn predict(&self, omega: f64) -> f64;
}

impl Curve for CompressionModel {
    fn predict(&self, omega: f64) -> f64 {
        self.eval_raw(omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

impl Curve for LinearFit {
    fn predict(&self, omega: f64) -> f64 {
        self.slope * omega + self.intercept
    }
}

/// `e1 * (exp(e2 * w) - exp(e2))`, stored as `scale * expm1(e2 (w - 1)) /
/// expm1(e2 (w_ref - 1))` so that tiny and large `e2` both evaluate
/// accurately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub scale: f64,
    pub eps2: f64,
    pub omega_ref: f64,
}

impl ExponentialFit {
    /// Leading coefficient `e1`; infinite in the `e2 -> 0` limit.
    pub fn eps1(&self) -> f64 {
        self.scale / (self.eps2.exp() * (self.eps2 * (self.omega_ref - 1.0)).exp_m1())
    }
}

impl Curve for ExponentialFit {
    fn predict(&self, omega: f64) -> f64 {
        self.scale * exp_basis(self.eps2, omega - 1.0, self.omega_ref - 1.0).0
    }
}

/// Normalized exponential basis and its derivative in `e`.
fn exp_basis(e: f64, u: f64, v: f64) -> (f64, f64) {
    if e.abs() < 1e-8 {
        return (u / v, u * (u - v) / (2.0 * v));
    }
    let (n, d) = ((e * u).exp_m1(), (e * v).exp_m1());
    (n / d, (u * (e * u).exp() * d - n * v * (e * v).exp()) / (d * d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PowerLaw,
    Linear,
    Exponential,
}

/// Fits of all three families on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub power_law: CompressionModel,
    pub linear: LinearFit,
    pub exponential: ExponentialFit,
    pub rmse_power_law: f64,
    pub rmse_linear: f64,
    pub rmse_exponential: f64,
}

impl FitReport {
    /// Family with the smallest RMSE; earlier families win ties.
    pub fn best(&self) -> Family {
        let mut best = (Family::PowerLaw, self.rmse_power_law);
        for cand in [
            (Family::Linear, self.rmse_linear),
            (Family::Exponential, self.rmse_exponential),
        ] {
            if cand.1 < best.1 {
                best = cand;
            }
        }
        best.0
    }
}

/// Root mean square error of `curve` on `samples`.
pub fn rmse<C: Curve + ?Sized>(curve: &C, samples: &[FitSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Fit("rmse needs at least one sample".into()));
    }
    let sse: f64 = samples.iter().map(|s| (curve.predict(s.omega) - s.y).powi(2)).sum();
    Ok((sse / samples.len() as f64).sqrt())
}

/// Sorted copy of the samples after validating the fitting preconditions.
fn prepare(samples: &[FitSample]) -> Result<Vec<FitSample>> {
    if samples.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 samples, got {}", samples.len())));
    }
    for s in samples {
        if !(s.omega.is_finite() && s.y.is_finite()) || s.omega < 1.0 || s.y < 0.0 {
            return Err(Error::Fit(format!("invalid sample ({}, {})", s.omega, s.y)));
        }
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.omega.total_cmp(&b.omega).then(a.y.total_cmp(&b.y)));
    let mut distinct = v.iter().map(|s| s.omega).collect::<Vec<_>>();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit("need at least 3 distinct ratios".into()));
    }
    Ok(v)
}

/// Generic curve problem for the Levenberg-Marquardt driver. `eval`
/// returns the prediction and its gradient in the parameters.
struct CurveProblem<'a, F> {
    samples: &'a [FitSample],
    params: DVector<f64>,
    eval: F,
}

impl<F> LeastSquaresProblem<f64, Dyn, Dyn> for CurveProblem<'_, F>
where
    F: Fn(&DVector<f64>, f64) -> (f64, DVector<f64>),
{
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.params.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.params.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = DVector::from_iterator(
            self.samples.len(),
            self.samples.iter().map(|s| (self.eval)(&self.params, s.omega).0 - s.y),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.params.len();
        let mut j = DMatrix::zeros(self.samples.len(), n);
        for (i, s) in self.samples.iter().enumerate() {
            let g = (self.eval)(&self.params, s.omega).1;
            j.row_mut(i).copy_from(&g.transpose());
        }
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

fn run_lm<F>(samples: &[FitSample], start: DVector<f64>, eval: F) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>, f64) -> (f64, DVector<f64>),
{
    let n = start.len();
    let problem = CurveProblem {
        samples,
        params: start,
        eval,
    };
    let (problem, _report) = LevenbergMarquardt::new()
        .with_xtol(XTOL)
        .with_ftol(1e-14)
        .with_gtol(1e-14)
        .with_patience(MAX_ITER / (n + 1) + 1)
        .minimize(problem);
    let p = problem.params;
    p.iter().all(|v| v.is_finite()).then_some(p)
}

/// Nonnegative least squares for `y ~ a * phi + c`; returns `(a, c)`.
fn nnls_affine(phi: &[f64], y: &[f64]) -> (f64, f64) {
    let n = phi.len() as f64;
    let (mp, my) = (phi.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = phi.iter().map(|p| (p - mp).powi(2)).sum();
    let sxy: f64 = phi.iter().zip(y).map(|(p, v)| (p - mp) * (v - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c = my - a * mp;
    if a >= 0.0 && c >= 0.0 {
        return (a, c);
    }
    // Candidates on the boundary of the nonnegative quadrant.
    let a0 = (0.0, my.max(0.0));
    let pp: f64 = phi.iter().map(|p| p * p).sum();
    let c0 = (
        if pp > 0.0 {
            (phi.iter().zip(y).map(|(p, v)| p * v).sum::<f64>() / pp).max(0.0)
        } else {
            0.0
        },
        0.0,
    );
    let sse = |(a, c): (f64, f64)| phi.iter().zip(y).map(|(p, v)| (a * p + c - v).powi(2)).sum::<f64>();
    if sse(a0) <= sse(c0) {
        a0
    } else {
        c0
    }
}

struct PowerCandidate {
    a: f64,
    g2: f64,
    g3: f64,
    rmse: f64,
}

fn power_eval(w_ref: f64) -> impl Fn(&DVector<f64>, f64) -> (f64, DVector<f64>) {
    move |p, w| {
        let lx = (w / w_ref).ln();
        let phi = (p[1] * lx).exp();
        (p[0] * phi + p[2], DVector::from_vec(vec![phi, p[0] * phi * lx, 1.0]))
    }
}

fn power_eval_no_offset(w_ref: f64) -> impl Fn(&DVector<f64>, f64) -> (f64, DVector<f64>) {
    move |p, w| {
        let lx = (w / w_ref).ln();
        let phi = (p[1] * lx).exp();
        (p[0] * phi, DVector::from_vec(vec![phi, p[0] * phi * lx]))
    }
}

fn power_rmse(s: &[FitSample], w_ref: f64, a: f64, g2: f64, g3: f64) -> f64 {
    let sse: f64 = s
        .iter()
        .map(|p| (a * (p.omega / w_ref).powf(g2) + g3 - p.y).powi(2))
        .sum();
    (sse / s.len() as f64).sqrt()
}

fn power_from_start(s: &[FitSample], w_ref: f64, g2: f64) -> Vec<PowerCandidate> {
    let ys: Vec<f64> = s.iter().map(|p| p.y).collect();
    let phi: Vec<f64> = s.iter().map(|p| (p.omega / w_ref).powf(g2)).collect();
    let (a0, c0) = nnls_affine(&phi, &ys);
    let mut out = Vec::new();
    let mut push = |a: f64, g2: f64, g3: f64| {
        if a >= 0.0 && g3 >= 0.0 && g2.is_finite() {
            out.push(PowerCandidate {
                a,
                g2,
                g3,
                rmse: power_rmse(s, w_ref, a, g2, g3),
            });
        }
    };
    push(a0, g2, c0);
    if let Some(p) = run_lm(s, DVector::from_vec(vec![a0.max(1e-12), g2, c0]), power_eval(w_ref)) {
        if p[0] >= 0.0 && p[2] >= 0.0 {
            push(p[0], p[1], p[2]);
        } else if p[2] < 0.0 {
            // Offset pinned at zero.
            let start = DVector::from_vec(vec![p[0].max(a0).max(1e-12), p[1]]);
            if let Some(q) = run_lm(s, start, power_eval_no_offset(w_ref)) {
                push(q[0], q[1], 0.0);
            }
        }
    }
    out
}

/// Power-law fit `y = g1 * w^g2 + g3` with `g1, g3 >= 0`.
///
/// The returned model has `gamma0 = 1` and the sampled ratio range. A
/// vanishing `g1` is reported as the constant model with `g2 = 1`.
///
/// ```
/// use fogcomp::fit::{fit_power_law, FitSample};
/// let s: Vec<_> = (0..8)
///     .map(|i| 3.4 + i as f64)
///     .map(|w| FitSample::new(w, 0.076 * w.powf(0.7117) + 0.579))
///     .collect();
/// let m = fit_power_law(&s).unwrap();
/// assert!((m.gamma2 - 0.7117).abs() < 1e-6);
/// ```
pub fn fit_power_law(samples: &[FitSample]) -> Result<CompressionModel> {
    let s = prepare(samples)?;
    let w_ref = s.last().unwrap().omega;
    let y_scale = s.iter().map(|p| p.y.abs()).fold(0.0, f64::max);
    let mean = s.iter().map(|p| p.y).sum::<f64>() / s.len() as f64;

    let mut cands: Vec<PowerCandidate> = POWER_STARTS
        .iter()
        .flat_map(|&g| power_from_start(&s, w_ref, g))
        .collect();
    cands.push(PowerCandidate {
        a: 0.0,
        g2: 1.0,
        g3: mean,
        rmse: power_rmse(&s, w_ref, 0.0, 1.0, mean),
    });
    let best = cands
        .into_iter()
        .min_by(|x, y| x.rmse.total_cmp(&y.rmse).then(x.g2.total_cmp(&y.g2)))
        .expect("constant candidate always present");

    let (g1, g2, g3) = if best.a <= 1e-12 * y_scale {
        (0.0, 1.0, mean)
    } else {
        (best.a / w_ref.powf(best.g2), best.g2, best.g3)
    };
    if !g1.is_finite() {
        return Err(Error::Fit("power-law coefficient overflowed".into()));
    }
    CompressionModel::new(CompressionKind::Compress, 1.0, g1, g2, g3, s[0].omega, w_ref)
}

/// Ordinary least-squares line.
pub fn fit_linear(samples: &[FitSample]) -> Result<LinearFit> {
    let s = prepare(samples)?;
    let n = s.len() as f64;
    let (mx, my) = (
        s.iter().map(|p| p.omega).sum::<f64>() / n,
        s.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let sxx: f64 = s.iter().map(|p| (p.omega - mx).powi(2)).sum();
    let sxy: f64 = s.iter().map(|p| (p.omega - mx) * (p.y - my)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// Least-squares fit of `e1 * (exp(e2 * w) - exp(e2))`.
pub fn fit_exponential(samples: &[FitSample]) -> Result<ExponentialFit> {
    let s = prepare(samples)?;
    let w_ref = s.last().unwrap().omega;
    let v = w_ref - 1.0;
    let eval = move |p: &DVector<f64>, w: f64| {
        let (g, dg) = exp_basis(p[1], w - 1.0, v);
        (p[0] * g, DVector::from_vec(vec![g, p[0] * dg]))
    };
    let sse = |f: &ExponentialFit| s.iter().map(|p| (f.predict(p.omega) - p.y).powi(2)).sum::<f64>();
    let mut best: Option<(f64, ExponentialFit)> = None;
    for &e in &EXP_STARTS {
        let g: Vec<f64> = s.iter().map(|p| exp_basis(e, p.omega - 1.0, v).0).collect();
        let gg: f64 = g.iter().map(|x| x * x).sum();
        let a0 = g.iter().zip(&s).map(|(x, p)| x * p.y).sum::<f64>() / gg;
        let mut tries = vec![ExponentialFit {
            scale: a0,
            eps2: e,
            omega_ref: w_ref,
        }];
        if let Some(p) = run_lm(&s, DVector::from_vec(vec![a0, e]), eval) {
            tries.push(ExponentialFit {
                scale: p[0],
                eps2: p[1],
                omega_ref: w_ref,
            });
        }
        for f in tries {
            let val = sse(&f);
            if val.is_finite() && best.as_ref().is_none_or(|b| val < b.0) {
                best = Some((val, f));
            }
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::Fit("exponential fit failed".into()))
}

/// Fits all three families and their RMSE.
pub fn fit_comparison_models(samples: &[FitSample]) -> Result<FitReport> {
    let power_law = fit_power_law(samples)?;
    let linear = fit_linear(samples)?;
    let exponential = fit_exponential(samples)?;
    Ok(FitReport {
        rmse_power_law: rmse(&power_law, samples)?,
        rmse_linear: rmse(&linear, samples)?,
        rmse_exponential: rmse(&exponential, samples)?,
        power_law,
        linear,
        exponential,
    })
}

/// Parses two whitespace-separated columns; `#` starts a comment.
pub fn parse_samples(text: &str) -> Result<Vec<FitSample>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        let cols: Vec<&str> = body.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let parse = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad number {t:?}", no + 1)))
        };
        match cols.as_slice() {
            [w, y] => out.push(FitSample::new(parse(w)?, parse(y)?)),
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: expected 2 columns, got {}",
                    no + 1,
                    cols.len()
                )))
            }
        }
    }
    Ok(out)
}

pub fn read_samples(path: &Path) -> Result<Vec<FitSample>> {
    parse_samples(&std::fs::read_to_string(path)?)
}

/// Bundled sample tables, as `(name, file contents)`.
pub const SHIPPED_DATASETS: [(&str, &str); 8] = [
    ("gzip_alice", include_str!("../data/gzip_alice.txt")),
    ("gzip_asyoulik", include_str!("../data/gzip_asyoulik.txt")),
    ("bz2_alice", include_str!("../data/bz2_alice.txt")),
    ("bz2_asyoulik", include_str!("../data/bz2_asyoulik.txt")),
    ("xz_ubuntu", include_str!("../data/xz_ubuntu.txt")),
    ("xz_clearlinux", include_str!("../data/xz_clearlinux.txt")),
    ("zlib_ubuntu", include_str!("../data/zlib_ubuntu.txt")),
    ("zlib_clearlinux", include_str!("../data/zlib_clearlinux.txt")),
];

/// Samples of a bundled dataset by name.
pub fn shipped_dataset(name: &str) -> Result<Vec<FitSample>> {
    let (_, text) = SHIPPED_DATASETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown dataset {name:?}")))?;
    parse_samples(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(g1: f64, g2: f64, g3: f64, lo: f64, hi: f64, n: usize) -> Vec<FitSample> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .map(|w| FitSample::new(w, g1 * w.powf(g2) + g3))
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn noiseless_bz2_recovery() {
        let m = fit_power_law(&curve(0.076, 0.7117, 0.579, 3.4, 11.2, 20)).unwrap();
        assert!(rel(m.gamma1, 0.076) < 1e-6, "{m:?}");
        assert!(rel(m.gamma2, 0.7117) < 1e-6, "{m:?}");
        assert!(rel(m.gamma3, 0.579) < 1e-6, "{m:?}");
    }

    #[test]
    fn steep_exponents_are_reached() {
        for (g1, g2, g3, lo, hi) in [(1.207e-15, 32.28, 0.3, 2.3, 2.87), (6.019e-76, 108.6, 0.240, 4.0, 4.92)] {
            let m = fit_power_law(&curve(g1, g2, g3, lo, hi, 25)).unwrap();
            assert!(rel(m.gamma2, g2) < 1e-5, "{m:?}");
            assert!(rel(m.gamma3, g3) < 1e-5, "{m:?}");
        }
    }

    #[test]
    fn constant_samples() {
        let s: Vec<_> = (0..6).map(|i| FitSample::new(2.0 + i as f64, 0.7)).collect();
        let m = fit_power_law(&s).unwrap();
        assert_eq!((m.gamma1, m.gamma2), (0.0, 1.0));
        assert!((m.gamma3 - 0.7).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let same_w: Vec<_> = (0..6).map(|i| FitSample::new(2.0, i as f64)).collect();
        assert!(matches!(fit_power_law(&same_w), Err(Error::Fit(_))));
        assert!(fit_power_law(&curve(1.0, 1.0, 0.0, 1.0, 2.0, 3)).is_err());
        assert!(rmse(
            &LinearFit {
                slope: 1.0,
                intercept: 0.0
            },
            &[]
        )
        .is_err());
    }

    #[test]
    fn rmse_reference() {
        let line = LinearFit {
            slope: 0.0,
            intercept: 0.0,
        };
        let s = [FitSample::new(1.0, 3.0), FitSample::new(2.0, 4.0)];
        assert!((rmse(&line, &s).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&line, &s[..1]).unwrap(), 3.0);
    }

    #[test]
    fn linear_data_prefers_line() {
        let s: Vec<_> = (0..10)
            .map(|i| 2.0 + 0.5 * i as f64)
            .map(|w| FitSample::new(w, 0.3 * w + 0.1))
            .collect();
        let r = fit_comparison_models(&s).unwrap();
        assert!(r.rmse_linear < 1e-12);
        assert!(r.rmse_linear <= r.rmse_power_law + 1e-12 && r.rmse_linear <= r.rmse_exponential);
    }

    #[test]
    fn refit_on_own_predictions() {
        for (name, _) in SHIPPED_DATASETS {
            let s = shipped_dataset(name).unwrap();
            let m = fit_power_law(&s).unwrap();
            let own: Vec<_> = s.iter().map(|p| FitSample::new(p.omega, m.eval_raw(p.omega))).collect();
            assert!(rmse(&m, &own).unwrap() < 1e-9);
            let again = fit_power_law(&own).unwrap();
            for (a, b) in [
                (again.gamma1, m.gamma1),
                (again.gamma2, m.gamma2),
                (again.gamma3, m.gamma3),
            ] {
                assert!(
                    a == b || rel(a, b) < 1e-6 || (a - b).abs() < 1e-12,
                    "{name}: {again:?} vs {m:?}"
                );
            }
        }
    }

    #[test]
    fn parser_handles_comments() {
        let s = parse_samples("# header\n1.5 0.2  # tail\n\n  2 3e-1\n").unwrap();
        assert_eq!(s, vec![FitSample::new(1.5, 0.2), FitSample::new(2.0, 0.3)]);
        assert!(matches!(parse_samples("1 2 3"), Err(Error::Parse(_))));
        assert!(matches!(parse_samples("1 x"), Err(Error::Parse(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn fit_is_order_invariant(seed in 0usize..8, rot in 1usize..20) {
            let (name, _) = SHIPPED_DATASETS[seed];
            let s = shipped_dataset(name).unwrap();
            let mut t = s.clone();
            t.reverse();
            let n = t.len();
            t.rotate_left(rot % n);
            prop_assert_eq!(fit_power_law(&s).unwrap(), fit_power_law(&t).unwrap());
        }

        #[test]
        fn fit_is_locally_optimal(seed in 0usize..8, d in prop::collection::vec(-1.0f64..1.0, 3)) {
            let (name, _) = SHIPPED_DATASETS[seed];
            let s = shipped_dataset(name).unwrap();
            let m = fit_power_law(&s).unwrap();
            let base = rmse(&m, &s).unwrap();
            let mut p = m;
            p.gamma1 = (m.gamma1 * (1.0 + 1e-3 * d[0])).max(0.0);
            p.gamma2 = m.gamma2 + 1e-3 * d[1];
            p.gamma3 = (m.gamma3 * (1.0 + 1e-3 * d[2])).max(0.0);
            prop_assert!(base <= rmse(&p, &s).unwrap() * (1.0 + 1e-12));
        }
    }
}
