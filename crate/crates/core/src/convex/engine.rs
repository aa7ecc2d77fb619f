//! Log-barrier interior-point method for small smooth convex problems.
//!
//! The problems handled here have the shape
//!
//! ```text
//! minimize    c.x + 0.5 x'Qx
//! subject to  log P_i(x) <= 0      (P_i a sum of log-convex atoms)
//!             a_j.x <= b_j
//!             lower <= x <= upper
//! ```
//!
//! where every atom is `exp(k + v.x)`, optionally divided by
//! `ln(1 + beta0 * exp(x_p))`. Both atom kinds are log-convex, so each
//! `log P_i` is convex and the barrier `-log(-log P_i)` is well behaved.
//!
//! A phase-I problem with one extra slack variable finds a strictly
//! feasible point; phase II then follows the central path with the barrier
//! weight multiplied by 10 per outer iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_OUTER: usize = 200;
const MAX_NEWTON: usize = 100;
/// Target bound on `objective - optimum` (duality gap of the barrier path).
const GAP_TOL: f64 = 1e-10;
/// Phase I stops once every smooth constraint has at least this margin.
const PHASE1_MARGIN: f64 = 1e-3;
/// Phase I reports infeasibility when its optimum is not below this level.
const PHASE1_INFEASIBLE: f64 = -1e-9;

/// `exp(log_coef + dir.x)`, divided by `ln(1 + beta0 exp(x[p]))` when
/// `rate = Some((p, beta0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub log_coef: f64,
    pub dir: Vec<f64>,
    pub rate: Option<(usize, f64)>,
}

impl Atom {
    pub fn exp(coef: f64, dir: Vec<f64>) -> Self {
        Self {
            log_coef: coef.ln(),
            dir,
            rate: None,
        }
    }

    pub fn rate(coef: f64, dir: Vec<f64>, p_index: usize, beta0: f64) -> Self {
        Self {
            log_coef: coef.ln(),
            dir,
            rate: Some((p_index, beta0)),
        }
    }

    /// Logarithm of the atom, plus the extra gradient and Hessian entries on
    /// the rate coordinate. The rest of the gradient is `dir` and the rest
    /// of the Hessian is zero.
    fn log_parts(&self, x: &[f64]) -> (f64, f64, f64) {
        let mut lv = self.log_coef + dot(&self.dir, x);
        let (mut g_p, mut h_pp) = (0.0, 0.0);
        if let Some((p, b0)) = self.rate {
            let u = (b0.ln() + x[p]).exp();
            let l = u.ln_1p();
            let l1 = u / (1.0 + u);
            let l2 = u / ((1.0 + u) * (1.0 + u));
            lv -= l.ln();
            g_p = -l1 / l;
            h_pp = (l1 / l) * (l1 / l) - l2 / l;
        }
        (lv, g_p, h_pp)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.log_parts(x).0.exp()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sum of atoms at `x`.
pub fn posy_value(atoms: &[Atom], x: &[f64]) -> f64 {
    atoms.iter().map(|a| a.value(x)).sum()
}

/// `a.x <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDescriptor {
    pub objective: Vec<f64>,
    pub quadratic: Option<DMatrix<f64>>,
    /// Each entry is the atom list of one constraint `sum(atoms) <= 1`.
    pub posy: Vec<Vec<Atom>>,
    pub linear: Vec<LinearConstraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Strictly inside the box and the linear constraints. A variable with
    /// `lower == upper` is fixed and eliminated before solving.
    pub start: Vec<f64>,
}

impl ProblemDescriptor {
    pub fn n(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut v = dot(&self.objective, x);
        if let Some(q) = &self.quadratic {
            let xv = DVector::from_column_slice(x);
            v += 0.5 * xv.dot(&(q * &xv));
        }
        v
    }

    /// Largest value of `log P_i(x)` over the smooth constraints.
    pub fn max_log_constraint(&self, x: &[f64]) -> f64 {
        self.posy
            .iter()
            .map(|c| posy_value(c, x).ln())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Optimal {
        x: Vec<f64>,
        value: f64,
        gap: f64,
        newton_steps: usize,
    },
    Infeasible,
}

impl Outcome {
    pub fn point(self) -> Option<Vec<f64>> {
        match self {
            Outcome::Optimal { x, .. } => Some(x),
            Outcome::Infeasible => None,
        }
    }
}

/// Value, gradient and Hessian of `log P(x)` for one constraint.
fn log_posy_derivs(atoms: &[Atom], x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let parts: Vec<(f64, f64, f64)> = atoms.iter().map(|a| a.log_parts(x)).collect();
    let m = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = parts.iter().map(|p| (p.0 - m).exp()).collect();
    let total: f64 = weights.iter().sum();
    let g = m + total.ln();
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for ((atom, part), w) in atoms.iter().zip(&parts).zip(&weights) {
        let pi = w / total;
        let mut gi = DVector::from_column_slice(&atom.dir);
        if let Some((p, _)) = atom.rate {
            gi[p] += part.1;
            hess[(p, p)] += pi * part.2;
        }
        hess += pi * &gi * gi.transpose();
        grad += pi * gi;
    }
    hess -= &grad * grad.transpose();
    (g, grad, hess)
}

/// Value and gradient of `log P(x)` for one constraint sum.
pub fn log_posy_gradient(atoms: &[Atom], x: &[f64]) -> (f64, Vec<f64>) {
    let (g, grad, _) = log_posy_derivs(atoms, x);
    (g, grad.iter().copied().collect())
}

/// The barrier problem solved by both phases. In phase I the last
/// coordinate is the slack `s` and smooth constraints read `log P_i <= s`.
struct Barrier<'a> {
    d: &'a ProblemDescriptor,
    phase1: bool,
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        self.d.n() + usize::from(self.phase1)
    }

    fn terms(&self) -> usize {
        self.d.posy.len() + self.d.linear.len() + 2 * self.d.n() + usize::from(self.phase1)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        if self.phase1 {
            z[self.d.n()]
        } else {
            self.d.objective_value(z)
        }
    }

    fn slack(&self, z: &[f64]) -> f64 {
        if self.phase1 {
            z[self.d.n()]
        } else {
            0.0
        }
    }

    fn inside(&self, z: &[f64]) -> bool {
        let n = self.d.n();
        let x = &z[..n];
        if (0..n).any(|i| !(x[i] > self.d.lower[i] && x[i] < self.d.upper[i])) {
            return false;
        }
        if self.d.linear.iter().any(|c| !(dot(&c.a, x) < c.b)) {
            return false;
        }
        if self.phase1 && !(z[n] > -1.0) {
            return false;
        }
        let s = self.slack(z);
        self.d.posy.iter().all(|c| posy_value(c, x).ln() < s)
    }

    /// `t * objective + barrier`, or `None` outside the domain.
    fn value(&self, z: &[f64], t: f64) -> Option<f64> {
        if !self.inside(z) {
            return None;
        }
        let n = self.d.n();
        let x = &z[..n];
        let s = self.slack(z);
        let mut v = t * self.objective(z);
        for c in &self.d.posy {
            v -= (s - posy_value(c, x).ln()).ln();
        }
        for c in &self.d.linear {
            v -= (c.b - dot(&c.a, x)).ln();
        }
        for ((xi, lo), hi) in x.iter().zip(&self.d.lower).zip(&self.d.upper) {
            v -= (xi - lo).ln() + (hi - xi).ln();
        }
        if self.phase1 {
            v -= (z[n] + 1.0).ln();
        }
        v.is_finite().then_some(v)
    }

    fn derivs(&self, z: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.d.n();
        let dim = self.dim();
        let x = &z[..n];
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        if self.phase1 {
            g[n] = t;
        } else {
            for i in 0..n {
                g[i] = t * self.d.objective[i];
            }
            if let Some(q) = &self.d.quadratic {
                let xv = DVector::from_column_slice(x);
                let qx = q * xv;
                for i in 0..n {
                    g[i] += t * qx[i];
                    for j in 0..n {
                        h[(i, j)] += t * q[(i, j)];
                    }
                }
            }
        }
        let s = self.slack(z);
        for c in &self.d.posy {
            let (lp, gl, hl) = log_posy_derivs(c, x);
            // Constraint function phi(z) = log P(x) - s <= 0.
            let r = s - lp;
            let mut gphi = DVector::zeros(dim);
            gphi.rows_mut(0, n).copy_from(&gl);
            if self.phase1 {
                gphi[n] = -1.0;
            }
            g += &gphi / r;
            let mut block = h.view_mut((0, 0), (n, n));
            block += hl / r;
            h += &gphi * gphi.transpose() / (r * r);
        }
        for c in &self.d.linear {
            let r = c.b - dot(&c.a, x);
            let a = DVector::from_column_slice(&c.a);
            let mut av = DVector::zeros(dim);
            av.rows_mut(0, n).copy_from(&a);
            g += &av / r;
            h += &av * av.transpose() / (r * r);
        }
        for i in 0..n {
            let rl = x[i] - self.d.lower[i];
            let ru = self.d.upper[i] - x[i];
            g[i] += -1.0 / rl + 1.0 / ru;
            h[(i, i)] += 1.0 / (rl * rl) + 1.0 / (ru * ru);
        }
        if self.phase1 {
            let r = z[n] + 1.0;
            g[n] -= 1.0 / r;
            h[(n, n)] += 1.0 / (r * r);
        }
        (g, h)
    }

    /// Newton centering at weight `t`. Returns the number of steps taken.
    /// `stop` is polled after each step so phase I can leave early.
    fn center(&self, z: &mut Vec<f64>, t: f64, stop: &dyn Fn(&[f64]) -> bool) -> usize {
        let mut steps = 0;
        let Some(mut fz) = self.value(z, t) else { return 0 };
        for _ in 0..MAX_NEWTON {
            let (g, h) = self.derivs(z, t);
            let dz = match h.clone().cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    let scale = h.diagonal().amax().max(1.0);
                    let reg = h + DMatrix::identity(g.len(), g.len()) * (1e-10 * scale);
                    match reg.cholesky() {
                        Some(ch) => -ch.solve(&g),
                        None => -g.clone(),
                    }
                }
            };
            let dec = -g.dot(&dz);
            if !(dec > 0.0) || dec / 2.0 <= 1e-12 {
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-14 {
                let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, b)| a + step * b).collect();
                if let Some(ft) = self.value(&trial, t) {
                    if ft <= fz - 0.01 * step * dec {
                        *z = trial;
                        fz = ft;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            steps += 1;
            if !accepted || stop(z) {
                break;
            }
        }
        steps
    }
}

/// Minimizes `desc` and returns the optimal point in the original
/// coordinates (fixed variables included), or [`Outcome::Infeasible`].
pub fn minimize_convex(desc: &ProblemDescriptor) -> Result<Outcome> {
    let n = desc.n();
    if desc.lower.len() != n || desc.upper.len() != n || desc.start.len() != n {
        return Err(Error::Config("descriptor dimension mismatch".into()));
    }
    for i in 0..n {
        if !(desc.lower[i] <= desc.upper[i]) || !desc.lower[i].is_finite() || !desc.upper[i].is_finite() {
            return Err(Error::Config(format!("bad box on variable {i}")));
        }
    }
    let fixed: Vec<bool> = (0..n)
        .map(|i| desc.upper[i] - desc.lower[i] <= 1e-12 * (1.0 + desc.lower[i].abs()))
        .collect();
    if fixed.iter().any(|f| *f) {
        let Some((reduced, free)) = eliminate(desc, &fixed) else {
            return Ok(Outcome::Infeasible);
        };
        if reduced.n() == 0 {
            let x: Vec<f64> = desc.lower.clone();
            if desc.posy.iter().any(|c| posy_value(c, &x) > 1.0) || desc.linear.iter().any(|c| dot(&c.a, &x) > c.b) {
                return Ok(Outcome::Infeasible);
            }
            return Ok(Outcome::Optimal {
                value: desc.objective_value(&x),
                x,
                gap: 0.0,
                newton_steps: 0,
            });
        }
        return Ok(match minimize_convex(&reduced)? {
            Outcome::Infeasible => Outcome::Infeasible,
            Outcome::Optimal {
                x: xr,
                gap,
                newton_steps,
                ..
            } => {
                let mut x = desc.lower.clone();
                for (k, &i) in free.iter().enumerate() {
                    x[i] = xr[k];
                }
                Outcome::Optimal {
                    value: desc.objective_value(&x),
                    x,
                    gap,
                    newton_steps,
                }
            }
        });
    }

    let start_ok = (0..n).all(|i| desc.start[i] > desc.lower[i] && desc.start[i] < desc.upper[i])
        && desc.linear.iter().all(|c| dot(&c.a, &desc.start) < c.b);
    if !start_ok {
        return Err(Error::Config(
            "start point is not strictly inside the box and linear constraints".into(),
        ));
    }

    let mut x = desc.start.clone();
    let mut total_steps = 0;
    if !desc.posy.is_empty() && desc.max_log_constraint(&x) >= -PHASE1_MARGIN {
        let ph1 = Barrier { d: desc, phase1: true };
        let mut z = x.clone();
        z.push(desc.max_log_constraint(&x).max(0.0) + 1.0);
        let found = |z: &[f64]| desc.max_log_constraint(&z[..n]) < -PHASE1_MARGIN;
        let mut t = 1.0;
        let mut done = false;
        for _ in 0..MAX_OUTER {
            total_steps += ph1.center(&mut z, t, &found);
            if found(&z) {
                done = true;
                break;
            }
            if (ph1.terms() as f64) / t < GAP_TOL {
                break;
            }
            t *= 10.0;
        }
        if !done {
            let best = desc.max_log_constraint(&z[..n]);
            if (ph1.terms() as f64) / t >= GAP_TOL {
                return Err(Error::Solver("phase I hit the iteration cap".into()));
            }
            if best >= PHASE1_INFEASIBLE {
                return Ok(Outcome::Infeasible);
            }
        }
        x = z[..n].to_vec();
    }

    let ph2 = Barrier { d: desc, phase1: false };
    let m = ph2.terms() as f64;
    let mut t = 1.0;
    let never = |_: &[f64]| false;
    for _ in 0..MAX_OUTER {
        total_steps += ph2.center(&mut x, t, &never);
        if m / t < GAP_TOL {
            return Ok(Outcome::Optimal {
                value: desc.objective_value(&x),
                x,
                gap: m / t,
                newton_steps: total_steps,
            });
        }
        t *= 10.0;
    }
    Err(Error::Solver("barrier method hit the outer iteration cap".into()))
}

fn eliminate(desc: &ProblemDescriptor, fixed: &[bool]) -> Option<(ProblemDescriptor, Vec<usize>)> {
    let n = desc.n();
    let free: Vec<usize> = (0..n).filter(|i| !fixed[*i]).collect();
    let pos: Vec<Option<usize>> = {
        let mut v = vec![None; n];
        for (k, &i) in free.iter().enumerate() {
            v[i] = Some(k);
        }
        v
    };
    let xf: Vec<f64> = (0..n).map(|i| if fixed[i] { desc.lower[i] } else { 0.0 }).collect();
    let pick = |v: &[f64]| free.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let posy = desc
        .posy
        .iter()
        .map(|c| {
            c.iter()
                .map(|a| {
                    let mut log_coef = a.log_coef + dot(&a.dir, &xf);
                    let rate = match a.rate {
                        Some((p, b0)) if fixed[p] => {
                            log_coef -= (b0 * xf[p].exp()).ln_1p().ln();
                            None
                        }
                        Some((p, b0)) => Some((pos[p].unwrap(), b0)),
                        None => None,
                    };
                    Atom {
                        log_coef,
                        dir: pick(&a.dir),
                        rate,
                    }
                })
                .collect()
        })
        .collect();
    let mut linear = Vec::new();
    for c in &desc.linear {
        let row = LinearConstraint {
            a: pick(&c.a),
            b: c.b - dot(&c.a, &xf),
        };
        if row.a.iter().any(|v| *v != 0.0) {
            linear.push(row);
        } else if row.b < -1e-12 {
            return None;
        }
    }
    let mut objective = pick(&desc.objective);
    let quadratic = desc.quadratic.as_ref().map(|q| {
        let qx = q * DVector::from_column_slice(&xf);
        for (k, &i) in free.iter().enumerate() {
            objective[k] += qx[i];
        }
        DMatrix::from_fn(free.len(), free.len(), |r, c| q[(free[r], free[c])])
    });
    let reduced = ProblemDescriptor {
        objective,
        quadratic,
        posy,
        linear,
        lower: pick(&desc.lower),
        upper: pick(&desc.upper),
        start: pick(&desc.start),
    };
    Some((reduced, free))
}

/// Result of a finite-difference curvature scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub points: usize,
    /// Smallest `lambda_min(H) / (1 + ||H||)` seen over points and constraints.
    pub worst_ratio: f64,
    pub passed: bool,
}

/// Central-difference Hessian with one Richardson refinement.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let raw = |h: f64| {
        let mut m = DMatrix::zeros(n, n);
        let mut y = x.to_vec();
        for i in 0..n {
            for j in i..n {
                let mut e = |si: f64, sj: f64| {
                    y.copy_from_slice(x);
                    y[i] += si * h;
                    y[j] += sj * h;
                    f(&y)
                };
                let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h * h);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    };
    let coarse = raw(h);
    let fine = raw(h / 2.0);
    (fine * 4.0 - coarse) / 3.0
}

/// Samples `n_points` uniformly in the box (deterministic in `seed`) and
/// checks that every smooth constraint sum has a positive semidefinite
/// finite-difference Hessian there.
pub fn check_convexity(desc: &ProblemDescriptor, n_points: usize, seed: u64) -> ConvexityReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = desc.n();
    let mut worst = f64::INFINITY;
    for _ in 0..n_points {
        let x: Vec<f64> = (0..n).map(|i| rng.gen_range(desc.lower[i]..=desc.upper[i])).collect();
        for c in &desc.posy {
            // Scale so the curvature test is relative to the function size.
            let scale = posy_value(c, &x);
            let f = |y: &[f64]| posy_value(c, y) / scale;
            let h = fd_hessian(&f, &x, 1e-4);
            worst = worst.min(min_eig_ratio(&h));
        }
        for c in &desc.linear {
            let f = |y: &[f64]| dot(&c.a, y);
            let h = fd_hessian(&f, &x, 1e-3);
            worst = worst.min(min_eig_ratio(&h));
        }
    }
    ConvexityReport {
        points: n_points,
        worst_ratio: worst,
        passed: worst >= -1e-6,
    }
}

/// `lambda_min(H) / (1 + ||H||_2)` for a symmetric matrix.
pub fn min_eig_ratio(h: &DMatrix<f64>) -> f64 {
    let eig = h.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    min / (1.0 + norm)
}
