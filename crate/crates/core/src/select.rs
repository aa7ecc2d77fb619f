//! Exact selection subproblems: 0-1 knapsack and a multiple-choice
//! knapsack whose options may be convex piecewise-linear curves.
//!
//! Both solvers use depth-first branch-and-bound with the LP relaxation as
//! bound when at most [`BNB_LIMIT`] items are free, and dynamic
//! programming over a discretized capacity otherwise.

use crate::model::Mode;

/// Largest number of free items solved by branch-and-bound.
pub const BNB_LIMIT: usize = 24;
/// Number of capacity units used by the dynamic-programming fallback.
pub const DP_UNITS: usize = 100_000;

/// Result of [`knapsack01`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen item indices, ascending.
    pub selected: Vec<usize>,
    pub value: f64,
    pub weight: f64,
    /// Upper bound on the weight rounding error of the DP fallback
    /// (zero when branch-and-bound was used).
    pub approx_error: f64,
}

/// Maximizes the total value of the selected items subject to the total
/// weight not exceeding `capacity`. Items in `forced_in` are always chosen,
/// items in `forced_out` never. Returns `None` when the forced items alone
/// exceed the capacity.
pub fn knapsack01(
    values: &[f64],
    weights: &[f64],
    capacity: f64,
    forced_in: &[usize],
    forced_out: &[usize],
) -> Option<Selection> {
    let n = values.len();
    assert_eq!(n, weights.len());
    let tol = 1e-9 * capacity.abs().max(1.0);
    let forced_w: f64 = forced_in.iter().map(|&i| weights[i]).sum();
    if forced_w > capacity + tol {
        return None;
    }
    let free: Vec<usize> = (0..n)
        .filter(|i| !forced_in.contains(i) && !forced_out.contains(i))
        .collect();
    let cap = capacity - forced_w;
    let (mut chosen, approx_error) = if free.len() <= BNB_LIMIT {
        (knap_bnb(values, weights, &free, cap, tol), 0.0)
    } else {
        knap_dp(values, weights, &free, cap)
    };
    chosen.extend_from_slice(forced_in);
    chosen.sort_unstable();
    let value = chosen.iter().map(|&i| values[i]).sum();
    let weight = chosen.iter().map(|&i| weights[i]).sum();
    Some(Selection {
        selected: chosen,
        value,
        weight,
        approx_error,
    })
}

fn knap_bnb(values: &[f64], weights: &[f64], free: &[usize], cap: f64, tol: f64) -> Vec<usize> {
    let mut items: Vec<usize> = free.iter().copied().filter(|&i| values[i] > 0.0).collect();
    let ratio = |i: usize| {
        if weights[i] <= 0.0 {
            f64::INFINITY
        } else {
            values[i] / weights[i]
        }
    };
    items.sort_by(|&a, &b| ratio(b).partial_cmp(&ratio(a)).unwrap().then(a.cmp(&b)));

    struct S<'a> {
        v: &'a [f64],
        w: &'a [f64],
        items: Vec<usize>,
        tol: f64,
        best: f64,
        best_set: Vec<bool>,
        cur: Vec<bool>,
    }
    impl S<'_> {
        fn bound(&self, k: usize, room: f64, val: f64) -> f64 {
            let mut room = room;
            let mut b = val;
            for &i in &self.items[k..] {
                if self.w[i] <= room {
                    room -= self.w[i];
                    b += self.v[i];
                } else {
                    return b + self.v[i] * room / self.w[i];
                }
            }
            b
        }
        fn go(&mut self, k: usize, room: f64, val: f64) {
            if val > self.best {
                self.best = val;
                self.best_set = self.cur.clone();
            }
            if k == self.items.len() || self.bound(k, room, val) <= self.best + 1e-12 * self.best.abs() {
                return;
            }
            let i = self.items[k];
            if self.w[i] <= room + self.tol {
                self.cur[k] = true;
                self.go(k + 1, room - self.w[i], val + self.v[i]);
                self.cur[k] = false;
            }
            self.go(k + 1, room, val);
        }
    }
    let m = items.len();
    let mut s = S {
        v: values,
        w: weights,
        items,
        tol,
        best: 0.0,
        best_set: vec![false; m],
        cur: vec![false; m],
    };
    s.go(0, cap, 0.0);
    (0..m).filter(|&k| s.best_set[k]).map(|k| s.items[k]).collect()
}

fn knap_dp(values: &[f64], weights: &[f64], free: &[usize], cap: f64) -> (Vec<usize>, f64) {
    if cap <= 0.0 {
        let zero: Vec<usize> = free
            .iter()
            .copied()
            .filter(|&i| weights[i] <= 0.0 && values[i] > 0.0)
            .collect();
        return (zero, 0.0);
    }
    let unit = cap / DP_UNITS as f64;
    let units = DP_UNITS;
    let wq: Vec<usize> = free.iter().map(|&i| (weights[i] / unit).ceil() as usize).collect();
    let mut best = vec![0.0f64; units + 1];
    let mut take = vec![vec![false; units + 1]; free.len()];
    for (k, &i) in free.iter().enumerate() {
        let w = wq[k];
        if w > units || values[i] <= 0.0 {
            continue;
        }
        for c in (w..=units).rev() {
            let cand = best[c - w] + values[i];
            if cand > best[c] {
                best[c] = cand;
                take[k][c] = true;
            }
        }
    }
    let mut c = units;
    let mut chosen = Vec::new();
    for k in (0..free.len()).rev() {
        if take[k][c] {
            chosen.push(free[k]);
            c -= wq[k];
        }
    }
    (chosen, unit * free.len() as f64)
}

/// Shape of one selectable option in the (backhaul, fog) plane.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Point {
        backhaul: f64,
        fog: f64,
    },
    /// Convex non-increasing piecewise-linear trade-off given by its
    /// vertices `(backhaul, fog)` with strictly increasing backhaul. Any
    /// point on the curve may be chosen.
    Curve(Vec<(f64, f64)>),
}

/// One option for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectOption {
    pub mode: Mode,
    pub shape: Shape,
}

/// Chosen option of one user and the operating point on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pick {
    pub option: usize,
    pub backhaul: f64,
    pub fog: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MckpSolution {
    pub picks: Vec<Pick>,
    pub total_fog: f64,
    pub total_backhaul: f64,
    pub approx_error: f64,
}

/// Convex non-increasing piecewise-linear function by vertices.
type Pwl = Vec<(f64, f64)>;

fn lower_hull(points: &[(f64, f64)]) -> Pwl {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let mut hull: Pwl = Vec::new();
    for p in pts {
        if let Some(last) = hull.last() {
            if (p.0 - last.0).abs() <= 0.0 {
                continue;
            }
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    // Keep only the non-increasing part: more backhaul never pays beyond
    // the point of least fog.
    let mut k = 0;
    for (i, p) in hull.iter().enumerate() {
        if p.1 < hull[k].1 {
            k = i;
        }
    }
    hull.truncate(k + 1);
    hull
}

fn shape_pwl(s: &Shape) -> Pwl {
    match s {
        Shape::Point { backhaul, fog } => vec![(*backhaul, *fog)],
        Shape::Curve(v) => lower_hull(v),
    }
}

/// Minimum of `sum f_k(b_k)` subject to `sum b_k <= cap` for convex
/// non-increasing piecewise-linear `f_k`, each starting at its first
/// vertex. Returns the value and the per-function backhaul.
fn relax(funcs: &[&Pwl], cap: f64, tol: f64) -> Option<(f64, Vec<f64>)> {
    let base: f64 = funcs.iter().map(|f| f[0].0).sum();
    if base > cap + tol {
        return None;
    }
    let mut value: f64 = funcs.iter().map(|f| f[0].1).sum();
    let mut alloc: Vec<f64> = funcs.iter().map(|f| f[0].0).collect();
    let mut segs: Vec<(f64, usize, usize)> = Vec::new();
    for (k, f) in funcs.iter().enumerate() {
        for j in 1..f.len() {
            let slope = (f[j].1 - f[j - 1].1) / (f[j].0 - f[j - 1].0);
            segs.push((slope, k, j));
        }
    }
    segs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut room = (cap - base).max(0.0);
    for (slope, k, j) in segs {
        if room <= 0.0 || slope >= 0.0 {
            break;
        }
        let len = funcs[k][j].0 - funcs[k][j - 1].0;
        let take = len.min(room);
        value += slope * take;
        alloc[k] += take;
        room -= take;
    }
    Some((value, alloc))
}

/// Evaluates a convex piecewise-linear function.
pub fn pwl_eval(f: &[(f64, f64)], b: f64) -> f64 {
    if b <= f[0].0 {
        return f[0].1;
    }
    for w in f.windows(2) {
        if b <= w[1].0 {
            let t = (b - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + t * (w[1].1 - w[0].1);
        }
    }
    f[f.len() - 1].1
}

/// Chooses one option per user minimizing total fog subject to total
/// backhaul at most `capacity`. Returns `None` when no choice fits.
pub fn solve_mckp(users: &[Vec<SelectOption>], capacity: f64) -> Option<MckpSolution> {
    if users.iter().any(|u| u.is_empty()) {
        return None;
    }
    if users.len() <= BNB_LIMIT {
        mckp_bnb(users, capacity)
    } else {
        mckp_dp(users, capacity)
    }
}

fn mckp_bnb(users: &[Vec<SelectOption>], capacity: f64) -> Option<MckpSolution> {
    let n = users.len();
    let tol = 1e-9 * capacity.abs().max(1.0);
    let pwls: Vec<Vec<Pwl>> = users
        .iter()
        .map(|u| u.iter().map(|o| shape_pwl(&o.shape)).collect())
        .collect();
    let hulls: Vec<Pwl> = pwls
        .iter()
        .map(|opts| lower_hull(&opts.iter().flatten().copied().collect::<Vec<_>>()))
        .collect();

    struct St<'a> {
        pwls: &'a [Vec<Pwl>],
        hulls: &'a [Pwl],
        cap: f64,
        tol: f64,
        cur: Vec<usize>,
        best: f64,
        best_pick: Option<(Vec<usize>, Vec<f64>)>,
    }
    impl St<'_> {
        fn go(&mut self, k: usize) {
            let n = self.pwls.len();
            let funcs: Vec<&Pwl> = (0..n)
                .map(|i| {
                    if i < k {
                        &self.pwls[i][self.cur[i]]
                    } else {
                        &self.hulls[i]
                    }
                })
                .collect();
            let Some((bound, alloc)) = relax(&funcs, self.cap, self.tol) else {
                return;
            };
            if bound >= self.best - 1e-12 * self.best.abs().max(1.0) {
                return;
            }
            if k == n {
                self.best = bound;
                self.best_pick = Some((self.cur.clone(), alloc));
                return;
            }
            // Visit the cheapest-looking options first to find incumbents early.
            let mut order: Vec<usize> = (0..self.pwls[k].len()).collect();
            let at = alloc[k];
            order.sort_by(|&a, &b| {
                let fa = pwl_eval(&self.pwls[k][a], at) + if self.pwls[k][a][0].0 > at { 1e300 } else { 0.0 };
                let fb = pwl_eval(&self.pwls[k][b], at) + if self.pwls[k][b][0].0 > at { 1e300 } else { 0.0 };
                fa.partial_cmp(&fb).unwrap().then(a.cmp(&b))
            });
            for o in order {
                self.cur[k] = o;
                self.go(k + 1);
            }
        }
    }
    let mut st = St {
        pwls: &pwls,
        hulls: &hulls,
        cap: capacity,
        tol,
        cur: vec![0; n],
        best: f64::INFINITY,
        best_pick: None,
    };
    st.go(0);
    let (choice, alloc) = st.best_pick?;
    let picks: Vec<Pick> = (0..n)
        .map(|k| {
            let f = &pwls[k][choice[k]];
            Pick {
                option: choice[k],
                backhaul: alloc[k],
                fog: pwl_eval(f, alloc[k]),
            }
        })
        .collect();
    Some(MckpSolution {
        total_fog: picks.iter().map(|p| p.fog).sum(),
        total_backhaul: picks.iter().map(|p| p.backhaul).sum(),
        picks,
        approx_error: 0.0,
    })
}

fn mckp_dp(users: &[Vec<SelectOption>], capacity: f64) -> Option<MckpSolution> {
    if capacity <= 0.0 {
        let mut picks = Vec::new();
        for opts in users {
            let mut best: Option<Pick> = None;
            for (o, opt) in opts.iter().enumerate() {
                let v = shape_pwl(&opt.shape)[0];
                if v.0 <= 0.0 && best.is_none_or(|b| v.1 < b.fog) {
                    best = Some(Pick {
                        option: o,
                        backhaul: 0.0,
                        fog: v.1,
                    });
                }
            }
            picks.push(best?);
        }
        let total_fog = picks.iter().map(|p| p.fog).sum();
        return Some(MckpSolution {
            picks,
            total_fog,
            total_backhaul: 0.0,
            approx_error: 0.0,
        });
    }
    let unit = capacity / DP_UNITS as f64;
    let units = DP_UNITS;
    // Every curve vertex becomes a discrete item; weights are rounded up so
    // the result never exceeds the true capacity.
    let items: Vec<Vec<(usize, usize, f64, f64)>> = users
        .iter()
        .map(|opts| {
            let mut v = Vec::new();
            for (o, opt) in opts.iter().enumerate() {
                for (b, f) in shape_pwl(&opt.shape) {
                    v.push((o, (b / unit).ceil() as usize, b, f));
                }
            }
            v
        })
        .collect();
    let inf = f64::INFINITY;
    let mut dp = vec![0.0f64; units + 1];
    let mut choice: Vec<Vec<u32>> = Vec::with_capacity(users.len());
    for its in &items {
        let mut next = vec![inf; units + 1];
        let mut ch = vec![u32::MAX; units + 1];
        for c in 0..=units {
            for (j, it) in its.iter().enumerate() {
                if it.1 <= c && dp[c - it.1] + it.3 < next[c] {
                    next[c] = dp[c - it.1] + it.3;
                    ch[c] = j as u32;
                }
            }
        }
        dp = next;
        choice.push(ch);
    }
    if !dp[units].is_finite() {
        return None;
    }
    let mut c = units;
    let mut picks = vec![
        Pick {
            option: 0,
            backhaul: 0.0,
            fog: 0.0
        };
        users.len()
    ];
    for k in (0..users.len()).rev() {
        let it = items[k][choice[k][c] as usize];
        picks[k] = Pick {
            option: it.0,
            backhaul: it.2,
            fog: it.3,
        };
        c -= it.1;
    }
    Some(MckpSolution {
        total_fog: picks.iter().map(|p| p.fog).sum(),
        total_backhaul: picks.iter().map(|p| p.backhaul).sum(),
        picks,
        approx_error: unit * users.len() as f64,
    })
}
