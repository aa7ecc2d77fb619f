//! Acceptance checks. Runs every criterion, prints one `PASS`/`FAIL` line
//! each, and exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p fogcomp --test acceptance --release`.

use std::process::ExitCode;
use std::time::Instant;

use fogcomp::bench::{fixed_omega_grid, generate_instance, run_algo, Algo};
use fogcomp::convex::{check_convexity, p3_descriptor, p4_descriptor, p_dk_descriptor, solve_p4};
use fogcomp::fit::{shipped_dataset, SHIPPED_DATASETS};
use fogcomp::jcora::{self, eta_local, Solution};
use fogcomp::model::Instance;
use fogcomp::oracle::{grid_solve, GridSpec};
use fogcomp::recompress::{
    self, composed_gradient, d_of_lambda, dh0_dd, h0, iuts_with, optimal_omega_f, osts_with, pla_users, pla_with,
    tsa_users, ExtAlgorithm, Mode3Coefficients,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances pinned by the acceptance criteria.
const C1_SEEDS: u64 = 20;
const C1_REL_GAP: f64 = 0.03;
const C1_SECONDS: f64 = 60.0;
const C3_POINTS: usize = 100;
const C3_EIG_TOL: f64 = 1e-6;
const C4_SCAN_POINTS: usize = 10_000;
const C4_DRAWS: usize = 1_000;
const C4_D_GRID: usize = 200;
const C4_ROOT_TOL: f64 = 1e-8;
const C5_SEEDS: u64 = 20;
const C5_PAIRWISE: f64 = 0.05;
const C5_OSTS_STEP: f64 = 0.02;
const C6_SEEDS: u64 = 20;
const C6_MEAN_REDUCTION: f64 = 0.30;
const C7_INTERIOR_SHARE: f64 = 0.80;
const C11_PROBES: usize = 3;

/// Users per instance in the multi-user benchmarks.
const K: usize = 5;
const EPS: f64 = 1e-3;

type Outcome = (bool, String);

fn inst(seed: u64, k: usize, overrides: &[(&str, &str)]) -> Instance {
    let ov: Vec<(String, String)> = overrides.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    generate_instance(seed, k, &ov).expect("instance generation")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn threshold_holds(inst: &Instance, sol: &Solution) -> bool {
    let expected: Vec<usize> = inst
        .users
        .iter()
        .enumerate()
        .filter(|(_, u)| eta_local(u) <= sol.eta_star)
        .map(|(k, _)| k)
        .collect();
    let mut a = sol.classification.set_a.clone();
    a.sort_unstable();
    a == expected
}

fn criterion1() -> Outcome {
    let mut worst = 0.0f64;
    let mut above = 0.0f64;
    let mut slowest = 0.0f64;
    for seed in 0..C1_SEEDS {
        let inst = inst(seed, 2, &[]);
        let t = Instant::now();
        let sol = jcora::solve(&inst, 1e-4).expect("jcora");
        let grid = grid_solve(&inst, &GridSpec::default()).expect("grid");
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let eta = sol.max_cost(&inst);
        worst = worst.max((eta - grid.eta).abs() / grid.eta);
        above = above.max((eta - grid.eta) / grid.eta);
    }
    let pass = worst <= C1_REL_GAP && above <= C1_REL_GAP && slowest <= C1_SECONDS;
    (
        pass,
        format!(
            "{C1_SEEDS} K=2 instances, worst |gap| {:.3}%, worst excess {:.3}%, slowest {slowest:.2}s",
            worst * 100.0,
            above * 100.0
        ),
    )
}

fn criterion2() -> Outcome {
    let mut solved = 0;
    let mut bad = Vec::new();
    for seed in 0..8u64 {
        let k = 2 + (seed as usize % 5);
        let inst = inst(100 + seed, k, &[]);
        let mut sols = vec![("jcora", jcora::solve(&inst, EPS).expect("jcora"))];
        if seed % 2 == 0 {
            sols.push((
                "osts",
                recompress::solve_ext(&inst, EPS, ExtAlgorithm::OSTS_DEFAULT).expect("osts"),
            ));
            sols.push((
                "iuts",
                recompress::solve_ext(&inst, EPS, ExtAlgorithm::IUTS_DEFAULT).expect("iuts"),
            ));
        }
        for (name, sol) in sols {
            solved += 1;
            if !threshold_holds(&inst, &sol) {
                bad.push(format!("{name}@seed{}", 100 + seed));
            }
        }
    }
    (
        bad.is_empty(),
        format!(
            "threshold rule exact on {}/{solved} solutions {bad:?}",
            solved - bad.len()
        ),
    )
}

fn criterion3() -> Outcome {
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for seed in 0..5u64 {
        let inst = inst(200 + seed, 3, &[]);
        let eta = 1.1 * jcora::solve(&inst, EPS).expect("jcora").eta_star;
        let cfg = &inst.config;
        for (k, u) in inst.users.iter().enumerate() {
            let d = solve_p4(u, cfg, eta)
                .expect("p4")
                .map_or(0.5 * cfg.d_max, |r| 0.5 * r.resource);
            let descs = [
                p3_descriptor(u, cfg, eta),
                p4_descriptor(u, cfg, eta),
                p_dk_descriptor(u, cfg, eta, d),
            ];
            for (j, desc) in descs.iter().enumerate() {
                if let Some(desc) = desc {
                    let r = check_convexity(desc, C3_POINTS, seed * 100 + k as u64 * 10 + j as u64);
                    checked += 1;
                    worst = worst.min(r.worst_ratio);
                }
            }
        }
    }
    let pass = checked > 0 && worst >= -C3_EIG_TOL;
    (
        pass,
        format!("{checked} problems x {C3_POINTS} points, worst lambda_min/(1+|H|) = {worst:.3e}"),
    )
}

fn draw_coeffs(rng: &mut ChaCha8Rng) -> Mode3Coefficients {
    let lo = rng.gen_range(1.0..3.0);
    Mode3Coefficients {
        nu0: rng.gen_range(0.05..1.0),
        g1t: 10f64.powf(rng.gen_range(-3.0..1.0)),
        g2: rng.gen_range(-1.5..3.0),
        g3t: rng.gen_range(0.0..5.0),
        b_in: rng.gen_range(0.5..5.0),
        omega_f_min: lo,
        omega_f_max: lo + rng.gen_range(0.1..8.0),
        d_cap: f64::INFINITY,
        f_cap: f64::INFINITY,
    }
}

/// Log-uniform backhaul above the feasibility edge, wide enough to cover all
/// three branches of the case rule.
fn draw_d(rng: &mut ChaCha8Rng, c: &Mode3Coefficients) -> f64 {
    let edge = c.d_bar1();
    let top = if c.g2 > 0.0 {
        (3.0 * c.d_bar3()).max(10.0 * edge)
    } else {
        100.0 * edge
    };
    (edge.ln() + rng.gen_range(1e-3..1.0) * (top / edge).ln()).exp()
}

fn criterion4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Argmin against a dense scan.
    let mut argmin_bad = 0;
    for _ in 0..C4_DRAWS {
        let c = draw_coeffs(&mut rng);
        let d = draw_d(&mut rng, &c);
        let w = optimal_omega_f(&c, d).expect("above the edge");
        let cell = (c.omega_f_max - c.omega_f_min) / C4_SCAN_POINTS as f64;
        let (mut best_w, mut best_v) = (f64::NAN, f64::INFINITY);
        for i in 0..=C4_SCAN_POINTS {
            let x = c.omega_f_min + cell * i as f64;
            if let Some(v) = h0(&c, x, d) {
                if v < best_v {
                    best_w = x;
                    best_v = v;
                }
            }
        }
        let at_w = h0(&c, w, d).unwrap_or(f64::INFINITY);
        if (w - best_w).abs() > cell * (1.0 + 1e-9) && at_w > best_v * (1.0 + 1e-12) {
            argmin_bad += 1;
        }
    }
    // Monotone composed gradient.
    let mut mono_bad = 0;
    for _ in 0..C4_DRAWS / 5 {
        let c = draw_coeffs(&mut rng);
        let edge = c.d_bar1();
        let top = if c.g2 > 0.0 {
            (3.0 * c.d_bar3()).max(10.0 * edge)
        } else {
            100.0 * edge
        };
        let grads: Vec<f64> = (0..C4_D_GRID)
            .map(|i| {
                let t = (i as f64 + 1.0) / C4_D_GRID as f64;
                composed_gradient(&c, edge * (top / edge).powf(t)).expect("above the edge")
            })
            .collect();
        if grads.windows(2).any(|p| p[1] < p[0] - 1e-12 * p[0].abs()) {
            mono_bad += 1;
        }
    }
    // Root of the slope equation.
    let mut worst_root = 0.0f64;
    for _ in 0..C4_DRAWS / 5 {
        let mut c = draw_coeffs(&mut rng);
        let probe = draw_d(&mut rng, &c);
        c.d_cap = probe * rng.gen_range(1.5..20.0);
        let lambda = -composed_gradient(&c, probe).expect("above the edge");
        let root = d_of_lambda(&c, lambda).expect("interior root");
        let slope = dh0_dd(&c, optimal_omega_f(&c, root).unwrap(), root).unwrap();
        worst_root = worst_root.max((slope + lambda).abs() / lambda);
    }
    let pass = argmin_bad == 0 && mono_bad == 0 && worst_root <= C4_ROOT_TOL;
    (
        pass,
        format!(
            "argmin misses {argmin_bad}/{C4_DRAWS}, non-monotone gradients {mono_bad}/{}, worst root residual {worst_root:.2e}",
            C4_DRAWS / 5
        ),
    )
}

fn criterion5() -> Outcome {
    let mut worst_pair = 0.0f64;
    let mut worst_step = 0.0f64;
    let mut iuts_converged = 0;
    for seed in 0..C5_SEEDS {
        let inst = inst(seed, K, &[]);
        let sol = jcora::solve(&inst, EPS).expect("jcora");
        let (eta, b, cfg) = (sol.eta_star, sol.classification.set_b.clone(), &inst.config);
        let fog = |o: Option<recompress::FvOutcome>| o.expect("feasible at eta_star");
        let p9 = fog(pla_with(&inst.users, &pla_users(&inst.users, &b, cfg, eta, 9).unwrap(), cfg, eta).unwrap());
        let p17 = fog(pla_with(
            &inst.users,
            &pla_users(&inst.users, &b, cfg, eta, 17).unwrap(),
            cfg,
            eta,
        )
        .unwrap());
        let tsa = tsa_users(&inst.users, &b, cfg, eta).unwrap();
        let osts = fog(osts_with(&tsa, cfg, 5e-3, false).unwrap());
        let iuts = fog(iuts_with(&tsa, cfg, 200, 0.1).unwrap());
        iuts_converged += iuts.converged as usize;
        let totals = [p9.fog_total, p17.fog_total, osts.fog_total, iuts.fog_total];
        for i in 0..totals.len() {
            for j in i + 1..totals.len() {
                worst_pair = worst_pair.max(rel(totals[i], totals[j]));
            }
        }
        let coarse = fog(osts_with(&tsa, cfg, 0.1, false).unwrap());
        let fine = fog(osts_with(&tsa, cfg, 1e-3, false).unwrap());
        worst_step = worst_step.max(rel(coarse.fog_total, fine.fog_total));
    }
    let pass = worst_pair <= C5_PAIRWISE && worst_step <= C5_OSTS_STEP;
    (
        pass,
        format!(
            "{C5_SEEDS} K={K} instances, worst pairwise fog gap {:.2}%, OSTS 0.1 vs 1e-3 {:.2}%, IUTS converged {iuts_converged}/{C5_SEEDS}",
            worst_pair * 100.0,
            worst_step * 100.0
        ),
    )
}

fn reduction(seed: u64, b_in: &str) -> f64 {
    let inst = inst(seed, K, &[("b_in", b_in)]);
    let with = run_algo(&Algo::Jcora, &inst, EPS, 0.0, false).eta;
    let without = run_algo(&Algo::NoComp, &inst, EPS, 0.0, false).eta;
    (without - with) / without
}

fn criterion6() -> Outcome {
    let at_24: Vec<f64> = (0..C6_SEEDS).map(|s| reduction(s, "2.4e6")).collect();
    let m = mean(&at_24);
    let mut peak = (2.4e6, at_24.iter().cloned().fold(0.0, f64::max));
    for b_in in ["1.6e6", "3.2e6", "4e6", "4.8e6"] {
        for s in 0..C6_SEEDS / 2 {
            let r = reduction(s, b_in);
            if r > peak.1 {
                peak = (b_in.parse().unwrap(), r);
            }
        }
    }
    (
        m >= C6_MEAN_REDUCTION,
        format!(
            "mean reduction at 2.4 Mbit over {C6_SEEDS} seeds {:.1}%, peak over the b_in sweep {:.1}% at {:.1} Mbit",
            m * 100.0,
            peak.1 * 100.0,
            peak.0 / 1e6
        ),
    )
}

fn criterion7() -> Outcome {
    let mut interior = 0;
    let mut gaps = Vec::new();
    let seeds = 20;
    for seed in 0..seeds {
        let inst = inst(seed, K, &[]);
        let etas: Vec<f64> = fixed_omega_grid(&inst, 7)
            .iter()
            .map(|&w| run_algo(&Algo::FixedOmega(w), &inst, EPS, 0.0, false).eta)
            .collect();
        let (imin, best) = etas
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
        let worst = etas.iter().cloned().fold(0.0, f64::max);
        interior += (imin > 0 && imin + 1 < etas.len()) as usize;
        gaps.push((worst - best) / worst);
    }
    let share = interior as f64 / seeds as f64;
    (
        share >= C7_INTERIOR_SHARE,
        format!(
            "interior optimum on {interior}/{seeds} seeds, mean best-vs-worst gap {:.1}%",
            mean(&gaps) * 100.0
        ),
    )
}

fn criterion8() -> Outcome {
    let seeds = 20;
    let base: Vec<f64> = (0..seeds)
        .map(|s| run_algo(&Algo::Jcora, &inst(s, K, &[]), EPS, 0.0, false).eta)
        .collect();
    let mb = mean(&base);
    let mut pass = true;
    let mut parts = Vec::new();
    for algo in [
        ExtAlgorithm::PLA_DEFAULT,
        ExtAlgorithm::OSTS_DEFAULT,
        ExtAlgorithm::IUTS_DEFAULT,
    ] {
        let ext: Vec<f64> = (0..seeds)
            .map(|s| run_algo(&Algo::Ext(algo), &inst(s, K, &[]), EPS, 0.0, false).eta)
            .collect();
        let me = mean(&ext);
        pass &= me <= mb;
        parts.push(format!("{} {:.2}%", algo.name(), (mb - me) / mb * 100.0));
    }
    (
        pass,
        format!(
            "mean reduction vs JCORA at 4 Mbit over {seeds} seeds: {}",
            parts.join(", ")
        ),
    )
}

fn criterion9() -> Outcome {
    let seeds = 10;
    let gains: Vec<f64> = (0..seeds)
        .map(|s| {
            let inst = inst(s, K, &[("w_t", "0")]);
            let comp = run_algo(&Algo::Jcora, &inst, EPS, 0.0, false).eta;
            let nocomp = run_algo(&Algo::NoComp, &inst, EPS, 0.0, false).eta;
            (nocomp - comp) / comp
        })
        .collect();
    let ok = gains.iter().all(|g| g.is_finite());
    (
        ok,
        format!(
            "energy-only gain over {seeds} seeds: mean {:.0}%, min {:.0}%",
            mean(&gains) * 100.0,
            gains.iter().cloned().fold(f64::INFINITY, f64::min) * 100.0
        ),
    )
}

fn criterion10() -> Outcome {
    let mut bad = Vec::new();
    for (name, _) in SHIPPED_DATASETS {
        let samples = shipped_dataset(name).expect("dataset");
        let r = fogcomp::fit::fit_comparison_models(&samples).expect("fit");
        if r.rmse_power_law > r.rmse_linear || r.rmse_power_law > r.rmse_exponential {
            bad.push(name);
        }
    }
    (
        bad.is_empty(),
        format!(
            "power law best on {}/{} datasets {bad:?}",
            SHIPPED_DATASETS.len() - bad.len(),
            SHIPPED_DATASETS.len()
        ),
    )
}

fn criterion11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    let mut runs = 0;
    for seed in 0..4u64 {
        let inst = inst(300 + seed, 4, &[]);
        let cfg = &inst.config;
        let mut engines: Vec<(&str, Option<ExtAlgorithm>)> = vec![("jcora", None)];
        engines.push(("osts", Some(ExtAlgorithm::OSTS_DEFAULT)));
        engines.push(("iuts", Some(ExtAlgorithm::IUTS_DEFAULT)));
        if seed == 0 {
            engines.push(("pla", Some(ExtAlgorithm::Pla { segments: 9 })));
        }
        for (name, algo) in engines {
            runs += 1;
            let sol = match algo {
                None => jcora::solve(&inst, EPS).expect("jcora"),
                Some(a) => recompress::solve_ext(&inst, EPS, a).expect("ext"),
            };
            let tag = format!("{name}@seed{}", 300 + seed);
            if sol.eta_star - sol.lower_bound > EPS {
                failures.push(format!("{tag}: width"));
            }
            if !sol.violations(&inst).is_empty() || sol.max_cost(&inst) > sol.eta_star + EPS {
                failures.push(format!("{tag}: invalid"));
            }
            for _ in 0..C11_PROBES {
                let eta = sol.eta_star * (1.0 + rng.gen_range(1e-3..0.5));
                let b = jcora::classify(&inst.users, eta).set_b;
                let feasible = match algo {
                    None => jcora::verify_feasibility_b(&inst.users, &b, cfg, eta)
                        .expect("verify")
                        .is_some(),
                    Some(a) => recompress::solve_fv(&inst.users, &b, cfg, eta, a)
                        .expect("verify")
                        .is_some_and(|o| o.feasible),
                };
                if !feasible {
                    failures.push(format!("{tag}: infeasible at {eta:.4}"));
                }
            }
        }
    }
    (
        failures.is_empty(),
        format!("{runs} solves, width <= {EPS}, validated, {C11_PROBES} probes each; failures {failures:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
        (9, criterion9),
        (10, criterion10),
        (11, criterion11),
    ];
    let mut failed = 0;
    for (n, run) in criteria {
        let t = Instant::now();
        let (pass, detail) = run();
        failed += (!pass) as usize;
        println!(
            "{} criterion {n}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
