use fogcomp::bench::generate_instance;
use fogcomp::jcora::{self, eta_local, min_fog_split, stage_one, verify_feasibility_b};
use fogcomp::model::{Instance, Mode, FEAS_TOL};

const EPS: f64 = 1e-3;

fn inst(seed: u64, k: usize, ov: &[(&str, &str)]) -> Instance {
    let ov: Vec<(String, String)> = ov.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    generate_instance(seed, k, &ov).unwrap()
}

#[test]
fn verdict_matches_mode_enumeration() {
    for seed in 0..4 {
        let inst = inst(seed, 3, &[]);
        let cfg = &inst.config;
        let star = jcora::solve(&inst, EPS).unwrap().eta_star;
        let all = [0, 1, 2];
        for scale in [0.9, 0.98, 1.0, 1.03, 1.3] {
            let eta = star * scale;
            let stage = stage_one(&inst.users, &all, cfg, eta).unwrap();
            let mut best = f64::INFINITY;
            for mask in 0u32..8 {
                let (mut fog, mut bh) = (0.0, 0.0);
                let mut ok = true;
                for (i, s) in stage.iter().enumerate() {
                    let r = if mask >> i & 1 == 1 { s.cloud } else { s.fog };
                    match r {
                        Some(r) if mask >> i & 1 == 1 => bh += r.resource,
                        Some(r) => fog += r.resource,
                        None => ok = false,
                    }
                }
                if ok && bh <= cfg.d_max && fog <= cfg.f_fog_max * (1.0 + FEAS_TOL) {
                    best = best.min(fog);
                }
            }
            let v = verify_feasibility_b(&inst.users, &all, cfg, eta).unwrap();
            assert_eq!(v.is_some(), best.is_finite(), "seed {seed} scale {scale}");
            if let Some(v) = v {
                assert!(
                    (v.fog_total - best).abs() <= 1e-9 * best.max(1.0),
                    "seed {seed}: {} vs {best}",
                    v.fog_total
                );
                assert!(v.backhaul_total <= cfg.d_max);
            }
        }
    }
}

#[test]
fn dropping_an_offloader_never_raises_fog_demand() {
    for seed in 0..4 {
        let inst = inst(10 + seed, 5, &[]);
        let cfg = &inst.config;
        let eta = 1.05 * jcora::solve(&inst, EPS).unwrap().eta_star;
        let b = jcora::classify(&inst.users, eta).set_b;
        let stage = stage_one(&inst.users, &b, cfg, eta).unwrap();
        let (full, _) = min_fog_split(&stage, cfg).unwrap();
        for i in 0..stage.len() {
            let mut fewer = stage.clone();
            fewer.remove(i);
            let (f, _) = min_fog_split(&fewer, cfg).unwrap();
            assert!(f <= full * (1.0 + 1e-12), "seed {seed} drop {i}: {f} > {full}");
        }
    }
}

#[test]
fn eta_star_non_increasing_in_capacities() {
    for seed in 0..3 {
        let mut prev = f64::INFINITY;
        for f in ["8e9", "15e9", "25e9"] {
            let s = jcora::solve(&inst(seed, 4, &[("f_fog_max", f)]), EPS).unwrap().eta_star;
            assert!(s <= prev + EPS, "seed {seed} F {f}: {s} > {prev}");
            prev = s;
        }
        let mut prev = f64::INFINITY;
        for d in ["5e6", "20e6", "40e6"] {
            let s = jcora::solve(&inst(seed, 4, &[("d_max", d)]), EPS).unwrap().eta_star;
            assert!(s <= prev + EPS, "seed {seed} D {d}: {s} > {prev}");
            prev = s;
        }
    }
}

#[test]
fn solution_invariants() {
    for (seed, k) in [(20, 1), (21, 3), (22, 6), (23, 8)] {
        let inst = inst(seed, k, &[]);
        let sol = jcora::solve(&inst, EPS).unwrap();
        assert!(sol.max_cost(&inst) <= sol.eta_star + EPS);
        assert!(sol.eta_star - sol.lower_bound <= EPS);
        assert!(sol.fog_total <= inst.config.f_fog_max * (1.0 + FEAS_TOL));
        assert!(sol.backhaul_total <= inst.config.d_max * (1.0 + FEAS_TOL));
        assert!(sol.violations(&inst).is_empty(), "{:?}", sol.violations(&inst));
        for (k, (d, u)) in sol.decisions.iter().zip(&inst.users).enumerate() {
            let in_a = eta_local(u) <= sol.eta_star;
            assert_eq!(in_a, sol.classification.set_a.contains(&k));
            assert_eq!(in_a, d.mode == Mode::Local);
            assert_ne!(d.mode, Mode::CloudRecompressed);
        }
        let counts = sol.mode_counts();
        assert_eq!(counts.iter().sum::<usize>(), k);
    }
}

#[test]
fn offloading_disabled_gives_local_cost() {
    let inst = inst(3, 1, &[("rho_max", "0")]);
    let sol = jcora::solve(&inst, 1e-5).unwrap();
    let lo = eta_local(&inst.users[0]);
    assert!((sol.eta_star - lo).abs() <= 1e-5, "{} vs {lo}", sol.eta_star);
}

#[test]
fn starved_peers_give_max_local_cost() {
    let inst = inst(4, 4, &[("f_fog_max", "1e3"), ("d_max", "1"), ("b_in", "4e8")]);
    let sol = jcora::solve(&inst, 1e-5).unwrap();
    let worst = inst.users.iter().map(eta_local).fold(0.0, f64::max);
    assert!((sol.eta_star - worst).abs() <= 1e-5, "{} vs {worst}", sol.eta_star);
    assert!(sol.classification.set_b.is_empty());
}

#[test]
fn empty_and_hopeless_offloading_sets() {
    let inst = inst(5, 2, &[]);
    let v = verify_feasibility_b(&inst.users, &[], &inst.config, 0.1)
        .unwrap()
        .unwrap();
    assert_eq!(v.fog_total, 0.0);
    assert!(v.decisions.is_empty());
    // Far below any achievable cost no stage-1 problem is feasible.
    assert!(verify_feasibility_b(&inst.users, &[0], &inst.config, 1e-6)
        .unwrap()
        .is_none());
}

#[test]
fn impossible_instance_names_the_users() {
    let inst = inst(6, 3, &[("t_max", "0.05")]);
    let err = jcora::solve(&inst, EPS).unwrap_err();
    let text = err.to_string();
    assert!(matches!(err, fogcomp::Error::Infeasible(_)));
    assert!(text.contains('0') && text.contains('2'), "{text}");
}
