mod common;

use statrs::distribution::{ContinuousCDF, Normal};

use wsopt_core::market::ReturnModel;
use wsopt_core::mortality::{hazard_sequence, HazardSequence, LifeTable};
use wsopt_core::policy::{interpolated_weight, Policy};
use wsopt_core::schedule::{build_dca_schedule, build_lump_sum_schedule, compute_thresholds, CashFlowSchedule};
use wsopt_core::simulate::{simulate_success_mortality, SimConfig};
use wsopt_core::solver::{
    backward_induction, backward_induction_mortality, candidate_value, iterated_grid_search,
    refine_weight, terminal_stage, SolverConfig, StageValues, SurfaceFile, ValueSurface,
};
use wsopt_core::Error;

fn cfg(m: usize) -> SolverConfig {
    SolverConfig::new(m).unwrap()
}

fn lump(c0: f64, k: usize, m: usize) -> (CashFlowSchedule, ValueSurface, wsopt_core::PolicySurface) {
    let s = build_lump_sum_schedule(c0, k).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.0).unwrap();
    let (v, p) = backward_induction(&s, &t, &ReturnModel::default(), &cfg(m)).unwrap();
    (s, v, p)
}

#[test]
fn terminal_stage_matches_normal_oracle() {
    let model = ReturnModel::default();
    let normal = Normal::new(model.mu, model.sigma).unwrap();
    let s = CashFlowSchedule::new(vec![1.0, -1.0]).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.02).unwrap();
    let (v, q) = terminal_stage(&t, &model, 40).unwrap();
    let w = t.get(0);
    for j in 0..v.values.len() {
        let x = v.node(j);
        if x >= w {
            assert_eq!(v.values[j], 1.0);
            assert_eq!(q.weights[j], 0.0);
        } else {
            let exact = normal.sf(w * 1.02 / x);
            assert!((v.values[j] - exact).abs() <= 1e-13 + 1e-9 * exact, "node {j}");
            assert_eq!(q.weights[j], 1.0);
        }
    }
}

#[test]
fn terminal_stage_deep_tail_value() {
    let model = ReturnModel::default();
    let s = CashFlowSchedule::new(vec![1.0, -1.0]).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.0).unwrap();
    let (v, _) = terminal_stage(&t, &model, 10).unwrap();
    assert_eq!(v.node(4), 0.5);
    let oracle = Normal::new(model.mu, model.sigma).unwrap().sf(2.0);
    assert!((v.values[4] - oracle).abs() < 1e-9 * oracle);
    // 30-digit reference: 8.42829265962017150e-8
    assert!((v.values[4] - 8.428_292_659_620_171_5e-8).abs() < 1e-21);
}

#[test]
fn terminal_stage_median_point() {
    // x = w (1 + r) / mu lands on the median of X
    let model = ReturnModel::default();
    let x = 1.0 / model.mu;
    assert!((common::terminal_closed_form(&model, 1.0, 0.0, x) - 0.5).abs() < 1e-15);
    let (_, v, _) = lump(x, 1, 300);
    let slope = model.pdf(model.mu) * model.mu * model.mu;
    assert!((v.v0_at_c0 - 0.5).abs() <= slope / 300.0);
}

#[test]
fn flat_objective_returns_smallest_weight() {
    let model = ReturnModel::default();
    let next = StageValues {
        index: 1,
        threshold: 4.0,
        resolution: 20,
        values: vec![1.0; 40],
    };
    // a = 1 - 2/q <= -1 for every q, far below the bulk of X
    let (q, v) = iterated_grid_search(1.0, &next, 1.0, 0.0, &model);
    assert_eq!(q, 0.01);
    assert_eq!(v, 1.0);
}

#[test]
fn unimodal_objective_peak_is_found() {
    for peak in [0.7345, 0.0123, 0.9999, 0.5] {
        let (q, _) = refine_weight(|q| q * (-q / peak).exp());
        assert!((q - peak).abs() <= 0.0001 + 1e-12, "peak {peak}: got {q}");
    }
}

#[test]
fn grid_search_matches_exhaustive_scan_next_to_last_stage() {
    let model = ReturnModel::default();
    let (_, v, _) = lump(2.0, 2, 100);
    let next = &v.stages[1];
    for x in [0.4, 1.1, 1.6, 1.95] {
        let (q, found) = iterated_grid_search(x, next, -1.0, 0.0, &model);
        let best = (1..=10_000)
            .map(|n| candidate_value(n as f64 / 10_000.0, x, next, -1.0, 0.0, &model))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best - found <= 1e-4, "x = {x}: q = {q}, {found} vs {best}");
        assert_eq!(found, candidate_value(q, x, next, -1.0, 0.0, &model));
    }
}

#[test]
fn value_surfaces_satisfy_invariants() {
    let (s, v, p) = lump(30.0, 50, 100);
    v.check_invariants(1e-9).unwrap();
    for (stage, pol) in v.stages.iter().zip(&p.stages) {
        for j in 0..stage.values.len() {
            let q = pol.weights[j];
            assert!((0.0..=1.0).contains(&q));
            if stage.node(j) >= stage.threshold {
                assert_eq!(q, 0.0);
            }
        }
    }
    // on-grid values never fall below holding only the bond for one step
    let flows = s.flows();
    for i in 0..v.horizon() - 1 {
        let (cur, next) = (&v.stages[i], &v.stages[i + 1]);
        for j in 0..cur.values.len() {
            let theta = cur.node(j) + flows[i + 1];
            let bond = if theta >= next.threshold {
                1.0
            } else {
                next.floor_index(theta).map_or(0.0, |y| next.values[y])
            };
            assert!(cur.values[j] >= bond, "stage {i} node {j}");
        }
    }
}

#[test]
fn lump_sum_20_with_25_withdrawals() {
    let (_, v, _) = lump(20.0, 25, 300);
    // about 95%: the minimal lump sum is within a unit of 20
    assert!(v.v0_at_c0 >= 0.945, "{}", v.v0_at_c0);
    assert!(v.value_at(0, 21.0) >= 0.95);
}

#[test]
fn grid_resolution_self_convergence() {
    let (_, coarse, _) = lump(30.0, 50, 50);
    let (_, fine, _) = lump(30.0, 50, 300);
    assert!((coarse.v0_at_c0 - fine.v0_at_c0).abs() <= 0.01);
}

#[test]
fn larger_volatility_lowers_value() {
    let s = build_lump_sum_schedule(30.0, 50).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.0).unwrap();
    let value = |sigma: f64| {
        let m = ReturnModel::new(1.083, sigma).unwrap();
        backward_induction(&s, &t, &m, &cfg(100)).unwrap().0.v0_at_c0
    };
    let (low, mid, high) = (value(0.1553), value(0.1753), value(0.1953));
    assert!(low > mid && mid > high, "{low} {mid} {high}");
}

#[test]
fn solves_are_identical_across_thread_counts() {
    let s = build_dca_schedule(1.2, 4, 10).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.0).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| backward_induction(&s, &t, &ReturnModel::default(), &cfg(60)).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn trivially_satisfiable_schedule_is_reported() {
    let s = CashFlowSchedule::new(vec![1.0, 5.0, -1.0]).unwrap();
    match compute_thresholds(&s, 0.0, 0.0) {
        Err(Error::TriviallySatisfiable { index, threshold }) => {
            assert_eq!(index, 0);
            assert_eq!(threshold, -4.0);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn mortality_with_zero_hazards_reduces_to_fixed_horizon() {
    let s = build_dca_schedule(0.8, 5, 9).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.0).unwrap();
    let m = ReturnModel::default();
    let h = HazardSequence::from_hazards(vec![0.0; s.horizon()]).unwrap();
    let (a, pa) = backward_induction(&s, &t, &m, &cfg(80)).unwrap();
    let (b, pb) = backward_induction_mortality(&s, &t, &m, &h, &cfg(80)).unwrap();
    for (x, y) in a.stages.iter().zip(&b.stages) {
        for (u, v) in x.values.iter().zip(&y.values) {
            assert!((u - v).abs() <= 1e-12);
        }
    }
    assert_eq!(pa, pb);
    assert_eq!(b.residual_survival, Some(1.0));
    assert_eq!(b.lower_bound, Some(b.v0_at_c0 - 1.0));
}

#[test]
fn certain_death_in_first_year_gives_indicator() {
    let s = build_lump_sum_schedule(3.0, 6).unwrap();
    let t = compute_thresholds(&s, 1.5, 0.0).unwrap();
    let mut p = vec![0.3; 6];
    p[0] = 1.0;
    let h = HazardSequence::from_hazards(p).unwrap();
    let (v, _) = backward_induction_mortality(&s, &t, &ReturnModel::default(), &h, &cfg(30)).unwrap();
    for c0 in [0.2, 1.0, 1.25, 1.5, 2.0, 6.0, 10.0] {
        let expected = if c0 >= 1.5 { 1.0 } else { 0.0 };
        assert_eq!(v.value_at(0, c0), expected, "c0 = {c0}");
    }
}

#[test]
fn mortality_value_dominates_fixed_horizon_value() {
    let table = LifeTable::bundled();
    let s = build_lump_sum_schedule(10.0, 15).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.0).unwrap();
    let h = HazardSequence::from_hazards(table.rates()[70..85].to_vec()).unwrap();
    let m = ReturnModel::default();
    let (plain, _) = backward_induction(&s, &t, &m, &cfg(100)).unwrap();
    let (mort, _) = backward_induction_mortality(&s, &t, &m, &h, &cfg(100)).unwrap();
    for (a, b) in plain.stages.iter().zip(&mort.stages) {
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!(v + 1e-12 >= *u);
        }
    }
    assert!(mort.v0_at_c0 > plain.v0_at_c0);
}

#[test]
fn mortality_from_age_60_with_30_units() {
    let table = LifeTable::bundled();
    let h = hazard_sequence(&table, 60).unwrap();
    let s = build_lump_sum_schedule(30.0, h.horizon()).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.0).unwrap();
    let m = ReturnModel::default();
    let (v, p) = backward_induction_mortality(&s, &t, &m, &h, &SolverConfig::default()).unwrap();
    assert!(v.v0_at_c0 >= 0.987, "{}", v.v0_at_c0);
    let residual = v.residual_survival.unwrap();
    assert!(residual > 0.0 && residual < 1e-5);
    assert!((v.lower_bound.unwrap() - (v.v0_at_c0 - residual)).abs() < 1e-15);

    let mc = simulate_success_mortality(&s, &Policy::Interpolated(p), &m, &h, &SimConfig::default()).unwrap();
    assert!((mc.estimate - v.v0_at_c0).abs() <= 3.0 * mc.stderr + 0.005);
}

#[test]
fn mortality_hazard_length_must_match() {
    let s = build_lump_sum_schedule(3.0, 6).unwrap();
    let t = compute_thresholds(&s, 0.0, 0.0).unwrap();
    let h = HazardSequence::from_hazards(vec![0.1; 5]).unwrap();
    assert!(matches!(
        backward_induction_mortality(&s, &t, &ReturnModel::default(), &h, &cfg(20)),
        Err(Error::Validation(_))
    ));
}

#[test]
fn surface_json_round_trip() {
    let (_, v, p) = lump(5.0, 6, 20);
    let file = SurfaceFile::from_surfaces(&v, &p);
    let text = file.to_json().unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["stages", "v0_at_c0"] {
        assert!(json.get(key).is_some());
    }
    assert!(json.get("lower_bound").is_none());
    let stage = &json["stages"][0];
    for key in ["i", "w", "grid", "v", "q"] {
        assert!(stage.get(key).is_some(), "missing {key}");
    }
    let back = SurfaceFile::from_json(&text).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.policy_surface(), p);
}

#[test]
fn surface_json_rejects_inconsistent_grid() {
    let (_, v, p) = lump(5.0, 6, 20);
    let mut file = SurfaceFile::from_surfaces(&v, &p);
    file.stages[2].grid[3] += 0.1;
    assert!(matches!(
        SurfaceFile::from_json(&file.to_json().unwrap()),
        Err(Error::Format(_))
    ));
}

#[test]
fn interpolated_policy_is_piecewise_linear_between_nodes() {
    let (_, _, p) = lump(8.0, 10, 30);
    let stage = &p.stages[3];
    let h = stage.threshold / stage.resolution as f64;
    for j in 0..stage.resolution - 2 {
        let (a, b) = (stage.node(j), stage.node(j + 1));
        let probe: Vec<f64> = (0..=8)
            .map(|t| interpolated_weight(&p, 3, a + (b - a) * t as f64 / 8.0).unwrap())
            .collect();
        for w in probe.windows(3) {
            assert!((w[0] - 2.0 * w[1] + w[2]).abs() < 1e-12, "cell {j}");
        }
    }
    // continuity across the first node, starting from weight 1 at zero
    let first = stage.node(0);
    let near = interpolated_weight(&p, 3, first - 1e-9 * h).unwrap();
    assert!((near - stage.weights[0]).abs() < 1e-6);
}
