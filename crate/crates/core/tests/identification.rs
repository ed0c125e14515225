use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use varcause::identification::{
    discover_classes, eliminate_endogenous, identify, refine_endogeneity_substructure, test_class_separation,
    test_endogeneity, test_instantaneous, BootstrapConfig, Conclusion, Decision, DecisionRule, Design,
};
use varcause::simgen::{generate, generator_lags, StructureTemplate, TemplateId};
use varcause::var::BoolMatrix;
use varcause::{CausalStructure, Error, LagSpec, TimeIndex, TimeSeriesPanel};

/// `y_t = a y_{t-1} + b0^{-1} e_t` with standard normal shocks, after a burn-in.
fn simulate(a: &DMatrix<f64>, impact: Option<&DMatrix<f64>>, len: usize, seed: u64) -> TimeSeriesPanel {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = DVector::zeros(n);
    let mut out = DMatrix::zeros(n, len);
    for t in 0..len + 200 {
        let e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let e = impact.map_or(e.clone(), |m| m * e);
        y = a * y + e;
        if t >= 200 {
            out.set_column(t - 200, &y);
        }
    }
    let names = (1..=n).map(|i| format!("y{i}")).collect();
    TimeSeriesPanel::new(names, out, TimeIndex::sequential(len)).unwrap()
}

fn config(replicates: usize, seed: u64) -> BootstrapConfig {
    let mut c = BootstrapConfig::new(LagSpec::contiguous(1).unwrap());
    c.replicates = replicates;
    c.seed = seed;
    c
}

fn endogenous_names(tests: &[varcause::identification::TestResult]) -> Vec<String> {
    tests
        .iter()
        .filter(|t| t.conclusion == Conclusion::Endogenous)
        .map(|t| t.variables[0].clone())
        .collect()
}

#[test]
fn decision_matches_critical_value() {
    let panel = simulate(&DMatrix::from_diagonal_element(3, 3, 0.5), None, 100, 1);
    for rule in [DecisionRule::Paper, DecisionRule::Conventional] {
        let mut c = config(100, 2);
        c.decision_rule = rule;
        for t in test_endogeneity(Design::plain(&panel), &c).unwrap() {
            assert_eq!(t.decision == Decision::Reject, t.statistic >= t.critical_value);
        }
    }
}

#[test]
fn white_noise_trio_has_no_endogenous_variable() {
    let a = DMatrix::zeros(3, 3);
    let clean = (0..40)
        .filter(|&s| {
            let panel = simulate(&a, None, 100, 100 + s);
            endogenous_names(&test_endogeneity(Design::plain(&panel), &config(100, s)).unwrap()).is_empty()
        })
        .count();
    assert!(clean >= 36, "{clean} of 40 clean");
}

#[test]
fn single_replicate_still_returns_statistics() {
    let panel = simulate(&DMatrix::from_diagonal_element(2, 2, 0.3), None, 100, 3);
    let tests = test_endogeneity(Design::plain(&panel), &config(1, 0)).unwrap();
    assert_eq!(tests.len(), 2);
    assert!(tests.iter().all(|t| t.statistic.is_finite()));
}

#[test]
fn classification_transient_variables_are_flagged() {
    let template = StructureTemplate::new(TemplateId::Classification);
    let mut c = BootstrapConfig::new(generator_lags());
    c.replicates = 100;
    let mut hits = 0;
    for seed in 0..10 {
        let g = generate(&template, 100, seed).unwrap();
        c.seed = seed;
        if let Ok(tests) = test_endogeneity(Design::plain(&g.panel), &c) {
            let mut flagged = endogenous_names(&tests);
            flagged.sort();
            hits += usize::from(flagged == ["y5", "y6"]);
        }
    }
    assert!(hits > 5, "{hits} of 10");
}

#[test]
fn single_variable_panel_is_its_own_class() {
    let panel = simulate(&DMatrix::from_element(1, 1, 0.5), None, 100, 4);
    let e = eliminate_endogenous(&panel, None, &config(100, 0)).unwrap();
    assert!(e.transient.is_empty());
    assert!(e.rounds.is_empty());
    let r = identify(&panel, &config(100, 0)).unwrap();
    assert_eq!(r.structure.classes, vec![vec!["y1".to_string()]]);
}

#[test]
fn independent_trio_leaves_transient_empty() {
    let panel = simulate(&DMatrix::from_diagonal_element(3, 3, 0.4), None, 100, 5);
    let e = eliminate_endogenous(&panel, None, &config(100, 1)).unwrap();
    assert!(e.transient.is_empty());
}

#[test]
fn mean_over_rms_rule_flags_everything_and_contradicts() {
    // mean over rms never exceeds one, below any one-sided critical value under 0.16
    let panel = simulate(&DMatrix::from_diagonal_element(3, 3, 0.4), None, 100, 6);
    let mut c = config(100, 1);
    c.decision_rule = DecisionRule::Paper;
    let tests = test_endogeneity(Design::plain(&panel), &c).unwrap();
    assert!(tests.iter().all(|t| t.statistic <= 1.0 + 1e-12));
    assert!(matches!(eliminate_endogenous(&panel, None, &c), Err(Error::Contradiction(_))));
}

#[test]
fn same_variable_pair_is_a_contract_error() {
    let panel = simulate(&DMatrix::from_diagonal_element(2, 2, 0.4), None, 100, 7);
    let err = test_class_separation(Design::plain(&panel), "y1", "y1", &config(100, 0)).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn separate_blocks_accept_separation() {
    let a = DMatrix::from_row_slice(4, 4, &[
        0.5, 0.4, 0.0, 0.0, //
        0.4, 0.5, 0.0, 0.0, //
        0.0, 0.0, 0.5, -0.4, //
        0.0, 0.0, 0.4, 0.5,
    ]);
    let separate = (0..10)
        .filter(|&s| {
            let panel = simulate(&a, None, 100, 200 + s);
            let t = test_class_separation(Design::plain(&panel), "y1", "y3", &config(100, s)).unwrap();
            t.conclusion == Conclusion::SeparateClasses
        })
        .count();
    assert!(separate > 5, "{separate} of 10");
}

#[test]
fn coupled_pair_rejects_separation() {
    let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.5, -0.5, 0.4]);
    let joined = (0..20)
        .filter(|&s| {
            let panel = simulate(&a, None, 100, 300 + s);
            test_class_separation(Design::plain(&panel), "y1", "y2", &config(100, s))
                .unwrap()
                .rejected()
        })
        .count();
    assert!(joined >= 18, "{joined} of 20");
}

#[test]
fn block_diagonal_data_gives_two_classes() {
    let a = DMatrix::from_row_slice(4, 4, &[
        0.4, 0.5, 0.0, 0.0, //
        -0.5, 0.4, 0.0, 0.0, //
        0.0, 0.0, 0.4, 0.5, //
        0.0, 0.0, -0.5, 0.4,
    ]);
    let good = (0..10)
        .filter(|&s| {
            let panel = simulate(&a, None, 100, 400 + s);
            let r = discover_classes(&panel, None, &config(100, s)).unwrap();
            r.structure.classes.len() == 2 && r.structure.transient.is_empty()
        })
        .count();
    assert!(good > 5, "{good} of 10");
}

#[test]
fn circular_core_is_one_class() {
    let template = StructureTemplate::new(TemplateId::Circular);
    let mut c = BootstrapConfig::new(generator_lags());
    c.replicates = 100;
    let cycle = &template.truth.classes[0];
    let mut hits = 0;
    for seed in 0..5 {
        let g = generate(&template, 100, seed).unwrap();
        c.seed = seed;
        if let Ok(r) = identify(&g.panel, &c) {
            hits += usize::from(r.structure.classes.contains(cycle));
        }
    }
    assert!(hits >= 3, "{hits} of 5");
}

#[test]
fn refine_is_a_no_op_without_a_splittable_transient_set() {
    let panel = simulate(&DMatrix::from_diagonal_element(3, 3, 0.4), None, 100, 8);
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    for s in [
        CausalStructure::new(vec![names(&["y1"]), names(&["y2"]), names(&["y3"])], vec![]),
        CausalStructure::new(vec![names(&["y1"]), names(&["y2"])], names(&["y3"])),
    ] {
        let (out, reports) = refine_endogeneity_substructure(&panel, &s, &[], &config(100, 0)).unwrap();
        assert_eq!(out, s);
        assert!(reports.is_empty());
    }
}

#[test]
fn subexogeneity_inner_class_is_found() {
    let template = StructureTemplate::new(TemplateId::Subexogeneity);
    let inner = template.truth.substructure.as_ref().unwrap().classes[0].clone();
    let mut c = BootstrapConfig::new(generator_lags());
    c.replicates = 100;
    let mut hits = 0;
    for seed in 0..10 {
        let g = generate(&template, 100, seed).unwrap();
        c.seed = seed;
        if let Ok(r) = identify(&g.panel, &c) {
            hits += usize::from(r.structure.substructure.is_some_and(|s| s.classes.contains(&inner)));
        }
    }
    assert!(hits > 5, "{hits} of 10");
}

#[test]
fn empty_instantaneous_mask_changes_nothing() {
    let panel = simulate(&DMatrix::from_diagonal_element(2, 2, 0.4), None, 100, 9);
    for rule in [DecisionRule::Paper, DecisionRule::Conventional] {
        let mut c = config(100, 3);
        c.decision_rule = rule;
        let t = test_instantaneous(Design::plain(&panel), &BoolMatrix::filled(2, false), "y1", &c).unwrap();
        assert_eq!(t.mean, 0.0);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.decision, Decision::Accept);
    }
}

#[test]
fn strong_instantaneous_link_is_detected() {
    // y1 loads contemporaneously on y2's shock; ordering y2 first lets A0 move weight onto y1
    let a = DMatrix::from_diagonal_element(2, 2, 0.3);
    let impact = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.0, 1.0]);
    let mut mask = BoolMatrix::filled(2, false);
    mask.set(1, 0, true);
    let hits = (0..10)
        .filter(|&s| {
            let panel = simulate(&a, Some(&impact), 100, 500 + s);
            test_instantaneous(Design::plain(&panel), &mask, "y1", &config(100, s))
                .unwrap()
                .rejected()
        })
        .count();
    assert!(hits > 5, "{hits} of 10");
}

#[test]
fn instantaneous_test_is_deterministic() {
    let panel = simulate(&DMatrix::from_diagonal_element(2, 2, 0.3), None, 100, 10);
    let mut mask = BoolMatrix::filled(2, false);
    mask.set(0, 1, true);
    let a = test_instantaneous(Design::plain(&panel), &mask, "y2", &config(100, 4)).unwrap();
    let b = test_instantaneous(Design::plain(&panel), &mask, "y2", &config(100, 4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn truly_endogenous_variable_is_rarely_called_exogenous() {
    // two exogenous series drive a third
    let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.6, 0.0, 0.3]);
    let seeds = 200;
    let missed = (0..seeds)
        .filter(|&s| {
            let panel = simulate(&a, None, 100, 1000 + s);
            let tests = test_endogeneity(Design::plain(&panel), &config(100, s)).unwrap();
            tests[2].conclusion == Conclusion::Exogenous
        })
        .count();
    let rate = missed as f64 / seeds as f64;
    assert!(rate <= 0.15, "rate {rate}");
}

#[test]
fn identification_is_deterministic_across_thread_counts() {
    let template = StructureTemplate::new(TemplateId::Hierarchy);
    let g = generate(&template, 100, 3).unwrap();
    let mut c = BootstrapConfig::new(generator_lags());
    c.replicates = 100;
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&identify(&g.panel, &c).unwrap()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn statistics_survive_affine_rescaling() {
    let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.3, 0.4, 0.0, 0.0, 0.4, 0.3]);
    let panel = simulate(&a, None, 100, 11);
    let mut v = panel.values().clone();
    v.row_mut(1).apply(|x| *x = -250.0 * *x + 17.0);
    v.row_mut(2).apply(|x| *x = 0.01 * *x - 3.0);
    let scaled = panel.with_values(v).unwrap();
    let c = config(100, 5);
    let x = test_endogeneity(Design::plain(&panel), &c).unwrap();
    let y = test_endogeneity(Design::plain(&scaled), &c).unwrap();
    for (p, q) in x.iter().zip(&y) {
        assert!((p.statistic - q.statistic).abs() < 1e-6 * p.statistic.abs().max(1.0));
        assert_eq!(p.decision, q.decision);
    }
}
