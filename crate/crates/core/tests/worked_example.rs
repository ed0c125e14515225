use nalgebra::DMatrix;
use varcause::equilibrium::{class_distributions, EdgeTarget};
use varcause::{
    absorption, local_distribution, pi_sensitivity, solve_pi, solve_pi_quota, transient_block, CausalStructure,
    Horizon, InfluenceMatrix, SolveOptions,
};

fn omega() -> InfluenceMatrix {
    let t = 1.0 / 3.0;
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(6, 6, &[
        t, 2.0 * t, 0.0, 0.0, 0.0, 0.0,
        2.0 * t, t, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.25, 0.75, 0.0, 0.0,
        0.0, 0.0, 0.2, 0.8, 0.0, 0.0,
        0.25, 0.0, 0.25, 0.0, 0.25, 0.25,
        0.0, 1.0 / 6.0, 1.0 / 6.0, t, 1.0 / 6.0, 1.0 / 6.0,
    ]);
    InfluenceMatrix::from_matrix(m).unwrap()
}

fn structure() -> CausalStructure {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    CausalStructure::new(vec![s(&["y1", "y2"]), s(&["y3", "y4"])], s(&["y5", "y6"]))
}

fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < tol, "{got:?} vs {want:?}");
    }
}

#[test]
fn class_distributions_match() {
    let d = class_distributions(&omega(), &structure()).unwrap();
    assert_close(&d[0].pi.values, &[0.5, 0.5], 1e-12);
    assert_close(&d[1].pi.values, &[4.0 / 19.0, 15.0 / 19.0], 1e-12);
}

#[test]
fn quota_solution() {
    let p = solve_pi_quota(&omega(), &structure(), &[0.4, 0.6]).unwrap();
    assert_close(&p.pi.values, &[0.2, 0.2, 12.0 / 95.0, 9.0 / 19.0, 0.0, 0.0], 1e-12);
    assert!(p.residual < 1e-12);
}

#[test]
fn quota_edge_cases() {
    let p = solve_pi_quota(&omega(), &structure(), &[1.0, 0.0]).unwrap();
    assert_eq!(&p.pi.values[2..4], &[0.0, 0.0]);
    assert!(solve_pi_quota(&omega(), &structure(), &[0.5, 0.6]).is_err());
}

#[test]
fn transient_block_values() {
    let te = transient_block(&omega(), &structure()).unwrap();
    assert_close(te.matrix.as_slice(), &[0.25, 1.0 / 6.0, 0.25, 1.0 / 6.0], 1e-15);
    assert!(te.spectral_radius < 1.0);
    assert!(!te.misclassified);
    let mut p = te.matrix.clone();
    for _ in 0..8 {
        p = &p * &p;
    }
    assert!(p.amax() < 1e-12);
}

#[test]
fn absorption_values() {
    let a1 = absorption(&omega(), &structure(), 0, Horizon::Limit).unwrap();
    let a2 = absorption(&omega(), &structure(), 1, Horizon::Limit).unwrap();
    assert_close(&a1.mu.values, &[3.0 / 7.0, 2.0 / 7.0], 1e-12);
    assert_close(&a2.mu.values, &[4.0 / 7.0, 5.0 / 7.0], 1e-12);
    for k in 0..2 {
        assert!((a1.mu.values[k] + a2.mu.values[k] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn finite_absorption_matches_power_sums() {
    let o = omega();
    let a = absorption(&o, &structure(), 1, Horizon::Finite(7)).unwrap();
    let mut p = DMatrix::identity(6, 6);
    for _ in 0..7 {
        p = &p * &o.omega;
    }
    assert!((a.mu.values[0] - (p[(4, 2)] + p[(4, 3)])).abs() < 1e-14);
    assert!((a.mu.values[1] - (p[(5, 2)] + p[(5, 3)])).abs() < 1e-14);
}

#[test]
fn local_distributions() {
    let l5 = local_distribution(&omega(), &structure(), "y5", Horizon::Limit).unwrap();
    let l6 = local_distribution(&omega(), &structure(), "y6", Horizon::Limit).unwrap();
    let scale = |v: [f64; 4]| v.map(|x| x / 266.0);
    assert_close(&l5.shares.values, &scale([57.0, 57.0, 32.0, 120.0]), 1e-12);
    assert_close(&l6.shares.values, &scale([38.0, 38.0, 40.0, 150.0]), 1e-12);
    assert!((l5.total() - 1.0).abs() < 1e-12);
    assert!(local_distribution(&omega(), &structure(), "y1", Horizon::Limit).is_err());
}

#[test]
fn local_distribution_matches_matrix_powers() {
    let o = omega();
    let mut p = o.omega.clone();
    for _ in 0..500 {
        p = &p * &o.omega;
    }
    let l5 = local_distribution(&o, &structure(), "y5", Horizon::Limit).unwrap();
    assert_close(&l5.shares.values, &[p[(4, 0)], p[(4, 1)], p[(4, 2)], p[(4, 3)]], 1e-12);
}

#[test]
fn finite_local_distribution_sums_to_one() {
    for h in [1, 5, 120] {
        let l = local_distribution(&omega(), &structure(), "y6", Horizon::Finite(h)).unwrap();
        assert!((l.total() - 1.0).abs() < 1e-12, "h={h}: {}", l.total());
    }
}

#[test]
fn structure_read_off_the_graph() {
    let s = CausalStructure::from_influence(&omega(), 0.0);
    assert_eq!(s.classes, structure().classes);
    assert_eq!(s.transient, structure().transient);
    assert!(s.class_edges.iter().all(|e| e.to == EdgeTarget::Transient));
}

#[test]
fn sensitivity_matches_row_renormalising_difference() {
    let t = 1.0 / 3.0;
    let base = DMatrix::from_row_slice(2, 2, &[t, 2.0 * t, 2.0 * t, t]);
    let om = InfluenceMatrix::from_matrix(base.clone()).unwrap();
    let (i, j) = (0, 1);
    let analytic = pi_sensitivity(&om, i, j).unwrap();
    let perturbed = |delta: f64| {
        let mut m = base.clone();
        m[(j, i)] += delta;
        let s = 1.0 + delta;
        m.row_mut(j).unscale_mut(s);
        let moved = m[(j, i)] - base[(j, i)];
        let pi = solve_pi(&InfluenceMatrix::from_matrix(m).unwrap(), &SolveOptions::default())
            .unwrap()
            .values();
        (pi, moved)
    };
    let step = 1e-6;
    let (up, du) = perturbed(step);
    let (down, dd) = perturbed(-step);
    let fd = (up - down) / (du - dd);
    assert!((fd - analytic.full()).amax() < 1e-4);
    assert!(analytic.d_pi_i >= 0.0);
}

#[test]
fn global_pi_on_reducible_matrix_is_flagged() {
    let p = solve_pi(&omega(), &SolveOptions::default()).unwrap();
    assert!(!p.unique);
    assert!((p.pi.sum() - 1.0).abs() < 1e-10);
    assert!(p.pi.values[4] < 1e-10 && p.pi.values[5] < 1e-10);
}
