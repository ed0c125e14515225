//! Bootstrap tests on replicate influence matrices and global distributions.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use super::bootstrap::{
    chain, draw_with, ratio, BootstrapConfig, DecisionRule, Design, Moments, ReplicateDraw,
    ReplicateSet,
};
use crate::decomp::{InfluenceMatrix, ResponseGramians};
use crate::equilibrium::{periodicity_probe, solve_pi, SolveOptions};
use crate::error::{Error, Result};
use crate::var::{BoolMatrix, RestrictionPattern, STATIONARITY_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    Accept,
}

/// What a decision says about the variables involved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    Endogenous,
    Exogenous,
    SameClass,
    SeparateClasses,
    Influence,
    NoInfluence,
    Instantaneous,
    NoInstantaneous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub variables: Vec<String>,
    pub statistic: f64,
    pub mean: f64,
    pub rms: f64,
    pub critical_value: f64,
    pub decision: Decision,
    pub conclusion: Conclusion,
    pub null: String,
}

impl TestResult {
    #[allow(clippy::too_many_arguments)]
    fn decide(
        variables: Vec<String>,
        statistic: f64,
        moments: (f64, f64),
        critical_value: f64,
        null: String,
        on_reject: Conclusion,
        on_accept: Conclusion,
    ) -> Self {
        let reject = statistic >= critical_value;
        Self {
            variables,
            statistic,
            mean: moments.0,
            rms: moments.1,
            critical_value,
            decision: if reject { Decision::Reject } else { Decision::Accept },
            conclusion: if reject { on_reject } else { on_accept },
            null,
        }
    }

    pub fn rejected(&self) -> bool {
        self.decision == Decision::Reject
    }
}

/// Entry-wise statistics `z_ij = mean(omega_ij) / sd(omega_ij)` over the replicates.
#[derive(Debug, Clone)]
pub struct EdgeStatistics {
    pub names: Vec<String>,
    pub z: DMatrix<f64>,
    pub mean: DMatrix<f64>,
    pub rms: DMatrix<f64>,
}

impl EdgeStatistics {
    pub fn from_replicates(rs: &ReplicateSet) -> Self {
        let n = rs.n();
        let mut z = DMatrix::zeros(n, n);
        let mut mean = DMatrix::zeros(n, n);
        let mut rms = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let m = rs.omega_moments(i, j);
                mean[(i, j)] = m.mean;
                rms[(i, j)] = m.rms;
                if i != j {
                    z[(i, j)] = ratio(m.mean, m.sd);
                }
            }
        }
        Self {
            names: rs.names.clone(),
            z,
            mean,
            rms,
        }
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// Strongly connected components of the graph with an edge `i -> j` when `z_ij >= threshold`.
    ///
    /// Members are sorted and components ordered by their first member.
    pub fn components(&self, threshold: f64) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut g = DiGraph::<usize, ()>::with_capacity(n, n * n);
        let nodes: Vec<_> = (0..n).map(|a| g.add_node(a)).collect();
        for a in 0..n {
            for b in 0..n {
                if a != b && self.z[(a, b)] >= threshold {
                    g.add_edge(nodes[a], nodes[b], ());
                }
            }
        }
        let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut v: Vec<usize> = c.into_iter().map(|x| g[x]).collect();
                v.sort_unstable();
                v
            })
            .collect();
        comps.sort();
        comps
    }

    /// Largest `z_ab` with `a` in `from` and `b` in `to`.
    pub fn strongest(&self, from: &[usize], to: &[usize]) -> Option<(f64, usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for &a in from {
            for &b in to {
                if a != b && best.is_none_or(|(z, _, _)| self.z[(a, b)] > z) {
                    best = Some((self.z[(a, b)], a, b));
                }
            }
        }
        best
    }

    /// Max-min path closure of `z`, with the bottleneck entry of each best path.
    pub fn widest_paths(&self) -> (DMatrix<f64>, Vec<Vec<(usize, usize)>>) {
        let n = self.n();
        let mut w = self.z.clone();
        let mut arg: Vec<Vec<(usize, usize)>> = (0..n).map(|i| (0..n).map(|j| (i, j)).collect()).collect();
        for i in 0..n {
            w[(i, i)] = f64::NEG_INFINITY;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if i == j || i == k || j == k {
                        continue;
                    }
                    let via = w[(i, k)].min(w[(k, j)]);
                    if via > w[(i, j)] {
                        w[(i, j)] = via;
                        arg[i][j] = if w[(i, k)] <= w[(k, j)] { arg[i][k] } else { arg[k][j] };
                    }
                }
            }
        }
        (w, arg)
    }
}

fn names_of(rs: &ReplicateSet, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&k| rs.names[k].clone()).collect()
}

/// Runs the replicates for `design` and tests every variable for endogeneity.
pub fn test_endogeneity(design: Design<'_>, config: &BootstrapConfig) -> Result<Vec<TestResult>> {
    let rs = ReplicateSet::run(design, config, &stream_label("endogeneity", design))?;
    Ok(endogeneity_tests(&rs, config))
}

/// Endogeneity tests on existing replicates, one per variable.
pub fn endogeneity_tests(rs: &ReplicateSet, config: &BootstrapConfig) -> Vec<TestResult> {
    let n = rs.n();
    match config.decision_rule {
        DecisionRule::Paper => (0..n)
            .map(|i| {
                let m = rs.pi_moments(i);
                TestResult::decide(
                    vec![rs.names[i].clone()],
                    ratio(m.mean, m.rms),
                    (m.mean, m.rms),
                    config.critical_value(),
                    format!("pi({}) = 0", rs.names[i]),
                    Conclusion::Exogenous,
                    Conclusion::Endogenous,
                )
            })
            .collect(),
        DecisionRule::Conventional => {
            let edges = EdgeStatistics::from_replicates(rs);
            let comps = edges.components(config.critical_value());
            let crit = config.critical_value_max(n.saturating_sub(1));
            (0..n)
                .map(|i| {
                    let comp = comps.iter().find(|c| c.contains(&i)).expect("every node has a component");
                    let outside: Vec<usize> = (0..n).filter(|b| !comp.contains(b)).collect();
                    let (z, moments) = match edges.strongest(comp, &outside) {
                        Some((z, a, b)) => (z, (edges.mean[(a, b)], edges.rms[(a, b)])),
                        None => (0.0, (0.0, 0.0)),
                    };
                    TestResult::decide(
                        vec![rs.names[i].clone()],
                        z,
                        moments,
                        crit,
                        format!("the component of {} takes no influence from outside", rs.names[i]),
                        Conclusion::Endogenous,
                        Conclusion::Exogenous,
                    )
                })
                .collect()
        }
    }
}

fn start_at(n: usize, i: usize) -> SolveOptions {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    SolveOptions {
        start: Some(e),
        ..SolveOptions::default()
    }
}

/// Moments of `pi_j` over the replicates when the chain starts from variable `i`.
fn pi_from(rs: &ReplicateSet, i: usize, j: usize) -> Result<Moments> {
    let opts = start_at(rs.n(), i);
    let vals = rs
        .steps
        .iter()
        .map(|s| solve_pi(&s.omega, &opts).map(|p| p.pi.values[j]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Moments::of(vals))
}

/// Runs the replicates for `design` and tests whether `i` and `j` share a class.
pub fn test_class_separation(design: Design<'_>, i: &str, j: &str, config: &BootstrapConfig) -> Result<TestResult> {
    let a = design.panel.require_index(i)?;
    let b = design.panel.require_index(j)?;
    if a == b {
        return Err(Error::contract("class separation needs two distinct variables"));
    }
    let rs = ReplicateSet::run(design, config, &stream_label("separation", design))?;
    separation_test(&rs, None, a, b, config)
}

/// Separation test on existing replicates; `edges` is reused when given.
pub fn separation_test(
    rs: &ReplicateSet,
    edges: Option<&EdgeStatistics>,
    i: usize,
    j: usize,
    config: &BootstrapConfig,
) -> Result<TestResult> {
    if i == j {
        return Err(Error::contract("class separation needs two distinct variables"));
    }
    let vars = names_of(rs, &[i, j]);
    let null = format!("{} and {} lie in different classes", vars[0], vars[1]);
    match config.decision_rule {
        DecisionRule::Paper => {
            let m = pi_from(rs, i, j)?;
            Ok(TestResult::decide(
                vars,
                ratio(m.mean, m.rms),
                (m.mean, m.rms),
                config.critical_value(),
                null,
                Conclusion::SameClass,
                Conclusion::SeparateClasses,
            ))
        }
        DecisionRule::Conventional => {
            let owned;
            let edges = match edges {
                Some(e) => e,
                None => {
                    owned = EdgeStatistics::from_replicates(rs);
                    &owned
                }
            };
            let (w, arg) = edges.widest_paths();
            let (z, (a, b)) = if w[(i, j)] <= w[(j, i)] {
                (w[(i, j)], arg[i][j])
            } else {
                (w[(j, i)], arg[j][i])
            };
            Ok(TestResult::decide(
                vars,
                z,
                (edges.mean[(a, b)], edges.rms[(a, b)]),
                config.critical_value(),
                null,
                Conclusion::SameClass,
                Conclusion::SeparateClasses,
            ))
        }
    }
}

/// Whether the variables in `class` influence any of `targets`.
pub fn influence_test(
    rs: &ReplicateSet,
    edges: Option<&EdgeStatistics>,
    class: &[usize],
    targets: &[usize],
    config: &BootstrapConfig,
) -> Result<TestResult> {
    if class.is_empty() || targets.is_empty() {
        return Err(Error::contract("influence test needs a class and at least one target"));
    }
    let mut vars = names_of(rs, class);
    vars.extend(names_of(rs, targets));
    let null = format!(
        "no influence of {{{}}} on {{{}}}",
        names_of(rs, class).join(", "),
        names_of(rs, targets).join(", ")
    );
    let (z, moments) = match config.decision_rule {
        DecisionRule::Paper => {
            let mut best = (f64::NEG_INFINITY, (0.0, 0.0));
            for &c in class {
                for &t in targets {
                    let m = pi_from(rs, c, t)?;
                    let z = ratio(m.mean, m.rms);
                    if z > best.0 {
                        best = (z, (m.mean, m.rms));
                    }
                }
            }
            best
        }
        DecisionRule::Conventional => {
            let owned;
            let edges = match edges {
                Some(e) => e,
                None => {
                    owned = EdgeStatistics::from_replicates(rs);
                    &owned
                }
            };
            let (z, a, b) = edges.strongest(targets, class).expect("non-empty sets");
            (z, (edges.mean[(a, b)], edges.rms[(a, b)]))
        }
    };
    Ok(TestResult::decide(
        vars,
        z,
        moments,
        config.critical_value(),
        null,
        Conclusion::Influence,
        Conclusion::NoInfluence,
    ))
}

/// Majority period of a class over the replicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeriodicityVote {
    pub variables: Vec<String>,
    pub period: usize,
    pub votes: usize,
    pub replicates: usize,
}

/// Probes the renormalised class block of every replicate and takes the most common period.
///
/// Ties go to the shorter period.
pub fn periodicity_vote(rs: &ReplicateSet, class: &[usize]) -> Result<PeriodicityVote> {
    if class.is_empty() {
        return Err(Error::contract("empty class"));
    }
    let k = class.len();
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for s in &rs.steps {
        let mut block = DMatrix::from_fn(k, k, |a, b| s.omega.omega[(class[a], class[b])]);
        for a in 0..k {
            let total = block.row(a).sum();
            if !(total > 0.0) {
                return Err(Error::contract("class row has no mass inside its class"));
            }
            block.row_mut(a).unscale_mut(total);
        }
        let est = periodicity_probe(&InfluenceMatrix::from_matrix(block)?, 0, 4 * k.max(2))?;
        *counts.entry(est.period).or_default() += 1;
    }
    let (period, votes) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map_or((1, 0), |(p, v)| (*p, *v));
    Ok(PeriodicityVote {
        variables: names_of(rs, class),
        period,
        votes,
        replicates: rs.steps.len(),
    })
}

/// Tests whether the instantaneous effects in `mask` raise the global weight of variable `i`.
///
/// Each replicate panel is fitted twice, once as a plain VAR and once with the
/// free `A0` entries of `mask`; each model keeps its own chained ordering.
pub fn test_instantaneous(
    design: Design<'_>,
    mask: &BoolMatrix,
    i: &str,
    config: &BootstrapConfig,
) -> Result<TestResult> {
    config.validate()?;
    let idx = design.panel.require_index(i)?;
    let n = design.panel.n();
    let mut svar_pattern = design
        .pattern
        .cloned()
        .unwrap_or_else(|| RestrictionPattern::unrestricted(n));
    svar_pattern.instantaneous_mask = (mask.count_true() > 0).then(|| mask.clone());
    let svar_design = Design {
        pattern: Some(&svar_pattern),
        ..design
    };
    // validates the mask before any resampling
    svar_design.fit(&config.lag_spec)?;
    let base = design.fit(&config.lag_spec)?;
    if base.spectral_radius >= 1.0 - STATIONARITY_EPS {
        return Err(Error::NonStationary {
            radius: base.spectral_radius,
        });
    }
    let label = stream_label("instantaneous", design);
    let t = crate::rng::tag(&label);
    let draw = |d: Design<'_>| -> Result<ReplicateDraw> {
        let model = d.fit(&config.lag_spec)?;
        Ok(ReplicateDraw {
            gramians: ResponseGramians::at(&model, config.horizon, config.lyapunov)?,
            sigma: model.sigma,
        })
    };
    let pairs = draw_with(design, &base, config, t, |data| {
        let plain = draw(Design { panel: data, ..design })?;
        let structural = draw(Design {
            panel: data,
            ..svar_design
        })?;
        Ok((plain, structural))
    })?;
    let (plain, structural): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let a = chain(&plain, config.seed, t)?;
    let b = chain(&structural, config.seed, t)?;
    let deltas: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y.pi[idx] - x.pi[idx]).collect();
    let m = Moments::of(deltas);
    let scale = match config.decision_rule {
        DecisionRule::Paper => m.rms,
        DecisionRule::Conventional => m.sd,
    };
    Ok(TestResult::decide(
        vec![i.to_string()],
        ratio(m.mean, scale),
        (m.mean, m.rms),
        config.critical_value(),
        format!("instantaneous effects leave pi({i}) unchanged"),
        Conclusion::Instantaneous,
        Conclusion::NoInstantaneous,
    ))
}

/// Stream label for a stage run on a design; identical designs share streams.
pub fn stream_label(stage: &str, design: Design<'_>) -> String {
    let exo = design.exogenous.map(|x| x.names().join(",")).unwrap_or_default();
    format!("{stage}|{}|{exo}", design.panel.names().join(","))
}

/// Variables ordered by descending mean `pi`, ties by name.
pub fn pi_order(rs: &ReplicateSet) -> Vec<usize> {
    let pi = rs.pi_mean();
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.sort_by(|&a, &b| pi[b].total_cmp(&pi[a]).then_with(|| rs.names[a].cmp(&rs.names[b])));
    order
}
