//! Elimination, class discovery and the recursive search inside the transient set.

use serde::Serialize;

use super::bootstrap::{BootstrapConfig, DecisionRule, Design, ReplicateSet};
use super::hypothesis::{
    endogeneity_tests, influence_test, periodicity_vote, pi_order, separation_test, stream_label, Conclusion,
    EdgeStatistics, PeriodicityVote, TestResult,
};
use crate::equilibrium::{CausalStructure, ClassEdge, EdgeTarget};
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, Serialize)]
pub struct EliminationRound {
    pub variables: Vec<String>,
    pub tests: Vec<TestResult>,
    pub dropped: Vec<String>,
}

/// Outcome of the elimination loop.
#[derive(Debug, Clone, Serialize)]
pub struct Elimination {
    /// Dropped variables, in the order they went.
    pub transient: Vec<String>,
    /// Variables left when no test flags anything.
    pub pool: Vec<String>,
    pub rounds: Vec<EliminationRound>,
    /// Replicates of the first round, over every variable.
    #[serde(skip)]
    pub first: Option<ReplicateSet>,
    /// Replicates of the last round, over the pool.
    #[serde(skip)]
    pub last: Option<ReplicateSet>,
}

/// Drops endogenous variables and re-tests the reduced panel until nothing is flagged.
///
/// Under [`DecisionRule::Paper`] one variable goes per round, the flagged one with the
/// smallest statistic. Under [`DecisionRule::Conventional`] every flagged variable goes
/// at once, strongest first in the record. A round that flags every variable
/// is a contradiction.
pub fn eliminate_endogenous(
    panel: &TimeSeriesPanel,
    exogenous: Option<&TimeSeriesPanel>,
    config: &BootstrapConfig,
) -> Result<Elimination> {
    config.validate()?;
    let mut vars: Vec<String> = panel.names().to_vec();
    let mut rounds = Vec::new();
    let mut transient = Vec::new();
    let mut first = None;
    let mut last = None;
    while vars.len() > 1 {
        let sub = panel.select(&vars)?;
        let design = Design {
            panel: &sub,
            exogenous,
            pattern: None,
        };
        let rs = ReplicateSet::run(design, config, &stream_label("endogeneity", design))?;
        let tests = endogeneity_tests(&rs, config);
        let flagged: Vec<&TestResult> = tests
            .iter()
            .filter(|t| t.conclusion == Conclusion::Endogenous)
            .collect();
        if flagged.len() == vars.len() {
            return Err(Error::Contradiction(format!(
                "every variable of {{{}}} tests endogenous",
                vars.join(", ")
            )));
        }
        let mut flagged = flagged;
        flagged.sort_by(|a, b| {
            b.statistic
                .total_cmp(&a.statistic)
                .then_with(|| a.variables[0].cmp(&b.variables[0]))
        });
        let dropped: Vec<String> = match config.decision_rule {
            DecisionRule::Paper => flagged
                .iter()
                .min_by(|a, b| {
                    a.statistic
                        .total_cmp(&b.statistic)
                        .then_with(|| a.variables[0].cmp(&b.variables[0]))
                })
                .map(|t| t.variables[0].clone())
                .into_iter()
                .collect(),
            DecisionRule::Conventional => flagged.iter().map(|t| t.variables[0].clone()).collect(),
        };
        if first.is_none() {
            first = Some(rs.clone());
        }
        rounds.push(EliminationRound {
            variables: vars.clone(),
            tests,
            dropped: dropped.clone(),
        });
        if dropped.is_empty() {
            last = Some(rs);
            break;
        }
        vars.retain(|x| !dropped.contains(x));
        transient.extend(dropped);
    }
    Ok(Elimination {
        transient,
        pool: vars,
        rounds,
        first,
        last,
    })
}

/// One level of the search: elimination, pairwise class tests and class edges.
#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub variables: Vec<String>,
    pub exogenous: Vec<String>,
    pub elimination: Elimination,
    pub separation_tests: Vec<TestResult>,
    pub influence_tests: Vec<TestResult>,
    pub periodicity: Vec<PeriodicityVote>,
    pub warnings: Vec<String>,
    pub structure: CausalStructure,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, a: usize) -> usize {
        let p = self.0[a];
        if p == a {
            return a;
        }
        let r = self.find(p);
        self.0[a] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Eliminates endogenous variables, groups the rest into classes and links classes to the transient set.
pub fn discover_classes(
    panel: &TimeSeriesPanel,
    exogenous: Option<&TimeSeriesPanel>,
    config: &BootstrapConfig,
) -> Result<LevelReport> {
    let elimination = eliminate_endogenous(panel, exogenous, config)?;
    let mut warnings = Vec::new();
    let mut separation_tests = Vec::new();
    let mut periodicity = Vec::new();

    let classes: Vec<Vec<String>> = match &elimination.last {
        Some(rs) => {
            let edges = (config.decision_rule == DecisionRule::Conventional).then(|| EdgeStatistics::from_replicates(rs));
            let order = pi_order(rs);
            let mut uf = UnionFind((0..rs.n()).collect());
            let mut separate = Vec::new();
            for (x, &a) in order.iter().enumerate() {
                for &b in &order[x + 1..] {
                    if uf.find(a) == uf.find(b) {
                        continue;
                    }
                    let t = separation_test(rs, edges.as_ref(), a, b, config)?;
                    if t.conclusion == Conclusion::SameClass {
                        uf.union(a, b);
                    } else {
                        separate.push((a, b));
                    }
                    separation_tests.push(t);
                }
            }
            for (a, b) in separate {
                if uf.find(a) == uf.find(b) {
                    warnings.push(format!(
                        "{} and {} tested as separate classes but were joined through other pairs",
                        rs.names[a], rs.names[b]
                    ));
                }
            }
            let mut roots: Vec<usize> = Vec::new();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for a in 0..rs.n() {
                let r = uf.find(a);
                match roots.iter().position(|&x| x == r) {
                    Some(k) => groups[k].push(a),
                    None => {
                        roots.push(r);
                        groups.push(vec![a]);
                    }
                }
            }
            for g in groups.iter().filter(|g| g.len() > 1) {
                periodicity.push(periodicity_vote(rs, g)?);
            }
            groups
                .into_iter()
                .map(|g| g.into_iter().map(|k| rs.names[k].clone()).collect())
                .collect()
        }
        None => elimination.pool.iter().map(|v| vec![v.clone()]).collect(),
    };

    let order = |v: &String| panel.index_of(v).expect("pool variables come from the panel");
    let mut classes = classes;
    for c in &mut classes {
        c.sort_by_key(order);
    }
    classes.sort_by_key(|c| order(&c[0]));
    let mut transient = elimination.transient.clone();
    transient.sort_by_key(order);

    let mut influence_tests = Vec::new();
    let mut class_edges = Vec::new();
    if let (Some(rs), false) = (&elimination.first, transient.is_empty()) {
        let edges = (config.decision_rule == DecisionRule::Conventional).then(|| EdgeStatistics::from_replicates(rs));
        let idx = |v: &String| rs.names.iter().position(|n| n == v).expect("first round covers every variable");
        let targets: Vec<usize> = transient.iter().map(idx).collect();
        for (s, c) in classes.iter().enumerate() {
            let members: Vec<usize> = c.iter().map(idx).collect();
            let t = influence_test(rs, edges.as_ref(), &members, &targets, config)?;
            if t.conclusion == Conclusion::Influence {
                class_edges.push(ClassEdge {
                    from: s,
                    to: EdgeTarget::Transient,
                });
            }
            influence_tests.push(t);
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LevelReport {
        variables: panel.names().to_vec(),
        exogenous: exogenous.map(|x| x.names().to_vec()).unwrap_or_default(),
        elimination,
        separation_tests,
        influence_tests,
        periodicity,
        warnings,
        structure: CausalStructure {
            classes,
            transient,
            class_edges,
            substructure: None,
        },
    })
}

/// Searches the transient set for sub-classes, recursively.
///
/// Variables of `root` named in `inherited` and the members of classes with an
/// edge into the transient set become exogenous regressors of the inner VAR.
/// Returns the structure with its substructure filled in and the reports of
/// every inner level.
pub fn refine_endogeneity_substructure(
    root: &TimeSeriesPanel,
    structure: &CausalStructure,
    inherited: &[String],
    config: &BootstrapConfig,
) -> Result<(CausalStructure, Vec<LevelReport>)> {
    let mut out = structure.clone();
    if structure.transient.len() < 2 {
        return Ok((out, Vec::new()));
    }
    let mut exo: Vec<String> = inherited.to_vec();
    for e in &structure.class_edges {
        if e.to == EdgeTarget::Transient {
            exo.extend(structure.classes[e.from].iter().cloned());
        }
    }
    let inner = root.select(&structure.transient)?;
    let x = if exo.is_empty() { None } else { Some(root.select(&exo)?) };
    let level = discover_classes(&inner, x.as_ref(), config)?;
    let (sub, mut reports) = refine_endogeneity_substructure(root, &level.structure, &exo, config)?;
    out.substructure = Some(Box::new(sub));
    reports.insert(0, level);
    Ok((out, reports))
}

/// Full identification report.
#[derive(Debug, Clone, Serialize)]
pub struct Identification {
    pub structure: CausalStructure,
    /// Outermost level first.
    pub levels: Vec<LevelReport>,
    pub warnings: Vec<String>,
}

/// Runs the whole search on `panel`.
pub fn identify(panel: &TimeSeriesPanel, config: &BootstrapConfig) -> Result<Identification> {
    let top = discover_classes(panel, None, config)?;
    let (structure, inner) = refine_endogeneity_substructure(panel, &top.structure, &[], config)?;
    let mut levels = vec![top];
    levels.extend(inner);
    let warnings = levels.iter().flat_map(|l| l.warnings.iter().cloned()).collect();
    Ok(Identification {
        structure,
        levels,
        warnings,
    })
}
