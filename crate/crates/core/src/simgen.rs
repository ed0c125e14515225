//! Synthetic panels from known causal templates, and scoring of recovered structures.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{CausalStructure, EdgeTarget};
use crate::error::{Error, Result};
use crate::identification::{identify, BootstrapConfig};
use crate::panel::{LagSpec, TimeIndex, TimeSeriesPanel};
use crate::rng::stream_seed;
use crate::var::CompanionForm;

pub const GENERATOR_LAGS: usize = 2;
pub const BURN_IN: usize = 500;
pub const MAX_RADIUS: f64 = 0.95;
/// Magnitude range of first-lag coefficients; signs are random.
pub const COEFFICIENT_RANGE: (f64, f64) = (0.5, 0.9);
/// Second-lag coefficients are drawn from the first-lag range times this factor.
pub const SECOND_LAG_SCALE: f64 = 0.5;
const MAX_ATTEMPTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Classification,
    Hierarchy,
    Circular,
    Periodic,
    Subexogeneity,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::Classification,
        TemplateId::Hierarchy,
        TemplateId::Circular,
        TemplateId::Periodic,
        TemplateId::Subexogeneity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Classification => "classification",
            TemplateId::Hierarchy => "hierarchy",
            TemplateId::Circular => "circular",
            TemplateId::Periodic => "periodic",
            TemplateId::Subexogeneity => "subexogeneity",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::contract(format!("unknown template '{s}'")))
    }
}

/// Nine-variable causal template: who loads on whose lags, and the true structure.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTemplate {
    pub id: TemplateId,
    /// `parents[i]` lists the variables whose lags enter the equation of `i`, itself included.
    pub parents: Vec<Vec<usize>>,
    pub truth: CausalStructure,
}

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y{i}")).collect()
}

fn group(ids: &[usize]) -> Vec<String> {
    ids.iter().map(|i| format!("y{i}")).collect()
}

fn level(classes: &[&[usize]], transient: &[usize], feeding: &[usize]) -> CausalStructure {
    CausalStructure {
        classes: classes.iter().map(|c| group(c)).collect(),
        transient: group(transient),
        class_edges: feeding
            .iter()
            .map(|&s| crate::equilibrium::ClassEdge {
                from: s,
                to: EdgeTarget::Transient,
            })
            .collect(),
        substructure: None,
    }
}

fn nest(mut outer: CausalStructure, inner: CausalStructure) -> CausalStructure {
    outer.substructure = Some(Box::new(inner));
    outer
}

impl StructureTemplate {
    pub fn new(id: TemplateId) -> Self {
        // 1-based parent lists; every variable also loads on its own lags
        let (parents, truth): (Vec<Vec<usize>>, CausalStructure) = match id {
            TemplateId::Classification => (
                vec![
                    vec![1, 2],
                    vec![1, 2],
                    vec![3],
                    vec![4],
                    vec![1, 2, 3, 4, 5, 6, 9],
                    vec![2, 4, 5, 6, 9],
                    vec![7, 8],
                    vec![7, 8],
                    vec![9],
                ],
                level(&[&[1, 2], &[3], &[4], &[7, 8], &[9]], &[5, 6], &[0, 1, 2, 4]),
            ),
            TemplateId::Hierarchy => (
                vec![
                    vec![1, 2],
                    vec![1, 2],
                    vec![1, 3, 4],
                    vec![2, 3, 4],
                    vec![1, 2, 5],
                    vec![3, 6, 7],
                    vec![4, 6, 7],
                    vec![3, 5, 8, 9],
                    vec![4, 5, 8, 9],
                ],
                nest(
                    level(&[&[1, 2]], &[3, 4, 5, 6, 7, 8, 9], &[0]),
                    nest(
                        level(&[&[3, 4], &[5]], &[6, 7, 8, 9], &[0, 1]),
                        level(&[&[6, 7], &[8, 9]], &[], &[]),
                    ),
                ),
            ),
            TemplateId::Circular => (
                vec![
                    vec![1, 2],
                    vec![1, 2],
                    vec![2, 3, 4],
                    vec![4, 7, 8],
                    vec![4, 5, 6],
                    vec![4, 5, 6],
                    vec![7, 8, 9],
                    vec![7, 8, 9],
                    vec![4, 5, 6, 9],
                ],
                level(&[&[1, 2], &[4, 5, 6, 7, 8, 9]], &[3], &[0, 1]),
            ),
            TemplateId::Periodic => (
                vec![
                    vec![1, 6],
                    vec![1, 2],
                    vec![2, 3],
                    vec![3, 4],
                    vec![4, 5],
                    vec![5, 6],
                    vec![3, 7],
                    vec![8, 9],
                    vec![8, 9],
                ],
                level(&[&[1, 2, 3, 4, 5, 6], &[8, 9]], &[7], &[0]),
            ),
            TemplateId::Subexogeneity => (
                vec![
                    vec![1, 2],
                    vec![1, 2],
                    vec![3],
                    vec![4],
                    vec![1, 5, 6],
                    vec![2, 3, 5, 6],
                    vec![5, 7, 8],
                    vec![6, 7, 8, 9],
                    vec![7, 9],
                ],
                nest(
                    level(&[&[1, 2], &[3], &[4]], &[5, 6, 7, 8, 9], &[0, 1]),
                    nest(level(&[&[5, 6]], &[7, 8, 9], &[0]), level(&[&[7, 8, 9]], &[], &[])),
                ),
            ),
        };
        Self {
            id,
            parents: parents.into_iter().map(|p| p.into_iter().map(|k| k - 1).collect()).collect(),
            truth,
        }
    }

    pub fn n(&self) -> usize {
        self.parents.len()
    }

    pub fn names(&self) -> Vec<String> {
        names(self.n())
    }

    /// Draws lag matrices on the template's support with companion radius at most [`MAX_RADIUS`].
    /// Draws coefficients on the template support until the system is stable.
    pub fn draw_coefficients(&self, rng: &mut impl Rng) -> Result<Vec<DMatrix<f64>>> {
        let n = self.n();
        let (lo, hi) = COEFFICIENT_RANGE;
        for _ in 0..MAX_ATTEMPTS {
            let mut blocks = vec![DMatrix::zeros(n, n); GENERATOR_LAGS];
            for (i, ps) in self.parents.iter().enumerate() {
                for &j in ps {
                    let mut scale = 1.0;
                    for b in blocks.iter_mut() {
                        let m = scale * rng.random_range(lo..=hi);
                        b[(i, j)] = if rng.random_bool(0.5) { m } else { -m };
                        scale *= SECOND_LAG_SCALE;
                    }
                }
            }
            if CompanionForm::from_coefficients(&blocks)?.spectral_radius <= MAX_RADIUS {
                return Ok(blocks);
            }
        }
        Err(Error::Generation(format!(
            "no stable draw for template {} after {MAX_ATTEMPTS} attempts",
            self.id
        )))
    }
}

/// One synthetic dataset with the coefficients that produced it.
#[derive(Debug, Clone)]
pub struct GeneratedPanel {
    pub panel: TimeSeriesPanel,
    pub truth: CausalStructure,
    pub coefficients: Vec<DMatrix<f64>>,
}

/// Simulates `len` observations after a burn-in, with independent standard normal shocks.
pub fn generate(template: &StructureTemplate, len: usize, seed: u64) -> Result<GeneratedPanel> {
    if len < 50 {
        return Err(Error::contract("generated panels need at least 50 observations"));
    }
    let mut rng = ChaCha8Rng::from_seed(stream_seed(seed, template.id as u64, 0, 0));
    let coefficients = template.draw_coefficients(&mut rng)?;
    let n = template.n();
    let total = BURN_IN + len;
    let mut y = DMatrix::<f64>::zeros(n, total);
    for t in GENERATOR_LAGS..total {
        let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        for (l, a) in coefficients.iter().enumerate() {
            v.gemv(1.0, a, &y.column(t - l - 1), 1.0);
        }
        y.set_column(t, &v);
    }
    let values = y.columns(BURN_IN, len).into_owned();
    let panel = TimeSeriesPanel::new(template.names(), values, TimeIndex::sequential(len))?;
    Ok(GeneratedPanel {
        panel,
        truth: template.truth.clone(),
        coefficients,
    })
}

/// Lag set used to fit generated data.
pub fn generator_lags() -> LagSpec {
    LagSpec::contiguous(GENERATOR_LAGS).expect("positive lag")
}

/// A causal relation counted when scoring.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Relation {
    /// A group of variables that move together as one class.
    Class { members: BTreeSet<String> },
    /// A class feeding a set of downstream variables.
    Edge {
        from: BTreeSet<String>,
        to: BTreeSet<String>,
    },
}

/// Relation inventory of a structure.
///
/// Every class at every nesting level counts once, as does the innermost
/// non-empty transient set. Each edge from a class into the transient set
/// of its level (or into another class) counts once.
pub fn relations(structure: &CausalStructure) -> BTreeSet<Relation> {
    let mut out = BTreeSet::new();
    collect_relations(structure, &mut out);
    out
}

fn collect_relations(s: &CausalStructure, out: &mut BTreeSet<Relation>) {
    let set = |v: &[String]| v.iter().cloned().collect::<BTreeSet<_>>();
    for c in &s.classes {
        out.insert(Relation::Class { members: set(c) });
    }
    for e in &s.class_edges {
        let to = match e.to {
            EdgeTarget::Transient => set(&s.transient),
            EdgeTarget::Class(r) => set(&s.classes[r]),
        };
        if !to.is_empty() {
            out.insert(Relation::Edge {
                from: set(&s.classes[e.from]),
                to,
            });
        }
    }
    match &s.substructure {
        Some(sub) => collect_relations(sub, out),
        None if !s.transient.is_empty() => {
            out.insert(Relation::Class {
                members: set(&s.transient),
            });
        }
        None => {}
    }
}

fn all_names(s: &CausalStructure) -> BTreeSet<String> {
    s.classes.iter().flatten().chain(&s.transient).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyScore {
    pub exact: bool,
    pub omissions: usize,
    pub additions: usize,
    pub relation_recall: f64,
}

/// Compares an estimated structure with the truth relation by relation.
pub fn score(estimated: &CausalStructure, truth: &CausalStructure) -> Result<AccuracyScore> {
    if all_names(estimated) != all_names(truth) {
        return Err(Error::contract("structures cover different variables"));
    }
    let est = relations(estimated);
    let tru = relations(truth);
    let omissions = tru.difference(&est).count();
    let additions = est.difference(&tru).count();
    let relation_recall = if tru.is_empty() {
        1.0
    } else {
        (tru.len() - omissions) as f64 / tru.len() as f64
    };
    Ok(AccuracyScore {
        exact: omissions == 0 && additions == 0,
        omissions,
        additions,
        relation_recall,
    })
}

/// One row of an accuracy study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub template: String,
    pub datasets: usize,
    pub exact: usize,
    /// Datasets missing 1, 2, 3 and 4 or more true relations.
    pub omissions: [usize; 4],
    /// Datasets asserting 1, 2, 3 and 4 or more spurious relations.
    pub additions: [usize; 4],
    /// Mean fraction of true relations recovered.
    pub relation_recall: f64,
    /// Datasets where identification stopped with an error; scored as recovering nothing.
    pub failures: usize,
}

impl StudyRow {
    pub fn exact_rate(&self) -> f64 {
        self.exact as f64 / self.datasets as f64
    }

    /// Column-wise mean of several rows, labelled `average`.
    pub fn average(rows: &[StudyRow]) -> StudyRow {
        let k = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&StudyRow) -> usize| (rows.iter().map(f).sum::<usize>() as f64 / k).round() as usize;
        StudyRow {
            template: "average".into(),
            datasets: mean(&|r| r.datasets),
            exact: mean(&|r| r.exact),
            omissions: std::array::from_fn(|b| mean(&|r| r.omissions[b])),
            additions: std::array::from_fn(|b| mean(&|r| r.additions[b])),
            relation_recall: rows.iter().map(|r| r.relation_recall).sum::<f64>() / k,
            failures: mean(&|r| r.failures),
        }
    }
}

/// Outcome for one dataset of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetOutcome {
    pub seed: u64,
    pub score: Option<AccuracyScore>,
    pub error: Option<String>,
}

/// Seed of dataset `index` under a master seed.
pub fn dataset_seed(master: u64, template: TemplateId, index: usize) -> u64 {
    let s = stream_seed(master, template as u64, index as u64, u64::MAX);
    u64::from_le_bytes(s[..8].try_into().expect("eight bytes"))
}

/// Generates `datasets` panels of length `len`, identifies each and tallies the scores.
///
/// Datasets run in parallel; each uses its own seed for both generation and
/// the bootstrap, so the row does not depend on scheduling.
pub fn run_study(
    template: &StructureTemplate,
    datasets: usize,
    len: usize,
    config: &BootstrapConfig,
) -> Result<(StudyRow, Vec<DatasetOutcome>)> {
    if datasets == 0 {
        return Err(Error::contract("a study needs at least one dataset"));
    }
    config.validate()?;
    let outcomes: Vec<DatasetOutcome> = (0..datasets)
        .into_par_iter()
        .map(|k| {
            let seed = dataset_seed(config.seed, template.id, k);
            let cfg = BootstrapConfig { seed, ..config.clone() };
            let result = generate(template, len, seed)
                .and_then(|g| identify(&g.panel, &cfg).and_then(|id| score(&id.structure, &g.truth)));
            match result {
                Ok(s) => DatasetOutcome {
                    seed,
                    score: Some(s),
                    error: None,
                },
                Err(e) => DatasetOutcome {
                    seed,
                    score: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let bucket = |c: usize| c.min(4) - 1;
    let mut row = StudyRow {
        template: template.id.name().into(),
        datasets,
        exact: 0,
        omissions: [0; 4],
        additions: [0; 4],
        relation_recall: 0.0,
        failures: 0,
    };
    let true_count = relations(&template.truth).len();
    for o in &outcomes {
        match &o.score {
            Some(s) => {
                row.exact += usize::from(s.exact);
                if s.omissions > 0 {
                    row.omissions[bucket(s.omissions)] += 1;
                }
                if s.additions > 0 {
                    row.additions[bucket(s.additions)] += 1;
                }
                row.relation_recall += s.relation_recall;
            }
            None => {
                row.failures += 1;
                row.omissions[bucket(true_count)] += 1;
            }
        }
    }
    row.relation_recall /= datasets as f64;
    Ok((row, outcomes))
}
