//! Counterbalance equilibrium of an influence matrix and the quantities built on it.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::decomp::{Horizon, InfluenceMatrix};
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-12;

/// Spectral radius at which a claimed transient block is treated as a class.
pub const MISCLASSIFICATION_MARGIN: f64 = 1e-9;

/// Default iteration cap `100 n + 1000`.
pub fn default_max_iter(n: usize) -> usize {
    100 * n + 1000
}

/// Values keyed by variable name; serialized as an ordered JSON object.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl NamedVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.values[k])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl Serialize for NamedVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.names.len()))?;
        for (k, v) in self.names.iter().zip(&self.values) {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Scope {
    Global,
    Class(usize),
    Quota(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    PowerIteration,
    /// Plain iteration stalled; the Cesàro average of the iterates was refined to the fixed point.
    Cesaro,
    /// Iterative schemes failed; the fixed point was solved for directly.
    Direct,
    /// Assembled from per-class solutions.
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalityDistribution {
    pub pi: NamedVector,
    pub scope: Scope,
    pub iterations_used: usize,
    pub method: SolveMethod,
    /// `max |pi - pi Omega|` on the matrix that was solved.
    pub residual: f64,
    /// False when the influence graph has several closed classes, so the
    /// result depends on the start vector.
    pub unique: bool,
}

impl CausalityDistribution {
    pub fn values(&self) -> DVector<f64> {
        DVector::from_vec(self.pi.values.clone())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub start: Option<DVector<f64>>,
    pub max_iter: Option<usize>,
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            start: None,
            max_iter: None,
            tol: DEFAULT_TOL,
        }
    }
}

struct Stationary {
    pi: DVector<f64>,
    iterations: usize,
    method: SolveMethod,
    residual: f64,
}

fn residual(pi: &DVector<f64>, omega: &DMatrix<f64>) -> f64 {
    (omega.tr_mul(pi) - pi).amax()
}

fn step(pi: &DVector<f64>, omega: &DMatrix<f64>) -> DVector<f64> {
    omega.tr_mul(pi)
}

fn clamp_normalise(mut pi: DVector<f64>) -> DVector<f64> {
    pi.apply(|v| *v = v.max(0.0));
    let s = pi.sum();
    if s > 0.0 {
        pi /= s;
    }
    pi
}

/// Fixed point of `pi = pi omega` reached from `start`.
fn stationary(omega: &DMatrix<f64>, start: DVector<f64>, max_iter: usize, tol: f64) -> Result<Stationary> {
    let n = omega.nrows();
    let mut pi = start;
    let mut sum = DVector::zeros(n);
    for t in 0..max_iter {
        let r = residual(&pi, omega);
        if r < tol {
            return Ok(Stationary {
                pi: clamp_normalise(pi),
                iterations: t,
                method: SolveMethod::PowerIteration,
                residual: r,
            });
        }
        sum += &pi;
        pi = step(&pi, omega);
    }

    // Cesàro average over the window, then lazy-chain iteration, which has the
    // same fixed points but no periodic eigenvalues
    let mut avg = sum / max_iter as f64;
    let lazy = (omega + DMatrix::identity(n, n)) * 0.5;
    for t in 0..max_iter {
        let r = residual(&avg, omega);
        if r < tol {
            return Ok(Stationary {
                pi: clamp_normalise(avg),
                iterations: max_iter + t,
                method: SolveMethod::Cesaro,
                residual: r,
            });
        }
        avg = step(&avg, &lazy);
    }

    let direct = direct_solve(omega).ok_or_else(|| Error::Numerical {
        message: "equilibrium did not converge and the direct solve is singular".into(),
        residual: residual(&avg, omega),
    })?;
    let r = residual(&direct, omega);
    if r >= tol.max(1e-10) {
        return Err(Error::Numerical {
            message: "equilibrium did not converge".into(),
            residual: r,
        });
    }
    Ok(Stationary {
        pi: direct,
        iterations: 2 * max_iter,
        method: SolveMethod::Direct,
        residual: r,
    })
}

/// Solves `pi (I - omega) = 0`, `sum(pi) = 1` with one equation replaced by the normalisation.
fn direct_solve(omega: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = omega.nrows();
    let mut m = DMatrix::identity(n, n) - omega.transpose();
    m.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    linalg::solve(&m, &b).map(clamp_normalise)
}

/// Number of closed communicating classes of the graph with edges `i -> j` where `omega[(i, j)] > 0`.
pub fn closed_class_count(omega: &DMatrix<f64>) -> usize {
    closed_classes(omega, 0.0).len()
}

/// Closed communicating classes, each sorted, in order of their smallest member.
pub fn closed_classes(omega: &DMatrix<f64>, threshold: f64) -> Vec<Vec<usize>> {
    let n = omega.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && omega[(i, j)] > threshold {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut out: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|x| x.index()).collect();
            v.sort_unstable();
            v
        })
        .filter(|c| {
            c.iter()
                .all(|&i| (0..n).all(|j| c.contains(&j) || omega[(i, j)] <= threshold))
        })
        .collect();
    out.sort();
    out
}

/// Global causality distribution.
pub fn solve_pi(omega: &InfluenceMatrix, options: &SolveOptions) -> Result<CausalityDistribution> {
    let n = omega.n();
    let start = match &options.start {
        Some(s) => {
            if s.len() != n || s.iter().any(|v| *v < 0.0 || !v.is_finite()) || (s.sum() - 1.0).abs() > 1e-10 {
                return Err(Error::contract("start vector must be a probability vector"));
            }
            s.clone()
        }
        None => DVector::from_element(n, 1.0 / n as f64),
    };
    let max_iter = options.max_iter.unwrap_or_else(|| default_max_iter(n));
    let sol = stationary(&omega.omega, start, max_iter, options.tol)?;
    if sol.method != SolveMethod::PowerIteration {
        log::warn!("power iteration did not converge; used {:?} fallback", sol.method);
    }
    let unique = closed_class_count(&omega.omega) == 1;
    Ok(CausalityDistribution {
        pi: NamedVector {
            names: omega.names.clone(),
            values: sol.pi.iter().copied().collect(),
        },
        scope: Scope::Global,
        iterations_used: sol.iterations,
        method: sol.method,
        residual: sol.residual,
        unique,
    })
}

/// Target of a class-level edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTarget {
    Transient,
    Class(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassEdge {
    pub from: usize,
    pub to: EdgeTarget,
}

/// Partition of the variables into exogeneity classes and a transient set.
///
/// `substructure`, when present, partitions the transient set itself.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CausalStructure {
    pub classes: Vec<Vec<String>>,
    #[serde(default)]
    pub transient: Vec<String>,
    #[serde(default)]
    pub class_edges: Vec<ClassEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substructure: Option<Box<CausalStructure>>,
}

impl CausalStructure {
    pub fn new(classes: Vec<Vec<String>>, transient: Vec<String>) -> Self {
        let class_edges = if transient.is_empty() {
            Vec::new()
        } else {
            (0..classes.len())
                .map(|s| ClassEdge {
                    from: s,
                    to: EdgeTarget::Transient,
                })
                .collect()
        };
        Self {
            classes,
            transient,
            class_edges,
            substructure: None,
        }
    }

    /// Checks that classes and the transient set partition `names`.
    pub fn validate(&self, names: &[String]) -> Result<()> {
        let mut seen: Vec<&str> = Vec::with_capacity(names.len());
        for c in &self.classes {
            if c.is_empty() {
                return Err(Error::contract("empty class"));
            }
        }
        for v in self.classes.iter().flatten().chain(&self.transient) {
            if !names.contains(v) {
                return Err(Error::Schema(format!("unknown variable '{v}' in structure")));
            }
            if seen.contains(&v.as_str()) {
                return Err(Error::contract(format!("variable '{v}' appears twice in structure")));
            }
            seen.push(v);
        }
        if seen.len() != names.len() {
            return Err(Error::contract("structure does not cover every variable"));
        }
        for e in &self.class_edges {
            let bad_to = matches!(e.to, EdgeTarget::Class(r) if r >= self.classes.len() || r == e.from);
            if e.from >= self.classes.len() || bad_to {
                return Err(Error::contract("class edge refers to an unknown class"));
            }
        }
        if let Some(sub) = &self.substructure {
            sub.validate(&self.transient)?;
        }
        Ok(())
    }

    pub fn class_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.iter().any(|v| v == name))
    }

    /// Classes and transient set read off the influence graph.
    ///
    /// Entries at or below `threshold` count as absent; closed communicating
    /// classes become exogeneity classes and everything else is transient.
    pub fn from_influence(omega: &InfluenceMatrix, threshold: f64) -> Self {
        let classes = closed_classes(&omega.omega, threshold);
        let in_class: Vec<usize> = classes.iter().flatten().copied().collect();
        let transient: Vec<usize> = (0..omega.n()).filter(|i| !in_class.contains(i)).collect();
        let class_edges = classes
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                transient
                    .iter()
                    .any(|&i| c.iter().any(|&j| omega.omega[(i, j)] > threshold))
            })
            .map(|(s, _)| ClassEdge {
                from: s,
                to: EdgeTarget::Transient,
            })
            .collect();
        let name = |k: &usize| omega.names[*k].clone();
        Self {
            classes: classes.iter().map(|c| c.iter().map(name).collect()).collect(),
            transient: transient.iter().map(name).collect(),
            class_edges,
            substructure: None,
        }
    }

    fn resolve(&self, omega: &InfluenceMatrix) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
        self.validate(&omega.names)?;
        let idx = |v: &String| omega.index_of(v);
        let classes = self
            .classes
            .iter()
            .map(|c| c.iter().map(idx).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let transient = self.transient.iter().map(idx).collect::<Result<Vec<_>>>()?;
        Ok((classes, transient))
    }
}

fn sub_matrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

fn renormalised_block(omega: &DMatrix<f64>, members: &[usize]) -> Result<DMatrix<f64>> {
    let mut block = sub_matrix(omega, members, members);
    for a in 0..block.nrows() {
        let s = block.row(a).sum();
        if !(s > 0.0) {
            return Err(Error::contract("class row has no mass inside its class"));
        }
        block.row_mut(a).unscale_mut(s);
    }
    Ok(block)
}

/// Causality distribution within each class, solved on the renormalised class block.
pub fn class_distributions(omega: &InfluenceMatrix, structure: &CausalStructure) -> Result<Vec<CausalityDistribution>> {
    let (classes, _) = structure.resolve(omega)?;
    classes
        .iter()
        .enumerate()
        .map(|(s, members)| {
            let block = renormalised_block(&omega.omega, members)?;
            let m = members.len();
            let sol = stationary(
                &block,
                DVector::from_element(m, 1.0 / m as f64),
                default_max_iter(m),
                DEFAULT_TOL,
            )?;
            Ok(CausalityDistribution {
                pi: NamedVector {
                    names: members.iter().map(|&k| omega.names[k].clone()).collect(),
                    values: sol.pi.iter().copied().collect(),
                },
                scope: Scope::Class(s),
                iterations_used: sol.iterations,
                method: sol.method,
                residual: sol.residual,
                unique: closed_class_count(&block) == 1,
            })
        })
        .collect()
}

/// The unique equilibrium in which class `s` carries total causality `quotas[s]`.
pub fn solve_pi_quota(
    omega: &InfluenceMatrix,
    structure: &CausalStructure,
    quotas: &[f64],
) -> Result<CausalityDistribution> {
    if structure.classes.is_empty() {
        return Err(Error::contract("structure has no classes"));
    }
    if quotas.len() != structure.classes.len() {
        return Err(Error::contract("need one quota per class"));
    }
    if quotas.iter().any(|q| *q < 0.0 || !q.is_finite()) || (quotas.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::contract("quotas must be nonnegative and sum to 1"));
    }
    let per_class = class_distributions(omega, structure)?;
    let mut pi = DVector::zeros(omega.n());
    let mut iterations = 0;
    for (dist, q) in per_class.iter().zip(quotas) {
        iterations += dist.iterations_used;
        for (name, v) in dist.pi.names.iter().zip(&dist.pi.values) {
            pi[omega.index_of(name)?] = q * v;
        }
    }
    let residual = residual(&pi, &omega.omega);
    Ok(CausalityDistribution {
        pi: NamedVector {
            names: omega.names.clone(),
            values: pi.iter().copied().collect(),
        },
        scope: Scope::Quota(quotas.to_vec()),
        iterations_used: iterations,
        method: SolveMethod::Composite,
        residual,
        unique: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientBlock {
    pub names: Vec<String>,
    #[serde(serialize_with = "serialize_rows")]
    pub matrix: DMatrix<f64>,
    pub spectral_radius: f64,
    /// Set when the spectral radius is within [`MISCLASSIFICATION_MARGIN`] of one.
    pub misclassified: bool,
}

fn serialize_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    crate::var::rows_of(m).serialize(s)
}

/// Restriction of the influence matrix to the transient set.
pub fn transient_block(omega: &InfluenceMatrix, structure: &CausalStructure) -> Result<TransientBlock> {
    let (_, transient) = structure.resolve(omega)?;
    if transient.is_empty() {
        return Err(Error::contract("transient set is empty"));
    }
    let matrix = sub_matrix(&omega.omega, &transient, &transient);
    let rho = linalg::spectral_radius(&matrix);
    let misclassified = rho >= 1.0 - MISCLASSIFICATION_MARGIN;
    if misclassified {
        log::warn!("transient block has spectral radius {rho:.3e}; the claimed transient set behaves like a class");
    }
    Ok(TransientBlock {
        names: structure.transient.clone(),
        matrix,
        spectral_radius: rho,
        misclassified,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionVector {
    pub class: usize,
    pub mu: NamedVector,
    pub horizon: Horizon,
}

/// Ultimate causality of one class over each transient variable.
pub fn absorption(
    omega: &InfluenceMatrix,
    structure: &CausalStructure,
    source_class: usize,
    horizon: Horizon,
) -> Result<AbsorptionVector> {
    let (classes, transient) = structure.resolve(omega)?;
    if transient.is_empty() {
        return Err(Error::contract("transient set is empty"));
    }
    let members = classes
        .get(source_class)
        .ok_or_else(|| Error::contract(format!("no class {source_class}")))?;
    let te = sub_matrix(&omega.omega, &transient, &transient);
    let b = DVector::from_fn(transient.len(), |a, _| members.iter().map(|&j| omega.omega[(transient[a], j)]).sum());
    let mu = match horizon {
        Horizon::Limit => {
            let m = DMatrix::identity(te.nrows(), te.nrows()) - &te;
            let rho = linalg::spectral_radius(&te);
            if rho >= 1.0 - MISCLASSIFICATION_MARGIN {
                return Err(Error::Misclassification(format!(
                    "I - T_e is singular (spectral radius {rho})"
                )));
            }
            linalg::solve(&m, &b).ok_or_else(|| Error::Misclassification("I - T_e is singular".into()))?
        }
        Horizon::Finite(h) => {
            let mut mu = DVector::zeros(transient.len());
            for _ in 0..h {
                mu = &te * &mu + &b;
            }
            mu
        }
    };
    Ok(AbsorptionVector {
        class: source_class,
        mu: NamedVector {
            names: structure.transient.clone(),
            values: mu.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        },
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDistribution {
    pub target: String,
    pub horizon: Horizon,
    /// Shares of the class members, in class order.
    pub shares: NamedVector,
    /// Per-class absorption `mu` of the target.
    pub class_totals: Vec<f64>,
    /// Mass still on transient variables after a finite horizon; zero in the limit.
    pub in_transit: NamedVector,
}

impl LocalDistribution {
    pub fn total(&self) -> f64 {
        self.shares.sum() + self.in_transit.sum()
    }
}

/// Local causality distribution of a transient variable.
///
/// In the limit this is `[mu^{c_1} pi^{c_1}, ..., mu^{c_k} pi^{c_k}]`. At a
/// finite horizon the class parts use the horizon-`h` absorption and the mass
/// that has not yet reached a class is reported per transient variable.
pub fn local_distribution(
    omega: &InfluenceMatrix,
    structure: &CausalStructure,
    target: &str,
    horizon: Horizon,
) -> Result<LocalDistribution> {
    let (_, transient) = structure.resolve(omega)?;
    let t_pos = structure
        .transient
        .iter()
        .position(|v| v == target)
        .ok_or_else(|| Error::contract(format!("'{target}' is not a transient variable")))?;
    let per_class = class_distributions(omega, structure)?;
    let mut names = Vec::new();
    let mut values = Vec::new();
    let mut class_totals = Vec::new();
    for (s, dist) in per_class.iter().enumerate() {
        let mu = absorption(omega, structure, s, horizon)?.mu.values[t_pos];
        class_totals.push(mu);
        for (name, v) in dist.pi.names.iter().zip(&dist.pi.values) {
            names.push(name.clone());
            values.push(mu * v);
        }
    }
    let in_transit = match horizon {
        Horizon::Limit => vec![0.0; transient.len()],
        Horizon::Finite(h) => {
            let te = sub_matrix(&omega.omega, &transient, &transient);
            let mut row = DVector::zeros(transient.len());
            row[t_pos] = 1.0;
            for _ in 0..h {
                row = te.tr_mul(&row);
            }
            row.iter().copied().collect()
        }
    };
    Ok(LocalDistribution {
        target: target.to_string(),
        horizon,
        shares: NamedVector { names, values },
        class_totals,
        in_transit: NamedVector {
            names: structure.transient.clone(),
            values: in_transit,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sensitivity {
    pub i: usize,
    pub j: usize,
    /// `d pi_i / d omega_ji`.
    pub d_pi_i: f64,
    /// `d pi_{-i} / d omega_ji`, in variable order with `i` removed.
    pub d_pi_rest: Vec<f64>,
}

impl Sensitivity {
    /// Full gradient with `d_pi_i` placed at position `i`.
    pub fn full(&self) -> DVector<f64> {
        let mut v = self.d_pi_rest.clone();
        v.insert(self.i, self.d_pi_i);
        DVector::from_vec(v)
    }
}

/// Derivatives of the equilibrium with respect to `omega_ji`, row `j` kept stochastic.
pub fn pi_sensitivity(omega: &InfluenceMatrix, i: usize, j: usize) -> Result<Sensitivity> {
    let n = omega.n();
    if i >= n || j >= n {
        return Err(Error::contract("index out of range"));
    }
    let w = &omega.omega;
    let wji = w[(j, i)];
    if wji >= 1.0 {
        return Err(Error::contract("omega_ji must be below 1"));
    }
    let pi = solve_pi(omega, &SolveOptions::default())?.values();
    let rest: Vec<usize> = (0..n).filter(|&k| k != i).collect();
    // Z_i: transpose with row and column i removed
    let z = DMatrix::from_fn(n - 1, n - 1, |a, b| w[(rest[b], rest[a])]);
    let alpha = |r: usize| DVector::from_fn(n - 1, |a, _| w[(r, rest[a])]);
    let m = DMatrix::identity(n - 1, n - 1) - z;
    let lu = m.lu();
    let singular = || Error::Degeneracy("I - Z_i is singular".into());
    let inv_ji = lu.solve(&alpha(j)).ok_or_else(singular)?;
    let inv_ii = lu.solve(&alpha(i)).ok_or_else(singular)?;
    if !inv_ji.iter().chain(inv_ii.iter()).all(|v| v.is_finite()) {
        return Err(singular());
    }
    let scale = pi[j] / (1.0 - wji);
    let d_pi_i = scale * inv_ji.sum() / (1.0 + inv_ii.sum());
    let d_rest = &inv_ii * d_pi_i - &inv_ji * scale;
    Ok(Sensitivity {
        i,
        j,
        d_pi_i,
        d_pi_rest: d_rest.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PeriodEstimate {
    pub period: usize,
    /// Number of `t <= max_t` with a return probability above the threshold.
    pub returns: usize,
    pub confident: bool,
}

/// Return-probability threshold for [`periodicity_probe`].
pub const RETURN_THRESHOLD: f64 = 1e-6;

/// Period of variable `i`: gcd of the steps `t` with `Omega^t(i, i)` above [`RETURN_THRESHOLD`].
pub fn periodicity_probe(omega: &InfluenceMatrix, i: usize, max_t: usize) -> Result<PeriodEstimate> {
    if i >= omega.n() {
        return Err(Error::contract("index out of range"));
    }
    let mut row = DVector::zeros(omega.n());
    row[i] = 1.0;
    let mut g = 0usize;
    let mut returns = 0;
    for t in 1..=max_t {
        row = omega.omega.tr_mul(&row);
        if row[i] > RETURN_THRESHOLD {
            g = gcd(g, t);
            returns += 1;
        }
    }
    Ok(PeriodEstimate {
        period: g.max(1),
        returns,
        confident: returns >= 3,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn om(rows: usize, data: &[f64]) -> InfluenceMatrix {
        InfluenceMatrix::from_matrix(DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn identity_keeps_uniform_start() {
        let p = solve_pi(&om(2, &[1.0, 0.0, 0.0, 1.0]), &SolveOptions::default()).unwrap();
        assert!(close(&p.pi.values, &[0.5, 0.5], 1e-15));
        assert!(!p.unique);
    }

    #[test]
    fn two_by_two_examples() {
        let p = solve_pi(&om(2, &[1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]), &SolveOptions::default()).unwrap();
        assert!(close(&p.pi.values, &[0.5, 0.5], 1e-12));
        let p = solve_pi(&om(2, &[0.25, 0.75, 0.2, 0.8]), &SolveOptions::default()).unwrap();
        assert!(close(&p.pi.values, &[4.0 / 19.0, 15.0 / 19.0], 1e-12));
        assert_eq!(p.method, SolveMethod::PowerIteration);
        assert!(p.unique);
    }

    #[test]
    fn periodic_matrix_falls_back() {
        let omega = om(2, &[0.0, 1.0, 1.0, 0.0]);
        let opts = SolveOptions {
            start: Some(DVector::from_vec(vec![1.0, 0.0])),
            ..SolveOptions::default()
        };
        let p = solve_pi(&omega, &opts).unwrap();
        assert_eq!(p.method, SolveMethod::Cesaro);
        assert!(close(&p.pi.values, &[0.5, 0.5], 1e-12));
        assert!(p.residual < 1e-12);
    }

    #[test]
    fn bad_start_is_rejected() {
        let opts = SolveOptions {
            start: Some(DVector::from_vec(vec![0.7, 0.7])),
            ..SolveOptions::default()
        };
        assert!(solve_pi(&om(2, &[0.25, 0.75, 0.2, 0.8]), &opts).is_err());
    }

    #[test]
    fn periods() {
        let swap = om(2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(periodicity_probe(&swap, 0, 50).unwrap().period, 2);
        let id = InfluenceMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(periodicity_probe(&id, 1, 50).unwrap().period, 1);
        let cycle = InfluenceMatrix::from_matrix(DMatrix::from_fn(6, 6, |i, j| if j == (i + 1) % 6 { 1.0 } else { 0.0 })).unwrap();
        let est = periodicity_probe(&cycle, 0, 60).unwrap();
        assert_eq!(est.period, 6);
        assert!(est.confident);
    }

    #[test]
    fn structure_from_graph() {
        let omega = om(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.3, 0.3, 0.4]);
        let s = CausalStructure::from_influence(&omega, 0.0);
        assert_eq!(s.classes, vec![vec!["y1".to_string()], vec!["y2".to_string()]]);
        assert_eq!(s.transient, vec!["y3".to_string()]);
        assert_eq!(s.class_edges.len(), 2);
    }

    #[test]
    fn structure_validation() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let ok = CausalStructure::new(vec![vec!["a".into()], vec!["b".into()]], vec!["c".into()]);
        ok.validate(&names).unwrap();
        let dup = CausalStructure::new(vec![vec!["a".into(), "b".into()], vec!["b".into()]], vec!["c".into()]);
        assert!(dup.validate(&names).is_err());
        let partial = CausalStructure::new(vec![vec!["a".into()]], vec!["c".into()]);
        assert!(partial.validate(&names).is_err());
    }

    #[test]
    fn empty_transient_block_is_rejected() {
        let omega = om(2, &[1.0, 0.0, 0.0, 1.0]);
        let s = CausalStructure::new(vec![vec!["y1".into()], vec!["y2".into()]], vec![]);
        assert!(transient_block(&omega, &s).is_err());
    }

    #[test]
    fn sensitivity_sums_to_zero() {
        let omega = om(3, &[0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.3, 0.3, 0.4]);
        for i in 0..3 {
            for j in 0..3 {
                let s = pi_sensitivity(&omega, i, j).unwrap();
                assert!(s.d_pi_i >= 0.0);
                assert!(s.full().sum().abs() < 1e-10);
            }
        }
    }
}
