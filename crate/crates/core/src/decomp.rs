//! Forecast-error variance decomposition at finite horizons and in the limit.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LyapunovMethod};
use crate::var::{companion, rows_of, VarModel, STATIONARITY_EPS};

/// Row sums of an influence matrix must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Forecast horizon: a number of steps or the infinite-horizon limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Horizon {
    Finite(usize),
    Limit,
}

impl Horizon {
    pub fn is_limit(&self) -> bool {
        matches!(self, Horizon::Limit)
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(h) => write!(f, "{h}"),
            Horizon::Limit => f.write_str("limit"),
        }
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "limit" | "inf" | "infinity" | "∞" => Ok(Horizon::Limit),
            _ => match t.parse::<usize>() {
                Ok(0) => Err(Error::contract("horizon must be at least 1")),
                Ok(h) => Ok(Horizon::Finite(h)),
                Err(_) => Err(Error::contract(format!("invalid horizon '{t}'"))),
            },
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(h) => s.serialize_u64(*h as u64),
            Horizon::Limit => s.serialize_str("limit"),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(0) => Err(serde::de::Error::custom("horizon must be at least 1")),
            Raw::Int(h) => Ok(Horizon::Finite(h as usize)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Cholesky factor of `sigma` taken under a variable ordering.
///
/// `factor` is expressed in the original variable order: column `j` holds the
/// impact of the shock attached to variable `j`, and `factor` is lower
/// triangular after permuting rows and columns by `ordering`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    pub factor: DMatrix<f64>,
    pub ordering: Vec<usize>,
}

impl CholeskyFactor {
    pub fn new(sigma: &DMatrix<f64>, ordering: Option<&[usize]>) -> Result<Self> {
        let n = sigma.nrows();
        let ordering: Vec<usize> = ordering.map_or_else(|| (0..n).collect(), <[usize]>::to_vec);
        check_permutation(&ordering, n)?;
        let permuted = DMatrix::from_fn(n, n, |a, b| sigma[(ordering[a], ordering[b])]);
        let l = linalg::cholesky_psd(&permuted)?;
        let mut factor = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                factor[(ordering[a], ordering[b])] = l[(a, b)];
            }
        }
        Ok(Self { factor, ordering })
    }

    pub fn natural(sigma: &DMatrix<f64>) -> Result<Self> {
        Self::new(sigma, None)
    }
}

fn check_permutation(ordering: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if ordering.len() != n {
        return Err(Error::contract("ordering must list every variable once"));
    }
    for &k in ordering {
        if k >= n || std::mem::replace(&mut seen[k], true) {
            return Err(Error::contract("ordering must be a permutation"));
        }
    }
    Ok(())
}

/// Row-stochastic matrix of variance shares: `omega[(i, j)]` is the part of
/// variable `i`'s forecast-error variance due to shocks to variable `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub names: Vec<String>,
    pub omega: DMatrix<f64>,
    pub horizon: Horizon,
    pub ordering: Vec<usize>,
}

impl InfluenceMatrix {
    /// Wraps a matrix after checking it is square, nonnegative and row-stochastic.
    pub fn new(names: Vec<String>, omega: DMatrix<f64>, horizon: Horizon, ordering: Vec<usize>) -> Result<Self> {
        let n = names.len();
        if omega.shape() != (n, n) {
            return Err(Error::contract(format!("influence matrix must be {n} x {n}")));
        }
        check_permutation(&ordering, n)?;
        check_stochastic(&omega)?;
        Ok(Self {
            names,
            omega,
            horizon,
            ordering,
        })
    }

    /// Influence matrix with generic names `y1..yn` and the natural ordering.
    pub fn from_matrix(omega: DMatrix<f64>) -> Result<Self> {
        let n = omega.nrows();
        Self::new(
            (1..=n).map(|i| format!("y{i}")).collect(),
            omega,
            Horizon::Limit,
            (0..n).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("unknown variable '{name}'")))
    }

    pub fn to_document(&self) -> InfluenceDocument {
        InfluenceDocument {
            schema_version: crate::SCHEMA_VERSION,
            names: self.names.clone(),
            horizon: self.horizon,
            ordering: self.ordering.iter().map(|&k| self.names[k].clone()).collect(),
            omega: rows_of(&self.omega),
        }
    }

    pub fn from_document(doc: InfluenceDocument) -> Result<Self> {
        let n = doc.names.len();
        if doc.omega.len() != n || doc.omega.iter().any(|r| r.len() != n) {
            return Err(Error::Schema("omega must be a square array matching names".into()));
        }
        let omega = DMatrix::from_fn(n, n, |i, j| doc.omega[i][j]);
        let ordering = if doc.ordering.is_empty() {
            (0..n).collect()
        } else {
            doc.ordering
                .iter()
                .map(|name| {
                    doc.names
                        .iter()
                        .position(|x| x == name)
                        .ok_or_else(|| Error::Schema(format!("unknown variable '{name}' in ordering")))
                })
                .collect::<Result<_>>()?
        };
        Self::new(doc.names, omega, doc.horizon, ordering)
    }

    /// Writes a CSV with a header of names and one named row per variable.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in self.names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.omega.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`InfluenceMatrix::write_csv`].
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let names: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let n = names.len();
        let mut omega = DMatrix::zeros(n, n);
        let mut rows = 0;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if i >= n || rec.len() != n + 1 || rec[0].trim() != names[i] {
                return Err(Error::Schema("influence CSV rows must match the header order".into()));
            }
            for j in 0..n {
                omega[(i, j)] = rec[j + 1].trim().parse().map_err(|_| Error::Ingestion {
                    row: i + 1,
                    column: names[j].clone(),
                    message: format!("'{}' is not a number", &rec[j + 1]),
                })?;
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Schema(format!("expected {n} rows, found {rows}")));
        }
        Self::new(names, omega, Horizon::Limit, (0..n).collect())
    }
}

pub(crate) fn check_stochastic(omega: &DMatrix<f64>) -> Result<()> {
    for (i, row) in omega.row_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < -1e-12) {
            return Err(Error::contract(format!("row {} has negative or non-finite entries", i + 1)));
        }
        let s = row.sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::contract(format!("row {} sums to {s}, not 1", i + 1)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfluenceDocument {
    #[serde(default)]
    pub schema_version: u32,
    pub names: Vec<String>,
    #[serde(default = "limit_horizon")]
    pub horizon: Horizon,
    #[serde(default)]
    pub ordering: Vec<String>,
    pub omega: Vec<Vec<f64>>,
}

fn limit_horizon() -> Horizon {
    Horizon::Limit
}

/// Moving-average matrices `Phi_0..Phi_{horizon-1}` of the reduced form.
pub fn ma_coefficients(model: &VarModel, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    if horizon == 0 {
        return Err(Error::contract("horizon must be at least 1"));
    }
    let n = model.n();
    let reduced = model.reduced_coefficients()?;
    let lags = model.lag_spec.lags();
    let mut phi: Vec<DMatrix<f64>> = Vec::with_capacity(horizon);
    phi.push(DMatrix::identity(n, n));
    for s in 1..horizon {
        let mut next = DMatrix::zeros(n, n);
        for (a, &l) in reduced.iter().zip(lags) {
            if l <= s {
                next.gemm(1.0, a, &phi[s - l], 1.0);
            }
        }
        phi.push(next);
    }
    Ok(phi)
}

/// Shock impact vectors `(I - A0)^{-1} L_j` as columns.
fn loadings(model: &VarModel, chol: &CholeskyFactor) -> Result<DMatrix<f64>> {
    Ok(model.structural_inverse()? * &chol.factor)
}

fn normalise_rows(model: &VarModel, mut raw: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for i in 0..raw.nrows() {
        let total = raw.row(i).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateVariance(model.names[i].clone()));
        }
        raw.row_mut(i).unscale_mut(total);
    }
    Ok(raw)
}

/// Finite-horizon decomposition with the natural variable ordering.
pub fn fevd(model: &VarModel, horizon: usize) -> Result<InfluenceMatrix> {
    fevd_with(model, horizon, &CholeskyFactor::natural(&model.sigma)?)
}

pub fn fevd_with(model: &VarModel, horizon: usize, chol: &CholeskyFactor) -> Result<InfluenceMatrix> {
    let phi = ma_coefficients(model, horizon)?;
    let load = loadings(model, chol)?;
    let n = model.n();
    let mut raw = DMatrix::zeros(n, n);
    for p in &phi {
        let theta = p * &load;
        raw += theta.component_mul(&theta);
    }
    let omega = normalise_rows(model, raw)?;
    InfluenceMatrix::new(model.names.clone(), omega, Horizon::Finite(horizon), chol.ordering.clone())
}

/// Infinite-horizon decomposition of a reduced-form model.
pub fn limit_fevd(model: &VarModel) -> Result<InfluenceMatrix> {
    if model.instantaneous.is_some() {
        return Err(Error::contract("model has instantaneous effects; use limit_fevd_svar"));
    }
    limit_fevd_with(model, &CholeskyFactor::natural(&model.sigma)?, LyapunovMethod::Auto)
}

/// Infinite-horizon decomposition of a structural model.
pub fn limit_fevd_svar(model: &VarModel) -> Result<InfluenceMatrix> {
    limit_fevd_with(model, &CholeskyFactor::natural(&model.sigma)?, LyapunovMethod::Auto)
}

/// Infinite-horizon decomposition through one Lyapunov solve per shock.
pub fn limit_fevd_with(model: &VarModel, chol: &CholeskyFactor, method: LyapunovMethod) -> Result<InfluenceMatrix> {
    let comp = companion(model)?;
    if comp.spectral_radius >= 1.0 - STATIONARITY_EPS {
        return Err(Error::NonStationary {
            radius: comp.spectral_radius,
        });
    }
    let n = model.n();
    let dim = comp.dim();
    let load = loadings(model, chol)?;
    let rhs: Vec<DMatrix<f64>> = (0..n)
        .map(|j| {
            let mut q = DMatrix::zeros(dim, dim);
            let l = load.column(j);
            q.view_mut((0, 0), (n, n)).copy_from(&(l * l.transpose()));
            q
        })
        .collect();
    let xs = linalg::solve_discrete_lyapunov(&comp.matrix, &rhs, method)?;
    let raw = DMatrix::from_fn(n, n, |i, j| xs[j][(i, i)].max(0.0));
    let omega = normalise_rows(model, raw)?;
    InfluenceMatrix::new(model.names.clone(), omega, Horizon::Limit, chol.ordering.clone())
}

/// Response Gramians `G_i`, the leading `n x n` blocks of `W_i = A' W_i A + J' e_i e_i' J`.
///
/// They depend on the dynamics only, so the limit decomposition under any
/// Cholesky ordering follows from them without further Lyapunov solves.
#[derive(Debug, Clone)]
pub struct ResponseGramians {
    pub names: Vec<String>,
    pub horizon: Horizon,
    pub blocks: Vec<DMatrix<f64>>,
    pub structural_inverse: DMatrix<f64>,
}

impl ResponseGramians {
    pub fn compute(model: &VarModel, method: LyapunovMethod) -> Result<Self> {
        let comp = companion(model)?;
        if comp.spectral_radius >= 1.0 - STATIONARITY_EPS {
            return Err(Error::NonStationary {
                radius: comp.spectral_radius,
            });
        }
        let n = model.n();
        let dim = comp.dim();
        let rhs: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                let mut q = DMatrix::zeros(dim, dim);
                q[(i, i)] = 1.0;
                q
            })
            .collect();
        let ws = linalg::solve_discrete_lyapunov(&comp.matrix.transpose(), &rhs, method)?;
        Ok(Self {
            names: model.names.clone(),
            horizon: Horizon::Limit,
            blocks: ws.into_iter().map(|w| w.view((0, 0), (n, n)).into_owned()).collect(),
            structural_inverse: model.structural_inverse()?,
        })
    }

    /// Horizon-`h` counterpart: `G_i = sum_{s<h} Phi_s' e_i e_i' Phi_s`.
    pub fn finite(model: &VarModel, horizon: usize) -> Result<Self> {
        let phi = ma_coefficients(model, horizon)?;
        let n = model.n();
        let blocks = (0..n)
            .map(|i| {
                let mut g = DMatrix::zeros(n, n);
                for p in &phi {
                    let r = p.row(i);
                    g.ger(1.0, &r.transpose(), &r.transpose(), 1.0);
                }
                g
            })
            .collect();
        Ok(Self {
            names: model.names.clone(),
            horizon: Horizon::Finite(horizon),
            blocks,
            structural_inverse: model.structural_inverse()?,
        })
    }

    pub fn at(model: &VarModel, horizon: Horizon, method: LyapunovMethod) -> Result<Self> {
        match horizon {
            Horizon::Limit => Self::compute(model, method),
            Horizon::Finite(h) => Self::finite(model, h),
        }
    }

    pub fn influence(&self, chol: &CholeskyFactor) -> Result<InfluenceMatrix> {
        let n = self.names.len();
        let load = &self.structural_inverse * &chol.factor;
        let mut raw = DMatrix::zeros(n, n);
        for (i, g) in self.blocks.iter().enumerate() {
            let gl = g * &load;
            for j in 0..n {
                raw[(i, j)] = load.column(j).dot(&gl.column(j)).max(0.0);
            }
        }
        for i in 0..n {
            let total = raw.row(i).sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::DegenerateVariance(self.names[i].clone()));
            }
            raw.row_mut(i).unscale_mut(total);
        }
        InfluenceMatrix::new(self.names.clone(), raw, self.horizon, chol.ordering.clone())
    }
}
