//! Least-squares VAR and SVAR estimation, companion form and stability checks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::{LagSpec, TimeSeriesPanel};

/// Default stationarity margin: a model counts as stable when its companion
/// spectral radius is below `1 - STATIONARITY_EPS`.
pub const STATIONARITY_EPS: f64 = 1e-6;

/// Square boolean matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolMatrix {
    n: usize,
    data: Vec<bool>,
}

impl BoolMatrix {
    pub fn filled(n: usize, value: bool) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i * self.n + j] = value;
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        self.data.chunks(self.n).map(<[bool]>::to_vec).collect()
    }
}

/// Which coefficients are estimated (`true`) and which are fixed at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionPattern {
    /// One mask shared by all lags, or one per lag of the lag set.
    pub lag_masks: Vec<BoolMatrix>,
    /// Free entries of the instantaneous matrix `A0`; diagonal must be false.
    pub instantaneous_mask: Option<BoolMatrix>,
}

impl RestrictionPattern {
    pub fn unrestricted(n: usize) -> Self {
        Self {
            lag_masks: vec![BoolMatrix::filled(n, true)],
            instantaneous_mask: None,
        }
    }

    /// Endogenous variables have no lagged effect on exogenous ones.
    pub fn exogenous_endogenous(n: usize, endogenous: &[usize]) -> Self {
        let is_endo = |k: usize| endogenous.contains(&k);
        Self {
            lag_masks: vec![BoolMatrix::from_fn(n, |i, j| is_endo(i) || !is_endo(j))],
            instantaneous_mask: None,
        }
    }

    /// Variables only load on lags of their own class.
    pub fn block_diagonal(n: usize, classes: &[Vec<usize>]) -> Self {
        let class_of = class_lookup(n, classes);
        Self {
            lag_masks: vec![BoolMatrix::from_fn(n, |i, j| {
                class_of[i].is_some() && class_of[i] == class_of[j]
            })],
            instantaneous_mask: None,
        }
    }

    /// Block diagonal over the classes with free rows for the transient variables.
    pub fn classes_with_transient(n: usize, classes: &[Vec<usize>]) -> Self {
        let class_of = class_lookup(n, classes);
        Self {
            lag_masks: vec![BoolMatrix::from_fn(n, |i, j| {
                class_of[i].is_none() || class_of[i] == class_of[j]
            })],
            instantaneous_mask: None,
        }
    }

    /// Adds a free instantaneous effect of `from` on `to`.
    pub fn with_instantaneous(mut self, to: usize, from: usize) -> Result<Self> {
        let n = self.dim();
        if to == from {
            return Err(Error::contract("instantaneous self-effects are not allowed"));
        }
        let mask = self
            .instantaneous_mask
            .get_or_insert_with(|| BoolMatrix::filled(n, false));
        mask.set(to, from, true);
        Ok(self)
    }

    pub fn forbid(mut self, lag_position: usize, i: usize, j: usize) -> Self {
        let k = lag_position.min(self.lag_masks.len() - 1);
        self.lag_masks[k].set(i, j, false);
        self
    }

    fn dim(&self) -> usize {
        self.lag_masks[0].dim()
    }

    fn lag_mask(&self, position: usize) -> &BoolMatrix {
        if self.lag_masks.len() == 1 {
            &self.lag_masks[0]
        } else {
            &self.lag_masks[position]
        }
    }

    fn validate(&self, n: usize, lag_count: usize) -> Result<()> {
        if self.lag_masks.is_empty() || self.lag_masks.iter().any(|m| m.dim() != n) {
            return Err(Error::contract(format!("restriction masks must be {n} x {n}")));
        }
        if self.lag_masks.len() != 1 && self.lag_masks.len() != lag_count {
            return Err(Error::contract("need one lag mask or one per lag"));
        }
        if let Some(m) = &self.instantaneous_mask {
            if m.dim() != n || (0..n).any(|i| m.get(i, i)) {
                return Err(Error::contract("instantaneous mask must be n x n with a zero diagonal"));
            }
        }
        Ok(())
    }
}

fn class_lookup(n: usize, classes: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut class_of = vec![None; n];
    for (c, members) in classes.iter().enumerate() {
        for &m in members {
            class_of[m] = Some(c);
        }
    }
    class_of
}

/// Coefficients on lagged exogenous series, which have no equations of their own.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousPart {
    pub names: Vec<String>,
    /// `n x m` matrices, one per lag of the lag set.
    pub coefficients: Vec<DMatrix<f64>>,
}

/// An estimated (or specified) VAR/SVAR.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub names: Vec<String>,
    pub lag_spec: LagSpec,
    pub intercept: DVector<f64>,
    /// `A_l`, one per lag of `lag_spec`, in the same order.
    pub coefficients: Vec<DMatrix<f64>>,
    pub instantaneous: Option<DMatrix<f64>>,
    pub exogenous: Option<ExogenousPart>,
    /// `n x T'` residuals, empty for hand-specified models.
    pub residuals: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub pattern: Option<RestrictionPattern>,
    /// OLS standard errors matching `coefficients`; zero where restricted.
    pub std_errors: Vec<DMatrix<f64>>,
    pub spectral_radius: f64,
}

impl VarModel {
    /// A model with known coefficients and residual covariance.
    pub fn from_parts(
        names: Vec<String>,
        lag_spec: LagSpec,
        intercept: DVector<f64>,
        coefficients: Vec<DMatrix<f64>>,
        instantaneous: Option<DMatrix<f64>>,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        let n = names.len();
        if coefficients.len() != lag_spec.count() {
            return Err(Error::contract("one coefficient matrix per lag is required"));
        }
        if intercept.len() != n
            || sigma.shape() != (n, n)
            || coefficients.iter().any(|a| a.shape() != (n, n))
            || instantaneous.as_ref().is_some_and(|a| a.shape() != (n, n))
        {
            return Err(Error::contract("model dimensions are inconsistent"));
        }
        let mut model = Self {
            names,
            lag_spec,
            intercept,
            std_errors: coefficients.iter().map(|a| DMatrix::zeros(a.nrows(), a.ncols())).collect(),
            coefficients,
            instantaneous,
            exogenous: None,
            residuals: DMatrix::zeros(n, 0),
            sigma,
            pattern: None,
            spectral_radius: f64::NAN,
        };
        model.spectral_radius = companion(&model)?.spectral_radius;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// `(I - A0)^{-1}`, the identity for reduced-form models.
    pub fn structural_inverse(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        match &self.instantaneous {
            None => Ok(DMatrix::identity(n, n)),
            Some(a0) => {
                let m = DMatrix::identity(n, n) - a0;
                let inv = m.clone().try_inverse().ok_or(Error::StructuralSingularity)?;
                let cond = linalg::operator_norm(&m) * linalg::operator_norm(&inv);
                if !cond.is_finite() || cond > 1e12 {
                    return Err(Error::StructuralSingularity);
                }
                Ok(inv)
            }
        }
    }

    /// Reduced-form lag matrices `(I - A0)^{-1} A_l`.
    pub fn reduced_coefficients(&self) -> Result<Vec<DMatrix<f64>>> {
        let b = self.structural_inverse()?;
        Ok(self.coefficients.iter().map(|a| &b * a).collect())
    }

    /// Lag matrix for lag `l`, zero when `l` is not in the lag set.
    pub fn coefficient_at(&self, lag: usize) -> Option<&DMatrix<f64>> {
        self.lag_spec
            .lags()
            .iter()
            .position(|&l| l == lag)
            .map(|k| &self.coefficients[k])
    }

    /// `coefficient / std_error` per lag; NaN where the coefficient was restricted.
    pub fn t_statistics(&self) -> Vec<DMatrix<f64>> {
        self.coefficients
            .iter()
            .zip(&self.std_errors)
            .map(|(a, se)| a.zip_map(se, |c, s| if s > 0.0 { c / s } else { f64::NAN }))
            .collect()
    }

    /// Runs the fitted dynamics forward.
    ///
    /// `initial` is `n x p` (oldest first), `shocks` is `n x steps`, and
    /// `exogenous`, when the model has an exogenous part, is `m x (p + steps)`
    /// aligned with the output. Returns `n x (p + steps)`.
    pub fn propagate(
        &self,
        initial: &DMatrix<f64>,
        shocks: &DMatrix<f64>,
        exogenous: Option<&DMatrix<f64>>,
    ) -> Result<DMatrix<f64>> {
        let n = self.n();
        let p = self.lag_spec.max_lag();
        if initial.shape() != (n, p) || shocks.nrows() != n {
            return Err(Error::contract("propagation inputs have the wrong shape"));
        }
        let steps = shocks.ncols();
        if let Some(ex) = &self.exogenous {
            let x = exogenous.ok_or_else(|| Error::contract("exogenous path required"))?;
            if x.shape() != (ex.names.len(), p + steps) {
                return Err(Error::contract("exogenous path has the wrong shape"));
            }
        }
        let b = self.structural_inverse()?;
        let mut out = DMatrix::<f64>::zeros(n, p + steps);
        out.columns_mut(0, p).copy_from(initial);
        let mut rhs = DVector::<f64>::zeros(n);
        for s in 0..steps {
            let t = p + s;
            rhs.copy_from(&self.intercept);
            rhs += shocks.column(s);
            for (a, &l) in self.coefficients.iter().zip(self.lag_spec.lags()) {
                rhs.gemv(1.0, a, &out.column(t - l), 1.0);
            }
            if let (Some(ex), Some(x)) = (&self.exogenous, exogenous) {
                for (c, &l) in ex.coefficients.iter().zip(self.lag_spec.lags()) {
                    rhs.gemv(1.0, c, &x.column(t - l), 1.0);
                }
            }
            let y = &b * &rhs;
            out.column_mut(t).copy_from(&y);
        }
        Ok(out)
    }
}

/// Stacked VAR(1) form of a VAR(p).
#[derive(Debug, Clone)]
pub struct CompanionForm {
    pub matrix: DMatrix<f64>,
    pub n: usize,
    pub p: usize,
    pub spectral_radius: f64,
    /// `(I - A0)^{-1}` for structural models.
    pub structural_inverse: Option<DMatrix<f64>>,
}

impl CompanionForm {
    /// Companion of `y_t = A_1 y_{t-1} + ... + A_p y_{t-p}` with contiguous lags.
    pub fn from_coefficients(blocks: &[DMatrix<f64>]) -> Result<Self> {
        let p = blocks.len();
        if p == 0 {
            return Err(Error::contract("need at least one lag matrix"));
        }
        let n = blocks[0].nrows();
        let mut matrix = DMatrix::zeros(n * p, n * p);
        for (k, a) in blocks.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::contract("lag matrices must be square and equal-sized"));
            }
            matrix.view_mut((0, k * n), (n, n)).copy_from(a);
        }
        for k in 1..p {
            matrix
                .view_mut((k * n, (k - 1) * n), (n, n))
                .fill_with_identity();
        }
        let spectral_radius = linalg::spectral_radius(&matrix);
        Ok(Self {
            matrix,
            n,
            p,
            spectral_radius,
            structural_inverse: None,
        })
    }

    /// Dimension `n p`.
    pub fn dim(&self) -> usize {
        self.n * self.p
    }

    /// `J = [I_n 0 ... 0]`.
    pub fn selector(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.n, self.dim());
        j.view_mut((0, 0), (self.n, self.n)).fill_with_identity();
        j
    }
}

/// Companion of the model's reduced-form dynamics; lag gaps become zero blocks.
pub fn companion(model: &VarModel) -> Result<CompanionForm> {
    let n = model.n();
    let p = model.lag_spec.max_lag();
    let reduced = model.reduced_coefficients()?;
    let mut blocks = vec![DMatrix::zeros(n, n); p];
    for (a, &l) in reduced.into_iter().zip(model.lag_spec.lags()) {
        blocks[l - 1] = a;
    }
    let mut comp = CompanionForm::from_coefficients(&blocks)?;
    if model.instantaneous.is_some() {
        comp.structural_inverse = Some(model.structural_inverse()?);
    }
    Ok(comp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityReport {
    pub stationary: bool,
    pub spectral_radius: f64,
    /// `||(I - A0)^{-1}||_2` for structural models.
    pub structural_norm: Option<f64>,
    pub structural_norm_at_most_one: Option<bool>,
}

/// Reports whether the companion is stable with the given margin.
pub fn check_stationary(comp: &CompanionForm, tolerance: f64) -> StationarityReport {
    let structural_norm = comp.structural_inverse.as_ref().map(linalg::operator_norm);
    StationarityReport {
        stationary: comp.spectral_radius < 1.0 - tolerance,
        spectral_radius: comp.spectral_radius,
        structural_norm,
        structural_norm_at_most_one: structural_norm.map(|v| v <= 1.0 + 1e-12),
    }
}

/// Fits a VAR equation by equation with OLS.
///
/// Restricted coefficients are left out of the regressor set. Exogenous
/// series enter with the same lags but get no equations.
pub fn fit_var(
    panel: &TimeSeriesPanel,
    lags: &LagSpec,
    pattern: Option<&RestrictionPattern>,
    exogenous: Option<&TimeSeriesPanel>,
) -> Result<VarModel> {
    let n = panel.n();
    let m = exogenous.map_or(0, TimeSeriesPanel::n);
    let big_t = panel.len();
    let p = lags.max_lag();
    let nl = lags.count();
    if let Some(x) = exogenous {
        if x.len() != big_t {
            return Err(Error::contract("exogenous panel length differs from the endogenous panel"));
        }
    }
    if let Some(pat) = pattern {
        pat.validate(n, nl)?;
    }
    let inst = pattern.and_then(|p| p.instantaneous_mask.as_ref());
    let full_regressors = 1 + n * nl + m * nl + inst.map_or(0, |mask| mask.count_true());
    if big_t <= p || big_t <= full_regressors {
        return Err(Error::DegreesOfFreedom {
            observations: big_t,
            regressors: full_regressors,
        });
    }
    let t_eff = big_t - p;

    // regressor catalogue: intercept, lagged endogenous, lagged exogenous, contemporaneous
    #[derive(Clone, Copy)]
    enum Reg {
        Const,
        Lag(usize, usize),
        Exo(usize, usize),
        Now(usize),
    }
    let y = panel.values();
    let column_of = |r: Reg| -> DVector<f64> {
        DVector::from_fn(t_eff, |s, _| {
            let t = s + p;
            match r {
                Reg::Const => 1.0,
                Reg::Lag(k, j) => y[(j, t - lags.lags()[k])],
                Reg::Exo(k, j) => exogenous.expect("exogenous").values()[(j, t - lags.lags()[k])],
                Reg::Now(j) => y[(j, t)],
            }
        })
    };

    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut catalogue: Vec<Reg> = vec![Reg::Const];
    for k in 0..nl {
        for j in 0..n {
            catalogue.push(Reg::Lag(k, j));
        }
    }
    for k in 0..nl {
        for j in 0..m {
            catalogue.push(Reg::Exo(k, j));
        }
    }
    for j in 0..n {
        catalogue.push(Reg::Now(j));
    }
    for i in 0..n {
        let selected: Vec<usize> = catalogue
            .iter()
            .enumerate()
            .filter(|(_, r)| match **r {
                Reg::Const | Reg::Exo(..) => true,
                Reg::Lag(k, j) => pattern.is_none_or(|pat| pat.lag_mask(k).get(i, j)),
                Reg::Now(j) => inst.is_some_and(|mask| mask.get(i, j)),
            })
            .map(|(c, _)| c)
            .collect();
        groups.entry(selected).or_default().push(i);
    }

    let mut intercept = DVector::zeros(n);
    let mut coefficients = vec![DMatrix::zeros(n, n); nl];
    let mut std_errors = vec![DMatrix::zeros(n, n); nl];
    let mut exo_coefs = vec![DMatrix::zeros(n, m); nl];
    let mut a0 = inst.map(|_| DMatrix::zeros(n, n));
    let mut residuals = DMatrix::zeros(n, t_eff);
    let mut dof = vec![0usize; n];

    for (selected, equations) in &groups {
        let k = selected.len();
        if t_eff <= k {
            return Err(Error::DegreesOfFreedom {
                observations: big_t,
                regressors: k,
            });
        }
        let mut x = DMatrix::zeros(t_eff, k);
        for (c, &r) in selected.iter().enumerate() {
            x.set_column(c, &column_of(catalogue[r]));
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let rmax = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= 1e-10 * rmax) || rmax == 0.0 {
            return Err(Error::RankDeficient(panel.names()[equations[0]].clone()));
        }
        let r_inv = r
            .clone()
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| Error::RankDeficient(panel.names()[equations[0]].clone()))?;
        let xtx_inv_diag = DVector::from_fn(k, |c, _| r_inv.row(c).norm_squared());
        for &i in equations {
            let target = DVector::from_fn(t_eff, |s, _| y[(i, s + p)]);
            let mut qty = target.clone();
            qr.q_tr_mul(&mut qty);
            let beta = r
                .solve_upper_triangular(&qty.rows(0, k).into_owned())
                .ok_or_else(|| Error::RankDeficient(panel.names()[i].clone()))?;
            let resid = &target - &x * &beta;
            let ssr = resid.norm_squared();
            let s2 = ssr / (t_eff - k) as f64;
            residuals.set_row(i, &resid.transpose());
            dof[i] = t_eff - k;
            for (c, &reg) in selected.iter().enumerate() {
                let se = (s2 * xtx_inv_diag[c]).sqrt();
                match catalogue[reg] {
                    Reg::Const => intercept[i] = beta[c],
                    Reg::Lag(kk, j) => {
                        coefficients[kk][(i, j)] = beta[c];
                        std_errors[kk][(i, j)] = se;
                    }
                    Reg::Exo(kk, j) => exo_coefs[kk][(i, j)] = beta[c],
                    Reg::Now(j) => a0.as_mut().expect("instantaneous")[(i, j)] = beta[c],
                }
            }
        }
    }

    let cross = &residuals * residuals.transpose();
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        cross[(i, j)] / ((dof[i] as f64) * (dof[j] as f64)).sqrt()
    });
    let sigma = (&sigma + sigma.transpose()) * 0.5;

    let mut model = VarModel {
        names: panel.names().to_vec(),
        lag_spec: lags.clone(),
        intercept,
        coefficients,
        instantaneous: a0,
        exogenous: exogenous.map(|x| ExogenousPart {
            names: x.names().to_vec(),
            coefficients: exo_coefs,
        }),
        residuals,
        sigma,
        pattern: pattern.cloned(),
        std_errors,
        spectral_radius: f64::NAN,
    };
    model.spectral_radius = companion(&model)?.spectral_radius;
    Ok(model)
}

/// Schwarz criterion of an unrestricted fit.
pub fn bic(panel: &TimeSeriesPanel, lags: &LagSpec) -> Result<f64> {
    let model = fit_var(panel, lags, None, None)?;
    let t_eff = model.residuals.ncols() as f64;
    let ml = &model.residuals * model.residuals.transpose() / t_eff;
    let det = ml.determinant();
    if det <= 0.0 {
        return Err(Error::Numerical {
            message: "singular residual covariance".into(),
            residual: det,
        });
    }
    let params = (model.n() * (1 + model.n() * lags.count())) as f64;
    Ok(det.ln() + params * t_eff.ln() / t_eff)
}

/// Contiguous lag length in `1..=max_p` minimising [`bic`], all fits on a common sample.
pub fn select_lag_bic(panel: &TimeSeriesPanel, max_p: usize) -> Result<LagSpec> {
    if max_p == 0 {
        return Err(Error::contract("max_p must be positive"));
    }
    let mut best: Option<(f64, usize)> = None;
    for p in 1..=max_p {
        let sub = panel.slice_from(max_p - p)?;
        let score = bic(&sub, &LagSpec::contiguous(p)?)?;
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, p));
        }
    }
    LagSpec::contiguous(best.expect("max_p >= 1").1)
}

/// JSON document describing a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub names: Vec<String>,
    pub lags: Vec<usize>,
    pub intercept: Vec<f64>,
    pub coefficients: Vec<LagCoefficients>,
    pub instantaneous: Option<Vec<Vec<f64>>>,
    pub exogenous_names: Vec<String>,
    pub sigma: Vec<Vec<f64>>,
    pub lag_masks: Option<Vec<Vec<Vec<bool>>>>,
    pub instantaneous_mask: Option<Vec<Vec<bool>>>,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagCoefficients {
    pub lag: usize,
    pub matrix: Vec<Vec<f64>>,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl VarModel {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            schema_version: crate::SCHEMA_VERSION,
            names: self.names.clone(),
            lags: self.lag_spec.lags().to_vec(),
            intercept: self.intercept.iter().copied().collect(),
            coefficients: self
                .coefficients
                .iter()
                .zip(self.lag_spec.lags())
                .map(|(a, &lag)| LagCoefficients {
                    lag,
                    matrix: rows_of(a),
                })
                .collect(),
            instantaneous: self.instantaneous.as_ref().map(rows_of),
            exogenous_names: self.exogenous.as_ref().map_or_else(Vec::new, |e| e.names.clone()),
            sigma: rows_of(&self.sigma),
            lag_masks: self
                .pattern
                .as_ref()
                .map(|p| p.lag_masks.iter().map(BoolMatrix::rows).collect()),
            instantaneous_mask: self
                .pattern
                .as_ref()
                .and_then(|p| p.instantaneous_mask.as_ref().map(BoolMatrix::rows)),
            spectral_radius: self.spectral_radius,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("y{i}")).collect()
    }

    fn ar1_panel(coef: f64, len: usize, seed: u64) -> TimeSeriesPanel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut y = vec![0.0; len];
        for t in 1..len {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[t] = coef * y[t - 1] + e;
        }
        TimeSeriesPanel::from_series(vec!["y"], vec![y]).unwrap()
    }

    #[test]
    fn univariate_matches_closed_form_ols() {
        let panel = ar1_panel(0.5, 400, 7);
        let model = fit_var(&panel, &LagSpec::contiguous(1).unwrap(), None, None).unwrap();
        // closed-form simple regression of y_t on (1, y_{t-1})
        let y = panel.series(0);
        let x: Vec<f64> = y[..y.len() - 1].to_vec();
        let z: Vec<f64> = y[1..].to_vec();
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let mz = z.iter().sum::<f64>() / z.len() as f64;
        let sxz: f64 = x.iter().zip(&z).map(|(a, b)| (a - mx) * (b - mz)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let slope = sxz / sxx;
        assert!((model.coefficients[0][(0, 0)] - slope).abs() < 1e-12);
        assert!((model.intercept[0] - (mz - slope * mx)).abs() < 1e-12);
        assert!((slope - 0.5).abs() < 0.15);
    }

    #[test]
    fn masked_coefficient_is_exactly_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let len = 200;
        let mut a = vec![0.0; len];
        let mut b = vec![0.0; len];
        for t in 1..len {
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            a[t] = 0.4 * a[t - 1] + 0.3 * b[t - 1] + e1;
            b[t] = 0.5 * b[t - 1] + e2;
        }
        let panel = TimeSeriesPanel::from_series(vec!["a", "b"], vec![a, b]).unwrap();
        let pattern = RestrictionPattern::unrestricted(2).forbid(0, 0, 1);
        let model = fit_var(&panel, &LagSpec::contiguous(1).unwrap(), Some(&pattern), None).unwrap();
        assert_eq!(model.coefficients[0][(0, 1)], 0.0);
        assert_ne!(model.coefficients[0][(1, 0)], 0.0);
    }

    #[test]
    fn too_short_sample_is_rejected() {
        // T = n p + 1
        let panel = TimeSeriesPanel::from_series(
            vec!["a", "b"],
            vec![vec![1.0, 2.0, 0.5, 1.5, 3.0], vec![0.3, 0.1, 0.7, 0.2, 0.9]],
        )
        .unwrap();
        let err = fit_var(&panel, &LagSpec::contiguous(2).unwrap(), None, None).unwrap_err();
        assert!(matches!(err, Error::DegreesOfFreedom { .. }));
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let len = 300;
        let mut series = vec![vec![0.0; len]; 3];
        for t in 2..len {
            for i in 0..3 {
                let e: f64 = StandardNormal.sample(&mut rng);
                series[i][t] = 0.3 * series[i][t - 1] + 0.1 * series[(i + 1) % 3][t - 2] + e;
            }
        }
        let panel = TimeSeriesPanel::from_series(names(3), series).unwrap();
        let lags = LagSpec::contiguous(2).unwrap();
        let model = fit_var(&panel, &lags, None, None).unwrap();
        let y = panel.values();
        for i in 0..3 {
            let u = model.residuals.row(i);
            assert!(u.sum().abs() < 1e-8);
            for l in 1..=2 {
                for j in 0..3 {
                    let dot: f64 = (0..u.len()).map(|s| u[s] * y[(j, s + 2 - l)]).sum();
                    assert!(dot.abs() < 1e-8, "eq {i} lag {l} var {j}: {dot}");
                }
            }
        }
        assert!((&model.sigma - model.sigma.transpose()).amax() < 1e-12);
    }

    #[test]
    fn companion_layout() {
        let model = VarModel::from_parts(
            vec!["y".into()],
            LagSpec::contiguous(2).unwrap(),
            DVector::zeros(1),
            vec![DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 0.25)],
            None,
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let c = companion(&model).unwrap();
        assert_eq!(c.matrix, DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 1.0, 0.0]));
        let j = c.selector();
        assert_eq!(&j * j.transpose(), DMatrix::identity(1, 1));
    }

    #[test]
    fn lag_gaps_are_zero_blocks() {
        let model = VarModel::from_parts(
            names(2),
            LagSpec::new(vec![1, 3]).unwrap(),
            DVector::zeros(2),
            vec![DMatrix::from_element(2, 2, 0.1), DMatrix::from_element(2, 2, 0.2)],
            None,
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let c = companion(&model).unwrap();
        assert_eq!(c.dim(), 6);
        assert_eq!(c.matrix.view((0, 2), (2, 2)).amax(), 0.0);
        assert_eq!(c.matrix[(0, 4)], 0.2);
        assert_eq!(c.matrix[(2, 0)], 1.0);
        assert_eq!(c.matrix[(4, 2)], 1.0);
    }

    #[test]
    fn singular_structural_matrix() {
        let mut a0 = DMatrix::zeros(2, 2);
        a0[(0, 1)] = 1.0;
        a0[(1, 0)] = 1.0;
        let r = VarModel::from_parts(
            names(2),
            LagSpec::contiguous(1).unwrap(),
            DVector::zeros(2),
            vec![DMatrix::identity(2, 2) * 0.2],
            Some(a0),
            DMatrix::identity(2, 2),
        );
        assert!(matches!(r, Err(Error::StructuralSingularity)));
    }

    #[test]
    fn stationarity_reports() {
        let c = CompanionForm::from_coefficients(&[DMatrix::identity(3, 3) * 0.99]).unwrap();
        let r = check_stationary(&c, STATIONARITY_EPS);
        assert!(r.stationary);
        assert!((r.spectral_radius - 0.99).abs() < 1e-12);

        let c = CompanionForm::from_coefficients(&[DMatrix::identity(2, 2)]).unwrap();
        let r = check_stationary(&c, STATIONARITY_EPS);
        assert!(!r.stationary);
        assert!((r.spectral_radius - 1.0).abs() < 1e-12);

        let c = CompanionForm::from_coefficients(&[DMatrix::from_element(1, 1, 1.2)]).unwrap();
        let r = check_stationary(&c, STATIONARITY_EPS);
        assert!(!r.stationary);
        assert!((r.spectral_radius - 1.2).abs() < 1e-12);
    }

    #[test]
    fn structural_norm_is_reported() {
        let mut a0 = DMatrix::zeros(2, 2);
        a0[(0, 1)] = 0.3;
        let model = VarModel::from_parts(
            names(2),
            LagSpec::contiguous(1).unwrap(),
            DVector::zeros(2),
            vec![DMatrix::identity(2, 2) * 0.5],
            Some(a0),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let r = check_stationary(&companion(&model).unwrap(), STATIONARITY_EPS);
        assert!(r.stationary);
        assert!(r.structural_norm.unwrap() > 1.0);
        assert_eq!(r.structural_norm_at_most_one, Some(false));
    }

    #[test]
    fn patterns_from_classes() {
        let p = RestrictionPattern::exogenous_endogenous(3, &[2]);
        assert!(!p.lag_masks[0].get(0, 2));
        assert!(p.lag_masks[0].get(2, 0));
        let b = RestrictionPattern::block_diagonal(4, &[vec![0, 1], vec![2, 3]]);
        assert!(b.lag_masks[0].get(1, 0));
        assert!(!b.lag_masks[0].get(1, 2));
    }

    #[test]
    fn instantaneous_estimation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let len = 3000;
        let mut a = vec![0.0; len];
        let mut b = vec![0.0; len];
        for t in 1..len {
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            b[t] = 0.5 * b[t - 1] + e2;
            a[t] = 0.6 * b[t] + 0.3 * a[t - 1] + e1;
        }
        let panel = TimeSeriesPanel::from_series(vec!["a", "b"], vec![a, b]).unwrap();
        let pattern = RestrictionPattern::unrestricted(2).with_instantaneous(0, 1).unwrap();
        let model = fit_var(&panel, &LagSpec::contiguous(1).unwrap(), Some(&pattern), None).unwrap();
        let a0 = model.instantaneous.as_ref().unwrap();
        assert!((a0[(0, 1)] - 0.6).abs() < 0.05);
        assert_eq!(a0[(1, 0)], 0.0);
    }

    #[test]
    fn bic_prefers_generating_lag() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let len = 2000;
        let mut y = vec![0.0; len];
        for t in 2..len {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[t] = 0.3 * y[t - 1] + 0.4 * y[t - 2] + e;
        }
        let panel = TimeSeriesPanel::from_series(vec!["y"], vec![y]).unwrap();
        assert_eq!(select_lag_bic(&panel, 5).unwrap().max_lag(), 2);
    }

    #[test]
    fn propagate_without_shocks_is_deterministic_recursion() {
        let model = VarModel::from_parts(
            vec!["y".into()],
            LagSpec::contiguous(1).unwrap(),
            DVector::from_element(1, 1.0),
            vec![DMatrix::from_element(1, 1, 0.5)],
            None,
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let out = model
            .propagate(&DMatrix::from_element(1, 1, 2.0), &DMatrix::zeros(1, 3), None)
            .unwrap();
        assert_eq!(out.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 2.0, 2.0, 2.0]);
    }
}
