//! Resampling and the replicate chain shared by every bootstrap test.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{CholeskyFactor, Horizon, InfluenceMatrix, ResponseGramians};
use crate::equilibrium::{solve_pi, SolveOptions};
use crate::error::{Error, Result};
use crate::linalg::LyapunovMethod;
use crate::panel::{LagSpec, TimeSeriesPanel};
use crate::rng::stream_seed;
use crate::var::{fit_var, RestrictionPattern, VarModel, STATIONARITY_EPS};

/// How bootstrap datasets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BootstrapScheme {
    /// Centered fitted residuals resampled with replacement and run through the fitted dynamics.
    #[default]
    Residual,
    /// Overlapping blocks of observations concatenated; `block_len = 0` picks `ceil(T^(1/3))`.
    MovingBlock { block_len: usize },
}

/// How a z-statistic is turned into a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// `z = mean / rms` across replicates; endogenous when `z < z_{1-alpha}`.
    Paper,
    /// Bootstrap mean of an influence entry over its centered standard deviation,
    /// read off the graph of significant entries.
    #[default]
    Conventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    #[serde(default)]
    pub scheme: BootstrapScheme,
    pub lag_spec: LagSpec,
    pub horizon: Horizon,
    #[serde(default)]
    pub decision_rule: DecisionRule,
    #[serde(default)]
    pub lyapunov: LyapunovMethod,
}

/// Replicate counts below this draw a warning.
pub const RECOMMENDED_REPLICATES: usize = 100;

/// Failed replicates are redrawn until this many attempts per requested replicate.
pub const REDRAW_FACTOR: usize = 10;

impl BootstrapConfig {
    /// Defaults: 200 replicates, seed 0, `alpha = 0.05`, residual resampling and
    /// a horizon one step past the longest lag.
    pub fn new(lag_spec: LagSpec) -> Self {
        let h = lag_spec.max_lag() + 1;
        Self {
            replicates: 200,
            seed: 0,
            alpha: 0.05,
            scheme: BootstrapScheme::Residual,
            lag_spec,
            horizon: Horizon::Finite(h),
            decision_rule: DecisionRule::Conventional,
            lyapunov: LyapunovMethod::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::contract("at least one bootstrap replicate is required"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::contract("alpha must lie in (0, 0.5]"));
        }
        Ok(())
    }

    /// Settings that are valid but unwise, as messages.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.replicates < RECOMMENDED_REPLICATES {
            out.push(format!(
                "{} bootstrap replicates requested; at least {RECOMMENDED_REPLICATES} are recommended",
                self.replicates
            ));
        }
        out
    }

    /// One-sided standard normal critical value `z_{1-alpha}`.
    pub fn critical_value(&self) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - self.alpha)
    }

    /// Critical value for the largest of `m` statistics: the Sidak level `1 - (1 - alpha)^(1/m)`.
    pub fn critical_value_max(&self, m: usize) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        let a = 1.0 - (1.0 - self.alpha).powf(1.0 / m.max(1) as f64);
        Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - a)
    }
}

/// Data and model specification a bootstrap is run against.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    pub panel: &'a TimeSeriesPanel,
    pub exogenous: Option<&'a TimeSeriesPanel>,
    pub pattern: Option<&'a RestrictionPattern>,
}

impl<'a> Design<'a> {
    pub fn plain(panel: &'a TimeSeriesPanel) -> Self {
        Self {
            panel,
            exogenous: None,
            pattern: None,
        }
    }

    pub fn fit(&self, lags: &LagSpec) -> Result<VarModel> {
        fit_var(self.panel, lags, self.pattern, self.exogenous)
    }
}

/// Generates one bootstrap panel.
pub fn bootstrap_replicate(
    panel: &TimeSeriesPanel,
    model: &VarModel,
    rng: &mut impl Rng,
    scheme: BootstrapScheme,
    exogenous: Option<&TimeSeriesPanel>,
) -> Result<TimeSeriesPanel> {
    match scheme {
        BootstrapScheme::Residual => residual_replicate(panel, model, rng, exogenous),
        BootstrapScheme::MovingBlock { block_len } => block_replicate(panel, rng, block_len),
    }
}

fn residual_replicate(
    panel: &TimeSeriesPanel,
    model: &VarModel,
    rng: &mut impl Rng,
    exogenous: Option<&TimeSeriesPanel>,
) -> Result<TimeSeriesPanel> {
    if model.spectral_radius >= 1.0 - STATIONARITY_EPS {
        return Err(Error::NonStationary {
            radius: model.spectral_radius,
        });
    }
    let n = model.n();
    let p = model.lag_spec.max_lag();
    let len = panel.len();
    let steps = len - p;
    let resid = &model.residuals;
    let m = resid.ncols();
    if m == 0 {
        return Err(Error::contract("model has no residuals to resample"));
    }
    let means = resid.column_mean();
    let mut shocks = DMatrix::zeros(n, steps);
    for s in 0..steps {
        let k = rng.random_range(0..m);
        shocks.set_column(s, &(resid.column(k) - &means));
    }
    let initial = panel.values().columns(0, p).into_owned();
    let x = exogenous.map(|e| e.values().clone());
    let values = model.propagate(&initial, &shocks, x.as_ref())?;
    panel.with_values(values)
}

fn block_replicate(panel: &TimeSeriesPanel, rng: &mut impl Rng, block_len: usize) -> Result<TimeSeriesPanel> {
    let len = panel.len();
    let b = if block_len == 0 {
        (len as f64).cbrt().ceil() as usize
    } else {
        block_len
    }
    .clamp(1, len);
    let mut values = DMatrix::zeros(panel.n(), len);
    let mut t = 0;
    while t < len {
        let start = rng.random_range(0..=len - b);
        for k in 0..b.min(len - t) {
            values.set_column(t, &panel.values().column(start + k));
            t += 1;
        }
    }
    panel.with_values(values)
}

/// Ordering-independent output of one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateDraw {
    pub gramians: ResponseGramians,
    pub sigma: DMatrix<f64>,
}

/// Fits the design, then draws, refits and decomposes `replicates` bootstrap panels in parallel.
pub fn draw_replicates(design: Design<'_>, config: &BootstrapConfig, tag: u64) -> Result<Vec<ReplicateDraw>> {
    config.validate()?;
    let base = design.fit(&config.lag_spec)?;
    if base.spectral_radius >= 1.0 - STATIONARITY_EPS {
        return Err(Error::NonStationary {
            radius: base.spectral_radius,
        });
    }
    draw_from_model(design, &base, config, tag)
}

/// As [`draw_replicates`], resampling from a given model.
pub fn draw_from_model(
    design: Design<'_>,
    generator: &VarModel,
    config: &BootstrapConfig,
    tag: u64,
) -> Result<Vec<ReplicateDraw>> {
    draw_with(design, generator, config, tag, |data| {
        let d = Design { panel: data, ..design };
        let model = d.fit(&config.lag_spec)?;
        let gramians = ResponseGramians::at(&model, config.horizon, config.lyapunov)?;
        Ok(ReplicateDraw {
            gramians,
            sigma: model.sigma,
        })
    })
}

/// Draws `config.replicates` panels from `generator` and maps each through `f`.
///
/// A replicate whose draw or `f` fails is redrawn from a fresh stream. Results
/// come back in replicate order whatever the thread count.
pub fn draw_with<T, F>(
    design: Design<'_>,
    generator: &VarModel,
    config: &BootstrapConfig,
    tag: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&TimeSeriesPanel) -> Result<T> + Sync,
{
    let draws: Vec<Result<(T, usize)>> = (0..config.replicates)
        .into_par_iter()
        .map(|k| {
            let mut last = None;
            for attempt in 0..REDRAW_FACTOR {
                let mut rng = ChaCha8Rng::from_seed(stream_seed(config.seed, tag, k as u64, attempt as u64));
                let outcome = bootstrap_replicate(design.panel, generator, &mut rng, config.scheme, design.exogenous)
                    .and_then(|data| f(&data));
                match outcome {
                    Ok(d) => return Ok((d, attempt + 1)),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect();
    let mut out = Vec::with_capacity(draws.len());
    let mut attempts = 0;
    for d in draws {
        match d {
            Ok((d, used)) => {
                attempts += used;
                out.push(d);
            }
            Err(e) => {
                return Err(Error::Bootstrap(format!(
                    "a replicate failed {REDRAW_FACTOR} times; last error: {e}"
                )))
            }
        }
    }
    if attempts > REDRAW_FACTOR * config.replicates {
        return Err(Error::Bootstrap("redraw budget exhausted".into()));
    }
    if attempts > config.replicates {
        log::debug!("{} replicates redrawn", attempts - config.replicates);
    }
    Ok(out)
}

/// Replicate influence matrix and global distribution under the chained ordering.
#[derive(Debug, Clone)]
pub struct ChainStep {
    pub omega: InfluenceMatrix,
    pub pi: DVector<f64>,
}

/// Seeded random first ordering.
pub fn initial_ordering(n: usize, seed: u64, tag: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::from_seed(stream_seed(seed, tag, u64::MAX, 0));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Variables by descending value, ties by index.
pub fn descending_order(pi: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.sort_by(|&a, &b| pi[b].total_cmp(&pi[a]).then(a.cmp(&b)));
    order
}

/// Walks the replicates in order, factorising each under the ordering left by the previous one.
pub fn chain(draws: &[ReplicateDraw], seed: u64, tag: u64) -> Result<Vec<ChainStep>> {
    let Some(first) = draws.first() else {
        return Ok(Vec::new());
    };
    let mut ordering = initial_ordering(first.sigma.nrows(), seed, tag);
    let mut out = Vec::with_capacity(draws.len());
    for d in draws {
        let chol = CholeskyFactor::new(&d.sigma, Some(&ordering))?;
        let omega = d.gramians.influence(&chol)?;
        let pi = solve_pi(&omega, &SolveOptions::default())?.values();
        ordering = descending_order(&pi);
        out.push(ChainStep { omega, pi });
    }
    Ok(out)
}

/// Mean, root mean square and centered standard deviation of a replicate statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub rms: f64,
    pub sd: f64,
}

impl Moments {
    /// Sums in iteration order, so a fixed replicate order gives fixed bits.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let g = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: 0.0,
                rms: 0.0,
                sd: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / g;
        let rms = (values.iter().map(|v| v * v).sum::<f64>() / g).sqrt();
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (g - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, rms, sd }
    }
}

/// Largest magnitude a ratio statistic takes when its scale is zero.
pub const RATIO_CAP: f64 = 1e12;

/// `num / den`, with `0/0 = 0` and a capped value for a zero scale.
pub fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).clamp(-RATIO_CAP, RATIO_CAP)
    } else if num == 0.0 {
        0.0
    } else {
        RATIO_CAP.copysign(num)
    }
}

/// Bootstrap replicates of one design after the chained factorisation.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    pub names: Vec<String>,
    pub steps: Vec<ChainStep>,
}

impl ReplicateSet {
    /// Fits the design and runs the chained bootstrap on streams keyed by `label`.
    pub fn run(design: Design<'_>, config: &BootstrapConfig, label: &str) -> Result<Self> {
        let t = crate::rng::tag(label);
        let draws = draw_replicates(design, config, t)?;
        Ok(Self {
            names: design.panel.names().to_vec(),
            steps: chain(&draws, config.seed, t)?,
        })
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn omega_moments(&self, i: usize, j: usize) -> Moments {
        Moments::of(self.steps.iter().map(|s| s.omega.omega[(i, j)]))
    }

    pub fn pi_moments(&self, i: usize) -> Moments {
        Moments::of(self.steps.iter().map(|s| s.pi[i]))
    }

    pub fn pi_mean(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| self.pi_moments(i).mean)
    }
}
