//! The subcommands, each producing a report.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use varcause::decomp::{fevd_with, limit_fevd_with, InfluenceDocument};
use varcause::equilibrium::{class_distributions, LocalDistribution};
use varcause::identification::{identify, BootstrapConfig};
use varcause::linalg::LyapunovMethod;
use varcause::simgen::{generate, generator_lags, run_study, DatasetOutcome, StructureTemplate, StudyRow, TemplateId};
use varcause::{
    companion, fit_var, load_panel, local_distribution, solve_pi, solve_pi_quota, write_panel, CausalStructure,
    CausalityDistribution, CholeskyFactor, Horizon, InfluenceMatrix, SolveOptions, TimeSeriesPanel, SCHEMA_VERSION,
};

use crate::render::{num, Table};
use crate::settings::Settings;
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Decompose,
    Pi,
    Identify,
    Local,
    Simulate,
    Generate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Decompose => "decompose",
            Command::Pi => "pi",
            Command::Identify => "identify",
            Command::Local => "local",
            Command::Simulate => "simulate",
            Command::Generate => "generate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a Settings,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<&'a BootstrapConfig>,
    result: &'a Value,
}

pub struct Report {
    command: Command,
    config: Settings,
    bootstrap: Option<BootstrapConfig>,
    result: Value,
    table: Option<Table>,
    /// Output that bypasses the envelope, such as a generated panel.
    raw: Option<Vec<u8>>,
}

impl Report {
    fn new(command: Command, config: &Settings, result: impl Serialize) -> anyhow::Result<Report> {
        Ok(Report {
            command,
            config: config.clone(),
            bootstrap: None,
            result: serde_json::to_value(result)?,
            table: None,
            raw: None,
        })
    }

    pub fn render(&self, format: Format) -> anyhow::Result<Vec<u8>> {
        if let Some(raw) = &self.raw {
            return Ok(raw.clone());
        }
        match format {
            Format::Json => {
                let env = Envelope {
                    schema_version: SCHEMA_VERSION,
                    command: self.command.name(),
                    config: &self.config,
                    bootstrap: self.bootstrap.as_ref(),
                    result: &self.result,
                };
                let mut out = serde_json::to_vec_pretty(&env)?;
                out.push(b'\n');
                Ok(out)
            }
            Format::Csv | Format::Markdown => {
                let table = self
                    .table
                    .as_ref()
                    .ok_or_else(|| UsageError(format!("{} has no tabular output; use --format json", self.command.name())))?;
                if format == Format::Csv {
                    table.to_csv()
                } else {
                    Ok(table.to_markdown())
                }
            }
        }
    }
}

pub fn run(command: Command, s: &Settings) -> anyhow::Result<Report> {
    match command {
        Command::Decompose => decompose(s),
        Command::Pi => pi(s),
        Command::Identify => identify_cmd(s),
        Command::Local => local(s),
        Command::Simulate => simulate(s),
        Command::Generate => generate_cmd(s),
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| varcause::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))).into())
}

fn load_input(s: &Settings) -> anyhow::Result<TimeSeriesPanel> {
    let path = s
        .input
        .as_deref()
        .ok_or_else(|| UsageError("an input CSV is required".into()))?;
    let columns = s.columns.clone().unwrap_or_default();
    Ok(load_panel(open(path)?, &columns, &s.csv_options()?)?)
}

/// Drills into a report envelope: `result`, then `key` when present.
fn unwrap_report(mut v: Value, key: &str) -> Value {
    if let Some(inner) = v.get_mut("result") {
        v = inner.take();
    }
    if let Some(inner) = v.get_mut(key) {
        v = inner.take();
    }
    v
}

fn load_omega(path: &Path) -> anyhow::Result<InfluenceMatrix> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return Ok(InfluenceMatrix::read_csv(open(path)?)?);
    }
    let v: Value = serde_json::from_reader(open(path)?).map_err(varcause::Error::Json)?;
    let doc: InfluenceDocument =
        serde_json::from_value(unwrap_report(v, "influence")).map_err(varcause::Error::Json)?;
    Ok(InfluenceMatrix::from_document(doc)?)
}

fn load_structure(s: &Settings, omega: &InfluenceMatrix) -> anyhow::Result<CausalStructure> {
    let structure = match &s.structure {
        Some(path) => {
            let v: Value = serde_json::from_reader(open(path)?).map_err(varcause::Error::Json)?;
            serde_json::from_value(unwrap_report(v, "structure")).map_err(varcause::Error::Json)?
        }
        None => CausalStructure::from_influence(omega, 0.0),
    };
    structure.validate(&omega.names)?;
    Ok(structure)
}

#[derive(Serialize)]
struct Decomposition {
    #[serde(flatten)]
    influence: InfluenceDocument,
    row_sums: Vec<f64>,
    max_row_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral_radius: Option<f64>,
}

/// The influence matrix from `--omega`, or fitted from the input panel.
fn influence(s: &Settings) -> anyhow::Result<(InfluenceMatrix, Option<f64>)> {
    if let Some(path) = &s.omega {
        return Ok((load_omega(path)?, None));
    }
    let panel = load_input(s)?;
    let lags = s.lag_spec()?;
    let horizon = s.horizon()?;
    let model = fit_var(&panel, &lags, None, None)?;
    let radius = companion(&model)?.spectral_radius;
    let ordering = match &s.order {
        Some(names) => Some(
            names
                .iter()
                .map(|n| panel.require_index(n))
                .collect::<varcause::Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let chol = CholeskyFactor::new(&model.sigma, ordering.as_deref())?;
    let omega = match horizon {
        Horizon::Limit => limit_fevd_with(&model, &chol, LyapunovMethod::Auto)?,
        Horizon::Finite(h) => fevd_with(&model, h, &chol)?,
    };
    Ok((omega, Some(radius)))
}

fn decompose(s: &Settings) -> anyhow::Result<Report> {
    let (omega, spectral_radius) = influence(s)?;
    let row_sums: Vec<f64> = omega.omega.row_iter().map(|r| r.sum()).collect();
    let max_row_error = row_sums.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let mut table = Table::new(std::iter::once(String::new()).chain(omega.names.iter().cloned()));
    for (i, name) in omega.names.iter().enumerate() {
        table.push(
            std::iter::once(name.clone())
                .chain(omega.omega.row(i).iter().map(|v| num(*v)))
                .collect(),
        );
    }
    let result = Decomposition {
        influence: omega.to_document(),
        row_sums,
        max_row_error,
        spectral_radius,
    };
    let mut r = Report::new(Command::Decompose, s, result)?;
    r.table = Some(table);
    Ok(r)
}

fn distribution_table(d: &CausalityDistribution) -> Table {
    let mut t = Table::new(["variable", "pi"]);
    for (n, v) in d.pi.names.iter().zip(&d.pi.values) {
        t.push(vec![n.clone(), num(*v)]);
    }
    t
}

#[derive(Serialize)]
struct PiResult {
    distribution: CausalityDistribution,
    #[serde(skip_serializing_if = "Option::is_none")]
    classes: Option<Vec<CausalityDistribution>>,
}

fn pi(s: &Settings) -> anyhow::Result<Report> {
    let (omega, _) = influence(s)?;
    let result = match &s.quota {
        Some(q) => {
            let structure = load_structure(s, &omega)?;
            PiResult {
                distribution: solve_pi_quota(&omega, &structure, q)?,
                classes: Some(class_distributions(&omega, &structure)?),
            }
        }
        None => {
            let classes = match s.structure {
                Some(_) => Some(class_distributions(&omega, &load_structure(s, &omega)?)?),
                None => None,
            };
            PiResult {
                distribution: solve_pi(&omega, &SolveOptions::default())?,
                classes,
            }
        }
    };
    if !result.distribution.unique && s.quota.is_none() {
        log::warn!("the influence graph has several closed classes; the distribution depends on the start vector");
    }
    let table = distribution_table(&result.distribution);
    let mut r = Report::new(Command::Pi, s, result)?;
    r.table = Some(table);
    Ok(r)
}

fn structure_table(structure: &CausalStructure) -> Table {
    let mut t = Table::new(["variable", "level", "role"]);
    let mut level = Some(structure);
    let mut depth = 0;
    while let Some(st) = level {
        for (k, c) in st.classes.iter().enumerate() {
            for v in c {
                t.push(vec![v.clone(), depth.to_string(), format!("class {}", k + 1)]);
            }
        }
        if st.substructure.is_none() {
            for v in &st.transient {
                t.push(vec![v.clone(), depth.to_string(), "transient".into()]);
            }
        }
        level = st.substructure.as_deref();
        depth += 1;
    }
    t
}

fn identify_cmd(s: &Settings) -> anyhow::Result<Report> {
    let panel = load_input(s)?;
    let config = s.bootstrap(s.lag_spec()?)?;
    let id = identify(&panel, &config)?;
    let table = structure_table(&id.structure);
    let mut r = Report::new(Command::Identify, s, id)?;
    r.bootstrap = Some(config);
    r.table = Some(table);
    Ok(r)
}

#[derive(Serialize)]
struct LocalEntry {
    #[serde(flatten)]
    distribution: LocalDistribution,
    total: f64,
}

fn local(s: &Settings) -> anyhow::Result<Report> {
    let (omega, _) = influence(s)?;
    let structure = load_structure(s, &omega)?;
    let horizon = s.steps()?;
    let targets = match &s.target {
        Some(t) => vec![t.clone()],
        None if structure.transient.is_empty() => {
            return Err(UsageError("the structure has no transient variables".into()).into())
        }
        None => structure.transient.clone(),
    };
    let mut table = Table::new(["target", "variable", "share", "kind"]);
    let mut entries = Vec::new();
    for t in &targets {
        let d = local_distribution(&omega, &structure, t, horizon)?;
        for (n, v) in d.shares.names.iter().zip(&d.shares.values) {
            table.push(vec![t.clone(), n.clone(), num(*v), "class".into()]);
        }
        if !horizon.is_limit() {
            for (n, v) in d.in_transit.names.iter().zip(&d.in_transit.values) {
                table.push(vec![t.clone(), n.clone(), num(*v), "in_transit".into()]);
            }
        }
        entries.push(LocalEntry {
            total: d.total(),
            distribution: d,
        });
    }
    let mut r = Report::new(Command::Local, s, entries)?;
    r.table = Some(table);
    Ok(r)
}

fn templates(s: &Settings) -> anyhow::Result<Vec<TemplateId>> {
    match s.template.as_deref() {
        None | Some("all") => Ok(TemplateId::ALL.to_vec()),
        Some(name) => Ok(vec![name.parse().map_err(|e: varcause::Error| UsageError(e.to_string()))?]),
    }
}

#[derive(Serialize)]
struct TemplateOutcomes {
    template: TemplateId,
    datasets: Vec<DatasetOutcome>,
}

#[derive(Serialize)]
struct StudyResult {
    rows: Vec<StudyRow>,
    outcomes: Vec<TemplateOutcomes>,
}

pub fn study_table(rows: &[StudyRow]) -> Table {
    let mut header = vec!["template".to_string(), "datasets".into(), "exact".into(), "exact_rate".into()];
    for kind in ["omissions", "additions"] {
        for b in ["1", "2", "3", "4plus"] {
            header.push(format!("{kind}_{b}"));
        }
    }
    header.extend(["relation_recall".to_string(), "failures".into()]);
    let mut t = Table::new(header);
    for r in rows {
        let mut row = vec![
            r.template.clone(),
            r.datasets.to_string(),
            r.exact.to_string(),
            num(r.exact_rate()),
        ];
        row.extend(r.omissions.iter().chain(&r.additions).map(ToString::to_string));
        row.extend([num(r.relation_recall), r.failures.to_string()]);
        t.push(row);
    }
    t
}

fn simulate(s: &Settings) -> anyhow::Result<Report> {
    let quick = s.quick.unwrap_or(false);
    let datasets = s.datasets.unwrap_or(if quick { 20 } else { 100 });
    if datasets == 0 {
        return Err(UsageError("--datasets must be at least 1".into()).into());
    }
    let len = s.length.unwrap_or(100);
    let ids = templates(s)?;
    let mut resolved = s.clone();
    resolved.replicates = Some(s.replicates.unwrap_or(if quick { 100 } else { 200 }));
    let config = resolved.bootstrap(generator_lags())?;
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for id in &ids {
        log::info!("simulating {datasets} {} datasets", id.name());
        let (row, out) = run_study(&StructureTemplate::new(*id), datasets, len, &config)?;
        rows.push(row);
        outcomes.push(TemplateOutcomes {
            template: *id,
            datasets: out,
        });
    }
    if rows.len() > 1 {
        rows.push(StudyRow::average(&rows));
    }
    let table = study_table(&rows);
    let mut r = Report::new(Command::Simulate, s, StudyResult { rows, outcomes })?;
    r.bootstrap = Some(config);
    r.table = Some(table);
    Ok(r)
}

fn generate_cmd(s: &Settings) -> anyhow::Result<Report> {
    let id: TemplateId = match s.template.as_deref() {
        Some(name) => name.parse().map_err(|e: varcause::Error| UsageError(e.to_string()))?,
        None => return Err(UsageError("--template is required".into()).into()),
    };
    let g = generate(&StructureTemplate::new(id), s.length.unwrap_or(100), s.seed.unwrap_or(0))?;
    let mut out = Vec::new();
    write_panel(&g.panel, &mut out, s.csv_options()?.delimiter)?;
    let mut r = Report::new(Command::Generate, s, &g.truth)?;
    r.raw = Some(out);
    Ok(r)
}
