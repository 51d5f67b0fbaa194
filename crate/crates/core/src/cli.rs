//! Batch commands behind the `epp` binary.
//!
//! Every command reads a [`Config`], produces one CSV or JSON table and a
//! [`RunManifest`] recording every resolved parameter. [`replay`] reruns a
//! manifest and yields byte-identical output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bellbits::PauliIndex;
use crate::config::{Config, ConfigError, Resolver};
use crate::dynamics::{self, CriticalOptions, IterationOptions, NoiseFamily};
use crate::montecarlo::{self, MCConfig};
use crate::noise::{config_key, BinaryNoiseModel, NoiseModel};
use crate::recurrence::{
    self, binary_map, cell_name, generate_map, BellDiagonalState, BinaryFlaggedState, EnsembleState,
    FlaggedEnsembleState, QuadraticMap, CELLS,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Compute(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit code: 2 for bad input, 1 for failed computations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Compute(_) | CliError::Io { .. } => 1,
        }
    }
}

fn compute<E: fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Iterate,
    Fixpoint,
    Critical,
    Scan,
    Mc,
    Curve,
    Resources,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::Iterate,
        Subcommand::Fixpoint,
        Subcommand::Critical,
        Subcommand::Scan,
        Subcommand::Mc,
        Subcommand::Curve,
        Subcommand::Resources,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Iterate => "iterate",
            Subcommand::Fixpoint => "fixpoint",
            Subcommand::Critical => "critical",
            Subcommand::Scan => "scan",
            Subcommand::Mc => "mc",
            Subcommand::Curve => "curve",
            Subcommand::Resources => "resources",
        }
    }
}

impl FromStr for Subcommand {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown subcommand `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(CliError::Usage(format!("unknown format `{s}` (csv or json)"))),
        }
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub format: Format,
}

impl Default for RunSettings {
    fn default() -> Self {
        let it = IterationOptions::default();
        Self { seed: 1, tol: it.tol, max_iter: it.max_iter, format: Format::Csv }
    }
}

impl RunSettings {
    fn iteration(&self) -> IterationOptions {
        IterationOptions { tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: Subcommand,
    pub parameters: BTreeMap<String, String>,
    pub settings: RunSettings,
    pub version: String,
    pub outputs: Vec<String>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub body: String,
    pub manifest: RunManifest,
}

impl RunOutput {
    pub fn file_name(&self) -> String {
        format!("{}.{}", self.manifest.subcommand.name(), self.manifest.settings.format.extension())
    }

    pub fn manifest_name(&self) -> String {
        format!("{}.manifest.json", self.manifest.subcommand.name())
    }

    /// Write the table and its manifest into `dir`; returns both paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let data = dir.join(self.file_name());
        let manifest = dir.join(self.manifest_name());
        std::fs::write(&data, &self.body).map_err(io(&data))?;
        let text = serde_json::to_string_pretty(&self.manifest).map_err(compute)? + "\n";
        std::fs::write(&manifest, text).map_err(io(&manifest))?;
        Ok((data, manifest))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}
impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.header).map_err(compute)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv)).map_err(compute)?;
                }
                let bytes = w.into_inner().map_err(compute)?;
                String::from_utf8(bytes).map_err(compute)
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: serde_json::Map<String, Value> =
                            self.header.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                        Value::Object(obj)
                    })
                    .collect();
                Ok(serde_json::to_string_pretty(&rows).map_err(compute)? + "\n")
            }
        }
    }
}

/// A resolved noise model: either the full sixteen-entry channel or the
/// spin-flip channel of binary pairs.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Full(NoiseModel),
    Binary(BinaryNoiseModel),
}

impl ModelSpec {
    pub fn full(&self) -> NoiseModel {
        match self {
            ModelSpec::Full(n) => n.clone(),
            ModelSpec::Binary(b) => b.embed(),
        }
    }
}

/// Default reliability of the `white` and `binary` models.
pub const DEFAULT_F0: f64 = 0.9;
/// Default apparatus reliabilities of the `p1p2` model.
pub const DEFAULT_P1P2: (f64, f64) = (0.96, 0.968);

fn resolve_model(r: &Resolver, default: &str) -> Result<ModelSpec, CliError> {
    let model = r.str_or("model", default);
    let spec = match model.as_str() {
        "ideal" => ModelSpec::Full(NoiseModel::identity()),
        "white" => ModelSpec::Full(NoiseModel::white(r.f64_or("f0", DEFAULT_F0)?).map_err(compute)?),
        "p1p2" => {
            let p1 = r.f64_or("p1", DEFAULT_P1P2.0)?;
            let p2 = r.f64_or("p2", DEFAULT_P1P2.1)?;
            ModelSpec::Full(NoiseModel::from_p1_p2(p1, p2, r.bool_or("both_labs", false)?).map_err(compute)?)
        }
        "general" => {
            let mut f = [0.0; 16];
            for (k, slot) in f.iter_mut().enumerate() {
                let key = config_key(PauliIndex::from_index(k / 4), PauliIndex::from_index(k % 4));
                *slot = r.f64_or(&key, 0.0)?;
            }
            let tol = r.f64_or("normalization_tol", crate::noise::NORMALIZATION_TOL)?;
            ModelSpec::Full(NoiseModel::general_with_tolerance(f, tol).map_err(compute)?)
        }
        "binary" => {
            let noise = if r.has("f00") {
                BinaryNoiseModel::new(
                    r.f64_required("f00")?,
                    r.f64_or("f01", 0.0)?,
                    r.f64_or("f10", 0.0)?,
                    r.f64_or("f11", 0.0)?,
                )
            } else {
                BinaryNoiseModel::uncorrelated(r.f64_or("f0", DEFAULT_F0)?)
            };
            ModelSpec::Binary(noise.map_err(compute)?)
        }
        other => {
            return Err(r
                .error("model", &format!("unknown model `{other}` (ideal, white, p1p2, general, binary)"))
                .into())
        }
    };
    Ok(spec)
}

fn component_names(dim: usize) -> Vec<String> {
    if dim == CELLS {
        (0..CELLS).map(cell_name).collect()
    } else {
        ["A0", "A1", "B0", "B1"].iter().map(|s| s.to_string()).collect()
    }
}

struct Computed {
    table: Table,
    converged: bool,
    /// Rendered in place of the table when the output is JSON.
    json: Option<Value>,
}

fn cmd_iterate(r: &Resolver) -> Result<Computed, CliError> {
    let model = resolve_model(r, "p1p2")?;
    let f = r.f64_or("start_fidelity", dynamics::DEFAULT_START_FIDELITY)?;
    let steps = r.usize_or("steps", 20)?;
    let dump = r.str_or("dump", "summary");
    let cells = match dump.as_str() {
        "summary" => false,
        "cells" => true,
        _ => return Err(r.error("dump", "expected summary or cells").into()),
    };
    fn run<S: EnsembleState>(s0: S, map: &QuadraticMap, steps: usize, cells: bool) -> Result<Table, CliError> {
        let mut header = vec!["n".to_string(), "F".into(), "Fcond".into(), "N_keep".into()];
        if cells {
            header.extend(component_names(S::DIM));
        }
        let mut table = Table::new(header);
        let row = |n: usize, s: &S, keep: Option<f64>| {
            let mut row = vec![n.into(), s.fidelity().into(), s.conditional_fidelity().into(), keep.into()];
            if cells {
                row.extend(s.components().iter().map(|&v| Cell::Float(v)));
            }
            row
        };
        let mut s = s0;
        table.push(row(0, &s, None));
        for n in 1..=steps {
            let (next, keep) = recurrence::step(&s, map).map_err(compute)?;
            s = next;
            table.push(row(n, &s, Some(keep)));
        }
        Ok(table)
    }
    let table = match model {
        ModelSpec::Full(noise) => {
            run(FlaggedEnsembleState::werner(f).map_err(compute)?, &generate_map(&noise), steps, cells)?
        }
        ModelSpec::Binary(noise) => {
            run(BinaryFlaggedState::unflagged(f).map_err(compute)?, &binary_map(&noise), steps, cells)?
        }
    };
    Ok(Computed { table, converged: true, json: None })
}

fn fixpoint_row<S: EnsembleState>(
    parameter: Option<f64>,
    map: &QuadraticMap,
    s0: &S,
    opts: &IterationOptions,
) -> Result<(Vec<Cell>, bool), CliError> {
    let c = dynamics::classify_regime(map, s0, opts).map_err(compute)?;
    let converged = c.fixpoint.converged;
    let row = vec![
        parameter.into(),
        c.fidelity.into(),
        c.conditional_fidelity.into(),
        c.fixpoint.state.correlation_defect().into(),
        c.fixpoint.iterations.into(),
        converged.into(),
        c.fixpoint.residual.into(),
        c.regime.name().into(),
    ];
    Ok((row, converged))
}

fn cmd_fixpoint(r: &Resolver, settings: &RunSettings) -> Result<Computed, CliError> {
    let f = r.f64_or("start_fidelity", dynamics::DEFAULT_START_FIDELITY)?;
    let opts = settings.iteration();
    let mut table =
        Table::new(["parameter", "F", "Fcond", "defect", "iterations", "converged", "residual", "regime"]);
    let rows: Vec<(Vec<Cell>, bool)> = if r.has("sweep") {
        let values = r.f64_list_or("sweep", &[])?;
        let model = r.str_or("model", "white");
        let family = match model.as_str() {
            "white" => NoiseFamily::WhiteNoise,
            "binary" => NoiseFamily::BinaryUncorrelated,
            _ => return Err(r.error("model", "a sweep needs model white or binary").into()),
        };
        values
            .par_iter()
            .map(|&f0| match family {
                NoiseFamily::BinaryUncorrelated => {
                    let map = binary_map(&BinaryNoiseModel::uncorrelated(f0).map_err(compute)?);
                    fixpoint_row(Some(f0), &map, &BinaryFlaggedState::unflagged(f).map_err(compute)?, &opts)
                }
                _ => {
                    let map = generate_map(&NoiseModel::white(f0).map_err(compute)?);
                    fixpoint_row(Some(f0), &map, &FlaggedEnsembleState::werner(f).map_err(compute)?, &opts)
                }
            })
            .collect::<Result<_, _>>()?
    } else {
        match resolve_model(r, "p1p2")? {
            ModelSpec::Full(noise) => vec![fixpoint_row(
                None,
                &generate_map(&noise),
                &FlaggedEnsembleState::werner(f).map_err(compute)?,
                &opts,
            )?],
            ModelSpec::Binary(noise) => vec![fixpoint_row(
                None,
                &binary_map(&noise),
                &BinaryFlaggedState::unflagged(f).map_err(compute)?,
                &opts,
            )?],
        }
    };
    let converged = rows.iter().all(|r| r.1);
    rows.into_iter().for_each(|(row, _)| table.push(row));
    Ok(Computed { table, converged, json: None })
}

fn cmd_critical(r: &Resolver) -> Result<Computed, CliError> {
    let name = r.str_or("family", "binary-uncorrelated");
    let (family, lo, hi) = match name.as_str() {
        "binary-uncorrelated" => (NoiseFamily::BinaryUncorrelated, 0.75, 0.85),
        "white-noise" => (NoiseFamily::WhiteNoise, 0.89, 0.91),
        _ => return Err(r.error("family", "expected binary-uncorrelated or white-noise").into()),
    };
    let lo = r.f64_or("bracket_lo", lo)?;
    let hi = r.f64_or("bracket_hi", hi)?;
    if !(lo < hi) {
        return Err(CliError::Usage(format!("bracket_lo ({lo}) must be below bracket_hi ({hi})")));
    }
    let defaults = CriticalOptions::default();
    let opts = CriticalOptions {
        start_fidelity: r.f64_or("start_fidelity", defaults.start_fidelity)?,
        halvings: r.usize_or("halvings", defaults.halvings)?,
        threshold: r.f64_or("threshold", defaults.threshold)?,
        budget: r.usize_or("budget", defaults.budget)?,
        stall: r.f64_or("stall", defaults.stall)?,
    };
    if opts.halvings < 40 {
        return Err(r.error("halvings", "at least 40 halvings are required").into());
    }
    let res = dynamics::find_critical(&family, lo, hi, &opts).map_err(compute)?;
    let mut table = Table::new(["family", "critical", "lo", "hi", "width", "halvings"]);
    table.push(vec![
        name.as_str().into(),
        res.critical.into(),
        res.lo.into(),
        res.hi.into(),
        res.width().into(),
        res.halvings.into(),
    ]);
    let json = json!({
        "family": name,
        "critical": res.critical,
        "bracket_achieved": [res.lo, res.hi],
        "width": res.width(),
        "halvings": res.halvings,
    });
    Ok(Computed { table, converged: true, json: Some(json) })
}

fn cmd_scan(r: &Resolver, settings: &RunSettings) -> Result<Computed, CliError> {
    let lo = r.f64_or("f00_min", 0.5)?;
    let hi = r.f64_or("f00_max", 1.0)?;
    let points = r.usize_or("f00_points", 11)?;
    let samples = r.usize_or("samples", 200)?;
    let f = r.f64_or("start_fidelity", dynamics::DEFAULT_START_FIDELITY)?;
    if points < 1 || !(lo <= hi) {
        return Err(CliError::Usage("need f00_min <= f00_max and f00_points >= 1".into()));
    }
    let mut table = Table::new([
        "f00",
        "samples",
        "high_noise",
        "intermediate",
        "security",
        "unconverged",
        "frac_high_noise",
        "frac_intermediate",
        "frac_security",
    ]);
    let mut converged = true;
    for i in 0..points {
        let f00 = if points == 1 { lo } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
        let s = dynamics::regime_scan(f00, samples, settings.seed, f, &settings.iteration()).map_err(compute)?;
        converged &= s.unconverged == 0;
        table.push(vec![
            f00.into(),
            samples.into(),
            s.high_noise.into(),
            s.intermediate.into(),
            s.security.into(),
            s.unconverged.into(),
            s.fraction(dynamics::Regime::HighNoise).into(),
            s.fraction(dynamics::Regime::Intermediate).into(),
            s.fraction(dynamics::Regime::Security).into(),
        ]);
    }
    Ok(Computed { table, converged, json: None })
}

fn cmd_mc(r: &Resolver, settings: &RunSettings) -> Result<Computed, CliError> {
    let noise = resolve_model(r, "p1p2")?.full();
    let f = r.f64_or("start_fidelity", dynamics::DEFAULT_START_FIDELITY)?;
    let pairs = r.usize_or("pairs", 1_000_000)?;
    let rounds = r.usize_or("rounds", 8)?;
    let initial = BellDiagonalState::werner(f).map_err(compute)?;
    let cfg = MCConfig::new(pairs, initial, noise.clone(), rounds, settings.seed).map_err(compute)?;
    let stats = montecarlo::run(&cfg);
    let mut header: Vec<String> =
        ["round", "remaining", "F_hat", "Fcond_hat", "F_analytic", "Fcond_analytic"].map(String::from).to_vec();
    header.extend(component_names(CELLS));
    let mut table = Table::new(header);
    let map = generate_map(&noise);
    let mut analytic = FlaggedEnsembleState::embed(&initial);
    for (i, s) in stats.iter().enumerate() {
        if i > 0 {
            analytic = recurrence::step(&analytic, &map).map_err(compute)?.0;
        }
        let mut row: Vec<Cell> = vec![
            s.round.into(),
            s.pairs_remaining.into(),
            s.f_hat.into(),
            s.f_cond_hat.into(),
            analytic.fidelity().into(),
            analytic.conditional_fidelity().into(),
        ];
        row.extend(s.cells.iter().map(|&c| Cell::Int(c)));
        table.push(row);
    }
    Ok(Computed { table, converged: true, json: None })
}

fn cmd_curve(r: &Resolver) -> Result<Computed, CliError> {
    let model = resolve_model(r, "binary")?;
    let f = r.f64_or("start_fidelity", 0.6)?;
    let n_max = r.usize_or("n_max", 10)?;
    let segment_points = r.usize_or("segment_points", 50)?;
    let points = match model {
        ModelSpec::Binary(noise) => dynamics::purification_curve(
            &binary_map(&noise),
            &BinaryFlaggedState::unflagged(f).map_err(compute)?,
            n_max,
            segment_points,
        ),
        ModelSpec::Full(noise) => dynamics::purification_curve(
            &generate_map(&noise),
            &FlaggedEnsembleState::werner(f).map_err(compute)?,
            n_max,
            segment_points,
        ),
    }
    .map_err(compute)?;
    let mut table = Table::new(["n", "Fcond", "Fcond_next"]);
    for p in points {
        table.push(vec![p.n.into(), p.fcond.into(), p.fcond_next.into()]);
    }
    Ok(Computed { table, converged: true, json: None })
}

/// Apparatus reliabilities `(p1, p2)` compared in the resource study.
pub const RESOURCE_SETTINGS: [(f64, f64); 4] = [(0.9333, 0.9466), (0.9733, 0.9786), (0.9866, 0.9833), (0.9933, 0.9946)];

fn parse_settings(text: &str) -> Option<Vec<(f64, f64)>> {
    text.split(',')
        .map(|pair| {
            let (a, b) = pair.split_once(':')?;
            Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
        })
        .collect()
}

fn cmd_resources(r: &Resolver) -> Result<Computed, CliError> {
    let default = RESOURCE_SETTINGS.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(",");
    let text = r.str_or("settings", &default);
    let settings =
        parse_settings(&text).ok_or_else(|| r.error("settings", "expected comma-separated p1:p2 pairs"))?;
    let both_labs = r.bool_or("both_labs", false)?;
    let f = r.f64_or("start_fidelity", dynamics::DEFAULT_START_FIDELITY)?;
    let eps_min = r.f64_or("eps_min", 1e-4)?;
    let max_rounds = r.usize_or("max_rounds", 200)?;
    let initial = BellDiagonalState::werner(f).map_err(compute)?;
    let mut table = Table::new(["p1", "p2", "round", "epsilon", "pairs", "F"]);
    let mut converged = true;
    for (p1, p2) in settings {
        let noise = NoiseModel::from_p1_p2(p1, p2, both_labs).map_err(compute)?;
        let curve = montecarlo::resource_curve(&noise, &initial, eps_min, max_rounds).map_err(compute)?;
        converged &= curve.last().is_some_and(|p| p.epsilon <= eps_min);
        for p in curve {
            table.push(vec![p1.into(), p2.into(), p.round.into(), p.epsilon.into(), p.pairs.into(), p.fidelity.into()]);
        }
    }
    Ok(Computed { table, converged, json: None })
}

/// Run one subcommand.
pub fn execute(sub: Subcommand, config: &Config, settings: &RunSettings) -> Result<RunOutput, CliError> {
    if !(settings.tol > 0.0) || settings.max_iter == 0 {
        return Err(CliError::Usage("--tol must be positive and --max-iter at least 1".into()));
    }
    let r = Resolver::new(config);
    let computed = match sub {
        Subcommand::Iterate => cmd_iterate(&r)?,
        Subcommand::Fixpoint => cmd_fixpoint(&r, settings)?,
        Subcommand::Critical => cmd_critical(&r)?,
        Subcommand::Scan => cmd_scan(&r, settings)?,
        Subcommand::Mc => cmd_mc(&r, settings)?,
        Subcommand::Curve => cmd_curve(&r)?,
        Subcommand::Resources => cmd_resources(&r)?,
    };
    let parameters = r.finish()?;
    let body = match (settings.format, computed.json) {
        (Format::Json, Some(v)) => serde_json::to_string_pretty(&v).map_err(compute)? + "\n",
        (format, _) => computed.table.render(format)?,
    };
    let mut manifest = RunManifest {
        subcommand: sub,
        parameters,
        settings: *settings,
        version: VERSION.to_string(),
        outputs: Vec::new(),
        converged: computed.converged,
    };
    let out = RunOutput { body, manifest: manifest.clone() };
    manifest.outputs = vec![out.file_name()];
    Ok(RunOutput { manifest, ..out })
}

/// Rerun the computation a manifest describes.
pub fn replay(manifest: &RunManifest) -> Result<RunOutput, CliError> {
    let config = Config::from_pairs(manifest.parameters.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    execute(manifest.subcommand, &config, &manifest.settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(sub: Subcommand, text: &str) -> RunOutput {
        execute(sub, &Config::parse(text, "test").unwrap(), &RunSettings::default()).unwrap()
    }

    #[test]
    fn iterate_ideal_follows_closed_form() {
        let out = run(Subcommand::Iterate, "model = ideal\nstart_fidelity = 0.7\nsteps = 3\n");
        let mut lines = out.body.lines();
        assert_eq!(lines.next(), Some("n,F,Fcond,N_keep"));
        assert_eq!(lines.next(), Some("0,0.7,0.7,"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert!((first[1] - 0.5 / 0.68).abs() < 1e-15);
        assert!((first[3] - 0.68).abs() < 1e-15);
        assert!(out.manifest.converged);
        assert_eq!(out.manifest.parameters["model"], "ideal");
    }

    #[test]
    fn iterate_cells_dump() {
        let out = run(Subcommand::Iterate, "dump = cells\nsteps = 1\n");
        assert!(out.body.starts_with("n,F,Fcond,N_keep,A00,A01,A10,A11,B00"));
        let out = run(Subcommand::Iterate, "model = binary\nf0 = 0.9\ndump = cells\nsteps = 1\n");
        assert!(out.body.starts_with("n,F,Fcond,N_keep,A0,A1,B0,B1\n"));
    }

    #[test]
    fn manifest_replay_is_byte_identical() {
        let out = run(Subcommand::Mc, "pairs = 5000\nrounds = 3\n");
        let again = replay(&out.manifest).unwrap();
        assert_eq!(again.body, out.body);
        assert_eq!(again.manifest, out.manifest);
        let text = serde_json::to_string(&out.manifest).unwrap();
        let parsed: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(replay(&parsed).unwrap().body, out.body);
    }

    #[test]
    fn config_errors_carry_locations() {
        let config = Config::parse("model = white\nf0 = nope\n", "run.cfg").unwrap();
        let err = execute(Subcommand::Iterate, &config, &RunSettings::default()).unwrap_err();
        assert_eq!(err.to_string(), "run.cfg:2: f0: expected a number, got `nope`");
        assert_eq!(err.exit_code(), 2);
        let config = Config::parse("modle = white\n", "run.cfg").unwrap();
        let err = execute(Subcommand::Iterate, &config, &RunSettings::default()).unwrap_err();
        assert_eq!(err.to_string(), "run.cfg:1: unknown key `modle`");
    }

    #[test]
    fn reversed_bracket_is_usage_error() {
        let config = Config::parse("bracket_lo = 0.85\nbracket_hi = 0.75\n", "c").unwrap();
        let err = execute(Subcommand::Critical, &config, &RunSettings::default()).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn json_tables() {
        let settings = RunSettings { format: Format::Json, ..RunSettings::default() };
        let config = Config::parse("model = ideal\nsteps = 1\n", "c").unwrap();
        let out = execute(Subcommand::Iterate, &config, &settings).unwrap();
        let v: Value = serde_json::from_str(&out.body).unwrap();
        assert_eq!(v[0]["n"], json!(0));
        assert_eq!(v[0]["N_keep"], Value::Null);
        assert_eq!(out.file_name(), "iterate.json");
    }

    #[test]
    fn general_model_accepts_caption_rounding() {
        let mut text = String::from("model = general\nnormalization_tol = 1e-4\nsteps = 2\n");
        for mu in PauliIndex::ALL {
            for nu in PauliIndex::ALL {
                let v = match (mu.index(), nu.index()) {
                    (0, 0) => 0.83981,
                    (0, _) | (_, 0) => 0.021131,
                    _ => 0.003712,
                };
                text.push_str(&format!("{} = {v}\n", config_key(mu, nu)));
            }
        }
        let out = run(Subcommand::Iterate, &text);
        assert_eq!(out.body.lines().count(), 4);
    }
}
