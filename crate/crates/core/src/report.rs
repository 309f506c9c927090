//! Command implementations and CSV output.
//!
//! Output layout of one run directory:
//!
//! - `rounds.csv`: `round,accuracy,participants,retained,mean_mu`, with
//!   participants joined by `;` and `mean_mu` empty when no attacker crafted;
//! - `summary.csv`: `digest,A,seconds`;
//! - `config.json`: the resolved config, used by `report` to pair runs.
//!
//! A sweep writes one run directory per (value, attacked / no-attack) pair
//! and an `impact.csv` with `axis,value,A,Astar,I`. Floats are printed in
//! their shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::config::{AttackKind, ExperimentConfig, ServerKind};
use crate::error::{FedError, Result};
use crate::simulator::{run_experiment, ExperimentResult, RoundRecord};

pub const ROUNDS_HEADER: [&str; 5] = ["round", "accuracy", "participants", "retained", "mean_mu"];
pub const SUMMARY_HEADER: [&str; 3] = ["digest", "A", "seconds"];
pub const IMPACT_HEADER: [&str; 5] = ["axis", "value", "A", "Astar", "I"];

fn csv_err(path: &Path, e: csv::Error) -> FedError {
    FedError::ingest(path, e.to_string())
}

pub fn write_rounds_csv(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(ROUNDS_HEADER).map_err(|e| csv_err(path, e))?;
    for r in records {
        let participants = r.participants.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        let mu = r.mean_mu.map(|m| m.to_string()).unwrap_or_default();
        w.write_record([
            r.round.to_string(),
            r.accuracy.to_string(),
            participants,
            r.retained.to_string(),
            mu,
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, digest: &str, accuracy: f64, seconds: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(SUMMARY_HEADER).map_err(|e| csv_err(path, e))?;
    w.write_record([digest.to_string(), accuracy.to_string(), seconds.to_string()])
        .map_err(|e| csv_err(path, e))?;
    w.flush()?;
    Ok(())
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Summary {
    pub digest: String,
    #[serde(rename = "A")]
    pub accuracy: f64,
    pub seconds: f64,
}

pub fn read_summary_csv(path: &Path) -> Result<Summary> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(SUMMARY_HEADER) {
        return Err(FedError::ingest(path, format!("unexpected header {:?}", headers)));
    }
    let mut rows = r.deserialize::<Summary>();
    let row = rows
        .next()
        .ok_or_else(|| FedError::ingest(path, "no summary row"))?
        .map_err(|e| csv_err(path, e))?;
    if rows.next().is_some() {
        return Err(FedError::ingest(path, "more than one summary row"));
    }
    Ok(row)
}

/// Runs `cfg` and writes its run directory. Returns the result.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentResult> {
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let result = run_experiment(cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    write_rounds_csv(&out.join("rounds.csv"), &result.records)?;
    write_summary_csv(&out.join("summary.csv"), &result.digest, result.accuracy, seconds)?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    Ok(result)
}

/// `run --config <path> --out <dir>`. Returns the final-window accuracy.
pub fn cmd_run(config: &Path, out: &Path) -> Result<f64> {
    let cfg = ExperimentConfig::load(config)?;
    Ok(run_to_dir(&cfg, out)?.accuracy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    MaliciousFraction,
    NonIidP,
    Lambda,
    Omega,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::MaliciousFraction => "malicious-fraction",
            SweepAxis::NonIidP => "non-iid-p",
            SweepAxis::Lambda => "lambda",
            SweepAxis::Omega => "omega",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::MaliciousFraction => cfg.malicious_fraction = value,
            SweepAxis::NonIidP => cfg.partition.non_iid = Some(value),
            SweepAxis::Lambda => cfg.attack.xfed.lambda = value,
            SweepAxis::Omega => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(FedError::config("values", format!("omega must be a positive integer, got {value}")));
                }
                cfg.attack.xfed.omega = value as usize;
            }
        }
        cfg.validate().map_err(|e| match e {
            FedError::Config { field, reason } => FedError::config("values", format!("{value} ({field}: {reason})")),
            other => other,
        })?;
        Ok(cfg)
    }
}

/// Sweep description, read from TOML (or `.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Base experiment config, relative to the sweep file.
    pub base: PathBuf,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Also run the no-attack counterpart of every point.
    #[serde(default = "default_paired")]
    pub paired: bool,
}

fn default_paired() -> bool {
    true
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| FedError::ingest(path, e.to_string()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut spec: SweepSpec = if is_json {
            serde_json::from_str(&text).map_err(|e| FedError::ingest(path, e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| FedError::ingest(path, e.to_string()))?
        };
        if spec.base.is_relative() {
            if let Some(dir) = path.parent() {
                spec.base = dir.join(&spec.base);
            }
        }
        Ok(spec)
    }

    /// Builds every point's config, checking each value against the axis range.
    pub fn configs(&self) -> Result<Vec<(f64, ExperimentConfig)>> {
        if self.values.is_empty() {
            return Err(FedError::config("values", "sweep needs at least one value"));
        }
        let base = ExperimentConfig::load(&self.base)?;
        self.values
            .iter()
            .map(|&v| Ok((v, self.axis.apply(&base, v)?)))
            .collect()
    }
}

/// One row of `impact.csv`. Missing numbers mean the run failed or was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub no_attack: Option<f64>,
    pub attacked: Option<f64>,
}

impl ImpactRow {
    pub fn impact(&self) -> Option<f64> {
        Some(self.no_attack? - self.attacked?)
    }
}

pub fn write_impact_csv(path: &Path, rows: &[ImpactRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(IMPACT_HEADER).map_err(|e| csv_err(path, e))?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.axis.name().to_string(),
            r.value.to_string(),
            fmt(r.no_attack),
            fmt(r.attacked),
            fmt(r.impact()),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// `sweep --spec <path> --out <dir>`. Failed runs leave empty cells in their
/// row and are reported on stderr; the sweep carries on.
pub fn cmd_sweep(spec_path: &Path, out: &Path) -> Result<Vec<ImpactRow>> {
    let spec = SweepSpec::load(spec_path)?;
    let points = spec.configs()?;
    fs::create_dir_all(out)?;
    // Points that share a baseline (lambda, omega) reuse its accuracy.
    let mut baselines: BTreeMap<String, Option<f64>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(points.len());
    for (value, cfg) in points {
        let point_dir = out.join(format!("{}={}", spec.axis.name(), value));
        let no_attack = if spec.paired {
            let base = cfg.without_attack();
            let key = base.digest();
            if let Some(a) = baselines.get(&key) {
                *a
            } else {
                let a = report_failure(value, "no-attack", run_to_dir(&base, &point_dir.join("no-attack")));
                baselines.insert(key, a);
                a
            }
        } else {
            None
        };
        let attacked = report_failure(value, "attacked", run_to_dir(&cfg, &point_dir.join("attacked")));
        rows.push(ImpactRow {
            axis: spec.axis,
            value,
            no_attack,
            attacked,
        });
    }
    write_impact_csv(&out.join("impact.csv"), &rows)?;
    Ok(rows)
}

fn report_failure(value: f64, which: &str, res: Result<ExperimentResult>) -> Option<f64> {
    match res {
        Ok(r) => Some(r.accuracy),
        Err(e) => {
            eprintln!("sweep value {value} ({which}) failed: {e}");
            None
        }
    }
}

/// A completed run found on disk.
#[derive(Debug, Clone)]
pub struct RunEntry {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub accuracy: f64,
}

/// Finds every run directory (one holding `summary.csv` and `config.json`) below `roots`.
pub fn collect_runs(roots: &[PathBuf]) -> Result<Vec<RunEntry>> {
    let mut runs = Vec::new();
    for root in roots {
        if !root.is_dir() {
            return Err(FedError::ingest(root, "not a directory"));
        }
        let mut found = false;
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| FedError::ingest(root, e.to_string()))?;
            if entry.file_name() != "summary.csv" {
                continue;
            }
            let dir = entry.path().parent().unwrap_or(root).to_path_buf();
            let summary = read_summary_csv(entry.path())?;
            let config_path = dir.join("config.json");
            let text = fs::read_to_string(&config_path).map_err(|e| FedError::ingest(&config_path, e.to_string()))?;
            let config = ExperimentConfig::from_json(&text).map_err(|e| match e {
                FedError::Ingest { reason, .. } => FedError::ingest(&config_path, reason),
                other => other,
            })?;
            if config.digest() != summary.digest {
                return Err(FedError::ingest(
                    entry.path(),
                    "digest does not match the config.json beside it",
                ));
            }
            runs.push(RunEntry {
                dir,
                config,
                accuracy: summary.accuracy,
            });
            found = true;
        }
        if !found {
            return Err(FedError::ingest(root, "no summary.csv found"));
        }
    }
    Ok(runs)
}

/// Server x attack impact matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactTable {
    pub attacks: Vec<String>,
    /// `(server, no-attack accuracy, impact per attack column)`.
    pub rows: Vec<(ServerKind, Option<f64>, Vec<Option<f64>>)>,
}

impl ImpactTable {
    pub fn cell(&self, server: ServerKind, attack: &str) -> Option<f64> {
        let col = self.attacks.iter().position(|a| a == attack)?;
        self.rows.iter().find(|r| r.0 == server)?.2[col]
    }

    /// Aligned text, accuracies and impacts in percentage points, `-` for missing cells.
    pub fn render(&self) -> String {
        let pts = |x: Option<f64>| x.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into());
        let mut header = vec!["server".to_string(), "A".to_string()];
        header.extend(self.attacks.iter().cloned());
        let mut lines = vec![header];
        for (server, a, cells) in &self.rows {
            let mut line = vec![server.name().to_string(), pts(*a)];
            line.extend(cells.iter().map(|c| pts(*c)));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in lines {
            for (i, cell) in line.iter().enumerate() {
                if i == 0 {
                    let _ = write!(out, "{cell:<w$}", w = widths[0]);
                } else {
                    let _ = write!(out, "  {cell:>w$}", w = widths[i]);
                }
            }
            out.push('\n');
        }
        out
    }

    /// `table.csv`: `server,A,<attack>...`, raw fractions, `-` for missing cells.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = vec!["server".to_string(), "A".to_string()];
        header.extend(self.attacks.iter().cloned());
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        for (server, a, cells) in &self.rows {
            let mut rec = vec![server.name().to_string(), fmt(*a)];
            rec.extend(cells.iter().map(|c| fmt(*c)));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pairs every attacked run with the no-attack run sharing its base digest.
pub fn build_table(runs: &[RunEntry]) -> Result<ImpactTable> {
    let mut baselines: BTreeMap<String, &RunEntry> = BTreeMap::new();
    for run in runs.iter().filter(|r| r.config.attack.kind == AttackKind::None) {
        let key = run.config.base_digest();
        if let Some(prev) = baselines.get(&key) {
            if prev.accuracy != run.accuracy {
                return Err(FedError::Report(format!(
                    "{} and {} hold the same no-attack experiment with different results",
                    prev.dir.display(),
                    run.dir.display()
                )));
            }
        }
        baselines.insert(key, run);
    }

    let mut servers: BTreeMap<ServerKind, Option<f64>> = BTreeMap::new();
    for run in baselines.values() {
        let slot = servers.entry(run.config.server.kind).or_insert(None);
        if slot.is_some() && *slot != Some(run.accuracy) {
            return Err(FedError::Report(format!(
                "two different no-attack baselines for server {} (second in {})",
                run.config.server.kind.name(),
                run.dir.display()
            )));
        }
        *slot = Some(run.accuracy);
    }

    let mut cells: BTreeMap<(ServerKind, String), (f64, &Path)> = BTreeMap::new();
    let mut attacks: Vec<String> = Vec::new();
    for run in runs.iter().filter(|r| r.config.attack.kind != AttackKind::None) {
        let server = run.config.server.kind;
        let label = run.config.attack.label();
        servers.entry(server).or_insert(None);
        if !attacks.contains(&label) {
            attacks.push(label.clone());
        }
        let Some(base) = baselines.get(&run.config.base_digest()) else {
            continue;
        };
        let key = (server, label.clone());
        if let Some((_, prev)) = cells.get(&key) {
            return Err(FedError::Report(format!(
                "duplicate cell ({}, {label}) from {} and {}",
                server.name(),
                prev.display(),
                run.dir.display()
            )));
        }
        cells.insert(key, (base.accuracy - run.accuracy, &run.dir));
    }
    attacks.sort();

    let rows = servers
        .into_iter()
        .map(|(server, a)| {
            let row = attacks
                .iter()
                .map(|atk| cells.get(&(server, atk.clone())).map(|c| c.0))
                .collect();
            (server, a, row)
        })
        .collect();
    Ok(ImpactTable { attacks, rows })
}

/// `report <dir>...`: prints the matrix and writes `table.csv` into `out`.
pub fn cmd_report(dirs: &[PathBuf], out: &Path) -> Result<ImpactTable> {
    let runs = collect_runs(dirs)?;
    let table = build_table(&runs)?;
    fs::create_dir_all(out)?;
    table.write_csv(&out.join("table.csv"))?;
    Ok(table)
}
