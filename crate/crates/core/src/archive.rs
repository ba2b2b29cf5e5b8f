//! On-disk results archives and the scheme × depth summary table.
//!
//! An archive directory holds:
//!
//! * `config.toml`: the resolved configuration, every key explicit
//! * `episodes.csv`: `run,episode,steps,task_return,mean_last_window`
//! * `runs.csv`: one row per run seed with its outcome
//! * `curve.csv`: mean return per episode across runs
//! * `summary.csv`: `scheme,layers,width,mean_episodes_to_solve,solved,runs,base_seed`
//!
//! Files are staged next to their final names and renamed into place with
//! `summary.csv` last, so a summary never exists without its episode table.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, SchemeVariant};
use crate::trainer::ExperimentSummary;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: unknown scheme {scheme:?}")]
    Scheme { path: PathBuf, scheme: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub const CONFIG_FILE: &str = "config.toml";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const RUNS_FILE: &str = "runs.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub run: u64,
    pub episode: usize,
    pub steps: usize,
    pub task_return: f64,
    pub mean_last_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run: u64,
    /// Empty when the run did not solve.
    pub episodes_to_solve: Option<usize>,
    pub episodes: usize,
    pub best_rolling_mean: Option<f64>,
    pub abort: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub runs: usize,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub layers: usize,
    pub width: usize,
    pub mean_episodes_to_solve: f64,
    pub solved: usize,
    pub runs: usize,
    pub base_seed: u64,
}

impl SummaryRow {
    pub fn from_summary(summary: &ExperimentSummary) -> Self {
        Self {
            scheme: summary.scheme.key().to_string(),
            layers: summary.num_layers,
            width: summary.layer_width,
            mean_episodes_to_solve: summary.mean_episodes_to_solve,
            solved: summary.solved,
            runs: summary.runs.len(),
            base_seed: summary.base_seed,
        }
    }
}

pub fn episode_rows(summary: &ExperimentSummary) -> Vec<EpisodeRow> {
    summary
        .runs
        .iter()
        .flat_map(|run| {
            run.task_returns
                .iter()
                .zip(&run.rolling_means)
                .enumerate()
                .map(move |(i, (&ret, &mean))| EpisodeRow {
                    run: run.run_seed,
                    episode: i + 1,
                    steps: ret as usize,
                    task_return: ret,
                    mean_last_window: mean,
                })
        })
        .collect()
}

fn csv_bytes<T: Serialize>(rows: &[T], path: &Path) -> Result<Vec<u8>, ArchiveError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(csv_err(path))?;
    }
    writer.into_inner().map_err(|e| ArchiveError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })
}

/// Header-only CSV for an empty table.
fn with_header(bytes: Vec<u8>, header: &str) -> Vec<u8> {
    if bytes.is_empty() {
        format!("{header}\n").into_bytes()
    } else {
        bytes
    }
}

fn stage(dir: &Path, name: &str, contents: &[u8]) -> Result<(PathBuf, PathBuf), ArchiveError> {
    let final_path = dir.join(name);
    let staged = dir.join(format!(".{name}.partial"));
    fs::write(&staged, contents).map_err(io_err(&staged))?;
    Ok((staged, final_path))
}

/// Writes (or rewrites) the archive for one experiment.
pub fn write_results(
    dir: &Path,
    summary: &ExperimentSummary,
    config: &ExperimentConfig,
) -> Result<(), ArchiveError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let config_text = config.to_toml()?;
    let episodes = with_header(
        csv_bytes(&episode_rows(summary), &dir.join(EPISODES_FILE))?,
        "run,episode,steps,task_return,mean_last_window",
    );
    let runs: Vec<RunRow> = summary
        .runs
        .iter()
        .map(|r| RunRow {
            run: r.run_seed,
            episodes_to_solve: r.episodes_to_solve,
            episodes: r.task_returns.len(),
            best_rolling_mean: r.best_rolling_mean,
            abort: r.abort.clone(),
        })
        .collect();
    let runs = csv_bytes(&runs, &dir.join(RUNS_FILE))?;
    let curve: Vec<CurveRow> = summary
        .mean_curve
        .iter()
        .enumerate()
        .map(|(i, p)| CurveRow {
            episode: i + 1,
            runs: p.runs,
            mean_return: p.mean_return,
        })
        .collect();
    let curve = with_header(
        csv_bytes(&curve, &dir.join(CURVE_FILE))?,
        "episode,runs,mean_return",
    );
    let summary_bytes = csv_bytes(
        &[SummaryRow::from_summary(summary)],
        &dir.join(SUMMARY_FILE),
    )?;

    let staged = [
        stage(dir, CONFIG_FILE, config_text.as_bytes())?,
        stage(dir, EPISODES_FILE, &episodes)?,
        stage(dir, RUNS_FILE, &runs)?,
        stage(dir, CURVE_FILE, &curve)?,
        stage(dir, SUMMARY_FILE, &summary_bytes)?,
    ];

    let old_summary = dir.join(SUMMARY_FILE);
    match fs::remove_file(&old_summary) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(&old_summary)(e)),
    }
    for (from, to) in staged {
        fs::rename(&from, &to).map_err(io_err(&to))?;
    }
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ArchiveError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err(path))
}

pub fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>, ArchiveError> {
    read_csv(&dir.join(SUMMARY_FILE))
}

pub fn read_episodes(dir: &Path) -> Result<Vec<EpisodeRow>, ArchiveError> {
    read_csv(&dir.join(EPISODES_FILE))
}

pub fn read_runs(dir: &Path) -> Result<Vec<RunRow>, ArchiveError> {
    read_csv(&dir.join(RUNS_FILE))
}

pub fn read_config(dir: &Path) -> Result<ExperimentConfig, ArchiveError> {
    Ok(ExperimentConfig::load(&dir.join(CONFIG_FILE))?)
}

/// Scheme × layer-count grid of mean episodes-to-solve. Rows that share a
/// cell are pooled, weighting each by its run count.
pub fn emit_table(rows: &[SummaryRow]) -> Result<String, ArchiveError> {
    let mut cells: HashMap<(SchemeVariant, usize), (f64, usize)> = HashMap::new();
    let mut layers = BTreeSet::new();
    for row in rows {
        let scheme = SchemeVariant::from_key(&row.scheme).ok_or_else(|| ArchiveError::Scheme {
            path: PathBuf::from(SUMMARY_FILE),
            scheme: row.scheme.clone(),
        })?;
        layers.insert(row.layers);
        let cell = cells.entry((scheme, row.layers)).or_insert((0.0, 0));
        cell.0 += row.mean_episodes_to_solve * row.runs as f64;
        cell.1 += row.runs;
    }
    if layers.is_empty() {
        layers.extend([1, 2, 5]);
    }

    let label_width = 8;
    let cell_width = 8;
    let mut out = format!("{:<label_width$}|", "Reward");
    for l in &layers {
        out.push_str(&format!(" {:>cell_width$}", l));
    }
    out.push('\n');
    out.push_str(&"-".repeat(label_width));
    out.push('+');
    out.push_str(&"-".repeat((cell_width + 1) * layers.len()));
    out.push('\n');
    for scheme in SchemeVariant::ALL_VARIANTS {
        out.push_str(&format!("{:<label_width$}|", scheme.label()));
        for l in &layers {
            let text = match cells.get(&(scheme, *l)) {
                Some(&(sum, runs)) if runs > 0 => format!("{:.0}", sum / runs as f64),
                _ => "—".to_string(),
            };
            out.push_str(&format!(" {:>cell_width$}", text));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, layers: usize, mean: f64, runs: usize) -> SummaryRow {
        SummaryRow {
            scheme: scheme.into(),
            layers,
            width: 10,
            mean_episodes_to_solve: mean,
            solved: runs,
            runs,
            base_seed: 0,
        }
    }

    #[test]
    fn single_cell_table() {
        let table = emit_table(&[row("all", 1, 1480.0, 10)]).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[2].starts_with("All"));
        assert!(lines[2].contains("1480"), "{table}");
        assert!(lines[3].starts_with("Bio→All") && lines[3].contains('—'));
        assert!(lines[4].starts_with("Task") && lines[4].contains('—'));
    }

    #[test]
    fn empty_table_is_all_dashes() {
        let table = emit_table(&[]).unwrap();
        for line in table.lines().skip(2) {
            assert_eq!(line.matches('—').count(), 3, "{line}");
        }
    }

    #[test]
    fn shared_cells_pool_runs() {
        let table = emit_table(&[
            row("task", 2, 100.0, 1),
            row("task", 2, 400.0, 3),
            row("all", 5, 7.0, 1),
        ])
        .unwrap();
        let task = table.lines().find(|l| l.starts_with("Task")).unwrap();
        assert!(task.contains("325"), "{table}");
        assert!(table.lines().next().unwrap().contains('5'));
    }

    #[test]
    fn unknown_scheme_is_rejected() {
        assert!(emit_table(&[row("bogus", 1, 1.0, 1)]).is_err());
    }
}
