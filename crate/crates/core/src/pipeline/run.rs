//! Run directory layout and crash-safe persistence.
//!
//! ```text
//! <run>/config.snapshot
//! <run>/metrics.csv              one row per step, append-only
//! <run>/checkpoints/step-<N>/{curriculum.json, policy.json}
//! <run>/logs/requests.jsonl
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::RunConfig;
use crate::curriculum::{CurriculumMode, CurriculumState};
use crate::model::DifficultyLevel;
use crate::sim::SimPolicy;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("checkpoint {0} already exists")]
    CheckpointExists(String),
    #[error("no checkpoint in {0}")]
    NoCheckpoint(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Curriculum half of a checkpoint, with everything needed to continue the
/// seeded streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumCheckpoint {
    pub step: u64,
    pub seed: u64,
    pub mode: CurriculumMode,
    pub rollouts_used: u64,
    pub curriculum: CurriculumState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub step: u64,
    pub seed: u64,
    pub policy: SimPolicy,
}

/// One metrics.csv row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub rollouts: u64,
    /// Accuracy of this step's groups per level; `None` when the level was
    /// not in the batch.
    pub accuracy: BTreeMap<DifficultyLevel, f64>,
    /// Fraction of batch entries at each level.
    pub batch_share: BTreeMap<DifficultyLevel, f64>,
    /// Level histogram of active records after the step.
    pub histogram: BTreeMap<DifficultyLevel, f64>,
    pub active: usize,
    pub graduated: usize,
    /// Mean closed-form pass@1 on the original open-ended questions.
    pub pass_at_1: f64,
}

impl MetricsRow {
    pub fn header() -> Vec<String> {
        let mut h = vec!["step".to_string(), "rollouts".to_string()];
        for prefix in ["acc", "share", "hist"] {
            for l in DifficultyLevel::ALL {
                h.push(format!("{prefix}_{}", l.name()));
            }
        }
        h.extend(["active", "graduated", "pass_at_1"].map(String::from));
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![self.step.to_string(), self.rollouts.to_string()];
        for map in [&self.accuracy, &self.batch_share, &self.histogram] {
            for l in DifficultyLevel::ALL {
                r.push(map.get(&l).map(f64::to_string).unwrap_or_default());
            }
        }
        r.push(self.active.to_string());
        r.push(self.graduated.to_string());
        r.push(self.pass_at_1.to_string());
        r
    }
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<RunDir, RunError> {
        for dir in [root.to_path_buf(), root.join("checkpoints"), root.join("logs")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.snapshot")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint(&self, step: u64) -> PathBuf {
        self.checkpoints().join(format!("step-{step}"))
    }

    pub fn requests_log(&self) -> PathBuf {
        self.root.join("logs").join("requests.jsonl")
    }

    pub fn write_config_snapshot(&self, cfg: &RunConfig) -> Result<(), RunError> {
        let path = self.config_snapshot();
        fs::write(&path, cfg.snapshot()).map_err(io_err(&path))
    }

    /// Completed checkpoint steps in ascending order. Temporary directories
    /// left by an interrupted save are ignored.
    pub fn checkpoint_steps(&self) -> Result<Vec<u64>, RunError> {
        let dir = self.checkpoints();
        let mut steps = Vec::new();
        if !dir.exists() {
            return Ok(steps);
        }
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            if let Some(step) = name.to_str().and_then(|n| n.strip_prefix("step-")).and_then(|s| s.parse().ok()) {
                steps.push(step);
            }
        }
        steps.sort_unstable();
        Ok(steps)
    }

    pub fn latest_checkpoint(&self) -> Result<Option<u64>, RunError> {
        Ok(self.checkpoint_steps()?.last().copied())
    }

    /// Drop metrics rows and checkpoints after `step`, so a resumed run
    /// appends exactly where the checkpoint left off.
    pub fn rewind_to(&self, step: u64) -> Result<(), RunError> {
        copy_metrics_prefix(&self.metrics(), &self.metrics(), step)?;
        for s in self.checkpoint_steps()?.into_iter().filter(|&s| s > step) {
            let dir = self.checkpoint(s);
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, value).map_err(|source| RunError::Json {
        path: path.display().to_string(),
        source,
    })?;
    w.flush().map_err(io_err(path))?;
    w.get_ref().sync_all().map_err(io_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, RunError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| RunError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(dir: &Path) -> Result<(CurriculumCheckpoint, PolicyCheckpoint), RunError> {
    if !dir.join("curriculum.json").exists() {
        return Err(RunError::NoCheckpoint(dir.display().to_string()));
    }
    Ok((
        read_json(&dir.join("curriculum.json"))?,
        read_json(&dir.join("policy.json"))?,
    ))
}

fn append_metrics(path: &Path, row: &MetricsRow) -> Result<(), RunError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let csv_err = |source| RunError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(MetricsRow::header()).map_err(csv_err)?;
    }
    w.write_record(row.record()).map_err(csv_err)?;
    w.flush().map_err(io_err(path))?;
    let file = w.into_inner().map_err(|e| RunError::Io {
        path: path.display().to_string(),
        source: e.into_error(),
    })?;
    file.sync_all().map_err(io_err(path))
}

/// Append a metrics row and, when `checkpoint` is given, write it as
/// `checkpoints/step-<N>`. The checkpoint goes to a temporary directory first
/// and is renamed into place only after the row is on disk; if anything
/// fails, the row is truncated away and the temporary directory removed, so
/// neither a partial checkpoint nor an orphan row is ever visible.
pub fn persist_run(
    run_dir: &RunDir,
    row: &MetricsRow,
    checkpoint: Option<(&CurriculumCheckpoint, &PolicyCheckpoint)>,
) -> Result<Option<String>, RunError> {
    let metrics = run_dir.metrics();
    let prior_len = fs::metadata(&metrics).map(|m| m.len()).unwrap_or(0);

    let Some((curriculum, policy)) = checkpoint else {
        append_metrics(&metrics, row)?;
        return Ok(None);
    };
    let id = format!("step-{}", row.step);
    let final_dir = run_dir.checkpoint(row.step);
    if final_dir.exists() {
        return Err(RunError::CheckpointExists(id));
    }
    let tmp = run_dir.checkpoints().join(format!(".tmp-{id}"));
    let staged = (|| {
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
        }
        fs::create_dir_all(&tmp).map_err(io_err(&tmp))?;
        write_json(&tmp.join("curriculum.json"), curriculum)?;
        write_json(&tmp.join("policy.json"), policy)?;
        append_metrics(&metrics, row)?;
        fs::rename(&tmp, &final_dir).map_err(io_err(&final_dir))
    })();
    if let Err(e) = staged {
        let _ = fs::remove_dir_all(&tmp);
        if let Ok(f) = OpenOptions::new().write(true).open(&metrics) {
            let _ = f.set_len(prior_len);
        }
        return Err(e);
    }
    Ok(Some(id))
}

/// Copy the header and every row with `step <= up_to` from `src` to `dst`
/// (which may be the same file).
pub fn copy_metrics_prefix(src: &Path, dst: &Path, up_to: u64) -> Result<(), RunError> {
    if !src.exists() {
        return Ok(());
    }
    let file = File::open(src).map_err(io_err(src))?;
    let mut kept = String::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(src))?;
        let step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
        if i == 0 || step.is_some_and(|s| s <= up_to) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    fs::write(dst, kept).map_err(io_err(dst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::CurriculumConfig;
    use crate::sim::SimConfig;

    fn row(step: u64) -> MetricsRow {
        MetricsRow {
            step,
            rollouts: step * 64,
            accuracy: [(DifficultyLevel::Mcq4, 0.25)].into_iter().collect(),
            batch_share: BTreeMap::new(),
            histogram: BTreeMap::new(),
            active: 3,
            graduated: 0,
            pass_at_1: 0.02,
        }
    }

    fn checkpoint(step: u64) -> (CurriculumCheckpoint, PolicyCheckpoint) {
        (
            CurriculumCheckpoint {
                step,
                seed: 1,
                mode: CurriculumMode::Adaptive,
                rollouts_used: 0,
                curriculum: CurriculumState {
                    config: CurriculumConfig::default(),
                    records: BTreeMap::new(),
                },
            },
            PolicyCheckpoint {
                step,
                seed: 1,
                policy: SimPolicy::new(&SimConfig::default()),
            },
        )
    }

    #[test]
    fn save_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        let (c, p) = checkpoint(10);
        let id = persist_run(&run, &row(10), Some((&c, &p))).unwrap();
        assert_eq!(id.as_deref(), Some("step-10"));
        let (c2, p2) = load_checkpoint(&run.checkpoint(10)).unwrap();
        assert_eq!((c2, p2), (c, p));
        assert_eq!(run.checkpoint_steps().unwrap(), [10]);
        let text = fs::read_to_string(run.metrics()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("step,rollouts,acc_mcq4"));
    }

    #[test]
    fn duplicate_checkpoint_rolls_back_row() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        let (c, p) = checkpoint(1);
        persist_run(&run, &row(1), Some((&c, &p))).unwrap();
        let before = fs::read(run.metrics()).unwrap();
        assert!(persist_run(&run, &row(1), Some((&c, &p))).is_err());
        assert_eq!(fs::read(run.metrics()).unwrap(), before);
    }

    #[test]
    fn rewind_drops_later_rows_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        for s in 1..=4 {
            let (c, p) = checkpoint(s);
            persist_run(&run, &row(s), (s % 2 == 0).then_some((&c, &p))).unwrap();
        }
        run.rewind_to(2).unwrap();
        assert_eq!(run.checkpoint_steps().unwrap(), [2]);
        assert_eq!(fs::read_to_string(run.metrics()).unwrap().lines().count(), 3);
    }
}
