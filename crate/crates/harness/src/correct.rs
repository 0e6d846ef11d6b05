//! Re-evaluation of a saved archive.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memes_core::archive::ArchiveSnapshot;
use memes_core::metrics::{corrected_archive, CorrectionReport};
use memes_core::{EliteArchive, TaskConfig};

use crate::runner::{read_json, write_archive, write_json};

/// Where a correction reads from and writes to.
#[derive(Clone, Debug)]
pub struct CorrectionPaths {
    pub archive: PathBuf,
    pub corrected: PathBuf,
    pub report: PathBuf,
}

impl CorrectionPaths {
    /// `target` is either a run directory (uses its `archive_final.json`) or
    /// an archive file; outputs go next to the archive.
    pub fn for_target(target: &Path) -> Self {
        let archive = if target.is_dir() { target.join("archive_final.json") } else { target.to_path_buf() };
        let dir = archive.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = archive.file_stem().and_then(|s| s.to_str()).unwrap_or("archive");
        let stem = stem.strip_suffix("_final").unwrap_or(stem);
        Self {
            corrected: dir.join(format!("{stem}_corrected.json")),
            report: dir.join(format!("{stem}_correction.json")),
            archive,
        }
    }
}

/// Task and seed recorded in the `config.json` next to `archive`, if any.
fn recorded_run(archive: &Path) -> Result<Option<(TaskConfig, u64)>> {
    let path = archive.with_file_name("config.json");
    if !path.exists() {
        return Ok(None);
    }
    let config: serde_json::Value = read_json(&path)?;
    let task = config.get("task").cloned().context("config.json has no task")?;
    let task = serde_json::from_value(task).with_context(|| format!("task in {}", path.display()))?;
    Ok(Some((task, config.get("seed").and_then(|s| s.as_u64()).unwrap_or(0))))
}

/// Task by registry name with default parameters.
pub fn task_by_name(name: &str) -> Result<TaskConfig> {
    serde_json::from_value(serde_json::json!({ "name": name }))
        .with_context(|| format!("unknown task '{name}' (see list-tasks)"))
}

/// Re-evaluates every elite `m` times and writes the corrected archive and
/// the report next to the input. `task` and `seed` default to the values
/// recorded in the run's `config.json`. Re-evaluation streams never overlap
/// a run's own evaluation streams, so reusing the run seed is safe.
pub fn correct_archive(
    target: &Path,
    task: Option<TaskConfig>,
    m: usize,
    seed: Option<u64>,
) -> Result<CorrectionReport> {
    if m == 0 {
        bail!("m must be at least 1");
    }
    let paths = CorrectionPaths::for_target(target);
    let recorded = recorded_run(&paths.archive)?;
    let task_cfg = match (task, &recorded) {
        (Some(t), Some((r, _))) if t.name() != r.name() => {
            bail!("{} was produced on task {}, not {}", paths.archive.display(), r.name(), t.name())
        }
        (Some(t), _) => t,
        (None, Some((t, _))) => t.clone(),
        (None, None) => bail!("no config.json next to {}; pass --task", paths.archive.display()),
    };
    let custom_grid = recorded.is_some();
    let seed = seed.or(recorded.map(|r| r.1)).unwrap_or(0);

    let snapshot: ArchiveSnapshot = read_json(&paths.archive)?;
    let task = task_cfg.build().map_err(anyhow::Error::msg)?;
    let spec = task.spec();
    if snapshot.grid.dim() != spec.feature_bounds.dim() {
        bail!(
            "{}: archive has {}-D features, task {} has {}-D",
            paths.archive.display(),
            snapshot.grid.dim(),
            task_cfg.name(),
            spec.feature_bounds.dim()
        );
    }
    if !custom_grid && snapshot.grid.bounds != spec.feature_bounds {
        bail!("{}: archive bounds do not match the feature space of task {}", paths.archive.display(), task_cfg.name());
    }
    if let Some(r) = snapshot.records.iter().find(|r| r.genome.len() != spec.genome_dim) {
        bail!(
            "{}: cell {:?} holds a {}-D genome, task {} expects {}",
            paths.archive.display(),
            r.cell,
            r.genome.len(),
            task_cfg.name(),
            spec.genome_dim
        );
    }
    let archive = EliteArchive::from_snapshot(snapshot).with_context(|| paths.archive.display().to_string())?;
    let (corrected, report) = corrected_archive(&archive, task.as_ref(), m, seed, spec.fitness_offset)?;
    write_archive(&paths.corrected, &corrected)?;
    write_json(&paths.report, &report)?;
    Ok(report)
}
