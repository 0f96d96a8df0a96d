//! Sequence estimation: every consecutive frame pair, every stage.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use groundpose::estimator::{estimate_pair, EstimationResult, EstimatorConfig, StageRecord};
use groundpose::{CameraIntrinsics, ImageBuffer, Quality, Stage};

use crate::config::RunConfig;
use crate::frames::{list_frames, load_gray, load_mask};
use crate::results::{write_results, ResultRow};

/// How a finished run should exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// At least one pair lost a refinement stage or failed outright.
    Degraded,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Degraded => 2,
        }
    }
}

/// Frames, camera and estimator settings resolved from a config.
pub struct Sequence {
    pub frames: Vec<PathBuf>,
    pub intrinsics: CameraIntrinsics,
    pub estimator: EstimatorConfig,
}

impl Sequence {
    pub fn open(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let frames = list_frames(cfg.input()?, cfg.frame_stride)?;
        let first = load_gray(&frames[0])?;
        let intrinsics = cfg.intrinsics()?.with_size(first.width(), first.height())?;
        let mask = match &cfg.mask {
            Some(p) => {
                let m = load_mask(p)?;
                if (m.width(), m.height()) != (first.width(), first.height()) {
                    bail!(
                        "mask {} is {}x{}, frames are {}x{}",
                        p.display(),
                        m.width(),
                        m.height(),
                        first.width(),
                        first.height()
                    );
                }
                Some(m)
            }
            None => None,
        };
        Ok(Self {
            frames,
            intrinsics,
            estimator: cfg.estimator(mask),
        })
    }

    pub fn pairs(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn load(&self, index: usize) -> Result<ImageBuffer> {
        let path = &self.frames[index];
        let img = load_gray(path)?;
        if (img.width(), img.height()) != (self.intrinsics.width, self.intrinsics.height) {
            bail!(
                "frame {} is {}x{}, expected {}x{}",
                path.display(),
                img.width(),
                img.height(),
                self.intrinsics.width,
                self.intrinsics.height
            );
        }
        Ok(img)
    }

    /// Estimates pair `index` (frames `index` and `index + 1`).
    pub fn estimate(&self, index: usize) -> Result<EstimationResult> {
        if index >= self.pairs() {
            bail!(
                "pair {index} out of range; the sequence has {} pairs",
                self.pairs()
            );
        }
        let prev = self.load(index)?;
        let cur = self.load(index + 1)?;
        estimate_pair(&prev, &cur, &self.intrinsics, &self.estimator).with_context(|| {
            format!(
                "estimation failed for {} -> {}",
                self.frames[index].display(),
                self.frames[index + 1].display()
            )
        })
    }
}

/// Picks a stage by name: `initial`, `refine-k`, or `final`.
pub fn select_stage<'a>(result: &'a EstimationResult, name: &str) -> Result<&'a StageRecord> {
    let found = match name {
        "final" => result.history.last(),
        "initial" => result.history.iter().find(|r| r.stage == Stage::Initial),
        other => other
            .strip_prefix("refine-")
            .and_then(|k| k.parse::<usize>().ok())
            .and_then(|k| result.history.iter().find(|r| r.stage == Stage::Refine(k))),
    };
    found.with_context(|| {
        let have: Vec<String> = result.history.iter().map(|r| r.stage.to_string()).collect();
        format!("no stage `{name}`; available: final, {}", have.join(", "))
    })
}

/// Runs the whole sequence and writes `results.csv` plus `diag/` into the
/// output directory.
pub fn run_estimate(cfg: &RunConfig) -> Result<(Vec<ResultRow>, Outcome)> {
    let seq = Sequence::open(cfg)?;
    let out = cfg.output()?;
    let diag = out.join("diag");
    std::fs::create_dir_all(&diag).with_context(|| format!("cannot create {}", diag.display()))?;
    write_diag(&diag, cfg, &seq)?;

    let mut rows = Vec::new();
    let mut outcome = Outcome::Success;
    for i in 0..seq.pairs() {
        let frame = i + 1;
        match seq.estimate(i) {
            Ok(r) => {
                if r.quality == Quality::Degraded {
                    outcome = Outcome::Degraded;
                }
                let quality = r.quality.to_string();
                rows.extend(
                    r.history
                        .iter()
                        .map(|h| ResultRow::from_stage(frame, h, &quality)),
                );
            }
            Err(e) => {
                // unreadable frames are fatal, numerical failures only degrade the run
                if e.downcast_ref::<groundpose::Error>().is_none() {
                    return Err(e);
                }
                eprintln!("warning: {e:#}");
                outcome = Outcome::Degraded;
                rows.push(ResultRow::failed(frame));
            }
        }
    }
    write_results(&out.join("results.csv"), &rows)?;
    Ok((rows, outcome))
}

fn write_diag(diag: &Path, cfg: &RunConfig, seq: &Sequence) -> Result<()> {
    let config = diag.join("config.toml");
    std::fs::write(&config, cfg.to_toml()?)
        .with_context(|| format!("cannot write {}", config.display()))?;
    let list: String = seq
        .frames
        .iter()
        .map(|p| format!("{}\n", p.display()))
        .collect();
    let frames = diag.join("frames.txt");
    std::fs::write(&frames, list).with_context(|| format!("cannot write {}", frames.display()))?;
    Ok(())
}
