//! Synthetic sequences: a scenario file in, frames plus ground truth out.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use groundpose::estimator::ParamVector;
use groundpose::synth::{motion_isometry, render_view, GroundTexture, View};
use groundpose::{CameraIntrinsics, MotionParams, PoseParams};
use serde::{Deserialize, Serialize};

use crate::config::{Intrinsics, RunConfig};
use crate::frames::save_gray16;
use crate::results::{write_results, ResultRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: usize,
    pub image_height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureChoice {
    Noise,
    Stripe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    pub kind: TextureChoice,
    pub seed: u64,
    /// Noise feature size or stripe width, mm.
    pub feature_scale: f64,
    pub amplitude: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            kind: TextureChoice::Noise,
            seed: 0,
            feature_scale: 40.0,
            amplitude: 0.35,
        }
    }
}

/// Motion applied between every pair of consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSpec {
    pub tx_mm: f64,
    pub tz_mm: f64,
    pub yaw_deg: f64,
}

impl Default for StepSpec {
    fn default() -> Self {
        Self {
            tx_mm: 0.0,
            tz_mm: 100.0,
            yaw_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceScenario {
    pub camera: Camera,
    pub frames: usize,
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default = "default_pitch")]
    pub pitch_deg: f64,
    #[serde(default)]
    pub roll_deg: f64,
    /// Sinusoidal pose oscillation; zero amplitude keeps the pose fixed.
    #[serde(default)]
    pub pitch_amplitude_deg: f64,
    #[serde(default)]
    pub roll_amplitude_deg: f64,
    #[serde(default = "default_period")]
    pub period_frames: f64,
    #[serde(default)]
    pub step: StepSpec,
    #[serde(default)]
    pub texture: TextureSpec,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_height() -> f64 {
    700.0
}

fn default_pitch() -> f64 {
    60.0
}

fn default_period() -> f64 {
    20.0
}

impl SequenceScenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario {}", path.display()))?;
        let s: Self = toml::from_str(&text)
            .with_context(|| format!("malformed scenario {}", path.display()))?;
        s.intrinsics()?;
        if s.frames < 2 {
            bail!("scenario needs at least 2 frames, got {}", s.frames);
        }
        if !(s.period_frames > 0.0) {
            bail!("period_frames must be positive, got {}", s.period_frames);
        }
        s.pose(0)?;
        Ok(s)
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let c = &self.camera;
        CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.image_width, c.image_height)
            .context("invalid camera")
    }

    pub fn pose(&self, i: usize) -> Result<PoseParams> {
        let phase = TAU * i as f64 / self.period_frames;
        let pitch = self.pitch_deg + self.pitch_amplitude_deg * phase.sin();
        let roll = self.roll_deg + self.roll_amplitude_deg * phase.cos();
        PoseParams::new(pitch.to_radians(), roll.to_radians(), self.height)
            .with_context(|| format!("pose of frame {i} is out of range"))
    }

    pub fn step(&self) -> MotionParams {
        MotionParams::new(
            self.step.tx_mm,
            self.step.tz_mm,
            self.step.yaw_deg.to_radians(),
        )
    }

    pub fn texture(&self) -> GroundTexture {
        let t = &self.texture;
        match t.kind {
            TextureChoice::Noise => {
                GroundTexture::value_noise(t.seed, t.feature_scale, t.amplitude)
            }
            TextureChoice::Stripe => GroundTexture::stripe(t.feature_scale, t.amplitude),
        }
    }

    /// Ground truth for the pair ending at frame `i`.
    pub fn truth(&self, i: usize) -> Result<ParamVector> {
        Ok(ParamVector::from_parts(
            &self.pose(i - 1)?,
            &self.pose(i)?,
            &self.step(),
        ))
    }
}

/// Renders every frame into `out/frames`, writes `truth.csv` and a
/// ready-to-run `run.toml`.
pub fn run_synth(scenario: &SequenceScenario, out: &Path) -> Result<Vec<PathBuf>> {
    let k = scenario.intrinsics()?;
    let frames_dir = out.join("frames");
    std::fs::create_dir_all(&frames_dir)
        .with_context(|| format!("cannot create {}", frames_dir.display()))?;
    let texture = scenario.texture();
    let step = motion_isometry(&scenario.step());
    let mut world_to_ground = motion_isometry(&MotionParams::default());
    let mut paths = Vec::with_capacity(scenario.frames);
    for i in 0..scenario.frames {
        if i > 0 {
            world_to_ground = step * world_to_ground;
        }
        let view = View {
            pose: scenario.pose(i)?,
            world_to_ground,
        };
        let img = render_view(
            &texture,
            &view,
            &k,
            scenario.noise_sigma,
            scenario.seed.wrapping_add(i as u64),
        );
        let path = frames_dir.join(format!("frame_{i:04}.png"));
        save_gray16(&path, &img)?;
        paths.push(path);
    }

    let rows: Vec<ResultRow> = (1..scenario.frames)
        .map(|i| {
            scenario
                .truth(i)
                .map(|p| ResultRow::new(i, "truth", &p, 0.0, 0, "truth"))
        })
        .collect::<Result<_>>()?;
    write_results(&out.join("truth.csv"), &rows)?;

    let c = &scenario.camera;
    let run = RunConfig {
        intrinsics: Some(Intrinsics {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
        }),
        height: scenario.height,
        input: Some("frames".into()),
        output: Some("estimate".into()),
        ..RunConfig::default()
    };
    let run_path = out.join("run.toml");
    std::fs::write(&run_path, run.to_toml()?)
        .with_context(|| format!("cannot write {}", run_path.display()))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "frames = 3\n[camera]\nfx = 150.0\nfy = 150.0\ncx = 80.0\ncy = 60.0\nimage_width = 160\nimage_height = 120\n";

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s: SequenceScenario = toml::from_str(MINIMAL).unwrap();
        assert_eq!(s.height, 700.0);
        assert_eq!(s.texture, TextureSpec::default());
        let p = s.pose(2).unwrap();
        assert!((p.pitch - 60f64.to_radians()).abs() < 1e-12 && p.roll == 0.0);
        let t = s.truth(1).unwrap();
        assert_eq!(t.tz, 100.0);
    }

    #[test]
    fn oscillation_follows_the_period() {
        let text = format!("pitch_amplitude_deg = 5.0\nperiod_frames = 4.0\n{MINIMAL}");
        let s: SequenceScenario = toml::from_str(&text).unwrap();
        assert!((s.pose(1).unwrap().pitch.to_degrees() - 65.0).abs() < 1e-9);
        assert!((s.pose(3).unwrap().pitch.to_degrees() - 55.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_texture_kind_is_rejected() {
        let text = format!("{MINIMAL}[texture]\nkind = \"checker\"\n");
        assert!(toml::from_str::<SequenceScenario>(&text).is_err());
    }

    #[test]
    fn writes_frames_truth_and_run_config() {
        let s: SequenceScenario = toml::from_str(MINIMAL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = run_synth(&s, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let truth = crate::results::read_results(&dir.path().join("truth.csv")).unwrap();
        assert_eq!(truth.len(), 2);
        assert_eq!(truth[0].dist_mm, 100.0);
        let run = RunConfig::load(&dir.path().join("run.toml")).unwrap();
        assert_eq!(run.input.unwrap(), dir.path().join("frames"));
    }
}
