//! Run configuration: one TOML file, optionally overridden from flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use groundpose::estimator::EstimatorConfig;
use groundpose::{CameraIntrinsics, Mask};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn with_size(&self, width: usize, height: usize) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, width, height)
            .with_context(|| format!("intrinsics do not fit {width}x{height} frames"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required; there is no sensible default focal length.
    pub intrinsics: Option<Intrinsics>,
    /// Camera height above the ground, mm.
    pub height: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Distance of the outer grid points from the image border, px.
    pub margin: f64,
    pub image_patch: usize,
    pub ipm_patch: usize,
    /// mm per IPM pixel.
    pub ipm_scale: f64,
    pub refinements: usize,
    pub initial_pitch_deg: f64,
    pub subsets: usize,
    pub ratio: f64,
    pub seed: u64,
    pub magnitude_factor: f64,
    pub prediction_factor: f64,
    pub min_confidence: f64,
    /// Use every n-th frame.
    pub frame_stride: usize,
    /// Frame directory, or a text file listing one frame path per line.
    pub input: Option<PathBuf>,
    /// Grayscale image; nonzero pixels are ground.
    pub mask: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        Self {
            intrinsics: None,
            height: e.height,
            grid_rows: e.grid_rows,
            grid_cols: e.grid_cols,
            margin: e.margin,
            image_patch: e.image_patch,
            ipm_patch: e.ipm_patch,
            ipm_scale: e.ipm_scale,
            refinements: e.refinements,
            initial_pitch_deg: e.initial_pitch.to_degrees(),
            subsets: e.subsets,
            ratio: e.ratio,
            seed: e.seed,
            magnitude_factor: e.magnitude_factor,
            prediction_factor: e.prediction_factor,
            min_confidence: e.min_confidence,
            frame_stride: 1,
            input: None,
            mask: None,
            output: None,
        }
    }
}

/// Values given on the command line; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub seed: Option<u64>,
    pub frame_stride: Option<usize>,
    pub refinements: Option<usize>,
    pub height: Option<f64>,
}

impl RunConfig {
    /// Reads `path`; relative paths inside are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("malformed config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.mask, &mut cfg.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if o.input.is_some() {
            self.input = o.input;
        }
        if o.output.is_some() {
            self.output = o.output;
        }
        if o.mask.is_some() {
            self.mask = o.mask;
        }
        self.seed = o.seed.unwrap_or(self.seed);
        self.frame_stride = o.frame_stride.unwrap_or(self.frame_stride);
        self.refinements = o.refinements.unwrap_or(self.refinements);
        self.height = o.height.unwrap_or(self.height);
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        self.intrinsics
            .context("config is missing the required `intrinsics` table (fx, fy, cx, cy)")
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .context("no input given (config key `input` or --input)")
    }

    pub fn output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .context("no output directory given (config key `output` or --output)")
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics()?;
        if self.frame_stride == 0 {
            bail!("frame_stride must be at least 1");
        }
        for (name, v) in [
            ("magnitude_factor", self.magnitude_factor),
            ("prediction_factor", self.prediction_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            bail!(
                "min_confidence must be in [0, 1], got {}",
                self.min_confidence
            );
        }
        self.estimator(None)
            .validate()
            .context("invalid estimator settings")?;
        Ok(())
    }

    pub fn estimator(&self, mask: Option<Mask>) -> EstimatorConfig {
        EstimatorConfig {
            height: self.height,
            grid_rows: self.grid_rows,
            grid_cols: self.grid_cols,
            margin: self.margin,
            image_patch: self.image_patch,
            ipm_patch: self.ipm_patch,
            ipm_scale: self.ipm_scale,
            refinements: self.refinements,
            initial_pitch: self.initial_pitch_deg.to_radians(),
            subsets: self.subsets,
            ratio: self.ratio,
            seed: self.seed,
            magnitude_factor: self.magnitude_factor,
            prediction_factor: self.prediction_factor,
            min_confidence: self.min_confidence,
            mask,
            ..EstimatorConfig::default()
        }
    }

    /// Effective configuration as TOML, every default spelled out.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_everything_but_intrinsics() {
        let cfg: RunConfig =
            toml::from_str("[intrinsics]\nfx = 600.0\nfy = 600.0\ncx = 400.0\ncy = 300.0\n")
                .unwrap();
        assert_eq!(cfg.grid_cols, 11);
        assert_eq!(cfg.grid_rows, 9);
        assert_eq!(cfg.image_patch, 128);
        assert_eq!(cfg.ipm_patch, 256);
        assert_eq!(cfg.subsets, 50);
        assert!((cfg.initial_pitch_deg - 60.0).abs() < 1e-12);
        cfg.validate().unwrap();
        assert_eq!(cfg.estimator(None), EstimatorConfig::default());
    }

    #[test]
    fn unknown_keys_and_missing_intrinsics_are_errors() {
        let err = toml::from_str::<RunConfig>("grid_colz = 3\n").unwrap_err();
        assert!(err.to_string().contains("grid_colz"), "{err}");
        let cfg: RunConfig = toml::from_str("height = 650.0\n").unwrap();
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("intrinsics"));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig {
            intrinsics: Some(Intrinsics {
                fx: 500.0,
                fy: 510.0,
                cx: 320.0,
                cy: 240.0,
            }),
            ..RunConfig::default()
        };
        cfg.apply(Overrides {
            seed: Some(9),
            input: Some("frames".into()),
            ..Overrides::default()
        });
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let base = RunConfig {
            intrinsics: Some(Intrinsics {
                fx: 600.0,
                fy: 600.0,
                cx: 400.0,
                cy: 300.0,
            }),
            ..RunConfig::default()
        };
        for bad in [
            RunConfig {
                ratio: 1.5,
                ..base.clone()
            },
            RunConfig {
                ipm_patch: 200,
                ..base.clone()
            },
            RunConfig {
                frame_stride: 0,
                ..base.clone()
            },
            RunConfig {
                min_confidence: -0.1,
                ..base.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
