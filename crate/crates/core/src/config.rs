//! Run configuration: defaults, overridden by a key-value file, overridden
//! by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, UpdateSchedule};
use crate::error::{Error, Result};
use crate::map_model::{parse_key_values, GridFrame, WorldPoint, DEFAULT_FREE_ABOVE, DEFAULT_OCCUPIED_BELOW};
use crate::metrics::{Region, DEFAULT_OUTLIER_THRESHOLD};
use crate::sim::SensorConfig;
use crate::skeleton::{SkeletonParams, Stencil};

/// Kernel width in pixels. Wide enough that a lone wall never binarizes on
/// its own, so corridors thin to their exact centerline.
pub const DEFAULT_SIGMA: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sigma: f64,
    pub laplacian_scale: f64,
    pub binarize_threshold: f64,
    pub stencil: Stencil,
    pub schedule: UpdateSchedule,
    pub protected_layer_width: i32,
    pub connect_radius: i32,
    pub outlier_threshold: f64,
    pub region: Option<Region>,
    /// Meters per pixel used to project scans during replay.
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub occupied_below: u8,
    pub free_above: u8,
    pub seed: u64,
    /// Meters between simulated frames when the trajectory file gives none.
    pub step: f64,
    pub sensor: SensorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            laplacian_scale: 255.0,
            binarize_threshold: 10.0,
            stencil: Stencil::Four,
            schedule: UpdateSchedule::default(),
            protected_layer_width: 3,
            connect_radius: 3,
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
            region: None,
            resolution: 0.1,
            origin_x: 0.0,
            origin_y: 0.0,
            occupied_below: DEFAULT_OCCUPIED_BELOW,
            free_above: DEFAULT_FREE_ABOVE,
            seed: 0,
            step: 0.1,
            sensor: SensorConfig::default(),
        }
    }
}

impl RunConfig {
    /// Applies every recognized key from a config file. Unknown keys are errors.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (key, value, line) in parse_key_values(text, path)? {
            self.apply(&key, &value).map_err(|e| Error::parse(path, line, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Sets one option by its config-file key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::InvalidArgument(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "sigma" => self.sigma = num(key, value)?,
            "scale" | "laplacian_scale" => self.laplacian_scale = num(key, value)?,
            "threshold" | "binarize_threshold" => self.binarize_threshold = num(key, value)?,
            "stencil" => {
                self.stencil = match value {
                    "4" | "four" => Stencil::Four,
                    "8" | "eight" => Stencil::Eight,
                    _ => return Err(Error::InvalidArgument(format!("stencil `{value}` is not 4 or 8"))),
                }
            }
            "schedule" => self.schedule = value.parse()?,
            "protected_layer_width" => self.protected_layer_width = num(key, value)?,
            "connect_radius" => self.connect_radius = num(key, value)?,
            "outlier_threshold" => self.outlier_threshold = num(key, value)?,
            "region" => self.region = Some(value.parse()?),
            "resolution" => self.resolution = num(key, value)?,
            "origin_x" => self.origin_x = num(key, value)?,
            "origin_y" => self.origin_y = num(key, value)?,
            "occupied_below" => self.occupied_below = num(key, value)?,
            "free_above" => self.free_above = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "step" => self.step = num(key, value)?,
            "beams" => self.sensor.beam_count = num(key, value)?,
            "fov" => self.sensor.fov = num(key, value)?,
            "range_max" => self.sensor.range_max = num(key, value)?,
            "noise_std" => self.sensor.noise_std = num(key, value)?,
            "noise_mean" => self.sensor.noise_mean = num(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma", self.sigma),
            ("scale", self.laplacian_scale),
            ("threshold", self.binarize_threshold),
            ("outlier_threshold", self.outlier_threshold),
            ("resolution", self.resolution),
            ("step", self.step),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("`{k}` must be positive, got {v}")));
        }
        if self.protected_layer_width < 1 || self.connect_radius < 1 {
            return Err(Error::InvalidArgument("protected_layer_width and connect_radius must be at least 1".into()));
        }
        if self.occupied_below >= self.free_above {
            return Err(Error::InvalidArgument("occupied_below must be below free_above".into()));
        }
        self.schedule.validate()?;
        self.sensor.validate()
    }

    pub fn skeleton_params(&self) -> SkeletonParams {
        SkeletonParams { scale: self.laplacian_scale, threshold: self.binarize_threshold, stencil: self.stencil }
    }

    pub fn grid_frame(&self) -> Result<GridFrame> {
        GridFrame::new(self.resolution, WorldPoint { x: self.origin_x, y: self.origin_y })
    }

    pub fn engine_config(&self) -> Result<EngineConfig> {
        self.validate()?;
        Ok(EngineConfig {
            sigma: self.sigma,
            skeleton: self.skeleton_params(),
            schedule: self.schedule,
            protected_width: self.protected_layer_width,
            connect_radius: self.connect_radius,
            grid: self.grid_frame()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(
            (c.laplacian_scale, c.binarize_threshold, c.protected_layer_width, c.connect_radius, c.outlier_threshold),
            (255.0, 10.0, 3, 3, 20.0)
        );
        assert_eq!(c.schedule, UpdateSchedule::new(1, 20, 80).unwrap());
        c.validate().unwrap();
    }

    #[test]
    fn file_overrides_defaults() {
        let mut c = RunConfig::default();
        c.apply_text("# run\nsigma: 4.5\nschedule = 1,10,40\nregion 0,0,10,10\nstencil 8\n", Path::new("c.txt")).unwrap();
        assert_eq!(c.sigma, 4.5);
        assert_eq!(c.schedule.skeleton_every, 10);
        assert_eq!(c.region, Some(Region::new(0, 0, 10, 10)));
        assert_eq!(c.stencil, Stencil::Eight);
    }

    #[test]
    fn bad_keys_report_their_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("sigma 3\nbogus 1\n", Path::new("c.txt")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = c.apply_text("schedule 1,20,70\n", Path::new("c.txt")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn validation_rejects_nonsense() {
        let c = RunConfig { sigma: 0.0, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { occupied_below: 210, ..RunConfig::default() };
        assert!(c.validate().is_err());
    }
}
