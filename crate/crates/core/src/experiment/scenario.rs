//! Versioned JSON scenario files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{ImagingConfig, PlanarSetup, Point, PointSource, SourceScene};
use crate::linalg::C64;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub imaging: Imaging,
    pub scene: Vec<SourceSpec>,
    /// `None` means noiseless data.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub collector: CollectorSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub gamma: Option<GammaSpec>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Artifact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Imaging {
    Planar(PlanarSetup),
    Explicit(ImagingConfig),
}

impl Imaging {
    pub fn build(&self) -> Result<ImagingConfig> {
        match self {
            Imaging::Planar(p) => p.build(),
            Imaging::Explicit(c) => {
                c.validate()?;
                Ok(c.clone())
            }
        }
    }
}

/// A source either at a grid node (`pixel = [row, col]`) or at a free
/// position. Amplitudes are `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Pixel { pixel: [usize; 2], amplitude: [f64; 2] },
    Position { position: Point, amplitude: [f64; 2] },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CollectorSpec {
    #[default]
    None,
    /// Screened Gaussian columns.
    Random {
        sigma: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_rejections")]
        max_rejections: usize,
    },
    /// Gaussian columns without screening.
    Unscreened {
        sigma: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Greedy {
        budget: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TauSpec {
    /// `tau = x * |D^* b|_inf`.
    Relative(f64),
    Absolute(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tau")]
    pub tau: TauSpec,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Residual tolerance relative to `|b|`; defaults depend on the noise.
    #[serde(default)]
    pub residual_tol: Option<f64>,
    #[serde(default)]
    pub change_tol: Option<f64>,
    #[serde(default)]
    pub dual_step: Option<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tau: default_tau(),
            max_iters: default_max_iters(),
            residual_tol: None,
            change_tol: None,
            dual_step: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub trials: usize,
    #[serde(default = "default_gamma_iters")]
    pub max_iters: usize,
    #[serde(default = "default_gamma_tau")]
    pub tau: f64,
}

impl Default for GammaSpec {
    fn default() -> Self {
        Self {
            trials: 20,
            max_iters: default_gamma_iters(),
            tau: default_gamma_tau(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    ImageCsv,
    CollectorCsv,
    Diagnostics,
    HeatmapL1,
    HeatmapL2,
    Sources,
    MatrixBin,
    CollectorBin,
}

impl Artifact {
    pub fn suffix(self) -> &'static str {
        match self {
            Artifact::ImageCsv => "image.csv",
            Artifact::CollectorCsv => "collector.csv",
            Artifact::Diagnostics => "diagnostics.json",
            Artifact::HeatmapL1 => "l1.pgm",
            Artifact::HeatmapL2 => "l2.pgm",
            Artifact::Sources => "sources.txt",
            Artifact::MatrixBin => "matrix.bin",
            Artifact::CollectorBin => "collector.bin",
        }
    }
}

fn default_outputs() -> Vec<Artifact> {
    vec![
        Artifact::ImageCsv,
        Artifact::CollectorCsv,
        Artifact::Diagnostics,
        Artifact::HeatmapL1,
        Artifact::HeatmapL2,
        Artifact::Sources,
    ]
}

fn default_rejections() -> usize {
    10_000
}

fn default_tau() -> TauSpec {
    TauSpec::Relative(1.0)
}

fn default_max_iters() -> usize {
    20_000
}

fn default_gamma_iters() -> usize {
    150
}

fn default_gamma_tau() -> f64 {
    0.1
}

impl SourceSpec {
    pub fn amplitude(&self) -> C64 {
        let [re, im] = match self {
            SourceSpec::Pixel { amplitude, .. } | SourceSpec::Position { amplitude, .. } => *amplitude,
        };
        C64::new(re, im)
    }
}

impl Scenario {
    /// Parses and validates. Syntax errors carry line and column; semantic
    /// errors name the offending field.
    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::ScenarioParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<(Scenario, String)> {
        let text = std::fs::read_to_string(path)?;
        let s = Scenario::from_json(&text)?;
        Ok((s, content_hash(text.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::field(
                "version",
                format!("unsupported version {}, expected {SCENARIO_VERSION}", self.version),
            ));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::field("name", "must be nonempty [A-Za-z0-9_-]"));
        }
        let config = self.imaging.build().map_err(|e| Error::field("imaging", e.to_string()))?;
        self.source_scene(&config)?
            .validate(&config.grid)
            .map_err(|e| Error::field("scene", e.to_string()))?;
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::field("snr_db", "must be a finite number or null"));
            }
        }
        match self.collector {
            CollectorSpec::None => {}
            CollectorSpec::Random { sigma, .. } | CollectorSpec::Unscreened { sigma, .. } => {
                if sigma == 0 {
                    return Err(Error::field("collector.sigma", "must be at least 1"));
                }
            }
            CollectorSpec::Greedy { budget, .. } => {
                if budget == 0 {
                    return Err(Error::field("collector.budget", "must be at least 1"));
                }
            }
        }
        let s = &self.solver;
        match s.tau {
            TauSpec::Relative(t) | TauSpec::Absolute(t) if !(t.is_finite() && t >= 0.0) => {
                return Err(Error::field("solver.tau", "must be a nonnegative number"));
            }
            _ => {}
        }
        if s.max_iters == 0 {
            return Err(Error::field("solver.max_iters", "must be at least 1"));
        }
        for (name, v) in [("solver.residual_tol", s.residual_tol), ("solver.change_tol", s.change_tol)] {
            if v.is_some_and(|t| !(t.is_finite() && t >= 0.0)) {
                return Err(Error::field(name, "must be a nonnegative number"));
            }
        }
        if s.dual_step.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::field("solver.dual_step", "must be positive"));
        }
        if let Some(g) = &self.gamma {
            if g.trials == 0 || g.max_iters == 0 || !(g.tau >= 0.0) {
                return Err(Error::field("gamma", "trials and max_iters must be positive, tau nonnegative"));
            }
        }
        Ok(())
    }

    /// Sources in physical coordinates.
    pub fn source_scene(&self, config: &ImagingConfig) -> Result<SourceScene> {
        let grid = &config.grid;
        let sources = self
            .scene
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let position = match s {
                    SourceSpec::Pixel { pixel: [r, c], .. } => {
                        if *r >= grid.rows || *c >= grid.cols {
                            return Err(Error::field(
                                format!("scene[{j}].pixel"),
                                format!("[{r}, {c}] outside the {}x{} grid", grid.rows, grid.cols),
                            ));
                        }
                        grid.position(grid.index(*r, *c))
                    }
                    SourceSpec::Position { position, .. } => *position,
                };
                Ok(PointSource {
                    position,
                    amplitude: s.amplitude(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if sources.is_empty() {
            return Err(Error::field("scene", "needs at least one source"));
        }
        Ok(SourceScene { sources })
    }
}

/// Lowercase hex SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
