//! Scenario pipeline: build, synthesize, corrupt, collect, solve, analyze, write.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::output::{render_heatmap, with_suffix, write_json, write_source_overlay, write_vector_csv};
use super::scenario::{Artifact, CollectorSpec, GammaSpec, Scenario, TauSpec};
use crate::collector::{
    build_gaussian_collector, build_greedy_frame, build_random_collector, certify_coherence_sampled,
    CollectorKind, GreedyFrameOptions, NoiseCollector,
};
use crate::error::Result;
use crate::forward::{
    add_noise, build_sensing_matrix, nearest_grid_support, synthesize_data, DataVector, ImageGrid,
    ImagingConfig, SensingMatrix,
};
use crate::linalg::{norm1, norm2, norm_inf, sub, CMatrix, C64};
use crate::resolution::{
    compute_vicinities, estimate_gamma_with, incoherent_remainder, coherent_misfit, support_of,
    vicinity_extent, Extent, GammaProtocol,
};
use crate::rng::{stage, stage_seed};
use crate::solver::{kirchhoff_migration, split_solution, Gelma, GelmaSettings, SolveResult};

/// Pairs sampled when measuring the coherence of an unscreened collector.
pub const COHERENCE_SAMPLES: usize = 200_000;
/// Relative threshold below which reconstructed entries count as zero.
pub const SPURIOUS_LEVEL: f64 = 1e-6;

/// Everything the solve needs, built from a scenario.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ImagingConfig,
    pub sensing: SensingMatrix,
    /// True source vector in normalized-column coordinates.
    pub rho: Vec<C64>,
    pub clean: DataVector,
    pub data: DataVector,
    pub collector: Option<NoiseCollector>,
    pub master_seed: u64,
}

impl Prepared {
    pub fn k(&self) -> usize {
        self.sensing.cols()
    }

    /// `A`, or `[A | C]` when a collector is present.
    pub fn operator(&self) -> Result<Cow<'_, CMatrix>> {
        match &self.collector {
            Some(c) => Ok(Cow::Owned(c.augment(&self.sensing.matrix)?)),
            None => Ok(Cow::Borrowed(&self.sensing.matrix)),
        }
    }

    pub fn support(&self) -> Vec<usize> {
        support_of(&self.rho)
    }
}

pub fn prepare(s: &Scenario, seed: Option<u64>) -> Result<Prepared> {
    let master_seed = seed.unwrap_or(s.seed);
    let config = s.imaging.build().map_err(|e| e.at_stage("build"))?;
    let sensing = build_sensing_matrix(&config).map_err(|e| e.at_stage("build"))?;
    let scene = s.source_scene(&config)?;
    scene.validate(&config.grid).map_err(|e| e.at_stage("synthesize"))?;
    let clean = synthesize_data(&scene, &config).map_err(|e| e.at_stage("synthesize"))?;
    let physical = nearest_grid_support(&scene, &config).map_err(|e| e.at_stage("synthesize"))?;
    let rho = sensing.to_normalized(&physical);
    let data = match s.snr_db {
        None => clean.clone(),
        Some(snr) => add_noise(&clean, snr, stage_seed(master_seed, stage::NOISE))
            .map_err(|e| e.at_stage("noise"))?,
    };
    let m = support_of(&rho).len().max(1);
    let cseed = |explicit: Option<u64>| explicit.unwrap_or_else(|| stage_seed(master_seed, stage::COLLECTOR));
    let a = &sensing.matrix;
    let collector = match &s.collector {
        CollectorSpec::None => None,
        CollectorSpec::Random {
            sigma,
            seed,
            max_rejections,
        } => Some(build_random_collector(a, *sigma, m, cseed(*seed), *max_rejections)),
        CollectorSpec::Unscreened { sigma, seed } => {
            Some(build_gaussian_collector(a.rows(), *sigma, cseed(*seed)))
        }
        CollectorSpec::Greedy { budget, seed } => {
            let options = GreedyFrameOptions {
                candidate_budget: *budget,
                ..Default::default()
            };
            Some(build_greedy_frame(a, m, cseed(*seed), &options))
        }
    }
    .transpose()
    .map_err(|e| e.at_stage("collector"))?;
    Ok(Prepared {
        config,
        sensing,
        rho,
        clean,
        data,
        collector,
        master_seed,
    })
}

/// Step sizes and tolerances for a scenario solve on an operator with
/// estimated norm `op_norm`.
pub fn solver_settings(s: &Scenario, gelma: &Gelma<'_>, b: &[C64]) -> Result<GelmaSettings> {
    let spec = &s.solver;
    let mut settings = match spec.tau {
        TauSpec::Relative(t) => gelma.settings_for(b, t)?,
        TauSpec::Absolute(t) => GelmaSettings::with_norm(gelma.op_norm(), t),
    };
    let b_norm = norm2(b);
    settings = if s.snr_db.is_some() {
        settings.noisy(b_norm)
    } else {
        settings.noiseless(b_norm)
    };
    if let Some(t) = spec.residual_tol {
        settings.residual_tol = t * b_norm;
    }
    if let Some(t) = spec.change_tol {
        settings.change_tol = t;
    }
    if let Some(d) = spec.dual_step {
        settings.dual_step = d;
    }
    Ok(settings.max_iters(spec.max_iters))
}

/// Solver settings of the gamma protocol: absolute `tau` on unit probes,
/// an iteration cap, and the duality bound for unconverged trials.
pub fn gamma_settings(op_norm: f64, spec: &GammaSpec) -> GelmaSettings {
    let mut s = GelmaSettings::with_norm(op_norm, spec.tau).max_iters(spec.max_iters);
    s.residual_tol = 1e-4;
    s.change_tol = 1e-6;
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceRecovery {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub true_magnitude: f64,
    /// Largest reconstructed magnitude inside the source's vicinity.
    pub best_magnitude: f64,
    pub best_index: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectorInfo {
    pub kind: CollectorKind,
    pub sigma: usize,
    pub certified_bound: Option<f64>,
    /// Worst coherence over sampled pairs, for unscreened collectors.
    pub sampled_coherence: Option<f64>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    pub trials: usize,
    pub value: f64,
    pub converged_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub scenario: String,
    pub master_seed: u64,
    pub k: usize,
    pub sigma: usize,
    pub data_len: usize,
    pub sources: usize,
    pub snr_db: Option<f64>,
    pub data_norm: f64,
    /// `|b_delta - b|_2`.
    pub delta: f64,
    pub op_norm: f64,
    pub tau: f64,
    pub primal_step: f64,
    pub dual_step: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_l2: f64,
    pub coherent_misfit: f64,
    pub incoherent_remainder: f64,
    pub true_l1: f64,
    pub image_l1: f64,
    pub collector_l1: f64,
    /// `|rho_iw - rho|_inf`.
    pub max_error: f64,
    pub max_true: f64,
    /// Entries off the true support above `1e-6 max|rho|`.
    pub spurious: usize,
    pub exact_recovery: bool,
    pub recovery: Vec<SourceRecovery>,
    /// Fraction of sources with a vicinity entry at half the true magnitude.
    pub recovered_fraction: f64,
    pub vicinity_sizes: Vec<usize>,
    pub vicinity_extents: Vec<Extent>,
    pub overlap_free: bool,
    pub collinear: bool,
    pub max_union_coherence: f64,
    /// Local maxima of the migration image at or above half its peak.
    pub migration_peaks: usize,
    pub collector: Option<CollectorInfo>,
    pub gamma: Option<GammaSummary>,
}

/// Local maxima (8-neighborhood) of `|v|` at or above half the peak. Among
/// equal neighbors only the first in row-major order counts.
pub fn count_peaks(values: &[C64], grid: &ImageGrid) -> usize {
    let mags: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0;
    }
    let (rows, cols) = (grid.rows as isize, grid.cols as isize);
    (0..mags.len())
        .filter(|&k| {
            let m = mags[k];
            if m < 0.5 * peak {
                return false;
            }
            let (r, c) = grid.row_col(k);
            let (r, c) = (r as isize, c as isize);
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (rr, cc) = (r + dr, c + dc);
                    if (dr, dc) == (0, 0) || rr < 0 || cc < 0 || rr >= rows || cc >= cols {
                        continue;
                    }
                    let j = (rr * cols + cc) as usize;
                    if mags[j] > m || mags[j] == m && j < k {
                        return false;
                    }
                }
            }
            true
        })
        .count()
}

pub struct SolveInfo {
    pub settings: GelmaSettings,
    pub op_norm: f64,
}

pub fn solve_prepared(s: &Scenario, p: &Prepared) -> Result<(SolveResult, SolveInfo)> {
    let op = p.operator().map_err(|e| e.at_stage("solve"))?;
    let gelma = Gelma::new(&op);
    let settings = solver_settings(s, &gelma, &p.data.values).map_err(|e| e.at_stage("solve"))?;
    let result = gelma
        .solve(&p.data.values, &settings)
        .map_err(|e| e.at_stage("solve"))?;
    Ok((
        result,
        SolveInfo {
            settings,
            op_norm: gelma.op_norm(),
        },
    ))
}

pub fn analyze(s: &Scenario, p: &Prepared, result: &SolveResult, info: &SolveInfo) -> Result<Diagnostics> {
    let a = &p.sensing.matrix;
    let k = p.k();
    let (image, noise) = split_solution(result, k)?;
    let support = p.support();
    let vmap = compute_vicinities(a, &support, support.len())?;
    let max_true = norm_inf(&p.rho);
    let max_error = norm_inf(&sub(&image, &p.rho));
    let spurious = image
        .iter()
        .enumerate()
        .filter(|&(i, x)| p.rho[i] == C64::new(0.0, 0.0) && x.norm() > SPURIOUS_LEVEL * max_true)
        .count();
    let grid = &p.config.grid;
    let recovery: Vec<SourceRecovery> = support
        .iter()
        .zip(&vmap.vicinities)
        .map(|(&j, set)| {
            let (best_index, best_magnitude) = set
                .iter()
                .map(|&i| (i, image[i].norm()))
                .fold((j, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
            let (row, col) = grid.row_col(j);
            let true_magnitude = p.rho[j].norm();
            SourceRecovery {
                index: j,
                row,
                col,
                true_magnitude,
                best_magnitude,
                best_index,
                ratio: best_magnitude / true_magnitude,
            }
        })
        .collect();
    let recovered = recovery.iter().filter(|r| r.ratio >= 0.5).count();
    let migration = kirchhoff_migration(a, &p.data.values)?;
    let m = support.len();
    let collector = p.collector.as_ref().map(|c| -> Result<CollectorInfo> {
        let sampled = match c.kind {
            CollectorKind::Unscreened => Some(
                certify_coherence_sampled(
                    a,
                    &c.columns,
                    m,
                    COHERENCE_SAMPLES,
                    stage_seed(p.master_seed, stage::COLLECTOR) ^ 1,
                )?
                .worst_value,
            ),
            _ => None,
        };
        Ok(CollectorInfo {
            kind: c.kind,
            sigma: c.len(),
            certified_bound: c.certified_bound,
            sampled_coherence: sampled,
            threshold: crate::collector::coherence_threshold(m),
        })
    });
    let gamma = match &s.gamma {
        None => None,
        Some(spec) => {
            let op = p.operator()?;
            let gelma = Gelma::with_norm(&op, info.op_norm);
            let est = estimate_gamma_with(
                &gelma,
                &GammaProtocol::gaussian(spec.trials),
                stage_seed(p.master_seed, stage::GAMMA),
                &gamma_settings(info.op_norm, spec),
            )?;
            Some(GammaSummary {
                trials: est.trials.len(),
                value: est.value,
                converged_trials: est.trials.iter().filter(|t| t.converged).count(),
            })
        }
    };
    Ok(Diagnostics {
        scenario: s.name.clone(),
        master_seed: p.master_seed,
        k,
        sigma: p.collector.as_ref().map_or(0, |c| c.len()),
        data_len: p.data.len(),
        sources: m,
        snr_db: s.snr_db,
        data_norm: p.data.norm(),
        delta: norm2(&sub(&p.data.values, &p.clean.values)),
        op_norm: info.op_norm,
        tau: info.settings.tau,
        primal_step: info.settings.primal_step,
        dual_step: info.settings.dual_step,
        iterations: result.iterations,
        converged: result.converged,
        residual_l2: result.residual_l2,
        coherent_misfit: coherent_misfit(&p.rho, &image, a, &vmap)?,
        incoherent_remainder: incoherent_remainder(&image, &vmap),
        true_l1: norm1(&p.rho),
        image_l1: norm1(&image),
        collector_l1: norm1(&noise),
        max_error,
        max_true,
        spurious,
        exact_recovery: max_error <= SPURIOUS_LEVEL * max_true && spurious == 0,
        recovered_fraction: recovered as f64 / m as f64,
        recovery,
        vicinity_sizes: vmap.vicinities.iter().map(Vec::len).collect(),
        vicinity_extents: vmap
            .vicinities
            .iter()
            .filter_map(|v| vicinity_extent(grid, v))
            .collect(),
        overlap_free: vmap.overlap_free,
        collinear: vmap.collinear,
        max_union_coherence: vmap.max_union_coherence,
        migration_peaks: count_peaks(&migration, grid),
        collector: collector.transpose()?,
        gamma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub scenario: String,
    pub scenario_hash: String,
    pub master_seed: u64,
    pub grid: GridShape,
    pub artifacts: BTreeMap<Artifact, PathBuf>,
    /// Wall-clock milliseconds per stage; the only non-reproducible field.
    pub timings_ms: BTreeMap<String, f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Overrides the scenario's master seed.
    pub seed: Option<u64>,
}

pub struct RunReport {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub prepared: Prepared,
    pub result: SolveResult,
}

pub fn run_scenario_file(path: &Path, options: &RunOptions) -> Result<RunReport> {
    let (s, hash) = Scenario::load(path)?;
    run_scenario(&s, &hash, options)
}

/// Runs the full pipeline and writes the requested artifacts plus
/// `<name>.manifest.json` into `options.out_dir`.
pub fn run_scenario(s: &Scenario, scenario_hash: &str, options: &RunOptions) -> Result<RunReport> {
    s.validate()?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };
    let prepared = prepare(s, options.seed)?;
    lap("prepare", &mut timings);
    let (result, info) = solve_prepared(s, &prepared)?;
    lap("solve", &mut timings);
    let diagnostics = analyze(s, &prepared, &result, &info).map_err(|e| e.at_stage("analyze"))?;
    lap("analyze", &mut timings);

    let write = || -> Result<BTreeMap<Artifact, PathBuf>> {
        std::fs::create_dir_all(&options.out_dir)?;
        let prefix = options.out_dir.join(&s.name);
        let (image, noise) = split_solution(&result, prepared.k())?;
        let grid = &prepared.config.grid;
        let mut artifacts = BTreeMap::new();
        let mut requested = s.outputs.clone();
        requested.sort();
        requested.dedup();
        for art in requested {
            let path = with_suffix(&prefix, art.suffix());
            match art {
                Artifact::ImageCsv => write_vector_csv(&image, &path)?,
                Artifact::CollectorCsv => write_vector_csv(&noise, &path)?,
                Artifact::Diagnostics => write_json(&diagnostics, &path)?,
                Artifact::HeatmapL1 => render_heatmap(&image, grid.rows, grid.cols, &path)?,
                Artifact::HeatmapL2 => {
                    let l2 = kirchhoff_migration(&prepared.sensing.matrix, &prepared.data.values)?;
                    render_heatmap(&l2, grid.rows, grid.cols, &path)?
                }
                Artifact::Sources => write_source_overlay(grid, &prepared.support(), &path)?,
                Artifact::MatrixBin => prepared.sensing.matrix.write_binary(&path)?,
                Artifact::CollectorBin => match &prepared.collector {
                    Some(c) => c.columns.write_binary(&path)?,
                    None => continue,
                },
            }
            artifacts.insert(art, path);
        }
        Ok(artifacts)
    };
    let artifacts = write().map_err(|e| e.at_stage("write"))?;
    lap("write", &mut timings);

    let grid = &prepared.config.grid;
    let manifest = RunManifest {
        schema_version: 1,
        scenario: s.name.clone(),
        scenario_hash: scenario_hash.to_string(),
        master_seed: prepared.master_seed,
        grid: GridShape {
            rows: grid.rows,
            cols: grid.cols,
            spacing: grid.spacing,
        },
        artifacts,
        timings_ms: timings,
        iterations: result.iterations,
        converged: result.converged,
        diagnostics,
    };
    let manifest_path = with_suffix(&options.out_dir.join(&s.name), "manifest.json");
    write_json(&manifest, &manifest_path).map_err(|e| e.at_stage("write"))?;
    Ok(RunReport {
        manifest,
        manifest_path,
        prepared,
        result,
    })
}
