//! Sparse source imaging with l1 minimization and noise collectors.
//!
//! The crate builds the multi-frequency array imaging matrix for point
//! sources in a homogeneous medium, solves the minimal l1 problem with the
//! GeLMA primal-dual iteration, augments the matrix with noise collectors,
//! and measures reconstructions against the vicinity-based resolution
//! theory (coherent misfit, incoherent remainder, gamma).
//!
//! All computations are in units of the central wavelength.

pub mod collector;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod linalg;
pub mod resolution;
pub mod rng;
pub mod solver;

pub use collector::{
    build_gaussian_collector, build_greedy_frame, build_random_collector, certify_coherence,
    certify_coherence_sampled, greedy_decompose, CoherenceCertificate, CollectorKind,
    GreedyDecomposition, GreedyFrameOptions, NoiseCollector,
};
pub use error::{Error, Result};
pub use forward::{
    add_noise, build_sensing_matrix, green_function, green_vector, nearest_grid_support,
    synthesize_data, DataVector, ImageGrid, ImagingConfig, PlanarSetup, Point, PointSource,
    SensingMatrix, SourceScene, NO_NOISE,
};
pub use linalg::{CMatrix, C64};
pub use resolution::{
    coherent_misfit, compute_vicinities, estimate_gamma, estimate_gamma_with,
    hermitian_eigenvalue_bounds, incoherent_remainder, mutual_coherence, GammaEstimate,
    GammaProtocol, MisfitReport, VicinityMap,
};
pub use solver::{
    gelma_solve, kirchhoff_migration, soft_threshold, split_solution, Gelma, GelmaSettings,
    SolveResult,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SPARSE_IMAGER_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`] if it is set. Returns
/// the cap that was applied. Must run before any parallel work.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(Some(n))
}
