//! Resolution analysis: coherence, vicinities, coherent misfit, incoherent
//! remainder and Monte-Carlo estimates of the stability constant gamma.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collector::coherence_threshold;
use crate::error::{Error, Result};
use crate::forward::ImageGrid;
use crate::linalg::{dot_conj, fold_column_pairs, norm1, norm2, CMatrix, C64};
use crate::rng::{complex_gaussian, rng_from_seed, stage_seed};
use crate::solver::{Gelma, GelmaSettings};

/// Coherence at or above which two columns count as collinear.
pub const COLLINEAR_LEVEL: f64 = 1.0 - 1e-10;

/// `max_{i != j} |<a_i, a_j>|`.
pub fn mutual_coherence(a: &CMatrix) -> Result<f64> {
    if a.cols() < 2 {
        return Err(Error::Precondition("mutual coherence needs at least two columns".into()));
    }
    Ok(fold_column_pairs(a, || 0.0f64, |m, _, _, g| *m = m.max(g))
        .into_iter()
        .fold(0.0, f64::max))
}

/// For every column, the number of other columns with `|<a_i, a_j>| >= threshold`.
pub fn coherence_counts(a: &CMatrix, threshold: f64) -> Vec<usize> {
    let k = a.cols();
    let partial = fold_column_pairs(
        a,
        Vec::<(usize, usize)>::new,
        |hits, i, j, g| {
            if g >= threshold {
                hits.push((i, j));
            }
        },
    );
    let mut counts = vec![0; k];
    for (i, j) in partial.into_iter().flatten() {
        counts[i] += 1;
        counts[j] += 1;
    }
    counts
}

/// `|<a_k, a_j>|` for all `k`, i.e. one row of the absolute Gram matrix.
pub fn coherence_row(a: &CMatrix, j: usize) -> Vec<f64> {
    let aj = a.column(j);
    (0..a.cols())
        .into_par_iter()
        .with_min_len(64)
        .map(|k| dot_conj(a.column(k), aj).norm())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VicinityMap {
    pub support: Vec<usize>,
    /// `vicinities[i]` is the sorted vicinity of `support[i]`.
    pub vicinities: Vec<Vec<usize>>,
    pub overlap_free: bool,
    /// Sorted union of all vicinities.
    pub union: Vec<usize>,
    /// Largest coherence between distinct members of the union.
    pub max_union_coherence: f64,
    /// Whether the union holds a pair with coherence at or above [`COLLINEAR_LEVEL`].
    pub collinear: bool,
}

impl VicinityMap {
    pub fn contains(&self, k: usize) -> bool {
        self.union.binary_search(&k).is_ok()
    }

    pub fn vicinity_of(&self, j: usize) -> Option<&[usize]> {
        self.support
            .iter()
            .position(|&s| s == j)
            .map(|i| &self.vicinities[i][..])
    }
}

/// `S_j = {k : |<a_k, a_j>| >= 1/(3M)}` for every `j` in `support`.
pub fn compute_vicinities(a: &CMatrix, support: &[usize], m: usize) -> Result<VicinityMap> {
    if support.is_empty() {
        return Err(Error::Precondition("support is empty".into()));
    }
    if m != support.len() {
        return Err(Error::Precondition(format!(
            "M = {m} but the support has {} entries",
            support.len()
        )));
    }
    if let Some(&bad) = support.iter().find(|&&j| j >= a.cols()) {
        return Err(Error::Precondition(format!(
            "support index {bad} out of range for {} columns",
            a.cols()
        )));
    }
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Precondition("support has repeated indices".into()));
    }
    let threshold = coherence_threshold(m);
    let vicinities: Vec<Vec<usize>> = support
        .iter()
        .map(|&j| {
            coherence_row(a, j)
                .into_iter()
                .enumerate()
                .filter(|&(_, g)| g >= threshold)
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    let mut union: Vec<usize> = vicinities.iter().flatten().copied().collect();
    let total = union.len();
    union.sort_unstable();
    union.dedup();
    let overlap_free = union.len() == total;
    let sub = a.select_columns(&union);
    let max_union_coherence = if union.len() < 2 {
        0.0
    } else {
        mutual_coherence(&sub)?
    };
    Ok(VicinityMap {
        support: support.to_vec(),
        vicinities,
        overlap_free,
        union,
        max_union_coherence,
        collinear: max_union_coherence >= COLLINEAR_LEVEL,
    })
}

/// Indices of the nonzero entries, increasing.
pub fn support_of(v: &[C64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != C64::new(0.0, 0.0))
        .map(|(k, _)| k)
        .collect()
}

/// `Co(rho, eta) = sum_{j in T} |rho_j - sum_{k in S_j} <a_j, a_k> eta_k|`.
pub fn coherent_misfit(rho: &[C64], eta: &[C64], a: &CMatrix, vmap: &VicinityMap) -> Result<f64> {
    for v in [rho, eta] {
        if v.len() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.cols(),
                actual: v.len(),
            });
        }
    }
    let mut t = vmap.support.clone();
    t.sort_unstable();
    if support_of(rho) != t {
        return Err(Error::Precondition(
            "support of rho does not match the vicinity map".into(),
        ));
    }
    Ok(vmap
        .support
        .iter()
        .zip(&vmap.vicinities)
        .map(|(&j, s)| {
            let aj = a.column(j);
            let mass: C64 = s.iter().map(|&k| dot_conj(aj, a.column(k)) * eta[k]).sum();
            (rho[j] - mass).norm()
        })
        .fold(0.0, |s, x| s + x))
}

/// `In(rho, eta) = sum_{k not in U} |eta_k|`, the l1 mass outside all vicinities.
pub fn incoherent_remainder(eta: &[C64], vmap: &VicinityMap) -> f64 {
    eta.iter()
        .enumerate()
        .filter(|(k, _)| !vmap.contains(*k))
        .map(|(_, x)| x.norm())
        .fold(0.0, |s, x| s + x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisfitReport {
    pub coherent_misfit: f64,
    pub incoherent_remainder: f64,
    pub gamma_estimate: Option<f64>,
    /// `|b - b_delta|_2` when known.
    pub delta: Option<f64>,
}

pub fn misfit_report(
    rho: &[C64],
    eta: &[C64],
    a: &CMatrix,
    vmap: &VicinityMap,
    delta: Option<f64>,
    gamma_estimate: Option<f64>,
) -> Result<MisfitReport> {
    Ok(MisfitReport {
        coherent_misfit: coherent_misfit(rho, eta, a, vmap)?,
        incoherent_remainder: incoherent_remainder(eta, vmap),
        gamma_estimate,
        delta,
    })
}

/// Which data-space directions a gamma estimate probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalDirections {
    All,
    /// The first `n` basis vectors `e_0, ..., e_{n-1}`.
    First(usize),
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaProtocol {
    pub gaussian_trials: usize,
    pub canonical: CanonicalDirections,
    /// Stop as soon as the running maximum exceeds this value. The estimate
    /// is a maximum, so anything above the mark is already decided.
    #[serde(default)]
    pub stop_above: Option<f64>,
}

impl GammaProtocol {
    pub fn gaussian(trials: usize) -> Self {
        Self {
            gaussian_trials: trials,
            canonical: CanonicalDirections::None,
            stop_above: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Gaussian,
    Canonical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaTrial {
    pub direction: Direction,
    /// Trial seed for Gaussian directions, basis index for canonical ones.
    pub seed: u64,
    pub l1: f64,
    /// Duality lower bound on the minimal l1 norm for this direction.
    pub dual_bound: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl GammaTrial {
    /// `|xi|_1` when the solve converged, the duality bound otherwise.
    pub fn value(&self) -> f64 {
        if self.converged {
            self.l1
        } else {
            self.dual_bound
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// Maximum of the per-trial values: a lower estimate of gamma.
    pub value: f64,
    pub trials: Vec<GammaTrial>,
}

/// Monte-Carlo lower estimate of `gamma = sup_c |xi|_1 / |c|_2` over `trials`
/// Gaussian unit directions plus every canonical basis direction.
pub fn estimate_gamma(d: &CMatrix, trials: usize, seed: u64, settings: &GelmaSettings) -> Result<f64> {
    let protocol = GammaProtocol {
        canonical: CanonicalDirections::All,
        ..GammaProtocol::gaussian(trials)
    };
    Ok(estimate_gamma_with(&Gelma::new(d), &protocol, seed, settings)?.value)
}

/// Gamma estimate under an explicit protocol. `settings.tau` is absolute;
/// every probe direction has unit norm. Trial `i` uses seed
/// `stage_seed(seed, i)`.
pub fn estimate_gamma_with(
    gelma: &Gelma<'_>,
    protocol: &GammaProtocol,
    seed: u64,
    settings: &GelmaSettings,
) -> Result<GammaEstimate> {
    let d = gelma.operator();
    let n = d.rows();
    let n_canonical = match protocol.canonical {
        CanonicalDirections::All => n,
        CanonicalDirections::First(k) => k.min(n),
        CanonicalDirections::None => 0,
    };
    if protocol.gaussian_trials + n_canonical == 0 {
        return Err(Error::InvalidConfig("gamma estimate needs at least one trial".into()));
    }
    let mut out = Vec::with_capacity(protocol.gaussian_trials + n_canonical);
    let run = |c: Vec<C64>, direction: Direction, tag: u64, index: usize| -> Result<GammaTrial> {
        let fail = |message: String| Error::GammaTrial {
            trial: index,
            seed: tag,
            message,
        };
        let r = gelma.solve(&c, settings).map_err(|e| fail(e.to_string()))?;
        let dual_bound = r.dual_lower_bound(d, &c).map_err(|e| fail(e.to_string()))?;
        Ok(GammaTrial {
            direction,
            seed: tag,
            l1: norm1(&r.solution),
            dual_bound,
            converged: r.converged,
            iterations: r.iterations,
        })
    };
    let mut best = 0.0f64;
    let done = |best: f64| protocol.stop_above.is_some_and(|mark| best > mark);
    for i in 0..protocol.gaussian_trials {
        if done(best) {
            break;
        }
        let s = stage_seed(seed, i as u64);
        let mut c = complex_gaussian(&mut rng_from_seed(s), n, 1.0);
        let norm = norm2(&c);
        c.iter_mut().for_each(|x| *x /= norm);
        let t = run(c, Direction::Gaussian, s, i)?;
        best = best.max(t.value());
        out.push(t);
    }
    for k in 0..n_canonical {
        if done(best) {
            break;
        }
        let mut c = vec![C64::new(0.0, 0.0); n];
        c[k] = C64::new(1.0, 0.0);
        let t = run(c, Direction::Canonical, k as u64, protocol.gaussian_trials + k)?;
        best = best.max(t.value());
        out.push(t);
    }
    Ok(GammaEstimate {
        value: out.iter().map(GammaTrial::value).fold(0.0, f64::max),
        trials: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenBounds {
    pub lower: f64,
    pub upper: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub holds: bool,
}

/// Spectrum of a Hermitian matrix with unit diagonal and off-diagonal
/// entries bounded by `c`, checked against `[1 - (M-1)c, 1 + (M-1)c]`.
pub fn hermitian_eigenvalue_bounds(b: &CMatrix, c: f64) -> Result<EigenBounds> {
    let m = b.rows();
    if m == 0 || b.cols() != m {
        return Err(Error::Precondition("matrix must be square and nonempty".into()));
    }
    let spread = (m - 1) as f64 * c;
    if !(c >= 0.0) || spread >= 1.0 {
        return Err(Error::Precondition(format!("(M - 1) c = {spread} must be < 1")));
    }
    for i in 0..m {
        if (b.get(i, i) - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::Precondition(format!("diagonal entry {i} is not 1")));
        }
        for j in 0..i {
            if (b.get(i, j) - b.get(j, i).conj()).norm() > 1e-12 {
                return Err(Error::Precondition(format!("entry ({i}, {j}) breaks Hermitian symmetry")));
            }
            if b.get(i, j).norm() > c * (1.0 + 1e-12) {
                return Err(Error::Precondition(format!("entry ({i}, {j}) exceeds c = {c}")));
            }
        }
    }
    let dense = DMatrix::from_fn(m, m, |i, j| b.get(i, j));
    let mut eigenvalues: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let (lower, upper) = (1.0 - spread, 1.0 + spread);
    let slack = 1e-12;
    Ok(EigenBounds {
        lower,
        upper,
        holds: eigenvalues.iter().all(|&l| l >= lower - slack && l <= upper + slack),
        eigenvalues,
    })
}

/// Pixel extents of a set of grid indices: rows run in range, columns in
/// cross-range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extent {
    pub range: usize,
    pub cross_range: usize,
}

pub fn vicinity_extent(grid: &ImageGrid, set: &[usize]) -> Option<Extent> {
    let rc: Vec<(usize, usize)> = set
        .iter()
        .filter(|&&k| k < grid.len())
        .map(|&k| grid.row_col(k))
        .collect();
    let span = |v: Vec<usize>| v.iter().max().unwrap() - v.iter().min().unwrap() + 1;
    if rc.is_empty() {
        return None;
    }
    Some(Extent {
        range: span(rc.iter().map(|p| p.0).collect()),
        cross_range: span(rc.iter().map(|p| p.1).collect()),
    })
}
