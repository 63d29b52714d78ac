//! Noise collectors: fictitious unit columns appended to the imaging matrix
//! so that noise is absorbed by unknowns outside the image.
//!
//! A collector `C` built for `M` sources is certified when every pairwise
//! coherence inside `C` and every cross coherence with the imaging matrix
//! `A` is strictly below `1/(3M)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_conj, fold_column_pairs, norm2, CMatrix, C64};
use crate::rng::{complex_gaussian, rng_from_seed};

/// The certification threshold `1/(3M)`.
pub fn coherence_threshold(m: usize) -> f64 {
    1.0 / (3.0 * m as f64)
}

/// Contraction rate of one greedy step, `sqrt(1 - 1/(9 M^2))`.
pub fn contraction_rate(m: usize) -> f64 {
    let t = coherence_threshold(m);
    (1.0 - t * t).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectorKind {
    /// Gaussian columns screened against the certification threshold.
    Random,
    /// Greedy frame from the constructive existence proof.
    Greedy,
    /// Gaussian columns with no screening; coherence is only measured.
    Unscreened,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    Complex,
}

/// Monte-Carlo check that every sampled unit `b` has some frame vector with
/// `|<d_k, b>| > 1/(3M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingCheck {
    pub samples: usize,
    /// `min_b max_k |<d_k, b>|` over the samples.
    pub worst_coverage: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseCollector {
    pub columns: CMatrix,
    /// Largest coherence verified at build time; `None` when unscreened.
    pub certified_bound: Option<f64>,
    pub kind: CollectorKind,
    pub stopping_check: Option<StoppingCheck>,
}

impl NoiseCollector {
    pub fn len(&self) -> usize {
        self.columns.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.cols() == 0
    }

    /// `D = [A | C]`.
    pub fn augment(&self, a: &CMatrix) -> Result<CMatrix> {
        a.hcat(&self.columns)
    }
}

/// Which block a coherence pair lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// `(i, j)`: column `i` of `A`, column `j` of `C`.
    Cross,
    /// `(i, j)`: columns `i < j` of `C`.
    Collector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCertificate {
    pub ok: bool,
    pub worst_pair: Option<(PairKind, usize, usize)>,
    pub worst_value: f64,
    pub threshold: f64,
    /// Number of inner products evaluated.
    pub pairs_checked: u64,
    pub exhaustive: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Worst {
    value: f64,
    pair: Option<(PairKind, usize, usize)>,
}

impl Worst {
    const NONE: Worst = Worst {
        value: 0.0,
        pair: None,
    };

    // Larger value wins; ties go to the lexicographically smallest pair so the
    // reduction does not depend on how the work was split.
    fn max(self, other: Worst) -> Worst {
        match (self.pair, other.pair) {
            (None, _) => other,
            (_, None) => self,
            (Some(p), Some(q)) => {
                if other.value > self.value || other.value == self.value && key(q) < key(p) {
                    other
                } else {
                    self
                }
            }
        }
    }
}

fn key(p: (PairKind, usize, usize)) -> (u8, usize, usize) {
    (matches!(p.0, PairKind::Collector) as u8, p.1, p.2)
}

fn check_unit_columns(m: &CMatrix, what: &str) -> Result<()> {
    for (k, col) in m.columns().enumerate() {
        let n = norm2(col);
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::Precondition(format!(
                "column {k} of {what} has norm {n}, expected 1"
            )));
        }
    }
    Ok(())
}

fn check_rows(a: &CMatrix, c: &CMatrix) -> Result<()> {
    if a.rows() != c.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            actual: c.rows(),
        });
    }
    Ok(())
}

/// Exhaustive cross and intra-collector coherence.
pub fn certify_coherence(a: &CMatrix, c: &CMatrix, m: usize) -> Result<CoherenceCertificate> {
    if m == 0 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    check_rows(a, c)?;
    check_unit_columns(a, "A")?;
    check_unit_columns(c, "C")?;
    let cross = (0..c.cols())
        .into_par_iter()
        .map(|j| {
            let cj = c.column(j);
            (0..a.cols()).fold(Worst::NONE, |w, i| {
                w.max(Worst {
                    value: dot_conj(a.column(i), cj).norm(),
                    pair: Some((PairKind::Cross, i, j)),
                })
            })
        })
        .reduce(|| Worst::NONE, Worst::max);
    let intra = fold_column_pairs(
        c,
        || Worst::NONE,
        |w, i, j, g| {
            *w = w.max(Worst {
                value: g,
                pair: Some((PairKind::Collector, i, j)),
            })
        },
    )
    .into_iter()
    .fold(Worst::NONE, Worst::max);
    let worst = cross.max(intra);
    let k = c.cols() as u64;
    let threshold = coherence_threshold(m);
    Ok(CoherenceCertificate {
        ok: worst.value < threshold,
        worst_pair: worst.pair,
        worst_value: worst.value,
        threshold,
        pairs_checked: a.cols() as u64 * k + k * k.saturating_sub(1) / 2,
        exhaustive: true,
    })
}

/// Coherence over `samples` random pairs drawn from the cross and intra
/// blocks in proportion to their sizes. The worst value is a lower estimate
/// of the exhaustive one, so `ok` is only evidence, not a certificate.
pub fn certify_coherence_sampled(
    a: &CMatrix,
    c: &CMatrix,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<CoherenceCertificate> {
    use rand::Rng;
    if m == 0 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    check_rows(a, c)?;
    let (ka, kc) = (a.cols() as u64, c.cols() as u64);
    let n_cross = ka * kc;
    let n_intra = kc * kc.saturating_sub(1) / 2;
    let total = n_cross + n_intra;
    let mut rng = rng_from_seed(seed);
    let mut pairs = Vec::with_capacity(samples);
    if total > 0 {
        for _ in 0..samples {
            if rng.random_range(0..total) < n_cross {
                let i = rng.random_range(0..ka) as usize;
                let j = rng.random_range(0..kc) as usize;
                pairs.push((PairKind::Cross, i, j));
            } else {
                let i = rng.random_range(0..kc) as usize;
                let mut j = rng.random_range(0..kc - 1) as usize;
                if j >= i {
                    j += 1;
                }
                pairs.push((PairKind::Collector, i.min(j), i.max(j)));
            }
        }
    }
    let worst = pairs
        .par_iter()
        .map(|&(kind, i, j)| {
            let left = match kind {
                PairKind::Cross => a.column(i),
                PairKind::Collector => c.column(i),
            };
            Worst {
                value: dot_conj(left, c.column(j)).norm(),
                pair: Some((kind, i, j)),
            }
        })
        .reduce(|| Worst::NONE, Worst::max);
    let threshold = coherence_threshold(m);
    Ok(CoherenceCertificate {
        ok: worst.value < threshold,
        worst_pair: worst.pair,
        worst_value: worst.value,
        threshold,
        pairs_checked: pairs.len() as u64,
        exhaustive: false,
    })
}

/// Largest `|<existing_k, v>|` over the given column sets, ties to the lowest
/// index. Indices run over `a` first, then `accepted`.
fn screen(a: &CMatrix, accepted: &[Vec<C64>], v: &[C64]) -> (f64, usize) {
    let ka = a.cols();
    (0..ka + accepted.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|k| {
            let col = if k < ka { a.column(k) } else { &accepted[k - ka][..] };
            (dot_conj(col, v).norm(), k)
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |x, y| if y.0 > x.0 || y.0 == x.0 && y.1 < x.1 { y } else { x },
        )
}

fn unit_gaussian<R: rand::Rng>(rng: &mut R, n: usize, field: Field) -> Vec<C64> {
    let mut v = complex_gaussian(rng, n, 1.0 / n as f64);
    if field == Field::Real {
        v.iter_mut().for_each(|x| x.im = 0.0);
    }
    let s = norm2(&v);
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Gaussian columns with entry variance `1/(NS)`, normalized to unit length,
/// each accepted only if its coherence with `A` and with previously accepted
/// columns is below `1/(3M)`. Rejected draws are discarded whole. Fails with
/// [`Error::CollectorInfeasible`] after `max_rejections` rejections, reporting
/// the rejected candidate that came closest to passing.
pub fn build_random_collector(
    a: &CMatrix,
    sigma: usize,
    m: usize,
    seed: u64,
    max_rejections: usize,
) -> Result<NoiseCollector> {
    if sigma == 0 || m == 0 {
        return Err(Error::InvalidConfig("sigma and M must be at least 1".into()));
    }
    if a.rows() == 0 {
        return Err(Error::InvalidConfig("imaging matrix has no rows".into()));
    }
    let threshold = coherence_threshold(m);
    let n = a.rows();
    let mut rng = rng_from_seed(seed);
    let mut accepted: Vec<Vec<C64>> = Vec::with_capacity(sigma);
    let mut bound: f64 = 0.0;
    let mut rejections = 0;
    let mut closest: Option<(f64, usize)> = None;
    while accepted.len() < sigma {
        let v = unit_gaussian(&mut rng, n, Field::Complex);
        let (worst, at) = screen(a, &accepted, &v);
        if worst < threshold {
            bound = bound.max(worst);
            accepted.push(v);
            continue;
        }
        rejections += 1;
        if closest.is_none_or(|(w, _)| worst < w) {
            closest = Some((worst, at));
        }
        if rejections >= max_rejections {
            let (value, conflict) = closest.unwrap_or((f64::NAN, 0));
            return Err(Error::CollectorInfeasible {
                accepted: accepted.len(),
                requested: sigma,
                conflict,
                value,
            });
        }
    }
    Ok(NoiseCollector {
        columns: CMatrix::from_columns(n, accepted)?,
        certified_bound: Some(bound),
        kind: CollectorKind::Random,
        stopping_check: None,
    })
}

/// Gaussian columns with entry variance `1/(NS)`, normalized, no screening.
pub fn build_gaussian_collector(rows: usize, sigma: usize, seed: u64) -> Result<NoiseCollector> {
    if sigma == 0 || rows == 0 {
        return Err(Error::InvalidConfig("sigma and rows must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let cols: Vec<Vec<C64>> = (0..sigma)
        .map(|_| unit_gaussian(&mut rng, rows, Field::Complex))
        .collect();
    Ok(NoiseCollector {
        columns: CMatrix::from_columns(rows, cols)?,
        certified_bound: None,
        kind: CollectorKind::Unscreened,
        stopping_check: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyFrameOptions {
    pub field: Field,
    /// Consecutive failed candidates that end the search.
    pub candidate_budget: usize,
    /// Projection passes applied to a candidate before giving up on it.
    pub correction_rounds: usize,
    /// Random unit vectors used to check the stopping property.
    pub stopping_samples: usize,
}

impl Default for GreedyFrameOptions {
    fn default() -> Self {
        Self {
            field: Field::Complex,
            candidate_budget: 2000,
            correction_rounds: 8,
            stopping_samples: 1000,
        }
    }
}

/// Greedy frame construction: starting from the columns of `A` (which may be
/// empty, `A.rows()` fixes the dimension), keep adding unit vectors whose
/// coherence with every frame vector is below `1/(3M)`. Each random candidate
/// is corrected by projecting out its worst offenders and renormalizing. The
/// search ends after `candidate_budget` consecutive failures; the stopping
/// property is then checked on random unit vectors.
pub fn build_greedy_frame(
    a: &CMatrix,
    m: usize,
    seed: u64,
    options: &GreedyFrameOptions,
) -> Result<NoiseCollector> {
    if m == 0 || a.rows() == 0 {
        return Err(Error::InvalidConfig("M and the dimension must be at least 1".into()));
    }
    if options.candidate_budget == 0 {
        return Err(Error::InvalidConfig("candidate budget must be at least 1".into()));
    }
    check_unit_columns(a, "A")?;
    let n = a.rows();
    let threshold = coherence_threshold(m);
    let mut rng = rng_from_seed(seed);
    let mut accepted: Vec<Vec<C64>> = Vec::new();
    let mut bound: f64 = 0.0;
    let mut failures = 0;
    while failures < options.candidate_budget {
        let mut v = unit_gaussian(&mut rng, n, options.field);
        let mut outcome = None;
        for round in 0..=options.correction_rounds {
            let (worst, _) = screen(a, &accepted, &v);
            if worst < threshold {
                outcome = Some(worst.max(0.0));
                break;
            }
            if round == options.correction_rounds || !correct(a, &accepted, &mut v, threshold) {
                break;
            }
        }
        match outcome {
            Some(worst) => {
                bound = bound.max(worst);
                accepted.push(v);
                failures = 0;
            }
            None => failures += 1,
        }
    }
    let columns = CMatrix::from_columns(n, accepted)?;
    let frame = a.hcat(&columns)?;
    let check = check_stopping_property(
        &frame,
        m,
        options.stopping_samples,
        seed ^ 0x5707_7000,
        options.field,
    )?;
    Ok(NoiseCollector {
        columns,
        certified_bound: Some(bound),
        kind: CollectorKind::Greedy,
        stopping_check: Some(check),
    })
}

// Removes the components of `v` along every frame vector it is too coherent
// with, then renormalizes. Returns false if nothing is left.
fn correct(a: &CMatrix, accepted: &[Vec<C64>], v: &mut [C64], threshold: f64) -> bool {
    let ka = a.cols();
    let hits: Vec<(usize, C64)> = (0..ka + accepted.len())
        .filter_map(|k| {
            let col = if k < ka { a.column(k) } else { &accepted[k - ka][..] };
            let g = dot_conj(col, v);
            (g.norm() >= threshold).then_some((k, g))
        })
        .collect();
    for (k, g) in hits {
        let col = if k < ka { a.column(k) } else { &accepted[k - ka][..] };
        for (x, d) in v.iter_mut().zip(col) {
            *x -= g * d;
        }
    }
    let s = norm2(v);
    if s < 1e-12 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= s);
    true
}

/// Draws `samples` random unit vectors and records the smallest best
/// coherence with the frame.
pub fn check_stopping_property(
    frame: &CMatrix,
    m: usize,
    samples: usize,
    seed: u64,
    field: Field,
) -> Result<StoppingCheck> {
    if m == 0 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let threshold = coherence_threshold(m);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let b = unit_gaussian(&mut rng, frame.rows(), field);
        let best = frame
            .columns()
            .map(|d| dot_conj(d, &b).norm())
            .fold(0.0, f64::max);
        worst = worst.min(best);
    }
    if samples == 0 {
        worst = 0.0;
    }
    Ok(StoppingCheck {
        samples,
        worst_coverage: worst,
        holds: samples > 0 && worst > threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyDecomposition {
    pub picked_indices: Vec<usize>,
    /// Coefficients for the original (unnormalized) `b`.
    pub coefficients: Vec<C64>,
    /// `|b_n| / |b|` with `residual_norms[0] = 1`.
    pub residual_norms: Vec<f64>,
}

impl GreedyDecomposition {
    pub fn coefficient_l1(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm()).fold(0.0, |s, x| s + x)
    }

    /// `sum_i c_i d_{n_i}`.
    pub fn reconstruct(&self, d: &CMatrix) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); d.rows()];
        for (&k, &c) in self.picked_indices.iter().zip(&self.coefficients) {
            for (o, x) in out.iter_mut().zip(d.column(k)) {
                *o += c * x;
            }
        }
        out
    }
}

/// Matching pursuit over the frame `d`: pick the column with the largest
/// `|<d_k, r>|` (ties to the lowest index), take the coefficient
/// `<d_k, r>`, subtract, until `|r| <= tol |b|`. Each step must contract the
/// normalized residual below `alpha^n`; otherwise the frame does not have the
/// stopping property and [`Error::ContractionFailure`] is returned.
pub fn greedy_decompose(b: &[C64], d: &CMatrix, m: usize, tol: f64) -> Result<GreedyDecomposition> {
    if m == 0 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    if b.len() != d.rows() {
        return Err(Error::DimensionMismatch {
            expected: d.rows(),
            actual: b.len(),
        });
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidConfig(format!("tolerance {tol} must lie in (0, 1)")));
    }
    let scale = norm2(b);
    let mut out = GreedyDecomposition {
        picked_indices: Vec::new(),
        coefficients: Vec::new(),
        residual_norms: vec![1.0],
    };
    if scale == 0.0 {
        out.residual_norms[0] = 0.0;
        return Ok(out);
    }
    if d.cols() == 0 {
        return Err(Error::ContractionFailure {
            step: 1,
            residual: 1.0,
            bound: contraction_rate(m),
        });
    }
    let alpha = contraction_rate(m);
    let mut r: Vec<C64> = b.iter().map(|x| x / scale).collect();
    let mut bound = 1.0;
    let mut norm = 1.0;
    let mut step = 0;
    while norm > tol {
        step += 1;
        let (mut k, mut c) = (0, dot_conj(d.column(0), &r));
        for j in 1..d.cols() {
            let g = dot_conj(d.column(j), &r);
            if g.norm() > c.norm() {
                (k, c) = (j, g);
            }
        }
        for (x, col) in r.iter_mut().zip(d.column(k)) {
            *x -= c * col;
        }
        norm = norm2(&r);
        bound *= alpha;
        out.picked_indices.push(k);
        out.coefficients.push(c * scale);
        out.residual_norms.push(norm);
        if norm > bound * (1.0 + 4.0 * f64::EPSILON) {
            return Err(Error::ContractionFailure {
                step,
                residual: norm,
                bound,
            });
        }
    }
    Ok(out)
}
