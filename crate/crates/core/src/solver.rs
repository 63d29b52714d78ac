//! l1 minimization by GeLMA and the l2 (Kirchhoff migration) baseline.
//!
//! GeLMA looks for the saddle point `max_z min_rho F(rho, z)` of
//!
//! ```text
//! F(rho, z) = tau |rho|_1 + 1/2 |D rho - b|^2 + <z, b - D rho>
//! ```
//!
//! with a semi-implicit primal-dual iteration started from zero:
//!
//! ```text
//! rho <- shrink(rho + beta D^*(z + b - D rho), beta tau)
//! z   <- z + alpha (b - D rho)          // uses the updated rho
//! ```
//!
//! Any fixed point satisfies `D rho = b` and `D^* z in tau d|rho|_1`, so for a
//! consistent system the limit is the minimal l1 solution whatever `tau` is;
//! `tau` only changes the path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, norm_inf, CMatrix, C64};

/// Power iterations used for the operator-norm estimate.
pub const NORM_ESTIMATE_ITERS: usize = 30;
/// Fixed seed of the power-iteration start vector.
pub const NORM_ESTIMATE_SEED: u64 = 0x5eed;
/// Default primal step as a fraction of `1 / |D|^2`. The power estimate
/// approaches `|D|` from below, so a margin keeps `beta |D|^2 < 1`.
pub const PRIMAL_STEP_FRACTION: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GelmaSettings {
    pub tau: f64,
    pub primal_step: f64,
    pub dual_step: f64,
    pub max_iters: usize,
    /// Absolute tolerance on `|D rho - b|_2`.
    pub residual_tol: f64,
    /// Tolerance on `|rho_new - rho|_2 / |rho_new|_2`.
    pub change_tol: f64,
}

impl GelmaSettings {
    /// Default steps for an operator with estimated spectral norm `op_norm`.
    /// The dual step is the weight of the quadratic penalty in `F`.
    pub fn with_norm(op_norm: f64, tau: f64) -> Self {
        Self {
            tau,
            primal_step: PRIMAL_STEP_FRACTION / (op_norm * op_norm).max(f64::MIN_POSITIVE),
            dual_step: 1.0,
            max_iters: 20_000,
            residual_tol: 0.0,
            change_tol: 0.0,
        }
    }

    /// Stopping rule for exact data: residual `1e-8 |b|`, iterate change `1e-10`.
    pub fn noiseless(mut self, b_norm: f64) -> Self {
        self.residual_tol = 1e-8 * b_norm;
        self.change_tol = 1e-10;
        self
    }

    /// Stopping rule for noisy data: residual `1e-3 |b|`, iterate change `1e-6`.
    pub fn noisy(mut self, b_norm: f64) -> Self {
        self.residual_tol = 1e-3 * b_norm;
        self.change_tol = 1e-6;
        self
    }

    pub fn max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return bad("tau must be a nonnegative number");
        }
        if !(self.primal_step.is_finite() && self.primal_step > 0.0) {
            return bad("primal step must be positive");
        }
        if !(self.dual_step.is_finite() && self.dual_step > 0.0) {
            return bad("dual step must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.residual_tol >= 0.0 && self.change_tol >= 0.0) {
            return bad("tolerances must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solution: Vec<C64>,
    pub dual: Vec<C64>,
    pub residual_l2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|D rho - b|_2` after every iteration.
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

impl SolveResult {
    /// Lower bound on `min |xi|_1 s.t. D xi = b` certified by the dual
    /// iterate: for any `z`, `Re<z, b> / |D^* z|_inf` is dual feasible.
    pub fn dual_lower_bound(&self, d: &CMatrix, b: &[C64]) -> Result<f64> {
        let dz = d.apply_adjoint(&self.dual)?;
        let scale = norm_inf(&dz);
        if scale == 0.0 {
            return Ok(0.0);
        }
        let value: f64 = self.dual.iter().zip(b).map(|(z, v)| (z.conj() * v).re).sum();
        Ok((value / scale).max(0.0))
    }
}

/// Componentwise `v_k max(1 - t / |v_k|, 0)`.
pub fn soft_threshold(v: &[C64], t: f64) -> Vec<C64> {
    v.iter().map(|&x| shrink(x, t)).collect()
}

#[inline]
fn shrink(x: C64, t: f64) -> C64 {
    let m = x.norm();
    if m <= t {
        C64::new(0.0, 0.0)
    } else {
        x * (1.0 - t / m)
    }
}

/// A GeLMA solver bound to one operator. The operator-norm estimate is
/// computed once and reused by every solve.
#[derive(Clone, Debug)]
pub struct Gelma<'a> {
    op: &'a CMatrix,
    op_norm: f64,
}

impl<'a> Gelma<'a> {
    pub fn new(op: &'a CMatrix) -> Self {
        let op_norm = op.spectral_norm_estimate(NORM_ESTIMATE_ITERS, NORM_ESTIMATE_SEED);
        Self { op, op_norm }
    }

    /// Skips the power iteration when the norm is already known.
    pub fn with_norm(op: &'a CMatrix, op_norm: f64) -> Self {
        Self { op, op_norm }
    }

    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn operator(&self) -> &CMatrix {
        self.op
    }

    /// Default settings with `tau = tau_rel * |D^* b|_inf`.
    pub fn settings_for(&self, b: &[C64], tau_rel: f64) -> Result<GelmaSettings> {
        let scale = norm_inf(&self.op.apply_adjoint(b)?);
        Ok(GelmaSettings::with_norm(self.op_norm, tau_rel * scale))
    }

    pub fn solve(&self, b: &[C64], settings: &GelmaSettings) -> Result<SolveResult> {
        let d = self.op;
        if d.cols() == 0 {
            return Err(Error::InvalidConfig("operator has no columns".into()));
        }
        if b.len() != d.rows() {
            return Err(Error::DimensionMismatch {
                expected: d.rows(),
                actual: b.len(),
            });
        }
        settings.validate()?;
        let product = settings.primal_step * self.op_norm * self.op_norm;
        if product >= 1.0 {
            return Err(Error::StepSize { product });
        }

        let zero = C64::new(0.0, 0.0);
        let mut rho = vec![zero; d.cols()];
        let mut z = vec![zero; d.rows()];
        if norm2(b) == 0.0 {
            return Ok(SolveResult {
                solution: rho,
                dual: z,
                residual_l2: 0.0,
                iterations: 0,
                converged: true,
                residual_history: Vec::new(),
            });
        }

        let beta = settings.primal_step;
        let thresh = beta * settings.tau;
        let mut d_rho = vec![zero; d.rows()];
        let mut drift = vec![zero; d.rows()];
        let mut grad = vec![zero; d.cols()];
        let mut history = Vec::new();
        let mut residual = norm2(b);
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=settings.max_iters {
            iterations = it;
            for i in 0..d.rows() {
                drift[i] = z[i] + b[i] - d_rho[i];
            }
            d.apply_adjoint_into(&drift, &mut grad);

            let mut diff_sq = 0.0;
            let mut new_sq = 0.0;
            for (r, g) in rho.iter_mut().zip(&grad) {
                let next = shrink(*r + g * beta, thresh);
                diff_sq += (next - *r).norm_sqr();
                new_sq += next.norm_sqr();
                *r = next;
            }
            let change = if new_sq > 0.0 {
                (diff_sq / new_sq).sqrt()
            } else if diff_sq == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };

            d_rho = d.apply(&rho)?;
            let mut res_sq = 0.0;
            for i in 0..d.rows() {
                let r = b[i] - d_rho[i];
                res_sq += r.norm_sqr();
                z[i] += r * settings.dual_step;
            }
            residual = res_sq.sqrt();
            if !residual.is_finite() || !change.is_finite() && new_sq > 0.0 {
                return Err(Error::Divergence { iteration: it });
            }
            history.push(residual);
            if residual <= settings.residual_tol && change <= settings.change_tol {
                converged = true;
                break;
            }
        }

        Ok(SolveResult {
            solution: rho,
            dual: z,
            residual_l2: residual,
            iterations,
            converged,
            residual_history: history,
        })
    }
}

/// One-shot GeLMA solve; estimates the operator norm on every call.
pub fn gelma_solve(d: &CMatrix, b: &[C64], settings: &GelmaSettings) -> Result<SolveResult> {
    Gelma::new(d).solve(b, settings)
}

/// The l2 image `A^* b`.
pub fn kirchhoff_migration(a: &CMatrix, b: &[C64]) -> Result<Vec<C64>> {
    a.apply_adjoint(b)
}

/// Splits a solution into the image part (first `k` entries) and the noise
/// collector part (the rest).
pub fn split_solution(result: &SolveResult, k: usize) -> Result<(Vec<C64>, Vec<C64>)> {
    if result.solution.len() < k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: result.solution.len(),
        });
    }
    let (image, noise) = result.solution.split_at(k);
    Ok((image.to_vec(), noise.to_vec()))
}
