//! Steady-state MSD of CTA diffusion over random links.
//!
//! With `w~ = w° - psi` stacked over nodes and `G_i` the random weighted link
//! matrix, one CTA iteration gives
//!
//! ```text
//! e_k   = (1 - s_k) w° + sum_l G_kl w~_l - sum_{l != k} c_kl q_kl      (s_k = row sum of G_i)
//! w~'_k = (I - mu_k u_k^T u_k) e_k - mu_k u_k^T v_k
//! ```
//!
//! Links are independent of each other, of the data and across time, and the
//! regressors are Gaussian, so the mean `m = E[w~]` and the second moment
//! `P = E[w~ w~^T]` follow an exact affine recursion driven only by
//! `E[G]`, the per-link variances `c_kl^2 Var(I_kl)`, the regressor
//! covariances and the noise powers. Its fixed point is the steady state;
//! `MSD_k` is the trace of the k-th diagonal block of `P`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::LinkMoments;
use crate::diffusion::{to_db, DataModel, GroundTruth};
use crate::error::{Error, Result};
use crate::network::{CombinationMatrix, FadingMap, LinkLayout};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

/// Largest stacked dimension `N*M` accepted by [`SolveMethod::VectorizedSolve`].
pub const MAX_VECTORIZED_DIM: usize = 40;

/// First and second moments of everything random in the CTA error recursion.
#[derive(Debug, Clone)]
pub struct MomentSet {
    n: usize,
    dim: usize,
    /// `E[G]`.
    mean_link: DMatrix<f64>,
    /// `c_kl^2 Var(gain_kl I_kl)`, zero on the diagonal.
    link_variance: DMatrix<f64>,
    /// Per-link `(k, l, moments)` of the realized gain.
    link_moments: Vec<(usize, usize, LinkMoments)>,
    step_sizes: Vec<f64>,
    regressor_cov: Vec<DMatrix<f64>>,
    measurement_noise: Vec<f64>,
    /// Per-entry variance of `sum_{l != k} c_kl q_kl`.
    combined_link_noise: Vec<f64>,
    truth: DVector<f64>,
}

impl MomentSet {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean_link_matrix(&self) -> &DMatrix<f64> {
        &self.mean_link
    }

    pub fn link_variance(&self) -> &DMatrix<f64> {
        &self.link_variance
    }

    pub fn link_moments(&self) -> &[(usize, usize, LinkMoments)] {
        &self.link_moments
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    /// `E[(I - D U^T U)] (E[G] ⊗ I_M)`, the mean error propagation matrix.
    pub fn mean_propagation(&self) -> DMatrix<f64> {
        let nm = self.n * self.dim;
        let mut a = DMatrix::zeros(nm, nm);
        let g = kron_identity(&self.mean_link, self.dim);
        for k in 0..self.n {
            let b = self.contraction(k);
            let rows = b * g.rows(k * self.dim, self.dim);
            a.rows_mut(k * self.dim, self.dim).copy_from(&rows);
        }
        a
    }

    fn contraction(&self, k: usize) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) - &self.regressor_cov[k] * self.step_sizes[k]
    }

    /// `(1 - E[s_k]) w°` stacked.
    fn mean_bias(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n * self.dim);
        for k in 0..self.n {
            let b = 1.0 - self.mean_link.row(k).sum();
            v.rows_mut(k * self.dim, self.dim).copy_from(&(&self.truth * b));
        }
        v
    }
}

fn kron_identity(a: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(r * dim, c * dim);
    for i in 0..r {
        for j in 0..c {
            let v = a[(i, j)];
            if v != 0.0 {
                for d in 0..dim {
                    out[(i * dim + d, j * dim + d)] = v;
                }
            }
        }
    }
    out
}

/// Assembles the moments for a CTA network. Step sizes may be zero here
/// (useful for stability analysis) but not negative.
pub fn error_recursion_moments(
    weights: &CombinationMatrix,
    fading: &FadingMap,
    model: &DataModel,
    truth: &GroundTruth,
    step_sizes: &[f64],
) -> Result<MomentSet> {
    let n = weights.node_count();
    let dim = model.dim();
    if model.node_count() != n || step_sizes.len() != n || truth.dim() != dim {
        return Err(Error::Dimension("network, data model, truth and step sizes disagree".into()));
    }
    if step_sizes.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::domain("step sizes must be non-negative"));
    }
    let layout = LinkLayout::new(weights, fading)?;
    let mut mean_link = DMatrix::zeros(n, n);
    let mut link_variance = DMatrix::zeros(n, n);
    let mut link_moments = Vec::with_capacity(layout.link_count());
    let mut combined_link_noise = vec![0.0; n];
    for k in 0..n {
        mean_link[(k, k)] = layout.self_weight(k);
        for j in layout.incoming(k) {
            let l = layout.sender(j);
            let c = layout.weight(j);
            let lm = layout.channel(j).moments();
            mean_link[(k, l)] = c * lm.mean;
            link_variance[(k, l)] = c * c * lm.variance();
            link_moments.push((k, l, lm));
            combined_link_noise[k] += c * c * model.node(k).link_noise;
        }
    }
    Ok(MomentSet {
        n,
        dim,
        mean_link,
        link_variance,
        link_moments,
        step_sizes: step_sizes.to_vec(),
        regressor_cov: model.nodes().iter().map(|nm| nm.covariance(dim)).collect(),
        measurement_noise: model.nodes().iter().map(|nm| nm.measurement_noise).collect(),
        combined_link_noise,
        truth: DVector::from_column_slice(truth.as_slice()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStability {
    pub stable: bool,
    pub spectral_radius: f64,
}

/// Stable iff the spectral radius of the mean propagation matrix is < 1.
pub fn mean_stability(moments: &MomentSet) -> MeanStability {
    let rho = spectral_radius(&moments.mean_propagation());
    MeanStability {
        stable: rho < 1.0,
        spectral_radius: rho,
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    match a.clone().try_schur(f64::EPSILON, SCHUR_MAX_ITERATIONS) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => gelfand_radius(a),
    }
}

const SCHUR_MAX_ITERATIONS: usize = 10_000;
const GELFAND_SQUARINGS: u32 = 48;

/// `lim ||A^k||^(1/k)` along `k = 2^j`, renormalizing after every squaring.
pub fn gelfand_radius(a: &DMatrix<f64>) -> f64 {
    let mut x = a.clone();
    let mut log_rho = 0.0;
    let mut weight = 1.0;
    for _ in 0..GELFAND_SQUARINGS {
        let norm = x.norm();
        if norm == 0.0 || !norm.is_finite() {
            return if norm == 0.0 { 0.0 } else { f64::INFINITY };
        }
        log_rho += weight * norm.ln();
        x /= norm;
        x = &x * &x;
        weight *= 0.5;
    }
    let tail = x.norm();
    if tail == 0.0 {
        return 0.0;
    }
    (log_rho + weight * tail.ln()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    FixedPointIteration,
    VectorizedSolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStatePrediction {
    pub method: SolveMethod,
    pub per_node: Vec<f64>,
    pub per_node_db: Vec<f64>,
    pub network: f64,
    pub network_db: f64,
    pub spectral_radius: f64,
    pub stable: bool,
    /// Relative change of the last fixed-point step, or the linear-solve
    /// residual.
    pub residual: f64,
    pub iterations: usize,
    /// Euclidean norm of the steady-state mean error.
    pub mean_error_norm: f64,
}

/// Fixed point of the moment recursion.
#[derive(Debug, Clone)]
pub struct SteadyMoments {
    pub mean: DVector<f64>,
    pub second: DMatrix<f64>,
}

struct Recursion<'a> {
    ms: &'a MomentSet,
    g: DMatrix<f64>,
    bias: DVector<f64>,
    contraction: Vec<DMatrix<f64>>,
}

impl<'a> Recursion<'a> {
    fn new(ms: &'a MomentSet) -> Self {
        Recursion {
            g: kron_identity(&ms.mean_link, ms.dim),
            bias: ms.mean_bias(),
            contraction: (0..ms.n).map(|k| ms.contraction(k)).collect(),
            ms,
        }
    }

    fn mean_step(&self, m: &DVector<f64>) -> DVector<f64> {
        let e = &self.bias + &self.g * m;
        let dim = self.ms.dim;
        let mut out = DVector::zeros(e.len());
        for k in 0..self.ms.n {
            out.rows_mut(k * dim, dim)
                .copy_from(&(&self.contraction[k] * e.rows(k * dim, dim)));
        }
        out
    }

    /// Second moment after one iteration, given the current mean `m` and
    /// second moment `p`. Affine in `p` for fixed `m`; `with_constant`
    /// switches the `p`-independent part on or off.
    fn second_step(&self, m: &DVector<f64>, p: &DMatrix<f64>, with_constant: bool) -> DMatrix<f64> {
        let ms = self.ms;
        let (n, dim) = (ms.n, ms.dim);
        let mut e = &self.g * p * self.g.transpose();
        let w = &ms.truth;
        if with_constant {
            let gm = &self.g * m;
            e += &self.bias * gm.transpose() + &gm * self.bias.transpose() + &self.bias * self.bias.transpose();
        }
        for k in 0..n {
            let mut blk = DMatrix::zeros(dim, dim);
            for l in 0..n {
                let v = ms.link_variance[(k, l)];
                if v == 0.0 {
                    continue;
                }
                // V_kl E[psi_l psi_l^T] with psi_l = w° - w~_l
                blk += p.view((l * dim, l * dim), (dim, dim)) * v;
                if with_constant {
                    let ml = m.rows(l * dim, dim);
                    blk += (w * w.transpose() - w * ml.transpose() - ml * w.transpose()) * v;
                }
            }
            if with_constant {
                blk += DMatrix::identity(dim, dim) * ms.combined_link_noise[k];
            }
            let mut view = e.view_mut((k * dim, k * dim), (dim, dim));
            view += blk;
        }
        let mut out = DMatrix::zeros(n * dim, n * dim);
        for k in 0..n {
            let bk = &self.contraction[k];
            for j in 0..n {
                let ekj = e.view((k * dim, j * dim), (dim, dim));
                let mut blk = bk * ekj * self.contraction[j].transpose();
                if k == j {
                    let r = &ms.regressor_cov[k];
                    let mu2 = ms.step_sizes[k] * ms.step_sizes[k];
                    let rer = r * ekj * r;
                    let tr = (ekj * r).trace();
                    blk += (rer + r * tr) * mu2;
                    if with_constant {
                        blk += r * (mu2 * ms.measurement_noise[k]);
                    }
                }
                out.view_mut((k * dim, j * dim), (dim, dim)).copy_from(&blk);
            }
        }
        out
    }
}

/// Exact one-step propagation of `(E[w~], E[w~ w~^T])`.
pub fn propagate_moments(moments: &MomentSet, mean: &DVector<f64>, second: &DMatrix<f64>) -> SteadyMoments {
    let rec = Recursion::new(moments);
    SteadyMoments {
        mean: rec.mean_step(mean),
        second: rec.second_step(mean, second, true),
    }
}

fn node_msd(ms: &MomentSet, p: &DMatrix<f64>) -> Vec<f64> {
    (0..ms.n)
        .map(|k| p.view((k * ms.dim, k * ms.dim), (ms.dim, ms.dim)).trace())
        .collect()
}

fn prediction(
    ms: &MomentSet,
    method: SolveMethod,
    stability: MeanStability,
    fixed: &SteadyMoments,
    residual: f64,
    iterations: usize,
) -> SteadyStatePrediction {
    let per_node = node_msd(ms, &fixed.second);
    let network = per_node.iter().sum::<f64>() / ms.n as f64;
    SteadyStatePrediction {
        method,
        per_node_db: per_node.iter().map(|&v| to_db(v)).collect(),
        network_db: to_db(network),
        per_node,
        network,
        spectral_radius: stability.spectral_radius,
        stable: stability.stable,
        residual,
        iterations,
        mean_error_norm: fixed.mean.norm(),
    }
}

/// Iterates the moment recursion from `w~ = w°` (zero initial estimates)
/// until the relative change drops below `tolerance`.
pub fn steady_moments(moments: &MomentSet, tolerance: f64, max_iterations: usize) -> Result<(SteadyMoments, f64, usize)> {
    let rec = Recursion::new(moments);
    let nm = moments.n * moments.dim;
    let mut m = DVector::zeros(nm);
    for k in 0..moments.n {
        m.rows_mut(k * moments.dim, moments.dim).copy_from(&moments.truth);
    }
    let mut p = &m * m.transpose();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        let m_next = rec.mean_step(&m);
        let p_next = rec.second_step(&m, &p, true);
        let norm = p_next.norm();
        if !norm.is_finite() || norm > 1e150 {
            return Err(Error::Unstable(f64::INFINITY));
        }
        let dp = (&p_next - &p).norm();
        let dm = (&m_next - &m).norm();
        residual = if norm > 0.0 { dp / norm } else { dp };
        let mean_res = if m_next.norm() > 0.0 { dm / m_next.norm() } else { dm };
        m = m_next;
        p = p_next;
        if (residual < tolerance || norm == 0.0) && (mean_res < tolerance || m.norm() == 0.0) {
            return Ok((SteadyMoments { mean: m, second: p }, residual, it));
        }
    }
    Err(Error::NotConverged {
        iterations: max_iterations,
        residual,
    })
}

/// Closed-form fixed point: solve for the mean, then assemble the linear map
/// on `vec(P)` and solve `(I - F) vec(P) = g` directly.
pub fn steady_moments_vectorized(moments: &MomentSet) -> Result<(SteadyMoments, f64)> {
    let nm = moments.n * moments.dim;
    if nm > MAX_VECTORIZED_DIM {
        return Err(Error::config(format!(
            "vectorized solve limited to N*M <= {MAX_VECTORIZED_DIM}, got {nm}"
        )));
    }
    let rec = Recursion::new(moments);
    let a = moments.mean_propagation();
    let mut b = DVector::zeros(nm);
    for k in 0..moments.n {
        let dim = moments.dim;
        b.rows_mut(k * dim, dim)
            .copy_from(&(&rec.contraction[k] * rec.bias.rows(k * dim, dim)));
    }
    let lhs = DMatrix::identity(nm, nm) - a;
    let mean = lhs
        .lu()
        .solve(&b)
        .ok_or(Error::Unstable(f64::INFINITY))?;

    let size = nm * nm;
    let mut f = DMatrix::zeros(size, size);
    let mut basis = DMatrix::zeros(nm, nm);
    for col in 0..size {
        let (i, j) = (col % nm, col / nm);
        basis[(i, j)] = 1.0;
        let img = rec.second_step(&mean, &basis, false);
        f.column_mut(col).copy_from_slice(img.as_slice());
        basis[(i, j)] = 0.0;
    }
    let g = rec.second_step(&mean, &DMatrix::zeros(nm, nm), true);
    let g = DVector::from_column_slice(g.as_slice());
    let system = DMatrix::identity(size, size) - &f;
    let sol = system
        .clone()
        .lu()
        .solve(&g)
        .ok_or(Error::Unstable(f64::INFINITY))?;
    let residual = (&system * &sol - &g).norm() / g.norm().max(f64::MIN_POSITIVE);
    let second = DMatrix::from_column_slice(nm, nm, sol.as_slice());
    Ok((SteadyMoments { mean, second }, residual))
}

/// Steady-state MSD prediction. Fails with [`Error::Unstable`] when the
/// mean recursion is not contracting.
pub fn predict_msd(moments: &MomentSet, method: SolveMethod) -> Result<SteadyStatePrediction> {
    predict_msd_with(moments, method, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)
}

pub fn predict_msd_with(
    moments: &MomentSet,
    method: SolveMethod,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SteadyStatePrediction> {
    let stability = mean_stability(moments);
    if !stability.stable {
        return Err(Error::Unstable(stability.spectral_radius));
    }
    match method {
        SolveMethod::FixedPointIteration => {
            let (fixed, residual, iterations) = steady_moments(moments, tolerance, max_iterations)?;
            Ok(prediction(moments, method, stability, &fixed, residual, iterations))
        }
        SolveMethod::VectorizedSolve => {
            let (fixed, residual) = steady_moments_vectorized(moments)?;
            if fixed.second.iter().any(|v| !v.is_finite()) || node_msd(moments, &fixed.second).iter().any(|&v| v < 0.0) {
                return Err(Error::Unstable(stability.spectral_radius));
            }
            Ok(prediction(moments, method, stability, &fixed, residual, 0))
        }
    }
}
