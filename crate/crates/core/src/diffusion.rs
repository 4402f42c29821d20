//! Diffusion LMS over faded, noisy links.
//!
//! Both orderings are implemented with synchronous semantics: every node
//! reads its neighbors' estimates from the previous iteration.
//!
//! * CTA: `phi_k = c_kk psi_k + sum_l c_kl (I_kl psi_l + q_kl)`, then an LMS
//!   step from `phi_k`.
//! * ATC: an LMS step from `psi_k`, then the same faded combination applied to
//!   the intermediate estimates.
//!
//! Each Monte-Carlo run owns a ChaCha stream selected by its run index, so an
//! ensemble is reproducible bit-for-bit whatever the thread count.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{CombinationMatrix, FadingMap, LinkLayout};

/// Runs are accumulated in fixed groups of this size, in run order, so the
/// floating-point summation order never depends on scheduling.
const RUN_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth(Vec<f64>);

impl GroundTruth {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::domain("ground truth needs at least one entry"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("ground truth entries must be finite"));
        }
        Ok(GroundTruth(w))
    }

    /// `[1, 1, 1, 1] / 2`, unit norm.
    pub fn unit_four() -> Self {
        GroundTruth(vec![0.5; 4])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    /// Row-major M×M regressor covariance.
    pub regressor_cov: Vec<f64>,
    pub measurement_noise: f64,
    /// Per-entry variance of the noise added on every link into this node.
    pub link_noise: f64,
}

impl NodeModel {
    pub fn isotropic(dim: usize, regressor_power: f64, measurement_noise: f64, link_noise: f64) -> Self {
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            cov[i * dim + i] = regressor_power;
        }
        NodeModel {
            regressor_cov: cov,
            measurement_noise,
            link_noise,
        }
    }

    pub fn covariance(&self, dim: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(dim, dim, &self.regressor_cov)
    }
}

/// Per-node statistics of the observation model `d = u w + v`.
#[derive(Debug, Clone)]
pub struct DataModel {
    dim: usize,
    nodes: Vec<NodeModel>,
    factors: Vec<DMatrix<f64>>,
}

impl DataModel {
    pub fn new(dim: usize, nodes: Vec<NodeModel>) -> Result<Self> {
        if dim == 0 || nodes.is_empty() {
            return Err(Error::domain("data model needs a positive dimension and at least one node"));
        }
        let mut factors = Vec::with_capacity(nodes.len());
        for (k, node) in nodes.iter().enumerate() {
            if node.regressor_cov.len() != dim * dim {
                return Err(Error::Dimension(format!("node {} covariance is not {dim}x{dim}", k + 1)));
            }
            let r = node.covariance(dim);
            if (&r - r.transpose()).amax() > 1e-12 * r.amax().max(1.0) {
                return Err(Error::domain(format!("node {} covariance is not symmetric", k + 1)));
            }
            let chol = r
                .cholesky()
                .ok_or_else(|| Error::domain(format!("node {} covariance is not positive definite", k + 1)))?;
            if !(node.measurement_noise >= 0.0) || !(node.link_noise >= 0.0) {
                return Err(Error::domain(format!("node {} noise variances must be non-negative", k + 1)));
            }
            factors.push(chol.l());
        }
        Ok(DataModel { dim, nodes, factors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, k: usize) -> &NodeModel {
        &self.nodes[k]
    }

    pub fn nodes(&self) -> &[NodeModel] {
        &self.nodes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    #[serde(alias = "atc")]
    Atc,
    #[serde(alias = "cta")]
    Cta,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Atc => "ATC",
            Strategy::Cta => "CTA",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ATC" => Ok(Strategy::Atc),
            "CTA" => Ok(Strategy::Cta),
            _ => Err(Error::config(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub step_sizes: Vec<f64>,
    pub iterations: usize,
    pub ensemble_size: usize,
    pub seed: u64,
    /// Per-node starting estimates; zeros when absent.
    pub initial: Option<Vec<Vec<f64>>>,
    /// Worker threads for the ensemble; the global pool when absent.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(strategy: Strategy, step_sizes: Vec<f64>, iterations: usize, ensemble_size: usize, seed: u64) -> Self {
        RunConfig {
            strategy,
            step_sizes,
            iterations,
            ensemble_size,
            seed,
            initial: None,
            threads: None,
        }
    }

    fn validate(&self, nodes: usize, dim: usize) -> Result<()> {
        if self.step_sizes.len() != nodes {
            return Err(Error::Dimension(format!("{} step sizes for {nodes} nodes", self.step_sizes.len())));
        }
        if self.step_sizes.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::config("step sizes must be positive"));
        }
        if self.iterations == 0 || self.ensemble_size == 0 {
            return Err(Error::config("iterations and ensemble size must be at least 1"));
        }
        if let Some(init) = &self.initial {
            if init.len() != nodes || init.iter().any(|v| v.len() != dim) {
                return Err(Error::Dimension("initial estimates do not match the network".into()));
            }
        }
        Ok(())
    }

    fn initial_state(&self, nodes: usize, dim: usize) -> AdaptiveState {
        let psi = match &self.initial {
            Some(init) => init.iter().flatten().copied().collect(),
            None => vec![0.0; nodes * dim],
        };
        AdaptiveState { dim, psi, iteration: 0 }
    }
}

/// Stacked per-node estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    dim: usize,
    psi: Vec<f64>,
    pub iteration: usize,
}

impl AdaptiveState {
    pub fn new(estimates: &[Vec<f64>]) -> Result<Self> {
        let dim = estimates.first().map_or(0, Vec::len);
        if dim == 0 || estimates.iter().any(|e| e.len() != dim) {
            return Err(Error::Dimension("estimates must share a positive dimension".into()));
        }
        Ok(AdaptiveState {
            dim,
            psi: estimates.iter().flatten().copied().collect(),
            iteration: 0,
        })
    }

    pub fn zeros(nodes: usize, dim: usize) -> Self {
        AdaptiveState {
            dim,
            psi: vec![0.0; nodes * dim],
            iteration: 0,
        }
    }

    pub fn estimate(&self, k: usize) -> &[f64] {
        &self.psi[k * self.dim..(k + 1) * self.dim]
    }

    pub fn node_count(&self) -> usize {
        self.psi.len() / self.dim
    }

    pub fn squared_deviation(&self, k: usize, truth: &GroundTruth) -> f64 {
        self.estimate(k)
            .iter()
            .zip(truth.as_slice())
            .map(|(p, w)| (w - p) * (w - p))
            .sum()
    }
}

/// One iteration's observations for every node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationData {
    /// Row-major N×M regressors.
    pub regressors: Vec<f64>,
    pub desired: Vec<f64>,
}

impl IterationData {
    pub fn regressor(&self, k: usize, dim: usize) -> &[f64] {
        &self.regressors[k * dim..(k + 1) * dim]
    }
}

/// Draws `u_k ~ N(0, R_k)` and `d_k = u_k w + v_k` for every node.
pub fn generate_data<R: Rng + ?Sized>(model: &DataModel, truth: &GroundTruth, rng: &mut R) -> Result<IterationData> {
    if truth.dim() != model.dim() {
        return Err(Error::Dimension("ground truth and data model differ in dimension".into()));
    }
    let mut data = IterationData::default();
    let mut z = vec![0.0; model.dim()];
    fill_data(model, truth, rng, &mut data, &mut z);
    Ok(data)
}

fn fill_data<R: Rng + ?Sized>(model: &DataModel, truth: &GroundTruth, rng: &mut R, data: &mut IterationData, z: &mut [f64]) {
    let m = model.dim;
    data.regressors.clear();
    data.desired.clear();
    for (node, l) in model.nodes.iter().zip(&model.factors) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let mut d = 0.0;
        for i in 0..m {
            let mut u = 0.0;
            for j in 0..=i {
                u += l[(i, j)] * z[j];
            }
            data.regressors.push(u);
            d += u * truth.0[i];
        }
        let v: f64 = rng.sample(StandardNormal);
        data.desired.push(d + node.measurement_noise.sqrt() * v);
    }
}

/// Realized gains and additive noise for every link of a [`LinkLayout`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkDraws {
    pub gains: Vec<f64>,
    /// Row-major (links × M).
    pub noise: Vec<f64>,
}

impl LinkDraws {
    /// Ideal links: unit gain, no noise.
    pub fn clean(layout: &LinkLayout, dim: usize) -> Self {
        LinkDraws {
            gains: vec![1.0; layout.link_count()],
            noise: vec![0.0; layout.link_count() * dim],
        }
    }

    pub fn sample<R: Rng + ?Sized>(layout: &LinkLayout, model: &DataModel, rng: &mut R) -> Self {
        let mut d = LinkDraws::default();
        d.resample(layout, model, rng);
        d
    }

    /// Fading for every link first, then the noise vectors. The number of
    /// normal draws never depends on the variances.
    pub fn resample<R: Rng + ?Sized>(&mut self, layout: &LinkLayout, model: &DataModel, rng: &mut R) {
        layout.sample_gains(rng, &mut self.gains);
        self.noise.clear();
        for k in 0..layout.node_count() {
            let sd = model.nodes[k].link_noise.sqrt();
            for _ in layout.incoming(k) {
                for _ in 0..model.dim {
                    let z: f64 = rng.sample(StandardNormal);
                    self.noise.push(sd * z);
                }
            }
        }
    }
}

/// What node `k` receives over a link: `I x + q`.
pub fn corrupt_link(x: &[f64], gain: f64, noise: &[f64]) -> Vec<f64> {
    x.iter().zip(noise).map(|(xi, qi)| gain * xi + qi).collect()
}

fn combine_into(layout: &LinkLayout, draws: &LinkDraws, dim: usize, src: &[f64], k: usize, out: &mut [f64]) {
    let ckk = layout.self_weight(k);
    for (o, s) in out.iter_mut().zip(&src[k * dim..(k + 1) * dim]) {
        *o = ckk * s;
    }
    for j in layout.incoming(k) {
        let l = layout.sender(j);
        let c = layout.weight(j);
        let g = draws.gains[j];
        let q = &draws.noise[j * dim..(j + 1) * dim];
        for ((o, s), qi) in out.iter_mut().zip(&src[l * dim..(l + 1) * dim]).zip(q) {
            *o += c * (g * s + qi);
        }
    }
}

fn lms_update(x: &mut [f64], u: &[f64], d: f64, mu: f64) {
    let err = d - u.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
    for (xi, ui) in x.iter_mut().zip(u) {
        *xi += mu * ui * err;
    }
}

fn check_finite(values: &[f64], dim: usize, iteration: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(p) => Err(Error::Divergence {
            run: 0,
            iteration,
            node: p / dim + 1,
        }),
    }
}

fn step_into(
    strategy: Strategy,
    layout: &LinkLayout,
    mu: &[f64],
    dim: usize,
    psi: &[f64],
    data: &IterationData,
    draws: &LinkDraws,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    let n = layout.node_count();
    match strategy {
        Strategy::Cta => {
            for k in 0..n {
                let o = &mut out[k * dim..(k + 1) * dim];
                combine_into(layout, draws, dim, psi, k, o);
                lms_update(o, data.regressor(k, dim), data.desired[k], mu[k]);
            }
        }
        Strategy::Atc => {
            scratch.copy_from_slice(psi);
            for k in 0..n {
                lms_update(&mut scratch[k * dim..(k + 1) * dim], data.regressor(k, dim), data.desired[k], mu[k]);
            }
            for k in 0..n {
                combine_into(layout, draws, dim, scratch, k, &mut out[k * dim..(k + 1) * dim]);
            }
        }
    }
}

fn check_iteration_inputs(layout: &LinkLayout, state: &AdaptiveState, data: &IterationData, draws: &LinkDraws, mu: &[f64]) -> Result<()> {
    let n = layout.node_count();
    let m = state.dim;
    if state.node_count() != n
        || data.desired.len() != n
        || data.regressors.len() != n * m
        || mu.len() != n
        || draws.gains.len() != layout.link_count()
        || draws.noise.len() != layout.link_count() * m
    {
        return Err(Error::Dimension("iteration inputs do not match the network".into()));
    }
    Ok(())
}

fn iterate(
    strategy: Strategy,
    state: &AdaptiveState,
    data: &IterationData,
    layout: &LinkLayout,
    draws: &LinkDraws,
    step_sizes: &[f64],
) -> Result<AdaptiveState> {
    check_iteration_inputs(layout, state, data, draws, step_sizes)?;
    let mut out = vec![0.0; state.psi.len()];
    let mut scratch = vec![0.0; state.psi.len()];
    step_into(strategy, layout, step_sizes, state.dim, &state.psi, data, draws, &mut out, &mut scratch);
    check_finite(&out, state.dim, state.iteration + 1)?;
    Ok(AdaptiveState {
        dim: state.dim,
        psi: out,
        iteration: state.iteration + 1,
    })
}

/// Combine-then-adapt update of every node.
pub fn cta_iteration(
    state: &AdaptiveState,
    data: &IterationData,
    layout: &LinkLayout,
    draws: &LinkDraws,
    step_sizes: &[f64],
) -> Result<AdaptiveState> {
    iterate(Strategy::Cta, state, data, layout, draws, step_sizes)
}

/// Adapt-then-combine update of every node.
pub fn atc_iteration(
    state: &AdaptiveState,
    data: &IterationData,
    layout: &LinkLayout,
    draws: &LinkDraws,
    step_sizes: &[f64],
) -> Result<AdaptiveState> {
    iterate(Strategy::Atc, state, data, layout, draws, step_sizes)
}

/// Ensemble-averaged squared deviation per node and iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdTrace {
    /// `msd[k][i]`, entry `i` taken after iteration `i + 1`.
    pub msd: Vec<Vec<f64>>,
    pub network_msd: Vec<f64>,
    pub ensemble_size: usize,
}

impl MsdTrace {
    fn from_sums(nodes: usize, iterations: usize, sums: &[f64], ensemble_size: usize) -> Self {
        let scale = 1.0 / ensemble_size as f64;
        let msd: Vec<Vec<f64>> = (0..nodes)
            .map(|k| sums[k * iterations..(k + 1) * iterations].iter().map(|s| s * scale).collect())
            .collect();
        let network_msd = (0..iterations)
            .map(|i| msd.iter().map(|row| row[i]).sum::<f64>() / nodes as f64)
            .collect();
        MsdTrace {
            msd,
            network_msd,
            ensemble_size,
        }
    }

    pub fn node_count(&self) -> usize {
        self.msd.len()
    }

    pub fn iterations(&self) -> usize {
        self.network_msd.len()
    }

    /// `iteration,node,msd` with 1-based indices.
    pub fn node_csv(&self) -> String {
        let mut out = String::from("iteration,node,msd\n");
        for i in 0..self.iterations() {
            for (k, row) in self.msd.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", i + 1, k + 1, row[i]);
            }
        }
        out
    }

    /// `iteration,network_msd` with 1-based iterations.
    pub fn network_csv(&self) -> String {
        let mut out = String::from("iteration,network_msd\n");
        for (i, v) in self.network_msd.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, v);
        }
        out
    }
}

struct RunContext<'a> {
    config: &'a RunConfig,
    layout: &'a LinkLayout,
    model: &'a DataModel,
    truth: &'a GroundTruth,
}

impl RunContext<'_> {
    fn rng(&self, run: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(run as u64 + 1);
        rng
    }

    /// Squared deviations of one run, node-major, added onto `acc`.
    fn run_into(&self, run: usize, acc: &mut [f64]) -> Result<()> {
        let n = self.layout.node_count();
        let m = self.model.dim;
        let iters = self.config.iterations;
        let mut rng = self.rng(run);
        let mut state = self.config.initial_state(n, m);
        let mut next = vec![0.0; n * m];
        let mut scratch = vec![0.0; n * m];
        let mut data = IterationData::default();
        let mut draws = LinkDraws::default();
        let mut z = vec![0.0; m];
        for i in 0..iters {
            fill_data(self.model, self.truth, &mut rng, &mut data, &mut z);
            draws.resample(self.layout, self.model, &mut rng);
            step_into(
                self.config.strategy,
                self.layout,
                &self.config.step_sizes,
                m,
                &state.psi,
                &data,
                &draws,
                &mut next,
                &mut scratch,
            );
            std::mem::swap(&mut state.psi, &mut next);
            check_finite(&state.psi, m, i + 1).map_err(|e| match e {
                Error::Divergence { iteration, node, .. } => Error::Divergence { run, iteration, node },
                other => other,
            })?;
            for k in 0..n {
                acc[k * iters + i] += state.squared_deviation(k, self.truth);
            }
        }
        Ok(())
    }

    fn run_chunk(&self, chunk: usize) -> Result<Vec<f64>> {
        let n = self.layout.node_count();
        let mut acc = vec![0.0; n * self.config.iterations];
        let start = chunk * RUN_CHUNK;
        let end = (start + RUN_CHUNK).min(self.config.ensemble_size);
        for run in start..end {
            self.run_into(run, &mut acc)?;
        }
        Ok(acc)
    }
}

#[cfg(feature = "parallel")]
fn run_chunks(ctx: &RunContext<'_>, chunks: usize) -> Result<Vec<Vec<f64>>> {
    let work = || -> Result<Vec<Vec<f64>>> { (0..chunks).into_par_iter().map(|c| ctx.run_chunk(c)).collect() };
    match ctx.config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::config(e.to_string()))?
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_chunks(ctx: &RunContext<'_>, chunks: usize) -> Result<Vec<Vec<f64>>> {
    (0..chunks).map(|c| ctx.run_chunk(c)).collect()
}

/// Runs `ensemble_size` independent realizations and averages the squared
/// deviations. Deterministic for a fixed seed.
pub fn run_monte_carlo(
    config: &RunConfig,
    weights: &CombinationMatrix,
    fading: &FadingMap,
    model: &DataModel,
    truth: &GroundTruth,
) -> Result<MsdTrace> {
    let n = weights.node_count();
    if model.node_count() != n {
        return Err(Error::Dimension(format!("data model has {} nodes, network has {n}", model.node_count())));
    }
    if truth.dim() != model.dim() {
        return Err(Error::Dimension("ground truth and data model differ in dimension".into()));
    }
    config.validate(n, model.dim())?;
    let layout = LinkLayout::new(weights, fading)?;
    let ctx = RunContext {
        config,
        layout: &layout,
        model,
        truth,
    };
    let chunks = config.ensemble_size.div_ceil(RUN_CHUNK);
    let partials = run_chunks(&ctx, chunks)?;
    let mut sums = vec![0.0; n * config.iterations];
    for p in &partials {
        for (s, v) in sums.iter_mut().zip(p) {
            *s += v;
        }
    }
    Ok(MsdTrace::from_sums(n, config.iterations, &sums, config.ensemble_size))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateMsd {
    pub per_node: Vec<f64>,
    pub network: f64,
    pub per_node_db: Vec<f64>,
    pub network_db: f64,
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Averages the last `window` iterations of a trace.
pub fn steady_state_msd(trace: &MsdTrace, window: usize) -> Result<SteadyStateMsd> {
    let iters = trace.iterations();
    if window == 0 || window > iters {
        return Err(Error::Window { window, iterations: iters });
    }
    let tail_mean = |v: &[f64]| v[iters - window..].iter().sum::<f64>() / window as f64;
    let per_node: Vec<f64> = trace.msd.iter().map(|r| tail_mean(r)).collect();
    let network = tail_mean(&trace.network_msd);
    Ok(SteadyStateMsd {
        per_node_db: per_node.iter().map(|&v| to_db(v)).collect(),
        network_db: to_db(network),
        per_node,
        network,
    })
}

/// `sum_k E|d_k - u_k psi_k|^2`, evaluated in closed form.
pub fn global_cost(estimates: &AdaptiveState, model: &DataModel, truth: &GroundTruth) -> Result<f64> {
    let m = model.dim();
    if estimates.node_count() != model.node_count() || estimates.dim != m || truth.dim() != m {
        return Err(Error::Dimension("estimates do not match the data model".into()));
    }
    let w = DVector::from_column_slice(truth.as_slice());
    let mut cost = 0.0;
    for (k, node) in model.nodes().iter().enumerate() {
        let e = &w - DVector::from_column_slice(estimates.estimate(k));
        cost += (e.transpose() * node.covariance(m) * &e)[(0, 0)] + node.measurement_noise;
    }
    Ok(cost)
}
