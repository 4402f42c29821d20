//! Browser bindings. Every export returns a JSON string so the page can stay
//! dependency-free.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use uvlc_diffusion::channel::{FadingModel, Interpolation, Normalization, VarianceTable};
use uvlc_diffusion::diffusion::{to_db, Strategy};
use uvlc_diffusion::experiments::{resolve, ChannelSetting, ExperimentSpec, BUILTIN_SEED};

fn normalization(paper_literal: bool) -> Normalization {
    if paper_literal {
        Normalization::PaperLiteral
    } else {
        Normalization::UnitMean
    }
}

fn to_js<T: Serialize>(r: uvlc_diffusion::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Serialize)]
pub struct Distribution {
    pub sigma_x2: f64,
    pub mean: f64,
    pub variance: f64,
    pub mode: f64,
    /// `(intensity, density)` pairs.
    pub pdf: Vec<(f64, f64)>,
    /// `(bin center, normalized count)` pairs.
    pub histogram: Vec<(f64, f64)>,
}

pub fn distribution(sigma_x2: f64, paper_literal: bool, samples: usize, bins: usize, seed: u64) -> uvlc_diffusion::Result<Distribution> {
    let model = FadingModel::from_log_amp_variance(sigma_x2, normalization(paper_literal))?;
    let m = model.moments();
    let bins = bins.clamp(4, 400);
    let lo = model.mode() * 0.5;
    let hi = (2.0 * model.log_amp_mean() + 8.0 * model.log_amp_variance().sqrt()).exp().max(lo * 1.5);
    let width = (hi - lo) / bins as f64;
    let pdf = (0..=200)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 200.0;
            (x, model.pdf(x).unwrap_or(0.0))
        })
        .collect();
    let mut counts = vec![0usize; bins];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = model.sample(&mut rng);
        if x >= lo && x < hi {
            counts[((x - lo) / width) as usize % bins] += 1;
        }
    }
    let scale = 1.0 / (samples.max(1) as f64 * width);
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 * scale))
        .collect();
    Ok(Distribution {
        sigma_x2,
        mean: m.mean,
        variance: m.variance(),
        mode: model.mode(),
        pdf,
        histogram,
    })
}

/// Intensity density and a sampled histogram for one link.
#[wasm_bindgen]
pub fn fading_distribution(sigma_x2: f64, paper_literal: bool, samples: usize, bins: usize, seed: u64) -> Result<String, JsError> {
    to_js(distribution(sigma_x2, paper_literal, samples, bins, seed))
}

#[derive(Serialize)]
pub struct TheoryPoint {
    pub distance_m: f64,
    pub sigma_x2: f64,
    pub msd_db: f64,
    pub spectral_radius: f64,
}

fn demo_spec(step_size: f64, paper_literal: bool) -> ExperimentSpec {
    let mut spec = ExperimentSpec::builtin("fig10").expect("built-in");
    spec.run.step_size = step_size;
    spec.run.seed = Some(BUILTIN_SEED);
    spec.normalization = normalization(paper_literal);
    spec
}

pub fn theory_points(step_size: f64, paper_literal: bool) -> uvlc_diffusion::Result<Vec<TheoryPoint>> {
    let table = VarianceTable::builtin();
    let mut out = Vec::new();
    for &(d, _) in table.by_distance() {
        let mut spec = demo_spec(step_size, paper_literal);
        spec.channel = ChannelSetting::Distance { distance_m: d };
        let pred = resolve(&spec)?.theory()?;
        out.push(TheoryPoint {
            distance_m: d,
            sigma_x2: table.lookup_by_distance(d, Interpolation::Exact)?,
            msd_db: pred.network_db,
            spectral_radius: pred.spectral_radius,
        });
    }
    Ok(out)
}

/// Predicted CTA steady-state MSD for every tabulated link distance.
#[wasm_bindgen]
pub fn theory_vs_distance(step_size: f64, paper_literal: bool) -> Result<String, JsError> {
    to_js(theory_points(step_size, paper_literal))
}

#[derive(Serialize)]
pub struct LearningCurve {
    pub strategy: Strategy,
    pub msd_db: Vec<f64>,
    pub theory_db: Option<f64>,
}

pub fn curve(strategy: &str, distance_m: f64, iterations: usize, ensemble: usize, seed: u64) -> uvlc_diffusion::Result<LearningCurve> {
    let strategy: Strategy = strategy.parse()?;
    let mut spec = demo_spec(0.05, false);
    spec.channel = ChannelSetting::Distance { distance_m };
    spec.run.iterations = iterations.clamp(10, 5000);
    spec.run.ensemble = ensemble.clamp(1, 500);
    spec.run.seed = Some(seed);
    let net = resolve(&spec)?;
    let trace = net.simulate(&spec, strategy)?;
    let theory_db = match strategy {
        Strategy::Cta => Some(net.theory()?.network_db),
        Strategy::Atc => None,
    };
    Ok(LearningCurve {
        strategy,
        msd_db: trace.network_msd.iter().map(|&v| to_db(v)).collect(),
        theory_db,
    })
}

/// Monte-Carlo network MSD learning curve (dB) at a given link distance.
#[wasm_bindgen]
pub fn learning_curve(strategy: &str, distance_m: f64, iterations: usize, ensemble: usize, seed: u64) -> Result<String, JsError> {
    to_js(curve(strategy, distance_m, iterations, ensemble, seed))
}
