use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uvlc_diffusion::channel::{FadingModel, Normalization, VarianceTable};
use uvlc_diffusion::diffusion::*;
use uvlc_diffusion::experiments::{resolve, ChannelSetting, ExperimentSpec};
use uvlc_diffusion::network::*;
use uvlc_diffusion::steady_state::*;

struct Pair {
    weights: CombinationMatrix,
    fading: FadingMap,
    model: DataModel,
    truth: GroundTruth,
    mu: Vec<f64>,
}

fn pair(norm: Normalization) -> Pair {
    let t = Topology::complete(2, 1.0).unwrap();
    let weights = CombinationMatrix::new(&t, vec![0.7, 0.3, 0.4, 0.6]).unwrap();
    let fading = FadingMap::uniform(&t, FadingModel::from_log_amp_variance(1.38e-1, norm).unwrap());
    let model = DataModel::new(
        1,
        vec![NodeModel::isotropic(1, 1.0, 0.05, 0.02), NodeModel::isotropic(1, 0.6, 0.01, 0.01)],
    )
    .unwrap();
    Pair {
        weights,
        fading,
        model,
        truth: GroundTruth::new(vec![0.8]).unwrap(),
        mu: vec![0.3, 0.2],
    }
}

fn transient_check(norm: Normalization) {
    let p = pair(norm);
    let ms = error_recursion_moments(&p.weights, &p.fading, &p.model, &p.truth, &p.mu).unwrap();
    let layout = LinkLayout::new(&p.weights, &p.fading).unwrap();
    let steps = 8;
    let runs = 400_000;
    let mut sum_m = vec![DVector::<f64>::zeros(2); steps];
    let mut sum_p = vec![DMatrix::<f64>::zeros(2, 2); steps];
    let mut sum_sq = vec![DMatrix::<f64>::zeros(2, 2); steps];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..runs {
        let mut s = AdaptiveState::zeros(2, 1);
        for i in 0..steps {
            let data = generate_data(&p.model, &p.truth, &mut rng).unwrap();
            let draws = LinkDraws::sample(&layout, &p.model, &mut rng);
            s = cta_iteration(&s, &data, &layout, &draws, &p.mu).unwrap();
            let e = DVector::from_fn(2, |k, _| 0.8 - s.estimate(k)[0]);
            let outer = &e * e.transpose();
            sum_sq[i] += outer.component_mul(&outer);
            sum_p[i] += outer;
            sum_m[i] += e;
        }
    }
    let mut m = DVector::from_element(2, 0.8);
    let mut second = &m * m.transpose();
    for i in 0..steps {
        let next = propagate_moments(&ms, &m, &second);
        m = next.mean;
        second = next.second;
        let mc_m = &sum_m[i] / runs as f64;
        let mc_p = &sum_p[i] / runs as f64;
        for k in 0..2 {
            let sd = (mc_p[(k, k)] - mc_m[k] * mc_m[k]).sqrt();
            assert!((mc_m[k] - m[k]).abs() < 5.0 * sd / (runs as f64).sqrt(), "mean {i} {k}");
        }
        let var = &sum_sq[i] / runs as f64 - mc_p.component_mul(&mc_p);
        for (idx, v) in var.iter().enumerate() {
            let se = (v / runs as f64).sqrt();
            assert!((mc_p[idx] - second[idx]).abs() < 5.0 * se, "second moment at step {i}, entry {idx}");
        }
    }
}

#[test]
fn transient_moments_match_monte_carlo_unit_mean() {
    transient_check(Normalization::UnitMean);
}

#[test]
fn transient_moments_match_monte_carlo_paper_literal() {
    transient_check(Normalization::PaperLiteral);
}

#[test]
fn steady_state_matches_monte_carlo_small_network() {
    for norm in [Normalization::UnitMean, Normalization::PaperLiteral] {
        let p = pair(norm);
        let ms = error_recursion_moments(&p.weights, &p.fading, &p.model, &p.truth, &p.mu).unwrap();
        let theory = predict_msd(&ms, SolveMethod::FixedPointIteration).unwrap();
        let vec = predict_msd(&ms, SolveMethod::VectorizedSolve).unwrap();
        assert!((theory.network - vec.network).abs() < 1e-8 * theory.network);
        let cfg = RunConfig::new(Strategy::Cta, p.mu.clone(), 400, 2000, 8);
        let trace = run_monte_carlo(&cfg, &p.weights, &p.fading, &p.model, &p.truth).unwrap();
        let sim = steady_state_msd(&trace, 300).unwrap();
        assert!((sim.network_db - theory.network_db).abs() < 0.2, "{norm:?}: {} vs {}", sim.network_db, theory.network_db);
        for k in 0..2 {
            assert!((sim.per_node_db[k] - theory.per_node_db[k]).abs() < 0.3);
        }
    }
}

#[test]
fn network_msd_is_node_average() {
    let spec = ExperimentSpec::builtin("fig10").unwrap();
    let pred = resolve(&spec).unwrap().theory().unwrap();
    let avg = pred.per_node.iter().sum::<f64>() / pred.per_node.len() as f64;
    assert!((pred.network - avg).abs() <= 1e-15 * avg);
}

fn theory_at(sigma_x2: f64, link_noise: f64) -> f64 {
    let mut spec = ExperimentSpec::builtin("fig10").unwrap();
    spec.channel = ChannelSetting::Sigma { sigma_x2 };
    spec.data.link_noise = link_noise;
    resolve(&spec).unwrap().theory().unwrap().network
}

#[test]
fn prediction_monotone_in_link_variance() {
    let mut values = vec![0.0];
    values.extend(VarianceTable::builtin().by_distance().iter().map(|&(_, s)| s));
    let msd: Vec<f64> = values.iter().map(|&s| theory_at(s, 1e-3)).collect();
    for w in msd.windows(2) {
        assert!(w[1] >= w[0], "{msd:?}");
    }
}

#[test]
fn clean_links_are_a_strict_lower_bound() {
    let clean = theory_at(0.0, 0.0);
    let mut spec = ExperimentSpec::builtin("fig10").unwrap();
    spec.channel = ChannelSetting::Sigma { sigma_x2: 0.0 };
    spec.data.link_noise = 0.0;
    let net = resolve(&spec).unwrap();
    let ms = error_recursion_moments(
        &uniform_weights(&net.topology),
        &net.fading,
        &net.model,
        &net.truth,
        &net.step_sizes,
    )
    .unwrap();
    let vec_free = predict_msd(&ms, SolveMethod::FixedPointIteration).unwrap();
    assert_eq!(vec_free.network, clean);
    assert!(vec_free.mean_error_norm < 1e-9);
    for s in [1.07e-3, 1.64e-2, 1.38e-1] {
        assert!(theory_at(s, 0.0) > clean);
    }
    assert!(theory_at(0.0, 1e-4) > clean);
}

#[test]
fn bias_only_with_paper_literal_links() {
    for (norm, biased) in [(Normalization::UnitMean, false), (Normalization::PaperLiteral, true)] {
        let mut spec = ExperimentSpec::builtin("fig10").unwrap();
        spec.channel = ChannelSetting::Distance { distance_m: 5.0 };
        spec.normalization = norm;
        let pred = resolve(&spec).unwrap().theory().unwrap();
        assert_eq!(pred.mean_error_norm > 1e-6, biased, "{norm:?}: {}", pred.mean_error_norm);
    }
}

#[test]
fn paper_literal_long_links_lose_mean_stability() {
    let mut spec = ExperimentSpec::builtin("fig10").unwrap();
    spec.channel = ChannelSetting::Distance { distance_m: 10.0 };
    spec.normalization = Normalization::PaperLiteral;
    assert!(matches!(resolve(&spec).unwrap().theory(), Err(uvlc_diffusion::Error::Unstable(r)) if r > 1.0));
    spec.normalization = Normalization::UnitMean;
    assert!(resolve(&spec).unwrap().theory().is_ok());
}

#[test]
fn stability_flag_agrees_with_simulation() {
    let t = Topology::from_edges(1, &[], None).unwrap();
    let c = uniform_weights(&t);
    let f = FadingMap::new();
    let model = DataModel::new(1, vec![NodeModel::isotropic(1, 1.0, 0.01, 0.0)]).unwrap();
    let truth = GroundTruth::new(vec![1.0]).unwrap();
    for (mu, stable) in [(0.5, true), (2.5, false), (5.0, false)] {
        let ms = error_recursion_moments(&c, &f, &model, &truth, &[mu]).unwrap();
        let flag = mean_stability(&ms);
        assert_eq!(flag.stable, stable);
        assert!((flag.spectral_radius - (1.0f64 - mu).abs()).abs() < 1e-12);
        let sim = run_monte_carlo(&RunConfig::new(Strategy::Cta, vec![mu], 2000, 8, 1), &c, &f, &model, &truth);
        match sim {
            Ok(trace) => {
                let last = *trace.network_msd.last().unwrap();
                assert_eq!(last < 1.0, stable, "mu {mu}: {last}");
            }
            Err(e) => {
                assert!(!stable);
                assert!(matches!(e, uvlc_diffusion::Error::Divergence { .. }));
            }
        }
        assert_eq!(predict_msd(&ms, SolveMethod::FixedPointIteration).is_ok(), stable);
    }
}

#[test]
fn shipped_network_is_mean_stable() {
    let net = resolve(&ExperimentSpec::builtin("fig9").unwrap()).unwrap();
    let ms = error_recursion_moments(
        &uniform_weights(&net.topology),
        &net.fading,
        &net.model,
        &net.truth,
        &net.step_sizes,
    )
    .unwrap();
    let s = mean_stability(&ms);
    assert!(s.stable && s.spectral_radius > 0.9);
}
