//! Experiment descriptions, the built-in figure reproductions, and result
//! bundles on disk.
//!
//! A bundle directory contains:
//!
//! * `meta.json`: the fully resolved spec, per-node parameters and topology,
//!   enough to rerun without the original config file;
//! * `topology.txt`: the adjacency list;
//! * `<strategy>/trace.csv` and `<strategy>/network_trace.csv` per strategy
//!   (inside `point_NN/` for sweeps);
//! * `steady_state.csv`, `theory.json`, `plot.gp`;
//! * `sweep.csv` for sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{FadingModel, Normalization, VarianceTable, WaterProfile};
use crate::diffusion::{run_monte_carlo, steady_state_msd, DataModel, GroundTruth, NodeModel, RunConfig, Strategy, SteadyStateMsd};
use crate::error::{Error, Result};
use crate::network::{generate_topology, uniform_weights, FadingMap, Topology};
use crate::steady_state::{error_recursion_moments, predict_msd, SolveMethod, SteadyStatePrediction};

/// Lowest level written to plots, in dB.
pub const PLOT_FLOOR_DB: f64 = -80.0;

pub const BUILTIN_NAMES: [&str; 6] = ["fig5", "fig6", "fig7", "fig8", "fig9", "fig10"];

/// Where each link's log-amplitude variance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSetting {
    /// Water-condition table entry, applied to every link.
    Water { temperature_c: f64, salinity_ppt: f64 },
    /// Every link at this distance, variance from the distance table.
    Distance { distance_m: f64 },
    /// Each link's variance from its own length in the topology.
    LinkDistances,
    /// Explicit variance on every link.
    Sigma { sigma_x2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    Distance(Vec<f64>),
    /// `(temperature_c, salinity_ppt)` pairs.
    Water(Vec<(f64, f64)>),
    StepSize(Vec<f64>),
    LinkNoise(Vec<f64>),
}

impl Sweep {
    pub fn axis_name(&self) -> &'static str {
        match self {
            Sweep::Distance(_) => "distance",
            Sweep::Water(_) => "water",
            Sweep::StepSize(_) => "step_size",
            Sweep::LinkNoise(_) => "link_noise",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::Distance(v) | Sweep::StepSize(v) | Sweep::LinkNoise(v) => v.len(),
            Sweep::Water(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sorted(&self) -> Sweep {
        let sort = |v: &Vec<f64>| {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v
        };
        match self {
            Sweep::Distance(v) => Sweep::Distance(sort(v)),
            Sweep::StepSize(v) => Sweep::StepSize(sort(v)),
            Sweep::LinkNoise(v) => Sweep::LinkNoise(sort(v)),
            Sweep::Water(v) => {
                let mut v = v.clone();
                v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                Sweep::Water(v)
            }
        }
    }

    fn labels(&self) -> Vec<String> {
        match self {
            Sweep::Distance(v) | Sweep::StepSize(v) | Sweep::LinkNoise(v) => v.iter().map(|x| x.to_string()).collect(),
            Sweep::Water(v) => v.iter().map(|(t, s)| format!("{t}C/{s}PPT")).collect(),
        }
    }

    fn apply(&self, index: usize, spec: &ExperimentSpec) -> ExperimentSpec {
        let mut s = spec.clone();
        s.sweep = None;
        match self {
            Sweep::Distance(v) => s.channel = ChannelSetting::Distance { distance_m: v[index] },
            Sweep::Water(v) => {
                s.channel = ChannelSetting::Water {
                    temperature_c: v[index].0,
                    salinity_ppt: v[index].1,
                }
            }
            Sweep::StepSize(v) => {
                s.run.step_size = v[index];
                s.run.step_sizes = None;
            }
            Sweep::LinkNoise(v) => s.data.link_noise = v[index],
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub iterations: usize,
    pub ensemble: usize,
    pub seed: Option<u64>,
    /// Common step size for every node.
    pub step_size: f64,
    /// Per-node step sizes; overrides `step_size`.
    pub step_sizes: Option<Vec<f64>>,
    /// Trailing iterations averaged for the steady-state readout.
    pub window: usize,
    /// Execution setting only; never written to result bundles.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            iterations: 1000,
            ensemble: 200,
            seed: None,
            step_size: 0.05,
            step_sizes: None,
            window: 200,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub nodes: usize,
    pub radius_m: f64,
    pub area_m2: f64,
    pub topology_seed: u64,
    /// Adjacency file to load instead of generating a topology.
    pub adjacency_file: Option<PathBuf>,
    /// Overrides every link length (meters).
    pub link_distance_m: Option<f64>,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        NetworkSettings {
            nodes: 20,
            radius_m: 12.5,
            area_m2: 40.0 * 40.0,
            topology_seed: 0,
            adjacency_file: None,
            link_distance_m: Some(1.0),
        }
    }
}

/// Per-node data statistics. Ranges are sampled once per experiment from the
/// experiment seed; explicit lists take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub truth: Vec<f64>,
    pub measurement_noise_range: (f64, f64),
    pub regressor_trace_range: (f64, f64),
    pub measurement_noise: Option<Vec<f64>>,
    pub regressor_trace: Option<Vec<f64>>,
    pub link_noise: f64,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            truth: GroundTruth::unit_four().as_slice().to_vec(),
            measurement_noise_range: (1e-3, 1e-1),
            regressor_trace_range: (1.0, 2.0),
            measurement_noise: None,
            regressor_trace: None,
            link_noise: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossSettings {
    pub enabled: bool,
    pub aperture_m: f64,
    pub divergence_deg: f64,
    pub extinction: f64,
    pub correction: f64,
}

impl Default for PathLossSettings {
    fn default() -> Self {
        let w = WaterProfile::clear_ocean();
        PathLossSettings {
            enabled: false,
            aperture_m: 0.05,
            divergence_deg: 6.0,
            extinction: w.extinction,
            correction: w.correction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub strategies: Vec<Strategy>,
    pub channel: ChannelSetting,
    pub sweep: Option<Sweep>,
    /// Also compute the CTA steady-state prediction.
    pub theory: bool,
    /// Skip the Monte-Carlo runs.
    pub theory_only: bool,
    pub normalization: Normalization,
    pub path_loss: PathLossSettings,
    pub run: RunSettings,
    pub network: NetworkSettings,
    pub data: DataSettings,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "custom".into(),
            strategies: vec![Strategy::Atc, Strategy::Cta],
            channel: ChannelSetting::Water {
                temperature_c: 1.0,
                salinity_ppt: 35.0,
            },
            sweep: None,
            theory: false,
            theory_only: false,
            normalization: Normalization::UnitMean,
            path_loss: PathLossSettings::default(),
            run: RunSettings::default(),
            network: NetworkSettings::default(),
            data: DataSettings::default(),
        }
    }
}

/// Seed shared by every built-in experiment.
pub const BUILTIN_SEED: u64 = 20_210_226;

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// The six figure reproductions.
    pub fn builtin(name: &str) -> Result<Self> {
        let base = ExperimentSpec {
            name: name.to_string(),
            run: RunSettings {
                seed: Some(BUILTIN_SEED),
                ..RunSettings::default()
            },
            ..ExperimentSpec::default()
        };
        let all_water = VarianceTable::builtin()
            .by_water()
            .iter()
            .map(|w| (w.temperature_c, w.salinity_ppt))
            .collect();
        let spec = match name {
            "fig5" => base,
            "fig6" => ExperimentSpec {
                strategies: vec![Strategy::Atc],
                sweep: Some(Sweep::Water(all_water)),
                ..base
            },
            "fig7" => ExperimentSpec {
                strategies: vec![Strategy::Cta],
                sweep: Some(Sweep::Water(all_water)),
                ..base
            },
            "fig8" => ExperimentSpec {
                sweep: Some(Sweep::Distance(vec![1.0, 5.0, 10.0, 15.0, 20.0])),
                ..base
            },
            "fig9" => ExperimentSpec {
                strategies: vec![Strategy::Cta],
                theory: true,
                sweep: Some(Sweep::Distance(vec![5.0, 10.0, 15.0, 20.0])),
                run: RunSettings {
                    ensemble: 500,
                    ..base.run.clone()
                },
                ..base
            },
            "fig10" => ExperimentSpec {
                strategies: vec![Strategy::Cta],
                theory: true,
                run: RunSettings {
                    ensemble: 500,
                    ..base.run.clone()
                },
                ..base
            },
            other => return Err(Error::config(format!("unknown built-in experiment `{other}`"))),
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::config("strategy set is empty"));
        }
        if self.run.seed.is_none() {
            return Err(Error::config("a seed is required"));
        }
        if self.run.iterations == 0 || self.run.ensemble == 0 {
            return Err(Error::config("iterations and ensemble must be positive"));
        }
        if self.run.window == 0 || self.run.window > self.run.iterations {
            return Err(Error::config("window must lie in 1..=iterations"));
        }
        if self.theory_only && !self.theory {
            return Err(Error::config("theory_only requires theory"));
        }
        if self.theory && !self.strategies.contains(&Strategy::Cta) {
            return Err(Error::config("theory is only available for CTA"));
        }
        let table = VarianceTable::builtin();
        let check_channel = |c: &ChannelSetting| -> Result<()> {
            match *c {
                ChannelSetting::Water {
                    temperature_c,
                    salinity_ppt,
                } => table.lookup_by_water(temperature_c, salinity_ppt).map(|_| ()),
                ChannelSetting::Distance { distance_m } => table
                    .lookup_by_distance(distance_m, crate::channel::Interpolation::Linear)
                    .map(|_| ()),
                ChannelSetting::Sigma { sigma_x2 } => FadingModel::from_log_amp_variance(sigma_x2, self.normalization).map(|_| ()),
                ChannelSetting::LinkDistances => Ok(()),
            }
        };
        check_channel(&self.channel)?;
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                return Err(Error::config("sweep has no values"));
            }
            for i in 0..sweep.len() {
                let point = sweep.apply(i, self);
                check_channel(&point.channel)?;
                if point.run.step_size <= 0.0 || point.data.link_noise < 0.0 {
                    return Err(Error::config("sweep values must be positive"));
                }
            }
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(BUILTIN_SEED)
    }
}

/// Everything an experiment point needs, with all defaults resolved.
#[derive(Debug, Clone)]
pub struct ResolvedNetwork {
    pub topology: Topology,
    pub fading: FadingMap,
    pub model: DataModel,
    pub truth: GroundTruth,
    pub step_sizes: Vec<f64>,
    pub sigma_x2: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeParameters {
    pub node: usize,
    pub step_size: f64,
    pub regressor_trace: f64,
    pub measurement_noise: f64,
    pub link_noise: f64,
    pub degree: usize,
}

pub fn build_topology(settings: &NetworkSettings) -> Result<Topology> {
    let topo = match &settings.adjacency_file {
        Some(path) => Topology::from_adjacency(std::io::BufReader::new(fs::File::open(path)?))?,
        None => generate_topology(settings.nodes, settings.radius_m, settings.area_m2, settings.topology_seed)?,
    };
    match settings.link_distance_m {
        Some(d) => topo.with_uniform_distance(d),
        None => Ok(topo),
    }
}

pub fn resolve(spec: &ExperimentSpec) -> Result<ResolvedNetwork> {
    let base = build_topology(&spec.network)?;
    resolve_with(spec, base)
}

fn resolve_with(spec: &ExperimentSpec, base: Topology) -> Result<ResolvedNetwork> {
    let table = VarianceTable::builtin();
    let n = base.node_count();
    let topology = match spec.channel {
        ChannelSetting::Distance { distance_m } => base.with_uniform_distance(distance_m)?,
        _ => base,
    };
    let uniform = |s: f64| -> Result<FadingMap> {
        Ok(FadingMap::uniform(&topology, FadingModel::from_log_amp_variance(s, spec.normalization)?))
    };
    let (mut fading, sigma_x2) = match spec.channel {
        ChannelSetting::Water {
            temperature_c,
            salinity_ppt,
        } => {
            let s = table.lookup_by_water(temperature_c, salinity_ppt)?;
            (uniform(s)?, Some(s))
        }
        ChannelSetting::Distance { distance_m } => {
            let s = table.lookup_by_distance(distance_m, crate::channel::Interpolation::Linear)?;
            (uniform(s)?, Some(s))
        }
        ChannelSetting::Sigma { sigma_x2 } => (uniform(sigma_x2)?, Some(sigma_x2)),
        ChannelSetting::LinkDistances => (FadingMap::from_link_distances(&topology, &table, spec.normalization)?, None),
    };
    if spec.path_loss.enabled {
        let p = &spec.path_loss;
        let water = WaterProfile::with_extinction(p.extinction, p.correction)?;
        fading.fold_path_loss(&topology, p.aperture_m, p.divergence_deg.to_radians(), &water)?;
    }

    let dim = spec.data.truth.len();
    let truth = GroundTruth::new(spec.data.truth.clone())?;
    // Node parameters come from stream 0 of the experiment seed; Monte-Carlo
    // runs use streams 1..
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed());
    let (vlo, vhi) = spec.data.measurement_noise_range;
    let (tlo, thi) = spec.data.regressor_trace_range;
    if !(vlo >= 0.0 && vhi >= vlo && tlo > 0.0 && thi >= tlo) {
        return Err(Error::config("invalid noise or trace range"));
    }
    let mut drawn_noise = Vec::with_capacity(n);
    let mut drawn_trace = Vec::with_capacity(n);
    for _ in 0..n {
        drawn_noise.push(vlo + (vhi - vlo) * rng.gen::<f64>());
        drawn_trace.push(tlo + (thi - tlo) * rng.gen::<f64>());
    }
    let pick = |explicit: &Option<Vec<f64>>, drawn: Vec<f64>, what: &str| -> Result<Vec<f64>> {
        match explicit {
            Some(v) if v.len() != n => Err(Error::config(format!("{what} lists {} values for {n} nodes", v.len()))),
            Some(v) => Ok(v.clone()),
            None => Ok(drawn),
        }
    };
    let noise = pick(&spec.data.measurement_noise, drawn_noise, "measurement_noise")?;
    let trace = pick(&spec.data.regressor_trace, drawn_trace, "regressor_trace")?;
    let nodes = noise
        .iter()
        .zip(&trace)
        .map(|(&v, &t)| NodeModel::isotropic(dim, t / dim as f64, v, spec.data.link_noise))
        .collect();
    let model = DataModel::new(dim, nodes)?;
    let step_sizes = match &spec.run.step_sizes {
        Some(v) if v.len() != n => return Err(Error::config(format!("{} step sizes for {n} nodes", v.len()))),
        Some(v) => v.clone(),
        None => vec![spec.run.step_size; n],
    };
    Ok(ResolvedNetwork {
        topology,
        fading,
        model,
        truth,
        step_sizes,
        sigma_x2,
    })
}

impl ResolvedNetwork {
    pub fn node_parameters(&self) -> Vec<NodeParameters> {
        let dim = self.model.dim();
        self.model
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, nm)| NodeParameters {
                node: k + 1,
                step_size: self.step_sizes[k],
                regressor_trace: (0..dim).map(|i| nm.regressor_cov[i * dim + i]).sum(),
                measurement_noise: nm.measurement_noise,
                link_noise: nm.link_noise,
                degree: self.topology.neighbors(k).len() - 1,
            })
            .collect()
    }

    pub fn run_config(&self, spec: &ExperimentSpec, strategy: Strategy) -> RunConfig {
        RunConfig {
            threads: spec.run.threads,
            ..RunConfig::new(strategy, self.step_sizes.clone(), spec.run.iterations, spec.run.ensemble, spec.seed())
        }
    }

    pub fn simulate(&self, spec: &ExperimentSpec, strategy: Strategy) -> Result<crate::diffusion::MsdTrace> {
        let weights = uniform_weights(&self.topology);
        run_monte_carlo(&self.run_config(spec, strategy), &weights, &self.fading, &self.model, &self.truth)
    }

    pub fn theory(&self) -> Result<SteadyStatePrediction> {
        let weights = uniform_weights(&self.topology);
        let moments = error_recursion_moments(&weights, &self.fading, &self.model, &self.truth, &self.step_sizes)?;
        predict_msd(&moments, SolveMethod::FixedPointIteration)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    #[serde(skip)]
    pub trace: Option<crate::diffusion::MsdTrace>,
    pub steady_state: Option<SteadyStateMsd>,
}

/// One experiment point (a plain experiment has exactly one).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointResult {
    pub label: String,
    pub sigma_x2: Option<f64>,
    pub strategies: Vec<StrategyResult>,
    pub theory: Option<SteadyStatePrediction>,
}

impl PointResult {
    pub fn steady_db(&self, strategy: Strategy) -> Option<f64> {
        self.strategies
            .iter()
            .find(|s| s.strategy == strategy)
            .and_then(|s| s.steady_state.as_ref())
            .map(|s| s.network_db)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub points: Vec<PointResult>,
}

/// Runs every point of `spec` in memory.
pub fn evaluate(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let base = build_topology(&spec.network)?;
    let (point_specs, labels) = match &spec.sweep {
        Some(sweep) => {
            let sweep = sweep.sorted();
            ((0..sweep.len()).map(|i| sweep.apply(i, spec)).collect(), sweep.labels())
        }
        None => (vec![spec.clone()], vec![spec.name.clone()]),
    };
    let mut points = Vec::with_capacity(point_specs.len());
    for (ps, label) in point_specs.iter().zip(labels) {
        let ctx = |e: Error| Error::config(format!("{} [{label}]: {e}", spec.name));
        let net = resolve_with(ps, base.clone()).map_err(ctx)?;
        let mut strategies = Vec::new();
        for &strategy in &spec.strategies {
            if spec.theory_only {
                strategies.push(StrategyResult {
                    strategy,
                    trace: None,
                    steady_state: None,
                });
                continue;
            }
            let trace = net.simulate(ps, strategy).map_err(ctx)?;
            let steady = steady_state_msd(&trace, ps.run.window).map_err(ctx)?;
            strategies.push(StrategyResult {
                strategy,
                trace: Some(trace),
                steady_state: Some(steady),
            });
        }
        let theory = if spec.theory { Some(net.theory().map_err(ctx)?) } else { None };
        points.push(PointResult {
            label,
            sigma_x2: net.sigma_x2,
            strategies,
            theory,
        });
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        points,
    })
}

/// Runs `spec` and writes its bundle into `out`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<ExperimentResult> {
    let result = evaluate(spec)?;
    write_bundle(&result, out)?;
    Ok(result)
}

/// Summary rows `axis,value,strategy,sigma_x2,simulated_msd,simulated_db,theory_db`.
pub fn sweep(spec: &ExperimentSpec, out: &Path) -> Result<String> {
    if spec.sweep.is_none() {
        return Err(Error::config("sweep requires a sweep axis"));
    }
    let result = run_experiment(spec, out)?;
    Ok(sweep_csv(&result))
}

fn sweep_csv(result: &ExperimentResult) -> String {
    let axis = result.spec.sweep.as_ref().map_or("none", Sweep::axis_name);
    let mut out = String::from("axis,value,strategy,sigma_x2,simulated_msd,simulated_db,theory_db\n");
    for p in &result.points {
        for s in &p.strategies {
            let (lin, db) = s
                .steady_state
                .as_ref()
                .map_or((String::new(), String::new()), |st| (st.network.to_string(), st.network_db.to_string()));
            let theory = match (&p.theory, s.strategy) {
                (Some(t), Strategy::Cta) => t.network_db.to_string(),
                _ => String::new(),
            };
            let sigma = p.sigma_x2.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(out, "{axis},{},{},{sigma},{lin},{db},{theory}", p.label, s.strategy);
        }
    }
    out
}

fn steady_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("point,strategy,node,msd,msd_db\n");
    for p in &result.points {
        for s in &p.strategies {
            if let Some(st) = &s.steady_state {
                for (k, (v, db)) in st.per_node.iter().zip(&st.per_node_db).enumerate() {
                    let _ = writeln!(out, "{},{},{},{v},{db}", p.label, s.strategy, k + 1);
                }
                let _ = writeln!(out, "{},{},network,{},{}", p.label, s.strategy, st.network, st.network_db);
            }
        }
    }
    out
}

#[derive(Serialize)]
struct TheoryEntry<'a> {
    point: &'a str,
    strategy: Strategy,
    sigma_x2: Option<f64>,
    prediction: &'a SteadyStatePrediction,
}

#[derive(Serialize)]
struct Meta<'a> {
    generator: &'static str,
    version: &'static str,
    spec: &'a ExperimentSpec,
    seed: u64,
    nodes: Vec<NodeParameters>,
    mean_degree: f64,
    topology: String,
    points: Vec<PointMeta<'a>>,
}

#[derive(Serialize)]
struct PointMeta<'a> {
    label: &'a str,
    sigma_x2: Option<f64>,
    directory: String,
}

fn point_dir(result: &ExperimentResult, index: usize) -> String {
    if result.points.len() > 1 || result.spec.sweep.is_some() {
        format!("point_{:02}", index + 1)
    } else {
        String::new()
    }
}

fn plot_script(result: &ExperimentResult) -> String {
    let floor = 10f64.powf(PLOT_FLOOR_DB / 10.0);
    let mut out = String::new();
    let _ = writeln!(out, "# gnuplot script: network MSD learning curves ({})", result.spec.name);
    out.push_str("set terminal pngcairo size 900,600\n");
    let _ = writeln!(out, "set output '{}.png'", result.spec.name);
    out.push_str("set datafile separator ','\nset key top right\nset grid\n");
    out.push_str("set xlabel 'iteration'\nset ylabel 'network MSD (dB)'\n");
    let _ = writeln!(out, "floor = {floor:e}");
    out.push_str("db(x) = 10*log10(x > floor ? x : floor)\n");
    let mut curves = Vec::new();
    for (i, p) in result.points.iter().enumerate() {
        let dir = point_dir(result, i);
        for s in &p.strategies {
            if s.trace.is_none() {
                continue;
            }
            let path = Path::new(&dir)
                .join(s.strategy.name().to_lowercase())
                .join("network_trace.csv");
            curves.push(format!(
                "'{}' every ::1 using 1:(db($2)) with lines title '{} {}'",
                path.display(),
                s.strategy,
                p.label
            ));
            if let (Some(t), Strategy::Cta) = (&p.theory, s.strategy) {
                curves.push(format!(
                    "{} with lines dashtype 2 title 'theory {}'",
                    t.network_db.max(PLOT_FLOOR_DB),
                    p.label
                ));
            }
        }
    }
    if curves.is_empty() {
        out.push_str("# no simulated curves in this bundle\n");
    } else {
        let _ = writeln!(out, "plot {}", curves.join(", \\\n     "));
    }
    out
}

pub fn write_bundle(result: &ExperimentResult, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let base = build_topology(&result.spec.network)?;
    let net0 = resolve_with(&result.spec, base.clone())?;

    let mut theory = Vec::new();
    let mut point_meta = Vec::new();
    for (i, p) in result.points.iter().enumerate() {
        let dir = point_dir(result, i);
        let pdir = out.join(&dir);
        for s in &p.strategies {
            if let Some(trace) = &s.trace {
                let sdir = pdir.join(s.strategy.name().to_lowercase());
                fs::create_dir_all(&sdir)?;
                fs::write(sdir.join("trace.csv"), trace.node_csv())?;
                fs::write(sdir.join("network_trace.csv"), trace.network_csv())?;
            }
        }
        if let Some(t) = &p.theory {
            theory.push(TheoryEntry {
                point: &p.label,
                strategy: Strategy::Cta,
                sigma_x2: p.sigma_x2,
                prediction: t,
            });
        }
        point_meta.push(PointMeta {
            label: &p.label,
            sigma_x2: p.sigma_x2,
            directory: dir,
        });
    }
    fs::write(out.join("steady_state.csv"), steady_csv(result))?;
    fs::write(out.join("theory.json"), serde_json::to_string_pretty(&theory)? + "\n")?;
    if result.spec.sweep.is_some() {
        fs::write(out.join("sweep.csv"), sweep_csv(result))?;
    }
    fs::write(out.join("topology.txt"), base.to_adjacency_text())?;
    let meta = Meta {
        generator: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        spec: &result.spec,
        seed: result.spec.seed(),
        nodes: net0.node_parameters(),
        mean_degree: base.mean_degree(),
        topology: base.to_adjacency_text(),
        points: point_meta,
    };
    fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    fs::write(out.join("plot.gp"), plot_script(result))?;
    Ok(())
}

/// Both built-in tables as printed text.
pub fn list_tables() -> String {
    VarianceTable::builtin().render()
}

/// Writes `distance_table.csv` and `water_table.csv`.
pub fn export_tables(table: &VarianceTable, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("distance_table.csv"), table.distance_csv())?;
    fs::write(dir.join("water_table.csv"), table.water_csv())?;
    Ok(())
}

pub fn import_tables(dir: &Path) -> Result<VarianceTable> {
    let open = |name: &str| -> Result<std::io::BufReader<fs::File>> { Ok(std::io::BufReader::new(fs::File::open(dir.join(name))?)) };
    VarianceTable::from_csv(open("distance_table.csv")?, open("water_table.csv")?)
}
