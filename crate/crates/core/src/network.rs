//! Node graph, combination weights and the random per-iteration link matrix.
//!
//! Convention: `c[k][l]` is the weight node `k` applies to what it receives
//! from node `l`. Node indices are 0-based in memory and 1-based in files.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{path_loss, FadingModel, Interpolation, LinkGeometry, LinkMoments, Normalization, VarianceTable, WaterProfile};
use crate::error::{Error, Result};

/// Connected undirected graph with mandatory self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
    distances: BTreeMap<(usize, usize), f64>,
    positions: Option<Vec<(f64, f64)>>,
}

impl Topology {
    /// Builds a topology from directed edges `(k, l, distance)`. Each edge
    /// must appear in both directions with the same distance; self-loops are
    /// optional and always added.
    pub fn from_edges(
        node_count: usize,
        edges: &[(usize, usize, f64)],
        positions: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::domain("a topology needs at least one node"));
        }
        if let Some(p) = &positions {
            if p.len() != node_count {
                return Err(Error::Dimension(format!(
                    "{} positions for {node_count} nodes",
                    p.len()
                )));
            }
        }
        let mut distances = BTreeMap::new();
        for &(k, l, d) in edges {
            if k >= node_count || l >= node_count {
                return Err(Error::domain(format!("edge ({}, {}) references a missing node", k + 1, l + 1)));
            }
            if k == l {
                continue;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::domain(format!("edge ({}, {}) needs a positive distance", k + 1, l + 1)));
            }
            if let Some(prev) = distances.insert((k, l), d) {
                if prev != d {
                    return Err(Error::domain(format!("edge ({}, {}) listed with two distances", k + 1, l + 1)));
                }
            }
        }
        for (&(k, l), &d) in &distances {
            match distances.get(&(l, k)) {
                None => return Err(Error::AsymmetricEdge(k + 1, l + 1)),
                Some(&back) if back != d => {
                    return Err(Error::domain(format!(
                        "edge ({}, {}) has distance {d} but the reverse has {back}",
                        k + 1,
                        l + 1
                    )))
                }
                _ => {}
            }
        }
        let mut neighbors: Vec<Vec<usize>> = (0..node_count).map(|k| vec![k]).collect();
        for &(k, l) in distances.keys() {
            neighbors[k].push(l);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        let topo = Topology {
            neighbors,
            distances,
            positions,
        };
        if !topo.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(topo)
    }

    /// Fully connected graph with every link at the same distance.
    pub fn complete(node_count: usize, distance: f64) -> Result<Self> {
        let mut edges = Vec::new();
        for k in 0..node_count {
            for l in 0..node_count {
                if k != l {
                    edges.push((k, l, distance));
                }
            }
        }
        Self::from_edges(node_count, &edges, None)
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighborhood of `k`, sorted, including `k` itself.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn link_distance(&self, k: usize, l: usize) -> Option<f64> {
        self.distances.get(&(k, l)).copied()
    }

    /// Ordered pairs `(k, l)`, `k != l`, with their distance.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.distances.iter().map(|(&(k, l), &d)| (k, l, d))
    }

    pub fn positions(&self) -> Option<&[(f64, f64)]> {
        self.positions.as_deref()
    }

    /// Mean number of neighbors, excluding the node itself.
    pub fn mean_degree(&self) -> f64 {
        self.distances.len() as f64 / self.node_count() as f64
    }

    /// Copy with every link distance replaced by `distance`.
    pub fn with_uniform_distance(&self, distance: f64) -> Result<Self> {
        if !(distance > 0.0) {
            return Err(Error::domain("link distance must be positive"));
        }
        let mut t = self.clone();
        for d in t.distances.values_mut() {
            *d = distance;
        }
        Ok(t)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighbors[k] {
                if !seen[l] {
                    seen[l] = true;
                    count += 1;
                    queue.push_back(l);
                }
            }
        }
        count == n
    }

    /// Edge-list text: `k l distance_m` per line, both directions, followed
    /// by `node k x y` lines when positions are known.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::from("# k l distance_m\n");
        for (k, l, d) in self.links() {
            let _ = writeln!(out, "{} {} {}", k + 1, l + 1, d);
        }
        if let Some(pos) = &self.positions {
            out.push_str("# node k x_m y_m\n");
            for (k, (x, y)) in pos.iter().enumerate() {
                let _ = writeln!(out, "node {} {} {}", k + 1, x, y);
            }
        }
        out
    }

    /// Parses the adjacency format written by [`Topology::to_adjacency_text`].
    /// The node count is the largest index seen.
    pub fn from_adjacency<R: BufRead>(reader: R) -> Result<Self> {
        let mut edges = Vec::new();
        let mut positions: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        let mut max_node = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            let fields: Vec<&str> = body.split_whitespace().collect();
            let index = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v),
                    _ => Err(parse_err(format!("bad node index `{s}`"))),
                }
            };
            let real = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| parse_err(format!("bad number `{s}`")))
            };
            if fields[0] == "node" {
                if fields.len() != 4 {
                    return Err(parse_err("expected `node k x y`".into()));
                }
                let k = index(fields[1])?;
                max_node = max_node.max(k);
                positions.insert(k - 1, (real(fields[2])?, real(fields[3])?));
                continue;
            }
            if fields.len() != 3 {
                return Err(parse_err("expected `k l distance_m`".into()));
            }
            let (k, l) = (index(fields[0])?, index(fields[1])?);
            let d = real(fields[2])?;
            max_node = max_node.max(k).max(l);
            edges.push((k - 1, l - 1, d));
        }
        if max_node == 0 {
            return Err(Error::Parse {
                line: 0,
                msg: "no edges or nodes".into(),
            });
        }
        let positions = if positions.is_empty() {
            None
        } else if positions.len() == max_node {
            Some(positions.into_values().collect())
        } else {
            return Err(Error::Parse {
                line: 0,
                msg: "positions must be given for every node or none".into(),
            });
        };
        Self::from_edges(max_node, &edges, positions)
    }
}

pub const MAX_TOPOLOGY_ATTEMPTS: usize = 1000;

/// Random geometric graph: `node_count` nodes uniform in a square of the
/// given area, linked when closer than `radius`. Redraws until connected.
pub fn generate_topology(node_count: usize, radius: f64, area: f64, seed: u64) -> Result<Topology> {
    if node_count < 2 {
        return Err(Error::domain("need at least two nodes"));
    }
    if !(radius > 0.0) || !(area > 0.0) {
        return Err(Error::domain("radius and area must be positive"));
    }
    let side = area.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_TOPOLOGY_ATTEMPTS {
        let pos: Vec<(f64, f64)> = (0..node_count)
            .map(|_| (rng.gen::<f64>() * side, rng.gen::<f64>() * side))
            .collect();
        let mut edges = Vec::new();
        for k in 0..node_count {
            for l in 0..node_count {
                if k == l {
                    continue;
                }
                let d = (pos[k].0 - pos[l].0).hypot(pos[k].1 - pos[l].1);
                if d <= radius && d > 0.0 {
                    edges.push((k, l, d));
                }
            }
        }
        match Topology::from_edges(node_count, &edges, Some(pos)) {
            Ok(t) => return Ok(t),
            Err(Error::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ConnectivityUnachievable(MAX_TOPOLOGY_ATTEMPTS))
}

/// Row-stochastic N×N weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CombinationMatrix {
    pub fn new(topo: &Topology, entries: Vec<f64>) -> Result<Self> {
        let n = topo.node_count();
        if entries.len() != n * n {
            return Err(Error::Dimension(format!("{} weights for {n} nodes", entries.len())));
        }
        for k in 0..n {
            let nb = topo.neighbors(k);
            let mut sum = 0.0;
            for l in 0..n {
                let c = entries[k * n + l];
                if c < 0.0 || (c != 0.0 && nb.binary_search(&l).is_err()) {
                    return Err(Error::domain(format!("invalid weight c[{}][{}] = {c}", k + 1, l + 1)));
                }
                sum += c;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!("row {} sums to {sum}", k + 1)));
            }
        }
        Ok(CombinationMatrix { n, entries })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[k * self.n + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.entries[k * self.n..(k + 1) * self.n]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }
}

/// Uniform policy: `1 / |N_k|` on the neighborhood of `k`.
pub fn uniform_weights(topo: &Topology) -> CombinationMatrix {
    let n = topo.node_count();
    let mut entries = vec![0.0; n * n];
    for k in 0..n {
        let nb = topo.neighbors(k);
        let w = 1.0 / nb.len() as f64;
        for &l in nb {
            entries[k * n + l] = w;
        }
    }
    CombinationMatrix { n, entries }
}

/// Turbulence model plus a deterministic gain (1 unless path loss is folded in).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkChannel {
    pub model: FadingModel,
    pub gain: f64,
}

impl LinkChannel {
    pub fn new(model: FadingModel) -> Self {
        LinkChannel { model, gain: 1.0 }
    }

    /// Moments of `gain * I`.
    pub fn moments(&self) -> LinkMoments {
        let m = self.model.moments();
        LinkMoments {
            mean: self.gain * m.mean,
            second: self.gain * self.gain * m.second,
        }
    }

    /// `gain * I` for a standard normal draw `z`.
    #[inline]
    pub fn realize(&self, z: f64) -> f64 {
        let m = &self.model;
        self.gain * (2.0 * (m.log_amp_mean() + m.log_amp_variance().sqrt() * z)).exp()
    }
}

/// Fading model per ordered link `(k, l)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FadingMap {
    links: BTreeMap<(usize, usize), LinkChannel>,
}

impl FadingMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, k: usize, l: usize, channel: LinkChannel) {
        self.links.insert((k, l), channel);
    }

    pub fn get(&self, k: usize, l: usize) -> Option<&LinkChannel> {
        self.links.get(&(k, l))
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &LinkChannel)> {
        self.links.iter().map(|(&kl, c)| (kl, c))
    }

    /// Same model on every link.
    pub fn uniform(topo: &Topology, model: FadingModel) -> Self {
        let mut map = Self::new();
        for (k, l, _) in topo.links() {
            map.insert(k, l, LinkChannel::new(model));
        }
        map
    }

    /// Each link's variance interpolated from the distance table at that
    /// link's own length.
    pub fn from_link_distances(topo: &Topology, table: &VarianceTable, normalization: Normalization) -> Result<Self> {
        let mut map = Self::new();
        for (k, l, d) in topo.links() {
            let s = table.lookup_by_distance(d, Interpolation::Linear)?;
            map.insert(k, l, LinkChannel::new(FadingModel::from_log_amp_variance(s, normalization)?));
        }
        Ok(map)
    }

    /// Multiplies every link gain by its deterministic path loss.
    pub fn fold_path_loss(&mut self, topo: &Topology, aperture_m: f64, divergence_rad: f64, water: &WaterProfile) -> Result<()> {
        for (&(k, l), ch) in self.links.iter_mut() {
            let d = topo
                .link_distance(k, l)
                .ok_or(Error::MissingModel(k + 1, l + 1))?;
            ch.gain *= path_loss(&LinkGeometry::new(d, aperture_m, divergence_rad)?, water)?;
        }
        Ok(())
    }
}

/// Sparse view of the off-diagonal support of a combination matrix, with the
/// channel of every link resolved. Links are ordered by receiver, then sender.
#[derive(Debug, Clone)]
pub struct LinkLayout {
    n: usize,
    self_weights: Vec<f64>,
    offsets: Vec<usize>,
    senders: Vec<usize>,
    weights: Vec<f64>,
    channels: Vec<LinkChannel>,
}

impl LinkLayout {
    pub fn new(weights: &CombinationMatrix, fading: &FadingMap) -> Result<Self> {
        let n = weights.node_count();
        let mut layout = LinkLayout {
            n,
            self_weights: Vec::with_capacity(n),
            offsets: vec![0],
            senders: Vec::new(),
            weights: Vec::new(),
            channels: Vec::new(),
        };
        for k in 0..n {
            layout.self_weights.push(weights.get(k, k));
            for l in 0..n {
                let c = weights.get(k, l);
                if l == k || c == 0.0 {
                    continue;
                }
                let ch = fading.get(k, l).ok_or(Error::MissingModel(k + 1, l + 1))?;
                layout.senders.push(l);
                layout.weights.push(c);
                layout.channels.push(*ch);
            }
            layout.offsets.push(layout.senders.len());
        }
        Ok(layout)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn link_count(&self) -> usize {
        self.senders.len()
    }

    pub fn self_weight(&self, k: usize) -> f64 {
        self.self_weights[k]
    }

    /// Index range of the links received by node `k`.
    pub fn incoming(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn sender(&self, link: usize) -> usize {
        self.senders[link]
    }

    pub fn weight(&self, link: usize) -> f64 {
        self.weights[link]
    }

    pub fn channel(&self, link: usize) -> &LinkChannel {
        &self.channels[link]
    }

    /// Realized gains `gain * I` for every link, in layout order.
    pub fn sample_gains<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.channels.iter().map(|ch| ch.realize(rng.sample(StandardNormal))));
    }
}

/// One realization of the weighted link matrix `G_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrixSample {
    pub g: DMatrix<f64>,
}

impl LinkMatrixSample {
    /// Dense matrix from per-link gains in layout order.
    pub fn from_gains(layout: &LinkLayout, gains: &[f64]) -> Self {
        let n = layout.node_count();
        let mut g = DMatrix::zeros(n, n);
        for k in 0..n {
            g[(k, k)] = layout.self_weight(k);
            for j in layout.incoming(k) {
                g[(k, layout.sender(j))] = layout.weight(j) * gains[j];
            }
        }
        LinkMatrixSample { g }
    }
}

/// Draws `G` with diagonal `c_kk` and off-diagonal `I_kl c_kl`; every ordered
/// link gets an independent draw.
pub fn sample_link_matrix<R: Rng + ?Sized>(
    weights: &CombinationMatrix,
    fading: &FadingMap,
    rng: &mut R,
) -> Result<LinkMatrixSample> {
    let layout = LinkLayout::new(weights, fading)?;
    let mut gains = Vec::with_capacity(layout.link_count());
    layout.sample_gains(rng, &mut gains);
    Ok(LinkMatrixSample::from_gains(&layout, &gains))
}
