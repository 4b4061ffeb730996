//! k-nearest-neighbour graphs and edge convolution on the tensor tape.
//!
//! An edge convolution applies a shared MLP to `(r_i, r_j − r_i)` for every
//! edge of a k-NN graph (self-loop included) and max-pools over each vertex's
//! edges. Single-layer blocks use a fused route: with `W = [W_a | W_b]`,
//! `h(r_i, r_j − r_i) = (W_a − W_b)·r_i + W_b·r_j + b`, and because leaky-ReLU
//! is monotone the max over edges moves inside the activation. Multi-layer
//! blocks materialise every edge feature.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamStore, Tensor, Var};

/// Default negative slope of every leaky-ReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Neighbour table with an explicit self-loop in slot 0 of every vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    pub n: usize,
    pub k: usize,
    /// `n × (k + 1)` vertex indices; slot 0 is the vertex itself, the rest
    /// ascend by distance.
    pub neighbors: Vec<usize>,
    /// Squared distances matching `neighbors` (slot 0 is 0).
    pub distances: Vec<f64>,
}

impl KnnGraph {
    pub fn slots(&self) -> usize {
        self.k + 1
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.slots()..(i + 1) * self.slots()]
    }
}

/// Exact k-NN over all columns of an `n × F` tensor. Ties break by ascending
/// index.
pub fn knn_graph(points: &Tensor, k: usize) -> Result<KnnGraph> {
    let n = points.shape().first().copied().unwrap_or(0);
    knn_graph_masked(points, k, n)
}

/// As [`knn_graph`], but only rows `< candidates` may appear as neighbours.
/// With `candidates = n` this is the unmasked graph.
pub fn knn_graph_masked(points: &Tensor, k: usize, candidates: usize) -> Result<KnnGraph> {
    let n = points.shape().first().copied().unwrap_or(0);
    knn_graph_blocks(points, k, n.max(1), &[candidates])
}

/// Independent k-NN graphs over consecutive row blocks of `block` rows (one
/// block per frame of a batch), with global row indices. In block `b` only
/// its first `candidates[b]` rows may be neighbours.
pub fn knn_graph_blocks(
    points: &Tensor,
    k: usize,
    block: usize,
    candidates: &[usize],
) -> Result<KnnGraph> {
    let s = points.shape();
    if s.len() != 2 || block == 0 || s[0] != block * candidates.len() {
        return Err(Error::shape(
            "knn_graph",
            format!("{:?} as {} blocks of {}", s, candidates.len(), block),
        ));
    }
    if k == 0 || k >= block {
        return Err(Error::Range(format!(
            "k = {} needs 1 ≤ k < n = {}",
            k, block
        )));
    }
    if let Some(&c) = candidates.iter().find(|&&c| c > block || k >= c) {
        return Err(Error::Range(format!(
            "k = {} needs fewer than {} candidate points",
            k, c
        )));
    }
    let (n, f) = (s[0], s[1]);
    let x = points.data();
    let mut neighbors = Vec::with_capacity(n * (k + 1));
    let mut distances = Vec::with_capacity(n * (k + 1));
    // symmetric squared-distance table of one block
    let mut table = vec![0.0; block * block];
    // (distance, index) of the current best k, kept sorted
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (b, &cand) in candidates.iter().enumerate() {
        let base = b * block;
        let rows = &x[base * f..(base + block) * f];
        for i in 0..block {
            let ri = &rows[i * f..(i + 1) * f];
            for j in (i + 1)..block {
                let d = squared_distance(ri, &rows[j * f..(j + 1) * f]);
                table[i * block + j] = d;
                table[j * block + i] = d;
            }
        }
        for i in 0..block {
            best.clear();
            let drow = &table[i * block..i * block + cand];
            for (j, &d) in drow.iter().enumerate() {
                if j == i || (best.len() == k && d >= best[k - 1].0) {
                    continue;
                }
                // j ascends, so equal distances keep the earlier index first
                let pos = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(pos, (d, j));
                best.truncate(k);
            }
            neighbors.push(base + i);
            distances.push(0.0);
            for &(d, j) in &best {
                neighbors.push(base + j);
                distances.push(d);
            }
        }
    }
    Ok(KnnGraph {
        n,
        k,
        neighbors,
        distances,
    })
}

/// Σ (a − b)² with four interleaved partial sums.
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Shared-MLP description of one edge-convolution block. Layer `l` owns
/// `{name}.w{l}` (`widths[l] × in`) and `{name}.b{l}`; layer 0 reads `2F`
/// inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeConvSpec {
    pub name: String,
    pub in_dim: usize,
    pub widths: Vec<usize>,
    pub slope: f64,
}

impl EdgeConvSpec {
    pub fn new(name: impl Into<String>, in_dim: usize, widths: &[usize]) -> Self {
        Self {
            name: name.into(),
            in_dim,
            widths: widths.to_vec(),
            slope: LEAKY_SLOPE,
        }
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    fn layer_inputs(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(2 * self.in_dim).chain(self.widths.iter().copied())
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.w{}", self.name, layer)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.b{}", self.name, layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "edge conv `{}` needs F > 0 and nonzero widths, got F = {} widths {:?}",
                self.name, self.in_dim, self.widths
            )));
        }
        Ok(())
    }

    /// Registers Glorot-uniform weights and zero biases.
    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        self.validate()?;
        for (l, (fan_in, fan_out)) in self.layer_inputs().zip(&self.widths).enumerate() {
            store.insert(self.weight_name(l), glorot(*fan_out, fan_in, rng))?;
            store.insert(self.bias_name(l), Tensor::zeros(&[*fan_out]))?;
        }
        Ok(())
    }
}

/// `out × in` matrix drawn from U(±√(6 / (in + out))).
pub fn glorot(out: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let a = (6.0 / (fan_in + out) as f64).sqrt();
    let data = (0..out * fan_in).map(|_| rng.random_range(-a..a)).collect();
    Tensor::new(vec![out, fan_in], data).expect("sized")
}

/// Loads each parameter onto a tape at most once, so every use within one
/// forward pass shares a node and gradients sum there.
#[derive(Debug)]
pub struct Binder<'s> {
    store: &'s ParamStore,
    cache: HashMap<String, Var>,
}

impl<'s> Binder<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            cache: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn get(&mut self, g: &mut Graph, name: &str) -> Result<Var> {
        if let Some(&v) = self.cache.get(name) {
            return Ok(v);
        }
        let v = g.param(self.store, name)?;
        self.cache.insert(name.to_string(), v);
        Ok(v)
    }
}

fn check_input(g: &Graph, x: Var, graph: &KnnGraph, spec: &EdgeConvSpec) -> Result<()> {
    spec.validate()?;
    let s = g.shape(x);
    if s.len() != 2 || s[1] != spec.in_dim || s[0] != graph.n {
        return Err(Error::shape(
            "edge_conv",
            format!(
                "points {:?} vs `{}` expecting {} features on a {}-vertex graph",
                s, spec.name, spec.in_dim, graph.n
            ),
        ));
    }
    Ok(())
}

/// Every edge feature `h(r_i, r_j − r_i)` as an `n(k+1) × F′` tensor, rows
/// ordered vertex-major then by slot.
pub fn edge_features(
    g: &mut Graph,
    params: &mut Binder,
    x: Var,
    graph: &KnnGraph,
    spec: &EdgeConvSpec,
) -> Result<Var> {
    check_input(g, x, graph, spec)?;
    let centres: Vec<usize> = (0..graph.n)
        .flat_map(|i| std::iter::repeat_n(i, graph.slots()))
        .collect();
    let ri = g.gather_rows(x, &centres)?;
    let rj = g.gather_rows(x, &graph.neighbors)?;
    let diff = g.sub(rj, ri)?;
    let mut h = g.concat(&[ri, diff], 1)?;
    for l in 0..spec.widths.len() {
        let w = params.get(g, &spec.weight_name(l))?;
        let b = params.get(g, &spec.bias_name(l))?;
        h = g.linear(h, w, b)?;
        h = g.leaky_relu(h, spec.slope);
    }
    Ok(h)
}

/// Edge convolution through explicit edge features (any depth).
pub fn edge_conv_general(
    g: &mut Graph,
    params: &mut Binder,
    x: Var,
    graph: &KnnGraph,
    spec: &EdgeConvSpec,
) -> Result<Var> {
    let h = edge_features(g, params, x, graph, spec)?;
    let rows: Vec<usize> = (0..graph.n * graph.slots()).collect();
    g.neighbor_max(h, &rows, graph.slots())
}

/// Edge convolution on a given graph. Single-layer specs take the fused
/// route, deeper specs the general one.
pub fn edge_conv_on(
    g: &mut Graph,
    params: &mut Binder,
    x: Var,
    graph: &KnnGraph,
    spec: &EdgeConvSpec,
) -> Result<Var> {
    check_input(g, x, graph, spec)?;
    if spec.widths.len() > 1 {
        return edge_conv_general(g, params, x, graph, spec);
    }
    let f = spec.in_dim;
    let w = params.get(g, &spec.weight_name(0))?;
    let b = params.get(g, &spec.bias_name(0))?;
    let wa = g.slice(w, 1, 0, f)?;
    let wb = g.slice(w, 1, f, f)?;
    let wd = g.sub(wa, wb)?;
    let p = g.matmul_t(x, wd)?;
    let q = g.matmul_t(x, wb)?;
    let qmax = g.neighbor_max(q, &graph.neighbors, graph.slots())?;
    let s = g.add(p, qmax)?;
    let s = g.add_row(s, b)?;
    Ok(g.leaky_relu(s, spec.slope))
}

/// Builds the k-NN graph on the current values of `x`, then convolves.
pub fn edge_conv(
    g: &mut Graph,
    params: &mut Binder,
    x: Var,
    spec: &EdgeConvSpec,
    k: usize,
) -> Result<(Var, KnnGraph)> {
    let n = g.shape(x).first().copied().unwrap_or(0);
    edge_conv_masked(g, params, x, spec, k, n)
}

/// [`edge_conv`] with neighbours restricted to rows `< candidates`.
pub fn edge_conv_masked(
    g: &mut Graph,
    params: &mut Binder,
    x: Var,
    spec: &EdgeConvSpec,
    k: usize,
    candidates: usize,
) -> Result<(Var, KnnGraph)> {
    let graph = knn_graph_masked(g.value(x), k, candidates)?;
    let y = edge_conv_on(g, params, x, &graph, spec)?;
    Ok((y, graph))
}

/// Edge convolution over a batch of frames stacked as row blocks; each
/// frame gets its own graph (see [`knn_graph_blocks`]).
pub fn edge_conv_blocks(
    g: &mut Graph,
    params: &mut Binder,
    x: Var,
    spec: &EdgeConvSpec,
    k: usize,
    block: usize,
    candidates: &[usize],
) -> Result<Var> {
    let graph = knn_graph_blocks(g.value(x), k, block, candidates)?;
    edge_conv_on(g, params, x, &graph, spec)
}

/// Input-transform network: an edge-conv block, a global max pool and a
/// linear map to a 3 × 3 matrix applied to the spatial columns `0..3`. The
/// remaining columns pass through.
#[derive(Clone, Debug, PartialEq)]
pub struct TNetSpec {
    pub name: String,
    pub in_dim: usize,
    pub width: usize,
    pub k: usize,
}

impl TNetSpec {
    pub fn new(name: impl Into<String>, in_dim: usize, width: usize, k: usize) -> Self {
        Self {
            name: name.into(),
            in_dim,
            width,
            k,
        }
    }

    pub fn conv(&self) -> EdgeConvSpec {
        EdgeConvSpec::new(format!("{}.ec", self.name), self.in_dim, &[self.width])
    }

    pub fn fc_weight(&self) -> String {
        format!("{}.fc.w", self.name)
    }

    pub fn fc_bias(&self) -> String {
        format!("{}.fc.b", self.name)
    }

    /// Random edge-conv weights, zero output weights and an identity output
    /// bias, so a fresh transform is exactly the identity.
    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        if self.in_dim < 3 {
            return Err(Error::Config(format!(
                "T-net needs at least 3 spatial features, got {}",
                self.in_dim
            )));
        }
        self.conv().init(store, rng)?;
        store.insert(self.fc_weight(), Tensor::zeros(&[9, self.width]))?;
        store.insert(
            self.fc_bias(),
            Tensor::eye(3).reshape(&[9]).expect("nine entries"),
        )?;
        Ok(())
    }
}

/// Predicted transforms for a batch of frames stacked as row blocks, as a
/// `frames × 9` node (row-major 3 × 3 per frame).
pub fn tnet_matrices(
    g: &mut Graph,
    params: &mut Binder,
    x: Var,
    tnet: &TNetSpec,
    block: usize,
    candidates: &[usize],
) -> Result<Var> {
    let frames = candidates.len();
    let h = edge_conv_blocks(g, params, x, &tnet.conv(), tnet.k, block, candidates)?;
    let h = g.reshape(h, &[frames, block, tnet.width])?;
    let pooled = g.reduce_max(h, 1)?;
    let w = params.get(g, &tnet.fc_weight())?;
    let b = params.get(g, &tnet.fc_bias())?;
    g.linear(pooled, w, b)
}

/// Applies the learned transform to columns `0..3` of `x` (`p′ = T·p`).
pub fn input_transform(g: &mut Graph, params: &mut Binder, x: Var, tnet: &TNetSpec) -> Result<Var> {
    let n = g.shape(x).first().copied().unwrap_or(0);
    input_transform_blocks(g, params, x, tnet, n.max(1), &[n])
}

/// Batched [`input_transform`]: one transform per row block, predicted from
/// that block's own graph.
pub fn input_transform_blocks(
    g: &mut Graph,
    params: &mut Binder,
    x: Var,
    tnet: &TNetSpec,
    block: usize,
    candidates: &[usize],
) -> Result<Var> {
    let s = g.shape(x).to_vec();
    if s.len() != 2 || s[1] != tnet.in_dim || s[0] != block * candidates.len() {
        return Err(Error::shape(
            "input_transform",
            format!(
                "{:?} vs {} blocks of {} × {}",
                s,
                candidates.len(),
                block,
                tnet.in_dim
            ),
        ));
    }
    let t = tnet_matrices(g, params, x, tnet, block, candidates)?;
    let frame_of: Vec<usize> = (0..s[0]).map(|r| r / block).collect();
    let t_rows = g.gather_rows(t, &frame_of)?;
    let cols = (0..3)
        .map(|d| g.slice(x, 1, d, 1))
        .collect::<Result<Vec<_>>>()?;
    let mut moved = Vec::with_capacity(3);
    for c in 0..3 {
        let mut acc: Option<Var> = None;
        for (d, &col) in cols.iter().enumerate() {
            let tcd = g.slice(t_rows, 1, c * 3 + d, 1)?;
            let term = g.mul(tcd, col)?;
            acc = Some(match acc {
                Some(a) => g.add(a, term)?,
                None => term,
            });
        }
        moved.push(acc.expect("three terms"));
    }
    if s[1] > 3 {
        moved.push(g.slice(x, 1, 3, s[1] - 3)?);
    }
    g.concat(&moved, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pts(rows: &[&[f64]]) -> Tensor {
        let f = rows[0].len();
        Tensor::new(
            vec![rows.len(), f],
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn collinear_neighbours() {
        let p = pts(&[&[0.0], &[1.0], &[2.0], &[4.0]]);
        let gr = knn_graph(&p, 2).unwrap();
        assert_eq!(gr.of(0), &[0, 1, 2]);
        assert_eq!(gr.of(3), &[3, 2, 1]);
        // point 1: distances to 0 and 2 tie at 1, lower index first
        assert_eq!(gr.of(1), &[1, 0, 2]);
        assert_eq!(&gr.distances[..3], &[0.0, 1.0, 4.0]);
    }

    #[test]
    fn k_bounds() {
        let p = Tensor::zeros(&[4, 2]);
        assert!(knn_graph(&p, 4).is_err());
        assert!(knn_graph(&p, 0).is_err());
        assert!(knn_graph(&p, 3).is_ok());
        assert!(knn_graph_masked(&p, 2, 2).is_err());
    }

    #[test]
    fn masked_graph_avoids_padding() {
        let p = pts(&[&[0.0], &[3.0], &[5.0], &[0.1], &[0.1]]);
        let gr = knn_graph_masked(&p, 1, 3).unwrap();
        assert_eq!(gr.of(0), &[0, 1]);
        assert_eq!(gr.of(3), &[3, 0]);
    }

    #[test]
    fn projection_layer_returns_centre() {
        let mut store = ParamStore::new();
        let mut w = Tensor::zeros(&[3, 6]);
        for i in 0..3 {
            w.data_mut()[i * 6 + i] = 1.0;
        }
        store.insert("p.w0", w).unwrap();
        store.insert("p.b0", Tensor::zeros(&[3])).unwrap();
        let spec = EdgeConvSpec {
            slope: 1.0,
            ..EdgeConvSpec::new("p", 3, &[3])
        };
        let p = pts(&[&[0.0, 1.0, 2.0], &[3.0, 1.0, 0.5], &[-1.0, 0.0, 1.0]]);
        let gr = knn_graph(&p, 2).unwrap();
        let mut g = Graph::new();
        let x = g.constant(p.clone());
        let mut b = Binder::new(&store);
        let e = edge_features(&mut g, &mut b, x, &gr, &spec).unwrap();
        for i in 0..3 {
            for t in 0..3 {
                for c in 0..3 {
                    assert_eq!(g.value(e).at(&[i * 3 + t, c]), p.at(&[i, c]));
                }
            }
        }
    }

    #[test]
    fn fresh_tnet_is_identity() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = TNetSpec::new("tnet", 5, 32, 3);
        t.init(&mut store, &mut rng).unwrap();
        let data: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = Tensor::new(vec![8, 5], data).unwrap();
        let mut g = Graph::new();
        let x = g.constant(p.clone());
        let y = input_transform(&mut g, &mut Binder::new(&store), x, &t).unwrap();
        assert_eq!(g.value(y), &p);
    }
}
