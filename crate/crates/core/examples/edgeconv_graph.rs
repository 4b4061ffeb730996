//! Dynamic-graph convolution on one radar point cloud: the k-NN graph in
//! input space, one EdgeConv block, then the graph rebuilt in feature space.
//!
//! cargo run --example edgeconv_graph

use radar_gesture::gnn::{edge_conv, knn_graph, Binder, EdgeConvSpec};
use radar_gesture::tensor::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> radar_gesture::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 12;
    let cloud = Tensor::new(
        vec![n, 5],
        (0..n * 5).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;

    let k = 3;
    let input_graph = knn_graph(&cloud, k)?;
    println!("input-space neighbours (self first):");
    for i in 0..4 {
        println!("  {i}: {:?}", input_graph.of(i));
    }

    let spec = EdgeConvSpec::new("block", 5, &[16, 16]);
    let mut store = ParamStore::new();
    spec.init(&mut store, &mut rng)?;
    let mut g = Graph::new();
    let x = g.constant(cloud);
    let (y, _) = edge_conv(&mut g, &mut Binder::new(&store), x, &spec, k)?;
    println!(
        "edgeconv {:?} -> {:?}, {} parameters",
        [n, 5],
        g.shape(y),
        store.num_parameters()
    );

    let feature_graph = knn_graph(g.value(y), k)?;
    let changed = (0..n)
        .filter(|&i| feature_graph.of(i) != input_graph.of(i))
        .count();
    println!(
        "{changed} of {n} neighbourhoods change when the graph is rebuilt on learned features"
    );
    Ok(())
}
