use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: (String, usize),
}

/// Relative error with a small absolute floor so that coordinates whose true
/// gradient vanishes do not divide by zero.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of the scalar built by `loss_fn` against
/// central differences with step `h`, on `samples` coordinates drawn without
/// replacement over all trainable parameters (all of them when fewer exist).
pub fn finite_diff_check<F>(
    store: &ParamStore,
    h: f64,
    samples: usize,
    seed: u64,
    loss_fn: F,
) -> Result<GradCheck>
where
    F: Fn(&ParamStore, &mut Graph) -> Result<Var>,
{
    let mut analytic = store.clone();
    analytic.zero_grad();
    let mut g = Graph::new();
    let loss = loss_fn(&analytic, &mut g)?;
    g.backward(loss, &mut analytic)?;
    drop(g);

    let coords: Vec<(String, usize, f64)> = analytic
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(name, p)| {
            let grad = p.grad.as_ref().map(|t| t.data().to_vec());
            (0..p.value.len())
                .map(move |i| (name.to_string(), i, grad.as_ref().map_or(0.0, |gr| gr[i])))
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if coords.len() <= samples {
        (0..coords.len()).collect()
    } else {
        let mut v = sample(&mut rng, coords.len(), samples).into_vec();
        v.sort_unstable();
        v
    };

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss_fn(s, &mut g)?;
        Ok(g.value(l).item())
    };

    let mut probe = store.clone();
    let mut worst = (String::new(), 0);
    let mut max_rel = 0.0f64;
    for &c in &picked {
        let (name, idx, a) = &coords[c];
        let orig = probe.value(name)?.data()[*idx];
        probe.get_mut(name).expect("exists").value.data_mut()[*idx] = orig + h;
        let plus = eval(&probe)?;
        probe.get_mut(name).expect("exists").value.data_mut()[*idx] = orig - h;
        let minus = eval(&probe)?;
        probe.get_mut(name).expect("exists").value.data_mut()[*idx] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let e = rel_error(*a, numeric);
        if e > max_rel {
            max_rel = e;
            worst = (name.clone(), *idx);
        }
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        coords_checked: picked.len(),
        worst,
    })
}
