use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Mean squared error over all entries.
pub fn mse_loss(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(target) {
        return Err(Error::shape(
            "mse_loss",
            format!("{:?} vs {:?}", g.shape(pred), g.shape(target)),
        ));
    }
    let d = g.sub(pred, target)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean(sq))
}

/// Mean over the batch of `-log softmax(logits)[label]`; logits are batch×classes.
pub fn cross_entropy_loss(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let s = g.shape(logits).to_vec();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::shape(
            "cross_entropy_loss",
            format!("logits {:?} with {} labels", s, labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= s[1]) {
        return Err(Error::Range(format!(
            "label {} outside 0..{}",
            bad,
            s[1] - 1
        )));
    }
    let logp = g.log_softmax(logits, 1)?;
    let picked = g.select_per_row(logp, labels)?;
    let m = g.mean(picked);
    Ok(g.scale(m, -1.0))
}

/// Mean of `max(0, ‖a−p‖ − ‖a−n‖ + margin)` over rows.
pub fn triplet_loss(
    g: &mut Graph,
    anchor: Var,
    positive: Var,
    negative: Var,
    margin: f64,
) -> Result<Var> {
    let (sa, sp, sn) = (g.shape(anchor), g.shape(positive), g.shape(negative));
    if sa != sp || sa != sn || sa.len() != 2 {
        return Err(Error::shape(
            "triplet_loss",
            format!("{:?} / {:?} / {:?}", sa, sp, sn),
        ));
    }
    let ap = g.sub(anchor, positive)?;
    let an = g.sub(anchor, negative)?;
    let d_ap = g.row_norm(ap)?;
    let d_an = g.row_norm(an)?;
    let diff = g.sub(d_ap, d_an)?;
    let shifted = g.add_scalar(diff, margin);
    let hinge = g.leaky_relu(shifted, 0.0);
    Ok(g.mean(hinge))
}

/// Row indices of batch-hard triplets: for each usable anchor, the farthest
/// same-label row and the nearest different-label row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripletIndices {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Batch-hard mining over an embedding matrix (batch×dim). Anchors without a
/// positive are skipped; a batch with no usable anchor is an error. Ties pick
/// the lowest row index.
pub fn batch_hard_triplets(embeddings: &Tensor, labels: &[usize]) -> Result<TripletIndices> {
    let s = embeddings.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::shape(
            "batch_hard_triplets",
            format!("{:?} with {} labels", s, labels.len()),
        ));
    }
    let (b, d) = (s[0], s[1]);
    let e = embeddings.data();
    let dist = |i: usize, j: usize| -> f64 {
        e[i * d..(i + 1) * d]
            .iter()
            .zip(&e[j * d..(j + 1) * d])
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let mut out = TripletIndices {
        anchors: vec![],
        positives: vec![],
        negatives: vec![],
    };
    for i in 0..b {
        let mut pos: Option<(usize, f64)> = None;
        let mut neg: Option<(usize, f64)> = None;
        for j in 0..b {
            if j == i {
                continue;
            }
            let dij = dist(i, j);
            if labels[j] == labels[i] {
                if pos.is_none_or(|(_, best)| dij > best) {
                    pos = Some((j, dij));
                }
            } else if neg.is_none_or(|(_, best)| dij < best) {
                neg = Some((j, dij));
            }
        }
        if let (Some((p, _)), Some((n, _))) = (pos, neg) {
            out.anchors.push(i);
            out.positives.push(p);
            out.negatives.push(n);
        }
    }
    if out.anchors.is_empty() {
        return Err(Error::Mining(
            "batch needs at least one label with two members and one other label".into(),
        ));
    }
    Ok(out)
}
