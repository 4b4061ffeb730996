use std::path::Path;

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::gnn::Binder;
use crate::io::{parse_json, write_json};
use crate::model::{
    argmax_rows, classify_latents, decode, encode_batch, forward_autoencoder_batch, init_params,
    ModelSpec, NormalizedCloud, ENCODER_PREFIXES,
};
use crate::tensor::{
    batch_hard_triplets, cross_entropy_loss, load_checkpoint, save_checkpoint, triplet_loss, Adam,
    AdamConfig, Graph, ParamStore, Tensor, Var,
};

/// Parameters kept by a stage-1 checkpoint.
pub const AUTOENCODER_PREFIXES: [&str; 3] = ["tnet.", "enc.", "dec."];
/// Parameters kept by a classifier checkpoint.
pub const CLASSIFIER_PREFIXES: [&str; 3] = ["tnet.", "enc.", "cls."];

/// Recordings per tape when encoding or predicting without gradients.
const INFER_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub freeze_encoder: bool,
    pub ce_weight: f64,
    pub triplet_weight: f64,
    pub margin: f64,
    /// Caps the batches drawn per epoch; `None` makes one full pass.
    pub steps_per_epoch: Option<usize>,
    /// Stage 1 only: frames drawn from each recording per epoch; `None`
    /// uses every frame.
    pub frames_per_recording: Option<usize>,
}

impl TrainConfig {
    /// Stage-1 defaults: 40 epochs of 32-frame batches.
    pub fn autoencoder(seed: u64) -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            lr: 1e-3,
            seed,
            freeze_encoder: false,
            ce_weight: 1.0,
            triplet_weight: 1.0,
            margin: 0.2,
            steps_per_epoch: None,
            frames_per_recording: None,
        }
    }

    /// Stage-2 defaults: 40 epochs of 16-recording batches, frozen encoder.
    pub fn classifier(seed: u64) -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            freeze_encoder: true,
            ..Self::autoencoder(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be ≥ 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.ce_weight >= 0.0 && self.triplet_weight >= 0.0 && self.margin >= 0.0) {
            return bad("loss weights and margin must be non-negative");
        }
        if self.steps_per_epoch == Some(0) || self.frames_per_recording == Some(0) {
            return bad("steps_per_epoch and frames_per_recording must be ≥ 1 when set");
        }
        Ok(())
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        })
    }

    fn sampler(&self) -> ChaCha8Rng {
        // distinct stream from the one initializing parameters
        ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_5a3b_1e00_0001)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Autoencoder,
    Cross,
    CrossFinetune,
    Unimodal,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Autoencoder => "autoencoder",
            Regime::Cross => "cross",
            Regime::CrossFinetune => "cross_finetune",
            Regime::Unimodal => "unimodal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub ce: Option<f64>,
    pub triplet: Option<f64>,
    /// Accuracy over the batches seen during the epoch.
    pub train_accuracy: Option<f64>,
    /// Accuracy on the monitor set after the epoch.
    pub eval_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub regime: Regime,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub params: ParamStore,
    pub history: Vec<EpochStats>,
}

#[derive(Serialize, Deserialize)]
struct RunFile {
    regime: Regime,
    spec: ModelSpec,
    config: TrainConfig,
    parameters: usize,
    history: Vec<EpochStats>,
}

impl TrainedModel {
    /// `model.json` + `model.bin` + `run.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(&self.params, dir)?;
        write_json(
            &dir.join("run.json"),
            &RunFile {
                regime: self.regime,
                spec: self.spec.clone(),
                config: self.config.clone(),
                parameters: self.params.num_parameters(),
                history: self.history.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let run: RunFile = parse_json(&dir.join("run.json"))?;
        Ok(Self {
            regime: run.regime,
            spec: run.spec,
            config: run.config,
            params: load_checkpoint(dir)?,
            history: run.history,
        })
    }
}

/// Copy of the parameters whose names start with one of `prefixes`.
pub fn retain_prefixes(store: &ParamStore, prefixes: &[&str]) -> ParamStore {
    let mut out = ParamStore::new();
    for (name, p) in store.iter() {
        if prefixes.iter().any(|pre| name.starts_with(pre)) {
            out.insert(name, p.value.clone()).expect("names are unique");
            out.get_mut(name).expect("just inserted").trainable = p.trainable;
        }
    }
    out
}

fn check_sequences(data: &Dataset, spec: &ModelSpec) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Dataset("no recordings".into()));
    }
    for r in &data.recordings {
        if r.clouds.len() != spec.seq_len {
            return Err(Error::Dataset(format!(
                "{}: {} frames, expected {}",
                r.id,
                r.clouds.len(),
                spec.seq_len
            )));
        }
        if r.label >= spec.classes {
            return Err(Error::Dataset(format!(
                "{}: label {} out of range",
                r.id, r.label
            )));
        }
    }
    Ok(())
}

/// Stage 1: fits input transform, encoder and decoder to reconstruct each
/// frame's skeleton under per-frame MSE.
pub fn train_autoencoder(
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainedModel> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("no recordings".into()));
    }
    for r in &data.recordings {
        match &r.skeletons {
            Some(s) if s.len() == r.clouds.len() => {}
            Some(s) => {
                return Err(Error::Dataset(format!(
                    "{}: {} skeletons for {} clouds",
                    r.id,
                    s.len(),
                    r.clouds.len()
                )))
            }
            None => {
                return Err(Error::Dataset(format!(
                    "{}: no skeletons; cross-learning needs camera data at train time",
                    r.id
                )))
            }
        }
    }
    let mut params = retain_prefixes(&init_params(spec, cfg.seed)?, &AUTOENCODER_PREFIXES);
    let mut adam = cfg.adam();
    let mut rng = cfg.sampler();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut pairs = Vec::new();
        for (ri, r) in data.recordings.iter().enumerate() {
            let n = r.clouds.len();
            match cfg.frames_per_recording {
                Some(f) if f < n => {
                    let mut picked = sample(&mut rng, n, f).into_vec();
                    picked.sort_unstable();
                    pairs.extend(picked.into_iter().map(|fi| (ri, fi)));
                }
                _ => pairs.extend((0..n).map(|fi| (ri, fi))),
            }
        }
        pairs.shuffle(&mut rng);
        let steps = cfg.steps_per_epoch.unwrap_or(usize::MAX);
        let (mut sum, mut count) = (0.0, 0usize);
        for batch in pairs.chunks(cfg.batch_size).take(steps) {
            let clouds: Vec<NormalizedCloud> = batch
                .iter()
                .map(|&(r, f)| data.recordings[r].clouds[f].clone())
                .collect();
            let targets: Vec<_> = batch
                .iter()
                .map(|&(r, f)| data.recordings[r].skeletons.as_ref().expect("checked")[f].clone())
                .collect();
            let mut g = Graph::new();
            let mse = {
                let mut b = Binder::new(&params);
                forward_autoencoder_batch(&mut g, &mut b, spec, &clouds, &targets)?.1
            };
            params.zero_grad();
            g.backward(mse, &mut params)?;
            adam.step(&mut params)?;
            sum += g.value(mse).item() * batch.len() as f64;
            count += batch.len();
        }
        let stats = EpochStats {
            epoch,
            loss: sum / count as f64,
            ce: None,
            triplet: None,
            train_accuracy: None,
            eval_accuracy: None,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    params.zero_grad();
    Ok(TrainedModel {
        regime: Regime::Autoencoder,
        spec: spec.clone(),
        config: cfg.clone(),
        params,
        history,
    })
}

/// Mean squared reconstruction error (m²) over every frame, joint and axis.
pub fn reconstruction_mse(params: &ParamStore, spec: &ModelSpec, data: &Dataset) -> Result<f64> {
    let per_rec = data
        .recordings
        .par_iter()
        .map(|r| {
            let sk = r
                .skeletons
                .as_ref()
                .ok_or_else(|| Error::Dataset(format!("{}: no skeletons", r.id)))?;
            let mut g = Graph::new();
            let mut b = Binder::new(params);
            let z = encode_batch(&mut g, &mut b, spec, &r.clouds)?;
            let rec = decode(&mut g, &mut b, spec, z)?;
            let pred = g.value(rec).data();
            let mut s = 0.0;
            for (f, frame) in sk.iter().enumerate() {
                for (j, joint) in frame.joints.iter().enumerate() {
                    for d in 0..3 {
                        let e = pred[(f * frame.joints.len() + j) * 3 + d] - joint[d];
                        s += e * e;
                    }
                }
            }
            Ok((s, sk.len() * sk.first().map_or(0, |f| f.joints.len()) * 3))
        })
        .collect::<Result<Vec<_>>>()?;
    let (s, n) = per_rec
        .into_iter()
        .fold((0.0, 0usize), |(a, c), (s, n)| (a + s, c + n));
    if n == 0 {
        return Err(Error::Dataset("no frames".into()));
    }
    Ok(s / n as f64)
}

/// Class-balanced batches over one shuffled pass. Classes are interleaved
/// round-robin (class order reshuffled every round), so each full batch holds
/// every class nearly equally. Batches with a singleton class or fewer than
/// two classes are dropped.
pub fn balanced_batches(
    labels: &[usize],
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        queues[l].push(i);
    }
    for q in queues.iter_mut() {
        q.shuffle(rng);
    }
    let usable = queues.iter().filter(|q| q.len() >= 2).count();
    if usable < 2 || batch < 4 {
        return Err(Error::Mining(format!(
            "class-balanced batches need ≥ 2 classes with ≥ 2 recordings and batch ≥ 4 \
             (got {usable} classes, batch {batch})"
        )));
    }
    let mut order = Vec::with_capacity(labels.len());
    loop {
        let mut live: Vec<usize> = (0..classes).filter(|&c| !queues[c].is_empty()).collect();
        if live.is_empty() {
            break;
        }
        live.shuffle(rng);
        for c in live {
            order.push(queues[c].pop().expect("non-empty"));
        }
    }
    let ok = |b: &[usize]| {
        let mut count = vec![0usize; classes];
        for &i in b {
            count[labels[i]] += 1;
        }
        count.iter().filter(|&&c| c > 0).count() >= 2 && count.iter().all(|&c| c == 0 || c >= 2)
    };
    let out: Vec<Vec<usize>> = order
        .chunks(batch)
        .filter(|b| ok(b))
        .map(|b| b.to_vec())
        .collect();
    if out.is_empty() {
        return Err(Error::Mining(
            "no batch satisfies the class-balance condition".into(),
        ));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub triplet: f64,
}

/// `ce_weight·CE + triplet_weight·Triplet` with batch-hard mining on the
/// embedding rows.
pub fn classifier_loss(
    g: &mut Graph,
    logits: Var,
    emb: Var,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(Var, LossParts)> {
    let ce = cross_entropy_loss(g, logits, labels)?;
    let t = batch_hard_triplets(g.value(emb), labels)?;
    let a = g.gather_rows(emb, &t.anchors)?;
    let p = g.gather_rows(emb, &t.positives)?;
    let n = g.gather_rows(emb, &t.negatives)?;
    let tl = triplet_loss(g, a, p, n, cfg.margin)?;
    let wce = g.scale(ce, cfg.ce_weight);
    let wtl = g.scale(tl, cfg.triplet_weight);
    let total = g.add(wce, wtl)?;
    let parts = LossParts {
        total: g.value(total).item(),
        ce: g.value(ce).item(),
        triplet: g.value(tl).item(),
    };
    Ok((total, parts))
}

/// Per-recording `l × latent` encoder outputs.
pub fn encode_dataset(
    params: &ParamStore,
    spec: &ModelSpec,
    data: &Dataset,
) -> Result<Vec<Tensor>> {
    data.recordings
        .par_iter()
        .map(|r| {
            let mut g = Graph::new();
            let z = encode_batch(&mut g, &mut Binder::new(params), spec, &r.clouds)?;
            Ok(g.value(z).clone())
        })
        .collect()
}

fn stack_rows(parts: &[&Tensor]) -> Tensor {
    let cols = parts[0].shape()[1];
    let rows = parts.iter().map(|t| t.shape()[0]).sum();
    let data = parts
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect();
    Tensor::new(vec![rows, cols], data).expect("row blocks share width")
}

fn classify_cached(
    params: &ParamStore,
    spec: &ModelSpec,
    latents: &[Tensor],
) -> Result<Vec<usize>> {
    let chunks = latents
        .par_chunks(INFER_CHUNK)
        .map(|c| {
            let mut g = Graph::new();
            let parts: Vec<&Tensor> = c.iter().collect();
            let x = g.constant(stack_rows(&parts));
            let (logits, _) = classify_latents(&mut g, &mut Binder::new(params), spec, x, c.len())?;
            Ok(argmax_rows(g.value(logits)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.concat())
}

/// Argmax class per recording. Each recording is encoded on its own tape, so
/// predictions do not depend on the worker count.
pub fn predict(params: &ParamStore, spec: &ModelSpec, data: &Dataset) -> Result<Vec<usize>> {
    check_sequences(data, spec)?;
    let latents = encode_dataset(params, spec, data)?;
    classify_cached(params, spec, &latents)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Stage 2: loads input transform and encoder from a stage-1 checkpoint and
/// trains the classifier on CE + triplet. With `freeze_encoder` the loaded
/// tensors are never updated.
pub fn train_classifier(
    data: &Dataset,
    stage1: &ParamStore,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    monitor: Option<&Dataset>,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut params = retain_prefixes(&init_params(spec, cfg.seed)?, &CLASSIFIER_PREFIXES);
    params.load_from(stage1, &ENCODER_PREFIXES)?;
    for pre in ENCODER_PREFIXES {
        params.set_trainable(pre, !cfg.freeze_encoder);
    }
    let regime = if cfg.freeze_encoder {
        Regime::Cross
    } else {
        Regime::CrossFinetune
    };
    fit_classifier(params, regime, data, spec, cfg, monitor, on_epoch)
}

/// Same architecture and loss as [`train_classifier`] from random
/// initialisation, radar only. The encoder is always trained; the freeze
/// flag is ignored.
pub fn train_unimodal_baseline(
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    monitor: Option<&Dataset>,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainedModel> {
    cfg.validate()?;
    let params = retain_prefixes(&init_params(spec, cfg.seed)?, &CLASSIFIER_PREFIXES);
    fit_classifier(params, Regime::Unimodal, data, spec, cfg, monitor, on_epoch)
}

fn fit_classifier(
    mut params: ParamStore,
    regime: Regime,
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    monitor: Option<&Dataset>,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainedModel> {
    check_sequences(data, spec)?;
    if let Some(m) = monitor {
        check_sequences(m, spec)?;
    }
    let labels = data.labels();
    let frozen = params
        .iter()
        .filter(|(n, _)| ENCODER_PREFIXES.iter().any(|p| n.starts_with(p)))
        .all(|(_, p)| !p.trainable);
    // a frozen encoder maps each recording to fixed latents
    let cache = if frozen {
        Some(encode_dataset(&params, spec, data)?)
    } else {
        None
    };
    let monitor_cache = match (frozen, monitor) {
        (true, Some(m)) => Some(encode_dataset(&params, spec, m)?),
        _ => None,
    };
    let mut adam = cfg.adam();
    let mut rng = cfg.sampler();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let batches = balanced_batches(&labels, cfg.batch_size, &mut rng)?;
        let steps = cfg.steps_per_epoch.unwrap_or(usize::MAX);
        let (mut total, mut ce, mut tri) = (0.0, 0.0, 0.0);
        let (mut hits, mut seen, mut n_batches) = (0usize, 0usize, 0usize);
        for batch in batches.iter().take(steps) {
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let (loss, parts, logits) = {
                let mut b = Binder::new(&params);
                let x = match &cache {
                    Some(c) => {
                        let parts: Vec<&Tensor> = batch.iter().map(|&i| &c[i]).collect();
                        g.constant(stack_rows(&parts))
                    }
                    None => {
                        let clouds: Vec<NormalizedCloud> = batch
                            .iter()
                            .flat_map(|&i| data.recordings[i].clouds.iter().cloned())
                            .collect();
                        encode_batch(&mut g, &mut b, spec, &clouds)?
                    }
                };
                let (logits, emb) = classify_latents(&mut g, &mut b, spec, x, batch.len())?;
                let (loss, parts) = classifier_loss(&mut g, logits, emb, &y, cfg)?;
                (loss, parts, logits)
            };
            hits += argmax_rows(g.value(logits))
                .iter()
                .zip(&y)
                .filter(|(a, b)| a == b)
                .count();
            seen += y.len();
            params.zero_grad();
            g.backward(loss, &mut params)?;
            adam.step(&mut params)?;
            total += parts.total;
            ce += parts.ce;
            tri += parts.triplet;
            n_batches += 1;
        }
        let eval_accuracy = match monitor {
            Some(m) => {
                let pred = match &monitor_cache {
                    Some(c) => classify_cached(&params, spec, c)?,
                    None => predict(&params, spec, m)?,
                };
                Some(accuracy(&pred, &m.labels()))
            }
            None => None,
        };
        let nb = n_batches as f64;
        let stats = EpochStats {
            epoch,
            loss: total / nb,
            ce: Some(ce / nb),
            triplet: Some(tri / nb),
            train_accuracy: Some(hits as f64 / seen as f64),
            eval_accuracy,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    params.zero_grad();
    Ok(TrainedModel {
        regime,
        spec: spec.clone(),
        config: cfg.clone(),
        params,
        history,
    })
}
