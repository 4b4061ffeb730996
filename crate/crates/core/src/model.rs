//! The cross-modal network: input transform, dynamic-graph encoder to a
//! 136-d latent, skeleton decoder, and a stacked bidirectional recurrent
//! classifier over 30 latents.
//!
//! Every function builds nodes on a caller-owned [`Graph`] through a
//! [`Binder`], so a whole batch shares one copy of each parameter on the tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{
    edge_conv_blocks, glorot, input_transform_blocks, Binder, EdgeConvSpec, TNetSpec, LEAKY_SLOPE,
};
use crate::radar_dsp::RadarPointCloud;
use crate::scene_sim::{SkeletonFrame, NUM_JOINTS, SEQ_LEN};
use crate::tensor::{mse_loss, Graph, ParamStore, Tensor, Var};

/// Metres per unit of normalized position (inputs and decoder outputs).
pub const POSITION_SCALE: f64 = 3.0;
/// Metres per second per unit of normalized Doppler.
pub const DOPPLER_SCALE: f64 = 5.0;

/// Architecture hyper-parameters. `Default` is the network used everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub k: usize,
    pub n_points: usize,
    pub in_dim: usize,
    pub tnet_width: usize,
    pub enc_widths: Vec<usize>,
    pub latent_dim: usize,
    pub dec_points: usize,
    pub dec_widths: Vec<usize>,
    pub lstm_units: usize,
    pub lstm_layers: usize,
    pub embed_dim: usize,
    pub classes: usize,
    pub seq_len: usize,
    /// Keep zero-padded points out of every neighbour list.
    pub mask_padding: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            k: 3,
            n_points: 64,
            in_dim: 5,
            tnet_width: 32,
            enc_widths: vec![64, 64, 128],
            latent_dim: 136,
            dec_points: NUM_JOINTS,
            dec_widths: vec![64, 64],
            lstm_units: 64,
            lstm_layers: 2,
            embed_dim: 64,
            classes: 5,
            seq_len: SEQ_LEN,
            mask_padding: false,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.in_dim < 3 {
            return bad(format!("in_dim {} < 3", self.in_dim));
        }
        if self.k == 0 || self.k >= self.n_points || self.k >= self.dec_points {
            return bad(format!(
                "k = {} must be in 1..min(n_points, dec_points)",
                self.k
            ));
        }
        if self.dec_points == 0 || self.latent_dim % self.dec_points != 0 {
            return bad(format!(
                "latent {} does not split into {} pseudo-points",
                self.latent_dim, self.dec_points
            ));
        }
        let dims = [
            self.tnet_width,
            self.lstm_units,
            self.lstm_layers,
            self.embed_dim,
            self.classes,
            self.seq_len,
        ];
        if dims.contains(&0)
            || self.enc_widths.is_empty()
            || self.dec_widths.is_empty()
            || self.enc_widths.contains(&0)
            || self.dec_widths.contains(&0)
        {
            return bad("all widths and counts must be positive".into());
        }
        Ok(())
    }

    pub fn tnet(&self) -> TNetSpec {
        TNetSpec::new("tnet", self.in_dim, self.tnet_width, self.k)
    }

    pub fn encoder_blocks(&self) -> Vec<EdgeConvSpec> {
        let mut f = self.in_dim;
        self.enc_widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let s = EdgeConvSpec::new(format!("enc.ec{}", i + 1), f, &[w]);
                f = w;
                s
            })
            .collect()
    }

    pub fn decoder_blocks(&self) -> Vec<EdgeConvSpec> {
        let mut f = self.latent_dim / self.dec_points;
        self.dec_widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let s = EdgeConvSpec::new(format!("dec.ec{}", i + 1), f, &[w]);
                f = w;
                s
            })
            .collect()
    }

    fn concat_dim(&self) -> usize {
        self.enc_widths.iter().sum()
    }

    fn dec_flat(&self) -> usize {
        self.dec_points * self.dec_widths.last().copied().unwrap_or(0)
    }

    fn lstm_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.latent_dim
        } else {
            2 * self.lstm_units
        }
    }
}

fn lstm_name(layer: usize, dir: &str, part: &str) -> String {
    format!("cls.l{}.{}.{}", layer, dir, part)
}

/// Fresh parameters in a fixed registration order: `tnet.*`, `enc.*`,
/// `dec.*`, `cls.*`. Recurrent forget-gate biases start at 1.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamStore> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    spec.tnet().init(&mut s, &mut rng)?;
    for b in spec.encoder_blocks() {
        b.init(&mut s, &mut rng)?;
    }
    s.insert(
        "enc.fc.w",
        glorot(spec.latent_dim, spec.concat_dim(), &mut rng),
    )?;
    s.insert("enc.fc.b", Tensor::zeros(&[spec.latent_dim]))?;
    for b in spec.decoder_blocks() {
        b.init(&mut s, &mut rng)?;
    }
    let out = spec.dec_points * 3;
    s.insert("dec.fc.w", glorot(out, spec.dec_flat(), &mut rng))?;
    s.insert("dec.fc.b", Tensor::zeros(&[out]))?;
    let h = spec.lstm_units;
    for layer in 0..spec.lstm_layers {
        for dir in ["fw", "bw"] {
            s.insert(
                lstm_name(layer, dir, "w_ih"),
                glorot(4 * h, spec.lstm_in(layer), &mut rng),
            )?;
            s.insert(lstm_name(layer, dir, "w_hh"), glorot(4 * h, h, &mut rng))?;
            let mut b = Tensor::zeros(&[4 * h]);
            b.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
            s.insert(lstm_name(layer, dir, "b"), b)?;
        }
    }
    s.insert("cls.fc1.w", glorot(spec.embed_dim, 2 * h, &mut rng))?;
    s.insert("cls.fc1.b", Tensor::zeros(&[spec.embed_dim]))?;
    s.insert("cls.fc2.w", glorot(spec.classes, spec.embed_dim, &mut rng))?;
    s.insert("cls.fc2.b", Tensor::zeros(&[spec.classes]))?;
    Ok(s)
}

/// Parameter-name prefixes saved after stage 1 and reused by stage 2.
pub const ENCODER_PREFIXES: [&str; 2] = ["tnet.", "enc."];

/// Model input for one frame: `n × 5` normalized points and the number of
/// leading real (non-padding) rows.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedCloud {
    pub points: Tensor,
    pub valid: usize,
}

/// Positions / 3 m, Doppler / 5 m/s, intensity / the frame's peak intensity
/// (all zero when the frame is empty).
pub fn normalize_cloud(cloud: &RadarPointCloud) -> NormalizedCloud {
    let valid = cloud.valid_count.min(cloud.points.len());
    let peak = cloud.points[..valid]
        .iter()
        .map(|p| p.intensity)
        .fold(0.0, f64::max);
    let data = cloud
        .points
        .iter()
        .flat_map(|p| {
            [
                p.x / POSITION_SCALE,
                p.y / POSITION_SCALE,
                p.z / POSITION_SCALE,
                p.d / DOPPLER_SCALE,
                if peak > 0.0 { p.intensity / peak } else { 0.0 },
            ]
        })
        .collect();
    NormalizedCloud {
        points: Tensor::new(vec![cloud.points.len(), 5], data).expect("five columns"),
        valid,
    }
}

fn candidates(spec: &ModelSpec, valid: usize) -> usize {
    if spec.mask_padding && valid > spec.k {
        valid.min(spec.n_points)
    } else {
        spec.n_points
    }
}

/// One frame to a `1 × 136` latent.
pub fn encode(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    cloud: &NormalizedCloud,
) -> Result<Var> {
    encode_batch(g, params, spec, std::slice::from_ref(cloud))
}

/// A batch of frames to `B × 136` latents. Frames are stacked as row blocks
/// and never exchange information: row `b` equals `encode(clouds[b])`.
pub fn encode_batch(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    clouds: &[NormalizedCloud],
) -> Result<Var> {
    let n = spec.n_points;
    if clouds.is_empty() {
        return Err(Error::shape("encode", "empty batch"));
    }
    let mut data = Vec::with_capacity(clouds.len() * n * spec.in_dim);
    for c in clouds {
        let s = c.points.shape();
        if s != [n, spec.in_dim] {
            return Err(Error::shape(
                "encode",
                format!("cloud {:?} vs expected [{}, {}]", s, n, spec.in_dim),
            ));
        }
        data.extend_from_slice(c.points.data());
    }
    let cand: Vec<usize> = clouds.iter().map(|c| candidates(spec, c.valid)).collect();
    let x = g.constant(Tensor::new(vec![clouds.len() * n, spec.in_dim], data)?);
    let mut h = input_transform_blocks(g, params, x, &spec.tnet(), n, &cand)?;
    let mut scales = Vec::with_capacity(spec.enc_widths.len());
    for block in spec.encoder_blocks() {
        // graph rebuilt on the previous block's features
        h = edge_conv_blocks(g, params, h, &block, spec.k, n, &cand)?;
        scales.push(h);
    }
    let cat = g.concat(&scales, 1)?;
    let cat = g.reshape(cat, &[clouds.len(), n, spec.concat_dim()])?;
    let pooled = g.reduce_max(cat, 1)?;
    let w = params.get(g, "enc.fc.w")?;
    let b = params.get(g, "enc.fc.b")?;
    g.linear(pooled, w, b)
}

/// `B × 136` latents to `B·17 × 3` skeleton rows in metres (frame-major).
/// With one latent the result is the `17 × 3` skeleton.
pub fn decode(g: &mut Graph, params: &mut Binder, spec: &ModelSpec, latent: Var) -> Result<Var> {
    let s = g.shape(latent).to_vec();
    if s.len() != 2 || s[1] != spec.latent_dim || s[0] == 0 {
        return Err(Error::shape(
            "decode",
            format!("latent {:?} vs [B, {}]", s, spec.latent_dim),
        ));
    }
    let frames = s[0];
    let p = spec.dec_points;
    let mut h = g.reshape(latent, &[frames * p, spec.latent_dim / p])?;
    let cand = vec![p; frames];
    for block in spec.decoder_blocks() {
        h = edge_conv_blocks(g, params, h, &block, spec.k, p, &cand)?;
    }
    let flat = g.reshape(h, &[frames, spec.dec_flat()])?;
    let w = params.get(g, "dec.fc.w")?;
    let b = params.get(g, "dec.fc.b")?;
    let out = g.linear(flat, w, b)?;
    let out = g.scale(out, POSITION_SCALE);
    g.reshape(out, &[frames * p, 3])
}

/// Skeleton as a `17 × 3` tensor.
pub fn skeleton_tensor(s: &SkeletonFrame) -> Tensor {
    let data = s.joints.iter().flat_map(|j| j.iter().copied()).collect();
    Tensor::new(vec![NUM_JOINTS, 3], data).expect("17 × 3")
}

pub fn tensor_to_skeleton(t: &Tensor) -> Result<SkeletonFrame> {
    if t.shape() != [NUM_JOINTS, 3] {
        return Err(Error::shape("skeleton", format!("{:?}", t.shape())));
    }
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    for (j, row) in joints.iter_mut().enumerate() {
        row.copy_from_slice(&t.data()[j * 3..j * 3 + 3]);
    }
    Ok(SkeletonFrame { joints })
}

/// Reconstruction and its mean squared error against `target`.
pub fn forward_autoencoder(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    cloud: &NormalizedCloud,
    target: &SkeletonFrame,
) -> Result<(Var, Var)> {
    forward_autoencoder_batch(
        g,
        params,
        spec,
        std::slice::from_ref(cloud),
        std::slice::from_ref(target),
    )
}

/// Batched reconstruction (`B·17 × 3`) and the MSE averaged over all
/// frames, joints and coordinates.
pub fn forward_autoencoder_batch(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    clouds: &[NormalizedCloud],
    targets: &[SkeletonFrame],
) -> Result<(Var, Var)> {
    if clouds.len() != targets.len() {
        return Err(Error::shape(
            "forward_autoencoder",
            format!("{} clouds vs {} skeletons", clouds.len(), targets.len()),
        ));
    }
    let z = encode_batch(g, params, spec, clouds)?;
    let rec = decode(g, params, spec, z)?;
    let data = targets
        .iter()
        .flat_map(|t| t.joints.iter().flat_map(|j| j.iter().copied()))
        .collect();
    let t = g.constant(Tensor::new(vec![targets.len() * NUM_JOINTS, 3], data)?);
    let mse = mse_loss(g, rec, t)?;
    Ok((rec, mse))
}

/// Encodes every frame of a recording and stacks the latents as `l × 136`.
pub fn encode_sequence(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    clouds: &[NormalizedCloud],
) -> Result<Var> {
    if clouds.len() != spec.seq_len {
        return Err(Error::shape(
            "encode_sequence",
            format!("{} frames vs {}", clouds.len(), spec.seq_len),
        ));
    }
    encode_batch(g, params, spec, clouds)
}

/// One direction of one recurrent layer over time-major inputs
/// (`T·B × in`). Returns the hidden state for every step in input order.
fn lstm_direction(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    layer: usize,
    dir: &str,
    xs: Var,
    batch: usize,
) -> Result<Vec<Var>> {
    let h_dim = spec.lstm_units;
    let t_len = spec.seq_len;
    let w_ih = params.get(g, &lstm_name(layer, dir, "w_ih"))?;
    let w_hh = params.get(g, &lstm_name(layer, dir, "w_hh"))?;
    let b = params.get(g, &lstm_name(layer, dir, "b"))?;
    // input projections for all steps at once
    let proj = g.linear(xs, w_ih, b)?;
    let mut h = g.constant(Tensor::zeros(&[batch, h_dim]));
    let mut c = g.constant(Tensor::zeros(&[batch, h_dim]));
    let mut out = vec![h; t_len];
    let order: Vec<usize> = if dir == "fw" {
        (0..t_len).collect()
    } else {
        (0..t_len).rev().collect()
    };
    for t in order {
        let xp = g.slice(proj, 0, t * batch, batch)?;
        let hp = g.matmul_t(h, w_hh)?;
        let z = g.add(xp, hp)?;
        let zi = g.slice(z, 1, 0, h_dim)?;
        let zf = g.slice(z, 1, h_dim, h_dim)?;
        let zg = g.slice(z, 1, 2 * h_dim, h_dim)?;
        let zo = g.slice(z, 1, 3 * h_dim, h_dim)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        c = g.add(keep, write)?;
        let tc = g.tanh(c);
        h = g.mul(o, tc)?;
        out[t] = h;
    }
    Ok(out)
}

/// Classifies a batch of latent sequences (each `l × 136`). Returns logits
/// (`B × 5`) and the penultimate embedding (`B × 64`).
pub fn classify_sequence(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    sequences: &[Var],
) -> Result<(Var, Var)> {
    let batch = sequences.len();
    let t_len = spec.seq_len;
    if batch == 0 {
        return Err(Error::shape("classify_sequence", "empty batch"));
    }
    for &s in sequences {
        if g.shape(s) != [t_len, spec.latent_dim] {
            return Err(Error::shape(
                "classify_sequence",
                format!(
                    "sequence {:?} vs [{}, {}]",
                    g.shape(s),
                    t_len,
                    spec.latent_dim
                ),
            ));
        }
    }
    let stacked = g.concat(sequences, 0)?;
    classify_latents(g, params, spec, stacked, batch)
}

/// [`classify_sequence`] on sequences already stacked recording-major as a
/// `B·l × 136` node.
pub fn classify_latents(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    stacked: Var,
    batch: usize,
) -> Result<(Var, Var)> {
    let t_len = spec.seq_len;
    if batch == 0 || g.shape(stacked) != [batch * t_len, spec.latent_dim] {
        return Err(Error::shape(
            "classify_sequence",
            format!(
                "latents {:?} vs {} × [{}, {}]",
                g.shape(stacked),
                batch,
                t_len,
                spec.latent_dim
            ),
        ));
    }
    let time_major: Vec<usize> = (0..t_len)
        .flat_map(|t| (0..batch).map(move |b| b * t_len + t))
        .collect();
    let mut xs = g.gather_rows(stacked, &time_major)?;
    let mut last = (xs, xs);
    for layer in 0..spec.lstm_layers {
        let fw = lstm_direction(g, params, spec, layer, "fw", xs, batch)?;
        let bw = lstm_direction(g, params, spec, layer, "bw", xs, batch)?;
        last = (fw[t_len - 1], bw[0]);
        if layer + 1 < spec.lstm_layers {
            let steps = fw
                .iter()
                .zip(&bw)
                .map(|(&f, &b)| g.concat(&[f, b], 1))
                .collect::<Result<Vec<_>>>()?;
            xs = g.concat(&steps, 0)?;
        }
    }
    let fin = g.concat(&[last.0, last.1], 1)?;
    let w1 = params.get(g, "cls.fc1.w")?;
    let b1 = params.get(g, "cls.fc1.b")?;
    let e = g.linear(fin, w1, b1)?;
    let emb = g.leaky_relu(e, LEAKY_SLOPE);
    let w2 = params.get(g, "cls.fc2.w")?;
    let b2 = params.get(g, "cls.fc2.b")?;
    let logits = g.linear(emb, w2, b2)?;
    Ok((logits, emb))
}

/// Full radar-only path for one recording: `l × 64 × 5` to `1 × 5` logits.
pub fn forward_full(
    g: &mut Graph,
    params: &mut Binder,
    spec: &ModelSpec,
    clouds: &[NormalizedCloud],
) -> Result<Var> {
    let z = encode_sequence(g, params, spec, clouds)?;
    Ok(classify_sequence(g, params, spec, &[z])?.0)
}

/// Index of the largest entry of each row (first on ties).
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let c = t.shape().last().copied().unwrap_or(1).max(1);
    t.data()
        .chunks(c)
        .map(|r| {
            r.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (i, &v)| if v > b.1 { (i, v) } else { b },
                )
                .0
        })
        .collect()
}
