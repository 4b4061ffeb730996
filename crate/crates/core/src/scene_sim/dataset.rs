//! On-disk layout: `<root>/{train,eval}/<id>/{cube.bin, skeleton.jsonl,
//! meta.json}` plus `<root>/manifest.json`. `cube.bin` is little-endian f32
//! in `[frame][rx][chirp][sample]` order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::{simulate_raw_frame, Noise};
use super::skeleton::trajectory_to_skeleton;
use super::trajectory::{finite_difference, synth_gesture};
use super::{
    add3, scale3, GestureClass, Handedness, MountPose, PairedRecording, RadarConfig, RawRadarCube,
    Scatterer, SkeletonFrame, SEQ_LEN,
};
use crate::error::{Error, Result};
use crate::io::{parse_json, parse_jsonl, write_bytes, write_json, write_jsonl};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

/// Training and evaluation rooms differ in radar placement and the number of
/// static reflectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub train_mount: MountPose,
    pub eval_mount: MountPose,
    pub eval_clutter: usize,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            train_mount: MountPose::default(),
            eval_mount: MountPose {
                theta_tilt: 5f64.to_radians(),
                x_r: 0.0,
                y_r: 0.0,
                h: 1.4,
            },
            eval_clutter: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub train_per_class: usize,
    pub eval_per_class: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub joint_noise: f64,
    pub room: RoomSpec,
    pub radar: RadarConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            train_per_class: 200,
            eval_per_class: 50,
            seed: 0,
            snr_db: 20.0,
            joint_noise: 0.005,
            room: RoomSpec::default(),
            radar: RadarConfig::default(),
        }
    }
}

impl DatasetSpec {
    pub fn count(&self, split: Split) -> usize {
        5 * match split {
            Split::Train => self.train_per_class,
            Split::Eval => self.eval_per_class,
        }
    }

    pub fn mount(&self, split: Split) -> MountPose {
        match split {
            Split::Train => self.room.train_mount,
            Split::Eval => self.room.eval_mount,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_per_class == 0 || self.eval_per_class == 0 {
            return Err(Error::Config(format!(
                "per-class counts must be ≥ 1 (train {}, eval {})",
                self.train_per_class, self.eval_per_class
            )));
        }
        if self.train_per_class.max(self.eval_per_class) * 5 >= 1 << 23 {
            return Err(Error::Config("per-class count too large".into()));
        }
        self.radar.validate()?;
        self.room.train_mount.validate()?;
        self.room.eval_mount.validate()
    }
}

/// Per-recording seed. Splits occupy disjoint halves of a 2^24-wide block
/// owned by the dataset seed.
pub fn recording_seed(dataset_seed: u64, split: Split, index: usize) -> u64 {
    let half = match split {
        Split::Train => 0,
        Split::Eval => 1u64 << 23,
    };
    (dataset_seed << 24).wrapping_add(half + index as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub id: String,
    pub split: Split,
    pub label_code: usize,
    pub label_name: String,
    pub seed: u64,
    pub handedness: Handedness,
    pub range_m: f64,
    pub snr_db: f64,
    /// Frames whose hand target was outside the arm's reach.
    pub clamped_frames: usize,
    pub radar: RadarConfig,
    pub mount: MountPose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub split: Split,
    pub path: String,
    pub label_code: usize,
    pub label_name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub recordings: Vec<ManifestRecord>,
}

fn recording_id(split: Split, index: usize) -> String {
    format!("{}-{index:05}", split.name())
}

/// Class of recording `index` cycles through the five codes, so every split
/// is exactly balanced.
pub fn generate_recording(
    spec: &DatasetSpec,
    split: Split,
    index: usize,
) -> Result<PairedRecording> {
    let cfg = &spec.radar;
    let mount = spec.mount(split);
    let seed = recording_seed(spec.seed, split, index);
    let label = GestureClass::ALL[index % 5];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range_m: f64 = rng.random_range(1.0..=2.0);
    let gesture = synth_gesture(label, rng.random(), range_m, cfg.frame_rate)?;
    let mut joint_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let clutter: Vec<Scatterer> = match split {
        Split::Train => Vec::new(),
        Split::Eval => (0..spec.room.eval_clutter)
            .map(|_| {
                Scatterer::fixed(
                    [
                        rng.random_range(-1.5..1.5),
                        rng.random_range(0.8..3.0),
                        rng.random_range(0.3..2.0),
                    ],
                    1.0,
                )
            })
            .collect(),
    };

    let poses: Vec<_> = gesture
        .states
        .iter()
        .map(|s| {
            trajectory_to_skeleton(
                s.position,
                gesture.handedness,
                gesture.anchor,
                spec.joint_noise,
                &mut joint_rng,
            )
        })
        .collect();
    let wrists: Vec<[f64; 3]> = poses.iter().map(|p| p.wrist).collect();
    let elbows: Vec<[f64; 3]> = poses.iter().map(|p| p.elbow).collect();
    let forearms: Vec<[f64; 3]> = poses
        .iter()
        .map(|p| scale3(add3(p.wrist, p.elbow), 0.5))
        .collect();
    let torso = Scatterer::fixed(add3(gesture.anchor, [0.0, 0.0, 0.1]), 3.0);

    let mut cubes = Vec::with_capacity(SEQ_LEN);
    for i in 0..SEQ_LEN {
        let moving = |pts: &[[f64; 3]], rcs: f64| Scatterer {
            position: pts[i],
            velocity: finite_difference(pts, i, cfg.frame_rate),
            rcs,
        };
        let mut scene = vec![
            moving(&wrists, 1.0),
            moving(&forearms, 0.5),
            moving(&elbows, 0.3),
            torso,
        ];
        scene.extend_from_slice(&clutter);
        cubes.push(simulate_raw_frame(
            cfg,
            &scene,
            &mount,
            i,
            Noise::Awgn {
                snr_db: spec.snr_db,
                rng: &mut noise_rng,
            },
        )?);
    }

    let meta = RecordingMeta {
        id: recording_id(split, index),
        split,
        label_code: label.code(),
        label_name: label.name().to_string(),
        seed,
        handedness: gesture.handedness,
        range_m,
        snr_db: spec.snr_db,
        clamped_frames: poses.iter().filter(|p| p.clamped).count(),
        radar: cfg.clone(),
        mount,
    };
    Ok(PairedRecording {
        label,
        cubes,
        skeletons: poses.into_iter().map(|p| p.skeleton).collect(),
        seed,
        meta,
    })
}

fn write_recording(dir: &Path, rec: &PairedRecording) -> Result<()> {
    let mut bin = Vec::with_capacity(rec.cubes.len() * rec.cubes[0].samples.len() * 4);
    for c in &rec.cubes {
        for &v in &c.samples {
            bin.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_bytes(&dir.join("cube.bin"), &bin)?;
    write_jsonl(&dir.join("skeleton.jsonl"), &rec.skeletons)?;
    write_json(&dir.join("meta.json"), &rec.meta)
}

/// Writes every recording of both splits under `root`. Recordings are
/// generated in parallel from their own seeds, so output bytes do not depend
/// on scheduling.
pub fn generate_dataset(root: &Path, spec: &DatasetSpec) -> Result<DatasetManifest> {
    spec.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let jobs: Vec<(Split, usize)> = [Split::Train, Split::Eval]
        .into_iter()
        .flat_map(|s| (0..spec.count(s)).map(move |i| (s, i)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(split, index)| {
            let rec = generate_recording(spec, split, index)?;
            let rel = format!("{}/{}", split.name(), rec.meta.id);
            write_recording(&root.join(&rel), &rec)?;
            Ok(ManifestRecord {
                id: rec.meta.id.clone(),
                split,
                path: rel,
                label_code: rec.label.code(),
                label_name: rec.label.name().to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        spec: spec.clone(),
        recordings: records,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset_manifest(root: &Path) -> Result<DatasetManifest> {
    parse_json(&root.join("manifest.json"))
}

/// Reads one recording directory back; samples round-trip through f32.
pub fn load_recording(dir: &Path) -> Result<PairedRecording> {
    let meta: RecordingMeta = parse_json(&dir.join("meta.json"))?;
    let skeletons: Vec<SkeletonFrame> = parse_jsonl(&dir.join("skeleton.jsonl"))?;
    let path: PathBuf = dir.join("cube.bin");
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let cfg = &meta.radar;
    let per_frame = cfg.n_rx * cfg.pn * cfg.nts;
    let frames = skeletons.len();
    if bytes.len() != frames * per_frame * 4 {
        return Err(Error::Parse {
            path,
            offset: bytes.len().min(frames * per_frame * 4) as u64,
            msg: format!(
                "expected {} bytes for {frames} frames, found {}",
                frames * per_frame * 4,
                bytes.len()
            ),
        });
    }
    let cubes = bytes
        .chunks_exact(per_frame * 4)
        .enumerate()
        .map(|(i, chunk)| {
            let samples = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            RawRadarCube::new(cfg.n_rx, cfg.pn, cfg.nts, i, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairedRecording {
        label: GestureClass::from_code(meta.label_code)?,
        cubes,
        skeletons,
        seed: meta.seed,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_of_splits_are_disjoint() {
        let train: Vec<u64> = (0..1000)
            .map(|i| recording_seed(7, Split::Train, i))
            .collect();
        let eval: Vec<u64> = (0..1000)
            .map(|i| recording_seed(7, Split::Eval, i))
            .collect();
        assert!(train.iter().all(|s| !eval.contains(s)));
    }

    #[test]
    fn zero_counts_rejected() {
        let spec = DatasetSpec {
            eval_per_class: 0,
            ..DatasetSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
