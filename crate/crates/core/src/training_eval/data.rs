//! Preprocessed dataset layout: `<root>/manifest.json` plus
//! `<root>/{train,eval}/<id>/{pointcloud.jsonl, meta.json}`. Only training
//! recordings carry `skeleton.jsonl`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{parse_json, parse_jsonl, read_text, write_bytes, write_json};
use crate::model::{normalize_cloud, NormalizedCloud};
use crate::radar_dsp::{read_pointclouds, write_pointclouds, PipelineOptions, Preprocessor};
use crate::scene_sim::{
    load_recording, read_dataset_manifest, DatasetSpec, PairedRecording, RecordingMeta,
    SkeletonFrame, Split,
};

/// One recording as the networks see it.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub id: String,
    pub label: usize,
    pub clouds: Vec<NormalizedCloud>,
    /// Camera-derived targets; absent for radar-only data.
    pub skeletons: Option<Vec<SkeletonFrame>>,
}

impl Recording {
    /// Runs the radar chain over a simulated recording.
    pub fn from_paired(
        rec: &PairedRecording,
        pre: &Preprocessor,
        with_skeletons: bool,
    ) -> Result<Self> {
        let clouds = pre.sequence(&rec.cubes)?;
        Ok(Self {
            id: rec.meta.id.clone(),
            label: rec.label.code(),
            clouds: clouds.iter().map(normalize_cloud).collect(),
            skeletons: with_skeletons.then(|| rec.skeletons.clone()),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub recordings: Vec<Recording>,
}

impl Dataset {
    pub fn new(recordings: Vec<Recording>) -> Self {
        Self { recordings }
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.recordings.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut c = vec![0; classes];
        for r in &self.recordings {
            if r.label < classes {
                c[r.label] += 1;
            }
        }
        c
    }

    /// Same recordings with skeletons dropped.
    pub fn radar_only(&self) -> Self {
        Self::new(
            self.recordings
                .iter()
                .map(|r| Recording {
                    skeletons: None,
                    ..r.clone()
                })
                .collect(),
        )
    }

    /// Simulates and preprocesses `spec`'s recordings of one split in memory.
    /// Skeletons are kept only when `with_skeletons` is set.
    pub fn simulate(
        spec: &DatasetSpec,
        split: Split,
        opts: PipelineOptions,
        with_skeletons: bool,
    ) -> Result<Self> {
        spec.validate()?;
        let pre = Preprocessor::new(&spec.radar, &spec.mount(split), opts)?;
        let recordings = (0..spec.count(split))
            .into_par_iter()
            .map(|i| {
                let rec = crate::scene_sim::generate_recording(spec, split, i)?;
                Recording::from_paired(&rec, &pre, with_skeletons)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(recordings))
    }
}

/// Which files of a recording directory a load may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    RadarOnly,
    Paired,
}

/// Shared list of every file path a [`DatasetReader`] opened.
#[derive(Clone, Debug, Default)]
pub struct AccessLog(Arc<Mutex<Vec<PathBuf>>>);

impl AccessLog {
    pub fn paths(&self) -> Vec<PathBuf> {
        let mut v = self.0.lock().expect("log lock").clone();
        v.sort();
        v
    }

    fn push(&self, p: &Path) {
        self.0.lock().expect("log lock").push(p.to_path_buf());
    }
}

/// Loads preprocessed splits; optionally records each file it reads.
#[derive(Clone, Debug, Default)]
pub struct DatasetReader {
    log: Option<AccessLog>,
}

impl DatasetReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn audited(log: AccessLog) -> Self {
        Self { log: Some(log) }
    }

    fn touch(&self, p: &Path) {
        if let Some(l) = &self.log {
            l.push(p);
        }
    }

    /// Every recording directory under `split_dir`, in name order. `Paired`
    /// requires `skeleton.jsonl` in each; `RadarOnly` never opens it.
    pub fn load_split(&self, split_dir: &Path, modality: Modality) -> Result<Dataset> {
        let mut dirs = Vec::new();
        let entries = fs::read_dir(split_dir).map_err(|e| Error::io(split_dir, e))?;
        for e in entries {
            let e = e.map_err(|e| Error::io(split_dir, e))?;
            if e.path().is_dir() {
                dirs.push(e.path());
            }
        }
        dirs.sort();
        if dirs.is_empty() {
            return Err(Error::Dataset(format!(
                "{}: no recording directories",
                split_dir.display()
            )));
        }
        let recordings = dirs
            .par_iter()
            .map(|d| self.load_recording(d, modality))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(recordings))
    }

    fn load_recording(&self, dir: &Path, modality: Modality) -> Result<Recording> {
        let meta_path = dir.join("meta.json");
        self.touch(&meta_path);
        let meta: RecordingMeta = parse_json(&meta_path)?;
        let cloud_path = dir.join("pointcloud.jsonl");
        self.touch(&cloud_path);
        let clouds = read_pointclouds(&cloud_path)?;
        let skeletons = match modality {
            Modality::RadarOnly => None,
            Modality::Paired => {
                let p = dir.join("skeleton.jsonl");
                if !p.is_file() {
                    return Err(Error::Dataset(format!(
                        "{}: skeleton.jsonl missing; cross-learning needs camera skeletons",
                        dir.display()
                    )));
                }
                self.touch(&p);
                let s: Vec<SkeletonFrame> = parse_jsonl(&p)?;
                if s.len() != clouds.len() {
                    return Err(Error::Dataset(format!(
                        "{}: {} skeletons for {} clouds",
                        dir.display(),
                        s.len(),
                        clouds.len()
                    )));
                }
                Some(s)
            }
        };
        Ok(Recording {
            id: meta.id,
            label: meta.label_code,
            clouds: clouds.iter().map(normalize_cloud).collect(),
            skeletons,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessedManifest {
    pub source: DatasetSpec,
    pub options: PipelineOptions,
    pub recordings: Vec<crate::scene_sim::ManifestRecord>,
}

/// Runs the radar chain over every recording of a simulated dataset.
/// Skeletons are copied for the training split only, so nothing downstream
/// can see evaluation-time camera data.
pub fn preprocess_dataset(
    input: &Path,
    output: &Path,
    opts: PipelineOptions,
) -> Result<ProcessedManifest> {
    let manifest = read_dataset_manifest(input)?;
    manifest
        .recordings
        .par_iter()
        .map(|r| {
            let src = input.join(&r.path);
            let rec = load_recording(&src)?;
            let pre = Preprocessor::new(&rec.meta.radar, &rec.meta.mount, opts)?;
            let clouds = pre.sequence(&rec.cubes)?;
            let dst = output.join(&r.path);
            write_pointclouds(&dst.join("pointcloud.jsonl"), &clouds)?;
            write_bytes(
                &dst.join("meta.json"),
                read_text(&src.join("meta.json"))?.as_bytes(),
            )?;
            if r.split == Split::Train {
                let sk = read_text(&src.join("skeleton.jsonl"))?;
                write_bytes(&dst.join("skeleton.jsonl"), sk.as_bytes())?;
            }
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    let out = ProcessedManifest {
        source: manifest.spec,
        options: opts,
        recordings: manifest.recordings,
    };
    write_json(&output.join("manifest.json"), &out)?;
    Ok(out)
}
