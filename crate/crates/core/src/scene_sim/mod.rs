//! Synthetic paired recordings: raw FMCW cubes from point scatterers and
//! 17-joint skeletons driven by the same hand trajectory.

mod config;
mod dataset;
mod simulate;
mod skeleton;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{make_default_config, MountPose, RadarConfig, SPEED_OF_LIGHT};
pub use dataset::{
    generate_dataset, generate_recording, load_recording, read_dataset_manifest, recording_seed,
    DatasetManifest, DatasetSpec, ManifestRecord, RecordingMeta, RoomSpec, Split,
};
pub use simulate::{simulate_raw_frame, Noise};
pub use skeleton::{
    trajectory_to_skeleton, ArmPose, FOREARM, JOINT_NAMES, NUM_JOINTS, SHOULDER_OFFSET, UPPER_ARM,
};
pub use trajectory::{signed_area_xz, synth_gesture, synth_gesture_trajectory, Gesture, HandState};

/// Frames per recording.
pub const SEQ_LEN: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureClass {
    Swipe,
    Push,
    Pull,
    Clockwise,
    Anticlockwise,
}

impl GestureClass {
    pub const ALL: [GestureClass; 5] = [
        GestureClass::Swipe,
        GestureClass::Push,
        GestureClass::Pull,
        GestureClass::Clockwise,
        GestureClass::Anticlockwise,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::Range(format!("gesture code {code} outside 0..5")))
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::Swipe => "swipe",
            GestureClass::Push => "push",
            GestureClass::Pull => "pull",
            GestureClass::Clockwise => "clockwise",
            GestureClass::Anticlockwise => "anticlockwise",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

impl Handedness {
    /// Ground x sign of the active side for a person facing the radar (−y).
    pub fn side(self) -> f64 {
        match self {
            Handedness::Left => 1.0,
            Handedness::Right => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub rcs: f64,
}

impl Scatterer {
    pub fn fixed(position: [f64; 3], rcs: f64) -> Self {
        Self {
            position,
            velocity: [0.0; 3],
            rcs,
        }
    }
}

/// Real ADC samples of one frame, row-major `[rx][chirp][sample]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRadarCube {
    pub n_rx: usize,
    pub pn: usize,
    pub nts: usize,
    pub frame_index: usize,
    pub samples: Vec<f64>,
}

impl RawRadarCube {
    pub fn zeros(cfg: &RadarConfig, frame_index: usize) -> Self {
        Self {
            n_rx: cfg.n_rx,
            pn: cfg.pn,
            nts: cfg.nts,
            frame_index,
            samples: vec![0.0; cfg.n_rx * cfg.pn * cfg.nts],
        }
    }

    pub fn new(
        n_rx: usize,
        pn: usize,
        nts: usize,
        frame_index: usize,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if samples.len() != n_rx * pn * nts {
            return Err(Error::shape(
                "RawRadarCube",
                format!("{} samples for [{n_rx}, {pn}, {nts}]", samples.len()),
            ));
        }
        Ok(Self {
            n_rx,
            pn,
            nts,
            frame_index,
            samples,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_rx, self.pn, self.nts]
    }

    pub fn at(&self, rx: usize, chirp: usize, sample: usize) -> f64 {
        self.samples[(rx * self.pn + chirp) * self.nts + sample]
    }

    /// One chirp's samples.
    pub fn chirp(&self, rx: usize, chirp: usize) -> &[f64] {
        let s = (rx * self.pn + chirp) * self.nts;
        &self.samples[s..s + self.nts]
    }

    pub fn matches(&self, cfg: &RadarConfig) -> bool {
        self.shape() == [cfg.n_rx, cfg.pn, cfg.nts]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkeletonFrame {
    pub joints: [[f64; 3]; NUM_JOINTS],
}

impl SkeletonFrame {
    pub fn joint(&self, i: usize) -> [f64; 3] {
        self.joints[i]
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().flatten().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct PairedRecording {
    pub label: GestureClass,
    pub cubes: Vec<RawRadarCube>,
    pub skeletons: Vec<SkeletonFrame>,
    pub seed: u64,
    pub meta: RecordingMeta,
}

pub(crate) fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
