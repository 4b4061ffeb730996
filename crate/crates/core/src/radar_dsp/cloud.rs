use std::path::Path;

use serde::{Deserialize, Serialize};

use super::detect::{gate_detections, select_top_bins, window_covariance};
use super::doa::{spherical_to_ground, AngleGrid, BartlettScanner};
use super::fft::{mti_filter, range_doppler_fft_with, Window};
use crate::error::{Error, Result};
use crate::io::{parse_jsonl, write_jsonl};
use crate::scene_sim::{MountPose, RadarConfig, RawRadarCube};

pub const N_POINTS: usize = 64;
pub const TOP_BINS: usize = 25;

/// `(x, y, z, d, intensity)`; serialized as a 5-element array.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub d: f64,
    pub intensity: f64,
}

impl From<[f64; 5]> for RadarPoint {
    fn from(v: [f64; 5]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            z: v[2],
            d: v[3],
            intensity: v[4],
        }
    }
}

impl From<RadarPoint> for [f64; 5] {
    fn from(p: RadarPoint) -> Self {
        [p.x, p.y, p.z, p.d, p.intensity]
    }
}

impl RadarPoint {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Fixed-size cloud: the first `valid_count` points by descending intensity,
/// then zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarPointCloud {
    pub points: Vec<RadarPoint>,
    pub valid_count: usize,
}

impl RadarPointCloud {
    pub fn empty(n: usize) -> Self {
        Self {
            points: vec![RadarPoint::default(); n],
            valid_count: 0,
        }
    }
}

/// Keeps the `n` most intense points (stable for equal intensities) and
/// zero-pads to exactly `n`.
pub fn assemble_point_cloud(points: &[RadarPoint], n: usize) -> RadarPointCloud {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.intensity.total_cmp(&a.intensity));
    sorted.truncate(n);
    let valid_count = sorted.len();
    sorted.resize(n, RadarPoint::default());
    RadarPointCloud {
        points: sorted,
        valid_count,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub top_bins: usize,
    pub n_points: usize,
    pub window: Window,
    pub grid: AngleGrid,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            top_bins: TOP_BINS,
            n_points: N_POINTS,
            window: Window::Hann,
            grid: AngleGrid::default(),
        }
    }
}

/// Reusable cube→cloud chain with the steering table built once.
#[derive(Clone, Debug)]
pub struct Preprocessor {
    cfg: RadarConfig,
    mount: MountPose,
    opts: PipelineOptions,
    scanner: BartlettScanner,
}

impl Preprocessor {
    pub fn new(cfg: &RadarConfig, mount: &MountPose, opts: PipelineOptions) -> Result<Self> {
        cfg.validate()?;
        mount.validate()?;
        if opts.top_bins == 0 || opts.n_points == 0 {
            return Err(Error::Config(format!(
                "top_bins {} and n_points {} must be ≥ 1",
                opts.top_bins, opts.n_points
            )));
        }
        Ok(Self {
            cfg: cfg.clone(),
            mount: *mount,
            opts,
            scanner: BartlettScanner::new(cfg, &opts.grid),
        })
    }

    /// MTI, range-Doppler FFT, gating, top bins, one Bartlett point per bin,
    /// ground transform. Range bin 0 has no direction and is skipped.
    pub fn frame(&self, curr: &RawRadarCube, prev: &RawRadarCube) -> Result<RadarPointCloud> {
        if !curr.matches(&self.cfg) {
            return Err(Error::shape(
                "frame_pipeline",
                format!(
                    "cube {:?} for config [{}, {}, {}]",
                    curr.shape(),
                    self.cfg.n_rx,
                    self.cfg.pn,
                    self.cfg.nts
                ),
            ));
        }
        let diff = mti_filter(curr, prev)?;
        let maps = range_doppler_fft_with(&diff, self.opts.window)?;
        let rdi = maps.intensity();
        let gate = gate_detections(&rdi);
        if gate.is_empty() {
            return Ok(RadarPointCloud::empty(self.opts.n_points));
        }
        let r_res = self.cfg.range_resolution();
        let v_res = self.cfg.velocity_resolution();
        let zero = (self.cfg.pn / 2) as f64;
        let mut points = Vec::with_capacity(self.opts.top_bins);
        for bin in select_top_bins(&rdi, &gate, self.opts.top_bins) {
            if bin.range_bin == 0 {
                continue;
            }
            let cov = window_covariance(&maps, &bin);
            let est = self.scanner.scan(&cov)?;
            let r = bin.range_bin as f64 * r_res;
            let [x, y, z] = spherical_to_ground(r, est.theta_azi, est.theta_ele, &self.mount);
            points.push(RadarPoint {
                x,
                y,
                z,
                d: (bin.doppler_bin as f64 - zero) * v_res,
                intensity: bin.intensity,
            });
        }
        Ok(assemble_point_cloud(&points, self.opts.n_points))
    }

    /// One cloud per cube. Frame 0 has no predecessor, so it is differenced
    /// against frame 1.
    pub fn sequence(&self, cubes: &[RawRadarCube]) -> Result<Vec<RadarPointCloud>> {
        match cubes.len() {
            0 => Ok(Vec::new()),
            1 => Ok(vec![RadarPointCloud::empty(self.opts.n_points)]),
            _ => (0..cubes.len())
                .map(|i| self.frame(&cubes[i], &cubes[if i == 0 { 1 } else { i - 1 }]))
                .collect(),
        }
    }
}

pub fn frame_pipeline(
    curr: &RawRadarCube,
    prev: &RawRadarCube,
    cfg: &RadarConfig,
    mount: &MountPose,
    k: usize,
) -> Result<RadarPointCloud> {
    let opts = PipelineOptions {
        top_bins: k,
        ..PipelineOptions::default()
    };
    Preprocessor::new(cfg, mount, opts)?.frame(curr, prev)
}

pub fn write_pointclouds(path: &Path, clouds: &[RadarPointCloud]) -> Result<()> {
    write_jsonl(path, clouds)
}

pub fn read_pointclouds(path: &Path) -> Result<Vec<RadarPointCloud>> {
    let clouds: Vec<RadarPointCloud> = parse_jsonl(path)?;
    for c in &clouds {
        if c.valid_count > c.points.len() {
            return Err(Error::Dataset(format!(
                "{}: valid_count {} exceeds {} points",
                path.display(),
                c.valid_count,
                c.points.len()
            )));
        }
    }
    Ok(clouds)
}
