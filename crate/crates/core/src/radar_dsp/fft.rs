use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_sim::RawRadarCube;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    /// Symmetric coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann if n == 1 => vec![1.0],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

/// Complex maps `[rx][range][doppler]`; range keeps the positive half and
/// Doppler is shifted so that bin `pn/2` is zero velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeDopplerMaps {
    pub n_rx: usize,
    pub n_range: usize,
    pub n_doppler: usize,
    pub data: Vec<Complex64>,
}

impl RangeDopplerMaps {
    pub fn at(&self, rx: usize, range: usize, doppler: usize) -> Complex64 {
        self.data[(rx * self.n_range + range) * self.n_doppler + doppler]
    }

    /// Antenna snapshot at one cell.
    pub fn snapshot(&self, range: usize, doppler: usize) -> Vec<Complex64> {
        (0..self.n_rx).map(|k| self.at(k, range, doppler)).collect()
    }

    /// Power summed non-coherently over antennas.
    pub fn intensity(&self) -> IntensityMap {
        let cells = self.n_range * self.n_doppler;
        let mut data = vec![0.0; cells];
        for k in 0..self.n_rx {
            for (o, z) in data.iter_mut().zip(&self.data[k * cells..(k + 1) * cells]) {
                *o += z.norm_sqr();
            }
        }
        IntensityMap {
            n_range: self.n_range,
            n_doppler: self.n_doppler,
            data,
        }
    }
}

/// Non-negative `[range][doppler]` map.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityMap {
    pub n_range: usize,
    pub n_doppler: usize,
    pub data: Vec<f64>,
}

impl IntensityMap {
    pub fn new(n_range: usize, n_doppler: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_range * n_doppler {
            return Err(Error::shape(
                "IntensityMap",
                format!("{} values for [{n_range}, {n_doppler}]", data.len()),
            ));
        }
        Ok(Self {
            n_range,
            n_doppler,
            data,
        })
    }

    pub fn at(&self, range: usize, doppler: usize) -> f64 {
        self.data[range * self.n_doppler + doppler]
    }

    /// First maximum in row-major order.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in self.data.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 / self.n_doppler, best.0 % self.n_doppler, best.1)
    }
}

pub fn mti_filter(curr: &RawRadarCube, prev: &RawRadarCube) -> Result<RawRadarCube> {
    if curr.shape() != prev.shape() {
        return Err(Error::shape(
            "mti_filter",
            format!("{:?} vs {:?}", curr.shape(), prev.shape()),
        ));
    }
    let samples = curr
        .samples
        .iter()
        .zip(&prev.samples)
        .map(|(a, b)| a - b)
        .collect();
    RawRadarCube::new(curr.n_rx, curr.pn, curr.nts, curr.frame_index, samples)
}

pub fn range_doppler_fft(cube: &RawRadarCube) -> Result<RangeDopplerMaps> {
    range_doppler_fft_with(cube, Window::Hann)
}

/// Windowed FFT along samples, then along chirps, with the same window family
/// on both axes and no further scaling.
pub fn range_doppler_fft_with(cube: &RawRadarCube, window: Window) -> Result<RangeDopplerMaps> {
    let [n_rx, pn, nts] = cube.shape();
    for (what, n) in [("nts", nts), ("pn", pn)] {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Config(format!("{what} = {n} is not a power of two")));
        }
    }
    if cube.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("cube contains non-finite samples".into()));
    }
    let n_range = nts / 2;
    let w_fast = window.coefficients(nts);
    let w_slow = window.coefficients(pn);
    let mut planner = FftPlanner::<f64>::new();
    let fft_fast = planner.plan_fft_forward(nts);
    let fft_slow = planner.plan_fft_forward(pn);

    let mut data = vec![Complex64::new(0.0, 0.0); n_rx * n_range * pn];
    let mut row = vec![Complex64::new(0.0, 0.0); nts];
    let mut col = vec![Complex64::new(0.0, 0.0); pn];
    for k in 0..n_rx {
        // ranges × chirps before the slow-time transform
        let mut fast = vec![Complex64::new(0.0, 0.0); n_range * pn];
        for p in 0..pn {
            for (t, (r, &x)) in row.iter_mut().zip(cube.chirp(k, p)).enumerate() {
                *r = Complex64::new(x * w_fast[t], 0.0);
            }
            fft_fast.process(&mut row);
            for r in 0..n_range {
                fast[r * pn + p] = row[r];
            }
        }
        for r in 0..n_range {
            for (p, c) in col.iter_mut().enumerate() {
                *c = fast[r * pn + p] * w_slow[p];
            }
            fft_slow.process(&mut col);
            let base = (k * n_range + r) * pn;
            for (d, c) in col.iter().enumerate() {
                data[base + (d + pn / 2) % pn] = *c;
            }
        }
    }
    Ok(RangeDopplerMaps {
        n_rx,
        n_range,
        n_doppler: pn,
        data,
    })
}
