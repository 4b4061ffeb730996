use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_sim::{MountPose, RadarConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleEstimate {
    pub theta_azi: f64,
    pub theta_ele: f64,
    pub spectrum_peak: f64,
}

/// Search grid in degrees: every multiple of `step` inside the bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub azi_max_deg: f64,
    pub ele_max_deg: f64,
    pub step_deg: f64,
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self {
            azi_max_deg: 60.0,
            ele_max_deg: 45.0,
            step_deg: 2.0,
        }
    }
}

impl AngleGrid {
    fn axis(max: f64, step: f64) -> Vec<f64> {
        let n = (max / step + 1e-9).floor() as i64;
        (-n..=n).map(|i| i as f64 * step).collect()
    }

    pub fn azimuths_deg(&self) -> Vec<f64> {
        Self::axis(self.azi_max_deg, self.step_deg)
    }

    pub fn elevations_deg(&self) -> Vec<f64> {
        Self::axis(self.ele_max_deg, self.step_deg)
    }
}

/// Unit vector in the radar frame for azimuth (from boresight toward +x) and
/// elevation (toward +z).
pub fn direction(theta_azi: f64, theta_ele: f64) -> [f64; 3] {
    let (se, ce) = theta_ele.sin_cos();
    let (sa, ca) = theta_azi.sin_cos();
    [ce * sa, ce * ca, se]
}

/// `a_k = exp(−j·2π·u·d_k/λ)`, matching the extra path a plane wave from
/// direction `u` saves on its way to antenna `k`.
pub fn steering_vector(cfg: &RadarConfig, theta_azi: f64, theta_ele: f64) -> Vec<Complex64> {
    let u = direction(theta_azi, theta_ele);
    let lambda = cfg.wavelength();
    cfg.rx_positions
        .iter()
        .map(|d| {
            let proj = u[0] * d[0] + u[1] * d[1] + u[2] * d[2];
            Complex64::from_polar(1.0, -2.0 * PI * proj / lambda)
        })
        .collect()
}

pub fn bartlett_doa(cov: &DMatrix<Complex64>, cfg: &RadarConfig) -> Result<AngleEstimate> {
    BartlettScanner::new(cfg, &AngleGrid::default()).scan(cov)
}

/// Precomputed `conj(a_k)·a_l` for every grid direction and antenna pair
/// `k < l`, so that `aᴴ·C·a = tr C + 2·Re Σ C_kl·conj(a_k)·a_l`.
#[derive(Clone, Debug)]
pub struct BartlettScanner {
    n: usize,
    angles: Vec<(f64, f64)>,
    pairs: Vec<(usize, usize)>,
    weights: Vec<Complex64>,
}

impl BartlettScanner {
    pub fn new(cfg: &RadarConfig, grid: &AngleGrid) -> Self {
        let n = cfg.rx_positions.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|k| (k + 1..n).map(move |l| (k, l)))
            .collect();
        let eles = grid.elevations_deg();
        let mut angles = Vec::new();
        let mut weights = Vec::new();
        for azi in grid.azimuths_deg() {
            for &ele in &eles {
                let (ta, te) = (azi.to_radians(), ele.to_radians());
                let a = steering_vector(cfg, ta, te);
                angles.push((ta, te));
                weights.extend(pairs.iter().map(|&(k, l)| a[k].conj() * a[l]));
            }
        }
        Self {
            n,
            angles,
            pairs,
            weights,
        }
    }

    /// Grid argmax of `aᴴ·C·a`. Strictly greater updates over azimuth-major,
    /// ascending order resolve ties to the smallest `(azimuth, elevation)`.
    pub fn scan(&self, cov: &DMatrix<Complex64>) -> Result<AngleEstimate> {
        let n = self.n;
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::shape(
                "bartlett_doa",
                format!(
                    "{}×{} covariance for {n} antennas",
                    cov.nrows(),
                    cov.ncols()
                ),
            ));
        }
        let scale = cov.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                if (cov[(i, j)] - cov[(j, i)].conj()).norm() > 1e-9 * scale {
                    return Err(Error::Range(format!(
                        "covariance is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        let trace: f64 = (0..n).map(|i| cov[(i, i)].re).sum();
        let c: Vec<Complex64> = self.pairs.iter().map(|&(k, l)| cov[(k, l)]).collect();
        let np = self.pairs.len();
        let mut best = (0usize, f64::NEG_INFINITY);
        for g in 0..self.angles.len() {
            let w = &self.weights[g * np..(g + 1) * np];
            let cross: f64 = c.iter().zip(w).map(|(c, w)| (c * w).re).sum();
            let p = trace + 2.0 * cross;
            if p > best.1 {
                best = (g, p);
            }
        }
        let (theta_azi, theta_ele) = self.angles[best.0];
        Ok(AngleEstimate {
            theta_azi,
            theta_ele,
            spectrum_peak: best.1,
        })
    }
}

/// Ground-frame placement: spherical radar coordinates, the tilt rotation,
/// then the mount offset.
pub fn spherical_to_ground(r: f64, theta_azi: f64, theta_ele: f64, mount: &MountPose) -> [f64; 3] {
    let u = direction(theta_azi, theta_ele);
    mount.radar_to_ground([r * u[0], r * u[1], r * u[2]])
}
