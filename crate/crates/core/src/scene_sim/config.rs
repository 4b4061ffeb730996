use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FMCW operating parameters. Antenna offsets are in metres in the radar frame
/// (x right, y boresight, z up); the default array spaces elements λ/2 apart
/// at the centre frequency.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RadarConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub frame_rate: f64,
    pub nts: usize,
    pub fs: f64,
    pub tc: f64,
    pub pn: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub prt: f64,
    pub rx_positions: Vec<[f64; 3]>,
}

/// BGT60TR13C operating point: 57.5–58.5 GHz ramp, 64 samples at 2 MHz per
/// 64 µs chirp, 128 back-to-back chirps per frame at 20 frames/s, 1 Tx / 3 Rx
/// in an L-shaped λ/2 array.
pub fn make_default_config() -> RadarConfig {
    let f_min = 57.5e9;
    let f_max = 58.5e9;
    let half_lambda = SPEED_OF_LIGHT / ((f_min + f_max) / 2.0) / 2.0;
    RadarConfig {
        f_min,
        f_max,
        frame_rate: 20.0,
        nts: 64,
        fs: 2e6,
        tc: 64e-6,
        pn: 128,
        n_tx: 1,
        n_rx: 3,
        prt: 64e-6,
        rx_positions: vec![
            [0.0, 0.0, 0.0],
            [half_lambda, 0.0, 0.0],
            [0.0, 0.0, half_lambda],
        ],
    }
}

impl Default for RadarConfig {
    fn default() -> Self {
        make_default_config()
    }
}

impl RadarConfig {
    pub fn bandwidth(&self) -> f64 {
        self.f_max - self.f_min
    }

    pub fn center_frequency(&self) -> f64 {
        (self.f_min + self.f_max) / 2.0
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency()
    }

    /// Ramp slope in Hz/s.
    pub fn slope(&self) -> f64 {
        self.bandwidth() / self.tc
    }

    /// Bandwidth swept while the ADC is sampling (first nts/fs seconds of the ramp).
    pub fn sampled_bandwidth(&self) -> f64 {
        self.slope() * self.nts as f64 / self.fs
    }

    /// Metres per range bin.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.sampled_bandwidth())
    }

    /// m/s per Doppler bin.
    pub fn velocity_resolution(&self) -> f64 {
        self.wavelength() / (2.0 * self.pn as f64 * self.prt)
    }

    /// Largest unambiguous radial speed.
    pub fn max_velocity(&self) -> f64 {
        self.wavelength() / (4.0 * self.prt)
    }

    pub fn n_range_bins(&self) -> usize {
        self.nts / 2
    }

    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * range * self.slope() / SPEED_OF_LIGHT
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.f_max > self.f_min) {
            return fail(format!(
                "f_max {} must exceed f_min {}",
                self.f_max, self.f_min
            ));
        }
        if self.nts == 0 || self.fs <= 0.0 || self.nts as f64 / self.fs > self.tc * (1.0 + 1e-12) {
            return fail(format!(
                "sampling window {} s exceeds chirp time {} s",
                self.nts as f64 / self.fs,
                self.tc
            ));
        }
        if self.pn < 2 {
            return fail(format!("pn = {} must be at least 2", self.pn));
        }
        if self.prt < self.tc {
            return fail(format!("prt {} shorter than chirp {}", self.prt, self.tc));
        }
        if self.rx_positions.len() != self.n_rx || self.n_rx == 0 {
            return fail(format!(
                "{} rx positions for n_rx = {}",
                self.rx_positions.len(),
                self.n_rx
            ));
        }
        if self.frame_rate <= 0.0 {
            return fail(format!("frame rate {}", self.frame_rate));
        }
        Ok(())
    }
}

/// Radar placement in the ground frame.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct MountPose {
    pub theta_tilt: f64,
    pub x_r: f64,
    pub y_r: f64,
    pub h: f64,
}

impl Default for MountPose {
    fn default() -> Self {
        Self {
            theta_tilt: 0.0,
            x_r: 0.0,
            y_r: 0.0,
            h: 1.0,
        }
    }
}

impl MountPose {
    pub fn validate(&self) -> Result<()> {
        if self.theta_tilt.abs() > std::f64::consts::FRAC_PI_2 + 1e-12 {
            return Err(Error::Config(format!(
                "tilt {} rad outside ±π/2",
                self.theta_tilt
            )));
        }
        Ok(())
    }

    pub fn origin(&self) -> [f64; 3] {
        [self.x_r, self.y_r, self.h]
    }

    /// Rotation part of the radar→ground transform.
    pub fn rotate_to_ground(&self, v: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.theta_tilt.sin_cos();
        [v[0], c * v[1] + s * v[2], -s * v[1] + c * v[2]]
    }

    pub fn rotate_to_radar(&self, v: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.theta_tilt.sin_cos();
        [v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]]
    }

    pub fn radar_to_ground(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotate_to_ground(p);
        [r[0] + self.x_r, r[1] + self.y_r, r[2] + self.h]
    }

    pub fn ground_to_radar(&self, p: [f64; 3]) -> [f64; 3] {
        self.rotate_to_radar([p[0] - self.x_r, p[1] - self.y_r, p[2] - self.h])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_operating_table() {
        let c = make_default_config();
        assert_eq!(c.f_min, 57.5e9);
        assert_eq!(c.f_max, 58.5e9);
        assert_eq!(c.nts, 64);
        assert_eq!(c.pn, 128);
        assert_eq!(c.fs, 2e6);
        assert_eq!(c.tc, 64e-6);
        assert_eq!(c.frame_rate, 20.0);
        assert_eq!(c.n_tx, 1);
        assert_eq!(c.n_rx, 3);
        assert_eq!(c.prt, c.tc);
        assert_eq!(c.bandwidth(), 1.0e9);
        assert!((c.nts as f64 / c.fs - 32e-6).abs() < 1e-18);
        c.validate().unwrap();
    }

    #[test]
    fn derived_resolutions() {
        let c = make_default_config();
        assert!((c.wavelength() - 5.1688e-3).abs() < 1e-6);
        assert!((c.velocity_resolution() - 0.3155).abs() < 1e-4);
        assert!((c.range_resolution() - 0.2998).abs() < 1e-4);
        assert!((c.max_velocity() - 20.19).abs() < 0.01);
        // λ/2 spacing
        let d = c.rx_positions[1][0];
        assert!((d - c.wavelength() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = make_default_config();
        c.fs = 0.5e6;
        assert!(c.validate().is_err());
        let mut c = make_default_config();
        c.pn = 1;
        assert!(c.validate().is_err());
        let mut c = make_default_config();
        c.f_max = c.f_min;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mount_round_trip() {
        let m = MountPose {
            theta_tilt: 0.3,
            x_r: 0.2,
            y_r: -0.1,
            h: 1.4,
        };
        let p = [0.3, 1.7, -0.4];
        let back = m.ground_to_radar(m.radar_to_ground(p));
        for i in 0..3 {
            assert!((back[i] - p[i]).abs() < 1e-14);
        }
    }
}
