use std::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{dot3, norm3, sub3, MountPose, RadarConfig, RawRadarCube, Scatterer};
use crate::error::{Error, Result};

/// Receiver noise. The SNR is per-sample signal power of the first scatterer
/// over the noise variance.
pub enum Noise<'a> {
    None,
    Awgn {
        snr_db: f64,
        rng: &'a mut ChaCha8Rng,
    },
}

/// Dechirped beat signal of point scatterers. Each contributes
/// `A·cos(2π·f_b·t/fs + φ_k + p·Δφ)` on antenna k, chirp p, sample t, with
/// `A = sqrt(rcs)/R²`, `φ_k = 2π·(|s| + |s − rx_k|)/λ` and `Δφ = 4π·v·prt/λ`.
pub fn simulate_raw_frame(
    cfg: &RadarConfig,
    scatterers: &[Scatterer],
    mount: &MountPose,
    frame_index: usize,
    noise: Noise<'_>,
) -> Result<RawRadarCube> {
    cfg.validate()?;
    let mut cube = RawRadarCube::zeros(cfg, frame_index);
    let lambda = cfg.wavelength();
    let mut ref_amp = None;

    for sc in scatterers {
        if sc.rcs < 0.0 || !sc.rcs.is_finite() {
            return Err(Error::Range(format!("scatterer rcs {}", sc.rcs)));
        }
        if sc
            .position
            .iter()
            .chain(&sc.velocity)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Range(format!("non-finite scatterer {sc:?}")));
        }
        let s = mount.ground_to_radar(sc.position);
        let r = norm3(s);
        if r < 1e-9 {
            return Err(Error::Range(format!(
                "scatterer at {:?} coincides with the radar",
                sc.position
            )));
        }
        let amp = sc.rcs.sqrt() / (r * r);
        ref_amp.get_or_insert(amp);
        let v_radial = dot3(mount.rotate_to_radar(sc.velocity), s) / r;
        let omega = 2.0 * PI * cfg.beat_frequency(r) / cfg.fs;
        let step = Complex64::from_polar(1.0, omega);
        let dphi = 4.0 * PI * v_radial * cfg.prt / lambda;

        for (k, rx) in cfg.rx_positions.iter().enumerate() {
            let path = r + norm3(sub3(s, *rx));
            let phi_k = 2.0 * PI * path / lambda;
            for p in 0..cfg.pn {
                let mut z = Complex64::from_polar(amp, phi_k + p as f64 * dphi);
                let base = (k * cfg.pn + p) * cfg.nts;
                for x in &mut cube.samples[base..base + cfg.nts] {
                    *x += z.re;
                    z *= step;
                }
            }
        }
    }

    if let Noise::Awgn { snr_db, rng } = noise {
        let sigma = ref_amp.unwrap_or(0.0) / 2f64.sqrt() * 10f64.powf(-snr_db / 20.0);
        if sigma > 0.0 {
            for x in &mut cube.samples {
                let n: f64 = StandardNormal.sample(rng);
                *x += sigma * n;
            }
        }
    }
    Ok(cube)
}
