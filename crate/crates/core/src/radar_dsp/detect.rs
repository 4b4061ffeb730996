use nalgebra::DMatrix;
use num_complex::Complex64;

use super::fft::{IntensityMap, RangeDopplerMaps};

pub const GATE_RANGE: usize = 5;
pub const GATE_DOPPLER: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionBin {
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateMask {
    pub n_range: usize,
    pub n_doppler: usize,
    pub mask: Vec<bool>,
    /// Global argmax the gate is centred on; `None` for an all-zero map.
    pub peak: Option<(usize, usize)>,
}

impl GateMask {
    pub fn is_empty(&self) -> bool {
        self.peak.is_none()
    }

    pub fn contains(&self, range: usize, doppler: usize) -> bool {
        self.mask[range * self.n_doppler + doppler]
    }
}

/// Keeps the ±5 range × ±16 Doppler rectangle around the strongest bin,
/// clipped to the map.
pub fn gate_detections(rdi: &IntensityMap) -> GateMask {
    gate_detections_with(rdi, GATE_RANGE, GATE_DOPPLER)
}

pub fn gate_detections_with(
    rdi: &IntensityMap,
    half_range: usize,
    half_doppler: usize,
) -> GateMask {
    let mut mask = vec![false; rdi.data.len()];
    let (r0, d0, peak) = rdi.argmax();
    if !(peak > 0.0) {
        return GateMask {
            n_range: rdi.n_range,
            n_doppler: rdi.n_doppler,
            mask,
            peak: None,
        };
    }
    for r in r0.saturating_sub(half_range)..=(r0 + half_range).min(rdi.n_range - 1) {
        for d in d0.saturating_sub(half_doppler)..=(d0 + half_doppler).min(rdi.n_doppler - 1) {
            mask[r * rdi.n_doppler + d] = true;
        }
    }
    GateMask {
        n_range: rdi.n_range,
        n_doppler: rdi.n_doppler,
        mask,
        peak: Some((r0, d0)),
    }
}

/// The `k` strongest nonzero gated bins, strongest first, ties by
/// `(range_bin, doppler_bin)`.
pub fn select_top_bins(rdi: &IntensityMap, gate: &GateMask, k: usize) -> Vec<DetectionBin> {
    let mut bins: Vec<DetectionBin> = (0..rdi.n_range)
        .flat_map(|r| (0..rdi.n_doppler).map(move |d| (r, d)))
        .filter(|&(r, d)| gate.contains(r, d) && rdi.at(r, d) > 0.0)
        .map(|(r, d)| DetectionBin {
            range_bin: r,
            doppler_bin: d,
            intensity: rdi.at(r, d),
        })
        .collect();
    let cmp = |a: &DetectionBin, b: &DetectionBin| {
        b.intensity
            .total_cmp(&a.intensity)
            .then((a.range_bin, a.doppler_bin).cmp(&(b.range_bin, b.doppler_bin)))
    };
    if bins.len() > k {
        bins.select_nth_unstable_by(k, cmp);
        bins.truncate(k);
    }
    bins.sort_by(cmp);
    bins
}

/// Mean of `v·vᴴ` over the 5 (range) × 3 (Doppler) cells centred on `bin`,
/// clipped at the map edges. Exactly Hermitian.
pub fn window_covariance(maps: &RangeDopplerMaps, bin: &DetectionBin) -> DMatrix<Complex64> {
    let n = maps.n_rx;
    let mut c = DMatrix::<Complex64>::zeros(n, n);
    let mut cells = 0usize;
    let rs = bin.range_bin.saturating_sub(2)..=(bin.range_bin + 2).min(maps.n_range - 1);
    for r in rs {
        let ds = bin.doppler_bin.saturating_sub(1)..=(bin.doppler_bin + 1).min(maps.n_doppler - 1);
        for d in ds {
            let v = maps.snapshot(r, d);
            for i in 0..n {
                for j in i..n {
                    c[(i, j)] += v[i] * v[j].conj();
                }
            }
            cells += 1;
        }
    }
    let inv = 1.0 / cells as f64;
    for i in 0..n {
        c[(i, i)] = Complex64::new(c[(i, i)].re * inv, 0.0);
        for j in i + 1..n {
            c[(i, j)] *= inv;
            c[(j, i)] = c[(i, j)].conj();
        }
    }
    c
}
