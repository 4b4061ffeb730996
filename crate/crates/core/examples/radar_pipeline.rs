//! One hand scatterer in front of the radar, taken through MTI, the
//! range-Doppler FFT, gating, Bartlett DoA and the ground transform.
//!
//! cargo run --example radar_pipeline

use radar_gesture::radar_dsp::{frame_pipeline, range_doppler_fft};
use radar_gesture::scene_sim::{
    make_default_config, simulate_raw_frame, MountPose, Noise, Scatterer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> radar_gesture::Result<()> {
    let cfg = make_default_config();
    let mount = MountPose::default();
    println!(
        "range resolution {:.3} m, velocity resolution {:.3} m/s, mount height {:.2} m",
        cfg.range_resolution(),
        cfg.velocity_resolution(),
        mount.h
    );

    let truth = [0.25, 1.6, 1.2];
    let hand = |t: f64| Scatterer {
        position: [truth[0], truth[1] + 0.8 * t, truth[2]],
        velocity: [0.0, 0.8, 0.0],
        rcs: 1.0,
    };
    let torso = Scatterer::fixed([0.0, 1.9, 1.1], 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dt = 1.0 / cfg.frame_rate;
    let prev = simulate_raw_frame(
        &cfg,
        &[hand(-dt), torso],
        &mount,
        0,
        Noise::Awgn {
            snr_db: 30.0,
            rng: &mut rng,
        },
    )?;
    let curr = simulate_raw_frame(
        &cfg,
        &[hand(0.0), torso],
        &mount,
        1,
        Noise::Awgn {
            snr_db: 30.0,
            rng: &mut rng,
        },
    )?;

    let (r, d, _) = range_doppler_fft(&curr)?.intensity().argmax();
    println!("raw argmax: range bin {r}, doppler bin {d} (the static torso dominates)");

    let cloud = frame_pipeline(&curr, &prev, &cfg, &mount, 25)?;
    println!(
        "{} valid points of {}",
        cloud.valid_count,
        cloud.points.len()
    );
    for p in cloud.points.iter().take(5) {
        println!(
            "  x {:+.3} y {:+.3} z {:+.3}  doppler {:+.2} m/s  intensity {:.3e}",
            p.x, p.y, p.z, p.d, p.intensity
        );
    }
    let top = &cloud.points[0];
    let err =
        ((top.x - truth[0]).powi(2) + (top.y - truth[1]).powi(2) + (top.z - truth[2]).powi(2))
            .sqrt();
    println!("strongest point is {err:.3} m from the hand");
    Ok(())
}
