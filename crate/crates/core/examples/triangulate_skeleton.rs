//! Projects a synthetic 17-joint skeleton into a four-camera ring, matches
//! the person across views with epipolar distances and triangulates it back.
//!
//! cargo run --example triangulate_skeleton

use radar_gesture::multiview_geom::{project, ring_rig, triangulate_frame, Keypoint2D, Pose2D};
use radar_gesture::scene_sim::{trajectory_to_skeleton, Handedness, JOINT_NAMES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> radar_gesture::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = trajectory_to_skeleton(
        [-0.2, -0.35, 1.3],
        Handedness::Right,
        [0.0, 0.0, 1.1],
        0.0,
        &mut rng,
    )
    .skeleton;
    let rig = ring_rig(4, 3.0, 1.5, [0.0, 0.0, 1.0])?;
    let noise = Normal::new(0.0, 1.0).unwrap();

    let views: Vec<Vec<Pose2D>> = rig
        .iter()
        .map(|cam| {
            let pose = truth
                .joints
                .iter()
                .map(|&p| {
                    let [u, v] = project(cam, p).unwrap();
                    Keypoint2D {
                        u: u + noise.sample(&mut rng),
                        v: v + noise.sample(&mut rng),
                        confidence: 1.0,
                    }
                })
                .collect();
            vec![pose]
        })
        .collect();

    let people = triangulate_frame(&rig, &views, 20.0)?;
    println!(
        "{} person recovered from {} views with 1 px noise",
        people.len(),
        rig.len()
    );
    let mut sq = 0.0;
    for (j, (est, gt)) in people[0].iter().zip(&truth.joints).enumerate() {
        let e =
            ((est[0] - gt[0]).powi(2) + (est[1] - gt[1]).powi(2) + (est[2] - gt[2]).powi(2)).sqrt();
        sq += e * e;
        println!("  {:<16} {:.2} mm", JOINT_NAMES[j], e * 1e3);
    }
    println!("rms {:.2} mm", (sq / 17.0).sqrt() * 1e3);
    Ok(())
}
