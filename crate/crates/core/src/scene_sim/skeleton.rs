use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{add3, cross3, dot3, norm3, scale3, sub3, Handedness, SkeletonFrame};

pub const NUM_JOINTS: usize = 17;
pub const UPPER_ARM: f64 = 0.30;
pub const FOREARM: f64 = 0.27;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Left shoulder relative to the anchor; x flips sign for the right side.
pub const SHOULDER_OFFSET: [f64; 3] = [0.18, 0.0, 0.35];

/// Rest pose relative to the anchor, ground axes, person facing −y so that the
/// person's left is +x.
const REST: [[f64; 3]; NUM_JOINTS] = [
    [0.0, -0.10, 0.55],
    [0.035, -0.08, 0.58],
    [-0.035, -0.08, 0.58],
    [0.075, -0.01, 0.56],
    [-0.075, -0.01, 0.56],
    SHOULDER_OFFSET,
    [-0.18, 0.0, 0.35],
    [0.20, 0.0, 0.05],
    [-0.20, 0.0, 0.05],
    [0.21, -0.03, -0.22],
    [-0.21, -0.03, -0.22],
    [0.10, 0.0, -0.12],
    [-0.10, 0.0, -0.12],
    [0.10, -0.02, -0.57],
    [-0.10, -0.02, -0.57],
    [0.10, 0.0, -1.02],
    [-0.10, 0.0, -1.02],
];

/// Skeleton plus the noise-free active-arm chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmPose {
    pub skeleton: SkeletonFrame,
    pub shoulder: [f64; 3],
    pub elbow: [f64; 3],
    pub wrist: [f64; 3],
    /// The hand lay outside the arm's reachable shell and was clamped onto it.
    pub clamped: bool,
}

fn arm_joints(h: Handedness) -> (usize, usize, usize) {
    match h {
        Handedness::Left => (5, 7, 9),
        Handedness::Right => (6, 8, 10),
    }
}

fn unit(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = norm3(v);
    (n > 1e-12).then(|| scale3(v, 1.0 / n))
}

/// Places the active wrist on `hand` and solves the elbow by two-segment IK
/// with the elbow pulled down and outward. Every other joint is its rest
/// offset from `anchor` plus isotropic Gaussian noise of `noise_sigma` metres.
pub fn trajectory_to_skeleton<R: Rng>(
    hand: [f64; 3],
    handedness: Handedness,
    anchor: [f64; 3],
    noise_sigma: f64,
    rng: &mut R,
) -> ArmPose {
    let side = handedness.side();
    let (si, ei, wi) = arm_joints(handedness);
    let shoulder = add3(anchor, REST[si]);
    let pole = [side * 0.5, 0.2, -1.0];

    let to_hand = sub3(hand, shoulder);
    let d = norm3(to_hand);
    let reach = UPPER_ARM + FOREARM;
    let min_reach = (UPPER_ARM - FOREARM).abs();
    let axis = unit(to_hand).unwrap_or_else(|| unit(pole).expect("nonzero pole"));

    let (wrist, elbow, clamped) = if d > reach {
        (
            add3(shoulder, scale3(axis, reach)),
            add3(shoulder, scale3(axis, UPPER_ARM)),
            true,
        )
    } else if d < min_reach {
        (hand, add3(shoulder, scale3(axis, UPPER_ARM)), true)
    } else {
        let a = (d * d + UPPER_ARM * UPPER_ARM - FOREARM * FOREARM) / (2.0 * d);
        let h = (UPPER_ARM * UPPER_ARM - a * a).max(0.0).sqrt();
        let perp = unit(sub3(pole, scale3(axis, dot3(pole, axis))))
            .or_else(|| unit(cross3(axis, [1.0, 0.0, 0.0])))
            .or_else(|| unit(cross3(axis, [0.0, 1.0, 0.0])))
            .expect("some axis is not parallel");
        let elbow = add3(shoulder, add3(scale3(axis, a), scale3(perp, h)));
        (hand, elbow, false)
    };

    let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("sigma > 0"));
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    for (j, out) in joints.iter_mut().enumerate() {
        *out = if j == si {
            shoulder
        } else if j == ei {
            elbow
        } else if j == wi {
            wrist
        } else {
            let mut p = add3(anchor, REST[j]);
            if let Some(n) = &noise {
                for v in p.iter_mut() {
                    *v += n.sample(rng);
                }
            }
            p
        };
    }
    ArmPose {
        skeleton: SkeletonFrame { joints },
        shoulder,
        elbow,
        wrist,
        clamped,
    }
}
