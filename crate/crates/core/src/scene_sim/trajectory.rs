use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::skeleton::SHOULDER_OFFSET;
use super::{add3, GestureClass, Handedness, SEQ_LEN};
use crate::error::{Error, Result};

/// Horizontal distance from the torso anchor forward to the gesture plane.
const REACH_DEPTH: f64 = 0.31;
const JITTER: f64 = 1e-3;
const DEFAULT_FRAME_RATE: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

/// One performance: who, where and how the hand moved.
#[derive(Clone, Debug, PartialEq)]
pub struct Gesture {
    pub class: GestureClass,
    pub handedness: Handedness,
    pub range_m: f64,
    /// Mid-torso reference; the person faces the radar along −y.
    pub anchor: [f64; 3],
    pub states: Vec<HandState>,
}

/// Hand path at the default 20 frames/s.
pub fn synth_gesture_trajectory(
    class: GestureClass,
    seed: u64,
    range_m: f64,
) -> Result<Vec<HandState>> {
    Ok(synth_gesture(class, seed, range_m, DEFAULT_FRAME_RATE)?.states)
}

/// The radar sits at ground x = y = 0; `range_m` is the ground-plane depth of
/// the gesture centre. Every random draw is independent of `class`, so a push
/// and a pull with the same seed are exact time reversals of each other.
/// Circle orientation is as seen by the performer.
pub fn synth_gesture(
    class: GestureClass,
    seed: u64,
    range_m: f64,
    frame_rate: f64,
) -> Result<Gesture> {
    if !(1.0..=2.0).contains(&range_m) {
        return Err(Error::Range(format!(
            "gesture range {range_m} m outside [1, 2] m"
        )));
    }
    if !(frame_rate > 0.0) {
        return Err(Error::Config(format!("frame rate {frame_rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let handedness = if rng.random_bool(0.5) {
        Handedness::Right
    } else {
        Handedness::Left
    };
    let side = handedness.side();
    let x_p: f64 = rng.random_range(-0.2..0.2);
    let anchor_z: f64 = 1.10 + rng.random_range(-0.03..0.03);
    let scale: f64 = rng.random_range(0.9..1.1);
    // progress(u) = w·u + (1 − w)(1 − cos πu)/2 has slope ≥ w everywhere
    let w: f64 = rng.random_range(0.5..0.7);
    let phase0: f64 = rng.random_range(-0.5..0.5);
    let jitter: Vec<[f64; 3]> = (0..SEQ_LEN)
        .map(|_| {
            [
                rng.random_range(-JITTER..JITTER),
                rng.random_range(-JITTER..JITTER),
                rng.random_range(-JITTER..JITTER),
            ]
        })
        .collect();

    let anchor = [x_p, range_m + REACH_DEPTH, anchor_z];
    let shoulder = add3(
        anchor,
        [
            side * SHOULDER_OFFSET[0],
            SHOULDER_OFFSET[1],
            SHOULDER_OFFSET[2],
        ],
    );
    let c = [shoulder[0] - side * 0.10, range_m, anchor_z + 0.22];

    let mut positions: Vec<[f64; 3]> = (0..SEQ_LEN)
        .map(|i| {
            let u = i as f64 / (SEQ_LEN - 1) as f64;
            let p = w * u + (1.0 - w) * (1.0 - (PI * u).cos()) / 2.0;
            let base = match class {
                GestureClass::Swipe => [
                    c[0] + side * 0.3 * scale * (1.0 - 2.0 * p),
                    c[1] - 0.04 * (PI * p).sin(),
                    c[2],
                ],
                GestureClass::Push | GestureClass::Pull => {
                    [c[0], c[1] + 0.2 * scale * (1.0 - 2.0 * p), c[2]]
                }
                GestureClass::Clockwise | GestureClass::Anticlockwise => {
                    let dir = if class == GestureClass::Clockwise {
                        1.0
                    } else {
                        -1.0
                    };
                    let phi = PI / 2.0 + phase0 + dir * 2.0 * PI * p;
                    let r = 0.25 * scale;
                    [c[0] + r * phi.cos(), c[1], c[2] + r * phi.sin()]
                }
            };
            add3(base, jitter[i])
        })
        .collect();
    if class == GestureClass::Pull {
        positions.reverse();
    }

    let states = positions
        .iter()
        .enumerate()
        .map(|(i, &position)| HandState {
            position,
            velocity: finite_difference(&positions, i, frame_rate),
        })
        .collect();
    Ok(Gesture {
        class,
        handedness,
        range_m,
        anchor,
        states,
    })
}

/// Central differences inside, one-sided at the ends, scaled to per-second.
pub(crate) fn finite_difference(p: &[[f64; 3]], i: usize, frame_rate: f64) -> [f64; 3] {
    let n = p.len();
    if n < 2 {
        return [0.0; 3];
    }
    let (a, b, span) = if i == 0 {
        (0, 1, 1.0)
    } else if i == n - 1 {
        (n - 2, n - 1, 1.0)
    } else {
        (i - 1, i + 1, 2.0)
    };
    let k = frame_rate / span;
    [
        (p[b][0] - p[a][0]) * k,
        (p[b][1] - p[a][1]) * k,
        (p[b][2] - p[a][2]) * k,
    ]
}

/// Shoelace area of the path projected onto the radar's (x, z) view plane.
pub fn signed_area_xz(states: &[HandState]) -> f64 {
    let n = states.len();
    (0..n)
        .map(|i| {
            let a = states[i].position;
            let b = states[(i + 1) % n].position;
            a[0] * b[2] - b[0] * a[2]
        })
        .sum::<f64>()
        / 2.0
}
