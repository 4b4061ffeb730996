use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;
use radar_gesture::multiview_geom::*;
use radar_gesture::scene_sim::{trajectory_to_skeleton, Handedness};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_rig(rng: &mut ChaCha8Rng, n: usize) -> Vec<CameraModel> {
    (0..n)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r: f64 = rng.random_range(3.0..5.0);
            let eye = Vector3::new(r * a.cos(), r * a.sin(), rng.random_range(0.5..2.5));
            let target = Vector3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.8..1.2),
            );
            let k = CameraModel::intrinsics(rng.random_range(600.0..1400.0), 960.0, 540.0);
            CameraModel::look_at(k, eye, target, Vector3::z()).unwrap()
        })
        .collect()
}

fn random_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(0.5..1.5),
    ]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Epipolar line of `xb` in image A without using F: the line through the
/// projections into A of two points on B's back-projected ray.
fn line_in_a(a: &CameraModel, b: &CameraModel, xb: [f64; 2]) -> Vector3<f64> {
    let ray = b.rotation.transpose()
        * (b.intrinsics.try_inverse().unwrap() * Vector3::new(xb[0], xb[1], 1.0));
    let c = b.center();
    let p1 = c + ray * 2.0;
    let p2 = c + ray * 6.0;
    let u1 = project(a, p1.into()).unwrap();
    let u2 = project(a, p2.into()).unwrap();
    Vector3::new(u1[0], u1[1], 1.0).cross(&Vector3::new(u2[0], u2[1], 1.0))
}

fn line_dist(x: [f64; 2], l: &Vector3<f64>) -> f64 {
    (l.x * x[0] + l.y * x[1] + l.z).abs() / (l.x * l.x + l.y * l.y).sqrt()
}

#[test]
fn project_triangulate_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.random_range(2..6);
        let rig = random_rig(&mut rng, n);
        let p = random_point(&mut rng);
        let obs: Vec<_> = rig.iter().map(|c| (c, project(c, p).unwrap())).collect();
        let q = triangulate(&obs).unwrap();
        assert!(dist(p, q) < 1e-9, "{}", dist(p, q));
    }
}

#[test]
fn fundamental_constraint_rank_and_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let rig = random_rig(&mut rng, 2);
        let f = fundamental_from_calib(&rig[0], &rig[1]).unwrap();
        for _ in 0..50 {
            let p = random_point(&mut rng);
            let a = project(&rig[0], p).unwrap();
            let b = project(&rig[1], p).unwrap();
            let (xa, xb) = (Vector3::new(a[0], a[1], 1.0), Vector3::new(b[0], b[1], 1.0));
            let r = (xb.transpose() * f * xa)[0] / (xa.norm() * xb.norm());
            assert!(r.abs() < 1e-9, "{r}");
            assert!(epipolar_distance(&f, a, b) < 1e-9);
        }
        let s = f.svd(false, false).singular_values;
        assert!(s[2] / s[0] < 1e-10);
        let g = fundamental_from_calib(&rig[1], &rig[0]).unwrap();
        let same = (g - f.transpose()).norm().min((g + f.transpose()).norm());
        assert!(same < 1e-9);
    }
}

#[test]
fn coincident_centres_rejected() {
    let k = CameraModel::intrinsics(900.0, 960.0, 540.0);
    let a = CameraModel::look_at(
        k,
        Vector3::new(3.0, 0.0, 1.0),
        Vector3::zeros(),
        Vector3::z(),
    )
    .unwrap();
    let b = CameraModel::look_at(
        k,
        Vector3::new(3.0, 0.0, 1.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::z(),
    )
    .unwrap();
    assert!(fundamental_from_calib(&a, &b).is_err());
}

/// Moving x_B 5 px along its epipolar line normal puts it exactly 5 px from
/// that line; the A-side term is whatever the new back-projected ray gives.
#[test]
fn perpendicular_displacement_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let rig = random_rig(&mut rng, 2);
        let f = fundamental_from_calib(&rig[0], &rig[1]).unwrap();
        let p = random_point(&mut rng);
        let a = project(&rig[0], p).unwrap();
        let b = project(&rig[1], p).unwrap();
        let l = f * Vector3::new(a[0], a[1], 1.0);
        let n = Vector3::new(l.x, l.y, 0.0).normalize();
        let b5 = [b[0] + 5.0 * n.x, b[1] + 5.0 * n.y];
        let d_b = line_dist(b5, &l);
        assert!((d_b - 5.0).abs() < 1e-9);
        let d_a = line_dist(a, &line_in_a(&rig[0], &rig[1], b5));
        let d = epipolar_distance(&f, a, b5);
        assert!(
            (d - 0.5 * (5.0 + d_a)).abs() < 1e-6,
            "{d} vs {}",
            0.5 * (5.0 + d_a)
        );
        assert!(d_a > 0.0);
    }
}

proptest! {
    #[test]
    fn epipolar_distance_is_nonnegative(seed in any::<u64>(), u in -2e3f64..2e3, v in -2e3f64..2e3, s in -2e3f64..2e3, t in -2e3f64..2e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rig = random_rig(&mut rng, 2);
        let f = fundamental_from_calib(&rig[0], &rig[1]).unwrap();
        prop_assert!(epipolar_distance(&f, [u, v], [s, t]) >= 0.0);
    }

    #[test]
    fn triangulation_is_rigidly_equivariant(seed in any::<u64>(), ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0, sx in -2.0f64..2.0, sy in -2.0f64..2.0, sz in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rig = random_rig(&mut rng, 3);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let p = random_point(&mut rng);
        let uv: Vec<[f64; 2]> = rig.iter().map(|c| {
            let x = project(c, p).unwrap();
            [x[0] + noise.sample(&mut rng), x[1] + noise.sample(&mut rng)]
        }).collect();
        let q = Rotation3::from_euler_angles(ax, ay, az).into_inner();
        let s = Vector3::new(sx, sy, sz);
        let moved: Vec<CameraModel> = rig.iter().map(|c| {
            let r = c.rotation * q.transpose();
            CameraModel::new(c.intrinsics, r, c.translation - r * s).unwrap()
        }).collect();
        let x0 = triangulate(&rig.iter().zip(&uv).map(|(c, u)| (c, *u)).collect::<Vec<_>>()).unwrap();
        let x1 = triangulate(&moved.iter().zip(&uv).map(|(c, u)| (c, *u)).collect::<Vec<_>>()).unwrap();
        let want = q * Vector3::from(x0) + s;
        prop_assert!((want - Vector3::from(x1)).norm() < 1e-9, "{}", (want - Vector3::from(x1)).norm());
    }
}

#[test]
fn monte_carlo_noise_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = CameraModel::intrinsics(1000.0, 960.0, 540.0);
    let target = Vector3::new(0.0, 3.0, 1.5);
    let rig: Vec<CameraModel> = [-0.5, -1.0 / 6.0, 1.0 / 6.0, 0.5]
        .iter()
        .map(|&x| CameraModel::look_at(k, Vector3::new(x, 0.0, 1.5), target, Vector3::z()).unwrap())
        .collect();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut sq = 0.0;
    for _ in 0..1000 {
        let p = [
            rng.random_range(-0.3..0.3),
            3.0 + rng.random_range(-0.3..0.3),
            1.5 + rng.random_range(-0.3..0.3),
        ];
        let obs: Vec<_> = rig
            .iter()
            .map(|c| {
                let x = project(c, p).unwrap();
                (
                    c,
                    [x[0] + noise.sample(&mut rng), x[1] + noise.sample(&mut rng)],
                )
            })
            .collect();
        sq += dist(p, triangulate(&obs).unwrap()).powi(2);
    }
    let rms = (sq / 1000.0).sqrt();
    assert!(rms < 0.02, "rms {rms}");
}

#[test]
fn identical_observations_are_degenerate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rig = random_rig(&mut rng, 1);
    let x = project(&rig[0], [0.1, 0.0, 1.0]).unwrap();
    let err = triangulate(&[(&rig[0], x), (&rig[0], x)]).unwrap_err();
    assert_eq!(err.kind(), "degenerate");
    assert!(triangulate(&[(&rig[0], x)]).is_err());
}

fn person(x_offset: f64, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor = [x_offset, 0.0, 1.1];
    let hand = [x_offset - 0.2, -0.35, 1.3];
    trajectory_to_skeleton(hand, Handedness::Right, anchor, 0.005, &mut rng)
        .skeleton
        .joints
        .to_vec()
}

fn observe(
    cam: &CameraModel,
    joints: &[[f64; 3]],
    noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>,
) -> Pose2D {
    let mut noise = noise;
    joints
        .iter()
        .map(|&p| {
            let mut x = project(cam, p).unwrap();
            if let Some((n, rng)) = noise.as_mut() {
                x[0] += n.sample(*rng);
                x[1] += n.sample(*rng);
            }
            Keypoint2D {
                u: x[0],
                v: x[1],
                confidence: 1.0,
            }
        })
        .collect()
}

fn fs(rig: &[CameraModel]) -> Vec<Matrix3<f64>> {
    std::iter::once(Matrix3::identity())
        .chain(
            rig[1..]
                .iter()
                .map(|c| fundamental_from_calib(&rig[0], c).unwrap()),
        )
        .collect()
}

#[test]
fn single_person_noiseless_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rig = random_rig(&mut rng, 2);
    let p = person(0.0, 1);
    let views: Vec<Vec<Pose2D>> = rig.iter().map(|c| vec![observe(c, &p, None)]).collect();
    let m = match_across_views(&views, &fs(&rig), 10.0).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].members, vec![Some(0), Some(0)]);
    assert!(m[0].costs[1] < 1e-6);
}

#[test]
fn two_people_never_swap_over_100_rigs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut swaps = 0;
    for trial in 0..100 {
        let rig = random_rig(&mut rng, 3);
        let people = [person(-0.5, trial), person(0.5, trial + 1000)];
        let views: Vec<Vec<Pose2D>> = rig
            .iter()
            .enumerate()
            .map(|(v, c)| {
                // later views list the people in reverse order
                let mut ps: Vec<Pose2D> = people.iter().map(|p| observe(c, p, None)).collect();
                if v % 2 == 1 {
                    ps.reverse();
                }
                ps
            })
            .collect();
        let m = match_across_views(&views, &fs(&rig), 20.0).unwrap();
        for (i, pm) in m.iter().enumerate() {
            for v in 1..3 {
                let want = if v % 2 == 1 { 1 - i } else { i };
                if pm.members[v] != Some(want) {
                    swaps += 1;
                }
            }
        }
        // a wrong pairing costs at least a pixel
        let f = fundamental_from_calib(&rig[0], &rig[1]).unwrap();
        assert!(pose_cost(&f, &views[0][0], &views[1][0]) >= 1.0);
    }
    assert_eq!(swaps, 0);
}

#[test]
fn zero_threshold_matches_nothing_on_noisy_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rig = random_rig(&mut rng, 3);
    let n = Normal::new(0.0, 0.5).unwrap();
    let p = person(0.0, 2);
    let views: Vec<Vec<Pose2D>> = rig
        .iter()
        .map(|c| vec![observe(c, &p, Some((&n, &mut rng)))])
        .collect();
    let m = match_across_views(&views, &fs(&rig), 0.0).unwrap();
    assert!(m
        .iter()
        .all(|pm| pm.members[1..].iter().all(|x| x.is_none())));
    assert!(match_across_views(&views[..1], &fs(&rig)[..1], 1.0).is_err());
}

#[test]
fn frame_triangulation_recovers_both_people() {
    let rig = ring_rig(4, 3.5, 1.6, [0.0, 0.0, 1.0]).unwrap();
    let people = [person(-0.5, 1), person(0.5, 2)];
    let views: Vec<Vec<Pose2D>> = rig
        .iter()
        .map(|c| people.iter().map(|p| observe(c, p, None)).collect())
        .collect();
    let out = triangulate_frame(&rig, &views, 5.0).unwrap();
    assert_eq!(out.len(), 2);
    for (got, want) in out.iter().zip(&people) {
        for (g, w) in got.iter().zip(want) {
            assert!(dist(*g, *w) < 1e-9);
        }
    }
}
