//! Pinhole cameras, epipolar matching and DLT triangulation for turning
//! multi-view 2D keypoints into 3D skeleton joints.

use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{parse_json, parse_jsonl, write_jsonl};
use crate::scene_sim::NUM_JOINTS;

/// World-to-camera `x_c = R·p + t`, then `K·x_c` dehomogenised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraJson", into = "CameraJson")]
pub struct CameraModel {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Row-major file form used by `rig.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CameraJson {
    intrinsics: [f64; 9],
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TryFrom<CameraJson> for CameraModel {
    type Error = Error;
    fn try_from(c: CameraJson) -> Result<Self> {
        CameraModel::new(
            Matrix3::from_row_slice(&c.intrinsics),
            Matrix3::from_row_slice(&c.rotation),
            Vector3::from(c.translation),
        )
    }
}

impl From<CameraModel> for CameraJson {
    fn from(c: CameraModel) -> Self {
        let row_major = |m: &Matrix3<f64>| {
            let mut out = [0.0; 9];
            for r in 0..3 {
                for k in 0..3 {
                    out[r * 3 + k] = m[(r, k)];
                }
            }
            out
        };
        CameraJson {
            intrinsics: row_major(&c.intrinsics),
            rotation: row_major(&c.rotation),
            translation: c.translation.into(),
        }
    }
}

impl CameraModel {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let k = &intrinsics;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::Config(format!(
                "intrinsics not upper-triangular with K22 = 1: {k}"
            )));
        }
        if k[(0, 0)] == 0.0 || k[(1, 1)] == 0.0 {
            return Err(Error::Config("intrinsics have a zero focal length".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if ortho > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "rotation is not a proper rotation: {rotation}"
            )));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
        })
    }

    pub fn intrinsics(focal: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0)
    }

    /// Camera at `eye` looking at `target`; image x to the right, y down.
    pub fn look_at(
        intrinsics: Matrix3<f64>,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("eye coincides with target".into()))?;
        let x = z
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("viewing direction parallel to up".into()))?;
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self::new(intrinsics, r, -(r * eye))
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.intrinsics * rt
    }
}

pub fn project(cam: &CameraModel, p: [f64; 3]) -> Result<[f64; 2]> {
    let xc = cam.rotation * Vector3::from(p) + cam.translation;
    if xc.z <= 1e-9 {
        return Err(Error::Range(format!("point {p:?} has depth {} ≤ 0", xc.z)));
    }
    let h = cam.intrinsics * xc;
    Ok([h.x / h.z, h.y / h.z])
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `F` with `x_Bᵀ·F·x_A = 0` for homogeneous pixels, unit Frobenius norm.
pub fn fundamental_from_calib(a: &CameraModel, b: &CameraModel) -> Result<Matrix3<f64>> {
    let baseline = (a.center() - b.center()).norm();
    let scale = a.center().norm().max(b.center().norm()).max(1.0);
    if baseline <= 1e-12 * scale {
        return Err(Error::Degenerate("camera centres coincide".into()));
    }
    let r = b.rotation * a.rotation.transpose();
    let t = b.translation - r * a.translation;
    let ka_inv = a
        .intrinsics
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular intrinsics".into()))?;
    let kb_inv = b
        .intrinsics
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular intrinsics".into()))?;
    let f = kb_inv.transpose() * skew(&t) * r * ka_inv;
    Ok(f / f.norm())
}

fn homog(x: [f64; 2]) -> Vector3<f64> {
    Vector3::new(x[0], x[1], 1.0)
}

fn point_line_distance(x: &Vector3<f64>, l: &Vector3<f64>) -> f64 {
    let n = (l.x * l.x + l.y * l.y).sqrt();
    if n == 0.0 {
        return 0.0;
    }
    x.dot(l).abs() / n
}

/// Mean of the distance from `x_B` to `F·x_A` and from `x_A` to `Fᵀ·x_B`.
pub fn epipolar_distance(f: &Matrix3<f64>, xa: [f64; 2], xb: [f64; 2]) -> f64 {
    let (a, b) = (homog(xa), homog(xb));
    let d_b = point_line_distance(&b, &(f * a));
    let d_a = point_line_distance(&a, &(f.transpose() * b));
    0.5 * (d_a + d_b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Keypoint2D {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

impl From<[f64; 3]> for Keypoint2D {
    fn from(a: [f64; 3]) -> Self {
        Self {
            u: a[0],
            v: a[1],
            confidence: a[2],
        }
    }
}

impl From<Keypoint2D> for [f64; 3] {
    fn from(k: Keypoint2D) -> Self {
        [k.u, k.v, k.confidence]
    }
}

/// 17 keypoints of one person in one view; index is the joint id.
pub type Pose2D = Vec<Keypoint2D>;

/// Indices of one person across views; `members[0]` is the reference view.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonMatch {
    pub members: Vec<Option<usize>>,
    /// Matching cost per view, zero for the reference view.
    pub costs: Vec<f64>,
}

/// Mean symmetric epipolar distance over joints confidently seen in both.
pub fn pose_cost(f: &Matrix3<f64>, a: &Pose2D, b: &Pose2D) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for (ka, kb) in a.iter().zip(b) {
        if ka.confidence > 0.0 && kb.confidence > 0.0 {
            sum += epipolar_distance(f, [ka.u, ka.v], [kb.u, kb.v]);
            n += 1;
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Each person of view 0 is matched to at most one person of every other
/// view by greedy minimum cost; `f_from_ref[v]` maps view 0 to view `v`.
/// Pairs costlier than `threshold_px` stay unmatched.
pub fn match_across_views(
    views: &[Vec<Pose2D>],
    f_from_ref: &[Matrix3<f64>],
    threshold_px: f64,
) -> Result<Vec<PersonMatch>> {
    if views.len() < 2 {
        return Err(Error::Config(format!(
            "{} views; matching needs at least 2",
            views.len()
        )));
    }
    if f_from_ref.len() != views.len() {
        return Err(Error::Config(format!(
            "{} fundamental matrices for {} views",
            f_from_ref.len(),
            views.len()
        )));
    }
    let n_ref = views[0].len();
    let mut out: Vec<PersonMatch> = (0..n_ref)
        .map(|i| {
            let mut members = vec![None; views.len()];
            members[0] = Some(i);
            PersonMatch {
                members,
                costs: vec![0.0; views.len()],
            }
        })
        .collect();
    for v in 1..views.len() {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, a) in views[0].iter().enumerate() {
            for (j, b) in views[v].iter().enumerate() {
                let c = pose_cost(&f_from_ref[v], a, b);
                if c <= threshold_px {
                    pairs.push((c, i, j));
                }
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        let mut used = vec![false; views[v].len()];
        for (c, i, j) in pairs {
            if out[i].members[v].is_none() && !used[j] {
                out[i].members[v] = Some(j);
                out[i].costs[v] = c;
                used[j] = true;
            }
        }
    }
    Ok(out)
}

/// Linear DLT in normalised image coordinates: the right singular vector of
/// the smallest singular value of the stacked `u·p₃ − p₁`, `v·p₃ − p₂` rows.
/// World coordinates are centred on the mean camera centre first, which makes
/// the result equivariant under rigid motions of the whole rig.
/// Rejected when σ_max/σ₃ exceeds 1e12 (rank below 3 means no unique point).
pub fn triangulate(observations: &[(&CameraModel, [f64; 2])]) -> Result<[f64; 3]> {
    if observations.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} observations; triangulation needs at least 2",
            observations.len()
        )));
    }
    let centroid = observations
        .iter()
        .map(|(c, _)| c.center())
        .sum::<Vector3<f64>>()
        / observations.len() as f64;
    let mut a = DMatrix::<f64>::zeros(2 * observations.len(), 4);
    for (i, (cam, uv)) in observations.iter().enumerate() {
        let k_inv = cam
            .intrinsics
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular intrinsics".into()))?;
        let x = k_inv * homog(*uv);
        let (u, v) = (x.x / x.z, x.y / x.z);
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&cam.rotation);
        p.set_column(3, &(cam.translation + cam.rotation * centroid));
        for c in 0..4 {
            a[(2 * i, c)] = u * p[(2, c)] - p[(0, c)];
            a[(2 * i + 1, c)] = v * p[(2, c)] - p[(1, c)];
        }
    }
    let svd = a.svd(false, true);
    let s = &svd.singular_values;
    let (s_max, s3) = (s[0], s[2]);
    if !(s3 > 0.0) || s_max / s3 > 1e12 {
        return Err(Error::Degenerate(format!(
            "ill-conditioned triangulation (σ_max/σ₃ = {:e})",
            s_max / s3
        )));
    }
    let vt = svd.v_t.expect("requested V");
    let h = vt.row(3);
    if h[3].abs() < 1e-15 * h.norm() {
        return Err(Error::Degenerate("point at infinity".into()));
    }
    Ok([
        h[0] / h[3] + centroid.x,
        h[1] / h[3] + centroid.y,
        h[2] / h[3] + centroid.z,
    ])
}

pub fn read_rig(path: &Path) -> Result<Vec<CameraModel>> {
    let rig: Vec<CameraModel> = parse_json(path)?;
    if rig.len() < 2 {
        return Err(Error::Config(format!(
            "{}: rig has {} cameras",
            path.display(),
            rig.len()
        )));
    }
    Ok(rig)
}

/// One line per frame: views → persons → 17 `[u, v, confidence]`.
pub fn read_keypoints(path: &Path) -> Result<Vec<Vec<Vec<Pose2D>>>> {
    let frames: Vec<Vec<Vec<Pose2D>>> = parse_jsonl(path)?;
    for (i, f) in frames.iter().enumerate() {
        if let Some(bad) = f.iter().flatten().find(|p| p.len() != NUM_JOINTS) {
            return Err(Error::Dataset(format!(
                "{}: frame {i} has a pose with {} joints",
                path.display(),
                bad.len()
            )));
        }
        if let Some(k) = f
            .iter()
            .flatten()
            .flatten()
            .find(|k| !(0.0..=1.0).contains(&k.confidence))
        {
            return Err(Error::Dataset(format!(
                "{}: frame {i} has confidence {} outside [0, 1]",
                path.display(),
                k.confidence
            )));
        }
    }
    Ok(frames)
}

/// Matches every reference-view person and triangulates each joint from the
/// views where it was seen with positive confidence. Persons seen in fewer
/// than two views are dropped.
pub fn triangulate_frame(
    rig: &[CameraModel],
    views: &[Vec<Pose2D>],
    threshold_px: f64,
) -> Result<Vec<[[f64; 3]; NUM_JOINTS]>> {
    if views.len() != rig.len() {
        return Err(Error::Config(format!(
            "{} views for {} cameras",
            views.len(),
            rig.len()
        )));
    }
    let mut fs = vec![Matrix3::identity()];
    for cam in &rig[1..] {
        fs.push(fundamental_from_calib(&rig[0], cam)?);
    }
    let mut persons = Vec::new();
    for m in match_across_views(views, &fs, threshold_px)? {
        if m.members.iter().flatten().count() < 2 {
            continue;
        }
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (j, out) in joints.iter_mut().enumerate() {
            let obs: Vec<(&CameraModel, [f64; 2])> = m
                .members
                .iter()
                .enumerate()
                .filter_map(|(v, p)| p.map(|p| (v, &views[v][p][j])))
                .filter(|(_, k)| k.confidence > 0.0)
                .map(|(v, k)| (&rig[v], [k.u, k.v]))
                .collect();
            *out = triangulate(&obs).map_err(|e| Error::Degenerate(format!("joint {j}: {e}")))?;
        }
        persons.push(joints);
    }
    Ok(persons)
}

pub fn write_skeletons(path: &Path, frames: &[Vec<[[f64; 3]; NUM_JOINTS]>]) -> Result<()> {
    write_jsonl(path, frames)
}

/// `n` cameras on a horizontal circle of `radius` around `target`, at
/// `height`, all looking at `target`, with a shared 1000 px focal length.
pub fn ring_rig(n: usize, radius: f64, height: f64, target: [f64; 3]) -> Result<Vec<CameraModel>> {
    let k = CameraModel::intrinsics(1000.0, 960.0, 540.0);
    (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let eye = Vector3::new(
                target[0] + radius * a.cos(),
                target[1] + radius * a.sin(),
                height,
            );
            CameraModel::look_at(k, eye, Vector3::from(target), Vector3::z())
        })
        .collect()
}
