//! Acceptance gate. One `PASS`/`FAIL` line per criterion and a summary line.
//! `ACCEPTANCE=1,3,7` restricts the run to the listed criteria.
//! `ACCEPTANCE_STRICT=1` makes any failed criterion a nonzero exit.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use radar_gesture::gnn::{edge_conv, knn_graph, Binder, EdgeConvSpec};
use radar_gesture::model::{
    classify_sequence, encode_sequence, forward_autoencoder, forward_full, init_params,
    normalize_cloud, ModelSpec, NormalizedCloud,
};
use radar_gesture::multiview_geom::{
    epipolar_distance, fundamental_from_calib, project, triangulate, CameraModel,
};
use radar_gesture::radar_dsp::*;
use radar_gesture::scene_sim::*;
use radar_gesture::tensor::{
    cross_entropy_loss, finite_diff_check, mse_loss, triplet_loss, Graph, ParamStore, Tensor, Var,
};
use radar_gesture::training_eval::{
    evaluate, reconstruction_mse, train_autoencoder, train_classifier, train_unimodal_baseline,
    Dataset, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Collects sub-check outcomes of one criterion.
#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.failed.push(what.clone());
        }
        self.notes.push(what);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- criterion 1

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (PI * i as f64 / (n - 1) as f64).sin().powi(2))
        .collect()
}

/// Brute-force windowed 2D DFT with the zero-Doppler bin centred.
fn dft_oracle(cube: &RawRadarCube) -> Vec<Complex64> {
    let [n_rx, pn, nts] = cube.shape();
    let (wf, ws) = (hann(nts), hann(pn));
    let nr = nts / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); n_rx * nr * pn];
    for k in 0..n_rx {
        let mut fast = vec![Complex64::new(0.0, 0.0); nr * pn];
        for p in 0..pn {
            for r in 0..nr {
                fast[r * pn + p] = (0..nts)
                    .map(|t| {
                        let ph = -2.0 * PI * ((r * t) % nts) as f64 / nts as f64;
                        Complex64::from_polar(1.0, ph) * (cube.at(k, p, t) * wf[t])
                    })
                    .sum();
            }
        }
        for r in 0..nr {
            for d in 0..pn {
                let acc: Complex64 = (0..pn)
                    .map(|p| {
                        let ph = -2.0 * PI * ((d * p) % pn) as f64 / pn as f64;
                        Complex64::from_polar(1.0, ph) * fast[r * pn + p] * ws[p]
                    })
                    .sum();
                out[(k * nr + r) * pn + (d + pn / 2) % pn] = acc;
            }
        }
    }
    out
}

fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn dsp_oracles(c: &mut Checks) {
    let t0 = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = (0..3 * 128 * 64)
            .map(|_| r.random_range(-1.0..1.0))
            .collect();
        let cube = RawRadarCube::new(3, 128, 64, 0, s).unwrap();
        let fast = range_doppler_fft(&cube).unwrap();
        worst = worst.max(rel_l2(&fast.data, &dft_oracle(&cube)));
    }
    c.check(
        worst < 1e-9,
        format!("fft vs dft on 100 cubes 3x128x64: max rel {worst:.2e}"),
    );

    let cfg = make_default_config();
    let mount = MountPose::default();
    let s = Scatterer {
        position: [0.0, 1.5, mount.h],
        velocity: [0.0, 1.0, 0.0],
        rcs: 1.0,
    };
    let cube = simulate_raw_frame(&cfg, &[s], &mount, 0, Noise::None).unwrap();
    let (rb, db, _) = range_doppler_fft(&cube).unwrap().intensity().argmax();
    let offset = db as i64 - cfg.pn as i64 / 2;
    c.check(
        (rb, offset) == (5, 3),
        format!("R=1.5 m v=1 m/s -> range bin {rb}, doppler offset {offset:+}"),
    );

    let still = Scatterer::fixed([0.2, 1.5, 1.1], 1.0);
    let mut nr = rng(102);
    let mut frame = || {
        simulate_raw_frame(
            &cfg,
            &[still],
            &mount,
            0,
            Noise::Awgn {
                snr_db: 20.0,
                rng: &mut nr,
            },
        )
        .unwrap()
    };
    let (a, b) = (frame(), frame());
    let raw = range_doppler_fft(&a).unwrap().intensity();
    let (pr, pd, peak) = raw.argmax();
    let after = range_doppler_fft(&mti_filter(&a, &b).unwrap())
        .unwrap()
        .intensity()
        .at(pr, pd);
    let db = 10.0 * (peak / after).log10();
    c.check(db >= 40.0, format!("mti on static target: {db:.1} dB"));

    let el = t0.elapsed();
    c.check(
        el < Duration::from_secs(60),
        format!("runtime {:.1} s", el.as_secs_f64()),
    );
}

// ---------------------------------------------------------------- criterion 2

fn ground_transform(c: &mut Checks) {
    let mut r = rng(201);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let range = r.random_range(0.01..10.0);
        let m = MountPose {
            theta_tilt: r.random_range(-PI / 2.0..PI / 2.0),
            x_r: r.random_range(-3.0..3.0),
            y_r: r.random_range(-3.0..3.0),
            h: r.random_range(0.0..3.0),
        };
        let p = spherical_to_ground(
            range,
            r.random_range(-1.5..1.5),
            r.random_range(-0.78..0.78),
            &m,
        );
        let n = ((p[0] - m.x_r).powi(2) + (p[1] - m.y_r).powi(2) + (p[2] - m.h).powi(2)).sqrt();
        worst = worst.max((n - range).abs() / range.max(1.0));
    }
    c.check(
        worst < 1e-12,
        format!("isometry over 1e4 draws: max err {worst:.2e}"),
    );

    let origin = |tilt: f64| MountPose {
        theta_tilt: tilt,
        x_r: 0.0,
        y_r: 0.0,
        h: 0.0,
    };
    let cases = [
        (0.0, 0.0, [0.0, 2.0, 0.0]),
        (30f64.to_radians(), 0.0, [1.0, 3f64.sqrt(), 0.0]),
        (0.0, 90f64.to_radians(), [0.0, 0.0, -2.0]),
    ];
    for (azi, tilt, want) in cases {
        let p = spherical_to_ground(2.0, azi, 0.0, &origin(tilt));
        let e = (0..3).map(|i| (p[i] - want[i]).abs()).fold(0.0, f64::max);
        c.check(
            e < 1e-12,
            format!(
                "worked example azi {:.0} tilt {:.0}: err {e:.1e}",
                azi.to_degrees(),
                tilt.to_degrees()
            ),
        );
    }
}

// ---------------------------------------------------------------- criterion 3

fn steering_cov(cfg: &RadarConfig, azi_deg: f64, ele_deg: f64) -> DMatrix<Complex64> {
    let a = steering_vector(cfg, azi_deg.to_radians(), ele_deg.to_radians());
    DMatrix::from_fn(a.len(), a.len(), |i, j| a[i] * a[j].conj())
}

fn bartlett(c: &mut Checks) {
    let cfg = make_default_config();
    let est = bartlett_doa(&steering_cov(&cfg, 20.0, 10.0), &cfg).unwrap();
    let (ea, ee) = (est.theta_azi.to_degrees(), est.theta_ele.to_degrees());
    c.check(
        (ea - 20.0).abs() < 1e-9 && (ee - 10.0).abs() < 1e-9,
        format!("on-grid (20, 10) -> ({ea:.6}, {ee:.6})"),
    );

    let est = bartlett_doa(&steering_cov(&cfg, 21.0, 9.0), &cfg).unwrap();
    let (ea, ee) = (est.theta_azi.to_degrees(), est.theta_ele.to_degrees());
    c.check(
        (ea - 21.0).abs() <= 2.0 && (ee - 9.0).abs() <= 2.0,
        format!("off-grid (21, 9) -> ({ea:.1}, {ee:.1})"),
    );

    // off-grid source through the simulator and FFT
    let mount = MountPose {
        theta_tilt: 0.0,
        x_r: 0.0,
        y_r: 0.0,
        h: 0.0,
    };
    let u = direction(21f64.to_radians(), 9f64.to_radians());
    let s = Scatterer {
        position: [1.8 * u[0], 1.8 * u[1], 1.8 * u[2]],
        velocity: [0.0; 3],
        rcs: 1.0,
    };
    let maps = range_doppler_fft(&simulate_raw_frame(&cfg, &[s], &mount, 0, Noise::None).unwrap())
        .unwrap();
    let (rb, db, i) = maps.intensity().argmax();
    let cov = window_covariance(
        &maps,
        &DetectionBin {
            range_bin: rb,
            doppler_bin: db,
            intensity: i,
        },
    );
    let est = bartlett_doa(&cov, &cfg).unwrap();
    let (ea, ee) = (est.theta_azi.to_degrees(), est.theta_ele.to_degrees());
    c.check(
        (ea - 21.0).abs() <= 2.0 && (ee - 9.0).abs() <= 2.0,
        format!("simulated off-grid (21, 9) -> ({ea:.1}, {ee:.1})"),
    );

    let mut r = rng(301);
    let (mut herm, mut min_eig) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let data = (0..3 * 32 * 128)
            .map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
            .collect();
        let maps = RangeDopplerMaps {
            n_rx: 3,
            n_range: 32,
            n_doppler: 128,
            data,
        };
        let bin = DetectionBin {
            range_bin: r.random_range(0..32),
            doppler_bin: r.random_range(0..128),
            intensity: 1.0,
        };
        let cov = window_covariance(&maps, &bin);
        herm = herm.max((&cov - cov.adjoint()).norm());
        let scale = cov.norm().max(1.0);
        let eig = cov.symmetric_eigenvalues();
        min_eig = min_eig.min(eig.iter().copied().fold(f64::INFINITY, f64::min) / scale);
    }
    c.check(
        herm <= 1e-12,
        format!("covariance Hermitian: max |C - C^H| {herm:.1e}"),
    );
    c.check(
        min_eig >= -1e-12,
        format!("covariance PSD: min eigenvalue / |C| {min_eig:.2e}"),
    );
}

// ---------------------------------------------------------------- criterion 4

fn random_tensor(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

type Op = fn(&mut Graph, &[Var]) -> radar_gesture::Result<Var>;

fn primitive_error(inputs: &[(&str, &[usize])], f: Op) -> f64 {
    let mut r = rng(401);
    let mut store = ParamStore::new();
    for (name, shape) in inputs {
        store.insert(*name, random_tensor(shape, &mut r)).unwrap();
    }
    let names: Vec<&str> = inputs.iter().map(|(n, _)| *n).collect();
    finite_diff_check(&store, 1e-6, 400, 3, |s, g| {
        let vars: Vec<Var> = names
            .iter()
            .map(|n| g.param(s, n))
            .collect::<radar_gesture::Result<_>>()?;
        let out = f(g, &vars)?;
        // distinct adjoint per output element
        let shape = g.shape(out).to_vec();
        let n: usize = shape.iter().product();
        let w = g.constant(Tensor::new(
            shape,
            (0..n).map(|i| 0.3 + (i as f64 * 0.37).sin()).collect(),
        )?);
        let p = g.mul(out, w)?;
        Ok(g.sum(p))
    })
    .unwrap()
    .max_rel_error
}

fn random_cloud(r: &mut ChaCha8Rng, valid: usize) -> RadarPointCloud {
    let mut points = vec![RadarPoint::default(); 64];
    for p in points.iter_mut().take(valid) {
        *p = RadarPoint::from([
            r.random_range(-0.5..0.5),
            r.random_range(1.0..2.0),
            r.random_range(0.5..1.6),
            r.random_range(-2.0..2.0),
            r.random_range(0.0..10.0),
        ]);
    }
    RadarPointCloud {
        points,
        valid_count: valid,
    }
}

fn sequence(seed: u64, valid: usize) -> Vec<NormalizedCloud> {
    let mut r = rng(seed);
    (0..30)
        .map(|_| normalize_cloud(&random_cloud(&mut r, valid)))
        .collect()
}

/// Default parameters spread away from the symmetric initial point.
fn spread_params(seed: u64) -> ParamStore {
    let mut s = init_params(&ModelSpec::default(), seed).unwrap();
    let mut r = rng(seed + 1);
    for (_, p) in s.iter_mut() {
        for v in p.value.data_mut() {
            *v += r.random_range(-0.05..0.05);
        }
    }
    s
}

fn gradients(c: &mut Checks) {
    let t0 = Instant::now();
    let prims: Vec<(&str, Vec<(&str, &[usize])>, Op)> = vec![
        ("matmul", vec![("a", &[3, 4]), ("b", &[4, 5])], |g, v| {
            g.matmul(v[0], v[1])
        }),
        ("matmul_t", vec![("a", &[3, 4]), ("b", &[5, 4])], |g, v| {
            g.matmul_t(v[0], v[1])
        }),
        ("add", vec![("a", &[2, 3]), ("b", &[2, 3])], |g, v| {
            g.add(v[0], v[1])
        }),
        ("sub", vec![("a", &[2, 3]), ("b", &[2, 3])], |g, v| {
            g.sub(v[0], v[1])
        }),
        ("mul", vec![("a", &[2, 3]), ("b", &[2, 3])], |g, v| {
            g.mul(v[0], v[1])
        }),
        ("add_row", vec![("a", &[4, 3]), ("b", &[3])], |g, v| {
            g.add_row(v[0], v[1])
        }),
        ("concat", vec![("a", &[2, 3]), ("b", &[2, 2])], |g, v| {
            g.concat(&[v[0], v[1]], 1)
        }),
        ("reshape", vec![("a", &[2, 6])], |g, v| {
            g.reshape(v[0], &[3, 4])
        }),
        ("slice", vec![("a", &[3, 5, 2])], |g, v| {
            g.slice(v[0], 1, 1, 3)
        }),
        ("reduce_max", vec![("a", &[3, 5, 2])], |g, v| {
            g.reduce_max(v[0], 1)
        }),
        ("reduce_mean", vec![("a", &[3, 5, 2])], |g, v| {
            g.reduce_mean(v[0], 1)
        }),
        ("leaky_relu", vec![("a", &[4, 5])], |g, v| {
            Ok(g.leaky_relu(v[0], 0.2))
        }),
        ("sigmoid", vec![("a", &[4, 5])], |g, v| Ok(g.sigmoid(v[0]))),
        ("tanh", vec![("a", &[4, 5])], |g, v| Ok(g.tanh(v[0]))),
        ("softmax", vec![("a", &[3, 5])], |g, v| g.softmax(v[0], 1)),
        ("log_softmax", vec![("a", &[3, 5])], |g, v| {
            g.log_softmax(v[0], 1)
        }),
        ("gather_rows", vec![("a", &[4, 3])], |g, v| {
            g.gather_rows(v[0], &[2, 0, 2, 3])
        }),
        ("neighbor_max", vec![("a", &[5, 3])], |g, v| {
            g.neighbor_max(v[0], &[0, 1, 2, 1, 3, 4, 2, 2, 0], 3)
        }),
        ("row_norm", vec![("a", &[4, 3])], |g, v| g.row_norm(v[0])),
        ("select_per_row", vec![("a", &[3, 4])], |g, v| {
            g.select_per_row(v[0], &[1, 3, 0])
        }),
        ("scale", vec![("a", &[3])], |g, v| Ok(g.scale(v[0], -2.5))),
        ("mean", vec![("a", &[3, 2])], |g, v| Ok(g.mean(v[0]))),
        (
            "linear",
            vec![("x", &[4, 3]), ("w", &[2, 3]), ("b", &[2])],
            |g, v| g.linear(v[0], v[1], v[2]),
        ),
        ("mse", vec![("p", &[17, 3]), ("t", &[17, 3])], |g, v| {
            mse_loss(g, v[0], v[1])
        }),
        ("cross_entropy", vec![("z", &[4, 5])], |g, v| {
            cross_entropy_loss(g, v[0], &[0, 4, 2, 2])
        }),
        (
            "triplet",
            vec![("a", &[3, 6]), ("p", &[3, 6]), ("n", &[3, 6])],
            |g, v| triplet_loss(g, v[0], v[1], v[2], 2.0),
        ),
    ];
    let mut worst = (0.0f64, "");
    for (name, inputs, f) in &prims {
        let e = primitive_error(inputs, *f);
        if e > worst.0 {
            worst = (e, name);
        }
    }
    c.check(
        worst.0 < 1e-4,
        format!(
            "{} primitives: max rel {:.1e} ({})",
            prims.len(),
            worst.0,
            worst.1
        ),
    );

    let spec = ModelSpec::default();
    let store = spread_params(5);
    let seq = sequence(6, 50);
    let mut r = rng(7);
    let target = SkeletonFrame {
        joints: std::array::from_fn(|_| {
            [
                r.random_range(-0.3..0.3),
                r.random_range(1.5..2.0),
                r.random_range(0.0..1.7),
            ]
        }),
    };
    let ae = finite_diff_check(&store, 1e-6, 300, 3, |s, g| {
        Ok(forward_autoencoder(g, &mut Binder::new(s), &spec, &seq[0], &target)?.1)
    })
    .unwrap();
    c.check(
        ae.max_rel_error < 1e-4,
        format!("autoencoder graph: max rel {:.1e}", ae.max_rel_error),
    );

    let store = spread_params(8);
    let seq = sequence(9, 35);
    let cls = finite_diff_check(&store, 1e-6, 200, 4, |s, g| {
        let l = forward_full(g, &mut Binder::new(s), &spec, &seq)?;
        cross_entropy_loss(g, l, &[2])
    })
    .unwrap();
    c.check(
        cls.max_rel_error < 1e-4,
        format!("full classifier graph: max rel {:.1e}", cls.max_rel_error),
    );

    let el = t0.elapsed();
    c.check(
        el < Duration::from_secs(300),
        format!("runtime {:.1} s", el.as_secs_f64()),
    );
}

// ---------------------------------------------------------------- criterion 5

fn shuffled(n: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, r.random_range(0..=i));
    }
    p
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let f = t.shape()[1];
    let data = perm
        .iter()
        .flat_map(|&i| t.data()[i * f..(i + 1) * f].iter().copied())
        .collect();
    Tensor::new(vec![perm.len(), f], data).unwrap()
}

/// Self first, then the k nearest others by full sort; ties by index.
fn knn_oracle(t: &Tensor, k: usize) -> Vec<Vec<usize>> {
    let (n, f) = (t.shape()[0], t.shape()[1]);
    let x = t.data();
    (0..n)
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (
                        (0..f).map(|c| (x[i * f + c] - x[j * f + c]).powi(2)).sum(),
                        j,
                    )
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            std::iter::once(i)
                .chain(all.iter().take(k).map(|p| p.1))
                .collect()
        })
        .collect()
}

fn logits(store: &ParamStore, spec: &ModelSpec, seq: &[NormalizedCloud]) -> Tensor {
    let mut g = Graph::new();
    let l = forward_full(&mut g, &mut Binder::new(store), spec, seq).unwrap();
    g.value(l).clone()
}

fn architecture(c: &mut Checks) {
    let spec = ModelSpec::default();
    let store = init_params(&spec, 1).unwrap();
    let seq = sequence(2, 40);
    let in_shape = [
        seq.len(),
        seq[0].points.shape()[0],
        seq[0].points.shape()[1],
    ];
    let mut g = Graph::new();
    let mut b = Binder::new(&store);
    let z = encode_sequence(&mut g, &mut b, &spec, &seq).unwrap();
    let zs = g.shape(z).to_vec();
    let (l, _) = classify_sequence(&mut g, &mut b, &spec, &[z]).unwrap();
    let ls = g.shape(l).to_vec();
    c.check(
        in_shape == [30, 64, 5] && zs == [30, 136] && ls == [1, 5],
        format!("shape chain {in_shape:?} -> {zs:?} -> {ls:?}"),
    );

    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let store = spread_params(seed);
        let seq = sequence(10 + seed, 64);
        let mut r = rng(500 + seed);
        let perm: Vec<NormalizedCloud> = seq
            .iter()
            .map(|cl| NormalizedCloud {
                points: permute_rows(&cl.points, &shuffled(cl.points.shape()[0], &mut r)),
                valid: cl.valid,
            })
            .collect();
        worst = worst.max(logits(&store, &spec, &seq).max_abs_diff(&logits(&store, &spec, &perm)));
    }
    c.check(
        worst < 1e-8,
        format!("permutation invariance: max |dlogit| {worst:.1e}"),
    );

    let mut r = rng(501);
    let mut mismatches = 0;
    for case in 0..100 {
        let n = 5 + case % 60;
        let f = 1 + case % 7;
        let k = 1 + (case % 4).min(n - 2);
        let t = random_tensor(&[n, f], &mut r);
        let got = knn_graph(&t, k).unwrap();
        mismatches += knn_oracle(&t, k)
            .iter()
            .enumerate()
            .filter(|(i, o)| got.of(*i) != o.as_slice())
            .count();
    }
    c.check(
        mismatches == 0,
        format!("knn vs brute force on 100 clouds: {mismatches} mismatched rows"),
    );

    let conv = EdgeConvSpec::new("e", 5, &[64]);
    let mut store = ParamStore::new();
    conv.init(&mut store, &mut rng(502)).unwrap();
    let mut shapes_ok = true;
    for n in [8usize, 33, 64] {
        let mut g = Graph::new();
        let x = g.constant(random_tensor(&[n, 5], &mut r));
        let (y, _) = edge_conv(&mut g, &mut Binder::new(&store), x, &conv, 3).unwrap();
        shapes_ok &= g.shape(y) == [n, 64];
    }
    c.check(
        shapes_ok,
        "edgeconv keeps the point count: n x 5 -> n x 64 for n in {8, 33, 64}",
    );
}

// ---------------------------------------------------------------- criterion 6

/// Pinned after the first verified run.
const STAGE1_EVAL_MSE_MAX: f64 = 0.02;
const FROZEN_ACCURACY_MIN: f64 = 0.90;
const STAGE1_EPOCHS: usize = 12;
const STAGE1_FRAMES_PER_RECORDING: usize = 3;
const STAGE2_EPOCHS: usize = 10;
const STAGE2_STEPS: usize = 15;

struct SeedRun {
    mse: f64,
    frozen: f64,
    baseline: f64,
    finetuned: Option<f64>,
}

fn cross_learning_run(seed: u64, finetune: bool) -> SeedRun {
    let t0 = Instant::now();
    let ds = DatasetSpec {
        seed,
        ..DatasetSpec::default()
    };
    let opts = PipelineOptions::default();
    let train = Dataset::simulate(&ds, Split::Train, opts, true).unwrap();
    let eval = Dataset::simulate(&ds, Split::Eval, opts, true).unwrap();
    assert_eq!((train.len(), eval.len()), (1000, 250));
    let spec = ModelSpec::default();
    let quiet = &mut |_: &_| {};

    let mut c1 = TrainConfig::autoencoder(seed);
    c1.epochs = STAGE1_EPOCHS;
    c1.frames_per_recording = Some(STAGE1_FRAMES_PER_RECORDING);
    let ae = train_autoencoder(&train, &spec, &c1, quiet).unwrap();
    let mse = reconstruction_mse(&ae.params, &spec, &eval).unwrap();

    let radar_train = train.radar_only();
    let radar_eval = eval.radar_only();
    let mut c2 = TrainConfig::classifier(seed);
    c2.epochs = STAGE2_EPOCHS;
    c2.steps_per_epoch = Some(STAGE2_STEPS);
    let acc =
        |m: radar_gesture::training_eval::TrainedModel| evaluate(&m, &radar_eval).unwrap().accuracy;

    let frozen = acc(train_classifier(&radar_train, &ae.params, &spec, &c2, None, quiet).unwrap());
    let baseline = acc(train_unimodal_baseline(&radar_train, &spec, &c2, None, quiet).unwrap());
    let finetuned = finetune.then(|| {
        let mut cf = c2.clone();
        cf.freeze_encoder = false;
        acc(train_classifier(&radar_train, &ae.params, &spec, &cf, None, quiet).unwrap())
    });
    eprintln!(
        "  seed {seed}: mse {mse:.5} frozen {frozen:.3} baseline {baseline:.3} finetuned {finetuned:?} ({:.0} s)",
        t0.elapsed().as_secs_f64()
    );
    SeedRun {
        mse,
        frozen,
        baseline,
        finetuned,
    }
}

fn cross_learning(c: &mut Checks) {
    let t0 = Instant::now();
    let runs: Vec<SeedRun> = (0..3).map(|s| cross_learning_run(s, s == 0)).collect();
    let first = &runs[0];
    c.check(
        first.mse < STAGE1_EVAL_MSE_MAX,
        format!(
            "(a) stage-1 eval mse {:.5} m^2 < {STAGE1_EVAL_MSE_MAX}",
            first.mse
        ),
    );
    c.check(
        first.frozen >= FROZEN_ACCURACY_MIN,
        format!(
            "(b) frozen cross accuracy {:.3} >= {FROZEN_ACCURACY_MIN}",
            first.frozen
        ),
    );
    for (s, r) in runs.iter().enumerate() {
        c.check(
            r.frozen >= r.baseline,
            format!(
                "(c) seed {s}: cross {:.3} >= baseline {:.3}",
                r.frozen, r.baseline
            ),
        );
    }
    let ft = first.finetuned.unwrap();
    c.check(
        ft >= first.frozen - 0.02,
        format!("(d) finetuned {ft:.3} >= frozen {:.3} - 0.02", first.frozen),
    );
    let el = t0.elapsed();
    c.check(
        el < Duration::from_secs(30 * 60),
        format!("runtime {:.0} s", el.as_secs_f64()),
    );
}

// ---------------------------------------------------------------- criterion 7

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn random_rig(r: &mut ChaCha8Rng, n: usize) -> Vec<CameraModel> {
    (0..n)
        .map(|_| {
            let a: f64 = r.random_range(0.0..2.0 * PI);
            let rad: f64 = r.random_range(3.0..5.0);
            let eye = Vector3::new(rad * a.cos(), rad * a.sin(), r.random_range(0.5..2.5));
            let target = Vector3::new(
                r.random_range(-0.2..0.2),
                r.random_range(-0.2..0.2),
                r.random_range(0.8..1.2),
            );
            let k = CameraModel::intrinsics(r.random_range(600.0..1400.0), 960.0, 540.0);
            CameraModel::look_at(k, eye, target, Vector3::z()).unwrap()
        })
        .collect()
}

fn random_point(r: &mut ChaCha8Rng) -> [f64; 3] {
    [
        r.random_range(-0.5..0.5),
        r.random_range(-0.5..0.5),
        r.random_range(0.5..1.5),
    ]
}

fn multiview(c: &mut Checks) {
    let mut r = rng(701);
    let (mut round, mut epi) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let n = r.random_range(2..6);
        let rig = random_rig(&mut r, n);
        let p = random_point(&mut r);
        let obs: Vec<_> = rig
            .iter()
            .map(|cam| (cam, project(cam, p).unwrap()))
            .collect();
        round = round.max(dist(p, triangulate(&obs).unwrap()));
        let f = fundamental_from_calib(&rig[0], &rig[1]).unwrap();
        epi = epi.max(epipolar_distance(&f, obs[0].1, obs[1].1));
    }
    c.check(
        round < 1e-9,
        format!("noiseless round trip: max {round:.1e} m"),
    );
    c.check(
        epi < 1e-9,
        format!("epipolar residual of true matches: max {epi:.1e} px"),
    );

    // four views over a 1 m baseline at 3 m depth
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
            r.random_range(-0.3..0.3),
            3.0 + r.random_range(-0.3..0.3),
            1.5 + r.random_range(-0.3..0.3),
        ];
        let obs: Vec<_> = rig
            .iter()
            .map(|cam| {
                let x = project(cam, p).unwrap();
                (
                    cam,
                    [x[0] + noise.sample(&mut r), x[1] + noise.sample(&mut r)],
                )
            })
            .collect();
        sq += dist(p, triangulate(&obs).unwrap()).powi(2);
    }
    let rms = (sq / 1000.0).sqrt();
    c.check(
        rms < 0.02,
        format!("1 px noise, standard rig: rms {:.2} cm", rms * 100.0),
    );
}

// ---------------------------------------------------------------- criterion 8

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn pipeline(dir: &Path, threads: &str) {
    let run = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_radar-gesture"))
            .args(args)
            .args(["--seed", "11", "--threads", threads])
            .current_dir(dir)
            .output()
            .unwrap();
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    };
    run(&[
        "simulate",
        "--train-per-class",
        "4",
        "--eval-per-class",
        "2",
    ]);
    run(&["preprocess"]);
    run(&[
        "train-ae",
        "--epochs",
        "2",
        "--batch-size",
        "8",
        "--frames-per-recording",
        "2",
    ]);
    let stage2 = [
        "--epochs",
        "2",
        "--batch-size",
        "10",
        "--steps-per-epoch",
        "2",
    ];
    run(&[&["train-cls", "--monitor", "processed/eval"][..], &stage2].concat());
    run(&[&["train-baseline"][..], &stage2].concat());
    run(&["eval"]);
}

fn reproducibility(c: &mut Checks) {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    pipeline(dirs[0].path(), "1");
    pipeline(dirs[1].path(), "1");
    pipeline(dirs[2].path(), "4");
    let trees: Vec<_> = dirs.iter().map(|d| tree(d.path())).collect();
    let n = trees[0].len();
    c.check(
        n > 0 && trees[0] == trees[1],
        format!("two runs with --threads 1: {n} files identical"),
    );
    let diff: Vec<_> = trees[0]
        .iter()
        .filter(|(k, v)| trees[2].get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    c.check(
        diff.is_empty() && trees[0].len() == trees[2].len(),
        format!(
            "--threads 4 vs --threads 1: {} differing files {diff:?}",
            diff.len()
        ),
    );
}

// -------------------------------------------------------------------- driver

fn main() {
    let criteria: [(&str, fn(&mut Checks)); 8] = [
        ("dsp oracle suite", dsp_oracles),
        ("ground-plane transform suite", ground_transform),
        ("bartlett suite", bartlett),
        ("gradient suite", gradients),
        ("architecture invariants", architecture),
        ("cross-learning experiment", cross_learning),
        ("multiview suite", multiview),
        ("reproducibility", reproducibility),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let mut checks = Checks::default();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut checks)));
        if let Err(e) = outcome {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.check(false, format!("panicked: {msg}"));
        }
        let pass = checks.failed.is_empty();
        ran += 1;
        if !pass {
            failed.push(id.to_string());
        }
        let detail = if pass { &checks.notes } else { &checks.failed };
        println!(
            "{} {id} {name} ({:.1} s): {}",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64(),
            detail.join("; ")
        );
    }
    println!(
        "acceptance: {} of {ran} criteria passed{}",
        ran - failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
