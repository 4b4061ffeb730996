//! Writes a small paired dataset (radar cubes reduced to point clouds plus
//! camera skeletons) and reads one recording back.
//!
//! cargo run --example simulate_dataset [out-dir]

use std::path::PathBuf;

use radar_gesture::scene_sim::{generate_dataset, load_recording, DatasetSpec};

fn main() -> radar_gesture::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("radar-gesture-data"));
    let spec = DatasetSpec {
        train_per_class: 2,
        eval_per_class: 1,
        seed: 3,
        ..DatasetSpec::default()
    };
    let manifest = generate_dataset(&out, &spec)?;
    println!(
        "{} recordings under {}",
        manifest.recordings.len(),
        out.display()
    );
    for r in &manifest.recordings {
        println!("  {:<12} {:<14} {}", r.id, r.label_name, r.path);
    }

    let first = &manifest.recordings[0];
    let rec = load_recording(&out.join(&first.path))?;
    let wrist = rec.skeletons[15].joints[10];
    println!(
        "{}: {} cubes of shape {:?}, {} skeleton frames, range {:.2} m, {} handed",
        first.id,
        rec.cubes.len(),
        rec.cubes[0].shape(),
        rec.skeletons.len(),
        rec.meta.range_m,
        format!("{:?}", rec.meta.handedness).to_lowercase()
    );
    println!(
        "joint 10 at frame 15: ({:+.3}, {:+.3}, {:+.3})",
        wrist[0], wrist[1], wrist[2]
    );
    Ok(())
}
