//! The two-stage recipe at toy scale. Stage 1 teaches the point-cloud
//! encoder to reconstruct camera skeletons; stage 2 trains the recurrent
//! classifier on radar alone, once on the frozen stage-1 encoder and once
//! from scratch.
//!
//! cargo run --release --example cross_learning [train-per-class]

use radar_gesture::model::ModelSpec;
use radar_gesture::radar_dsp::PipelineOptions;
use radar_gesture::scene_sim::{DatasetSpec, Split};
use radar_gesture::training_eval::{
    compare_runs, evaluate, reconstruction_mse, train_autoencoder, train_classifier,
    train_unimodal_baseline, Dataset, TrainConfig,
};

fn main() -> radar_gesture::Result<()> {
    let per_class = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(20);
    let ds = DatasetSpec {
        train_per_class: per_class,
        eval_per_class: 10,
        seed: 0,
        ..DatasetSpec::default()
    };
    let train = Dataset::simulate(&ds, Split::Train, PipelineOptions::default(), true)?;
    let eval = Dataset::simulate(&ds, Split::Eval, PipelineOptions::default(), true)?;
    println!("{} train / {} eval recordings", train.len(), eval.len());
    let spec = ModelSpec::default();

    let mut c1 = TrainConfig::autoencoder(0);
    c1.epochs = 8;
    c1.frames_per_recording = Some(3);
    let ae = train_autoencoder(&train, &spec, &c1, &mut |s| {
        println!("stage 1 epoch {} mse {:.4}", s.epoch, s.loss)
    })?;
    println!(
        "stage 1 eval mse {:.4} m^2",
        reconstruction_mse(&ae.params, &spec, &eval)?
    );

    // the classifier never sees camera data
    let (train, eval) = (train.radar_only(), eval.radar_only());
    let mut c2 = TrainConfig::classifier(0);
    c2.epochs = 6;
    c2.steps_per_epoch = Some(8);
    let log = |name: &'static str| {
        move |s: &radar_gesture::training_eval::EpochStats| {
            println!(
                "{name} epoch {} loss {:.3} eval acc {:.2}",
                s.epoch,
                s.loss,
                s.eval_accuracy.unwrap_or(f64::NAN)
            )
        }
    };
    let cross = train_classifier(
        &train,
        &ae.params,
        &spec,
        &c2,
        Some(&eval),
        &mut log("cross"),
    )?;
    let baseline = train_unimodal_baseline(&train, &spec, &c2, Some(&eval), &mut log("unimodal"))?;

    let report = evaluate(&cross, &eval)?;
    println!("cross-learned accuracy {:.3}", report.accuracy);
    print!("{}", report.confusion_csv());
    println!(
        "unimodal accuracy {:.3}",
        evaluate(&baseline, &eval)?.accuracy
    );
    print!(
        "{}",
        compare_runs(&[
            ("unimodal".into(), baseline.history),
            ("cross".into(), cross.history)
        ])?
    );
    Ok(())
}
