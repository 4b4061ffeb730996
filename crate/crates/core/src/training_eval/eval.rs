use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::Dataset;
use super::train::{predict, EpochStats, TrainedModel, CLASSIFIER_PREFIXES};
use crate::error::{Error, Result};
use crate::model::init_params;
use crate::scene_sim::GestureClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub total: usize,
    pub class_names: Vec<String>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Training history of the evaluated checkpoint.
    pub curves: Vec<EpochStats>,
}

impl EvalReport {
    /// Accounting from per-recording truth and predictions; accuracy is
    /// exactly trace / total.
    pub fn from_predictions(truth: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != pred.len() || truth.is_empty() {
            return Err(Error::Dataset(format!(
                "{} labels vs {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= classes || p >= classes {
                return Err(Error::Range(format!(
                    "class {} / {} outside 0..{}",
                    t,
                    p,
                    classes - 1
                )));
            }
            confusion[t][p] += 1;
        }
        let trace: usize = (0..classes).map(|c| confusion[c][c]).sum();
        Ok(Self {
            accuracy: trace as f64 / truth.len() as f64,
            total: truth.len(),
            class_names: class_names(classes),
            confusion,
            curves: Vec::new(),
        })
    }

    pub fn trace(&self) -> usize {
        (0..self.confusion.len())
            .map(|c| self.confusion[c][c])
            .sum()
    }

    /// Header row and column of class names; rows are truth.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("truth\\predicted");
        for n in &self.class_names {
            write!(s, ",{n}").unwrap();
        }
        s.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            s.push_str(name);
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn curves_csv(&self) -> String {
        curves_csv(&self.curves)
    }
}

fn class_names(classes: usize) -> Vec<String> {
    (0..classes)
        .map(|c| {
            GestureClass::from_code(c)
                .map(|g| g.name().to_string())
                .unwrap_or_else(|_| format!("class{c}"))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `epoch,loss,ce,triplet,train_accuracy,eval_accuracy`; absent values are
/// empty fields.
pub fn curves_csv(curves: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,ce,triplet,train_accuracy,eval_accuracy\n");
    for e in curves {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            e.epoch,
            e.loss,
            opt(e.ce),
            opt(e.triplet),
            opt(e.train_accuracy),
            opt(e.eval_accuracy)
        )
        .unwrap();
    }
    s
}

/// Argmax prediction per recording of `data` with a classifier checkpoint.
/// The checkpoint must hold every input-transform, encoder and classifier
/// tensor of its spec.
pub fn evaluate(model: &TrainedModel, data: &Dataset) -> Result<EvalReport> {
    let mut params = init_params(&model.spec, 0)?;
    params.load_from(&model.params, &CLASSIFIER_PREFIXES)?;
    let pred = predict(&params, &model.spec, data)?;
    let mut report = EvalReport::from_predictions(&data.labels(), &pred, model.spec.classes)?;
    report.curves = model.history.clone();
    Ok(report)
}

/// SHA-256 over `model.json` then `model.bin`.
pub fn checkpoint_digest(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for f in ["model.json", "model.bin"] {
        let p = dir.join(f);
        h.update(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Per-epoch train/test accuracy of each named run side by side. Rows run to
/// the longest history; shorter runs repeat their last value.
pub fn compare_runs(runs: &[(String, Vec<EpochStats>)]) -> Result<String> {
    if runs.len() < 2 {
        return Err(Error::Config(format!(
            "compare needs ≥ 2 runs, got {}",
            runs.len()
        )));
    }
    if let Some((name, _)) = runs.iter().find(|(_, h)| h.is_empty()) {
        return Err(Error::Dataset(format!("run `{name}` has no epochs")));
    }
    let mut s = String::from("epoch");
    for (name, _) in runs {
        write!(s, ",{name}_train,{name}_test").unwrap();
    }
    s.push('\n');
    let rows = runs.iter().map(|(_, h)| h.len()).max().unwrap_or(0);
    for r in 0..rows {
        write!(s, "{}", r + 1).unwrap();
        for (_, h) in runs {
            let e = &h[r.min(h.len() - 1)];
            write!(s, ",{},{}", opt(e.train_accuracy), opt(e.eval_accuracy)).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}
