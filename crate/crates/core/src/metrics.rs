//! Accuracy, loc-score and confusion counts over per-run prediction traces.

use std::path::Path;

use serde::Serialize;

use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};

pub const DEFAULT_TAU: i64 = 24;

/// Predictions for one run, in timestep order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub run_id: String,
    pub timesteps: Vec<usize>,
    pub truth: Vec<usize>,
    pub predicted: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTrace {
    pub runs: Vec<RunTrace>,
}

impl PredictionTrace {
    /// A single-run trace with timesteps `0..n`.
    pub fn from_sequences(truth: Vec<usize>, predicted: Vec<usize>) -> Result<Self> {
        let trace = PredictionTrace {
            runs: vec![RunTrace {
                run_id: "run".into(),
                timesteps: (0..truth.len()).collect(),
                truth,
                predicted,
            }],
        };
        trace.validate(usize::MAX)?;
        Ok(trace)
    }

    /// Groups per-window predictions back onto their runs.
    pub fn from_windows(ds: &WindowedDataset, predicted: &[usize]) -> Result<Self> {
        if predicted.len() != ds.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} windows",
                predicted.len(),
                ds.len()
            )));
        }
        let mut runs: Vec<RunTrace> = ds
            .run_ids
            .iter()
            .map(|id| RunTrace {
                run_id: id.clone(),
                ..RunTrace::default()
            })
            .collect();
        for (i, origin) in ds.origins.iter().enumerate() {
            let r = &mut runs[origin.run];
            r.timesteps.push(origin.t);
            r.truth.push(ds.labels[i]);
            r.predicted.push(predicted[i]);
        }
        runs.retain(|r| !r.truth.is_empty());
        let trace = PredictionTrace { runs };
        trace.validate(ds.class_count)?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.runs.iter().map(|r| r.truth.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        for r in &self.runs {
            if r.timesteps.len() != r.truth.len() || r.truth.len() != r.predicted.len() {
                return Err(Error::shape(format!("trace for `{}` has ragged columns", r.run_id)));
            }
            if r.timesteps.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::domain(format!(
                    "trace for `{}` has non-increasing timesteps",
                    r.run_id
                )));
            }
            if r.truth.iter().chain(&r.predicted).any(|&c| c >= class_count) {
                return Err(Error::domain(format!(
                    "trace for `{}` has an out-of-range label",
                    r.run_id
                )));
            }
        }
        Ok(())
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.runs
            .iter()
            .flat_map(|r| r.truth.iter().copied().zip(r.predicted.iter().copied()))
    }
}

fn nonempty(trace: &PredictionTrace) -> Result<()> {
    if trace.is_empty() {
        Err(Error::domain("empty prediction trace"))
    } else {
        Ok(())
    }
}

/// Fraction of exact matches, pooled over runs.
pub fn accuracy_score(trace: &PredictionTrace) -> Result<f64> {
    nonempty(trace)?;
    let correct = trace.pairs().filter(|(t, p)| t == p).count();
    Ok(correct as f64 / trace.len() as f64)
}

/// Accuracy that also accepts either adjacent segment within `tau`
/// timesteps of a true-label transition.
///
/// A transition sits at the first timestep `t_tr` carrying the new label and
/// its window is `t_tr - tau <= t < t_tr + tau`: `tau` samples of the old
/// label and `tau` of the new one, empty at `tau = 0`. Windows of successive
/// transitions are unioned and never reach across runs.
pub fn loc_score(trace: &PredictionTrace, tau: i64) -> Result<f64> {
    if tau < 0 {
        return Err(Error::domain(format!("tau must be non-negative, got {tau}")));
    }
    nonempty(trace)?;
    let tau = tau as usize;
    let mut correct = 0usize;
    for run in &trace.runs {
        let transitions: Vec<(usize, usize, usize)> = (1..run.truth.len())
            .filter(|&i| run.truth[i] != run.truth[i - 1])
            .map(|i| (run.timesteps[i], run.truth[i - 1], run.truth[i]))
            .collect();
        for (i, (&t, &p)) in run.timesteps.iter().zip(&run.predicted).enumerate() {
            if p == run.truth[i] {
                correct += 1;
                continue;
            }
            let first = transitions.partition_point(|&(tr, _, _)| tr + tau <= t);
            let accepted = transitions[first..]
                .iter()
                .take_while(|&&(tr, _, _)| tr <= t + tau)
                .any(|&(_, from, to)| p == from || p == to);
            correct += usize::from(accepted);
        }
    }
    Ok(correct as f64 / trace.len() as f64)
}

/// `counts[i][j]` = windows of true class `i` predicted as `j`.
pub fn confusion_counts(trace: &PredictionTrace, class_count: usize) -> Result<Vec<Vec<usize>>> {
    nonempty(trace)?;
    trace.validate(class_count)?;
    let mut m = vec![vec![0usize; class_count]; class_count];
    for (t, p) in trace.pairs() {
        m[t][p] += 1;
    }
    Ok(m)
}

/// Per-class F1 from a confusion matrix; 0 for classes never seen or predicted.
pub fn f1_scores(confusion: &[Vec<usize>]) -> Vec<f64> {
    (0..confusion.len())
        .map(|c| {
            let tp = confusion[c][c];
            let fn_: usize = confusion[c].iter().sum::<usize>() - tp;
            let fp: usize = confusion.iter().map(|row| row[c]).sum::<usize>() - tp;
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub model: String,
    pub path: String,
    pub accuracy: f64,
    pub loc_score: f64,
    pub tau: i64,
    pub class_names: Vec<String>,
    pub f1: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn compute(model: &str, path: &str, trace: &PredictionTrace, tau: i64, class_names: &[String]) -> Result<Self> {
        let confusion = confusion_counts(trace, class_names.len())?;
        Ok(MetricsReport {
            model: model.into(),
            path: path.into(),
            accuracy: accuracy_score(trace)?,
            loc_score: loc_score(trace, tau)?,
            tau,
            class_names: class_names.to_vec(),
            f1: f1_scores(&confusion),
            confusion,
        })
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["model", "path", "accuracy", "loc_score", "tau"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.class_names.iter().map(|c| format!("f1_{c}")));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.model.clone(),
            self.path.clone(),
            self.accuracy.to_string(),
            self.loc_score.to_string(),
            self.tau.to_string(),
        ];
        r.extend(self.f1.iter().map(|v| v.to_string()));
        r
    }

    pub fn write_csv(&self, file: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(file).map_err(|e| csv_error(file, e))?;
        w.write_record(self.csv_header()).map_err(|e| csv_error(file, e))?;
        w.write_record(self.csv_row()).map_err(|e| csv_error(file, e))?;
        w.flush().map_err(|e| Error::io(file, e))
    }

    pub fn write_confusion_csv(&self, file: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(file).map_err(|e| csv_error(file, e))?;
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.class_names.iter().cloned());
        w.write_record(&header).map_err(|e| csv_error(file, e))?;
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_error(file, e))?;
        }
        w.flush().map_err(|e| Error::io(file, e))
    }
}

pub(crate) fn csv_error(file: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(file, io),
        other => Error::Format(format!("{}: {other:?}", file.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace(truth: &[usize], pred: &[usize]) -> PredictionTrace {
        PredictionTrace::from_sequences(truth.to_vec(), pred.to_vec()).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        assert!((accuracy_score(&trace(&[1, 2, 2], &[1, 1, 2])).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(accuracy_score(&trace(&[0, 1, 2], &[0, 1, 2])).unwrap(), 1.0);
        assert!(matches!(
            accuracy_score(&PredictionTrace::default()),
            Err(Error::Domain(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..8)).collect();
        let p: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..8)).collect();
        assert!((accuracy_score(&trace(&t, &p)).unwrap() - 0.125).abs() < 0.01);
    }

    #[test]
    fn loc_score_examples() {
        let t = trace(&[0, 0, 0, 1, 1], &[0, 0, 1, 1, 1]);
        assert_eq!(loc_score(&t, 1).unwrap(), 1.0);
        assert_eq!(loc_score(&t, 0).unwrap(), accuracy_score(&t).unwrap());
        assert!(matches!(loc_score(&t, -1), Err(Error::Domain(_))));
        // a third label is never forgiven
        let t = trace(&[0, 0, 1, 1], &[0, 2, 1, 1]);
        assert_eq!(loc_score(&t, 5).unwrap(), 0.75);
    }

    #[test]
    fn windows_do_not_cross_runs() {
        let t = PredictionTrace {
            runs: vec![
                RunTrace {
                    run_id: "a".into(),
                    timesteps: vec![0, 1, 2],
                    truth: vec![0, 0, 0],
                    predicted: vec![0, 0, 1],
                },
                RunTrace {
                    run_id: "b".into(),
                    timesteps: vec![0, 1, 2],
                    truth: vec![1, 1, 1],
                    predicted: vec![1, 1, 1],
                },
            ],
        };
        assert_eq!(loc_score(&t, 10).unwrap(), 5.0 / 6.0);
    }

    #[test]
    fn confusion_examples() {
        let c = confusion_counts(&trace(&[0, 1, 2], &[0, 1, 2]), 3).unwrap();
        assert_eq!(c, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let c = confusion_counts(&trace(&[0, 0, 0], &[1, 1, 1]), 2).unwrap();
        assert_eq!(c, vec![vec![0, 3], vec![0, 0]]);
        assert_eq!(f1_scores(&c), vec![0.0, 0.0]);
    }
}
