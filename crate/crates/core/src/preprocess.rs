//! Cleaning chain for raw runs: gap filling, causal smoothing of formerly
//! sparse columns, min-max normalization, feature selection and sliding
//! windows.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{SensorRun, WindowOrigin, WindowedDataset};
use crate::error::{Error, Result};

/// A run after filling: every cell present.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRun {
    pub run_id: String,
    pub feature_names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl DenseRun {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Two-stage gap padding.
///
/// First every gap after a recorded value takes the last recorded value;
/// then any leading gap takes the first recorded value. Recorded cells are
/// left untouched.
pub fn fill_missing(column: &[Option<f64>]) -> Result<Vec<f64>> {
    fill_missing_named(column, "<unnamed>")
}

fn fill_missing_named(column: &[Option<f64>], name: &str) -> Result<Vec<f64>> {
    let first = column
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or_else(|| Error::Preprocess {
            column: name.to_string(),
            message: "column has no recorded values".into(),
        })?;
    let mut last = first;
    Ok(column
        .iter()
        .map(|v| {
            if let Some(x) = v {
                last = *x;
            }
            last
        })
        .collect())
}

/// Longest run of consecutive missing cells.
pub fn max_gap(column: &[Option<f64>]) -> usize {
    let mut best = 0;
    let mut current = 0;
    for v in column {
        if v.is_none() {
            current += 1;
            best = best.max(current);
        } else {
            current = 0;
        }
    }
    best
}

/// Trailing mean: `out[t]` averages `column[max(0, t-window+1)..=t]`.
pub fn rolling_mean(column: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::config("window", "rolling window must be at least 1"));
    }
    if window == 1 {
        return Ok(column.to_vec());
    }
    let mut out = Vec::with_capacity(column.len());
    for t in 0..column.len() {
        let lo = (t + 1).saturating_sub(window);
        let slice = &column[lo..=t];
        // direct summation: bounded by min/max of the slice, no drift from a running sum
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    Ok(out)
}

/// Fill every column, then smooth each formerly sparse column with a
/// trailing mean one sample wider than its longest gap.
pub fn clean_run(run: &SensorRun) -> Result<DenseRun> {
    let mut columns = Vec::with_capacity(run.columns.len());
    for (name, col) in run.feature_names.iter().zip(&run.columns) {
        let filled = fill_missing_named(col, name)?;
        let gap = max_gap(col);
        columns.push(if gap > 0 {
            rolling_mean(&filled, gap + 1)?
        } else {
            filled
        });
    }
    Ok(DenseRun {
        run_id: run.run_id.clone(),
        feature_names: run.feature_names.clone(),
        columns,
        labels: run.labels.clone(),
    })
}

/// Per-column (min, max) fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub feature_names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Fit per-column minima and maxima over `columns` (each entry one column,
/// possibly the concatenation of several runs).
pub fn minmax_fit(columns: &[Vec<f64>], feature_names: &[String]) -> Result<NormParams> {
    if columns.len() != feature_names.len() {
        return Err(Error::shape(format!(
            "{} columns for {} feature names",
            columns.len(),
            feature_names.len()
        )));
    }
    let mut min = Vec::with_capacity(columns.len());
    let mut max = Vec::with_capacity(columns.len());
    for (name, col) in feature_names.iter().zip(columns) {
        if col.is_empty() {
            return Err(Error::Preprocess {
                column: name.clone(),
                message: "cannot fit normalization on an empty column".into(),
            });
        }
        min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
        max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(NormParams {
        feature_names: feature_names.to_vec(),
        min,
        max,
    })
}

/// Map `x -> (x - min) / (max - min)` per column; constant columns map to 0.
/// Out-of-range inputs are not clamped.
pub fn minmax_apply(columns: &[Vec<f64>], params: &NormParams) -> Result<Vec<Vec<f64>>> {
    if columns.len() != params.min.len() {
        return Err(Error::shape(format!(
            "normalization fitted on {} columns, applied to {}",
            params.min.len(),
            columns.len()
        )));
    }
    Ok(columns
        .iter()
        .enumerate()
        .map(|(f, col)| {
            let (lo, hi) = (params.min[f], params.max[f]);
            let span = hi - lo;
            col.iter()
                .map(|&x| if span > 0.0 { (x - lo) / span } else { 0.0 })
                .collect()
        })
        .collect())
}

impl NormParams {
    /// Fit on the pooled samples of `runs`.
    pub fn fit(runs: &[DenseRun]) -> Result<NormParams> {
        let first = runs
            .first()
            .ok_or_else(|| Error::config("train", "no training runs to fit normalization"))?;
        let n = first.columns.len();
        let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); n];
        for run in runs {
            if run.feature_names != first.feature_names {
                return Err(Error::shape("training runs disagree on feature columns"));
            }
            for (f, col) in run.columns.iter().enumerate() {
                pooled[f].extend_from_slice(col);
            }
        }
        minmax_fit(&pooled, &first.feature_names)
    }

    pub fn apply(&self, run: &DenseRun) -> Result<DenseRun> {
        if run.feature_names != self.feature_names {
            return Err(Error::shape(format!(
                "normalization expects features {:?}, run `{}` has {:?}",
                self.feature_names, run.run_id, run.feature_names
            )));
        }
        Ok(DenseRun {
            columns: minmax_apply(&run.columns, self)?,
            ..run.clone()
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("norm params serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<NormParams> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Keep only the named columns, in the order given.
pub fn select_features(run: &SensorRun, keep: &[String]) -> Result<SensorRun> {
    let mut columns = Vec::with_capacity(keep.len());
    for name in keep {
        let idx = run
            .feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::config("features", format!("unknown feature `{name}`")))?;
        columns.push(run.columns[idx].clone());
    }
    Ok(SensorRun {
        run_id: run.run_id.clone(),
        feature_names: keep.to_vec(),
        timestamps: run.timestamps.clone(),
        columns,
        labels: run.labels.clone(),
    })
}

/// Stride-1 windows of length `j` inside each run; the label of a window is
/// the label of its last sample.
pub fn make_windows(runs: &[DenseRun], j: usize, class_count: usize) -> Result<WindowedDataset> {
    make_windows_strided(runs, j, 1, class_count)
}

/// Like [`make_windows`] but only keeps every `stride`-th window of each run
/// (the first window of each run is always kept).
pub fn make_windows_strided(runs: &[DenseRun], j: usize, stride: usize, class_count: usize) -> Result<WindowedDataset> {
    if j == 0 {
        return Err(Error::config("window", "window length must be at least 1"));
    }
    if stride == 0 {
        return Err(Error::config("stride", "window stride must be at least 1"));
    }
    let n = runs.first().map(|r| r.columns.len()).unwrap_or(0);
    let mut ds = WindowedDataset {
        windows: Vec::new(),
        labels: Vec::new(),
        origins: Vec::new(),
        run_ids: Vec::with_capacity(runs.len()),
        j,
        n,
        class_count,
    };
    for (r, run) in runs.iter().enumerate() {
        if run.columns.len() != n {
            return Err(Error::shape(format!(
                "run `{}` has {} features, expected {n}",
                run.run_id,
                run.columns.len()
            )));
        }
        let k = run.len();
        if k < j {
            return Err(Error::shape(format!(
                "run `{}` has {k} samples, shorter than window {j}",
                run.run_id
            )));
        }
        if let Some(&bad) = run.labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::shape(format!(
                "run `{}` has label {bad} out of range",
                run.run_id
            )));
        }
        ds.run_ids.push(run.run_id.clone());
        for t in (j - 1..k).step_by(stride) {
            for s in t + 1 - j..=t {
                for col in &run.columns {
                    let v = col[s];
                    if !v.is_finite() {
                        return Err(Error::shape(format!(
                            "run `{}` has a non-finite value at sample {s}",
                            run.run_id
                        )));
                    }
                    ds.windows.push(v);
                }
            }
            ds.labels.push(run.labels[t]);
            ds.origins.push(WindowOrigin { run: r, t });
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fill_examples() {
        assert_eq!(
            fill_missing(&[None, Some(3.0), None, None, Some(7.0)]).unwrap(),
            vec![3.0, 3.0, 3.0, 3.0, 7.0]
        );
        assert_eq!(fill_missing(&[Some(5.0); 3]).unwrap(), vec![5.0; 3]);
        assert_eq!(fill_missing(&[None, None, Some(2.0)]).unwrap(), vec![2.0; 3]);
        assert!(matches!(fill_missing(&[None, None]), Err(Error::Preprocess { .. })));
    }

    #[test]
    fn rolling_examples() {
        assert_eq!(rolling_mean(&[1.0, 3.0, 5.0], 2).unwrap(), vec![1.0, 2.0, 4.0]);
        let col = [0.3, -2.0, 8.5];
        assert_eq!(rolling_mean(&col, 1).unwrap(), col.to_vec());
        assert_eq!(rolling_mean(&[4.25; 6], 4).unwrap(), vec![4.25; 6]);
        assert!(matches!(rolling_mean(&col, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn max_gap_examples() {
        assert_eq!(max_gap(&[None, None, Some(1.0), None, Some(2.0)]), 2);
        assert_eq!(max_gap(&[Some(1.0), Some(2.0)]), 0);
        assert_eq!(max_gap(&[None; 5]), 5);
    }

    #[test]
    fn minmax_examples() {
        let names = vec!["a".to_string()];
        let p = minmax_fit(&[vec![0.0, 5.0, 10.0]], &names).unwrap();
        assert_eq!(
            minmax_apply(&[vec![0.0, 5.0, 10.0]], &p).unwrap(),
            vec![vec![0.0, 0.5, 1.0]]
        );
        assert_eq!(minmax_apply(&[vec![12.0]], &p).unwrap(), vec![vec![1.2]]);
        let c = minmax_fit(&[vec![3.0; 4]], &names).unwrap();
        assert_eq!(minmax_apply(&[vec![3.0; 4]], &c).unwrap(), vec![vec![0.0; 4]]);
        assert!(matches!(
            minmax_apply(&[vec![1.0], vec![2.0]], &p),
            Err(Error::Shape(_))
        ));
    }

    fn dense(id: &str, k: usize, n: usize, label: usize) -> DenseRun {
        DenseRun {
            run_id: id.into(),
            feature_names: (0..n).map(|f| format!("f{f}")).collect(),
            columns: (0..n).map(|f| (0..k).map(|t| (t * 10 + f) as f64).collect()).collect(),
            labels: vec![label; k],
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&[dense("a", 100, 3, 0)], 30, 2).unwrap().len(), 71);
        let two = make_windows(&[dense("a", 30, 3, 0), dense("b", 30, 3, 1)], 30, 2).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two.labels, vec![0, 1]);
        let err = make_windows(&[dense("short", 10, 3, 0)], 30, 2).unwrap_err();
        assert!(err.to_string().contains("short"));
    }

    #[test]
    fn j1_windows_are_samples() {
        let mut run = dense("a", 5, 2, 0);
        run.labels = vec![0, 1, 1, 0, 1];
        let ds = make_windows(&[run.clone()], 1, 2).unwrap();
        assert_eq!(ds.labels, run.labels);
        for t in 0..5 {
            assert_eq!(ds.window(t), &[run.columns[0][t], run.columns[1][t]]);
        }
    }

    #[test]
    fn windows_are_row_major_and_end_at_t() {
        let ds = make_windows(&[dense("a", 4, 2, 0)], 3, 1).unwrap();
        assert_eq!(ds.window(0), &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]);
        assert_eq!(ds.origins[1], WindowOrigin { run: 0, t: 3 });
    }

    #[test]
    fn windows_never_span_runs() {
        // sentinel labels at every run boundary: a window that straddled two runs
        // would pick up the sentinel of the next run's first sample as a value
        let mut a = dense("a", 12, 1, 0);
        let mut b = dense("b", 12, 1, 1);
        a.columns[0] = vec![1.0; 12];
        b.columns[0] = vec![-1.0; 12];
        a.labels[11] = 1;
        b.labels[0] = 0;
        let ds = make_windows(&[a, b], 5, 2).unwrap();
        for i in 0..ds.len() {
            let w = ds.window(i);
            assert!(w.iter().all(|&v| v == w[0]), "window {i} mixes runs: {w:?}");
        }
        assert_eq!(ds.len(), 16);
    }

    #[test]
    fn strided_windows_subsample() {
        let ds = make_windows_strided(&[dense("a", 100, 1, 0)], 30, 10, 1).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.origins[1].t, 39);
    }

    #[test]
    fn select_features_subsets() {
        let run = SensorRun::new(
            "r",
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0, 1.0],
            vec![vec![Some(1.0); 2], vec![Some(2.0); 2], vec![Some(3.0); 2]],
            vec![0, 0],
            1,
        )
        .unwrap();
        let sub = select_features(&run, &["c".into(), "a".into()]).unwrap();
        assert_eq!(sub.columns, vec![vec![Some(3.0); 2], vec![Some(1.0); 2]]);
        assert_eq!(select_features(&run, &run.feature_names).unwrap(), run);
        assert!(matches!(
            select_features(&run, &["no_such".into()]),
            Err(Error::Config { .. })
        ));
    }

    fn sparse_column() -> impl Strategy<Value = Vec<Option<f64>>> {
        proptest::collection::vec(proptest::option::weighted(0.3, -100.0f64..100.0), 1..80)
            .prop_filter("needs a recorded value", |c| c.iter().any(Option::is_some))
    }

    proptest! {
        #[test]
        fn fill_total_and_idempotent(col in sparse_column()) {
            let once = fill_missing(&col).unwrap();
            prop_assert_eq!(once.len(), col.len());
            for (a, b) in col.iter().zip(&once) {
                if let Some(x) = a { prop_assert_eq!(x, b); }
            }
            let again = fill_missing(&once.iter().map(|&v| Some(v)).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(once, again);
        }

        #[test]
        fn rolling_bounds(col in proptest::collection::vec(-50.0f64..50.0, 1..60), w in 1usize..12) {
            let out = rolling_mean(&col, w).unwrap();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(out.len(), col.len());
            for v in out { prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12); }
        }

        #[test]
        fn minmax_on_fit_data_in_unit_interval(col in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
            let names = vec!["x".to_string()];
            let p = minmax_fit(std::slice::from_ref(&col), &names).unwrap();
            for v in &minmax_apply(&[col], &p).unwrap()[0] {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        #[test]
        fn smoothing_window_straddles_every_gap(col in sparse_column()) {
            let w = max_gap(&col) + 1;
            for t in (w - 1)..col.len() {
                prop_assert!(col[t + 1 - w..=t].iter().any(Option::is_some));
            }
        }
    }
}
