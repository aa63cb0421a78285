use pathseg::metrics::{accuracy_score, confusion_counts, loc_score, PredictionTrace, RunTrace};
use proptest::prelude::*;

/// Block-structured truth with noisy predictions, spread over 1 to 3 runs.
fn trace() -> impl Strategy<Value = PredictionTrace> {
    let run = (
        2usize..6,
        prop::collection::vec((1usize..12, 0usize..5), 1..8),
        any::<u64>(),
    )
        .prop_map(|(classes, blocks, seed)| {
            let mut truth = Vec::new();
            for (len, c) in blocks {
                truth.extend(std::iter::repeat_n(c % classes, len));
            }
            let mut s = seed;
            let predicted = truth
                .iter()
                .map(|&t| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    if (s >> 60) < 9 {
                        t
                    } else {
                        ((s >> 33) as usize) % classes
                    }
                })
                .collect();
            (truth, predicted)
        });
    prop::collection::vec(run, 1..4).prop_map(|runs| PredictionTrace {
        runs: runs
            .into_iter()
            .enumerate()
            .map(|(i, (truth, predicted))| RunTrace {
                run_id: format!("run_{i}"),
                timesteps: (0..truth.len()).map(|t| t + 29).collect(),
                truth,
                predicted,
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn loc_score_laws(tr in trace()) {
        let acc = accuracy_score(&tr).unwrap();
        prop_assert_eq!(loc_score(&tr, 0).unwrap(), acc);
        let mut last = acc;
        for tau in 1..16 {
            let loc = loc_score(&tr, tau).unwrap();
            prop_assert!(loc >= last);
            prop_assert!(loc <= 1.0);
            last = loc;
        }
    }

    #[test]
    fn relabeling_preserves_both_metrics(tr in trace(), shift in 1usize..5) {
        let permuted = PredictionTrace {
            runs: tr.runs.iter().map(|r| RunTrace {
                truth: r.truth.iter().map(|&c| (c + shift) % 5).collect(),
                predicted: r.predicted.iter().map(|&c| (c + shift) % 5).collect(),
                ..r.clone()
            }).collect(),
        };
        prop_assert_eq!(accuracy_score(&tr).unwrap(), accuracy_score(&permuted).unwrap());
        prop_assert_eq!(loc_score(&tr, 3).unwrap(), loc_score(&permuted, 3).unwrap());
    }

    #[test]
    fn accuracy_is_confusion_trace(tr in trace()) {
        let m = confusion_counts(&tr, 5).unwrap();
        let total: usize = m.iter().flatten().sum();
        let diag: usize = (0..5).map(|i| m[i][i]).sum();
        prop_assert_eq!(total, tr.len());
        prop_assert_eq!(accuracy_score(&tr).unwrap(), diag as f64 / total as f64);
    }
}

#[test]
fn early_switch_is_forgiven() {
    let tr = PredictionTrace::from_sequences(vec![0, 0, 0, 1, 1], vec![0, 0, 1, 1, 1]).unwrap();
    assert_eq!(loc_score(&tr, 1).unwrap(), 1.0);
    assert_eq!(loc_score(&tr, 0).unwrap(), 0.8);
}

#[test]
fn random_guessing_scores_one_in_eight() {
    let mut s = 5u64;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 33) % 8) as usize
    };
    let truth: Vec<usize> = (0..10_000).map(|_| next()).collect();
    let pred: Vec<usize> = (0..10_000).map(|_| next()).collect();
    let acc = accuracy_score(&PredictionTrace::from_sequences(truth, pred).unwrap()).unwrap();
    assert!((acc - 0.125).abs() < 0.01, "{acc}");
}

#[test]
fn negative_tau_is_rejected() {
    let tr = PredictionTrace::from_sequences(vec![0, 1], vec![0, 1]).unwrap();
    assert!(matches!(loc_score(&tr, -1), Err(pathseg::Error::Domain(_))));
    assert!(accuracy_score(&PredictionTrace::default()).is_err());
}
