//! How the transition tolerance turns late switches into hits.

use pathseg::metrics::{accuracy_score, loc_score, PredictionTrace};

fn main() -> pathseg::Result<()> {
    // truth switches 0 -> 1 at t = 6 and 1 -> 2 at t = 12; the model lags by 3
    let truth = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2];
    let pred = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2];
    let trace = PredictionTrace::from_sequences(truth.to_vec(), pred.to_vec())?;

    println!("accuracy {:.4}", accuracy_score(&trace)?);
    for tau in [0, 1, 2, 3, 4, 24] {
        println!("tau = {tau:>2}: loc-score {:.4}", loc_score(&trace, tau)?);
    }
    Ok(())
}
