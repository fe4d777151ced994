//! Surrogate quality metrics: exact-match accuracy, rate gap against the
//! solver labels, and wall-clock comparison with the iterative solver.

use std::time::Instant;

use crate::association::{solve_association, AssociationMatrix};
use crate::error::{Error, Result};
use crate::rates::{log2, LinkGains};
use crate::scenario::ValidatedScenario;
use crate::surrogate::dataset::Dataset;
use crate::surrogate::encoding::{decode_codes, decode_output};
use crate::surrogate::fnn::FnnModel;

/// Exact-match percentage: a prediction counts only if the whole matrix
/// equals the target.
pub fn accuracy(preds: &[AssociationMatrix], targets: &[AssociationMatrix]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "accuracy",
            expected: targets.len(),
            actual: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::InvalidParameter {
            field: "accuracy",
            reason: "need at least one sample".into(),
        });
    }
    let hits = preds
        .iter()
        .zip(targets)
        .filter(|(p, t)| p == t)
        .count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Evaluation summary on a dataset split.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy_pct: f64,
    /// Mean relative upper-bound sum-rate gap of predictions vs labels,
    /// evaluated on the stored gain features.
    pub mean_rate_gap_pct: f64,
    /// Wall-clock seconds for batched inference over the split.
    pub inference_seconds: f64,
    pub samples: usize,
}

fn gains_of_sample(ds: &Dataset, idx: usize) -> LinkGains {
    let s = &ds.samples[idx];
    let k = ds.num_users;
    LinkGains {
        beta_direct: s.features[..k].to_vec(),
        beta_reflect: (0..ds.num_tiles)
            .map(|i| s.features[k + i * k..k + (i + 1) * k].to_vec())
            .collect(),
    }
}

/// Upper-bound sum rate of an association on a sample's stored gain table.
fn feature_sum_upper(
    gains: &LinkGains,
    a: &AssociationMatrix,
    scn: &ValidatedScenario,
) -> f64 {
    (0..gains.num_users())
        .map(|k| {
            let amp: f64 = (0..gains.num_tiles())
                .filter(|&i| a.user_of(i) == Some(k))
                .map(|i| gains.beta_reflect[i][k])
                .sum::<f64>()
                + gains.beta_direct[k];
            scn.cfg.bandwidth_hz * log2(1.0 + amp * amp / scn.noise_w[k])
        })
        .sum()
}

/// Run the model over one split (`indices`) and score it against the stored
/// labels. `repair` switches quota repair on in the decoder.
pub fn evaluate_surrogate(
    model: &FnnModel,
    ds: &Dataset,
    indices: &[usize],
    scn: &ValidatedScenario,
    repair: bool,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::InvalidParameter {
            field: "split",
            reason: "empty evaluation split".into(),
        });
    }
    let x = ds.features_of(indices);
    let start = Instant::now();
    let y = model.forward_batch(&x)?;
    let inference_seconds = start.elapsed().as_secs_f64();

    let mut preds = Vec::with_capacity(indices.len());
    let mut targets = Vec::with_capacity(indices.len());
    let mut gap_sum = 0.0;
    for (col, &idx) in indices.iter().enumerate() {
        let codes: Vec<f64> = (0..ds.num_tiles)
            .map(|i| model.unscale_code(y[(i, col)]))
            .collect();
        let pred = decode_output(&codes, &scn.quotas, ds.num_users, repair);
        let label = decode_codes(&ds.samples[idx].target, ds.num_users)?;
        let gains = gains_of_sample(ds, idx);
        let label_rate = feature_sum_upper(&gains, &label, scn);
        let pred_rate = feature_sum_upper(&gains, &pred, scn);
        if label_rate > 0.0 {
            gap_sum += ((label_rate - pred_rate) / label_rate).max(0.0);
        }
        preds.push(pred);
        targets.push(label);
    }
    Ok(EvalReport {
        accuracy_pct: accuracy(&preds, &targets)?,
        mean_rate_gap_pct: 100.0 * gap_sum / indices.len() as f64,
        inference_seconds,
        samples: indices.len(),
    })
}

/// Wall-clock for the iterative association solver over the same samples,
/// consuming the stored gain tables. The work is identical to what the
/// surrogate replaces.
pub fn bench_solver(
    ds: &Dataset,
    indices: &[usize],
    scn: &ValidatedScenario,
) -> Result<f64> {
    let start = Instant::now();
    for &idx in indices {
        let gains = gains_of_sample(ds, idx);
        let a = solve_association(&gains, scn, None)?;
        std::hint::black_box(&a);
    }
    Ok(start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(assign: Vec<Option<usize>>) -> AssociationMatrix {
        AssociationMatrix::from_assignment(assign, 2).unwrap()
    }

    #[test]
    fn accuracy_whole_matrix_indicator() {
        let t = vec![
            mat(vec![Some(0), Some(1)]),
            mat(vec![Some(1), Some(0)]),
            mat(vec![Some(0), Some(1)]),
            mat(vec![Some(1), Some(0)]),
        ];
        // One wrong entry in one matrix of four: 75%.
        let mut p = t.clone();
        p[2] = mat(vec![Some(1), Some(1)]);
        assert_eq!(accuracy(&p, &t).unwrap(), 75.0);
        assert_eq!(accuracy(&t, &t).unwrap(), 100.0);

        let nine_of_ten: Vec<_> = (0..10)
            .map(|i| {
                if i == 0 {
                    mat(vec![Some(1), Some(1)])
                } else {
                    mat(vec![Some(0), Some(1)])
                }
            })
            .collect();
        let all = vec![mat(vec![Some(0), Some(1)]); 10];
        assert_eq!(accuracy(&nine_of_ten, &all).unwrap(), 90.0);
    }

    #[test]
    fn accuracy_rejects_mismatched_lengths() {
        let a = vec![mat(vec![Some(0)])];
        assert!(accuracy(&a, &[]).is_err());
    }
}
