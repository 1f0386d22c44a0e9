//! 1-nearest-neighbour classification.

use ndarray::ArrayView2;
use stochot::OtError;

/// Label of the nearest training point (squared Euclidean) for every query
/// row; ties go to the lowest training index.
pub fn knn_classify(train: ArrayView2<f64>, labels: &[usize], query: ArrayView2<f64>) -> Result<Vec<usize>, OtError> {
    if train.nrows() == 0 {
        return Err(OtError::InsufficientData { needed: 1, found: 0 });
    }
    if labels.len() != train.nrows() {
        return Err(OtError::DimensionMismatch {
            expected: train.nrows(),
            found: labels.len(),
        });
    }
    if query.ncols() != train.ncols() {
        return Err(OtError::DimensionMismatch {
            expected: train.ncols(),
            found: query.ncols(),
        });
    }
    let pred = query
        .rows()
        .into_iter()
        .map(|q| {
            let mut best = (f64::INFINITY, 0usize);
            for (k, t) in train.rows().into_iter().enumerate() {
                let d: f64 = q.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, k);
                }
            }
            labels[best.1]
        })
        .collect();
    Ok(pred)
}

/// Fraction of matching entries.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction and truth lengths differ");
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}
