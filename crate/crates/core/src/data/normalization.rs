use crate::data::examples::TrainingExample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const STD_FLOOR: f64 = 1e-6;

/// Per-bin statistics of log-magnitude features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats<T> {
    pub mean: Vec<T>,
    /// Sample standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<T>,
    pub count: usize,
}

/// Single-pass (Welford) statistics over the newest frame of each example,
/// so every frame of an utterance contributes once.
pub fn fit_normalization<'a, T: Scalar + 'a>(
    examples: impl IntoIterator<Item = &'a TrainingExample<T>>,
) -> Result<FeatureStats<T>> {
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for ex in examples {
        let row = ex.newest_frame();
        if count == 0 {
            mean = vec![0.0; row.len()];
            m2 = vec![0.0; row.len()];
        } else if row.len() != mean.len() {
            return Err(Error::data("examples disagree on bin count"));
        }
        count += 1;
        for (b, &v) in row.iter().enumerate() {
            let v = v.as_f64();
            let delta = v - mean[b];
            mean[b] += delta / count as f64;
            m2[b] += delta * (v - mean[b]);
        }
    }
    if count == 0 {
        return Err(Error::data("cannot fit normalization on an empty example stream"));
    }
    if count < 2 {
        return Err(Error::data("normalization needs at least 2 examples"));
    }
    let std = m2
        .iter()
        .map(|&s| T::of((s / (count - 1) as f64).sqrt().max(STD_FLOOR)))
        .collect();
    Ok(FeatureStats {
        mean: mean.into_iter().map(T::of).collect(),
        std,
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example(newest: Vec<f64>) -> TrainingExample<f64> {
        let nb = newest.len();
        let mut features = vec![-100.0; nb];
        features.extend(newest);
        TrainingExample {
            utterance: 0,
            frame: 1,
            features,
            raw: vec![],
            clean_target: vec![0.0; nb],
            noise_target: vec![0.0; nb],
        }
    }

    #[test]
    fn hand_computed_pair() {
        let ex = [example(vec![0.0, 5.0]), example(vec![2.0, 5.0])];
        let s = fit_normalization(&ex).unwrap();
        assert!((s.mean[0] - 1.0).abs() < 1e-15);
        assert!((s.std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.std[1], STD_FLOOR);
        assert_eq!((5.0 - s.mean[1]) / s.std[1], 0.0);
    }

    #[test]
    fn empty_and_single_rejected() {
        let none: Vec<TrainingExample<f64>> = vec![];
        assert!(matches!(fit_normalization(&none), Err(Error::Data(_))));
        assert!(fit_normalization(&[example(vec![1.0])]).is_err());
    }

    proptest! {
        #[test]
        fn matches_two_pass(rows in proptest::collection::vec(proptest::collection::vec(-20.0f64..5.0, 3), 2..40)) {
            let ex: Vec<_> = rows.iter().cloned().map(example).collect();
            let s = fit_normalization(&ex).unwrap();
            let n = rows.len() as f64;
            for b in 0..3 {
                let mean = rows.iter().map(|r| r[b]).sum::<f64>() / n;
                let var = rows.iter().map(|r| (r[b] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                prop_assert!((s.mean[b] - mean).abs() < 1e-10);
                prop_assert!((s.std[b] - var.sqrt().max(STD_FLOOR)).abs() < 1e-10);
            }
        }
    }
}
