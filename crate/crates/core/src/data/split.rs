use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::examples::TrainingExample;
use crate::error::{Error, Result};

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<X> {
    pub train: Vec<X>,
    pub validation: Vec<X>,
    pub test: Vec<X>,
}

/// Partition sizes by largest remainder, with every nonzero fraction getting
/// at least one utterance.
fn partition_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split fractions {fractions:?} must be nonnegative and sum to 1")));
    }
    let needed = fractions.iter().filter(|&&f| f > 0.0).count();
    if n < needed {
        return Err(Error::data(format!(
            "{n} utterances cannot fill {needed} partitions"
        )));
    }
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for i in 0..3 {
        sizes[i] = exact[i].floor() as usize;
    }
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .partial_cmp(&(exact[a] - exact[a].floor()))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if fractions[i] > 0.0 {
            sizes[i] += 1;
            left -= 1;
        }
    }
    for i in 0..3 {
        while fractions[i] > 0.0 && sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| sizes[j]).unwrap();
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }
    Ok(sizes)
}

/// Seeded shuffle of utterance ids `0..n` into three groups.
pub fn split_utterances(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split<usize>> {
    let sizes = partition_sizes(n, fractions)?;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ids.split_off(sizes[0] + sizes[1]);
    let validation = ids.split_off(sizes[0]);
    Ok(Split {
        train: ids,
        validation,
        test,
    })
}

/// Splits examples so that no utterance appears in two partitions.
pub fn split_dataset<T: Clone>(
    examples: Vec<TrainingExample<T>>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<Split<TrainingExample<T>>> {
    let mut utterances: Vec<usize> = examples.iter().map(|e| e.utterance).collect();
    utterances.sort_unstable();
    utterances.dedup();
    let ids = split_utterances(utterances.len(), fractions, seed)?;
    let mut which = std::collections::HashMap::new();
    for (part, group) in [&ids.train, &ids.validation, &ids.test].into_iter().enumerate() {
        for &i in group {
            which.insert(utterances[i], part);
        }
    }
    let mut out = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for ex in examples {
        match which[&ex.utterance] {
            0 => out.train.push(ex),
            1 => out.validation.push(ex),
            _ => out.test.push(ex),
        }
    }
    Ok(out)
}
