//! Stratified k-fold partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `0..labels.len()` into `k` stratified folds.
///
/// Each class is shuffled and dealt round-robin, continuing the rotation from where the
/// previous class stopped, so per-class and total fold sizes both differ by at most one.
pub fn kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>, EvalError> {
    if k < 2 || labels.len() < k {
        return Err(EvalError::TooFewSamples { samples: labels.len(), folds: k });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            tests[next].push(i);
            next = (next + 1) % k;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_entries_five_folds() {
        let labels = [0, 1, 2, 0, 1, 2, 0, 1, 2, 0];
        let folds = kfold_split(&labels, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
    }

    #[test]
    fn stratification_arithmetic() {
        let mut labels = vec![0; 50];
        labels.extend(vec![1; 30]);
        labels.extend(vec![2; 20]);
        for f in kfold_split(&labels, 5, 3).unwrap() {
            let count = |c| f.test.iter().filter(|&&i| labels[i] == c).count();
            assert_eq!((count(0), count(1), count(2)), (10, 6, 4));
        }
    }

    #[test]
    fn seeded() {
        let labels: Vec<usize> = (0..37).map(|i| i % 3).collect();
        assert_eq!(kfold_split(&labels, 5, 9).unwrap(), kfold_split(&labels, 5, 9).unwrap());
        assert_ne!(kfold_split(&labels, 5, 9).unwrap(), kfold_split(&labels, 5, 10).unwrap());
    }

    #[test]
    fn too_few() {
        assert!(matches!(kfold_split(&[0, 1], 5, 0), Err(EvalError::TooFewSamples { .. })));
        assert!(kfold_split(&[0, 1, 2], 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn partitions(labels in prop::collection::vec(0usize..3, 5..120), k in 2usize..6, seed in any::<u64>()) {
            let folds = kfold_split(&labels, k, seed).unwrap();
            let mut seen = vec![0; labels.len()];
            for f in &folds {
                for &i in &f.test { seen[i] += 1; }
                prop_assert_eq!(f.train.len() + f.test.len(), labels.len());
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
            for c in 0..3 {
                let counts: Vec<usize> = folds.iter().map(|f| f.test.iter().filter(|&&i| labels[i] == c).count()).collect();
                prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            }
        }
    }
}
