use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ClassifierError;

/// Shuffled row indices grouped by class, in class order.
fn shuffled_classes<L: Ord>(labels: &[L], seed: u64, min_count: usize) -> Result<Vec<Vec<usize>>, ClassifierError> {
    let mut by_class: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(ClassifierError::DegenerateCorpus(format!("{} distinct class(es), need 2", by_class.len())));
    }
    if let Some(small) = by_class.values().map(Vec::len).min().filter(|&n| n < min_count) {
        return Err(ClassifierError::DegenerateCorpus(format!("a class has {small} samples, need {min_count}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(by_class
        .into_values()
        .map(|mut rows| {
            rows.shuffle(&mut rng);
            rows
        })
        .collect())
}

/// Splits row indices per class so each class keeps `round(n * train_frac)`
/// rows for training (at least one row on each side). Both index lists are
/// sorted.
pub fn stratified_split<L: Ord>(
    labels: &[L],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), ClassifierError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(ClassifierError::InvalidConfig(format!("train fraction {train_frac} not in (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rows in shuffled_classes(labels, seed, 2)? {
        let n = rows.len();
        let k = ((n as f64 * train_frac).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Test-fold indices for stratified k-fold. Class-grouped shuffled rows are
/// dealt round-robin, so fold sizes differ by at most one overall and per class.
pub fn stratified_folds<L: Ord>(labels: &[L], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifierError> {
    if k < 2 {
        return Err(ClassifierError::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let mut folds = vec![Vec::new(); k];
    for (i, row) in shuffled_classes(labels, seed, k)?.into_iter().flatten().enumerate() {
        folds[i % k].push(row);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}
