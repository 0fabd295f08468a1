//! k-nearest-neighbour vertex classification with stratified random splits.

use anyhow::{bail, Result};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

/// Training indices: `floor(train_frac · n)` points apportioned across
/// classes by largest remainder, at least one per class and at least one
/// test point overall.
pub fn stratified_split<R: Rng + ?Sized>(labels: &[usize], train_frac: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    members.retain(|m| !m.is_empty());
    if members.len() < 2 {
        bail!("classification needs at least two classes");
    }
    let total = ((train_frac * n as f64).floor() as usize).clamp(members.len(), n - 1);

    let quotas: Vec<f64> = members.iter().map(|m| total as f64 * m.len() as f64 / n as f64).collect();
    let mut take: Vec<usize> = quotas.iter().zip(&members).map(|(q, m)| (q.floor() as usize).clamp(1, m.len())).collect();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut assigned: usize = take.iter().sum();
    for &c in order.iter().cycle().take(4 * members.len() * n) {
        if assigned == total {
            break;
        }
        if assigned < total && take[c] < members[c].len() {
            take[c] += 1;
            assigned += 1;
        } else if assigned > total && take[c] > 1 {
            take[c] -= 1;
            assigned -= 1;
        }
    }

    let mut train = Vec::with_capacity(total);
    let mut test = Vec::with_capacity(n - total);
    for (m, &k) in members.iter_mut().zip(&take) {
        m.shuffle(rng);
        train.extend_from_slice(&m[..k]);
        test.extend_from_slice(&m[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Majority vote among the `k` nearest training rows (Euclidean); ties go to
/// the tied class with the nearest member.
pub fn knn_predict(features: &DMatrix<f64>, labels: &[usize], train: &[usize], query: usize, k: usize) -> usize {
    let mut by_dist: Vec<(f64, usize)> = train
        .iter()
        .map(|&j| ((features.row(j) - features.row(query)).norm_squared(), j))
        .collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest = &by_dist[..k.min(by_dist.len())];
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut votes = vec![0usize; classes];
    for &(_, j) in nearest {
        votes[labels[j]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    nearest
        .iter()
        .map(|&(_, j)| labels[j])
        .find(|&c| votes[c] == top)
        .unwrap()
}

/// Mean test misclassification rate over `repeats` stratified splits.
pub fn knn_classify<R: Rng + ?Sized>(
    features: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    train_frac: f64,
    repeats: usize,
    rng: &mut R,
) -> Result<f64> {
    if k < 1 {
        bail!("k must be at least 1");
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        bail!("train_frac must lie in (0, 1), got {train_frac}");
    }
    if repeats < 1 {
        bail!("repeats must be at least 1");
    }
    if features.nrows() != labels.len() {
        bail!("{} feature rows but {} labels", features.nrows(), labels.len());
    }
    let mut total = 0.0;
    for _ in 0..repeats {
        let (train, test) = stratified_split(labels, train_frac, rng)?;
        let wrong = test
            .iter()
            .filter(|&&i| knn_predict(features, labels, &train, i, k) != labels[i])
            .count();
        total += wrong as f64 / test.len() as f64;
    }
    Ok(total / repeats as f64)
}
