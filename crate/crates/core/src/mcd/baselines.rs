use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::median;
use crate::error::{Error, Result};
use crate::rng;
use crate::stealth::{distance, Point};

/// Modified z-score constant (MAD of a standard normal is 0.6745).
const MAD_TO_Z: f64 = 0.6745;

/// Flags from one baseline defense, plus clients it could not score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineFlags {
    pub flagged: Vec<usize>,
    pub excluded: Vec<usize>,
}

fn mad(values: &[f64], med: f64) -> f64 {
    median(&values.iter().map(|v| (v - med).abs()).collect::<Vec<_>>())
}

fn need_three(n: usize, what: &str) -> Result<()> {
    if n < 3 {
        return Err(Error::precondition(format!("{what} needs at least 3 clients, got {n}")));
    }
    Ok(())
}

/// Flag clients whose mean 2-D point has modified z-score above `z_thresh`
/// in either coordinate. Coordinates with zero MAD are ignored.
pub fn pca_outlier_defense(means: &[(usize, Point)], z_thresh: f64) -> Result<BaselineFlags> {
    need_three(means.len(), "PCA-outlier defense")?;
    let mut flagged = Vec::new();
    let stats: Vec<(f64, f64)> = (0..2)
        .map(|k| {
            let col: Vec<f64> = means.iter().map(|(_, p)| p[k]).collect();
            let m = median(&col);
            (m, mad(&col, m))
        })
        .collect();
    for (id, p) in means {
        let out = stats
            .iter()
            .enumerate()
            .any(|(k, &(m, s))| s > 0.0 && MAD_TO_Z * (p[k] - m).abs() / s > z_thresh);
        if out {
            flagged.push(*id);
        }
    }
    Ok(BaselineFlags {
        flagged,
        excluded: Vec::new(),
    })
}

/// Mean of each usable client's pairwise statistic against every other one.
fn pairwise_means(updates: &[(usize, Vec<f64>)], stat: impl Fn(f64) -> f64) -> (Vec<(usize, f64)>, Vec<usize>) {
    let norms: Vec<f64> = updates.iter().map(|(_, u)| u.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let usable: Vec<usize> = (0..updates.len()).filter(|&i| norms[i] > 0.0).collect();
    let excluded = (0..updates.len()).filter(|&i| norms[i] == 0.0).map(|i| updates[i].0).collect();
    let means = usable
        .iter()
        .map(|&i| {
            let others = usable.iter().filter(|&&j| j != i);
            let total: f64 = others
                .clone()
                .map(|&j| {
                    let dot: f64 = updates[i].1.iter().zip(&updates[j].1).map(|(a, b)| a * b).sum();
                    stat((dot / (norms[i] * norms[j])).clamp(-1.0, 1.0))
                })
                .sum();
            (updates[i].0, total / (usable.len() - 1).max(1) as f64)
        })
        .collect();
    (means, excluded)
}

/// Flag clients whose mean cosine similarity to the others falls below
/// `median - 3 MAD`. Zero-norm updates are excluded and reported.
pub fn cosine_pairs_defense(updates: &[(usize, Vec<f64>)]) -> Result<BaselineFlags> {
    need_three(updates.len(), "cosine-pairs defense")?;
    let (means, excluded) = pairwise_means(updates, |c| c);
    let vals: Vec<f64> = means.iter().map(|(_, v)| *v).collect();
    let m = median(&vals);
    let thr = m - 3.0 * mad(&vals, m);
    Ok(BaselineFlags {
        flagged: means.iter().filter(|(_, v)| *v < thr).map(|(id, _)| *id).collect(),
        excluded,
    })
}

/// Flag clients whose mean angle to the others exceeds `median + 3 MAD`.
pub fn angle_deviation_defense(updates: &[(usize, Vec<f64>)]) -> Result<BaselineFlags> {
    need_three(updates.len(), "angle-deviation defense")?;
    let (means, excluded) = pairwise_means(updates, f64::acos);
    let vals: Vec<f64> = means.iter().map(|(_, v)| *v).collect();
    let m = median(&vals);
    let thr = m + 3.0 * mad(&vals, m);
    Ok(BaselineFlags {
        flagged: means.iter().filter(|(_, v)| *v > thr).map(|(id, _)| *id).collect(),
        excluded,
    })
}

/// 2-means on per-client points with a seeded farthest-point start. The smaller
/// cluster is flagged only if it holds at most 40% of clients and the centroids
/// sit more than twice the pooled within-cluster mean distance apart.
pub fn kmeans2_defense(points: &[(usize, Point)], seed: u64) -> Result<BaselineFlags> {
    need_three(points.len(), "2-means defense")?;
    let n = points.len();
    let first = rng::stream(seed, "kmeans2-init", &[]).random_range(0..n);
    let second = (0..n)
        .max_by(|&a, &b| {
            distance(points[a].1, points[first].1)
                .total_cmp(&distance(points[b].1, points[first].1))
                .then(b.cmp(&a))
        })
        .expect("n >= 3");
    let mut centers = [points[first].1, points[second].1];
    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        let next: Vec<usize> = points
            .iter()
            .map(|(_, p)| usize::from(distance(*p, centers[1]) < distance(*p, centers[0])))
            .collect();
        let changed = next != assign;
        assign = next;
        for (k, c) in centers.iter_mut().enumerate() {
            let members: Vec<Point> = points.iter().zip(&assign).filter(|(_, &a)| a == k).map(|((_, p), _)| *p).collect();
            if let Some(m) = crate::stealth::centroid(&members) {
                *c = m;
            }
        }
        if !changed {
            break;
        }
    }
    let sizes = [assign.iter().filter(|&&a| a == 0).count(), assign.iter().filter(|&&a| a == 1).count()];
    let small = if sizes[0] <= sizes[1] { 0 } else { 1 };
    let within = points.iter().zip(&assign).map(|((_, p), &a)| distance(*p, centers[a])).sum::<f64>() / n as f64;
    let separated = distance(centers[0], centers[1]) > 2.0 * within;
    let minority = sizes[small] > 0 && (sizes[small] as f64) <= 0.4 * n as f64;
    let flagged = if separated && minority {
        points.iter().zip(&assign).filter(|(_, &a)| a == small).map(|((id, _), _)| *id).collect()
    } else {
        Vec::new()
    };
    Ok(BaselineFlags {
        flagged,
        excluded: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, r: f64) -> Vec<(usize, Point)> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 2.399;
                (i, [r * a.cos(), r * a.sin()])
            })
            .collect()
    }

    #[test]
    fn pca_outlier_flags_gross_outlier() {
        let mut pts = ring(10, 1.0);
        assert!(pca_outlier_defense(&pts, 3.5).unwrap().flagged.is_empty());
        pts.push((10, [40.0, 0.0]));
        assert_eq!(pca_outlier_defense(&pts, 3.5).unwrap().flagged, vec![10]);
        let same: Vec<_> = (0..5).map(|i| (i, [1.0, 1.0])).collect();
        assert!(pca_outlier_defense(&same, 3.5).unwrap().flagged.is_empty());
    }

    #[test]
    fn cosine_and_angle_flag_opposed_updates() {
        let mut ups: Vec<(usize, Vec<f64>)> = (0..6).map(|i| (i, vec![1.0, 0.1 * i as f64, 0.5])).collect();
        assert!(cosine_pairs_defense(&ups).unwrap().flagged.is_empty());
        ups.push((6, vec![-1.0, 0.0, -0.5]));
        ups.push((7, vec![0.0, 0.0, 0.0]));
        let c = cosine_pairs_defense(&ups).unwrap();
        assert_eq!(c.flagged, vec![6]);
        assert_eq!(c.excluded, vec![7]);
        let ident: Vec<(usize, Vec<f64>)> = (0..5).map(|i| (i, vec![2.0, 1.0])).collect();
        assert!(cosine_pairs_defense(&ident).unwrap().flagged.is_empty());
        assert!(angle_deviation_defense(&ident).unwrap().flagged.is_empty());
        let mut orth: Vec<(usize, Vec<f64>)> = (0..6).map(|i| (i, vec![1.0, 0.0, 0.01 * i as f64])).collect();
        orth.push((6, vec![0.0, 1.0, 0.0]));
        assert_eq!(angle_deviation_defense(&orth).unwrap().flagged, vec![6]);
    }

    #[test]
    fn kmeans_separates_planted_minority() {
        let mut pts = ring(12, 0.5);
        for i in 0..4 {
            pts.push((12 + i, [20.0 + 0.1 * i as f64, 20.0]));
        }
        assert_eq!(kmeans2_defense(&pts, 3).unwrap().flagged, vec![12, 13, 14, 15]);
        assert!(kmeans2_defense(&ring(16, 1.0), 3).unwrap().flagged.is_empty());
    }
}
