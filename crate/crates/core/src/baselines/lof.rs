use super::check_same_dim;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::sq_dist_between;
use crate::scores::ScoreSet;

const DIST_FLOOR: f64 = 1e-12;

/// Indices and distances of the `k` nearest reference columns to query
/// column `q`, skipping reference column `skip`. Ties go to the smaller index.
fn nearest(reference: &Dataset, query: &Dataset, q: usize, k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
    let (r, x) = (reference.features(), query.features());
    let mut cand: Vec<(f64, usize)> = (0..reference.len())
        .filter(|&j| Some(j) != skip)
        .map(|j| (sq_dist_between(x, q, r, j).sqrt(), j))
        .collect();
    cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    cand
}

fn mean_distance(nbrs: &[(f64, usize)]) -> f64 {
    (nbrs.iter().map(|n| n.0).sum::<f64>() / nbrs.len() as f64).max(DIST_FLOOR)
}

/// Density proxy `g` of every reference point: the inverse mean distance to
/// its `k` nearest other reference points.
fn reference_density(reference: &Dataset, k: usize) -> Vec<f64> {
    (0..reference.len())
        .map(|j| 1.0 / mean_distance(&nearest(reference, reference, j, k, Some(j))))
        .collect()
}

fn check_k(reference: &Dataset, k: usize) -> Result<()> {
    if k == 0 || k >= reference.len() {
        return Err(Error::InvalidK { k, m: reference.len() });
    }
    Ok(())
}

/// Raw LOF values `(1/K) sum_k g(nn_k(x)) / g(x)` for new query points.
pub fn lof_values(reference: &Dataset, query: &Dataset, k: usize) -> Result<Vec<f64>> {
    check_same_dim(reference, query)?;
    check_k(reference, k)?;
    let g = reference_density(reference, k);
    Ok((0..query.len())
        .map(|q| {
            let nbrs = nearest(reference, query, q, k, None);
            let g_x = 1.0 / mean_distance(&nbrs);
            nbrs.iter().map(|&(_, j)| g[j]).sum::<f64>() / (k as f64 * g_x)
        })
        .collect())
}

/// Inverted LOF (`1 / LOF`) of query points against a reference sample.
pub fn lof_score(reference: &Dataset, query: &Dataset, k: usize) -> Result<ScoreSet> {
    let lof = lof_values(reference, query, k)?;
    ScoreSet::new(query.sample_ids().to_vec(), lof.into_iter().map(|v| 1.0 / v).collect(), None)
}

/// Inverted LOF of the reference points themselves, each excluded from its
/// own neighborhood.
pub fn lof_score_in_sample(reference: &Dataset, k: usize) -> Result<ScoreSet> {
    check_k(reference, k)?;
    let g = reference_density(reference, k);
    let scores = (0..reference.len())
        .map(|j| {
            let nbrs = nearest(reference, reference, j, k, Some(j));
            let lof = nbrs.iter().map(|&(_, i)| g[i]).sum::<f64>() / (k as f64 * g[j]);
            1.0 / lof
        })
        .collect();
    ScoreSet::new(reference.sample_ids().to_vec(), scores, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn points(d: usize, values: &[f64], prefix: &str) -> Dataset {
        Dataset::from_matrix(DMatrix::from_column_slice(d, values.len() / d, values), prefix).unwrap()
    }

    /// Brute-force LOF straight from the definition, on a full distance table.
    fn oracle_lof(all: &[f64], target: usize, k: usize) -> f64 {
        let knn = |i: usize| {
            let mut d: Vec<(f64, usize)> = (0..all.len())
                .filter(|&j| j != i)
                .map(|j| ((all[i] - all[j]).abs(), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d
        };
        let g = |i: usize| {
            let n = knn(i);
            1.0 / (n.iter().map(|x| x.0).sum::<f64>() / k as f64).max(DIST_FLOOR)
        };
        knn(target).iter().map(|&(_, j)| g(j)).sum::<f64>() / (k as f64 * g(target))
    }

    #[test]
    fn grid_interior_is_one() {
        let grid: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let s = lof_score_in_sample(&points(1, &grid, "g"), 2).unwrap();
        for i in 2..19 {
            let lof = 1.0 / s.scores()[i];
            assert!((lof - oracle_lof(&grid, i, 2)).abs() < 1e-12);
            assert!((lof - 1.0).abs() <= 0.05, "point {i}: {lof}");
        }
    }

    #[test]
    fn isolated_query_is_outlying() {
        let cluster: Vec<f64> = (0..10).flat_map(|i| [i as f64 * 0.1, (i % 3) as f64 * 0.1]).collect();
        let reference = points(2, &cluster, "c");
        let far = points(2, &[8.0, 8.0], "q");
        let lof = lof_values(&reference, &far, 3).unwrap()[0];
        assert!(lof > 2.0, "{lof}");
        assert!(lof_score(&reference, &far, 3).unwrap().scores()[0] < 0.5);
    }

    #[test]
    fn query_on_cluster_point() {
        let cluster: Vec<f64> = (0..10).flat_map(|i| [i as f64 * 0.1, (i % 3) as f64 * 0.1]).collect();
        let reference = points(2, &cluster, "c");
        let on = points(2, &[0.4, 0.1], "q");
        let lof = lof_values(&reference, &on, 3).unwrap()[0];
        assert!(lof <= 1.1, "{lof}");
    }

    #[test]
    fn duplicates_do_not_divide_by_zero() {
        let reference = points(1, &[1.0, 1.0, 1.0, 1.0], "r");
        let s = lof_score_in_sample(&reference, 2).unwrap();
        assert!(s.scores().iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn invalid_k() {
        let reference = points(1, &[0.0, 1.0], "r");
        assert!(lof_score(&reference, &reference, 2).is_err());
        assert!(lof_score(&reference, &reference, 0).is_err());
    }
}
