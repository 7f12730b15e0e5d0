use rayon::prelude::*;

use super::{check_labels, BinaryMatrix, Classifier};
use crate::encoder::EncodedName;
use crate::error::{Error, Result};

pub const KNN_K: usize = 5;

/// Squared Euclidean distance between two sparse binary rows: the size of
/// their symmetric difference.
fn squared_distance(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    a.len() + b.len() - 2 * common
}

/// Fraction of label 1 among the `k` nearest training rows, ties in
/// distance going to the lower training index.
pub fn knn_predict(x_train: &BinaryMatrix, y_train: &[u8], query: &[u32], k: usize) -> Result<f64> {
    check_labels(x_train, y_train)?;
    if k == 0 || x_train.rows() < k {
        return Err(Error::TooFewNeighbors {
            k,
            available: x_train.rows(),
        });
    }
    let mut dist: Vec<(usize, usize)> = (0..x_train.rows())
        .map(|i| (squared_distance(x_train.row(i), query), i))
        .collect();
    Ok(vote(&mut dist, y_train, k))
}

fn vote(dist: &mut [(usize, usize)], y: &[u8], k: usize) -> f64 {
    if k < dist.len() {
        dist.select_nth_unstable(k - 1);
    }
    let ones = dist[..k].iter().filter(|&&(_, i)| y[i] == 1).count();
    ones as f64 / k as f64
}

/// Stored training set with an inverted index from feature to rows, so a
/// query only touches rows sharing at least one feature with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub x: BinaryMatrix,
    pub y: Vec<u8>,
    pub k: usize,
    postings: Vec<Vec<u32>>,
}

impl Knn {
    pub fn fit(x: BinaryMatrix, y: Vec<u8>, k: usize) -> Result<Knn> {
        check_labels(&x, &y)?;
        if k == 0 || x.rows() < k {
            return Err(Error::TooFewNeighbors { k, available: x.rows() });
        }
        let mut postings = vec![Vec::new(); x.n_features()];
        for i in 0..x.rows() {
            for &f in x.row(i) {
                postings[f as usize].push(i as u32);
            }
        }
        Ok(Knn { x, y, k, postings })
    }

    pub fn predict_row(&self, query: &[u32]) -> f64 {
        let mut common = vec![0u32; self.x.rows()];
        for &f in query {
            if let Some(rows) = self.postings.get(f as usize) {
                for &r in rows {
                    common[r as usize] += 1;
                }
            }
        }
        let mut dist: Vec<(usize, usize)> = common
            .iter()
            .enumerate()
            .map(|(i, &c)| (self.x.row(i).len() + query.len() - 2 * c as usize, i))
            .collect();
        vote(&mut dist, &self.y, self.k)
    }

    pub fn predict_proba_rows(&self, x: &BinaryMatrix) -> Vec<f64> {
        (0..x.rows()).into_par_iter().map(|i| self.predict_row(x.row(i))).collect()
    }
}

impl Classifier for Knn {
    fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64> {
        self.predict_proba_rows(&BinaryMatrix::from_names(names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_with_one_neighbor() {
        let x = BinaryMatrix::from_dense(&[vec![1, 0, 1], vec![0, 1, 1], vec![1, 1, 0]]).unwrap();
        let y = [0, 1, 1];
        assert_eq!(knn_predict(&x, &y, &[1, 2], 1).unwrap(), 1.0);
        assert_eq!(knn_predict(&x, &y, &[0, 2], 1).unwrap(), 0.0);
    }

    #[test]
    fn whole_set_vote() {
        let x = BinaryMatrix::from_dense(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![0, 0], vec![1, 0]]).unwrap();
        let y = [1, 1, 1, 0, 0];
        assert_eq!(knn_predict(&x, &y, &[0], 5).unwrap(), 0.6);
        let model = Knn::fit(x.clone(), y.to_vec(), 5).unwrap();
        assert_eq!(model.predict_row(&[0]), 0.6);
    }

    #[test]
    fn ties_go_to_lower_index() {
        // all rows are at distance 1 from the empty query
        let x = BinaryMatrix::from_dense(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(knn_predict(&x, &[1, 0, 0], &[], 1).unwrap(), 1.0);
        assert_eq!(knn_predict(&x, &[0, 1, 1], &[], 2).unwrap(), 0.5);
    }

    #[test]
    fn too_few_neighbors() {
        let x = BinaryMatrix::from_dense(&[vec![1]]).unwrap();
        assert!(matches!(
            knn_predict(&x, &[1], &[0], 5),
            Err(Error::TooFewNeighbors { k: 5, available: 1 })
        ));
        assert!(Knn::fit(x, vec![1], 5).is_err());
    }

    #[test]
    fn distance_is_symmetric_difference() {
        assert_eq!(squared_distance(&[0, 2, 5], &[2, 3]), 3);
        assert_eq!(squared_distance(&[], &[]), 0);
    }
}
