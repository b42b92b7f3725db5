//! Local linear regression over a bounded sample memory.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{min_norm_solve, rmse_of, Dataset};

/// What to do when inserting into a full memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overflow {
    #[default]
    Reject,
    EvictOldest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlrMemory {
    regressors: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    capacity: usize,
    overflow: Overflow,
    /// Per-dimension distance weights; `None` is plain Euclidean.
    scaling: Option<Vec<f64>>,
}

impl LlrMemory {
    pub const DEFAULT_CAPACITY: usize = 1000;

    pub fn new(capacity: usize, overflow: Overflow) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("memory capacity must be positive".into()));
        }
        Ok(Self {
            regressors: Vec::new(),
            targets: Vec::new(),
            capacity,
            overflow,
            scaling: None,
        })
    }

    /// Memory filled with the first rows of `ds` (up to capacity).
    pub fn from_dataset(ds: &Dataset, capacity: usize) -> Result<Self> {
        let mut mem = Self::new(capacity, Overflow::Reject)?;
        for (x, y) in ds.rows().take(capacity) {
            mem.insert(x, y)?;
        }
        Ok(mem)
    }

    pub fn len(&self) -> usize {
        self.regressors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regressors.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Scale each regressor dimension by `1/range` of the stored samples
    /// before measuring distances.
    pub fn enable_range_scaling(&mut self) {
        let Some(first) = self.regressors.first() else { return };
        let dim = first.len();
        let weights = (0..dim)
            .map(|d| {
                let (lo, hi) = self
                    .regressors
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[d]), hi.max(r[d])));
                if hi > lo { 1.0 / (hi - lo) } else { 1.0 }
            })
            .collect();
        self.scaling = Some(weights);
    }

    /// Returns `false` when the memory is full and the sample was rejected.
    pub fn insert(&mut self, regressor: Vec<f64>, target: Vec<f64>) -> Result<bool> {
        if regressor.iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("memory samples must be finite".into()));
        }
        if let Some(first) = self.regressors.first() {
            if first.len() != regressor.len() || self.targets[0].len() != target.len() {
                return Err(Error::Dimension("sample shape differs from stored samples".into()));
            }
        }
        if self.len() == self.capacity {
            match self.overflow {
                Overflow::Reject => return Ok(false),
                Overflow::EvictOldest => {
                    self.regressors.remove(0);
                    self.targets.remove(0);
                }
            }
        }
        self.regressors.push(regressor);
        self.targets.push(target);
        Ok(true)
    }

    fn distance2(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.scaling {
            None => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Some(w) => a.iter().zip(b).zip(w).map(|((x, y), w)| ((x - y) * w).powi(2)).sum(),
        }
    }
}

/// Affine least-squares fit over the `k` nearest stored samples, evaluated
/// at `query`. Falls back to the neighbours' mean target when `k` is too
/// small for an affine fit or the local system is rank-deficient.
pub fn llr_predict(memory: &LlrMemory, query: &[f64], k: usize) -> Result<Vec<f64>> {
    if memory.is_empty() {
        return Err(Error::InsufficientData("LLR memory is empty".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let dim = memory.regressors[0].len();
    if query.len() != dim {
        return Err(Error::Dimension(format!("query of length {} for regressors of length {dim}", query.len())));
    }
    let mut order: Vec<(f64, usize)> = memory
        .regressors
        .iter()
        .enumerate()
        .map(|(i, r)| (memory.distance2(r, query), i))
        .collect();
    // stable by insertion index on equal distance
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nn: Vec<usize> = order.iter().take(k).map(|&(_, i)| i).collect();
    let n_t = memory.targets[0].len();
    let mean = |t: usize| nn.iter().map(|&i| memory.targets[i][t]).sum::<f64>() / nn.len() as f64;

    if nn.len() < dim + 2 {
        return Ok((0..n_t).map(mean).collect());
    }
    // centre on the query so the prediction is the fitted intercept
    let design = DMatrix::from_fn(nn.len(), dim + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            memory.regressors[nn[r]][c - 1] - query[c - 1]
        }
    });
    (0..n_t)
        .map(|t| {
            let rhs = DVector::from_iterator(nn.len(), nn.iter().map(|&i| memory.targets[i][t]));
            let (beta, rank) = min_norm_solve(design.clone(), rhs)?;
            Ok(if rank < dim + 1 { mean(t) } else { beta[0] })
        })
        .collect()
}

/// RMSE of [`llr_predict`] over every test row, per target.
pub fn llr_rmse(memory: &LlrMemory, test: &Dataset, k: usize) -> Result<Vec<f64>> {
    if test.n_rows() == 0 {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    let preds: Vec<Vec<f64>> = (0..test.n_rows())
        .into_par_iter()
        .map(|i| llr_predict(memory, &test.regressor_row(i), k))
        .collect::<Result<_>>()?;
    Ok((0..test.n_targets())
        .map(|t| {
            let p: Vec<f64> = preds.iter().map(|row| row[t]).collect();
            rmse_of(&p, test.target_column(t))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem(rows: &[(Vec<f64>, Vec<f64>)], cap: usize) -> LlrMemory {
        let mut m = LlrMemory::new(cap, Overflow::Reject).unwrap();
        for (x, y) in rows {
            m.insert(x.clone(), y.clone()).unwrap();
        }
        m
    }

    #[test]
    fn hand_worked_segment() {
        let m = mem(
            &[(vec![0.0], vec![0.0]), (vec![1.0], vec![1.0]), (vec![2.0], vec![4.0])],
            10,
        );
        let p = llr_predict(&m, &[1.5], 2).unwrap();
        // k=2 is below dim+2, so the neighbour mean is returned
        assert!((p[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn hand_worked_line_through_neighbours() {
        let m = mem(
            &[(vec![0.0], vec![0.0]), (vec![1.0], vec![1.0]), (vec![2.0], vec![4.0]), (vec![10.0], vec![0.0])],
            10,
        );
        // three nearest to 1.4: x=1,2,0; least-squares line is y = 2x - 1/3
        let p = llr_predict(&m, &[1.4], 3).unwrap();
        assert!((p[0] - (2.0 * 1.4 - 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_on_affine_data() {
        let rows: Vec<_> = (0..40)
            .map(|i| {
                let x = vec![(i as f64 * 0.37).sin() * 3.0, (i as f64 * 0.11).cos()];
                let y = vec![2.0 * x[0] - x[1] + 0.5, -x[0]];
                (x, y)
            })
            .collect();
        let m = mem(&rows, 100);
        for q in [[0.3, -0.2], [5.0, 7.0], [-2.0, 0.9]] {
            let p = llr_predict(&m, &q, 6).unwrap();
            assert!((p[0] - (2.0 * q[0] - q[1] + 0.5)).abs() < 1e-10);
            assert!((p[1] + q[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn nearest_neighbour_and_self_lookup() {
        let rows = vec![(vec![0.0, 0.0], vec![1.0]), (vec![1.0, 1.0], vec![2.0]), (vec![3.0, 0.0], vec![5.0])];
        let m = mem(&rows, 10);
        assert_eq!(llr_predict(&m, &[0.9, 1.2], 1).unwrap(), vec![2.0]);
        let ds = Dataset::from_rows(vec!["a".into(), "b".into()], vec!["a_next".into()], &rows).unwrap();
        assert_eq!(llr_rmse(&m, &ds, 1).unwrap(), vec![0.0]);
    }

    #[test]
    fn capacity_modes() {
        let mut m = LlrMemory::new(2, Overflow::Reject).unwrap();
        assert!(m.insert(vec![0.0], vec![0.0]).unwrap());
        assert!(m.insert(vec![1.0], vec![1.0]).unwrap());
        assert!(!m.insert(vec![2.0], vec![2.0]).unwrap());
        assert_eq!(m.len(), 2);
        let mut m = LlrMemory::new(2, Overflow::EvictOldest).unwrap();
        for i in 0..3 {
            m.insert(vec![i as f64], vec![i as f64]).unwrap();
        }
        assert_eq!(llr_predict(&m, &[0.0], 1).unwrap(), vec![1.0]);
        assert!(m.insert(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn empty_memory_is_an_error() {
        let m = LlrMemory::new(5, Overflow::Reject).unwrap();
        assert!(llr_predict(&m, &[0.0], 1).is_err());
    }

    #[test]
    fn ties_resolve_by_insertion_order() {
        let m = mem(&[(vec![1.0], vec![10.0]), (vec![-1.0], vec![20.0])], 5);
        assert_eq!(llr_predict(&m, &[0.0], 1).unwrap(), vec![10.0]);
    }
}
