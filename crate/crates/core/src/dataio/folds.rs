use crate::error::{Error, Result};
use crate::numeric::Rng;

/// Assignment of each of `n` observations to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_where(|f| f == fold)
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_where(|f| f != fold)
    }

    fn indices_where(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| keep(f))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Balanced random k-fold assignment: fold sizes differ by at most one.
pub fn kfold(n: usize, k: usize, rng: &mut Rng) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::param(format!("kfold needs 2 <= k <= n, got k={k}, n={n}")));
    }
    let order = rng.permutation(n);
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}

/// Random split into (train, test) index sets; `test_fraction` of the rows,
/// rounded, go to the test side. Both sides come back sorted.
pub fn split_indices(n: usize, test_fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!("test fraction must be in (0,1), got {test_fraction}")));
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::param(format!(
            "split of {n} rows at fraction {test_fraction} leaves one side empty"
        )));
    }
    let order = rng.permutation(n);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}
