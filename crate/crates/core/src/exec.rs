//! Execution policy for the data-parallel loops.
//!
//! Every parallel loop in the crate goes through [`Exec`]. Results are
//! always collected in index order, so the output of a computation does not
//! depend on the policy or on the number of worker threads.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    /// Uses the rayon pool when the `parallel` feature is enabled; sequential otherwise.
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// True when this policy actually fans out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Sizes the global worker pool; call before any parallel work. A no-op without the `parallel` feature.
pub fn init_workers(workers: usize) -> crate::Result<()> {
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| crate::Error::validation("workers", e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    Ok(())
}

/// Pairwise (cascade) summation; the result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let a = Exec::Parallel.map(1000, |i| (i as f64).sqrt());
        let b = Exec::Sequential.map(1000, |i| (i as f64).sqrt());
        assert_eq!(a, b);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (0..10_001).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 10_000.0 * 10_001.0 / 2.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
