//! Execution mode for the data-parallel loops (element maps, error
//! integration, probe trials).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `Sequential` is bit-reproducible and the default; `Parallel` needs the
/// `parallel` feature and otherwise falls back to sequential execution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    #[default]
    Sequential,
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `(0..n).map(f)` collected in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over chunks of `0..n` and returns the per-chunk results in
    /// order; callers reduce them sequentially for a fixed summation order.
    pub fn map_chunks<T, F>(self, n: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    {
        let chunk = chunk.max(1);
        let count = n.div_ceil(chunk);
        self.map(count, |c| f(c * chunk..((c + 1) * chunk).min(n)))
    }
}

impl std::str::FromStr for Exec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" | "seq" => Ok(Exec::Sequential),
            "parallel" | "par" => Ok(Exec::Parallel),
            other => Err(format!("unknown execution mode '{other}'")),
        }
    }
}
