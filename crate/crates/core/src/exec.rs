//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel map here collects into an index-ordered `Vec`, so results
//! are bit-identical to the sequential path regardless of scheduling.

/// Below this many items the engine stays sequential even under
/// [`ExecPolicy::Parallel`]; task overhead dominates for small teams.
pub const PAR_MIN_ITEMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls
    /// back to sequential.
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// Whether work will actually fan out to the thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }

    /// Sequential for fewer than [`PAR_MIN_ITEMS`] items.
    pub fn for_len(self, len: usize) -> ExecPolicy {
        if len < PAR_MIN_ITEMS {
            ExecPolicy::Sequential
        } else {
            self
        }
    }

    /// `(0..len).map(f).collect()`, possibly in parallel.
    pub fn map_range<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Like [`map_range`](Self::map_range) for fallible work; the first error
    /// by index wins.
    pub fn try_map_range<T, E, F>(self, len: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map_range(len, f).into_iter().collect()
    }

    /// Parallel map over a slice.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        self.map_range(items.len(), |i| f(&items[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = ExecPolicy::Sequential.map_range(1000, f);
        let b = ExecPolicy::Parallel.map_range(1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn small_inputs_stay_sequential() {
        assert_eq!(ExecPolicy::Parallel.for_len(8), ExecPolicy::Sequential);
        assert_eq!(ExecPolicy::Parallel.for_len(PAR_MIN_ITEMS), ExecPolicy::Parallel);
    }

    #[test]
    fn try_map_reports_first_error() {
        let r: Result<Vec<usize>, usize> =
            ExecPolicy::Parallel.try_map_range(200, |i| if i % 50 == 49 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(49));
    }
}
