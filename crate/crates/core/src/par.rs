//! Data-parallel map over independent jobs (seeds, states) with a sequential
//! fallback. Results come back in input order either way, so output does not
//! depend on the execution mode.

/// How independent jobs are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon pool with `jobs` threads; `0` uses the global pool. Without the
    /// `parallel` feature this runs sequentially.
    Parallel {
        jobs: usize,
    },
    #[default]
    Auto,
}

impl Execution {
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Execution::Sequential,
            Some(n) => Execution::Parallel { jobs: n },
            None => Execution::Auto,
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential)
    }
}

/// Applies `f` to every item, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match exec {
            Execution::Sequential => {}
            Execution::Auto | Execution::Parallel { jobs: 0 } => {
                return items.par_iter().map(&f).collect();
            }
            Execution::Parallel { jobs } => {
                if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                    return pool.install(|| items.par_iter().map(&f).collect());
                }
            }
        }
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_every_mode() {
        let items: Vec<u64> = (0..200).collect();
        let expected: Vec<u64> = items.iter().map(|v| v * v).collect();
        for exec in [
            Execution::Sequential,
            Execution::Auto,
            Execution::Parallel { jobs: 0 },
            Execution::Parallel { jobs: 3 },
        ] {
            assert_eq!(map(exec, &items, |v| v * v), expected);
        }
    }

    #[test]
    fn jobs_flag() {
        assert_eq!(Execution::from_jobs(Some(1)), Execution::Sequential);
        assert_eq!(Execution::from_jobs(None), Execution::Auto);
        assert!(!Execution::Sequential.is_parallel());
    }
}
