use rayon::prelude::*;

use qtreeff::frustration::SeedMap;
use qtreeff::Result;

/// Fixed-size worker pool; results always come back in input order.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(jobs: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .expect("thread pool");
        Self { pool }
    }

    pub fn map_items<I: Sync, T: Send>(&self, items: &[I], job: impl Fn(&I) -> T + Sync + Send) -> Vec<T> {
        self.pool.install(|| items.par_iter().map(job).collect())
    }
}

impl SeedMap for Pool {
    fn map<T: Send>(&self, seeds: &[u64], job: &(dyn Fn(u64) -> Result<T> + Sync)) -> Result<Vec<T>> {
        self.pool.install(|| seeds.par_iter().map(|&s| job(s)).collect())
    }
}
