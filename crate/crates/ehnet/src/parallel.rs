use ehnet_core::model::ModelParams;
use ehnet_core::training::{item_gradient, BatchItem, GradientEngine, GradientSet};
use ehnet_core::Scalar;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::{Error, Result};

/// Computes the gradients of a minibatch's items on a private thread pool.
///
/// Each item produces its own gradient set and the trainer sums them in
/// item order, so results match [`ehnet_core::training::Sequential`] bit for bit.
pub struct RayonEngine {
    pool: ThreadPool,
}

impl RayonEngine {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }
}

impl<T: Scalar> GradientEngine<T> for RayonEngine {
    fn batch_gradients(
        &self,
        params: &ModelParams<T>,
        items: &[BatchItem<T>],
    ) -> ehnet_core::Result<Vec<(f64, GradientSet<T>)>> {
        let weight = T::from_f64(1.0 / items.len() as f64);
        self.pool.install(|| {
            items
                .par_iter()
                .map(|item| item_gradient(params, item, weight))
                .collect()
        })
    }
}
