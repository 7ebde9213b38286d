//! Cost tensor assembly spread over a thread pool.

use hbary_core::{CostTensor, Problem, TensorShape};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// Same result as the sequential core routine; entries are computed in
/// parallel and collected in index order. `threads = None` uses every core.
pub fn assemble_parallel(problem: &Problem, budget: usize, threads: Option<usize>) -> CliResult<CostTensor> {
    let shape = TensorShape::new(problem.shape(), budget)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {threads:?} threads: {e}")))?;
    let entries = pool.install(|| {
        (0..shape.len())
            .into_par_iter()
            .map(|flat| problem.entry(&shape.tuple(flat)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(CostTensor::from_entries(shape, problem.dim(), entries)?)
}
