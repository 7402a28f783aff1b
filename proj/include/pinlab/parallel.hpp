#pragma once

#include <cstddef>
#include <functional>

namespace pinlab {

/// Process-wide worker count used by the batch helpers. Results never depend on it.
void set_worker_count(unsigned jobs);
unsigned worker_count();

/// Runs body(batch) for batch in [0, batches) on up to worker_count() threads.
/// Callers store per-batch partial results and reduce them in batch order.
void parallel_batches(std::size_t batches, const std::function<void(std::size_t)>& body);

/// Fixed batch size for Monte Carlo loops; part of the reproducibility contract.
inline constexpr std::size_t kBatchSize = 4096;

}  // namespace pinlab
