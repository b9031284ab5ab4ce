#pragma once

#include <cstdint>
#include <functional>

namespace hf {

/// Worker count: HF_THREADS when set to a positive integer, else hardware concurrency.
int thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 means thread_count()).
/// The first exception thrown by any body is rethrown after all workers stop.
void parallel_for(int n, const std::function<void(int)>& body, int threads = 0);

/// SplitMix64 mix of (seed, index); used as a per-task seed independent of scheduling.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace hf
