#pragma once

#include <cstdint>
#include <functional>

namespace cvae {

/// Global worker count for batch-parallel kernels. 1 disables threading.
/// The value is part of the run configuration: results are bitwise
/// reproducible for a fixed thread count because work is split into fixed
/// contiguous chunks and reduced in chunk order.
int num_threads();
void set_num_threads(int n);

/// Runs fn(begin, end, chunk_index) over [0, n) split into num_threads()
/// contiguous chunks. Chunk boundaries depend only on (n, num_threads()).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t, int)>& fn);

}  // namespace cvae
