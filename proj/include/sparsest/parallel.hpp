#pragma once

#include <cstddef>

namespace sparsest {

/// Number of worker threads the OpenMP runtime will use (1 without OpenMP).
int max_threads();

/// Sets the OpenMP thread count for subsequent parallel regions; n <= 0 keeps
/// the runtime default.
void set_threads(int n);

}  // namespace sparsest
