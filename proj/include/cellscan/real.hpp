#pragma once

// Arithmetic element type for all tensors. Default is 32-bit float; defining
// CELLSCAN_REAL_DOUBLE switches the whole library to 64-bit so gradient
// checks can run at tight tolerances. Model files always store 32-bit
// values regardless of the build mode.

namespace cellscan {

#ifdef CELLSCAN_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

} // namespace cellscan
