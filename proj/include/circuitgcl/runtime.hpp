#pragma once

#include <malloc.h>

namespace circuitgcl {

/// Keeps large autodiff buffers on the heap instead of mmap/munmap per
/// allocation. Training allocates and frees the same big tensors every step,
/// and the default thresholds make each of those a system call.
inline void configure_allocator() {
#ifdef M_MMAP_THRESHOLD
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace circuitgcl
