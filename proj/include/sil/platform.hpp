#pragma once

namespace sil {

/// Keeps large freed blocks in the heap instead of returning them to the
/// kernel. Training allocates and frees the same batch-sized matrices every
/// update; without this each one costs an mmap, munmap and page faults.
/// A no-op outside glibc.
void tune_allocator();

}  // namespace sil
