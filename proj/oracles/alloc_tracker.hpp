#pragma once

// Heap accounting by malloc interposition (glibc). Link alloc_tracker.cpp into
// the executable; every allocation path, including Eigen's, is counted.

#include <cstddef>

namespace mvc::oracle {

std::size_t live_heap_bytes();
std::size_t peak_heap_bytes();
/// Restarts peak tracking from the current live size.
void reset_heap_peak();

} // namespace mvc::oracle
