#pragma once

#include <atomic>
#include <cstdint>

namespace arcvq::diag {

// Process-wide call counters for variant-contract checks.
struct Counters {
    std::atomic<std::uint64_t> normalize_rows{0};
    std::atomic<std::uint64_t> arc_loss{0};
    std::atomic<std::uint64_t> apply_bound{0};
};

Counters& counters();
void reset_counters();

}  // namespace arcvq::diag
