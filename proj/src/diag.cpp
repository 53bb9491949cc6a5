#include "diag.hpp"

namespace arcvq::diag {

Counters& counters() {
    static Counters c;
    return c;
}

void reset_counters() {
    auto& c = counters();
    c.normalize_rows = 0;
    c.arc_loss = 0;
    c.apply_bound = 0;
}

}  // namespace arcvq::diag
