#include <doctest.h>

#include "support.hpp"

TEST_CASE("finite differences agree with every backward pass") {
    for (const auto& [name, r] : testsupport::run_grad_checks()) {
        CAPTURE(name);
        CAPTURE(r.worst);
        CHECK(r.checked > 0);
        CHECK(r.max_rel_error <= 1e-3);
        MESSAGE(name << ": max rel " << r.max_rel_error << " at " << r.worst << ", checked " << r.checked
                     << ", skipped " << r.skipped);
    }
}
