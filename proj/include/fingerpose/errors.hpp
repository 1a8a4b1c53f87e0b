#pragma once

#include <stdexcept>
#include <string>

namespace fingerpose {

// Geometry or probability mass too degenerate to act on: coincident point
// sets, uniform angular heads, zero resultant vectors.
struct degenerate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A least-squares system with too few samples or a rank-deficient design.
struct underdetermined_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values produced during numeric evaluation.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or missing external data: files, manifests, point lists.
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A requested synthetic sample fell outside the usable master region.
// Callers draw a fresh candidate and retry.
struct sample_rejected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fingerpose
