#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ciftts {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    bool pass = false;
};

// Central-difference gradient verification (h = 1e-5, threshold 1e-4)
// over every layer type and the full model at tiny shapes. Large
// inputs are subsampled to a fixed random coordinate subset.
std::vector<GradCheckEntry> run_grad_suite(uint64_t seed);

}  // namespace ciftts
