#pragma once

#include "lptm/trainer.hpp"

#include <string>
#include <vector>

namespace lptm {

struct GroupReport {
    std::string group;
    std::size_t params = 0;
    double analytic_norm = 0;
    double fd_norm = 0;
    double rel_err = 0;     // ||ga - gfd|| / max(||ga||, ||gfd||, tiny)
    double max_abs_err = 0;
};

struct GradCheckReport {
    std::vector<GroupReport> groups;
    bool pass(double tol = 1e-3) const;
};

// Central finite differences of total_loss against the analytic backward pass
// on one training pair. Groups are the basis LUTs, the weight net, and each
// parameter prediction block. The Canny edge map is frozen at the unperturbed
// state (it is binary, so both sides differentiate the same smooth function).
// stride > 1 checks every stride-th parameter of each tensor.
GradCheckReport check_pipeline_gradients(const Image& input, const Image& reference,
                                         const TrainConfig& cfg, int stride = 1,
                                         double epsilon = 1e-3);

// Small closed-loop checks for the remapping function, trilinear interpolation
// and a toy convolution stack. Returns the worst relative error seen.
double check_remap_gradients(std::uint64_t seed = 1);
double check_lut_gradients(std::uint64_t seed = 2);
double check_conv_gradients(std::uint64_t seed = 3);

} // namespace lptm
