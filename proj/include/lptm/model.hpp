#pragma once

#include "lptm/conv.hpp"
#include "lptm/lut.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lptm {

// Everything the optimizer touches: basis LUTs, the weight predictor, one
// parameter-prediction block per pyramid level (coarsest first), and the Adam
// moment buffers aligned with param_tensors() order. Parameter values are kept
// f32-representable so checkpoints round-trip bit-exactly.
struct ModelState {
    int n_bins = 33;
    std::vector<Lut3d> luts;
    ConvNet weight_net;
    std::vector<ConvNet> ppbs;

    std::vector<std::vector<double>> adam_m;
    std::vector<std::vector<double>> adam_v;
    std::int64_t adam_t = 0;
};

struct ModelGrads {
    std::vector<std::vector<double>> luts;
    ConvNetGrads weight_net;
    std::vector<ConvNetGrads> ppbs;
};

struct TensorRef {
    std::string name;
    std::vector<double>* data;
    std::vector<int> dims;
};

// Identity-at-init model: luts[0] is the identity lattice, the rest are zero;
// weight-net hidden kernels are Kaiming with a one-hot final bias; PPB final
// kernels are zero with softplus-inverted biases giving alpha=1.01, beta=1.
// The weight net's final kernel keeps its first output row at zero (exact
// one-hot maps at init) while the remaining rows stay random so the zero
// lattices still receive gradients once training starts.
ModelState init_model(int n_luts, int n_bins, int n_levels, std::uint64_t seed);

std::vector<TensorRef> param_tensors(ModelState& s);
std::vector<TensorRef> grad_tensors(ModelGrads& g, ModelState& shape_like);
ModelGrads zero_grads_like(const ModelState& s);
std::size_t param_count(const ModelState& s);

// Rounds every parameter and moment through f32. Called after init and after
// each optimizer step; makes the f32 checkpoint lossless for live states.
void quantize_state_f32(ModelState& s);

// Binary container: magic "LPTM", version, then named tensors
// (u32 name length, name bytes, u32 rank, u32 dims, little-endian f32 data).
void save_checkpoint(const ModelState& s, const std::string& path);
ModelState load_checkpoint(const std::string& path);

struct TensorInfo {
    std::string name;
    std::vector<int> dims;
    std::size_t elements;
};
// Header walk only; payloads are skipped, not loaded.
std::vector<TensorInfo> describe_checkpoint(const std::string& path);

} // namespace lptm
