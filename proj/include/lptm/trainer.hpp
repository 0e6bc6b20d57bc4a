#pragma once

#include "lptm/metrics.hpp"
#include "lptm/model.hpp"
#include "lptm/pipeline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lptm {

struct TrainConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch = 1; // only 1 supported
    int epochs = 1;
    double lambda_s = 1e-4;
    double lambda_m = 10.0;
    double lambda_p = 0.0; // perceptual hook, disabled
    std::uint64_t seed = 0;
    bool augment_flips = true;
    int target_low = 64;
    int k_samples = 16;
    int n_luts = 3;
    int n_bins = 33;
    bool refine_enabled = true;
    double clip_norm = 100.0;

    PipelineConfig pipeline() const;
};

struct PairEntry {
    std::string stem;
    std::string input_path;
    std::string reference_path;
};

// root/input/* and root/reference/* matched by stem; optional train.txt /
// test.txt stem lists select the splits (absent: both splits hold every pair).
struct PairedDataset {
    std::string root;
    std::vector<PairEntry> train_pairs;
    std::vector<PairEntry> test_pairs;
};
PairedDataset load_dataset(const std::string& root);

// Mean absolute difference over all entries of (out, ref) plus the same for
// the low-frequency pair.
double l1_loss(const Image& out, const Image& ref, const Image& out_low, const Image& ref_low);

struct LossParts {
    double l1 = 0;
    double ls = 0; // summed over basis LUTs, unweighted
    double lm = 0;
    double lp = 0;
};
double total_loss(const LossParts& parts, const TrainConfig& cfg);

// Bias-corrected Adam update, t >= 1. A non-finite gradient skips the whole
// step (returns false). Parameters and moments are re-quantized to f32.
bool adam_step(ModelState& s, ModelGrads& g, std::int64_t t, const TrainConfig& cfg);

struct TrainResult {
    ModelState state;
    std::string loss_log; // "step,epoch,l1,ls,lm,total" rows
    int skipped_steps = 0;
    std::size_t dead_params = 0; // parameters that never saw a nonzero gradient
    std::size_t clipped_steps = 0;
};
TrainResult train(const PairedDataset& ds, const TrainConfig& cfg);

struct EvalRow {
    std::string stem;
    double psnr = 0, ssim = 0, delta_e = 0;
};
struct EvalResult {
    std::vector<EvalRow> rows;
    double mean_psnr = 0, mean_ssim = 0, mean_delta_e = 0;
    std::string csv() const;   // stem,psnr,ssim,delta_e
    std::string table() const; // human-readable
};
EvalResult evaluate(const PairedDataset& ds, bool use_test_split, const ModelState& s,
                    const PipelineConfig& cfg);

} // namespace lptm
