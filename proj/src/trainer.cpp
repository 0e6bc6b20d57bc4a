#include "lptm/errors.hpp"
#include "lptm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace lptm {

PipelineConfig TrainConfig::pipeline() const {
    PipelineConfig cfg;
    cfg.target_low = target_low;
    cfg.remap.k_samples = k_samples;
    cfg.refine_enabled = refine_enabled;
    return cfg;
}

namespace {

bool supported_ext(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pfm";
}

std::map<std::string, std::string> scan_dir(const fs::path& dir) {
    std::map<std::string, std::string> stems;
    if (!fs::is_directory(dir)) return stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !supported_ext(entry.path())) continue;
        stems[entry.path().stem().string()] = entry.path().string();
    }
    return stems;
}

std::vector<std::string> read_stem_list(const fs::path& file) {
    std::vector<std::string> stems;
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        stems.push_back(line);
    }
    return stems;
}

} // namespace

PairedDataset load_dataset(const std::string& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root does not exist: " + root);
    PairedDataset ds;
    ds.root = root;
    const auto inputs = scan_dir(fs::path(root) / "input");
    const auto refs = scan_dir(fs::path(root) / "reference");

    std::vector<PairEntry> all;
    for (const auto& [stem, path] : inputs) {
        auto it = refs.find(stem);
        if (it == refs.end()) continue;
        all.push_back({stem, path, it->second});
    }
    if (all.empty())
        throw FormatError("no matched input/reference pairs under " + root +
                          " (expected input/* and reference/* with shared stems)");

    std::map<std::string, const PairEntry*> by_stem;
    for (const PairEntry& e : all) by_stem[e.stem] = &e;
    auto pick = [&](const fs::path& list_file) {
        std::vector<PairEntry> out;
        for (const std::string& stem : read_stem_list(list_file)) {
            auto it = by_stem.find(stem);
            if (it == by_stem.end())
                throw FormatError(list_file.string() + " names unknown stem '" + stem + "'");
            out.push_back(*it->second);
        }
        return out;
    };

    const fs::path train_list = fs::path(root) / "train.txt";
    const fs::path test_list = fs::path(root) / "test.txt";
    ds.train_pairs = fs::exists(train_list) ? pick(train_list) : all;
    ds.test_pairs = fs::exists(test_list) ? pick(test_list) : all;
    return ds;
}

double l1_loss(const Image& out, const Image& ref, const Image& out_low, const Image& ref_low) {
    if (!out.same_shape(ref)) throw ContractError("l1_loss: full-resolution shape mismatch");
    if (!out_low.same_shape(ref_low)) throw ContractError("l1_loss: low-frequency shape mismatch");
    double full = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i) full += std::abs(out.data[i] - ref.data[i]);
    double low = 0;
    for (std::size_t i = 0; i < out_low.data.size(); ++i)
        low += std::abs(out_low.data[i] - ref_low.data[i]);
    return full / double(out.data.size()) + low / double(out_low.data.size());
}

double total_loss(const LossParts& parts, const TrainConfig& cfg) {
    return parts.l1 + cfg.lambda_s * parts.ls + cfg.lambda_m * parts.lm + cfg.lambda_p * parts.lp;
}

bool adam_step(ModelState& s, ModelGrads& g, std::int64_t t, const TrainConfig& cfg) {
    if (t < 1) throw ContractError("adam_step: t must be >= 1");
    const auto params = param_tensors(s);
    const auto grads = grad_tensors(g, s);
    if (params.size() != grads.size()) throw ContractError("adam_step: grads not shaped like state");

    for (const TensorRef& gt : grads)
        for (double v : *gt.data)
            if (!std::isfinite(v)) return false;

    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& theta = *params[i].data;
        const std::vector<double>& grad = *grads[i].data;
        std::vector<double>& m = s.adam_m[i];
        std::vector<double>& v = s.adam_v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            theta[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
    s.adam_t = t;
    quantize_state_f32(s);
    return true;
}

namespace {

struct LoadedPair {
    Image input;
    Image reference;
};

bool load_pair(const PairEntry& e, LoadedPair& out, std::string& why) {
    try {
        out.input = load_image(e.input_path);
        out.reference = load_image(e.reference_path);
    } catch (const std::exception& ex) {
        why = ex.what();
        return false;
    }
    if (out.input.channels != 3 || out.reference.channels != 3) {
        why = "pair is not 3-channel";
        return false;
    }
    if (!out.input.same_shape(out.reference)) {
        why = "input/reference dimensions differ";
        return false;
    }
    return true;
}

double global_grad_norm(std::vector<TensorRef>& grads) {
    double sq = 0;
    for (const TensorRef& g : grads)
        for (double v : *g.data) sq += v * v;
    return std::sqrt(sq);
}

} // namespace

TrainResult train(const PairedDataset& ds, const TrainConfig& cfg) {
    if (ds.train_pairs.empty()) throw ContractError("train: empty training split");
    if (cfg.batch != 1) throw ContractError("train: only batch = 1 is supported");

    // pyramid depth for the model comes from the largest training image
    int depth = 1;
    for (const PairEntry& e : ds.train_pairs) {
        const auto [w, h] = probe_image_size(e.input_path);
        depth = std::max(depth, pyramid_depth(w, h, cfg.target_low));
    }

    TrainResult result;
    result.state = init_model(cfg.n_luts, cfg.n_bins, depth, cfg.seed);
    ModelState& state = result.state;
    const PipelineConfig pipe_cfg = cfg.pipeline();

    std::ostringstream log;
    log << "# step,epoch,l1,ls,lm,total\n";

    Rng rng(cfg.seed);
    auto tensors = param_tensors(state);
    std::vector<std::vector<std::uint8_t>> seen_nonzero(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i)
        seen_nonzero[i].assign(tensors[i].data->size(), 0);

    // decoded pairs are cached only for small datasets
    std::map<std::string, LoadedPair> cache;
    const bool use_cache = ds.train_pairs.size() <= 32;

    std::int64_t step = 0;
    char line[160];
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(ds.train_pairs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::size_t(rng.below(i))]);

        std::size_t usable = 0;
        for (std::size_t idx : order) {
            const PairEntry& entry = ds.train_pairs[idx];
            LoadedPair pair;
            const LoadedPair* pp = nullptr;
            if (use_cache) {
                auto it = cache.find(entry.stem);
                if (it == cache.end()) {
                    std::string why;
                    if (!load_pair(entry, pair, why)) {
                        std::cerr << "warning: skipping pair '" << entry.stem << "': " << why << "\n";
                        continue;
                    }
                    it = cache.emplace(entry.stem, std::move(pair)).first;
                }
                pp = &it->second;
            } else {
                std::string why;
                if (!load_pair(entry, pair, why)) {
                    std::cerr << "warning: skipping pair '" << entry.stem << "': " << why << "\n";
                    continue;
                }
                pp = &pair;
            }
            ++usable;

            Image input = pp->input;
            Image ref = pp->reference;
            if (cfg.augment_flips) {
                const bool fh = rng.coin();
                const bool fv = rng.coin();
                if (fh) {
                    input = flip_horizontal(input);
                    ref = flip_horizontal(ref);
                }
                if (fv) {
                    input = flip_vertical(input);
                    ref = flip_vertical(ref);
                }
            }

            PipelineTrace trace;
            run_pipeline(state, input, pipe_cfg, &trace);
            const int img_depth = int(trace.lap.bands.size());

            LaplacianPyramid ref_lap;
            GaussianPyramid ref_gauss;
            decompose_depth(ref, img_depth, ref_lap, ref_gauss);

            LossParts parts;
            parts.l1 = l1_loss(trace.output, ref, trace.i_low_hat, ref_lap.low);
            for (const Lut3d& lut : state.luts) {
                parts.ls += smoothness_reg(lut);
                parts.lm += monotonicity_reg(lut);
            }
            const double loss = total_loss(parts, cfg);
            if (!std::isfinite(loss)) {
                ++result.skipped_steps;
                std::cerr << "warning: non-finite loss at step " << (step + 1) << ", skipping\n";
                continue;
            }

            // L1 subgradients, averaged like the loss
            Image grad_out(trace.output.width, trace.output.height, 3);
            const double full_scale = 1.0 / double(trace.output.data.size());
            for (std::size_t i = 0; i < grad_out.data.size(); ++i) {
                const double d = trace.output.data[i] - ref.data[i];
                grad_out.data[i] = d > 0 ? full_scale : (d < 0 ? -full_scale : 0.0);
            }
            Image grad_low(trace.i_low_hat.width, trace.i_low_hat.height, 3);
            const double low_scale = 1.0 / double(trace.i_low_hat.data.size());
            for (std::size_t i = 0; i < grad_low.data.size(); ++i) {
                const double d = trace.i_low_hat.data[i] - ref_lap.low.data[i];
                grad_low.data[i] = d > 0 ? low_scale : (d < 0 ? -low_scale : 0.0);
            }

            ModelGrads grads = zero_grads_like(state);
            pipeline_backward(state, trace, pipe_cfg, grad_out, grad_low, grads);
            for (std::size_t n = 0; n < state.luts.size(); ++n) {
                if (cfg.lambda_s != 0) smoothness_reg_grad(state.luts[n], cfg.lambda_s, grads.luts[n]);
                if (cfg.lambda_m != 0) monotonicity_reg_grad(state.luts[n], cfg.lambda_m, grads.luts[n]);
            }

            auto grad_refs = grad_tensors(grads, state);
            const double norm = global_grad_norm(grad_refs);
            if (std::isfinite(norm) && norm > cfg.clip_norm && norm > 0) {
                const double scale = cfg.clip_norm / norm;
                for (const TensorRef& gt : grad_refs)
                    for (double& v : *gt.data) v *= scale;
                ++result.clipped_steps;
            }

            for (std::size_t i = 0; i < grad_refs.size(); ++i) {
                const std::vector<double>& gv = *grad_refs[i].data;
                std::vector<std::uint8_t>& mask = seen_nonzero[i];
                for (std::size_t j = 0; j < gv.size(); ++j)
                    if (gv[j] != 0.0) mask[j] = 1;
            }

            if (!adam_step(state, grads, state.adam_t + 1, cfg)) {
                ++result.skipped_steps;
                std::cerr << "warning: non-finite gradient at step " << (step + 1) << ", skipping\n";
                continue;
            }
            ++step;
            std::snprintf(line, sizeof line, "%lld,%d,%.9e,%.9e,%.9e,%.9e\n",
                          static_cast<long long>(step), epoch, parts.l1, parts.ls, parts.lm, loss);
            log << line;
        }
        if (usable == 0) throw IoError("train: no readable pairs in epoch " + std::to_string(epoch));
    }

    tensors = param_tensors(state);
    for (std::size_t i = 0; i < tensors.size(); ++i)
        for (std::uint8_t seen : seen_nonzero[i])
            if (!seen) ++result.dead_params;
    if (cfg.epochs > 0 && result.dead_params > 0)
        std::cerr << "warning: " << result.dead_params
                  << " parameters never received a nonzero gradient\n";
    log << "# skipped=" << result.skipped_steps << " clipped=" << result.clipped_steps
        << " dead_params=" << result.dead_params << "\n";
    result.loss_log = log.str();
    return result;
}

EvalResult evaluate(const PairedDataset& ds, bool use_test_split, const ModelState& s,
                    const PipelineConfig& cfg) {
    const auto& pairs = use_test_split ? ds.test_pairs : ds.train_pairs;
    if (pairs.empty()) throw ContractError("evaluate: empty split");
    EvalResult result;
    for (const PairEntry& entry : pairs) {
        LoadedPair pair;
        std::string why;
        if (!load_pair(entry, pair, why)) {
            std::cerr << "warning: skipping pair '" << entry.stem << "': " << why << "\n";
            continue;
        }
        const Image out = clamp01(run_pipeline(s, pair.input, cfg));
        EvalRow row;
        row.stem = entry.stem;
        row.psnr = psnr(out, pair.reference);
        row.ssim = ssim(out, pair.reference);
        row.delta_e = delta_e(out, pair.reference);
        result.rows.push_back(std::move(row));
    }
    if (result.rows.empty()) throw IoError("evaluate: no readable pairs");
    for (const EvalRow& row : result.rows) {
        result.mean_psnr += row.psnr;
        result.mean_ssim += row.ssim;
        result.mean_delta_e += row.delta_e;
    }
    result.mean_psnr /= double(result.rows.size());
    result.mean_ssim /= double(result.rows.size());
    result.mean_delta_e /= double(result.rows.size());
    return result;
}

std::string EvalResult::csv() const {
    std::ostringstream out;
    out << "stem,psnr,ssim,delta_e\n";
    char line[160];
    for (const EvalRow& row : rows) {
        std::snprintf(line, sizeof line, "%s,%.4f,%.6f,%.4f\n", row.stem.c_str(), row.psnr, row.ssim,
                      row.delta_e);
        out << line;
    }
    return out.str();
}

std::string EvalResult::table() const {
    std::ostringstream out;
    char line[160];
    out << "stem                          PSNR     SSIM      dE\n";
    for (const EvalRow& row : rows) {
        std::snprintf(line, sizeof line, "%-28s %7.3f %8.5f %7.3f\n", row.stem.c_str(), row.psnr,
                      row.ssim, row.delta_e);
        out << line;
    }
    std::snprintf(line, sizeof line, "%-28s %7.3f %8.5f %7.3f\n", "mean", mean_psnr, mean_ssim,
                  mean_delta_e);
    out << line;
    return out.str();
}

} // namespace lptm
