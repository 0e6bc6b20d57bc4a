#include "lptm/errors.hpp"
#include "lptm/gradcheck.hpp"
#include "lptm/parallel.hpp"
#include "lptm/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace lptm;

// exit codes: 0 success, 1 usage, 2 data/format, 3 numerical-check failure
namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct RunConfig {
    TrainConfig train;
    std::string data_root;
    std::string checkpoint_out = "model.lptm";
    std::string log_out = "train_log.csv";
};

// plain-text key=value file; '#' starts a comment; unknown keys are rejected
RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    RunConfig rc;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        auto bad_value = [&]() {
            return FormatError("config line " + std::to_string(line_no) + ": bad value for '" +
                               key + "'");
        };
        try {
            if (key == "lr") rc.train.lr = std::stod(value);
            else if (key == "beta1") rc.train.beta1 = std::stod(value);
            else if (key == "beta2") rc.train.beta2 = std::stod(value);
            else if (key == "epsilon") rc.train.epsilon = std::stod(value);
            else if (key == "batch") rc.train.batch = std::stoi(value);
            else if (key == "epochs") rc.train.epochs = std::stoi(value);
            else if (key == "lambda_s") rc.train.lambda_s = std::stod(value);
            else if (key == "lambda_m") rc.train.lambda_m = std::stod(value);
            else if (key == "lambda_p") rc.train.lambda_p = std::stod(value);
            else if (key == "seed") rc.train.seed = std::stoull(value);
            else if (key == "augment_flips") rc.train.augment_flips = value == "1" || value == "true";
            else if (key == "target_low") rc.train.target_low = std::stoi(value);
            else if (key == "k_samples") rc.train.k_samples = std::stoi(value);
            else if (key == "n_luts") rc.train.n_luts = std::stoi(value);
            else if (key == "n_bins") rc.train.n_bins = std::stoi(value);
            else if (key == "refine_enabled")
                rc.train.refine_enabled = value == "1" || value == "true";
            else if (key == "clip_norm") rc.train.clip_norm = std::stod(value);
            else if (key == "data_root") rc.data_root = value;
            else if (key == "checkpoint_out") rc.checkpoint_out = value;
            else if (key == "log_out") rc.log_out = value;
            else
                throw FormatError("config line " + std::to_string(line_no) + ": unknown key '" +
                                  key + "'");
        } catch (const std::invalid_argument&) {
            throw bad_value();
        } catch (const std::out_of_range&) {
            throw bad_value();
        }
        if (key == "batch" && rc.train.batch != 1)
            throw FormatError("config line " + std::to_string(line_no) + ": only batch=1 is supported");
    }
    return rc;
}

int cmd_tonemap(const std::string& input_path, const std::string& ckpt_path,
                const std::string& output_path, int bitdepth, int k_samples, int target_low) {
    const Image input = load_image(input_path);
    if (input.channels != 3) {
        std::cerr << "error: tonemap expects a 3-channel input\n";
        return kExitData;
    }
    const ModelState state = load_checkpoint(ckpt_path);
    PipelineConfig cfg;
    cfg.target_low = target_low;
    cfg.remap.k_samples = k_samples;

    PipelineTrace trace;
    const auto t0 = std::chrono::steady_clock::now();
    const Image out = run_pipeline(state, input, cfg, &trace);
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_image(clamp01(out), output_path, bitdepth);

    std::printf("decompose   %7.1f ms\n", trace.times.decompose * 1e3);
    std::printf("weights     %7.1f ms\n", trace.times.weights * 1e3);
    std::printf("lut fusion  %7.1f ms\n", trace.times.fuse * 1e3);
    std::printf("edge map    %7.1f ms\n", trace.times.edges * 1e3);
    std::printf("refinement  %7.1f ms\n", trace.times.refine * 1e3);
    std::printf("reconstruct %7.1f ms\n", trace.times.reconstruct * 1e3);
    std::printf("total       %7.1f ms -> %s\n", total * 1e3, output_path.c_str());
    return 0;
}

int cmd_train(const std::string& config_path) {
    const RunConfig rc = parse_run_config(config_path);
    if (rc.data_root.empty()) {
        std::cerr << "error: config must set data_root\n";
        return kExitData;
    }
    const PairedDataset ds = load_dataset(rc.data_root);
    std::printf("training on %zu pairs (%s)\n", ds.train_pairs.size(), rc.data_root.c_str());
    const TrainResult result = train(ds, rc.train);
    std::printf("%zu model parameters\n", param_count(result.state));
    save_checkpoint(result.state, rc.checkpoint_out);
    std::ofstream log(rc.log_out);
    log << result.loss_log;
    std::printf("checkpoint -> %s\nloss log   -> %s\n", rc.checkpoint_out.c_str(),
                rc.log_out.c_str());
    if (result.dead_params > 0)
        std::printf("note: %zu parameters never received a nonzero gradient\n", result.dead_params);
    return 0;
}

int cmd_eval(const std::string& data_root, const std::string& ckpt_path, const std::string& split,
             const std::string& csv_out, int k_samples, int target_low) {
    const PairedDataset ds = load_dataset(data_root);
    const ModelState state = load_checkpoint(ckpt_path);
    PipelineConfig cfg;
    cfg.target_low = target_low;
    cfg.remap.k_samples = k_samples;
    const EvalResult result = evaluate(ds, split == "test", state, cfg);
    std::fputs(result.table().c_str(), stdout);
    if (!csv_out.empty()) {
        std::ofstream out(csv_out);
        out << result.csv();
        std::printf("csv -> %s\n", csv_out.c_str());
    }
    return 0;
}

int cmd_decompose(const std::string& input_path, const std::string& out_dir, int target_low) {
    const Image input = load_image(input_path);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose(input, target_low, lap, gauss);
    fs::create_directories(out_dir);
    std::ofstream manifest(fs::path(out_dir) / "manifest.txt");
    manifest << "levels " << lap.bands.size() << "\n";
    for (std::size_t k = 0; k < lap.bands.size(); ++k) {
        const std::string name = "band_" + std::to_string(k) + ".pfm";
        save_image(lap.bands[k], (fs::path(out_dir) / name).string());
        manifest << "band " << k << " " << lap.bands[k].width << " " << lap.bands[k].height << " "
                 << name << "\n";
    }
    save_image(lap.low, (fs::path(out_dir) / "low.pfm").string());
    manifest << "low " << lap.low.width << " " << lap.low.height << " low.pfm\n";
    std::printf("%zu bands + low -> %s\n", lap.bands.size(), out_dir.c_str());
    return 0;
}

int cmd_reconstruct(const std::string& in_dir, const std::string& output_path, int bitdepth) {
    std::ifstream manifest(fs::path(in_dir) / "manifest.txt");
    if (!manifest) throw IoError("cannot open " + in_dir + "/manifest.txt");
    std::string kind;
    std::size_t levels = 0;
    if (!(manifest >> kind >> levels) || kind != "levels")
        throw FormatError("manifest.txt must start with 'levels N'");
    std::vector<Image> bands(levels);
    Image low;
    for (std::size_t entry = 0; entry < levels + 1; ++entry) {
        std::string name;
        if (!(manifest >> kind)) throw FormatError("manifest.txt truncated");
        if (kind == "band") {
            std::size_t k;
            int w, h;
            if (!(manifest >> k >> w >> h >> name) || k >= levels)
                throw FormatError("bad band entry in manifest.txt");
            bands[k] = load_pfm_raw((fs::path(in_dir) / name).string());
            if (bands[k].width != w || bands[k].height != h)
                throw FormatError("band size mismatch in manifest.txt");
        } else if (kind == "low") {
            int w, h;
            if (!(manifest >> w >> h >> name)) throw FormatError("bad low entry in manifest.txt");
            low = load_image((fs::path(in_dir) / name).string());
        } else {
            throw FormatError("unknown manifest entry '" + kind + "'");
        }
    }
    const Image out = reconstruct(bands, low);
    save_image(clamp01(out), output_path, bitdepth);
    std::printf("reconstructed %dx%d -> %s\n", out.width, out.height, output_path.c_str());
    return 0;
}

int cmd_apply_lut(const std::string& lut_path, const std::string& input_path,
                  const std::string& output_path, int bitdepth) {
    const Lut3d lut = read_cube(lut_path);
    const Image input = load_image(input_path);
    save_image(clamp01(trilinear_apply(lut, input)), output_path, bitdepth);
    std::printf("%s applied -> %s\n", lut_path.c_str(), output_path.c_str());
    return 0;
}

int cmd_llf(const std::string& input_path, const std::string& output_path, double alpha,
            double beta, double sigma_r, int k_samples, int target_low, int bitdepth,
            const std::string& dump_dir) {
    const Image input = load_image(input_path);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose(input, target_low, lap, gauss);
    RemapConfig cfg;
    cfg.sigma_r = sigma_r;
    cfg.k_samples = k_samples;
    std::vector<Image> refined;
    for (std::size_t k = 0; k < lap.bands.size(); ++k) {
        ParamMaps params;
        params.alpha = Image(lap.bands[k].width, lap.bands[k].height, 1, alpha);
        params.beta = Image(lap.bands[k].width, lap.bands[k].height, 1, beta);
        refined.push_back(refine_level_fast(gauss.levels[k], lap.bands[k], params, cfg));
    }
    if (!dump_dir.empty()) {
        fs::create_directories(dump_dir);
        for (std::size_t k = 0; k < refined.size(); ++k)
            save_image(refined[k], (fs::path(dump_dir) / ("refined_" + std::to_string(k) + ".pfm")).string());
        std::printf("refined bands -> %s\n", dump_dir.c_str());
    }
    const Image out = reconstruct(refined, lap.low);
    save_image(clamp01(out), output_path, bitdepth);
    std::printf("alpha=%.3f beta=%.3f -> %s\n", alpha, beta, output_path.c_str());
    return 0;
}

int cmd_grad_check(int stride) {
    const double worst_remap = check_remap_gradients();
    const double worst_lut = check_lut_gradients();
    const double worst_conv = check_conv_gradients();
    std::printf("remap     rel_err %.3e\n", worst_remap);
    std::printf("trilinear rel_err %.3e\n", worst_lut);
    std::printf("conv      rel_err %.3e\n", worst_conv);

    Image input(16, 16, 3), ref(16, 16, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) {
                const double base = 0.25 + 0.4 * ((c == 0 ? x : (c == 1 ? y : x + y)) % (7 + c)) /
                                               (6.0 + c);
                const double wave = 0.08 * std::sin(0.9 * x + 1.3 * y + 2.1 * c);
                input.at(x, y, c) = std::clamp(base + wave, 0.05, 0.78);
                const double offset = 0.30 + 0.05 * std::sin(0.7 * x - 0.8 * y + c);
                ref.at(x, y, c) = std::clamp(input.at(x, y, c) + offset, 0.0, 0.99);
            }
    TrainConfig cfg;
    cfg.target_low = 4;
    cfg.n_bins = 5;
    cfg.n_luts = 3;
    cfg.k_samples = 8;
    cfg.seed = 3;
    const GradCheckReport report = check_pipeline_gradients(input, ref, cfg, stride);
    for (const GroupReport& g : report.groups)
        std::printf("pipeline  %-5s params %-6zu rel_err %.3e\n", g.group.c_str(), g.params,
                    g.rel_err);

    const bool ok = worst_remap <= 1e-3 && worst_lut <= 1e-3 && worst_conv <= 1e-3 &&
                    report.pass(1e-3);
    std::printf("%s\n", ok ? "all gradient checks passed" : "GRADIENT CHECK FAILED");
    return ok ? 0 : kExitNumerical;
}

int cmd_describe(const std::string& ckpt_path) {
    const auto infos = describe_checkpoint(ckpt_path);
    std::size_t total = 0, params = 0;
    for (const auto& info : infos) {
        std::string shape;
        for (std::size_t i = 0; i < info.dims.size(); ++i)
            shape += (i ? "x" : "") + std::to_string(info.dims[i]);
        std::printf("%-24s %-12s %zu\n", info.name.c_str(), shape.c_str(), info.elements);
        total += info.elements;
        if (info.name.rfind("adam.", 0) != 0 && info.name.find(".dilations") == std::string::npos)
            params += info.elements;
    }
    std::printf("%zu tensors, %zu values, %zu model parameters\n", infos.size(), total, params);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Laplacian-pyramid tone mapping with pixel-level fused 3D LUTs"};
    app.require_subcommand(1);

    int threads = 0; // 0 = default (LPTM_THREADS, then all cores)
    app.add_option("--threads", threads, "worker threads (1 = canonical deterministic path)");

    std::string input_path, output_path, ckpt_path, config_path, data_root, lut_path, dir_path;
    std::string split = "test", csv_out, dump_dir;
    int bitdepth = 8, k_samples = 16, target_low = 64, stride = 1;
    double alpha = 1.0, beta = 1.0, sigma_r = 0.1;

    auto* tonemap = app.add_subcommand("tonemap", "run the full pipeline on one image");
    tonemap->add_option("--input", input_path, "input image (16-bit PNG, PPM, PFM)")->required();
    tonemap->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    tonemap->add_option("--output", output_path, "output image")->required();
    tonemap->add_option("--bitdepth", bitdepth, "output bit depth (8 or 16)");
    tonemap->add_option("--k-samples", k_samples, "remapping sample count");
    tonemap->add_option("--target-low", target_low, "low image target resolution");

    auto* train_cmd = app.add_subcommand("train", "train from a key=value config file");
    train_cmd->add_option("--config", config_path, "run configuration")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    eval_cmd->add_option("--data", data_root, "dataset root")->required();
    eval_cmd->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    eval_cmd->add_option("--split", split, "train or test (default test)");
    eval_cmd->add_option("--csv", csv_out, "write per-pair metrics CSV here");
    eval_cmd->add_option("--k-samples", k_samples, "remapping sample count");
    eval_cmd->add_option("--target-low", target_low, "low image target resolution");

    auto* dec = app.add_subcommand("decompose", "dump pyramid bands as PFM plus a manifest");
    dec->add_option("--input", input_path, "input image")->required();
    dec->add_option("--out-dir", dir_path, "output directory")->required();
    dec->add_option("--target-low", target_low, "low image target resolution");

    auto* rec = app.add_subcommand("reconstruct", "rebuild an image from a decompose dump");
    rec->add_option("--in-dir", dir_path, "directory with manifest.txt")->required();
    rec->add_option("--output", output_path, "output image")->required();
    rec->add_option("--bitdepth", bitdepth, "output bit depth (8 or 16)");

    auto* alut = app.add_subcommand("apply-lut", "apply a .cube 3D LUT to an image");
    alut->add_option("--lut", lut_path, "Cube file")->required();
    alut->add_option("--input", input_path, "input image")->required();
    alut->add_option("--output", output_path, "output image")->required();
    alut->add_option("--bitdepth", bitdepth, "output bit depth (8 or 16)");

    auto* llf = app.add_subcommand("llf", "apply a fixed alpha/beta local Laplacian filter");
    llf->add_option("--input", input_path, "input image")->required();
    llf->add_option("--output", output_path, "output image")->required();
    llf->add_option("--alpha", alpha, "detail exponent (<1 boosts, >1 smooths)");
    llf->add_option("--beta", beta, "edge slope (<1 compresses, >1 expands)");
    llf->add_option("--sigma-r", sigma_r, "detail/edge intensity threshold");
    llf->add_option("--k-samples", k_samples, "remapping sample count");
    llf->add_option("--target-low", target_low, "low image target resolution");
    llf->add_option("--bitdepth", bitdepth, "output bit depth (8 or 16)");
    llf->add_option("--dump-bands", dump_dir, "also write the refined bands as PFM files here");

    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
    gc->add_option("--stride", stride, "check every stride-th parameter (default 1 = all)");

    auto* desc = app.add_subcommand("describe", "list checkpoint tensors without loading them");
    desc->add_option("checkpoint", ckpt_path, "model checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help lands here with code 0; every real parse problem is a usage error
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    if (threads <= 0) {
        if (const char* env = std::getenv("LPTM_THREADS")) threads = std::atoi(env);
    }
    if (threads > 0) set_thread_count(threads);

    try {
        if (app.got_subcommand(tonemap))
            return cmd_tonemap(input_path, ckpt_path, output_path, bitdepth, k_samples, target_low);
        if (app.got_subcommand(train_cmd)) return cmd_train(config_path);
        if (app.got_subcommand(eval_cmd))
            return cmd_eval(data_root, ckpt_path, split, csv_out, k_samples, target_low);
        if (app.got_subcommand(dec)) return cmd_decompose(input_path, dir_path, target_low);
        if (app.got_subcommand(rec)) return cmd_reconstruct(dir_path, output_path, bitdepth);
        if (app.got_subcommand(alut)) return cmd_apply_lut(lut_path, input_path, output_path, bitdepth);
        if (app.got_subcommand(llf))
            return cmd_llf(input_path, output_path, alpha, beta, sigma_r, k_samples, target_low,
                           bitdepth, dump_dir);
        if (app.got_subcommand(gc)) return cmd_grad_check(stride);
        if (app.got_subcommand(desc)) return cmd_describe(ckpt_path);
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
