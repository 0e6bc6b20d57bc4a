#include "lptm/gradcheck.hpp"
#include "lptm/errors.hpp"
#include "lptm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace lptm {

bool GradCheckReport::pass(double tol) const {
    for (const GroupReport& g : groups)
        if (!(g.rel_err <= tol)) return false;
    return !groups.empty();
}

namespace {

std::string group_of(const std::string& tensor_name) {
    const auto dot = tensor_name.find('.');
    return tensor_name.substr(0, dot == std::string::npos ? tensor_name.size() : dot);
}

struct LossContext {
    const Image* input;
    const Image* ref;
    Image ref_low;
    EdgeMap edge;
    PipelineConfig pipe;
    const TrainConfig* cfg;
};

double loss_at(const ModelState& s, const LossContext& ctx) {
    PipelineTrace trace;
    run_pipeline(s, *ctx.input, ctx.pipe, &trace, &ctx.edge);
    LossParts parts;
    parts.l1 = l1_loss(trace.output, *ctx.ref, trace.i_low_hat, ctx.ref_low);
    for (const Lut3d& lut : s.luts) {
        parts.ls += smoothness_reg(lut);
        parts.lm += monotonicity_reg(lut);
    }
    return total_loss(parts, *ctx.cfg);
}

} // namespace

GradCheckReport check_pipeline_gradients(const Image& input, const Image& reference,
                                         const TrainConfig& cfg, int stride, double epsilon) {
    if (stride < 1) throw ContractError("check_pipeline_gradients: stride must be >= 1");

    const int depth = pyramid_depth(input.width, input.height, cfg.target_low);
    ModelState state = init_model(cfg.n_luts, cfg.n_bins, depth, cfg.seed);
    {
        // Move off the exact init point so every group has a generic gradient,
        // while keeping a margin from every subgradient kink; an epsilon-sized
        // FD probe that straddles an L1 sign flip, a rectifier zero or a
        // monotonicity hinge measures the kink, not the gradient.
        //  - conv kernels get small random noise, hidden biases shift positive
        //    so no pre-activation sits within epsilon of the rectifier kink
        //  - lattices get linear ramps: every adjacent lattice difference is a
        //    fixed nonzero constant, several of them decreasing, so both sides
        //    of the monotonicity hinge are exercised away from its kink
        Rng rng(cfg.seed + 1);
        auto perturb_net = [&](ConvNet& net) {
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                for (double& w : net.layers[l].kernel) w += rng.uniform(-0.02, 0.02);
                if (l + 1 < net.layers.size())
                    for (double& b : net.layers[l].bias) b += 0.7;
            }
        };
        perturb_net(state.weight_net);
        for (ConvNet& ppb : state.ppbs) perturb_net(ppb);

        static const double slopes[3][3] = {
            {0.02, -0.02, 0.03}, {-0.03, 0.02, -0.02}, {0.03, 0.02, -0.03}};
        for (std::size_t n = 0; n < state.luts.size(); ++n) {
            Lut3d& lut = state.luts[n];
            const double* a = slopes[n % 3];
            const double inv = 1.0 / (lut.n_bins - 1);
            for (int k = 0; k < lut.n_bins; ++k)
                for (int j = 0; j < lut.n_bins; ++j)
                    for (int i = 0; i < lut.n_bins; ++i)
                        for (int c = 0; c < 3; ++c)
                            lut.at(i, j, k, c) += (a[0] * i + a[1] * j + a[2] * k) * inv;
        }
        quantize_state_f32(state);
    }

    LossContext ctx;
    ctx.input = &input;
    ctx.ref = &reference;
    ctx.pipe = cfg.pipeline();
    ctx.cfg = &cfg;
    {
        LaplacianPyramid ref_lap;
        GaussianPyramid ref_gauss;
        decompose_depth(reference, depth, ref_lap, ref_gauss);
        ctx.ref_low = ref_lap.low;
        // freeze the edge map of the unperturbed state
        PipelineTrace trace;
        run_pipeline(state, input, ctx.pipe, &trace);
        ctx.edge = trace.edge;
    }

    // analytic gradients
    PipelineTrace trace;
    run_pipeline(state, input, ctx.pipe, &trace, &ctx.edge);
    ModelGrads grads = zero_grads_like(state);
    {
        Image grad_out(trace.output.width, trace.output.height, 3);
        const double fs = 1.0 / double(trace.output.data.size());
        for (std::size_t i = 0; i < grad_out.data.size(); ++i) {
            const double d = trace.output.data[i] - reference.data[i];
            grad_out.data[i] = d > 0 ? fs : (d < 0 ? -fs : 0.0);
        }
        Image grad_low(trace.i_low_hat.width, trace.i_low_hat.height, 3);
        const double ls = 1.0 / double(trace.i_low_hat.data.size());
        for (std::size_t i = 0; i < grad_low.data.size(); ++i) {
            const double d = trace.i_low_hat.data[i] - ctx.ref_low.data[i];
            grad_low.data[i] = d > 0 ? ls : (d < 0 ? -ls : 0.0);
        }
        pipeline_backward(state, trace, ctx.pipe, grad_out, grad_low, grads);
        for (std::size_t n = 0; n < state.luts.size(); ++n) {
            if (cfg.lambda_s != 0) smoothness_reg_grad(state.luts[n], cfg.lambda_s, grads.luts[n]);
            if (cfg.lambda_m != 0) monotonicity_reg_grad(state.luts[n], cfg.lambda_m, grads.luts[n]);
        }
    }

    const auto params = param_tensors(state);
    const auto grefs = grad_tensors(grads, state);

    // finite differences; tensors are scattered over worker threads, each with
    // a private state copy, while the inner pipeline stays single threaded
    const int saved_threads = thread_count();
    set_thread_count(1);
    struct Accum {
        double dot_aa = 0, dot_ff = 0, dot_df = 0, max_err = 0;
        std::size_t n = 0;
    };
    std::vector<Accum> per_tensor(params.size());

    const int workers = std::max(1, std::min(saved_threads, int(params.size())));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        ModelState local = state;
        auto local_params = param_tensors(local);
        for (;;) {
            const std::size_t ti = next.fetch_add(1);
            if (ti >= params.size()) return;
            std::vector<double>& theta = *local_params[ti].data;
            const std::vector<double>& ga = *grefs[ti].data;
            Accum acc;
            for (std::size_t j = 0; j < theta.size(); j += std::size_t(stride)) {
                const double saved = theta[j];
                theta[j] = saved + epsilon;
                const double up = loss_at(local, ctx);
                theta[j] = saved - epsilon;
                const double down = loss_at(local, ctx);
                theta[j] = saved;
                const double fd = (up - down) / (2.0 * epsilon);
                acc.dot_aa += ga[j] * ga[j];
                acc.dot_ff += fd * fd;
                const double diff = ga[j] - fd;
                acc.dot_df += diff * diff;
                acc.max_err = std::max(acc.max_err, std::abs(diff));
                ++acc.n;
            }
            per_tensor[ti] = acc;
        }
    };
    {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers - 1; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
    }
    set_thread_count(saved_threads);

    // aggregate tensors into reporting groups: each LUT, the weight net, each block
    GradCheckReport report;
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
        const std::string group = group_of(params[ti].name);
        auto it = std::find_if(report.groups.begin(), report.groups.end(),
                               [&](const GroupReport& g) { return g.group == group; });
        if (it == report.groups.end()) {
            report.groups.push_back(GroupReport{group, 0, 0, 0, 0, 0});
            it = report.groups.end() - 1;
        }
        it->params += per_tensor[ti].n;
        it->analytic_norm += per_tensor[ti].dot_aa;
        it->fd_norm += per_tensor[ti].dot_ff;
        it->rel_err += per_tensor[ti].dot_df; // squared diff, normalized below
        it->max_abs_err = std::max(it->max_abs_err, per_tensor[ti].max_err);
    }
    for (GroupReport& g : report.groups) {
        g.analytic_norm = std::sqrt(g.analytic_norm);
        g.fd_norm = std::sqrt(g.fd_norm);
        const double denom = std::max({g.analytic_norm, g.fd_norm, 1e-12});
        g.rel_err = std::sqrt(g.rel_err) / denom;
    }
    return report;
}

double check_remap_gradients(std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0;
    const double eps = 1e-5;
    for (int trial = 0; trial < 500; ++trial) {
        const double g = rng.uniform();
        const double i = rng.uniform();
        if (std::abs(std::abs(i - g) - 0.1) < 1e-3) continue;
        const double alpha = rng.uniform(0.2, 2.5);
        const double beta = rng.uniform(0.0, 2.0);
        double da, db;
        remap_grad(i, g, alpha, beta, 0.1, da, db);
        const double fa =
            (remap(i, g, alpha + eps, beta, 0.1) - remap(i, g, alpha - eps, beta, 0.1)) / (2 * eps);
        const double fb =
            (remap(i, g, alpha, beta + eps, 0.1) - remap(i, g, alpha, beta - eps, 0.1)) / (2 * eps);
        worst = std::max(worst, std::abs(da - fa) / std::max({std::abs(da), std::abs(fa), 1e-6}));
        worst = std::max(worst, std::abs(db - fb) / std::max({std::abs(db), std::abs(fb), 1e-6}));
    }
    return worst;
}

double check_lut_gradients(std::uint64_t seed) {
    Rng rng(seed);
    Lut3d lut = zero_lut(5);
    for (double& v : lut.lattice) v = rng.uniform();
    Image img(8, 8, 3);
    for (double& v : img.data) v = rng.uniform();
    Image grad_out(8, 8, 3);
    for (double& v : grad_out.data) v = rng.uniform(-1.0, 1.0);

    std::vector<double> grad_lattice(lut.lattice.size(), 0.0);
    trilinear_backward(lut, img, grad_out, &grad_lattice, nullptr);

    auto objective = [&](const Lut3d& l) {
        const Image out = trilinear_apply(l, img);
        double s = 0;
        for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * grad_out.data[i];
        return s;
    };
    const double eps = 1e-4;
    double worst = 0;
    for (std::size_t i = 0; i < lut.lattice.size(); i += 7) {
        Lut3d lp = lut, lm = lut;
        lp.lattice[i] += eps;
        lm.lattice[i] -= eps;
        const double fd = (objective(lp) - objective(lm)) / (2 * eps);
        worst = std::max(worst, std::abs(grad_lattice[i] - fd) /
                                    std::max({std::abs(grad_lattice[i]), std::abs(fd), 1e-6}));
    }
    return worst;
}

double check_conv_gradients(std::uint64_t seed) {
    Rng rng(seed);
    ConvNet net = make_conv_net({3, 5, 2}, {1, 2});
    kaiming_init(net, rng);
    Image input(6, 6, 3);
    for (double& v : input.data) v = rng.uniform();
    Image gout(6, 6, 2);
    for (double& v : gout.data) v = rng.uniform(-1.0, 1.0);

    ConvTrace trace;
    conv_forward(net, input, &trace);
    ConvNetGrads grads = zero_grads(net);
    conv_backward(net, trace, gout, grads, nullptr);

    auto objective = [&](const ConvNet& n) {
        const Image out = conv_forward(n, input);
        double s = 0;
        for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * gout.data[i];
        return s;
    };
    const double eps = 1e-4;
    double worst = 0;
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        for (std::size_t i = 0; i < net.layers[l].kernel.size(); i += 5) {
            ConvNet np = net, nm = net;
            np.layers[l].kernel[i] += eps;
            nm.layers[l].kernel[i] -= eps;
            const double fd = (objective(np) - objective(nm)) / (2 * eps);
            worst = std::max(worst, std::abs(grads.layers[l].kernel[i] - fd) /
                                        std::max({std::abs(grads.layers[l].kernel[i]), std::abs(fd),
                                                  1e-6}));
        }
    return worst;
}

} // namespace lptm
