#include "lptm/errors.hpp"
#include "lptm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace lptm {

namespace {

constexpr char kMagic[4] = {'L', 'P', 'T', 'M'};
constexpr std::uint32_t kVersion = 1;

// softplus(b) = 1  =>  PPB heads emit alpha = 1.01, beta = 1 at init
const double kUnitSoftplusBias = std::log(std::exp(1.0) - 1.0);

std::vector<int> weight_net_channels(int n_luts) { return {3, 16, 32, 32, 16, n_luts}; }
const std::vector<int> kWeightNetDilations = {1, 2, 4, 2, 1};
std::vector<int> ppb_channels(int in_ch) { return {in_ch, 16, 16, 2}; }
const std::vector<int> kPpbDilations = {1, 1, 1};

} // namespace

ModelState init_model(int n_luts, int n_bins, int n_levels, std::uint64_t seed) {
    if (n_luts < 1) throw ContractError("init_model: need at least one LUT");
    if (n_levels < 1) throw ContractError("init_model: need at least one level");
    ModelState s;
    s.n_bins = n_bins;
    s.luts.push_back(identity_lut(n_bins));
    for (int n = 1; n < n_luts; ++n) s.luts.push_back(zero_lut(n_bins));

    Rng rng(seed);
    s.weight_net = make_conv_net(weight_net_channels(n_luts), kWeightNetDilations);
    kaiming_init(s.weight_net, rng);
    ConvLayer& head = s.weight_net.layers.back();
    // One-hot bias gives exact identity maps at init; zeroing only the first
    // output row keeps the remaining rows random so the zero LUTs are not
    // stuck at an exact zero-gradient saddle.
    for (int i = 0; i < head.in_ch; ++i)
        for (int t = 0; t < 9; ++t) head.kernel[(std::size_t(0) * head.in_ch + i) * 9 + t] = 0.0;
    head.bias[0] = 1.0;

    for (int lvl = 0; lvl < n_levels; ++lvl) {
        ConvNet ppb = make_conv_net(ppb_channels(lvl == 0 ? 7 : 6), kPpbDilations);
        kaiming_init(ppb, rng);
        ConvLayer& ppb_head = ppb.layers.back();
        std::fill(ppb_head.kernel.begin(), ppb_head.kernel.end(), 0.0);
        ppb_head.bias[0] = kUnitSoftplusBias;
        ppb_head.bias[1] = kUnitSoftplusBias;
        s.ppbs.push_back(std::move(ppb));
    }

    ModelState* self = &s;
    const auto tensors = param_tensors(*self);
    s.adam_m.resize(tensors.size());
    s.adam_v.resize(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        s.adam_m[i].assign(tensors[i].data->size(), 0.0);
        s.adam_v[i].assign(tensors[i].data->size(), 0.0);
    }
    s.adam_t = 0;
    quantize_state_f32(s);
    return s;
}

namespace {

void add_net_tensors(const std::string& prefix, ConvNet& net, std::vector<TensorRef>& out) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        ConvLayer& layer = net.layers[l];
        out.push_back({prefix + "." + std::to_string(l) + ".kernel", &layer.kernel,
                       {layer.out_ch, layer.in_ch, 3, 3}});
        out.push_back({prefix + "." + std::to_string(l) + ".bias", &layer.bias, {layer.out_ch}});
    }
}

void add_net_grad_tensors(const std::string& prefix, const ConvNet& shape, ConvNetGrads& g,
                          std::vector<TensorRef>& out) {
    for (std::size_t l = 0; l < shape.layers.size(); ++l) {
        const ConvLayer& layer = shape.layers[l];
        out.push_back({prefix + "." + std::to_string(l) + ".kernel", &g.layers[l].kernel,
                       {layer.out_ch, layer.in_ch, 3, 3}});
        out.push_back({prefix + "." + std::to_string(l) + ".bias", &g.layers[l].bias, {layer.out_ch}});
    }
}

} // namespace

std::vector<TensorRef> param_tensors(ModelState& s) {
    std::vector<TensorRef> out;
    for (std::size_t n = 0; n < s.luts.size(); ++n)
        out.push_back({"lut." + std::to_string(n), &s.luts[n].lattice,
                       {s.n_bins, s.n_bins, s.n_bins, 3}});
    add_net_tensors("wnet", s.weight_net, out);
    for (std::size_t i = 0; i < s.ppbs.size(); ++i)
        add_net_tensors("ppb" + std::to_string(i), s.ppbs[i], out);
    return out;
}

std::vector<TensorRef> grad_tensors(ModelGrads& g, ModelState& shape_like) {
    std::vector<TensorRef> out;
    for (std::size_t n = 0; n < g.luts.size(); ++n)
        out.push_back({"lut." + std::to_string(n), &g.luts[n],
                       {shape_like.n_bins, shape_like.n_bins, shape_like.n_bins, 3}});
    add_net_grad_tensors("wnet", shape_like.weight_net, g.weight_net, out);
    for (std::size_t i = 0; i < g.ppbs.size(); ++i)
        add_net_grad_tensors("ppb" + std::to_string(i), shape_like.ppbs[i], g.ppbs[i], out);
    return out;
}

ModelGrads zero_grads_like(const ModelState& s) {
    ModelGrads g;
    g.luts.resize(s.luts.size());
    for (std::size_t n = 0; n < s.luts.size(); ++n) g.luts[n].assign(s.luts[n].lattice.size(), 0.0);
    g.weight_net = zero_grads(s.weight_net);
    for (const ConvNet& ppb : s.ppbs) g.ppbs.push_back(zero_grads(ppb));
    return g;
}

std::size_t param_count(const ModelState& s) {
    std::size_t n = 0;
    for (const Lut3d& lut : s.luts) n += lut.lattice.size();
    n += param_count(s.weight_net);
    for (const ConvNet& ppb : s.ppbs) n += param_count(ppb);
    return n;
}

void quantize_state_f32(ModelState& s) {
    const auto tensors = param_tensors(s);
    for (const TensorRef& t : tensors)
        for (double& v : *t.data) v = double(float(v));
    for (auto& m : s.adam_m)
        for (double& v : m) v = double(float(v));
    for (auto& v2 : s.adam_v)
        for (double& v : v2) v = double(float(v));
}

// ---------- checkpoint container ----------

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw IoError("checkpoint truncated while reading " + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void write_tensor(std::ostream& out, const std::string& name, const std::vector<int>& dims,
                  const double* data, std::size_t count) {
    write_u32(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_u32(out, std::uint32_t(dims.size()));
    for (int d : dims) write_u32(out, std::uint32_t(d));
    std::vector<unsigned char> payload(count * 4);
    for (std::size_t i = 0; i < count; ++i) {
        const float f = float(data[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        payload[i * 4 + 0] = static_cast<unsigned char>(bits & 0xff);
        payload[i * 4 + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
        payload[i * 4 + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
        payload[i * 4 + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
}

struct RawTensor {
    std::vector<int> dims;
    std::vector<double> data;
};

std::map<std::string, RawTensor> read_all_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad checkpoint magic: " + path);
    const std::uint32_t version = read_u32(in, "version");
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const std::uint32_t count = read_u32(in, "tensor count");
    std::map<std::string, RawTensor> tensors;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = read_u32(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (std::size_t(in.gcount()) != name_len) throw IoError("checkpoint truncated in name");
        const std::uint32_t rank = read_u32(in, "rank");
        RawTensor raw;
        std::size_t elems = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            raw.dims.push_back(int(read_u32(in, "dim")));
            elems *= std::size_t(raw.dims.back());
        }
        std::vector<unsigned char> payload(elems * 4);
        in.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload.size()));
        if (std::size_t(in.gcount()) != payload.size())
            throw IoError("checkpoint truncated in tensor '" + name + "'");
        raw.data.resize(elems);
        for (std::size_t i = 0; i < elems; ++i) {
            std::uint32_t bits = std::uint32_t(payload[i * 4]) | (std::uint32_t(payload[i * 4 + 1]) << 8) |
                                 (std::uint32_t(payload[i * 4 + 2]) << 16) |
                                 (std::uint32_t(payload[i * 4 + 3]) << 24);
            float f;
            std::memcpy(&f, &bits, 4);
            raw.data[i] = double(f);
        }
        tensors.emplace(std::move(name), std::move(raw));
    }
    return tensors;
}

const RawTensor& need(const std::map<std::string, RawTensor>& tensors, const std::string& name,
                      const std::string& path) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint missing tensor '" + name + "': " + path);
    return it->second;
}

ConvNet net_from_tensors(const std::map<std::string, RawTensor>& tensors, const std::string& prefix,
                         const std::string& path) {
    const RawTensor& dil = need(tensors, prefix + ".dilations", path);
    ConvNet net;
    for (std::size_t l = 0; l < dil.data.size(); ++l) {
        const RawTensor& k = need(tensors, prefix + "." + std::to_string(l) + ".kernel", path);
        const RawTensor& b = need(tensors, prefix + "." + std::to_string(l) + ".bias", path);
        if (k.dims.size() != 4 || k.dims[2] != 3 || k.dims[3] != 3)
            throw FormatError("checkpoint tensor '" + prefix + "." + std::to_string(l) +
                              ".kernel' is not a 3x3 kernel: " + path);
        ConvLayer layer;
        layer.out_ch = k.dims[0];
        layer.in_ch = k.dims[1];
        layer.dilation = int(dil.data[l]);
        layer.kernel = k.data;
        layer.bias = b.data;
        if (int(layer.bias.size()) != layer.out_ch)
            throw FormatError("checkpoint bias size mismatch in '" + prefix + "': " + path);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

} // namespace

void save_checkpoint(const ModelState& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);

    ModelState& ms = const_cast<ModelState&>(s);
    const auto tensors = param_tensors(ms);
    std::uint32_t count = std::uint32_t(tensors.size());     // params
    count += std::uint32_t(2 * tensors.size());              // adam m/v
    count += 1;                                              // adam.t
    count += 1 + std::uint32_t(s.ppbs.size());               // dilation tables
    write_u32(out, count);

    for (const TensorRef& t : tensors) write_tensor(out, t.name, t.dims, t.data->data(), t.data->size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        write_tensor(out, "adam.m." + tensors[i].name, tensors[i].dims, s.adam_m[i].data(),
                     s.adam_m[i].size());
        write_tensor(out, "adam.v." + tensors[i].name, tensors[i].dims, s.adam_v[i].data(),
                     s.adam_v[i].size());
    }
    const double t_val = double(s.adam_t);
    write_tensor(out, "adam.t", {1}, &t_val, 1);

    auto write_dilations = [&](const std::string& prefix, const ConvNet& net) {
        std::vector<double> d;
        for (const ConvLayer& layer : net.layers) d.push_back(double(layer.dilation));
        write_tensor(out, prefix + ".dilations", {int(d.size())}, d.data(), d.size());
    };
    write_dilations("wnet", s.weight_net);
    for (std::size_t i = 0; i < s.ppbs.size(); ++i)
        write_dilations("ppb" + std::to_string(i), s.ppbs[i]);
    if (!out) throw IoError("short write: " + path);
}

ModelState load_checkpoint(const std::string& path) {
    const auto tensors = read_all_tensors(path);

    ModelState s;
    const RawTensor& lut0 = need(tensors, "lut.0", path);
    if (lut0.dims.size() != 4 || lut0.dims[3] != 3)
        throw FormatError("checkpoint tensor 'lut.0' has unexpected shape: " + path);
    s.n_bins = lut0.dims[0];
    for (std::size_t n = 0;; ++n) {
        auto it = tensors.find("lut." + std::to_string(n));
        if (it == tensors.end()) break;
        Lut3d lut;
        lut.n_bins = s.n_bins;
        lut.lattice = it->second.data;
        if (lut.lattice.size() != std::size_t(s.n_bins) * s.n_bins * s.n_bins * 3)
            throw FormatError("checkpoint LUT size mismatch: " + path);
        s.luts.push_back(std::move(lut));
    }

    s.weight_net = net_from_tensors(tensors, "wnet", path);
    for (std::size_t i = 0;; ++i) {
        if (tensors.find("ppb" + std::to_string(i) + ".dilations") == tensors.end()) break;
        s.ppbs.push_back(net_from_tensors(tensors, "ppb" + std::to_string(i), path));
    }
    if (s.ppbs.empty()) throw FormatError("checkpoint has no parameter prediction blocks: " + path);

    const auto refs = param_tensors(s);
    s.adam_m.resize(refs.size());
    s.adam_v.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        s.adam_m[i] = need(tensors, "adam.m." + refs[i].name, path).data;
        s.adam_v[i] = need(tensors, "adam.v." + refs[i].name, path).data;
        if (s.adam_m[i].size() != refs[i].data->size() || s.adam_v[i].size() != refs[i].data->size())
            throw FormatError("checkpoint moment size mismatch for '" + refs[i].name + "': " + path);
    }
    s.adam_t = std::int64_t(need(tensors, "adam.t", path).data.at(0));
    return s;
}

std::vector<TensorInfo> describe_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad checkpoint magic: " + path);
    const std::uint32_t version = read_u32(in, "version");
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const std::uint32_t count = read_u32(in, "tensor count");
    std::vector<TensorInfo> infos;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = read_u32(in, "name length");
        TensorInfo info;
        info.name.resize(name_len);
        in.read(info.name.data(), name_len);
        if (std::size_t(in.gcount()) != name_len) throw IoError("checkpoint truncated in name");
        const std::uint32_t rank = read_u32(in, "rank");
        info.elements = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            info.dims.push_back(int(read_u32(in, "dim")));
            info.elements *= std::size_t(info.dims.back());
        }
        in.seekg(std::streamoff(info.elements * 4), std::ios::cur);
        if (!in) throw IoError("checkpoint truncated in tensor '" + info.name + "'");
        infos.push_back(std::move(info));
    }
    return infos;
}

} // namespace lptm
