#include "lptm/errors.hpp"
#include "lptm/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace lptm {

namespace {

std::string lower_ext(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return ext;
}

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

double clamp01d(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// ---------- PNG ----------

Image load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw FormatError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> raster;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("truncated or corrupt PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    const int out_depth = png_get_bit_depth(png, info);
    if (channels != 1 && channels != 3)
        throw FormatError("unsupported PNG channel count " + std::to_string(channels) + ": " + path);

    const std::size_t stride = png_get_rowbytes(png, info);
    raster.resize(stride * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = raster.data() + y * stride;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(int(w), int(h), channels);
    const double scale = out_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_byte* row = raster.data() + y * stride;
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                double v;
                if (out_depth == 16) {
                    // PNG streams are big-endian
                    const std::size_t idx = (std::size_t(x) * channels + c) * 2;
                    v = double((unsigned(row[idx]) << 8) | row[idx + 1]) * scale;
                } else {
                    v = double(row[std::size_t(x) * channels + c]) * scale;
                }
                img.at(int(x), int(y), c) = clamp01d(v);
            }
        }
    }
    return img;
}

void save_png(const Image& img, const std::string& path, int bitdepth) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_byte> raster;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    const int color_type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, img.width, img.height, bitdepth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const double maxval = bitdepth == 16 ? 65535.0 : 255.0;
    const std::size_t stride = std::size_t(img.width) * img.channels * (bitdepth / 8);
    raster.resize(stride * img.height);
    for (int y = 0; y < img.height; ++y) {
        png_byte* row = raster.data() + std::size_t(y) * stride;
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                const auto q = unsigned(std::floor(clamp01d(img.at(x, y, c)) * maxval + 0.5));
                if (bitdepth == 16) {
                    row[(std::size_t(x) * img.channels + c) * 2] = png_byte(q >> 8);
                    row[(std::size_t(x) * img.channels + c) * 2 + 1] = png_byte(q & 0xff);
                } else {
                    row[std::size_t(x) * img.channels + c] = png_byte(q);
                }
            }
        }
    }
    row_ptrs.resize(img.height);
    for (int y = 0; y < img.height; ++y) row_ptrs[y] = raster.data() + std::size_t(y) * stride;
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---------- PNM (binary PPM/PGM) ----------

int pnm_next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(char(ch));
        ch = in.get();
    }
    return tok.empty() ? EOF : 0;
}

Image load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string tok;
    if (pnm_next_token(in, tok) == EOF) throw FormatError("empty PNM file: " + path);
    int channels;
    if (tok == "P5")
        channels = 1;
    else if (tok == "P6")
        channels = 3;
    else
        throw FormatError("unsupported PNM magic '" + tok + "' (binary P5/P6 only): " + path);

    auto read_int = [&](const char* what) {
        if (pnm_next_token(in, tok) == EOF)
            throw FormatError(std::string("PNM header missing ") + what + ": " + path);
        return std::stoi(tok);
    };
    const int w = read_int("width");
    const int h = read_int("height");
    const int maxval = read_int("maxval");
    if (w < 1 || h < 1) throw FormatError("bad PNM dimensions: " + path);
    if (maxval != 255 && maxval != 65535)
        throw FormatError("PNM maxval must be 255 or 65535: " + path);

    const int bytes = maxval == 255 ? 1 : 2;
    std::vector<unsigned char> raw(std::size_t(w) * h * channels * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size()) throw IoError("truncated PNM data: " + path);

    Image img(w, h, channels);
    const double scale = 1.0 / maxval;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::size_t i = ((std::size_t(y) * w + x) * channels + c) * bytes;
                const unsigned v = bytes == 2 ? (unsigned(raw[i]) << 8) | raw[i + 1] : raw[i];
                img.at(x, y, c) = clamp01d(v * scale);
            }
    return img;
}

void save_pnm(const Image& img, const std::string& path, int bitdepth) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const int maxval = bitdepth == 16 ? 65535 : 255;
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n"
        << maxval << "\n";
    const int bytes = bitdepth == 16 ? 2 : 1;
    std::vector<unsigned char> raw(std::size_t(img.width) * img.height * img.channels * bytes);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const auto q = unsigned(std::floor(clamp01d(img.at(x, y, c)) * maxval + 0.5));
                const std::size_t i = ((std::size_t(y) * img.width + x) * img.channels + c) * bytes;
                if (bytes == 2) {
                    raw[i] = static_cast<unsigned char>(q >> 8); // big-endian per Netpbm
                    raw[i + 1] = static_cast<unsigned char>(q & 0xff);
                } else {
                    raw[i] = static_cast<unsigned char>(q);
                }
            }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw IoError("short write: " + path);
}

// ---------- PFM ----------

Image load_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string tok;
    if (pnm_next_token(in, tok) == EOF) throw FormatError("empty PFM file: " + path);
    int channels;
    if (tok == "PF")
        channels = 3;
    else if (tok == "Pf")
        channels = 1;
    else
        throw FormatError("unsupported PFM magic '" + tok + "': " + path);

    if (pnm_next_token(in, tok) == EOF) throw FormatError("PFM header missing width: " + path);
    const int w = std::stoi(tok);
    if (pnm_next_token(in, tok) == EOF) throw FormatError("PFM header missing height: " + path);
    const int h = std::stoi(tok);
    if (pnm_next_token(in, tok) == EOF) throw FormatError("PFM header missing scale: " + path);
    const double scale = std::stod(tok);
    const bool file_little = scale < 0.0;
    if (w < 1 || h < 1) throw FormatError("bad PFM dimensions: " + path);

    std::vector<unsigned char> raw(std::size_t(w) * h * channels * 4);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size()) throw IoError("truncated PFM data: " + path);

    Image img(w, h, channels);
    for (int y = 0; y < h; ++y) {
        const int src_y = h - 1 - y; // PFM rasters are bottom-up
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::size_t i = ((std::size_t(src_y) * w + x) * channels + c) * 4;
                unsigned char b[4] = {raw[i], raw[i + 1], raw[i + 2], raw[i + 3]};
                if (file_little != (std::endian::native == std::endian::little))
                    std::swap(b[0], b[3]), std::swap(b[1], b[2]);
                float f;
                std::memcpy(&f, b, 4);
                img.at(x, y, c) = double(f);
            }
    }
    return img;
}

void save_pfm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const bool little = std::endian::native == std::endian::little;
    out << (img.channels == 1 ? "Pf" : "PF") << "\n"
        << img.width << " " << img.height << "\n"
        << (little ? "-1.0" : "1.0") << "\n";
    std::vector<unsigned char> raw(std::size_t(img.width) * img.height * img.channels * 4);
    for (int y = 0; y < img.height; ++y) {
        const int dst_y = img.height - 1 - y;
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const float f = float(img.at(x, y, c));
                std::memcpy(&raw[((std::size_t(dst_y) * img.width + x) * img.channels + c) * 4], &f, 4);
            }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw IoError("short write: " + path);
}

} // namespace

Image load_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") return load_png(path);
    if (ext == ".ppm" || ext == ".pgm") return load_pnm(path);
    if (ext == ".pfm") {
        Image img = load_pfm(path);
        for (double& v : img.data) v = clamp01d(v);
        return img;
    }
    throw FormatError("unsupported image format '" + ext + "': " + path);
}

Image load_pfm_raw(const std::string& path) { return load_pfm(path); }

void save_image(const Image& img, const std::string& path, int bitdepth) {
    if (img.empty() || (img.channels != 1 && img.channels != 3))
        throw ContractError("save_image: image must be non-empty with 1 or 3 channels");
    if (bitdepth != 8 && bitdepth != 16)
        throw ContractError("save_image: bitdepth must be 8 or 16");
    const std::string ext = lower_ext(path);
    if (ext == ".png") return save_png(img, path, bitdepth);
    if (ext == ".ppm" || ext == ".pgm") return save_pnm(img, path, bitdepth);
    if (ext == ".pfm") return save_pfm(img, path);
    throw FormatError("unsupported image format '" + ext + "': " + path);
}

std::pair<int, int> probe_image_size(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        unsigned char head[24];
        in.read(reinterpret_cast<char*>(head), 24);
        if (in.gcount() != 24 || std::memcmp(head + 1, "PNG", 3) != 0)
            throw FormatError("not a PNG file: " + path);
        auto be32 = [&](int o) {
            return (unsigned(head[o]) << 24) | (unsigned(head[o + 1]) << 16) |
                   (unsigned(head[o + 2]) << 8) | unsigned(head[o + 3]);
        };
        return {int(be32(16)), int(be32(20))};
    }
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pfm") {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        std::string tok;
        pnm_next_token(in, tok);
        if (pnm_next_token(in, tok) == EOF) throw FormatError("bad header: " + path);
        const int w = std::stoi(tok);
        if (pnm_next_token(in, tok) == EOF) throw FormatError("bad header: " + path);
        return {w, std::stoi(tok)};
    }
    throw FormatError("unsupported image format '" + ext + "': " + path);
}

} // namespace lptm
