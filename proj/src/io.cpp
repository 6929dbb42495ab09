#include "disc/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "disc/rng.hpp"

namespace disc {

namespace {

void fail(const std::filesystem::path& path, const std::string& what) {
    throw std::runtime_error(path.string() + ": " + what);
}

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(char(c));
            while ((c = in.peek()) != EOF && !std::isspace(c)) tok.push_back(char(in.get()));
            return tok;
        }
    }
    return tok;
}

struct PnmHeader {
    std::string magic;
    int w = 0, h = 0, maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::filesystem::path& path) {
    PnmHeader hd;
    hd.magic = next_token(in);
    try {
        hd.w = std::stoi(next_token(in));
        hd.h = std::stoi(next_token(in));
        hd.maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        fail(path, "malformed PNM header");
    }
    in.get();  // single whitespace before raster
    if (hd.w <= 0 || hd.h <= 0) fail(path, "bad PNM dims");
    return hd;
}

}  // namespace

void write_mask_pgm(const std::filesystem::path& path, const LabelMask& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << "P5\n" << m.w << " " << m.h << "\n" << (kNumLabels - 1) << "\n";
    std::vector<unsigned char> row(std::size_t(m.w));
    for (int i = 0; i < m.h; ++i) {
        for (int j = 0; j < m.w; ++j) row[j] = static_cast<unsigned char>(m.at(i, j));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) fail(path, "write failed");
}

LabelMask read_mask_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    auto hd = read_pnm_header(in, path);
    if (hd.magic != "P5") fail(path, "expected P5 magic, got " + hd.magic);
    if (hd.maxval >= kNumLabels) fail(path, "mask maxval " + std::to_string(hd.maxval) +
                                               " exceeds label range");
    std::vector<unsigned char> raw(std::size_t(hd.w) * hd.h);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size()) fail(path, "truncated raster");
    std::vector<int> labels(raw.begin(), raw.end());
    return LabelMask(hd.h, hd.w, std::move(labels));
}

void write_tile_ppm(const std::filesystem::path& path, const Tensor& img) {
    if (img.rank() != 3 || img.dims[0] != 3)
        throw std::invalid_argument("write_tile_ppm: expected (3,H,W) tensor");
    const int h = img.dims[1];
    const int w = img.dims[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(std::size_t(w) * 3);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            for (int c = 0; c < 3; ++c) {
                double v = img.at3(c, i, j);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[std::size_t(j) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!out) fail(path, "write failed");
}

Tensor read_tile_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    auto hd = read_pnm_header(in, path);
    if (hd.magic != "P6") fail(path, "expected P6 magic, got " + hd.magic);
    if (hd.maxval != 255) fail(path, "expected 8-bit PPM");
    std::vector<unsigned char> raw(std::size_t(hd.w) * hd.h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size()) fail(path, "truncated raster");
    Tensor img = Tensor::zeros({3, hd.h, hd.w});
    for (int i = 0; i < hd.h; ++i)
        for (int j = 0; j < hd.w; ++j)
            for (int c = 0; c < 3; ++c)
                img.at3(c, i, j) = raw[(std::size_t(i) * hd.w + j) * 3 + c] / 255.0;
    return img;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail(path, "cannot open");
    const auto n = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(n), 0);
    in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (in.gcount() != n) fail(path, "short read");
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out.write(reinterpret_cast<const char*>(data), std::streamsize(n));
    if (!out) fail(path, "write failed");
}

std::string hash_bytes_hex(const void* data, std::size_t n) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data, n)));
    return buf;
}

std::string hash_file_hex(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return hash_bytes_hex(bytes.data(), bytes.size());
}

}  // namespace disc
