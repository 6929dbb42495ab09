#include "disc/checkpoint.hpp"

#include <cstring>
#include <stdexcept>
#include <vector>

#include "disc/io.hpp"

namespace disc {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

void put_str(std::vector<unsigned char>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<unsigned char> out;
    out.insert(out.end(), Checkpoint::kMagic, Checkpoint::kMagic + 8);
    put_u32(out, Checkpoint::kVersion);
    put_str(out, ckpt.tag);
    put_str(out, ckpt.config_hash);
    put_u32(out, static_cast<std::uint32_t>(ckpt.schedule_t));
    put_f64(out, ckpt.beta_start);
    put_f64(out, ckpt.beta_end);
    put_u64(out, ckpt.rng_key);
    put_u64(out, ckpt.rng_counter);
    put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put_str(out, name);
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.data) put_f64(out, v);
    }
    write_file_bytes(path, out.data(), out.size());
}

Checkpoint load_checkpoint(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    Reader r(bytes);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, Checkpoint::kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::kVersion)
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(version));
    Checkpoint ckpt;
    ckpt.tag = r.str();
    ckpt.config_hash = r.str();
    ckpt.schedule_t = static_cast<std::int32_t>(r.u32());
    ckpt.beta_start = r.f64();
    ckpt.beta_end = r.f64();
    ckpt.rng_key = r.u64();
    ckpt.rng_counter = r.u64();
    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::string name = r.str();
        const std::uint32_t rank = r.u32();
        std::vector<int> dims(rank);
        for (auto& d : dims) d = static_cast<int>(r.u32());
        Tensor t = Tensor::zeros(dims);
        for (double& v : t.data) v = r.f64();
        ckpt.tensors.emplace(name, std::move(t));
    }
    if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes in " + path);
    return ckpt;
}

}  // namespace disc
