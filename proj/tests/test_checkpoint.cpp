#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "disc/checkpoint.hpp"
#include "disc/io.hpp"
#include "disc/rng.hpp"
#include "doctest.h"

using namespace disc;

namespace {

std::filesystem::path ckpt_dir() {
    auto dir = std::filesystem::temp_directory_path() / "disc_ckpt_test";
    std::filesystem::create_directories(dir);
    return dir;
}

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.tag = "sd-disc";
    c.config_hash = "00ff00ff00ff00ff";
    c.schedule_t = 200;
    c.beta_start = 1e-4;
    c.beta_end = 0.05;
    c.rng_key = 0xdeadbeefcafe1234ull;
    c.rng_counter = 42;
    Rng rng(7);
    c.tensors.emplace("enc.w", Tensor::randn(rng, {4, 3, 3, 3}));
    c.tensors.emplace("enc.b", Tensor::randn(rng, {4}));
    c.tensors.emplace("head", Tensor::randn(rng, {2, 8}));
    return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is exact and re-save is byte identical") {
    const auto dir = ckpt_dir();
    const auto path = (dir / "a.ckpt").string();
    const Checkpoint c = sample_checkpoint();
    save_checkpoint(path, c);

    const Checkpoint back = load_checkpoint(path);
    CHECK(back.tag == c.tag);
    CHECK(back.config_hash == c.config_hash);
    CHECK(back.schedule_t == c.schedule_t);
    CHECK(back.beta_start == c.beta_start);
    CHECK(back.beta_end == c.beta_end);
    CHECK(back.rng_key == c.rng_key);
    CHECK(back.rng_counter == c.rng_counter);
    REQUIRE(back.tensors.size() == c.tensors.size());
    for (const auto& [name, t] : c.tensors) {
        REQUIRE(back.tensors.count(name) == 1);
        const Tensor& bt = back.tensors.at(name);
        REQUIRE(bt.dims == t.dims);
        CHECK(std::memcmp(bt.data.data(), t.data.data(), t.numel() * sizeof(double)) == 0);
    }

    const auto path2 = (dir / "b.ckpt").string();
    save_checkpoint(path2, back);
    CHECK(hash_file_hex(path) == hash_file_hex(path2));
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint with no tensors round trips") {
    const auto dir = ckpt_dir();
    const auto path = (dir / "empty.ckpt").string();
    Checkpoint c;
    c.tag = "ae";
    save_checkpoint(path, c);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.tag == "ae");
    CHECK(back.tensors.empty());
    CHECK(back.schedule_t == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint load rejects corrupt files") {
    const auto dir = ckpt_dir();
    const auto path = (dir / "c.ckpt").string();
    save_checkpoint(path, sample_checkpoint());
    const std::vector<unsigned char> good = read_file_bytes(path);

    SUBCASE("bad magic") {
        auto bytes = good;
        bytes[0] ^= 0xff;
        write_file_bytes(path, bytes.data(), bytes.size());
        CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    }
    SUBCASE("unsupported version") {
        auto bytes = good;
        bytes[8] = 99;  // version field follows the 8-byte magic
        write_file_bytes(path, bytes.data(), bytes.size());
        CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    }
    SUBCASE("truncated payload") {
        auto bytes = good;
        bytes.resize(bytes.size() - 5);
        write_file_bytes(path, bytes.data(), bytes.size());
        CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    }
    SUBCASE("truncated header") {
        auto bytes = good;
        bytes.resize(6);
        write_file_bytes(path, bytes.data(), bytes.size());
        CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    }
    SUBCASE("trailing bytes") {
        auto bytes = good;
        bytes.push_back(0);
        write_file_bytes(path, bytes.data(), bytes.size());
        CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint((dir / "nope.ckpt").string()), std::runtime_error);
    }
    std::filesystem::remove_all(dir);
}
