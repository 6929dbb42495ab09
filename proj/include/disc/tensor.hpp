#pragma once

#include <cstdint>
#include <new>
#include <string>
#include <vector>

#include "disc/rng.hpp"

namespace disc {

// 64-byte-aligned allocator for tensor payloads. SIMD reductions split work
// by the runtime alignment of the data pointer; pinning the alignment makes
// every reduction order a pure function of the shape, so results are bitwise
// reproducible across allocations and process runs.
template <class T>
struct TensorAlloc {
    static constexpr std::size_t kAlign = 64;
    using value_type = T;

    TensorAlloc() = default;
    template <class U>
    TensorAlloc(const TensorAlloc<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign)));
    }
    void deallocate(T* p, std::size_t) noexcept {
        ::operator delete(p, std::align_val_t(kAlign));
    }
    friend bool operator==(const TensorAlloc&, const TensorAlloc&) { return true; }
    friend bool operator!=(const TensorAlloc&, const TensorAlloc&) { return false; }
};

using AlignedVec = std::vector<double, TensorAlloc<double>>;

// Dense row-major double tensor. Plain value type; the autodiff tape wraps it.
struct Tensor {
    std::vector<int> dims;
    AlignedVec data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d);
    Tensor(std::vector<int> d, std::vector<double> values);

    static Tensor zeros(std::vector<int> dims);
    static Tensor full(std::vector<int> dims, double value);
    static Tensor scalar(double value);
    static Tensor randn(Rng& rng, std::vector<int> dims);

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(dims.size()); }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }

    // CHW accessors for the common 3-D case.
    double& at3(int c, int y, int x);
    double at3(int c, int y, int x) const;
    // Row-major 2-D.
    double& at2(int r, int c);
    double at2(int r, int c) const;

    bool same_shape(const Tensor& other) const { return dims == other.dims; }
    std::string shape_str() const;

    // Throws if any entry is NaN or Inf; `what` names the operation.
    void check_finite(const char* what) const;
};

std::size_t checked_numel(const std::vector<int>& dims);

}  // namespace disc
