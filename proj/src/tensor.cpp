#include "disc/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace disc {

std::size_t checked_numel(const std::vector<int>& dims) {
    if (dims.empty()) throw std::invalid_argument("tensor dims must be nonempty");
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> d) : dims(std::move(d)), data(checked_numel(dims), 0.0) {}

Tensor::Tensor(std::vector<int> d, std::vector<double> values)
    : dims(std::move(d)), data(values.begin(), values.end()) {
    if (checked_numel(dims) != data.size()) throw std::invalid_argument("tensor data/dims mismatch");
}

Tensor Tensor::zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }

Tensor Tensor::full(std::vector<int> dims, double value) {
    Tensor t(std::move(dims));
    for (double& v : t.data) v = value;
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::randn(Rng& rng, std::vector<int> dims) {
    Tensor t(std::move(dims));
    for (double& v : t.data) v = rng.normal();
    return t;
}

double& Tensor::at3(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * dims[1] + y) * dims[2] + x];
}
double Tensor::at3(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * dims[1] + y) * dims[2] + x];
}
double& Tensor::at2(int r, int c) { return data[static_cast<std::size_t>(r) * dims[1] + c]; }
double Tensor::at2(int r, int c) const { return data[static_cast<std::size_t>(r) * dims[1] + c]; }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
    os << "]";
    return os.str();
}

void Tensor::check_finite(const char* what) const {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string("non-finite value produced by ") + what);
        }
    }
}

}  // namespace disc
