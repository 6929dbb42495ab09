#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "disc/tensor.hpp"

namespace disc {

struct Var;
using VarPtr = std::shared_ptr<Var>;

// One node of the reverse-mode tape. Ops are free functions that produce new
// nodes; each captures the backward rule as a closure over its parents.
struct Var : std::enable_shared_from_this<Var> {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<VarPtr> parents;
    std::function<void(Var&)> backprop;  // reads this->grad, accumulates into parents

    static VarPtr leaf(Tensor t, bool requires_grad = true);
    static VarPtr constant(Tensor t);

    Tensor& grad_buffer();  // allocates zeros on demand
    void accumulate(const Tensor& g);
    void zero_grad();
    bool is_scalar() const { return value.numel() == 1; }
    double scalar() const { return value.data[0]; }
};

// While a guard is alive, ops do not record parents or backward closures;
// results are plain constants. Used for sampling and evaluation.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// Reverse pass from a scalar loss. Every reachable node is visited exactly
// once in reverse topological order. Throws on non-scalar loss or a cycle.
void backward(const VarPtr& loss);

// ---- elementwise ----
VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr sub(const VarPtr& a, const VarPtr& b);
VarPtr mul(const VarPtr& a, const VarPtr& b);
VarPtr affine(const VarPtr& a, double scale, double shift = 0.0);  // scale*a + shift
VarPtr square(const VarPtr& a);
VarPtr relu(const VarPtr& a);
VarPtr silu(const VarPtr& a);
VarPtr sigmoid_v(const VarPtr& a);
VarPtr tanh_v(const VarPtr& a);
VarPtr exp_v(const VarPtr& a);
VarPtr log_v(const VarPtr& a);
// Pin to [lo, hi]; gradient passes strictly inside the range, zero at and
// beyond the pins.
VarPtr clamp_v(const VarPtr& a, double lo, double hi);

// ---- reductions / shape ----
VarPtr sum(const VarPtr& a);
VarPtr mean(const VarPtr& a);
VarPtr reshape(const VarPtr& a, std::vector<int> dims);
VarPtr concat_ch(const std::vector<VarPtr>& xs);           // CHW, concat on C
VarPtr stack_rows(const std::vector<VarPtr>& rows);        // n vectors (C) -> (n,C)
VarPtr slice_ch(const VarPtr& x, int c0, int c1);          // CHW channel range [c0,c1)

// ---- linear algebra ----
VarPtr matmul(const VarPtr& a, const VarPtr& b);  // (m,k)x(k,n) -> (m,n)

// ---- shaped ops (CHW) ----
VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, int stride, int pad);
VarPtr upsample2x_nn(const VarPtr& x);
VarPtr downsample2x_nn(const VarPtr& x);
VarPtr add_chan_bias(const VarPtr& x, const VarPtr& b);    // b: (C), broadcast over HW
VarPtr group_norm(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta, int groups,
                  double eps = 1e-5);
VarPtr global_avg_pool(const VarPtr& x);                   // CHW -> (C)

// ---- lookup / softmax / losses ----
// table: (K,d); labels: flat h*w ints in {0..K-1}; out: (d,h,w)
VarPtr embed_hw(const VarPtr& table, const std::vector<int>& labels, int h, int w);
VarPtr softmax_vec(const VarPtr& x);  // 1-D
// logits (K,H,W) vs integer labels (H*W); mean cross-entropy over pixels
VarPtr softmax_xent_pixels(const VarPtr& logits, const std::vector<int>& labels);

}  // namespace disc
