#include "disc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace disc {

namespace {

thread_local bool g_grad_enabled = true;

bool track(const std::vector<VarPtr>& parents) {
    if (!g_grad_enabled) return false;
    for (const auto& p : parents) {
        if (p->requires_grad) return true;
    }
    return false;
}

// Builds a result node; parents/backprop recorded only when the tape is live.
VarPtr make_node(Tensor value, std::vector<VarPtr> parents, std::function<void(Var&)> backprop) {
    auto out = std::make_shared<Var>();
    out->value = std::move(value);
    if (track(parents)) {
        out->requires_grad = true;
        out->parents = std::move(parents);
        out->backprop = std::move(backprop);
    }
    return out;
}

void require_same_shape(const VarPtr& a, const VarPtr& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                    " vs " + b->value.shape_str());
    }
}

}  // namespace

VarPtr Var::leaf(Tensor t, bool requires_grad) {
    auto v = std::make_shared<Var>();
    v->value = std::move(t);
    v->requires_grad = requires_grad;
    return v;
}

VarPtr Var::constant(Tensor t) { return leaf(std::move(t), false); }

Tensor& Var::grad_buffer() {
    if (grad.data.empty()) grad = Tensor::zeros(value.dims);
    return grad;
}

void Var::accumulate(const Tensor& g) {
    Tensor& dst = grad_buffer();
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
}

void Var::zero_grad() {
    if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const VarPtr& loss) {
    if (!loss) throw std::invalid_argument("backward: null loss");
    if (!loss->is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
    if (!loss->requires_grad) return;  // nothing reaches a trainable leaf

    // Iterative DFS; a node found on the active path twice means a cycle.
    std::vector<Var*> order;
    std::unordered_map<Var*, int> state;  // 1 = on stack, 2 = done
    std::vector<std::pair<Var*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    state[loss.get()] = 1;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Var* p = node->parents[next++].get();
            auto it = state.find(p);
            if (it == state.end()) {
                state[p] = 1;
                stack.emplace_back(p, 0);
            } else if (it->second == 1) {
                throw std::runtime_error("backward: cycle in tape");
            }
        } else {
            state[node] = 2;
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->grad_buffer().data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Var* node = *it;
        if (node->backprop && !node->grad.data.empty()) node->backprop(*node);
    }
}

// ---- elementwise ----

VarPtr add(const VarPtr& a, const VarPtr& b) {
    require_same_shape(a, b, "add");
    Tensor out(a->value.dims);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] + b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Var& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad);
    });
}

VarPtr sub(const VarPtr& a, const VarPtr& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a->value.dims);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] - b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Var& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor& g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] -= self.grad.data[i];
        }
    });
}

VarPtr mul(const VarPtr& a, const VarPtr& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a->value.dims);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Var& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * bv.data[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * av.data[i];
        }
    });
}

VarPtr affine(const VarPtr& a, double scale, double shift) {
    Tensor out(a->value.dims);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = scale * a->value.data[i] + shift;
    return make_node(std::move(out), {a}, [scale](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += scale * self.grad.data[i];
    });
}

VarPtr square(const VarPtr& a) { return mul(a, a); }

namespace {

// Shared scaffold for unary elementwise ops with y' = f'(x) given (x, y).
VarPtr unary_op(const VarPtr& a, double (*f)(double), double (*df)(double, double)) {
    Tensor out(a->value.dims);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = f(a->value.data[i]);
    Tensor cached = out;
    return make_node(std::move(out), {a}, [df, cached = std::move(cached)](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        const Tensor& x = self.parents[0]->value;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            g.data[i] += self.grad.data[i] * df(x.data[i], cached.data[i]);
        }
    });
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

VarPtr relu(const VarPtr& a) {
    return unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

VarPtr silu(const VarPtr& a) {
    return unary_op(
        a, [](double x) { return x * sigmoid_scalar(x); },
        [](double x, double) {
            const double s = sigmoid_scalar(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

VarPtr sigmoid_v(const VarPtr& a) {
    return unary_op(
        a, [](double x) { return sigmoid_scalar(x); },
        [](double, double y) { return y * (1.0 - y); });
}

VarPtr tanh_v(const VarPtr& a) {
    return unary_op(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

VarPtr exp_v(const VarPtr& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

VarPtr log_v(const VarPtr& a) {
    return unary_op(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

VarPtr clamp_v(const VarPtr& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp_v: lo must not exceed hi");
    Tensor out(a->value.dims);
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.data[i] = std::min(std::max(a->value.data[i], lo), hi);
    return make_node(std::move(out), {a}, [lo, hi](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        const Tensor& x = self.parents[0]->value;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            if (x.data[i] > lo && x.data[i] < hi) g.data[i] += self.grad.data[i];
        }
    });
}

// ---- reductions / shape ----

VarPtr sum(const VarPtr& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    return make_node(Tensor::scalar(s), {a}, [](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        const double go = self.grad.data[0];
        for (double& v : g.data) v += go;
    });
}

VarPtr mean(const VarPtr& a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    return affine(sum(a), inv);
}

VarPtr reshape(const VarPtr& a, std::vector<int> dims) {
    if (checked_numel(dims) != a->value.numel()) {
        throw std::invalid_argument("reshape: element count mismatch");
    }
    Tensor out(std::move(dims));
    out.data = a->value.data;
    return make_node(std::move(out), {a}, [](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    });
}

VarPtr concat_ch(const std::vector<VarPtr>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_ch: empty input");
    const int h = xs[0]->value.dims[1], w = xs[0]->value.dims[2];
    int ctotal = 0;
    for (const auto& x : xs) {
        if (x->value.rank() != 3 || x->value.dims[1] != h || x->value.dims[2] != w) {
            throw std::invalid_argument("concat_ch: incompatible shapes");
        }
        ctotal += x->value.dims[0];
    }
    Tensor out({ctotal, h, w});
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data.begin(), x->value.data.end(), out.data.begin() + off);
        off += x->value.numel();
    }
    return make_node(std::move(out), xs, [](Var& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            const std::size_t n = p->value.numel();
            if (p->requires_grad) {
                Tensor& g = p->grad_buffer();
                for (std::size_t i = 0; i < n; ++i) g.data[i] += self.grad.data[off + i];
            }
            off += n;
        }
    });
}

VarPtr stack_rows(const std::vector<VarPtr>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
    const int c = static_cast<int>(rows[0]->value.numel());
    Tensor out({static_cast<int>(rows.size()), c});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<int>(rows[r]->value.numel()) != c) {
            throw std::invalid_argument("stack_rows: ragged rows");
        }
        std::copy(rows[r]->value.data.begin(), rows[r]->value.data.end(),
                  out.data.begin() + r * static_cast<std::size_t>(c));
    }
    return make_node(std::move(out), rows, [c](Var& self) {
        for (std::size_t r = 0; r < self.parents.size(); ++r) {
            auto& p = self.parents[r];
            if (!p->requires_grad) continue;
            Tensor& g = p->grad_buffer();
            const std::size_t off = r * static_cast<std::size_t>(c);
            for (int i = 0; i < c; ++i) g.data[i] += self.grad.data[off + i];
        }
    });
}

VarPtr slice_ch(const VarPtr& x, int c0, int c1) {
    if (x->value.rank() != 3 || c0 < 0 || c1 > x->value.dims[0] || c0 >= c1) {
        throw std::invalid_argument("slice_ch: bad channel range");
    }
    const int h = x->value.dims[1], w = x->value.dims[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out({c1 - c0, h, w});
    std::copy(x->value.data.begin() + c0 * plane, x->value.data.begin() + c1 * plane, out.data.begin());
    return make_node(std::move(out), {x}, [c0, plane](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        const std::size_t off = static_cast<std::size_t>(c0) * plane;
        for (std::size_t i = 0; i < self.grad.data.size(); ++i) g.data[off + i] += self.grad.data[i];
    });
}

// ---- lookup / softmax / losses ----

VarPtr embed_hw(const VarPtr& table, const std::vector<int>& labels, int h, int w) {
    if (table->value.rank() != 2) throw std::invalid_argument("embed_hw: table must be (K,d)");
    const int k_count = table->value.dims[0];
    const int d = table->value.dims[1];
    if (static_cast<int>(labels.size()) != h * w) throw std::invalid_argument("embed_hw: label count");
    for (int l : labels) {
        if (l < 0 || l >= k_count) throw std::invalid_argument("embed_hw: label out of range");
    }
    Tensor out({d, h, w});
    for (int i = 0; i < h * w; ++i) {
        const int l = labels[i];
        for (int c = 0; c < d; ++c) out.data[static_cast<std::size_t>(c) * h * w + i] = table->value.at2(l, c);
    }
    return make_node(std::move(out), {table}, [labels, d, h, w](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        for (int i = 0; i < h * w; ++i) {
            const int l = labels[i];
            for (int c = 0; c < d; ++c) {
                g.at2(l, c) += self.grad.data[static_cast<std::size_t>(c) * h * w + i];
            }
        }
    });
}

VarPtr softmax_vec(const VarPtr& x) {
    const std::size_t n = x->value.numel();
    double mx = x->value.data[0];
    for (double v : x->value.data) mx = std::max(mx, v);
    Tensor out(x->value.dims);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.data[i] = std::exp(x->value.data[i] - mx);
        z += out.data[i];
    }
    for (std::size_t i = 0; i < n; ++i) out.data[i] /= z;
    Tensor cached = out;
    return make_node(std::move(out), {x}, [cached = std::move(cached)](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        double dot = 0.0;
        for (std::size_t i = 0; i < cached.data.size(); ++i) dot += self.grad.data[i] * cached.data[i];
        for (std::size_t i = 0; i < cached.data.size(); ++i) {
            g.data[i] += cached.data[i] * (self.grad.data[i] - dot);
        }
    });
}

VarPtr softmax_xent_pixels(const VarPtr& logits, const std::vector<int>& labels) {
    if (logits->value.rank() != 3) throw std::invalid_argument("softmax_xent_pixels: logits must be CHW");
    const int k = logits->value.dims[0];
    const int hw = logits->value.dims[1] * logits->value.dims[2];
    if (static_cast<int>(labels.size()) != hw) throw std::invalid_argument("softmax_xent_pixels: label count");
    Tensor probs({k, logits->value.dims[1], logits->value.dims[2]});
    double loss = 0.0;
    for (int i = 0; i < hw; ++i) {
        double mx = logits->value.data[i];
        for (int c = 1; c < k; ++c) mx = std::max(mx, logits->value.data[static_cast<std::size_t>(c) * hw + i]);
        double z = 0.0;
        for (int c = 0; c < k; ++c) {
            const double e = std::exp(logits->value.data[static_cast<std::size_t>(c) * hw + i] - mx);
            probs.data[static_cast<std::size_t>(c) * hw + i] = e;
            z += e;
        }
        const int y = labels[i];
        if (y < 0 || y >= k) throw std::invalid_argument("softmax_xent_pixels: label out of range");
        for (int c = 0; c < k; ++c) probs.data[static_cast<std::size_t>(c) * hw + i] /= z;
        loss -= std::log(std::max(probs.data[static_cast<std::size_t>(y) * hw + i], 1e-300));
    }
    loss /= hw;
    return make_node(Tensor::scalar(loss), {logits},
                     [labels, k, hw, probs = std::move(probs)](Var& self) {
                         if (!self.parents[0]->requires_grad) return;
                         Tensor& g = self.parents[0]->grad_buffer();
                         const double go = self.grad.data[0] / hw;
                         for (int i = 0; i < hw; ++i) {
                             for (int c = 0; c < k; ++c) {
                                 const double p = probs.data[static_cast<std::size_t>(c) * hw + i];
                                 const double t = (c == labels[i]) ? 1.0 : 0.0;
                                 g.data[static_cast<std::size_t>(c) * hw + i] += go * (p - t);
                             }
                         }
                     });
}

}  // namespace disc
