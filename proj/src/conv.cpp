#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "disc/tape.hpp"

namespace disc {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

VarPtr make_node_local(Tensor value, std::vector<VarPtr> parents, std::function<void(Var&)> bp) {
    auto out = std::make_shared<Var>();
    out->value = std::move(value);
    bool need = grad_enabled();
    if (need) {
        need = false;
        for (const auto& p : parents) need = need || p->requires_grad;
    }
    if (need) {
        out->requires_grad = true;
        out->parents = std::move(parents);
        out->backprop = std::move(bp);
    }
    return out;
}

// (C,H,W) -> (C*kh*kw, OH*OW), zero padding
Tensor im2col(const Tensor& x, int k, int stride, int pad, int oh, int ow) {
    const int c = x.dims[0], h = x.dims[1], w = x.dims[2];
    Tensor col({c * k * k, oh * ow});
    std::size_t r = 0;
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                double* dst = col.data.data() + r * static_cast<std::size_t>(oh) * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = 0.0;
                        continue;
                    }
                    const double* src = x.data.data() + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        dst[oy * ow + ox] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
    return col;
}

void col2im_add(const Tensor& col, Tensor& gx, int k, int stride, int pad, int oh, int ow) {
    const int c = gx.dims[0], h = gx.dims[1], w = gx.dims[2];
    std::size_t r = 0;
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                const double* src = col.data.data() + r * static_cast<std::size_t>(oh) * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = gx.data.data() + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

VarPtr matmul(const VarPtr& a, const VarPtr& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dims[1] != b->value.dims[0]) {
        throw std::invalid_argument("matmul: incompatible shapes " + a->value.shape_str() + " x " +
                                    b->value.shape_str());
    }
    const int m = a->value.dims[0], k = a->value.dims[1], n = b->value.dims[1];
    Tensor out({m, n});
    CMapRM am(a->value.data.data(), m, k);
    CMapRM bm(b->value.data.data(), k, n);
    MapRM om(out.data.data(), m, n);
    om.noalias() = am * bm;
    return make_node_local(std::move(out), {a, b}, [m, k, n](Var& self) {
        CMapRM go(self.grad.data.data(), m, n);
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor& ga = self.parents[0]->grad_buffer();
            MapRM gam(ga.data.data(), m, k);
            CMapRM bm(bv.data.data(), k, n);
            gam.noalias() += go * bm.transpose();
        }
        if (self.parents[1]->requires_grad) {
            Tensor& gb = self.parents[1]->grad_buffer();
            MapRM gbm(gb.data.data(), k, n);
            CMapRM am(av.data.data(), m, k);
            gbm.noalias() += am.transpose() * go;
        }
    });
}

VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, int stride, int pad) {
    if (x->value.rank() != 3 || w->value.rank() != 4) {
        throw std::invalid_argument("conv2d: x must be CHW, w must be (OC,IC,k,k)");
    }
    const int ic = x->value.dims[0], h = x->value.dims[1], ww = x->value.dims[2];
    const int oc = w->value.dims[0], k = w->value.dims[2];
    if (w->value.dims[1] != ic || w->value.dims[3] != k) {
        throw std::invalid_argument("conv2d: weight/input channel mismatch");
    }
    if (b && static_cast<int>(b->value.numel()) != oc) {
        throw std::invalid_argument("conv2d: bias size mismatch");
    }
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (ww + 2 * pad - k) / stride + 1;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");

    Tensor col = im2col(x->value, k, stride, pad, oh, ow);
    Tensor out({oc, oh, ow});
    {
        CMapRM wm(w->value.data.data(), oc, ic * k * k);
        CMapRM cm(col.data.data(), ic * k * k, oh * ow);
        MapRM om(out.data.data(), oc, oh * ow);
        om.noalias() = wm * cm;
        if (b) {
            for (int o = 0; o < oc; ++o) om.row(o).array() += b->value.data[o];
        }
    }
    std::vector<VarPtr> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node_local(
        std::move(out), std::move(parents),
        [ic, oc, k, stride, pad, oh, ow, col = std::move(col)](Var& self) {
            CMapRM go(self.grad.data.data(), oc, oh * ow);
            auto& xv = self.parents[0];
            auto& wv = self.parents[1];
            if (wv->requires_grad) {
                Tensor& gw = wv->grad_buffer();
                MapRM gwm(gw.data.data(), oc, ic * k * k);
                CMapRM cm(col.data.data(), ic * k * k, oh * ow);
                gwm.noalias() += go * cm.transpose();
            }
            if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                Tensor& gb = self.parents[2]->grad_buffer();
                for (int o = 0; o < oc; ++o) gb.data[o] += go.row(o).sum();
            }
            if (xv->requires_grad) {
                Tensor gcol({ic * k * k, oh * ow});
                MapRM gcm(gcol.data.data(), ic * k * k, oh * ow);
                CMapRM wm(wv->value.data.data(), oc, ic * k * k);
                gcm.noalias() = wm.transpose() * go;
                col2im_add(gcol, xv->grad_buffer(), k, stride, pad, oh, ow);
            }
        });
}

VarPtr upsample2x_nn(const VarPtr& x) {
    if (x->value.rank() != 3) throw std::invalid_argument("upsample2x_nn: CHW expected");
    const int c = x->value.dims[0], h = x->value.dims[1], w = x->value.dims[2];
    Tensor out({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci) {
        for (int y = 0; y < 2 * h; ++y) {
            for (int xx = 0; xx < 2 * w; ++xx) {
                out.at3(ci, y, xx) = x->value.at3(ci, y / 2, xx / 2);
            }
        }
    }
    return make_node_local(std::move(out), {x}, [c, h, w](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        for (int ci = 0; ci < c; ++ci) {
            for (int y = 0; y < 2 * h; ++y) {
                for (int xx = 0; xx < 2 * w; ++xx) {
                    g.at3(ci, y / 2, xx / 2) += self.grad.at3(ci, y, xx);
                }
            }
        }
    });
}

VarPtr downsample2x_nn(const VarPtr& x) {
    if (x->value.rank() != 3) throw std::invalid_argument("downsample2x_nn: CHW expected");
    const int c = x->value.dims[0], h = x->value.dims[1], w = x->value.dims[2];
    if (h % 2 || w % 2) throw std::invalid_argument("downsample2x_nn: odd spatial dims");
    Tensor out({c, h / 2, w / 2});
    for (int ci = 0; ci < c; ++ci) {
        for (int y = 0; y < h / 2; ++y) {
            for (int xx = 0; xx < w / 2; ++xx) out.at3(ci, y, xx) = x->value.at3(ci, 2 * y, 2 * xx);
        }
    }
    return make_node_local(std::move(out), {x}, [c, h, w](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        for (int ci = 0; ci < c; ++ci) {
            for (int y = 0; y < h / 2; ++y) {
                for (int xx = 0; xx < w / 2; ++xx) g.at3(ci, 2 * y, 2 * xx) += self.grad.at3(ci, y, xx);
            }
        }
    });
}

VarPtr add_chan_bias(const VarPtr& x, const VarPtr& b) {
    if (x->value.rank() != 3 || static_cast<int>(b->value.numel()) != x->value.dims[0]) {
        throw std::invalid_argument("add_chan_bias: shape mismatch");
    }
    const int c = x->value.dims[0];
    const std::size_t plane = x->value.numel() / c;
    Tensor out = x->value;
    for (int ci = 0; ci < c; ++ci) {
        double* p = out.data.data() + ci * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += b->value.data[ci];
    }
    return make_node_local(std::move(out), {x, b}, [c, plane](Var& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor& gb = self.parents[1]->grad_buffer();
            for (int ci = 0; ci < c; ++ci) {
                const double* p = self.grad.data.data() + ci * plane;
                double s = 0.0;
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
                gb.data[ci] += s;
            }
        }
    });
}

VarPtr global_avg_pool(const VarPtr& x) {
    if (x->value.rank() != 3) throw std::invalid_argument("global_avg_pool: CHW expected");
    const int c = x->value.dims[0];
    const std::size_t plane = x->value.numel() / c;
    Tensor out({c});
    for (int ci = 0; ci < c; ++ci) {
        const double* p = x->value.data.data() + ci * plane;
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
        out.data[ci] = s / static_cast<double>(plane);
    }
    return make_node_local(std::move(out), {x}, [c, plane](Var& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& g = self.parents[0]->grad_buffer();
        for (int ci = 0; ci < c; ++ci) {
            const double go = self.grad.data[ci] / static_cast<double>(plane);
            double* p = g.data.data() + ci * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += go;
        }
    });
}

VarPtr group_norm(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta, int groups, double eps) {
    if (x->value.rank() != 3) throw std::invalid_argument("group_norm: CHW expected");
    const int c = x->value.dims[0];
    if (c % groups != 0) throw std::invalid_argument("group_norm: channels not divisible by groups");
    if (static_cast<int>(gamma->value.numel()) != c || static_cast<int>(beta->value.numel()) != c) {
        throw std::invalid_argument("group_norm: gamma/beta size mismatch");
    }
    const std::size_t plane = x->value.numel() / c;
    const int cpg = c / groups;
    const std::size_t gsize = cpg * plane;

    Tensor xhat(x->value.dims);
    std::vector<double> inv_std(groups);
    for (int g = 0; g < groups; ++g) {
        const double* p = x->value.data.data() + g * gsize;
        double m = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) m += p[i];
        m /= static_cast<double>(gsize);
        double var = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) {
            const double d = p[i] - m;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[g] = is;
        double* q = xhat.data.data() + g * gsize;
        for (std::size_t i = 0; i < gsize; ++i) q[i] = (p[i] - m) * is;
    }
    Tensor out(x->value.dims);
    for (int ci = 0; ci < c; ++ci) {
        const double ga = gamma->value.data[ci], be = beta->value.data[ci];
        const double* q = xhat.data.data() + ci * plane;
        double* o = out.data.data() + ci * plane;
        for (std::size_t i = 0; i < plane; ++i) o[i] = ga * q[i] + be;
    }
    return make_node_local(
        std::move(out), {x, gamma, beta},
        [groups, c, cpg, plane, gsize, xhat = std::move(xhat), inv_std = std::move(inv_std)](Var& self) {
            auto& xp = self.parents[0];
            auto& gp = self.parents[1];
            auto& bp = self.parents[2];
            if (gp->requires_grad) {
                Tensor& gg = gp->grad_buffer();
                for (int ci = 0; ci < c; ++ci) {
                    const double* go = self.grad.data.data() + ci * plane;
                    const double* q = xhat.data.data() + ci * plane;
                    double s = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) s += go[i] * q[i];
                    gg.data[ci] += s;
                }
            }
            if (bp->requires_grad) {
                Tensor& gb = bp->grad_buffer();
                for (int ci = 0; ci < c; ++ci) {
                    const double* go = self.grad.data.data() + ci * plane;
                    double s = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) s += go[i];
                    gb.data[ci] += s;
                }
            }
            if (!xp->requires_grad) return;
            Tensor& gx = xp->grad_buffer();
            // d/dx of (x-mean)*inv_std with mean/var both functions of x:
            // gx = inv_std * (dxh - mean(dxh) - xhat * mean(dxh*xhat)), dxh = go*gamma
            for (int g = 0; g < groups; ++g) {
                double mean_d = 0.0, mean_dx = 0.0;
                for (int cc = 0; cc < cpg; ++cc) {
                    const int ci = g * cpg + cc;
                    const double ga = gp->value.data[ci];
                    const double* go = self.grad.data.data() + ci * plane;
                    const double* q = xhat.data.data() + ci * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double d = go[i] * ga;
                        mean_d += d;
                        mean_dx += d * q[i];
                    }
                }
                mean_d /= static_cast<double>(gsize);
                mean_dx /= static_cast<double>(gsize);
                for (int cc = 0; cc < cpg; ++cc) {
                    const int ci = g * cpg + cc;
                    const double ga = gp->value.data[ci];
                    const double* go = self.grad.data.data() + ci * plane;
                    const double* q = xhat.data.data() + ci * plane;
                    double* out_g = gx.data.data() + ci * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        out_g[i] += inv_std[g] * (go[i] * ga - mean_d - q[i] * mean_dx);
                    }
                }
            }
        });
}

}  // namespace disc
