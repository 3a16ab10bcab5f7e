#include "dpssm/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "dpssm/conv.hpp"
#include "dpssm/fft.hpp"

namespace dpssm {

Tape::Id Tape::push(Tensor value, bool requires_grad, std::function<void()> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

void Tape::ensure_grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
}

void Tape::accumulate(Id id, const Tensor& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    ensure_grad(id);
    ensure_same_shape(n.grad, g, "tape accumulate");
    for (size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::backward(Id root) {
    Node& r = nodes_[static_cast<size_t>(root)];
    if (r.value.size() != 1) throw std::invalid_argument("tape backward: root must be scalar");
    ensure_grad(root);
    r.grad[0] += 1.0;
    for (Id id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
        n.backprop();
    }
}

// ---- elementwise ----

Tape::Id Tape::add(Id a, Id b) {
    Tensor v = dpssm::add(value(a), value(b));
    Id out = push(std::move(v), requires_grad(a) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, b, out] {
        accumulate(a, grad(out));
        accumulate(b, grad(out));
    };
    return out;
}

Tape::Id Tape::sub(Id a, Id b) {
    Tensor v = dpssm::sub(value(a), value(b));
    Id out = push(std::move(v), requires_grad(a) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, b, out] {
        accumulate(a, grad(out));
        accumulate(b, dpssm::scale(grad(out), -1.0));
    };
    return out;
}

Tape::Id Tape::mul(Id a, Id b) {
    Tensor v = dpssm::mul(value(a), value(b));
    Id out = push(std::move(v), requires_grad(a) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, b, out] {
        accumulate(a, dpssm::mul(grad(out), value(b)));
        accumulate(b, dpssm::mul(grad(out), value(a)));
    };
    return out;
}

Tape::Id Tape::div(Id a, Id b) {
    ensure_same_shape(value(a), value(b), "tape div");
    Tensor v = value(a);
    for (size_t i = 0; i < v.size(); ++i) v[i] /= value(b)[i];
    Id out = push(std::move(v), requires_grad(a) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, b, out] {
        const Tensor& g = grad(out);
        Tensor ga = g, gb = g;
        for (size_t i = 0; i < g.size(); ++i) {
            const double bi = value(b)[i];
            ga[i] = g[i] / bi;
            gb[i] = -g[i] * value(out)[i] / bi;
        }
        accumulate(a, ga);
        accumulate(b, gb);
    };
    return out;
}

Tape::Id Tape::scale(Id a, double s) {
    Id out = push(dpssm::scale(value(a), s), requires_grad(a), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, s, out] {
        accumulate(a, dpssm::scale(grad(out), s));
    };
    return out;
}

Tape::Id Tape::add_scalar(Id a, double s) {
    Tensor v = value(a);
    for (size_t i = 0; i < v.size(); ++i) v[i] += s;
    Id out = push(std::move(v), requires_grad(a), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, out] { accumulate(a, grad(out)); };
    return out;
}

Tape::Id Tape::exp(Id a) {
    Tensor v = value(a);
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::exp(v[i]);
    Id out = push(std::move(v), requires_grad(a), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, out] {
        accumulate(a, dpssm::mul(grad(out), value(out)));
    };
    return out;
}

Tape::Id Tape::neg_exp(Id a) {
    Tensor v = value(a);
    for (size_t i = 0; i < v.size(); ++i) v[i] = -std::exp(v[i]);
    Id out = push(std::move(v), requires_grad(a), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, out] {
        accumulate(a, dpssm::mul(grad(out), value(out)));
    };
    return out;
}

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Tape::Id Tape::silu(Id a) {
    Tensor v = value(a);
    for (size_t i = 0; i < v.size(); ++i) v[i] = v[i] * sigmoid(v[i]);
    Id out = push(std::move(v), requires_grad(a), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, out] {
        const Tensor& x = value(a);
        Tensor g = grad(out);
        for (size_t i = 0; i < g.size(); ++i) {
            const double s = sigmoid(x[i]);
            g[i] *= s * (1.0 + x[i] * (1.0 - s));
        }
        accumulate(a, g);
    };
    return out;
}

Tape::Id Tape::softplus(Id a) {
    Tensor v = value(a);
    for (size_t i = 0; i < v.size(); ++i) {
        const double x = v[i];
        v[i] = x > 30.0 ? x : std::log1p(std::exp(x));
    }
    Id out = push(std::move(v), requires_grad(a), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, out] {
        const Tensor& x = value(a);
        Tensor g = grad(out);
        for (size_t i = 0; i < g.size(); ++i) g[i] *= sigmoid(x[i]);
        accumulate(a, g);
    };
    return out;
}

// ---- linear layers ----

Tape::Id Tape::linear_seq(Id x, Id w, Id b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1) {
        throw std::invalid_argument("linear_seq: bad ranks");
    }
    const int l = xv.dim(0), d_in = xv.dim(1), d_out = wv.dim(0);
    if (wv.dim(1) != d_in || bv.dim(0) != d_out) throw std::invalid_argument("linear_seq: shape mismatch");
    Tensor v({l, d_out});
    for (int i = 0; i < l; ++i) {
        for (int o = 0; o < d_out; ++o) {
            double acc = bv[static_cast<size_t>(o)];
            for (int k = 0; k < d_in; ++k) acc += xv.at(i, k) * wv.at(o, k);
            v.at(i, o) = acc;
        }
    }
    Id out = push(std::move(v), requires_grad(x) || requires_grad(w) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, w, b, out, l, d_in, d_out] {
        const Tensor& g = grad(out);
        const Tensor& xv2 = value(x);
        const Tensor& wv2 = value(w);
        Tensor gx({l, d_in});
        Tensor gw({d_out, d_in});
        Tensor gb({d_out});
        for (int i = 0; i < l; ++i) {
            for (int o = 0; o < d_out; ++o) {
                const double go = g.at(i, o);
                gb[static_cast<size_t>(o)] += go;
                for (int k = 0; k < d_in; ++k) {
                    gx.at(i, k) += go * wv2.at(o, k);
                    gw.at(o, k) += go * xv2.at(i, k);
                }
            }
        }
        accumulate(x, gx);
        accumulate(w, gw);
        accumulate(b, gb);
    };
    return out;
}

Tape::Id Tape::linear_vec(Id x, Id w, Id b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 1 || wv.rank() != 2 || bv.rank() != 1) {
        throw std::invalid_argument("linear_vec: bad ranks");
    }
    const int d_in = xv.dim(0), d_out = wv.dim(0);
    if (wv.dim(1) != d_in || bv.dim(0) != d_out) throw std::invalid_argument("linear_vec: shape mismatch");
    Tensor v({d_out});
    for (int o = 0; o < d_out; ++o) {
        double acc = bv[static_cast<size_t>(o)];
        for (int k = 0; k < d_in; ++k) acc += xv[static_cast<size_t>(k)] * wv.at(o, k);
        v[static_cast<size_t>(o)] = acc;
    }
    Id out = push(std::move(v), requires_grad(x) || requires_grad(w) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, w, b, out, d_in, d_out] {
        const Tensor& g = grad(out);
        Tensor gx({d_in});
        Tensor gw({d_out, d_in});
        Tensor gb({d_out});
        for (int o = 0; o < d_out; ++o) {
            const double go = g[static_cast<size_t>(o)];
            gb[static_cast<size_t>(o)] = go;
            for (int k = 0; k < d_in; ++k) {
                gx[static_cast<size_t>(k)] += go * value(w).at(o, k);
                gw.at(o, k) = go * value(x)[static_cast<size_t>(k)];
            }
        }
        accumulate(x, gx);
        accumulate(w, gw);
        accumulate(b, gb);
    };
    return out;
}

// ---- convolutions ----

Tape::Id Tape::conv2d_same(Id x, Id w, Id b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    if (xv.rank() != 3 || wv.rank() != 4) throw std::invalid_argument("conv2d_same: bad ranks");
    const int k = wv.dim(2);
    if (k % 2 == 0 || wv.dim(3) != k) throw std::invalid_argument("conv2d_same: kernel must be odd square");
    Conv2dKernel kernel;
    kernel.weights = wv;
    kernel.bias = value(b);
    kernel.stride = 1;
    kernel.padding = (k - 1) / 2;
    Tensor v = conv2d(xv, kernel);
    Id out = push(std::move(v), requires_grad(x) || requires_grad(w) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, w, b, out, k] {
        const Tensor& g = grad(out);
        const Tensor& xv2 = value(x);
        const Tensor& wv2 = value(w);
        const int c_out = wv2.dim(0), c_in = wv2.dim(1);
        const int h = xv2.dim(1), wd = xv2.dim(2), p = (k - 1) / 2;
        Tensor gx = Tensor::zeros_like(xv2);
        Tensor gw = Tensor::zeros_like(wv2);
        Tensor gb({c_out});
        for (int co = 0; co < c_out; ++co) {
            for (int oy = 0; oy < h; ++oy) {
                for (int ox = 0; ox < wd; ++ox) {
                    const double go = g.at(co, oy, ox);
                    if (go == 0.0) continue;
                    gb[static_cast<size_t>(co)] += go;
                    for (int ci = 0; ci < c_in; ++ci) {
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy - p + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox - p + kx;
                                if (ix < 0 || ix >= wd) continue;
                                gx.at(ci, iy, ix) += go * wv2.at(co, ci, ky, kx);
                                gw.at(co, ci, ky, kx) += go * xv2.at(ci, iy, ix);
                            }
                        }
                    }
                }
            }
        }
        accumulate(x, gx);
        accumulate(w, gw);
        accumulate(b, gb);
    };
    return out;
}

Tape::Id Tape::depthwise_conv2d_same(Id x, Id w, Id b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 3 || wv.rank() != 3 || bv.rank() != 1) {
        throw std::invalid_argument("depthwise_conv2d_same: bad ranks");
    }
    const int c = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), k = wv.dim(1);
    if (wv.dim(0) != c || wv.dim(2) != k || k % 2 == 0 || bv.dim(0) != c) {
        throw std::invalid_argument("depthwise_conv2d_same: shape mismatch");
    }
    const int p = (k - 1) / 2;
    Tensor v({c, h, wd});
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < h; ++oy) {
            for (int ox = 0; ox < wd; ++ox) {
                double acc = bv[static_cast<size_t>(ch)];
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy - p + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox - p + kx;
                        if (ix < 0 || ix >= wd) continue;
                        acc += wv.at(ch, ky, kx) * xv.at(ch, iy, ix);
                    }
                }
                v.at(ch, oy, ox) = acc;
            }
        }
    }
    Id out = push(std::move(v), requires_grad(x) || requires_grad(w) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, w, b, out, c, h, wd, k, p] {
        const Tensor& g = grad(out);
        const Tensor& xv2 = value(x);
        const Tensor& wv2 = value(w);
        Tensor gx = Tensor::zeros_like(xv2);
        Tensor gw = Tensor::zeros_like(wv2);
        Tensor gb({c});
        for (int ch = 0; ch < c; ++ch) {
            for (int oy = 0; oy < h; ++oy) {
                for (int ox = 0; ox < wd; ++ox) {
                    const double go = g.at(ch, oy, ox);
                    if (go == 0.0) continue;
                    gb[static_cast<size_t>(ch)] += go;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy - p + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox - p + kx;
                            if (ix < 0 || ix >= wd) continue;
                            gx.at(ch, iy, ix) += go * wv2.at(ch, ky, kx);
                            gw.at(ch, ky, kx) += go * xv2.at(ch, iy, ix);
                        }
                    }
                }
            }
        }
        accumulate(x, gx);
        accumulate(w, gw);
        accumulate(b, gb);
    };
    return out;
}

// ---- normalization ----

Tape::Id Tape::layer_norm_channels(Id x, Id gamma, Id beta, double eps) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) throw std::invalid_argument("layer_norm_channels: x must be (C,H,W)");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const Tensor& gv = value(gamma);
    const Tensor& bv = value(beta);
    if (gv.rank() != 1 || gv.dim(0) != c || bv.rank() != 1 || bv.dim(0) != c) {
        throw std::invalid_argument("layer_norm_channels: gamma/beta must be (C)");
    }
    Tensor v({c, h, w});
    Tensor xhat({c, h, w});
    Tensor inv_std({h, w});
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            double mu = 0.0;
            for (int ch = 0; ch < c; ++ch) mu += xv.at(ch, y, xx);
            mu /= c;
            double var = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const double d = xv.at(ch, y, xx) - mu;
                var += d * d;
            }
            var /= c;
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std.at(y, xx) = is;
            for (int ch = 0; ch < c; ++ch) {
                const double xh = (xv.at(ch, y, xx) - mu) * is;
                xhat.at(ch, y, xx) = xh;
                v.at(ch, y, xx) = gv[static_cast<size_t>(ch)] * xh + bv[static_cast<size_t>(ch)];
            }
        }
    }
    Id out = push(std::move(v), requires_grad(x) || requires_grad(gamma) || requires_grad(beta), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, gamma, beta, out, c, h, w,
                                                 xh_saved = std::move(xhat), istd = std::move(inv_std)] {
        const Tensor& g = grad(out);
        const Tensor& gv2 = value(gamma);
        Tensor gx({c, h, w});
        Tensor gg({c});
        Tensor gb({c});
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                double sum_gxh = 0.0, sum_gxh_xhat = 0.0;
                for (int ch = 0; ch < c; ++ch) {
                    const double go = g.at(ch, y, xx);
                    const double xh = xh_saved.at(ch, y, xx);
                    gg[static_cast<size_t>(ch)] += go * xh;
                    gb[static_cast<size_t>(ch)] += go;
                    const double gxh = go * gv2[static_cast<size_t>(ch)];
                    sum_gxh += gxh;
                    sum_gxh_xhat += gxh * xh;
                }
                const double is = istd.at(y, xx);
                for (int ch = 0; ch < c; ++ch) {
                    const double gxh = g.at(ch, y, xx) * gv2[static_cast<size_t>(ch)];
                    gx.at(ch, y, xx) =
                        is * (gxh - sum_gxh / c - xh_saved.at(ch, y, xx) * sum_gxh_xhat / c);
                }
            }
        }
        accumulate(x, gx);
        accumulate(gamma, gg);
        accumulate(beta, gb);
    };
    return out;
}

// ---- shape ops ----

Tape::Id Tape::pixel_shuffle(Id x, int r) {
    Tensor v = dpssm::pixel_shuffle(value(x), r);
    Id out = push(std::move(v), requires_grad(x), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, r, out] {
        accumulate(x, dpssm::pixel_unshuffle(grad(out), r));
    };
    return out;
}

Tape::Id Tape::pixel_unshuffle(Id x, int r) {
    Tensor v = dpssm::pixel_unshuffle(value(x), r);
    Id out = push(std::move(v), requires_grad(x), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, r, out] {
        accumulate(x, dpssm::pixel_shuffle(grad(out), r));
    };
    return out;
}

Tape::Id Tape::avg_pool2x2(Id x) {
    Tensor v = dpssm::avg_pool2x2(value(x));
    Id out = push(std::move(v), requires_grad(x), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, out] {
        const Tensor& g = grad(out);
        const int c = g.dim(0), h = g.dim(1), w = g.dim(2);
        Tensor gx({c, h * 2, w * 2});
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < w; ++xx) {
                    const double gv = 0.25 * g.at(ch, y, xx);
                    gx.at(ch, 2 * y, 2 * xx) = gv;
                    gx.at(ch, 2 * y, 2 * xx + 1) = gv;
                    gx.at(ch, 2 * y + 1, 2 * xx) = gv;
                    gx.at(ch, 2 * y + 1, 2 * xx + 1) = gv;
                }
            }
        }
        accumulate(x, gx);
    };
    return out;
}

Tape::Id Tape::concat_channels(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) {
        throw std::invalid_argument("concat_channels: spatial shape mismatch");
    }
    const int ca = av.dim(0), cb = bv.dim(0), h = av.dim(1), w = av.dim(2);
    Tensor v({ca + cb, h, w});
    std::copy(av.data(), av.data() + av.size(), v.data());
    std::copy(bv.data(), bv.data() + bv.size(), v.data() + av.size());
    Id out = push(std::move(v), requires_grad(a) || requires_grad(b), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, a, b, out, ca, cb, h, w] {
        const Tensor& g = grad(out);
        Tensor ga({ca, h, w}), gb({cb, h, w});
        std::copy(g.data(), g.data() + ga.size(), ga.data());
        std::copy(g.data() + ga.size(), g.data() + g.size(), gb.data());
        accumulate(a, ga);
        accumulate(b, gb);
    };
    return out;
}

Tape::Id Tape::sub_channel_mean(Id x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) throw std::invalid_argument("sub_channel_mean: x must be (C,H,W)");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor v = xv;
    for (int ch = 0; ch < c; ++ch) {
        double mu = 0.0;
        for (int i = 0; i < h * w; ++i) mu += xv.data()[static_cast<size_t>(ch) * h * w + i];
        mu /= static_cast<double>(h) * w;
        for (int i = 0; i < h * w; ++i) v.data()[static_cast<size_t>(ch) * h * w + i] -= mu;
    }
    Id out = push(std::move(v), requires_grad(x), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, out, c, h, w] {
        // Self-adjoint projection: g - mean(g) per channel.
        const Tensor& g = grad(out);
        Tensor gx = g;
        for (int ch = 0; ch < c; ++ch) {
            double mu = 0.0;
            for (int i = 0; i < h * w; ++i) mu += g.data()[static_cast<size_t>(ch) * h * w + i];
            mu /= static_cast<double>(h) * w;
            for (int i = 0; i < h * w; ++i) gx.data()[static_cast<size_t>(ch) * h * w + i] -= mu;
        }
        accumulate(x, gx);
    };
    return out;
}

Tape::Id Tape::scale_by_scalar_param(Id x, Id alpha) {
    const Tensor& av = value(alpha);
    if (av.size() != 1) throw std::invalid_argument("scale_by_scalar_param: alpha must be (1)");
    Tensor v = dpssm::scale(value(x), av[0]);
    Id out = push(std::move(v), requires_grad(x) || requires_grad(alpha), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, alpha, out] {
        accumulate(x, dpssm::scale(grad(out), value(alpha)[0]));
        Tensor ga({1});
        ga[0] = dpssm::dot(grad(out), value(x));
        accumulate(alpha, ga);
    };
    return out;
}

Tape::Id Tape::film(Id h_in, Id s, Id t) {
    const Tensor& hv = value(h_in);
    const Tensor& sv = value(s);
    const Tensor& tv = value(t);
    if (hv.rank() != 3 || sv.rank() != 1 || tv.rank() != 1 || sv.dim(0) != hv.dim(0) ||
        tv.dim(0) != hv.dim(0)) {
        throw std::invalid_argument("film: shape mismatch");
    }
    const int c = hv.dim(0), hh = hv.dim(1), ww = hv.dim(2);
    Tensor v = hv;
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < hh * ww; ++i) {
            double& d = v.data()[static_cast<size_t>(ch) * hh * ww + i];
            d = sv[static_cast<size_t>(ch)] * d + tv[static_cast<size_t>(ch)];
        }
    }
    Id out = push(std::move(v), requires_grad(h_in) || requires_grad(s) || requires_grad(t), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, h_in, s, t, out, c, hh, ww] {
        const Tensor& g = grad(out);
        const Tensor& hv2 = value(h_in);
        const Tensor& sv2 = value(s);
        Tensor gh = Tensor::zeros_like(hv2);
        Tensor gs({c}), gt({c});
        for (int ch = 0; ch < c; ++ch) {
            for (int i = 0; i < hh * ww; ++i) {
                const size_t idx = static_cast<size_t>(ch) * hh * ww + i;
                gh[idx] = g[idx] * sv2[static_cast<size_t>(ch)];
                gs[static_cast<size_t>(ch)] += g[idx] * hv2[idx];
                gt[static_cast<size_t>(ch)] += g[idx];
            }
        }
        accumulate(h_in, gh);
        accumulate(s, gs);
        accumulate(t, gt);
    };
    return out;
}

Tape::Id Tape::gap_vec(Id x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) throw std::invalid_argument("gap_vec: x must be (C,H,W)");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor v({c});
    for (int ch = 0; ch < c; ++ch) {
        double mu = 0.0;
        for (int i = 0; i < h * w; ++i) mu += xv.data()[static_cast<size_t>(ch) * h * w + i];
        v[static_cast<size_t>(ch)] = mu / (static_cast<double>(h) * w);
    }
    Id out = push(std::move(v), requires_grad(x), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, out, c, h, w] {
        const Tensor& g = grad(out);
        Tensor gx({c, h, w});
        for (int ch = 0; ch < c; ++ch) {
            const double gv = g[static_cast<size_t>(ch)] / (static_cast<double>(h) * w);
            for (int i = 0; i < h * w; ++i) gx.data()[static_cast<size_t>(ch) * h * w + i] = gv;
        }
        accumulate(x, gx);
    };
    return out;
}

Tape::Id Tape::chw_to_seq(Id x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) throw std::invalid_argument("chw_to_seq: x must be (C,H,W)");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor v({h * w, c});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h * w; ++i) v.at(i, ch) = xv.data()[static_cast<size_t>(ch) * h * w + i];
    }
    Id out = push(std::move(v), requires_grad(x), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, out, c, h, w] {
        const Tensor& g = grad(out);
        Tensor gx({c, h, w});
        for (int ch = 0; ch < c; ++ch) {
            for (int i = 0; i < h * w; ++i) gx.data()[static_cast<size_t>(ch) * h * w + i] = g.at(i, ch);
        }
        accumulate(x, gx);
    };
    return out;
}

Tape::Id Tape::seq_to_chw(Id x, int c, int h, int w) {
    const Tensor& xv = value(x);
    if (xv.rank() != 2 || xv.dim(0) != h * w || xv.dim(1) != c) {
        throw std::invalid_argument("seq_to_chw: shape mismatch");
    }
    Tensor v({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h * w; ++i) v.data()[static_cast<size_t>(ch) * h * w + i] = xv.at(i, ch);
    }
    Id out = push(std::move(v), requires_grad(x), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, out, c, h, w] {
        const Tensor& g = grad(out);
        Tensor gx({h * w, c});
        for (int ch = 0; ch < c; ++ch) {
            for (int i = 0; i < h * w; ++i) gx.at(i, ch) = g.data()[static_cast<size_t>(ch) * h * w + i];
        }
        accumulate(x, gx);
    };
    return out;
}

Tape::Id Tape::mul_bcast_rows(Id x, Id v_id) {
    const Tensor& xv = value(x);
    const Tensor& vv = value(v_id);
    if (xv.rank() != 2 || vv.rank() != 1 || vv.dim(0) != xv.dim(1)) {
        throw std::invalid_argument("mul_bcast_rows: shape mismatch");
    }
    const int l = xv.dim(0), d = xv.dim(1);
    Tensor v = xv;
    for (int i = 0; i < l; ++i) {
        for (int j = 0; j < d; ++j) v.at(i, j) *= vv[static_cast<size_t>(j)];
    }
    Id out = push(std::move(v), requires_grad(x) || requires_grad(v_id), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, v_id, out, l, d] {
        const Tensor& g = grad(out);
        const Tensor& xv2 = value(x);
        const Tensor& vv2 = value(v_id);
        Tensor gx({l, d});
        Tensor gv({d});
        for (int i = 0; i < l; ++i) {
            for (int j = 0; j < d; ++j) {
                gx.at(i, j) = g.at(i, j) * vv2[static_cast<size_t>(j)];
                gv[static_cast<size_t>(j)] += g.at(i, j) * xv2.at(i, j);
            }
        }
        accumulate(x, gx);
        accumulate(v_id, gv);
    };
    return out;
}

// ---- fused selective scan ----

Tape::Id Tape::selective_scan(Id x, Id dt, Id b, Id c, Id a, Id d_skip, bool simplified_zoh) {
    const Tensor& xv = value(x);
    if (xv.rank() != 2) throw std::invalid_argument("selective_scan: x must be (L, D)");
    const int l = xv.dim(0), d = xv.dim(1);
    const int n = value(b).dim(1);

    auto lift = [l](const Tensor& t) {
        Tensor out({1, l, t.dim(1)});
        std::copy(t.data(), t.data() + t.size(), out.data());
        return out;
    };
    SsmParams params;
    params.A = value(a);
    params.D = value(d_skip);
    ScanInputs inputs;
    inputs.x = lift(value(x));
    inputs.delta = lift(value(dt));
    inputs.B = lift(value(b));
    inputs.C = lift(value(c));
    ScanOptions opts;
    opts.simplified_zoh = simplified_zoh;
    ScanOutput res = scan_sequential(params, inputs, opts);

    Tensor v({l, d});
    std::copy(res.y.data(), res.y.data() + res.y.size(), v.data());
    const bool rg = requires_grad(x) || requires_grad(dt) || requires_grad(b) || requires_grad(c) ||
                    requires_grad(a) || requires_grad(d_skip);
    Id out = push(std::move(v), rg, nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, x, dt, b, c, a, d_skip, out, l, d, n,
                                                 simplified_zoh] {
        auto lift2 = [l](const Tensor& t) {
            Tensor o({1, l, t.dim(1)});
            std::copy(t.data(), t.data() + t.size(), o.data());
            return o;
        };
        auto drop = [](const Tensor& t) {
            Tensor o({t.dim(1), t.dim(2)});
            std::copy(t.data(), t.data() + t.size(), o.data());
            return o;
        };
        SsmParams params2;
        params2.A = value(a);
        params2.D = value(d_skip);
        ScanInputs inputs2;
        inputs2.x = lift2(value(x));
        inputs2.delta = lift2(value(dt));
        inputs2.B = lift2(value(b));
        inputs2.C = lift2(value(c));
        ScanOptions opts2;
        opts2.simplified_zoh = simplified_zoh;
        ScanGrads gr = scan_backward(params2, inputs2, lift2(grad(out)), opts2);
        accumulate(x, drop(gr.x));
        accumulate(dt, drop(gr.delta));
        accumulate(b, drop(gr.B));
        accumulate(c, drop(gr.C));
        accumulate(a, gr.A);
        accumulate(d_skip, gr.D);
    };
    (void)d;
    (void)n;
    return out;
}

// ---- losses ----

Tape::Id Tape::l1_loss(Id pred, Tensor target) {
    const Tensor& pv = value(pred);
    ensure_same_shape(pv, target, "l1_loss");
    const double n = static_cast<double>(pv.size());
    double acc = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) acc += std::fabs(pv[i] - target[i]);
    Tensor v({1});
    v[0] = acc / n;
    Id out = push(std::move(v), requires_grad(pred), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, pred, out, target = std::move(target), n] {
        const double g = grad(out)[0];
        const Tensor& pv2 = value(pred);
        Tensor gp = Tensor::zeros_like(pv2);
        for (size_t i = 0; i < pv2.size(); ++i) {
            const double dv = pv2[i] - target[i];
            gp[i] = g * (dv > 0.0 ? 1.0 : (dv < 0.0 ? -1.0 : 0.0)) / n;
        }
        accumulate(pred, gp);
    };
    return out;
}

Tape::Id Tape::l2_loss(Id pred, Tensor target) {
    const Tensor& pv = value(pred);
    ensure_same_shape(pv, target, "l2_loss");
    const double n = static_cast<double>(pv.size());
    double acc = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        const double dv = pv[i] - target[i];
        acc += dv * dv;
    }
    Tensor v({1});
    v[0] = acc / n;
    Id out = push(std::move(v), requires_grad(pred), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, pred, out, target = std::move(target), n] {
        const double g = grad(out)[0];
        const Tensor& pv2 = value(pred);
        Tensor gp = Tensor::zeros_like(pv2);
        for (size_t i = 0; i < pv2.size(); ++i) gp[i] = g * 2.0 * (pv2[i] - target[i]) / n;
        accumulate(pred, gp);
    };
    return out;
}

namespace {
struct FftView {
    int channels, h, w;
};
FftView fft_view(const Tensor& t) {
    if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
    if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    throw std::invalid_argument("fft_l1_loss: expected (H,W) or (C,H,W)");
}
Tensor fft_slice(const Tensor& t, const FftView& v, int c) {
    Tensor out({v.h, v.w});
    const double* src = t.data() + static_cast<size_t>(c) * v.h * v.w;
    std::copy(src, src + out.size(), out.data());
    return out;
}
}  // namespace

Tape::Id Tape::fft_l1_loss(Id pred, Tensor target) {
    const Tensor& pv = value(pred);
    ensure_same_shape(pv, target, "fft_l1_loss");
    const FftView view = fft_view(pv);
    const double n = static_cast<double>(pv.size());
    double acc = 0.0;
    for (int c = 0; c < view.channels; ++c) {
        const Spectrum st = dft2(fft_slice(target, view, c));
        const Spectrum sp = dft2(fft_slice(pv, view, c));
        for (size_t k = 0; k < st.bins.size(); ++k) acc += std::abs(st.bins[k] - sp.bins[k]);
    }
    Tensor v({1});
    v[0] = acc / n;
    Id out = push(std::move(v), requires_grad(pred), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, pred, out, target = std::move(target), view, n] {
        const double g = grad(out)[0];
        const Tensor& pv2 = value(pred);
        Tensor gp = Tensor::zeros_like(pv2);
        for (int c = 0; c < view.channels; ++c) {
            const Spectrum st = dft2(fft_slice(target, view, c));
            const Spectrum sp = dft2(fft_slice(pv2, view, c));
            Spectrum ph;
            ph.h = st.h;
            ph.w = st.w;
            ph.bins.resize(st.bins.size());
            for (size_t k = 0; k < st.bins.size(); ++k) {
                const std::complex<double> e = st.bins[k] - sp.bins[k];
                const double m = std::abs(e);
                ph.bins[k] = m > 0.0 ? e / m : std::complex<double>(0.0, 0.0);
            }
            const Tensor back = dft2_adjoint_real(ph);
            double* dst = gp.data() + static_cast<size_t>(c) * view.h * view.w;
            for (size_t i = 0; i < back.size(); ++i) dst[i] += -g * back[i] / n;
        }
        accumulate(pred, gp);
    };
    return out;
}

namespace {

std::vector<double> ssim_gaussian11() {
    const int k = 11;
    const double sigma = 1.5;
    std::vector<double> w(static_cast<size_t>(k) * k);
    double sum = 0.0;
    for (int y = 0; y < k; ++y) {
        for (int x = 0; x < k; ++x) {
            const double dy = y - 5, dx = x - 5;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            w[static_cast<size_t>(y) * k + x] = v;
            sum += v;
        }
    }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace

Tape::Id Tape::one_minus_ssim(Id pred, Tensor target) {
    const Tensor& pv = value(pred);
    ensure_same_shape(pv, target, "one_minus_ssim");
    const FftView view = fft_view(pv);
    if (view.h < 11 || view.w < 11) throw std::invalid_argument("one_minus_ssim: image below 11x11");
    static const std::vector<double> win = ssim_gaussian11();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int k = 11;

    double acc = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < view.channels; ++c) {
        const double* px = pv.data() + static_cast<size_t>(c) * view.h * view.w;
        const double* py = target.data() + static_cast<size_t>(c) * view.h * view.w;
        for (int oy = 0; oy + k <= view.h; ++oy) {
            for (int ox = 0; ox + k <= view.w; ++ox) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int wy = 0; wy < k; ++wy) {
                    for (int wx = 0; wx < k; ++wx) {
                        const double g = win[static_cast<size_t>(wy) * k + wx];
                        const double xv = px[static_cast<size_t>(oy + wy) * view.w + (ox + wx)];
                        const double yv = py[static_cast<size_t>(oy + wy) * view.w + (ox + wx)];
                        mx += g * xv;
                        my += g * yv;
                        sxx += g * xv * xv;
                        syy += g * yv * yv;
                        sxy += g * xv * yv;
                    }
                }
                const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
                acc += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
    }
    Tensor v({1});
    v[0] = 1.0 - acc / static_cast<double>(count);
    Id out = push(std::move(v), requires_grad(pred), nullptr);
    nodes_[static_cast<size_t>(out)].backprop = [this, pred, out, target = std::move(target), view, count] {
        const double gup = grad(out)[0];
        const Tensor& pv2 = value(pred);
        Tensor gp = Tensor::zeros_like(pv2);
        const int kk = 11;
        for (int c = 0; c < view.channels; ++c) {
            const double* px = pv2.data() + static_cast<size_t>(c) * view.h * view.w;
            const double* py = target.data() + static_cast<size_t>(c) * view.h * view.w;
            double* gpx = gp.data() + static_cast<size_t>(c) * view.h * view.w;
            for (int oy = 0; oy + kk <= view.h; ++oy) {
                for (int ox = 0; ox + kk <= view.w; ++ox) {
                    double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                    for (int wy = 0; wy < kk; ++wy) {
                        for (int wx = 0; wx < kk; ++wx) {
                            const double g = win[static_cast<size_t>(wy) * kk + wx];
                            const double xv = px[static_cast<size_t>(oy + wy) * view.w + (ox + wx)];
                            const double yv = py[static_cast<size_t>(oy + wy) * view.w + (ox + wx)];
                            mx += g * xv;
                            my += g * yv;
                            sxx += g * xv * xv;
                            syy += g * yv * yv;
                            sxy += g * xv * yv;
                        }
                    }
                    const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
                    const double a1 = 2 * mx * my + 1e-4, a2 = 2 * cov + 9e-4;
                    const double b1 = mx * mx + my * my + 1e-4, b2 = vx + vy + 9e-4;
                    const double s_val = (a1 * a2) / (b1 * b2);
                    // dS/dmu_x, dS/dvar_x, dS/dcov per window, then chain
                    // through the Gaussian weights to the pixels.
                    const double ds_dmx = 2 * my * a2 / (b1 * b2) - 2 * mx * s_val / b1;
                    const double ds_dvx = -s_val / b2;
                    const double ds_dcov = 2 * a1 / (b1 * b2);
                    for (int wy = 0; wy < kk; ++wy) {
                        for (int wx = 0; wx < kk; ++wx) {
                            const double g = win[static_cast<size_t>(wy) * kk + wx];
                            const size_t pi = static_cast<size_t>(oy + wy) * view.w + (ox + wx);
                            const double xv = px[pi], yv = py[pi];
                            const double ds_dx =
                                g * (ds_dmx + ds_dvx * 2.0 * (xv - mx) + ds_dcov * (yv - my));
                            // loss = 1 - mean(S)
                            gpx[pi] += gup * (-ds_dx / static_cast<double>(count));
                        }
                    }
                }
            }
        }
        accumulate(pred, gp);
    };
    return out;
}

}  // namespace dpssm
