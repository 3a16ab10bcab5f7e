#pragma once

#include <functional>
#include <vector>

#include "dpssm/ssm.hpp"
#include "dpssm/tensor.hpp"

namespace dpssm {

// Single-threaded reverse-mode tape over the restricted op set the models
// need. Nodes are appended in execution order; backward() replays closures in
// reverse. One tape per forward pass; tapes are not shared across threads.
class Tape {
public:
    using Id = int;

    Id leaf(Tensor value, bool requires_grad);

    const Tensor& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Tensor& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }
    bool requires_grad(Id id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // Elementwise on equal shapes.
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id div(Id a, Id b);
    Id scale(Id a, double s);
    Id add_scalar(Id a, double s);
    Id exp(Id a);
    Id neg_exp(Id a);  // -exp(a); keeps trained state matrices strictly negative
    Id silu(Id a);
    Id softplus(Id a);

    // (L, D_in) x (D_out, D_in)^T + (D_out) -> (L, D_out).
    Id linear_seq(Id x, Id w, Id b);
    // (D_in) -> (D_out).
    Id linear_vec(Id x, Id w, Id b);

    // Stride-1 same-padding convolutions on (C, H, W).
    Id conv2d_same(Id x, Id w, Id b);            // w (C_out, C_in, k, k)
    Id depthwise_conv2d_same(Id x, Id w, Id b);  // w (C, k, k)

    // Normalize across channels at each spatial position.
    Id layer_norm_channels(Id x, Id gamma, Id beta, double eps = 1e-6);

    Id pixel_shuffle(Id x, int r);
    Id pixel_unshuffle(Id x, int r);
    Id avg_pool2x2(Id x);
    Id concat_channels(Id a, Id b);

    // x - per-channel spatial mean (the high-frequency residual).
    Id sub_channel_mean(Id x);
    // alpha * x with alpha a (1) tensor.
    Id scale_by_scalar_param(Id x, Id alpha);
    // Per-channel affine from vectors: s[c]*h + t[c].
    Id film(Id h, Id s, Id t);
    // (C, H, W) -> (C) spatial mean.
    Id gap_vec(Id x);

    // (C, H, W) <-> (H*W, C) raster-order flattening.
    Id chw_to_seq(Id x);
    Id seq_to_chw(Id x, int c, int h, int w);

    // (L, D) * (D) broadcast over rows; used for the per-image modulation.
    Id mul_bcast_rows(Id x, Id v);

    // Fused selective scan for one sample: x/dt (L, D), b/c (L, N),
    // a (D, N), d_skip (D) -> y (L, D). Backward is the analytic scan adjoint.
    Id selective_scan(Id x, Id dt, Id b, Id c, Id a, Id d_skip, bool simplified_zoh = false);

    // Scalar losses against a constant target.
    Id l1_loss(Id pred, Tensor target);
    Id l2_loss(Id pred, Tensor target);
    Id fft_l1_loss(Id pred, Tensor target);
    Id one_minus_ssim(Id pred, Tensor target);

    // Seeds d(root)=1 (root must be a scalar) and accumulates leaf gradients.
    void backward(Id root);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void()> backprop;
    };

    Id push(Tensor value, bool requires_grad, std::function<void()> backprop);
    void accumulate(Id id, const Tensor& g);
    Tensor& grad_ref(Id id) { return nodes_[static_cast<size_t>(id)].grad; }
    void ensure_grad(Id id);

    std::vector<Node> nodes_;
};

}  // namespace dpssm
