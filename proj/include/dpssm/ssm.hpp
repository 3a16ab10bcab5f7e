#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dpssm/tensor.hpp"

namespace dpssm {

// Diagonal state space parameters. A is (D_inner, N) with strictly negative
// entries at init; D is the per-channel skip coefficient.
struct SsmParams {
    Tensor A;  // (D_inner, N)
    Tensor D;  // (D_inner)

    int channel_dim() const { return A.dim(0); }
    int state_dim() const { return A.dim(1); }

    // a_{d,n} = -(n+1) for every channel (S4D-real style), D = 1.
    static SsmParams s4d_real_init(int d_inner, int n);
    void validate() const;
};

// Per-step selective inputs, Mamba-style shapes.
struct ScanInputs {
    Tensor x;      // (B, L, D_inner)
    Tensor delta;  // (B, L, D_inner), entries > 0
    Tensor B;      // (B, L, N)
    Tensor C;      // (B, L, N)

    int batch() const { return x.dim(0); }
    int seq_len() const { return x.dim(1); }
    void validate(const SsmParams& params) const;
};

struct ScanOutput {
    Tensor y;       // (B, L, D_inner)
    Tensor h_last;  // (B, D_inner, N)
};

struct ScanOptions {
    // Euler simplification B_bar = delta * B instead of the exact ZOH form.
    bool simplified_zoh = false;
    int workers = 1;
    const Tensor* h0 = nullptr;  // optional initial state (B, D_inner, N)
};

// Series-limit crossover for the exact B_bar expression.
inline constexpr double kZohSeriesThreshold = 1e-8;

// Elementwise ZOH of one diagonal row: a_bar = exp(delta*a),
// b_bar = ((exp(delta*a) - 1)/a) * b, series branch below the threshold.
void discretize_zoh(std::span<const double> a_row, double delta, std::span<const double> b_row,
                    std::span<double> a_bar, std::span<double> b_bar, bool simplified = false);

// Scalar helpers: a_bar factor and the B multiplier phi(a, delta) = (exp(delta*a)-1)/a,
// plus its partial derivatives (used by the analytic backward pass).
double zoh_a_bar(double a, double delta);
double zoh_phi(double a, double delta, bool simplified = false);
double zoh_phi_ddelta(double a, double delta, bool simplified = false);
double zoh_phi_da(double a, double delta, bool simplified = false);

// h_i = a_bar_i (.) h_{i-1} + b_bar_i * x_i, y_i = <C_i, h_i> + D * x_i.
ScanOutput scan_sequential(const SsmParams& params, const ScanInputs& inputs,
                           const ScanOptions& opts = {});

// Same contract via a Blelloch up/down-sweep over (a_bar_i, b_bar_i * x_i)
// pairs; lanes (batch x channel) run independently across workers.
ScanOutput scan_parallel(const SsmParams& params, const ScanInputs& inputs,
                         const ScanOptions& opts = {});

struct ScanGrads {
    Tensor x;      // (B, L, D_inner)
    Tensor delta;  // (B, L, D_inner)
    Tensor B;      // (B, L, N)
    Tensor C;      // (B, L, N)
    Tensor A;      // (D_inner, N)
    Tensor D;      // (D_inner)
};

// Analytic reverse-mode gradients of scan_sequential w.r.t. all inputs.
ScanGrads scan_backward(const SsmParams& params, const ScanInputs& inputs, const Tensor& upstream,
                        const ScanOptions& opts = {});

// The associative combine for the parallel scan, exposed for property tests:
// applying (a, b) to a state s gives a (.) s + b.
struct ScanPair {
    std::vector<double> a;
    std::vector<double> b;
};
ScanPair scan_combine(const ScanPair& first, const ScanPair& then);

// Element-operation count of the scan stage (state update + readout FMAs),
// for the benchmark's cost comparison. `directions` is 1 or 2.
std::uint64_t scan_stage_op_count(std::uint64_t batch, std::uint64_t seq_len, std::uint64_t d_inner,
                                  std::uint64_t n, int directions);
// Extra elementwise ops for modulating C over the whole sequence.
std::uint64_t c_modulation_op_count(std::uint64_t batch, std::uint64_t seq_len, std::uint64_t n);

}  // namespace dpssm
