#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dpssm/ssm.hpp"
#include "dpssm/tensor.hpp"

namespace dpssm {

// Fine-grained degradation descriptor, one vector per image.
struct DegradationEmbedding {
    Tensor e;  // (D_emb)

    int dim() const { return e.dim(0); }
};

inline constexpr int kDefaultEmbeddingDim = 512;

// Linear-then-exponential heads mapping the embedding to strictly positive
// modulation vectors: alpha = exp(W e + bias). Zero init gives alpha = 1
// exactly, so an untrained head is an exact no-op.
struct ModulationHeads {
    Tensor w_delta, b_delta;  // (D_inner, D_emb), (D_inner)
    Tensor w_b, b_b;          // (N, D_emb), (N)
    Tensor w_c, b_c;          // (N, D_emb), (N)

    static ModulationHeads zero_init(int d_emb, int d_inner, int n);

    int embedding_dim() const { return w_delta.dim(1); }
    int channel_dim() const { return w_delta.dim(0); }
    int state_dim() const { return w_b.dim(0); }

    Tensor alpha_delta(const DegradationEmbedding& emb) const;  // (D_inner), > 0
    Tensor alpha_b(const DegradationEmbedding& emb) const;      // (N), > 0
    Tensor alpha_c(const DegradationEmbedding& emb) const;      // (N), > 0
};

// Modulated per-step parameters; x passes through untouched.
struct ModulatedScanInputs {
    Tensor x;
    Tensor delta_dp;  // alpha_delta (.) delta, > 0
    Tensor b_dp;      // alpha_b (.) B
    Tensor c_dp;      // alpha_c (.) C

    ScanInputs to_scan_inputs() const { return ScanInputs{x, delta_dp, b_dp, c_dp}; }
};

// Elementwise modulation, broadcasting the per-image alphas over (batch, L).
ModulatedScanInputs modulate(const ModulationHeads& heads, const DegradationEmbedding& emb,
                             const ScanInputs& inputs);

// modulate -> discretize -> scan composition.
ScanOutput dp_scan(const SsmParams& params, const ScanInputs& inputs, const DegradationEmbedding& emb,
                   const ModulationHeads& heads, const ScanOptions& opts = {});

// One row of the step-size statistics harness.
struct DeltaStatsRow {
    std::string degradation_label;
    int layer_index = 0;
    double mean = 0.0;
    double p10 = 0.0;
    double p50 = 0.0;
    double p90 = 0.0;
};

// Summarize a flat collection of modulated step sizes.
DeltaStatsRow summarize_delta(const std::string& label, int layer_index,
                              const std::vector<double>& values);

// CSV schema: degradation_label,layer_index,mean,p10,p50,p90
void write_delta_stats_csv(std::ostream& os, const std::vector<DeltaStatsRow>& rows);

}  // namespace dpssm
