#include "dpssm/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace dpssm {

ModulationHeads ModulationHeads::zero_init(int d_emb, int d_inner, int n) {
    ModulationHeads h;
    h.w_delta = Tensor({d_inner, d_emb});
    h.b_delta = Tensor({d_inner});
    h.w_b = Tensor({n, d_emb});
    h.b_b = Tensor({n});
    h.w_c = Tensor({n, d_emb});
    h.b_c = Tensor({n});
    return h;
}

namespace {
Tensor exp_linear(const Tensor& w, const Tensor& b, const Tensor& e) {
    const int rows = w.dim(0), cols = w.dim(1);
    if (e.rank() != 1 || e.dim(0) != cols) {
        throw std::invalid_argument("modulation head: embedding dimension mismatch");
    }
    Tensor out({rows});
    for (int r = 0; r < rows; ++r) {
        double acc = b[static_cast<size_t>(r)];
        const double* wr = w.data() + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += wr[c] * e[static_cast<size_t>(c)];
        out[static_cast<size_t>(r)] = std::exp(acc);
    }
    ensure_finite(out, "modulation alpha");
    return out;
}
}  // namespace

Tensor ModulationHeads::alpha_delta(const DegradationEmbedding& emb) const {
    return exp_linear(w_delta, b_delta, emb.e);
}
Tensor ModulationHeads::alpha_b(const DegradationEmbedding& emb) const {
    return exp_linear(w_b, b_b, emb.e);
}
Tensor ModulationHeads::alpha_c(const DegradationEmbedding& emb) const {
    return exp_linear(w_c, b_c, emb.e);
}

ModulatedScanInputs modulate(const ModulationHeads& heads, const DegradationEmbedding& emb,
                             const ScanInputs& inputs) {
    const int d_inner = inputs.x.dim(2), n_state = inputs.B.dim(2);
    if (heads.channel_dim() != d_inner || heads.state_dim() != n_state) {
        throw std::invalid_argument("modulate: head dimensions do not match scan inputs");
    }
    const Tensor a_delta = heads.alpha_delta(emb);
    const Tensor a_b = heads.alpha_b(emb);
    const Tensor a_c = heads.alpha_c(emb);

    ModulatedScanInputs out;
    out.x = inputs.x;
    out.delta_dp = inputs.delta;
    out.b_dp = inputs.B;
    out.c_dp = inputs.C;

    const int batch = inputs.batch(), seq = inputs.seq_len();
    for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < seq; ++i) {
            for (int d = 0; d < d_inner; ++d) {
                out.delta_dp.at(b, i, d) *= a_delta[static_cast<size_t>(d)];
            }
            for (int n = 0; n < n_state; ++n) {
                out.b_dp.at(b, i, n) *= a_b[static_cast<size_t>(n)];
                out.c_dp.at(b, i, n) *= a_c[static_cast<size_t>(n)];
            }
        }
    }
    return out;
}

ScanOutput dp_scan(const SsmParams& params, const ScanInputs& inputs, const DegradationEmbedding& emb,
                   const ModulationHeads& heads, const ScanOptions& opts) {
    return scan_sequential(params, modulate(heads, emb, inputs).to_scan_inputs(), opts);
}

DeltaStatsRow summarize_delta(const std::string& label, int layer_index,
                              const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("summarize_delta: empty sample");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
    };
    DeltaStatsRow row;
    row.degradation_label = label;
    row.layer_index = layer_index;
    double s = 0.0;
    for (double v : sorted) s += v;
    row.mean = s / static_cast<double>(sorted.size());
    row.p10 = quantile(0.10);
    row.p50 = quantile(0.50);
    row.p90 = quantile(0.90);
    return row;
}

void write_delta_stats_csv(std::ostream& os, const std::vector<DeltaStatsRow>& rows) {
    os << "degradation_label,layer_index,mean,p10,p50,p90\n";
    os.precision(12);
    for (const auto& r : rows) {
        os << r.degradation_label << "," << r.layer_index << "," << r.mean << "," << r.p10 << ","
           << r.p50 << "," << r.p90 << "\n";
    }
}

}  // namespace dpssm
