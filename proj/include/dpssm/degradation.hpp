#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpssm/image.hpp"
#include "dpssm/tensor.hpp"

namespace dpssm {

enum class BlurKind { Delta, Box, Gaussian, Motion };
enum class ArtifactKind { None, Haze, Rain, Snow };

// Parametric description of the composite formation pipeline
// I = clamp01(Q((alpha (.) J + beta (.) gamma) conv K) + eta).
// Field tensors are generated on demand for a given image size; everything is
// deterministic given `seed`.
struct DegradationSpec {
    // Illumination alpha(x) in (0, 1]: constant, or a smooth linear ramp
    // from alpha to alpha_hi along`ramp_axis` (0 = vertical).
    double alpha = 1.0;
    double alpha_hi = 1.0;
    bool ramp = false;
    int ramp_axis = 0;

    // Additive artifact beta(x)*gamma(x).
    ArtifactKind artifact = ArtifactKind::None;
    double beta = 0.0;
    int artifact_count = 0;     // streaks or flakes
    double artifact_angle = 70; // rain streak angle, degrees
    double artifact_length = 9; // rain streak length, px
    double artifact_radius = 2; // snow disk radius, px

    // Blur kernel K, normalized to sum 1.
    BlurKind blur = BlurKind::Delta;
    int blur_size = 1;          // box size (odd)
    double blur_sigma = 1.0;    // gaussian
    double motion_length = 5.0; // motion
    double motion_angle = 0.0;  // degrees

    int q_levels = 256;     // uniform quantizer levels, 2..256
    double noise_sigma = 0; // i.i.d. Gaussian eta

    std::string label = "identity";
    std::uint64_t seed = 0;

    static DegradationSpec identity();
    void validate() const;

    Tensor alpha_field(int h, int w) const;
    Tensor beta_field(int h, int w) const;
    Tensor gamma_field(int h, int w) const;
    Tensor blur_kernel() const;  // (k, k), sum = 1

    std::string to_json() const;
    static DegradationSpec from_json(const std::string& text);
};

struct LabeledSample {
    Image clean;
    Image degraded;
    DegradationSpec spec;
};

// Intermediate stages of the pipeline, for oracle tests and statistics that
// must see pre-quantization / pre-clamp values.
struct DegradeTrace {
    Tensor composite;  // alpha (.) J + beta (.) gamma
    Tensor blurred;    // composite conv K (reflective padding)
    Tensor quantized;  // Q(blurred)
    Tensor noisy;      // quantized + eta, before the final clamp
    Image final_image;
};

DegradeTrace degrade_traced(const Image& clean, const DegradationSpec& spec);
Image degrade(const Image& clean, const DegradationSpec& spec);

// Reflect-pad (edge-repeating) cross-correlation of one channel with a
// normalized kernel; axis-symmetric kernels preserve the channel sum exactly.
Tensor correlate_reflect(const Tensor& channel, const Tensor& kernel);

// Uniform quantizer emulating storage compression: clamp01 then snap to
// q evenly spaced levels. q = 256 is 8-bit-identical.
double quantize_value(double v, int q_levels);

// Hand rule recovering the class label from a spec's active knobs. Guards
// against recipes overlapping.
std::string classify_spec(const DegradationSpec& spec);

// Per-class parameter ranges for the sampler.
struct ClassRecipe {
    std::string label;
    double alpha_lo = 1.0, alpha_hi = 1.0;
    double beta_lo = 0.0, beta_hi = 0.0;
    ArtifactKind artifact = ArtifactKind::None;
    BlurKind blur = BlurKind::Delta;
    double blur_lo = 0.0, blur_hi = 0.0;  // sigma or length
    int q_lo = 256, q_hi = 256;
    double noise_lo = 0.0, noise_hi = 0.0;
};

// The seven synthetic stand-in classes.
std::vector<ClassRecipe> default_recipes();
ClassRecipe recipe_for(const std::string& label);

DegradationSpec sample_spec(const ClassRecipe& recipe, std::uint64_t seed);

// Deterministic balanced corpus: sample i uses class recipes[i % n] and the
// derived seed (seed, i).
std::vector<LabeledSample> make_corpus(const std::vector<Image>& clean_images,
                                       const std::vector<ClassRecipe>& recipes, int count,
                                       std::uint64_t seed);

// Directory layout: NNNN_clean.ppm / NNNN_degraded.ppm / NNNN_spec.json plus
// manifest.json listing samples and labels.
void write_corpus(const std::string& dir, const std::vector<LabeledSample>& corpus);
std::vector<LabeledSample> read_corpus(const std::string& dir);

}  // namespace dpssm
