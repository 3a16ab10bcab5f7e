#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpssm/tensor.hpp"

namespace dpssm {

// Raised on wire-format violations (bad magic, overlapping offsets, ...).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mutable view over a model's named parameters, used by the optimizer and
// the checkpoint writer.
using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Engine weight file:
//   magic "DPMW1" + '\n'
//   u32 little-endian header length
//   JSON header {name: {dtype, shape, offset, nbytes}}, offsets relative to
//   the data start, 64-byte aligned, sorted, non-overlapping
//   raw little-endian f32 tensor data
void save_weights(const std::string& path, const NamedParams& params);
std::map<std::string, Tensor> load_weights(const std::string& path);

// Copies loaded tensors into the model's parameters; throws if a name is
// missing or a shape differs.
void assign_weights(const std::map<std::string, Tensor>& loaded, const NamedParams& params);

}  // namespace dpssm
