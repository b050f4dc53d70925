#pragma once

#include <string>
#include <utility>
#include <vector>

#include "avfusion/optim.hpp"
#include "avfusion/tensor.hpp"

namespace avf {

// Binary tensor container ("AVTC"), little-endian throughout:
//   magic "AVTC" | version u32 | flags u32 (bit 0: frozen) | count u64
//   per entry: name_len u32 | name bytes | ndim u32 | dims u64[ndim] | f64[numel]
// The same container stores model checkpoints and preprocessed feature
// tensors. Writes are atomic per call (single buffered stream).

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_tensors(const std::string& path, const NamedTensors& entries, bool frozen = false);
NamedTensors load_tensors(const std::string& path, bool* frozen = nullptr);

void save_params(const std::string& path, const ModelParams& params);
ModelParams load_params(const std::string& path);

}  // namespace avf
