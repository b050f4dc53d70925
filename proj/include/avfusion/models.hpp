#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avfusion/optim.hpp"
#include "avfusion/tensor.hpp"

namespace avf {

enum class HeadKind { classification, regression };

struct AudioNetConfig {
    std::vector<int> widths = {16, 32, 64, 64, 128};  // exactly 5 conv layers
    int attention_hidden = 64;
    HeadKind head = HeadKind::classification;
};

struct VideoNetConfig {
    int stem_channels = 64;
    std::vector<int> module_widths = {64, 128, 256};  // one per residual module
    int expansion = 4;
    int attention_reduction = 4;
    HeadKind head = HeadKind::regression;
};

enum class BaselineKind { lstm, plain_3dcnn };

struct BaselineConfig {
    BaselineKind kind = BaselineKind::lstm;
    int lstm_hidden = 128;
    std::vector<int> cnn_widths = {16, 32, 64, 128};
    HeadKind head = HeadKind::regression;
};

ModelParams init_audio_params(const AudioNetConfig& cfg, std::uint64_t seed);
ModelParams init_video_params(const VideoNetConfig& cfg, std::uint64_t seed);
ModelParams init_baseline_params(const BaselineConfig& cfg, std::uint64_t seed);

// x:[N,1,mel,frames] -> [N,1]; sigmoid applied iff classification head.
Tensor audio_forward(const AudioNetConfig& cfg, const ModelParams& params, const Tensor& x);

// x:[N,3,T,H,W] -> [N,1].
Tensor video_forward(const VideoNetConfig& cfg, const ModelParams& params, const Tensor& x);

// x:[N,3,T,H,W] -> [N,1], kind-dependent body.
Tensor baseline_forward(const BaselineConfig& cfg, const ModelParams& params, const Tensor& x);

// Total scalar count across all entries.
std::size_t count_params(const ModelParams& params);

}  // namespace avf
