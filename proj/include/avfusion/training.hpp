#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avfusion/manifest.hpp"
#include "avfusion/models.hpp"
#include "avfusion/optim.hpp"
#include "avfusion/tensor.hpp"
#include "avfusion/video.hpp"

namespace avf {

// Mixing weights for the bimodal loss l_b = alpha*l_s + beta*l_v.
struct FusionLossConfig {
    double alpha = 0.6;
    double beta = 0.4;
};

// alpha >= 0, beta >= 0, alpha + beta = 1.
void validate_fusion_config(const FusionLossConfig& cfg);

struct TrainSchedule {
    int audio_epochs = 100;
    double audio_lr = 1e-4;
    int fusion_epochs = 150;
    double fusion_lr = 1e-3;
    int batch_size = 8;
    std::uint64_t seed = 0;
};

struct PredictionBatch {
    Tensor predictions;
    Tensor labels;  // same element count; gradients never flow into labels
};

// (1/n) sum |pred - label|, as a scalar with gradient linkage. The
// subgradient at pred == label is 0.
Tensor mae_loss(const PredictionBatch& batch);

// alpha*l_s + beta*l_v over scalar losses; gradient reaches whatever graphs
// the inputs carry, so a constant l_s contributes nothing to the backward
// pass.
Tensor fusion_loss(const Tensor& l_s, const Tensor& l_v, const FusionLossConfig& cfg);

// Preprocessed corpus held in memory: per recording, the stacked log-mel
// segments and the aligned frame stack.
struct TrainSample {
    std::string id;
    Tensor audio_mel;  // [S,1,mel,frames]
    Tensor video;      // [T,3,H,W]
    double label = 0.0;
    std::string split;
};

struct TrainSet {
    std::vector<TrainSample> samples;
    HeadKind head = HeadKind::classification;

    std::vector<std::size_t> split_indices(const std::string& split) const;
    // Training target: raw label for classification, label/63 for the 0-63
    // regression scale.
    double norm_label(double raw) const;
};

// Reads every referenced feature container ("audio_mel" and "video"
// tensors; labels and splits come from the manifest records).
TrainSet load_train_set(const FeatureManifest& fm, HeadKind head);

// One monitoring row; NaN marks a column that does not apply to the stage.
struct HistoryRow {
    int epoch = 0;
    std::string split;
    double loss_s;
    double loss_v;
    double loss_b;
    double metric;
};

struct TrainHistory {
    std::vector<HistoryRow> rows;
};

// CSV with header epoch,split,loss_s,loss_v,loss_b,metric; NaN cells empty.
void write_history_csv(const std::string& path, const TrainHistory& history);
TrainHistory read_history_csv(const std::string& path);

struct AudioTrainResult {
    ModelParams params;  // frozen on return
    TrainHistory history;
};

// Trains the audio net on every (recording, segment) pair of the train
// split, monitoring the val split each epoch; returns final-epoch params
// with the frozen flag set.
AudioTrainResult pretrain_audio(const TrainSet& data, const AudioNetConfig& cfg,
                                const TrainSchedule& schedule);

struct VideoTrainOptions {
    int clip_len = 8;
    bool use_augment = true;
    AugmentConfig augment;
};

struct FusionTrainResult {
    ModelParams video_params;  // snapshot of the best validation epoch
    TrainHistory history;
    int best_epoch = -1;
    double best_val_loss_b = 0.0;
};

// Fine-tunes a fresh video model under l_b with the audio model frozen:
// l_s is computed once from the frozen audio scores and enters each step as
// a constant, so only video parameters receive gradient. Keeps the
// parameters of the epoch with the lowest validation l_b.
FusionTrainResult train_fusion(const TrainSet& data, const ModelParams& audio_params,
                               const AudioNetConfig& audio_cfg, const VideoNetConfig& video_cfg,
                               const FusionLossConfig& fusion_cfg, const TrainSchedule& schedule,
                               const VideoTrainOptions& options = {});

// Ablation: the same engine with alpha=0, beta=1 and no audio stream.
FusionTrainResult train_video_only(const TrainSet& data, const VideoNetConfig& video_cfg,
                                   const TrainSchedule& schedule,
                                   const VideoTrainOptions& options = {});

// Frozen-model recording scores used for monitoring, grid search and
// score-level fusion: audio = mean over a recording's segments, video =
// mean over consecutive clip_len tiles (final partial tile wraps).
std::vector<double> audio_recording_scores(const TrainSet& data, const AudioNetConfig& cfg,
                                           const ModelParams& params,
                                           const std::vector<std::size_t>& indices);
std::vector<double> video_recording_scores(const TrainSet& data, const VideoNetConfig& cfg,
                                           const ModelParams& params, int clip_len,
                                           const std::vector<std::size_t>& indices);

// Picks the candidate alpha (beta = 1-alpha) whose fused validation scores
// maximize accuracy (classification) or minimize MAE (regression). Ties and
// ordering resolve toward the smaller alpha. No retraining: both models are
// fixed and only the score mix changes.
FusionLossConfig grid_search_alpha_beta(const TrainSet& data, const AudioNetConfig& audio_cfg,
                                        const ModelParams& audio_params,
                                        const VideoNetConfig& video_cfg,
                                        const ModelParams& video_params, int clip_len,
                                        const std::vector<double>& candidates);

}  // namespace avf
