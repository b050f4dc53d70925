#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "avfusion/models.hpp"
#include "avfusion/optim.hpp"
#include "avfusion/tensor.hpp"
#include "avfusion/training.hpp"

namespace avf {

struct RegressionMetrics {
    double mae = 0.0;
    double rmse = 0.0;
};

RegressionMetrics regression_metrics(const std::vector<double>& predictions,
                                     const std::vector<double>& labels);

struct ClassificationMetrics {
    double precision = 0.0;
    double accuracy = 0.0;
};

// Prediction = score >= threshold. Precision is 0 when nothing is predicted
// positive.
ClassificationMetrics classification_metrics(const std::vector<double>& scores,
                                             const std::vector<double>& labels,
                                             double threshold = 0.5);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct AucResult {
    double auc = 0.0;
    std::vector<RocPoint> roc;  // from (0,0) at +inf to (1,1) at -inf
};

// auc = fraction of (positive, negative) pairs ranked correctly, ties
// counted one half; requires both classes.
AucResult auc_roc(const std::vector<double>& scores, const std::vector<double>& labels);

enum class DepressionLevel { minimal, mild, moderate, severe };

const char* to_string(DepressionLevel level);

// 0-13 minimal, 14-19 mild, 20-28 moderate, 29-63 severe; non-integer
// scores floor first; outside [0,63] is an error.
DepressionLevel bdi_level(double score);

// Arithmetic mean of sub-clip scores.
double aggregate_recording(const std::vector<double>& sub_scores);

// One preprocessed recording ready for test-time scoring.
struct RecordingFeatures {
    Tensor audio_mel;  // [S,1,mel,frames], one row per 2 s segment
    Tensor video;      // [T,3,H,W] aligned frames
    double fps = 30.0;
};

// Test-time protocol: the recording is tiled into consecutive clip_len
// sub-clips (final partial tile wraps over its own frames); each sub-clip
// is scored by the video model and paired with the mean audio score of its
// time-overlapping 2 s segments; the fused sub-clip score is
// alpha*audio + beta*video and the recording score is the sub-clip mean.
double evaluate_recording(const RecordingFeatures& rec, const AudioNetConfig& audio_cfg,
                          const ModelParams& audio_params, const VideoNetConfig& video_cfg,
                          const ModelParams& video_params, const FusionLossConfig& fusion_cfg,
                          int clip_len = 64);

struct MetricsReport {
    HeadKind head = HeadKind::classification;
    std::size_t n = 0;
    // Classification.
    double precision = 0.0;
    double accuracy = 0.0;
    double auc = 0.0;
    std::vector<RocPoint> roc;
    // Regression, on the 0-63 scale.
    double mae = 0.0;
    double rmse = 0.0;
    std::array<std::size_t, 4> level_counts{0, 0, 0, 0};  // predicted levels
};

// Scores arrive on the label scale (probabilities / 0-63). Regression
// predictions are clamped into [0,63] for level binning only.
MetricsReport compute_report(HeadKind head, const std::vector<double>& scores,
                             const std::vector<double>& labels, double threshold = 0.5);

// key,value CSV; parse errors carry line numbers.
void write_report_csv(const std::string& path, const MetricsReport& report);
std::vector<std::pair<std::string, std::string>> read_report_csv(const std::string& path);

// threshold,fpr,tpr CSV for the ROC sweep.
void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc);

}  // namespace avf
