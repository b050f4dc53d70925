#include "avfusion/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "avfusion/csv.hpp"
#include "avfusion/errors.hpp"

namespace avf {

namespace {

void check_pair(const std::vector<double>& a, const std::vector<double>& b, const char* what) {
    if (a.empty()) throw ValueError(std::string(what) + ": empty input");
    if (a.size() != b.size()) throw ValueError(std::string(what) + ": length mismatch");
}

void check_binary_labels(const std::vector<double>& labels, const char* what) {
    for (double y : labels) {
        if (y != 0.0 && y != 1.0) {
            throw ValueError(std::string(what) + ": labels must be 0 or 1");
        }
    }
}

void check_finite_scores(const std::vector<double>& scores, const char* what) {
    for (double s : scores) {
        if (!std::isfinite(s)) throw ValueError(std::string(what) + ": scores must be finite");
    }
}

}  // namespace

RegressionMetrics regression_metrics(const std::vector<double>& predictions,
                                     const std::vector<double>& labels) {
    check_pair(predictions, labels, "regression metrics");
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - labels[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    const auto n = static_cast<double>(predictions.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

ClassificationMetrics classification_metrics(const std::vector<double>& scores,
                                             const std::vector<double>& labels, double threshold) {
    check_pair(scores, labels, "classification metrics");
    check_binary_labels(labels, "classification metrics");
    check_finite_scores(scores, "classification metrics");
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool truth = labels[i] == 1.0;
        if (pred && truth) ++tp;
        else if (pred && !truth) ++fp;
        else if (!pred && !truth) ++tn;
        else ++fn;
    }
    ClassificationMetrics m;
    m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
    return m;
}

AucResult auc_roc(const std::vector<double>& scores, const std::vector<double>& labels) {
    check_pair(scores, labels, "auc");
    check_binary_labels(labels, "auc");
    check_finite_scores(scores, "auc");
    std::size_t pos = 0;
    for (double y : labels) pos += y == 1.0 ? 1 : 0;
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw ValueError("auc: both classes must be present");

    // Pairwise rank count; twice the score so ties stay integral.
    std::uint64_t twice = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1.0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0.0) continue;
            if (scores[i] > scores[j]) twice += 2;
            else if (scores[i] == scores[j]) twice += 1;
        }
    }
    AucResult out;
    out.auc = static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));

    // Sweep thresholds from +inf through every distinct score down to -inf;
    // prediction = score >= threshold.
    std::set<double, std::greater<double>> distinct(scores.begin(), scores.end());
    std::vector<double> thresholds;
    thresholds.push_back(std::numeric_limits<double>::infinity());
    thresholds.insert(thresholds.end(), distinct.begin(), distinct.end());
    thresholds.push_back(-std::numeric_limits<double>::infinity());
    for (double thr : thresholds) {
        std::size_t tp = 0;
        std::size_t fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= thr) {
                if (labels[i] == 1.0) ++tp;
                else ++fp;
            }
        }
        out.roc.push_back({thr, static_cast<double>(fp) / static_cast<double>(neg),
                           static_cast<double>(tp) / static_cast<double>(pos)});
    }
    return out;
}

const char* to_string(DepressionLevel level) {
    switch (level) {
        case DepressionLevel::minimal: return "minimal";
        case DepressionLevel::mild: return "mild";
        case DepressionLevel::moderate: return "moderate";
        case DepressionLevel::severe: return "severe";
    }
    return "severe";
}

DepressionLevel bdi_level(double score) {
    if (!(score >= 0.0 && score <= 63.0)) {
        throw ValueError("bdi level: score must lie in [0,63], got " + std::to_string(score));
    }
    const double k = std::floor(score);
    if (k <= 13.0) return DepressionLevel::minimal;
    if (k <= 19.0) return DepressionLevel::mild;
    if (k <= 28.0) return DepressionLevel::moderate;
    return DepressionLevel::severe;
}

double aggregate_recording(const std::vector<double>& sub_scores) {
    if (sub_scores.empty()) throw ValueError("aggregate: no sub-clip scores");
    double acc = 0.0;
    for (double s : sub_scores) acc += s;
    return acc / static_cast<double>(sub_scores.size());
}

double evaluate_recording(const RecordingFeatures& rec, const AudioNetConfig& audio_cfg,
                          const ModelParams& audio_params, const VideoNetConfig& video_cfg,
                          const ModelParams& video_params, const FusionLossConfig& fusion_cfg,
                          int clip_len) {
    validate_fusion_config(fusion_cfg);
    if (clip_len < 1) throw ValueError("evaluate: clip_len must be positive");
    if (!rec.video.defined() || rec.video.ndim() != 4 || rec.video.shape()[0] < 1) {
        throw ValueError("evaluate: recording needs at least one frame");
    }
    if (!rec.audio_mel.defined() || rec.audio_mel.ndim() != 4 || rec.audio_mel.shape()[0] < 1) {
        throw ValueError("evaluate: recording needs at least one audio segment");
    }
    if (!(rec.fps > 0.0)) throw ValueError("evaluate: fps must be positive");

    // Per-segment audio scores from the frozen model.
    const Tensor seg_pred = audio_forward(audio_cfg, audio_params, rec.audio_mel);
    const auto& seg_scores = seg_pred.values();
    const auto n_seg = static_cast<std::int64_t>(seg_scores.size());

    const int T = rec.video.shape()[0];
    const int L = clip_len;
    const int tiles = (T + L - 1) / L;
    const int H = rec.video.shape()[2];
    const int W = rec.video.shape()[3];
    const auto fsz = static_cast<std::size_t>(3 * H * W);

    std::vector<double> fused;
    fused.reserve(static_cast<std::size_t>(tiles));
    for (std::int64_t t = 0; t < tiles; ++t) {
        // Video sub-clip, wrap-padded over the recording's own frames.
        std::vector<double> cv(static_cast<std::size_t>(3 * L) * static_cast<std::size_t>(H * W));
        for (std::int64_t l = 0; l < L; ++l) {
            const std::int64_t src = (t * L + l) % T;
            const double* sp = rec.video.values().data() + static_cast<std::size_t>(src) * fsz;
            for (std::int64_t c = 0; c < 3; ++c) {
                std::copy(sp + static_cast<std::size_t>(c) * static_cast<std::size_t>(H * W),
                          sp + static_cast<std::size_t>(c + 1) * static_cast<std::size_t>(H * W),
                          cv.begin() + (static_cast<std::size_t>(c) * static_cast<std::size_t>(L) +
                                        static_cast<std::size_t>(l)) *
                                           static_cast<std::size_t>(H * W));
            }
        }
        const Tensor x = Tensor::from_data({1, 3, L, H, W}, std::move(cv));
        const double video_score = video_forward(video_cfg, video_params, x).values()[0];

        // Time-aligned 2 s segments: every segment overlapping the sub-clip's
        // real time span, clamped into the available range.
        const double t0 = static_cast<double>(t * L) / rec.fps;
        const double t1 = static_cast<double>(std::min<std::int64_t>((t + 1) * L, T)) / rec.fps;
        auto s0 = static_cast<std::int64_t>(std::floor(t0 / 2.0));
        auto s1 = static_cast<std::int64_t>(std::ceil(t1 / 2.0));
        s0 = std::clamp<std::int64_t>(s0, 0, n_seg - 1);
        s1 = std::clamp<std::int64_t>(s1, s0 + 1, n_seg);
        double audio_score = 0.0;
        for (std::int64_t s = s0; s < s1; ++s) audio_score += seg_scores[static_cast<std::size_t>(s)];
        audio_score /= static_cast<double>(s1 - s0);

        fused.push_back(fusion_cfg.alpha * audio_score + fusion_cfg.beta * video_score);
    }
    return aggregate_recording(fused);
}

MetricsReport compute_report(HeadKind head, const std::vector<double>& scores,
                             const std::vector<double>& labels, double threshold) {
    check_pair(scores, labels, "report");
    MetricsReport rep;
    rep.head = head;
    rep.n = scores.size();
    if (head == HeadKind::classification) {
        const auto cm = classification_metrics(scores, labels, threshold);
        rep.precision = cm.precision;
        rep.accuracy = cm.accuracy;
        const auto ar = auc_roc(scores, labels);
        rep.auc = ar.auc;
        rep.roc = ar.roc;
    } else {
        const auto rm = regression_metrics(scores, labels);
        rep.mae = rm.mae;
        rep.rmse = rm.rmse;
        for (double s : scores) {
            const double clamped = std::clamp(s, 0.0, 63.0);
            rep.level_counts[static_cast<std::size_t>(bdi_level(clamped))] += 1;
        }
    }
    return rep;
}

void write_report_csv(const std::string& path, const MetricsReport& report) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"key", "value"});
    rows.push_back({"task", report.head == HeadKind::classification ? "classification" : "regression"});
    rows.push_back({"n", std::to_string(report.n)});
    if (report.head == HeadKind::classification) {
        rows.push_back({"precision", fmt_double(report.precision)});
        rows.push_back({"accuracy", fmt_double(report.accuracy)});
        rows.push_back({"auc", fmt_double(report.auc)});
    } else {
        rows.push_back({"mae", fmt_double(report.mae)});
        rows.push_back({"rmse", fmt_double(report.rmse)});
        for (std::size_t i = 0; i < report.level_counts.size(); ++i) {
            rows.push_back({std::string("level_") + to_string(static_cast<DepressionLevel>(i)),
                            std::to_string(report.level_counts[i])});
        }
    }
    write_csv(path, rows);
}

std::vector<std::pair<std::string, std::string>> read_report_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open report '" + path + "'");
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || comma == 0) {
            throw FormatError("report '" + path + "' line " + std::to_string(lineno) + ": expected key,value");
        }
        if (lineno == 1) {
            if (line != "key,value") {
                throw FormatError("report '" + path + "' line 1: unexpected header");
            }
            continue;
        }
        out.emplace_back(line.substr(0, comma), line.substr(comma + 1));
    }
    if (out.empty()) throw FormatError("report '" + path + "' contains no rows");
    return out;
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"threshold", "fpr", "tpr"});
    for (const auto& p : roc) {
        rows.push_back({fmt_double(p.threshold), fmt_double(p.fpr), fmt_double(p.tpr)});
    }
    write_csv(path, rows);
}

}  // namespace avf
