#include "avfusion/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "avfusion/checkpoint.hpp"
#include "avfusion/csv.hpp"
#include "avfusion/errors.hpp"
#include "avfusion/ops.hpp"
#include "avfusion/rng.hpp"

namespace avf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_schedule(const TrainSchedule& s) {
    if (s.audio_epochs <= 0 || s.fusion_epochs <= 0) throw ValueError("schedule: epochs must be positive");
    if (s.audio_lr <= 0.0 || s.fusion_lr <= 0.0) throw ValueError("schedule: learning rates must be positive");
    if (s.batch_size <= 0) throw ValueError("schedule: batch size must be positive");
}

struct SplitIdx {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

SplitIdx require_splits(const TrainSet& data, const std::string& stage) {
    SplitIdx s{data.split_indices("train"), data.split_indices("val")};
    if (s.train.empty()) throw ValueError(stage + ": train split is empty");
    if (s.val.empty()) throw ValueError(stage + ": val split is empty");
    return s;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(v[i - 1], v[j]);
    }
}

void check_finite(double loss, const std::string& stage, int epoch) {
    if (!std::isfinite(loss)) {
        throw StateError(stage + " aborted: non-finite loss at epoch " + std::to_string(epoch));
    }
}

bool positive(double score) { return score >= 0.5; }

double accuracy_of(const std::vector<double>& scores, const std::vector<double>& labels) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (positive(scores[i]) == positive(labels[i])) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(scores.size());
}

double mae_of(const std::vector<double>& scores, const std::vector<double>& labels) {
    double acc = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) acc += std::abs(scores[i] - labels[i]);
    return acc / static_cast<double>(scores.size());
}

Tensor label_column(const TrainSet& data, const std::vector<std::size_t>& idx, std::size_t lo,
                    std::size_t hi) {
    std::vector<double> y(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) y[k - lo] = data.norm_label(data.samples[idx[k]].label);
    return Tensor::from_data({static_cast<int>(hi - lo), 1}, std::move(y));
}

// Stacks segments (sample, segment) pairs into one [B,1,mel,frames] batch.
Tensor audio_batch(const TrainSet& data, const std::vector<std::pair<std::size_t, std::int64_t>>& inst,
                   std::size_t lo, std::size_t hi) {
    const auto& ref = data.samples[inst[lo].first].audio_mel.shape();
    const int mel = ref[2];
    const int fr = ref[3];
    const auto seg = static_cast<std::size_t>(mel * fr);
    std::vector<double> out(static_cast<std::size_t>(hi - lo) * seg);
    for (std::size_t k = lo; k < hi; ++k) {
        const auto& t = data.samples[inst[k].first].audio_mel;
        if (t.shape()[2] != mel || t.shape()[3] != fr) {
            throw ValueError("audio training: sample '" + data.samples[inst[k].first].id +
                             "' has mismatched spectrogram shape");
        }
        const double* src = t.values().data() + static_cast<std::size_t>(inst[k].second) * seg;
        std::copy(src, src + seg, out.begin() + (k - lo) * seg);
    }
    return Tensor::from_data({static_cast<int>(hi - lo), 1, mel, fr}, std::move(out));
}

// Copies [L,3,H,W] clips into one [B,3,L,H,W] batch.
Tensor video_batch(const std::vector<Tensor>& clips) {
    const auto& s = clips.front().shape();
    const int L = s[0];
    const int H = s[2];
    const int W = s[3];
    const auto plane = static_cast<std::size_t>(H * W);
    std::vector<double> out(clips.size() * 3 * static_cast<std::size_t>(L) * plane);
    const auto B = static_cast<int>(clips.size());
    for (int b = 0; b < B; ++b) {
        const auto& v = clips[static_cast<std::size_t>(b)].values();
        for (std::int64_t l = 0; l < L; ++l) {
            for (std::int64_t c = 0; c < 3; ++c) {
                const double* src = v.data() + (static_cast<std::size_t>(l) * 3 + static_cast<std::size_t>(c)) * plane;
                double* dst = out.data() +
                              ((static_cast<std::size_t>(b) * 3 + static_cast<std::size_t>(c)) * static_cast<std::size_t>(L) +
                               static_cast<std::size_t>(l)) *
                                  plane;
                std::copy(src, src + plane, dst);
            }
        }
    }
    return Tensor::from_data({B, 3, L, H, W}, std::move(out));
}

// Consecutive clip_len tiles over a recording, final partial tile wrapping
// over the recording's own frames; the recording score is the tile mean.
Tensor tile_clips(const Tensor& frames, int clip_len) {
    const int T = frames.shape()[0];
    const int L = clip_len;
    const int tiles = (T + L - 1) / L;
    const int H = frames.shape()[2];
    const int W = frames.shape()[3];
    const auto fsz = static_cast<std::size_t>(3 * H * W);
    std::vector<Tensor> clips;
    clips.reserve(static_cast<std::size_t>(tiles));
    for (std::int64_t t = 0; t < tiles; ++t) {
        std::vector<double> cv(static_cast<std::size_t>(L) * fsz);
        for (std::int64_t l = 0; l < L; ++l) {
            const std::int64_t src = (t * L + l) % T;
            const double* sp = frames.values().data() + static_cast<std::size_t>(src) * fsz;
            std::copy(sp, sp + fsz, cv.begin() + static_cast<std::size_t>(l) * fsz);
        }
        clips.push_back(Tensor::from_data({L, 3, H, W}, std::move(cv)));
    }
    return video_batch(clips);
}

}  // namespace

void validate_fusion_config(const FusionLossConfig& cfg) {
    if (!(cfg.alpha >= 0.0) || !(cfg.beta >= 0.0)) {
        throw ValueError("fusion config: alpha and beta must be nonnegative");
    }
    if (std::abs(cfg.alpha + cfg.beta - 1.0) > 1e-9) {
        throw ValueError("fusion config: alpha + beta must equal 1");
    }
}

Tensor mae_loss(const PredictionBatch& batch) {
    if (!batch.predictions.defined() || !batch.labels.defined()) {
        throw ValueError("mae loss: batch tensors must be defined");
    }
    if (batch.predictions.numel() == 0) throw ValueError("mae loss: empty batch");
    if (batch.predictions.shape() != batch.labels.shape()) {
        throw ValueError("mae loss: predictions and labels must have the same shape");
    }
    return mean(abs(sub(batch.predictions, batch.labels)));
}

Tensor fusion_loss(const Tensor& l_s, const Tensor& l_v, const FusionLossConfig& cfg) {
    validate_fusion_config(cfg);
    if (!l_s.defined() || !l_v.defined() || l_s.numel() != 1 || l_v.numel() != 1) {
        throw ValueError("fusion loss: inputs must be defined scalars");
    }
    return add(scale(l_s, cfg.alpha), scale(l_v, cfg.beta));
}

std::vector<std::size_t> TrainSet::split_indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].split == split) out.push_back(i);
    }
    return out;
}

double TrainSet::norm_label(double raw) const {
    return head == HeadKind::classification ? raw : raw / 63.0;
}

TrainSet load_train_set(const FeatureManifest& fm, HeadKind head) {
    TrainSet set;
    set.head = head;
    for (const auto& rec : fm.samples) {
        const auto entries = load_tensors(rec.path);
        TrainSample s;
        s.id = rec.id;
        s.label = rec.label;
        s.split = rec.split;
        for (const auto& [name, t] : entries) {
            if (name == "audio_mel") s.audio_mel = t;
            else if (name == "video") s.video = t;
        }
        if (!s.audio_mel.defined() || s.audio_mel.ndim() != 4) {
            throw FormatError("features for '" + rec.id + "' lack a valid audio_mel tensor");
        }
        if (!s.video.defined() || s.video.ndim() != 4) {
            throw FormatError("features for '" + rec.id + "' lack a valid video tensor");
        }
        set.samples.push_back(std::move(s));
    }
    return set;
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"epoch", "split", "loss_s", "loss_v", "loss_b", "metric"});
    const auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
    for (const auto& r : history.rows) {
        rows.push_back({std::to_string(r.epoch), r.split, cell(r.loss_s), cell(r.loss_v), cell(r.loss_b), cell(r.metric)});
    }
    write_csv(path, rows);
}

TrainHistory read_history_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open history '" + path + "'");
    TrainHistory h;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.push_back("");
        if (lineno == 1) {
            if (cells != std::vector<std::string>{"epoch", "split", "loss_s", "loss_v", "loss_b", "metric"}) {
                throw FormatError("history '" + path + "' line 1: unexpected header");
            }
            continue;
        }
        if (cells.size() != 6) {
            throw FormatError("history '" + path + "' line " + std::to_string(lineno) + ": expected 6 columns, got " +
                              std::to_string(cells.size()));
        }
        HistoryRow r;
        char* end = nullptr;
        r.epoch = static_cast<int>(std::strtol(cells[0].c_str(), &end, 10));
        if (cells[0].empty() || end != cells[0].c_str() + cells[0].size()) {
            throw FormatError("history '" + path + "' line " + std::to_string(lineno) + ": bad epoch '" + cells[0] + "'");
        }
        r.split = cells[1];
        const auto num = [&](const std::string& c, const char* what) {
            if (c.empty()) return kNaN;
            char* e = nullptr;
            const double v = std::strtod(c.c_str(), &e);
            if (e != c.c_str() + c.size()) {
                throw FormatError("history '" + path + "' line " + std::to_string(lineno) + ": bad " + what + " '" + c + "'");
            }
            return v;
        };
        r.loss_s = num(cells[2], "loss_s");
        r.loss_v = num(cells[3], "loss_v");
        r.loss_b = num(cells[4], "loss_b");
        r.metric = num(cells[5], "metric");
        h.rows.push_back(std::move(r));
    }
    if (h.rows.empty()) throw FormatError("history '" + path + "' contains no rows");
    return h;
}

AudioTrainResult pretrain_audio(const TrainSet& data, const AudioNetConfig& cfg,
                                const TrainSchedule& schedule) {
    check_schedule(schedule);
    const auto splits = require_splits(data, "audio training");

    // Every (recording, segment) pair is a training instance carrying the
    // recording label.
    std::vector<std::pair<std::size_t, std::int64_t>> train_inst;
    std::vector<std::pair<std::size_t, std::int64_t>> val_inst;
    const auto expand = [&](const std::vector<std::size_t>& idx, auto& out) {
        for (std::size_t i : idx) {
            for (std::int64_t s = 0; s < data.samples[i].audio_mel.shape()[0]; ++s) out.push_back({i, s});
        }
    };
    expand(splits.train, train_inst);
    expand(splits.val, val_inst);

    AudioTrainResult result;
    result.params = init_audio_params(cfg, schedule.seed);
    result.params.set_requires_grad(true);
    Adam opt({.lr = schedule.audio_lr});
    const auto bs = static_cast<std::size_t>(schedule.batch_size);

    const auto inst_labels = [&](const std::vector<std::pair<std::size_t, std::int64_t>>& inst, std::size_t lo,
                                 std::size_t hi) {
        std::vector<double> y(hi - lo);
        for (std::size_t k = lo; k < hi; ++k) y[k - lo] = data.norm_label(data.samples[inst[k].first].label);
        return y;
    };

    for (int epoch = 0; epoch < schedule.audio_epochs; ++epoch) {
        std::vector<std::size_t> order(train_inst.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng = derive_rng(schedule.seed, "train.audio.order", static_cast<std::uint64_t>(epoch));
        shuffle(order, rng);
        std::vector<std::pair<std::size_t, std::int64_t>> epoch_inst(train_inst.size());
        for (std::size_t i = 0; i < order.size(); ++i) epoch_inst[i] = train_inst[order[i]];

        double train_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t lo = 0; lo < epoch_inst.size(); lo += bs) {
            const std::size_t hi = std::min(epoch_inst.size(), lo + bs);
            const Tensor x = audio_batch(data, epoch_inst, lo, hi);
            auto yv = inst_labels(epoch_inst, lo, hi);
            const Tensor y = Tensor::from_data({static_cast<int>(hi - lo), 1}, std::move(yv));
            Tape tape;
            TapeScope scope(tape);
            result.params.zero_grad();
            const Tensor pred = audio_forward(cfg, result.params, x);
            const Tensor loss = mae_loss({pred, y});
            check_finite(loss.values()[0], "audio training", epoch);
            tape.backward(loss);
            opt.step(result.params);
            train_loss += loss.values()[0];
            ++batches;
        }
        train_loss /= static_cast<double>(batches);

        // Validation pass, no tape.
        std::vector<double> scores;
        std::vector<double> labels;
        double val_loss = 0.0;
        for (std::size_t lo = 0; lo < val_inst.size(); lo += bs) {
            const std::size_t hi = std::min(val_inst.size(), lo + bs);
            const Tensor x = audio_batch(data, val_inst, lo, hi);
            const Tensor pred = audio_forward(cfg, result.params, x);
            const auto y = inst_labels(val_inst, lo, hi);
            for (std::size_t k = 0; k < y.size(); ++k) {
                scores.push_back(pred.values()[k]);
                labels.push_back(y[k]);
                val_loss += std::abs(pred.values()[k] - y[k]);
            }
        }
        val_loss /= static_cast<double>(val_inst.size());
        check_finite(val_loss, "audio training", epoch);
        const double metric = data.head == HeadKind::classification ? accuracy_of(scores, labels)
                                                                    : mae_of(scores, labels) * 63.0;
        result.history.rows.push_back({epoch, "train", train_loss, kNaN, kNaN, kNaN});
        result.history.rows.push_back({epoch, "val", val_loss, kNaN, kNaN, metric});
    }

    result.params.zero_grad();
    result.params.set_requires_grad(false);
    result.params.set_frozen(true);
    return result;
}

std::vector<double> audio_recording_scores(const TrainSet& data, const AudioNetConfig& cfg,
                                           const ModelParams& params,
                                           const std::vector<std::size_t>& indices) {
    std::vector<double> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        const auto& mel = data.samples[i].audio_mel;
        const Tensor pred = audio_forward(cfg, params, mel);
        double acc = 0.0;
        for (double v : pred.values()) acc += v;
        out.push_back(acc / static_cast<double>(pred.numel()));
    }
    return out;
}

std::vector<double> video_recording_scores(const TrainSet& data, const VideoNetConfig& cfg,
                                           const ModelParams& params, int clip_len,
                                           const std::vector<std::size_t>& indices) {
    if (clip_len < 1) throw ValueError("video scoring: clip_len must be positive");
    std::vector<double> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        const Tensor x = tile_clips(data.samples[i].video, clip_len);
        const Tensor pred = video_forward(cfg, params, x);
        double acc = 0.0;
        for (double v : pred.values()) acc += v;
        out.push_back(acc / static_cast<double>(pred.numel()));
    }
    return out;
}

namespace {

// Shared fine-tuning engine. With audio_scores == nullptr the l_s stream is
// absent (recorded as NaN) and contributes nothing; fusion with alpha=0
// matches it update for update because scale(l_s, 0) has zero value and
// zero gradient either way.
FusionTrainResult fusion_engine(const TrainSet& data, const std::vector<double>* audio_scores,
                                const VideoNetConfig& video_cfg, const FusionLossConfig& fusion_cfg,
                                const TrainSchedule& schedule, const VideoTrainOptions& options,
                                const std::string& stage) {
    check_schedule(schedule);
    validate_fusion_config(fusion_cfg);
    if (options.clip_len < 1) throw ValueError(stage + ": clip_len must be positive");
    const auto splits = require_splits(data, stage);

    FusionTrainResult result;
    ModelParams params = init_video_params(video_cfg, schedule.seed);
    params.set_requires_grad(true);
    Adam opt({.lr = schedule.fusion_lr});
    const auto bs = static_cast<std::size_t>(schedule.batch_size);

    std::vector<double> val_labels;
    for (std::size_t i : splits.val) val_labels.push_back(data.norm_label(data.samples[i].label));
    std::vector<double> val_audio;
    if (audio_scores) {
        for (std::size_t i : splits.val) val_audio.push_back((*audio_scores)[i]);
    }

    double best = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < schedule.fusion_epochs; ++epoch) {
        std::vector<std::size_t> order = splits.train;
        Rng rng = derive_rng(schedule.seed, "train.video.order", static_cast<std::uint64_t>(epoch));
        shuffle(order, rng);

        double tl_s = 0.0;
        double tl_v = 0.0;
        double tl_b = 0.0;
        std::size_t batches = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += bs) {
            const std::size_t hi = std::min(order.size(), lo + bs);
            std::vector<Tensor> clips;
            clips.reserve(hi - lo);
            for (std::size_t k = lo; k < hi; ++k) {
                const std::size_t i = order[k];
                Rng rc = derive_rng(schedule.seed, "train.video.clip", static_cast<std::uint64_t>(epoch), i);
                Tensor clip = sample_clip(data.samples[i].video, options.clip_len, rc);
                if (options.use_augment) {
                    Rng ra = derive_rng(schedule.seed, "train.video.augment", static_cast<std::uint64_t>(epoch), i);
                    clip = augment(clip, options.augment, ra);
                }
                clips.push_back(std::move(clip));
            }
            const Tensor x = video_batch(clips);
            const Tensor y = label_column(data, order, lo, hi);

            double ls_val = 0.0;
            if (audio_scores) {
                for (std::size_t k = lo; k < hi; ++k) {
                    ls_val += std::abs((*audio_scores)[order[k]] - y.values()[k - lo]);
                }
                ls_val /= static_cast<double>(hi - lo);
            }

            Tape tape;
            TapeScope scope(tape);
            params.zero_grad();
            const Tensor pred = video_forward(video_cfg, params, x);
            const Tensor l_v = mae_loss({pred, y});
            const Tensor l_b = fusion_loss(Tensor::scalar(ls_val), l_v, fusion_cfg);
            check_finite(l_b.values()[0], stage, epoch);
            tape.backward(l_b);
            opt.step(params);
            tl_s += ls_val;
            tl_v += l_v.values()[0];
            tl_b += l_b.values()[0];
            ++batches;
        }
        tl_s /= static_cast<double>(batches);
        tl_v /= static_cast<double>(batches);
        tl_b /= static_cast<double>(batches);

        const auto vscores = video_recording_scores(data, video_cfg, params, options.clip_len, splits.val);
        const double vl_v = mae_of(vscores, val_labels);
        const double vl_s = audio_scores ? mae_of(val_audio, val_labels) : 0.0;
        const double vl_b = fusion_cfg.alpha * vl_s + fusion_cfg.beta * vl_v;
        check_finite(vl_b, stage, epoch);
        std::vector<double> fused(vscores.size());
        for (std::size_t k = 0; k < vscores.size(); ++k) {
            const double a = audio_scores ? val_audio[k] : 0.0;
            fused[k] = fusion_cfg.alpha * a + fusion_cfg.beta * vscores[k];
        }
        const double metric = data.head == HeadKind::classification ? accuracy_of(fused, val_labels)
                                                                    : mae_of(fused, val_labels) * 63.0;

        result.history.rows.push_back({epoch, "train", audio_scores ? tl_s : kNaN, tl_v, tl_b, kNaN});
        result.history.rows.push_back({epoch, "val", audio_scores ? vl_s : kNaN, vl_v, vl_b, metric});

        if (vl_b < best) {
            best = vl_b;
            result.best_epoch = epoch;
            result.best_val_loss_b = vl_b;
            result.video_params = params.clone();
        }
    }

    result.video_params.zero_grad();
    result.video_params.set_requires_grad(false);
    return result;
}

}  // namespace

FusionTrainResult train_fusion(const TrainSet& data, const ModelParams& audio_params,
                               const AudioNetConfig& audio_cfg, const VideoNetConfig& video_cfg,
                               const FusionLossConfig& fusion_cfg, const TrainSchedule& schedule,
                               const VideoTrainOptions& options) {
    if (!audio_params.frozen()) {
        throw StateError("fusion training requires a frozen audio checkpoint; pretrain and freeze the audio model first");
    }
    std::vector<std::size_t> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto scores = audio_recording_scores(data, audio_cfg, audio_params, all);
    return fusion_engine(data, &scores, video_cfg, fusion_cfg, schedule, options, "fusion training");
}

FusionTrainResult train_video_only(const TrainSet& data, const VideoNetConfig& video_cfg,
                                   const TrainSchedule& schedule, const VideoTrainOptions& options) {
    return fusion_engine(data, nullptr, video_cfg, {0.0, 1.0}, schedule, options, "video training");
}

FusionLossConfig grid_search_alpha_beta(const TrainSet& data, const AudioNetConfig& audio_cfg,
                                        const ModelParams& audio_params,
                                        const VideoNetConfig& video_cfg,
                                        const ModelParams& video_params, int clip_len,
                                        const std::vector<double>& candidates) {
    if (candidates.empty()) throw ValueError("grid search: empty candidate set");
    for (double a : candidates) {
        if (!(a >= 0.0 && a <= 1.0)) throw ValueError("grid search: candidate alpha must lie in [0,1]");
    }
    const auto val = data.split_indices("val");
    if (val.empty()) throw ValueError("grid search: val split is empty");

    const auto a_scores = audio_recording_scores(data, audio_cfg, audio_params, val);
    const auto v_scores = video_recording_scores(data, video_cfg, video_params, clip_len, val);
    std::vector<double> labels;
    for (std::size_t i : val) labels.push_back(data.norm_label(data.samples[i].label));

    std::vector<double> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());

    double best_alpha = sorted.front();
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<double> fused(val.size());
    for (double alpha : sorted) {
        for (std::size_t k = 0; k < val.size(); ++k) {
            fused[k] = alpha * a_scores[k] + (1.0 - alpha) * v_scores[k];
        }
        // Higher is better in both branches, so ties keep the first
        // (smallest) alpha.
        const double score = data.head == HeadKind::classification ? accuracy_of(fused, labels)
                                                                   : -mae_of(fused, labels);
        if (score > best_score) {
            best_score = score;
            best_alpha = alpha;
        }
    }
    return {best_alpha, 1.0 - best_alpha};
}

}  // namespace avf
