// Acceptance gate: one pass/fail line per criterion, exit 0 only when all
// eight hold. Every run is deterministic; the seeds, tolerances and desk
// scale schedules are pinned here.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "avfusion/audio.hpp"
#include "avfusion/checkpoint.hpp"
#include "avfusion/datagen.hpp"
#include "avfusion/errors.hpp"
#include "avfusion/evaluation.hpp"
#include "avfusion/manifest.hpp"
#include "avfusion/models.hpp"
#include "avfusion/ops.hpp"
#include "avfusion/rng.hpp"
#include "avfusion/sha256.hpp"
#include "avfusion/tensor.hpp"
#include "avfusion/training.hpp"
#include "avfusion/video.hpp"
#include "support/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace avf;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double median5(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// ---- shared desk-scale fixtures -------------------------------------------

AudioNetConfig desk_audio() {
    AudioNetConfig cfg;
    cfg.widths = {4, 6, 8, 8, 12};
    cfg.attention_hidden = 8;
    cfg.head = HeadKind::classification;
    return cfg;
}

VideoNetConfig desk_video() {
    VideoNetConfig cfg;
    cfg.stem_channels = 4;
    cfg.module_widths = {4, 8};
    cfg.expansion = 4;
    cfg.attention_reduction = 4;
    cfg.head = HeadKind::classification;
    return cfg;
}

TrainSchedule desk_schedule(std::uint64_t seed) {
    TrainSchedule s;
    s.audio_epochs = 30;
    s.audio_lr = 1e-3;
    s.fusion_epochs = 12;
    s.fusion_lr = 1e-3;
    s.batch_size = 8;
    s.seed = seed;
    return s;
}

VideoTrainOptions desk_options() {
    VideoTrainOptions o;
    o.clip_len = 8;
    return o;
}

// In-process preprocessing of a generated corpus (same steps the CLI runs:
// denoise, 2 s segments, log-mel stacks; landmark alignment to the frame
// size). Record paths are relative to the corpus root.
TrainSet corpus_to_train_set(const DatasetManifest& dm, const fs::path& root, double fps,
                             int out_size) {
    TrainSet set;
    set.head = HeadKind::classification;
    for (const auto& rec : dm.samples) {
        const AudioClip clean = spectral_gate_denoise(load_wav((root / rec.audio).string()));
        const std::vector<AudioClip> segs = segment_audio(clean, 2.0);
        std::vector<double> mel;
        int n_mels = 0, n_frames = 0;
        for (const auto& seg : segs) {
            const Tensor m = log_mel(stft(seg));
            n_mels = m.shape()[1];
            n_frames = m.shape()[2];
            mel.insert(mel.end(), m.values().begin(), m.values().end());
        }
        TrainSample s;
        s.id = rec.id;
        s.audio_mel = Tensor::from_data({static_cast<int>(segs.size()), 1, n_mels, n_frames},
                                        std::move(mel));
        FrameSequence seq =
            load_frames((root / rec.frames).string(), (root / rec.landmarks).string(), fps);
        s.video = align_sequence(seq, out_size);
        s.label = rec.label;
        s.split = rec.split;
        set.samples.push_back(std::move(s));
    }
    return set;
}

double mae_against(const std::vector<double>& scores, const std::vector<double>& labels) {
    double acc = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) acc += std::abs(scores[i] - labels[i]);
    return acc / static_cast<double>(scores.size());
}

// ---- criterion 1: gradient suite ------------------------------------------

void criterion_gradients() {
    const auto t0 = Clock::now();
    Rng rng(2024);
    double worst_op = 0.0;
    std::string worst_op_name = "none";
    const auto op = [&](const char* name, const std::function<Tensor()>& build,
                        std::vector<Tensor> inputs) {
        const auto r = gradcheck::check(build, std::move(inputs), 6, rng);
        if (r.max_rel > worst_op) {
            worst_op = r.max_rel;
            worst_op_name = name;
        }
    };

    // Kink-free draws: magnitudes bounded away from 0 for abs/relu, and
    // maxpool windows get well separated values from a wide range.
    const auto away = [&](Shape shape) {
        Tensor t = Tensor::uniform(shape, 0.2, 1.0, rng);
        for (auto& v : t.values()) {
            if (rng.bernoulli(0.5)) v = -v;
        }
        return t;
    };

    {
        Tensor a = Tensor::uniform({3, 4}, -1, 1, rng);
        Tensor b = Tensor::uniform({3, 4}, -1, 1, rng);
        op("add", [&] { return sum(add(a, b)); }, {a, b});
        op("sub", [&] { return sum(sub(a, b)); }, {a, b});
        op("mul", [&] { return sum(mul(a, b)); }, {a, b});
        op("scale", [&] { return sum(scale(a, -1.7)); }, {a});
        op("mean", [&] { return mean(mul(a, a)); }, {a});
    }
    {
        Tensor x = away({4, 5});
        op("abs", [&] { return sum(abs(x)); }, {x});
        op("relu", [&] { return sum(relu(x)); }, {x});
    }
    {
        Tensor x = Tensor::uniform({3, 6}, -2, 2, rng);
        op("sigmoid", [&] { return sum(mul(sigmoid(x), x)); }, {x});
        op("tanh", [&] { return sum(mul(tanh(x), x)); }, {x});
        op("softmax", [&] { return sum(mul(softmax(x, 1), x)); }, {x});
        op("reshape", [&] { return sum(mul(reshape(x, {6, 3}), reshape(x, {6, 3}))); }, {x});
        op("permute", [&] { return sum(mul(permute(x, {1, 0}), permute(x, {1, 0}))); }, {x});
        op("index_axis", [&] { return sum(mul(index_axis(x, 1, 2), index_axis(x, 1, 2))); }, {x});
        op("mean_axis", [&] { return sum(mul(mean_axis(x, 1), mean_axis(x, 1))); }, {x});
    }
    {
        Tensor x = Tensor::uniform({3, 4}, -1, 1, rng);
        Tensor w = Tensor::uniform({4, 2}, -1, 1, rng);
        Tensor b = Tensor::uniform({2}, -1, 1, rng);
        op("linear", [&] { return sum(mul(linear(x, w, b), linear(x, w, b))); }, {x, w, b});
    }
    {
        Tensor x = Tensor::uniform({2, 2, 6, 6}, -1, 1, rng);
        Tensor w = Tensor::uniform({3, 2, 3, 3}, -0.5, 0.5, rng);
        Tensor b = Tensor::uniform({3}, -0.5, 0.5, rng);
        op("conv2d",
           [&] {
               Tensor y = conv2d(x, w, b, {2, 1}, {1, 1});
               return sum(mul(y, y));
           },
           {x, w, b});
        op("maxpool2d", [&] { return sum(maxpool2d(x, {2, 2}, {2, 2}, {0, 0})); }, {x});
    }
    {
        Tensor x = Tensor::uniform({1, 2, 4, 5, 5}, -1, 1, rng);
        Tensor w = Tensor::uniform({2, 2, 3, 3, 3}, -0.5, 0.5, rng);
        Tensor b = Tensor::uniform({2}, -0.5, 0.5, rng);
        op("conv3d",
           [&] {
               Tensor y = conv3d(x, w, b, {1, 2, 2}, {1, 1, 1});
               return sum(mul(y, y));
           },
           {x, w, b});
        op("maxpool3d", [&] { return sum(maxpool3d(x, {2, 2, 2}, {2, 2, 2}, {0, 0, 0})); }, {x});
        op("adaptive_avg_pool3d",
           [&] {
               Tensor y = adaptive_avg_pool3d(x);
               return sum(mul(y, y));
           },
           {x});
    }
    {
        Tensor x = Tensor::uniform({2, 4, 3, 3, 3}, -1, 1, rng);
        Tensor g = Tensor::uniform({2, 4}, 0.1, 1.0, rng);
        op("channel_scale", [&] { return sum(mul(channel_scale(x, g), x)); }, {x, g});
        ChannelAttentionParams cp{Tensor::uniform({4, 2}, -1, 1, rng),
                                  Tensor::uniform({2}, -0.5, 0.5, rng),
                                  Tensor::uniform({2, 4}, -1, 1, rng),
                                  Tensor::uniform({4}, -0.5, 0.5, rng)};
        op("channel_attention", [&] { return sum(mul(channel_attention(x, cp), x)); },
           {x, cp.w1, cp.b1, cp.w2, cp.b2});
    }
    {
        Tensor x = Tensor::uniform({2, 3, 5}, -1, 1, rng);
        Tensor w = Tensor::uniform({2, 5}, 0.0, 1.0, rng);
        op("time_weighted_sum", [&] { return sum(mul(time_weighted_sum(x, w), time_weighted_sum(x, w))); },
           {x, w});
        TemporalAttentionParams tp{Tensor::uniform({3, 4}, -1, 1, rng),
                                   Tensor::uniform({4}, -0.5, 0.5, rng),
                                   Tensor::uniform({4, 1}, -1, 1, rng)};
        op("temporal_attention", [&] { return sum(mul(temporal_attention(x, tp), temporal_attention(x, tp))); },
           {x, tp.u, tp.bu, tp.v});
    }
    const bool ops_ok = worst_op < 1e-4;

    // Full networks at desk scale, gradient probed through input and the
    // first and last parameter tensors.
    double worst_net = 0.0;
    {
        const AudioNetConfig cfg = desk_audio();
        ModelParams p = init_audio_params(cfg, 3);
        Tensor x = Tensor::uniform({2, 1, 64, 124}, -1, 1, rng);
        const auto r = gradcheck::check([&] { return mean(audio_forward(cfg, p, x)); },
                                        {x, p.at("conv1.w"), p.at("head.w")}, 5, rng);
        worst_net = std::max(worst_net, r.max_rel);
    }
    {
        const VideoNetConfig cfg = desk_video();
        ModelParams p = init_video_params(cfg, 4);
        Tensor x = Tensor::uniform({1, 3, 8, 32, 32}, 0, 1, rng);
        const auto r = gradcheck::check([&] { return mean(video_forward(cfg, p, x)); },
                                        {x, p.at("stem.w"), p.at("head.w")}, 5, rng);
        worst_net = std::max(worst_net, r.max_rel);
    }
    const bool nets_ok = worst_net < 1e-3;
    const double dt = seconds_since(t0);

    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "gradient suite: ops max rel %.2e (worst %s, tol 1e-4), nets max rel %.2e "
                  "(tol 1e-3), %.0f s (limit 300)",
                  worst_op, worst_op_name.c_str(), worst_net, dt);
    report(1, ops_ok && nets_ok && dt < 300.0, buf);
}

// ---- criterion 2: metric oracles ------------------------------------------

double brute_auc(const std::vector<double>& s, const std::vector<double>& y) {
    double num = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1.0 && y[j] == 0.0) {
                ++pairs;
                if (s[i] > s[j]) num += 1.0;
                else if (s[i] == s[j]) num += 0.5;
            }
        }
    }
    return num / static_cast<double>(pairs);
}

void criterion_metrics() {
    bool ok = true;
    std::string fail;

    const auto expect = [&](bool cond, const char* what) {
        if (!cond && ok) {
            ok = false;
            fail = what;
        }
    };

    expect(auc_roc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}).auc == 0.75, "worked auc example");
    const auto rm = regression_metrics({2, 2, 5}, {1, 2, 3});
    expect(rm.mae == 1.0, "worked mae example");
    expect(std::abs(rm.rmse - std::sqrt(5.0 / 3.0)) < 1e-12, "worked rmse example");

    Rng rng(7);
    for (int t = 0; t < 200 && ok; ++t) {
        const auto n = static_cast<std::size_t>(2 + rng.uniform_int(49));
        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.uniform_int(8)) / 8.0;
            y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        }
        y[0] = 0.0;
        y[n - 1] = 1.0;
        expect(auc_roc(s, y).auc == brute_auc(s, y), "auc vs exhaustive pair counting");
    }
    for (int t = 0; t < 200 && ok; ++t) {
        const auto n = static_cast<std::size_t>(2 + rng.uniform_int(40));
        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.uniform(0.0, 1.0);
            y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        }
        const double thr = rng.uniform(0.0, 1.0);
        std::size_t tp = 0, fp = 0, tn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool pred = s[i] >= thr;
            if (pred && y[i] == 1.0) ++tp;
            if (pred && y[i] == 0.0) ++fp;
            if (!pred && y[i] == 0.0) ++tn;
        }
        const auto cm = classification_metrics(s, y, thr);
        expect(cm.precision ==
                   (tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp)),
               "precision vs confusion counting");
        expect(cm.accuracy == static_cast<double>(tp + tn) / static_cast<double>(n),
               "accuracy vs confusion counting");
    }
    for (int t = 0; t < 1000 && ok; ++t) {
        const auto n = static_cast<std::size_t>(1 + rng.uniform_int(20));
        std::vector<double> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.uniform(-10.0, 10.0);
            y[i] = rng.uniform(-10.0, 10.0);
        }
        const auto m = regression_metrics(p, y);
        expect(m.rmse >= m.mae - 1e-12, "rmse >= mae");
    }

    report(2, ok,
           ok ? "metric oracles: exact auc on 200 instances, counting oracles, rmse >= mae on "
                "1000 batches, worked examples exact"
              : "metric oracles: failed at " + fail);
}

// ---- criterion 3: loss fusion fidelity ------------------------------------

void criterion_fusion_loss() {
    bool ok = true;
    const Tensor v = fusion_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), {0.6, 0.4});
    double worst = std::abs(v.values()[0] - 1.4);
    ok = ok && worst <= 1e-12;

    Rng rng(9);
    for (int t = 0; t < 1000; ++t) {
        const double a = rng.uniform(0.0, 10.0);
        const double b = rng.uniform(0.0, 10.0);
        const double c = rng.uniform(0.0, 4.0);
        const double base = fusion_loss(Tensor::scalar(a), Tensor::scalar(b), {0.6, 0.4}).values()[0];
        const double scaled =
            fusion_loss(Tensor::scalar(c * a), Tensor::scalar(c * b), {0.6, 0.4}).values()[0];
        const double rel = std::abs(scaled - c * base) / std::max(1.0, std::abs(c * base));
        worst = std::max(worst, rel);
        ok = ok && rel <= 1e-12;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "loss fusion: 0.6*1+0.4*2 within 1e-12 of 1.4, linear over 1000 triples "
                  "(max dev %.1e)",
                  worst);
    report(3, ok, buf);
}

// ---- criteria 4 + 5: freeze contract and the ordering analog ---------------

void criteria_freeze_and_ordering(const fs::path& work) {
    const auto t0 = Clock::now();
    const std::vector<std::uint64_t> seeds{11, 12, 13, 14, 15};
    const AudioNetConfig acfg = desk_audio();
    const VideoNetConfig vcfg = desk_video();
    const FusionLossConfig fcfg{0.6, 0.4};
    const VideoTrainOptions opts = desk_options();

    bool freeze_ok = false;
    std::string freeze_detail = "freeze contract: not evaluated";
    std::vector<double> audio_acc, fused_mae, vonly_mae;

    try {
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            const std::uint64_t seed = seeds[k];
            SynthConfig sc;
            sc.seed = seed;
            const fs::path dir = work / ("c5_" + std::to_string(seed));
            DatasetManifest dm = generate_dataset(sc, dir.string());
            split_dataset(dm, seed);
            const TrainSet data = corpus_to_train_set(dm, dir, sc.fps, sc.frame_size);
            const TrainSchedule sched = desk_schedule(seed);

            const AudioTrainResult audio = pretrain_audio(data, acfg, sched);
            for (auto it = audio.history.rows.rbegin(); it != audio.history.rows.rend(); ++it) {
                if (it->split == "val") {
                    audio_acc.push_back(it->metric);
                    break;
                }
            }

            std::string before_hash;
            const std::string ckpt = (work / "c4_audio.ckpt").string();
            if (k == 0) {
                save_params(ckpt, audio.params);
                before_hash = sha256_file_hex(ckpt);
            }

            const FusionTrainResult fusion =
                train_fusion(data, audio.params, acfg, vcfg, fcfg, sched, opts);

            if (k == 0) {
                const std::string ckpt2 = (work / "c4_audio_after.ckpt").string();
                save_params(ckpt2, audio.params);
                const std::string after_hash = sha256_file_hex(ckpt2);
                const std::string disk_hash = sha256_file_hex(ckpt);
                freeze_ok = before_hash == after_hash && before_hash == disk_hash;
                freeze_detail = "freeze contract: audio checkpoint sha256 " +
                                before_hash.substr(0, 12) + ".. unchanged by a full fusion run";
                if (!freeze_ok) freeze_detail += " (MISMATCH)";
            }

            const FusionTrainResult vonly = train_video_only(data, vcfg, sched, opts);

            const auto val_idx = data.split_indices("val");
            std::vector<double> labels;
            for (std::size_t i : val_idx) labels.push_back(data.norm_label(data.samples[i].label));
            const auto a = audio_recording_scores(data, acfg, audio.params, val_idx);
            const auto vf =
                video_recording_scores(data, vcfg, fusion.video_params, opts.clip_len, val_idx);
            const auto vv =
                video_recording_scores(data, vcfg, vonly.video_params, opts.clip_len, val_idx);
            std::vector<double> fused(val_idx.size());
            for (std::size_t i = 0; i < fused.size(); ++i) {
                fused[i] = fcfg.alpha * a[i] + fcfg.beta * vf[i];
            }
            fused_mae.push_back(mae_against(fused, labels));
            vonly_mae.push_back(mae_against(vv, labels));
            fs::remove_all(dir);
        }
    } catch (const std::exception& e) {
        report(4, false, std::string("freeze contract: ") + e.what());
        report(5, false, std::string("ordering analog: ") + e.what());
        return;
    }

    report(4, freeze_ok, freeze_detail);

    const double med_acc = median5(audio_acc);
    const double med_fused = median5(fused_mae);
    const double med_vonly = median5(vonly_mae);
    const double dt = seconds_since(t0);
    const bool ok = med_acc >= 0.9 && med_fused <= med_vonly && dt < 1800.0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "ordering analog: median audio val accuracy %.3f (>= 0.9), median fused val "
                  "MAE %.3f <= video-only %.3f, %.0f s (limit 1800)",
                  med_acc, med_fused, med_vonly, dt);
    report(5, ok, buf);
}

// ---- criterion 6: null corpus ---------------------------------------------

void criterion_null(const fs::path& work) {
    const std::vector<std::uint64_t> seeds{11, 12, 13, 14, 15};
    const AudioNetConfig acfg = desk_audio();
    const VideoNetConfig vcfg = desk_video();
    const FusionLossConfig fcfg{0.6, 0.4};
    const VideoTrainOptions opts = desk_options();

    std::vector<double> aucs;
    try {
        for (const std::uint64_t seed : seeds) {
            SynthConfig sc;
            sc.seed = seed;
            sc.audio_shift_hz = 0.0;
            sc.video_amplitude = 0.0;
            const fs::path dir = work / ("c6_" + std::to_string(seed));
            DatasetManifest dm = generate_dataset(sc, dir.string());
            split_dataset(dm, seed);
            const TrainSet data = corpus_to_train_set(dm, dir, sc.fps, sc.frame_size);
            const TrainSchedule sched = desk_schedule(seed);

            const AudioTrainResult audio = pretrain_audio(data, acfg, sched);
            const FusionTrainResult fusion =
                train_fusion(data, audio.params, acfg, vcfg, fcfg, sched, opts);

            const auto test_idx = data.split_indices("test");
            std::vector<double> labels;
            for (std::size_t i : test_idx) labels.push_back(data.samples[i].label);
            const auto a = audio_recording_scores(data, acfg, audio.params, test_idx);
            const auto v =
                video_recording_scores(data, vcfg, fusion.video_params, opts.clip_len, test_idx);
            std::vector<double> fused(test_idx.size());
            for (std::size_t i = 0; i < fused.size(); ++i) {
                fused[i] = fcfg.alpha * a[i] + fcfg.beta * v[i];
            }
            aucs.push_back(auc_roc(fused, labels).auc);
            fs::remove_all(dir);
        }
    } catch (const std::exception& e) {
        report(6, false, std::string("null check: ") + e.what());
        return;
    }
    const double med = median5(aucs);
    const bool ok = med >= 0.4 && med <= 0.6;
    std::ostringstream os;
    os << "null check: strength-0 corpus, test AUC per seed {";
    for (std::size_t i = 0; i < aucs.size(); ++i) os << (i ? " " : "") << std::round(aucs[i] * 1000) / 1000;
    os << "}, median " << med << " in [0.4, 0.6]";
    report(6, ok, os.str());
}

// ---- criterion 7: preprocessing exactness ----------------------------------

void criterion_preprocessing() {
    bool ok = true;
    std::string fail;
    const auto expect = [&](bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            fail = what;
        }
    };
    Rng rng(12);

    // Alignment: eye line horizontal, eye midpoint pinned at (S/2, S/3),
    // mouth a third of the frame below the eye line, in continuous output
    // coordinates. The draws keep the mouth safely below the eye line.
    const int S = 224;
    double worst_align = 0.0;
    for (int t = 0; t < 100; ++t) {
        FrameLandmarks lm;
        lm.lx = rng.uniform(20, 90);
        lm.ly = rng.uniform(40, 120);
        lm.rx = lm.lx + rng.uniform(15, 80);
        lm.ry = lm.ly + rng.uniform(-15, 15);
        lm.mx = (lm.lx + lm.rx) / 2 + rng.uniform(-20, 20);
        lm.my = std::max(lm.ly, lm.ry) + rng.uniform(35, 70);
        const AlignmentTransform tf = compute_alignment(lm, S);
        double lxo, lyo, rxo, ryo, mxo, myo;
        tf.map(lm.lx, lm.ly, lxo, lyo);
        tf.map(lm.rx, lm.ry, rxo, ryo);
        tf.map(lm.mx, lm.my, mxo, myo);
        const double third = static_cast<double>(S) / 3.0;
        worst_align = std::max(worst_align, std::abs(lyo - ryo));
        worst_align = std::max(worst_align, std::abs((lxo + rxo) / 2 - S / 2.0));
        worst_align = std::max(worst_align, std::abs((lyo + ryo) / 2 - third));
        worst_align = std::max(worst_align, std::abs(myo - (lyo + ryo) / 2 - third));
    }
    expect(worst_align < 1e-6, "alignment residuals");

    // Denoise identity: a disabled gate must reproduce the input.
    double worst_denoise = 0.0;
    for (int t = 0; t < 5; ++t) {
        const int n = 16000 + static_cast<int>(rng.uniform_int(32000));
        AudioClip clip;
        clip.samples.resize(n);
        for (auto& v : clip.samples) v = rng.uniform(-0.9, 0.9);
        DenoiseConfig cfg;
        cfg.prop_decrease = 0.0;
        const AudioClip out = spectral_gate_denoise(clip, nullptr, cfg);
        expect(out.samples.size() == clip.samples.size(), "denoise identity length");
        for (std::size_t i = 0; i < clip.samples.size(); ++i) {
            worst_denoise = std::max(worst_denoise, std::abs(out.samples[i] - clip.samples[i]));
        }
    }
    expect(worst_denoise < 1e-6, "denoise identity");

    // Segment counts: floor(samples / (2 s * rate)) whole windows.
    for (int t = 0; t < 100; ++t) {
        const auto n = static_cast<std::size_t>(1000 + rng.uniform_int(200000));
        AudioClip clip;
        clip.samples.assign(n, 0.1);
        const auto segs = segment_audio(clip, 2.0);
        expect(segs.size() == n / 32000, "segment count rule");
        for (const auto& s : segs) expect(s.samples.size() == 32000, "segment length");
    }

    char buf[224];
    if (ok) {
        std::snprintf(buf, sizeof buf,
                      "preprocessing exactness: alignment residual max %.1e, all-pass denoise "
                      "max dev %.1e, segment counts exact on 100 durations",
                      worst_align, worst_denoise);
    } else {
        std::snprintf(buf, sizeof buf, "preprocessing exactness: failed at %s", fail.c_str());
    }
    report(7, ok, buf);
}

// ---- criterion 8: end-to-end determinism -----------------------------------

int shell(const std::string& cmd) {
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void criterion_determinism(const fs::path& work) {
    const std::string cli = AVF_CLI_PATH;
    const std::string model =
        " --set audio.widths=4,6,8,8,12 --set audio.attention_hidden=8"
        " --set video.stem=4 --set video.widths=4,8 --set video.expansion=4"
        " --set video.reduction=4 --set video.clip_len=8 --set batch_size=4"
        " --set schedule.audio.epochs=3 --set schedule.audio.lr=0.003"
        " --set schedule.fusion.epochs=2";

    const auto run_pipeline = [&](const fs::path& dir) {
        fs::create_directories(dir);
        const std::string d = dir.string();
        int rc = shell(cli + " synth --out " + d + "/corpus --seed 21 --set synth.n_samples=12" +
                       " > /dev/null");
        if (rc != 0) return rc;
        rc = shell(cli + " preprocess --manifest " + d + "/corpus/manifest.jsonl --out " + d +
                   "/feats > /dev/null");
        if (rc != 0) return rc;
        rc = shell(cli + " train --manifest " + d + "/feats/features.jsonl --stage audio" +
                   " --checkpoint-out " + d + "/audio.ckpt --seed 21" + model + " > /dev/null");
        if (rc != 0) return rc;
        rc = shell(cli + " train --manifest " + d + "/feats/features.jsonl --stage fusion" +
                   " --audio-checkpoint " + d + "/audio.ckpt --checkpoint-out " + d +
                   "/video.ckpt --seed 21" + model + " > /dev/null");
        if (rc != 0) return rc;
        return shell(cli + " evaluate --manifest " + d + "/feats/features.jsonl" +
                     " --audio-checkpoint " + d + "/audio.ckpt --video-checkpoint " + d +
                     "/video.ckpt --report-out " + d + "/report.csv" + model + " > /dev/null");
    };

    const fs::path r1 = work / "det1";
    const fs::path r2 = work / "det2";
    const int rc1 = run_pipeline(r1);
    const int rc2 = run_pipeline(r2);
    if (rc1 != 0 || rc2 != 0) {
        report(8, false, "determinism: pipeline run failed with exit " +
                             std::to_string(rc1 ? rc1 : rc2));
        return;
    }
    const std::vector<std::string> artifacts{"audio.ckpt",
                                            "video.ckpt",
                                            "audio.ckpt.history.csv",
                                            "video.ckpt.history.csv",
                                            "report.csv",
                                            "report.csv.roc.csv"};
    std::vector<std::string> differing;
    for (const auto& a : artifacts) {
        const std::string b1 = file_bytes(r1 / a);
        if (b1.empty() || b1 != file_bytes(r2 / a)) differing.push_back(a);
    }
    fs::remove_all(r1);
    fs::remove_all(r2);
    if (differing.empty()) {
        report(8, true,
               "determinism: two synth->preprocess->train->evaluate runs, " +
                   std::to_string(artifacts.size()) + " artifacts byte-identical");
    } else {
        std::string d = "determinism: artifacts differ:";
        for (const auto& a : differing) d += " " + a;
        report(8, false, d);
    }
}

}  // namespace

int main() {
    const fs::path work =
        fs::temp_directory_path() / ("avf_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(work);
    fs::create_directories(work);

    const auto t0 = Clock::now();
    criterion_gradients();
    criterion_metrics();
    criterion_fusion_loss();
    criteria_freeze_and_ordering(work);
    criterion_null(work);
    criterion_preprocessing();
    criterion_determinism(work);
    fs::remove_all(work);

    std::printf("acceptance: %d of 8 criteria passed in %.0f s\n", 8 - g_failures,
                seconds_since(t0));
    return g_failures;
}
