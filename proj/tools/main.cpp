// avfusion: one executable exposing the whole pipeline as subcommands
// (synth | preprocess | train | evaluate | report). Every run is a pure
// function of its inputs and --seed; --threads above 1 trades that bitwise
// reproducibility away and is off by default.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "avfusion/audio.hpp"
#include "avfusion/checkpoint.hpp"
#include "avfusion/config.hpp"
#include "avfusion/csv.hpp"
#include "avfusion/datagen.hpp"
#include "avfusion/errors.hpp"
#include "avfusion/evaluation.hpp"
#include "avfusion/image.hpp"
#include "avfusion/manifest.hpp"
#include "avfusion/models.hpp"
#include "avfusion/svg.hpp"
#include "avfusion/training.hpp"
#include "avfusion/video.hpp"

namespace fs = std::filesystem;
using namespace avf;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    std::vector<std::string> overrides;
};

Config make_config(const GlobalOpts& g) {
    Config cfg;
    if (!g.config_path.empty()) cfg = load_config(g.config_path);
    for (const auto& s : g.overrides) apply_override(cfg, s);
    if (g.seed_set) cfg.values["seed"] = std::to_string(g.seed);
    if (g.threads > 1) {
        std::fprintf(stderr, "avfusion: note: --threads %d voids bitwise reproducibility\n",
                     g.threads);
    }
    return cfg;
}

HeadKind head_from(const Config& cfg) {
    const std::string t = cfg.str("task", "classification");
    if (t == "classification") return HeadKind::classification;
    if (t == "regression") return HeadKind::regression;
    throw ValueError("config key 'task': expected classification or regression, got '" + t + "'");
}

SynthConfig synth_from(const Config& cfg) {
    SynthConfig sc;
    sc.n_samples = static_cast<int>(cfg.integer("synth.n_samples", sc.n_samples));
    const std::string t = cfg.str("synth.task", "classification");
    if (t == "classification") sc.task = SynthTask::classification;
    else if (t == "regression") sc.task = SynthTask::regression;
    else throw ValueError("config key 'synth.task': expected classification or regression, got '" + t + "'");
    sc.audio_shift_hz = cfg.num("synth.audio_shift_hz", sc.audio_shift_hz);
    sc.video_amplitude = cfg.num("synth.video_amplitude", sc.video_amplitude);
    sc.noise = cfg.num("synth.noise", sc.noise);
    sc.frames_per_sample = static_cast<int>(cfg.integer("synth.frames", sc.frames_per_sample));
    sc.frame_size = static_cast<int>(cfg.integer("synth.frame_size", sc.frame_size));
    sc.fps = cfg.num("synth.fps", sc.fps);
    sc.seed = cfg.u64("seed", 0);
    return sc;
}

AudioNetConfig audio_from(const Config& cfg) {
    AudioNetConfig ac;
    ac.widths = cfg.int_list("audio.widths", ac.widths);
    ac.attention_hidden = static_cast<int>(cfg.integer("audio.attention_hidden", ac.attention_hidden));
    ac.head = head_from(cfg);
    return ac;
}

VideoNetConfig video_from(const Config& cfg) {
    VideoNetConfig vc;
    vc.stem_channels = static_cast<int>(cfg.integer("video.stem", vc.stem_channels));
    vc.module_widths = cfg.int_list("video.widths", vc.module_widths);
    vc.expansion = static_cast<int>(cfg.integer("video.expansion", vc.expansion));
    vc.attention_reduction = static_cast<int>(cfg.integer("video.reduction", vc.attention_reduction));
    vc.head = head_from(cfg);
    return vc;
}

TrainSchedule schedule_from(const Config& cfg) {
    TrainSchedule s;
    s.audio_epochs = static_cast<int>(cfg.integer("schedule.audio.epochs", s.audio_epochs));
    s.audio_lr = cfg.num("schedule.audio.lr", s.audio_lr);
    s.fusion_epochs = static_cast<int>(cfg.integer("schedule.fusion.epochs", s.fusion_epochs));
    s.fusion_lr = cfg.num("schedule.fusion.lr", s.fusion_lr);
    s.batch_size = static_cast<int>(cfg.integer("batch_size", s.batch_size));
    s.seed = cfg.u64("seed", 0);
    return s;
}

FusionLossConfig fusion_from(const Config& cfg) {
    FusionLossConfig fc;
    fc.alpha = cfg.num("fusion.alpha", fc.alpha);
    fc.beta = cfg.num("fusion.beta", fc.beta);
    validate_fusion_config(fc);
    return fc;
}

VideoTrainOptions video_options_from(const Config& cfg) {
    VideoTrainOptions o;
    o.clip_len = static_cast<int>(cfg.integer("video.clip_len", 64));
    o.augment.flip_prob = cfg.num("augment.flip_prob", o.augment.flip_prob);
    const double delta = cfg.num("augment.delta", 0.1);
    o.augment.brightness = delta;
    o.augment.contrast = delta;
    o.augment.saturation = delta;
    o.augment.hue = delta;
    return o;
}

int run_synth(const Config& cfg, const std::string& out_dir) {
    const SynthConfig sc = synth_from(cfg);
    DatasetManifest manifest = generate_dataset(sc, out_dir);
    split_dataset(manifest, sc.seed);
    // The manifest lands last, so a failed generation leaves no manifest
    // pointing at half a corpus.
    const std::string mpath = (fs::path(out_dir) / "manifest.jsonl").string();
    write_manifest(mpath, manifest);
    std::size_t tr = 0, va = 0, te = 0;
    for (const auto& s : manifest.samples) {
        if (s.split == "train") ++tr;
        else if (s.split == "val") ++va;
        else ++te;
    }
    std::printf("synth: %zu samples (%s) -> %s\n", manifest.samples.size(),
                sc.task == SynthTask::classification ? "classification" : "regression",
                out_dir.c_str());
    std::printf("synth: split train/val/test = %zu/%zu/%zu, manifest %s\n", tr, va, te,
                mpath.c_str());
    return 0;
}

// One recording -> feature container entries. Throws on any defect.
NamedTensors build_features(const SampleRecord& rec, double fps, int out_size) {
    const AudioClip raw = load_wav(rec.audio);
    const AudioClip clean = spectral_gate_denoise(raw);
    const std::vector<AudioClip> segs = segment_audio(clean, 2.0);
    if (segs.empty()) {
        throw ValueError("audio is shorter than one 2 s segment (" +
                         std::to_string(raw.duration()) + " s)");
    }
    std::vector<double> mel;
    int n_mels = 0, n_frames = 0;
    for (const auto& seg : segs) {
        const Tensor m = log_mel(stft(seg));  // [1, mel, frames]
        n_mels = m.shape()[1];
        n_frames = m.shape()[2];
        mel.insert(mel.end(), m.values().begin(), m.values().end());
    }
    Tensor audio_mel = Tensor::from_data(
        {static_cast<int>(segs.size()), 1, n_mels, n_frames}, std::move(mel));

    const fs::path frames_dir = fs::path(rec.frames);
    FrameSequence seq = load_frames(frames_dir.string(), rec.landmarks, fps);
    Tensor video = align_sequence(seq, out_size);

    NamedTensors out;
    out.emplace_back("audio_mel", std::move(audio_mel));
    out.emplace_back("video", std::move(video));
    out.emplace_back("fps", Tensor::from_data({1}, {fps}));
    return out;
}

void write_mel_image(const std::string& path, const Tensor& audio_mel) {
    const int s = audio_mel.shape()[0];
    const int mel = audio_mel.shape()[2];
    const int fr = audio_mel.shape()[3];
    Image img;
    img.width = fr;
    img.height = s * mel;
    img.channels = 1;
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0.0);
    const auto& v = audio_mel.values();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        img.pixels[i] = (v[i] - lo) / span;
    }
    write_png(path, img);
}

int run_preprocess(const Config& cfg, const std::string& manifest_path,
                   const std::string& out_dir, bool emit_spectrograms) {
    const DatasetManifest dm = read_manifest(manifest_path);
    const double fps = cfg.num("synth.fps", 8.0);
    const int out_size = static_cast<int>(cfg.integer("synth.frame_size", 32));
    fs::create_directories(out_dir);

    FeatureManifest fm;
    std::vector<std::string> failures;
    for (const auto& rec : dm.samples) {
        try {
            const NamedTensors entries = build_features(rec, fps, out_size);
            save_tensors((fs::path(out_dir) / (rec.id + ".avtc")).string(), entries);
            if (emit_spectrograms) {
                write_mel_image((fs::path(out_dir) / (rec.id + "_mel.png")).string(),
                                entries[0].second);
            }
            // Stored relative to the manifest's own directory.
            fm.samples.push_back({rec.id, rec.id + ".avtc", rec.label, rec.split});
        } catch (const Error& e) {
            failures.push_back("sample '" + rec.id + "': " + e.what());
        }
    }
    if (!fm.samples.empty()) {
        write_feature_manifest((fs::path(out_dir) / "features.jsonl").string(), fm);
    }
    std::printf("preprocess: %zu of %zu samples -> %s\n", fm.samples.size(), dm.samples.size(),
                out_dir.c_str());
    for (const auto& f : failures) std::fprintf(stderr, "preprocess: %s\n", f.c_str());
    return failures.empty() ? 0 : 1;
}

void print_last_val(const TrainHistory& history) {
    for (auto it = history.rows.rbegin(); it != history.rows.rend(); ++it) {
        if (it->split == "val") {
            const double loss = !std::isnan(it->loss_b) ? it->loss_b : it->loss_s;
            std::printf("train: final val loss %s, metric %s\n", fmt_double(loss).c_str(),
                        fmt_double(it->metric).c_str());
            return;
        }
    }
}

int run_train(const Config& cfg, const std::string& manifest_path, const std::string& stage,
              const std::string& checkpoint_out, std::string history_out,
              const std::string& audio_checkpoint) {
    const FeatureManifest fm = read_feature_manifest(manifest_path);
    const HeadKind head = head_from(cfg);
    const TrainSet data = load_train_set(fm, head);
    const TrainSchedule sched = schedule_from(cfg);
    if (history_out.empty()) history_out = checkpoint_out + ".history.csv";

    if (stage == "audio") {
        const AudioTrainResult res = pretrain_audio(data, audio_from(cfg), sched);
        save_params(checkpoint_out, res.params);
        write_history_csv(history_out, res.history);
        std::printf("train: audio stage, %d epochs, %zu samples -> %s\n", sched.audio_epochs,
                    data.samples.size(), checkpoint_out.c_str());
        print_last_val(res.history);
        return 0;
    }

    FusionTrainResult res;
    if (stage == "fusion") {
        if (audio_checkpoint.empty()) {
            throw ValueError(
                "train --stage fusion needs --audio-checkpoint; run "
                "'avfusion train --stage audio' first and pass its checkpoint here");
        }
        const ModelParams audio_params = load_params(audio_checkpoint);
        res = train_fusion(data, audio_params, audio_from(cfg), video_from(cfg), fusion_from(cfg),
                           sched, video_options_from(cfg));
    } else if (stage == "video") {
        res = train_video_only(data, video_from(cfg), sched, video_options_from(cfg));
    } else {
        throw ValueError("train: unknown --stage '" + stage + "' (audio, fusion or video)");
    }
    save_params(checkpoint_out, res.video_params);
    write_history_csv(history_out, res.history);
    std::printf("train: %s stage, %d epochs, best epoch %d (val loss %s) -> %s\n", stage.c_str(),
                sched.fusion_epochs, res.best_epoch, fmt_double(res.best_val_loss_b).c_str(),
                checkpoint_out.c_str());
    print_last_val(res.history);
    return 0;
}

int run_evaluate(const Config& cfg, const std::string& manifest_path, const std::string& split,
                 const std::string& audio_checkpoint, const std::string& video_checkpoint,
                 const std::string& report_out, std::string roc_out, const std::string& plot_out,
                 double threshold) {
    const FeatureManifest fm = read_feature_manifest(manifest_path);
    const HeadKind head = head_from(cfg);
    const AudioNetConfig acfg = audio_from(cfg);
    const VideoNetConfig vcfg = video_from(cfg);
    const ModelParams ap = load_params(audio_checkpoint);
    const ModelParams vp = load_params(video_checkpoint);
    const FusionLossConfig fcfg = fusion_from(cfg);
    const int clip_len = static_cast<int>(cfg.integer("video.clip_len", 64));
    const double default_fps = cfg.num("synth.fps", 8.0);

    std::vector<double> scores;
    std::vector<double> labels;
    for (const auto& rec : fm.samples) {
        if (rec.split != split) continue;
        RecordingFeatures feats;
        feats.fps = default_fps;
        for (const auto& [name, t] : load_tensors(rec.path)) {
            if (name == "audio_mel") feats.audio_mel = t;
            else if (name == "video") feats.video = t;
            else if (name == "fps") feats.fps = t.values()[0];
        }
        double s = evaluate_recording(feats, acfg, ap, vcfg, vp, fcfg, clip_len);
        if (head == HeadKind::regression) s *= 63.0;  // back to the BDI scale
        scores.push_back(s);
        labels.push_back(rec.label);
    }
    if (scores.empty()) {
        throw ValueError("evaluate: split '" + split + "' is empty in " + manifest_path);
    }

    const MetricsReport report = compute_report(head, scores, labels, threshold);
    write_report_csv(report_out, report);
    if (head == HeadKind::classification) {
        if (roc_out.empty()) roc_out = report_out + ".roc.csv";
        write_roc_csv(roc_out, report.roc);
        if (!plot_out.empty()) {
            PlotSeries curve{"roc", {}};
            for (const auto& p : report.roc) curve.points.emplace_back(p.fpr, p.tpr);
            write_svg_plot(plot_out, "roc curve", "false positive rate", "true positive rate",
                           {curve});
        }
        std::printf("evaluate: %zu recordings (%s), precision %.4f accuracy %.4f auc %.4f -> %s\n",
                    scores.size(), split.c_str(), report.precision, report.accuracy, report.auc,
                    report_out.c_str());
    } else {
        if (!plot_out.empty()) {
            std::vector<std::size_t> order(scores.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
            PlotSeries actual{"actual", {}};
            PlotSeries predicted{"predicted", {}};
            for (std::size_t k = 0; k < order.size(); ++k) {
                actual.points.emplace_back(static_cast<double>(k), labels[order[k]]);
                predicted.points.emplace_back(static_cast<double>(k), scores[order[k]]);
            }
            write_svg_plot(plot_out, "predicted vs actual", "recording (sorted by actual)",
                           "score", {actual, predicted});
        }
        std::printf("evaluate: %zu recordings (%s), mae %.4f rmse %.4f -> %s\n", scores.size(),
                    split.c_str(), report.mae, report.rmse, report_out.c_str());
    }
    return 0;
}

double report_value(const std::vector<std::pair<std::string, std::string>>& rows,
                    const std::string& key) {
    for (const auto& [k, v] : rows) {
        if (k == key) return std::strtod(v.c_str(), nullptr);
    }
    return std::nan("");
}

int run_report(const std::vector<std::string>& histories, const std::vector<std::string>& reports,
               std::vector<std::string> labels, const std::string& plot_out) {
    if (histories.empty() && reports.empty()) {
        throw ValueError("report: pass at least one --history or --report file");
    }
    while (labels.size() < reports.size()) {
        const auto& p = reports[labels.size()];
        labels.push_back(fs::path(p).stem().string());
    }

    std::vector<std::vector<std::pair<std::string, std::string>>> parsed;
    std::vector<bool> is_cls;
    for (const auto& p : reports) {
        parsed.push_back(read_report_csv(p));
        const auto task = std::find_if(parsed.back().begin(), parsed.back().end(),
                                       [](const auto& kv) { return kv.first == "task"; });
        is_cls.push_back(task != parsed.back().end() && task->second == "classification");
    }
    if (std::find(is_cls.begin(), is_cls.end(), true) != is_cls.end()) {
        std::printf("%-24s %10s %10s %10s\n", "model", "precision", "accuracy", "auc");
        for (std::size_t i = 0; i < parsed.size(); ++i) {
            if (!is_cls[i]) continue;
            std::printf("%-24s %10.4f %10.4f %10.4f\n", labels[i].c_str(),
                        report_value(parsed[i], "precision"), report_value(parsed[i], "accuracy"),
                        report_value(parsed[i], "auc"));
        }
    }
    if (std::find(is_cls.begin(), is_cls.end(), false) != is_cls.end()) {
        if (!parsed.empty() && is_cls.front() != is_cls.back()) std::printf("\n");
        std::printf("%-24s %10s %10s %26s\n", "model", "mae", "rmse", "levels (min/mild/mod/sev)");
        for (std::size_t i = 0; i < parsed.size(); ++i) {
            if (is_cls[i]) continue;
            std::printf("%-24s %10.4f %10.4f %10d/%d/%d/%d\n", labels[i].c_str(),
                        report_value(parsed[i], "mae"), report_value(parsed[i], "rmse"),
                        static_cast<int>(report_value(parsed[i], "level_minimal")),
                        static_cast<int>(report_value(parsed[i], "level_mild")),
                        static_cast<int>(report_value(parsed[i], "level_moderate")),
                        static_cast<int>(report_value(parsed[i], "level_severe")));
        }
    }

    for (const auto& hp : histories) {
        const TrainHistory h = read_history_csv(hp);
        PlotSeries train_s{"train", {}};
        PlotSeries val_s{"val", {}};
        for (const auto& r : h.rows) {
            const double y = !std::isnan(r.loss_b) ? r.loss_b
                           : !std::isnan(r.loss_s) ? r.loss_s
                                                   : r.loss_v;
            if (std::isnan(y)) continue;
            auto& dst = r.split == "train" ? train_s : val_s;
            dst.points.emplace_back(static_cast<double>(r.epoch), y);
        }
        std::vector<PlotSeries> series;
        if (!train_s.points.empty()) series.push_back(std::move(train_s));
        if (!val_s.points.empty()) series.push_back(std::move(val_s));
        if (series.empty()) {
            throw FormatError("report: history '" + hp + "' has no loss values to plot");
        }
        std::string out = plot_out;
        if (out.empty() || histories.size() > 1) {
            out = (fs::path(hp).parent_path() / (fs::path(hp).stem().string() + ".svg")).string();
        }
        write_svg_plot(out, "training loss", "epoch", "loss", series);
        std::printf("report: loss curves %s -> %s\n", hp.c_str(), out.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"audio-visual mental disorder analysis pipeline"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--config", g.config_path, "key=value config file");
    auto* seed_opt = app.add_option("--seed", g.seed, "master RNG seed (overrides config)");
    app.add_option("--threads", g.threads, "worker threads; >1 voids bitwise reproducibility");
    app.add_option("--set", g.overrides, "override one config key, e.g. --set batch_size=4");

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with splits");
    std::string out_dir;
    synth->add_option("--out", out_dir, "corpus output directory")->required();
    synth->fallthrough();

    auto* prep = app.add_subcommand("preprocess", "denoise/segment audio, align/resize frames");
    std::string manifest_path;
    std::string prep_out;
    bool emit_spectrograms = false;
    prep->add_option("--manifest", manifest_path, "corpus manifest.jsonl")->required();
    prep->add_option("--out", prep_out, "feature output directory")->required();
    prep->add_flag("--emit-spectrograms", emit_spectrograms, "write one mel image per recording");
    prep->fallthrough();

    auto* train = app.add_subcommand("train", "train one stage of the pipeline");
    std::string train_manifest, stage = "audio", ckpt_out, history_out, audio_ckpt;
    train->add_option("--manifest", train_manifest, "feature manifest (features.jsonl)")->required();
    train->add_option("--stage", stage, "audio | fusion | video")->required();
    train->add_option("--checkpoint-out", ckpt_out, "checkpoint output path")->required();
    train->add_option("--history-out", history_out, "history CSV path (default: <checkpoint>.history.csv)");
    train->add_option("--audio-checkpoint", audio_ckpt, "frozen audio checkpoint (fusion stage)");
    train->fallthrough();

    auto* eval = app.add_subcommand("evaluate", "score recordings and write a metrics report");
    std::string eval_manifest, eval_split = "test", eval_audio, eval_video, report_out, roc_out,
                plot_out;
    double threshold = 0.5;
    eval->add_option("--manifest", eval_manifest, "feature manifest (features.jsonl)")->required();
    eval->add_option("--split", eval_split, "split to score (default test)");
    eval->add_option("--audio-checkpoint", eval_audio, "audio checkpoint")->required();
    eval->add_option("--video-checkpoint", eval_video, "video checkpoint")->required();
    eval->add_option("--report-out", report_out, "metrics report CSV path")->required();
    eval->add_option("--roc-out", roc_out, "ROC CSV path (default: <report>.roc.csv)");
    eval->add_option("--plot-out", plot_out, "optional SVG plot path");
    eval->add_option("--threshold", threshold, "decision threshold (default 0.5)");
    eval->fallthrough();

    auto* rep = app.add_subcommand("report", "render tables and loss curves from CSV artifacts");
    std::vector<std::string> rep_histories, rep_reports, rep_labels;
    std::string rep_plot;
    rep->add_option("--history", rep_histories, "history CSV (repeatable)");
    rep->add_option("--report", rep_reports, "metrics report CSV (repeatable)");
    rep->add_option("--label", rep_labels, "row label per --report, in order");
    rep->add_option("--plot-out", rep_plot, "SVG path for a single history's loss curves");
    rep->fallthrough();

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    try {
        const Config cfg = make_config(g);
        if (synth->parsed()) return run_synth(cfg, out_dir);
        if (prep->parsed()) return run_preprocess(cfg, manifest_path, prep_out, emit_spectrograms);
        if (train->parsed())
            return run_train(cfg, train_manifest, stage, ckpt_out, history_out, audio_ckpt);
        if (eval->parsed())
            return run_evaluate(cfg, eval_manifest, eval_split, eval_audio, eval_video, report_out,
                                roc_out, plot_out, threshold);
        if (rep->parsed()) return run_report(rep_histories, rep_reports, rep_labels, rep_plot);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "avfusion: %s\n", e.what());
        return 1;
    }
    return 1;
}
