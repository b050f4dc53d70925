#include <cmath>

#include "avfusion/errors.hpp"
#include "avfusion/models.hpp"
#include "avfusion/ops.hpp"
#include "avfusion/rng.hpp"

namespace avf {

namespace {

void check_audio_cfg(const AudioNetConfig& cfg) {
    if (cfg.widths.size() != 5) {
        throw ValueError("audio net: exactly 5 conv layers required, got " +
                         std::to_string(cfg.widths.size()));
    }
    for (int w : cfg.widths) {
        if (w < 1) throw ValueError("audio net: channel widths must be positive");
    }
    if (cfg.attention_hidden < 1) {
        throw ValueError("audio net: attention hidden size must be positive");
    }
}

void check_video_cfg(const VideoNetConfig& cfg) {
    if (cfg.module_widths.empty()) {
        throw ValueError("video net: at least one residual module required");
    }
    if (cfg.stem_channels < 1 || cfg.expansion < 1 || cfg.attention_reduction < 1) {
        throw ValueError("video net: channel plan values must be positive");
    }
    for (int w : cfg.module_widths) {
        if (w < 1) throw ValueError("video net: module widths must be positive");
        if (w % cfg.attention_reduction != 0) {
            throw ValueError("video net: module width " + std::to_string(w) +
                             " not divisible by attention reduction " +
                             std::to_string(cfg.attention_reduction));
        }
    }
}

void check_baseline_cfg(const BaselineConfig& cfg) {
    if (cfg.kind == BaselineKind::lstm) {
        if (cfg.lstm_hidden < 1) throw ValueError("lstm baseline: hidden size must be positive");
    } else {
        if (cfg.cnn_widths.size() != 4) {
            throw ValueError("3dcnn baseline: exactly 4 conv layers required");
        }
        for (int w : cfg.cnn_widths) {
            if (w < 1) throw ValueError("3dcnn baseline: channel widths must be positive");
        }
    }
}

// One derived stream per tensor so parameter layout changes cannot shift
// other tensors' draws.
Tensor conv_init(Shape shape, int fan_in, std::uint64_t seed, const char* tag,
                 std::uint64_t id) {
    Rng rng = derive_rng(seed, tag, id);
    return kaiming_uniform(std::move(shape), fan_in, rng);
}

ChannelAttentionParams attn_at(const ModelParams& p, const std::string& prefix) {
    ChannelAttentionParams a;
    a.w1 = p.at(prefix + ".w1");
    a.b1 = p.at(prefix + ".b1");
    a.w2 = p.at(prefix + ".w2");
    a.b2 = p.at(prefix + ".b2");
    return a;
}

Tensor head_out(Tensor z, HeadKind head) {
    return head == HeadKind::classification ? sigmoid(z) : z;
}

// 2x2 pooling, per-axis only where the extent allows it.
Tensor pool2_guarded(const Tensor& x) {
    const int h = x.shape()[2], w = x.shape()[3];
    const int kh = h >= 2 ? 2 : 1;
    const int kw = w >= 2 ? 2 : 1;
    if (kh == 1 && kw == 1) return x;
    return maxpool2d(x, {kh, kw}, {kh, kw}, {0, 0});
}

Tensor pool3_guarded(const Tensor& x) {
    const int t = x.shape()[2], h = x.shape()[3], w = x.shape()[4];
    const int kt = t >= 2 ? 2 : 1;
    const int kh = h >= 2 ? 2 : 1;
    const int kw = w >= 2 ? 2 : 1;
    if (kt == 1 && kh == 1 && kw == 1) return x;
    return maxpool3d(x, {kt, kh, kw}, {kt, kh, kw}, {0, 0, 0});
}

}  // namespace

ModelParams init_audio_params(const AudioNetConfig& cfg, std::uint64_t seed) {
    check_audio_cfg(cfg);
    ModelParams p;
    int in_ch = 1;
    for (int i = 0; i < 5; ++i) {
        const int out_ch = cfg.widths[static_cast<std::size_t>(i)];
        const std::string name = "conv" + std::to_string(i + 1);
        p.add(name + ".w", conv_init({out_ch, in_ch, 3, 3}, in_ch * 9, seed, "init.audio.conv",
                                     static_cast<std::uint64_t>(i)));
        p.add(name + ".b", Tensor::zeros({out_ch}));
        in_ch = out_ch;
    }
    const int c = in_ch;
    const int a = cfg.attention_hidden;
    p.add("attn.u", conv_init({c, a}, c, seed, "init.audio.attn", 0));
    p.add("attn.bu", Tensor::zeros({a}));
    p.add("attn.v", conv_init({a, 1}, a, seed, "init.audio.attn", 1));
    p.add("head.w", conv_init({c, 1}, c, seed, "init.audio.head", 0));
    p.add("head.b", Tensor::zeros({1}));
    return p;
}

Tensor audio_forward(const AudioNetConfig& cfg, const ModelParams& params, const Tensor& x) {
    check_audio_cfg(cfg);
    if (!x.defined() || x.ndim() != 4 || x.shape()[1] != 1) {
        throw ValueError("audio_forward: expected input [N,1,mel,frames], got " +
                         (x.defined() ? shape_str(x.shape()) : "undefined"));
    }
    Tensor y = x;
    for (int i = 0; i < 5; ++i) {
        const std::string name = "conv" + std::to_string(i + 1);
        const Tensor& w = params.at(name + ".w");
        if (w.shape()[1] != y.shape()[1]) {
            throw ValueError("audio_forward: " + name + " expects " +
                             std::to_string(w.shape()[1]) + " input channels, got " +
                             std::to_string(y.shape()[1]));
        }
        y = relu(conv2d(y, w, params.at(name + ".b"), {1, 1}, {1, 1}));
        y = pool2_guarded(y);
    }
    y = mean_axis(y, 2);  // collapse the mel axis -> [N,C,T]
    TemporalAttentionParams ta;
    ta.u = params.at("attn.u");
    ta.bu = params.at("attn.bu");
    ta.v = params.at("attn.v");
    y = temporal_attention(y, ta);  // [N,C]
    Tensor z = linear(y, params.at("head.w"), params.at("head.b"));
    return head_out(z, cfg.head);
}

ModelParams init_video_params(const VideoNetConfig& cfg, std::uint64_t seed) {
    check_video_cfg(cfg);
    ModelParams p;
    p.add("stem.w", conv_init({cfg.stem_channels, 3, 7, 7, 7}, 3 * 343, seed, "init.video.stem", 0));
    p.add("stem.b", Tensor::zeros({cfg.stem_channels}));
    int in_ch = cfg.stem_channels;
    for (std::size_t m = 0; m < cfg.module_widths.size(); ++m) {
        const int base = cfg.module_widths[m];
        const int out_ch = base * cfg.expansion;
        const int hid = base / cfg.attention_reduction;
        for (int b = 0; b < 2; ++b) {
            const std::string pre = "m" + std::to_string(m) + ".b" + std::to_string(b);
            const std::uint64_t id = (static_cast<std::uint64_t>(m) << 8) | static_cast<std::uint64_t>(b);
            const int bin = b == 0 ? in_ch : out_ch;
            p.add(pre + ".reduce.w", conv_init({base, bin, 1, 1, 1}, bin, seed, "init.video.reduce", id));
            p.add(pre + ".reduce.b", Tensor::zeros({base}));
            p.add(pre + ".attn.w1", conv_init({base, hid}, base, seed, "init.video.attn1", id));
            p.add(pre + ".attn.b1", Tensor::zeros({hid}));
            p.add(pre + ".attn.w2", conv_init({hid, base}, hid, seed, "init.video.attn2", id));
            p.add(pre + ".attn.b2", Tensor::zeros({base}));
            p.add(pre + ".expand.w", conv_init({out_ch, base, 1, 1, 1}, base, seed, "init.video.expand", id));
            p.add(pre + ".expand.b", Tensor::zeros({out_ch}));
        }
        // Entry projection only where the identity cannot carry: width
        // change, or the spatial stride of modules >= 1.
        if (m > 0 || in_ch != out_ch) {
            p.add("m" + std::to_string(m) + ".proj.w",
                  conv_init({out_ch, in_ch, 1, 1, 1}, in_ch, seed, "init.video.proj",
                            static_cast<std::uint64_t>(m)));
            p.add("m" + std::to_string(m) + ".proj.b", Tensor::zeros({out_ch}));
        }
        in_ch = out_ch;
    }
    p.add("head.w", conv_init({in_ch, 1}, in_ch, seed, "init.video.head", 0));
    p.add("head.b", Tensor::zeros({1}));
    return p;
}

Tensor video_forward(const VideoNetConfig& cfg, const ModelParams& params, const Tensor& x) {
    check_video_cfg(cfg);
    if (!x.defined() || x.ndim() != 5 || x.shape()[1] != 3) {
        throw ValueError("video_forward: expected input [N,3,T,H,W], got " +
                         (x.defined() ? shape_str(x.shape()) : "undefined"));
    }
    if (x.shape()[3] < 7 || x.shape()[4] < 7) {
        throw ValueError("video_forward: input " + shape_str(x.shape()) +
                         " too small for the 7x7x7 stem");
    }
    Tensor y = relu(conv3d(x, params.at("stem.w"), params.at("stem.b"), {1, 2, 2}, {3, 3, 3}));
    y = maxpool3d(y, {3, 3, 3}, {1, 2, 2}, {1, 1, 1});

    for (std::size_t m = 0; m < cfg.module_widths.size(); ++m) {
        const Triple stride = m == 0 ? Triple{1, 1, 1} : Triple{1, 2, 2};
        for (int b = 0; b < 2; ++b) {
            const std::string pre = "m" + std::to_string(m) + ".b" + std::to_string(b);
            const Triple bstride = b == 0 ? stride : Triple{1, 1, 1};
            const bool project =
                b == 0 && params.has("m" + std::to_string(m) + ".proj.w");
            Tensor shortcut;
            if (project) {
                shortcut = conv3d(y, params.at("m" + std::to_string(m) + ".proj.w"),
                                  params.at("m" + std::to_string(m) + ".proj.b"), bstride,
                                  {0, 0, 0});
            } else {
                shortcut = y;
            }
            Tensor z = relu(conv3d(y, params.at(pre + ".reduce.w"), params.at(pre + ".reduce.b"),
                                   bstride, {0, 0, 0}));
            z = channel_attention(z, attn_at(params, pre + ".attn"));
            z = conv3d(z, params.at(pre + ".expand.w"), params.at(pre + ".expand.b"), {1, 1, 1},
                       {0, 0, 0});
            y = relu(add(z, shortcut));
        }
    }
    y = reshape(adaptive_avg_pool3d(y), {y.shape()[0], y.shape()[1]});
    Tensor z = linear(y, params.at("head.w"), params.at("head.b"));
    return head_out(z, cfg.head);
}

ModelParams init_baseline_params(const BaselineConfig& cfg, std::uint64_t seed) {
    check_baseline_cfg(cfg);
    ModelParams p;
    if (cfg.kind == BaselineKind::lstm) {
        const int h = cfg.lstm_hidden;
        const char* gates[] = {"i", "f", "g", "o"};
        for (int g = 0; g < 4; ++g) {
            const std::string gn(gates[g]);
            p.add("lstm.wx" + gn, conv_init({3, h}, 3, seed, "init.lstm.wx", static_cast<std::uint64_t>(g)));
            p.add("lstm.wh" + gn, conv_init({h, h}, h, seed, "init.lstm.wh", static_cast<std::uint64_t>(g)));
            p.add("lstm.b" + gn, Tensor::zeros({h}));
        }
        p.add("head.w", conv_init({h, 1}, h, seed, "init.lstm.head", 0));
        p.add("head.b", Tensor::zeros({1}));
    } else {
        int in_ch = 3;
        for (int i = 0; i < 4; ++i) {
            const int out_ch = cfg.cnn_widths[static_cast<std::size_t>(i)];
            const std::string name = "conv" + std::to_string(i + 1);
            p.add(name + ".w", conv_init({out_ch, in_ch, 3, 3, 3}, in_ch * 27, seed,
                                         "init.cnn.conv", static_cast<std::uint64_t>(i)));
            p.add(name + ".b", Tensor::zeros({out_ch}));
            in_ch = out_ch;
        }
        p.add("head.w", conv_init({in_ch, 1}, in_ch, seed, "init.cnn.head", 0));
        p.add("head.b", Tensor::zeros({1}));
    }
    return p;
}

Tensor baseline_forward(const BaselineConfig& cfg, const ModelParams& params, const Tensor& x) {
    check_baseline_cfg(cfg);
    if (!x.defined() || x.ndim() != 5 || x.shape()[1] != 3) {
        throw ValueError("baseline_forward: expected input [N,3,T,H,W], got " +
                         (x.defined() ? shape_str(x.shape()) : "undefined"));
    }
    if (cfg.kind == BaselineKind::lstm) {
        const int t_count = x.shape()[2];
        // Per-frame spatial means -> a T-long sequence of 3-vectors.
        Tensor feats = mean_axis(mean_axis(x, 4), 3);  // [N,3,T]
        Tensor h, c;
        for (int t = 0; t < t_count; ++t) {
            Tensor xt = index_axis(feats, 2, t);  // [N,3]
            auto gate = [&](const std::string& g) {
                Tensor z = linear(xt, params.at("lstm.wx" + g), params.at("lstm.b" + g));
                if (h.defined()) z = add(z, linear(h, params.at("lstm.wh" + g), Tensor()));
                return z;
            };
            Tensor ig = sigmoid(gate("i"));
            Tensor fg = sigmoid(gate("f"));
            Tensor gg = tanh(gate("g"));
            Tensor og = sigmoid(gate("o"));
            c = c.defined() ? add(mul(fg, c), mul(ig, gg)) : mul(ig, gg);
            h = mul(og, tanh(c));
        }
        Tensor z = linear(h, params.at("head.w"), params.at("head.b"));
        return head_out(z, cfg.head);
    }

    Tensor y = x;
    for (int i = 0; i < 4; ++i) {
        const std::string name = "conv" + std::to_string(i + 1);
        y = relu(conv3d(y, params.at(name + ".w"), params.at(name + ".b"), {1, 1, 1}, {1, 1, 1}));
        y = pool3_guarded(y);
    }
    y = reshape(adaptive_avg_pool3d(y), {y.shape()[0], y.shape()[1]});
    Tensor z = linear(y, params.at("head.w"), params.at("head.b"));
    return head_out(z, cfg.head);
}

std::size_t count_params(const ModelParams& params) {
    return static_cast<std::size_t>(params.count());
}

}  // namespace avf
