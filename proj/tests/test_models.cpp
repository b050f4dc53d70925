#include <doctest.h>

#include <cmath>

#include "avfusion/errors.hpp"
#include "avfusion/models.hpp"
#include "avfusion/ops.hpp"
#include "avfusion/rng.hpp"
#include "support/gradcheck.hpp"

using namespace avf;

namespace {

AudioNetConfig desk_audio() {
    AudioNetConfig cfg;
    cfg.widths = {4, 6, 8, 8, 12};
    cfg.attention_hidden = 8;
    return cfg;
}

VideoNetConfig desk_video() {
    VideoNetConfig cfg;
    cfg.stem_channels = 4;
    cfg.module_widths = {4, 8, 12};
    cfg.expansion = 4;
    cfg.attention_reduction = 4;
    return cfg;
}

Tensor rand_input(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor::uniform(std::move(shape), -1.0, 1.0, rng);
}

}  // namespace

TEST_CASE("audio net shape and value contracts") {
    const AudioNetConfig cfg = desk_audio();
    ModelParams p = init_audio_params(cfg, 1);

    SUBCASE("full-frame input maps to one score per sample") {
        Tensor x = rand_input({2, 1, 64, 124}, 2);
        Tensor y = audio_forward(cfg, p, x);
        CHECK(y.shape() == Shape{2, 1});
        for (double v : y.values()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);  // classification head range
        }
    }
    SUBCASE("regression head is unbounded but finite") {
        AudioNetConfig rcfg = desk_audio();
        rcfg.head = HeadKind::regression;
        ModelParams rp = init_audio_params(rcfg, 1);
        Tensor y = audio_forward(rcfg, rp, rand_input({3, 1, 64, 124}, 3));
        CHECK(y.shape() == Shape{3, 1});
        for (double v : y.values()) CHECK(std::isfinite(v));
    }
    SUBCASE("identical rows give identical outputs") {
        Tensor one = rand_input({1, 1, 64, 124}, 4);
        Tensor two = Tensor::zeros({2, 1, 64, 124});
        for (int i = 0; i < 2; ++i) {
            std::copy(one.values().begin(), one.values().end(),
                      two.values().begin() + static_cast<std::ptrdiff_t>(i * one.numel()));
        }
        Tensor y = audio_forward(cfg, p, two);
        CHECK(y.values()[0] == y.values()[1]);
    }
    SUBCASE("config violations are rejected") {
        AudioNetConfig bad = cfg;
        bad.widths = {4, 6, 8};
        CHECK_THROWS_AS(init_audio_params(bad, 1), ValueError);
        CHECK_THROWS_AS(audio_forward(bad, p, rand_input({1, 1, 64, 124}, 5)), ValueError);
        CHECK_THROWS_AS(audio_forward(cfg, p, rand_input({1, 2, 64, 124}, 6)), ValueError);
    }
    SUBCASE("default config is the documented five-layer plan") {
        AudioNetConfig full;
        CHECK(full.widths == std::vector<int>{16, 32, 64, 64, 128});
        ModelParams fp = init_audio_params(full, 7);
        CHECK(fp.at("conv5.w").shape() == Shape{128, 64, 3, 3});
        Tensor y = audio_forward(full, fp, rand_input({1, 1, 64, 124}, 8));
        CHECK(y.shape() == Shape{1, 1});
    }
}

TEST_CASE("video net shape contracts") {
    SUBCASE("full-scale stem and pool arithmetic") {
        // 224 -> 112 under the 7x7x7 stride-(1,2,2) stem, 112 -> 56 under
        // the 3x3x3 stride-(1,2,2) pool; time axis untouched.
        CHECK(conv_out_extent(224, 7, 2, 3) == 112);
        CHECK(conv_out_extent(112, 3, 2, 1) == 56);
        CHECK(conv_out_extent(64, 7, 1, 3) == 64);
        CHECK(conv_out_extent(64, 3, 1, 1) == 64);
    }
    SUBCASE("desk-scale forward") {
        const VideoNetConfig cfg = desk_video();
        ModelParams p = init_video_params(cfg, 9);
        Tensor y = video_forward(cfg, p, rand_input({2, 3, 8, 32, 32}, 10));
        CHECK(y.shape() == Shape{2, 1});
        for (double v : y.values()) CHECK(std::isfinite(v));
    }
    SUBCASE("classification head bounds") {
        VideoNetConfig cfg = desk_video();
        cfg.head = HeadKind::classification;
        ModelParams p = init_video_params(cfg, 11);
        Tensor y = video_forward(cfg, p, rand_input({2, 3, 8, 32, 32}, 12));
        for (double v : y.values()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
    SUBCASE("input too small for the stem is rejected") {
        const VideoNetConfig cfg = desk_video();
        ModelParams p = init_video_params(cfg, 13);
        CHECK_THROWS_AS(video_forward(cfg, p, rand_input({1, 3, 8, 5, 5}, 14)), ValueError);
        CHECK_THROWS_AS(video_forward(cfg, p, rand_input({1, 3, 8, 32}, 15)), ValueError);
    }
    SUBCASE("bottleneck structure is visible in the parameter set") {
        const VideoNetConfig cfg = desk_video();
        ModelParams p = init_video_params(cfg, 16);
        // Two bottlenecks per module, each with its attention gate in place
        // of the middle conv: no 3x3x3 weights exist outside the stem.
        for (std::size_t m = 0; m < 3; ++m) {
            for (int b = 0; b < 2; ++b) {
                const std::string pre = "m" + std::to_string(m) + ".b" + std::to_string(b);
                CHECK(p.has(pre + ".reduce.w"));
                CHECK(p.has(pre + ".attn.w1"));
                CHECK(p.has(pre + ".expand.w"));
                CHECK(p.at(pre + ".reduce.w").shape()[2] == 1);
                CHECK(p.at(pre + ".expand.w").shape()[2] == 1);
            }
        }
        CHECK(p.at("m0.b0.expand.w").shape()[0] == 16);  // expansion x4 of width 4
        CHECK(p.has("m1.proj.w"));
        CHECK(p.has("m2.proj.w"));
    }
}

TEST_CASE("baseline nets") {
    SUBCASE("plain 3d cnn desk-scale shape") {
        BaselineConfig cfg;
        cfg.kind = BaselineKind::plain_3dcnn;
        cfg.cnn_widths = {4, 6, 8, 8};
        ModelParams p = init_baseline_params(cfg, 17);
        Tensor y = baseline_forward(cfg, p, rand_input({2, 3, 8, 32, 32}, 18));
        CHECK(y.shape() == Shape{2, 1});
    }
    SUBCASE("lstm handles any clip length") {
        BaselineConfig cfg;
        cfg.lstm_hidden = 16;
        ModelParams p = init_baseline_params(cfg, 19);
        Tensor y = baseline_forward(cfg, p, rand_input({2, 3, 5, 8, 8}, 20));
        CHECK(y.shape() == Shape{2, 1});
    }
    SUBCASE("lstm on one frame equals the explicit single step") {
        BaselineConfig cfg;
        cfg.lstm_hidden = 16;
        cfg.head = HeadKind::regression;
        ModelParams p = init_baseline_params(cfg, 21);
        Tensor x = rand_input({3, 3, 1, 4, 4}, 22);
        Tensor got = baseline_forward(cfg, p, x);

        Tensor feats = mean_axis(mean_axis(x, 4), 3);  // [N,3,1]
        Tensor x0 = index_axis(feats, 2, 0);           // [N,3]
        Tensor ig = sigmoid(linear(x0, p.at("lstm.wxi"), p.at("lstm.bi")));
        Tensor gg = tanh(linear(x0, p.at("lstm.wxg"), p.at("lstm.bg")));
        Tensor og = sigmoid(linear(x0, p.at("lstm.wxo"), p.at("lstm.bo")));
        Tensor h = mul(og, tanh(mul(ig, gg)));
        Tensor want = linear(h, p.at("head.w"), p.at("head.b"));
        for (std::size_t i = 0; i < want.values().size(); ++i) {
            CHECK(got.values()[i] == doctest::Approx(want.values()[i]).epsilon(1e-12));
        }
    }
    SUBCASE("parameter counts are config-deterministic") {
        BaselineConfig cfg;
        cfg.lstm_hidden = 16;
        const std::size_t n1 = count_params(init_baseline_params(cfg, 1));
        const std::size_t n2 = count_params(init_baseline_params(cfg, 999));
        CHECK(n1 == n2);
        // 4 gates x (3*16 + 16*16 + 16) + head (16 + 1)
        CHECK(n1 == 4u * (48 + 256 + 16) + 17);
        const std::size_t na = count_params(init_audio_params(desk_audio(), 1));
        CHECK(na == count_params(init_audio_params(desk_audio(), 2)));
        const std::size_t nv = count_params(init_video_params(desk_video(), 1));
        CHECK(nv == count_params(init_video_params(desk_video(), 2)));
    }
}

TEST_CASE("initialization is seeded and byte-identical") {
    auto same = [](const ModelParams& a, const ModelParams& b) {
        if (a.entries().size() != b.entries().size()) return false;
        for (std::size_t i = 0; i < a.entries().size(); ++i) {
            if (a.entries()[i].first != b.entries()[i].first) return false;
            if (a.entries()[i].second.values() != b.entries()[i].second.values()) return false;
        }
        return true;
    };
    CHECK(same(init_audio_params(desk_audio(), 42), init_audio_params(desk_audio(), 42)));
    CHECK(same(init_video_params(desk_video(), 42), init_video_params(desk_video(), 42)));
    BaselineConfig bc;
    bc.lstm_hidden = 8;
    CHECK(same(init_baseline_params(bc, 42), init_baseline_params(bc, 42)));
    CHECK(!same(init_audio_params(desk_audio(), 42), init_audio_params(desk_audio(), 43)));

    SUBCASE("biases start at zero, weights within the kaiming bound") {
        ModelParams p = init_audio_params(desk_audio(), 5);
        for (double v : p.at("conv1.b").values()) CHECK(v == 0.0);
        const double bound = std::sqrt(6.0 / 9.0);  // fan_in 1*3*3
        for (double v : p.at("conv1.w").values()) {
            CHECK(v >= -bound);
            CHECK(v <= bound);
        }
    }
}

TEST_CASE("end-to-end gradient checks") {
    // Desk-scale probes through each architecture; finite differences vs
    // the tape, relative error < 1e-3.
    SUBCASE("audio net") {
        const AudioNetConfig cfg = desk_audio();
        ModelParams p = init_audio_params(cfg, 30);
        Tensor x = rand_input({2, 1, 16, 20, }, 31);
        Rng rng(32);
        auto r = gradcheck::check(
            [&] { return mean(audio_forward(cfg, p, x)); },
            {p.at("conv1.w"), p.at("conv3.w"), p.at("attn.u"), p.at("attn.v"), p.at("head.w")},
            4, rng);
        CHECK(r.checked >= 5);
        CHECK(r.max_rel < 1e-3);
    }
    SUBCASE("video net") {
        VideoNetConfig cfg = desk_video();
        cfg.module_widths = {4, 8};
        ModelParams p = init_video_params(cfg, 33);
        Tensor x = rand_input({2, 3, 4, 16, 16}, 34);
        Rng rng(35);
        auto r = gradcheck::check(
            [&] { return mean(video_forward(cfg, p, x)); },
            {p.at("stem.w"), p.at("m0.b0.attn.w1"), p.at("m1.b1.reduce.w"), p.at("head.w")},
            3, rng);
        CHECK(r.checked >= 5);
        CHECK(r.max_rel < 1e-3);
    }
    SUBCASE("video net connectivity: stem gradient nonzero") {
        VideoNetConfig cfg = desk_video();
        cfg.module_widths = {4};
        ModelParams p = init_video_params(cfg, 36);
        Tensor x = rand_input({1, 3, 4, 16, 16}, 37);
        Tape tape;
        {
            TapeScope scope(tape);
            p.set_requires_grad(true);
            Tensor loss = mean(video_forward(cfg, p, x));
            tape.backward(loss);
        }
        double mx = 0.0;
        for (double g : p.at("stem.w").grad()) mx = std::max(mx, std::fabs(g));
        CHECK(mx > 0.0);
        p.zero_grad();
        p.set_requires_grad(false);
    }
    SUBCASE("lstm baseline") {
        BaselineConfig cfg;
        cfg.lstm_hidden = 6;
        cfg.head = HeadKind::classification;
        ModelParams p = init_baseline_params(cfg, 38);
        Tensor x = rand_input({2, 3, 3, 4, 4}, 39);
        Rng rng(40);
        auto r = gradcheck::check(
            [&] { return mean(baseline_forward(cfg, p, x)); },
            {p.at("lstm.wxi"), p.at("lstm.whf"), p.at("lstm.wxg"), p.at("head.w")}, 4, rng);
        CHECK(r.checked >= 5);
        CHECK(r.max_rel < 1e-3);
    }
    SUBCASE("plain 3d cnn baseline") {
        BaselineConfig cfg;
        cfg.kind = BaselineKind::plain_3dcnn;
        cfg.cnn_widths = {4, 4, 6, 6};
        ModelParams p = init_baseline_params(cfg, 41);
        Tensor x = rand_input({1, 3, 4, 8, 8}, 42);
        Rng rng(43);
        auto r = gradcheck::check(
            [&] { return mean(baseline_forward(cfg, p, x)); },
            {p.at("conv1.w"), p.at("conv4.w"), p.at("head.w")}, 3, rng);
        CHECK(r.checked >= 5);
        CHECK(r.max_rel < 1e-3);
    }
}
