#pragma once

#include <array>

#include "avfusion/tensor.hpp"

namespace avf {

class Rng;

using Triple = std::array<int, 3>;
using Pair = std::array<int, 2>;

// Closed-form output extent for one convolution/pooling axis.
int conv_out_extent(int in, int kernel, int stride, int pad);

// ---- elementwise / reduction primitives -----------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor abs(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

// ---- shape manipulation ---------------------------------------------------

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
// Select index i along axis, dropping that axis.
Tensor index_axis(const Tensor& x, int axis, int i);
// Mean over one axis, dropping it.
Tensor mean_axis(const Tensor& x, int axis);

// ---- dense / convolutional layers -----------------------------------------

// x:[N,F] w:[F,G] b:[G] -> [N,G]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// x:[N,C,T,H,W] w:[K,C,kT,kH,kW] b:[K] -> [N,K,T',H',W']
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
              Triple stride, Triple padding);

// x:[N,C,H,W] w:[K,C,kH,kW] b:[K] -> [N,K,H',W']
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              Pair stride, Pair padding);

// Per-window maximum; backward routes to the first maximal element in
// (t,h,w) scan order. Padding cells count as -inf.
Tensor maxpool3d(const Tensor& x, Triple kernel, Triple stride, Triple padding);
Tensor maxpool2d(const Tensor& x, Pair kernel, Pair stride, Pair padding);

// x:[N,C,T,H,W] -> [N,C,1,1,1], each channel reduced to its mean.
Tensor adaptive_avg_pool3d(const Tensor& x);

// ---- attention blocks ------------------------------------------------------

// y[n,c,...] = x[n,c,...] * g[n,c]
Tensor channel_scale(const Tensor& x, const Tensor& g);

// y[n,c] = sum_t x[n,c,t] * w[n,t]
Tensor time_weighted_sum(const Tensor& x, const Tensor& w);

struct ChannelAttentionParams {
    Tensor w1;  // [C, C/r]
    Tensor b1;  // [C/r]
    Tensor w2;  // [C/r, C]
    Tensor b2;  // [C]
};

// Squeeze-excitation channel gate: per-channel gate
// g = sigmoid(W2 relu(W1 avg(x) + b1) + b2), output x scaled by g.
Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& p);

struct TemporalAttentionParams {
    Tensor u;   // [C, A]
    Tensor bu;  // [A]
    Tensor v;   // [A, 1]
};

// Additive attention over the last axis of x:[N,C,Tf]: frame scores
// s_t = v . tanh(U x_t + bu), weights softmax over Tf, output the
// weighted sum of frames -> [N,C].
Tensor temporal_attention(const Tensor& x, const TemporalAttentionParams& p);
// The softmax weights [N,Tf] the op above applies (for inspection).
Tensor temporal_attention_weights(const Tensor& x, const TemporalAttentionParams& p);

// ---- initialization --------------------------------------------------------

// Kaiming-uniform fan-in: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor kaiming_uniform(Shape shape, int fan_in, Rng& rng);

}  // namespace avf
