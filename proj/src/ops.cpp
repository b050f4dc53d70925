#include "avfusion/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "avfusion/errors.hpp"
#include "avfusion/rng.hpp"

namespace avf {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

bool grad_wanted(const Tensor& t) { return t.defined() && t.node()->wants_grad(); }

// Marks y as tracked and appends the rule if a tape is active and any
// input participates in the graph.
void maybe_record(Tensor& y, bool any_input_tracked, std::function<void()> rule) {
    Tape* tape = active_tape();
    if (!tape || !any_input_tracked) return;
    y.node()->tracked = true;
    tape->record(std::move(rule));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ValueError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

int conv_out_extent(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    Tensor y = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node(), yn = y.node();
    maybe_record(y, grad_wanted(a) || grad_wanted(b), [an, bn, yn] {
        if (yn->grad.empty()) return;
        if (an->wants_grad()) {
            an->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
        }
        if (bn->wants_grad()) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.size(); ++i) bn->grad[i] += yn->grad[i];
        }
    });
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    Tensor y = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] - bv[i];
    auto an = a.node(), bn = b.node(), yn = y.node();
    maybe_record(y, grad_wanted(a) || grad_wanted(b), [an, bn, yn] {
        if (yn->grad.empty()) return;
        if (an->wants_grad()) {
            an->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
        }
        if (bn->wants_grad()) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.size(); ++i) bn->grad[i] -= yn->grad[i];
        }
    });
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    Tensor y = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node(), yn = y.node();
    maybe_record(y, grad_wanted(a) || grad_wanted(b), [an, bn, yn] {
        if (yn->grad.empty()) return;
        if (an->wants_grad()) {
            an->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.size(); ++i)
                an->grad[i] += bn->values[i] * yn->grad[i];
        }
        if (bn->wants_grad()) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.size(); ++i)
                bn->grad[i] += an->values[i] * yn->grad[i];
        }
    });
    return y;
}

Tensor scale(const Tensor& x, double c) {
    Tensor y = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = c * xv[i];
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn, c] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += c * yn->grad[i];
    });
    return y;
}

Tensor abs(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = std::fabs(xv[i]);
    auto xn = x.node(), yn = y.node();
    // Subgradient at 0 is defined as 0.
    maybe_record(y, grad_wanted(x), [xn, yn] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) {
            const double v = xn->values[i];
            if (v > 0.0)
                xn->grad[i] += yn->grad[i];
            else if (v < 0.0)
                xn->grad[i] -= yn->grad[i];
        }
    });
    return y;
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor y = Tensor::scalar(s);
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        const double g = yn->grad[0];
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    });
    return y;
}

Tensor mean(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    Tensor y = Tensor::scalar(s * inv);
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn, inv] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        const double g = yn->grad[0] * inv;
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    });
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i)
            if (xn->values[i] > 0.0) xn->grad[i] += yn->grad[i];
    });
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) {
            const double s = yn->values[i];
            xn->grad[i] += s * (1.0 - s) * yn->grad[i];
        }
    });
    return y;
}

Tensor tanh(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = std::tanh(xv[i]);
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) {
            const double t = yn->values[i];
            xn->grad[i] += (1.0 - t * t) * yn->grad[i];
        }
    });
    return y;
}

Tensor softmax(const Tensor& x, int axis) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size())) {
        throw ValueError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
    }
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) inner *= s[i];
    const std::int64_t mid = s[axis];

    Tensor y = Tensor::zeros(s);
    const double* xd = x.values().data();
    double* yd = y.values().data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * mid * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t m = 0; m < mid; ++m) mx = std::max(mx, xd[base + m * inner]);
            double tot = 0.0;
            for (std::int64_t m = 0; m < mid; ++m) {
                const double e = std::exp(xd[base + m * inner] - mx);
                yd[base + m * inner] = e;
                tot += e;
            }
            const double inv = 1.0 / tot;
            for (std::int64_t m = 0; m < mid; ++m) yd[base + m * inner] *= inv;
        }
    }
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn, outer, mid, inner] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * mid * inner + in;
                double dot = 0.0;
                for (std::int64_t m = 0; m < mid; ++m) {
                    const std::int64_t i = base + m * inner;
                    dot += yn->grad[i] * yn->values[i];
                }
                for (std::int64_t m = 0; m < mid; ++m) {
                    const std::int64_t i = base + m * inner;
                    xn->grad[i] += yn->values[i] * (yn->grad[i] - dot);
                }
            }
        }
    });
    return y;
}

// ---- shape manipulation ----------------------------------------------------

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (numel_of(new_shape) != x.numel()) {
        throw ValueError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
    }
    Tensor y = Tensor::from_data(std::move(new_shape), x.values());
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i];
    });
    return y;
}

namespace {

std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    const Shape& s = x.shape();
    if (perm.size() != s.size()) {
        throw ValueError("permute: permutation rank " + std::to_string(perm.size()) +
                         " does not match tensor rank " + std::to_string(s.size()));
    }
    std::vector<bool> seen(s.size(), false);
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const int p = perm[i];
        if (p < 0 || p >= static_cast<int>(s.size()) || seen[p]) {
            throw ValueError("permute: invalid permutation");
        }
        seen[p] = true;
        out_shape[i] = s[p];
    }
    Tensor y = Tensor::zeros(out_shape);
    const auto in_strides = row_major_strides(s);
    const auto out_strides = row_major_strides(out_shape);
    const std::int64_t n = x.numel();
    const int nd = static_cast<int>(s.size());
    const double* xd = x.values().data();
    double* yd = y.values().data();
    // Map each output flat index back to its input flat index once; the
    // same table serves the backward scatter.
    std::vector<std::int64_t> src(n);
    for (std::int64_t of = 0; of < n; ++of) {
        std::int64_t rem = of, inf = 0;
        for (int d = 0; d < nd; ++d) {
            const std::int64_t c = rem / out_strides[d];
            rem -= c * out_strides[d];
            inf += c * in_strides[perm[d]];
        }
        src[of] = inf;
        yd[of] = xd[inf];
    }
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn, src = std::move(src)] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t of = 0; of < yn->grad.size(); ++of) xn->grad[src[of]] += yn->grad[of];
    });
    return y;
}

Tensor index_axis(const Tensor& x, int axis, int i) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size())) {
        throw ValueError("index_axis: axis out of range for " + shape_str(s));
    }
    if (i < 0 || i >= s[axis]) {
        throw ValueError("index_axis: index " + std::to_string(i) + " out of bounds for axis " +
                         std::to_string(axis) + " of " + shape_str(s));
    }
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[d];
    const std::int64_t mid = s[axis];
    Shape out_shape;
    for (int d = 0; d < static_cast<int>(s.size()); ++d)
        if (d != axis) out_shape.push_back(s[d]);
    if (out_shape.empty()) out_shape = {1};
    Tensor y = Tensor::zeros(out_shape);
    const double* xd = x.values().data();
    double* yd = y.values().data();
    for (std::int64_t o = 0; o < outer; ++o) {
        const double* row = xd + (o * mid + i) * inner;
        double* orow = yd + o * inner;
        for (std::int64_t k = 0; k < inner; ++k) orow[k] = row[k];
    }
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn, outer, mid, inner, i] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
            double* row = xn->grad.data() + (o * mid + i) * inner;
            const double* grow = yn->grad.data() + o * inner;
            for (std::int64_t k = 0; k < inner; ++k) row[k] += grow[k];
        }
    });
    return y;
}

Tensor mean_axis(const Tensor& x, int axis) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size())) {
        throw ValueError("mean_axis: axis out of range for " + shape_str(s));
    }
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[d];
    const std::int64_t mid = s[axis];
    Shape out_shape;
    for (int d = 0; d < static_cast<int>(s.size()); ++d)
        if (d != axis) out_shape.push_back(s[d]);
    if (out_shape.empty()) out_shape = {1};
    Tensor y = Tensor::zeros(out_shape);
    const double* xd = x.values().data();
    double* yd = y.values().data();
    const double inv = 1.0 / static_cast<double>(mid);
    for (std::int64_t o = 0; o < outer; ++o) {
        double* orow = yd + o * inner;
        for (std::int64_t m = 0; m < mid; ++m) {
            const double* row = xd + (o * mid + m) * inner;
            for (std::int64_t k = 0; k < inner; ++k) orow[k] += row[k];
        }
        for (std::int64_t k = 0; k < inner; ++k) orow[k] *= inv;
    }
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn, outer, mid, inner, inv] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* grow = yn->grad.data() + o * inner;
            for (std::int64_t m = 0; m < mid; ++m) {
                double* row = xn->grad.data() + (o * mid + m) * inner;
                for (std::int64_t k = 0; k < inner; ++k) row[k] += grow[k] * inv;
            }
        }
    });
    return y;
}

// ---- linear ----------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2 || w.ndim() != 2) {
        throw ValueError("linear: expected 2-D x and w, got x" + shape_str(x.shape()) + " w" +
                         shape_str(w.shape()));
    }
    const int n = x.size(0), f = x.size(1), g = w.size(1);
    if (w.size(0) != f) {
        throw ValueError("linear: inner dimensions differ: x" + shape_str(x.shape()) + " vs w" +
                         shape_str(w.shape()));
    }
    const bool has_bias = b.defined();
    if (has_bias && (b.ndim() != 1 || b.size(0) != g)) {
        throw ValueError("linear: bias shape " + shape_str(b.shape()) + " does not match output " +
                         std::to_string(g));
    }
    Tensor y = Tensor::zeros({n, g});
    const double* xd = x.values().data();
    const double* wd = w.values().data();
    double* yd = y.values().data();
    for (int i = 0; i < n; ++i) {
        double* yrow = yd + static_cast<std::size_t>(i) * g;
        if (has_bias) {
            const double* bd = b.values().data();
            for (int j = 0; j < g; ++j) yrow[j] = bd[j];
        }
        const double* xrow = xd + static_cast<std::size_t>(i) * f;
        for (int k = 0; k < f; ++k) {
            const double xv = xrow[k];
            const double* wrow = wd + static_cast<std::size_t>(k) * g;
            for (int j = 0; j < g; ++j) yrow[j] += xv * wrow[j];
        }
    }
    auto xn = x.node(), wn = w.node(), yn = y.node();
    auto bn = has_bias ? b.node() : nullptr;
    const bool tracked = grad_wanted(x) || grad_wanted(w) || (has_bias && grad_wanted(b));
    maybe_record(y, tracked, [xn, wn, bn, yn, n, f, g] {
        if (yn->grad.empty()) return;
        const double* gy = yn->grad.data();
        if (xn->wants_grad()) {
            xn->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const double* grow = gy + static_cast<std::size_t>(i) * g;
                double* dxrow = xn->grad.data() + static_cast<std::size_t>(i) * f;
                for (int k = 0; k < f; ++k) {
                    const double* wrow = wn->values.data() + static_cast<std::size_t>(k) * g;
                    double s = 0.0;
                    for (int j = 0; j < g; ++j) s += grow[j] * wrow[j];
                    dxrow[k] += s;
                }
            }
        }
        if (wn->wants_grad()) {
            wn->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const double* grow = gy + static_cast<std::size_t>(i) * g;
                const double* xrow = xn->values.data() + static_cast<std::size_t>(i) * f;
                for (int k = 0; k < f; ++k) {
                    double* dwrow = wn->grad.data() + static_cast<std::size_t>(k) * g;
                    const double xv = xrow[k];
                    for (int j = 0; j < g; ++j) dwrow[j] += xv * grow[j];
                }
            }
        }
        if (bn && bn->wants_grad()) {
            bn->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const double* grow = gy + static_cast<std::size_t>(i) * g;
                for (int j = 0; j < g; ++j) bn->grad[j] += grow[j];
            }
        }
    });
    return y;
}

// ---- conv3d ----------------------------------------------------------------

namespace {

struct ConvDims {
    int n, c, t, h, w;
    int k, kt, kh, kw;
    int st, sh, sw;
    int pt, ph, pw;
    int to, ho, wo;
};

void check_conv_axis(const char* op, const char* axis, int in, int kernel, int stride, int pad) {
    if (stride < 1) throw ValueError(std::string(op) + ": stride must be >= 1 on axis " + axis);
    if (pad < 0) throw ValueError(std::string(op) + ": padding must be >= 0 on axis " + axis);
    if (kernel > in + 2 * pad) {
        throw ValueError(std::string(op) + ": kernel extent " + std::to_string(kernel) +
                         " exceeds padded input extent " + std::to_string(in + 2 * pad) +
                         " on axis " + axis);
    }
}

// Valid output range [lo, hi) along one axis for kernel offset k:
// input index = out*stride + k - pad must fall in [0, in).
inline void out_range(int in, int out_extent, int stride, int shift, int& lo, int& hi) {
    lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
    const int top = in - 1 - shift;
    hi = top < 0 ? lo : std::min(out_extent, top / stride + 1);
    if (hi < lo) hi = lo;
}

void conv3d_backward(const NodePtr& xn, const NodePtr& wn, const NodePtr& bn, const NodePtr& yn,
                     ConvDims d) {
    if (yn->grad.empty()) return;
    const bool need_dx = xn->wants_grad();
    const bool need_dw = wn->wants_grad();
    const bool need_db = bn && bn->wants_grad();
    if (need_dx) xn->ensure_grad();
    if (need_dw) wn->ensure_grad();
    if (need_db) bn->ensure_grad();
    const double* gy = yn->grad.data();
    const std::int64_t out_block = static_cast<std::int64_t>(d.to) * d.ho * d.wo;

    for (int n = 0; n < d.n; ++n) {
        for (int k = 0; k < d.k; ++k) {
            const double* gnk = gy + (static_cast<std::int64_t>(n) * d.k + k) * out_block;
            if (need_db) {
                double s = 0.0;
                for (std::int64_t i = 0; i < out_block; ++i) s += gnk[i];
                bn->grad[k] += s;
            }
            if (!need_dx && !need_dw) continue;
            for (int c = 0; c < d.c; ++c) {
                const std::int64_t x_off = (static_cast<std::int64_t>(n) * d.c + c) *
                                           static_cast<std::int64_t>(d.t) * d.h * d.w;
                const std::int64_t w_off = (static_cast<std::int64_t>(k) * d.c + c) *
                                           static_cast<std::int64_t>(d.kt) * d.kh * d.kw;
                for (int to = 0; to < d.to; ++to) {
                    const int tbase = to * d.st - d.pt;
                    for (int kt = 0; kt < d.kt; ++kt) {
                        const int ti = tbase + kt;
                        if (ti < 0 || ti >= d.t) continue;
                        for (int ho = 0; ho < d.ho; ++ho) {
                            const int hbase = ho * d.sh - d.ph;
                            const double* grow =
                                gnk + (static_cast<std::int64_t>(to) * d.ho + ho) * d.wo;
                            for (int kh = 0; kh < d.kh; ++kh) {
                                const int hi = hbase + kh;
                                if (hi < 0 || hi >= d.h) continue;
                                const std::int64_t row_off =
                                    x_off + (static_cast<std::int64_t>(ti) * d.h + hi) * d.w;
                                const std::int64_t wrow_off =
                                    w_off + (static_cast<std::int64_t>(kt) * d.kh + kh) * d.kw;
                                for (int kw = 0; kw < d.kw; ++kw) {
                                    const int shift = kw - d.pw;
                                    int lo, hi2;
                                    out_range(d.w, d.wo, d.sw, shift, lo, hi2);
                                    if (need_dw) {
                                        const double* xrow = xn->values.data() + row_off;
                                        double s = 0.0;
                                        for (int wo = lo; wo < hi2; ++wo)
                                            s += grow[wo] * xrow[wo * d.sw + shift];
                                        wn->grad[wrow_off + kw] += s;
                                    }
                                    if (need_dx) {
                                        double* dxrow = xn->grad.data() + row_off;
                                        const double coeff = wn->values[wrow_off + kw];
                                        for (int wo = lo; wo < hi2; ++wo)
                                            dxrow[wo * d.sw + shift] += coeff * grow[wo];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, Triple stride, Triple padding) {
    if (x.ndim() != 5) {
        throw ValueError("conv3d: expected 5-D input [N,C,T,H,W], got " + shape_str(x.shape()));
    }
    if (w.ndim() != 5) {
        throw ValueError("conv3d: expected 5-D weight [K,C,kT,kH,kW], got " + shape_str(w.shape()));
    }
    ConvDims d{};
    d.n = x.size(0);
    d.c = x.size(1);
    d.t = x.size(2);
    d.h = x.size(3);
    d.w = x.size(4);
    d.k = w.size(0);
    d.kt = w.size(2);
    d.kh = w.size(3);
    d.kw = w.size(4);
    d.st = stride[0];
    d.sh = stride[1];
    d.sw = stride[2];
    d.pt = padding[0];
    d.ph = padding[1];
    d.pw = padding[2];
    if (w.size(1) != d.c) {
        throw ValueError("conv3d: input has " + std::to_string(d.c) + " channels but weight " +
                         shape_str(w.shape()) + " expects " + std::to_string(w.size(1)));
    }
    const bool has_bias = b.defined();
    if (has_bias && (b.ndim() != 1 || b.size(0) != d.k)) {
        throw ValueError("conv3d: bias shape " + shape_str(b.shape()) + " does not match " +
                         std::to_string(d.k) + " output channels");
    }
    check_conv_axis("conv3d", "T", d.t, d.kt, d.st, d.pt);
    check_conv_axis("conv3d", "H", d.h, d.kh, d.sh, d.ph);
    check_conv_axis("conv3d", "W", d.w, d.kw, d.sw, d.pw);
    d.to = conv_out_extent(d.t, d.kt, d.st, d.pt);
    d.ho = conv_out_extent(d.h, d.kh, d.sh, d.ph);
    d.wo = conv_out_extent(d.w, d.kw, d.sw, d.pw);

    Tensor y = Tensor::zeros({d.n, d.k, d.to, d.ho, d.wo});
    const double* xd = x.values().data();
    const double* wd = w.values().data();
    double* yd = y.values().data();
    const std::int64_t out_block = static_cast<std::int64_t>(d.to) * d.ho * d.wo;

    for (int n = 0; n < d.n; ++n) {
        for (int k = 0; k < d.k; ++k) {
            double* ynk = yd + (static_cast<std::int64_t>(n) * d.k + k) * out_block;
            if (has_bias) {
                const double bias = b.values()[k];
                for (std::int64_t i = 0; i < out_block; ++i) ynk[i] = bias;
            }
            for (int c = 0; c < d.c; ++c) {
                const double* xnc = xd + (static_cast<std::int64_t>(n) * d.c + c) *
                                             static_cast<std::int64_t>(d.t) * d.h * d.w;
                const double* wkc = wd + (static_cast<std::int64_t>(k) * d.c + c) *
                                             static_cast<std::int64_t>(d.kt) * d.kh * d.kw;
                for (int to = 0; to < d.to; ++to) {
                    const int tbase = to * d.st - d.pt;
                    for (int kt = 0; kt < d.kt; ++kt) {
                        const int ti = tbase + kt;
                        if (ti < 0 || ti >= d.t) continue;
                        for (int ho = 0; ho < d.ho; ++ho) {
                            const int hbase = ho * d.sh - d.ph;
                            double* yrow = ynk + (static_cast<std::int64_t>(to) * d.ho + ho) * d.wo;
                            for (int kh = 0; kh < d.kh; ++kh) {
                                const int hi = hbase + kh;
                                if (hi < 0 || hi >= d.h) continue;
                                const double* xrow =
                                    xnc + (static_cast<std::int64_t>(ti) * d.h + hi) * d.w;
                                const double* wrow =
                                    wkc + (static_cast<std::int64_t>(kt) * d.kh + kh) * d.kw;
                                for (int kw = 0; kw < d.kw; ++kw) {
                                    const int shift = kw - d.pw;
                                    int lo, hi2;
                                    out_range(d.w, d.wo, d.sw, shift, lo, hi2);
                                    const double coeff = wrow[kw];
                                    for (int wo = lo; wo < hi2; ++wo)
                                        yrow[wo] += coeff * xrow[wo * d.sw + shift];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    auto xn = x.node(), wn = w.node(), yn = y.node();
    auto bn = has_bias ? b.node() : nullptr;
    const bool tracked = grad_wanted(x) || grad_wanted(w) || (has_bias && grad_wanted(b));
    maybe_record(y, tracked, [xn, wn, bn, yn, d] { conv3d_backward(xn, wn, bn, yn, d); });
    return y;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Pair stride, Pair padding) {
    if (x.ndim() != 4) {
        throw ValueError("conv2d: expected 4-D input [N,C,H,W], got " + shape_str(x.shape()));
    }
    if (w.ndim() != 4) {
        throw ValueError("conv2d: expected 4-D weight [K,C,kH,kW], got " + shape_str(w.shape()));
    }
    if (w.size(1) != x.size(1)) {
        throw ValueError("conv2d: input has " + std::to_string(x.size(1)) +
                         " channels but weight " + shape_str(w.shape()) + " expects " +
                         std::to_string(w.size(1)));
    }
    Tensor x5 = reshape(x, {x.size(0), x.size(1), 1, x.size(2), x.size(3)});
    Tensor w5 = reshape(w, {w.size(0), w.size(1), 1, w.size(2), w.size(3)});
    Tensor y5 = conv3d(x5, w5, b, {1, stride[0], stride[1]}, {0, padding[0], padding[1]});
    return reshape(y5, {y5.size(0), y5.size(1), y5.size(3), y5.size(4)});
}

// ---- pooling ---------------------------------------------------------------

Tensor maxpool3d(const Tensor& x, Triple kernel, Triple stride, Triple padding) {
    if (x.ndim() != 5) {
        throw ValueError("maxpool3d: expected 5-D input [N,C,T,H,W], got " + shape_str(x.shape()));
    }
    const int N = x.size(0), C = x.size(1), T = x.size(2), H = x.size(3), W = x.size(4);
    const int kt = kernel[0], kh = kernel[1], kw = kernel[2];
    const int st = stride[0], sh = stride[1], sw = stride[2];
    const int pt = padding[0], ph = padding[1], pw = padding[2];
    check_conv_axis("maxpool3d", "T", T, kt, st, pt);
    check_conv_axis("maxpool3d", "H", H, kh, sh, ph);
    check_conv_axis("maxpool3d", "W", W, kw, sw, pw);
    const int To = conv_out_extent(T, kt, st, pt);
    const int Ho = conv_out_extent(H, kh, sh, ph);
    const int Wo = conv_out_extent(W, kw, sw, pw);

    Tensor y = Tensor::zeros({N, C, To, Ho, Wo});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(y.numel()), -1);
    const double* xd = x.values().data();
    double* yd = y.values().data();
    std::int64_t out_i = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::int64_t base =
                (static_cast<std::int64_t>(n) * C + c) * static_cast<std::int64_t>(T) * H * W;
            for (int to = 0; to < To; ++to) {
                for (int ho = 0; ho < Ho; ++ho) {
                    for (int wo = 0; wo < Wo; ++wo, ++out_i) {
                        double best = -std::numeric_limits<double>::infinity();
                        std::int64_t best_i = -1;
                        for (int a = 0; a < kt; ++a) {
                            const int ti = to * st + a - pt;
                            if (ti < 0 || ti >= T) continue;
                            for (int bI = 0; bI < kh; ++bI) {
                                const int hi = ho * sh + bI - ph;
                                if (hi < 0 || hi >= H) continue;
                                for (int cI = 0; cI < kw; ++cI) {
                                    const int wi = wo * sw + cI - pw;
                                    if (wi < 0 || wi >= W) continue;
                                    const std::int64_t idx =
                                        base + (static_cast<std::int64_t>(ti) * H + hi) * W + wi;
                                    if (xd[idx] > best) {
                                        best = xd[idx];
                                        best_i = idx;
                                    }
                                }
                            }
                        }
                        yd[out_i] = best_i >= 0 ? best : 0.0;
                        argmax[static_cast<std::size_t>(out_i)] = best_i;
                    }
                }
            }
        }
    }
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn, argmax = std::move(argmax)] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) {
            if (argmax[i] >= 0) xn->grad[static_cast<std::size_t>(argmax[i])] += yn->grad[i];
        }
    });
    return y;
}

Tensor maxpool2d(const Tensor& x, Pair kernel, Pair stride, Pair padding) {
    if (x.ndim() != 4) {
        throw ValueError("maxpool2d: expected 4-D input [N,C,H,W], got " + shape_str(x.shape()));
    }
    Tensor x5 = reshape(x, {x.size(0), x.size(1), 1, x.size(2), x.size(3)});
    Tensor y5 = maxpool3d(x5, {1, kernel[0], kernel[1]}, {1, stride[0], stride[1]},
                          {0, padding[0], padding[1]});
    return reshape(y5, {y5.size(0), y5.size(1), y5.size(3), y5.size(4)});
}

Tensor adaptive_avg_pool3d(const Tensor& x) {
    if (x.ndim() != 5) {
        throw ValueError("adaptive_avg_pool3d: expected 5-D input [N,C,T,H,W], got " +
                         shape_str(x.shape()));
    }
    const int N = x.size(0), C = x.size(1);
    const std::int64_t block = static_cast<std::int64_t>(x.size(2)) * x.size(3) * x.size(4);
    Tensor y = Tensor::zeros({N, C, 1, 1, 1});
    const double* xd = x.values().data();
    double* yd = y.values().data();
    const double inv = 1.0 / static_cast<double>(block);
    for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        const double* p = xd + nc * block;
        double s = 0.0;
        for (std::int64_t i = 0; i < block; ++i) s += p[i];
        yd[nc] = s * inv;
    }
    auto xn = x.node(), yn = y.node();
    maybe_record(y, grad_wanted(x), [xn, yn, block, inv] {
        if (yn->grad.empty()) return;
        xn->ensure_grad();
        for (std::size_t nc = 0; nc < yn->grad.size(); ++nc) {
            const double g = yn->grad[nc] * inv;
            double* p = xn->grad.data() + static_cast<std::int64_t>(nc) * block;
            for (std::int64_t i = 0; i < block; ++i) p[i] += g;
        }
    });
    return y;
}

// ---- attention -------------------------------------------------------------

Tensor channel_scale(const Tensor& x, const Tensor& g) {
    if (x.ndim() < 2 || g.ndim() != 2 || g.size(0) != x.size(0) || g.size(1) != x.size(1)) {
        throw ValueError("channel_scale: gate " + shape_str(g.shape()) +
                         " does not match leading [N,C] of " + shape_str(x.shape()));
    }
    const std::int64_t nc = static_cast<std::int64_t>(x.size(0)) * x.size(1);
    const std::int64_t block = x.numel() / nc;
    Tensor y = Tensor::zeros(x.shape());
    const double* xd = x.values().data();
    const double* gd = g.values().data();
    double* yd = y.values().data();
    for (std::int64_t i = 0; i < nc; ++i) {
        const double s = gd[i];
        const double* xr = xd + i * block;
        double* yr = yd + i * block;
        for (std::int64_t j = 0; j < block; ++j) yr[j] = s * xr[j];
    }
    auto xn = x.node(), gn = g.node(), yn = y.node();
    maybe_record(y, grad_wanted(x) || grad_wanted(g), [xn, gn, yn, nc, block] {
        if (yn->grad.empty()) return;
        if (xn->wants_grad()) {
            xn->ensure_grad();
            for (std::int64_t i = 0; i < nc; ++i) {
                const double s = gn->values[i];
                const double* gr = yn->grad.data() + i * block;
                double* dxr = xn->grad.data() + i * block;
                for (std::int64_t j = 0; j < block; ++j) dxr[j] += s * gr[j];
            }
        }
        if (gn->wants_grad()) {
            gn->ensure_grad();
            for (std::int64_t i = 0; i < nc; ++i) {
                const double* gr = yn->grad.data() + i * block;
                const double* xr = xn->values.data() + i * block;
                double s = 0.0;
                for (std::int64_t j = 0; j < block; ++j) s += gr[j] * xr[j];
                gn->grad[i] += s;
            }
        }
    });
    return y;
}

Tensor time_weighted_sum(const Tensor& x, const Tensor& w) {
    if (x.ndim() != 3 || w.ndim() != 2 || w.size(0) != x.size(0) || w.size(1) != x.size(2)) {
        throw ValueError("time_weighted_sum: weights " + shape_str(w.shape()) +
                         " do not match [N,*,T] of " + shape_str(x.shape()));
    }
    const int N = x.size(0), C = x.size(1), T = x.size(2);
    Tensor y = Tensor::zeros({N, C});
    const double* xd = x.values().data();
    const double* wd = w.values().data();
    double* yd = y.values().data();
    for (int n = 0; n < N; ++n) {
        const double* wrow = wd + static_cast<std::size_t>(n) * T;
        for (int c = 0; c < C; ++c) {
            const double* xrow = xd + (static_cast<std::size_t>(n) * C + c) * T;
            double s = 0.0;
            for (int t = 0; t < T; ++t) s += xrow[t] * wrow[t];
            yd[static_cast<std::size_t>(n) * C + c] = s;
        }
    }
    auto xn = x.node(), wn = w.node(), yn = y.node();
    maybe_record(y, grad_wanted(x) || grad_wanted(w), [xn, wn, yn, N, C, T] {
        if (yn->grad.empty()) return;
        if (xn->wants_grad()) {
            xn->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const double* wrow = wn->values.data() + static_cast<std::size_t>(n) * T;
                for (int c = 0; c < C; ++c) {
                    const double g = yn->grad[static_cast<std::size_t>(n) * C + c];
                    double* dxrow = xn->grad.data() + (static_cast<std::size_t>(n) * C + c) * T;
                    for (int t = 0; t < T; ++t) dxrow[t] += g * wrow[t];
                }
            }
        }
        if (wn->wants_grad()) {
            wn->ensure_grad();
            for (int n = 0; n < N; ++n) {
                double* dwrow = wn->grad.data() + static_cast<std::size_t>(n) * T;
                for (int c = 0; c < C; ++c) {
                    const double g = yn->grad[static_cast<std::size_t>(n) * C + c];
                    const double* xrow =
                        xn->values.data() + (static_cast<std::size_t>(n) * C + c) * T;
                    for (int t = 0; t < T; ++t) dwrow[t] += g * xrow[t];
                }
            }
        }
    });
    return y;
}

Tensor channel_attention(const Tensor& x, const ChannelAttentionParams& p) {
    if (x.ndim() != 5) {
        throw ValueError("channel_attention: expected 5-D input, got " + shape_str(x.shape()));
    }
    const int n = x.size(0), c = x.size(1);
    if (p.w1.ndim() != 2 || p.w1.size(0) != c || p.w2.ndim() != 2 || p.w2.size(1) != c ||
        p.w2.size(0) != p.w1.size(1)) {
        throw ValueError("channel_attention: parameter shapes w1" + shape_str(p.w1.shape()) +
                         " w2" + shape_str(p.w2.shape()) + " do not match " + std::to_string(c) +
                         " channels");
    }
    Tensor pooled = reshape(adaptive_avg_pool3d(x), {n, c});
    Tensor hidden = relu(linear(pooled, p.w1, p.b1));
    Tensor gate = sigmoid(linear(hidden, p.w2, p.b2));
    return channel_scale(x, gate);
}

Tensor temporal_attention_weights(const Tensor& x, const TemporalAttentionParams& p) {
    if (x.ndim() != 3) {
        throw ValueError("temporal_attention: expected 3-D input [N,C,Tf], got " +
                         shape_str(x.shape()));
    }
    const int n = x.size(0), c = x.size(1), t = x.size(2);
    if (p.u.ndim() != 2 || p.u.size(0) != c || p.v.ndim() != 2 || p.v.size(0) != p.u.size(1) ||
        p.v.size(1) != 1) {
        throw ValueError("temporal_attention: parameter shapes u" + shape_str(p.u.shape()) + " v" +
                         shape_str(p.v.shape()) + " do not match " + std::to_string(c) +
                         " channels");
    }
    Tensor frames = reshape(permute(x, {0, 2, 1}), {n * t, c});
    Tensor hidden = tanh(linear(frames, p.u, p.bu));
    Tensor scores = reshape(linear(hidden, p.v, Tensor()), {n, t});
    return softmax(scores, 1);
}

Tensor temporal_attention(const Tensor& x, const TemporalAttentionParams& p) {
    Tensor weights = temporal_attention_weights(x, p);
    return time_weighted_sum(x, weights);
}

Tensor kaiming_uniform(Shape shape, int fan_in, Rng& rng) {
    if (fan_in <= 0) throw ValueError("kaiming_uniform: fan_in must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace avf
