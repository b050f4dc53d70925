#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace avf {

using Shape = std::vector<int>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty means "all zeros / not accumulated"
    bool requires_grad = false;
    bool tracked = false;  // produced by an op recorded on some tape

    bool wants_grad() const { return requires_grad || tracked; }
    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

}  // namespace detail

// Dense n-dimensional array of 64-bit floats, row-major. Tensor is a
// cheap handle (shared storage); every operation allocates a fresh
// output and never mutates its inputs. The two sanctioned mutations are
// the optimizer step and gradient accumulation during backward replay.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    // I.i.d. uniform on [lo, hi).
    static Tensor uniform(Shape shape, double lo, double hi, class Rng& rng,
                          bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int ndim() const { return static_cast<int>(shape().size()); }
    int size(int axis) const;
    std::int64_t numel() const;

    const std::vector<double>& values() const;
    // Mutable access to the underlying buffer. Intended for building leaf
    // tensors and for test-side probing; mutating a tensor that already
    // participates in a recorded graph invalidates that graph.
    std::vector<double>& values();

    double at(std::initializer_list<int> idx) const;
    double& at(std::initializer_list<int> idx);

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);

    // Accumulated gradient; empty vector means zero / never touched.
    const std::vector<double>& grad() const;
    void zero_grad();

    // Value of a single-element tensor.
    double item() const;

    // Deep copy of values (grad not copied).
    Tensor clone() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode gradient tape. Ops executed while a TapeScope is active
// append their backward rules here in execution order; backward() replays
// them once in reverse (a valid topological order of the recorded DAG).
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Seeds d(root)/d(root) = 1 and replays every recorded rule exactly
    // once. root must be a single-element tensor produced under this
    // tape. Calling backward a second time is a StateError.
    void backward(const Tensor& root);

    void record(std::function<void()> backward_rule);
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<std::function<void()>> entries_;
    bool consumed_ = false;
};

// Activates a tape for the current thread for the guard's lifetime.
// Tapes are not shareable across threads.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape();

}  // namespace avf
