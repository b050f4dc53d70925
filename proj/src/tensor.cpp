#include "avfusion/tensor.hpp"

#include <sstream>

#include "avfusion/errors.hpp"
#include "avfusion/rng.hpp"

namespace avf {

std::int64_t numel_of(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ')';
    return out.str();
}

namespace {

std::shared_ptr<detail::TensorNode> make_node(Shape shape, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw ValueError("tensor extents must be positive, got " + shape_str(shape));
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->values.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return node;
}

thread_local Tape* t_active_tape = nullptr;

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(make_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t(make_node(std::move(shape), requires_grad));
    for (double& v : t.node_->values) v = value;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel_of(shape) != static_cast<std::int64_t>(values.size())) {
        throw ValueError("from_data: shape " + shape_str(shape) + " expects " +
                         std::to_string(numel_of(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    Tensor t(make_node(std::move(shape), requires_grad));
    t.node_->values = std::move(values);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
    Tensor t(make_node(std::move(shape), requires_grad));
    for (double& v : t.node_->values) v = rng.uniform(lo, hi);
    return t;
}

static const detail::TensorNode& deref(const std::shared_ptr<detail::TensorNode>& n) {
    if (!n) throw StateError("use of default-constructed tensor");
    return *n;
}

const Shape& Tensor::shape() const { return deref(node_).shape; }

int Tensor::size(int axis) const {
    const Shape& s = shape();
    if (axis < 0 || axis >= static_cast<int>(s.size())) {
        throw ValueError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(deref(node_).values.size()); }

const std::vector<double>& Tensor::values() const { return deref(node_).values; }

std::vector<double>& Tensor::values() {
    deref(node_);
    return node_->values;
}

static std::size_t flat_index(const Shape& shape, std::initializer_list<int> idx) {
    if (idx.size() != shape.size()) {
        throw ValueError("index rank " + std::to_string(idx.size()) + " does not match tensor rank " +
                         std::to_string(shape.size()));
    }
    std::size_t flat = 0;
    int axis = 0;
    for (int i : idx) {
        if (i < 0 || i >= shape[axis]) {
            throw ValueError("index " + std::to_string(i) + " out of bounds for axis " +
                             std::to_string(axis) + " of " + shape_str(shape));
        }
        flat = flat * shape[axis] + static_cast<std::size_t>(i);
        ++axis;
    }
    return flat;
}

double Tensor::at(std::initializer_list<int> idx) const {
    return deref(node_).values[flat_index(shape(), idx)];
}

double& Tensor::at(std::initializer_list<int> idx) {
    deref(node_);
    return node_->values[flat_index(shape(), idx)];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    deref(node_);
    node_->requires_grad = v;
    return *this;
}

const std::vector<double>& Tensor::grad() const { return deref(node_).grad; }

void Tensor::zero_grad() {
    deref(node_);
    node_->grad.clear();
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ValueError("item() requires a single-element tensor, got " + shape_str(shape()));
    }
    return values()[0];
}

Tensor Tensor::clone() const {
    deref(node_);
    return from_data(node_->shape, node_->values, node_->requires_grad);
}

void Tape::record(std::function<void()> backward_rule) {
    entries_.push_back(std::move(backward_rule));
}

void Tape::backward(const Tensor& root) {
    if (consumed_) {
        throw StateError("tape backward() called twice; record a fresh forward pass first");
    }
    if (root.numel() != 1) {
        throw ValueError("backward root must be a scalar, got " + shape_str(root.shape()));
    }
    consumed_ = true;
    auto node = root.node();
    node->ensure_grad();
    node->grad[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }

TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

}  // namespace avf
