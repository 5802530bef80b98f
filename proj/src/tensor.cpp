#include "dferclip/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace dfer {

std::string shape_str(const std::vector<Index>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Index shape_numel(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) {
        if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<Index> shape, bool requires_grad) {
    Index n = shape_numel(shape);
    s_ = std::make_shared<detail::TensorStorage>();
    s_->shape = std::move(shape);
    s_->value.assign(static_cast<size_t>(n), 0.0);
    s_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<Index> shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<Index> shape, double v, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    for (auto& x : t.values()) x = v;
    return t;
}

Tensor Tensor::from_values(std::vector<Index> shape, std::vector<double> v, bool requires_grad) {
    Index n = shape_numel(shape);
    if (static_cast<size_t>(n) != v.size()) {
        throw ShapeError("value count " + std::to_string(v.size()) + " does not match shape " +
                         shape_str(shape));
    }
    Tensor t;
    t.s_ = std::make_shared<detail::TensorStorage>();
    t.s_->shape = std::move(shape);
    t.s_->value = std::move(v);
    t.s_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_values({}, {v}, requires_grad);
}

Index Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str(shape()));
    return s_->shape[0];
}

Index Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str(shape()));
    return s_->shape[1];
}

double Tensor::item() const {
    if (size() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(shape()));
    return s_->value[0];
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw UsageError("grad() on tensor without gradient");
    return s_->grad;
}

std::vector<double>& Tensor::grad() {
    if (!has_grad()) throw UsageError("grad() on tensor without gradient");
    return s_->grad;
}

Tape& Tape::active() {
    static Tape tape;
    return tape;
}

void Tape::record(std::vector<std::shared_ptr<detail::TensorStorage>> touched,
                  std::function<void()> pull) {
    nodes_.push_back(Node{std::move(touched), std::move(pull)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw UsageError("backward() requires a scalar loss, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    std::unordered_set<detail::TensorStorage*> seen;
    for (auto& node : nodes_) {
        for (auto& s : node.touched) {
            if (seen.insert(s.get()).second) {
                s->grad.assign(s->value.size(), 0.0);
            }
        }
    }
    auto ls = loss.storage();
    if (seen.insert(ls.get()).second) {
        ls->grad.assign(ls->value.size(), 0.0);
    }
    ls->grad[0] = 1.0;

    last_visits_ = 0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->pull();
        ++last_visits_;
    }
}

void Tape::reset() {
    nodes_.clear();
    last_visits_ = 0;
}

}  // namespace dfer
