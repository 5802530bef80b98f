#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dferclip/errors.hpp"

namespace dfer {

using Index = std::int64_t;

namespace detail {

struct TensorStorage {
    std::vector<Index> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a backward pass touches it
    bool requires_grad = false;
};

}  // namespace detail

/// Dense tensor of 64-bit floats, row-major flat storage, value-semantic
/// handle over shared storage so taped operations can reference their
/// inputs after the fact. Rank 0 is a scalar.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<Index> shape, bool requires_grad = false);

    static Tensor zeros(std::vector<Index> shape, bool requires_grad = false);
    static Tensor full(std::vector<Index> shape, double v, bool requires_grad = false);
    static Tensor from_values(std::vector<Index> shape, std::vector<double> v,
                              bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return s_ != nullptr; }
    const std::vector<Index>& shape() const { return s_->shape; }
    int rank() const { return static_cast<int>(s_->shape.size()); }
    Index dim(int i) const { return s_->shape.at(static_cast<size_t>(i)); }
    Index size() const { return static_cast<Index>(s_->value.size()); }
    Index rows() const;  // rank-2 only
    Index cols() const;

    double* data() { return s_->value.data(); }
    const double* data() const { return s_->value.data(); }
    std::vector<double>& values() { return s_->value; }
    const std::vector<double>& values() const { return s_->value; }

    double& at(Index flat) { return s_->value[static_cast<size_t>(flat)]; }
    double at(Index flat) const { return s_->value[static_cast<size_t>(flat)]; }
    double& operator()(Index r, Index c) { return s_->value[static_cast<size_t>(r * cols() + c)]; }
    double operator()(Index r, Index c) const {
        return s_->value[static_cast<size_t>(r * cols() + c)];
    }
    double item() const;  // scalar only

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool rg) { s_->requires_grad = rg; }

    bool has_grad() const { return s_ && !s_->grad.empty(); }
    const std::vector<double>& grad() const;
    std::vector<double>& grad();
    void zero_grad() { s_->grad.clear(); }

    /// True when both handles refer to the same storage object.
    bool same_storage(const Tensor& other) const { return s_ == other.s_; }

    std::shared_ptr<detail::TensorStorage> storage() const { return s_; }

private:
    std::shared_ptr<detail::TensorStorage> s_;
};

std::string shape_str(const std::vector<Index>& shape);
Index shape_numel(const std::vector<Index>& shape);

/// Ordered record of executed operations. Each node carries a pull function
/// that propagates the output gradient to the node's inputs; backward()
/// replays the record in reverse, visiting each node exactly once.
class Tape {
public:
    static Tape& active();

    bool recording() const { return no_grad_depth_ == 0; }

    void record(std::vector<std::shared_ptr<detail::TensorStorage>> touched,
                std::function<void()> pull);

    /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
    /// of every tensor touched by this tape are freshly (re)computed; frozen
    /// tensors (requires_grad == false) are never written to.
    void backward(const Tensor& loss);

    void reset();

    size_t size() const { return nodes_.size(); }
    size_t last_backward_visits() const { return last_visits_; }

private:
    friend class NoGradGuard;

    struct Node {
        std::vector<std::shared_ptr<detail::TensorStorage>> touched;
        std::function<void()> pull;
    };
    std::vector<Node> nodes_;
    size_t last_visits_ = 0;
    int no_grad_depth_ = 0;
};

/// Scope guard that suspends tape recording (evaluation, finite differences).
class NoGradGuard {
public:
    NoGradGuard() { ++Tape::active().no_grad_depth_; }
    ~NoGradGuard() { --Tape::active().no_grad_depth_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

}  // namespace dfer
