#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
// Eager evaluation: every op computes its value immediately and records
// parents plus a gradient rule; backward() walks the DAG in reverse
// topological order. Gradients accumulate until explicitly zeroed.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "neuroclip/errors.hpp"

namespace neuroclip::ad {

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw ShapeError("Tensor: data size does not match shape");
    }

    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t numel() const { return data_.size(); }

    // 2-d accessors; rows()/cols() only meaningful for rank-2 tensors.
    std::size_t rows() const { return shape_[0]; }
    std::size_t cols() const { return shape_[1]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& flat() { return data_; }
    const std::vector<double>& flat() const { return data_; }

    std::string shape_str() const;
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  private:
    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return s.empty() ? 0 : n;
    }
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by grad_ref()
    bool requires_grad = false;
    bool grad_allocated = false;
    std::string name;  // nonempty for parameters
    std::vector<NodePtr> parents;
    // Accumulates this node's grad into its parents' grads.
    std::function<void(Node&)> backward_fn;

    Tensor& grad_ref() {
        if (!grad_allocated) {
            grad = Tensor::zeros_like(value);
            grad_allocated = true;
        }
        return grad;
    }
    void zero_grad() {
        if (grad_allocated) std::fill(grad.flat().begin(), grad.flat().end(), 0.0);
    }
};

NodePtr constant(Tensor v);
NodePtr parameter(Tensor v, std::string name);

// All binary elementwise ops accept equal shapes or a [1x1] scalar on either side.
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
// Broadcast adds for bias terms on [R x C] inputs.
NodePtr add_rowvec(const NodePtr& x, const NodePtr& bias);  // bias [1 x C], added to each row
NodePtr add_colvec(const NodePtr& x, const NodePtr& bias);  // bias [R x 1], added to each column

NodePtr matmul(const NodePtr& a, const NodePtr& b);
// x [C_in x T], w [C_out x C_in x K]; zero padding both sides; output [C_out x T_out],
// T_out = (T + 2*padding - K)/stride + 1.
NodePtr conv1d(const NodePtr& x, const NodePtr& w, std::size_t stride, std::size_t padding);

NodePtr relu(const NodePtr& x);
NodePtr gelu(const NodePtr& x);  // exact Gaussian-CDF form
NodePtr silu(const NodePtr& x);
NodePtr vexp(const NodePtr& x);
NodePtr vlog(const NodePtr& x);  // domain error on x <= 0
NodePtr scale(const NodePtr& x, double c);

NodePtr transpose(const NodePtr& x);
NodePtr mean_axis(const NodePtr& x, std::size_t axis);  // axis 0 -> [1 x C]; axis 1 -> [R x 1]
NodePtr sum_all(const NodePtr& x);                      // [1 x 1]
NodePtr softmax(const NodePtr& x, std::size_t axis);    // max-subtracted
NodePtr l2_normalize(const NodePtr& x, std::size_t axis);  // zero vectors map to zero
NodePtr concat(const std::vector<NodePtr>& xs, std::size_t axis);
NodePtr slice(const NodePtr& x, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);

// Mean softmax cross-entropy of logits rows against integer labels; stable (max-subtraction).
NodePtr cross_entropy_logits(const NodePtr& logits, const std::vector<std::size_t>& labels);

// Reverse-mode sweep from a scalar loss. Grads accumulate; callers zero params between steps.
void backward(const NodePtr& loss);

// Central-difference check of backward() on a pure graph builder. Perturbs every
// entry of every input tensor; relative error denominator max(|a|,|b|,1e-8).
double finite_diff_check(
    const std::function<NodePtr(const std::vector<NodePtr>&)>& build,
    const std::vector<Tensor>& point, double eps = 1e-5);

bool all_finite(const Tensor& t);

// Plain momentum gradient descent. Parameters registered with a per-group
// learning-rate multiplier (e.g. fine-tuned encoders at 0.1x). Optional
// global-norm gradient clipping; 0 disables.
class SgdMomentum {
  public:
    SgdMomentum(double lr, double momentum, double clip_norm = 0.0)
        : lr_(lr), momentum_(momentum), clip_norm_(clip_norm) {}
    void add_param(const NodePtr& p, double lr_multiplier = 1.0);
    void step();
    void zero_grad();
    std::size_t n_params() const { return params_.size(); }

  private:
    double lr_, momentum_, clip_norm_;
    struct Entry {
        NodePtr node;
        double mult;
        Tensor velocity;
    };
    std::vector<Entry> params_;
};

}  // namespace neuroclip::ad
