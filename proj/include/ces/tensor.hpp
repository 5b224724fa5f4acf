#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ces/common.hpp"

namespace ces {

// Dense 64-bit float tensor. Value-semantics handle over shared storage so
// the tape can hold references to intermediate activations.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return p_ != nullptr; }
    const std::vector<int>& shape() const { return p_->shape; }
    int64_t numel() const { return static_cast<int64_t>(p_->data.size()); }
    int dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
    // 2D helpers; a 1D tensor counts as a single row.
    int rows() const { return p_->shape.size() >= 2 ? p_->shape[0] : 1; }
    int cols() const { return p_->shape.empty() ? 1 : p_->shape.back(); }

    std::vector<double>& data() { return p_->data; }
    const std::vector<double>& data() const { return p_->data; }
    double item() const;

    bool requires_grad() const { return p_->requires_grad; }
    void set_requires_grad(bool b) { p_->requires_grad = b; }

    // Lazily allocated, zero-initialized gradient buffer.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    bool has_grad() const { return !p_->grad.empty(); }
    void zero_grad();

    bool same_storage(const Tensor& o) const { return p_ == o.p_; }

private:
    struct Data {
        std::vector<int> shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Data> p_;
};

// Ignore sentinel for classification targets (masked-LM labels at
// unselected positions). Deliberately not a vocabulary id.
constexpr int kIgnoreLabel = -1;

struct AttnSpan {
    int q_off;
    int q_len;
    int kv_off;
    int kv_len;
};

// Tape of operations over tensors. A graph and its tensors are confined to
// one thread; distinct graphs may run concurrently. Create a fresh graph
// per forward pass; backward may be called once per graph.
class Graph {
public:
    explicit Graph(bool grad_enabled = true, bool check_finite = true)
        : grad_enabled_(grad_enabled), check_finite_(check_finite) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // c = op(a) * op(b); transposed flags interpret the argument buffer as
    // the transpose of the logical operand.
    Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double s);
    Tensor add_bias(const Tensor& x, const Tensor& bias); // bias broadcast over rows
    Tensor gelu(const Tensor& x);
    Tensor sum(const Tensor& x); // scalar
    Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      double eps = 1e-6);
    // Mean negative log-softmax over rows whose target is not kIgnoreLabel.
    Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);
    // Mean binary cross entropy on logits; labels in {0,1}.
    Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels);
    Tensor embedding(const Tensor& table, const std::vector<int>& ids);
    Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
    Tensor slice_rows(const Tensor& x, int start, int count);
    Tensor concat_rows(const std::vector<Tensor>& parts);
    Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);
    // Multi-head scaled dot-product attention over row spans. kv_valid marks
    // key/value rows that may be attended to (0 rows receive zero weight).
    Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                     const std::vector<AttnSpan>& spans,
                     const std::vector<uint8_t>& kv_valid);

    void backward(const Tensor& loss);

    bool grad_enabled() const { return grad_enabled_; }
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::function<void()> back;
    };

    Tensor record(Tensor out, const std::vector<Tensor>& inputs,
                  std::function<void()> back, const char* op);
    void check(const Tensor& t, const char* op) const;

    std::vector<Node> nodes_;
    bool grad_enabled_;
    bool check_finite_;
    bool backward_done_ = false;
};

// Max relative gradient error of a scalar-valued function against central
// finite differences, over every coordinate of every listed tensor.
// Relative error is |a - n| / max(1e-8, |a| + |n|).
double grad_check(const std::function<Tensor(Graph&)>& f,
                  const std::vector<Tensor>& params, double h = 1e-5);

} // namespace ces
