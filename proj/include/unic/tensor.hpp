#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "unic/errors.hpp"

namespace unic {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

class Graph;

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until backward touches it
    bool requires_grad = false;
    std::uint64_t graph_serial = 0;  // graph the node is registered in
    int id = -1;                     // id within that graph
};

}  // namespace detail

// Row-major f64 tensor handle. Values are immutable once the tensor has
// entered a graph; optimizer updates build the next step's parameter
// tensors instead of writing in place.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(std::vector<double> values, Shape shape,
                       bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->values.size(); }
    std::size_t rows() const;  // 2-d convenience
    std::size_t cols() const;
    const std::vector<double>& values() const { return node_->values; }
    double value() const;  // scalar tensors only
    bool requires_grad() const { return node_->requires_grad; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const std::vector<double>& grad() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    friend class Graph;
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

// Tape of recorded operations. Ops append records in execution order, which
// is a topological order by construction; backward sweeps the tape in
// reverse, so gradient accumulation order is fixed by insertion order.
class Graph {
public:
    struct Record {
        const char* op;
        std::vector<int> inputs;
        int output;
        std::function<void()> forward;   // recompute output values
        std::function<void()> backward;  // accumulate input grads
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph* current();

    std::size_t num_ops() const { return records_.size(); }
    const Record& op(std::size_t i) const { return records_[i]; }

    // Reverse sweep from a scalar loss; populates grad on every
    // requires_grad tensor the loss depends on. One sweep per graph.
    void backward(const Tensor& loss);

    // Re-executes all recorded forwards in order. With unchanged leaf
    // values this reproduces every recorded output bitwise.
    void replay();

    void record(const char* op, const std::vector<Tensor>& inputs,
                const Tensor& output, std::function<void()> forward,
                std::function<void()> backward);

private:
    friend class GraphScope;
    int register_node(const std::shared_ptr<detail::TensorNode>& n);

    std::uint64_t serial_ = next_serial();
    static std::uint64_t next_serial();

    std::vector<Record> records_;
    std::vector<std::shared_ptr<detail::TensorNode>> nodes_;
    bool backward_ran_ = false;
};

// Activates a graph for the current thread while in scope.
class GraphScope {
public:
    explicit GraphScope(Graph& g);
    ~GraphScope();
    GraphScope(const GraphScope&) = delete;
    GraphScope& operator=(const GraphScope&) = delete;

private:
    Graph* prev_;
};

// Suspends recording (teacher forwards, numeric probes).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;
};

bool grad_recording_enabled();

// --- operations ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise; b may also be a length-n row vector broadcast over the rows
// of an m-by-n a (bias style). Broadcast gradients are summed over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // same shape only

Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor gelu(const Tensor& a);  // exact erf form, x * Phi(x)
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);                 // subgradient 0 at 0
Tensor clamp_min(const Tensor& a, double c); // zero gradient in the floor

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps);

Tensor softmax(const Tensor& a);  // over the last axis
Tensor cross_entropy(const Tensor& logits, std::size_t label);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, int axis);   // 2-d, axis 0 or 1
Tensor mean(const Tensor& a, int axis);

Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // 2-d
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len);
Tensor take_rows(const Tensor& a, const std::vector<std::size_t>& rows);

// Central-difference gradient check for a scalar-valued expression f(x).
// Returns the worst relative error max |analytic - numeric| /
// max(|analytic|, |numeric|, 1e-8) over all coordinates. f must be a pure
// function of its argument's values.
double check_gradient(const std::function<Tensor(const Tensor&)>& f,
                      const Tensor& x, double h);

// Same check on a random subset of coordinates (for large parameter sets).
double check_gradient_sampled(const std::function<Tensor(const Tensor&)>& f,
                              const Tensor& x, double h,
                              std::size_t n_coords, std::uint64_t seed);

}  // namespace unic
