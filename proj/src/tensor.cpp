#include "unic/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "unic/rng.hpp"

namespace unic {

namespace {

thread_local Graph* t_current_graph = nullptr;
thread_local int t_nograd_depth = 0;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double phi_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double phi_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

void ensure_grad(detail::TensorNode* n) {
    if (n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Bias-style broadcast: b is a length-n vector (or 1-by-n) added across the
// rows of an m-by-n matrix.
bool row_broadcastable(const Shape& a, const Shape& b) {
    if (a.empty() || b.empty()) return false;
    std::size_t bn = (b.size() == 1) ? b[0]
                     : (b.size() == 2 && b[0] == 1) ? b[1]
                                                    : 0;
    if (bn == 0) return false;
    return a.size() == 2 && a[1] == bn;
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

// --- Tensor -----------------------------------------------------------

Tensor Tensor::from(std::vector<double> values, Shape shape, bool requires_grad) {
    if (shape_size(shape) != values.size())
        throw DimensionError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape));
    for (std::size_t d : shape)
        if (d == 0) throw DimensionError("tensor: zero dimension in " + shape_str(shape));
    auto n = std::make_shared<detail::TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(shape_size(shape), value);
    return from(std::move(v), std::move(shape), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({value}, {1}, requires_grad);
}

std::size_t Tensor::rows() const {
    if (shape().size() != 2) throw DimensionError("rows(): tensor is not 2-d");
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (shape().size() != 2) throw DimensionError("cols(): tensor is not 2-d");
    return shape()[1];
}

double Tensor::value() const {
    if (size() != 1) throw ContractError("value(): tensor is not scalar, shape " +
                                         shape_str(shape()));
    return node_->values[0];
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad(): no gradient populated");
    return node_->grad;
}

// --- Graph ------------------------------------------------------------

Graph* Graph::current() { return t_current_graph; }

GraphScope::GraphScope(Graph& g) : prev_(t_current_graph) { t_current_graph = &g; }
GraphScope::~GraphScope() { t_current_graph = prev_; }

NoGradScope::NoGradScope() { ++t_nograd_depth; }
NoGradScope::~NoGradScope() { --t_nograd_depth; }

bool grad_recording_enabled() { return t_nograd_depth == 0; }

std::uint64_t Graph::next_serial() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

int Graph::register_node(const std::shared_ptr<detail::TensorNode>& n) {
    if (n->graph_serial != serial_) {
        n->graph_serial = serial_;
        n->id = static_cast<int>(nodes_.size());
        n->grad.clear();
        nodes_.push_back(n);
    }
    return n->id;
}

void Graph::record(const char* op, const std::vector<Tensor>& inputs,
                   const Tensor& output, std::function<void()> forward,
                   std::function<void()> backward) {
    Record r;
    r.op = op;
    for (const Tensor& t : inputs) r.inputs.push_back(register_node(t.node()));
    r.output = register_node(output.node());
    r.forward = std::move(forward);
    r.backward = std::move(backward);
    records_.push_back(std::move(r));
}

void Graph::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward: loss is not scalar, shape " +
                            shape_str(loss.shape()));
    if (loss.node()->graph_serial != serial_)
        throw ContractError("backward: loss does not belong to this graph");
    if (backward_ran_) throw ContractError("backward: graph already swept");
    backward_ran_ = true;
    loss.node()->grad.assign(1, 1.0);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (!nodes_[static_cast<std::size_t>(it->output)]->grad.empty() && it->backward)
            it->backward();
    }
}

void Graph::replay() {
    for (auto& r : records_) r.forward();
}

// --- op plumbing ------------------------------------------------------

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

Tensor make_output(Shape shape, bool track) {
    const std::size_t n = shape_size(shape);
    Tensor out = Tensor::from(std::vector<double>(n, 0.0), std::move(shape), false);
    out.node()->requires_grad = track;
    return out;
}

bool should_track(std::initializer_list<const Tensor*> inputs) {
    if (!t_current_graph || t_nograd_depth > 0) return false;
    for (const Tensor* t : inputs)
        if ((*t).requires_grad()) return true;
    return false;
}

void finish_op(const char* name, const std::vector<Tensor>& inputs,
               const Tensor& out, std::function<void()> fwd,
               std::function<void()> bwd, bool track) {
    fwd();
    if (track) t_current_graph->record(name, inputs, out, std::move(fwd), std::move(bwd));
}

}  // namespace

// --- matmul -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    bool track = should_track({&a, &b});
    Tensor out = make_output({m, n}, track);
    NodePtr an = a.node(), bn = b.node(), on = out.node();

    auto fwd = [an, bn, on, m, k, n]() {
        const double* A = an->values.data();
        const double* B = bn->values.data();
        double* C = on->values.data();
        std::fill(C, C + m * n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double* Ai = A + i * k;
            double* Ci = C + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = Ai[p];
                const double* Bp = B + p * n;
                for (std::size_t j = 0; j < n; ++j) Ci[j] += aip * Bp[j];
            }
        }
    };
    auto bwd = [an, bn, on, m, k, n]() {
        const double* G = on->grad.data();
        if (an->requires_grad) {
            ensure_grad(an.get());
            double* dA = an->grad.data();
            const double* B = bn->values.data();
            // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* Gi = G + i * n;
                    const double* Bp = B + p * n;
                    for (std::size_t j = 0; j < n; ++j) acc += Gi[j] * Bp[j];
                    dA[i * k + p] += acc;
                }
        }
        if (bn->requires_grad) {
            ensure_grad(bn.get());
            double* dB = bn->grad.data();
            const double* A = an->values.data();
            // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i) {
                const double* Ai = A + i * k;
                const double* Gi = G + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = Ai[p];
                    double* dBp = dB + p * n;
                    for (std::size_t j = 0; j < n; ++j) dBp[j] += aip * Gi[j];
                }
            }
        }
    };
    finish_op("matmul", {a, b}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

// --- elementwise ------------------------------------------------------

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise(const char* name, EwKind kind, const Tensor& a, const Tensor& b) {
    const bool bcast = !same_shape(a.shape(), b.shape());
    if (bcast && !row_broadcastable(a.shape(), b.shape()))
        throw DimensionError(std::string(name) + ": shapes " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()) + " do not match");
    bool track = should_track({&a, &b});
    Tensor out = make_output(a.shape(), track);
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    const std::size_t total = a.size();
    const std::size_t bw = bcast ? b.size() : 0;  // broadcast width

    auto fwd = [an, bn, on, kind, total, bw]() {
        const double* A = an->values.data();
        const double* B = bn->values.data();
        double* O = on->values.data();
        for (std::size_t i = 0; i < total; ++i) {
            const double bi = bw ? B[i % bw] : B[i];
            switch (kind) {
                case EwKind::Add: O[i] = A[i] + bi; break;
                case EwKind::Sub: O[i] = A[i] - bi; break;
                case EwKind::Mul: O[i] = A[i] * bi; break;
            }
        }
    };
    auto bwd = [an, bn, on, kind, total, bw]() {
        const double* G = on->grad.data();
        if (an->requires_grad) {
            ensure_grad(an.get());
            double* dA = an->grad.data();
            const double* B = bn->values.data();
            for (std::size_t i = 0; i < total; ++i) {
                switch (kind) {
                    case EwKind::Add: dA[i] += G[i]; break;
                    case EwKind::Sub: dA[i] += G[i]; break;
                    case EwKind::Mul: dA[i] += G[i] * (bw ? B[i % bw] : B[i]); break;
                }
            }
        }
        if (bn->requires_grad) {
            ensure_grad(bn.get());
            double* dB = bn->grad.data();
            const double* A = an->values.data();
            for (std::size_t i = 0; i < total; ++i) {
                const std::size_t j = bw ? i % bw : i;
                switch (kind) {
                    case EwKind::Add: dB[j] += G[i]; break;
                    case EwKind::Sub: dB[j] -= G[i]; break;
                    case EwKind::Mul: dB[j] += G[i] * A[i]; break;
                }
            }
        }
    };
    finish_op(name, {a, b}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise("add", EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise("sub", EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise("mul", EwKind::Mul, a, b); }

Tensor div(const Tensor& a, const Tensor& b) {
    if (!same_shape(a.shape(), b.shape()))
        throw DimensionError("div: shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " do not match");
    bool track = should_track({&a, &b});
    Tensor out = make_output(a.shape(), track);
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    const std::size_t total = a.size();

    auto fwd = [an, bn, on, total]() {
        for (std::size_t i = 0; i < total; ++i)
            on->values[i] = an->values[i] / bn->values[i];
    };
    auto bwd = [an, bn, on, total]() {
        const double* G = on->grad.data();
        if (an->requires_grad) {
            ensure_grad(an.get());
            for (std::size_t i = 0; i < total; ++i)
                an->grad[i] += G[i] / bn->values[i];
        }
        if (bn->requires_grad) {
            ensure_grad(bn.get());
            for (std::size_t i = 0; i < total; ++i) {
                const double b = bn->values[i];
                bn->grad[i] -= G[i] * an->values[i] / (b * b);
            }
        }
    };
    finish_op("div", {a, b}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

namespace {

Tensor unary(const char* name, const Tensor& a,
             const std::function<double(double)>& f,
             const std::function<double(double, double)>& dfdx /* (x, y) */) {
    bool track = should_track({&a});
    Tensor out = make_output(a.shape(), track);
    NodePtr an = a.node(), on = out.node();
    const std::size_t total = a.size();
    auto fwd = [an, on, total, f]() {
        for (std::size_t i = 0; i < total; ++i) on->values[i] = f(an->values[i]);
    };
    auto bwd = [an, on, total, dfdx]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < total; ++i)
            an->grad[i] += on->grad[i] * dfdx(an->values[i], on->values[i]);
    };
    finish_op(name, {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

}  // namespace

Tensor scale(const Tensor& a, double c) {
    return unary("scale", a, [c](double x) { return x * c; },
                 [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary("add_scalar", a, [c](double x) { return x + c; },
                 [](double, double) { return 1.0; });
}

Tensor gelu(const Tensor& a) {
    return unary("gelu", a, [](double x) { return x * phi_cdf(x); },
                 [](double x, double) { return phi_cdf(x) + x * phi_pdf(x); });
}

Tensor sqrt(const Tensor& a) {
    return unary("sqrt", a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}

Tensor abs(const Tensor& a) {
    return unary("abs", a, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp_min(const Tensor& a, double c) {
    return unary("clamp_min", a, [c](double x) { return x > c ? x : c; },
                 [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

// --- layer norm -------------------------------------------------------

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    const Shape& s = a.shape();
    const std::size_t d = s.back();
    if (d == 0) throw DimensionError("layer_norm: empty last axis");
    if (gamma.size() != d || beta.size() != d)
        throw DimensionError("layer_norm: affine size " + std::to_string(gamma.size()) +
                             " does not match feature width " + std::to_string(d));
    const std::size_t rows = a.size() / d;
    bool track = should_track({&a, &gamma, &beta});
    Tensor out = make_output(s, track);
    NodePtr an = a.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    // mean and 1/sqrt(var+eps) per row, saved for backward
    auto stats = std::make_shared<std::vector<double>>(rows * 2);

    auto fwd = [an, gn, bn, on, stats, rows, d, eps]() {
        const double* X = an->values.data();
        const double* G = gn->values.data();
        const double* B = bn->values.data();
        double* O = on->values.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* x = X + r * d;
            double m = 0.0;
            for (std::size_t j = 0; j < d; ++j) m += x[j];
            m /= static_cast<double>(d);
            double v = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double c = x[j] - m;
                v += c * c;
            }
            v /= static_cast<double>(d);
            const double inv = 1.0 / std::sqrt(v + eps);
            (*stats)[2 * r] = m;
            (*stats)[2 * r + 1] = inv;
            double* o = O + r * d;
            for (std::size_t j = 0; j < d; ++j) o[j] = (x[j] - m) * inv * G[j] + B[j];
        }
    };
    auto bwd = [an, gn, bn, on, stats, rows, d]() {
        const double* X = an->values.data();
        const double* G = gn->values.data();
        const double* GO = on->grad.data();
        if (gn->requires_grad) ensure_grad(gn.get());
        if (bn->requires_grad) ensure_grad(bn.get());
        if (an->requires_grad) ensure_grad(an.get());
        for (std::size_t r = 0; r < rows; ++r) {
            const double m = (*stats)[2 * r];
            const double inv = (*stats)[2 * r + 1];
            const double* x = X + r * d;
            const double* go = GO + r * d;
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double xhat = (x[j] - m) * inv;
                const double g = go[j] * G[j];
                sum_g += g;
                sum_gx += g * xhat;
                if (gn->requires_grad) gn->grad[j] += go[j] * xhat;
                if (bn->requires_grad) bn->grad[j] += go[j];
            }
            if (an->requires_grad) {
                const double nd = static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    const double xhat = (x[j] - m) * inv;
                    const double g = go[j] * G[j];
                    an->grad[r * d + j] += inv * (g - sum_g / nd - xhat * sum_gx / nd);
                }
            }
        }
    };
    finish_op("layer_norm", {a, gamma, beta}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

// --- softmax / cross entropy -----------------------------------------

Tensor softmax(const Tensor& a) {
    const Shape& s = a.shape();
    const std::size_t n = s.back();
    if (n == 0) throw DimensionError("softmax: empty last axis");
    const std::size_t rows = a.size() / n;
    bool track = should_track({&a});
    Tensor out = make_output(s, track);
    NodePtr an = a.node(), on = out.node();

    auto fwd = [an, on, rows, n]() {
        const double* X = an->values.data();
        double* O = on->values.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* x = X + r * n;
            double* o = O + r * n;
            double mx = x[0];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
            double z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                o[j] = std::exp(x[j] - mx);
                z += o[j];
            }
            for (std::size_t j = 0; j < n; ++j) o[j] /= z;
        }
    };
    auto bwd = [an, on, rows, n]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        const double* S = on->values.data();
        const double* G = on->grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* s_ = S + r * n;
            const double* g = G + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * s_[j];
            for (std::size_t j = 0; j < n; ++j)
                an->grad[r * n + j] += s_[j] * (g[j] - dot);
        }
    };
    finish_op("softmax", {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
    const std::size_t n = logits.size();
    if (logits.shape().size() > 2 ||
        (logits.shape().size() == 2 && logits.shape()[0] != 1))
        throw DimensionError("cross_entropy: logits must be a single row, got " +
                             shape_str(logits.shape()));
    if (label >= n)
        throw IndexError("cross_entropy: label " + std::to_string(label) +
                         " out of range for " + std::to_string(n) + " classes");
    bool track = should_track({&logits});
    Tensor out = make_output({1}, track);
    NodePtr ln = logits.node(), on = out.node();

    auto fwd = [ln, on, n, label]() {
        const double* x = ln->values.data();
        double mx = x[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
        on->values[0] = mx + std::log(z) - x[label];
    };
    auto bwd = [ln, on, n, label]() {
        if (!ln->requires_grad) return;
        ensure_grad(ln.get());
        const double g = on->grad[0];
        const double* x = ln->values.data();
        double mx = x[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
        for (std::size_t j = 0; j < n; ++j) {
            double p = std::exp(x[j] - mx) / z;
            ln->grad[j] += g * (p - (j == label ? 1.0 : 0.0));
        }
    };
    finish_op("cross_entropy", {logits}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

// --- reductions -------------------------------------------------------

Tensor sum(const Tensor& a) {
    bool track = should_track({&a});
    Tensor out = make_output({1}, track);
    NodePtr an = a.node(), on = out.node();
    const std::size_t total = a.size();
    auto fwd = [an, on, total]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < total; ++i) acc += an->values[i];
        on->values[0] = acc;
    };
    auto bwd = [an, on, total]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        const double g = on->grad[0];
        for (std::size_t i = 0; i < total; ++i) an->grad[i] += g;
    };
    finish_op("sum", {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

Tensor mean(const Tensor& a) {
    bool track = should_track({&a});
    Tensor out = make_output({1}, track);
    NodePtr an = a.node(), on = out.node();
    const std::size_t total = a.size();
    auto fwd = [an, on, total]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < total; ++i) acc += an->values[i];
        on->values[0] = acc / static_cast<double>(total);
    };
    auto bwd = [an, on, total]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        const double g = on->grad[0] / static_cast<double>(total);
        for (std::size_t i = 0; i < total; ++i) an->grad[i] += g;
    };
    finish_op("mean", {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

namespace {

Tensor reduce_axis(const char* name, const Tensor& a, int axis, bool take_mean) {
    if (a.shape().size() != 2)
        throw DimensionError(std::string(name) + ": axis reduction needs a 2-d tensor, got " +
                             shape_str(a.shape()));
    if (axis != 0 && axis != 1)
        throw DimensionError(std::string(name) + ": invalid axis " + std::to_string(axis));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    const std::size_t out_len = (axis == 0) ? n : m;
    const double cnt = static_cast<double>(axis == 0 ? m : n);
    bool track = should_track({&a});
    Tensor out = make_output({out_len}, track);
    NodePtr an = a.node(), on = out.node();

    auto fwd = [an, on, m, n, axis, take_mean, cnt]() {
        const double* A = an->values.data();
        double* O = on->values.data();
        if (axis == 0) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i) acc += A[i * n + j];
                O[j] = take_mean ? acc / cnt : acc;
            }
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += A[i * n + j];
                O[i] = take_mean ? acc / cnt : acc;
            }
        }
    };
    auto bwd = [an, on, m, n, axis, take_mean, cnt]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        const double* G = on->grad.data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double g = (axis == 0) ? G[j] : G[i];
                an->grad[i * n + j] += take_mean ? g / cnt : g;
            }
    };
    finish_op(name, {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

}  // namespace

Tensor sum(const Tensor& a, int axis) { return reduce_axis("sum_axis", a, axis, false); }
Tensor mean(const Tensor& a, int axis) { return reduce_axis("mean_axis", a, axis, true); }

// --- shape ops --------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    bool track = should_track({&a});
    Tensor out = make_output(shape, track);
    NodePtr an = a.node(), on = out.node();
    const std::size_t total = a.size();
    auto fwd = [an, on]() { on->values = an->values; };
    auto bwd = [an, on, total]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < total; ++i) an->grad[i] += on->grad[i];
    };
    finish_op("reshape", {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2)
        throw DimensionError("transpose: needs a 2-d tensor, got " + shape_str(a.shape()));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    bool track = should_track({&a});
    Tensor out = make_output({n, m}, track);
    NodePtr an = a.node(), on = out.node();
    auto fwd = [an, on, m, n]() {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                on->values[j * m + i] = an->values[i * n + j];
    };
    auto bwd = [an, on, m, n]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                an->grad[i * n + j] += on->grad[j * m + i];
    };
    finish_op("transpose", {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const std::size_t rank = parts[0].shape().size();
    if (rank == 0 || rank > 2 || axis < 0 || static_cast<std::size_t>(axis) >= rank)
        throw DimensionError("concat: invalid axis " + std::to_string(axis) +
                             " for rank " + std::to_string(rank));
    Shape shape = parts[0].shape();
    std::size_t along = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = 1; i < parts.size(); ++i) {
        Shape s = parts[i].shape();
        if (s.size() != rank)
            throw DimensionError("concat: rank mismatch");
        for (std::size_t d = 0; d < rank; ++d)
            if (d != static_cast<std::size_t>(axis) && s[d] != shape[d])
                throw DimensionError("concat: shape " + shape_str(s) +
                                     " incompatible with " + shape_str(shape));
        along += s[static_cast<std::size_t>(axis)];
    }
    shape[static_cast<std::size_t>(axis)] = along;

    bool track = false;
    if (t_current_graph && t_nograd_depth == 0)
        for (const Tensor& p : parts)
            if (p.requires_grad()) track = true;
    Tensor out = make_output(shape, track);
    NodePtr on = out.node();
    std::vector<NodePtr> ins;
    for (const Tensor& p : parts) ins.push_back(p.node());

    const std::size_t out_cols = (rank == 2) ? shape[1] : 1;
    auto fwd = [ins, on, axis, rank, out_cols]() {
        if (rank == 1 || axis == 0) {
            std::size_t off = 0;
            for (const NodePtr& p : ins) {
                std::copy(p->values.begin(), p->values.end(), on->values.begin() + off);
                off += p->values.size();
            }
        } else {  // axis 1, rank 2
            std::size_t col_off = 0;
            for (const NodePtr& p : ins) {
                const std::size_t pc = p->shape[1], pr = p->shape[0];
                for (std::size_t i = 0; i < pr; ++i)
                    std::copy(p->values.begin() + i * pc, p->values.begin() + (i + 1) * pc,
                              on->values.begin() + i * out_cols + col_off);
                col_off += pc;
            }
        }
    };
    auto bwd = [ins, on, axis, rank, out_cols]() {
        if (rank == 1 || axis == 0) {
            std::size_t off = 0;
            for (const NodePtr& p : ins) {
                if (p->requires_grad) {
                    ensure_grad(p.get());
                    for (std::size_t i = 0; i < p->values.size(); ++i)
                        p->grad[i] += on->grad[off + i];
                }
                off += p->values.size();
            }
        } else {
            std::size_t col_off = 0;
            for (const NodePtr& p : ins) {
                const std::size_t pc = p->shape[1], pr = p->shape[0];
                if (p->requires_grad) {
                    ensure_grad(p.get());
                    for (std::size_t i = 0; i < pr; ++i)
                        for (std::size_t j = 0; j < pc; ++j)
                            p->grad[i * pc + j] += on->grad[i * out_cols + col_off + j];
                }
                col_off += pc;
            }
        }
    };
    fwd();
    if (track) t_current_graph->record("concat", parts, out, std::move(fwd), std::move(bwd));
    return out;
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len) {
    const std::size_t rank = a.shape().size();
    if (rank == 0 || rank > 2 || axis < 0 || static_cast<std::size_t>(axis) >= rank)
        throw DimensionError("slice: invalid axis " + std::to_string(axis) + " for rank " +
                             std::to_string(rank));
    const std::size_t extent = a.shape()[static_cast<std::size_t>(axis)];
    if (len == 0 || start + len > extent)
        throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") exceeds extent " +
                             std::to_string(extent));
    Shape shape = a.shape();
    shape[static_cast<std::size_t>(axis)] = len;
    bool track = should_track({&a});
    Tensor out = make_output(shape, track);
    NodePtr an = a.node(), on = out.node();
    const std::size_t cols = (rank == 2) ? a.shape()[1] : 1;
    const std::size_t rows = a.shape()[0];

    auto fwd = [an, on, axis, rank, start, len, cols, rows]() {
        if (rank == 1 || axis == 0) {
            std::copy(an->values.begin() + start * cols,
                      an->values.begin() + (start + len) * cols, on->values.begin());
        } else {
            for (std::size_t i = 0; i < rows; ++i)
                std::copy(an->values.begin() + i * cols + start,
                          an->values.begin() + i * cols + start + len,
                          on->values.begin() + i * len);
        }
    };
    auto bwd = [an, on, axis, rank, start, len, cols, rows]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        if (rank == 1 || axis == 0) {
            for (std::size_t i = 0; i < len * cols; ++i)
                an->grad[start * cols + i] += on->grad[i];
        } else {
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < len; ++j)
                    an->grad[i * cols + start + j] += on->grad[i * len + j];
        }
    };
    finish_op("slice", {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

Tensor take_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
    if (a.shape().size() != 2)
        throw DimensionError("take_rows: needs a 2-d tensor, got " + shape_str(a.shape()));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    for (std::size_t r : rows)
        if (r >= m)
            throw IndexError("take_rows: row " + std::to_string(r) + " out of range " +
                             std::to_string(m));
    bool track = should_track({&a});
    Tensor out = make_output({rows.size(), n}, track);
    NodePtr an = a.node(), on = out.node();
    auto idx = std::make_shared<std::vector<std::size_t>>(rows);

    auto fwd = [an, on, idx, n]() {
        for (std::size_t i = 0; i < idx->size(); ++i)
            std::copy(an->values.begin() + (*idx)[i] * n,
                      an->values.begin() + ((*idx)[i] + 1) * n, on->values.begin() + i * n);
    };
    auto bwd = [an, on, idx, n]() {
        if (!an->requires_grad) return;
        ensure_grad(an.get());
        for (std::size_t i = 0; i < idx->size(); ++i)
            for (std::size_t j = 0; j < n; ++j)
                an->grad[(*idx)[i] * n + j] += on->grad[i * n + j];
    };
    finish_op("take_rows", {a}, out, std::move(fwd), std::move(bwd), track);
    return out;
}

// --- gradient checking ------------------------------------------------

namespace {

double numeric_partial(const std::function<Tensor(const Tensor&)>& f,
                       const Tensor& x, std::size_t i, double h) {
    NoGradScope ng;
    std::vector<double> v = x.values();
    v[i] += h;
    double up = f(Tensor::from(v, x.shape())).value();
    v[i] -= 2.0 * h;
    double dn = f(Tensor::from(v, x.shape())).value();
    return (up - dn) / (2.0 * h);
}

double rel_err(double a, double n) {
    return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), 1e-8});
}

std::vector<double> analytic_gradient(const std::function<Tensor(const Tensor&)>& f,
                                      const Tensor& x) {
    Tensor leaf = Tensor::from(x.values(), x.shape(), true);
    Graph g;
    Tensor y;
    {
        GraphScope scope(g);
        y = f(leaf);
    }
    if (y.size() != 1) throw ContractError("check_gradient: f must be scalar-valued");
    g.backward(y);
    if (!leaf.has_grad()) return std::vector<double>(x.size(), 0.0);
    return leaf.grad();
}

}  // namespace

double check_gradient(const std::function<Tensor(const Tensor&)>& f,
                      const Tensor& x, double h) {
    std::vector<double> analytic = analytic_gradient(f, x);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        worst = std::max(worst, rel_err(analytic[i], numeric_partial(f, x, i, h)));
    return worst;
}

double check_gradient_sampled(const std::function<Tensor(const Tensor&)>& f,
                              const Tensor& x, double h, std::size_t n_coords,
                              std::uint64_t seed) {
    std::vector<double> analytic = analytic_gradient(f, x);
    double worst = 0.0;
    for (std::size_t k = 0; k < n_coords; ++k) {
        std::size_t i = uniform_index(hash_key({seed, k}), x.size());
        worst = std::max(worst, rel_err(analytic[i], numeric_partial(f, x, i, h)));
    }
    return worst;
}

}  // namespace unic
