#pragma once

#include "gazevqa/errors.hpp"
#include "gazevqa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

// Small reverse-mode autodiff over dense row-major matrices. Sized for the
// desk-scale models in this project: dynamic graphs are rebuilt per step and
// freed afterwards; parameters are persistent leaf nodes shared between
// graphs. Instantiated at float for training/inference and at double for
// finite-difference checks.
namespace gazevqa::nn {

template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, T(0)) {}

    static Mat full(int r, int c, T x) {
        Mat m(r, c);
        std::fill(m.v.begin(), m.v.end(), x);
        return m;
    }

    T& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    T operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    template <typename U>
    Mat<U> cast() const {
        Mat<U> out(rows, cols);
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.v[i] = static_cast<U>(v[i]);
        }
        return out;
    }
};

template <typename T>
struct Node {
    Mat<T> val;
    Mat<T> grad;
    bool requires_grad = false;

    void ensure_grad() {
        if (!grad.same_shape(val)) {
            grad = Mat<T>(val.rows, val.cols);
        }
    }
};

template <typename T>
using Ref = std::shared_ptr<Node<T>>;

// Persistent trainable tensor plus its optimizer state. Gradient and Adam
// buffers are allocated on first use, so inference-only and counting paths
// pay for the values alone.
template <typename T>
struct Parameter {
    std::string name;
    Ref<T> node;
    Mat<T> adam_m;
    Mat<T> adam_v;

    Parameter(std::string n, Mat<T> init) : name(std::move(n)), node(std::make_shared<Node<T>>()) {
        node->val = std::move(init);
        node->requires_grad = true;
    }

    Mat<T>& value() { return node->val; }
    const Mat<T>& value() const { return node->val; }
    Mat<T>& grad() { return node->grad; }
    std::size_t size() const { return node->val.size(); }

    void zero_grad() {
        node->ensure_grad();
        std::fill(node->grad.v.begin(), node->grad.v.end(), T(0));
    }
};

namespace detail {

inline void check(bool ok, const std::string& what) {
    if (!ok) {
        throw ConfigError(what);
    }
}

} // namespace detail

template <typename T>
class Graph {
public:
    // grads=false builds a forward-only graph (no tape, no grad buffers).
    explicit Graph(bool grads = true) : grads_(grads) {}

    Ref<T> leaf(Mat<T> value) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(value);
        n->requires_grad = false;
        return n;
    }

    Ref<T> param(Parameter<T>& p) { return p.node; }

    void backward(const Ref<T>& out) {
        detail::check(grads_, "backward() on a forward-only graph");
        detail::check(out->val.rows == 1 && out->val.cols == 1, "backward() expects a scalar output");
        out->ensure_grad();
        out->grad(0, 0) = T(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
            (*it)();
        }
    }

    // C = A * B
    Ref<T> matmul(const Ref<T>& a, const Ref<T>& b) {
        detail::check(a->val.cols == b->val.rows, "matmul: inner dimensions differ");
        Mat<T> out(a->val.rows, b->val.cols);
        gemm_nn(a->val, b->val, out);
        return record(std::move(out), {a, b}, [a, b](Node<T>& o) {
            if (a->requires_grad) { // dA += dC * B^T
                a->ensure_grad();
                gemm_nt_acc(o.grad, b->val, a->grad);
            }
            if (b->requires_grad) { // dB += A^T * dC
                b->ensure_grad();
                gemm_tn_acc(a->val, o.grad, b->grad);
            }
        });
    }

    // C = A * B^T
    Ref<T> matmul_nt(const Ref<T>& a, const Ref<T>& b) {
        detail::check(a->val.cols == b->val.cols, "matmul_nt: inner dimensions differ");
        Mat<T> out(a->val.rows, b->val.rows);
        gemm_nt(a->val, b->val, out);
        return record(std::move(out), {a, b}, [a, b](Node<T>& o) {
            if (a->requires_grad) { // dA += dC * B
                a->ensure_grad();
                gemm_nn_acc(o.grad, b->val, a->grad);
            }
            if (b->requires_grad) { // dB += dC^T * A
                b->ensure_grad();
                gemm_tn_acc(o.grad, a->val, b->grad);
            }
        });
    }

    Ref<T> add(const Ref<T>& a, const Ref<T>& b) {
        detail::check(a->val.same_shape(b->val), "add: shape mismatch");
        Mat<T> out = a->val;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.v[i] += b->val.v[i];
        }
        return record(std::move(out), {a, b}, [a, b](Node<T>& o) {
            if (a->requires_grad) {
                a->ensure_grad();
                axpy(T(1), o.grad, a->grad);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                axpy(T(1), o.grad, b->grad);
            }
        });
    }

    // adds a 1 x cols row vector to every row
    Ref<T> add_rowvec(const Ref<T>& a, const Ref<T>& row) {
        detail::check(row->val.rows == 1 && row->val.cols == a->val.cols, "add_rowvec: bad bias shape");
        Mat<T> out = a->val;
        for (int r = 0; r < out.rows; ++r) {
            for (int c = 0; c < out.cols; ++c) {
                out(r, c) += row->val(0, c);
            }
        }
        return record(std::move(out), {a, row}, [a, row](Node<T>& o) {
            if (a->requires_grad) {
                a->ensure_grad();
                axpy(T(1), o.grad, a->grad);
            }
            if (row->requires_grad) {
                row->ensure_grad();
                for (int r = 0; r < o.grad.rows; ++r) {
                    for (int c = 0; c < o.grad.cols; ++c) {
                        row->grad(0, c) += o.grad(r, c);
                    }
                }
            }
        });
    }

    Ref<T> mul(const Ref<T>& a, const Ref<T>& b) {
        detail::check(a->val.same_shape(b->val), "mul: shape mismatch");
        Mat<T> out = a->val;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.v[i] *= b->val.v[i];
        }
        return record(std::move(out), {a, b}, [a, b](Node<T>& o) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    a->grad.v[i] += o.grad.v[i] * b->val.v[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    b->grad.v[i] += o.grad.v[i] * a->val.v[i];
                }
            }
        });
    }

    Ref<T> scale(const Ref<T>& a, T s) {
        Mat<T> out = a->val;
        for (auto& x : out.v) {
            x *= s;
        }
        return record(std::move(out), {a}, [a, s](Node<T>& o) {
            if (a->requires_grad) {
                a->ensure_grad();
                axpy(s, o.grad, a->grad);
            }
        });
    }

    Ref<T> gelu(const Ref<T>& a) {
        Mat<T> out = a->val;
        for (auto& x : out.v) {
            x = T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475244)));
        }
        return record(std::move(out), {a}, [a](Node<T>& o) {
            if (!a->requires_grad) {
                return;
            }
            a->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const T x = a->val.v[i];
                const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
                const T pdf = T(0.3989422804014326779) * std::exp(T(-0.5) * x * x);
                a->grad.v[i] += o.grad.v[i] * (cdf + x * pdf);
            }
        });
    }

    // row-wise layer norm with affine parameters (gamma, beta are 1 x cols)
    Ref<T> layer_norm(const Ref<T>& x, const Ref<T>& gamma, const Ref<T>& beta, T eps) {
        const int d = x->val.cols;
        detail::check(gamma->val.rows == 1 && gamma->val.cols == d, "layer_norm: bad gamma shape");
        detail::check(beta->val.rows == 1 && beta->val.cols == d, "layer_norm: bad beta shape");
        Mat<T> out(x->val.rows, d);
        auto xhat = std::make_shared<Mat<T>>(x->val.rows, d);
        auto inv_std = std::make_shared<std::vector<T>>(x->val.rows);
        for (int r = 0; r < x->val.rows; ++r) {
            T mean = 0;
            for (int c = 0; c < d; ++c) {
                mean += x->val(r, c);
            }
            mean /= T(d);
            T var = 0;
            for (int c = 0; c < d; ++c) {
                const T dv = x->val(r, c) - mean;
                var += dv * dv;
            }
            var /= T(d);
            const T istd = T(1) / std::sqrt(var + eps);
            (*inv_std)[r] = istd;
            for (int c = 0; c < d; ++c) {
                const T xh = (x->val(r, c) - mean) * istd;
                (*xhat)(r, c) = xh;
                out(r, c) = gamma->val(0, c) * xh + beta->val(0, c);
            }
        }
        return record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Node<T>& o) {
            const int d = x->val.cols;
            for (int r = 0; r < x->val.rows; ++r) {
                if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    for (int c = 0; c < d; ++c) {
                        gamma->grad(0, c) += o.grad(r, c) * (*xhat)(r, c);
                    }
                }
                if (beta->requires_grad) {
                    beta->ensure_grad();
                    for (int c = 0; c < d; ++c) {
                        beta->grad(0, c) += o.grad(r, c);
                    }
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    // dx = istd * (g - mean(g) - xhat * mean(g .* xhat)), g = gamma .* dy
                    T mean_g = 0;
                    T mean_gx = 0;
                    for (int c = 0; c < d; ++c) {
                        const T g = o.grad(r, c) * gamma->val(0, c);
                        mean_g += g;
                        mean_gx += g * (*xhat)(r, c);
                    }
                    mean_g /= T(d);
                    mean_gx /= T(d);
                    for (int c = 0; c < d; ++c) {
                        const T g = o.grad(r, c) * gamma->val(0, c);
                        x->grad(r, c) += (*inv_std)[r] * (g - mean_g - (*xhat)(r, c) * mean_gx);
                    }
                }
            }
        });
    }

    // row-wise softmax; when causal, column j > row i is masked out
    Ref<T> softmax_rows(const Ref<T>& a, bool causal) {
        Mat<T> out(a->val.rows, a->val.cols);
        for (int r = 0; r < a->val.rows; ++r) {
            const int hi = causal ? std::min(r + 1, a->val.cols) : a->val.cols;
            T mx = -std::numeric_limits<T>::infinity();
            for (int c = 0; c < hi; ++c) {
                mx = std::max(mx, a->val(r, c));
            }
            T sum = 0;
            for (int c = 0; c < hi; ++c) {
                const T e = std::exp(a->val(r, c) - mx);
                out(r, c) = e;
                sum += e;
            }
            for (int c = 0; c < hi; ++c) {
                out(r, c) /= sum;
            }
        }
        return record(std::move(out), {a}, [a, causal](Node<T>& o) {
            if (!a->requires_grad) {
                return;
            }
            a->ensure_grad();
            for (int r = 0; r < o.val.rows; ++r) {
                const int hi = causal ? std::min(r + 1, o.val.cols) : o.val.cols;
                T dot = 0;
                for (int c = 0; c < hi; ++c) {
                    dot += o.grad(r, c) * o.val(r, c);
                }
                for (int c = 0; c < hi; ++c) {
                    a->grad(r, c) += o.val(r, c) * (o.grad(r, c) - dot);
                }
            }
        });
    }

    // rows of `table` selected by index; duplicates accumulate in backward
    Ref<T> gather_rows(const Ref<T>& table, std::vector<int> ids) {
        for (const int id : ids) {
            detail::check(id >= 0 && id < table->val.rows, "gather_rows: index out of range");
        }
        Mat<T> out(static_cast<int>(ids.size()), table->val.cols);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            std::memcpy(&out(static_cast<int>(i), 0), &table->val(ids[i], 0), sizeof(T) * table->val.cols);
        }
        return record(std::move(out), {table}, [table, ids = std::move(ids)](Node<T>& o) {
            if (!table->requires_grad) {
                return;
            }
            table->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                for (int c = 0; c < o.grad.cols; ++c) {
                    table->grad(ids[i], c) += o.grad(static_cast<int>(i), c);
                }
            }
        });
    }

    Ref<T> slice_rows(const Ref<T>& a, int r0, int len) {
        detail::check(r0 >= 0 && len >= 0 && r0 + len <= a->val.rows, "slice_rows: out of range");
        Mat<T> out(len, a->val.cols);
        std::memcpy(out.v.data(), &a->val.v[static_cast<std::size_t>(r0) * a->val.cols],
                    sizeof(T) * out.size());
        return record(std::move(out), {a}, [a, r0](Node<T>& o) {
            if (!a->requires_grad) {
                return;
            }
            a->ensure_grad();
            for (int r = 0; r < o.grad.rows; ++r) {
                for (int c = 0; c < o.grad.cols; ++c) {
                    a->grad(r0 + r, c) += o.grad(r, c);
                }
            }
        });
    }

    Ref<T> slice_cols(const Ref<T>& a, int c0, int len) {
        detail::check(c0 >= 0 && len >= 0 && c0 + len <= a->val.cols, "slice_cols: out of range");
        Mat<T> out(a->val.rows, len);
        for (int r = 0; r < a->val.rows; ++r) {
            std::memcpy(&out(r, 0), &a->val(r, c0), sizeof(T) * len);
        }
        return record(std::move(out), {a}, [a, c0](Node<T>& o) {
            if (!a->requires_grad) {
                return;
            }
            a->ensure_grad();
            for (int r = 0; r < o.grad.rows; ++r) {
                for (int c = 0; c < o.grad.cols; ++c) {
                    a->grad(r, c0 + c) += o.grad(r, c);
                }
            }
        });
    }

    Ref<T> concat_rows(const std::vector<Ref<T>>& parts) {
        detail::check(!parts.empty(), "concat_rows: empty part list");
        const int cols = parts.front()->val.cols;
        int rows = 0;
        for (const auto& p : parts) {
            detail::check(p->val.cols == cols, "concat_rows: column mismatch");
            rows += p->val.rows;
        }
        Mat<T> out(rows, cols);
        int r = 0;
        for (const auto& p : parts) {
            std::memcpy(&out(r, 0), p->val.v.data(), sizeof(T) * p->val.size());
            r += p->val.rows;
        }
        return record(std::move(out), parts, [parts](Node<T>& o) {
            int r0 = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int r = 0; r < p->val.rows; ++r) {
                        for (int c = 0; c < p->val.cols; ++c) {
                            p->grad(r, c) += o.grad(r0 + r, c);
                        }
                    }
                }
                r0 += p->val.rows;
            }
        });
    }

    Ref<T> concat_cols(const std::vector<Ref<T>>& parts) {
        detail::check(!parts.empty(), "concat_cols: empty part list");
        const int rows = parts.front()->val.rows;
        int cols = 0;
        for (const auto& p : parts) {
            detail::check(p->val.rows == rows, "concat_cols: row mismatch");
            cols += p->val.cols;
        }
        Mat<T> out(rows, cols);
        int c0 = 0;
        for (const auto& p : parts) {
            for (int r = 0; r < rows; ++r) {
                std::memcpy(&out(r, c0), &p->val(r, 0), sizeof(T) * p->val.cols);
            }
            c0 += p->val.cols;
        }
        return record(std::move(out), parts, [parts](Node<T>& o) {
            int c0 = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int r = 0; r < p->val.rows; ++r) {
                        for (int c = 0; c < p->val.cols; ++c) {
                            p->grad(r, c) += o.grad(r, c0 + c);
                        }
                    }
                }
                c0 += p->val.cols;
            }
        });
    }

    Ref<T> reshape(const Ref<T>& a, int rows, int cols) {
        detail::check(static_cast<std::size_t>(rows) * cols == a->val.size(), "reshape: size mismatch");
        Mat<T> out(rows, cols);
        out.v = a->val.v;
        return record(std::move(out), {a}, [a](Node<T>& o) {
            if (!a->requires_grad) {
                return;
            }
            a->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                a->grad.v[i] += o.grad.v[i];
            }
        });
    }

    // Sum over the selected rows of -log softmax(logits_r)[target_r].
    // Rows with mask == 0 contribute nothing and receive no gradient.
    Ref<T> masked_ce_sum(const Ref<T>& logits, std::vector<int> targets, std::vector<std::uint8_t> mask) {
        detail::check(static_cast<int>(targets.size()) == logits->val.rows, "masked_ce_sum: target count");
        detail::check(mask.size() == targets.size(), "masked_ce_sum: mask count");
        const int vocab = logits->val.cols;
        auto probs = std::make_shared<Mat<T>>(logits->val.rows, vocab);
        T total = 0;
        for (int r = 0; r < logits->val.rows; ++r) {
            if (!mask[r]) {
                continue;
            }
            detail::check(targets[r] >= 0 && targets[r] < vocab, "masked_ce_sum: target out of vocab");
            T mx = -std::numeric_limits<T>::infinity();
            for (int c = 0; c < vocab; ++c) {
                mx = std::max(mx, logits->val(r, c));
            }
            T sum = 0;
            for (int c = 0; c < vocab; ++c) {
                const T e = std::exp(logits->val(r, c) - mx);
                (*probs)(r, c) = e;
                sum += e;
            }
            for (int c = 0; c < vocab; ++c) {
                (*probs)(r, c) /= sum;
            }
            total += -(logits->val(r, targets[r]) - mx - std::log(sum));
        }
        Mat<T> out(1, 1);
        out(0, 0) = total;
        return record(std::move(out), {logits},
                      [logits, probs, targets = std::move(targets), mask = std::move(mask)](Node<T>& o) {
                          if (!logits->requires_grad) {
                              return;
                          }
                          logits->ensure_grad();
                          const T go = o.grad(0, 0);
                          for (int r = 0; r < logits->val.rows; ++r) {
                              if (!mask[r]) {
                                  continue;
                              }
                              for (int c = 0; c < logits->val.cols; ++c) {
                                  const T onehot = c == targets[r] ? T(1) : T(0);
                                  logits->grad(r, c) += go * ((*probs)(r, c) - onehot);
                              }
                          }
                      });
    }

private:
    template <typename Fn>
    Ref<T> record(Mat<T> value, const std::vector<Ref<T>>& inputs, Fn&& backward_fn) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(value);
        if (grads_) {
            for (const auto& in : inputs) {
                if (in->requires_grad) {
                    n->requires_grad = true;
                    break;
                }
            }
            if (n->requires_grad) {
                n->ensure_grad();
                tape_.push_back([n, fn = std::forward<Fn>(backward_fn)]() { fn(*n); });
            }
        }
        return n;
    }

    static void axpy(T alpha, const Mat<T>& x, Mat<T>& y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            y.v[i] += alpha * x.v[i];
        }
    }

    static void gemm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& out) {
        for (int i = 0; i < a.rows; ++i) {
            for (int k = 0; k < a.cols; ++k) {
                const T aik = a(i, k);
                if (aik == T(0)) {
                    continue;
                }
                for (int j = 0; j < b.cols; ++j) {
                    out(i, j) += aik * b(k, j);
                }
            }
        }
    }

    static void gemm_nn_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& acc) { gemm_nn(a, b, acc); }

    static void gemm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& out) {
        for (int i = 0; i < a.rows; ++i) {
            for (int j = 0; j < b.rows; ++j) {
                T s = 0;
                for (int k = 0; k < a.cols; ++k) {
                    s += a(i, k) * b(j, k);
                }
                out(i, j) += s;
            }
        }
    }

    static void gemm_nt_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& acc) { gemm_nt(a, b, acc); }

    // acc += A^T * B
    static void gemm_tn_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& acc) {
        for (int k = 0; k < a.rows; ++k) {
            for (int i = 0; i < a.cols; ++i) {
                const T aki = a(k, i);
                if (aki == T(0)) {
                    continue;
                }
                for (int j = 0; j < b.cols; ++j) {
                    acc(i, j) += aki * b(k, j);
                }
            }
        }
    }

    bool grads_;
    std::vector<std::function<void()>> tape_;
};

// y = x * W^T + b, with W laid out (out_dim x in_dim) and b (1 x out_dim)
template <typename T>
Ref<T> linear(Graph<T>& g, const Ref<T>& x, Parameter<T>& w, Parameter<T>& b) {
    return g.add_rowvec(g.matmul_nt(x, g.param(w)), g.param(b));
}

// AdamW with decoupled weight decay.
template <typename T>
struct AdamW {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    long t = 0;

    void step(const std::vector<Parameter<T>*>& params) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (Parameter<T>* p : params) {
            auto& val = p->value();
            p->node->ensure_grad();
            if (!p->adam_m.same_shape(val)) {
                p->adam_m = Mat<T>(val.rows, val.cols);
                p->adam_v = Mat<T>(val.rows, val.cols);
            }
            auto& grad = p->node->grad;
            for (std::size_t i = 0; i < val.size(); ++i) {
                const double gi = static_cast<double>(grad.v[i]);
                const double m = beta1 * static_cast<double>(p->adam_m.v[i]) + (1.0 - beta1) * gi;
                const double v = beta2 * static_cast<double>(p->adam_v.v[i]) + (1.0 - beta2) * gi * gi;
                p->adam_m.v[i] = static_cast<T>(m);
                p->adam_v.v[i] = static_cast<T>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                const double upd = lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * static_cast<double>(val.v[i]));
                val.v[i] = static_cast<T>(static_cast<double>(val.v[i]) - upd);
            }
        }
    }
};

} // namespace gazevqa::nn
