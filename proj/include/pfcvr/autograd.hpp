#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pfcvr/matrix.hpp"

namespace pfcvr {

// A learnable tensor plus its Adam moments. Lives in the model; per step the
// tape binds it to a leaf node and the optimizer reads the accumulated grad.
struct Param {
    std::string name;
    Mat value;
    Mat m;  // Adam first moment
    Mat v;  // Adam second moment
    long long adam_t = 0;  // per-param step count for bias correction
    int group = 0;         // 0 = backbone lr, 1 = module lr

    Param() = default;
    Param(std::string n, Mat val, int grp = 0)
        : name(std::move(n)), value(std::move(val)),
          m(value.rows, value.cols), v(value.rows, value.cols), group(grp) {}
};

namespace ag {

class Tape;

struct Node {
    Mat val;
    Mat grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::function<void()> back;  // empty for leaves
    Tape* tape = nullptr;
    int id = -1;
};

using Var = Node*;

// Reverse-mode tape. Nodes are created in topological order, so backward is a
// single reverse sweep. One tape per training step; discarded afterwards.
class Tape {
public:
    bool grad_enabled = true;

    Var leaf(Mat v, bool requires_grad) {
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.val = std::move(v);
        n.requires_grad = requires_grad && grad_enabled;
        if (n.requires_grad) n.grad = Mat(n.val.rows, n.val.cols);
        n.tape = this;
        n.id = static_cast<int>(nodes_.size()) - 1;
        return &n;
    }

    Var constant(Mat v) { return leaf(std::move(v), false); }
    Var scalar(double v) { return constant(Mat::scalar(v)); }

    // Binds a Param once per tape; repeated binds return the same node so
    // gradients from all uses accumulate.
    Var param(Param& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return it->second;
        Var n = leaf(p.value, true);
        param_nodes_.emplace(&p, n);
        bound_.emplace_back(&p, n);
        return n;
    }

    const std::vector<std::pair<Param*, Node*>>& bound_params() const { return bound_; }

    void backward(Var root) {
        check(root->tape == this, "backward: node from another tape");
        check(root->val.rows == 1 && root->val.cols == 1, "backward: root must be scalar");
        check(root->requires_grad, "backward: root does not require grad");
        root->grad(0, 0) = 1.0;
        for (int i = root->id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.requires_grad && n.back) n.back();
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_;  // deque keeps node addresses stable
    std::unordered_map<Param*, Node*> param_nodes_;
    std::vector<std::pair<Param*, Node*>> bound_;
};

namespace detail {

inline Var make(Tape* t, Mat val, std::initializer_list<Var> parents,
                std::function<void(Node*)> make_back) {
    bool rg = false;
    for (Var p : parents) rg = rg || p->requires_grad;
    Var out = t->leaf(std::move(val), rg);
    if (out->requires_grad && make_back) {
        Node* o = out;
        out->back = [o, fn = std::move(make_back)]() { fn(o); };
    }
    return out;
}

}  // namespace detail

// ---- elementwise ----

inline Var add(Var a, Var b) {
    check(a->val.same_shape(b->val), "add: shape mismatch");
    Mat v = a->val;
    v.add_inplace(b->val);
    return detail::make(a->tape, std::move(v), {a, b}, [a, b](Node* o) {
        if (a->requires_grad) a->grad.add_inplace(o->grad);
        if (b->requires_grad) b->grad.add_inplace(o->grad);
    });
}

inline Var sub(Var a, Var b) {
    check(a->val.same_shape(b->val), "sub: shape mismatch");
    Mat v = a->val;
    for (size_t i = 0; i < v.size(); ++i) v.data[i] -= b->val.data[i];
    return detail::make(a->tape, std::move(v), {a, b}, [a, b](Node* o) {
        if (a->requires_grad) a->grad.add_inplace(o->grad);
        if (b->requires_grad)
            for (size_t i = 0; i < b->grad.size(); ++i) b->grad.data[i] -= o->grad.data[i];
    });
}

inline Var mul(Var a, Var b) {
    check(a->val.same_shape(b->val), "mul: shape mismatch");
    Mat v = a->val;
    for (size_t i = 0; i < v.size(); ++i) v.data[i] *= b->val.data[i];
    return detail::make(a->tape, std::move(v), {a, b}, [a, b](Node* o) {
        if (a->requires_grad)
            for (size_t i = 0; i < a->grad.size(); ++i)
                a->grad.data[i] += o->grad.data[i] * b->val.data[i];
        if (b->requires_grad)
            for (size_t i = 0; i < b->grad.size(); ++i)
                b->grad.data[i] += o->grad.data[i] * a->val.data[i];
    });
}

inline Var scale(Var a, double c) {
    Mat v = a->val;
    for (double& x : v.data) x *= c;
    return detail::make(a->tape, std::move(v), {a}, [a, c](Node* o) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad.data[i] += c * o->grad.data[i];
    });
}

// ln(x + eps), elementwise
inline Var log_eps(Var a, double eps) {
    Mat v = a->val;
    for (double& x : v.data) x = std::log(x + eps);
    return detail::make(a->tape, std::move(v), {a}, [a, eps](Node* o) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < a->grad.size(); ++i)
            a->grad.data[i] += o->grad.data[i] / (a->val.data[i] + eps);
    });
}

inline Var exp(Var a) {
    Mat v = a->val;
    for (double& x : v.data) x = std::exp(x);
    return detail::make(a->tape, std::move(v), {a}, [a](Node* o) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < a->grad.size(); ++i)
            a->grad.data[i] += o->grad.data[i] * o->val.data[i];
    });
}

// a * s with s a 1x1 node; the learnable-temperature hook.
inline Var mul_scalar(Var a, Var s) {
    check(s->val.rows == 1 && s->val.cols == 1, "mul_scalar: scalar must be 1x1");
    double sv = s->val(0, 0);
    Mat v = a->val;
    for (double& x : v.data) x *= sv;
    return detail::make(a->tape, std::move(v), {a, s}, [a, s, sv](Node* o) {
        if (a->requires_grad)
            for (size_t i = 0; i < a->grad.size(); ++i)
                a->grad.data[i] += o->grad.data[i] * sv;
        if (s->requires_grad) {
            double acc = 0.0;
            for (size_t i = 0; i < a->val.size(); ++i)
                acc += o->grad.data[i] * a->val.data[i];
            s->grad(0, 0) += acc;
        }
    });
}

inline Var gelu(Var a) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    Mat v = a->val;
    for (double& x : v.data) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    return detail::make(a->tape, std::move(v), {a}, [a](Node* o) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < a->grad.size(); ++i) {
            double x = a->val.data[i];
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            a->grad.data[i] += o->grad.data[i] * (cdf + x * pdf);
        }
    });
}

// ---- matmul family ----

inline Var matmul(Var a, Var b) {
    Mat v(a->val.rows, b->val.cols);
    matmul_into(v, a->val, b->val, false);
    return detail::make(a->tape, std::move(v), {a, b}, [a, b](Node* o) {
        if (a->requires_grad) matmul_nt_into(a->grad, o->grad, b->val, true);
        if (b->requires_grad) matmul_tn_into(b->grad, a->val, o->grad, true);
    });
}

// a * b^T
inline Var matmul_nt(Var a, Var b) {
    Mat v(a->val.rows, b->val.rows);
    matmul_nt_into(v, a->val, b->val, false);
    return detail::make(a->tape, std::move(v), {a, b}, [a, b](Node* o) {
        if (a->requires_grad) matmul_into(a->grad, o->grad, b->val, true);
        if (b->requires_grad) matmul_tn_into(b->grad, o->grad, a->val, true);
    });
}

inline Var transpose(Var a) {
    return detail::make(a->tape, pfcvr::transpose(a->val), {a}, [a](Node* o) {
        if (!a->requires_grad) return;
        for (int r = 0; r < o->grad.rows; ++r)
            for (int c = 0; c < o->grad.cols; ++c) a->grad(c, r) += o->grad(r, c);
    });
}

// ---- broadcast over rows ----

// a (n x d) + b (1 x d)
inline Var add_row(Var a, Var b) {
    check(b->val.rows == 1 && b->val.cols == a->val.cols, "add_row: bias shape mismatch");
    Mat v = a->val;
    for (int r = 0; r < v.rows; ++r)
        for (int c = 0; c < v.cols; ++c) v(r, c) += b->val(0, c);
    return detail::make(a->tape, std::move(v), {a, b}, [a, b](Node* o) {
        if (a->requires_grad) a->grad.add_inplace(o->grad);
        if (b->requires_grad)
            for (int r = 0; r < o->grad.rows; ++r)
                for (int c = 0; c < o->grad.cols; ++c) b->grad(0, c) += o->grad(r, c);
    });
}

// a (n x d) * b (1 x d), row-broadcast
inline Var mul_row(Var a, Var b) {
    check(b->val.rows == 1 && b->val.cols == a->val.cols, "mul_row: gain shape mismatch");
    Mat v = a->val;
    for (int r = 0; r < v.rows; ++r)
        for (int c = 0; c < v.cols; ++c) v(r, c) *= b->val(0, c);
    return detail::make(a->tape, std::move(v), {a, b}, [a, b](Node* o) {
        if (a->requires_grad)
            for (int r = 0; r < o->grad.rows; ++r)
                for (int c = 0; c < o->grad.cols; ++c)
                    a->grad(r, c) += o->grad(r, c) * b->val(0, c);
        if (b->requires_grad)
            for (int r = 0; r < o->grad.rows; ++r)
                for (int c = 0; c < o->grad.cols; ++c)
                    b->grad(0, c) += o->grad(r, c) * a->val(r, c);
    });
}

// ---- row-structured ----

inline Var row_softmax(Var a) {
    Mat v = a->val;
    for (int r = 0; r < v.rows; ++r) {
        double* row = v.row_ptr(r);
        double mx = row[0];
        for (int c = 1; c < v.cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < v.cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (int c = 0; c < v.cols; ++c) row[c] /= sum;
    }
    return detail::make(a->tape, std::move(v), {a}, [a](Node* o) {
        if (!a->requires_grad) return;
        // dx_j = y_j * (g_j - sum_k g_k y_k)
        for (int r = 0; r < o->val.rows; ++r) {
            const double* y = o->val.row_ptr(r);
            const double* g = o->grad.row_ptr(r);
            double dot = 0.0;
            for (int c = 0; c < o->val.cols; ++c) dot += g[c] * y[c];
            double* da = a->grad.row_ptr(r);
            for (int c = 0; c < o->val.cols; ++c) da[c] += y[c] * (g[c] - dot);
        }
    });
}

// Per-row standardization (x - mean) / sqrt(var + eps), no affine.
inline Var layernorm(Var a, double eps = 1e-5) {
    const int n = a->val.rows, d = a->val.cols;
    Mat v(n, d);
    auto inv_std = std::make_shared<std::vector<double>>(n);
    for (int r = 0; r < n; ++r) {
        const double* x = a->val.row_ptr(r);
        double mean = 0.0;
        for (int c = 0; c < d; ++c) mean += x[c];
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) var += (x[c] - mean) * (x[c] - mean);
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (int c = 0; c < d; ++c) v(r, c) = (x[c] - mean) * is;
    }
    return detail::make(a->tape, std::move(v), {a}, [a, inv_std](Node* o) {
        if (!a->requires_grad) return;
        const int d = o->val.cols;
        for (int r = 0; r < o->val.rows; ++r) {
            const double* xhat = o->val.row_ptr(r);
            const double* g = o->grad.row_ptr(r);
            double gmean = 0.0, gxmean = 0.0;
            for (int c = 0; c < d; ++c) {
                gmean += g[c];
                gxmean += g[c] * xhat[c];
            }
            gmean /= d;
            gxmean /= d;
            double is = (*inv_std)[r];
            double* da = a->grad.row_ptr(r);
            for (int c = 0; c < d; ++c)
                da[c] += is * (g[c] - gmean - xhat[c] * gxmean);
        }
    });
}

// Rows scaled to unit L2 norm; eps keeps the zero row finite.
inline Var l2normalize_rows(Var a, double eps = 1e-12) {
    const int n = a->val.rows, d = a->val.cols;
    Mat v(n, d);
    auto inv_norm = std::make_shared<std::vector<double>>(n);
    for (int r = 0; r < n; ++r) {
        const double* x = a->val.row_ptr(r);
        double s = eps;
        for (int c = 0; c < d; ++c) s += x[c] * x[c];
        double in = 1.0 / std::sqrt(s);
        (*inv_norm)[r] = in;
        for (int c = 0; c < d; ++c) v(r, c) = x[c] * in;
    }
    return detail::make(a->tape, std::move(v), {a}, [a, inv_norm](Node* o) {
        if (!a->requires_grad) return;
        // dx = (g - y * (g . y)) / ||x||
        const int d = o->val.cols;
        for (int r = 0; r < o->val.rows; ++r) {
            const double* y = o->val.row_ptr(r);
            const double* g = o->grad.row_ptr(r);
            double dot = 0.0;
            for (int c = 0; c < d; ++c) dot += g[c] * y[c];
            double in = (*inv_norm)[r];
            double* da = a->grad.row_ptr(r);
            for (int c = 0; c < d; ++c) da[c] += in * (g[c] - y[c] * dot);
        }
    });
}

// ---- slicing / assembly ----

inline Var slice_rows(Var a, int r0, int r1) {
    check(0 <= r0 && r0 <= r1 && r1 <= a->val.rows, "slice_rows: range out of bounds");
    Mat v(r1 - r0, a->val.cols);
    for (int r = r0; r < r1; ++r)
        std::copy(a->val.row_ptr(r), a->val.row_ptr(r) + a->val.cols, v.row_ptr(r - r0));
    return detail::make(a->tape, std::move(v), {a}, [a, r0](Node* o) {
        if (!a->requires_grad) return;
        for (int r = 0; r < o->grad.rows; ++r) {
            double* da = a->grad.row_ptr(r0 + r);
            const double* g = o->grad.row_ptr(r);
            for (int c = 0; c < o->grad.cols; ++c) da[c] += g[c];
        }
    });
}

inline Var slice_cols(Var a, int c0, int c1) {
    check(0 <= c0 && c0 <= c1 && c1 <= a->val.cols, "slice_cols: range out of bounds");
    Mat v(a->val.rows, c1 - c0);
    for (int r = 0; r < a->val.rows; ++r)
        for (int c = c0; c < c1; ++c) v(r, c - c0) = a->val(r, c);
    return detail::make(a->tape, std::move(v), {a}, [a, c0](Node* o) {
        if (!a->requires_grad) return;
        for (int r = 0; r < o->grad.rows; ++r)
            for (int c = 0; c < o->grad.cols; ++c) a->grad(r, c0 + c) += o->grad(r, c);
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_rows: empty input");
    int total = 0, d = parts[0]->val.cols;
    for (Var p : parts) {
        check(p->val.cols == d, "concat_rows: column mismatch");
        total += p->val.rows;
    }
    Mat v(total, d);
    int off = 0;
    bool rg = false;
    for (Var p : parts) {
        for (int r = 0; r < p->val.rows; ++r)
            std::copy(p->val.row_ptr(r), p->val.row_ptr(r) + d, v.row_ptr(off + r));
        off += p->val.rows;
        rg = rg || p->requires_grad;
    }
    Tape* t = parts[0]->tape;
    Var out = t->leaf(std::move(v), rg);
    if (out->requires_grad) {
        Node* o = out;
        auto ps = parts;
        out->back = [o, ps]() {
            int off = 0;
            for (Var p : ps) {
                if (p->requires_grad)
                    for (int r = 0; r < p->val.rows; ++r) {
                        double* da = p->grad.row_ptr(r);
                        const double* g = o->grad.row_ptr(off + r);
                        for (int c = 0; c < p->val.cols; ++c) da[c] += g[c];
                    }
                off += p->val.rows;
            }
        };
    }
    return out;
}

inline Var concat_cols(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_cols: empty input");
    int total = 0, n = parts[0]->val.rows;
    for (Var p : parts) {
        check(p->val.rows == n, "concat_cols: row mismatch");
        total += p->val.cols;
    }
    Mat v(n, total);
    int off = 0;
    bool rg = false;
    for (Var p : parts) {
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < p->val.cols; ++c) v(r, off + c) = p->val(r, c);
        off += p->val.cols;
        rg = rg || p->requires_grad;
    }
    Tape* t = parts[0]->tape;
    Var out = t->leaf(std::move(v), rg);
    if (out->requires_grad) {
        Node* o = out;
        auto ps = parts;
        out->back = [o, ps]() {
            int off = 0;
            for (Var p : ps) {
                if (p->requires_grad)
                    for (int r = 0; r < p->val.rows; ++r)
                        for (int c = 0; c < p->val.cols; ++c)
                            p->grad(r, c) += o->grad(r, off + c);
                off += p->val.cols;
            }
        };
    }
    return out;
}

// Row lookup with scatter-add backward; the embedding gather.
inline Var gather_rows(Var a, std::vector<int> idx) {
    Mat v(static_cast<int>(idx.size()), a->val.cols);
    for (size_t i = 0; i < idx.size(); ++i) {
        check(idx[i] >= 0 && idx[i] < a->val.rows, "gather_rows: index out of range");
        std::copy(a->val.row_ptr(idx[i]), a->val.row_ptr(idx[i]) + a->val.cols,
                  v.row_ptr(static_cast<int>(i)));
    }
    auto ix = std::make_shared<std::vector<int>>(std::move(idx));
    return detail::make(a->tape, std::move(v), {a}, [a, ix](Node* o) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < ix->size(); ++i) {
            double* da = a->grad.row_ptr((*ix)[i]);
            const double* g = o->grad.row_ptr(static_cast<int>(i));
            for (int c = 0; c < o->grad.cols; ++c) da[c] += g[c];
        }
    });
}

// Rows at `pos` replaced by the (1 x d) row `rep`. Replaced rows receive no
// gradient; `rep` collects the sum over its occurrences.
inline Var replace_rows(Var a, std::vector<int> pos, Var rep) {
    check(rep->val.rows == static_cast<int>(pos.size()) && rep->val.cols == a->val.cols,
          "replace_rows: replacement shape mismatch");
    Mat v = a->val;
    std::vector<bool> replaced(static_cast<size_t>(v.rows), false);
    for (size_t i = 0; i < pos.size(); ++i) {
        int p = pos[i];
        check(p >= 0 && p < v.rows, "replace_rows: position out of range");
        check(!replaced[p], "replace_rows: duplicate position");
        replaced[p] = true;
        std::copy(rep->val.row_ptr(static_cast<int>(i)),
                  rep->val.row_ptr(static_cast<int>(i)) + v.cols, v.row_ptr(p));
    }
    auto ps = std::make_shared<std::vector<int>>(std::move(pos));
    auto mask = std::make_shared<std::vector<bool>>(std::move(replaced));
    return detail::make(a->tape, std::move(v), {a, rep}, [a, rep, ps, mask](Node* o) {
        if (a->requires_grad)
            for (int r = 0; r < o->grad.rows; ++r) {
                if ((*mask)[r]) continue;
                double* da = a->grad.row_ptr(r);
                const double* g = o->grad.row_ptr(r);
                for (int c = 0; c < o->grad.cols; ++c) da[c] += g[c];
            }
        if (rep->requires_grad)
            for (size_t i = 0; i < ps->size(); ++i) {
                const double* g = o->grad.row_ptr((*ps)[i]);
                double* dr = rep->grad.row_ptr(static_cast<int>(i));
                for (int c = 0; c < o->grad.cols; ++c) dr[c] += g[c];
            }
    });
}

// ---- reductions / losses ----

inline Var sum_all(Var a) {
    double s = 0.0;
    for (double x : a->val.data) s += x;
    return detail::make(a->tape, Mat::scalar(s), {a}, [a](Node* o) {
        if (!a->requires_grad) return;
        double g = o->grad(0, 0);
        for (double& d : a->grad.data) d += g;
    });
}

inline Var mean_all(Var a) {
    check(a->val.size() > 0, "mean_all: empty matrix");
    double s = 0.0;
    for (double x : a->val.data) s += x;
    double inv = 1.0 / static_cast<double>(a->val.size());
    return detail::make(a->tape, Mat::scalar(s * inv), {a}, [a, inv](Node* o) {
        if (!a->requires_grad) return;
        double g = o->grad(0, 0) * inv;
        for (double& d : a->grad.data) d += g;
    });
}

// Mean over rows of -log softmax(logits)[target]; the softmax cross-entropy.
inline Var cross_entropy_rows(Var logits, std::vector<int> targets) {
    const int n = logits->val.rows, d = logits->val.cols;
    check(static_cast<int>(targets.size()) == n, "cross_entropy_rows: target count mismatch");
    check(n >= 1, "cross_entropy_rows: empty batch");
    auto probs = std::make_shared<Mat>(n, d);
    double loss = 0.0;
    for (int r = 0; r < n; ++r) {
        check(targets[r] >= 0 && targets[r] < d, "cross_entropy_rows: target out of range");
        const double* x = logits->val.row_ptr(r);
        double mx = x[0];
        for (int c = 1; c < d; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (int c = 0; c < d; ++c) sum += std::exp(x[c] - mx);
        double lse = mx + std::log(sum);
        loss += lse - x[targets[r]];
        double* p = probs->row_ptr(r);
        for (int c = 0; c < d; ++c) p[c] = std::exp(x[c] - lse);
    }
    loss /= n;
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    return detail::make(logits->tape, Mat::scalar(loss), {logits}, [logits, probs, tg](Node* o) {
        if (!logits->requires_grad) return;
        const int n = probs->rows, d = probs->cols;
        double g = o->grad(0, 0) / n;
        for (int r = 0; r < n; ++r) {
            double* da = logits->grad.row_ptr(r);
            const double* p = probs->row_ptr(r);
            for (int c = 0; c < d; ++c) da[c] += g * p[c];
            da[(*tg)[r]] -= g;
        }
    });
}

// Mean over all entries of (pred - target)^2 against a fixed target.
inline Var mse_to(Var pred, Mat target) {
    check(pred->val.same_shape(target), "mse_to: shape mismatch");
    check(pred->val.size() > 0, "mse_to: empty input");
    double s = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        double e = pred->val.data[i] - target.data[i];
        s += e * e;
    }
    double inv = 1.0 / static_cast<double>(target.size());
    auto tgt = std::make_shared<Mat>(std::move(target));
    return detail::make(pred->tape, Mat::scalar(s * inv), {pred}, [pred, tgt, inv](Node* o) {
        if (!pred->requires_grad) return;
        double g = 2.0 * inv * o->grad(0, 0);
        for (size_t i = 0; i < tgt->size(); ++i)
            pred->grad.data[i] += g * (pred->val.data[i] - tgt->data[i]);
    });
}

}  // namespace ag
}  // namespace pfcvr
