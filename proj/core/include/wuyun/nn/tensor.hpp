#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "wuyun/errors.hpp"

namespace wuyun::nn {

/// Reverse-mode autodiff over dense row-major 2-D tensors. Training runs the
/// float instantiation; gradient checks run the double one.

bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;

  private:
    bool saved_;
};

namespace detail {
bool* grad_flag();
}

template <class T>
struct TensorData {
    int rows = 0, cols = 0;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
    std::vector<std::shared_ptr<TensorData>> parents;
    int mark = 0;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <class T>
class Tensor {
  public:
    Tensor() = default;
    Tensor(int rows, int cols, bool requires_grad = false)
        : data_(std::make_shared<TensorData<T>>()) {
        data_->rows = rows;
        data_->cols = cols;
        data_->value.assign(size_t(rows) * size_t(cols), T(0));
        data_->requires_grad = requires_grad;
    }

    bool defined() const { return data_ != nullptr; }
    int rows() const { return data_->rows; }
    int cols() const { return data_->cols; }
    size_t numel() const { return data_->value.size(); }
    std::vector<T>& value() { return data_->value; }
    const std::vector<T>& value() const { return data_->value; }
    std::vector<T>& grad() { data_->ensure_grad(); return data_->grad; }
    bool requires_grad() const { return data_->requires_grad; }
    void set_requires_grad(bool v) { data_->requires_grad = v; }

    T& at(int r, int c) { return data_->value[size_t(r) * size_t(cols()) + size_t(c)]; }
    T at(int r, int c) const { return data_->value[size_t(r) * size_t(cols()) + size_t(c)]; }
    T scalar() const { return data_->value.at(0); }

    std::shared_ptr<TensorData<T>> node() const { return data_; }

    /// Backpropagates from this scalar through the recorded graph.
    void backward() const {
        if (numel() != 1) throw ShapeMismatch("backward() needs a scalar loss");
        std::vector<TensorData<T>*> order;
        topo(data_.get(), order);
        data_->ensure_grad();
        data_->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward) (*it)->backward();
        for (auto* n : order) n->mark = 0;
    }

  private:
    static void topo(TensorData<T>* node, std::vector<TensorData<T>*>& order) {
        if (node->mark) return;
        node->mark = 1;
        for (const auto& p : node->parents) topo(p.get(), order);
        order.push_back(node);
    }

    std::shared_ptr<TensorData<T>> data_;
};

template <class T>
Tensor<T> make_result(int rows, int cols, std::initializer_list<Tensor<T>> parents) {
    Tensor<T> out(rows, cols);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs && grad_enabled()) {
        out.set_requires_grad(true);
        for (const auto& p : parents) out.node()->parents.push_back(p.node());
    }
    return out;
}

template <class T>
bool tracks(const Tensor<T>& out) {
    return out.requires_grad();
}

// ---- elementwise ----

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeMismatch("add: shape mismatch");
    Tensor<T> out = make_result(a.rows(), a.cols(), {a, b});
    for (size_t i = 0; i < out.numel(); ++i) out.value()[i] = a.value()[i] + b.value()[i];
    if (tracks(out)) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node().get();
        out.node()->backward = [an, bn, on] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out = make_result(a.rows(), a.cols(), {a});
    for (size_t i = 0; i < out.numel(); ++i) out.value()[i] = a.value()[i] * s;
    if (tracks(out)) {
        auto an = a.node(); auto on = out.node().get();
        out.node()->backward = [an, on, s] {
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * s;
        };
    }
    return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
    Tensor<T> out = make_result(a.rows(), a.cols(), {a});
    for (size_t i = 0; i < out.numel(); ++i) out.value()[i] = std::max(T(0), a.value()[i]);
    if (tracks(out)) {
        auto an = a.node(); auto on = out.node().get();
        out.node()->backward = [an, on] {
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i)
                if (an->value[i] > T(0)) an->grad[i] += on->grad[i];
        };
    }
    return out;
}

/// Adds a [1,d] (or [d]-shaped) bias row to every row of x.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.cols() != int(b.numel())) throw ShapeMismatch("add_bias: width mismatch");
    Tensor<T> out = make_result(x.rows(), x.cols(), {x, b});
    const int d = x.cols();
    for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < d; ++c)
            out.value()[size_t(r) * d + c] = x.value()[size_t(r) * d + c] + b.value()[size_t(c)];
    if (tracks(out)) {
        auto xn = x.node(); auto bn = b.node(); auto on = out.node().get();
        out.node()->backward = [xn, bn, on, d] {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const int rows = on->rows;
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < d; ++c) bn->grad[size_t(c)] += on->grad[size_t(r) * d + c];
            }
        };
    }
    return out;
}

// ---- matmul ----

namespace detail {

// C (m x n) += op(A) * op(B); A is m x k after transposition, B is k x n.
template <class T>
void gemm_acc(bool ta, bool tb, int m, int n, int k, const T* a, const T* b, T* c) {
    if (!ta && !tb) {  // A[m,k] B[k,n]
        for (int i = 0; i < m; ++i)
            for (int l = 0; l < k; ++l) {
                const T av = a[size_t(i) * k + l];
                if (av == T(0)) continue;
                const T* brow = b + size_t(l) * n;
                T* crow = c + size_t(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else if (!ta && tb) {  // A[m,k] B[n,k]
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const T* arow = a + size_t(i) * k;
                const T* brow = b + size_t(j) * k;
                T acc = 0;
                for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
                c[size_t(i) * n + j] += acc;
            }
    } else if (ta && !tb) {  // A[k,m] B[k,n]
        for (int l = 0; l < k; ++l) {
            const T* arow = a + size_t(l) * m;
            const T* brow = b + size_t(l) * n;
            for (int i = 0; i < m; ++i) {
                const T av = arow[i];
                if (av == T(0)) continue;
                T* crow = c + size_t(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {  // A[k,m] B[n,k]
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                T acc = 0;
                for (int l = 0; l < k; ++l) acc += a[size_t(l) * m + i] * b[size_t(j) * k + l];
                c[size_t(i) * n + j] += acc;
            }
    }
}

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool ta = false, bool tb = false) {
    const int m = ta ? a.cols() : a.rows();
    const int ka = ta ? a.rows() : a.cols();
    const int kb = tb ? b.cols() : b.rows();
    const int n = tb ? b.rows() : b.cols();
    if (ka != kb) throw ShapeMismatch("matmul: inner dimensions disagree");
    Tensor<T> out = make_result(m, n, {a, b});
    detail::gemm_acc(ta, tb, m, n, ka, a.value().data(), b.value().data(), out.value().data());
    if (tracks(out)) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node().get();
        out.node()->backward = [an, bn, on, ta, tb, m, n, k = ka] {
            // dA and dB follow from dC with the matching transposes
            if (an->requires_grad) {
                an->ensure_grad();
                if (!ta) detail::gemm_acc(false, !tb, m, k, n, on->grad.data(),
                                          bn->value.data(), an->grad.data());
                else detail::gemm_acc(tb, true, k, m, n, bn->value.data(),
                                      on->grad.data(), an->grad.data());
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                if (!tb) detail::gemm_acc(!ta, false, k, n, m, an->value.data(),
                                          on->grad.data(), bn->grad.data());
                else detail::gemm_acc(true, ta, n, k, m, on->grad.data(),
                                      an->value.data(), bn->grad.data());
            }
        };
    }
    return out;
}

// ---- normalization & softmax ----

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    const int d = x.cols();
    if (int(gamma.numel()) != d || int(beta.numel()) != d)
        throw ShapeMismatch("layer_norm: parameter width mismatch");
    Tensor<T> out = make_result(x.rows(), d, {x, gamma, beta});
    std::vector<T> inv_std(size_t(x.rows())), means(size_t(x.rows()));
    for (int r = 0; r < x.rows(); ++r) {
        const T* row = x.value().data() + size_t(r) * d;
        T mean = 0;
        for (int c = 0; c < d; ++c) mean += row[c];
        mean /= T(d);
        T var = 0;
        for (int c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= T(d);
        const T is = T(1) / std::sqrt(var + eps);
        means[size_t(r)] = mean;
        inv_std[size_t(r)] = is;
        T* orow = out.value().data() + size_t(r) * d;
        for (int c = 0; c < d; ++c)
            orow[c] = (row[c] - mean) * is * gamma.value()[size_t(c)] + beta.value()[size_t(c)];
    }
    if (tracks(out)) {
        auto xn = x.node(); auto gn = gamma.node(); auto bn = beta.node(); auto on = out.node().get();
        out.node()->backward = [xn, gn, bn, on, means, inv_std, d] {
            const int rows = on->rows;
            for (int r = 0; r < rows; ++r) {
                const T* xrow = xn->value.data() + size_t(r) * d;
                const T* go = on->grad.data() + size_t(r) * d;
                const T mean = means[size_t(r)], is = inv_std[size_t(r)];
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int c = 0; c < d; ++c)
                        gn->grad[size_t(c)] += go[c] * (xrow[c] - mean) * is;
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int c = 0; c < d; ++c) bn->grad[size_t(c)] += go[c];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    T* gx = xn->grad.data() + size_t(r) * d;
                    // dL/dxhat, then the standard layernorm backward
                    T sum_gh = 0, sum_ghx = 0;
                    for (int c = 0; c < d; ++c) {
                        const T gh = go[c] * gn->value[size_t(c)];
                        const T xh = (xrow[c] - mean) * is;
                        sum_gh += gh;
                        sum_ghx += gh * xh;
                    }
                    for (int c = 0; c < d; ++c) {
                        const T gh = go[c] * gn->value[size_t(c)];
                        const T xh = (xrow[c] - mean) * is;
                        gx[c] += is * (gh - sum_gh / T(d) - xh * sum_ghx / T(d));
                    }
                }
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    Tensor<T> out = make_result(x.rows(), x.cols(), {x});
    const int d = x.cols();
    for (int r = 0; r < x.rows(); ++r) {
        const T* row = x.value().data() + size_t(r) * d;
        T* orow = out.value().data() + size_t(r) * d;
        T mx = row[0];
        for (int c = 1; c < d; ++c) mx = std::max(mx, row[c]);
        T z = 0;
        for (int c = 0; c < d; ++c) z += (orow[c] = std::exp(row[c] - mx));
        for (int c = 0; c < d; ++c) orow[c] /= z;
    }
    if (tracks(out)) {
        auto xn = x.node(); auto on = out.node().get();
        out.node()->backward = [xn, on, d] {
            xn->ensure_grad();
            for (int r = 0; r < on->rows; ++r) {
                const T* y = on->value.data() + size_t(r) * d;
                const T* gy = on->grad.data() + size_t(r) * d;
                T dot = 0;
                for (int c = 0; c < d; ++c) dot += y[c] * gy[c];
                T* gx = xn->grad.data() + size_t(r) * d;
                for (int c = 0; c < d; ++c) gx[c] += y[c] * (gy[c] - dot);
            }
        };
    }
    return out;
}

/// Additive causal mask over attention scores [q_len, mem_len + q_len]:
/// query i may see keys j <= i + mem_len.
template <class T>
Tensor<T> causal_mask(const Tensor<T>& scores, int mem_len) {
    Tensor<T> out = make_result(scores.rows(), scores.cols(), {scores});
    const int n = scores.cols();
    constexpr T kNegInf = T(-1e30);
    for (int i = 0; i < scores.rows(); ++i)
        for (int j = 0; j < n; ++j)
            out.value()[size_t(i) * n + j] =
                j <= i + mem_len ? scores.value()[size_t(i) * n + j] : kNegInf;
    if (tracks(out)) {
        auto sn = scores.node(); auto on = out.node().get();
        out.node()->backward = [sn, on, mem_len, n] {
            sn->ensure_grad();
            for (int i = 0; i < on->rows; ++i)
                for (int j = 0; j <= std::min(i + mem_len, n - 1); ++j)
                    sn->grad[size_t(i) * n + j] += on->grad[size_t(i) * n + j];
        };
    }
    return out;
}

/// Transformer-XL relative-shift: rel[i, j] = b[i, i + mem_len - j] for the
/// attention layout where keys run over [memory | segment].
template <class T>
Tensor<T> rel_shift(const Tensor<T>& b, int mem_len, int key_len) {
    Tensor<T> out = make_result(b.rows(), key_len, {b});
    const int nd = b.cols();
    for (int i = 0; i < b.rows(); ++i)
        for (int j = 0; j < key_len; ++j) {
            const int dist = i + mem_len - j;
            out.value()[size_t(i) * key_len + j] =
                dist >= 0 && dist < nd ? b.value()[size_t(i) * nd + dist] : T(0);
        }
    if (tracks(out)) {
        auto bnode = b.node(); auto on = out.node().get();
        out.node()->backward = [bnode, on, mem_len, key_len, nd] {
            bnode->ensure_grad();
            for (int i = 0; i < on->rows; ++i)
                for (int j = 0; j < key_len; ++j) {
                    const int dist = i + mem_len - j;
                    if (dist >= 0 && dist < nd)
                        bnode->grad[size_t(i) * nd + dist] += on->grad[size_t(i) * key_len + j];
                }
        };
    }
    return out;
}

// ---- gather / reshape ----

/// Rows of `table` selected by ids; id -1 yields a zero row.
template <class T>
Tensor<T> embedding_rows(const Tensor<T>& table, const std::vector<int>& ids) {
    const int d = table.cols();
    Tensor<T> out = make_result(int(ids.size()), d, {table});
    for (size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0) continue;
        if (ids[r] >= table.rows()) throw ShapeMismatch("embedding id out of range");
        std::copy_n(table.value().data() + size_t(ids[r]) * d, d,
                    out.value().data() + r * size_t(d));
    }
    if (tracks(out)) {
        auto tn = table.node(); auto on = out.node().get();
        out.node()->backward = [tn, on, ids, d] {
            tn->ensure_grad();
            for (size_t r = 0; r < ids.size(); ++r) {
                if (ids[r] < 0) continue;
                T* dst = tn->grad.data() + size_t(ids[r]) * d;
                const T* src = on->grad.data() + r * size_t(d);
                for (int c = 0; c < d; ++c) dst[c] += src[c];
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() == 0) return b;
    if (b.rows() == 0) return a;
    if (a.cols() != b.cols()) throw ShapeMismatch("concat_rows: width mismatch");
    Tensor<T> out = make_result(a.rows() + b.rows(), a.cols(), {a, b});
    std::copy(a.value().begin(), a.value().end(), out.value().begin());
    std::copy(b.value().begin(), b.value().end(), out.value().begin() + long(a.numel()));
    if (tracks(out)) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node().get();
        out.node()->backward = [an, bn, on] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const size_t off = an->value.size();
                for (size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += on->grad[off + i];
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, int begin, int end) {
    if (begin < 0 || end > x.rows() || begin > end) throw ShapeMismatch("slice_rows: bad range");
    const int d = x.cols();
    Tensor<T> out = make_result(end - begin, d, {x});
    std::copy_n(x.value().data() + size_t(begin) * d, size_t(end - begin) * d,
                out.value().data());
    if (tracks(out)) {
        auto xn = x.node(); auto on = out.node().get();
        out.node()->backward = [xn, on, begin, d] {
            xn->ensure_grad();
            const size_t off = size_t(begin) * d;
            for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[off + i] += on->grad[i];
        };
    }
    return out;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, int begin, int end) {
    if (begin < 0 || end > x.cols() || begin > end) throw ShapeMismatch("slice_cols: bad range");
    const int w = end - begin, d = x.cols();
    Tensor<T> out = make_result(x.rows(), w, {x});
    for (int r = 0; r < x.rows(); ++r)
        std::copy_n(x.value().data() + size_t(r) * d + begin, w,
                    out.value().data() + size_t(r) * w);
    if (tracks(out)) {
        auto xn = x.node(); auto on = out.node().get();
        out.node()->backward = [xn, on, begin, w, d] {
            xn->ensure_grad();
            for (int r = 0; r < on->rows; ++r)
                for (int c = 0; c < w; ++c)
                    xn->grad[size_t(r) * d + begin + c] += on->grad[size_t(r) * w + c];
        };
    }
    return out;
}

template <class T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows()) throw ShapeMismatch("concat_cols: row mismatch");
    const int da = a.cols(), db = b.cols();
    Tensor<T> out = make_result(a.rows(), da + db, {a, b});
    for (int r = 0; r < a.rows(); ++r) {
        std::copy_n(a.value().data() + size_t(r) * da, da,
                    out.value().data() + size_t(r) * (da + db));
        std::copy_n(b.value().data() + size_t(r) * db, db,
                    out.value().data() + size_t(r) * (da + db) + da);
    }
    if (tracks(out)) {
        auto an = a.node(); auto bn = b.node(); auto on = out.node().get();
        out.node()->backward = [an, bn, on, da, db] {
            for (int r = 0; r < on->rows; ++r) {
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (int c = 0; c < da; ++c)
                        an->grad[size_t(r) * da + c] += on->grad[size_t(r) * (da + db) + c];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int c = 0; c < db; ++c)
                        bn->grad[size_t(r) * db + c] += on->grad[size_t(r) * (da + db) + da + c];
                }
            }
        };
    }
    return out;
}

/// Inverted dropout; identity when rate == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng) {
    if (rate <= 0) return x;
    Tensor<T> out = make_result(x.rows(), x.cols(), {x});
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<T> mask(x.numel());
    const T scale_up = T(1.0 / (1.0 - rate));
    for (size_t i = 0; i < x.numel(); ++i) {
        mask[i] = keep(rng) ? scale_up : T(0);
        out.value()[i] = x.value()[i] * mask[i];
    }
    if (tracks(out)) {
        auto xn = x.node(); auto on = out.node().get();
        out.node()->backward = [xn, on, mask = std::move(mask)] {
            xn->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * mask[i];
        };
    }
    return out;
}

/// Mean cross entropy over rows whose target is not -1 (natural log).
/// Returns a defined scalar only when at least one target is active.
template <class T>
Tensor<T> cross_entropy_mean(const Tensor<T>& logits, const std::vector<int>& targets) {
    if (int(targets.size()) != logits.rows()) throw ShapeMismatch("cross_entropy: target count");
    const int v = logits.cols();
    int active = 0;
    for (const int t : targets)
        if (t >= 0) ++active;
    if (active == 0) return Tensor<T>();

    Tensor<T> out = make_result(1, 1, {logits});
    std::vector<T> probs(logits.numel());
    T loss = 0;
    for (int r = 0; r < logits.rows(); ++r) {
        if (targets[size_t(r)] < 0) continue;
        const T* row = logits.value().data() + size_t(r) * v;
        T* prow = probs.data() + size_t(r) * v;
        T mx = row[0];
        for (int c = 1; c < v; ++c) mx = std::max(mx, row[c]);
        T z = 0;
        for (int c = 0; c < v; ++c) z += (prow[c] = std::exp(row[c] - mx));
        for (int c = 0; c < v; ++c) prow[c] /= z;
        loss -= std::log(std::max(prow[targets[size_t(r)]], T(1e-30)));
    }
    out.value()[0] = loss / T(active);
    if (tracks(out)) {
        auto ln = logits.node(); auto on = out.node().get();
        out.node()->backward = [ln, on, targets, probs = std::move(probs), v, active] {
            ln->ensure_grad();
            const T g = on->grad[0] / T(active);
            for (int r = 0; r < ln->rows; ++r) {
                const int t = targets[size_t(r)];
                if (t < 0) continue;
                const T* prow = probs.data() + size_t(r) * v;
                T* grow = ln->grad.data() + size_t(r) * v;
                for (int c = 0; c < v; ++c) grow[c] += g * (prow[c] - (c == t ? T(1) : T(0)));
            }
        };
    }
    return out;
}

}  // namespace wuyun::nn
