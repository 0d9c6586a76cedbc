// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "nbfusion/errors.hpp"
#include "nbfusion/kernels.hpp"

namespace nbf {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
    }
}

}  // namespace

std::size_t Tape::push(Tensor value, bool needs_grad,
                       std::function<void(Tape&, std::size_t)> backward) {
    nodes_.push_back(Node{std::move(value), {}, needs_grad, std::move(backward)});
    return nodes_.size() - 1;
}

void Tape::check(Var v) const {
    if (v.id >= nodes_.size()) throw Error("tape: variable does not belong to this tape");
}

const Tensor& Tape::value(Var v) const {
    check(v);
    return nodes_[v.id].value;
}

Tensor& Tape::grad_buffer(std::size_t id) {
    if (grads_[id].size() == 0) grads_[id] = Tensor(nodes_[id].value.shape());
    return grads_[id];
}

Tape::Var Tape::input(Tensor v) { return Var{push(std::move(v), false, nullptr)}; }

Tape::Var Tape::param(const std::string& name, const Tensor& v) {
    if (name.empty()) throw Error("tape: parameter name must not be empty");
    for (const Node& n : nodes_) {
        if (n.param_name == name) throw Error("tape: duplicate parameter name '" + name + "'");
    }
    const std::size_t id = push(v, true, nullptr);
    nodes_[id].param_name = name;
    return Var{id};
}

Tape::Var Tape::affine(Var xv, Var wv, Var bv) {
    check(xv);
    check(wv);
    check(bv);
    const Tensor& x = val(xv.id);
    const Tensor& w = val(wv.id);
    const Tensor& b = val(bv.id);
    Tensor y = kernels::affine(x, w, b);  // shape checks live in the kernel
    const bool ng = needs(xv.id) || needs(wv.id) || needs(bv.id);
    const std::size_t xi = xv.id, wi = wv.id, bi = bv.id;
    auto bw = [xi, wi, bi](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        const Tensor& x = t.val(xi);
        const Tensor& w = t.val(wi);
        const std::size_t m = w.dim(0), n = w.dim(1);
        if (x.rank() == 1) {
            if (t.needs(xi)) kernels::matvec_t_acc(w.data(), up.data(), t.grad_buffer(xi).data(), m, n);
            if (t.needs(wi)) {
                Tensor& gw = t.grad_buffer(wi);
                for (std::size_t i = 0; i < m; ++i) {
                    const double u = up[i];
                    if (u == 0.0) continue;
                    double* row = gw.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) row[j] += u * x[j];
                }
            }
            if (t.needs(bi)) {
                Tensor& gb = t.grad_buffer(bi);
                for (std::size_t i = 0; i < m; ++i) gb[i] += up[i];
            }
        } else {
            const std::size_t rows = x.dim(0);
            if (t.needs(xi)) kernels::gemm_acc(up.data(), w.data(), t.grad_buffer(xi).data(), rows, m, n);
            if (t.needs(wi)) kernels::gemm_tn_acc(up.data(), x.data(), t.grad_buffer(wi).data(), m, rows, n);
            if (t.needs(bi)) {
                Tensor& gb = t.grad_buffer(bi);
                for (std::size_t i = 0; i < rows; ++i) {
                    const double* urow = up.data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) gb[j] += urow[j];
                }
            }
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::matmul(Var av, Var bv) {
    check(av);
    check(bv);
    const Tensor& a = val(av.id);
    const Tensor& b = val(bv.id);
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor y({n, m});
    kernels::gemm_acc(a.data(), b.data(), y.data(), n, k, m);
    const bool ng = needs(av.id) || needs(bv.id);
    const std::size_t ai = av.id, bi = bv.id;
    auto bw = [ai, bi, n, k, m](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        if (t.needs(ai)) kernels::gemm_nt_acc(up.data(), t.val(bi).data(), t.grad_buffer(ai).data(), n, m, k);
        if (t.needs(bi)) kernels::gemm_tn_acc(t.val(ai).data(), up.data(), t.grad_buffer(bi).data(), k, n, m);
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::matmul_nt(Var av, Var bv) {
    check(av);
    check(bv);
    const Tensor& a = val(av.id);
    const Tensor& b = val(bv.id);
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
        throw ShapeError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
    Tensor y({n, m});
    kernels::gemm_nt_acc(a.data(), b.data(), y.data(), n, k, m);
    const bool ng = needs(av.id) || needs(bv.id);
    const std::size_t ai = av.id, bi = bv.id;
    auto bw = [ai, bi, n, k, m](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        if (t.needs(ai)) kernels::gemm_acc(up.data(), t.val(bi).data(), t.grad_buffer(ai).data(), n, m, k);
        if (t.needs(bi)) kernels::gemm_tn_acc(up.data(), t.val(ai).data(), t.grad_buffer(bi).data(), m, n, k);
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::add(Var av, Var bv) {
    check(av);
    check(bv);
    const Tensor& a = val(av.id);
    const Tensor& b = val(bv.id);
    check_same_shape(a, b, "add");
    Tensor y(a.shape(), std::vector<double>(a.vec()));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
    const bool ng = needs(av.id) || needs(bv.id);
    const std::size_t ai = av.id, bi = bv.id;
    auto bw = [ai, bi](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        for (std::size_t which : {ai, bi}) {
            if (!t.needs(which)) continue;
            Tensor& g = t.grad_buffer(which);
            for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::add_row_vector(Var xv, Var vv) {
    check(xv);
    check(vv);
    const Tensor& x = val(xv.id);
    const Tensor& v = val(vv.id);
    if (x.rank() != 2 || v.rank() != 1 || v.dim(0) != x.dim(1)) {
        throw ShapeError("add_row_vector: need x [B x d] and v [d], got " + shape_str(x.shape()) +
                         " and " + shape_str(v.shape()));
    }
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor y(x.shape(), std::vector<double>(x.vec()));
    for (std::size_t i = 0; i < rows; ++i) {
        double* yrow = y.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) yrow[j] += v[j];
    }
    const bool ng = needs(xv.id) || needs(vv.id);
    const std::size_t xi = xv.id, vi = vv.id;
    auto bw = [xi, vi, rows, cols](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        if (t.needs(xi)) {
            Tensor& g = t.grad_buffer(xi);
            for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
        }
        if (t.needs(vi)) {
            Tensor& g = t.grad_buffer(vi);
            for (std::size_t i = 0; i < rows; ++i) {
                const double* urow = up.data() + i * cols;
                for (std::size_t j = 0; j < cols; ++j) g[j] += urow[j];
            }
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::scale(Var xv, double c) {
    check(xv);
    const Tensor& x = val(xv.id);
    Tensor y(x.shape(), std::vector<double>(x.vec()));
    for (double& v : y.vec()) v *= c;
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi, c](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < up.size(); ++i) g[i] += c * up[i];
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::one_minus(Var xv) {
    check(xv);
    const Tensor& x = val(xv.id);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0 - x[i];
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < up.size(); ++i) g[i] -= up[i];
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::sum(Var xv) {
    check(xv);
    const Tensor& x = val(xv.id);
    double s = 0.0;
    for (double v : x.vec()) s += v;
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi](Tape& t, std::size_t self) {
        const double u = t.grads_[self][0];
        Tensor& g = t.grad_buffer(xi);
        for (double& v : g.vec()) v += u;
    };
    return Var{push(Tensor::scalar(s), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::relu(Var xv) {
    check(xv);
    const Tensor& x = val(xv.id);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        const Tensor& x = t.val(xi);
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < up.size(); ++i) {
            if (x[i] > 0.0) g[i] += up[i];
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::square(Var xv) {
    check(xv);
    const Tensor& x = val(xv.id);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * x[i];
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        const Tensor& x = t.val(xi);
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < up.size(); ++i) g[i] += 2.0 * x[i] * up[i];
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::sigmoid(Var xv) {
    check(xv);
    const Tensor& x = val(xv.id);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = kernels::sigmoid(x[i]);
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        const Tensor& y = t.val(self);
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * y[i] * (1.0 - y[i]);
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::softmax_rows(Var xv) {
    check(xv);
    const Tensor& x = val(xv.id);
    if (x.rank() != 2) throw ShapeError("softmax_rows: rank-2 input required, got " + shape_str(x.shape()));
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor y(x.shape(), std::vector<double>(x.vec()));
    for (std::size_t i = 0; i < rows; ++i) kernels::softmax_inplace(y.data() + i * cols, cols);
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi, rows, cols](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        const Tensor& y = t.val(self);
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* urow = up.data() + i * cols;
            const double* yrow = y.data() + i * cols;
            double* grow = g.data() + i * cols;
            const double uy = kernels::dot(urow, yrow, cols);
            for (std::size_t j = 0; j < cols; ++j) grow[j] += yrow[j] * (urow[j] - uy);
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::softmax_cross_entropy(Var lv, std::size_t label) {
    check(lv);
    const Tensor& z = val(lv.id);
    if (z.rank() != 1 || z.dim(0) < 2) {
        throw ShapeError("softmax_cross_entropy: rank-1 logits of length >= 2 required, got " +
                         shape_str(z.shape()));
    }
    if (label >= z.dim(0)) {
        throw IndexError("softmax_cross_entropy: label " + std::to_string(label) +
                         " out of range for " + std::to_string(z.dim(0)) + " classes");
    }
    const double loss = kernels::logsumexp(z.data(), z.dim(0)) - z[label];
    const bool ng = needs(lv.id);
    const std::size_t li = lv.id;
    auto bw = [li, label](Tape& t, std::size_t self) {
        const double u = t.grads_[self][0];
        const Tensor& z = t.val(li);
        Tensor p(z.shape(), std::vector<double>(z.vec()));
        kernels::softmax_inplace(p.data(), p.size());
        p[label] -= 1.0;
        Tensor& g = t.grad_buffer(li);
        for (std::size_t i = 0; i < p.size(); ++i) g[i] += u * p[i];
    };
    return Var{push(Tensor::scalar(loss), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::softmax_cross_entropy_mean(Var lv, const std::vector<std::size_t>& labels) {
    check(lv);
    const Tensor& z = val(lv.id);
    if (z.rank() != 2 || z.dim(1) < 2) {
        throw ShapeError("softmax_cross_entropy_mean: rank-2 logits with >= 2 classes required, got " +
                         shape_str(z.shape()));
    }
    const std::size_t rows = z.dim(0), k = z.dim(1);
    if (labels.size() != rows) {
        throw ShapeError("softmax_cross_entropy_mean: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        if (labels[i] >= k) {
            throw IndexError("softmax_cross_entropy_mean: label " + std::to_string(labels[i]) +
                             " out of range for " + std::to_string(k) + " classes");
        }
        const double* row = z.data() + i * k;
        total += kernels::logsumexp(row, k) - row[labels[i]];
    }
    const double loss = total / static_cast<double>(rows);
    const bool ng = needs(lv.id);
    const std::size_t li = lv.id;
    const std::vector<std::size_t> ys = labels;
    auto bw = [li, ys, rows, k](Tape& t, std::size_t self) {
        const double u = t.grads_[self][0] / static_cast<double>(rows);
        const Tensor& z = t.val(li);
        Tensor& g = t.grad_buffer(li);
        std::vector<double> p(k);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* row = z.data() + i * k;
            std::copy(row, row + k, p.begin());
            kernels::softmax_inplace(p.data(), k);
            p[ys[i]] -= 1.0;
            double* grow = g.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) grow[j] += u * p[j];
        }
    };
    return Var{push(Tensor::scalar(loss), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::concat_cols(Var av, Var bv) {
    check(av);
    check(bv);
    const Tensor& a = val(av.id);
    const Tensor& b = val(bv.id);
    if (a.rank() != b.rank() || a.rank() < 1 || a.rank() > 2) {
        throw ShapeError("concat_cols: ranks must match and be 1 or 2");
    }
    Tensor y;
    std::size_t rows = 1, na = 0, nb = 0;
    if (a.rank() == 1) {
        na = a.dim(0);
        nb = b.dim(0);
        y = Tensor({na + nb});
        std::copy(a.data(), a.data() + na, y.data());
        std::copy(b.data(), b.data() + nb, y.data() + na);
    } else {
        if (a.dim(0) != b.dim(0)) {
            throw ShapeError("concat_cols: row counts differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
        }
        rows = a.dim(0);
        na = a.dim(1);
        nb = b.dim(1);
        y = Tensor({rows, na + nb});
        for (std::size_t i = 0; i < rows; ++i) {
            std::copy(a.data() + i * na, a.data() + (i + 1) * na, y.data() + i * (na + nb));
            std::copy(b.data() + i * nb, b.data() + (i + 1) * nb, y.data() + i * (na + nb) + na);
        }
    }
    const bool ng = needs(av.id) || needs(bv.id);
    const std::size_t ai = av.id, bi = bv.id;
    auto bw = [ai, bi, rows, na, nb](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        for (std::size_t i = 0; i < rows; ++i) {
            const double* urow = up.data() + i * (na + nb);
            if (t.needs(ai)) {
                double* ga = t.grad_buffer(ai).data() + i * na;
                for (std::size_t j = 0; j < na; ++j) ga[j] += urow[j];
            }
            if (t.needs(bi)) {
                double* gb = t.grad_buffer(bi).data() + i * nb;
                for (std::size_t j = 0; j < nb; ++j) gb[j] += urow[na + j];
            }
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::slice_cols(Var xv, std::size_t start, std::size_t len) {
    check(xv);
    const Tensor& x = val(xv.id);
    if (x.rank() != 2) throw ShapeError("slice_cols: rank-2 input required");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (len == 0 || start + len > cols) {
        throw ShapeError("slice_cols: slice [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of " + std::to_string(cols) + " columns");
    }
    Tensor y({rows, len});
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy(x.data() + i * cols + start, x.data() + i * cols + start + len, y.data() + i * len);
    }
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi, start, len, rows, cols](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* urow = up.data() + i * len;
            double* grow = g.data() + i * cols + start;
            for (std::size_t j = 0; j < len; ++j) grow[j] += urow[j];
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::row_scale(Var xv, Var sv) {
    check(xv);
    check(sv);
    const Tensor& x = val(xv.id);
    const Tensor& s = val(sv.id);
    std::size_t rows, cols;
    if (x.rank() == 2 && s.rank() == 1 && s.dim(0) == x.dim(0)) {
        rows = x.dim(0);
        cols = x.dim(1);
    } else if (x.rank() == 1 && s.rank() == 1 && s.dim(0) == 1) {
        rows = 1;
        cols = x.dim(0);
    } else {
        throw ShapeError("row_scale: need x [B x d] with s [B], or x [d] with scalar s; got " +
                         shape_str(x.shape()) + " and " + shape_str(s.shape()));
    }
    Tensor y(x.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const double si = s[i];
        const double* xrow = x.data() + i * cols;
        double* yrow = y.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) yrow[j] = si * xrow[j];
    }
    const bool ng = needs(xv.id) || needs(sv.id);
    const std::size_t xi = xv.id, si_id = sv.id;
    auto bw = [xi, si_id, rows, cols](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        const Tensor& x = t.val(xi);
        const Tensor& s = t.val(si_id);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* urow = up.data() + i * cols;
            if (t.needs(xi)) {
                double* grow = t.grad_buffer(xi).data() + i * cols;
                const double si = s[i];
                for (std::size_t j = 0; j < cols; ++j) grow[j] += si * urow[j];
            }
            if (t.needs(si_id)) {
                t.grad_buffer(si_id)[i] += kernels::dot(urow, x.data() + i * cols, cols);
            }
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::take_row(Var xv, std::size_t i) {
    check(xv);
    const Tensor& x = val(xv.id);
    if (x.rank() != 2) throw ShapeError("take_row: rank-2 input required");
    if (i >= x.dim(0)) throw IndexError("take_row: row " + std::to_string(i) + " out of range");
    const std::size_t cols = x.dim(1);
    Tensor y({cols});
    std::copy(x.data() + i * cols, x.data() + (i + 1) * cols, y.data());
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi, i, cols](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        double* grow = t.grad_buffer(xi).data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) grow[j] += up[j];
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::reshape(Var xv, std::vector<std::size_t> shape) {
    check(xv);
    const Tensor& x = val(xv.id);
    if (shape_size(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    Tensor y(std::move(shape), std::vector<double>(x.vec()));
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::conv2d_3x3_same(Var xv, Var kv, Var bv) {
    check(xv);
    check(kv);
    check(bv);
    const Tensor& x = val(xv.id);
    const Tensor& k = val(kv.id);
    const Tensor& b = val(bv.id);
    if (x.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(x.shape()));
    if (k.rank() != 4 || k.dim(2) != 3 || k.dim(3) != 3) {
        throw ShapeError("conv2d: kernel must be [Co,Ci,3,3], got " + shape_str(k.shape()));
    }
    const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t co = k.dim(0);
    if (k.dim(1) != ci) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(k.dim(1)) + " input channels, got " +
                         std::to_string(ci));
    }
    if (b.rank() != 1 || b.dim(0) != co) throw ShapeError("conv2d: bias must be [Co]");
    // Zero-padded same convolution; flat indexing since kernels are rank-4.
    auto kidx = [ci](std::size_t o, std::size_t c, std::size_t p, std::size_t q) {
        return ((o * ci + c) * 3 + p) * 3 + q;
    };
    Tensor y({co, h, w});
    for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                double acc = b[o];
                for (std::size_t c = 0; c < ci; ++c) {
                    for (std::size_t p = 0; p < 3; ++p) {
                        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + p) - 1;
                        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t q = 0; q < 3; ++q) {
                            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + q) - 1;
                            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += k[kidx(o, c, p, q)] *
                                   x.at(c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
                        }
                    }
                }
                y.at(o, i, j) = acc;
            }
        }
    }
    const bool ng = needs(xv.id) || needs(kv.id) || needs(bv.id);
    const std::size_t xi = xv.id, ki = kv.id, bi = bv.id;
    auto bw = [xi, ki, bi, ci, co, h, w, kidx](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        const Tensor& x = t.val(xi);
        const Tensor& k = t.val(ki);
        const bool nx = t.needs(xi), nk = t.needs(ki), nb = t.needs(bi);
        for (std::size_t o = 0; o < co; ++o) {
            for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    const double u = up.at(o, i, j);
                    if (u == 0.0) continue;
                    if (nb) t.grad_buffer(bi)[o] += u;
                    for (std::size_t c = 0; c < ci; ++c) {
                        for (std::size_t p = 0; p < 3; ++p) {
                            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + p) - 1;
                            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t q = 0; q < 3; ++q) {
                                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + q) - 1;
                                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
                                const std::size_t si = static_cast<std::size_t>(ii);
                                const std::size_t sj = static_cast<std::size_t>(jj);
                                if (nk) t.grad_buffer(ki)[kidx(o, c, p, q)] += u * x.at(c, si, sj);
                                if (nx) t.grad_buffer(xi).at(c, si, sj) += u * k[kidx(o, c, p, q)];
                            }
                        }
                    }
                }
            }
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::maxpool2x2(Var xv) {
    check(xv);
    const Tensor& x = val(xv.id);
    if (x.rank() != 3) throw ShapeError("maxpool2x2: input must be [C,H,W]");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2x2: spatial dims must be even and >= 2, got " + shape_str(x.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor y({c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                std::size_t best = (ch * h + 2 * i) * w + 2 * j;
                double bv = x[best];
                for (std::size_t p = 0; p < 2; ++p) {
                    for (std::size_t q = 0; q < 2; ++q) {
                        const std::size_t idx = (ch * h + 2 * i + p) * w + 2 * j + q;
                        if (x[idx] > bv) {
                            bv = x[idx];
                            best = idx;
                        }
                    }
                }
                y.at(ch, i, j) = bv;
                (*argmax)[(ch * oh + i) * ow + j] = best;
            }
        }
    }
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi, argmax](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t i = 0; i < up.size(); ++i) g[(*argmax)[i]] += up[i];
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::global_avg_pool(Var xv) {
    check(xv);
    const Tensor& x = val(xv.id);
    if (x.rank() != 3) throw ShapeError("global_avg_pool: input must be [C,H,W]");
    const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    Tensor y({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        const double* base = x.data() + ch * hw;
        for (std::size_t i = 0; i < hw; ++i) s += base[i];
        y[ch] = s / static_cast<double>(hw);
    }
    const bool ng = needs(xv.id);
    const std::size_t xi = xv.id;
    auto bw = [xi, c, hw](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        Tensor& g = t.grad_buffer(xi);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double u = up[ch] / static_cast<double>(hw);
            double* base = g.data() + ch * hw;
            for (std::size_t i = 0; i < hw; ++i) base[i] += u;
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

Tape::Var Tape::embed_rows(Var tv, const std::vector<std::size_t>& ids) {
    check(tv);
    const Tensor& table = val(tv.id);
    if (table.rank() != 2) throw ShapeError("embed_rows: table must be rank-2");
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (std::size_t id : ids) {
        if (id >= v) {
            throw IndexError("embed_rows: unknown token id " + std::to_string(id) + " for table of " +
                             std::to_string(v) + " rows");
        }
    }
    if (ids.empty()) throw ShapeError("embed_rows: empty id sequence");
    Tensor y({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy(table.data() + ids[i] * d, table.data() + (ids[i] + 1) * d, y.data() + i * d);
    }
    const bool ng = needs(tv.id);
    const std::size_t ti = tv.id;
    const std::vector<std::size_t> idc = ids;
    auto bw = [ti, idc, d](Tape& t, std::size_t self) {
        const Tensor& up = t.grads_[self];
        Tensor& g = t.grad_buffer(ti);
        for (std::size_t i = 0; i < idc.size(); ++i) {
            double* grow = g.data() + idc[i] * d;
            const double* urow = up.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) grow[j] += urow[j];
        }
    };
    return Var{push(std::move(y), ng, ng ? std::function<void(Tape&, std::size_t)>(bw) : nullptr)};
}

GradMap Tape::backward(Var loss) {
    check(loss);
    if (val(loss.id).size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(val(loss.id).shape()));
    }
    grads_.assign(nodes_.size(), Tensor());
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        if (grads_[i].size() == 0 || !nodes_[i].backward) continue;
        nodes_[i].backward(*this, i);
    }
    GradMap out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].param_name.empty()) continue;
        if (grads_[i].size() != 0) {
            out[nodes_[i].param_name] = std::move(grads_[i]);
        } else {
            out[nodes_[i].param_name] = Tensor(nodes_[i].value.shape());
        }
    }
    grads_.clear();
    return out;
}

}  // namespace nbf
