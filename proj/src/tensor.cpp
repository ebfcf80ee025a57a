#include "upwell/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "upwell/errors.hpp"

namespace upwell::ad {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

namespace detail {
void Node::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}
}  // namespace detail

using detail::Node;

// --- construction ----------------------------------------------------------

namespace {

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    if (n->values.size() != shape_numel(n->shape)) {
        throw ShapeError("tensor data length " + std::to_string(n->values.size()) +
                         " does not match shape " + shape_str(n->shape));
    }
    return n;
}

}  // namespace

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
               std::function<void(Node&)> backward) {
    auto n = new_node(std::move(shape), std::move(values));
    bool tracked = false;
    for (const Tensor& p : parents) {
        tracked = tracked || p.requires_grad();
        n->parents.push_back(p.handle());
    }
    if (tracked) {
        n->requires_grad = true;
        n->backward_fn = std::move(backward);
    }
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(const Shape& shape) {
    return from(shape, std::vector<double>(shape_numel(shape), 0.0));
}

Tensor Tensor::full(const Shape& shape, double value) {
    return from(shape, std::vector<double>(shape_numel(shape), value));
}

Tensor Tensor::scalar(double value) { return from(Shape{}, {value}); }

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
    return Tensor(new_node(shape, std::move(values)));
}

Tensor Tensor::leaf(const Shape& shape, std::vector<double> values) {
    Tensor t(new_node(shape, std::move(values)));
    t.node_->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->values.size(); }
std::size_t Tensor::ndim() const { return node_->shape.size(); }
const std::vector<double>& Tensor::values() const { return node_->values; }

std::vector<double>& Tensor::values_mut() {
    if (!node_->parents.empty()) {
        throw NumericError("in-place mutation is only allowed on leaf tensors");
    }
    return node_->values;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->values[0];
}

// --- broadcasting helpers ---------------------------------------------------

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t nd = std::max(a.size(), b.size());
    Shape out(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides in the broadcast frame; 0 where the source dim is 1.
std::vector<std::size_t> broadcast_strides(const Shape& src, const Shape& dst) {
    std::vector<std::size_t> native(src.size());
    std::size_t acc = 1;
    for (std::size_t i = src.size(); i-- > 0;) {
        native[i] = acc;
        acc *= src[i];
    }
    std::vector<std::size_t> out(dst.size(), 0);
    const std::size_t off = dst.size() - src.size();
    for (std::size_t i = 0; i < src.size(); ++i) {
        out[off + i] = src[i] == 1 ? 0 : native[i];
    }
    return out;
}

// Iterates the broadcast frame, invoking fn(out_linear, off_a, off_b).
template <typename Fn>
void for_each_broadcast(const Shape& dst, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
    const std::size_t total = shape_numel(dst);
    const std::size_t nd = dst.size();
    if (nd == 0) {
        fn(0, 0, 0);
        return;
    }
    std::vector<std::size_t> idx(nd, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t lin = 0;;) {
        fn(lin, oa, ob);
        if (++lin == total) break;
        std::size_t d = nd;
        for (;;) {
            --d;
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < dst[d]) break;
            oa -= sa[d] * dst[d];
            ob -= sb[d] * dst[d];
            idx[d] = 0;
        }
    }
}

// Sums grad (laid out in `from` shape) into a buffer of `to` shape,
// reducing over broadcast dims.
void reduce_into(const std::vector<double>& grad, const Shape& from, const Shape& to,
                 std::vector<double>& out) {
    if (from == to) {
        for (std::size_t i = 0; i < grad.size(); ++i) out[i] += grad[i];
        return;
    }
    const auto st = broadcast_strides(to, from);
    const std::vector<std::size_t> zero(from.size(), 0);
    for_each_broadcast(from, st, zero, [&](std::size_t lin, std::size_t ot, std::size_t) {
        out[ot] += grad[lin];
    });
}

template <typename FwdFn, typename DaFn, typename DbFn>
Tensor binary_broadcast_op(const Tensor& a, const Tensor& b, FwdFn fwd, DaFn da, DbFn db) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    std::vector<double> out(shape_numel(out_shape));
    const auto& av = a.values();
    const auto& bv = b.values();
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    } else {
        const auto sa = broadcast_strides(a.shape(), out_shape);
        const auto sb = broadcast_strides(b.shape(), out_shape);
        for_each_broadcast(out_shape, sa, sb,
                           [&](std::size_t lin, std::size_t oa, std::size_t ob) {
                               out[lin] = fwd(av[oa], bv[ob]);
                           });
    }
    Shape a_shape = a.shape(), b_shape = b.shape();
    return make_op(out_shape, std::move(out), {a, b}, [=](Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            std::vector<double> g(n.grad.size());
            const auto sa = broadcast_strides(a_shape, n.shape);
            const auto sb = broadcast_strides(b_shape, n.shape);
            for_each_broadcast(n.shape, sa, sb,
                               [&](std::size_t lin, std::size_t oa, std::size_t ob) {
                                   g[lin] = da(n.grad[lin], pa.values[oa], pb.values[ob]);
                               });
            reduce_into(g, n.shape, a_shape, pa.grad);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            std::vector<double> g(n.grad.size());
            const auto sa = broadcast_strides(a_shape, n.shape);
            const auto sb = broadcast_strides(b_shape, n.shape);
            for_each_broadcast(n.shape, sa, sb,
                               [&](std::size_t lin, std::size_t oa, std::size_t ob) {
                                   g[lin] = db(n.grad[lin], pa.values[oa], pb.values[ob]);
                               });
            reduce_into(g, n.shape, b_shape, pb.grad);
        }
    });
}

}  // namespace

// --- arithmetic -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, [](double x, double y) { return x + y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, [](double x, double y) { return x - y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, [](double x, double y) { return x * y; },
        [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (double& v : out) v *= c;
    return make_op(a.shape(), std::move(out), {a}, [c](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.values());
    for (double& v : out) v += c;
    return make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

// --- matmul ------------------------------------------------------------------

namespace {

// C[m,n] += A[m,k] * B[k,n]
void mm_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
            std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* Ai = A + i * k;
        double* Ci = C + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double a = Ai[kk];
            if (a == 0.0) continue;
            const double* Bk = B + kk * n;
            for (std::size_t j = 0; j < n; ++j) Ci[j] += a * Bk[j];
        }
    }
}

// dA[m,k] += G[m,n] * B^T  (i.e. dA[i,kk] = sum_j G[i,j] B[kk,j])
void mm_acc_gbt(const double* G, const double* B, double* dA, std::size_t m, std::size_t k,
                std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* Gi = G + i * n;
        double* dAi = dA + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double* Bk = B + kk * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += Gi[j] * Bk[j];
            dAi[kk] += s;
        }
    }
}

// dB[k,n] += A^T * G  (i.e. dB[kk,j] = sum_i A[i,kk] G[i,j])
void mm_acc_atg(const double* A, const double* G, double* dB, std::size_t m, std::size_t k,
                std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* Ai = A + i * k;
        const double* Gi = G + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double a = Ai[kk];
            if (a == 0.0) continue;
            double* dBk = dB + kk * n;
            for (std::size_t j = 0; j < n; ++j) dBk[j] += a * Gi[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2) {
        throw ShapeError("matmul needs >= 2-d operands, got " + shape_str(as) + " and " +
                         shape_str(bs));
    }
    const std::size_t m = as[as.size() - 2], k = as[as.size() - 1];
    const std::size_t k2 = bs[bs.size() - 2], n = bs[bs.size() - 1];
    if (k != k2) {
        throw ShapeError("matmul inner dims disagree: " + shape_str(as) + " vs " + shape_str(bs));
    }
    Shape batch_a(as.begin(), as.end() - 2);
    Shape batch_b(bs.begin(), bs.end() - 2);
    if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b) {
        throw ShapeError("matmul batch dims disagree: " + shape_str(as) + " vs " + shape_str(bs));
    }
    const Shape batch = batch_a.empty() ? batch_b : batch_a;
    const std::size_t nb = shape_numel(batch);
    const bool a_batched = !batch_a.empty();
    const bool b_batched = !batch_b.empty();

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(shape_numel(out_shape), 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t t = 0; t < nb; ++t) {
        mm_acc(av.data() + (a_batched ? t * m * k : 0), bv.data() + (b_batched ? t * k * n : 0),
               out.data() + t * m * n, m, k, n);
    }
    return make_op(out_shape, std::move(out), {a, b},
                   [m, k, n, nb, a_batched, b_batched](Node& node) {
                       auto& pa = *node.parents[0];
                       auto& pb = *node.parents[1];
                       if (pa.requires_grad) {
                           pa.ensure_grad();
                           for (std::size_t t = 0; t < nb; ++t) {
                               mm_acc_gbt(node.grad.data() + t * m * n,
                                          pb.values.data() + (b_batched ? t * k * n : 0),
                                          pa.grad.data() + (a_batched ? t * m * k : 0), m, k, n);
                           }
                       }
                       if (pb.requires_grad) {
                           pb.ensure_grad();
                           for (std::size_t t = 0; t < nb; ++t) {
                               mm_acc_atg(pa.values.data() + (a_batched ? t * m * k : 0),
                                          node.grad.data() + t * m * n,
                                          pb.grad.data() + (b_batched ? t * k * n : 0), m, k, n);
                           }
                       }
                   });
}

// --- layout ops ---------------------------------------------------------------

namespace {

std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size());
    std::size_t acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

// Gather mapping for an axis swap: out[lin] = in[perm_map(lin)].
std::vector<std::size_t> transpose_map(const Shape& in_shape, std::size_t ax_a, std::size_t ax_b) {
    Shape out_shape = in_shape;
    std::swap(out_shape[ax_a], out_shape[ax_b]);
    const auto in_st = row_major_strides(in_shape);
    auto st = in_st;
    std::swap(st[ax_a], st[ax_b]);
    std::vector<std::size_t> map(shape_numel(out_shape));
    const std::vector<std::size_t> zero(out_shape.size(), 0);
    for_each_broadcast(out_shape, st, zero,
                       [&](std::size_t lin, std::size_t off, std::size_t) { map[lin] = off; });
    return map;
}

}  // namespace

Tensor transpose(const Tensor& a, std::size_t axis_a, std::size_t axis_b) {
    if (axis_a >= a.ndim() || axis_b >= a.ndim()) {
        throw ShapeError("transpose axes out of range for " + shape_str(a.shape()));
    }
    if (axis_a == axis_b) {
        return reshape(a, a.shape());
    }
    Shape out_shape = a.shape();
    std::swap(out_shape[axis_a], out_shape[axis_b]);
    const auto map = transpose_map(a.shape(), axis_a, axis_b);
    std::vector<double> out(map.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = av[map[i]];
    return make_op(out_shape, std::move(out), {a}, [map](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < map.size(); ++i) p.grad[map[i]] += n.grad[i];
    });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    std::vector<double> out(a.values());
    return make_op(shape, std::move(out), {a}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw ShapeError("concat axis out of range");
    std::size_t axis_total = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != s0.size()) {
            throw ShapeError("concat rank mismatch: " + shape_str(s0) + " vs " +
                             shape_str(p.shape()));
        }
        for (std::size_t d = 0; d < s0.size(); ++d) {
            if (d != axis && p.shape()[d] != s0[d]) {
                throw ShapeError("concat dim mismatch: " + shape_str(s0) + " vs " +
                                 shape_str(p.shape()));
            }
        }
        axis_total += p.shape()[axis];
    }
    Shape out_shape = s0;
    out_shape[axis] = axis_total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

    std::vector<double> out(shape_numel(out_shape));
    std::size_t col = 0;
    std::vector<std::size_t> offsets;
    for (const Tensor& p : parts) {
        const std::size_t w = p.shape()[axis] * inner;
        const auto& pv = p.values();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(pv.begin() + o * w, pv.begin() + (o + 1) * w,
                      out.begin() + o * axis_total * inner + col);
        }
        offsets.push_back(col);
        col += w;
    }
    std::vector<Tensor> parents = parts;
    const std::size_t row = axis_total * inner;
    return make_op(out_shape, std::move(out), std::move(parents),
                   [offsets, outer, inner, row](Node& n) {
                       for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
                           auto& p = *n.parents[pi];
                           if (!p.requires_grad) continue;
                           p.ensure_grad();
                           const std::size_t w = p.values.size() / std::max<std::size_t>(outer, 1);
                           for (std::size_t o = 0; o < outer; ++o) {
                               const double* src = n.grad.data() + o * row + offsets[pi];
                               double* dst = p.grad.data() + o * w;
                               for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
                           }
                       }
                   });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
    const Shape& s = a.shape();
    if (axis >= s.size()) throw ShapeError("slice axis out of range");
    if (start + len > s[axis]) {
        throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of range for axis of size " + std::to_string(s[axis]));
    }
    Shape out_shape = s;
    out_shape[axis] = len;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    std::vector<double> out(shape_numel(out_shape));
    const auto& av = a.values();
    const std::size_t in_row = s[axis] * inner, out_row = len * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy(av.begin() + o * in_row + start * inner,
                  av.begin() + o * in_row + (start + len) * inner, out.begin() + o * out_row);
    }
    return make_op(out_shape, std::move(out), {a}, [outer, inner, in_row, out_row, start](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = n.grad.data() + o * out_row;
            double* dst = p.grad.data() + o * in_row + start * inner;
            for (std::size_t i = 0; i < out_row; ++i) dst[i] += src[i];
        }
    });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    const Shape check = broadcast_shape(a.shape(), shape);
    if (check != shape) {
        throw ShapeError("cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    std::vector<double> out(shape_numel(shape));
    const auto st = broadcast_strides(a.shape(), shape);
    const std::vector<std::size_t> zero(shape.size(), 0);
    const auto& av = a.values();
    for_each_broadcast(shape, st, zero, [&](std::size_t lin, std::size_t oa, std::size_t) {
        out[lin] = av[oa];
    });
    Shape a_shape = a.shape();
    return make_op(shape, std::move(out), {a}, [a_shape](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        reduce_into(n.grad, n.shape, a_shape, p.grad);
    });
}

// --- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_op(Shape{}, {s}, {a}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = n.grad[0];
        for (double& gv : p.grad) gv += g;
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

namespace {

template <typename LaneFn>
void for_each_lane(const Shape& s, std::size_t axis, LaneFn&& fn) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t len = s[axis];
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            // lane element t lives at o*len*inner + t*inner + i
            fn(o * len * inner + i, inner, len, o * inner + i);
        }
    }
}

}  // namespace

Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
    const Shape& s = a.shape();
    if (axis >= s.size()) throw ShapeError("sum axis out of range");
    Shape out_shape;
    for (std::size_t d = 0; d < s.size(); ++d) {
        if (d == axis) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(s[d]);
        }
    }
    std::vector<double> out(shape_numel(out_shape), 0.0);
    const auto& av = a.values();
    for_each_lane(s, axis, [&](std::size_t base, std::size_t stride, std::size_t len,
                               std::size_t out_idx) {
        double acc = 0.0;
        for (std::size_t t = 0; t < len; ++t) acc += av[base + t * stride];
        out[out_idx] = acc;
    });
    Shape in_shape = s;
    return make_op(out_shape, std::move(out), {a}, [in_shape, axis](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for_each_lane(in_shape, axis, [&](std::size_t base, std::size_t stride, std::size_t len,
                                          std::size_t out_idx) {
            const double g = n.grad[out_idx];
            for (std::size_t t = 0; t < len; ++t) p.grad[base + t * stride] += g;
        });
    });
}

Tensor mean_axis(const Tensor& a, std::size_t axis, bool keepdim) {
    return scale(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(a.shape()[axis]));
}

// --- pointwise nonlinearities -----------------------------------------------------

Tensor abs(const Tensor& a) {
    std::vector<double> out(a.values());
    for (double& v : out) v = std::fabs(v);
    return make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double x = p.values[i];
            // subgradient at 0 taken as 0
            p.grad[i] += n.grad[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
    });
}

Tensor exp(const Tensor& a) {
    std::vector<double> out(a.values());
    for (double& v : out) v = std::exp(v);
    return make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * n.values[i];
    });
}

Tensor sqrt(const Tensor& a) {
    std::vector<double> out(a.values());
    for (double& v : out) v = std::sqrt(v);
    return make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            p.grad[i] += n.grad[i] * 0.5 / n.values[i];
        }
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.values());
    for (double& v : out) {
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        v = 0.5 * v * (1.0 + t);
    }
    return make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double x = p.values[i];
            const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            const double dd = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            p.grad[i] += n.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dd);
        }
    });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    const Shape& s = a.shape();
    if (axis >= s.size()) throw ShapeError("softmax axis out of range");
    std::vector<double> out(a.numel());
    const auto& av = a.values();
    for_each_lane(s, axis, [&](std::size_t base, std::size_t stride, std::size_t len,
                               std::size_t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, av[base + t * stride]);
        if (!(mx > -std::numeric_limits<double>::infinity())) {
            throw NumericError("softmax over a fully masked lane");
        }
        double denom = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const double e = std::exp(av[base + t * stride] - mx);
            out[base + t * stride] = e;
            denom += e;
        }
        for (std::size_t t = 0; t < len; ++t) out[base + t * stride] /= denom;
    });
    Shape in_shape = s;
    return make_op(s, std::move(out), {a}, [in_shape, axis](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for_each_lane(in_shape, axis, [&](std::size_t base, std::size_t stride, std::size_t len,
                                          std::size_t) {
            double dot = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                dot += n.grad[base + t * stride] * n.values[base + t * stride];
            }
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t ix = base + t * stride;
                p.grad[ix] += n.values[ix] * (n.grad[ix] - dot);
            }
        });
    });
}

Tensor layer_norm(const Tensor& a, std::size_t axis, double eps) {
    const Shape& s = a.shape();
    if (axis >= s.size()) throw ShapeError("layer_norm axis out of range");
    std::vector<double> out(a.numel());
    std::vector<double> inv_std(a.numel() / s[axis]);
    const auto& av = a.values();
    for_each_lane(s, axis, [&](std::size_t base, std::size_t stride, std::size_t len,
                               std::size_t lane) {
        double mu = 0.0;
        for (std::size_t t = 0; t < len; ++t) mu += av[base + t * stride];
        mu /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const double d = av[base + t * stride] - mu;
            var += d * d;
        }
        var /= static_cast<double>(len);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[lane] = is;
        for (std::size_t t = 0; t < len; ++t) {
            out[base + t * stride] = (av[base + t * stride] - mu) * is;
        }
    });
    Shape in_shape = s;
    return make_op(s, std::move(out), {a}, [in_shape, axis, inv_std](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for_each_lane(in_shape, axis, [&](std::size_t base, std::size_t stride, std::size_t len,
                                          std::size_t lane) {
            const double is = inv_std[lane];
            double g_mean = 0.0, gx_mean = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t ix = base + t * stride;
                g_mean += n.grad[ix];
                gx_mean += n.grad[ix] * n.values[ix];
            }
            g_mean /= static_cast<double>(len);
            gx_mean /= static_cast<double>(len);
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t ix = base + t * stride;
                p.grad[ix] += is * (n.grad[ix] - g_mean - n.values[ix] * gx_mean);
            }
        });
    });
}

// --- reverse pass -----------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw NumericError("backward expects a scalar loss, got shape " +
                           shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;  // constant: nothing tracked

    // Iterative post-order over tracked ancestry.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame {
        Node* node;
        std::size_t next;
    };
    std::vector<Frame> stack{{loss.node(), 0}};
    seen.insert(loss.node());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Node* p = f.node->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        n->ensure_grad();
        if (n->backward_fn) n->backward_fn(*n);
    }
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& points, double step) {
    // Analytic pass on tracked copies.
    std::vector<Tensor> tracked;
    tracked.reserve(points.size());
    for (const Tensor& p : points) tracked.push_back(Tensor::leaf(p.shape(), p.values()));
    Tensor y = f(tracked);
    if (y.numel() != 1) throw NumericError("grad_check expects a scalar-valued function");
    if (!std::isfinite(y.item())) throw NumericError("grad_check: non-finite function value");
    backward(y);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
        const auto& analytic = tracked[pi].grad();
        for (std::size_t i = 0; i < points[pi].numel(); ++i) {
            auto eval_at = [&](double delta) {
                std::vector<Tensor> shifted;
                shifted.reserve(points.size());
                for (std::size_t pj = 0; pj < points.size(); ++pj) {
                    std::vector<double> vals = points[pj].values();
                    if (pj == pi) vals[i] += delta;
                    shifted.push_back(Tensor::from(points[pj].shape(), std::move(vals)));
                }
                return f(shifted).item();
            };
            const double hi = eval_at(step);
            const double lo = eval_at(-step);
            const double numeric = (hi - lo) / (2.0 * step);
            if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
                throw NumericError("grad_check: non-finite gradient entry");
            }
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-8});
            worst = std::max(worst, std::fabs(numeric - analytic[i]) / denom);
        }
    }
    return worst;
}

}  // namespace upwell::ad
