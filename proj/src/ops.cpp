#include "dferclip/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <initializer_list>
#include <utility>

namespace dfer {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;
using MapA = Eigen::Map<Eigen::ArrayXd>;
using CMapA = Eigen::Map<const Eigen::ArrayXd>;

using Storage = std::shared_ptr<detail::TensorStorage>;

bool grad_wanted(std::initializer_list<Tensor> ins) {
    if (!Tape::active().recording()) return false;
    for (const auto& t : ins) {
        if (t.requires_grad()) return true;
    }
    return false;
}

// Storages whose gradients this node writes: grad-requiring inputs plus the
// output. backward() zero-initializes each exactly once per pass.
std::vector<Storage> touched(std::initializer_list<Tensor> ins, const Tensor& out) {
    std::vector<Storage> v;
    for (const auto& t : ins) {
        if (t.requires_grad()) v.push_back(t.storage());
    }
    v.push_back(out.storage());
    return v;
}

void check_rank2(const Tensor& x, const char* op) {
    if (x.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " +
                                        shape_str(x.shape()));
}

// Rowwise view: rank 1 is a single row, rank 2 is [rows x cols].
std::pair<Index, Index> as_rows(const Tensor& x, const char* op) {
    if (x.rank() == 1) return {1, x.dim(0)};
    if (x.rank() == 2) return {x.dim(0), x.dim(1)};
    throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(x.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const Index n = a.rows(), k = a.cols(), m = b.cols();
    Tensor out({n, m});
    MapM(out.data(), n, m).noalias() = CMapM(a.data(), n, k) * CMapM(b.data(), k, m);

    if (grad_wanted({a, b})) {
        out.set_requires_grad(true);
        Storage as = a.storage(), bs = b.storage(), os = out.storage();
        Tape::active().record(touched({a, b}, out), [as, bs, os, n, k, m] {
            CMapM dO(os->grad.data(), n, m);
            if (as->requires_grad) {
                MapM(as->grad.data(), n, k).noalias() +=
                    dO * CMapM(bs->value.data(), k, m).transpose();
            }
            if (bs->requires_grad) {
                MapM(bs->grad.data(), k, m).noalias() +=
                    CMapM(as->value.data(), n, k).transpose() * dO;
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    check_rank2(x, "transpose");
    const Index r = x.rows(), c = x.cols();
    Tensor out({c, r});
    MapM(out.data(), c, r) = CMapM(x.data(), r, c).transpose();
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        Tape::active().record(touched({x}, out), [xs, os, r, c] {
            MapM(xs->grad.data(), r, c) += CMapM(os->grad.data(), c, r).transpose();
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Tensor out(a.shape());
    const Index n = a.size();
    MapA(out.data(), n) = CMapA(a.data(), n) + CMapA(b.data(), n);
    if (grad_wanted({a, b})) {
        out.set_requires_grad(true);
        Storage as = a.storage(), bs = b.storage(), os = out.storage();
        Tape::active().record(touched({a, b}, out), [as, bs, os, n] {
            CMapA dO(os->grad.data(), n);
            if (as->requires_grad) MapA(as->grad.data(), n) += dO;
            if (bs->requires_grad) MapA(bs->grad.data(), n) += dO;
        });
    }
    return out;
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
    check_rank2(x, "add_row");
    if (bias.rank() != 1 || bias.dim(0) != x.cols()) {
        throw ShapeError("add_row: bias " + shape_str(bias.shape()) + " does not match columns of " +
                         shape_str(x.shape()));
    }
    const Index r = x.rows(), c = x.cols();
    Tensor out({r, c});
    MapM(out.data(), r, c) = CMapM(x.data(), r, c).rowwise() + CMapV(bias.data(), c).transpose();
    if (grad_wanted({x, bias})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), bs = bias.storage(), os = out.storage();
        Tape::active().record(touched({x, bias}, out), [xs, bs, os, r, c] {
            CMapM dO(os->grad.data(), r, c);
            if (xs->requires_grad) MapM(xs->grad.data(), r, c) += dO;
            if (bs->requires_grad) MapV(bs->grad.data(), c) += dO.colwise().sum().transpose();
        });
    }
    return out;
}

Tensor mul_scalar(const Tensor& x, double c) {
    Tensor out(x.shape());
    const Index n = x.size();
    MapA(out.data(), n) = CMapA(x.data(), n) * c;
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        Tape::active().record(touched({x}, out), [xs, os, n, c] {
            MapA(xs->grad.data(), n) += c * CMapA(os->grad.data(), n);
        });
    }
    return out;
}

Tensor mul_scalar_param(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw ShapeError("mul_scalar_param: scale must be a scalar tensor");
    Tensor out(x.shape());
    const Index n = x.size();
    const double sv = s.at(0);
    MapA(out.data(), n) = CMapA(x.data(), n) * sv;
    if (grad_wanted({x, s})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), ss = s.storage(), os = out.storage();
        Tape::active().record(touched({x, s}, out), [xs, ss, os, n] {
            CMapA dO(os->grad.data(), n);
            if (xs->requires_grad) MapA(xs->grad.data(), n) += ss->value[0] * dO;
            if (ss->requires_grad) ss->grad[0] += (CMapA(xs->value.data(), n) * dO).sum();
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, std::vector<Index> shape) {
    if (shape_numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    }
    Tensor out = Tensor::from_values(std::move(shape), x.values());
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        const Index n = x.size();
        Tape::active().record(touched({x}, out), [xs, os, n] {
            MapA(xs->grad.data(), n) += CMapA(os->grad.data(), n);
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, Index i0, Index n) {
    check_rank2(x, "slice_rows");
    if (i0 < 0 || n <= 0 || i0 + n > x.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(i0) + ", " +
                         std::to_string(i0 + n) + ") out of " + shape_str(x.shape()));
    }
    const Index c = x.cols();
    Tensor out({n, c});
    MapM(out.data(), n, c) = CMapM(x.data(), x.rows(), c).middleRows(i0, n);
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        const Index r = x.rows();
        Tape::active().record(touched({x}, out), [xs, os, i0, n, r, c] {
            MapM(xs->grad.data(), r, c).middleRows(i0, n) += CMapM(os->grad.data(), n, c);
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, Index j0, Index n) {
    check_rank2(x, "slice_cols");
    if (j0 < 0 || n <= 0 || j0 + n > x.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(j0) + ", " +
                         std::to_string(j0 + n) + ") out of " + shape_str(x.shape()));
    }
    const Index r = x.rows();
    Tensor out({r, n});
    MapM(out.data(), r, n) = CMapM(x.data(), r, x.cols()).middleCols(j0, n);
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        const Index c = x.cols();
        Tape::active().record(touched({x}, out), [xs, os, j0, n, r, c] {
            MapM(xs->grad.data(), r, c).middleCols(j0, n) += CMapM(os->grad.data(), r, n);
        });
    }
    return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    check_rank2(a, "concat_rows");
    check_rank2(b, "concat_rows");
    if (a.cols() != b.cols()) {
        throw ShapeError("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const Index ra = a.rows(), rb = b.rows(), c = a.cols();
    Tensor out({ra + rb, c});
    MapM O(out.data(), ra + rb, c);
    O.topRows(ra) = CMapM(a.data(), ra, c);
    O.bottomRows(rb) = CMapM(b.data(), rb, c);
    if (grad_wanted({a, b})) {
        out.set_requires_grad(true);
        Storage as = a.storage(), bs = b.storage(), os = out.storage();
        Tape::active().record(touched({a, b}, out), [as, bs, os, ra, rb, c] {
            CMapM dO(os->grad.data(), ra + rb, c);
            if (as->requires_grad) MapM(as->grad.data(), ra, c) += dO.topRows(ra);
            if (bs->requires_grad) MapM(bs->grad.data(), rb, c) += dO.bottomRows(rb);
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input list");
    const Index r = xs[0].rank() == 2 ? xs[0].rows() : -1;
    if (r < 0) throw ShapeError("concat_cols: expected rank-2 tensors");
    Index total = 0;
    for (const auto& x : xs) {
        check_rank2(x, "concat_cols");
        if (x.rows() != r) {
            throw ShapeError("concat_cols: row mismatch " + shape_str(x.shape()));
        }
        total += x.cols();
    }
    Tensor out({r, total});
    MapM O(out.data(), r, total);
    Index off = 0;
    for (const auto& x : xs) {
        O.middleCols(off, x.cols()) = CMapM(x.data(), r, x.cols());
        off += x.cols();
    }
    bool want = false;
    for (const auto& x : xs) want = want || x.requires_grad();
    if (Tape::active().recording() && want) {
        out.set_requires_grad(true);
        std::vector<Storage> srcs;
        std::vector<Index> widths;
        std::vector<Storage> touch;
        for (const auto& x : xs) {
            srcs.push_back(x.storage());
            widths.push_back(x.cols());
            if (x.requires_grad()) touch.push_back(x.storage());
        }
        touch.push_back(out.storage());
        Storage os = out.storage();
        Tape::active().record(std::move(touch), [srcs, widths, os, r, total] {
            CMapM dO(os->grad.data(), r, total);
            Index off = 0;
            for (size_t i = 0; i < srcs.size(); ++i) {
                if (srcs[i]->requires_grad) {
                    MapM(srcs[i]->grad.data(), r, widths[i]) += dO.middleCols(off, widths[i]);
                }
                off += widths[i];
            }
        });
    }
    return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: empty input list");
    if (rows[0].rank() != 1) throw ShapeError("stack_rows: expected rank-1 rows");
    const Index d = rows[0].dim(0);
    for (const auto& t : rows) {
        if (t.rank() != 1 || t.dim(0) != d) {
            throw ShapeError("stack_rows: row shape " + shape_str(t.shape()) + " does not match [" +
                             std::to_string(d) + "]");
        }
    }
    const Index s = static_cast<Index>(rows.size());
    Tensor out({s, d});
    for (Index i = 0; i < s; ++i) {
        MapM(out.data(), s, d).row(i) = CMapV(rows[static_cast<size_t>(i)].data(), d).transpose();
    }
    bool want = false;
    for (const auto& t : rows) want = want || t.requires_grad();
    if (Tape::active().recording() && want) {
        out.set_requires_grad(true);
        std::vector<Storage> srcs;
        std::vector<Storage> touch;
        for (const auto& t : rows) {
            srcs.push_back(t.storage());
            if (t.requires_grad()) touch.push_back(t.storage());
        }
        touch.push_back(out.storage());
        Storage os = out.storage();
        Tape::active().record(std::move(touch), [srcs, os, s, d] {
            CMapM dO(os->grad.data(), s, d);
            for (Index i = 0; i < s; ++i) {
                auto& src = srcs[static_cast<size_t>(i)];
                if (src->requires_grad) {
                    MapV(src->grad.data(), d) += dO.row(i).transpose();
                }
            }
        });
    }
    return out;
}

Tensor take_row(const Tensor& x, Index i) {
    check_rank2(x, "take_row");
    if (i < 0 || i >= x.rows()) {
        throw ShapeError("take_row: row " + std::to_string(i) + " out of " + shape_str(x.shape()));
    }
    const Index c = x.cols();
    Tensor out({c});
    MapV(out.data(), c) = CMapM(x.data(), x.rows(), c).row(i).transpose();
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        const Index r = x.rows();
        Tape::active().record(touched({x}, out), [xs, os, i, r, c] {
            MapM(xs->grad.data(), r, c).row(i) += CMapV(os->grad.data(), c).transpose();
        });
    }
    return out;
}

Tensor mean_rows(const Tensor& x) {
    check_rank2(x, "mean_rows");
    const Index r = x.rows(), c = x.cols();
    Tensor out({c});
    MapV(out.data(), c) = CMapM(x.data(), r, c).colwise().mean().transpose();
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        Tape::active().record(touched({x}, out), [xs, os, r, c] {
            MapM dX(xs->grad.data(), r, c);
            dX.rowwise() += (CMapV(os->grad.data(), c) / static_cast<double>(r)).transpose();
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    Tensor out = Tensor::scalar(CMapA(x.data(), x.size()).sum());
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        const Index n = x.size();
        Tape::active().record(touched({x}, out), [xs, os, n] {
            MapA(xs->grad.data(), n) += os->grad[0];
        });
    }
    return out;
}

namespace {
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
    const Index n = x.size();
    Tensor out(x.shape());
    for (Index i = 0; i < n; ++i) {
        const double v = x.at(i);
        const double u = kGeluScale * (v + kGeluCubic * v * v * v);
        out.at(i) = 0.5 * v * (1.0 + std::tanh(u));
    }
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        Tape::active().record(touched({x}, out), [xs, os, n] {
            for (Index i = 0; i < n; ++i) {
                const double v = xs->value[static_cast<size_t>(i)];
                const double u = kGeluScale * (v + kGeluCubic * v * v * v);
                const double t = std::tanh(u);
                const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
                const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                xs->grad[static_cast<size_t>(i)] += d * os->grad[static_cast<size_t>(i)];
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& x) {
    auto [r, c] = as_rows(x, "softmax");
    Tensor out(x.shape());
    for (Index i = 0; i < r; ++i) {
        CMapA row(x.data() + i * c, c);
        MapA o(out.data() + i * c, c);
        const double m = row.maxCoeff();
        o = (row - m).exp();
        o /= o.sum();
    }
    if (grad_wanted({x})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), os = out.storage();
        Tape::active().record(touched({x}, out), [xs, os, r, c] {
            for (Index i = 0; i < r; ++i) {
                CMapA y(os->value.data() + i * c, c);
                CMapA dy(os->grad.data() + i * c, c);
                MapA dx(xs->grad.data() + i * c, c);
                const double dot = (dy * y).sum();
                dx += y * (dy - dot);
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    auto [r, c] = as_rows(x, "layer_norm");
    if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != c || bias.dim(0) != c) {
        throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
    }
    if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
    Tensor out(x.shape());
    std::vector<double> xhat(static_cast<size_t>(r * c));
    std::vector<double> istd(static_cast<size_t>(r));
    CMapA g(gain.data(), c), b(bias.data(), c);
    for (Index i = 0; i < r; ++i) {
        CMapA row(x.data() + i * c, c);
        const double mu = row.mean();
        const double var = (row - mu).square().mean();  // biased
        const double inv = 1.0 / std::sqrt(var + eps);
        istd[static_cast<size_t>(i)] = inv;
        MapA xh(xhat.data() + i * c, c);
        xh = (row - mu) * inv;
        MapA(out.data() + i * c, c) = xh * g + b;
    }
    if (grad_wanted({x, gain, bias})) {
        out.set_requires_grad(true);
        Storage xs = x.storage(), gs = gain.storage(), bs = bias.storage(), os = out.storage();
        Tape::active().record(touched({x, gain, bias}, out),
                              [xs, gs, bs, os, r, c, xhat = std::move(xhat),
                               istd = std::move(istd)] {
            CMapA g(gs->value.data(), c);
            for (Index i = 0; i < r; ++i) {
                CMapA dy(os->grad.data() + i * c, c);
                CMapA xh(xhat.data() + i * c, c);
                if (gs->requires_grad) MapA(gs->grad.data(), c) += dy * xh;
                if (bs->requires_grad) MapA(bs->grad.data(), c) += dy;
                if (xs->requires_grad) {
                    const Eigen::ArrayXd dxh = dy * g;
                    const double m1 = dxh.mean();
                    const double m2 = (dxh * xh).mean();
                    MapA(xs->grad.data() + i * c, c) +=
                        istd[static_cast<size_t>(i)] * (dxh - m1 - xh * m2);
                }
            }
        });
    }
    return out;
}

Tensor l2_normalize(const Tensor& v) {
    if (v.rank() != 1) throw ShapeError("l2_normalize: expected rank-1, got " + shape_str(v.shape()));
    const Index n = v.dim(0);
    const double norm = CMapV(v.data(), n).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw NumericError("l2_normalize: degenerate vector norm " + std::to_string(norm));
    }
    Tensor out({n});
    MapV(out.data(), n) = CMapV(v.data(), n) / norm;
    if (grad_wanted({v})) {
        out.set_requires_grad(true);
        Storage vs = v.storage(), os = out.storage();
        Tape::active().record(touched({v}, out), [vs, os, n, norm] {
            CMapV y(os->value.data(), n), dy(os->grad.data(), n);
            MapV(vs->grad.data(), n) += (dy - y * y.dot(dy)) / norm;
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    check_rank2(logits, "cross_entropy");
    const Index batch = logits.rows(), classes = logits.cols();
    if (static_cast<Index>(labels.size()) != batch) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(batch));
    }
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw DataError("cross_entropy: label " + std::to_string(labels[i]) +
                            " out of range [0, " + std::to_string(classes) + ") at index " +
                            std::to_string(i));
        }
    }
    std::vector<double> probs(static_cast<size_t>(batch * classes));
    double total = 0.0;
    for (Index i = 0; i < batch; ++i) {
        CMapA row(logits.data() + i * classes, classes);
        const double m = row.maxCoeff();
        MapA p(probs.data() + i * classes, classes);
        p = (row - m).exp();
        const double z = p.sum();
        p /= z;
        total += m + std::log(z) - row(labels[static_cast<size_t>(i)]);
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(batch));
    if (grad_wanted({logits})) {
        out.set_requires_grad(true);
        Storage ls = logits.storage(), os = out.storage();
        Tape::active().record(touched({logits}, out),
                              [ls, os, batch, classes, labels, probs = std::move(probs)] {
            const double scale = os->grad[0] / static_cast<double>(batch);
            for (Index i = 0; i < batch; ++i) {
                MapA dl(ls->grad.data() + i * classes, classes);
                dl += scale * CMapA(probs.data() + i * classes, classes);
                dl(labels[static_cast<size_t>(i)]) -= scale;
            }
        });
    }
    return out;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    check_rank2(q, "multi_head_attention");
    if (q.shape() != k.shape() || q.shape() != v.shape()) {
        throw ShapeError("multi_head_attention: q/k/v shapes disagree " + shape_str(q.shape()) +
                         " " + shape_str(k.shape()) + " " + shape_str(v.shape()));
    }
    const Index d = q.cols();
    if (heads <= 0 || d % heads != 0) {
        throw ConfigError("multi_head_attention: width " + std::to_string(d) +
                          " not divisible by heads " + std::to_string(heads));
    }
    const Index dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
        outs.push_back(matmul(softmax(scores), vh));
    }
    return heads == 1 ? outs[0] : concat_cols(outs);
}

}  // namespace dfer
