#include "pivotcap/tape.hpp"

#include <cmath>

#include "pivotcap/error.hpp"

namespace pivotcap {

template <typename T>
typename Tape<T>::Index Tape<T>::push(Mat<T> value, std::function<void()> back) {
    Node n;
    n.grad = Mat<T>::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Index>(nodes_.size() - 1);
}

template <typename T>
typename Tape<T>::Index Tape<T>::input(Mat<T> value) {
    return push(std::move(value), nullptr);
}

template <typename T>
typename Tape<T>::Index Tape<T>::matmul(Index a, Index b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    if (va.cols() != vb.rows())
        throw_error(ErrorCategory::contract,
                    "matmul shape mismatch: " + std::to_string(va.cols()) + " vs " +
                        std::to_string(vb.rows()));
    Index out = push(va * vb, nullptr);
    nodes_.back().back = [this, a, b, out]() {
        const Mat<T>& g = grad_ref(out);
        grad_ref(a) += g * value(b).transpose();
        grad_ref(b) += value(a).transpose() * g;
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::add(Index a, Index b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
        throw_error(ErrorCategory::contract, "add shape mismatch");
    Index out = push(value(a) + value(b), nullptr);
    nodes_.back().back = [this, a, b, out]() {
        grad_ref(a) += grad_ref(out);
        grad_ref(b) += grad_ref(out);
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::add_rowvec(Index a, Index row) {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
        throw_error(ErrorCategory::contract, "add_rowvec shape mismatch");
    Mat<T> v = value(a);
    v.rowwise() += value(row).row(0);
    Index out = push(std::move(v), nullptr);
    nodes_.back().back = [this, a, row, out]() {
        grad_ref(a) += grad_ref(out);
        grad_ref(row) += grad_ref(out).colwise().sum();
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::add_constant(Index a, const Mat<T>& c) {
    if (value(a).rows() != c.rows() || value(a).cols() != c.cols())
        throw_error(ErrorCategory::contract, "add_constant shape mismatch");
    Index out = push(value(a) + c, nullptr);
    nodes_.back().back = [this, a, out]() { grad_ref(a) += grad_ref(out); };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::scale(Index a, T s) {
    Index out = push(value(a) * s, nullptr);
    nodes_.back().back = [this, a, out, s]() { grad_ref(a) += grad_ref(out) * s; };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::transpose(Index a) {
    Index out = push(value(a).transpose(), nullptr);
    nodes_.back().back = [this, a, out]() { grad_ref(a) += grad_ref(out).transpose(); };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::concat_rows(Index a, Index b) {
    if (value(a).cols() != value(b).cols())
        throw_error(ErrorCategory::contract, "concat_rows column mismatch");
    Mat<T> v(value(a).rows() + value(b).rows(), value(a).cols());
    v.topRows(value(a).rows()) = value(a);
    v.bottomRows(value(b).rows()) = value(b);
    Index out = push(std::move(v), nullptr);
    nodes_.back().back = [this, a, b, out]() {
        const auto ra = value(a).rows();
        const auto rb = value(b).rows();
        grad_ref(a) += grad_ref(out).topRows(ra);
        grad_ref(b) += grad_ref(out).bottomRows(rb);
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::slice_rows(Index a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > value(a).rows())
        throw_error(ErrorCategory::contract, "slice_rows out of range");
    Index out = push(value(a).middleRows(start, count), nullptr);
    nodes_.back().back = [this, a, out, start, count]() {
        grad_ref(a).middleRows(start, count) += grad_ref(out);
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::slice_cols(Index a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > value(a).cols())
        throw_error(ErrorCategory::contract, "slice_cols out of range");
    Index out = push(value(a).middleCols(start, count), nullptr);
    nodes_.back().back = [this, a, out, start, count]() {
        grad_ref(a).middleCols(start, count) += grad_ref(out);
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::hstack(const std::vector<Index>& parts) {
    if (parts.empty()) throw_error(ErrorCategory::contract, "hstack of nothing");
    Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (auto p : parts) {
        if (value(p).rows() != rows)
            throw_error(ErrorCategory::contract, "hstack row mismatch");
        cols += value(p).cols();
    }
    Mat<T> v(rows, cols);
    Eigen::Index at = 0;
    for (auto p : parts) {
        v.middleCols(at, value(p).cols()) = value(p);
        at += value(p).cols();
    }
    Index out = push(std::move(v), nullptr);
    std::vector<Index> copy = parts;
    nodes_.back().back = [this, copy, out]() {
        Eigen::Index at = 0;
        for (auto p : copy) {
            const auto c = value(p).cols();
            grad_ref(p) += grad_ref(out).middleCols(at, c);
            at += c;
        }
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::softmax_rows(Index a) {
    Mat<T> v = value(a);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const T m = v.row(r).maxCoeff();
        v.row(r) = (v.row(r).array() - m).exp();
        v.row(r) /= v.row(r).sum();
    }
    Index out = push(std::move(v), nullptr);
    nodes_.back().back = [this, a, out]() {
        const Mat<T>& y = value(out);
        const Mat<T>& g = grad_ref(out);
        Mat<T>& ga = grad_ref(a);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const T dot = (g.row(r).array() * y.row(r).array()).sum();
            ga.row(r).array() += (g.row(r).array() - dot) * y.row(r).array();
        }
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::log_softmax_rows(Index a) {
    Mat<T> v = value(a);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const T m = v.row(r).maxCoeff();
        const T lse = std::log((v.row(r).array() - m).exp().sum()) + m;
        v.row(r).array() -= lse;
    }
    Index out = push(std::move(v), nullptr);
    nodes_.back().back = [this, a, out]() {
        const Mat<T>& y = value(out);
        const Mat<T>& g = grad_ref(out);
        Mat<T>& ga = grad_ref(a);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const T gsum = g.row(r).sum();
            ga.row(r).array() += g.row(r).array() - y.row(r).array().exp() * gsum;
        }
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::layer_norm_rows(Index a, Index gain, Index bias) {
    const Mat<T>& x = value(a);
    if (value(gain).rows() != 1 || value(gain).cols() != x.cols() ||
        value(bias).rows() != 1 || value(bias).cols() != x.cols())
        throw_error(ErrorCategory::contract, "layer_norm gain/bias must be 1 x cols");
    const T eps = static_cast<T>(1e-5);
    Mat<T> xhat(x.rows(), x.cols());
    Mat<T> inv_std(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const T mu = x.row(r).mean();
        const T var = (x.row(r).array() - mu).square().mean();
        const T is = T(1) / std::sqrt(var + eps);
        inv_std(r, 0) = is;
        xhat.row(r) = (x.row(r).array() - mu) * is;
    }
    Mat<T> y = xhat;
    y.array().rowwise() *= value(gain).row(0).array();
    y.rowwise() += value(bias).row(0);
    Index out = push(std::move(y), nullptr);
    nodes_.back().back = [this, a, gain, bias, out, xhat, inv_std]() {
        const Mat<T>& g = grad_ref(out);
        grad_ref(bias) += g.colwise().sum();
        grad_ref(gain) += (g.array() * xhat.array()).colwise().sum().matrix();
        Mat<T>& ga = grad_ref(a);
        const auto grow = value(gain).row(0);
        const T n = static_cast<T>(xhat.cols());
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
            // dxhat = g .* gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat.*xhat)) * inv_std
            Eigen::Array<T, 1, Eigen::Dynamic> dxhat = g.row(r).array() * grow.array();
            const T m1 = dxhat.sum() / n;
            const T m2 = (dxhat * xhat.row(r).array()).sum() / n;
            ga.row(r).array() +=
                (dxhat - m1 - xhat.row(r).array() * m2) * inv_std(r, 0);
        }
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::gelu(Index a) {
    static const T inv_sqrt2 = static_cast<T>(0.7071067811865476);
    static const T inv_sqrt2pi = static_cast<T>(0.3989422804014327);
    const Mat<T>& x = value(a);
    Mat<T> y = x.unaryExpr([](T v) {
        return static_cast<T>(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
    });
    Index out = push(std::move(y), nullptr);
    nodes_.back().back = [this, a, out]() {
        const Mat<T>& x = value(a);
        Mat<T> d = x.unaryExpr([](T v) {
            const T cdf = static_cast<T>(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(static_cast<T>(-0.5) * v * v);
            return cdf + v * pdf;
        });
        grad_ref(a).array() += grad_ref(out).array() * d.array();
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::gather_rows(Index table, const std::vector<std::int32_t>& ids) {
    const Mat<T>& tab = value(table);
    Mat<T> v(static_cast<Eigen::Index>(ids.size()), tab.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tab.rows())
            throw_error(ErrorCategory::contract, "gather_rows id out of range");
        v.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
    }
    Index out = push(std::move(v), nullptr);
    nodes_.back().back = [this, table, ids, out]() {
        Mat<T>& gt = grad_ref(table);
        const Mat<T>& g = grad_ref(out);
        for (std::size_t i = 0; i < ids.size(); ++i)
            gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    };
    return out;
}

template <typename T>
typename Tape<T>::Index Tape<T>::weighted_sum(Index a, const Mat<T>& w) {
    if (value(a).rows() != w.rows() || value(a).cols() != w.cols())
        throw_error(ErrorCategory::contract, "weighted_sum shape mismatch");
    Mat<T> v(1, 1);
    v(0, 0) = (value(a).array() * w.array()).sum();
    Index out = push(std::move(v), nullptr);
    nodes_.back().back = [this, a, w, out]() {
        grad_ref(a).array() += w.array() * grad_ref(out)(0, 0);
    };
    return out;
}

template <typename T>
void Tape<T>::backward(Index scalar_node) {
    auto& n = nodes_[static_cast<std::size_t>(scalar_node)];
    if (n.value.rows() != 1 || n.value.cols() != 1)
        throw_error(ErrorCategory::contract, "backward() needs a 1x1 node");
    n.grad(0, 0) = T(1);
    for (std::size_t i = static_cast<std::size_t>(scalar_node) + 1; i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back();
    }
}

template class Tape<float>;
template class Tape<double>;

} // namespace pivotcap
