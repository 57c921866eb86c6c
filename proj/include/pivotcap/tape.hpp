#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pivotcap {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// Reverse-mode autodiff over dense matrices. Nodes are appended in forward
// order; backward() replays the closures in reverse. One tape per forward
// pass; leaves (parameters, inputs) are created with input() and their
// gradients read back after backward().
template <typename T>
class Tape {
public:
    using Index = std::int32_t;

    Index input(Mat<T> value);

    const Mat<T>& value(Index i) const { return nodes_[static_cast<std::size_t>(i)].value; }
    const Mat<T>& grad(Index i) const { return nodes_[static_cast<std::size_t>(i)].grad; }
    std::size_t size() const { return nodes_.size(); }

    Index matmul(Index a, Index b);
    Index add(Index a, Index b);
    // broadcast-add a 1 x cols row vector to every row of a
    Index add_rowvec(Index a, Index row);
    // add a fixed (non-differentiable) matrix, e.g. mask bias or positions
    Index add_constant(Index a, const Mat<T>& c);
    Index scale(Index a, T s);
    Index transpose(Index a);
    Index concat_rows(Index a, Index b);
    Index slice_rows(Index a, Eigen::Index start, Eigen::Index count);
    Index slice_cols(Index a, Eigen::Index start, Eigen::Index count);
    Index hstack(const std::vector<Index>& parts);
    Index softmax_rows(Index a);
    Index log_softmax_rows(Index a);
    // row-wise layer norm; gain and bias are 1 x cols
    Index layer_norm_rows(Index a, Index gain, Index bias);
    Index gelu(Index a);
    // rows of a lookup table by id (embedding); backward scatter-adds
    Index gather_rows(Index table, const std::vector<std::int32_t>& ids);
    // scalar sum(a .* w) for a fixed weight matrix; the masked-NLL workhorse
    Index weighted_sum(Index a, const Mat<T>& w);

    // seeds d(node)/d(node) = 1 (node must be 1x1) and back-propagates
    void backward(Index scalar_node);

private:
    struct Node {
        Mat<T> value;
        Mat<T> grad;
        std::function<void()> back;
    };

    Index push(Mat<T> value, std::function<void()> back);
    Mat<T>& grad_ref(Index i) { return nodes_[static_cast<std::size_t>(i)].grad; }

    std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

} // namespace pivotcap
