#pragma once

#include <vector>

#include <Eigen/Dense>

#include "pivotcap/tape.hpp"

namespace pivotcap {

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Decoder attention layout: positions [0..M) keywords, [M] indicator,
// [M+1..M+1+L) caption tokens. Rows attend columns:
//   keyword rows   -> keyword columns (bidirectional within the block)
//   indicator row  -> keywords + itself
//   caption row i  -> keywords, indicator, caption columns <= i
// Padding columns are attended by nothing; padding rows attend only
// themselves so their softmax stays finite (their outputs are never read).
// pad_mask marks real positions (true = real); empty means no padding.
BoolMat build_attention_mask(int n_keywords, int n_caption,
                             const std::vector<bool>& pad_mask = {});

// Additive bias: 0 where allowed, -1e9 where masked. The -1e9 shift makes
// masked softmax contributions underflow to exactly zero, so masked inputs
// cannot perturb allowed positions even in the last bit.
template <typename T>
Mat<T> mask_bias(const BoolMat& mask) {
    Mat<T> bias(mask.rows(), mask.cols());
    for (Eigen::Index r = 0; r < mask.rows(); ++r)
        for (Eigen::Index c = 0; c < mask.cols(); ++c)
            bias(r, c) = mask(r, c) ? T(0) : static_cast<T>(-1e9);
    return bias;
}

} // namespace pivotcap
