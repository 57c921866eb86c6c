#include "pivotcap/attention_mask.hpp"

#include "pivotcap/error.hpp"

namespace pivotcap {

BoolMat build_attention_mask(int n_keywords, int n_caption,
                             const std::vector<bool>& pad_mask) {
    if (n_keywords < 0)
        throw_error(ErrorCategory::argument, "negative keyword count");
    if (n_caption < 1)
        throw_error(ErrorCategory::argument, "caption block must hold at least one token");
    const int m = n_keywords;
    const int size = m + 1 + n_caption;
    if (!pad_mask.empty() && static_cast<int>(pad_mask.size()) != size)
        throw_error(ErrorCategory::argument,
                    "pad mask has " + std::to_string(pad_mask.size()) +
                        " entries, expected " + std::to_string(size));
    auto real = [&](int i) { return pad_mask.empty() || pad_mask[static_cast<std::size_t>(i)]; };

    BoolMat mask = BoolMat::Constant(size, size, false);
    for (int r = 0; r < size; ++r) {
        if (!real(r)) {
            mask(r, r) = true;
            continue;
        }
        for (int c = 0; c < size; ++c) {
            if (!real(c)) continue;
            bool ok = false;
            if (r < m) {
                ok = c < m;
            } else if (r == m) {
                ok = c <= m;
            } else {
                ok = c < m + 1 || c <= r;
            }
            mask(r, c) = ok;
        }
    }
    return mask;
}

} // namespace pivotcap
