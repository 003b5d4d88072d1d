#include "figmm/pattern.hpp"

#include <utility>

namespace figmm {

ObservedPattern::ObservedPattern(std::vector<bool> mask) : mask_(std::move(mask)) {
    observed_.reserve(mask_.size());
    for (int j = 0; j < static_cast<int>(mask_.size()); ++j) {
        if (mask_[static_cast<std::size_t>(j)]) {
            observed_.push_back(j);
        } else {
            missing_.push_back(j);
        }
    }
}

ObservedPattern ObservedPattern::all_observed(int dim) {
    return ObservedPattern(std::vector<bool>(static_cast<std::size_t>(dim), true));
}

std::string ObservedPattern::key() const {
    std::string s(mask_.size(), '0');
    for (std::size_t j = 0; j < mask_.size(); ++j) {
        if (mask_[j]) {
            s[j] = '1';
        }
    }
    return s;
}

}  // namespace figmm
