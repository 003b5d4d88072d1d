#pragma once

#include <string>
#include <vector>

namespace figmm {

// Which coordinates of a p-dimensional record are observed. Immutable; the
// observed/missing index lists are precomputed because every density and
// conditioning operation consumes them.
class ObservedPattern {
public:
    explicit ObservedPattern(std::vector<bool> mask);

    static ObservedPattern all_observed(int dim);

    int dim() const noexcept { return static_cast<int>(mask_.size()); }
    int observed_count() const noexcept { return static_cast<int>(observed_.size()); }
    int missing_count() const noexcept { return static_cast<int>(missing_.size()); }

    bool is_observed(int j) const { return mask_[static_cast<std::size_t>(j)]; }
    bool fully_observed() const noexcept { return missing_.empty(); }
    bool fully_missing() const noexcept { return observed_.empty(); }

    const std::vector<int>& observed_indices() const noexcept { return observed_; }
    const std::vector<int>& missing_indices() const noexcept { return missing_; }
    const std::vector<bool>& mask() const noexcept { return mask_; }

    // '1'/'0' string, usable as a grouping key.
    std::string key() const;

    bool operator==(const ObservedPattern& other) const { return mask_ == other.mask_; }

private:
    std::vector<bool> mask_;
    std::vector<int> observed_;
    std::vector<int> missing_;
};

}  // namespace figmm
