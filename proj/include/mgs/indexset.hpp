#pragma once

// Sorted, duplicate-free list of Gaussian indices. Used for the motion set
// G_m, the recolor set G_new, and the delta container.

#include <algorithm>
#include <cstdint>
#include <vector>

namespace mgs {

using IndexSet = std::vector<int32_t>;

inline void normalize_index_set(IndexSet& s) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
}

inline bool is_sorted_unique(const IndexSet& s) {
    for (size_t i = 1; i < s.size(); i++)
        if (s[i - 1] >= s[i]) return false;
    return true;
}

inline IndexSet index_union(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline IndexSet index_intersection(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline bool index_subset(const IndexSet& sub, const IndexSet& sup) {
    return std::includes(sup.begin(), sup.end(), sub.begin(), sub.end());
}

inline bool index_contains(const IndexSet& s, int32_t v) {
    return std::binary_search(s.begin(), s.end(), v);
}

} // namespace mgs
