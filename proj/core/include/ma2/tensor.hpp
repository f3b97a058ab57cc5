#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace ma2 {

/// Dense cube tensor of fixed rank with every extent equal to `n`.
/// Storage is row-major; the last index varies fastest.
template <std::size_t Rank>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(int n) : n_(n), data_(size_for(n), 0.0) {}

    int extent() const noexcept { return n_; }
    std::size_t size() const noexcept { return data_.size(); }

    template <typename... Idx>
    double& operator()(Idx... idx) {
        static_assert(sizeof...(Idx) == Rank);
        return data_[offset({static_cast<int>(idx)...})];
    }

    template <typename... Idx>
    double operator()(Idx... idx) const {
        static_assert(sizeof...(Idx) == Rank);
        return data_[offset({static_cast<int>(idx)...})];
    }

    double& at(const std::array<int, Rank>& idx) { return data_[offset(idx)]; }
    double at(const std::array<int, Rank>& idx) const { return data_[offset(idx)]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double max_abs() const noexcept {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    // Decodes a flat offset into a multi-index.
    std::array<int, Rank> index_of(std::size_t flat) const {
        std::array<int, Rank> idx{};
        for (std::size_t d = Rank; d-- > 0;) {
            idx[d] = static_cast<int>(flat % static_cast<std::size_t>(n_));
            flat /= static_cast<std::size_t>(n_);
        }
        return idx;
    }

private:
    static std::size_t size_for(int n) {
        std::size_t s = 1;
        for (std::size_t d = 0; d < Rank; ++d) s *= static_cast<std::size_t>(n);
        return s;
    }

    std::size_t offset(const std::array<int, Rank>& idx) const {
        std::size_t off = 0;
        for (std::size_t d = 0; d < Rank; ++d) {
            assert(idx[d] >= 0 && idx[d] < n_);
            off = off * static_cast<std::size_t>(n_) + static_cast<std::size_t>(idx[d]);
        }
        return off;
    }

    int n_ = 0;
    std::vector<double> data_;
};

}  // namespace ma2
