// union_find.hpp
#pragma once
#include <cstddef>
#include <numeric>
#include <vector>

namespace fedbai {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t x, std::size_t y) {
        std::size_t px = find(x), py = find(y);
        if (px == py) return;
        if (rank_[px] < rank_[py]) std::swap(px, py);
        parent_[py] = px;
        if (rank_[px] == rank_[py]) ++rank_[px];
    }

    bool connected(std::size_t x, std::size_t y) { return find(x) == find(y); }

    std::size_t size() const noexcept { return parent_.size(); }

private:
    std::vector<std::size_t> parent_;
    std::vector<unsigned> rank_;
};

}  // namespace fedbai
