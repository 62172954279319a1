#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dualdose/trial_core.hpp"

namespace dualdose {

/// Weighted least-squares projection of `values` onto the nondecreasing cone
/// (pool-adjacent-violators). Pooled blocks carry their weighted mean.
inline std::vector<double> pava_isotonic(std::span<const double> values, std::span<const double> weights) {
    if (values.size() != weights.size()) throw DesignError("pava_isotonic: length mismatch");
    for (double w : weights)
        if (!(w > 0.0)) throw DesignError("pava_isotonic: weights must be positive");

    struct Block {
        double mean;
        double weight;
        std::size_t count;
    };
    std::vector<Block> stack;
    stack.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        stack.push_back({values[i], weights[i], 1});
        while (stack.size() > 1 && stack[stack.size() - 2].mean > stack.back().mean) {
            Block top = stack.back();
            stack.pop_back();
            Block& prev = stack.back();
            const double w = prev.weight + top.weight;
            prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w;
            prev.weight = w;
            prev.count += top.count;
        }
    }

    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& b : stack) out.insert(out.end(), b.count, b.mean);
    return out;
}

}  // namespace dualdose
