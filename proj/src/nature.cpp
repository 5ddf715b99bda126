#include "cvar/nature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cvar/tolerances.hpp"

namespace cvar {

void TransferInstance::validate() const {
    if (probs.empty() || probs.size() != funcs.size())
        throw std::invalid_argument("transfer: probs and funcs must align and be non-empty");
    double sum = 0;
    for (double p : probs) {
        if (!(p > 0)) throw std::invalid_argument("transfer: probabilities must be positive");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > tol::prob_sum)
        throw std::invalid_argument("transfer: probabilities sum to " + std::to_string(sum));
    for (const auto& f : funcs)
        if (std::fabs(f.domain_length() - 1.0) > tol::length_sum_rel)
            throw std::invalid_argument("transfer: successor functions must live on [0, 1]");
}

std::vector<PwlConcave> scaled_sources(const TransferInstance& inst) {
    inst.validate();
    std::vector<PwlConcave> out;
    out.reserve(inst.funcs.size());
    for (std::size_t i = 0; i < inst.funcs.size(); ++i)
        out.push_back(scale_argument(inst.funcs[i], inst.probs[i]));
    return out;
}

PwlConcave transfer_value(const TransferInstance& inst) {
    return merge_sources(scaled_sources(inst));
}

NatureAllocation optimal_allocation(const TransferInstance& inst, double y) {
    inst.validate();
    if (y < 0 || y > 1 + 1e-12)
        throw std::invalid_argument("optimal_allocation: budget outside [0, 1]");
    y = std::min(y, 1.0);

    const int k = inst.size();
    NatureAllocation alloc;
    alloc.y = y;
    alloc.z.assign(static_cast<std::size_t>(k), 0.0);
    alloc.b.assign(static_cast<std::size_t>(k), 0.0);

    const std::vector<PwlConcave> sources = scaled_sources(inst);
    for (const auto& v : sources) alloc.value += v.value_at_zero();

    if (y == 0) {
        // Any split is feasible at zero budget; the undistorted one is optimal.
        std::fill(alloc.b.begin(), alloc.b.end(), 1.0);
        return alloc;
    }

    struct Piece {
        double slope;
        double length;
        int source;
    };
    std::vector<Piece> pieces;
    for (int i = 0; i < k; ++i)
        for (const auto& s : sources[static_cast<std::size_t>(i)].segments())
            pieces.push_back(Piece{s.slope, s.length, i});
    std::stable_sort(pieces.begin(), pieces.end(),
                     [](const Piece& a, const Piece& b) { return a.slope > b.slope; });

    double rem = y;
    for (const auto& piece : pieces) {
        const double take = std::min(piece.length, rem);
        alloc.z[static_cast<std::size_t>(piece.source)] += take;
        alloc.value += piece.slope * take;
        rem -= take;
        if (rem <= 0) break;
    }
    for (int i = 0; i < k; ++i)
        alloc.b[static_cast<std::size_t>(i)] =
            alloc.z[static_cast<std::size_t>(i)] / (y * inst.probs[static_cast<std::size_t>(i)]);
    return alloc;
}

}  // namespace cvar
