#pragma once

// Independent recomputation of the distillation losses and balancing rules
// with raw double loops. Deliberately shares nothing with the library
// implementation except the documented formulas and the RNG draw contract,
// so agreement must be exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "unic/distill_loss.hpp"
#include "unic/rng.hpp"

namespace loss_oracle {

inline double cosine(const std::vector<double>& s, const std::vector<double>& t) {
    double dot = 0.0, ss = 0.0, tt = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        dot += s[i] * t[i];
        ss += s[i] * s[i];
        tt += t[i] * t[i];
    }
    double ns = std::max(std::sqrt(ss), 1e-12);
    double nt = std::max(std::sqrt(tt), 1e-12);
    return 1.0 - dot / (ns * nt);
}

inline double smooth_l1(const std::vector<double>& s, const std::vector<double>& t) {
    double l1 = 0.0, l2sq = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double d = s[i] - t[i];
        l1 += std::fabs(d);
        l2sq += d * d;
    }
    return l1 < 1.0 ? 0.5 * l2sq : l1 - 0.5;
}

inline double smooth_l1_elementwise(const std::vector<double>& s,
                                    const std::vector<double>& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double d = s[i] - t[i];
        double a = std::fabs(d);
        acc += a < 1.0 ? 0.5 * d * d : a - 0.5;
    }
    return acc / static_cast<double>(s.size());
}

inline double token(const std::vector<double>& s, const std::vector<double>& t) {
    return (cosine(s, t) + smooth_l1(s, t)) / 2.0;
}

inline double image(double cls, const std::vector<double>& patches) {
    double acc = 0.0;
    for (double p : patches) acc += p;
    return (cls + acc / static_cast<double>(patches.size())) / 2.0;
}

inline std::vector<double> adaloss(const std::vector<double>& averages) {
    double total = 0.0;
    std::vector<double> inv(averages.size());
    for (std::size_t i = 0; i < averages.size(); ++i) {
        inv[i] = 1.0 / std::max(averages[i], 1e-8);
        total += inv[i];
    }
    std::vector<double> w(averages.size());
    for (std::size_t i = 0; i < averages.size(); ++i)
        w[i] = inv[i] * static_cast<double>(averages.size()) / total;
    return w;
}

// Re-derives Eq.-style dropping from the documented draw contract.
inline std::vector<std::vector<double>> tdrop(
    const std::vector<std::vector<double>>& losses, double p,
    const unic::StepRngKey& key) {
    std::vector<std::vector<double>> alpha(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::size_t keep = 0;
        for (std::size_t t = 1; t < losses[i].size(); ++t)
            if (losses[i][t] > losses[i][keep]) keep = t;
        alpha[i].assign(losses[i].size(), 1.0);
        for (std::size_t t = 0; t < losses[i].size(); ++t) {
            if (t == keep) continue;
            double u = unic::u01(unic::hash_key(
                {key.run_seed, unic::kTdropStreamTag, key.epoch, key.step, i, t}));
            alpha[i][t] = (u < p) ? 0.0 : 1.0;
        }
    }
    return alpha;
}

}  // namespace loss_oracle
