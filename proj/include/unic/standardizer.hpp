#pragma once

#include <cstddef>
#include <vector>

#include "unic/tensor.hpp"

namespace unic {

// Online per-teacher, per-token-type feature standardization. Statistics
// are per dimension: the first update adopts the batch mean and biased
// batch variance, later updates blend with running <- decay*running +
// (1-decay)*batch.
struct StandardizerState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double decay = 0.99;
    double eps = 1e-6;
    long step_count = 0;
    bool frozen = false;
    bool pass_through = false;  // standardization disabled: identity

    bool initialized() const { return step_count > 0; }

    // rows x dim feature matrix; a no-op when frozen.
    void update(const double* feats, std::size_t rows, std::size_t dim);
    void update(const Tensor& feats);

    std::vector<double> standardized(const double* feats, std::size_t rows,
                                     std::size_t dim) const;
    // Returns an untracked constant tensor (targets carry no gradient).
    Tensor standardize(const Tensor& feats) const;
};

struct FeatureStats {
    double avg_norm_per_sample = 0.0;
    double avg_std_per_sample = 0.0;   // spread across dimensions, per row
    double avg_std_per_dimension = 0.0;  // spread across rows, per column
};

FeatureStats report_statistics(const double* feats, std::size_t rows, std::size_t dim);
FeatureStats report_statistics(const Tensor& feats);

}  // namespace unic
