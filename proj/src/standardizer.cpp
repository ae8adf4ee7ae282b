#include "unic/standardizer.hpp"

#include <cmath>

#include "unic/errors.hpp"

namespace unic {

void StandardizerState::update(const double* feats, std::size_t rows,
                               std::size_t dim) {
    if (rows == 0) throw ContractError("standardizer update: empty batch");
    if (frozen || pass_through) return;
    if (initialized() && running_mean.size() != dim)
        throw DimensionError("standardizer update: width changed from " +
                             std::to_string(running_mean.size()) + " to " +
                             std::to_string(dim));
    std::vector<double> m(dim, 0.0), v(dim, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < dim; ++j) m[j] += feats[r * dim + j];
    for (std::size_t j = 0; j < dim; ++j) m[j] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < dim; ++j) {
            const double c = feats[r * dim + j] - m[j];
            v[j] += c * c;
        }
    for (std::size_t j = 0; j < dim; ++j) v[j] /= static_cast<double>(rows);

    if (!initialized()) {
        running_mean = std::move(m);
        running_var = std::move(v);
    } else {
        for (std::size_t j = 0; j < dim; ++j) {
            running_mean[j] = decay * running_mean[j] + (1.0 - decay) * m[j];
            running_var[j] = decay * running_var[j] + (1.0 - decay) * v[j];
        }
    }
    ++step_count;
}

void StandardizerState::update(const Tensor& feats) {
    update(feats.values().data(), feats.rows(), feats.cols());
}

std::vector<double> StandardizerState::standardized(const double* feats,
                                                    std::size_t rows,
                                                    std::size_t dim) const {
    std::vector<double> out(rows * dim);
    if (pass_through) {
        std::copy(feats, feats + rows * dim, out.begin());
        return out;
    }
    if (!initialized())
        throw ContractError("standardize: no statistics yet (update first)");
    if (running_mean.size() != dim)
        throw DimensionError("standardize: width " + std::to_string(dim) +
                             " does not match statistics width " +
                             std::to_string(running_mean.size()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < dim; ++j)
            out[r * dim + j] = (feats[r * dim + j] - running_mean[j]) /
                               std::sqrt(running_var[j] + eps);
    return out;
}

Tensor StandardizerState::standardize(const Tensor& feats) const {
    return Tensor::from(standardized(feats.values().data(), feats.rows(), feats.cols()),
                        feats.shape());
}

FeatureStats report_statistics(const double* feats, std::size_t rows,
                               std::size_t dim) {
    FeatureStats st;
    if (rows == 0 || dim == 0) return st;
    for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0, m = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double x = feats[r * dim + j];
            sq += x * x;
            m += x;
        }
        m /= static_cast<double>(dim);
        double var = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double c = feats[r * dim + j] - m;
            var += c * c;
        }
        var /= static_cast<double>(dim);
        st.avg_norm_per_sample += std::sqrt(sq);
        st.avg_std_per_sample += std::sqrt(var);
    }
    st.avg_norm_per_sample /= static_cast<double>(rows);
    st.avg_std_per_sample /= static_cast<double>(rows);

    for (std::size_t j = 0; j < dim; ++j) {
        double m = 0.0;
        for (std::size_t r = 0; r < rows; ++r) m += feats[r * dim + j];
        m /= static_cast<double>(rows);
        double var = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double c = feats[r * dim + j] - m;
            var += c * c;
        }
        var /= static_cast<double>(rows);
        st.avg_std_per_dimension += std::sqrt(var);
    }
    st.avg_std_per_dimension /= static_cast<double>(dim);
    return st;
}

FeatureStats report_statistics(const Tensor& feats) {
    return report_statistics(feats.values().data(), feats.rows(), feats.cols());
}

}  // namespace unic
