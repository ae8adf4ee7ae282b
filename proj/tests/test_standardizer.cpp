#include <cmath>

#include "doctest.h"
#include "unic/rng.hpp"
#include "unic/standardizer.hpp"

using unic::StandardizerState;
using unic::Tensor;

namespace {

Tensor normal_batch(std::size_t rows, std::size_t dim, std::uint64_t seed,
                    double mean = 0.0, double stdev = 1.0) {
    unic::SplitMix rng(seed);
    std::vector<double> v(rows * dim);
    for (double& x : v) x = mean + stdev * rng.next_normal();
    return Tensor::from(std::move(v), {rows, dim});
}

}  // namespace

TEST_CASE("constant stream converges to (c, 0)") {
    StandardizerState st;
    Tensor batch = Tensor::from({4.0, -1.0, 4.0, -1.0}, {2, 2});
    for (int i = 0; i < 500; ++i) st.update(batch);
    CHECK(st.running_mean[0] == doctest::Approx(4.0));
    CHECK(st.running_mean[1] == doctest::Approx(-1.0));
    CHECK(st.running_var[0] == doctest::Approx(0.0));
    CHECK(st.running_var[1] == doctest::Approx(0.0));
}

TEST_CASE("EMA recursion by hand") {
    StandardizerState st;
    st.decay = 0.9;
    // first batch initializes to its own stats: mean 1, biased var 4
    st.update(Tensor::from({-1.0, 3.0}, {2, 1}));
    CHECK(st.running_mean[0] == doctest::Approx(1.0));
    CHECK(st.running_var[0] == doctest::Approx(4.0));
    // second batch: mean 7, var 9 -> 0.9*prev + 0.1*batch
    st.update(Tensor::from({4.0, 10.0}, {2, 1}));
    CHECK(st.running_mean[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 7.0));
    CHECK(st.running_var[0] == doctest::Approx(0.9 * 4.0 + 0.1 * 9.0));

    CHECK_THROWS_AS(st.update(nullptr, 0, 1), unic::ContractError);
}

TEST_CASE("standard normal stream settles near (0, 1)") {
    StandardizerState st;
    for (int i = 0; i < 100; ++i) st.update(normal_batch(4096, 4, 100 + i));
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::fabs(st.running_mean[j]) < 0.05);
        CHECK(std::fabs(st.running_var[j] - 1.0) < 0.1);
    }
}

TEST_CASE("standardize hand cases") {
    StandardizerState st;
    st.eps = 0.0;
    st.update(Tensor::from({3.0, 3.0}, {2, 1}));  // mean 3
    st.running_var = {4.0};
    Tensor z = st.standardize(Tensor::from({5.0}, {1, 1}));
    CHECK(z.value() == doctest::Approx(1.0));

    Tensor at_mean = st.standardize(Tensor::from({3.0, 3.0, 3.0}, {3, 1}));
    for (double v : at_mean.values()) CHECK(v == 0.0);

    StandardizerState empty;
    CHECK_THROWS_AS(empty.standardize(Tensor::from({1.0}, {1, 1})),
                    unic::ContractError);

    StandardizerState pass;
    pass.pass_through = true;
    Tensor x = Tensor::from({7.0, -2.0}, {1, 2});
    CHECK(pass.standardize(x).values() == x.values());
}

TEST_CASE("standardized output of a stationary stream has unit statistics") {
    StandardizerState st;
    for (int i = 0; i < 200; ++i) st.update(normal_batch(512, 3, 900 + i, 2.5, 1.7));
    Tensor probe = normal_batch(2048, 3, 31337, 2.5, 1.7);
    Tensor z = st.standardize(probe);
    unic::FeatureStats fs = unic::report_statistics(z);
    CHECK(fs.avg_std_per_dimension == doctest::Approx(1.0).epsilon(0.2));
    for (std::size_t j = 0; j < 3; ++j) {
        double m = 0.0;
        for (std::size_t r = 0; r < 2048; ++r) m += z.values()[r * 3 + j];
        m /= 2048;
        CHECK(std::fabs(m) < 0.1);
    }
}

TEST_CASE("scale equivariance after convergence") {
    const double a = 3.0, b = -2.0;
    StandardizerState raw, scaled;
    for (int i = 0; i < 300; ++i) {
        Tensor batch = normal_batch(256, 2, 7000 + i, 0.5, 2.0);
        raw.update(batch);
        std::vector<double> v = batch.values();
        for (double& x : v) x = a * x + b;
        scaled.update(Tensor::from(v, batch.shape()));
    }
    Tensor probe = normal_batch(1024, 2, 424242, 0.5, 2.0);
    std::vector<double> pv = probe.values();
    for (double& x : pv) x = a * x + b;
    Tensor z1 = raw.standardize(probe);
    Tensor z2 = scaled.standardize(Tensor::from(pv, probe.shape()));
    for (std::size_t i = 0; i < z1.size(); ++i)
        CHECK(z1.values()[i] == doctest::Approx(z2.values()[i]).epsilon(0.05));
}

TEST_CASE("frozen state ignores updates and is bit-stable") {
    StandardizerState st;
    st.update(normal_batch(64, 2, 1));
    st.frozen = true;
    std::vector<double> mean = st.running_mean, var = st.running_var;
    st.update(normal_batch(64, 2, 2, 10.0, 5.0));
    CHECK(st.running_mean == mean);
    CHECK(st.running_var == var);

    Tensor probe = normal_batch(16, 2, 3);
    Tensor z1 = st.standardize(probe);
    Tensor z2 = st.standardize(probe);
    CHECK(z1.values() == z2.values());
}

TEST_CASE("report_statistics definitions") {
    unic::FeatureStats zero = unic::report_statistics(Tensor::zeros({4, 3}));
    CHECK(zero.avg_norm_per_sample == 0.0);
    CHECK(zero.avg_std_per_sample == 0.0);
    CHECK(zero.avg_std_per_dimension == 0.0);

    unic::FeatureStats one = unic::report_statistics(Tensor::from({3.0, 4.0}, {1, 2}));
    CHECK(one.avg_norm_per_sample == doctest::Approx(5.0));

    unic::FeatureStats iso = unic::report_statistics(normal_batch(2048, 64, 55));
    CHECK(iso.avg_std_per_dimension == doctest::Approx(1.0).epsilon(0.05));
    CHECK(iso.avg_std_per_sample == doctest::Approx(1.0).epsilon(0.05));
}
