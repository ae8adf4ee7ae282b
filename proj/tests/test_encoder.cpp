#include <cmath>

#include "doctest.h"
#include "gradient_suite.hpp"
#include "test_util.hpp"
#include "unic/encoder.hpp"
#include "unic/rng.hpp"

using unic::EncoderConfig;
using unic::ParamSet;
using unic::Tensor;

namespace {

EncoderConfig ref_config() {
    EncoderConfig cfg;
    cfg.image_size = 32;
    cfg.patch_size = 8;
    cfg.dim = 32;
    cfg.depth = 2;
    cfg.heads = 4;
    cfg.mlp_ratio = 4;
    cfg.seed = 3;
    return cfg;
}

Tensor random_image(const EncoderConfig& cfg, std::uint64_t seed) {
    unic::SplitMix rng(seed);
    return gradsuite::random_tensor(rng, {cfg.channels, cfg.image_size, cfg.image_size},
                                    0.0, 1.0);
}

// Closed-form parameter count, independent of the builder.
std::size_t expected_param_count(const EncoderConfig& c) {
    std::size_t pv = c.patch_size * c.patch_size * c.channels;
    std::size_t t = c.num_patches() + 1;
    std::size_t h = c.mlp_ratio * c.dim;
    std::size_t embed = pv * c.dim + c.dim;
    std::size_t cls_pos = c.dim + t * c.dim;
    std::size_t per_block = 2 * c.dim                      // ln1
                            + c.dim * 3 * c.dim + 3 * c.dim  // qkv
                            + c.dim * c.dim + c.dim          // attn proj
                            + 2 * c.dim                      // ln2
                            + c.dim * h + h                  // mlp in
                            + h * c.dim + c.dim;             // mlp out
    return embed + cls_pos + c.depth * per_block + 2 * c.dim;  // + final ln
}

}  // namespace

TEST_CASE("config arithmetic and validation") {
    EncoderConfig cfg = ref_config();
    CHECK(cfg.num_patches() == 16);
    CHECK(cfg.tokens() == 17);

    EncoderConfig bad = cfg;
    bad.patch_size = 7;
    CHECK_THROWS_AS(bad.validate(), unic::ConfigError);
    bad = cfg;
    bad.heads = 5;
    CHECK_THROWS_AS(bad.validate(), unic::ConfigError);
}

TEST_CASE("builder determinism and parameter count oracle") {
    EncoderConfig cfg = ref_config();
    ParamSet a = unic::build_encoder(cfg);
    ParamSet b = unic::build_encoder(cfg);
    CHECK(testutil::hash_params(a) == testutil::hash_params(b));
    for (const auto& n : a.names()) CHECK(a.at(n).values() == b.at(n).values());

    CHECK(a.total_size() == expected_param_count(cfg));

    EncoderConfig other = cfg;
    other.seed = 4;
    CHECK(testutil::hash_params(unic::build_encoder(other)) != testutil::hash_params(a));
}

TEST_CASE("forward shapes and sensitivity") {
    EncoderConfig cfg = ref_config();
    ParamSet p = unic::build_encoder(cfg);
    Tensor img = random_image(cfg, 10);
    unic::EncoderOutput out = unic::encoder_forward(p, cfg, img);

    CHECK(out.layers.size() == cfg.depth);
    for (const Tensor& l : out.layers) {
        CHECK(l.rows() == 17);
        CHECK(l.cols() == cfg.dim);
    }
    CHECK(out.final_cls.shape() == unic::Shape{cfg.dim});
    CHECK(out.final_patches.rows() == 16);

    // final layer splits into (cls, patches)
    for (std::size_t j = 0; j < cfg.dim; ++j)
        CHECK(out.final_cls.values()[j] == out.layers.back().values()[j]);
    for (std::size_t i = 0; i < 16 * cfg.dim; ++i)
        CHECK(out.final_patches.values()[i] == out.layers.back().values()[cfg.dim + i]);

    // one perturbed pixel changes the output
    std::vector<double> pixels = img.values();
    pixels[5] += 0.5;
    unic::EncoderOutput out2 =
        unic::encoder_forward(p, cfg, Tensor::from(pixels, img.shape()));
    CHECK(out2.layers.back().values() != out.layers.back().values());

    EncoderConfig small = cfg;
    small.image_size = 16;
    CHECK_THROWS_AS(unic::encoder_forward(p, small, img), unic::DimensionError);
}

TEST_CASE("teacher mode records no gradient state") {
    EncoderConfig cfg = ref_config();
    ParamSet frozen = unic::build_encoder(cfg, /*trainable=*/false);
    std::uint64_t before = testutil::hash_params(frozen);

    unic::Graph g;
    unic::GraphScope scope(g);
    unic::EncoderOutput out = unic::encoder_forward(frozen, cfg, random_image(cfg, 1));
    CHECK(g.num_ops() == 0);
    CHECK_FALSE(out.layers.back().requires_grad());
    CHECK_FALSE(out.layers.back().has_grad());
    CHECK(testutil::hash_params(frozen) == before);
}

TEST_CASE("batch forward matches per-image forward and permutes with the batch") {
    EncoderConfig cfg = ref_config();
    cfg.depth = 1;
    ParamSet p = unic::build_encoder(cfg);
    std::vector<Tensor> images = {random_image(cfg, 21), random_image(cfg, 22),
                                  random_image(cfg, 23)};

    unic::BatchedEncoderOutput b = unic::encoder_forward_batch(p, cfg, images);
    for (std::size_t i = 0; i < images.size(); ++i) {
        unic::EncoderOutput solo = unic::encoder_forward(p, cfg, images[i]);
        for (std::size_t k = 0; k < 17 * cfg.dim; ++k)
            CHECK(b.layers.back().values()[i * 17 * cfg.dim + k] ==
                  solo.layers.back().values()[k]);
    }

    unic::BatchedEncoderOutput rev =
        unic::encoder_forward_batch(p, cfg, {images[2], images[1], images[0]});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 17 * cfg.dim; ++k)
            CHECK(rev.layers.back().values()[(2 - i) * 17 * cfg.dim + k] ==
                  b.layers.back().values()[i * 17 * cfg.dim + k]);
}

TEST_CASE("feature extraction is worker-count invariant") {
    EncoderConfig cfg = ref_config();
    cfg.depth = 1;
    ParamSet p = unic::build_encoder(cfg, false);
    std::vector<Tensor> images;
    for (int i = 0; i < 7; ++i) images.push_back(random_image(cfg, 100 + i));

    unic::FeatureMatrices f1 = unic::encoder_features(p, cfg, images, 1);
    unic::FeatureMatrices f4 = unic::encoder_features(p, cfg, images, 4);
    CHECK(f1.cls == f4.cls);
    CHECK(f1.patches == f4.patches);
}

TEST_CASE("classifier heads") {
    EncoderConfig cfg = ref_config();
    ParamSet p = unic::build_encoder(cfg);
    ParamSet cls_head = unic::attach_head(cfg, 5, unic::HeadSource::Cls, 9);
    ParamSet patch_head = unic::attach_head(cfg, 5, unic::HeadSource::Patch, 9);
    CHECK(cls_head.contains("head/cls/w"));
    CHECK(patch_head.contains("head/patch/w"));

    std::vector<Tensor> images = {random_image(cfg, 31), random_image(cfg, 32)};
    unic::BatchedEncoderOutput b = unic::encoder_forward_batch(p, cfg, images);

    Tensor cls_logits = unic::head_logits(cls_head, unic::HeadSource::Cls,
                                          unic::batch_cls_rows(b));
    CHECK(cls_logits.rows() == 2);
    CHECK(cls_logits.cols() == 5);

    Tensor patch_logits = unic::head_logits(patch_head, unic::HeadSource::Patch,
                                            unic::batch_patch_rows(b));
    CHECK(patch_logits.rows() == 32);  // 2 images x 16 patches

    // GAP head output equals the head applied to the mean of patch rows.
    Tensor gap = unic::batch_gap_rows(b);
    Tensor patches = unic::batch_patch_rows(b);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < cfg.dim; ++j) {
            double m = 0.0;
            for (std::size_t r = 0; r < 16; ++r)
                m += patches.values()[(i * 16 + r) * cfg.dim + j];
            m /= 16.0;
            CHECK(gap.values()[i * cfg.dim + j] == doctest::Approx(m).epsilon(1e-12));
        }

    CHECK_THROWS_AS(
        unic::head_logits(cls_head, unic::HeadSource::Cls,
                          Tensor::zeros({2, cfg.dim + 1})),
        unic::DimensionError);
}

TEST_CASE("end-to-end encoder gradient on the micro config") {
    EncoderConfig cfg;
    cfg.image_size = 16;
    cfg.patch_size = 8;
    cfg.dim = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    cfg.seed = 5;
    ParamSet ref = unic::build_encoder(cfg);
    Tensor flat = testutil::flatten_params(ref);
    Tensor img = random_image(cfg, 77);

    auto f = [&](const Tensor& x) {
        ParamSet p = testutil::params_from_flat(ref, x);
        unic::BatchedEncoderOutput out = unic::encoder_forward_batch(p, cfg, {img});
        unic::SplitMix aux(123);
        std::vector<double> w(out.layers.back().size());
        for (double& v : w) v = -1.0 + 2.0 * aux.next_u01();
        return unic::sum(unic::mul(out.layers.back(),
                                   Tensor::from(std::move(w), out.layers.back().shape())));
    };
    double err = unic::check_gradient_sampled(f, flat, 1e-5, 120, 2024);
    CHECK(err < 1e-4);
}
