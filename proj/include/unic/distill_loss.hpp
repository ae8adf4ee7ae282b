#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unic/tensor.hpp"

namespace unic {

// Distillation objective: per-token cosine + smooth-l1 losses, their
// CLS/patch/teacher aggregation, and the loss-balancing strategies.
//
// The smooth-l1 branch is vector-level by default: 0.5*||s-t||_2^2 when
// ||s-t||_1 < 1, else ||s-t||_1 - 0.5. The conventional elementwise-mean
// form is available behind a flag for sensitivity studies.

constexpr double kCosineNormFloor = 1e-12;

// Row-batched forms: S and T are n x d, the result holds one loss per row.
Tensor cosine_loss_rows(const Tensor& s, const Tensor& t);
Tensor smooth_l1_loss_rows(const Tensor& s, const Tensor& t);
Tensor smooth_l1_loss_rows_elementwise(const Tensor& s, const Tensor& t);
Tensor token_loss_rows(const Tensor& s, const Tensor& t,
                       bool elementwise_sl1 = false);

// Single-token forms on vectors (thin wrappers over the row forms).
Tensor cosine_loss(const Tensor& s, const Tensor& t);
Tensor smooth_l1_loss(const Tensor& s, const Tensor& t);
Tensor token_loss(const Tensor& s, const Tensor& t, bool elementwise_sl1 = false);

// Per-teacher image loss: (cls + mean over patches) / 2.
Tensor image_loss(const Tensor& cls_loss, const Tensor& patch_losses);
// Batched: cls_losses (B), patch_losses (B*P) -> per-image losses (B).
Tensor image_loss_rows(const Tensor& cls_losses, const Tensor& patch_losses,
                       std::size_t num_patches);

// --- balancing ----------------------------------------------------------

struct BalancingStrategy {
    enum class Kind { None, Tdrop, Manual, RandomOne, Adaloss };
    enum class Granularity { Image, Patch };

    Kind kind = Kind::None;
    double p = 0.25;  // tdrop drop probability
    Granularity granularity = Granularity::Image;
    std::vector<double> manual_weights;
    double adaloss_decay = 0.9;

    void validate(std::size_t num_teachers) const;
};

BalancingStrategy::Kind balancing_kind_from(const std::string& name);
std::string balancing_kind_name(BalancingStrategy::Kind kind);

// Stream ids for the counter-based draws; every coefficient is a pure
// function of these plus the image/position/teacher indices.
struct StepRngKey {
    std::uint64_t run_seed = 0;
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;
};

// Draw contract (fixed; tests recompute draws from it): image-level tdrop
// uses hash_key({run_seed, kTdropStreamTag, epoch, step, image, teacher}),
// patch level inserts the position index before the teacher, and
// random-one-teacher uses hash_key({run_seed, kRandomOneStreamTag, epoch,
// step}).
constexpr std::uint64_t kTdropStreamTag = 0x7D0F;
constexpr std::uint64_t kRandomOneStreamTag = 0x7D10;

// Teacher-dropping coefficients at image granularity. losses[i][t] are
// detached values; per image the max-loss teacher keeps alpha = 1 (ties go
// to the lowest teacher index), every other teacher draws alpha = 1 - delta
// with delta ~ Bernoulli(p).
std::vector<std::vector<double>> tdrop_coefficients(
    const std::vector<std::vector<double>>& losses, double p,
    const StepRngKey& key);

// Patch-level variant: losses[i][pos][t] with position 0 the CLS token.
std::vector<std::vector<std::vector<double>>> tdrop_patch_level(
    const std::vector<std::vector<std::vector<double>>>& losses, double p,
    const StepRngKey& key);

// Running per-teacher loss averages for the Adaloss baseline.
struct AdalossState {
    std::vector<double> averages;
    double decay = 0.9;

    bool initialized() const { return !averages.empty(); }
    void update(const std::vector<double>& batch_mean_losses);
};

// w_t = (1/avg_t) * M / sum_u(1/avg_u), with avg floored at 1e-8; weights
// are positive and sum to M.
std::vector<double> adaloss_weights(const std::vector<double>& averages);

// One uniformly chosen teacher per mini-batch: alpha is 1 for the pick.
std::vector<double> random_one_teacher(std::size_t num_teachers,
                                       const StepRngKey& key);

// Fixed positive multipliers; throws ConfigError on a nonpositive weight.
std::vector<double> manual_weights(const std::vector<double>& weights);

// --- step record ----------------------------------------------------------

// Everything the trainer logs about one image in one step.
struct LossBreakdown {
    struct PerTeacher {
        double cls_loss = 0.0;
        double patch_loss = 0.0;  // mean over patches
        std::vector<double> patch_losses;
        double alpha = 1.0;  // balancing weight applied
        double teacher_total = 0.0;  // (cls + patch)/2, pre-balance
    };
    std::vector<std::vector<PerTeacher>> images;  // [image][teacher]
    std::vector<std::string> teacher_names;
    double weighted_total = 0.0;
};

}  // namespace unic
