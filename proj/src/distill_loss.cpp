#include "unic/distill_loss.hpp"

#include <cmath>

#include "unic/errors.hpp"
#include "unic/rng.hpp"

namespace unic {

namespace {

Tensor as_row(const Tensor& v) {
    if (v.shape().size() == 2) return v;
    return reshape(v, {1, v.size()});
}

void check_pair(const Tensor& s, const Tensor& t, const char* what) {
    if (s.shape().size() > 2 || t.shape().size() > 2)
        throw DimensionError(std::string(what) + ": expected vectors or row matrices");
    if (s.size() != t.size() ||
        (s.shape().size() == 2 && t.shape().size() == 2 && s.shape() != t.shape()))
        throw DimensionError(std::string(what) + ": shapes " + shape_str(s.shape()) +
                             " and " + shape_str(t.shape()) + " differ");
}

// 0/1 row mask from a predicate over a detached value vector.
Tensor value_mask(const Tensor& v, bool (*pred)(double)) {
    std::vector<double> m(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) m[i] = pred(v.values()[i]) ? 1.0 : 0.0;
    return Tensor::from(std::move(m), v.shape());
}

}  // namespace

Tensor cosine_loss_rows(const Tensor& s, const Tensor& t) {
    check_pair(s, t, "cosine_loss");
    Tensor sr = as_row(s), tr = as_row(t);
    Tensor dot = sum(mul(sr, tr), 1);
    Tensor ns = clamp_min(sqrt(sum(mul(sr, sr), 1)), kCosineNormFloor);
    Tensor nt = clamp_min(sqrt(sum(mul(tr, tr), 1)), kCosineNormFloor);
    Tensor cos = div(dot, mul(ns, nt));
    return add_scalar(scale(cos, -1.0), 1.0);
}

Tensor smooth_l1_loss_rows(const Tensor& s, const Tensor& t) {
    check_pair(s, t, "smooth_l1_loss");
    Tensor sr = as_row(s), tr = as_row(t);
    Tensor d = sub(sr, tr);
    Tensor l1 = sum(abs(d), 1);
    Tensor l2sq = sum(mul(d, d), 1);
    Tensor quad_mask = value_mask(l1, [](double x) { return x < 1.0; });
    Tensor lin_mask = value_mask(l1, [](double x) { return !(x < 1.0); });
    Tensor quad = scale(l2sq, 0.5);
    Tensor lin = add_scalar(l1, -0.5);
    return add(mul(quad_mask, quad), mul(lin_mask, lin));
}

Tensor smooth_l1_loss_rows_elementwise(const Tensor& s, const Tensor& t) {
    check_pair(s, t, "smooth_l1_loss");
    Tensor sr = as_row(s), tr = as_row(t);
    Tensor d = sub(sr, tr);
    Tensor a = abs(d);
    Tensor quad_mask = value_mask(a, [](double x) { return x < 1.0; });
    Tensor lin_mask = value_mask(a, [](double x) { return !(x < 1.0); });
    Tensor quad = scale(mul(d, d), 0.5);
    Tensor lin = add_scalar(a, -0.5);
    return mean(add(mul(quad_mask, quad), mul(lin_mask, lin)), 1);
}

Tensor token_loss_rows(const Tensor& s, const Tensor& t, bool elementwise_sl1) {
    Tensor cos = cosine_loss_rows(s, t);
    Tensor sl1 = elementwise_sl1 ? smooth_l1_loss_rows_elementwise(s, t)
                                 : smooth_l1_loss_rows(s, t);
    return scale(add(cos, sl1), 0.5);
}

Tensor cosine_loss(const Tensor& s, const Tensor& t) {
    return cosine_loss_rows(s, t);
}

Tensor smooth_l1_loss(const Tensor& s, const Tensor& t) {
    return smooth_l1_loss_rows(s, t);
}

Tensor token_loss(const Tensor& s, const Tensor& t, bool elementwise_sl1) {
    return token_loss_rows(s, t, elementwise_sl1);
}

Tensor image_loss(const Tensor& cls_loss, const Tensor& patch_losses) {
    if (patch_losses.size() == 0)
        throw ContractError("image_loss: no patch losses");
    return scale(add(cls_loss, mean(patch_losses)), 0.5);
}

Tensor image_loss_rows(const Tensor& cls_losses, const Tensor& patch_losses,
                       std::size_t num_patches) {
    if (num_patches == 0) throw ContractError("image_loss: zero patches");
    const std::size_t batch = cls_losses.size();
    if (patch_losses.size() != batch * num_patches)
        throw DimensionError("image_loss: expected " +
                             std::to_string(batch * num_patches) + " patch losses, got " +
                             std::to_string(patch_losses.size()));
    Tensor per_image = mean(reshape(patch_losses, {batch, num_patches}), 1);
    return scale(add(cls_losses, per_image), 0.5);
}

// --- balancing ----------------------------------------------------------

void BalancingStrategy::validate(std::size_t num_teachers) const {
    if (p < 0.0 || p > 1.0)
        throw ConfigError("balancing: tdrop probability must lie in [0,1]");
    if (kind == Kind::Manual) {
        if (manual_weights.size() != num_teachers)
            throw ConfigError("balancing: " + std::to_string(manual_weights.size()) +
                              " manual weights for " + std::to_string(num_teachers) +
                              " teachers");
        for (double w : manual_weights)
            if (!(w > 0.0)) throw ConfigError("balancing: manual weights must be positive");
    }
}

BalancingStrategy::Kind balancing_kind_from(const std::string& name) {
    using K = BalancingStrategy::Kind;
    if (name == "none") return K::None;
    if (name == "tdrop") return K::Tdrop;
    if (name == "manual") return K::Manual;
    if (name == "random_one") return K::RandomOne;
    if (name == "adaloss") return K::Adaloss;
    throw ConfigError("unknown balancing kind '" + name + "'");
}

std::string balancing_kind_name(BalancingStrategy::Kind kind) {
    using K = BalancingStrategy::Kind;
    switch (kind) {
        case K::None: return "none";
        case K::Tdrop: return "tdrop";
        case K::Manual: return "manual";
        case K::RandomOne: return "random_one";
        case K::Adaloss: return "adaloss";
    }
    return "none";
}

namespace {

std::size_t argmax_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

std::vector<std::vector<double>> tdrop_coefficients(
    const std::vector<std::vector<double>>& losses, double p,
    const StepRngKey& key) {
    if (losses.empty() || losses[0].empty())
        throw ContractError("tdrop: empty teacher set");
    std::vector<std::vector<double>> alpha(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const std::size_t keep = argmax_lowest(losses[i]);
        alpha[i].assign(losses[i].size(), 1.0);
        for (std::size_t t = 0; t < losses[i].size(); ++t) {
            if (t == keep) continue;
            const bool drop = bernoulli(
                hash_key({key.run_seed, kTdropStreamTag, key.epoch, key.step, i, t}), p);
            alpha[i][t] = drop ? 0.0 : 1.0;
        }
    }
    return alpha;
}

std::vector<std::vector<std::vector<double>>> tdrop_patch_level(
    const std::vector<std::vector<std::vector<double>>>& losses, double p,
    const StepRngKey& key) {
    if (losses.empty() || losses[0].empty() || losses[0][0].empty())
        throw ContractError("tdrop: empty teacher set");
    std::vector<std::vector<std::vector<double>>> alpha(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        alpha[i].resize(losses[i].size());
        for (std::size_t pos = 0; pos < losses[i].size(); ++pos) {
            const std::size_t keep = argmax_lowest(losses[i][pos]);
            alpha[i][pos].assign(losses[i][pos].size(), 1.0);
            for (std::size_t t = 0; t < losses[i][pos].size(); ++t) {
                if (t == keep) continue;
                const bool drop = bernoulli(
                    hash_key({key.run_seed, kTdropStreamTag, key.epoch, key.step, i, pos, t}),
                    p);
                alpha[i][pos][t] = drop ? 0.0 : 1.0;
            }
        }
    }
    return alpha;
}

void AdalossState::update(const std::vector<double>& batch_mean_losses) {
    if (!initialized()) {
        averages = batch_mean_losses;
        return;
    }
    if (averages.size() != batch_mean_losses.size())
        throw ContractError("adaloss: teacher count changed");
    for (std::size_t t = 0; t < averages.size(); ++t)
        averages[t] = decay * averages[t] + (1.0 - decay) * batch_mean_losses[t];
}

std::vector<double> adaloss_weights(const std::vector<double>& averages) {
    if (averages.empty()) throw ContractError("adaloss: empty teacher set");
    const double m = static_cast<double>(averages.size());
    std::vector<double> inv(averages.size());
    double total = 0.0;
    for (std::size_t t = 0; t < averages.size(); ++t) {
        inv[t] = 1.0 / std::max(averages[t], 1e-8);
        total += inv[t];
    }
    std::vector<double> w(averages.size());
    for (std::size_t t = 0; t < averages.size(); ++t) w[t] = inv[t] * m / total;
    return w;
}

std::vector<double> random_one_teacher(std::size_t num_teachers,
                                       const StepRngKey& key) {
    if (num_teachers == 0) throw ContractError("random_one_teacher: empty teacher set");
    std::vector<double> alpha(num_teachers, 0.0);
    alpha[uniform_index(hash_key({key.run_seed, kRandomOneStreamTag, key.epoch, key.step}),
                        num_teachers)] = 1.0;
    return alpha;
}

std::vector<double> manual_weights(const std::vector<double>& weights) {
    for (double w : weights)
        if (!(w > 0.0)) throw ConfigError("manual balancing: weights must be positive");
    return weights;
}

}  // namespace unic
