#include "unic/encoder.hpp"

#include <cmath>
#include <thread>

#include "unic/rng.hpp"

namespace unic {

namespace {

std::string blk(std::size_t l, const char* leaf) {
    return "enc/blk" + std::to_string(l) + "/" + leaf;
}

Tensor normal_tensor(SplitMix& rng, Shape shape, double std_dev, bool trainable) {
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = rng.next_normal() * std_dev;
    return Tensor::from(std::move(v), std::move(shape), trainable);
}

}  // namespace

void EncoderConfig::validate() const {
    if (image_size == 0 || channels == 0 || patch_size == 0 || dim == 0 ||
        depth == 0 || heads == 0 || mlp_ratio == 0)
        throw ConfigError("encoder config: all sizes must be positive");
    if (image_size % patch_size != 0)
        throw ConfigError("encoder config: patch size " + std::to_string(patch_size) +
                          " does not divide image size " + std::to_string(image_size));
    if (dim % heads != 0)
        throw ConfigError("encoder config: dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads));
}

ParamSet build_encoder(const EncoderConfig& cfg, bool trainable) {
    cfg.validate();
    SplitMix rng(mix64(cfg.seed ^ hash_str("encoder-init")));
    ParamSet p;
    const std::size_t d = cfg.dim, h = cfg.hidden_dim();
    p.insert("enc/patch_embed/w", normal_tensor(rng, {cfg.patch_vec(), d}, 0.02, trainable));
    p.insert("enc/patch_embed/b", Tensor::zeros({d}, trainable));
    p.insert("enc/cls", normal_tensor(rng, {1, d}, 0.02, trainable));
    p.insert("enc/pos", normal_tensor(rng, {cfg.tokens(), d}, 0.02, trainable));
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        p.insert(blk(l, "ln1/g"), Tensor::full({d}, 1.0, trainable));
        p.insert(blk(l, "ln1/b"), Tensor::zeros({d}, trainable));
        p.insert(blk(l, "attn/qkv_w"), normal_tensor(rng, {d, 3 * d}, 0.02, trainable));
        p.insert(blk(l, "attn/qkv_b"), Tensor::zeros({3 * d}, trainable));
        p.insert(blk(l, "attn/proj_w"), normal_tensor(rng, {d, d}, 0.02, trainable));
        p.insert(blk(l, "attn/proj_b"), Tensor::zeros({d}, trainable));
        p.insert(blk(l, "ln2/g"), Tensor::full({d}, 1.0, trainable));
        p.insert(blk(l, "ln2/b"), Tensor::zeros({d}, trainable));
        p.insert(blk(l, "mlp/w1"), normal_tensor(rng, {d, h}, 0.02, trainable));
        p.insert(blk(l, "mlp/b1"), Tensor::zeros({h}, trainable));
        p.insert(blk(l, "mlp/w2"), normal_tensor(rng, {h, d}, 0.02, trainable));
        p.insert(blk(l, "mlp/b2"), Tensor::zeros({d}, trainable));
    }
    p.insert("enc/ln_f/g", Tensor::full({d}, 1.0, trainable));
    p.insert("enc/ln_f/b", Tensor::zeros({d}, trainable));
    return p;
}

Tensor patchify(const Tensor& image, const EncoderConfig& cfg) {
    const Shape want = {cfg.channels, cfg.image_size, cfg.image_size};
    if (image.shape() != want && image.size() != shape_size(want))
        throw DimensionError("patchify: image shape " + shape_str(image.shape()) +
                             " does not match config " + shape_str(want));
    const std::size_t g = cfg.grid(), ps = cfg.patch_size, is = cfg.image_size;
    std::vector<double> out(cfg.num_patches() * cfg.patch_vec());
    const double* img = image.values().data();
    std::size_t k = 0;
    for (std::size_t pr = 0; pr < g; ++pr)
        for (std::size_t pc = 0; pc < g; ++pc)
            for (std::size_t c = 0; c < cfg.channels; ++c)
                for (std::size_t y = 0; y < ps; ++y)
                    for (std::size_t x = 0; x < ps; ++x)
                        out[k++] = img[c * is * is + (pr * ps + y) * is + pc * ps + x];
    return Tensor::from(std::move(out), {cfg.num_patches(), cfg.patch_vec()});
}

namespace {

Tensor assemble_tokens(const ParamSet& p, const EncoderConfig& cfg,
                       const Tensor& embedded_rows, std::size_t image_index) {
    Tensor patch_rows = slice(embedded_rows, 0, image_index * cfg.num_patches(),
                              cfg.num_patches());
    Tensor toks = concat({p.at("enc/cls"), patch_rows}, 0);
    return add(toks, p.at("enc/pos"));
}

Tensor attention_block(const ParamSet& p, const EncoderConfig& cfg, std::size_t l,
                       const Tensor& x, std::size_t batch) {
    const std::size_t d = cfg.dim, t = cfg.tokens(), hd = cfg.head_dim();
    Tensor normed = layer_norm(x, p.at(blk(l, "ln1/g")), p.at(blk(l, "ln1/b")),
                               kLayerNormEps);
    Tensor qkv = add(matmul(normed, p.at(blk(l, "attn/qkv_w"))),
                     p.at(blk(l, "attn/qkv_b")));
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<Tensor> per_image;
    per_image.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        Tensor rows = slice(qkv, 0, i * t, t);
        std::vector<Tensor> heads;
        heads.reserve(cfg.heads);
        for (std::size_t hh = 0; hh < cfg.heads; ++hh) {
            Tensor q = slice(rows, 1, hh * hd, hd);
            Tensor k = slice(rows, 1, d + hh * hd, hd);
            Tensor v = slice(rows, 1, 2 * d + hh * hd, hd);
            Tensor att = softmax(scale(matmul(q, transpose(k)), inv_scale));
            heads.push_back(matmul(att, v));
        }
        per_image.push_back(concat(heads, 1));
    }
    Tensor merged = (batch == 1) ? per_image[0] : concat(per_image, 0);
    return add(matmul(merged, p.at(blk(l, "attn/proj_w"))), p.at(blk(l, "attn/proj_b")));
}

Tensor mlp_block(const ParamSet& p, std::size_t l, const Tensor& x) {
    Tensor normed = layer_norm(x, p.at(blk(l, "ln2/g")), p.at(blk(l, "ln2/b")),
                               kLayerNormEps);
    Tensor h = gelu(add(matmul(normed, p.at(blk(l, "mlp/w1"))), p.at(blk(l, "mlp/b1"))));
    return add(matmul(h, p.at(blk(l, "mlp/w2"))), p.at(blk(l, "mlp/b2")));
}

}  // namespace

Tensor embed_tokens(const ParamSet& params, const EncoderConfig& cfg,
                    const Tensor& image) {
    Tensor patches = patchify(image, cfg);
    Tensor emb = add(matmul(patches, params.at("enc/patch_embed/w")),
                     params.at("enc/patch_embed/b"));
    return assemble_tokens(params, cfg, emb, 0);
}

BatchedEncoderOutput encoder_forward_batch(const ParamSet& params,
                                           const EncoderConfig& cfg,
                                           const std::vector<Tensor>& images) {
    if (images.empty()) throw ContractError("encoder_forward_batch: empty batch");
    const std::size_t batch = images.size();
    std::vector<Tensor> patch_mats;
    patch_mats.reserve(batch);
    for (const Tensor& img : images) patch_mats.push_back(patchify(img, cfg));
    Tensor all_patches = (batch == 1) ? patch_mats[0] : concat(patch_mats, 0);
    Tensor emb = add(matmul(all_patches, params.at("enc/patch_embed/w")),
                     params.at("enc/patch_embed/b"));
    std::vector<Tensor> toks;
    toks.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i)
        toks.push_back(assemble_tokens(params, cfg, emb, i));
    Tensor x = (batch == 1) ? toks[0] : concat(toks, 0);

    BatchedEncoderOutput out;
    out.batch = batch;
    out.tokens = cfg.tokens();
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        x = add(x, attention_block(params, cfg, l, x, batch));
        x = add(x, mlp_block(params, l, x));
        if (l + 1 < cfg.depth) out.layers.push_back(x);
    }
    out.layers.push_back(layer_norm(x, params.at("enc/ln_f/g"), params.at("enc/ln_f/b"),
                                    kLayerNormEps));
    return out;
}

EncoderOutput encoder_forward(const ParamSet& params, const EncoderConfig& cfg,
                              const Tensor& image) {
    BatchedEncoderOutput b = encoder_forward_batch(params, cfg, {image});
    EncoderOutput out;
    out.layers = b.layers;
    const Tensor& fin = b.layers.back();
    out.final_cls = reshape(slice(fin, 0, 0, 1), {cfg.dim});
    out.final_patches = slice(fin, 0, 1, cfg.num_patches());
    return out;
}

FeatureMatrices encoder_features(const ParamSet& params, const EncoderConfig& cfg,
                                 const std::vector<Tensor>& images, int workers) {
    FeatureMatrices fm;
    fm.batch = images.size();
    fm.dim = cfg.dim;
    fm.num_patches = cfg.num_patches();
    fm.cls.assign(fm.batch * fm.dim, 0.0);
    fm.patches.assign(fm.batch * fm.num_patches * fm.dim, 0.0);
    if (images.empty()) return fm;

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        NoGradScope ng;
        for (std::size_t i = lo; i < hi; ++i) {
            BatchedEncoderOutput b = encoder_forward_batch(params, cfg, {images[i]});
            const std::vector<double>& fin = b.layers.back().values();
            std::copy(fin.begin(), fin.begin() + fm.dim, fm.cls.begin() + i * fm.dim);
            std::copy(fin.begin() + fm.dim, fin.end(),
                      fm.patches.begin() + i * fm.num_patches * fm.dim);
        }
    };

    const std::size_t n = images.size();
    const std::size_t nw = std::max<std::size_t>(
        1, std::min<std::size_t>(static_cast<std::size_t>(workers > 0 ? workers : 1), n));
    if (nw == 1) {
        run_range(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + nw - 1) / nw;
        for (std::size_t w = 0; w < nw; ++w) {
            const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return fm;
}

// --- heads --------------------------------------------------------------

std::string head_source_name(HeadSource s) {
    switch (s) {
        case HeadSource::Cls: return "cls";
        case HeadSource::Gap: return "gap";
        case HeadSource::Patch: return "patch";
    }
    return "cls";
}

HeadSource head_source_from(const std::string& s) {
    if (s == "cls") return HeadSource::Cls;
    if (s == "gap") return HeadSource::Gap;
    if (s == "patch") return HeadSource::Patch;
    throw ConfigError("unknown feature source '" + s + "' (cls|gap|patch)");
}

ParamSet attach_head(const EncoderConfig& cfg, std::size_t num_classes,
                     HeadSource source, std::uint64_t seed) {
    SplitMix rng(mix64(seed ^ hash_str("head-init")));
    ParamSet p;
    const std::string prefix = "head/" + head_source_name(source);
    p.insert(prefix + "/w", normal_tensor(rng, {cfg.dim, num_classes}, 0.02, true));
    p.insert(prefix + "/b", Tensor::zeros({num_classes}, true));
    return p;
}

Tensor head_logits(const ParamSet& head, HeadSource source, const Tensor& features) {
    const std::string prefix = "head/" + head_source_name(source);
    const Tensor& w = head.at(prefix + "/w");
    if (features.cols() != w.rows())
        throw DimensionError("head_logits: feature width " +
                             std::to_string(features.cols()) +
                             " does not match head input " + std::to_string(w.rows()));
    return add(matmul(features, w), head.at(prefix + "/b"));
}

Tensor batch_cls_rows(const BatchedEncoderOutput& out) {
    std::vector<std::size_t> idx(out.batch);
    for (std::size_t i = 0; i < out.batch; ++i) idx[i] = i * out.tokens;
    return take_rows(out.layers.back(), idx);
}

Tensor batch_patch_rows(const BatchedEncoderOutput& out) {
    std::vector<std::size_t> idx;
    idx.reserve(out.batch * (out.tokens - 1));
    for (std::size_t i = 0; i < out.batch; ++i)
        for (std::size_t j = 1; j < out.tokens; ++j) idx.push_back(i * out.tokens + j);
    return take_rows(out.layers.back(), idx);
}

Tensor batch_gap_rows(const BatchedEncoderOutput& out) {
    std::vector<Tensor> means;
    means.reserve(out.batch);
    for (std::size_t i = 0; i < out.batch; ++i) {
        Tensor rows = slice(out.layers.back(), 0, i * out.tokens + 1, out.tokens - 1);
        means.push_back(mean(rows, 0));
    }
    Tensor flat = (out.batch == 1) ? means[0] : concat(means, 0);
    return reshape(flat, {out.batch, out.layers.back().cols()});
}

}  // namespace unic
