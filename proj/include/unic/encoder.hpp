#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unic/params.hpp"
#include "unic/tensor.hpp"

namespace unic {

// Pre-norm ViT-style encoder small enough to train on a single core: patch
// embedding, learned CLS token and positions, depth x (LN -> MHSA ->
// residual -> LN -> MLP -> residual), final LN.
struct EncoderConfig {
    std::size_t image_size = 32;
    std::size_t channels = 3;
    std::size_t patch_size = 8;
    std::size_t dim = 32;
    std::size_t depth = 3;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    std::uint64_t seed = 0;

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t num_patches() const { return grid() * grid(); }
    std::size_t tokens() const { return num_patches() + 1; }
    std::size_t head_dim() const { return dim / heads; }
    std::size_t hidden_dim() const { return mlp_ratio * dim; }
    std::size_t patch_vec() const { return patch_size * patch_size * channels; }

    void validate() const;
};

// Per-layer token features. layers[l] is the output of block l+1 for
// l < depth-1; layers[depth-1] carries the final LayerNorm so that its row 0
// equals final_cls and the rest equal final_patches.
struct EncoderOutput {
    std::vector<Tensor> layers;  // depth matrices, each tokens x dim
    Tensor final_cls;            // dim
    Tensor final_patches;        // num_patches x dim
};

// Batched variant used by training loops; every matrix stacks the images'
// token rows, image i occupying rows [i*tokens, (i+1)*tokens).
struct BatchedEncoderOutput {
    std::vector<Tensor> layers;  // depth matrices, (batch*tokens) x dim
    std::size_t batch = 0;
    std::size_t tokens = 0;
};

constexpr double kLayerNormEps = 1e-6;

// Fresh parameter set under "enc/...": weights ~ N(0, 0.02), biases zero,
// CLS/positions ~ N(0, 0.02), LayerNorm affine at identity. Deterministic in
// config.seed.
ParamSet build_encoder(const EncoderConfig& cfg, bool trainable = true);

// (num_patches x patch_vec) pixel matrix; rows follow grid order, columns
// are channel-major within a patch. Pure data movement, never tracked.
Tensor patchify(const Tensor& image, const EncoderConfig& cfg);

// Token matrix before the first block: CLS + embedded patches + positions.
Tensor embed_tokens(const ParamSet& params, const EncoderConfig& cfg,
                    const Tensor& image);

BatchedEncoderOutput encoder_forward_batch(const ParamSet& params,
                                           const EncoderConfig& cfg,
                                           const std::vector<Tensor>& images);

EncoderOutput encoder_forward(const ParamSet& params, const EncoderConfig& cfg,
                              const Tensor& image);

// Frozen-mode forward over a dataset: plain value matrices, no graph. Images
// are split across `workers` threads; results are invariant to the split.
struct FeatureMatrices {
    std::vector<double> cls;      // batch x dim
    std::vector<double> patches;  // (batch*num_patches) x dim
    std::size_t batch = 0;
    std::size_t dim = 0;
    std::size_t num_patches = 0;
};
FeatureMatrices encoder_features(const ParamSet& params, const EncoderConfig& cfg,
                                 const std::vector<Tensor>& images, int workers = 1);

// --- classifier heads --------------------------------------------------

enum class HeadSource { Cls, Gap, Patch };

std::string head_source_name(HeadSource s);
HeadSource head_source_from(const std::string& s);

// Linear head dim -> num_classes under "head/<source>/...". Patch heads are
// dense: they score every patch token.
ParamSet attach_head(const EncoderConfig& cfg, std::size_t num_classes,
                     HeadSource source, std::uint64_t seed);

// Applies the head to a feature matrix (rows of width dim) -> logits.
Tensor head_logits(const ParamSet& head, HeadSource source, const Tensor& features);

// Convenience rows from a batched forward.
Tensor batch_cls_rows(const BatchedEncoderOutput& out);
Tensor batch_patch_rows(const BatchedEncoderOutput& out);
Tensor batch_gap_rows(const BatchedEncoderOutput& out);

}  // namespace unic
