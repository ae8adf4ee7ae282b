#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unic/encoder.hpp"
#include "unic/standardizer.hpp"
#include "unic/tensor.hpp"

namespace unic {

// Synthetic ShapeGrid task: a grid x grid board of cells, each drawn from a
// fixed palette of patterned tiles. One cell maps onto exactly one encoder
// patch, the per-cell label is the tile id and the image label is the
// majority tile (ties to the lowest id).
struct ShapeGridSpec {
    std::size_t grid = 4;
    std::size_t cell_pixels = 8;
    std::size_t num_patterns = 5;
    std::size_t channels = 3;
    std::size_t train_size = 4000;
    std::size_t eval_size = 1000;
    std::uint64_t seed = 1;
    double noise_std = 0.05;

    std::size_t image_size() const { return grid * cell_pixels; }
    std::size_t cells() const { return grid * grid; }
    void validate() const;
};

struct Sample {
    Tensor image;  // channels x H x W in [0,1] plus noise
    std::uint16_t global_label = 0;
    std::vector<std::uint16_t> cell_labels;
};

// Deterministic tile bitmap value in [0,1].
double pattern_value(std::size_t pattern, std::size_t channel, std::size_t y,
                     std::size_t x);

std::uint16_t majority_label(const std::vector<std::uint16_t>& cells,
                             std::size_t num_patterns);

// Pure function of (spec.seed, stream, index); `stream` separates train /
// eval / per-epoch draws.
Sample render(const ShapeGridSpec& spec, std::uint64_t stream, std::uint64_t index);

std::vector<Sample> render_dataset(const ShapeGridSpec& spec, std::uint64_t stream,
                                   std::size_t count, int workers = 1);

constexpr std::uint64_t kTrainStream = 0x5452;  // fixed datasets
constexpr std::uint64_t kEvalStream = 0x4556;
// Fresh distillation batches use hash_key({kDistillStream, epoch}).
constexpr std::uint64_t kDistillStream = 0x4453;

// Container: magic "UNICDAT1", u32 LE sample count, spec record (6 x u32:
// grid, cell_pixels, num_patterns, channels, train_size, eval_size; u64
// seed; f32 noise_std), then per sample the f32 image payload, u16 global
// label and grid*grid u16 cell labels. Everything little-endian.
constexpr char kDatasetMagic[9] = "UNICDAT1";

void save_dataset(const std::string& path, const ShapeGridSpec& spec,
                  const std::vector<Sample>& samples);
std::pair<ShapeGridSpec, std::vector<Sample>> load_dataset(const std::string& path);

std::size_t dataset_file_size(const ShapeGridSpec& spec, std::size_t count);

// --- teacher factory ------------------------------------------------------

struct TeacherBundle {
    std::string name;
    EncoderConfig config;
    ParamSet params;  // frozen encoder
    ParamSet head;    // pretrained task head (may be empty)
    HeadSource head_source = HeadSource::Cls;
    bool has_head = false;
    StandardizerState cls_std;
    StandardizerState patch_std;
};

struct TeacherTrainReport {
    double eval_accuracy = 0.0;
    std::size_t epochs = 0;
    double final_loss = 0.0;
};

// Trains a fresh encoder with cross-entropy on the ShapeGrid task:
// "cls" learns the majority label through a CLS head, "patch" learns the
// per-cell labels through a dense patch head. The returned bundle is frozen.
TeacherBundle make_teacher(const std::string& kind, const ShapeGridSpec& spec,
                           const EncoderConfig& cfg, std::size_t budget_epochs,
                           const std::vector<Sample>& train,
                           const std::vector<Sample>& eval_set,
                           TeacherTrainReport* report = nullptr);

void save_teacher(const TeacherBundle& bundle, const std::string& path);
TeacherBundle load_teacher(const std::string& name, const std::string& path);

}  // namespace unic
