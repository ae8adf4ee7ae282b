#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "unic/checkpoint.hpp"
#include "unic/datagen.hpp"
#include "unic/distill_loss.hpp"
#include "unic/encoder.hpp"
#include "unic/params.hpp"
#include "unic/projector.hpp"

namespace unic {

struct OptimConfig {
    double lr = 3e-4;
    double weight_decay = 3e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
    std::size_t warmup_epochs = 3;

    void validate() const;
};

struct AdamState {
    std::unordered_map<std::string, std::vector<double>> m, v;
    long t = 0;
};

// Decoupled AdamW over one or more parameter sets (one shared step
// counter). Reads the gradients populated by the last backward pass
// (missing gradient = zero) and replaces each parameter tensor.
void adamw_step(const std::vector<ParamSet*>& param_sets, AdamState& state,
                double lr_t, const OptimConfig& cfg);
void adamw_step(ParamSet& params, AdamState& state, double lr_t,
                const OptimConfig& cfg);

// Linear warmup to cfg.lr over the warmup steps, then cosine to zero at
// total_steps.
double lr_schedule(std::size_t step, std::size_t total_steps,
                   std::size_t warmup_steps, double base_lr);

// --- distillation plan ------------------------------------------------

struct DistillPlan {
    ShapeGridSpec data;
    EncoderConfig student;  // image/channels/patch filled from `data`
    std::vector<std::pair<std::string, std::string>> teachers;  // name -> path

    bool dedicated_projectors = true;
    bool ladder = true;
    std::vector<std::size_t> ladder_blocks;  // empty = all intermediates
    bool standardize = true;
    double std_decay = 0.99;
    double std_eps = 1e-6;
    long std_freeze_epoch = -1;  // -1 = update throughout
    bool elementwise_sl1 = false;

    BalancingStrategy balancing;
    OptimConfig optim;

    std::uint64_t seed = 7;
    std::string out_dir = "runs/distill";
    int workers = 1;
    std::size_t checkpoint_every = 0;  // epochs between state snapshots; 0 = none
    bool log_breakdown = false;

    std::size_t steps_per_epoch() const { return data.train_size / optim.batch_size; }
    std::size_t total_steps() const { return steps_per_epoch() * optim.epochs; }
    void validate() const;
};

// Structured-text config with sections [data], [student], [teachers],
// [distill], [optim]; `key = value` lines, '#' comments.
DistillPlan parse_plan_text(const std::string& text);
DistillPlan parse_plan_file(const std::string& path);
std::string plan_to_text(const DistillPlan& plan);  // resolved snapshot

// --- training state -----------------------------------------------------

struct TrainState {
    std::size_t step = 0;
    std::size_t epoch = 0;
    ParamSet student;  // encoder parameters
    ProjectorSet projectors;  // heads + their parameters
    AdamState opt;
    std::vector<TeacherBundle> teachers;
    AdalossState adaloss;
};

struct DistillResult {
    std::string checkpoint_path;
    std::string metrics_path;
    std::string epochs_csv_path;
    std::vector<std::string> teacher_names;
    std::vector<double> final_epoch_teacher_loss;  // mean (cls+patch)/2 per teacher
    double wall_clock_sec = 0.0;
};

DistillResult distill(const DistillPlan& plan);

// Resume from a state snapshot (an epoch boundary); continues the identical
// trajectory at f64.
DistillResult distill_resume(const DistillPlan& plan, const std::string& state_path);

// Full-state snapshot (f64 payloads): parameters, optimizer moments,
// standardizer statistics, adaloss averages, step/epoch counters.
void save_train_state(const TrainState& state, const std::string& path);
void restore_train_state(TrainState& state, const std::string& path);

// Loads a distilled student checkpoint: encoder params + config, retained
// projectors, standardizer stats.
struct StudentCheckpoint {
    EncoderConfig config;
    ParamSet encoder;  // frozen
    ProjectorSet projectors;
    std::vector<std::string> teacher_names;
    std::unordered_map<std::string, StandardizerState> cls_std, patch_std;
};
StudentCheckpoint load_student_checkpoint(const std::string& path);

// Shared helpers for embedding encoder configs in checkpoints.
void add_encoder_config(Checkpoint& ckpt, const EncoderConfig& cfg);
EncoderConfig encoder_config_from(const Checkpoint& ckpt);

}  // namespace unic
