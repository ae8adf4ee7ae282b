#include "unic/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <thread>

#include "unic/checkpoint.hpp"
#include "unic/rng.hpp"
#include "unic/trainer.hpp"

namespace unic {

void ShapeGridSpec::validate() const {
    if (grid == 0 || cell_pixels == 0 || num_patterns == 0 || channels == 0)
        throw ConfigError("shapegrid spec: all sizes must be positive");
    if (num_patterns > 4096) throw ConfigError("shapegrid spec: too many patterns");
    if (noise_std < 0.0) throw ConfigError("shapegrid spec: negative noise");
}

namespace {

// HSV -> RGB with s = v = 0.9; hue from the golden-ratio sequence keeps
// pattern colors spread out for any palette size.
void pattern_color(std::size_t pattern, double rgb[3]) {
    const double hue = std::fmod(0.618033988749895 * static_cast<double>(pattern + 1), 1.0);
    const double s = 0.9, v = 0.9;
    const double h6 = hue * 6.0;
    const int i = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (i) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

double texture_factor(std::size_t pattern, std::size_t y, std::size_t x) {
    switch (pattern % 5) {
        case 0: return 1.0;                                   // solid
        case 1: return (y / 2) % 2 == 0 ? 1.0 : 0.25;         // horizontal stripes
        case 2: return (x / 2) % 2 == 0 ? 1.0 : 0.25;         // vertical stripes
        case 3: return ((x / 2) + (y / 2)) % 2 == 0 ? 1.0 : 0.25;  // checker
        default: return ((x + y) / 3) % 2 == 0 ? 1.0 : 0.25;  // diagonal bands
    }
}

constexpr std::uint64_t kCellTag = 0x63454C4C;
constexpr std::uint64_t kNoiseTag = 0x4E4F4953;

}  // namespace

double pattern_value(std::size_t pattern, std::size_t channel, std::size_t y,
                     std::size_t x) {
    double rgb[3];
    pattern_color(pattern, rgb);
    const double base = channel < 3 ? rgb[channel] : rgb[channel % 3];
    return base * texture_factor(pattern, y, x);
}

std::uint16_t majority_label(const std::vector<std::uint16_t>& cells,
                             std::size_t num_patterns) {
    std::vector<std::size_t> counts(num_patterns, 0);
    for (std::uint16_t c : cells) ++counts[c];
    std::size_t best = 0;
    for (std::size_t i = 1; i < num_patterns; ++i)
        if (counts[i] > counts[best]) best = i;  // tie -> lowest id
    return static_cast<std::uint16_t>(best);
}

Sample render(const ShapeGridSpec& spec, std::uint64_t stream, std::uint64_t index) {
    spec.validate();
    const std::size_t g = spec.grid, cp = spec.cell_pixels, is = spec.image_size();
    Sample s;
    s.cell_labels.resize(spec.cells());
    for (std::size_t cell = 0; cell < spec.cells(); ++cell)
        s.cell_labels[cell] = static_cast<std::uint16_t>(uniform_index(
            hash_key({spec.seed, kCellTag, stream, index, cell}), spec.num_patterns));
    s.global_label = majority_label(s.cell_labels, spec.num_patterns);

    std::vector<double> img(spec.channels * is * is);
    std::uint64_t pixel = 0;
    for (std::size_t c = 0; c < spec.channels; ++c)
        for (std::size_t y = 0; y < is; ++y)
            for (std::size_t x = 0; x < is; ++x, ++pixel) {
                const std::size_t cell = (y / cp) * g + (x / cp);
                double v = pattern_value(s.cell_labels[cell], c, y % cp, x % cp);
                if (spec.noise_std > 0.0)
                    v += spec.noise_std * normal_from_key(hash_key(
                             {spec.seed, kNoiseTag, stream, index, pixel}));
                img[pixel] = v;
            }
    s.image = Tensor::from(std::move(img), {spec.channels, is, is});
    return s;
}

std::vector<Sample> render_dataset(const ShapeGridSpec& spec, std::uint64_t stream,
                                   std::size_t count, int workers) {
    std::vector<Sample> out(count);
    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) out[i] = render(spec, stream, i);
    };
    const std::size_t nw = std::max<std::size_t>(
        1, std::min<std::size_t>(static_cast<std::size_t>(workers > 0 ? workers : 1),
                                 count ? count : 1));
    if (nw <= 1) {
        run_range(0, count);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (count + nw - 1) / nw;
        for (std::size_t w = 0; w < nw; ++w) {
            const std::size_t lo = w * chunk, hi = std::min(count, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

// --- container ----------------------------------------------------------

namespace {

struct File {
    std::FILE* f = nullptr;
    explicit File(std::FILE* handle) : f(handle) {}
    ~File() {
        if (f) std::fclose(f);
    }
    File(const File&) = delete;
    File& operator=(const File&) = delete;
};

[[noreturn]] void truncated(const std::string& path, long offset) {
    throw FormatError("dataset " + path + ": truncated at offset " +
                      std::to_string(offset));
}

template <typename T>
void write_raw(std::FILE* f, const T& v) {
    std::fwrite(&v, sizeof(T), 1, f);
}

template <typename T>
T read_raw(std::FILE* f, const std::string& path) {
    T v;
    long off = std::ftell(f);
    if (std::fread(&v, sizeof(T), 1, f) != 1) truncated(path, off);
    return v;
}

}  // namespace

std::size_t dataset_file_size(const ShapeGridSpec& spec, std::size_t count) {
    const std::size_t header = 8 + 4 + 6 * 4 + 8 + 4;
    const std::size_t record =
        spec.channels * spec.image_size() * spec.image_size() * 4 + 2 * (1 + spec.cells());
    return header + count * record;
}

void save_dataset(const std::string& path, const ShapeGridSpec& spec,
                  const std::vector<Sample>& samples) {
    File file(std::fopen(path.c_str(), "wb"));
    if (!file.f) throw Error("dataset: cannot open " + path + " for writing");
    std::fwrite(kDatasetMagic, 1, 8, file.f);
    write_raw<std::uint32_t>(file.f, static_cast<std::uint32_t>(samples.size()));
    for (std::size_t v : {spec.grid, spec.cell_pixels, spec.num_patterns, spec.channels,
                          spec.train_size, spec.eval_size})
        write_raw<std::uint32_t>(file.f, static_cast<std::uint32_t>(v));
    write_raw<std::uint64_t>(file.f, spec.seed);
    write_raw<float>(file.f, static_cast<float>(spec.noise_std));
    for (const Sample& s : samples) {
        for (double v : s.image.values()) write_raw<float>(file.f, static_cast<float>(v));
        write_raw<std::uint16_t>(file.f, s.global_label);
        for (std::uint16_t c : s.cell_labels) write_raw<std::uint16_t>(file.f, c);
    }
}

std::pair<ShapeGridSpec, std::vector<Sample>> load_dataset(const std::string& path) {
    File file(std::fopen(path.c_str(), "rb"));
    if (!file.f) throw Error("dataset: cannot open " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, file.f) != 8) truncated(path, 0);
    if (std::memcmp(magic, kDatasetMagic, 8) != 0)
        throw FormatError("dataset " + path + ": bad magic at offset 0");
    const std::uint32_t count = read_raw<std::uint32_t>(file.f, path);
    ShapeGridSpec spec;
    spec.grid = read_raw<std::uint32_t>(file.f, path);
    spec.cell_pixels = read_raw<std::uint32_t>(file.f, path);
    spec.num_patterns = read_raw<std::uint32_t>(file.f, path);
    spec.channels = read_raw<std::uint32_t>(file.f, path);
    spec.train_size = read_raw<std::uint32_t>(file.f, path);
    spec.eval_size = read_raw<std::uint32_t>(file.f, path);
    spec.seed = read_raw<std::uint64_t>(file.f, path);
    spec.noise_std = static_cast<double>(read_raw<float>(file.f, path));
    spec.validate();

    const std::size_t is = spec.image_size();
    std::vector<Sample> samples(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<double> img(spec.channels * is * is);
        for (double& v : img) v = static_cast<double>(read_raw<float>(file.f, path));
        samples[i].image = Tensor::from(std::move(img), {spec.channels, is, is});
        samples[i].global_label = read_raw<std::uint16_t>(file.f, path);
        samples[i].cell_labels.resize(spec.cells());
        for (std::uint16_t& c : samples[i].cell_labels)
            c = read_raw<std::uint16_t>(file.f, path);
    }
    long pos = std::ftell(file.f);
    std::fseek(file.f, 0, SEEK_END);
    if (std::ftell(file.f) != pos)
        throw FormatError("dataset " + path + ": trailing bytes at offset " +
                          std::to_string(pos));
    return {spec, std::move(samples)};
}

// --- teacher factory ------------------------------------------------------

namespace {

std::vector<std::size_t> epoch_shuffle(std::size_t n, std::uint64_t seed,
                                       std::uint64_t epoch) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = uniform_index(hash_key({seed, 0x53484C46ull, epoch, i}), i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

double eval_teacher_accuracy(const TeacherBundle& bundle, const ShapeGridSpec& spec,
                             const std::vector<Sample>& eval_set) {
    NoGradScope ng;
    std::size_t correct = 0, total = 0;
    const std::size_t bs = 64;
    for (std::size_t lo = 0; lo < eval_set.size(); lo += bs) {
        const std::size_t hi = std::min(eval_set.size(), lo + bs);
        std::vector<Tensor> images;
        for (std::size_t i = lo; i < hi; ++i) images.push_back(eval_set[i].image);
        BatchedEncoderOutput out = encoder_forward_batch(bundle.params, bundle.config, images);
        if (bundle.head_source == HeadSource::Cls) {
            Tensor logits = head_logits(bundle.head, HeadSource::Cls, batch_cls_rows(out));
            for (std::size_t i = 0; i < images.size(); ++i) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < spec.num_patterns; ++c)
                    if (logits.values()[i * spec.num_patterns + c] >
                        logits.values()[i * spec.num_patterns + best])
                        best = c;
                correct += best == eval_set[lo + i].global_label ? 1 : 0;
                ++total;
            }
        } else {
            Tensor logits =
                head_logits(bundle.head, HeadSource::Patch, batch_patch_rows(out));
            const std::size_t cells = spec.cells();
            for (std::size_t i = 0; i < images.size(); ++i)
                for (std::size_t p = 0; p < cells; ++p) {
                    std::size_t best = 0;
                    for (std::size_t c = 1; c < spec.num_patterns; ++c)
                        if (logits.values()[(i * cells + p) * spec.num_patterns + c] >
                            logits.values()[(i * cells + p) * spec.num_patterns + best])
                            best = c;
                    correct += best == eval_set[lo + i].cell_labels[p] ? 1 : 0;
                    ++total;
                }
        }
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace

TeacherBundle make_teacher(const std::string& kind, const ShapeGridSpec& spec,
                           const EncoderConfig& cfg, std::size_t budget_epochs,
                           const std::vector<Sample>& train,
                           const std::vector<Sample>& eval_set,
                           TeacherTrainReport* report) {
    if (kind != "cls" && kind != "patch")
        throw ConfigError("make_teacher: kind must be cls or patch, got '" + kind + "'");
    if (budget_epochs == 0) throw ContractError("make_teacher: zero epoch budget");
    if (train.empty()) throw ContractError("make_teacher: empty training set");
    cfg.validate();

    const HeadSource source = kind == "cls" ? HeadSource::Cls : HeadSource::Patch;
    TeacherBundle bundle;
    bundle.name = kind == "cls" ? "cls_specialist" : "patch_specialist";
    bundle.config = cfg;
    bundle.params = build_encoder(cfg, /*trainable=*/true);
    bundle.head = attach_head(cfg, spec.num_patterns, source, cfg.seed + 1);
    bundle.head_source = source;
    bundle.has_head = true;

    OptimConfig optim;
    optim.lr = 1e-3;  // tiny encoders train comfortably hotter than the student
    optim.weight_decay = 3e-2;
    optim.batch_size = 64;
    optim.epochs = budget_epochs;
    optim.warmup_epochs = std::max<std::size_t>(1, budget_epochs / 10);
    AdamState adam;

    const std::size_t steps_per_epoch =
        std::max<std::size_t>(1, train.size() / optim.batch_size);
    const std::size_t total_steps = steps_per_epoch * budget_epochs;
    const std::size_t warmup_steps = steps_per_epoch * optim.warmup_epochs;

    double last_loss = 0.0;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < budget_epochs; ++epoch) {
        std::vector<std::size_t> order = epoch_shuffle(train.size(), cfg.seed, epoch);
        for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
            std::vector<Tensor> images;
            std::vector<const Sample*> batch;
            for (std::size_t k = 0; k < optim.batch_size; ++k) {
                const Sample& s = train[order[(b * optim.batch_size + k) % train.size()]];
                batch.push_back(&s);
                images.push_back(s.image);
            }
            Graph g;
            Tensor loss;
            {
                GraphScope scope(g);
                BatchedEncoderOutput out =
                    encoder_forward_batch(bundle.params, cfg, images);
                std::vector<Tensor> ce;
                if (source == HeadSource::Cls) {
                    Tensor logits =
                        head_logits(bundle.head, HeadSource::Cls, batch_cls_rows(out));
                    for (std::size_t i = 0; i < batch.size(); ++i)
                        ce.push_back(cross_entropy(
                            slice(logits, 0, i, 1), batch[i]->global_label));
                } else {
                    Tensor logits = head_logits(bundle.head, HeadSource::Patch,
                                                batch_patch_rows(out));
                    const std::size_t cells = spec.cells();
                    for (std::size_t i = 0; i < batch.size(); ++i)
                        for (std::size_t p = 0; p < cells; ++p)
                            ce.push_back(cross_entropy(
                                slice(logits, 0, i * cells + p, 1),
                                batch[i]->cell_labels[p]));
                }
                loss = mean(concat(ce, 0));
                last_loss = loss.value();
                if (!std::isfinite(last_loss))
                    throw Error("make_teacher: loss diverged (NaN/Inf) at step " +
                                std::to_string(step));
                g.backward(loss);
            }
            const double lr_t = lr_schedule(step, total_steps, warmup_steps, optim.lr);
            adamw_step({&bundle.params, &bundle.head}, adam, lr_t, optim);
        }
    }

    // Freeze: reload values into non-trainable tensors.
    ParamSet frozen;
    for (const auto& name : bundle.params.names())
        frozen.insert(name, Tensor::from(bundle.params.at(name).values(),
                                         bundle.params.at(name).shape(), false));
    bundle.params = std::move(frozen);
    ParamSet frozen_head;
    for (const auto& name : bundle.head.names())
        frozen_head.insert(name, Tensor::from(bundle.head.at(name).values(),
                                              bundle.head.at(name).shape(), false));
    bundle.head = std::move(frozen_head);

    if (report) {
        report->eval_accuracy = eval_teacher_accuracy(bundle, spec, eval_set);
        report->epochs = budget_epochs;
        report->final_loss = last_loss;
    }
    return bundle;
}

void save_teacher(const TeacherBundle& bundle, const std::string& path) {
    Checkpoint ckpt;
    add_param_set(ckpt, bundle.params);
    if (bundle.has_head) add_param_set(ckpt, bundle.head);
    add_encoder_config(ckpt, bundle.config);
    ckpt.save(path);
}

TeacherBundle load_teacher(const std::string& name, const std::string& path) {
    Checkpoint ckpt = Checkpoint::load(path);
    TeacherBundle bundle;
    bundle.name = name;
    bundle.config = encoder_config_from(ckpt);
    bundle.params = params_with_prefix(ckpt, "enc/", /*trainable=*/false);
    bundle.head = params_with_prefix(ckpt, "head/", /*trainable=*/false);
    bundle.has_head = bundle.head.count() > 0;
    if (bundle.has_head) {
        const std::string& first = bundle.head.names().front();
        bundle.head_source = head_source_from(
            first.substr(5, first.find('/', 5) - 5));
    }
    return bundle;
}

}  // namespace unic
