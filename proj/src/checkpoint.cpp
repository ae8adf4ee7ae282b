#include "unic/checkpoint.hpp"

#include <cstdio>
#include <cstring>

#include "unic/errors.hpp"

namespace unic {

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
    throw FormatError("checkpoint " + path + ": truncated at offset " +
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

void Checkpoint::add(const std::string& name, Shape shape,
                     std::vector<double> values, std::uint8_t dtype) {
    if (shape_size(shape) != values.size())
        throw DimensionError("checkpoint add: " + name + ": " +
                             std::to_string(values.size()) + " values for shape " +
                             shape_str(shape));
    if (index_.count(name)) throw ContractError("checkpoint add: duplicate " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({name, std::move(shape), std::move(values), dtype});
}

void Checkpoint::add(const std::string& name, const Tensor& t, std::uint8_t dtype) {
    add(name, t.shape(), t.values(), dtype);
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("checkpoint: missing entry " + name);
    return entries_[it->second];
}

void Checkpoint::save(const std::string& path) const {
    File file(std::fopen(path.c_str(), "wb"));
    if (!file.f) throw Error("checkpoint: cannot open " + path + " for writing");
    std::fwrite(kCheckpointMagic, 1, 8, file.f);
    write_raw<std::uint32_t>(file.f, static_cast<std::uint32_t>(entries_.size()));
    for (const CheckpointEntry& e : entries_) {
        write_raw<std::uint16_t>(file.f, static_cast<std::uint16_t>(e.name.size()));
        std::fwrite(e.name.data(), 1, e.name.size(), file.f);
        write_raw<std::uint8_t>(file.f, e.dtype);
        write_raw<std::uint8_t>(file.f, static_cast<std::uint8_t>(e.shape.size()));
        for (std::size_t d : e.shape)
            write_raw<std::uint32_t>(file.f, static_cast<std::uint32_t>(d));
        if (e.dtype == kDtypeF32) {
            for (double v : e.values) write_raw<float>(file.f, static_cast<float>(v));
        } else {
            for (double v : e.values) write_raw<double>(file.f, v);
        }
    }
}

Checkpoint Checkpoint::load(const std::string& path) {
    File file(std::fopen(path.c_str(), "rb"));
    if (!file.f) throw Error("checkpoint: cannot open " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, file.f) != 8) truncated(path, 0);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw FormatError("checkpoint " + path + ": bad magic at offset 0");
    const std::uint32_t count = read_raw<std::uint32_t>(file.f, path);
    Checkpoint ckpt;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = read_raw<std::uint16_t>(file.f, path);
        std::string name(name_len, '\0');
        long off = std::ftell(file.f);
        if (name_len && std::fread(name.data(), 1, name_len, file.f) != name_len)
            truncated(path, off);
        const std::uint8_t dtype = read_raw<std::uint8_t>(file.f, path);
        if (dtype != kDtypeF32 && dtype != kDtypeF64)
            throw FormatError("checkpoint " + path + ": unknown dtype " +
                              std::to_string(dtype) + " at offset " +
                              std::to_string(std::ftell(file.f) - 1));
        const std::uint8_t rank = read_raw<std::uint8_t>(file.f, path);
        Shape shape(rank);
        for (std::uint8_t r = 0; r < rank; ++r)
            shape[r] = read_raw<std::uint32_t>(file.f, path);
        std::vector<double> values(shape_size(shape));
        for (double& v : values)
            v = (dtype == kDtypeF32)
                    ? static_cast<double>(read_raw<float>(file.f, path))
                    : read_raw<double>(file.f, path);
        ckpt.add(name, std::move(shape), std::move(values), dtype);
    }
    long pos = std::ftell(file.f);
    std::fseek(file.f, 0, SEEK_END);
    if (std::ftell(file.f) != pos)
        throw FormatError("checkpoint " + path + ": trailing bytes at offset " +
                          std::to_string(pos));
    return ckpt;
}

void add_param_set(Checkpoint& ckpt, const ParamSet& params, std::uint8_t dtype) {
    for (const auto& name : params.names()) ckpt.add(name, params.at(name), dtype);
}

ParamSet params_with_prefix(const Checkpoint& ckpt, const std::string& prefix,
                            bool trainable) {
    ParamSet out;
    for (const CheckpointEntry& e : ckpt.entries()) {
        if (e.name.rfind(prefix, 0) != 0) continue;
        out.insert(e.name, Tensor::from(e.values, e.shape, trainable));
    }
    return out;
}

}  // namespace unic
