#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "unic/params.hpp"
#include "unic/tensor.hpp"

namespace unic {

// Named-array container. Layout: magic "UNICKPT1", u32 LE entry count, then
// per entry u16 name length, UTF-8 name, u8 dtype (0 = f32, 1 = f64), u8
// rank, rank x u32 dims, payload little-endian. Model checkpoints store f32
// (values are widened back to f64 on load, so a save/load/save round trip
// is byte-identical); full training-state snapshots use f64 entries to make
// resumed runs bit-exact.
constexpr char kCheckpointMagic[9] = "UNICKPT1";
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeF64 = 1;

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
    std::uint8_t dtype = kDtypeF32;
};

class Checkpoint {
public:
    void add(const std::string& name, Shape shape, std::vector<double> values,
             std::uint8_t dtype = kDtypeF32);
    void add(const std::string& name, const Tensor& t, std::uint8_t dtype = kDtypeF32);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const CheckpointEntry& at(const std::string& name) const;
    const std::vector<CheckpointEntry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

private:
    std::vector<CheckpointEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// All entries of a ParamSet, in order.
void add_param_set(Checkpoint& ckpt, const ParamSet& params,
                   std::uint8_t dtype = kDtypeF32);

// Rebuilds the entries whose names start with `prefix` as a ParamSet.
ParamSet params_with_prefix(const Checkpoint& ckpt, const std::string& prefix,
                            bool trainable);

}  // namespace unic
