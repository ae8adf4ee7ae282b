#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "unic/params.hpp"
#include "unic/tensor.hpp"

namespace unic {

// Expendable teacher-specific MLP head: linear(in -> hidden) -> GELU ->
// linear(hidden -> out). Parameters live in a ParamSet under `prefix` with
// leaves w1/b1/w2/b2.
struct ProjectorHead {
    std::string prefix;
    std::size_t in_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t out_dim = 0;
};

// Top head on the final layer plus one rung per selected intermediate
// block; the projected output is the sum of all of them.
struct LadderHead {
    ProjectorHead top;
    std::vector<std::pair<std::size_t, ProjectorHead>> rungs;  // block index 1..L-1
};

enum class TokenType { Cls, Patch };

std::string token_type_name(TokenType t);

Tensor project_top(const ParamSet& params, const ProjectorHead& head,
                   const Tensor& tokens);

// per_layer holds all L student layer matrices (restricted to the rows this
// branch consumes); rung l reads per_layer[l-1], the top head reads the
// final entry.
Tensor project_ladder(const ParamSet& params, const LadderHead& head,
                      const std::vector<Tensor>& per_layer);

struct ProjectorTopology {
    bool dedicated = true;
    bool ladder = false;
    std::vector<std::size_t> selected_blocks;  // empty => all of 1..L-1
};

struct ProjectorSet {
    struct TeacherHeads {
        bool dedicated = true;
        LadderHead cls;
        LadderHead patch;
        LadderHead shared;
    };

    std::vector<std::string> teacher_names;
    std::unordered_map<std::string, TeacherHeads> heads;
    ParamSet params;
    bool ladder = false;
    std::vector<std::size_t> selected_blocks;

    const LadderHead& branch(const std::string& teacher, TokenType type) const;
    std::size_t head_count() const;
};

// Builds all heads for a distillation run. Top heads use hidden 4*d, rungs
// use hidden d with zero-initialized output layers so the ladder starts out
// bitwise equal to the top head alone; everything else follows the encoder
// init scheme.
ProjectorSet build_projector_set(
    const ProjectorTopology& topo, std::size_t student_dim,
    std::size_t student_depth,
    const std::vector<std::pair<std::string, std::size_t>>& teacher_widths,
    std::uint64_t seed);

}  // namespace unic
