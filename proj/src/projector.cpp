#include "unic/projector.hpp"

#include "unic/rng.hpp"

namespace unic {

namespace {

Tensor normal_tensor(SplitMix& rng, Shape shape, double std_dev) {
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = rng.next_normal() * std_dev;
    return Tensor::from(std::move(v), std::move(shape), true);
}

void add_head_params(ParamSet& p, const ProjectorHead& h, SplitMix& rng,
                     bool zero_output) {
    p.insert(h.prefix + "/w1", normal_tensor(rng, {h.in_dim, h.hidden_dim}, 0.02));
    p.insert(h.prefix + "/b1", Tensor::zeros({h.hidden_dim}, true));
    if (zero_output)
        p.insert(h.prefix + "/w2", Tensor::zeros({h.hidden_dim, h.out_dim}, true));
    else
        p.insert(h.prefix + "/w2", normal_tensor(rng, {h.hidden_dim, h.out_dim}, 0.02));
    p.insert(h.prefix + "/b2", Tensor::zeros({h.out_dim}, true));
}

}  // namespace

std::string token_type_name(TokenType t) {
    return t == TokenType::Cls ? "cls" : "patch";
}

Tensor project_top(const ParamSet& params, const ProjectorHead& head,
                   const Tensor& tokens) {
    if (tokens.cols() != head.in_dim)
        throw DimensionError("project: token width " + std::to_string(tokens.cols()) +
                             " does not match head input " + std::to_string(head.in_dim));
    Tensor h = gelu(add(matmul(tokens, params.at(head.prefix + "/w1")),
                        params.at(head.prefix + "/b1")));
    return add(matmul(h, params.at(head.prefix + "/w2")),
               params.at(head.prefix + "/b2"));
}

Tensor project_ladder(const ParamSet& params, const LadderHead& head,
                      const std::vector<Tensor>& per_layer) {
    if (per_layer.empty()) throw ContractError("project_ladder: no layer outputs");
    for (const auto& [l, rung] : head.rungs) {
        (void)rung;
        if (l == 0 || l >= per_layer.size())
            throw ContractError("project_ladder: rung block " + std::to_string(l) +
                                " outside 1.." + std::to_string(per_layer.size() - 1));
    }
    Tensor out = project_top(params, head.top, per_layer.back());
    for (const auto& [l, rung] : head.rungs)
        out = add(out, project_top(params, rung, per_layer[l - 1]));
    return out;
}

const LadderHead& ProjectorSet::branch(const std::string& teacher,
                                       TokenType type) const {
    auto it = heads.find(teacher);
    if (it == heads.end())
        throw ContractError("projector set: unknown teacher " + teacher);
    if (!it->second.dedicated) return it->second.shared;
    return type == TokenType::Cls ? it->second.cls : it->second.patch;
}

std::size_t ProjectorSet::head_count() const {
    std::size_t n = 0;
    for (const auto& name : teacher_names) {
        const TeacherHeads& th = heads.at(name);
        if (th.dedicated)
            n += 2 * (1 + th.cls.rungs.size());
        else
            n += 1 + th.shared.rungs.size();
    }
    return n;
}

ProjectorSet build_projector_set(
    const ProjectorTopology& topo, std::size_t student_dim,
    std::size_t student_depth,
    const std::vector<std::pair<std::string, std::size_t>>& teacher_widths,
    std::uint64_t seed) {
    ProjectorSet set;
    set.ladder = topo.ladder;
    if (topo.ladder) {
        set.selected_blocks = topo.selected_blocks;
        if (set.selected_blocks.empty())
            for (std::size_t l = 1; l < student_depth; ++l)
                set.selected_blocks.push_back(l);
        for (std::size_t l : set.selected_blocks)
            if (l == 0 || l >= student_depth)
                throw ConfigError("ladder blocks must lie in 1.." +
                                  std::to_string(student_depth - 1));
    }

    SplitMix rng(mix64(seed ^ hash_str("projector-init")));
    auto make_branch = [&](const std::string& teacher, const std::string& type,
                           std::size_t d_t) {
        LadderHead b;
        const std::string base = "proj/" + teacher + "/" + type;
        b.top = {base + "/top", student_dim, 4 * student_dim, d_t};
        add_head_params(set.params, b.top, rng, /*zero_output=*/false);
        for (std::size_t l : set.selected_blocks) {
            ProjectorHead rung{base + "/rung_" + std::to_string(l), student_dim,
                               student_dim, d_t};
            add_head_params(set.params, rung, rng, /*zero_output=*/true);
            b.rungs.emplace_back(l, rung);
        }
        return b;
    };

    for (const auto& [teacher, d_t] : teacher_widths) {
        ProjectorSet::TeacherHeads th;
        th.dedicated = topo.dedicated;
        if (topo.dedicated) {
            th.cls = make_branch(teacher, "cls", d_t);
            th.patch = make_branch(teacher, "patch", d_t);
        } else {
            th.shared = make_branch(teacher, "shared", d_t);
        }
        set.teacher_names.push_back(teacher);
        set.heads.emplace(teacher, std::move(th));
    }
    return set;
}

}  // namespace unic
