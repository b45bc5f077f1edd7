#include "tina/program.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace tina {

const basic_block *program::find_block(const std::string &id) const {
    for (const auto &b : blocks)
        if (b.id == id)
            return &b;
    return nullptr;
}

basic_block *program::find_block(const std::string &id) {
    for (auto &b : blocks)
        if (b.id == id)
            return &b;
    return nullptr;
}

namespace {

void check_expr_widths(const expr_ptr &e, const std::string &where,
                       std::vector<std::string> &diags) {
    // Construction already enforces width invariants; here we re-walk to catch
    // hand-built trees and report per-location diagnostics.
    if (e->is_ite() && e->as_ite().cond->width != 1)
        diags.push_back(where + ": ite condition width " +
                        std::to_string(e->as_ite().cond->width) + ", expected 1");
    if (e->is_load())
        check_expr_widths(e->as_load().addr, where, diags);
    else if (e->is_unop())
        check_expr_widths(e->as_unop().arg, where, diags);
    else if (e->is_binop()) {
        check_expr_widths(e->as_binop().lhs, where, diags);
        check_expr_widths(e->as_binop().rhs, where, diags);
    } else if (e->is_ite()) {
        check_expr_widths(e->as_ite().cond, where, diags);
        check_expr_widths(e->as_ite().then_e, where, diags);
        check_expr_widths(e->as_ite().else_e, where, diags);
    }
}

} // namespace

std::vector<std::string> check_wellformed(const program &p) {
    std::vector<std::string> diags;
    std::set<std::string> ids;
    for (const auto &b : p.blocks) {
        if (!ids.insert(b.id).second)
            diags.push_back("duplicate block label '" + b.id + "'");
    }
    if (p.blocks.empty()) {
        diags.push_back("program has no blocks");
        return diags;
    }
    if (!ids.count(p.entry))
        diags.push_back("entry label '" + p.entry + "' does not exist");

    // Variable widths must be used consistently.
    std::map<std::string, unsigned> widths;
    auto note_vars = [&](const expr_ptr &e, const std::string &where) {
        std::map<std::string, unsigned> vs;
        collect_free_vars(e, vs);
        for (auto &[n, w] : vs) {
            auto [it, fresh] = widths.emplace(n, w);
            if (!fresh && it->second != w)
                diags.push_back(where + ": variable '" + n + "' used at width " +
                                std::to_string(w) + " but previously " +
                                std::to_string(it->second));
        }
    };

    for (const auto &b : p.blocks) {
        const std::string where = "block " + b.id;
        for (const auto &i : b.body) {
            if (const auto *a = std::get_if<assign_instr>(&i)) {
                if (a->width != a->rhs->width)
                    diags.push_back(where + ": assignment to '" + a->lhs + "'<" +
                                    std::to_string(a->width) + "> from width " +
                                    std::to_string(a->rhs->width));
                auto [it, fresh] = widths.emplace(a->lhs, a->width);
                if (!fresh && it->second != a->width)
                    diags.push_back(where + ": variable '" + a->lhs +
                                    "' assigned at width " + std::to_string(a->width) +
                                    " but previously " + std::to_string(it->second));
                note_vars(a->rhs, where);
                check_expr_widths(a->rhs, where, diags);
            } else {
                const auto &s = std::get<store_instr>(i);
                if (s.value->width != s.nbytes * 8)
                    diags.push_back(where + ": store of " + std::to_string(s.nbytes) +
                                    " bytes from value of width " +
                                    std::to_string(s.value->width));
                note_vars(s.addr, where);
                note_vars(s.value, where);
                check_expr_widths(s.addr, where, diags);
                check_expr_widths(s.value, where, diags);
            }
        }
        if (const auto *g = std::get_if<goto_term>(&b.term)) {
            if (!ids.count(g->target))
                diags.push_back(where + ": goto unknown label '" + g->target + "'");
        } else if (const auto *br = std::get_if<branch_term>(&b.term)) {
            if (br->cond->width != 1)
                diags.push_back(where + ": branch condition has width " +
                                std::to_string(br->cond->width) + ", expected 1");
            if (!ids.count(br->then_target))
                diags.push_back(where + ": branch unknown label '" + br->then_target + "'");
            if (!ids.count(br->else_target))
                diags.push_back(where + ": branch unknown label '" + br->else_target + "'");
            note_vars(br->cond, where);
            check_expr_widths(br->cond, where, diags);
        }
    }
    return diags;
}

std::vector<std::pair<edge_tag, std::string>> cfg::successors(const std::string &n) const {
    std::vector<std::pair<edge_tag, std::string>> out;
    for (const auto &e : edges)
        if (e.from == n)
            out.emplace_back(e.tag, e.to);
    return out;
}

std::vector<std::string> cfg::predecessors(const std::string &n) const {
    std::vector<std::string> out;
    for (const auto &e : edges)
        if (e.to == n)
            out.push_back(e.from);
    return out;
}

cfg build_cfg(const program &p) {
    cfg g;
    for (const auto &b : p.blocks) {
        g.nodes.push_back(b.id);
        if (const auto *go = std::get_if<goto_term>(&b.term)) {
            g.edges.push_back({b.id, go->target, edge_tag::jump});
        } else if (const auto *br = std::get_if<branch_term>(&b.term)) {
            g.edges.push_back({b.id, br->then_target, edge_tag::branch_then});
            g.edges.push_back({b.id, br->else_target, edge_tag::branch_else});
        }
    }
    return g;
}

std::map<std::string, unsigned> program_inputs(const program &p) {
    // Forward pass per block: a variable is an input if some path reads it
    // before any assignment. Approximated with a per-block must-defined set
    // intersected over predecessors (fixpoint).
    std::map<std::string, unsigned> inputs;
    cfg g = build_cfg(p);

    std::map<std::string, std::set<std::string>> defined_out;
    bool changed = true;
    auto block_scan = [&](const basic_block &b, const std::set<std::string> &defined_in,
                          bool record) {
        std::set<std::string> defined = defined_in;
        auto use = [&](const expr_ptr &e) {
            if (!record)
                return;
            std::map<std::string, unsigned> vs;
            collect_free_vars(e, vs);
            for (auto &[n, w] : vs)
                if (!defined.count(n))
                    inputs.emplace(n, w);
        };
        for (const auto &i : b.body) {
            if (const auto *a = std::get_if<assign_instr>(&i)) {
                use(a->rhs);
                defined.insert(a->lhs);
            } else {
                const auto &s = std::get<store_instr>(i);
                use(s.addr);
                use(s.value);
            }
        }
        if (const auto *br = std::get_if<branch_term>(&b.term))
            use(br->cond);
        return defined;
    };

    while (changed) {
        changed = false;
        for (const auto &b : p.blocks) {
            std::set<std::string> in;
            bool first = true;
            if (b.id != p.entry) {
                for (const auto &pred : g.predecessors(b.id)) {
                    auto it = defined_out.find(pred);
                    if (it == defined_out.end())
                        continue; // not yet computed: skip (optimistic)
                    if (first) {
                        in = it->second;
                        first = false;
                    } else {
                        std::set<std::string> inter;
                        std::set_intersection(in.begin(), in.end(), it->second.begin(),
                                              it->second.end(),
                                              std::inserter(inter, inter.begin()));
                        in = std::move(inter);
                    }
                }
            }
            auto out = block_scan(b, in, false);
            auto &slot = defined_out[b.id];
            if (slot != out) {
                slot = std::move(out);
                changed = true;
            }
        }
    }
    for (const auto &b : p.blocks) {
        std::set<std::string> in;
        bool first = true;
        if (b.id != p.entry) {
            for (const auto &pred : g.predecessors(b.id)) {
                auto it = defined_out.find(pred);
                if (it == defined_out.end())
                    continue;
                if (first) {
                    in = it->second;
                    first = false;
                } else {
                    std::set<std::string> inter;
                    std::set_intersection(in.begin(), in.end(), it->second.begin(),
                                          it->second.end(),
                                          std::inserter(inter, inter.begin()));
                    in = std::move(inter);
                }
            }
        }
        block_scan(b, in, true);
    }
    return inputs;
}

std::map<std::string, unsigned> assigned_vars(const program &p) {
    std::map<std::string, unsigned> out;
    for (const auto &b : p.blocks)
        for (const auto &i : b.body)
            if (const auto *a = std::get_if<assign_instr>(&i))
                out.emplace(a->lhs, a->width);
    return out;
}

bool program_has_store(const program &p) {
    for (const auto &b : p.blocks)
        for (const auto &i : b.body)
            if (std::holds_alternative<store_instr>(i))
                return true;
    return false;
}

bool program_has_load(const program &p) {
    for (const auto &b : p.blocks) {
        for (const auto &i : b.body) {
            if (const auto *a = std::get_if<assign_instr>(&i)) {
                if (mentions_load(a->rhs))
                    return true;
            } else {
                const auto &s = std::get<store_instr>(i);
                if (mentions_load(s.addr) || mentions_load(s.value))
                    return true;
            }
        }
        if (const auto *br = std::get_if<branch_term>(&b.term))
            if (mentions_load(br->cond))
                return true;
    }
    return false;
}

} // namespace tina
