#include "tina/propagate.hpp"

#include "tina/parser.hpp"
#include "tina/rewrite.hpp"

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace tina {

bool is_reducible(const program &p) {
    cfg g = build_cfg(p);
    // Collapse via T1 (self-loop removal) / T2 (unique-predecessor merge) on
    // the reachable subgraph.
    std::map<std::string, std::set<std::string>> succ;
    std::set<std::string> reach;
    std::deque<std::string> work{p.entry};
    while (!work.empty()) {
        auto n = work.front();
        work.pop_front();
        if (!reach.insert(n).second)
            continue;
        for (auto &[_, s] : g.successors(n)) {
            succ[n].insert(s);
            work.push_back(s);
        }
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto &n : reach)
            if (succ[n].erase(n))
                changed = true;
        for (const auto &n : reach) {
            if (n == p.entry)
                continue;
            std::string pred;
            int npred = 0;
            for (const auto &m : reach)
                if (succ[m].count(n)) {
                    pred = m;
                    npred++;
                }
            if (npred == 1) {
                for (const auto &s : succ[n])
                    if (s != n)
                        succ[pred].insert(s);
                succ[pred].erase(n);
                succ.erase(n);
                reach.erase(n);
                changed = true;
                break;
            }
        }
    }
    return reach.size() == 1;
}

namespace {

/// Block-entry facts worth carrying across edges: constants and aliases of
/// stable inputs (variables never assigned anywhere, so their value is the
/// same in every block's entry terms).
using fact_map = std::map<std::string, expr_ptr>;

std::set<std::string> stable_inputs(const program &p) {
    std::set<std::string> s;
    auto assigned = assigned_vars(p);
    for (auto &[n, _] : program_inputs(p))
        if (!assigned.count(n))
            s.insert(n);
    return s;
}

std::set<std::string> all_var_names(const program &p) {
    std::set<std::string> names;
    for (auto &[n, _] : assigned_vars(p))
        names.insert(n);
    for (auto &[n, _] : program_inputs(p))
        names.insert(n);
    return names;
}

/// Gives every non-final assignment of a multiply-assigned variable a fresh
/// block-local version (`v.1`, `v.2`, …) and renames uses accordingly, so
/// propagated values stay valid across reassignments. Base names are kept for
/// the last write, which is what successor blocks observe.
program version_locals(const program &p, std::set<std::string> &introduced) {
    std::set<std::string> used = all_var_names(p);
    program q = p;
    for (auto &bb : q.blocks) {
        std::map<std::string, int> writes_left;
        for (auto &i : bb.body)
            if (auto *a = std::get_if<assign_instr>(&i))
                writes_left[a->lhs]++;
        std::map<std::string, expr_ptr> current; // use-site renaming
        int counter = 0;
        for (auto &i : bb.body) {
            if (auto *a = std::get_if<assign_instr>(&i)) {
                a->rhs = subst(a->rhs, current);
                if (--writes_left[a->lhs] > 0) {
                    std::string fresh;
                    do
                        fresh = a->lhs + "." + std::to_string(++counter);
                    while (used.count(fresh));
                    used.insert(fresh);
                    introduced.insert(fresh);
                    current[a->lhs] = var(fresh, a->width);
                    a->lhs = fresh;
                } else {
                    current.erase(a->lhs);
                }
            } else {
                auto &st = std::get<store_instr>(i);
                st.addr = subst(st.addr, current);
                st.value = subst(st.value, current);
            }
        }
        if (auto *br = std::get_if<branch_term>(&bb.term))
            br->cond = subst(br->cond, current);
    }
    return q;
}

struct walk_state {
    std::map<std::string, expr_ptr> env; // values in block-entry terms
    std::set<std::string> modified;
};

bool usable(const expr_ptr &value, const walk_state &w) {
    for (const auto &v : free_vars(value))
        if (w.modified.count(v))
            return false;
    return true;
}

/// Replaces variable occurrences by their known symbolic values. Non-constant
/// replacements get a fresh node recorded in `reverse` so fruitless ones can
/// be reverted after simplification. Constants are always kept.
expr_ptr propagate_occurrences(const expr_ptr &e, const walk_state &w,
                               std::unordered_map<const expr *, std::string> &reverse) {
    if (e->is_cst())
        return e;
    if (e->is_var()) {
        auto it = w.env.find(e->as_var().name);
        if (it == w.env.end() || !usable(it->second, w))
            return e;
        auto copy = std::make_shared<expr>(*it->second);
        // Constants and plain aliases are always worth keeping; reverting
        // them would pin trivial copy chains in place forever.
        if (!copy->is_cst() && !copy->is_var())
            reverse.emplace(copy.get(), e->as_var().name);
        return copy;
    }
    auto rec = [&](const expr_ptr &c) { return propagate_occurrences(c, w, reverse); };
    if (e->is_load())
        return load(rec(e->as_load().addr), e->as_load().nbytes);
    if (e->is_unop()) {
        const auto &u = e->as_unop();
        auto a = rec(u.arg);
        switch (u.op) {
        case unop_kind::bnot: return bnot(a);
        case unop_kind::neg: return neg(a);
        case unop_kind::uext: return uext(u.n, a);
        case unop_kind::sext: return sext(u.n, a);
        case unop_kind::extract: return extract(u.lo, u.hi, a);
        }
    }
    if (e->is_binop()) {
        const auto &b = e->as_binop();
        return binop(b.op, rec(b.lhs), rec(b.rhs));
    }
    const auto &t = e->as_ite();
    return ite(rec(t.cond), rec(t.then_e), rec(t.else_e));
}

expr_ptr revert_fruitless(const expr_ptr &e,
                          const std::unordered_map<const expr *, std::string> &reverse) {
    auto it = reverse.find(e.get());
    if (it != reverse.end())
        return var(it->second, e->width);
    auto rec = [&](const expr_ptr &c) { return revert_fruitless(c, reverse); };
    if (e->is_cst() || e->is_var())
        return e;
    if (e->is_load())
        return load(rec(e->as_load().addr), e->as_load().nbytes);
    if (e->is_unop()) {
        const auto &u = e->as_unop();
        auto a = rec(u.arg);
        switch (u.op) {
        case unop_kind::bnot: return bnot(a);
        case unop_kind::neg: return neg(a);
        case unop_kind::uext: return uext(u.n, a);
        case unop_kind::sext: return sext(u.n, a);
        case unop_kind::extract: return extract(u.lo, u.hi, a);
        }
    }
    if (e->is_binop()) {
        const auto &b = e->as_binop();
        return binop(b.op, rec(b.lhs), rec(b.rhs));
    }
    const auto &t = e->as_ite();
    return ite(rec(t.cond), rec(t.then_e), rec(t.else_e));
}

/// Processes one expression: propagate, simplify, revert fruitless
/// propagations.
expr_ptr process_expr(const expr_ptr &e, const walk_state &w) {
    std::unordered_map<const expr *, std::string> reverse;
    expr_ptr prop = propagate_occurrences(e, w, reverse);
    expr_ptr simp = simplify_expr(prop);
    return revert_fruitless(simp, reverse);
}

void record_value(walk_state &w, const std::string &lhs, const expr_ptr &rhs) {
    bool expressible = true;
    for (const auto &v : free_vars(rhs))
        if (w.modified.count(v) && !w.env.count(v)) {
            expressible = false;
            break;
        }
    if (expressible) {
        std::map<std::string, expr_ptr> sub;
        for (const auto &v : free_vars(rhs)) {
            auto it = w.env.find(v);
            if (it != w.env.end())
                sub.emplace(v, it->second); // env values are in entry terms
        }
        expr_ptr sym = simplify_expr(subst(rhs, sub));
        if (!mentions_load(sym) && expr_size(sym) <= 64) {
            w.env[lhs] = sym;
            w.modified.insert(lhs);
            return;
        }
    }
    w.env.erase(lhs);
    w.modified.insert(lhs);
}

/// Walks a block computing the stable facts at its exit. Mirrors the
/// transform walk but keeps only constants and stable-input aliases.
fact_map block_out_facts(const basic_block &bb, const fact_map &in,
                         const std::set<std::string> &stable) {
    walk_state w;
    w.env = in;
    for (const auto &i : bb.body)
        if (const auto *a = std::get_if<assign_instr>(&i))
            record_value(w, a->lhs, a->rhs);
    fact_map out;
    for (auto &[v, e] : w.env)
        if (e->is_cst() || (e->is_var() && stable.count(e->as_var().name)))
            out[v] = e;
    return out;
}

fact_map join_facts(const fact_map &a, const fact_map &b) {
    fact_map out;
    for (auto &[v, e] : a) {
        auto it = b.find(v);
        if (it != b.end() && expr_equal(it->second, e))
            out[v] = e;
    }
    return out;
}

std::set<std::string> reachable_blocks(const program &p) {
    cfg g = build_cfg(p);
    std::set<std::string> reach;
    std::deque<std::string> work{p.entry};
    while (!work.empty()) {
        auto n = work.front();
        work.pop_front();
        if (!reach.insert(n).second)
            continue;
        for (auto &[_, s] : g.successors(n))
            work.push_back(s);
    }
    return reach;
}

void drop_unreachable(program &p) {
    auto reach = reachable_blocks(p);
    std::erase_if(p.blocks, [&](const basic_block &b) { return !reach.count(b.id); });
}

bool var_used(const program &p, const std::string &name) {
    for (const auto &bb : p.blocks) {
        for (const auto &i : bb.body) {
            if (const auto *a = std::get_if<assign_instr>(&i)) {
                if (mentions_var(a->rhs, name))
                    return true;
            } else {
                const auto &st = std::get<store_instr>(i);
                if (mentions_var(st.addr, name) || mentions_var(st.value, name))
                    return true;
            }
        }
        if (const auto *br = std::get_if<branch_term>(&bb.term))
            if (mentions_var(br->cond, name))
                return true;
    }
    return false;
}

/// Extracts whole-chunk constants: non-input variables whose every remaining
/// assignment is one constant and which are no longer read anywhere. The
/// assignments are deleted and the binding is recorded.
void extract_chunk_constants(program &p, assumption_ledger &ledger,
                             const std::set<std::string> &observables) {
    auto inputs = program_inputs(p);
    std::map<std::string, std::vector<expr_ptr>> defs;
    for (const auto &bb : p.blocks)
        for (const auto &i : bb.body)
            if (const auto *a = std::get_if<assign_instr>(&i))
                defs[a->lhs].push_back(a->rhs);
    for (auto &[v, as] : defs) {
        if (inputs.count(v) || observables.count(v) || var_used(p, v))
            continue;
        bool all_const = std::all_of(as.begin(), as.end(), [&](const expr_ptr &rhs) {
            return rhs->is_cst() && expr_equal(rhs, as[0]);
        });
        if (!all_const)
            continue;
        ledger.record(ledger_kind::const_binding, v, as[0], "propagate_and_simplify");
        for (auto &bb : p.blocks)
            std::erase_if(bb.body, [&](const instr &i) {
                const auto *a = std::get_if<assign_instr>(&i);
                return a && a->lhs == v;
            });
    }
}

void expr_uses(const expr_ptr &e, std::set<std::string> &out) {
    for (const auto &v : free_vars(e))
        out.insert(v);
}

/// Input bindings `v := input` in the entry block whose lhs is written once
/// there and not read before the binding. Once propagation makes such a
/// binding dead it disappears from the code, so the fact must move to the
/// ledger for validation and emission.
struct alias_candidate {
    std::string var;
    expr_ptr value;
};

std::vector<alias_candidate> entry_alias_candidates(const program &p) {
    std::vector<alias_candidate> cands;
    const basic_block *ent = p.find_block(p.entry);
    if (!ent)
        return cands;
    std::set<std::string> stable = stable_inputs(p);
    std::map<std::string, int> entry_writes;
    for (const auto &i : ent->body)
        if (const auto *a = std::get_if<assign_instr>(&i))
            entry_writes[a->lhs]++;
    std::set<std::string> seen;
    for (const auto &i : ent->body) {
        if (const auto *a = std::get_if<assign_instr>(&i)) {
            if (a->rhs->is_var() && stable.count(a->rhs->as_var().name) &&
                !seen.count(a->lhs) && entry_writes[a->lhs] == 1)
                cands.push_back({a->lhs, a->rhs});
            expr_uses(a->rhs, seen);
            seen.insert(a->lhs);
        } else {
            const auto &st = std::get<store_instr>(i);
            expr_uses(st.addr, seen);
            expr_uses(st.value, seen);
        }
    }
    return cands;
}

/// Blocks at whose entry `v = input` still holds: every path from the entry
/// block must avoid redefining v. The entry block itself is always in scope
/// because the pre-binding value of v is dead by construction.
std::set<std::string> alias_scope(const program &p, const std::string &v) {
    cfg g = build_cfg(p);
    std::map<std::string, std::vector<std::string>> preds;
    std::set<std::string> kills;
    for (const auto &bb : p.blocks) {
        for (auto &[_, s] : g.successors(bb.id))
            preds[s].push_back(bb.id);
        if (bb.id == p.entry)
            continue; // the binding itself lives here
        for (const auto &i : bb.body)
            if (const auto *a = std::get_if<assign_instr>(&i))
                if (a->lhs == v)
                    kills.insert(bb.id);
    }
    std::map<std::string, bool> holds_in, holds_out;
    for (const auto &bb : p.blocks)
        holds_in[bb.id] = holds_out[bb.id] = true;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto &bb : p.blocks) {
            bool hi = true;
            if (bb.id != p.entry) {
                if (preds[bb.id].empty())
                    hi = false; // unreachable
                for (const auto &pr : preds[bb.id])
                    hi = hi && holds_out[pr];
            }
            bool ho = bb.id == p.entry || (hi && !kills.count(bb.id));
            if (hi != holds_in[bb.id] || ho != holds_out[bb.id]) {
                holds_in[bb.id] = hi;
                holds_out[bb.id] = ho;
                changed = true;
            }
        }
    }
    std::set<std::string> scope{p.entry};
    for (const auto &bb : p.blocks)
        if (holds_in[bb.id])
            scope.insert(bb.id);
    return scope;
}

/// Liveness-based dead assignment removal; loops until stable.
void eliminate_dead_code(program &p, const std::set<std::string> &observables) {
    bool removed = true;
    while (removed) {
        removed = false;
        cfg g = build_cfg(p);
        std::map<std::string, std::set<std::string>> live_in, live_out;
        bool changed = true;
        while (changed) {
            changed = false;
            for (auto it = p.blocks.rbegin(); it != p.blocks.rend(); ++it) {
                const auto &bb = *it;
                std::set<std::string> out;
                if (std::holds_alternative<halt_term>(bb.term))
                    out = observables;
                for (auto &[_, s] : g.successors(bb.id))
                    for (auto &v : live_in[s])
                        out.insert(v);
                std::set<std::string> live = out;
                if (const auto *br = std::get_if<branch_term>(&bb.term))
                    expr_uses(br->cond, live);
                for (auto i = bb.body.rbegin(); i != bb.body.rend(); ++i) {
                    if (const auto *a = std::get_if<assign_instr>(&*i)) {
                        live.erase(a->lhs);
                        expr_uses(a->rhs, live);
                    } else {
                        const auto &st = std::get<store_instr>(*i);
                        expr_uses(st.addr, live);
                        expr_uses(st.value, live);
                    }
                }
                if (live != live_in[bb.id] || out != live_out[bb.id]) {
                    live_in[bb.id] = live;
                    live_out[bb.id] = out;
                    changed = true;
                }
            }
        }
        for (auto &bb : p.blocks) {
            std::set<std::string> live = live_out[bb.id];
            if (const auto *br = std::get_if<branch_term>(&bb.term))
                expr_uses(br->cond, live);
            std::vector<instr> kept;
            for (auto i = bb.body.rbegin(); i != bb.body.rend(); ++i) {
                if (const auto *a = std::get_if<assign_instr>(&*i)) {
                    if (!live.count(a->lhs)) {
                        removed = true;
                        continue;
                    }
                    live.erase(a->lhs);
                    expr_uses(a->rhs, live);
                } else {
                    const auto &st = std::get<store_instr>(*i);
                    expr_uses(st.addr, live);
                    expr_uses(st.value, live);
                }
                kept.push_back(*i);
            }
            std::reverse(kept.begin(), kept.end());
            bb.body = std::move(kept);
        }
    }
}

void dump_phase(const std::string &dir, const char *name, const program &p) {
    if (dir.empty())
        return;
    std::filesystem::create_directories(dir);
    std::ofstream os(dir + "/" + name + ".ir");
    os << print_program(p);
}

} // namespace

program remove_dead_code(const program &p,
                         const std::set<std::string> &observables) {
    program out = p;
    drop_unreachable(out);
    eliminate_dead_code(out, observables);
    drop_unreachable(out);
    return out;
}

propagate_result propagate_and_simplify(const program &p, const propagate_options &opts) {
    propagate_result res;
    if (!is_reducible(p)) {
        res.prog = p;
        res.irreducible = true;
        res.diagnostic = "irreducible control flow; propagation skipped";
        return res;
    }
    dump_phase(opts.dump_dir, "00-input", p);

    std::vector<alias_candidate> cands = entry_alias_candidates(p);
    std::set<std::string> introduced;
    program q = version_locals(p, introduced);

    // Phase 1: collect constant and stable-alias facts reaching each block.
    std::set<std::string> stable = stable_inputs(p);
    std::map<std::string, fact_map> in;
    std::map<std::string, bool> seen;
    std::deque<std::string> work{q.entry};
    seen[q.entry] = true;
    cfg g = build_cfg(q);
    auto same_facts = [](const fact_map &a, const fact_map &b) {
        if (a.size() != b.size())
            return false;
        for (auto &[v, e] : a) {
            auto it = b.find(v);
            if (it == b.end() || !expr_equal(it->second, e))
                return false;
        }
        return true;
    };
    while (!work.empty()) {
        auto id = work.front();
        work.pop_front();
        const basic_block *bb = q.find_block(id);
        fact_map out = block_out_facts(*bb, in[id], stable);
        for (const auto &v : introduced)
            out.erase(v); // block-local versions never cross an edge
        for (auto &[_, s] : g.successors(id)) {
            fact_map next = seen[s] ? join_facts(in[s], out) : out;
            if (!seen[s] || !same_facts(next, in[s])) {
                seen[s] = true;
                in[s] = next;
                work.push_back(s);
            }
        }
    }

    // Phases 2-4: propagate eagerly, simplify, revert fruitless propagation.
    for (auto &bb : q.blocks) {
        walk_state w;
        for (auto &[v, e] : in[bb.id])
            w.env[v] = e;
        for (auto &i : bb.body) {
            if (auto *a = std::get_if<assign_instr>(&i)) {
                expr_ptr original = a->rhs;
                a->rhs = process_expr(original, w);
                record_value(w, a->lhs, original);
            } else {
                auto &st = std::get<store_instr>(i);
                st.addr = process_expr(st.addr, w);
                st.value = process_expr(st.value, w);
            }
        }
        if (auto *br = std::get_if<branch_term>(&bb.term)) {
            expr_ptr cond = process_expr(br->cond, w);
            if (cond->is_cst())
                bb.term = goto_term{cond->as_cst().value ? br->then_target
                                                         : br->else_target};
            else
                br->cond = cond;
        }
    }
    dump_phase(opts.dump_dir, "10-propagated", q);

    // Phase 5: cleanup.
    drop_unreachable(q);
    std::set<std::string> observables =
        opts.observables ? *opts.observables : all_var_names(p);
    extract_chunk_constants(q, res.ledger, observables);
    eliminate_dead_code(q, observables);
    drop_unreachable(q);
    if (const basic_block *ent = q.find_block(q.entry)) {
        for (const auto &c : cands) {
            bool still = false;
            for (const auto &i : ent->body)
                if (const auto *a = std::get_if<assign_instr>(&i))
                    if (a->lhs == c.var)
                        still = true;
            if (!still && !res.ledger.find(c.var))
                res.ledger.record(ledger_kind::alias, c.var, c.value,
                                  "propagate_and_simplify", alias_scope(p, c.var));
        }
    }
    dump_phase(opts.dump_dir, "20-cleanup", q);

    res.prog = std::move(q);
    if (!opts.dump_dir.empty()) {
        std::ofstream os(opts.dump_dir + "/ledger.jsonl");
        os << res.ledger.to_json_lines();
    }
    return res;
}

} // namespace tina
