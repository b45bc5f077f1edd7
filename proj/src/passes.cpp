#include "tina/passes.hpp"

#include "tina/interp.hpp"
#include "tina/linear.hpp"
#include "tina/parser.hpp"
#include "tina/propagate.hpp"
#include "tina/rewrite.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

namespace tina {

namespace {

const std::set<std::string> flag_names = {"zf", "sf", "cf", "of", "df"};

bool mentions_any_flag(const expr_ptr &e) {
    for (const std::string &f : flag_names)
        if (mentions_var(e, f)) return true;
    return false;
}

ctype unsigned_of(unsigned bits) {
    ctype t;
    t.bits = bits;
    return t;
}

// ---- propagate_types ------------------------------------------------------

struct type_env {
    std::map<std::string, ctype> types;
    std::set<std::string> interface_vars; // declared types are authoritative
    std::vector<std::string> diagnostics;
    bool changed = false;

    bool same_shape(const ctype &a, const ctype &b) const {
        return a.is_pointer == b.is_pointer && a.bits == b.bits &&
               a.is_signed == b.is_signed;
    }

    void assign(const std::string &v, const ctype &t) {
        auto it = types.find(v);
        if (it == types.end()) {
            types.emplace(v, t);
            changed = true;
            return;
        }
        if (same_shape(it->second, t)) return;
        if (it->second.is_pointer != t.is_pointer &&
            interface_vars.count(v))
            throw chunk_error("interface operand " + v + " declared " +
                              it->second.to_string() + " but used as a " +
                              (t.is_pointer ? "pointer" : "value"));
        if (it->second.is_pointer != t.is_pointer) {
            diagnostics.push_back("type conflict on " + v +
                                  ": pointer vs value; falling back to u" +
                                  std::to_string(t.bits));
            it->second = unsigned_of(it->second.bits);
            changed = true;
            return;
        }
        if (it->second.is_signed != t.is_signed) {
            diagnostics.push_back("signedness conflict on " + v +
                                  "; falling back to unsigned");
            it->second.is_signed = false;
            changed = true;
        }
    }
};

/// Infers a type for `e` from variable types; pointer-ness survives additive
/// arithmetic, everything else is unsigned of the expression width.
ctype infer_type(const expr_ptr &e, const type_env &env) {
    if (e->is_var()) {
        auto it = env.types.find(e->as_var().name);
        if (it != env.types.end()) return it->second;
        return unsigned_of(e->width);
    }
    if (e->is_binop()) {
        const auto &b = e->as_binop();
        if (b.op == binop_kind::add || b.op == binop_kind::sub) {
            ctype l = infer_type(b.lhs, env);
            if (l.is_pointer) return l;
            ctype r = infer_type(b.rhs, env);
            if (r.is_pointer && b.op == binop_kind::add) return r;
        }
    }
    if (e->is_ite()) {
        const auto &i = e->as_ite();
        ctype t = infer_type(i.then_e, env);
        if (t.is_pointer) return t;
        return infer_type(i.else_e, env);
    }
    return unsigned_of(e->width);
}

void constrain_address(const expr_ptr &addr, unsigned nbytes, type_env &env) {
    // The address operand is a pointer; an untyped lone variable in the
    // address becomes a pointer to the accessed granule.
    std::set<std::string> vars = free_vars(addr);
    std::string lone;
    for (const std::string &v : vars) {
        if (env.types.count(v) && env.types.at(v).is_pointer) return;
    }
    if (vars.size() == 1) lone = *vars.begin();
    if (lone.empty()) return;
    ctype ptr;
    ptr.is_pointer = true;
    ptr.bits = 32;
    ptr.pointee = std::make_shared<ctype>(unsigned_of(8 * nbytes));
    env.assign(lone, ptr);
}

// ---- brute equivalence backend --------------------------------------------

} // namespace

uint64_t sext_value(uint64_t v, unsigned from, unsigned to) {
    if (from >= to) return truncate(v, to);
    uint64_t sign = uint64_t{1} << (from - 1);
    return truncate((truncate(v, from) ^ sign) - sign, to);
}

/// Spread an enumerated small pattern across a wide domain: the pattern's
/// top bit becomes the value's sign bit, the rest sign-embeds into the low
/// bits. Covers the neighbourhoods of 0, -1, INT_MIN and INT_MAX, where
/// comparison predicates actually differ.
uint64_t embed_pattern(uint64_t pattern, unsigned bits, unsigned width) {
    if (bits >= width) return truncate(pattern, width);
    uint64_t top = (pattern >> (bits - 1)) & 1;
    uint64_t low = bits >= 2 ? sext_value(pattern, bits - 1, width - 1) : 0;
    return (top << (width - 1)) | truncate(low, width - 1);
}

namespace {

bool states_agree(const expr_ptr &a, const expr_ptr &b,
                  const machine_state &s) {
    return eval_expr(a, s) == eval_expr(b, s);
}

} // namespace

typed_program propagate_types(const chunk_spec &spec,
                              const decoded_chunk &chunk) {
    typed_program out;
    out.prog = chunk.prog;
    type_env env;

    size_t nouts = spec.outputs.size();
    for (size_t i = 0; i < chunk.interface.size(); ++i) {
        const interface_entry &e = chunk.interface[i];
        const operand_spec &op = spec.operand(i);
        if (i < nouts) {
            env.assign(e.ir_var, op.type);
            env.interface_vars.insert(e.ir_var);
            out.observables.insert(e.ir_var);
        } else if (!e.ir_var.empty() &&
                   !std::isdigit(static_cast<unsigned char>(e.ir_var[0])) &&
                   e.ir_var[0] != '-') {
            // Symbolic input: the symbol carries the declared type. For a
            // memory-located operand the symbol is its address.
            if (op.constraint == "m") {
                ctype ptr;
                ptr.is_pointer = true;
                ptr.bits = 32;
                ptr.pointee = std::make_shared<ctype>(op.type);
                env.assign(e.ir_var, ptr);
            } else {
                env.assign(e.ir_var, op.type);
            }
        }
    }

    // Forward dataflow to fixpoint.
    for (int round = 0; round < 64; ++round) {
        env.changed = false;
        for (const basic_block &bb : out.prog.blocks) {
            for (const instr &in : bb.body) {
                if (const auto *a = std::get_if<assign_instr>(&in)) {
                    ctype t = infer_type(a->rhs, env);
                    t.bits = a->width > 32 ? a->width : t.bits;
                    if (!t.is_pointer && t.bits != a->width)
                        t = unsigned_of(a->width);
                    env.assign(a->lhs, t);
                } else if (const auto *s = std::get_if<store_instr>(&in)) {
                    constrain_address(s->addr, s->nbytes, env);
                }
            }
        }
        if (!env.changed) break;
    }

    // Declared output types are authoritative; a pointer/value clash with
    // the inferred type is a hard conflict.
    for (size_t i = 0; i < nouts; ++i) {
        const interface_entry &e = chunk.interface[i];
        const operand_spec &op = spec.outputs[i];
        auto it = env.types.find(e.ir_var);
        if (it != env.types.end() &&
            it->second.is_pointer != op.type.is_pointer &&
            assigned_vars(out.prog).count(e.ir_var))
            throw chunk_error("output " + op.name + " declared " +
                              op.type.to_string() + " but carries a " +
                              (it->second.is_pointer ? "pointer" : "value"));
        env.types[e.ir_var] = op.type;
    }

    out.types = std::move(env.types);
    out.diagnostics = std::move(env.diagnostics);
    return out;
}

equiv_backend brute_equiv_backend(unsigned sample_budget) {
    return [sample_budget](const expr_ptr &a, const expr_ptr &b) -> bool {
        if (a->width != b->width) return false;
        if (mentions_load(a) || mentions_load(b)) return false;
        std::map<std::string, unsigned> vars;
        collect_free_vars(a, vars);
        collect_free_vars(b, vars);

        std::vector<std::pair<std::string, unsigned>> vs(vars.begin(),
                                                         vars.end());
        unsigned total_bits = 0;
        for (const auto &[name, w] : vs) total_bits += std::min(w, 8u);

        std::mt19937_64 rng(0x70c0ffee);
        // Quick full-width random filter first.
        for (unsigned i = 0; i < 128; ++i) {
            machine_state s;
            for (const auto &[name, w] : vs)
                s.set_var(name, truncate(rng(), w), w);
            if (!states_agree(a, b, s)) return false;
        }
        if (total_bits <= 16) {
            // Exhaustive over the sign-embedded low bits.
            uint64_t count = uint64_t{1} << total_bits;
            for (uint64_t idx = 0; idx < count; ++idx) {
                machine_state s;
                uint64_t rest = idx;
                for (const auto &[name, w] : vs) {
                    unsigned bits = std::min(w, 8u);
                    uint64_t low = rest & ((uint64_t{1} << bits) - 1);
                    rest >>= bits;
                    s.set_var(name, embed_pattern(low, bits, w), w);
                }
                if (!states_agree(a, b, s)) return false;
            }
            return true;
        }
        for (unsigned i = 0; i < sample_budget; ++i) {
            machine_state s;
            for (const auto &[name, w] : vs) {
                unsigned bits = std::min(w, 8u);
                uint64_t v = i % 2 ? truncate(rng(), w)
                                   : embed_pattern(rng() & ((uint64_t{1} << bits) - 1),
                                           bits, w);
                s.set_var(name, v, w);
            }
            if (!states_agree(a, b, s)) return false;
        }
        return true;
    };
}

namespace {

// ---- recover_predicates ---------------------------------------------------

/// Symbolic per-block state: each assigned variable's value in terms of the
/// block-entry variables.
struct block_env {
    std::map<std::string, expr_ptr> values; // assigned vars only
    std::vector<std::string> order;         // assignment order

    void record(const std::string &lhs, const expr_ptr &sym) {
        if (!values.count(lhs)) order.push_back(lhs);
        values[lhs] = sym;
    }
};

block_env symbolize_block(const basic_block &bb) {
    block_env env;
    for (const instr &in : bb.body) {
        if (const auto *a = std::get_if<assign_instr>(&in)) {
            expr_ptr sym = subst(a->rhs, env.values);
            if (mentions_load(sym)) sym = nullptr; // loads are opaque here
            if (sym)
                env.record(a->lhs, sym);
            else
                env.values.erase(a->lhs);
        }
    }
    return env;
}

/// Express an entry-term value over the block's exit state: as an unmodified
/// entry variable, an assigned variable's exit value, or exit value + const.
expr_ptr exit_representation(const expr_ptr &atom, const block_env &env) {
    expr_ptr a = simplify_expr(atom);
    if (a->is_var() && !env.values.count(a->as_var().name)) return a;
    for (const std::string &v : env.order) {
        const expr_ptr &val = env.values.at(v);
        if (val->width != a->width) continue;
        if (expr_equal(simplify_expr(val), a)) return var(v, a->width);
    }
    for (const std::string &v : env.order) {
        const expr_ptr &val = env.values.at(v);
        if (val->width != a->width) continue;
        if (auto diff = const_difference(a, val)) {
            if (*diff == 0) return var(v, a->width);
            return add(var(v, a->width), cst(*diff, a->width));
        }
    }
    return nullptr;
}

expr_ptr make_pred(int pred, expr_ptr a, expr_ptr b) {
    auto cmp = [&](binop_kind k) { return binop(k, a, b); };
    auto with_eq = [&](binop_kind k) {
        return binop(binop_kind::bor, binop(k, a, b), binop(binop_kind::eq, a, b));
    };
    switch (pred) {
    case 0: return cmp(binop_kind::eq);
    case 1: return cmp(binop_kind::neq);
    case 2: return cmp(binop_kind::ult);
    case 3: return with_eq(binop_kind::ult); // <=u
    case 4: return cmp(binop_kind::ugt);
    case 5: return with_eq(binop_kind::ugt); // >=u
    case 6: return cmp(binop_kind::slt);
    case 7: return with_eq(binop_kind::slt); // <=s
    case 8: return cmp(binop_kind::sgt);
    case 9: return with_eq(binop_kind::sgt); // >=s
    }
    throw ir_error("bad predicate index");
}

/// Atoms of the flag-defining computation, in entry terms: the operands of
/// the flag source first (the reconstructed pre-instruction values), then
/// the result.
std::vector<expr_ptr> flag_atoms(const block_env &env) {
    auto it = env.values.find("zf");
    if (it == env.values.end()) return {};
    const expr_ptr &zf = it->second;
    if (!zf->is_binop() || zf->as_binop().op != binop_kind::eq) return {};
    expr_ptr s = zf->as_binop().lhs;
    if (zf->as_binop().rhs->is_cst() &&
        zf->as_binop().rhs->as_cst().value != 0)
        return {};
    std::vector<expr_ptr> atoms;
    auto push = [&](const expr_ptr &e) {
        if (e->is_cst()) return;
        for (const expr_ptr &have : atoms)
            if (expr_equal(have, e)) return;
        atoms.push_back(e);
    };
    if (s->is_binop() && !is_comparison(s->as_binop().op) &&
        s->as_binop().op != binop_kind::concat) {
        push(s->as_binop().lhs);
        push(s->as_binop().rhs);
    }
    push(s);
    return atoms;
}

} // namespace

typed_program recover_predicates(const typed_program &t,
                                 const equiv_backend &backend) {
    typed_program out = t;
    bool degraded = !backend;
    for (basic_block &bb : out.prog.blocks) {
        auto *br = std::get_if<branch_term>(&bb.term);
        if (!br || !mentions_any_flag(br->cond)) continue;
        if (degraded) {
            out.diagnostics.push_back(
                "predicate recovery skipped (no backend) in block " + bb.id);
            continue;
        }
        block_env env = symbolize_block(bb);
        expr_ptr cond_sym = subst(br->cond, env.values);
        if (mentions_any_flag(cond_sym)) continue; // flags defined elsewhere

        std::vector<expr_ptr> reps;
        for (const expr_ptr &atom : flag_atoms(env)) {
            expr_ptr rep = exit_representation(atom, env);
            if (!rep) continue;
            bool dup = false;
            for (const expr_ptr &have : reps)
                if (expr_equal(have, rep)) dup = true;
            if (!dup) reps.push_back(rep);
        }
        if (reps.empty()) continue;
        unsigned w = reps.front()->width;
        std::vector<expr_ptr> rhss = reps;
        rhss.push_back(cst(0, w));
        rhss.push_back(cst(1, w));

        expr_ptr found;
        for (int pred = 0; pred < 10 && !found; ++pred) {
            for (const expr_ptr &a : reps) {
                if (a->width != w) continue;
                for (const expr_ptr &b : rhss) {
                    if (b->width != a->width || expr_equal(a, b)) continue;
                    expr_ptr cand = make_pred(pred, a, b);
                    expr_ptr cand_sym = subst(cand, env.values);
                    if (backend(cond_sym, cand_sym)) {
                        found = cand;
                        break;
                    }
                }
                if (found) break;
            }
        }
        if (found) br->cond = found;
    }

    // Cleanup: flag definitions no longer feeding anything disappear.
    std::set<std::string> keep;
    for (const auto &[v, w] : assigned_vars(out.prog))
        if (!flag_names.count(v)) keep.insert(v);
    for (const auto &[v, w] : program_inputs(out.prog)) keep.insert(v);
    for (const std::string &v : out.observables) keep.insert(v);
    out.prog = remove_dead_code(out.prog, keep);
    return out;
}

namespace {

// ---- unpack_registers -----------------------------------------------------

struct granule {
    unsigned lo, hi;
};

std::vector<granule> granularities(unsigned width) {
    std::vector<granule> out;
    for (unsigned step = 8; step < width; step *= 2)
        for (unsigned lo = 0; lo + step <= width; lo += step)
            out.push_back({lo, lo + step - 1});
    return out;
}

bool splittable_width(unsigned w) {
    return w == 16 || w == 32 || w == 64;
}

std::string sub_name(const std::string &v, unsigned lo, unsigned hi) {
    return v + "_" + std::to_string(lo) + "_" + std::to_string(hi);
}

using defsites = std::map<std::string, std::set<int>>;

expr_ptr rewrite_extracts(const expr_ptr &e, const defsites &defs,
                          const std::map<int, std::set<std::string>> &made) {
    auto self = [&](const expr_ptr &c) {
        return rewrite_extracts(c, defs, made);
    };
    if (e->is_unop()) {
        const auto &u = e->as_unop();
        if (u.op == unop_kind::extract && u.arg->is_var()) {
            const std::string &v = u.arg->as_var().name;
            auto it = defs.find(v);
            if (it != defs.end() && it->second.size() == 1) {
                int site = *it->second.begin();
                auto mit = made.find(site);
                std::string name = sub_name(v, u.lo, u.hi);
                if (mit != made.end() && mit->second.count(name))
                    return var(name, e->width);
            }
        }
        expr_ptr arg = self(u.arg);
        switch (u.op) {
        case unop_kind::bnot: return bnot(arg);
        case unop_kind::neg: return neg(arg);
        case unop_kind::uext: return uext(u.n, arg);
        case unop_kind::sext: return sext(u.n, arg);
        case unop_kind::extract: return extract(u.lo, u.hi, arg);
        }
    }
    if (e->is_load()) return load(self(e->as_load().addr), e->as_load().nbytes);
    if (e->is_binop())
        return binop(e->as_binop().op, self(e->as_binop().lhs),
                     self(e->as_binop().rhs));
    if (e->is_ite())
        return ite(self(e->as_ite().cond), self(e->as_ite().then_e),
                   self(e->as_ite().else_e));
    return e;
}

} // namespace

typed_program unpack_registers(const typed_program &t) {
    typed_program out = t;
    program &p = out.prog;

    // Step 1: after each wide assignment, materialise every power-of-two
    // byte fragment as its own variable.
    for (basic_block &bb : p.blocks) {
        std::vector<instr> body;
        for (instr &in : bb.body) {
            std::string lhs;
            unsigned width = 0;
            if (auto *a = std::get_if<assign_instr>(&in)) {
                lhs = a->lhs;
                width = a->width;
            }
            body.push_back(std::move(in));
            if (!lhs.empty() && splittable_width(width) &&
                !flag_names.count(lhs)) {
                ctype parent = out.types.count(lhs) ? out.types.at(lhs)
                                                    : unsigned_of(width);
                for (const granule &g : granularities(width)) {
                    std::string name = sub_name(lhs, g.lo, g.hi);
                    body.push_back(assign_instr{
                        name, g.hi - g.lo + 1,
                        extract(g.lo, g.hi, var(lhs, width))});
                    ctype sub = unsigned_of(g.hi - g.lo + 1);
                    sub.is_signed = !parent.is_pointer && parent.is_signed;
                    out.types[name] = sub;
                }
            }
        }
        bb.body = std::move(body);
    }

    // Reaching-definition sets over assignment-site ids.
    cfg g = build_cfg(p);
    std::map<std::string, defsites> in_sets;
    std::map<const instr *, int> site_of_instr;
    int n = 0;
    for (basic_block &bb : p.blocks)
        for (instr &in : bb.body)
            if (std::holds_alternative<assign_instr>(in))
                site_of_instr[&in] = n++;

    auto block_out = [&](const basic_block &bb, defsites d) {
        for (const instr &in : bb.body)
            if (const auto *a = std::get_if<assign_instr>(&in))
                d[a->lhs] = {site_of_instr.at(&in)};
        return d;
    };

    std::map<std::string, defsites> outs;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const basic_block &bb : p.blocks) {
            defsites in;
            for (const std::string &pred : g.predecessors(bb.id))
                for (const auto &[v, s] : outs[pred])
                    in[v].insert(s.begin(), s.end());
            defsites o = block_out(bb, in);
            if (o != outs[bb.id]) {
                outs[bb.id] = std::move(o);
                changed = true;
            }
            in_sets[bb.id] = std::move(in);
        }
    }

    // `made` was keyed by original-assignment counting; rebuild it keyed by
    // the final site numbering: a fragment assignment belongs to the nearest
    // preceding parent assignment.
    std::map<int, std::set<std::string>> made_final;
    for (basic_block &bb : p.blocks) {
        int parent_site = -1;
        std::string parent;
        for (instr &in : bb.body) {
            const auto *a = std::get_if<assign_instr>(&in);
            if (!a) continue;
            int s = site_of_instr.at(&in);
            if (a->lhs.rfind(parent + "_", 0) == 0 && !parent.empty() &&
                a->rhs->is_unop() &&
                a->rhs->as_unop().op == unop_kind::extract &&
                a->rhs->as_unop().arg->is_var() &&
                a->rhs->as_unop().arg->as_var().name == parent) {
                made_final[parent_site].insert(a->lhs);
            } else {
                parent_site = s;
                parent = a->lhs;
            }
        }
    }

    std::set<std::string> generated;
    for (const auto &[s, names] : made_final)
        generated.insert(names.begin(), names.end());

    // Step 2: rewrite extracts against the reaching-definition map. The
    // fragment definitions themselves must keep their extracts.
    for (basic_block &bb : p.blocks) {
        defsites cur = in_sets[bb.id];
        for (instr &in : bb.body) {
            if (auto *a = std::get_if<assign_instr>(&in)) {
                if (!generated.count(a->lhs))
                    a->rhs = rewrite_extracts(a->rhs, cur, made_final);
                cur[a->lhs] = {site_of_instr.at(&in)};
            } else if (auto *s = std::get_if<store_instr>(&in)) {
                s->addr = rewrite_extracts(s->addr, cur, made_final);
                s->value = rewrite_extracts(s->value, cur, made_final);
            }
        }
        if (auto *br = std::get_if<branch_term>(&bb.term))
            br->cond = rewrite_extracts(br->cond, cur, made_final);
    }

    // Step 3: drop generated fragments nothing ever reads.
    bool removed = true;
    while (removed) {
        removed = false;
        std::set<std::string> used;
        for (const basic_block &bb : p.blocks) {
            for (const instr &in : bb.body) {
                if (const auto *a = std::get_if<assign_instr>(&in)) {
                    for (const std::string &v : free_vars(a->rhs))
                        used.insert(v);
                } else if (const auto *s = std::get_if<store_instr>(&in)) {
                    for (const std::string &v : free_vars(s->addr))
                        used.insert(v);
                    for (const std::string &v : free_vars(s->value))
                        used.insert(v);
                }
            }
            if (const auto *br = std::get_if<branch_term>(&bb.term))
                for (const std::string &v : free_vars(br->cond))
                    used.insert(v);
        }
        for (basic_block &bb : p.blocks) {
            size_t before = bb.body.size();
            std::erase_if(bb.body, [&](const instr &in) {
                const auto *a = std::get_if<assign_instr>(&in);
                return a && generated.count(a->lhs) && !used.count(a->lhs);
            });
            if (bb.body.size() != before) removed = true;
        }
    }
    for (const std::string &v : generated) {
        bool still = false;
        for (const auto &[name, w] : assigned_vars(p))
            if (name == v) still = true;
        if (!still) out.types.erase(v);
    }
    return out;
}

namespace {

// ---- normalize_loops ------------------------------------------------------

struct loop_info {
    std::string header;
    std::string latch; // back-edge source; must hold the induction updates
    std::set<std::string> blocks;
};

std::vector<loop_info> find_natural_loops(const program &p) {
    cfg g = build_cfg(p);
    std::vector<loop_info> loops;
    // Iterative DFS with a gray set for retreating edges.
    std::map<std::string, int> color; // 0 white, 1 gray, 2 black
    std::vector<std::pair<std::string, size_t>> stack;
    std::vector<std::pair<std::string, std::string>> back_edges;
    if (!p.find_block(p.entry)) return loops;
    stack.push_back({p.entry, 0});
    color[p.entry] = 1;
    while (!stack.empty()) {
        auto &[node, idx] = stack.back();
        auto succs = g.successors(node);
        if (idx >= succs.size()) {
            color[node] = 2;
            stack.pop_back();
            continue;
        }
        std::string next = succs[idx++].second;
        if (color[next] == 1)
            back_edges.push_back({node, next});
        else if (color[next] == 0) {
            color[next] = 1;
            stack.push_back({next, 0});
        }
    }
    for (const auto &[latch, header] : back_edges) {
        loop_info li;
        li.header = header;
        li.latch = latch;
        li.blocks = {header, latch};
        std::vector<std::string> work = {latch};
        while (!work.empty()) {
            std::string b = work.back();
            work.pop_back();
            if (b == header) continue;
            for (const std::string &pred : g.predecessors(b))
                if (li.blocks.insert(pred).second) work.push_back(pred);
        }
        loops.push_back(std::move(li));
    }
    return loops;
}

/// v := v + k inside `bb`; returns the constant step if the pattern holds
/// exactly once and v is otherwise unassigned in the loop.
std::optional<uint64_t> const_step(const program &p, const loop_info &li,
                                   const std::string &v, unsigned &width) {
    std::optional<uint64_t> step;
    for (const basic_block &bb : p.blocks) {
        if (!li.blocks.count(bb.id)) continue;
        for (const instr &in : bb.body) {
            const auto *a = std::get_if<assign_instr>(&in);
            if (!a || a->lhs != v) continue;
            if (step || bb.id != li.latch) return std::nullopt;
            if (!a->rhs->is_binop()) return std::nullopt;
            const auto &b = a->rhs->as_binop();
            bool sub_form = b.op == binop_kind::sub;
            if ((b.op != binop_kind::add && !sub_form) || !b.lhs->is_var() ||
                b.lhs->as_var().name != v || !b.rhs->is_cst())
                return std::nullopt;
            uint64_t k = b.rhs->as_cst().value;
            step = truncate(sub_form ? -k : k, a->width);
            width = a->width;
        }
    }
    return step;
}

/// The initial value of `v` on loop entry: the last assignment found walking
/// the single-predecessor chain above the header, with loop-invariant and
/// assign-once free symbols.
expr_ptr initial_value(const program &p, const cfg &g, const loop_info &li,
                       const std::string &v) {
    std::map<std::string, unsigned> assigned = assigned_vars(p);
    std::string cur = li.header;
    for (int hops = 0; hops < 64; ++hops) {
        std::vector<std::string> preds;
        for (const std::string &pred : g.predecessors(cur))
            if (!li.blocks.count(pred)) preds.push_back(pred);
        if (preds.size() != 1) return nullptr;
        const basic_block *bb = p.find_block(preds[0]);
        if (!bb) return nullptr;
        for (auto it = bb->body.rbegin(); it != bb->body.rend(); ++it) {
            const auto *a = std::get_if<assign_instr>(&*it);
            if (!a || a->lhs != v) continue;
            for (const std::string &fv : free_vars(a->rhs))
                if (assigned.count(fv)) return nullptr; // not invariant
            if (mentions_load(a->rhs)) return nullptr;
            return a->rhs;
        }
        // No other assignment to v may hide earlier in the chain walk;
        // continue upward.
        cur = preds[0];
    }
    return nullptr;
}

} // namespace

std::pair<typed_program, assumption_ledger>
normalize_loops(const typed_program &t) {
    typed_program out = t;
    assumption_ledger ledger;
    program &p = out.prog;
    cfg g = build_cfg(p);

    for (const loop_info &li : find_natural_loops(p)) {
        const basic_block *head = p.find_block(li.header);
        if (!head) continue;
        const auto *br = std::get_if<branch_term>(&head->term);
        if (!br) continue;

        // Counter: the loop-updated variable tested in the header branch.
        std::string counter;
        unsigned cw = 0;
        uint64_t cstep = 0;
        for (const std::string &v : free_vars(br->cond)) {
            unsigned w = 0;
            auto s = const_step(p, li, v, w);
            if (!s) continue;
            int64_t signed_step = static_cast<int64_t>(sext_value(*s, w, 64));
            if (signed_step != 1 && signed_step != -1) continue;
            counter = v;
            cw = w;
            cstep = *s;
            break;
        }
        if (counter.empty()) continue;
        expr_ptr counter_init = initial_value(p, g, li, counter);
        if (!counter_init) continue;
        bool down = truncate(cstep + 1, cw) == 0; // step is -1

        // Derived induction variables: constant-step, invariant init, all
        // occurrences confined to the latch block.
        std::map<std::string, unsigned> loop_assigned;
        for (const basic_block &bb : p.blocks)
            if (li.blocks.count(bb.id))
                for (const instr &in : bb.body)
                    if (const auto *a = std::get_if<assign_instr>(&in))
                        loop_assigned[a->lhs] = a->width;

        for (const auto &[v, w] : loop_assigned) {
            if (v == counter) continue;
            unsigned vw = 0;
            auto vs = const_step(p, li, v, vw);
            if (!vs || vw != cw) continue;
            bool confined = true;
            for (const basic_block &bb : p.blocks) {
                if (!li.blocks.count(bb.id) || bb.id == li.latch) continue;
                for (const instr &in : bb.body) {
                    if (const auto *a = std::get_if<assign_instr>(&in))
                        if (mentions_var(a->rhs, v)) confined = false;
                    if (const auto *s = std::get_if<store_instr>(&in))
                        if (mentions_var(s->addr, v) ||
                            mentions_var(s->value, v))
                            confined = false;
                }
                if (const auto *b2 = std::get_if<branch_term>(&bb.term))
                    if (mentions_var(b2->cond, v)) confined = false;
            }
            if (!confined) continue;
            expr_ptr v_init = initial_value(p, g, li, v);
            if (!v_init) continue;

            // Invariant at latch entry:
            //   down: v = init_v + step_v * (init_c - c)
            //   up:   v = init_v + step_v * (c - init_c)
            expr_ptr c_var = var(counter, cw);
            expr_ptr delta = down ? sub(counter_init, c_var)
                                  : sub(c_var, counter_init);
            expr_ptr relation =
                add(v_init, mul(cst(*vs, cw), delta));

            // Rewrite the latch: occurrences before the v update see the
            // invariant value adjusted by updates already passed.
            basic_block *latch = p.find_block(li.latch);
            std::vector<instr> body;
            uint64_t v_passed = 0, c_passed = 0;
            auto current_value = [&]() {
                // v at this point = relation(counter-now) + step_v * (j ± i)
                // where j counts v updates passed and i counter updates
                // passed (minus when counting down).
                uint64_t steps = down ? v_passed - c_passed
                                      : v_passed + c_passed;
                uint64_t corr = truncate(*vs * steps, cw);
                expr_ptr e = relation;
                if (corr) e = add(e, cst(corr, cw));
                return simplify_expr(e);
            };
            for (instr &in : latch->body) {
                if (auto *a = std::get_if<assign_instr>(&in)) {
                    if (a->lhs == v) {
                        ++v_passed;
                        continue; // the update is deleted
                    }
                    if (mentions_var(a->rhs, v))
                        a->rhs = subst(a->rhs, {{v, current_value()}});
                    if (a->lhs == counter) ++c_passed;
                    body.push_back(std::move(in));
                } else if (auto *s = std::get_if<store_instr>(&in)) {
                    if (mentions_var(s->addr, v))
                        s->addr = subst(s->addr, {{v, current_value()}});
                    if (mentions_var(s->value, v))
                        s->value = subst(s->value, {{v, current_value()}});
                    body.push_back(std::move(in));
                } else {
                    body.push_back(std::move(in));
                }
            }
            latch->body = std::move(body);
            ledger.record(ledger_kind::affine_relation, v,
                          simplify_expr(relation), "normalize_loops");
            out.observables.erase(v);
        }
    }
    return {out, ledger};
}

pipeline_level parse_level(const std::string &name) {
    if (name == "basic") return pipeline_level::basic;
    if (name == "O1") return pipeline_level::O1;
    if (name == "O2") return pipeline_level::O2;
    if (name == "O3") return pipeline_level::O3;
    if (name == "O4") return pipeline_level::O4;
    if (name == "no-O1") return pipeline_level::no_O1;
    if (name == "no-O2") return pipeline_level::no_O2;
    if (name == "no-O3") return pipeline_level::no_O3;
    throw ir_error("unknown pipeline level " + name);
}

const char *level_name(pipeline_level level) {
    switch (level) {
    case pipeline_level::basic: return "basic";
    case pipeline_level::O1: return "O1";
    case pipeline_level::O2: return "O2";
    case pipeline_level::O3: return "O3";
    case pipeline_level::O4: return "O4";
    case pipeline_level::no_O1: return "no-O1";
    case pipeline_level::no_O2: return "no-O2";
    case pipeline_level::no_O3: return "no-O3";
    }
    return "?";
}

namespace {

void dump_ir(const std::string &dir, const char *name, const program &p) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream os(dir + "/" + name + ".ir");
    os << print_program(p);
}

} // namespace

namespace {

/// Folds block-local single-use temporaries into their one use site: the
/// statement-level counterpart of expression propagation. Loads and ites
/// stay put (memory ordering, branch shape).
void coalesce_single_use(program &p, const std::set<std::string> &observables) {
    std::map<std::string, unsigned> inputs = program_inputs(p);
    for (bool changed = true; changed;) {
        changed = false;
        std::map<std::string, unsigned> defs, uses;
        auto count_uses = [&uses](const expr_ptr &e) {
            for (const std::string &v : free_vars(e)) ++uses[v];
        };
        for (const basic_block &bb : p.blocks) {
            for (const instr &in : bb.body) {
                if (const auto *a = std::get_if<assign_instr>(&in)) {
                    ++defs[a->lhs];
                    count_uses(a->rhs);
                } else {
                    const auto &st = std::get<store_instr>(in);
                    count_uses(st.addr);
                    count_uses(st.value);
                }
            }
            if (const auto *br = std::get_if<branch_term>(&bb.term))
                count_uses(br->cond);
        }
        for (basic_block &bb : p.blocks) {
            for (size_t i = 0; i < bb.body.size(); ++i) {
                const auto *a = std::get_if<assign_instr>(&bb.body[i]);
                if (!a) continue;
                const std::string &v = a->lhs;
                if (observables.count(v) || inputs.count(v)) continue;
                if (defs[v] != 1 || uses[v] != 1) continue;
                if (mentions_load(a->rhs) || a->rhs->is_ite()) continue;
                std::set<std::string> deps = free_vars(a->rhs);
                // Find the single use below the definition in this block;
                // give up when a dependency is redefined in between.
                std::map<std::string, expr_ptr> repl{{v, a->rhs}};
                bool placed = false;
                for (size_t j = i + 1; j < bb.body.size() && !placed; ++j) {
                    if (auto *b = std::get_if<assign_instr>(&bb.body[j])) {
                        if (mentions_var(b->rhs, v)) {
                            b->rhs = subst(b->rhs, repl);
                            placed = true;
                            break;
                        }
                        if (deps.count(b->lhs)) break;
                    } else {
                        auto &st = std::get<store_instr>(bb.body[j]);
                        if (mentions_var(st.addr, v)) {
                            st.addr = subst(st.addr, repl);
                            placed = true;
                        }
                        if (!placed && mentions_var(st.value, v)) {
                            st.value = subst(st.value, repl);
                            placed = true;
                        }
                    }
                }
                if (!placed) {
                    auto *br = std::get_if<branch_term>(&bb.term);
                    bool blocked = false;
                    for (size_t j = i + 1; j < bb.body.size(); ++j)
                        if (const auto *b =
                                std::get_if<assign_instr>(&bb.body[j]))
                            if (deps.count(b->lhs)) blocked = true;
                    if (br && !blocked && mentions_var(br->cond, v)) {
                        br->cond = subst(br->cond, repl);
                        placed = true;
                    }
                }
                if (placed) {
                    bb.body.erase(bb.body.begin() + i);
                    changed = true;
                    --i;
                }
            }
            if (changed) break; // counts are stale; restart the scan
        }
    }
}

} // namespace

pipeline_result run_pipeline(const chunk_spec &spec,
                             const decoded_chunk &chunk, pipeline_level level,
                             const std::string &dump_dir) {
    using pl = pipeline_level;
    bool predicates = level != pl::basic && level != pl::no_O1;
    bool unpack = level == pl::O2 || level == pl::O3 || level == pl::O4 ||
                  level == pl::no_O1 || level == pl::no_O3;
    bool propagate = level == pl::O3 || level == pl::O4 ||
                     level == pl::no_O1 || level == pl::no_O2;
    bool loops = level == pl::O4 || level == pl::no_O1 ||
                 level == pl::no_O2 || level == pl::no_O3;
    if (level == pl::O1 || level == pl::O2 || level == pl::O3) loops = false;

    pipeline_result res;
    res.prog = propagate_types(spec, chunk);
    dump_ir(dump_dir, "00-typed", res.prog.prog);
    if (predicates) {
        res.prog = recover_predicates(res.prog);
        dump_ir(dump_dir, "10-predicates", res.prog.prog);
    }
    if (unpack) {
        res.prog = unpack_registers(res.prog);
        dump_ir(dump_dir, "20-unpacked", res.prog.prog);
    }
    auto run_propagation = [&](const char *phase) {
        propagate_options opts;
        opts.observables = res.prog.observables;
        propagate_result pr = propagate_and_simplify(res.prog.prog, opts);
        if (pr.irreducible) {
            res.prog.diagnostics.push_back("propagation skipped: " +
                                           pr.diagnostic);
            return;
        }
        res.prog.prog = std::move(pr.prog);
        coalesce_single_use(res.prog.prog, res.prog.observables);
        for (ledger_entry &e : pr.ledger.entries)
            if (!res.ledger.find(e.var)) // loop facts outrank late aliases
                res.ledger.entries.push_back(std::move(e));
        dump_ir(dump_dir, phase, res.prog.prog);
    };
    if (propagate) run_propagation("30-propagated");
    if (loops) {
        auto [normalized, loop_ledger] = normalize_loops(res.prog);
        res.prog = std::move(normalized);
        for (ledger_entry &e : loop_ledger.entries)
            res.ledger.entries.push_back(std::move(e));
        if (propagate)
            run_propagation("40-loops");
        else
            res.prog.prog =
                remove_dead_code(res.prog.prog, res.prog.observables);
        dump_ir(dump_dir, "40-loops", res.prog.prog);
    }
    if (!dump_dir.empty()) {
        std::ofstream os(dump_dir + "/ledger.jsonl");
        os << res.ledger.to_json_lines();
    }
    return res;
}

} // namespace tina
