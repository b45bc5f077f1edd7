#include "tina/validate.hpp"

#include "tina/interp.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace tina {

// ---- S1 ---------------------------------------------------------------------

namespace {

const char *tag_name(edge_tag t) {
    switch (t) {
    case edge_tag::jump: return "jump";
    case edge_tag::branch_then: return "then";
    case edge_tag::branch_else: return "else";
    }
    return "?";
}

} // namespace

iso_result check_isomorphism(
    const cfg &g1, const cfg &g2,
    const std::vector<std::pair<std::string, std::string>> &anchors) {
    std::map<std::string, std::string> fwd, bwd;
    std::vector<std::pair<std::string, std::string>> work;
    block_pairing bp;

    auto pair_up = [&](const std::string &a, const std::string &b,
                       std::string &err) {
        auto f = fwd.find(a);
        auto g = bwd.find(b);
        if (f == fwd.end() && g == bwd.end()) {
            fwd[a] = b;
            bwd[b] = a;
            work.emplace_back(a, b);
            return true;
        }
        if (f != fwd.end() && f->second == b && g != bwd.end() &&
            g->second == a)
            return true;
        err = "blocks " + a + " and " + b + " conflict with existing pairing";
        return false;
    };

    std::string err;
    for (const auto &[a, b] : anchors)
        if (!pair_up(a, b, err)) return iso_mismatch{err};

    for (size_t i = 0; i < work.size(); ++i) {
        auto [a, b] = work[i];
        auto sa = g1.successors(a), sb = g2.successors(b);
        if (sa.size() != sb.size())
            return iso_mismatch{"out-degree differs at (" + a + ", " + b +
                                "): " + std::to_string(sa.size()) + " vs " +
                                std::to_string(sb.size())};
        auto by_tag = [](auto &v) {
            std::sort(v.begin(), v.end(),
                      [](const auto &x, const auto &y) { return x.first < y.first; });
        };
        by_tag(sa);
        by_tag(sb);
        for (size_t k = 0; k < sa.size(); ++k) {
            if (sa[k].first != sb[k].first)
                return iso_mismatch{"edge tags differ at (" + a + ", " + b +
                                    "): " + tag_name(sa[k].first) + " vs " +
                                    tag_name(sb[k].first)};
            if (!pair_up(sa[k].second, sb[k].second, err))
                return iso_mismatch{err};
        }
    }

    // All of g2's reachable blocks must have been met.
    std::set<std::string> reach2;
    if (!g2.nodes.empty()) {
        std::vector<std::string> st{anchors.empty() ? g2.nodes.front()
                                                    : anchors.front().second};
        while (!st.empty()) {
            std::string n = st.back();
            st.pop_back();
            if (!reach2.insert(n).second) continue;
            for (const auto &[t, s] : g2.successors(n)) st.push_back(s);
        }
    }
    for (const std::string &n : reach2)
        if (!bwd.count(n))
            return iso_mismatch{"lifted block " + n + " has no counterpart"};

    for (const auto &[a, b] : fwd) bp.pairs.emplace_back(a, b);
    return bp;
}

bool recheck_pairing(const cfg &g1, const cfg &g2, const block_pairing &bp) {
    std::map<std::string, std::string> fwd, bwd;
    for (const auto &[a, b] : bp.pairs) {
        if (fwd.count(a) || bwd.count(b)) return false;
        fwd[a] = b;
        bwd[b] = a;
    }
    for (const auto &[a, b] : bp.pairs) {
        auto sa = g1.successors(a), sb = g2.successors(b);
        if (sa.size() != sb.size()) return false;
        for (const auto &[t, s] : sa) {
            auto it = fwd.find(s);
            if (it == fwd.end()) return false;
            bool found = false;
            for (const auto &[t2, s2] : sb)
                if (t2 == t && s2 == it->second) found = true;
            if (!found) return false;
        }
    }
    return true;
}

// ---- query construction -----------------------------------------------------

namespace {

/// One side of a query under construction: symbolic environment plus SSA
/// name allocation. Input symbols `<var>_0` are shared between sides.
struct side_ctx {
    side_ctx(std::string p, equiv_query &qq) : pfx(std::move(p)), q(qq) {}

    std::string pfx;
    equiv_query &q;
    const std::map<std::string, unsigned> *orig_vars = nullptr; // lifted side
    std::map<std::string, expr_ptr> env;
    std::map<std::string, unsigned> counters;
    std::string cur_mem = "mem_0";
    unsigned mem_n = 0, load_n = 0;

    expr_ptr lookup(const std::string &v, unsigned w) {
        auto it = env.find(v);
        if (it != env.end()) return it->second;
        std::string sym_name = v + "_0";
        auto [in, fresh] = q.inputs.emplace(sym_name, w);
        if (!fresh && in->second != w)
            throw ir_error("input symbol " + sym_name + " used at widths " +
                           std::to_string(in->second) + " and " +
                           std::to_string(w));
        if (fresh && orig_vars && !orig_vars->count(v))
            fragment_restriction(v, w);
        expr_ptr e = var(sym_name, w);
        env[v] = e;
        return e;
    }

    /// Generated fragments (`parent_lo_hi`) read before their definition are
    /// pinned to the parent's bits: the register-unpacking invariant.
    void fragment_restriction(const std::string &v, unsigned w) {
        size_t h = v.rfind('_');
        if (h == std::string::npos || h == 0) return;
        size_t l = v.rfind('_', h - 1);
        if (l == std::string::npos) return;
        std::string parent = v.substr(0, l);
        unsigned lo = 0, hi = 0;
        try {
            lo = std::stoul(v.substr(l + 1, h - l - 1));
            hi = std::stoul(v.substr(h + 1));
        } catch (...) {
            return;
        }
        auto it = orig_vars->find(parent);
        if (it == orig_vars->end() || hi >= it->second || hi - lo + 1 != w)
            return;
        q.inputs.emplace(parent + "_0", it->second);
        q.restrictions.push_back(
            {v + "_0", w, extract(lo, hi, var(parent + "_0", it->second))});
    }

    expr_ptr sym(const expr_ptr &e) {
        if (e->is_cst()) return e;
        if (e->is_var()) return lookup(e->as_var().name, e->width);
        if (e->is_load()) {
            const auto &ld = e->as_load();
            expr_ptr a = sym(ld.addr);
            std::string name = pfx + "ld" + std::to_string(load_n++);
            q.events.push_back(ssa_load{name, cur_mem, a, ld.nbytes});
            return var(name, ld.nbytes * 8);
        }
        if (e->is_unop()) {
            const auto &u = e->as_unop();
            expr_ptr a = sym(u.arg);
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
            return binop(b.op, sym(b.lhs), sym(b.rhs));
        }
        const auto &i = e->as_ite();
        return ite(sym(i.cond), sym(i.then_e), sym(i.else_e));
    }

    void run_block(const basic_block &bb) {
        for (const instr &in : bb.body) {
            if (const auto *a = std::get_if<assign_instr>(&in)) {
                expr_ptr rhs = sym(a->rhs);
                std::string name =
                    pfx + a->lhs + "_" + std::to_string(++counters[a->lhs]);
                q.events.push_back(ssa_equation{name, a->width, rhs});
                env[a->lhs] = var(name, a->width);
            } else {
                const auto &st = std::get<store_instr>(in);
                expr_ptr ad = sym(st.addr), sv = sym(st.value);
                std::string name = pfx + "mem_" + std::to_string(++mem_n);
                q.events.push_back(ssa_store{name, cur_mem, ad, st.nbytes, sv});
                cur_mem = name;
            }
        }
    }
};

} // namespace

std::map<std::string, std::set<std::string>> live_in_sets(const program &p) {
    // Block-level use/def, then the usual backward fixpoint.
    std::map<std::string, std::set<std::string>> use, def, live;
    for (const basic_block &bb : p.blocks) {
        std::set<std::string> &u = use[bb.id];
        std::set<std::string> &d = def[bb.id];
        auto read = [&](const expr_ptr &e) {
            for (const std::string &v : free_vars(e))
                if (!d.count(v)) u.insert(v);
        };
        for (const instr &in : bb.body) {
            if (const auto *a = std::get_if<assign_instr>(&in)) {
                read(a->rhs);
                d.insert(a->lhs);
            } else {
                const auto &st = std::get<store_instr>(in);
                read(st.addr);
                read(st.value);
            }
        }
        if (const auto *br = std::get_if<branch_term>(&bb.term)) read(br->cond);
        live[bb.id] = u;
    }
    cfg g = build_cfg(p);
    for (bool changed = true; changed;) {
        changed = false;
        for (const basic_block &bb : p.blocks) {
            std::set<std::string> out;
            for (const auto &[t, s] : g.successors(bb.id)) {
                const std::set<std::string> &li = live[s];
                out.insert(li.begin(), li.end());
            }
            std::set<std::string> &li = live[bb.id];
            size_t before = li.size();
            for (const std::string &v : out)
                if (!def[bb.id].count(v)) li.insert(v);
            changed |= li.size() != before;
        }
    }
    return live;
}

equiv_query build_query(const basic_block &orig_bb,
                        const basic_block &lifted_bb,
                        const assumption_ledger &ledger,
                        const std::map<std::string, unsigned> &orig_vars,
                        const std::map<std::string, unsigned> &lifted_vars,
                        const std::set<std::string> &observables,
                        const std::string &chunk_name,
                        const std::set<std::string> *live_after) {
    equiv_query q;
    q.chunk_name = chunk_name;
    q.orig_block = orig_bb.id;
    q.lifted_block = lifted_bb.id;

    side_ctx o{"o_", q};
    side_ctx l{"l_", q};
    l.orig_vars = &orig_vars;

    // Ledger facts restrict the entry values of eliminated variables. Scoped
    // facts only hold at the entry of their listed blocks.
    auto in_scope = [&](const ledger_entry &en) {
        return en.scope.empty() || en.scope.count(orig_bb.id) != 0;
    };
    for (const ledger_entry &en : ledger.entries) {
        if (!in_scope(en))
            continue;
        unsigned w = en.value->width;
        auto it = orig_vars.find(en.var);
        if (it != orig_vars.end()) w = it->second;
        q.inputs.emplace(en.var + "_0", w);
        // The restriction's free symbols are entry values too.
        expr_ptr rhs = o.sym(en.value);
        o.env.erase(en.var); // sym above must not have bound the lhs
        q.restrictions.push_back({en.var + "_0", w, rhs});
    }
    o.env.clear(); // restrictions established the symbols; start fresh

    o.run_block(orig_bb);
    l.run_block(lifted_bb);

    // Goal variables: whatever either side writes that the original knows,
    // plus anything observable.
    std::set<std::string> goal_vars;
    auto collect = [&goal_vars](const basic_block &bb, auto pred) {
        for (const instr &in : bb.body)
            if (const auto *a = std::get_if<assign_instr>(&in))
                if (pred(a->lhs)) goal_vars.insert(a->lhs);
    };
    collect(orig_bb, [](const std::string &) { return true; });
    collect(lifted_bb,
            [&](const std::string &v) { return orig_vars.count(v) != 0; });

    for (const std::string &v : goal_vars) {
        // Values dead past the block (clobbered flags, scratch) don't count.
        if (live_after && !live_after->count(v) && !observables.count(v))
            continue;
        auto wo = orig_vars.find(v);
        unsigned w = wo != orig_vars.end() ? wo->second
                                           : lifted_vars.count(v)
                                                 ? lifted_vars.at(v)
                                                 : 0;
        if (w == 0) continue;
        expr_ptr eo = o.lookup(v, w);
        expr_ptr el;
        if (lifted_vars.count(v)) {
            el = l.lookup(v, w);
        } else if (const ledger_entry *en = ledger.find(v); en && in_scope(*en)) {
            el = l.sym(en->value); // output restriction: map back via ledger
        } else if (observables.count(v)) {
            q.notes.push_back("interface-output mismatch: " + v +
                              " has no representation in the lifted block");
            continue;
        } else {
            continue; // dead on the lifted side (flags and the like)
        }
        q.goals.emplace_back(eo, el);
    }

    // Paired branches must agree on the taken edge.
    const auto *bo = std::get_if<branch_term>(&orig_bb.term);
    const auto *bl = std::get_if<branch_term>(&lifted_bb.term);
    if (bo && bl) q.goals.emplace_back(o.sym(bo->cond), l.sym(bl->cond));

    q.o_mem = o.cur_mem;
    q.l_mem = l.cur_mem;
    q.compare_memory = o.mem_n > 0 || l.mem_n > 0;
    return q;
}

// ---- SMT-LIB export ---------------------------------------------------------

namespace {

std::string bv_lit(uint64_t v, unsigned w) {
    return "(_ bv" + std::to_string(truncate(v, w)) + " " +
           std::to_string(w) + ")";
}

std::string bv_sort(unsigned w) {
    return "(_ BitVec " + std::to_string(w) + ")";
}

std::string smt_expr(const expr_ptr &e);

std::string smt_bool(const char *op, const expr_ptr &l, const expr_ptr &r) {
    return "(ite (" + std::string(op) + " " + smt_expr(l) + " " +
           smt_expr(r) + ") #b1 #b0)";
}

std::string smt_expr(const expr_ptr &e) {
    if (e->is_cst()) return bv_lit(e->as_cst().value, e->width);
    if (e->is_var()) return e->as_var().name;
    if (e->is_load())
        throw ir_error("raw load reached the SMT printer; queries must be "
                       "load-flattened");
    if (e->is_unop()) {
        const auto &u = e->as_unop();
        std::string a = smt_expr(u.arg);
        switch (u.op) {
        case unop_kind::bnot: return "(bvnot " + a + ")";
        case unop_kind::neg: return "(bvneg " + a + ")";
        case unop_kind::uext:
            return "((_ zero_extend " + std::to_string(u.n - u.arg->width) +
                   ") " + a + ")";
        case unop_kind::sext:
            return "((_ sign_extend " + std::to_string(u.n - u.arg->width) +
                   ") " + a + ")";
        case unop_kind::extract:
            return "((_ extract " + std::to_string(u.hi) + " " +
                   std::to_string(u.lo) + ") " + a + ")";
        }
    }
    if (e->is_binop()) {
        const auto &b = e->as_binop();
        switch (b.op) {
        case binop_kind::eq: return smt_bool("=", b.lhs, b.rhs);
        case binop_kind::neq: return smt_bool("distinct", b.lhs, b.rhs);
        case binop_kind::ugt: return smt_bool("bvugt", b.lhs, b.rhs);
        case binop_kind::ult: return smt_bool("bvult", b.lhs, b.rhs);
        case binop_kind::sgt: return smt_bool("bvsgt", b.lhs, b.rhs);
        case binop_kind::slt: return smt_bool("bvslt", b.lhs, b.rhs);
        default: break;
        }
        const char *op = nullptr;
        switch (b.op) {
        case binop_kind::add: op = "bvadd"; break;
        case binop_kind::sub: op = "bvsub"; break;
        case binop_kind::mul: op = "bvmul"; break;
        case binop_kind::udiv: op = "bvudiv"; break;
        case binop_kind::urem: op = "bvurem"; break;
        case binop_kind::sdiv: op = "bvsdiv"; break;
        case binop_kind::srem: op = "bvsrem"; break;
        case binop_kind::band: op = "bvand"; break;
        case binop_kind::bor: op = "bvor"; break;
        case binop_kind::bxor: op = "bvxor"; break;
        case binop_kind::shl: op = "bvshl"; break;
        case binop_kind::shr: op = "bvlshr"; break;
        case binop_kind::sar: op = "bvashr"; break;
        case binop_kind::concat: op = "concat"; break;
        default: throw ir_error("unhandled binop in SMT printer");
        }
        return "(" + std::string(op) + " " + smt_expr(b.lhs) + " " +
               smt_expr(b.rhs) + ")";
    }
    const auto &i = e->as_ite();
    return "(ite (= " + smt_expr(i.cond) + " #b1) " + smt_expr(i.then_e) +
           " " + smt_expr(i.else_e) + ")";
}

std::string byte_addr(const expr_ptr &addr, unsigned k) {
    std::string a = smt_expr(addr);
    if (k == 0) return a;
    return "(bvadd " + a + " " + bv_lit(k, 32) + ")";
}

} // namespace

std::string to_smtlib(const equiv_query &q) {
    std::ostringstream s;
    s << "(set-logic QF_ABV)\n";
    s << "; equivalence of blocks " << q.orig_block << " and "
      << q.lifted_block << " of chunk " << q.chunk_name << "\n";
    s << "(declare-const mem_0 (Array (_ BitVec 32) (_ BitVec 8)))\n";
    for (const auto &[name, w] : q.inputs)
        s << "(declare-const " << name << " " << bv_sort(w) << ")\n";
    for (const ssa_equation &r : q.restrictions)
        s << "(assert (= " << r.lhs << " " << smt_expr(r.rhs) << "))\n";
    for (const ssa_event &ev : q.events) {
        if (const auto *eq2 = std::get_if<ssa_equation>(&ev)) {
            s << "(declare-const " << eq2->lhs << " " << bv_sort(eq2->width)
              << ")\n";
            s << "(assert (= " << eq2->lhs << " " << smt_expr(eq2->rhs)
              << "))\n";
        } else if (const auto *ld = std::get_if<ssa_load>(&ev)) {
            s << "(declare-const " << ld->lhs << " " << bv_sort(ld->nbytes * 8)
              << ")\n";
            std::string val;
            for (unsigned k = 0; k < ld->nbytes; ++k) {
                std::string sel =
                    "(select " + ld->mem + " " + byte_addr(ld->addr, k) + ")";
                val = k == 0 ? sel : "(concat " + sel + " " + val + ")";
            }
            s << "(assert (= " << ld->lhs << " " << val << "))\n";
        } else {
            const auto &st = std::get<ssa_store>(ev);
            std::string m = st.mem_in;
            for (unsigned k = 0; k < st.nbytes; ++k) {
                std::string byte = "((_ extract " + std::to_string(8 * k + 7) +
                                   " " + std::to_string(8 * k) + ") " +
                                   smt_expr(st.value) + ")";
                m = "(store " + m + " " + byte_addr(st.addr, k) + " " + byte +
                    ")";
            }
            s << "(declare-const " << st.mem_out
              << " (Array (_ BitVec 32) (_ BitVec 8)))\n";
            s << "(assert (= " << st.mem_out << " " << m << "))\n";
        }
    }
    std::vector<std::string> disj;
    for (const auto &[eo, el] : q.goals)
        disj.push_back("(distinct " + smt_expr(eo) + " " + smt_expr(el) + ")");
    if (q.compare_memory && q.o_mem != q.l_mem)
        disj.push_back("(distinct " + q.o_mem + " " + q.l_mem + ")");
    if (disj.empty()) {
        s << "(assert false)\n";
    } else if (disj.size() == 1) {
        s << "(assert " << disj.front() << ")\n";
    } else {
        s << "(assert (or";
        for (const std::string &d : disj) s << "\n  " << d;
        s << "))\n";
    }
    s << "(check-sat)\n";
    return s.str();
}

std::string write_smtlib(const equiv_query &q, const std::string &dir) {
    std::filesystem::create_directories(dir);
    std::string path =
        (std::filesystem::path(dir) / (q.chunk_name + "." + q.orig_block +
                                       ".smt2"))
            .string();
    std::ofstream(path) << to_smtlib(q);
    return path;
}

// ---- brute oracle -----------------------------------------------------------

namespace {

uint8_t base_byte(uint32_t addr) { return uint8_t(addr * 131u + 7u); }

using mem_map = std::map<uint32_t, uint8_t>;

uint8_t mem_at(const mem_map &m, uint32_t a) {
    auto it = m.find(a);
    return it != m.end() ? it->second : base_byte(a);
}

std::optional<std::string> eval_query_at_unchecked(
    const equiv_query &q, const std::map<std::string, uint64_t> &free_inputs);

/// Evaluates the whole query at one assignment of the free inputs; returns
/// the first differing goal, or nullopt when everything agrees.
std::optional<std::string> eval_query_at(
    const equiv_query &q, const std::map<std::string, uint64_t> &free_inputs) {
    try {
        return eval_query_at_unchecked(q, free_inputs);
    } catch (const eval_error &) {
        // A trapping state (division by zero) is outside the equivalence
        // obligation; hardware faults there as well.
        return std::nullopt;
    }
}

std::optional<std::string> eval_query_at_unchecked(
    const equiv_query &q, const std::map<std::string, uint64_t> &free_inputs) {
    machine_state s;
    for (const auto &[name, w] : q.inputs) {
        auto it = free_inputs.find(name);
        s.set_var(name, it != free_inputs.end() ? truncate(it->second, w) : 0,
                  w);
    }
    for (const ssa_equation &r : q.restrictions)
        s.set_var(r.lhs, eval_expr(r.rhs, s), r.width);
    std::map<std::string, mem_map> mems;
    mems["mem_0"] = {};
    for (const ssa_event &ev : q.events) {
        if (const auto *eq2 = std::get_if<ssa_equation>(&ev)) {
            s.set_var(eq2->lhs, eval_expr(eq2->rhs, s), eq2->width);
        } else if (const auto *ld = std::get_if<ssa_load>(&ev)) {
            const mem_map &m = mems.at(ld->mem);
            uint32_t a = uint32_t(eval_expr(ld->addr, s));
            uint64_t v = 0;
            for (unsigned k = 0; k < ld->nbytes; ++k)
                v |= uint64_t(mem_at(m, a + k)) << (8 * k);
            s.set_var(ld->lhs, v, ld->nbytes * 8);
        } else {
            const auto &st = std::get<ssa_store>(ev);
            mem_map m = mems.at(st.mem_in);
            uint32_t a = uint32_t(eval_expr(st.addr, s));
            uint64_t v = eval_expr(st.value, s);
            for (unsigned k = 0; k < st.nbytes; ++k)
                m[a + k] = uint8_t(v >> (8 * k));
            mems[st.mem_out] = std::move(m);
        }
    }
    for (size_t i = 0; i < q.goals.size(); ++i) {
        uint64_t a = eval_expr(q.goals[i].first, s);
        uint64_t b = eval_expr(q.goals[i].second, s);
        if (a != b)
            return "goal " + std::to_string(i) + ": " +
                   expr_to_string(q.goals[i].first) + " = " +
                   std::to_string(a) + " but " +
                   expr_to_string(q.goals[i].second) + " = " +
                   std::to_string(b);
    }
    if (q.compare_memory) {
        const mem_map &mo = mems.at(q.o_mem);
        const mem_map &ml = mems.at(q.l_mem);
        std::set<uint32_t> touched;
        for (const auto &[a, v] : mo) touched.insert(a);
        for (const auto &[a, v] : ml) touched.insert(a);
        for (uint32_t a : touched)
            if (mem_at(mo, a) != mem_at(ml, a))
                return "memory differs at address " + std::to_string(a);
    }
    return std::nullopt;
}

} // namespace

bool replay_counterexample(const equiv_query &q, const counterexample &cex) {
    return eval_query_at(q, cex.inputs).has_value();
}

brute_result brute_check(const equiv_query &q, unsigned width_budget,
                         unsigned bit_cap) {
    for (const std::string &n : q.notes)
        if (n.rfind("interface-output mismatch", 0) == 0)
            return {false, counterexample{{}, n}, 0, true};

    if (q.goals.empty() && !q.compare_memory) return {true, {}, 0, true};

    std::set<std::string> restricted;
    std::set<std::string> used;
    auto mark = [&used](const expr_ptr &e) {
        std::set<std::string> f = free_vars(e);
        used.insert(f.begin(), f.end());
    };
    for (const ssa_equation &r : q.restrictions) restricted.insert(r.lhs);
    for (const ssa_event &ev : q.events) {
        if (const auto *eq2 = std::get_if<ssa_equation>(&ev)) {
            mark(eq2->rhs);
        } else if (const auto *ld = std::get_if<ssa_load>(&ev)) {
            mark(ld->addr);
        } else {
            const auto &st = std::get<ssa_store>(ev);
            mark(st.addr);
            mark(st.value);
        }
    }
    for (const auto &[eo, el] : q.goals) {
        mark(eo);
        mark(el);
    }
    // A restriction's inputs only matter when its symbol is needed.
    for (bool changed = true; changed;) {
        changed = false;
        for (const ssa_equation &r : q.restrictions) {
            if (!used.count(r.lhs)) continue;
            size_t before = used.size();
            mark(r.rhs);
            changed |= used.size() != before;
        }
    }
    std::vector<std::pair<std::string, unsigned>> free_syms; // name, width
    for (const auto &[name, w] : q.inputs)
        if (!restricted.count(name) && used.count(name))
            free_syms.emplace_back(name, w);

    std::vector<unsigned> bits;
    unsigned total = 0;
    for (const auto &[name, w] : free_syms) {
        bits.push_back(std::min(w, width_budget));
        total += bits.back();
    }
    while (total > bit_cap) {
        auto it = std::max_element(bits.begin(), bits.end());
        if (*it <= 1) break;
        --*it;
        --total;
    }

    brute_result res;
    std::map<std::string, uint64_t> state;

    auto try_state = [&]() -> bool {
        ++res.cases;
        if (auto diff = eval_query_at(q, state)) {
            res.equivalent = false;
            res.cex = counterexample{state, *diff};
            return true;
        }
        return false;
    };

    if (total <= bit_cap) {
        std::vector<uint64_t> odo(free_syms.size(), 0);
        bool done = free_syms.empty();
        for (;;) {
            for (size_t i = 0; i < free_syms.size(); ++i)
                state[free_syms[i].first] =
                    embed_pattern(odo[i], bits[i], free_syms[i].second);
            if (try_state()) return res;
            if (done) break;
            size_t i = 0;
            for (; i < odo.size(); ++i) {
                if (++odo[i] < (uint64_t{1} << bits[i])) break;
                odo[i] = 0;
            }
            if (i == odo.size()) break;
            if (free_syms.empty()) break;
        }
    } else {
        res.exhaustive = false;
        std::mt19937_64 rng(0x5eed5eedULL);
        for (unsigned t = 0; t < (1u << 16); ++t) {
            for (size_t i = 0; i < free_syms.size(); ++i)
                state[free_syms[i].first] =
                    truncate(rng(), free_syms[i].second);
            if (try_state()) return res;
        }
    }
    res.equivalent = true;
    return res;
}

// ---- fuzzing fallback -------------------------------------------------------

namespace {

constexpr const char *memseed_key = "__memseed";

std::function<uint8_t(uint32_t)> seeded_memory(uint64_t key) {
    return [key](uint32_t a) {
        return uint8_t((a * 2654435761u) ^ key ^ (key >> 13));
    };
}

struct run_compare_result {
    bool out_of_fuel = false;
    std::optional<std::string> diff;
};

run_compare_result run_and_compare(const program &orig, const program &lifted,
                                   const assumption_ledger &ledger,
                                   const std::set<std::string> &observables,
                                   machine_state init, uint64_t fuel) {
    interp_result ro, rl;
    try {
        ro = interpret(orig, init, fuel);
        rl = interpret(lifted, init, fuel);
    } catch (const eval_error &) {
        return {true, std::nullopt}; // trapping state; skip like out-of-fuel
    }
    if (!ro.ok() || !rl.ok()) return {true, std::nullopt};
    const machine_state &so = *ro.state;
    const machine_state &sl = *rl.state;

    for (const std::string &v : observables) {
        auto it = so.vars.find(v);
        if (it == so.vars.end()) continue; // original never bound it
        unsigned w = it->second.second;
        uint64_t a = it->second.first;
        uint64_t b;
        if (sl.vars.count(v)) {
            b = sl.get_var(v, w);
        } else if (const ledger_entry *en = ledger.find(v)) {
            b = truncate(eval_expr(en->value, sl), w);
        } else {
            return run_compare_result{
                false, "observable " + v + " missing on the lifted side"};
        }
        if (a != b)
            return run_compare_result{false, "observable " + v + ": " +
                                                 std::to_string(a) + " vs " +
                                                 std::to_string(b)};
    }

    std::set<uint32_t> touched;
    for (const auto &[a, v] : so.mem) touched.insert(a);
    for (const auto &[a, v] : sl.mem) touched.insert(a);
    for (uint32_t a : touched)
        if (so.read_byte(a) != sl.read_byte(a))
            return run_compare_result{
                false, "memory differs at address " + std::to_string(a)};
    return {false, std::nullopt};
}

} // namespace

fuzz_result fuzz_fallback(const program &orig, const program &lifted,
                          const assumption_ledger &ledger,
                          const std::set<std::string> &observables,
                          uint64_t iters, uint64_t seed, uint64_t fuel) {
    fuzz_result res;
    res.seed = seed;
    if (iters == 0) {
        res.passed = true;
        res.vacuous = true;
        return res;
    }

    std::map<std::string, unsigned> ins = program_inputs(orig);
    for (const auto &[v, w] : program_inputs(lifted)) ins.emplace(v, w);
    std::mt19937_64 rng(seed);

    for (uint64_t it = 0; it < iters; ++it) {
        machine_state s;
        std::map<std::string, uint64_t> record;
        for (const auto &[v, w] : ins) {
            if (ledger.find(v)) continue; // derived below
            uint64_t r = rng();
            // Mostly small values so loops terminate within the fuel;
            // occasionally a sign-embedded extreme.
            uint64_t val = (r & 7) ? ((r >> 3) & 63)
                                   : embed_pattern((r >> 3) & 255, 8, w);
            val = truncate(val, w);
            s.set_var(v, val, w);
            record[v] = val;
        }
        for (const auto &[v, w] : ins)
            if (const ledger_entry *en = ledger.find(v))
                s.set_var(v, truncate(eval_expr(en->value, s), w), w);
        uint64_t memkey = rng();
        s.mem_default = seeded_memory(memkey);
        record[memseed_key] = memkey;

        run_compare_result rc =
            run_and_compare(orig, lifted, ledger, observables, s, fuel);
        ++res.iterations;
        if (rc.out_of_fuel) {
            ++res.out_of_fuel;
            continue;
        }
        if (rc.diff) {
            res.passed = false;
            res.cex = counterexample{record, *rc.diff};
            return res;
        }
    }
    res.passed = true;
    return res;
}

bool replay_program_counterexample(const program &orig, const program &lifted,
                                   const assumption_ledger &ledger,
                                   const std::set<std::string> &observables,
                                   const counterexample &cex) {
    machine_state s;
    std::map<std::string, unsigned> ins = program_inputs(orig);
    for (const auto &[v, w] : program_inputs(lifted)) ins.emplace(v, w);
    for (const auto &[v, val] : cex.inputs) {
        if (v == memseed_key) {
            s.mem_default = seeded_memory(val);
            continue;
        }
        auto it = ins.find(v);
        unsigned w = it != ins.end() ? it->second : 32;
        s.set_var(v, truncate(val, w), w);
    }
    for (const auto &[v, w] : ins)
        if (const ledger_entry *en = ledger.find(v); en && !cex.inputs.count(v))
            s.set_var(v, truncate(eval_expr(en->value, s), w), w);
    run_compare_result rc =
        run_and_compare(orig, lifted, ledger, observables, s, default_fuel);
    return !rc.out_of_fuel && rc.diff.has_value();
}

// ---- aggregation ------------------------------------------------------------

std::string run_solver(const std::string &cmd, const std::string &file,
                       unsigned timeout_ms) {
    std::string out_file = file + ".out";
    unsigned secs = std::max(1u, (timeout_ms + 999) / 1000);
    std::string full = "timeout " + std::to_string(secs) + " " + cmd + " " +
                       file + " > " + out_file + " 2>&1";
    int rc = std::system(full.c_str());
    std::ifstream in(out_file);
    std::string line, verdict;
    while (std::getline(in, line)) {
        if (line == "unsat") return "unsat";
        if (line == "sat") return "sat";
        if (line == "unknown") verdict = "unknown";
    }
    if (!verdict.empty()) return verdict;
    if (rc != 0) return "error";
    return "unknown";
}

std::string validation_report::to_json() const {
    nlohmann::json j;
    j["chunk"] = chunk;
    j["s1"] = s1_ok ? "ok" : "mismatch";
    if (!s1_details.empty()) j["s1_details"] = s1_details;
    j["blocks"] = nlohmann::json::array();
    for (const block_verdict &b : blocks) {
        nlohmann::json jb;
        jb["pair"] = {b.orig_id, b.lifted_id};
        jb["status"] = b.status;
        jb["time_ms"] = b.time_ms;
        if (b.cex) {
            jb["counterexample"] = {{"inputs", b.cex->inputs},
                                    {"detail", b.cex->detail}};
        }
        j["blocks"].push_back(jb);
    }
    if (fallback) {
        nlohmann::json jf;
        jf["passed"] = fallback->passed;
        jf["iterations"] = fallback->iterations;
        jf["seed"] = fallback->seed;
        jf["out_of_fuel"] = fallback->out_of_fuel;
        jf["vacuous"] = fallback->vacuous;
        if (fallback->cex)
            jf["counterexample"] = {{"inputs", fallback->cex->inputs},
                                    {"detail", fallback->cex->detail}};
        j["fallback"] = jf;
    }
    j["overall"] = overall;
    if (!diagnostics.empty()) j["diagnostics"] = diagnostics;
    return j.dump(2);
}

validation_report validate(const decoded_chunk &orig,
                           const pipeline_result &lifted,
                           const validate_options &opt) {
    validation_report rep;
    rep.chunk = opt.chunk_name;
    const program &po = orig.prog;
    const program &pl = lifted.prog.prog;

    std::set<std::string> observables = lifted.prog.observables;
    for (const interface_entry &e : orig.interface)
        if (e.direction != operand_dir::in) observables.insert(e.ir_var);

    auto run_fuzz = [&]() {
        rep.fallback = fuzz_fallback(po, pl, lifted.ledger, observables,
                                     opt.fuzz_iters, opt.seed);
        return rep.fallback->passed;
    };

    if (opt.backend == backend_kind::fuzz_only) {
        rep.s1_ok = true;
        rep.overall = run_fuzz() ? "FuzzPassed" : "FuzzFailed";
        return rep;
    }

    cfg go = build_cfg(po), gl = build_cfg(pl);
    iso_result iso = check_isomorphism(go, gl, {{po.entry, pl.entry}});
    if (const auto *mm = std::get_if<iso_mismatch>(&iso)) {
        rep.s1_ok = false;
        rep.s1_details = mm->details;
        rep.overall = run_fuzz() ? "FuzzPassed" : "FuzzFailed";
        return rep;
    }
    const block_pairing &bp = std::get<block_pairing>(iso);
    if (!recheck_pairing(go, gl, bp)) {
        rep.s1_ok = false;
        rep.s1_details = "pairing failed the independent re-check";
        rep.overall = run_fuzz() ? "FuzzPassed" : "FuzzFailed";
        return rep;
    }
    rep.s1_ok = true;

    std::map<std::string, unsigned> orig_vars = assigned_vars(po);
    for (const auto &[v, w] : program_inputs(po)) orig_vars.emplace(v, w);
    std::map<std::string, unsigned> lifted_vars = assigned_vars(pl);
    for (const auto &[v, w] : program_inputs(pl)) lifted_vars.emplace(v, w);

    std::map<std::string, std::set<std::string>> live_o = live_in_sets(po);
    std::map<std::string, std::set<std::string>> live_l = live_in_sets(pl);

    bool solver_missing_noted = false;
    bool any_bad = false, any_unknown = false, exported_only = false;

    for (const auto &[a, b] : bp.pairs) {
        const basic_block *ba = po.find_block(a);
        const basic_block *bb = pl.find_block(b);
        if (!ba || !bb) continue;
        std::set<std::string> live_after;
        for (const auto &[t, s] : go.successors(a)) {
            const std::set<std::string> &li = live_o[s];
            live_after.insert(li.begin(), li.end());
        }
        for (const auto &[t, s] : gl.successors(b)) {
            const std::set<std::string> &li = live_l[s];
            live_after.insert(li.begin(), li.end());
        }
        auto t0 = std::chrono::steady_clock::now();
        equiv_query q = build_query(*ba, *bb, lifted.ledger, orig_vars,
                                    lifted_vars, observables, opt.chunk_name,
                                    &live_after);
        block_verdict v;
        v.orig_id = a;
        v.lifted_id = b;

        if (opt.backend == backend_kind::smtlib_export) {
            std::string path = write_smtlib(q, opt.export_dir);
            if (!opt.solver_cmd.empty()) {
                std::string r =
                    run_solver(opt.solver_cmd, path, opt.timeout_ms);
                if (r == "unsat") {
                    v.status = "Equivalent";
                } else if (r == "sat") {
                    v.status = "NotEquivalent";
                    any_bad = true;
                } else {
                    v.status = "Unknown";
                    any_unknown = true;
                }
            } else {
                if (!solver_missing_noted) {
                    rep.diagnostics.push_back(
                        "no solver configured; scripts exported, brute "
                        "oracle used instead");
                    solver_missing_noted = true;
                }
                brute_result br = brute_check(q);
                exported_only = true;
                if (br.equivalent) {
                    v.status = "exported-only";
                } else {
                    v.status = "NotEquivalent";
                    v.cex = br.cex;
                    any_bad = true;
                }
            }
        } else {
            brute_result br = brute_check(q);
            if (br.equivalent) {
                v.status = "Equivalent";
            } else {
                v.status = "NotEquivalent";
                v.cex = br.cex;
                any_bad = true;
                if (br.cex && br.cex->detail.rfind("interface", 0) != 0 &&
                    !replay_counterexample(q, *br.cex))
                    rep.diagnostics.push_back(
                        "counterexample for (" + a + ", " + b +
                        ") failed to replay");
            }
        }
        auto t1 = std::chrono::steady_clock::now();
        v.time_ms =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
        rep.blocks.push_back(std::move(v));
    }

    if (any_bad) {
        run_fuzz(); // concrete confirmation alongside the block verdicts
        rep.overall = "NotEquivalent";
    } else if (any_unknown) {
        rep.overall = run_fuzz() ? "FuzzPassed" : "FuzzFailed";
    } else if (exported_only) {
        rep.overall = "exported-only";
    } else {
        rep.overall = "Equivalent";
    }
    return rep;
}

} // namespace tina
