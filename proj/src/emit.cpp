#include "tina/emit.hpp"

#include "tina/linear.hpp"

#include <algorithm>
#include <sstream>

namespace tina {

namespace {

// ---- structuring ----------------------------------------------------------

struct structurer {
    const program &p;
    cfg g;
    std::map<std::string, std::vector<std::string>> preds;
    std::set<std::pair<std::string, std::string>> back_edges; // latch->header
    std::map<std::string, std::string> ipdom; // "" means exit
    std::set<std::string> visited;
    bool failed = false;

    structured_chunk out;
    int temp_n = 0;

    explicit structurer(const program &prog) : p(prog), g(build_cfg(p)) {
        for (const basic_block &bb : p.blocks)
            preds[bb.id] = g.predecessors(bb.id);
        find_back_edges();
        compute_ipdom();
    }

    void find_back_edges() {
        std::map<std::string, int> color;
        std::vector<std::pair<std::string, size_t>> stack;
        if (!p.find_block(p.entry)) return;
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
                back_edges.insert({node, next});
            else if (color[next] == 0) {
                color[next] = 1;
                stack.push_back({next, 0});
            }
        }
    }

    void compute_ipdom() {
        // Small programs: plain set-based postdominator iteration over the
        // exit-augmented graph ("" is the virtual exit).
        std::map<std::string, std::set<std::string>> pdom;
        std::set<std::string> all;
        for (const basic_block &bb : p.blocks) all.insert(bb.id);
        for (const basic_block &bb : p.blocks) pdom[bb.id] = all;
        bool changed = true;
        while (changed) {
            changed = false;
            for (const basic_block &bb : p.blocks) {
                std::set<std::string> meet;
                bool first = true;
                for (const auto &[tag, succ] : g.successors(bb.id)) {
                    if (first) {
                        meet = pdom[succ];
                        first = false;
                    } else {
                        std::set<std::string> tmp;
                        std::set_intersection(meet.begin(), meet.end(),
                                              pdom[succ].begin(),
                                              pdom[succ].end(),
                                              std::inserter(tmp, tmp.begin()));
                        meet = std::move(tmp);
                    }
                }
                // halt blocks meet with the virtual exit: empty set.
                meet.insert(bb.id);
                if (meet != pdom[bb.id]) {
                    pdom[bb.id] = std::move(meet);
                    changed = true;
                }
            }
        }
        for (const basic_block &bb : p.blocks) {
            const std::set<std::string> &d = pdom[bb.id];
            std::string best;
            for (const std::string &c : d) {
                if (c == bb.id) continue;
                if (pdom[c].size() == d.size() - 1) best = c;
            }
            ipdom[bb.id] = best;
        }
    }

    bool is_header(const std::string &id) const {
        for (const auto &[l, h] : back_edges)
            if (h == id) return true;
        return false;
    }

    // ---- Ite hoisting ----

    expr_ptr hoist(const expr_ptr &e, std::vector<c_stmt> &stmts,
                   const std::string &block_id) {
        if (e->is_ite()) {
            const auto &i = e->as_ite();
            expr_ptr c = hoist(i.cond, stmts, block_id);
            expr_ptr t = hoist(i.then_e, stmts, block_id);
            expr_ptr f = hoist(i.else_e, stmts, block_id);
            std::string tmp = "__sel" + std::to_string(temp_n++);
            out.temps[tmp] = e->width;
            c_if sel{c, {}, {}};
            sel.then_b.stmts.push_back({c_assign{tmp, e->width, t}, block_id});
            sel.else_b.stmts.push_back({c_assign{tmp, e->width, f}, block_id});
            stmts.push_back({std::move(sel), block_id});
            return var(tmp, e->width);
        }
        if (e->is_unop()) {
            const auto &u = e->as_unop();
            expr_ptr arg = hoist(u.arg, stmts, block_id);
            if (arg == u.arg) return e;
            switch (u.op) {
            case unop_kind::bnot: return bnot(arg);
            case unop_kind::neg: return neg(arg);
            case unop_kind::uext: return uext(u.n, arg);
            case unop_kind::sext: return sext(u.n, arg);
            case unop_kind::extract: return extract(u.lo, u.hi, arg);
            }
        }
        if (e->is_load()) {
            expr_ptr a = hoist(e->as_load().addr, stmts, block_id);
            return a == e->as_load().addr ? e : load(a, e->as_load().nbytes);
        }
        if (e->is_binop()) {
            const auto &b = e->as_binop();
            expr_ptr l = hoist(b.lhs, stmts, block_id);
            expr_ptr r = hoist(b.rhs, stmts, block_id);
            return l == b.lhs && r == b.rhs ? e : binop(b.op, l, r);
        }
        return e;
    }

    void block_stmts(const basic_block &bb, std::vector<c_stmt> &stmts) {
        for (const instr &in : bb.body) {
            if (const auto *a = std::get_if<assign_instr>(&in)) {
                if (a->rhs->is_ite()) {
                    // Top-level Ite: the if/else assignment pair, no temp.
                    const auto &i = a->rhs->as_ite();
                    expr_ptr c = hoist(i.cond, stmts, bb.id);
                    expr_ptr t = hoist(i.then_e, stmts, bb.id);
                    expr_ptr f = hoist(i.else_e, stmts, bb.id);
                    c_if sel{c, {}, {}};
                    sel.then_b.stmts.push_back(
                        {c_assign{a->lhs, a->width, t}, bb.id});
                    sel.else_b.stmts.push_back(
                        {c_assign{a->lhs, a->width, f}, bb.id});
                    stmts.push_back({std::move(sel), bb.id});
                } else {
                    expr_ptr rhs = hoist(a->rhs, stmts, bb.id);
                    stmts.push_back({c_assign{a->lhs, a->width, rhs}, bb.id});
                }
            } else if (const auto *s = std::get_if<store_instr>(&in)) {
                expr_ptr addr = hoist(s->addr, stmts, bb.id);
                expr_ptr value = hoist(s->value, stmts, bb.id);
                stmts.push_back({c_store{addr, s->nbytes, value}, bb.id});
            }
        }
    }

    // ---- structured walk ----

    std::vector<c_stmt> emit_seq(std::string cur,
                                 std::set<std::string> stops) {
        std::vector<c_stmt> stmts;
        while (!cur.empty() && !stops.count(cur) && !failed) {
            if (visited.count(cur)) {
                failed = true;
                return stmts;
            }
            const basic_block *bb = p.find_block(cur);
            if (!bb) {
                failed = true;
                return stmts;
            }
            if (is_header(cur)) {
                cur = emit_loop(*bb, stmts);
                continue;
            }
            visited.insert(cur);
            block_stmts(*bb, stmts);
            if (std::holds_alternative<halt_term>(bb->term)) {
                cur.clear();
            } else if (const auto *gt = std::get_if<goto_term>(&bb->term)) {
                cur = gt->target;
            } else {
                const auto &br = std::get<branch_term>(bb->term);
                expr_ptr cond = hoist(br.cond, stmts, cur);
                std::string join = ipdom.at(cur);
                std::set<std::string> inner = stops;
                if (!join.empty()) inner.insert(join);
                c_if node{cond, {}, {}};
                node.then_b.stmts = emit_seq(br.then_target, inner);
                node.else_b.stmts = emit_seq(br.else_target, inner);
                stmts.push_back({std::move(node), cur});
                cur = join;
                // A join outside the caller's region ends this sequence.
            }
        }
        return stmts;
    }

    /// Emits a natural loop as while(1) with a break at the header test.
    /// Returns the block the code continues at after the loop.
    std::string emit_loop(const basic_block &head, std::vector<c_stmt> &stmts) {
        std::vector<std::string> latches;
        for (const auto &[l, h] : back_edges)
            if (h == head.id) latches.push_back(l);
        if (latches.size() != 1) {
            failed = true;
            return "";
        }
        // Natural loop membership.
        std::set<std::string> loop = {head.id, latches[0]};
        std::vector<std::string> work = {latches[0]};
        while (!work.empty()) {
            std::string b = work.back();
            work.pop_back();
            if (b == head.id) continue;
            for (const std::string &pr : preds[b])
                if (loop.insert(pr).second) work.push_back(pr);
        }
        const auto *br = std::get_if<branch_term>(&head.term);
        if (!br) {
            failed = true;
            return "";
        }
        bool then_inside = loop.count(br->then_target) != 0;
        bool else_inside = loop.count(br->else_target) != 0;
        if (then_inside == else_inside) {
            failed = true;
            return "";
        }
        std::string body_entry = then_inside ? br->then_target
                                             : br->else_target;
        std::string exit_to = then_inside ? br->else_target : br->then_target;

        visited.insert(head.id);
        c_while loop_stmt;
        block_stmts(head, loop_stmt.body.stmts);
        expr_ptr raw = hoist(br->cond, loop_stmt.body.stmts, head.id);
        expr_ptr break_cond =
            then_inside ? binop(binop_kind::eq, raw, cst(0, 1)) : raw;
        c_if brk{break_cond, {}, {}};
        brk.then_b.stmts.push_back({c_break{}, head.id});
        loop_stmt.body.stmts.push_back({std::move(brk), head.id});

        std::vector<c_stmt> inner =
            body_entry == head.id ? std::vector<c_stmt>{}
                                  : emit_seq(body_entry, {head.id});
        for (c_stmt &s : inner) loop_stmt.body.stmts.push_back(std::move(s));
        stmts.push_back({std::move(loop_stmt), head.id});
        return exit_to;
    }

    // ---- goto fallback (total) ----

    structured_chunk fallback() {
        structured_chunk flat;
        flat.structured = false;
        temp_n = 0;
        std::vector<c_stmt> &stmts = flat.body.stmts;
        std::swap(out.temps, flat.temps); // hoisting re-fills below
        out.temps.clear();
        std::string end_lab = "end";
        for (bool clash = true; clash;) {
            clash = false;
            for (const basic_block &bb : p.blocks)
                if (bb.id == end_lab) { end_lab += "_"; clash = true; }
        }
        if (!p.blocks.empty() && p.blocks.front().id != p.entry)
            stmts.push_back({c_goto{p.entry}, p.entry});
        for (const basic_block &bb : p.blocks) {
            stmts.push_back({c_label{bb.id}, bb.id});
            block_stmts(bb, stmts);
            if (std::holds_alternative<halt_term>(bb.term)) {
                stmts.push_back({c_goto{end_lab}, bb.id});
            } else if (const auto *gt = std::get_if<goto_term>(&bb.term)) {
                stmts.push_back({c_goto{gt->target}, bb.id});
            } else {
                const auto &br = std::get<branch_term>(bb.term);
                expr_ptr cond = hoist(br.cond, stmts, bb.id);
                c_if node{cond, {}, {}};
                node.then_b.stmts.push_back({c_goto{br.then_target}, bb.id});
                node.else_b.stmts.push_back({c_goto{br.else_target}, bb.id});
                stmts.push_back({std::move(node), bb.id});
            }
        }
        stmts.push_back({c_label{end_lab}, ""});
        // Keep only labels some goto actually targets (-Wunused-label).
        std::set<std::string> targets;
        for (const c_stmt &s : stmts) {
            if (const auto *g = std::get_if<c_goto>(&s.node)) {
                targets.insert(g->label);
            } else if (const auto *i = std::get_if<c_if>(&s.node)) {
                for (const c_stmt &t : i->then_b.stmts)
                    if (const auto *g2 = std::get_if<c_goto>(&t.node))
                        targets.insert(g2->label);
                for (const c_stmt &t : i->else_b.stmts)
                    if (const auto *g2 = std::get_if<c_goto>(&t.node))
                        targets.insert(g2->label);
            }
        }
        std::erase_if(stmts, [&](const c_stmt &s) {
            const auto *l = std::get_if<c_label>(&s.node);
            return l && !targets.count(l->label);
        });
        flat.temps = out.temps;
        return flat;
    }

    structured_chunk run() {
        out.body.stmts = emit_seq(p.entry, {});
        if (!failed && visited.size() == p.blocks.size()) {
            out.structured = true;
            return std::move(out);
        }
        return fallback();
    }
};

} // namespace

structured_chunk structure_cfg(const typed_program &t) {
    return structurer(t.prog).run();
}

size_t statement_count(const c_block_stmts &b) {
    size_t n = 0;
    for (const c_stmt &s : b.stmts) {
        if (std::holds_alternative<c_assign>(s.node) ||
            std::holds_alternative<c_store>(s.node)) {
            ++n;
        } else if (const auto *i = std::get_if<c_if>(&s.node)) {
            n += statement_count(i->then_b) + statement_count(i->else_b);
        } else if (const auto *w = std::get_if<c_while>(&s.node)) {
            n += statement_count(w->body);
        }
    }
    return n;
}

namespace {

// ---- text emission --------------------------------------------------------

std::string value_ctype(unsigned width, bool is_signed) {
    if (width <= 8) return is_signed ? "signed char" : "unsigned char";
    if (width <= 16) return is_signed ? "short" : "unsigned short";
    if (width <= 32) return is_signed ? "int" : "unsigned int";
    return is_signed ? "long long" : "unsigned long long";
}

std::string ctype_text(const ctype &t) {
    if (t.is_pointer) return ctype_text(*t.pointee) + " *";
    return value_ctype(t.bits, t.is_signed);
}

std::string signed_cast(unsigned width) {
    return "(" + value_ctype(width, true) + ")";
}

std::string hex_u64(uint64_t v) {
    std::ostringstream os;
    os << std::hex << "0x" << v;
    return os.str();
}

std::string const_text(uint64_t v, unsigned width) {
    std::string body = v < 10 ? std::to_string(v) : hex_u64(v);
    if (width > 32) return body + "ULL";
    if (width == 32 && v >= 0x80000000u) return body + "U";
    return body;
}

/// Emitter context: variable naming, types, and which locals got used.
struct emitter {
    const typed_program &t;
    std::map<std::string, std::string> names;
    std::set<std::string> taken;
    std::set<std::string> used; // IR vars referenced by emitted code

    explicit emitter(const typed_program &tp) : t(tp) {}

    static std::string sanitize(const std::string &v) {
        std::string s;
        for (char c : v)
            s += (std::isalnum(static_cast<unsigned char>(c)) || c == '_')
                     ? c
                     : '_';
        return s;
    }

    std::string assign_name(const std::string &v, const std::string &want) {
        std::string name = want;
        int n = 2;
        while (taken.count(name)) name = want + "_" + std::to_string(n++);
        taken.insert(name);
        names[v] = name;
        return name;
    }

    std::string cname(const std::string &v) {
        auto it = names.find(v);
        if (it != names.end()) {
            used.insert(v);
            return it->second;
        }
        std::string base = v;
        if (base.rfind("__tina_", 0) != 0) {
            size_t i = 0;
            while (i < base.size() && base[i] == '_') ++i;
            base = "__tina_" + base.substr(i);
        }
        used.insert(v);
        return assign_name(v, sanitize(base));
    }

    ctype type_of(const std::string &v, unsigned width) const {
        auto it = t.types.find(v);
        if (it != t.types.end()) return it->second;
        ctype c;
        c.bits = width;
        return c;
    }

    bool is_pointer_var(const std::string &v) const {
        auto it = t.types.find(v);
        return it != t.types.end() && it->second.is_pointer;
    }

    static bool needs_mask(unsigned w) {
        return w != 8 && w != 16 && w != 32 && w != 64;
    }

    static std::string mask_text(const std::string &e, unsigned w) {
        uint64_t m = truncate(~uint64_t{0}, w);
        return "(" + e + " & " + const_text(m, w > 32 ? 64 : 32) + ")";
    }

    std::string masked(const std::string &e, unsigned w) {
        // 8/16-bit intermediate results live in promoted ints and must be
        // cut back; 32/64-bit unsigned arithmetic wraps by itself.
        if (w == 32 || w == 64) return e;
        return mask_text(e, w);
    }

    /// Canonical value text: all bits above `width` are zero.
    std::string val(const expr_ptr &e) {
        unsigned w = e->width;
        if (e->is_cst()) return const_text(e->as_cst().value, w);
        if (e->is_var()) return cname(e->as_var().name);
        if (e->is_load()) return "(*" + ptr(e->as_load().addr,
                                            e->as_load().nbytes) + ")";
        if (e->is_unop()) {
            const auto &u = e->as_unop();
            std::string a = val(u.arg);
            switch (u.op) {
            case unop_kind::bnot: return masked("(~" + a + ")", w);
            case unop_kind::neg: return masked("(-" + a + ")", w);
            case unop_kind::uext:
                return w > 32 ? "((unsigned long long)" + a + ")" : a;
            case unop_kind::sext: {
                std::string s = "(" + signed_cast(u.arg->width) + a + ")";
                if (w > 32) s = "((long long)" + s + ")";
                std::string c = "((" + value_ctype(w, false) + ")" + s + ")";
                return masked(c, w);
            }
            case unop_kind::extract: {
                std::string s = u.lo ? "(" + a + " >> " +
                                           std::to_string(u.lo) + ")"
                                     : a;
                uint64_t m = truncate(~uint64_t{0}, w);
                return "(" + s + " & " +
                       const_text(m, u.arg->width > 32 ? 64 : 32) + ")";
            }
            }
        }
        if (e->is_binop()) {
            const auto &b = e->as_binop();
            return binop_val(b.op, b.lhs, b.rhs, w);
        }
        throw ir_error("unexpected expression kind in emission");
    }

    std::string binop_val(binop_kind op, const expr_ptr &le,
                          const expr_ptr &re, unsigned w) {
        std::string l = val(le), r = val(re);
        unsigned ow = le->width;
        auto wide = [&](const std::string &s) {
            return ow > 32 || w > 32 ? "((unsigned long long)" + s + ")" : s;
        };
        switch (op) {
        case binop_kind::add:
            if (re->is_cst()) {
                uint64_t k = re->as_cst().value;
                uint64_t neg_k = truncate(-k, w);
                bool negative = w >= 2 && (k >> (w - 1)) != 0;
                if (negative && neg_k < k)
                    return masked("(" + l + " - " + const_text(neg_k, w) + ")",
                                  w);
            }
            return masked("(" + l + " + " + r + ")", w);
        case binop_kind::sub: return masked("(" + l + " - " + r + ")", w);
        case binop_kind::mul: return masked("(" + wide(l) + " * " + r + ")", w);
        case binop_kind::udiv: return masked("(" + l + " / " + r + ")", w);
        case binop_kind::urem: return masked("(" + l + " % " + r + ")", w);
        case binop_kind::sdiv:
            return masked("((" + value_ctype(w, false) + ")(" +
                              signed_cast(w) + l + " / " + signed_cast(w) + r +
                              "))",
                          w);
        case binop_kind::srem:
            return masked("((" + value_ctype(w, false) + ")(" +
                              signed_cast(w) + l + " % " + signed_cast(w) + r +
                              "))",
                          w);
        case binop_kind::band: return "(" + l + " & " + r + ")";
        case binop_kind::bor: return "(" + l + " | " + r + ")";
        case binop_kind::bxor: return "(" + l + " ^ " + r + ")";
        case binop_kind::shl:
            return masked("(" + wide(l) + " << " + r + ")", w);
        case binop_kind::shr: return "(" + l + " >> " + r + ")";
        case binop_kind::sar:
            return masked("((" + value_ctype(w, false) + ")(" +
                              signed_cast(w) + l + " >> " + r + "))",
                          w);
        case binop_kind::eq: return "(" + l + " == " + r + ")";
        case binop_kind::neq: return "(" + l + " != " + r + ")";
        case binop_kind::ult: return "(" + l + " < " + r + ")";
        case binop_kind::ugt: return "(" + l + " > " + r + ")";
        case binop_kind::slt:
            return "(" + signed_cast(ow) + l + " < " + signed_cast(ow) + r +
                   ")";
        case binop_kind::sgt:
            return "(" + signed_cast(ow) + l + " > " + signed_cast(ow) + r +
                   ")";
        case binop_kind::concat: {
            std::string ty = "(" + value_ctype(w, false) + ")";
            return "((" + ty + val(le) + " << " +
                   std::to_string(re->width) + ") | " + ty + val(re) + ")";
        }
        }
        throw ir_error("unhandled binop in emission");
    }

    /// Pointer-valued text in element units; total via casts.
    std::string ptr(const expr_ptr &e, unsigned nbytes) {
        std::string elem_ty = value_ctype(8 * nbytes, false);
        linear_form lf = linearize(e);
        std::string base;
        unsigned base_elem = 0;
        if (lf.ok) {
            for (const auto &[v, k] : lf.coef) {
                if (k == 1 && is_pointer_var(v)) {
                    base = v;
                    base_elem = t.types.at(v).pointee_bytes();
                    break;
                }
            }
        }
        if (base.empty())
            return "(" + elem_ty + " *)(" + val(e) + ")";

        linear_form off = lf;
        off.coef.erase(base);
        bool divisible = base_elem == nbytes;
        for (const auto &[v, k] : off.coef)
            if (int64_t(k) % int64_t(nbytes) != 0 &&
                truncate(-k, e->width) % nbytes != 0)
                divisible = false;
        if (off.c % nbytes != 0 && truncate(-off.c, e->width) % nbytes != 0)
            divisible = false;

        if (divisible) {
            std::string s = cname(base);
            std::string terms = linear_terms(off, e->width, nbytes);
            if (terms.empty()) return s;
            return "(" + s + terms + ")";
        }
        // Byte-addressed fallback, re-cast to the accessed granule.
        std::string byte_off = linear_terms(off, e->width, 1);
        return "(" + elem_ty + " *)((unsigned char *)" + cname(base) +
               byte_off + ")";
    }

    /// " + k * v - ..." rendering of a linear offset in `unit`-byte steps.
    std::string linear_terms(const linear_form &off, unsigned width,
                             unsigned unit) {
        std::string s;
        for (const auto &[v, k] : off.coef) {
            if (k == 0) continue;
            uint64_t pos = truncate(k, width), negv = truncate(-k, width);
            bool neg_term = negv < pos;
            uint64_t mag = (neg_term ? negv : pos) / unit;
            s += neg_term ? " - " : " + ";
            if (mag != 1) s += const_text(mag, width) + " * ";
            s += cname(v);
        }
        if (off.c != 0) {
            uint64_t pos = off.c, negv = truncate(-off.c, width);
            bool neg_term = negv < pos;
            s += (neg_term ? " - " : " + ") +
                 const_text((neg_term ? negv : pos) / unit, width);
        }
        return s;
    }

    // ---- statements ----

    void stmt_text(const c_stmt &s, std::ostringstream &os, int ind) {
        std::string pad(ind * 4, ' ');
        std::string tag =
            s.block_id.empty() ? "" : " /*@block " + s.block_id + "*/";
        if (const auto *a = std::get_if<c_assign>(&s.node)) {
            std::string rhs;
            if (is_pointer_var(a->lhs)) {
                unsigned pe = t.types.at(a->lhs).pointee_bytes();
                rhs = ptr(a->rhs, pe);
            } else if (needs_mask(a->width) && !a->rhs->is_cst() &&
                       !a->rhs->is_binop()) {
                rhs = val(a->rhs);
            } else if (needs_mask(a->width)) {
                rhs = val(a->rhs); // val() already canonicalizes
            } else {
                rhs = val(a->rhs);
            }
            os << pad << cname(a->lhs) << " = " << rhs << ";" << tag << "\n";
        } else if (const auto *st = std::get_if<c_store>(&s.node)) {
            os << pad << "*" << ptr(st->addr, st->nbytes) << " = "
               << val(st->value) << ";" << tag << "\n";
        } else if (const auto *i = std::get_if<c_if>(&s.node)) {
            os << pad << "if (" << val(i->cond) << ") {" << tag << "\n";
            for (const c_stmt &c : i->then_b.stmts) stmt_text(c, os, ind + 1);
            if (!i->else_b.stmts.empty()) {
                os << pad << "} else {\n";
                for (const c_stmt &c : i->else_b.stmts)
                    stmt_text(c, os, ind + 1);
            }
            os << pad << "}\n";
        } else if (const auto *w = std::get_if<c_while>(&s.node)) {
            os << pad << "while (1) {" << tag << "\n";
            for (const c_stmt &c : w->body.stmts) stmt_text(c, os, ind + 1);
            os << pad << "}\n";
        } else if (std::holds_alternative<c_break>(s.node)) {
            os << pad << "break;" << tag << "\n";
        } else if (const auto *gt = std::get_if<c_goto>(&s.node)) {
            os << pad << "goto " << label_name(gt->label) << ";" << tag
               << "\n";
        } else if (const auto *lb = std::get_if<c_label>(&s.node)) {
            os << pad.substr(0, pad.size() >= 4 ? pad.size() - 4 : 0)
               << label_name(lb->label) << ": ;\n";
        }
    }

    static std::string label_name(const std::string &id) {
        std::string s = sanitize(id);
        size_t i = 0;
        while (i < s.size() && s[i] == '_') ++i;
        return "__tina_L_" + s.substr(i);
    }
};

} // namespace

std::string emit_c(const chunk_spec &spec, const decoded_chunk &chunk,
                   const pipeline_result &res, const std::string &func_name) {
    const typed_program &t = res.prog;
    structured_chunk sc = structure_cfg(t);

    emitter em(t);
    std::map<std::string, unsigned> prog_inputs = program_inputs(t.prog);
    std::map<std::string, unsigned> assigned = assigned_vars(t.prog);

    size_t nouts = spec.outputs.size();

    // Output parameters (interface order), keeping declared names.
    struct param {
        std::string text;
    };
    std::vector<std::string> params;
    struct output_bind {
        std::string pname;
        std::string ir_var;
        bool is_mem;
        ctype type;
    };
    std::vector<output_bind> outs;
    for (size_t i = 0; i < nouts; ++i) {
        const operand_spec &op = spec.outputs[i];
        const interface_entry &e = chunk.interface[i];
        if (op.constraint == "m") {
            // The base symbol is the parameter; stores already went through
            // it, nothing to write back.
            std::string n = em.assign_name(e.ir_var, em.sanitize(e.ir_var));
            params.push_back(ctype_text(op.type) + " *" + n);
            outs.push_back({n, e.ir_var, true, op.type});
        } else {
            std::string n = em.assign_name("param:" + op.name,
                                           em.sanitize(op.name));
            params.push_back(ctype_text(op.type) + " *" + n);
            outs.push_back({n, e.ir_var, false, op.type});
        }
    }

    // Value parameters: every symbolic input the final program or the
    // ledger still needs.
    std::map<std::string, unsigned> needed = prog_inputs;
    for (const ledger_entry &le : res.ledger.entries)
        collect_free_vars(le.value, needed);
    for (const auto &[v, w] : assigned) needed.erase(v);
    // Inout symbols are seeded from the output parameter, not passed.
    std::set<std::string> inout_syms;
    for (size_t i = 0; i < nouts; ++i) {
        const operand_spec &op = spec.outputs[i];
        if (!op.is_inout) continue;
        std::string sym = "__tina_" + std::to_string(i);
        if (needed.count(sym)) inout_syms.insert(sym);
    }
    for (const auto &[v, w] : needed) {
        if (em.names.count(v) || inout_syms.count(v)) continue;
        ctype ty = em.type_of(v, w);
        std::string n = em.assign_name(v, em.sanitize(v));
        params.push_back(ctype_text(ty) + " " + n);
    }

    // Body text first, so we know which locals are actually referenced.
    std::ostringstream body;
    for (const std::string &sym : inout_syms) {
        // find the owning output parameter
        for (size_t i = 0; i < nouts; ++i)
            if (spec.outputs[i].is_inout &&
                sym == "__tina_" + std::to_string(i))
                body << "    " << em.cname(sym) << " = *" << outs[i].pname
                     << ";\n";
    }
    for (const c_stmt &s : sc.body.stmts) em.stmt_text(s, body, 1);
    for (const output_bind &ob : outs) {
        if (ob.is_mem) continue;
        std::string src;
        if (assigned.count(ob.ir_var) || prog_inputs.count(ob.ir_var)) {
            src = em.cname(ob.ir_var);
        } else if (const ledger_entry *le = res.ledger.find(ob.ir_var)) {
            src = ob.type.is_pointer ? em.ptr(le->value, ob.type.pointee_bytes())
                                     : em.val(le->value);
        } else {
            continue; // never produced; leave the slot untouched
        }
        body << "    *" << ob.pname << " = " << src << ";\n";
    }

    // Declarations for every referenced non-parameter variable.
    std::ostringstream decls;
    std::map<std::string, unsigned> declared = assigned;
    for (const auto &[v, w] : sc.temps) declared[v] = w;
    for (const auto &[v, w] : declared) {
        if (!em.used.count(v)) continue;
        if (prog_inputs.count(v) && !assigned.count(v)) continue;
        ctype ty = em.type_of(v, w);
        decls << "    " << ctype_text(ty) << " " << em.cname(v) << ";\n";
    }
    // Inout seeds are declared like locals.
    for (const std::string &sym : inout_syms) {
        unsigned w = needed.count(sym) ? needed.at(sym) : 32;
        decls << "    " << ctype_text(em.type_of(sym, w)) << " "
              << em.cname(sym) << ";\n";
    }

    std::ostringstream os;
    os << "void " << func_name << "(";
    for (size_t i = 0; i < params.size(); ++i)
        os << (i ? ", " : "") << params[i];
    if (params.empty()) os << "void";
    os << ")\n{\n" << decls.str() << body.str() << "}\n";
    return os.str();
}

} // namespace tina
