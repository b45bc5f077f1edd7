#include "tina/rewrite.hpp"

#include "tina/interp.hpp"

#include <algorithm>
#include <optional>

namespace tina {

const char *category_name(rule_category c) {
    switch (c) {
    case rule_category::normalization: return "normalization";
    case rule_category::constant_folding: return "constant-folding";
    case rule_category::neutral: return "neutral";
    case rule_category::idempotence: return "idempotence";
    case rule_category::absorbing: return "absorbing";
    case rule_category::inverse: return "inverse";
    case rule_category::involutivity: return "involutivity";
    case rule_category::shifts: return "shifts";
    case rule_category::remainder_extension: return "remainder-extension";
    case rule_category::condition: return "condition";
    case rule_category::de_morgan: return "de-morgan";
    case rule_category::ternary: return "ternary";
    case rule_category::split: return "split";
    case rule_category::concat_abstraction: return "concat-abstraction";
    case rule_category::extraction: return "extraction";
    case rule_category::twos_complement: return "twos-complement";
    }
    return "?";
}

namespace {

const expr::binop_node *bin(const expr_ptr &e, binop_kind k) {
    if (!e->is_binop())
        return nullptr;
    const auto &b = e->as_binop();
    return b.op == k ? &b : nullptr;
}

const expr::unop_node *un(const expr_ptr &e, unop_kind k) {
    if (!e->is_unop())
        return nullptr;
    const auto &u = e->as_unop();
    return u.op == k ? &u : nullptr;
}

std::optional<uint64_t> cval(const expr_ptr &e) {
    if (e->is_cst())
        return e->as_cst().value;
    return std::nullopt;
}

bool is_c(const expr_ptr &e, uint64_t v) {
    return e->is_cst() && e->as_cst().value == truncate(v, e->width);
}

bool is_ones(const expr_ptr &e) {
    return is_c(e, ~uint64_t(0));
}

expr_ptr vec1(unsigned w) {
    return cst(~uint64_t(0), w);
}

// AC sort order: constants strictly last, otherwise structural.
bool ac_less(const expr_ptr &a, const expr_ptr &b) {
    if (a->is_cst() != b->is_cst())
        return b->is_cst();
    return expr_compare(a, b) < 0;
}

bool ac_flattenable(binop_kind k) {
    switch (k) {
    case binop_kind::add:
    case binop_kind::mul:
    case binop_kind::band:
    case binop_kind::bor:
    case binop_kind::bxor:
        return true;
    default:
        return false;
    }
}

uint64_t ac_fold(binop_kind k, uint64_t a, uint64_t b, unsigned w) {
    switch (k) {
    case binop_kind::add: return truncate(a + b, w);
    case binop_kind::mul: return truncate(a * b, w);
    case binop_kind::band: return a & b;
    case binop_kind::bor: return a | b;
    case binop_kind::bxor: return a ^ b;
    default: throw ir_error("ac_fold: not an AC operator");
    }
}

void ac_collect(binop_kind k, const expr_ptr &e, std::vector<expr_ptr> &out) {
    if (const auto *b = bin(e, k)) {
        ac_collect(k, b->lhs, out);
        ac_collect(k, b->rhs, out);
    } else {
        out.push_back(e);
    }
}

/// Normalizes one node, assuming children are already normalized.
expr_ptr ac_normalize_node(const expr_ptr &e) {
    if (!e->is_binop())
        return e;
    auto b = e->as_binop();
    // x - k is canonically x + (-k); unlocks the additive AC machinery.
    if (b.op == binop_kind::sub && b.rhs->is_cst() && !b.lhs->is_cst()) {
        b.op = binop_kind::add;
        b.rhs = cst(uint64_t(0) - b.rhs->as_cst().value, b.rhs->width);
    }
    if (ac_flattenable(b.op)) {
        std::vector<expr_ptr> ops;
        ac_collect(b.op, binop(b.op, b.lhs, b.rhs), ops);
        std::vector<expr_ptr> terms;
        std::optional<uint64_t> acc;
        for (auto &o : ops) {
            if (auto v = cval(o))
                acc = acc ? ac_fold(b.op, *acc, *v, e->width) : *v;
            else
                terms.push_back(o);
        }
        std::stable_sort(terms.begin(), terms.end(), ac_less);
        if (terms.empty())
            return cst(*acc, e->width);
        expr_ptr out = terms[0];
        for (size_t i = 1; i < terms.size(); i++)
            out = binop(b.op, out, terms[i]);
        if (acc)
            out = binop(b.op, out, cst(*acc, e->width));
        // Preserve node identity when nothing moved; revert tracking relies
        // on untouched subtrees keeping their pointers.
        return expr_equal(out, e) ? e : out;
    }
    if ((b.op == binop_kind::eq || b.op == binop_kind::neq) && ac_less(b.rhs, b.lhs))
        return binop(b.op, b.rhs, b.lhs);
    if (b.lhs == e->as_binop().lhs && b.rhs == e->as_binop().rhs && b.op == e->as_binop().op)
        return e;
    return binop(b.op, b.lhs, b.rhs);
}

expr_ptr map_children(const expr_ptr &e, const std::function<expr_ptr(const expr_ptr &)> &f) {
    if (e->is_cst() || e->is_var())
        return e;
    if (e->is_load()) {
        const auto &l = e->as_load();
        auto a = f(l.addr);
        return a == l.addr ? e : load(a, l.nbytes);
    }
    if (e->is_unop()) {
        const auto &u = e->as_unop();
        auto a = f(u.arg);
        if (a == u.arg)
            return e;
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
        auto l = f(b.lhs), r = f(b.rhs);
        return (l == b.lhs && r == b.rhs) ? e : binop(b.op, l, r);
    }
    const auto &t = e->as_ite();
    auto c = f(t.cond), a = f(t.then_e), z = f(t.else_e);
    return (c == t.cond && a == t.then_e && z == t.else_e) ? e : ite(c, a, z);
}

using apply_fn = std::function<expr_ptr(const expr_ptr &)>;

// --- rule bodies -----------------------------------------------------------

expr_ptr rw_fold_constants(const expr_ptr &e) {
    bool foldable = false;
    if (e->is_unop())
        foldable = e->as_unop().arg->is_cst();
    else if (e->is_binop())
        foldable = e->as_binop().lhs->is_cst() && e->as_binop().rhs->is_cst();
    if (!foldable)
        return nullptr;
    try {
        machine_state s;
        return cst(eval_expr(e, s), e->width);
    } catch (const eval_error &) {
        return nullptr; // e.g. division by zero: keep the error in the term
    }
}

expr_ptr rw_fold_ite(const expr_ptr &e) {
    if (!e->is_ite())
        return nullptr;
    const auto &t = e->as_ite();
    if (auto c = cval(t.cond))
        return *c ? t.then_e : t.else_e;
    return nullptr;
}

// Matches `x ⋄ k` with the constant on either side of a commutative operator.
expr_ptr match_with_cst(const expr_ptr &e, binop_kind k, uint64_t v, bool commute) {
    const auto *b = bin(e, k);
    if (!b)
        return nullptr;
    if (is_c(b->rhs, v))
        return b->lhs;
    if (commute && is_c(b->lhs, v))
        return b->rhs;
    return nullptr;
}

expr_ptr rw_or_ones(const expr_ptr &e) {
    const auto *b = bin(e, binop_kind::bor);
    if (!b)
        return nullptr;
    if (is_ones(b->rhs) || is_ones(b->lhs))
        return vec1(e->width);
    return nullptr;
}

expr_ptr rw_urem_modulus(const expr_ptr &e) {
    // Realizable only through a widening: uext_k(x) urem 2^|x| with k > |x|.
    const auto *b = bin(e, binop_kind::urem);
    if (!b)
        return nullptr;
    const auto *u = un(b->lhs, unop_kind::uext);
    if (!u || u->arg->width >= e->width)
        return nullptr;
    if (is_c(b->rhs, uint64_t(1) << u->arg->width))
        return b->lhs;
    return nullptr;
}

expr_ptr rw_self(const expr_ptr &e, binop_kind k, expr_ptr (*mk)(unsigned)) {
    const auto *b = bin(e, k);
    if (!b || !expr_equal(b->lhs, b->rhs))
        return nullptr;
    return mk(e->width);
}

expr_ptr rw_shift_overflow(const expr_ptr &e, binop_kind k) {
    const auto *b = bin(e, k);
    if (!b)
        return nullptr;
    if (auto v = cval(b->rhs))
        if (*v >= e->width)
            return cst(0, e->width);
    return nullptr;
}

expr_ptr rw_double_shift(const expr_ptr &e, binop_kind k) {
    const auto *outer = bin(e, k);
    if (!outer)
        return nullptr;
    const auto *inner = bin(outer->lhs, k);
    if (!inner)
        return nullptr;
    auto y = cval(inner->rhs), z = cval(outer->rhs);
    if (!y || !z)
        return nullptr;
    unsigned rw = std::max(inner->rhs->width, outer->rhs->width);
    if (*y + *z != truncate(*y + *z, rw))
        return nullptr; // combined amount would wrap
    return binop(k, inner->lhs, cst(*y + *z, rw));
}

expr_ptr rw_urem_urem(const expr_ptr &e) {
    const auto *outer = bin(e, binop_kind::urem);
    if (!outer)
        return nullptr;
    const auto *inner = bin(outer->lhs, binop_kind::urem);
    if (!inner)
        return nullptr;
    auto k = cval(inner->rhs), k2 = cval(outer->rhs);
    if (!k || !k2 || *k == 0 || *k2 == 0)
        return nullptr;
    if (*k <= *k2)
        return outer->lhs; // inner result is already < k' — outer rem is a no-op
    if (*k % *k2 == 0) // (x urem k) urem k' equals x urem k' only when k' | k
        return binop(binop_kind::urem, inner->lhs, outer->rhs);
    return nullptr;
}

expr_ptr rw_sext_of_uext(const expr_ptr &e) {
    const auto *s = un(e, unop_kind::sext);
    if (!s)
        return nullptr;
    const auto *u = un(s->arg, unop_kind::uext);
    if (!u || u->n <= u->arg->width)
        return nullptr; // the zero top bit is what makes sext behave as uext
    return uext(s->n, u->arg);
}

expr_ptr rw_uext_of_uext(const expr_ptr &e) {
    const auto *o = un(e, unop_kind::uext);
    if (!o)
        return nullptr;
    const auto *i = un(o->arg, unop_kind::uext);
    if (!i)
        return nullptr;
    return uext(o->n, i->arg);
}

expr_ptr rw_cmp_self(const expr_ptr &e, binop_kind k, uint64_t result) {
    const auto *b = bin(e, k);
    if (!b || !expr_equal(b->lhs, b->rhs))
        return nullptr;
    return cst(result, 1);
}

expr_ptr rw_cond_unit(const expr_ptr &e, binop_kind k, uint64_t unit) {
    // C = 1, C != 0, C >u 0 collapse to C at width 1.
    const auto *b = bin(e, k);
    if (!b || b->lhs->width != 1)
        return nullptr;
    if (is_c(b->rhs, unit) && !b->lhs->is_cst())
        return b->lhs;
    if (k != binop_kind::ugt && is_c(b->lhs, unit) && !b->rhs->is_cst())
        return b->rhs;
    return nullptr;
}

expr_ptr rw_not_bool(const expr_ptr &e, binop_kind inner_k, binop_kind outer_k) {
    const auto *n = un(e, unop_kind::bnot);
    if (!n || e->width != 1)
        return nullptr;
    const auto *b = bin(n->arg, inner_k);
    if (!b)
        return nullptr;
    return binop(outer_k, bnot(b->lhs), bnot(b->rhs));
}

expr_ptr rw_xor_ones(const expr_ptr &e) {
    const auto *b = bin(e, binop_kind::bxor);
    if (!b)
        return nullptr;
    if (is_ones(b->rhs))
        return bnot(b->lhs);
    if (is_ones(b->lhs))
        return bnot(b->rhs);
    return nullptr;
}

expr_ptr rw_not_cmp(const expr_ptr &e, binop_kind k, binop_kind flipped) {
    const auto *n = un(e, unop_kind::bnot);
    if (!n)
        return nullptr;
    const auto *b = bin(n->arg, k);
    if (!b)
        return nullptr;
    if (flipped == binop_kind::eq || flipped == binop_kind::neq)
        return binop(flipped, b->lhs, b->rhs);
    // ¬(x < y) is y ≤ x; without ≤ in the grammar: (y < x) ∨ (x = y).
    return binop(binop_kind::bor, binop(flipped, b->rhs, b->lhs),
                 binop(binop_kind::eq, b->lhs, b->rhs));
}

expr_ptr rw_ite_bool(const expr_ptr &e, uint64_t then_v, bool negate) {
    if (!e->is_ite() || e->width != 1)
        return nullptr;
    const auto &t = e->as_ite();
    if (!is_c(t.then_e, then_v) || !is_c(t.else_e, 1 - then_v))
        return nullptr;
    return negate ? bnot(t.cond) : t.cond;
}

expr_ptr rw_ite_not_cond(const expr_ptr &e) {
    if (!e->is_ite())
        return nullptr;
    const auto &t = e->as_ite();
    const auto *n = un(t.cond, unop_kind::bnot);
    if (!n)
        return nullptr;
    return ite(n->arg, t.else_e, t.then_e);
}

expr_ptr rw_ite_same(const expr_ptr &e) {
    if (!e->is_ite())
        return nullptr;
    const auto &t = e->as_ite();
    return expr_equal(t.then_e, t.else_e) ? t.then_e : nullptr;
}

expr_ptr develop_right(const expr_ptr &e) {
    if (!e->is_binop())
        return nullptr;
    const auto &b = e->as_binop();
    if (!b.rhs->is_ite() || b.lhs->is_ite())
        return nullptr;
    const auto &t = b.rhs->as_ite();
    return ite(t.cond, binop(b.op, b.lhs, t.then_e), binop(b.op, b.lhs, t.else_e));
}

expr_ptr develop_left(const expr_ptr &e) {
    if (!e->is_binop())
        return nullptr;
    const auto &b = e->as_binop();
    if (!b.lhs->is_ite() || b.rhs->is_ite())
        return nullptr;
    const auto &t = b.lhs->as_ite();
    return ite(t.cond, binop(b.op, t.then_e, b.rhs), binop(b.op, t.else_e, b.rhs));
}

expr_ptr develop_both(const expr_ptr &e) {
    if (!e->is_binop())
        return nullptr;
    const auto &b = e->as_binop();
    if (!b.lhs->is_ite() || !b.rhs->is_ite())
        return nullptr;
    const auto &l = b.lhs->as_ite(), &r = b.rhs->as_ite();
    if (!expr_equal(l.cond, r.cond))
        return nullptr;
    return ite(l.cond, binop(b.op, l.then_e, r.then_e), binop(b.op, l.else_e, r.else_e));
}

expr_ptr rw_split(const expr_ptr &e, binop_kind cmp, binop_kind join) {
    const auto *b = bin(e, cmp);
    if (!b)
        return nullptr;
    const expr_ptr *k = nullptr, *cc = nullptr;
    if (b->lhs->is_cst() && bin(b->rhs, binop_kind::concat)) {
        k = &b->lhs;
        cc = &b->rhs;
    } else if (b->rhs->is_cst() && bin(b->lhs, binop_kind::concat)) {
        k = &b->rhs;
        cc = &b->lhs;
    } else {
        return nullptr;
    }
    const auto &cn = (*cc)->as_binop(); // concat(hi, lo)
    unsigned yw = cn.rhs->width;
    return binop(join, binop(cmp, extract(yw, (*k)->width - 1, *k), cn.lhs),
                 binop(cmp, extract(0, yw - 1, *k), cn.rhs));
}

expr_ptr rw_or_uext_concat(const expr_ptr &e) {
    const auto *b = bin(e, binop_kind::bor);
    if (!b)
        return nullptr;
    for (auto [u_side, c_side] : {std::pair{&b->lhs, &b->rhs}, {&b->rhs, &b->lhs}}) {
        const auto *u = un(*u_side, unop_kind::uext);
        const auto *c = bin(*c_side, binop_kind::concat);
        if (!u || !c)
            continue;
        if (is_c(c->rhs, 0) && c->rhs->width == u->arg->width &&
            u->n == u->arg->width + c->lhs->width)
            return concat(c->lhs, u->arg);
    }
    return nullptr;
}

expr_ptr rw_shl_uext_concat(const expr_ptr &e) {
    const auto *b = bin(e, binop_kind::shl);
    if (!b)
        return nullptr;
    const auto *u = un(b->lhs, unop_kind::uext);
    auto k = cval(b->rhs);
    if (!u || !k || *k < 1 || *k > 63)
        return nullptr;
    if (u->n != u->arg->width + *k)
        return nullptr;
    return concat(u->arg, cst(0, unsigned(*k)));
}

expr_ptr rw_concat_zero_uext(const expr_ptr &e) {
    const auto *b = bin(e, binop_kind::concat);
    if (!b || !is_c(b->lhs, 0))
        return nullptr;
    return uext(e->width, b->rhs);
}

expr_ptr rw_extract_extract(const expr_ptr &e) {
    const auto *o = un(e, unop_kind::extract);
    if (!o)
        return nullptr;
    const auto *i = un(o->arg, unop_kind::extract);
    if (!i)
        return nullptr;
    return extract(o->lo + i->lo, o->hi + i->lo, i->arg);
}

expr_ptr rw_concat_extract_adjacent(const expr_ptr &e) {
    const auto *b = bin(e, binop_kind::concat);
    if (!b)
        return nullptr;
    const auto *hi = un(b->lhs, unop_kind::extract);
    const auto *lo = un(b->rhs, unop_kind::extract);
    if (!hi || !lo || !expr_equal(hi->arg, lo->arg) || hi->lo != lo->hi + 1)
        return nullptr;
    return extract(lo->lo, hi->hi, lo->arg);
}

expr_ptr rw_extract_ext(const expr_ptr &e, unop_kind ext) {
    // The four uext/sext-vs-extract interaction rules, plus the high-part
    // zero / sign cases.
    const auto *o = un(e, unop_kind::extract);
    if (!o)
        return nullptr;
    const auto *x = un(o->arg, ext);
    if (!x)
        return nullptr;
    unsigned aw = x->arg->width;
    if (o->hi < aw)
        return extract(o->lo, o->hi, x->arg);
    if (o->lo == 0)
        return o->hi + 1 == aw ? x->arg
                               : (ext == unop_kind::uext ? uext(o->hi + 1, x->arg)
                                                         : sext(o->hi + 1, x->arg));
    if (o->lo >= aw) {
        if (ext == unop_kind::uext)
            return cst(0, e->width);
        // High part of a sign extension replicates the sign bit.
        expr_ptr sign = extract(aw - 1, aw - 1, x->arg);
        return e->width == 1 ? sign : sext(e->width, sign);
    }
    return nullptr;
}

expr_ptr rw_extract_concat(const expr_ptr &e) {
    const auto *o = un(e, unop_kind::extract);
    if (!o)
        return nullptr;
    const auto *c = bin(o->arg, binop_kind::concat);
    if (!c)
        return nullptr;
    unsigned yw = c->rhs->width;
    if (o->hi < yw)
        return extract(o->lo, o->hi, c->rhs);
    if (o->lo >= yw)
        return extract(o->lo - yw, o->hi - yw, c->lhs);
    return nullptr;
}

expr_ptr rw_extract_full(const expr_ptr &e) {
    const auto *o = un(e, unop_kind::extract);
    if (!o || o->lo != 0 || o->hi + 1 != o->arg->width)
        return nullptr;
    return o->arg;
}

expr_ptr rw_ext_id(const expr_ptr &e, unop_kind k) {
    const auto *u = un(e, k);
    if (!u || u->n != u->arg->width)
        return nullptr;
    return u->arg;
}

expr_ptr rw_not_plus_one(const expr_ptr &e) {
    const auto *b = bin(e, binop_kind::add);
    if (!b)
        return nullptr;
    for (auto [x, one] : {std::pair{&b->lhs, &b->rhs}, {&b->rhs, &b->lhs}}) {
        const auto *n = un(*x, unop_kind::bnot);
        if (n && is_c(*one, 1))
            return neg(n->arg);
    }
    return nullptr;
}

expr_ptr rw_uext_xor_sub_sext(const expr_ptr &e) {
    const expr::binop_node *outer = bin(e, binop_kind::sub);
    bool as_add = false;
    if (!outer) {
        outer = bin(e, binop_kind::add);
        as_add = true; // canonical form after x - k ↪ x + (-k)
    }
    if (!outer)
        return nullptr;
    const auto *x = bin(outer->lhs, binop_kind::bxor);
    auto c2 = cval(outer->rhs);
    if (!x || !c2)
        return nullptr;
    const auto *u = un(x->lhs, unop_kind::uext);
    auto c1 = cval(x->rhs);
    if (!u) {
        u = un(x->rhs, unop_kind::uext);
        c1 = cval(x->lhs);
    }
    if (!u || !c1)
        return nullptr;
    uint64_t sign = uint64_t(1) << (u->arg->width - 1);
    if (*c1 != sign)
        return nullptr;
    uint64_t want = as_add ? truncate(uint64_t(0) - sign, e->width) : sign;
    if (*c2 != want)
        return nullptr;
    return sext(u->n, u->arg);
}

expr_ptr rw_extract_sign_bit(const expr_ptr &e) {
    const auto *o = un(e, unop_kind::extract);
    if (!o || o->arg->width < 2)
        return nullptr;
    if (o->lo != o->arg->width - 1 || o->hi != o->lo)
        return nullptr;
    return binop(binop_kind::slt, o->arg, cst(0, o->arg->width));
}

expr_ptr rw_uext_cond_minus_one(const expr_ptr &e, bool swapped) {
    const expr::unop_node *u = nullptr;
    if (const auto *b = bin(e, binop_kind::sub)) {
        if (is_c(b->rhs, 1))
            u = un(b->lhs, unop_kind::uext);
    } else if (const auto *a = bin(e, binop_kind::add)) {
        if (is_ones(a->rhs))
            u = un(a->lhs, unop_kind::uext);
    }
    if (!u || u->arg->width != 1)
        return nullptr;
    unsigned n = e->width;
    if (swapped)
        return ite(u->arg, vec1(n), cst(0, n)); // the rejected main-text form
    return ite(u->arg, cst(0, n), vec1(n));
}

expr_ptr rw_sext_cond(const expr_ptr &e) {
    const auto *s = un(e, unop_kind::sext);
    if (!s || s->arg->width != 1 || s->n < 2)
        return nullptr;
    return ite(s->arg, vec1(s->n), cst(0, s->n));
}

// --- catalogue -------------------------------------------------------------

expr_ptr rw_involution(const expr_ptr &e, unop_kind k) {
    const auto *o = un(e, k);
    if (!o)
        return nullptr;
    const auto *i = un(o->arg, k);
    return i ? i->arg : nullptr;
}

std::vector<rewrite_rule> build_catalogue() {
    using rc = rule_category;
    std::vector<rewrite_rule> rules;
    auto def = [&](const char *name, rc cat, apply_fn f) {
        rules.push_back({name, cat, std::move(f)});
    };
    auto zero = [](unsigned w) { return cst(0, w); };
    auto one = [](unsigned w) { return cst(1, w); };

    def("ac_reorder", rc::normalization, [](const expr_ptr &e) -> expr_ptr {
        auto n = ac_normalize(e);
        return expr_equal(n, e) ? nullptr : n;
    });
    def("fold_constants", rc::constant_folding, rw_fold_constants);
    def("fold_ite_cond", rc::constant_folding, rw_fold_ite);

    def("add_zero", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::add, 0, true); });
    def("sub_zero", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::sub, 0, false); });
    def("mul_one", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::mul, 1, true); });
    def("udiv_one", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::udiv, 1, false); });
    def("sdiv_one", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::sdiv, 1, false); });
    def("urem_modulus", rc::neutral, rw_urem_modulus);
    def("and_ones", rc::neutral, [](const expr_ptr &e) {
        return match_with_cst(e, binop_kind::band, ~uint64_t(0), true);
    });
    def("or_zero", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::bor, 0, true); });
    def("xor_zero", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::bxor, 0, true); });
    def("shl_zero", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::shl, 0, false); });
    def("shr_zero", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::shr, 0, false); });
    def("sar_zero", rc::neutral,
        [](const expr_ptr &e) { return match_with_cst(e, binop_kind::sar, 0, false); });

    def("and_self", rc::idempotence, [](const expr_ptr &e) -> expr_ptr {
        const auto *b = bin(e, binop_kind::band);
        return b && expr_equal(b->lhs, b->rhs) ? b->lhs : nullptr;
    });
    def("or_self", rc::idempotence, [](const expr_ptr &e) -> expr_ptr {
        const auto *b = bin(e, binop_kind::bor);
        return b && expr_equal(b->lhs, b->rhs) ? b->lhs : nullptr;
    });
    def("uext_id", rc::idempotence,
        [](const expr_ptr &e) { return rw_ext_id(e, unop_kind::uext); });
    def("sext_id", rc::idempotence,
        [](const expr_ptr &e) { return rw_ext_id(e, unop_kind::sext); });
    def("extract_full", rc::idempotence, rw_extract_full);

    def("mul_zero", rc::absorbing, [zero](const expr_ptr &e) -> expr_ptr {
        return match_with_cst(e, binop_kind::mul, 0, true) ? zero(e->width) : nullptr;
    });
    def("and_zero", rc::absorbing, [zero](const expr_ptr &e) -> expr_ptr {
        return match_with_cst(e, binop_kind::band, 0, true) ? zero(e->width) : nullptr;
    });
    def("or_ones", rc::absorbing, rw_or_ones);
    def("urem_one", rc::absorbing, [zero](const expr_ptr &e) -> expr_ptr {
        return match_with_cst(e, binop_kind::urem, 1, false) ? zero(e->width) : nullptr;
    });
    def("srem_one", rc::absorbing, [zero](const expr_ptr &e) -> expr_ptr {
        return match_with_cst(e, binop_kind::srem, 1, false) ? zero(e->width) : nullptr;
    });

    def("sub_self", rc::inverse,
        [zero](const expr_ptr &e) { return rw_self(e, binop_kind::sub, zero); });
    def("xor_self", rc::inverse,
        [zero](const expr_ptr &e) { return rw_self(e, binop_kind::bxor, zero); });
    def("udiv_self", rc::inverse,
        [one](const expr_ptr &e) { return rw_self(e, binop_kind::udiv, one); });
    def("sdiv_self", rc::inverse,
        [one](const expr_ptr &e) { return rw_self(e, binop_kind::sdiv, one); });
    def("shl_overflow", rc::inverse,
        [](const expr_ptr &e) { return rw_shift_overflow(e, binop_kind::shl); });
    def("shr_overflow", rc::inverse,
        [](const expr_ptr &e) { return rw_shift_overflow(e, binop_kind::shr); });

    def("not_not", rc::involutivity,
        [](const expr_ptr &e) { return rw_involution(e, unop_kind::bnot); });
    def("neg_neg", rc::involutivity,
        [](const expr_ptr &e) { return rw_involution(e, unop_kind::neg); });

    def("shl_shl", rc::shifts,
        [](const expr_ptr &e) { return rw_double_shift(e, binop_kind::shl); });
    def("shr_shr", rc::shifts,
        [](const expr_ptr &e) { return rw_double_shift(e, binop_kind::shr); });
    def("sar_sar", rc::shifts,
        [](const expr_ptr &e) { return rw_double_shift(e, binop_kind::sar); });

    def("urem_urem", rc::remainder_extension, rw_urem_urem);
    def("sext_of_uext", rc::remainder_extension, rw_sext_of_uext);
    def("uext_of_uext", rc::remainder_extension, rw_uext_of_uext);

    def("cmp_eq_one", rc::condition,
        [](const expr_ptr &e) { return rw_cond_unit(e, binop_kind::eq, 1); });
    def("cmp_neq_zero", rc::condition,
        [](const expr_ptr &e) { return rw_cond_unit(e, binop_kind::neq, 0); });
    def("cmp_ugt_zero", rc::condition, [](const expr_ptr &e) -> expr_ptr {
        const auto *b = bin(e, binop_kind::ugt);
        if (!b || b->lhs->width != 1 || !is_c(b->rhs, 0) || b->lhs->is_cst())
            return nullptr;
        return b->lhs;
    });
    def("eq_self", rc::condition,
        [](const expr_ptr &e) { return rw_cmp_self(e, binop_kind::eq, 1); });
    def("neq_self", rc::condition,
        [](const expr_ptr &e) { return rw_cmp_self(e, binop_kind::neq, 0); });
    def("ugt_self", rc::condition,
        [](const expr_ptr &e) { return rw_cmp_self(e, binop_kind::ugt, 0); });
    def("ult_self", rc::condition,
        [](const expr_ptr &e) { return rw_cmp_self(e, binop_kind::ult, 0); });
    def("sgt_self", rc::condition,
        [](const expr_ptr &e) { return rw_cmp_self(e, binop_kind::sgt, 0); });
    def("slt_self", rc::condition,
        [](const expr_ptr &e) { return rw_cmp_self(e, binop_kind::slt, 0); });

    def("not_and", rc::de_morgan, [](const expr_ptr &e) {
        return rw_not_bool(e, binop_kind::band, binop_kind::bor);
    });
    def("not_or", rc::de_morgan, [](const expr_ptr &e) {
        return rw_not_bool(e, binop_kind::bor, binop_kind::band);
    });
    def("xor_ones", rc::de_morgan, rw_xor_ones);
    def("not_eq", rc::de_morgan,
        [](const expr_ptr &e) { return rw_not_cmp(e, binop_kind::eq, binop_kind::neq); });
    def("not_neq", rc::de_morgan,
        [](const expr_ptr &e) { return rw_not_cmp(e, binop_kind::neq, binop_kind::eq); });
    def("not_ult", rc::de_morgan,
        [](const expr_ptr &e) { return rw_not_cmp(e, binop_kind::ult, binop_kind::ult); });
    def("not_ugt", rc::de_morgan,
        [](const expr_ptr &e) { return rw_not_cmp(e, binop_kind::ugt, binop_kind::ugt); });
    def("not_slt", rc::de_morgan,
        [](const expr_ptr &e) { return rw_not_cmp(e, binop_kind::slt, binop_kind::slt); });
    def("not_sgt", rc::de_morgan,
        [](const expr_ptr &e) { return rw_not_cmp(e, binop_kind::sgt, binop_kind::sgt); });

    def("ite_false_true", rc::ternary,
        [](const expr_ptr &e) { return rw_ite_bool(e, 0, true); });
    def("ite_true_false", rc::ternary,
        [](const expr_ptr &e) { return rw_ite_bool(e, 1, false); });
    def("ite_not_cond", rc::ternary, rw_ite_not_cond);
    def("ite_same", rc::ternary, rw_ite_same);
    def("develop_right", rc::ternary, develop_right);
    def("develop_left", rc::ternary, develop_left);
    def("develop_both", rc::ternary, develop_both);

    def("eq_concat", rc::split, [](const expr_ptr &e) {
        return rw_split(e, binop_kind::eq, binop_kind::band);
    });
    def("neq_concat", rc::split, [](const expr_ptr &e) {
        return rw_split(e, binop_kind::neq, binop_kind::bor);
    });

    def("or_uext_concat", rc::concat_abstraction, rw_or_uext_concat);
    def("shl_uext_concat", rc::concat_abstraction, rw_shl_uext_concat);
    def("concat_zero_uext", rc::concat_abstraction, rw_concat_zero_uext);

    def("extract_extract", rc::extraction, rw_extract_extract);
    def("concat_extract_adjacent", rc::extraction, rw_concat_extract_adjacent);
    def("extract_concat", rc::extraction, rw_extract_concat);
    def("extract_uext", rc::extraction,
        [](const expr_ptr &e) { return rw_extract_ext(e, unop_kind::uext); });
    def("extract_sext", rc::extraction,
        [](const expr_ptr &e) { return rw_extract_ext(e, unop_kind::sext); });

    def("not_plus_one", rc::twos_complement, rw_not_plus_one);
    def("uext_xor_sub_sext", rc::twos_complement, rw_uext_xor_sub_sext);
    def("extract_sign_bit", rc::twos_complement, rw_extract_sign_bit);
    def("uext_cond_minus_one", rc::twos_complement,
        [](const expr_ptr &e) { return rw_uext_cond_minus_one(e, false); });
    def("sext_cond", rc::twos_complement, rw_sext_cond);
    return rules;
}

bool is_development(const rewrite_rule &r) {
    return r.name.rfind("develop_", 0) == 0;
}

} // namespace

const std::vector<rewrite_rule> &rule_catalogue() {
    static const std::vector<rewrite_rule> rules = build_catalogue();
    return rules;
}

const rewrite_rule &find_rule(const std::string &name) {
    for (const auto &r : rule_catalogue())
        if (r.name == name)
            return r;
    throw ir_error("unknown rewrite rule '" + name + "'");
}

rewrite_rule unsound_uext_cond_minus_one() {
    return {"uext_cond_minus_one_swapped", rule_category::twos_complement,
            [](const expr_ptr &e) { return rw_uext_cond_minus_one(e, true); }};
}

expr_ptr ac_normalize(const expr_ptr &e) {
    auto n = map_children(e, [](const expr_ptr &c) { return ac_normalize(c); });
    return ac_normalize_node(n);
}

expr_ptr apply_rule_once(const rewrite_rule &r, const expr_ptr &e) {
    expr_ptr from_child = map_children(e, [&](const expr_ptr &c) {
        auto rc = apply_rule_once(r, c);
        return rc ? rc : c;
    });
    if (from_child != e)
        return from_child;
    return r.apply(e);
}

namespace {

expr_ptr simplify_rec(expr_ptr e, size_t &budget);

expr_ptr try_develop(const expr_ptr &e, size_t &budget) {
    if (!e->is_binop())
        return nullptr;
    expr_ptr developed = develop_both(e);
    if (!developed)
        developed = develop_right(e);
    if (!developed)
        developed = develop_left(e);
    if (!developed)
        return nullptr;
    const auto &t = developed->as_ite();
    expr_ptr a1 = simplify_rec(t.then_e, budget);
    expr_ptr a2 = simplify_rec(t.else_e, budget);
    // Keep the development only when an arm actually simplified; otherwise
    // revert to avoid term growth.
    if (expr_equal(a1, ac_normalize(t.then_e)) && expr_equal(a2, ac_normalize(t.else_e)))
        return nullptr;
    return simplify_rec(ite(t.cond, a1, a2), budget);
}

expr_ptr simplify_rec(expr_ptr e, size_t &budget) {
    e = map_children(e, [&](const expr_ptr &c) { return simplify_rec(c, budget); });
    expr_ptr n = ac_normalize_node(e);
    if (n != e) {
        // Flattening can create fresh inner nodes (e.g. pairing equal xor
        // operands); give them one simplification pass too.
        n = map_children(n, [&](const expr_ptr &c) { return simplify_rec(c, budget); });
        e = ac_normalize_node(n);
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto &r : rule_catalogue()) {
            if (is_development(r))
                continue;
            if (auto out = r.apply(e)) {
                if (budget-- == 0)
                    throw ir_error("simplify_expr: iteration cap exceeded");
                e = simplify_rec(out, budget);
                changed = true;
                break;
            }
        }
    }
    if (auto dev = try_develop(e, budget))
        return dev;
    return e;
}

} // namespace

expr_ptr simplify_expr(const expr_ptr &e) {
    size_t budget = 256 * (expr_size(e) + 4);
    return simplify_rec(e, budget);
}

} // namespace tina
