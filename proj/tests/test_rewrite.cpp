#include "doctest.h"

#include "tina/interp.hpp"
#include "tina/rewrite.hpp"

#include <map>
#include <random>
#include <set>

using namespace tina;

namespace {

expr_ptr x(unsigned w) { return var("x", w); }
expr_ptr y(unsigned w) { return var("y", w); }
expr_ptr z(unsigned w) { return var("z", w); }
expr_ptr C() { return var("c", 1); }
expr_ptr C2() { return var("d", 1); }
expr_ptr ones(unsigned w) { return cst(~uint64_t(0), w); }

expr_ptr bop(binop_kind k, expr_ptr l, expr_ptr r) { return binop(k, l, r); }

/// Exhaustively compares `e` with `r(e)` over every assignment of the free
/// variables. Assignments on which `e` itself errors (division by zero) are
/// vacuous. Returns the number of mismatches.
uint64_t rule_mismatches(const rewrite_rule &r, const expr_ptr &e) {
    expr_ptr out = r.apply(e);
    REQUIRE_MESSAGE(out, "rule did not fire: ", r.name, " on ", expr_to_string(e));
    REQUIRE(out->width == e->width);

    std::map<std::string, unsigned> fv;
    collect_free_vars(e, fv);
    collect_free_vars(out, fv);
    std::vector<std::pair<std::string, unsigned>> vs(fv.begin(), fv.end());
    unsigned total_bits = 0;
    for (auto &[_, w] : vs)
        total_bits += w;
    REQUIRE(total_bits <= 20);

    uint64_t bad = 0;
    for (uint64_t idx = 0; idx < (uint64_t(1) << total_bits); idx++) {
        machine_state s;
        uint64_t rest = idx;
        for (auto &[n, w] : vs) {
            s.set_var(n, rest, w);
            rest >>= w;
        }
        uint64_t want;
        try {
            want = eval_expr(e, s);
        } catch (const eval_error &) {
            continue;
        }
        try {
            if (eval_expr(out, s) != want)
                bad++;
        } catch (const eval_error &) {
            bad++;
        }
    }
    return bad;
}

using instance_table = std::map<std::string, std::vector<expr_ptr>>;

instance_table build_instances() {
    instance_table t;
    for (unsigned w = 1; w <= 6; w++) {
        auto X = x(w), Y = y(w);
        t["ac_reorder"].push_back(add(add(X, cst(1, w)), Y));
        t["fold_constants"].push_back(add(cst(2, w), cst(3, w)));
        t["fold_constants"].push_back(bnot(cst(1, w)));
        t["fold_ite_cond"].push_back(ite(cst(1, 1), X, Y));
        t["fold_ite_cond"].push_back(ite(cst(0, 1), X, Y));

        t["add_zero"].push_back(add(X, cst(0, w)));
        t["sub_zero"].push_back(sub(X, cst(0, w)));
        t["mul_one"].push_back(mul(X, cst(1, w)));
        t["udiv_one"].push_back(bop(binop_kind::udiv, X, cst(1, w)));
        t["sdiv_one"].push_back(bop(binop_kind::sdiv, X, cst(1, w)));
        t["and_ones"].push_back(bop(binop_kind::band, X, ones(w)));
        t["or_zero"].push_back(bop(binop_kind::bor, X, cst(0, w)));
        t["xor_zero"].push_back(bop(binop_kind::bxor, X, cst(0, w)));
        t["shl_zero"].push_back(bop(binop_kind::shl, X, cst(0, 4)));
        t["shr_zero"].push_back(bop(binop_kind::shr, X, cst(0, 4)));
        t["sar_zero"].push_back(bop(binop_kind::sar, X, cst(0, 4)));
        if (w < 6)
            t["urem_modulus"].push_back(
                bop(binop_kind::urem, uext(w + 1, X), cst(uint64_t(1) << w, w + 1)));

        t["and_self"].push_back(bop(binop_kind::band, X, X));
        t["or_self"].push_back(bop(binop_kind::bor, X, X));
        t["uext_id"].push_back(uext(w, X));
        t["sext_id"].push_back(sext(w, X));
        t["extract_full"].push_back(extract(0, w - 1, X));

        t["mul_zero"].push_back(mul(X, cst(0, w)));
        t["and_zero"].push_back(bop(binop_kind::band, X, cst(0, w)));
        t["or_ones"].push_back(bop(binop_kind::bor, X, ones(w)));
        t["urem_one"].push_back(bop(binop_kind::urem, X, cst(1, w)));
        t["srem_one"].push_back(bop(binop_kind::srem, X, cst(1, w)));

        t["sub_self"].push_back(sub(X, X));
        t["xor_self"].push_back(bop(binop_kind::bxor, X, X));
        t["udiv_self"].push_back(bop(binop_kind::udiv, X, X));
        t["sdiv_self"].push_back(bop(binop_kind::sdiv, X, X));
        t["shl_overflow"].push_back(bop(binop_kind::shl, X, cst(w, 6)));
        t["shl_overflow"].push_back(bop(binop_kind::shl, X, cst(w + 7, 6)));
        t["shr_overflow"].push_back(bop(binop_kind::shr, X, cst(w, 6)));

        t["not_not"].push_back(bnot(bnot(X)));
        t["neg_neg"].push_back(neg(neg(X)));

        for (uint64_t a = 0; a <= w + 1; a++) {
            for (uint64_t b = 0; b + a <= 7; b++) {
                t["shl_shl"].push_back(
                    bop(binop_kind::shl, bop(binop_kind::shl, X, cst(a, 3)), cst(b, 3)));
                t["shr_shr"].push_back(
                    bop(binop_kind::shr, bop(binop_kind::shr, X, cst(a, 3)), cst(b, 3)));
                t["sar_sar"].push_back(
                    bop(binop_kind::sar, bop(binop_kind::sar, X, cst(a, 3)), cst(b, 3)));
            }
        }

        for (uint64_t k = 1; k < (uint64_t(1) << w); k++)
            for (uint64_t k2 = 1; k2 < (uint64_t(1) << w); k2++)
                if (k <= k2 || k % k2 == 0) // outside this the rule must not fire
                    t["urem_urem"].push_back(bop(
                        binop_kind::urem, bop(binop_kind::urem, X, cst(k, w)), cst(k2, w)));
        if (w >= 2) {
            for (unsigned inner = 2; inner <= w; inner++)
                t["sext_of_uext"].push_back(sext(w + 1, uext(inner, x(inner - 1))));
            t["uext_of_uext"].push_back(uext(w + 2, uext(w + 1, X)));
        }

        t["eq_self"].push_back(eq(X, X));
        t["neq_self"].push_back(bop(binop_kind::neq, X, X));
        t["ugt_self"].push_back(bop(binop_kind::ugt, X, X));
        t["ult_self"].push_back(bop(binop_kind::ult, X, X));
        t["sgt_self"].push_back(bop(binop_kind::sgt, X, X));
        t["slt_self"].push_back(bop(binop_kind::slt, X, X));

        t["not_eq"].push_back(bnot(eq(X, Y)));
        t["not_neq"].push_back(bnot(bop(binop_kind::neq, X, Y)));
        t["not_ult"].push_back(bnot(bop(binop_kind::ult, X, Y)));
        t["not_ugt"].push_back(bnot(bop(binop_kind::ugt, X, Y)));
        t["not_slt"].push_back(bnot(bop(binop_kind::slt, X, Y)));
        t["not_sgt"].push_back(bnot(bop(binop_kind::sgt, X, Y)));
        t["xor_ones"].push_back(bop(binop_kind::bxor, X, ones(w)));

        t["develop_right"].push_back(add(X, ite(C(), Y, cst(0, w))));
        t["develop_left"].push_back(sub(ite(C(), X, cst(0, w)), Y));
        t["develop_both"].push_back(sub(ite(C(), X, Y), ite(C(), Y, X)));

        if (w >= 2) {
            for (unsigned yw = 1; yw < w; yw++) {
                auto hi = var("x", w - yw), lo = var("y", yw);
                for (uint64_t k = 0; k < (uint64_t(1) << w); k += (w > 4 ? 7 : 1)) {
                    t["eq_concat"].push_back(eq(cst(k, w), concat(hi, lo)));
                    t["neq_concat"].push_back(
                        bop(binop_kind::neq, concat(hi, lo), cst(k, w)));
                }
                t["or_uext_concat"].push_back(bop(
                    binop_kind::bor, uext(w, var("x", w - yw)), concat(var("y", yw), cst(0, w - yw))));
                t["shl_uext_concat"].push_back(
                    bop(binop_kind::shl, uext(w, var("x", w - yw)), cst(yw, 4)));
                t["concat_zero_uext"].push_back(concat(cst(0, yw), var("x", w - yw)));
                t["extract_concat"].push_back(extract(0, yw - 1, concat(hi, lo)));
                t["extract_concat"].push_back(extract(yw, w - 1, concat(hi, lo)));
            }
            t["extract_extract"].push_back(extract(0, 0, extract(1, w - 1, X)));
            if (w >= 3) {
                t["extract_extract"].push_back(extract(1, w - 2, extract(1, w - 1, x(w + 1))));
                t["concat_extract_adjacent"].push_back(
                    concat(extract(2, w - 1, X), extract(0, 1, X)));
            }
            for (unsigned iw = 1; iw < w; iw++) {
                auto inner = var("x", iw);
                // below, inside, and above the original bits
                if (iw >= 2)
                    t["extract_uext"].push_back(extract(0, iw - 2, uext(w, inner)));
                t["extract_uext"].push_back(extract(0, w - 1, uext(w, inner)));
                t["extract_uext"].push_back(extract(iw, w - 1, uext(w, inner)));
                if (iw >= 2)
                    t["extract_sext"].push_back(extract(1, iw - 1, sext(w, inner)));
                t["extract_sext"].push_back(extract(0, w - 1, sext(w, inner)));
                t["extract_sext"].push_back(extract(iw, w - 1, sext(w, inner)));
                if (iw + 1 < w)
                    t["extract_sext"].push_back(extract(iw, iw, sext(w, inner)));
            }
        }

        t["not_plus_one"].push_back(add(bnot(X), cst(1, w)));
        t["not_plus_one"].push_back(add(cst(1, w), bnot(X)));
        if (w >= 2) {
            uint64_t sign = uint64_t(1) << (w - 2);
            t["uext_xor_sub_sext"].push_back(
                sub(bop(binop_kind::bxor, uext(w, x(w - 1)), cst(sign, w)), cst(sign, w)));
            t["uext_xor_sub_sext"].push_back(
                add(bop(binop_kind::bxor, uext(w, x(w - 1)), cst(sign, w)),
                    cst(uint64_t(0) - sign, w)));
            t["extract_sign_bit"].push_back(extract(w - 1, w - 1, X));
            t["sext_cond"].push_back(sext(w, C()));
        }
        t["uext_cond_minus_one"].push_back(sub(uext(w + 1, C()), cst(1, w + 1)));
        t["uext_cond_minus_one"].push_back(add(uext(w + 1, C()), ones(w + 1)));
    }
    t["cmp_eq_one"].push_back(eq(C(), cst(1, 1)));
    t["cmp_neq_zero"].push_back(bop(binop_kind::neq, C(), cst(0, 1)));
    t["cmp_ugt_zero"].push_back(bop(binop_kind::ugt, C(), cst(0, 1)));
    t["not_and"].push_back(bnot(bop(binop_kind::band, C(), C2())));
    t["not_or"].push_back(bnot(bop(binop_kind::bor, C(), C2())));
    t["ite_false_true"].push_back(ite(C(), cst(0, 1), cst(1, 1)));
    t["ite_true_false"].push_back(ite(C(), cst(1, 1), cst(0, 1)));
    for (unsigned w = 1; w <= 6; w++) {
        t["ite_not_cond"].push_back(ite(bnot(C()), x(w), y(w)));
        t["ite_same"].push_back(ite(C(), x(w), x(w)));
    }
    return t;
}

} // namespace

TEST_CASE("every catalogue rule is exhaustively sound at widths 1..6") {
    instance_table t = build_instances();
    std::set<std::string> covered;
    for (auto &[name, instances] : t) {
        const rewrite_rule &r = find_rule(name);
        covered.insert(name);
        uint64_t bad = 0;
        for (auto &e : instances)
            bad += rule_mismatches(r, e);
        CHECK_MESSAGE(bad == 0, "rule ", name, " has ", bad, " mismatches");
    }
    for (const auto &r : rule_catalogue())
        CHECK_MESSAGE(covered.count(r.name), "rule ", r.name, " has no instances");
}

TEST_CASE("the swapped-branch uext(C)-1 variant is unsound") {
    rewrite_rule bad = unsound_uext_cond_minus_one();
    uint64_t mismatches = 0;
    for (unsigned w = 2; w <= 6; w++)
        mismatches += rule_mismatches(bad, sub(uext(w, C()), cst(1, w)));
    CHECK(mismatches >= 1);
}

TEST_CASE("rules are width preserving on all instances") {
    for (auto &[name, instances] : build_instances()) {
        const rewrite_rule &r = find_rule(name);
        for (auto &e : instances) {
            auto out = r.apply(e);
            REQUIRE(out);
            CHECK(out->width == e->width);
        }
    }
}

TEST_CASE("ac normalization sorts operands with constants last") {
    auto e = add(add(x(8), cst(1, 8)), var("a", 8));
    CHECK(expr_to_string(ac_normalize(e)) == "(a + x) + 1<8>");
    // idempotent
    auto n = ac_normalize(e);
    CHECK(expr_equal(ac_normalize(n), n));
}

TEST_CASE("simplify: constant folding") {
    CHECK(expr_to_string(simplify_expr(add(cst(10, 8), cst(5, 8)))) == "0xf<8>");
    CHECK(expr_to_string(simplify_expr(mul(cst(10, 8), cst(2, 8)))) == "0x14<8>");
}

TEST_CASE("simplify: spec'd identities") {
    auto X = x(8);
    CHECK(expr_equal(simplify_expr(add(X, cst(0, 8))), X));
    CHECK(expr_equal(simplify_expr(bop(binop_kind::bxor, X, X)), cst(0, 8)));
    CHECK(expr_to_string(simplify_expr(extract(7, 7, X))) == "x <s 0<8>");
    CHECK(expr_to_string(simplify_expr(sub(uext(8, C()), cst(1, 8)))) ==
          "c ? 0<8> : 0xff<8>");
    CHECK(expr_to_string(simplify_expr(concat(cst(0, 4), x(4)))) == "uext:8(x)");
    CHECK(expr_equal(simplify_expr(add(bnot(X), cst(1, 8))), neg(X)));
}

TEST_CASE("simplify: ternary development fires when an arm simplifies") {
    auto e = bop(binop_kind::bxor, x(8), ite(C(), ones(8), cst(0, 8)));
    CHECK(expr_to_string(simplify_expr(e)) == "c ? not(x) : x");
}

TEST_CASE("simplify: fruitless ternary development is reverted") {
    auto e = add(x(8), ite(C(), y(8), z(8)));
    auto s = simplify_expr(e);
    // still an addition with an intact ternary operand
    REQUIRE(s->is_binop());
    CHECK(s->as_binop().op == binop_kind::add);
    bool has_ite = s->as_binop().lhs->is_ite() || s->as_binop().rhs->is_ite();
    CHECK(has_ite);
}

TEST_CASE("simplify: branchless abs high-word pattern") {
    // edx := extract:32:63(sext:64(eax)), the cdq idiom
    auto e = extract(32, 63, sext(64, var("eax", 32)));
    CHECK(expr_to_string(simplify_expr(e)) ==
          "(eax <s 0<32>) ? 0xffffffff<32> : 0<32>");
}

TEST_CASE("simplify: branchless abs full chain") {
    auto eax = var("eax", 32);
    auto edx = ite(binop(binop_kind::slt, eax, cst(0, 32)), ones(32), cst(0, 32));
    auto x1 = bop(binop_kind::bxor, eax, edx);
    auto s1 = simplify_expr(x1);
    CHECK(expr_to_string(s1) == "(eax <s 0<32>) ? not(eax) : eax");
    auto s2 = simplify_expr(sub(s1, edx));
    CHECK(expr_to_string(s2) == "(eax <s 0<32>) ? neg(eax) : eax");
}

namespace {

struct expr_gen {
    std::mt19937 rng;
    explicit expr_gen(uint32_t seed) : rng(seed) {}

    expr_ptr gen(unsigned width, int depth) {
        if (depth <= 0 || rng() % 4 == 0) {
            switch (rng() % 3) {
            case 0: return cst(rng(), width);
            case 1: return var("v" + std::to_string(rng() % 3) + "_" + std::to_string(width),
                               width);
            default: return var("w" + std::to_string(width), width);
            }
        }
        switch (rng() % 8) {
        case 0: return bnot(gen(width, depth - 1));
        case 1: return neg(gen(width, depth - 1));
        case 2: {
            static const binop_kind ks[] = {binop_kind::add, binop_kind::sub,
                                            binop_kind::mul, binop_kind::band,
                                            binop_kind::bor, binop_kind::bxor};
            return binop(ks[rng() % 6], gen(width, depth - 1), gen(width, depth - 1));
        }
        case 3: {
            static const binop_kind ks[] = {binop_kind::shl, binop_kind::shr,
                                            binop_kind::sar};
            return binop(ks[rng() % 3], gen(width, depth - 1), cst(rng() % 9, 4));
        }
        case 4:
            if (width > 1) {
                unsigned lw = 1 + rng() % (width - 1);
                return concat(gen(width - lw, depth - 1), gen(lw, depth - 1));
            }
            [[fallthrough]];
        case 5: {
            if (width == 1) {
                static const binop_kind cmps[] = {binop_kind::eq, binop_kind::neq,
                                                  binop_kind::ugt, binop_kind::ult,
                                                  binop_kind::sgt, binop_kind::slt};
                unsigned w = 1 + rng() % 8;
                return binop(cmps[rng() % 6], gen(w, depth - 1), gen(w, depth - 1));
            }
            unsigned iw = width + rng() % 4;
            unsigned lo = rng() % (iw - width + 1);
            return extract(lo, lo + width - 1, gen(iw, depth - 1));
        }
        case 6: {
            unsigned inner = 1 + rng() % width;
            return (rng() % 2 ? uext(width, gen(inner, depth - 1))
                              : sext(width, gen(inner, depth - 1)));
        }
        default:
            return ite(gen(1, depth - 1), gen(width, depth - 1), gen(width, depth - 1));
        }
    }
};

} // namespace

TEST_CASE("simplify preserves semantics on random expressions") {
    std::mt19937_64 srng(1234);
    for (uint32_t seed = 0; seed < 300; seed++) {
        expr_gen g(seed);
        unsigned width = 1 + seed % 16;
        auto e = g.gen(width, 4);
        expr_ptr s;
        REQUIRE_NOTHROW(s = simplify_expr(e)); // termination within the cap
        REQUIRE(s->width == e->width);
        std::map<std::string, unsigned> fv;
        collect_free_vars(e, fv);
        collect_free_vars(s, fv);
        for (int trial = 0; trial < 64; trial++) {
            machine_state st;
            for (auto &[n, w] : fv)
                st.set_var(n, srng(), w);
            CHECK(eval_expr(e, st) == eval_expr(s, st));
        }
    }
}

TEST_CASE("simplify is idempotent on random expressions") {
    for (uint32_t seed = 300; seed < 360; seed++) {
        expr_gen g(seed);
        auto e = g.gen(1 + seed % 12, 3);
        auto s = simplify_expr(e);
        CHECK(expr_equal(simplify_expr(s), s));
    }
}
