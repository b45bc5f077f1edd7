#include "tina/linear.hpp"

namespace tina {

linear_form linearize(const expr_ptr &e) {
    unsigned w = e->width;
    if (e->is_cst()) return {true, {}, e->as_cst().value};
    if (e->is_var()) return {true, {{e->as_var().name, 1}}, 0};
    if (e->is_unop() && e->as_unop().op == unop_kind::neg) {
        linear_form a = linearize(e->as_unop().arg);
        if (!a.ok) return {false, {}, 0};
        for (auto &[v, k] : a.coef) k = truncate(-k, w);
        a.c = truncate(-a.c, w);
        return a;
    }
    if (e->is_binop()) {
        const auto &b = e->as_binop();
        if (b.op == binop_kind::add || b.op == binop_kind::sub) {
            linear_form l = linearize(b.lhs), r = linearize(b.rhs);
            if (!l.ok || !r.ok) return {false, {}, 0};
            bool sub_op = b.op == binop_kind::sub;
            for (const auto &[v, k] : r.coef)
                l.coef[v] = truncate(l.coef[v] + (sub_op ? -k : k), w);
            l.c = truncate(l.c + (sub_op ? -r.c : r.c), w);
            return l;
        }
        if (b.op == binop_kind::mul && (b.lhs->is_cst() || b.rhs->is_cst())) {
            uint64_t k = (b.lhs->is_cst() ? b.lhs : b.rhs)->as_cst().value;
            linear_form a = linearize(b.lhs->is_cst() ? b.rhs : b.lhs);
            if (!a.ok) return {false, {}, 0};
            for (auto &[v, kk] : a.coef) kk = truncate(kk * k, w);
            a.c = truncate(a.c * k, w);
            return a;
        }
        if (b.op == binop_kind::shl && b.rhs->is_cst() &&
            b.rhs->as_cst().value < w) {
            linear_form a = linearize(b.lhs);
            if (!a.ok) return {false, {}, 0};
            uint64_t k = uint64_t{1} << b.rhs->as_cst().value;
            for (auto &[v, kk] : a.coef) kk = truncate(kk * k, w);
            a.c = truncate(a.c * k, w);
            return a;
        }
    }
    return {false, {}, 0};
}

std::optional<uint64_t> const_difference(const expr_ptr &a,
                                         const expr_ptr &b) {
    if (a->width != b->width) return std::nullopt;
    linear_form la = linearize(a), lb = linearize(b);
    if (!la.ok || !lb.ok) return std::nullopt;
    for (const auto &[v, k] : lb.coef)
        la.coef[v] = truncate(la.coef[v] - k, a->width);
    for (const auto &[v, k] : la.coef)
        if (k != 0) return std::nullopt;
    return truncate(la.c - lb.c, a->width);
}

} // namespace tina
