#include "tina/interp.hpp"

namespace tina {

void machine_state::set_var(const std::string &name, uint64_t value, unsigned width) {
    vars[name] = {truncate(value, width), width};
}

uint64_t machine_state::get_var(const std::string &name, unsigned width) const {
    auto it = vars.find(name);
    if (it == vars.end())
        throw eval_error("unbound variable '" + name + "'");
    if (it->second.second != width)
        throw eval_error("variable '" + name + "' bound at width " +
                         std::to_string(it->second.second) + ", read at width " +
                         std::to_string(width));
    return it->second.first;
}

uint8_t machine_state::read_byte(uint32_t addr) const {
    auto it = mem.find(addr);
    if (it != mem.end())
        return it->second;
    return mem_default ? mem_default(addr) : 0;
}

void machine_state::write_byte(uint32_t addr, uint8_t value) {
    mem[addr] = value;
}

uint64_t machine_state::read_mem(uint32_t addr, unsigned nbytes) const {
    uint64_t v = 0;
    for (unsigned i = 0; i < nbytes; i++)
        v |= uint64_t(read_byte(addr + i)) << (8 * i);
    return v;
}

void machine_state::write_mem(uint32_t addr, unsigned nbytes, uint64_t value) {
    for (unsigned i = 0; i < nbytes; i++)
        write_byte(addr + i, uint8_t(value >> (8 * i)));
}

namespace {

int64_t to_signed(uint64_t v, unsigned w) {
    if (w >= 64)
        return int64_t(v);
    uint64_t sign = uint64_t(1) << (w - 1);
    return (v & sign) ? int64_t(v | ~((sign << 1) - 1)) : int64_t(v);
}

uint64_t eval_binop(binop_kind k, uint64_t l, uint64_t r, unsigned lw, unsigned rw) {
    switch (k) {
    case binop_kind::add: return truncate(l + r, lw);
    case binop_kind::sub: return truncate(l - r, lw);
    case binop_kind::mul: return truncate(l * r, lw);
    case binop_kind::udiv:
        if (r == 0)
            throw eval_error("division by zero (udiv)");
        return l / r;
    case binop_kind::urem:
        if (r == 0)
            throw eval_error("division by zero (urem)");
        return l % r;
    case binop_kind::sdiv: {
        if (r == 0)
            throw eval_error("division by zero (sdiv)");
        int64_t a = to_signed(l, lw), b = to_signed(r, rw);
        if (b == -1)
            return truncate(uint64_t(-a), lw); // avoids INT_MIN/-1 UB; wraps
        return truncate(uint64_t(a / b), lw);
    }
    case binop_kind::srem: {
        if (r == 0)
            throw eval_error("division by zero (srem)");
        int64_t a = to_signed(l, lw), b = to_signed(r, rw);
        if (b == -1)
            return 0;
        return truncate(uint64_t(a % b), lw);
    }
    case binop_kind::band: return l & r;
    case binop_kind::bor: return l | r;
    case binop_kind::bxor: return l ^ r;
    case binop_kind::shl: return r >= lw ? 0 : truncate(l << r, lw);
    case binop_kind::shr: return r >= lw ? 0 : l >> r;
    case binop_kind::sar: {
        int64_t a = to_signed(l, lw);
        unsigned amount = r >= lw ? lw - 1 : unsigned(r);
        return truncate(uint64_t(a >> amount), lw);
    }
    case binop_kind::eq: return l == r;
    case binop_kind::neq: return l != r;
    case binop_kind::ugt: return l > r;
    case binop_kind::ult: return l < r;
    case binop_kind::sgt: return to_signed(l, lw) > to_signed(r, rw);
    case binop_kind::slt: return to_signed(l, lw) < to_signed(r, rw);
    case binop_kind::concat: return (l << rw) | r;
    }
    throw eval_error("unknown binop");
}

} // namespace

uint64_t eval_expr(const expr_ptr &e, const machine_state &s) {
    if (e->is_cst())
        return e->as_cst().value;
    if (e->is_var())
        return s.get_var(e->as_var().name, e->width);
    if (e->is_load()) {
        const auto &l = e->as_load();
        uint32_t addr = uint32_t(eval_expr(l.addr, s));
        return s.read_mem(addr, l.nbytes);
    }
    if (e->is_unop()) {
        const auto &u = e->as_unop();
        uint64_t a = eval_expr(u.arg, s);
        switch (u.op) {
        case unop_kind::bnot: return truncate(~a, e->width);
        case unop_kind::neg: return truncate(uint64_t(0) - a, e->width);
        case unop_kind::uext: return a;
        case unop_kind::sext: return truncate(uint64_t(to_signed(a, u.arg->width)), e->width);
        case unop_kind::extract: return truncate(a >> u.lo, e->width);
        }
    }
    if (e->is_binop()) {
        const auto &b = e->as_binop();
        return eval_binop(b.op, eval_expr(b.lhs, s), eval_expr(b.rhs, s), b.lhs->width,
                          b.rhs->width);
    }
    const auto &t = e->as_ite();
    return eval_expr(t.cond, s) ? eval_expr(t.then_e, s) : eval_expr(t.else_e, s);
}

interp_result interpret(const program &p, machine_state init, uint64_t fuel) {
    interp_result res;
    machine_state s = std::move(init);
    const basic_block *bb = p.find_block(p.entry);
    if (!bb)
        throw eval_error("entry block '" + p.entry + "' not found");
    uint64_t steps = 0;
    while (true) {
        for (const auto &i : bb->body) {
            if (steps++ >= fuel) {
                res.steps = steps;
                return res;
            }
            if (const auto *a = std::get_if<assign_instr>(&i)) {
                s.set_var(a->lhs, eval_expr(a->rhs, s), a->width);
            } else {
                const auto &st = std::get<store_instr>(i);
                uint32_t addr = uint32_t(eval_expr(st.addr, s));
                s.write_mem(addr, st.nbytes, eval_expr(st.value, s));
            }
        }
        if (steps++ >= fuel) {
            res.steps = steps;
            return res;
        }
        if (std::holds_alternative<halt_term>(bb->term))
            break;
        std::string next;
        if (const auto *g = std::get_if<goto_term>(&bb->term)) {
            next = g->target;
        } else {
            const auto &br = std::get<branch_term>(bb->term);
            next = eval_expr(br.cond, s) ? br.then_target : br.else_target;
        }
        bb = p.find_block(next);
        if (!bb)
            throw eval_error("jump to unknown block '" + next + "'");
    }
    res.state = std::move(s);
    res.steps = steps;
    return res;
}

} // namespace tina
