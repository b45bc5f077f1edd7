#include "tina/expr.hpp"

#include <algorithm>
#include <sstream>

namespace tina {

bool is_commutative(binop_kind k) {
    switch (k) {
    case binop_kind::add:
    case binop_kind::mul:
    case binop_kind::band:
    case binop_kind::bor:
    case binop_kind::bxor:
    case binop_kind::eq:
    case binop_kind::neq:
        return true;
    default:
        return false;
    }
}

bool is_comparison(binop_kind k) {
    switch (k) {
    case binop_kind::eq:
    case binop_kind::neq:
    case binop_kind::ugt:
    case binop_kind::ult:
    case binop_kind::sgt:
    case binop_kind::slt:
        return true;
    default:
        return false;
    }
}

const char *binop_spelling(binop_kind k) {
    switch (k) {
    case binop_kind::add: return "+";
    case binop_kind::sub: return "-";
    case binop_kind::mul: return "*";
    case binop_kind::udiv: return "udiv";
    case binop_kind::urem: return "urem";
    case binop_kind::sdiv: return "sdiv";
    case binop_kind::srem: return "srem";
    case binop_kind::band: return "&";
    case binop_kind::bor: return "|";
    case binop_kind::bxor: return "^";
    case binop_kind::shl: return "shl";
    case binop_kind::shr: return "shr";
    case binop_kind::sar: return "sar";
    case binop_kind::eq: return "=";
    case binop_kind::neq: return "!=";
    case binop_kind::ugt: return ">u";
    case binop_kind::ult: return "<u";
    case binop_kind::sgt: return ">s";
    case binop_kind::slt: return "<s";
    case binop_kind::concat: return "::";
    }
    return "?";
}

uint64_t truncate(uint64_t v, unsigned width) {
    if (width >= 64)
        return v;
    return v & ((uint64_t(1) << width) - 1);
}

static void check_width(unsigned w, const char *what) {
    if (w < 1 || w > 64)
        throw ir_error(std::string(what) + ": width must be in [1, 64], got " +
                       std::to_string(w));
}

expr_ptr cst(uint64_t value, unsigned width) {
    check_width(width, "const");
    auto e = std::make_shared<expr>();
    e->node = expr::cst_node{truncate(value, width)};
    e->width = width;
    return e;
}

expr_ptr var(const std::string &name, unsigned width) {
    check_width(width, "var");
    if (name.empty())
        throw ir_error("var: empty name");
    auto e = std::make_shared<expr>();
    e->node = expr::var_node{name};
    e->width = width;
    return e;
}

expr_ptr load(expr_ptr addr, unsigned nbytes) {
    if (!addr)
        throw ir_error("load: null address");
    if (nbytes < 1 || nbytes > 8)
        throw ir_error("load: nbytes must be in [1, 8]");
    auto e = std::make_shared<expr>();
    e->width = nbytes * 8;
    e->node = expr::load_node{std::move(addr), nbytes};
    return e;
}

static expr_ptr make_unop(unop_kind k, unsigned n, unsigned lo, unsigned hi, expr_ptr a) {
    auto e = std::make_shared<expr>();
    switch (k) {
    case unop_kind::bnot:
    case unop_kind::neg:
        e->width = a->width;
        break;
    case unop_kind::uext:
    case unop_kind::sext:
        if (n < a->width)
            throw ir_error("ext: target width " + std::to_string(n) +
                           " smaller than operand width " + std::to_string(a->width));
        check_width(n, "ext");
        e->width = n;
        break;
    case unop_kind::extract:
        if (lo > hi || hi >= a->width)
            throw ir_error("extract: bad range " + std::to_string(lo) + ".." +
                           std::to_string(hi) + " on width " + std::to_string(a->width));
        e->width = hi - lo + 1;
        break;
    }
    e->node = expr::unop_node{k, n, lo, hi, std::move(a)};
    return e;
}

expr_ptr bnot(expr_ptr e) { return make_unop(unop_kind::bnot, 0, 0, 0, std::move(e)); }
expr_ptr neg(expr_ptr e) { return make_unop(unop_kind::neg, 0, 0, 0, std::move(e)); }
expr_ptr uext(unsigned n, expr_ptr e) { return make_unop(unop_kind::uext, n, 0, 0, std::move(e)); }
expr_ptr sext(unsigned n, expr_ptr e) { return make_unop(unop_kind::sext, n, 0, 0, std::move(e)); }
expr_ptr extract(unsigned lo, unsigned hi, expr_ptr e) {
    return make_unop(unop_kind::extract, 0, lo, hi, std::move(e));
}

expr_ptr binop(binop_kind k, expr_ptr l, expr_ptr r) {
    if (!l || !r)
        throw ir_error("binop: null operand");
    auto e = std::make_shared<expr>();
    if (k == binop_kind::concat) {
        if (l->width + r->width > 64)
            throw ir_error("concat: result width exceeds 64");
        e->width = l->width + r->width;
    } else if (k == binop_kind::shl || k == binop_kind::shr || k == binop_kind::sar) {
        e->width = l->width;
    } else {
        if (l->width != r->width)
            throw ir_error(std::string("binop ") + binop_spelling(k) +
                           ": width mismatch " + std::to_string(l->width) + " vs " +
                           std::to_string(r->width));
        e->width = is_comparison(k) ? 1 : l->width;
    }
    e->node = expr::binop_node{k, std::move(l), std::move(r)};
    return e;
}

expr_ptr ite(expr_ptr c, expr_ptr t, expr_ptr f) {
    if (!c || !t || !f)
        throw ir_error("ite: null operand");
    if (c->width != 1)
        throw ir_error("ite: condition width must be 1, got " + std::to_string(c->width));
    if (t->width != f->width)
        throw ir_error("ite: branch width mismatch");
    auto e = std::make_shared<expr>();
    e->width = t->width;
    e->node = expr::ite_node{std::move(c), std::move(t), std::move(f)};
    return e;
}

static int node_rank(const expr &e) {
    return static_cast<int>(e.node.index());
}

int expr_compare(const expr_ptr &a, const expr_ptr &b) {
    if (a.get() == b.get())
        return 0;
    if (int d = node_rank(*a) - node_rank(*b))
        return d < 0 ? -1 : 1;
    if (a->width != b->width)
        return a->width < b->width ? -1 : 1;
    if (a->is_cst()) {
        uint64_t x = a->as_cst().value, y = b->as_cst().value;
        return x == y ? 0 : (x < y ? -1 : 1);
    }
    if (a->is_var())
        return a->as_var().name.compare(b->as_var().name);
    if (a->is_load()) {
        const auto &x = a->as_load(), &y = b->as_load();
        if (x.nbytes != y.nbytes)
            return x.nbytes < y.nbytes ? -1 : 1;
        return expr_compare(x.addr, y.addr);
    }
    if (a->is_unop()) {
        const auto &x = a->as_unop(), &y = b->as_unop();
        if (x.op != y.op)
            return x.op < y.op ? -1 : 1;
        if (x.n != y.n)
            return x.n < y.n ? -1 : 1;
        if (x.lo != y.lo)
            return x.lo < y.lo ? -1 : 1;
        if (x.hi != y.hi)
            return x.hi < y.hi ? -1 : 1;
        return expr_compare(x.arg, y.arg);
    }
    if (a->is_binop()) {
        const auto &x = a->as_binop(), &y = b->as_binop();
        if (x.op != y.op)
            return x.op < y.op ? -1 : 1;
        if (int d = expr_compare(x.lhs, y.lhs))
            return d;
        return expr_compare(x.rhs, y.rhs);
    }
    const auto &x = a->as_ite(), &y = b->as_ite();
    if (int d = expr_compare(x.cond, y.cond))
        return d;
    if (int d = expr_compare(x.then_e, y.then_e))
        return d;
    return expr_compare(x.else_e, y.else_e);
}

bool expr_equal(const expr_ptr &a, const expr_ptr &b) {
    return expr_compare(a, b) == 0;
}

namespace {

// Printing: children are always parenthesized unless atomic, which keeps the
// printer/parser round trip trivially unambiguous.
void print_rec(std::ostream &os, const expr_ptr &e, bool atom_ctx) {
    if (e->is_cst()) {
        const auto &c = e->as_cst();
        if (c.value > 9)
            os << "0x" << std::hex << c.value << std::dec;
        else
            os << c.value;
        os << "<" << e->width << ">";
        return;
    }
    if (e->is_var()) {
        os << e->as_var().name;
        return;
    }
    if (e->is_load()) {
        const auto &l = e->as_load();
        os << "@[";
        print_rec(os, l.addr, false);
        os << "]" << l.nbytes;
        return;
    }
    if (e->is_unop()) {
        const auto &u = e->as_unop();
        switch (u.op) {
        case unop_kind::bnot: os << "not"; break;
        case unop_kind::neg: os << "neg"; break;
        case unop_kind::uext: os << "uext:" << u.n; break;
        case unop_kind::sext: os << "sext:" << u.n; break;
        case unop_kind::extract: os << "extract:" << u.lo << ":" << u.hi; break;
        }
        os << "(";
        print_rec(os, u.arg, false);
        os << ")";
        return;
    }
    bool paren = !atom_ctx;
    if (paren)
        os << "(";
    if (e->is_binop()) {
        const auto &b = e->as_binop();
        print_rec(os, b.lhs, false);
        os << " " << binop_spelling(b.op) << " ";
        print_rec(os, b.rhs, false);
    } else {
        const auto &t = e->as_ite();
        print_rec(os, t.cond, false);
        os << " ? ";
        print_rec(os, t.then_e, false);
        os << " : ";
        print_rec(os, t.else_e, false);
    }
    if (paren)
        os << ")";
}

} // namespace

std::string expr_to_string(const expr_ptr &e) {
    std::ostringstream os;
    print_rec(os, e, true);
    return os.str();
}

void collect_free_vars(const expr_ptr &e, std::map<std::string, unsigned> &out) {
    if (e->is_var()) {
        out.emplace(e->as_var().name, e->width);
    } else if (e->is_load()) {
        collect_free_vars(e->as_load().addr, out);
    } else if (e->is_unop()) {
        collect_free_vars(e->as_unop().arg, out);
    } else if (e->is_binop()) {
        collect_free_vars(e->as_binop().lhs, out);
        collect_free_vars(e->as_binop().rhs, out);
    } else if (e->is_ite()) {
        collect_free_vars(e->as_ite().cond, out);
        collect_free_vars(e->as_ite().then_e, out);
        collect_free_vars(e->as_ite().else_e, out);
    }
}

std::set<std::string> free_vars(const expr_ptr &e) {
    std::map<std::string, unsigned> m;
    collect_free_vars(e, m);
    std::set<std::string> s;
    for (auto &[k, _] : m)
        s.insert(k);
    return s;
}

bool mentions_var(const expr_ptr &e, const std::string &name) {
    if (e->is_var())
        return e->as_var().name == name;
    if (e->is_load())
        return mentions_var(e->as_load().addr, name);
    if (e->is_unop())
        return mentions_var(e->as_unop().arg, name);
    if (e->is_binop())
        return mentions_var(e->as_binop().lhs, name) || mentions_var(e->as_binop().rhs, name);
    if (e->is_ite())
        return mentions_var(e->as_ite().cond, name) || mentions_var(e->as_ite().then_e, name) ||
               mentions_var(e->as_ite().else_e, name);
    return false;
}

bool mentions_load(const expr_ptr &e) {
    if (e->is_load())
        return true;
    if (e->is_unop())
        return mentions_load(e->as_unop().arg);
    if (e->is_binop())
        return mentions_load(e->as_binop().lhs) || mentions_load(e->as_binop().rhs);
    if (e->is_ite())
        return mentions_load(e->as_ite().cond) || mentions_load(e->as_ite().then_e) ||
               mentions_load(e->as_ite().else_e);
    return false;
}

expr_ptr subst(const expr_ptr &e, const std::map<std::string, expr_ptr> &env) {
    if (env.empty())
        return e;
    if (e->is_cst())
        return e;
    if (e->is_var()) {
        auto it = env.find(e->as_var().name);
        if (it == env.end())
            return e;
        if (it->second->width != e->width)
            throw ir_error("subst: width mismatch for " + e->as_var().name);
        return it->second;
    }
    if (e->is_load()) {
        const auto &l = e->as_load();
        auto a = subst(l.addr, env);
        return a == l.addr ? e : load(a, l.nbytes);
    }
    if (e->is_unop()) {
        const auto &u = e->as_unop();
        auto a = subst(u.arg, env);
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
        auto l = subst(b.lhs, env), r = subst(b.rhs, env);
        return (l == b.lhs && r == b.rhs) ? e : binop(b.op, l, r);
    }
    const auto &t = e->as_ite();
    auto c = subst(t.cond, env), a = subst(t.then_e, env), f = subst(t.else_e, env);
    return (c == t.cond && a == t.then_e && f == t.else_e) ? e : ite(c, a, f);
}

size_t expr_size(const expr_ptr &e) {
    size_t n = 1;
    if (e->is_load())
        n += expr_size(e->as_load().addr);
    else if (e->is_unop())
        n += expr_size(e->as_unop().arg);
    else if (e->is_binop())
        n += expr_size(e->as_binop().lhs) + expr_size(e->as_binop().rhs);
    else if (e->is_ite())
        n += expr_size(e->as_ite().cond) + expr_size(e->as_ite().then_e) +
             expr_size(e->as_ite().else_e);
    return n;
}

} // namespace tina
