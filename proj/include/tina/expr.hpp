#ifndef TINA_EXPR_HPP
#define TINA_EXPR_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tina {

struct ir_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class unop_kind { bnot, neg, uext, sext, extract };

enum class binop_kind {
    add, sub, mul, udiv, urem, sdiv, srem,
    band, bor, bxor, shl, shr, sar,
    eq, neq, ugt, ult, sgt, slt,
    concat
};

bool is_commutative(binop_kind k);
bool is_comparison(binop_kind k);
const char *binop_spelling(binop_kind k);

struct expr;
using expr_ptr = std::shared_ptr<const expr>;

/// Bitvector expression tree. Nodes are immutable; widths are computed and
/// checked at construction (max width 64 bits).
struct expr {
    struct cst_node {
        uint64_t value; // reduced mod 2^width
    };
    struct var_node {
        std::string name;
    };
    struct load_node {
        expr_ptr addr;
        unsigned nbytes;
    };
    struct unop_node {
        unop_kind op;
        unsigned n = 0;  // uext/sext target width
        unsigned lo = 0; // extract bounds, inclusive
        unsigned hi = 0;
        expr_ptr arg;
    };
    struct binop_node {
        binop_kind op;
        expr_ptr lhs, rhs;
    };
    struct ite_node {
        expr_ptr cond, then_e, else_e;
    };

    std::variant<cst_node, var_node, load_node, unop_node, binop_node, ite_node> node;
    unsigned width;

    bool is_cst() const { return std::holds_alternative<cst_node>(node); }
    bool is_var() const { return std::holds_alternative<var_node>(node); }
    bool is_load() const { return std::holds_alternative<load_node>(node); }
    bool is_unop() const { return std::holds_alternative<unop_node>(node); }
    bool is_binop() const { return std::holds_alternative<binop_node>(node); }
    bool is_ite() const { return std::holds_alternative<ite_node>(node); }

    const cst_node &as_cst() const { return std::get<cst_node>(node); }
    const var_node &as_var() const { return std::get<var_node>(node); }
    const load_node &as_load() const { return std::get<load_node>(node); }
    const unop_node &as_unop() const { return std::get<unop_node>(node); }
    const binop_node &as_binop() const { return std::get<binop_node>(node); }
    const ite_node &as_ite() const { return std::get<ite_node>(node); }
};

uint64_t truncate(uint64_t v, unsigned width);

// Node constructors. All throw ir_error on width violations.
expr_ptr cst(uint64_t value, unsigned width);
expr_ptr var(const std::string &name, unsigned width);
expr_ptr load(expr_ptr addr, unsigned nbytes);
expr_ptr bnot(expr_ptr e);
expr_ptr neg(expr_ptr e);
expr_ptr uext(unsigned n, expr_ptr e);
expr_ptr sext(unsigned n, expr_ptr e);
expr_ptr extract(unsigned lo, unsigned hi, expr_ptr e);
expr_ptr binop(binop_kind k, expr_ptr l, expr_ptr r);
expr_ptr ite(expr_ptr c, expr_ptr t, expr_ptr e);

inline expr_ptr add(expr_ptr l, expr_ptr r) { return binop(binop_kind::add, l, r); }
inline expr_ptr sub(expr_ptr l, expr_ptr r) { return binop(binop_kind::sub, l, r); }
inline expr_ptr mul(expr_ptr l, expr_ptr r) { return binop(binop_kind::mul, l, r); }
inline expr_ptr concat(expr_ptr hi, expr_ptr lo) { return binop(binop_kind::concat, hi, lo); }
inline expr_ptr eq(expr_ptr l, expr_ptr r) { return binop(binop_kind::eq, l, r); }

bool expr_equal(const expr_ptr &a, const expr_ptr &b);

/// Total structural order; used for deterministic AC normalization.
int expr_compare(const expr_ptr &a, const expr_ptr &b);

std::string expr_to_string(const expr_ptr &e);

void collect_free_vars(const expr_ptr &e, std::map<std::string, unsigned> &out);
std::set<std::string> free_vars(const expr_ptr &e);
bool mentions_var(const expr_ptr &e, const std::string &name);
bool mentions_load(const expr_ptr &e);

/// Capture-free substitution of variables by expressions (widths must match).
expr_ptr subst(const expr_ptr &e, const std::map<std::string, expr_ptr> &env);

size_t expr_size(const expr_ptr &e);

} // namespace tina

#endif
