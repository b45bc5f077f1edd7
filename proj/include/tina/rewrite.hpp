#ifndef TINA_REWRITE_HPP
#define TINA_REWRITE_HPP

#include "tina/expr.hpp"

#include <functional>

namespace tina {

enum class rule_category {
    normalization,
    constant_folding,
    neutral,
    idempotence,
    absorbing,
    inverse,
    involutivity,
    shifts,
    remainder_extension,
    condition,
    de_morgan,
    ternary,
    split,
    concat_abstraction,
    extraction,
    twos_complement,
};

const char *category_name(rule_category c);

/// A single width-preserving, semantics-preserving rewrite. `apply` matches at
/// the root only and returns nullptr when the rule does not fire.
struct rewrite_rule {
    std::string name;
    rule_category category;
    std::function<expr_ptr(const expr_ptr &)> apply;
};

/// The full rule catalogue; order is the application order of the driver.
const std::vector<rewrite_rule> &rule_catalogue();

/// Looks a rule up by name; throws ir_error if absent.
const rewrite_rule &find_rule(const std::string &name);

/// The swapped-branch variant of uext_n(C) - 1. It is *not* in the catalogue:
/// it is wrong, and kept only so the soundness harness can demonstrate that.
rewrite_rule unsound_uext_cond_minus_one();

/// Flattens and reorders associative-commutative operators (operands sorted,
/// constants folded together and placed last) and canonicalizes subtraction of
/// a constant into addition. Recursive and idempotent.
expr_ptr ac_normalize(const expr_ptr &e);

/// Applies `r` once at the innermost matching position; nullptr if no match.
expr_ptr apply_rule_once(const rewrite_rule &r, const expr_ptr &e);

/// Innermost-first fixpoint of the catalogue over an AC-normalized term.
/// Ternary development is gated: it is kept only when a developed arm
/// actually simplifies. Throws ir_error if the iteration cap is hit.
expr_ptr simplify_expr(const expr_ptr &e);

} // namespace tina

#endif
