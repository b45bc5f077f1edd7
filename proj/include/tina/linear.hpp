#ifndef TINA_LINEAR_HPP
#define TINA_LINEAR_HPP

#include "tina/expr.hpp"

#include <optional>

namespace tina {

/// Linear view of an expression: sum of coef*var + const (mod 2^width),
/// or not linear.
struct linear_form {
    bool ok = true;
    std::map<std::string, uint64_t> coef;
    uint64_t c = 0;
};

/// Decomposes add/sub/neg/const-mul combinations; anything else is not ok.
linear_form linearize(const expr_ptr &e);

/// a - b when it is a compile-time constant, through the linear view.
std::optional<uint64_t> const_difference(const expr_ptr &a, const expr_ptr &b);

} // namespace tina

#endif
