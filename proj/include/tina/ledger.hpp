#ifndef TINA_LEDGER_HPP
#define TINA_LEDGER_HPP

#include "tina/expr.hpp"

namespace tina {

enum class ledger_kind { const_binding, alias, affine_relation };

const char *ledger_kind_name(ledger_kind k);

/// One fact removed from the code but still required for its meaning: a
/// variable that held a constant for the whole chunk, an alias, or an affine
/// relation discovered by loop normalization. Validation consumes these as
/// input restrictions; emission re-binds eliminated outputs from them.
/// A nonempty scope limits the fact to the entry of the listed blocks;
/// an empty scope means it holds everywhere.
struct ledger_entry {
    ledger_kind kind;
    std::string var;
    expr_ptr value;
    std::string pass; // which pass recorded the fact
    std::set<std::string> scope;
};

struct assumption_ledger {
    std::vector<ledger_entry> entries;

    void record(ledger_kind k, const std::string &var, expr_ptr value,
                const std::string &pass, std::set<std::string> scope = {});
    const ledger_entry *find(const std::string &var) const;

    /// One JSON object per line: {kind, var, width, value, vars, pass}.
    std::string to_json_lines() const;
    static assumption_ledger from_json_lines(const std::string &text);
};

} // namespace tina

#endif
