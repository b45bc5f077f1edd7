#ifndef TINA_PROPAGATE_HPP
#define TINA_PROPAGATE_HPP

#include "tina/ledger.hpp"
#include "tina/program.hpp"

#include <optional>
#include <set>

namespace tina {

struct propagate_options {
    /// Variables whose exit values must be preserved by dead-code
    /// elimination. Unset means every variable is observable.
    std::optional<std::set<std::string>> observables;
    /// When non-empty, per-phase IR snapshots are written here.
    std::string dump_dir;
};

struct propagate_result {
    program prog;
    assumption_ledger ledger;
    bool irreducible = false;
    std::string diagnostic;
};

/// True when the CFG collapses to a single node under T1/T2 reductions.
bool is_reducible(const program &p);

/// Liveness-based cleanup w.r.t. the given observable exit variables, plus
/// unreachable-block removal.
program remove_dead_code(const program &p,
                         const std::set<std::string> &observables);

/// Eager expression propagation with a-posteriori revert, simplification,
/// dead-branch elimination, whole-chunk-constant extraction into the ledger,
/// and liveness-based cleanup. Irreducible CFGs are returned untouched with
/// `irreducible` set.
propagate_result propagate_and_simplify(const program &p,
                                        const propagate_options &opts = {});

} // namespace tina

#endif
