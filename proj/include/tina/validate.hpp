#ifndef TINA_VALIDATE_HPP
#define TINA_VALIDATE_HPP

#include "tina/decoder.hpp"
#include "tina/ledger.hpp"
#include "tina/passes.hpp"

#include <optional>
#include <variant>

namespace tina {

// ---- S1: control-flow isomorphism -----------------------------------------

/// Bijection between original and lifted blocks, consistent with edge tags.
struct block_pairing {
    std::vector<std::pair<std::string, std::string>> pairs;
    bool edge_consistent = true;
};

struct iso_mismatch {
    std::string details;
};

using iso_result = std::variant<block_pairing, iso_mismatch>;

/// Extends the anchor seed by simultaneous BFS over tagged edges; succeeds
/// iff the extension is a bijection of the reachable blocks with matching
/// tags. The usual anchor is (entry, entry).
iso_result check_isomorphism(
    const cfg &g1, const cfg &g2,
    const std::vector<std::pair<std::string, std::string>> &anchors);

/// Independent re-walk of both graphs under a claimed pairing.
bool recheck_pairing(const cfg &g1, const cfg &g2, const block_pairing &bp);

// ---- S2: per-block equivalence queries ------------------------------------

struct ssa_equation {
    std::string lhs;
    unsigned width;
    expr_ptr rhs;
};

/// Little-endian read of `nbytes` from memory version `mem`, bound to `lhs`.
struct ssa_load {
    std::string lhs;
    std::string mem;
    expr_ptr addr;
    unsigned nbytes;
};

/// `mem_out` = `mem_in` with `nbytes` of `value` stored at `addr`.
struct ssa_store {
    std::string mem_out, mem_in;
    expr_ptr addr;
    unsigned nbytes;
    expr_ptr value;
};

using ssa_event = std::variant<ssa_equation, ssa_load, ssa_store>;

/// "If inputs are identical, can outputs be different?" for one block pair.
/// Inputs shared between the two sides keep one symbol `<var>_0`; ledger
/// facts become input restrictions defining the eliminated side's symbols.
struct equiv_query {
    std::string chunk_name = "chunk";
    std::string orig_block, lifted_block;
    std::map<std::string, unsigned> inputs; // every `_0` symbol, with width
    std::vector<ssa_equation> restrictions; // evaluated in order
    std::vector<ssa_event> events;          // SSA definitions in order
    std::vector<std::pair<expr_ptr, expr_ptr>> goals; // orig vs lifted value
    std::string o_mem = "mem_0", l_mem = "mem_0";     // final memory names
    bool compare_memory = false;
    std::vector<std::string> notes; // e.g. interface-output mismatch
};

equiv_query build_query(const basic_block &orig_bb,
                        const basic_block &lifted_bb,
                        const assumption_ledger &ledger,
                        const std::map<std::string, unsigned> &orig_vars,
                        const std::map<std::string, unsigned> &lifted_vars,
                        const std::set<std::string> &observables,
                        const std::string &chunk_name = "chunk",
                        const std::set<std::string> *live_after = nullptr);

/// Live-in variable sets per block (backward fixpoint).
std::map<std::string, std::set<std::string>> live_in_sets(const program &p);

/// QF_ABV script: byte-array memory, explicit store chains, one assert per
/// equation, the goal asserted, (check-sat) last. unsat means equivalent.
std::string to_smtlib(const equiv_query &q);

/// Writes to_smtlib(q) to dir/"<chunk>.<origblock>.smt2"; returns the path.
std::string write_smtlib(const equiv_query &q, const std::string &dir);

// ---- oracles ---------------------------------------------------------------

struct counterexample {
    std::map<std::string, uint64_t> inputs; // free `_0` symbols only
    std::string detail;                     // which goal differed
};

struct brute_result {
    bool equivalent = false;
    std::optional<counterexample> cex;
    uint64_t cases = 0;
    bool exhaustive = true;
};

/// Full-width evaluation over sign-embedded input domains: each free input
/// ranges over embed_pattern(p, b, width) with per-input bits b shrunk
/// evenly until the product of domains fits 2^bit_cap, then exhaustive.
/// A counterexample is a genuine full-width state; a pass is evidence.
brute_result brute_check(const equiv_query &q, unsigned width_budget = 8,
                         unsigned bit_cap = 18);

/// Re-evaluates the query at a recorded state; true iff some goal differs.
bool replay_counterexample(const equiv_query &q, const counterexample &cex);

struct fuzz_result {
    bool passed = false;
    uint64_t iterations = 0;
    uint64_t seed = 0;
    uint64_t out_of_fuel = 0;
    bool vacuous = false; // zero-iteration run
    std::optional<counterexample> cex; // program input state
};

/// Random whole-program runs of both sides from shared inputs; ledger facts
/// seed the inputs only the original still reads. Out-of-fuel runs are
/// counted separately, never as failures.
fuzz_result fuzz_fallback(const program &orig, const program &lifted,
                          const assumption_ledger &ledger,
                          const std::set<std::string> &observables,
                          uint64_t iters, uint64_t seed,
                          uint64_t fuel = uint64_t(1) << 16);

/// Interprets both programs from the counterexample's input state; true iff
/// an observable output or memory differs (the replay obligation).
bool replay_program_counterexample(const program &orig, const program &lifted,
                                   const assumption_ledger &ledger,
                                   const std::set<std::string> &observables,
                                   const counterexample &cex);

// ---- aggregation ------------------------------------------------------------

enum class backend_kind { brute, smtlib_export, fuzz_only };

struct validate_options {
    backend_kind backend = backend_kind::brute;
    std::string solver_cmd;   // empty: no external solver
    unsigned timeout_ms = 10000;
    std::string export_dir = "."; // smtlib files land here
    uint64_t fuzz_iters = 2000;
    uint64_t seed = 1;
    std::string chunk_name = "chunk";
};

struct block_verdict {
    std::string orig_id, lifted_id;
    std::string status; // Equivalent | NotEquivalent | Unknown | exported-only
    double time_ms = 0;
    std::optional<counterexample> cex;
};

struct validation_report {
    std::string chunk;
    bool s1_ok = false;
    std::string s1_details;
    std::vector<block_verdict> blocks;
    std::optional<fuzz_result> fallback;
    std::string overall; // Equivalent | NotEquivalent | FuzzPassed | FuzzFailed
                         // | exported-only
    std::vector<std::string> diagnostics;

    std::string to_json() const;
};

/// S1 then S2 over all pairs; S1 failure or any sat block falls back to
/// fuzzing. smtlib-export without a solver degrades to the brute oracle
/// with a diagnostic, leaving the scripts behind.
validation_report validate(const decoded_chunk &orig,
                           const pipeline_result &lifted,
                           const validate_options &opt = {});

/// Runs `cmd file` under a timeout; returns sat | unsat | unknown | error.
std::string run_solver(const std::string &cmd, const std::string &file,
                       unsigned timeout_ms);

} // namespace tina

#endif
