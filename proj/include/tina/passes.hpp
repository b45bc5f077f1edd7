#ifndef TINA_PASSES_HPP
#define TINA_PASSES_HPP

#include "tina/decoder.hpp"
#include "tina/ledger.hpp"
#include "tina/program.hpp"

#include <functional>

namespace tina {

/// Program plus the C-level types recovered for its variables. Types are
/// tracked per variable (not per program point): decoded chunks never
/// re-type a variable, so the finer map of the general design collapses.
struct typed_program {
    program prog;
    std::map<std::string, ctype> types;
    /// Interface output variables that must survive every pass (register
    /// outputs; memory is implicitly observable).
    std::set<std::string> observables;
    std::vector<std::string> diagnostics;
};

/// Forward type dataflow from the interface operands into the IR.
typed_program propagate_types(const chunk_spec &spec,
                              const decoded_chunk &chunk);

/// Decides whether two width-1 expressions over shared variables are
/// equivalent. Returning true accepts a predicate candidate.
using equiv_backend =
    std::function<bool(const expr_ptr &, const expr_ptr &)>;

/// Sign extension of a `from`-bit value into `to` bits, as a plain value.
uint64_t sext_value(uint64_t v, unsigned from, unsigned to);

/// Spread an enumerated small pattern across a wide domain: the pattern's
/// top bit becomes the value's sign bit, the rest sign-embeds into the low
/// bits. Covers the neighbourhoods of 0, -1, INT_MIN and INT_MAX.
uint64_t embed_pattern(uint64_t pattern, unsigned bits, unsigned width);

/// Exhaustive sign-embedded 8-bit enumeration (random sampling above the
/// enumeration budget). Evidence-grade, per the brute backend caveats.
equiv_backend brute_equiv_backend(unsigned sample_budget = 4096);

/// O1: replace flag-built branch conditions with arithmetic comparisons
/// proven equivalent by the backend; dead flag definitions are cleaned up.
typed_program recover_predicates(
    const typed_program &t, const equiv_backend &backend = brute_equiv_backend());

/// O2: split packed register assignments into all power-of-two byte
/// granularities, rewrite matching extracts, drop unused fragments.
typed_program unpack_registers(const typed_program &t);

/// O4 (final step): merge derived induction variables into the loop counter,
/// recording the eliminated variable's affine relation in the ledger.
std::pair<typed_program, assumption_ledger>
normalize_loops(const typed_program &t);

enum class pipeline_level { basic, O1, O2, O3, O4, no_O1, no_O2, no_O3 };

pipeline_level parse_level(const std::string &name);
const char *level_name(pipeline_level level);

struct pipeline_result {
    typed_program prog;
    assumption_ledger ledger;
};

/// Cumulative pass composition: basic = types only; O1 += predicates;
/// O2 += unpacking; O3 += expression propagation; O4 += loop normalization.
/// no-ON runs O4 minus the named pass.
pipeline_result run_pipeline(const chunk_spec &spec,
                             const decoded_chunk &chunk,
                             pipeline_level level = pipeline_level::O4,
                             const std::string &dump_dir = "");

} // namespace tina

#endif
