#ifndef TINA_EMIT_HPP
#define TINA_EMIT_HPP

#include "tina/passes.hpp"

namespace tina {

/// Structured statement tree produced from the (reducible) chunk CFG.
/// Every statement remembers its originating IR block for the
/// "/*@block <id>*/" source-mapping comments validation pairs against.
struct c_stmt;

struct c_block_stmts {
    std::vector<c_stmt> stmts;
};

struct c_assign {
    std::string lhs;
    unsigned width;
    expr_ptr rhs;
};

struct c_store {
    expr_ptr addr;
    unsigned nbytes;
    expr_ptr value;
};

struct c_if {
    expr_ptr cond;
    c_block_stmts then_b, else_b;
};

struct c_while { // while (1); exits are explicit breaks
    c_block_stmts body;
};

struct c_break {};
struct c_goto {
    std::string label;
};
struct c_label {
    std::string label;
};

struct c_stmt {
    std::variant<c_assign, c_store, c_if, c_while, c_break, c_goto, c_label>
        node;
    std::string block_id;
};

struct structured_chunk {
    c_block_stmts body;
    /// Temporaries introduced while hoisting Ite expressions, with widths.
    std::map<std::string, unsigned> temps;
    /// False when the CFG did not fit while/if shapes and the tree is the
    /// labeled-goto rendering (total fallback; never fails).
    bool structured = true;
};

/// Turns the CFG into while/if trees; Ite expressions become if/else
/// assignment pairs (no ternaries, no short-circuit operators).
structured_chunk structure_cfg(const typed_program &t);

/// Assignments plus stores, the unit of the per-chunk density metric.
size_t statement_count(const c_block_stmts &b);

/// One C99 translation unit: a single void function named `func_name`,
/// outputs as pointer parameters, symbolic inputs as value parameters.
/// Outputs eliminated by the passes are re-bound from the ledger.
std::string emit_c(const chunk_spec &spec, const decoded_chunk &chunk,
                   const pipeline_result &res, const std::string &func_name);

} // namespace tina

#endif
