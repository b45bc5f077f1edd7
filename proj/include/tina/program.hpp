#ifndef TINA_PROGRAM_HPP
#define TINA_PROGRAM_HPP

#include "tina/expr.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tina {

struct assign_instr {
    std::string lhs;
    unsigned width;
    expr_ptr rhs;
};

struct store_instr {
    expr_ptr addr;
    unsigned nbytes;
    expr_ptr value;
};

using instr = std::variant<assign_instr, store_instr>;

struct goto_term {
    std::string target;
};

struct branch_term {
    expr_ptr cond;
    std::string then_target;
    std::string else_target;
};

struct halt_term {};

using terminator = std::variant<goto_term, branch_term, halt_term>;

struct basic_block {
    std::string id;
    std::vector<instr> body;
    terminator term = halt_term{};
};

struct program {
    std::vector<basic_block> blocks;
    std::string entry;

    const basic_block *find_block(const std::string &id) const;
    basic_block *find_block(const std::string &id);
};

/// Empty result means the program satisfies all structural invariants.
std::vector<std::string> check_wellformed(const program &p);

enum class edge_tag { jump, branch_then, branch_else };

struct cfg_edge {
    std::string from, to;
    edge_tag tag;
};

struct cfg {
    std::vector<std::string> nodes; // in program block order
    std::vector<cfg_edge> edges;

    std::vector<std::pair<edge_tag, std::string>> successors(const std::string &n) const;
    std::vector<std::string> predecessors(const std::string &n) const;
};

cfg build_cfg(const program &p);

/// Variables read before being assigned on some path from entry.
std::map<std::string, unsigned> program_inputs(const program &p);

/// All variables assigned anywhere in the program, with widths.
std::map<std::string, unsigned> assigned_vars(const program &p);

bool program_has_store(const program &p);
bool program_has_load(const program &p);

} // namespace tina

#endif
