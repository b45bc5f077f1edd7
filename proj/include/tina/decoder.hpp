#ifndef TINA_DECODER_HPP
#define TINA_DECODER_HPP

#include "tina/chunk.hpp"
#include "tina/program.hpp"

namespace tina {

/// Raised for template instructions outside the supported x86-32 subset.
struct out_of_scope_error : chunk_error {
    using chunk_error::chunk_error;
};

enum class operand_dir { in, out, inout };

struct interface_entry {
    std::string operand;  // C-level name or operand index when unnamed
    std::string ir_var;   // IR variable carrying the operand
    operand_dir direction = operand_dir::in;
};

struct decoded_chunk {
    program prog;
    std::vector<interface_entry> interface;
    std::set<std::string> clobbered;
};

/// Translate the chunk template into the IR, with the given operand
/// placement. An `init` entry block binds fresh interface symbols
/// (`__tina_<index>`) or constant initializers to the allocated locations.
decoded_chunk decode(const chunk_spec &spec, const std::vector<location> &locs);

/// Convenience: allocate then decode.
decoded_chunk decode(const chunk_spec &spec);

} // namespace tina

#endif
