#ifndef TINA_CHUNK_HPP
#define TINA_CHUNK_HPP

#include "tina/expr.hpp"

#include <optional>
#include <set>

namespace tina {

struct chunk_error : ir_error {
    using ir_error::ir_error;
};

/// C-level operand type: Int(signed, bits) or Ptr(pointee).
struct ctype {
    bool is_pointer = false;
    bool is_signed = false;
    unsigned bits = 32; // integer width; pointers are 32 (x86-32)
    std::shared_ptr<ctype> pointee;

    unsigned byte_size() const { return bits / 8; }
    unsigned pointee_bytes() const;
    std::string to_string() const;
};

ctype parse_ctype(const std::string &text);

struct operand_spec {
    std::string constraint; // letter or digit, modifiers stripped
    bool is_output = false;
    bool is_inout = false; // "+" modifier
    std::string name;      // C-level identifier; may be empty for inputs
    ctype type;
    std::optional<std::string> initializer; // integer literal or symbol
};

struct chunk_spec {
    std::string arch = "x86-32";
    std::vector<std::string> template_lines;
    std::vector<operand_spec> outputs, inputs;
    std::set<std::string> clobbers;

    size_t operand_count() const { return outputs.size() + inputs.size(); }
    const operand_spec &operand(size_t global_index) const;
};

chunk_spec parse_chunk(const std::string &text);

/// Where an operand lives after deterministic placement.
struct location {
    enum class kind_t { reg, mem, imm } kind = kind_t::reg;
    std::string reg;      // register name for kind reg
    std::string mem_base; // symbolic base address for kind mem
    std::string imm;      // literal or symbol for kind imm
    bool operator==(const location &) const = default;
};

/// Placement for outputs then inputs, by global operand index. Fixed class
/// letters map to their register; r/g take the first free register in the
/// order eax, ebx, ecx, edx, esi, edi; digits alias the referenced output.
std::vector<location> allocate_operands(const chunk_spec &spec);

} // namespace tina

#endif
