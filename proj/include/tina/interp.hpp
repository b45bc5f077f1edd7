#ifndef TINA_INTERP_HPP
#define TINA_INTERP_HPP

#include "tina/program.hpp"

#include <functional>
#include <unordered_map>

namespace tina {

struct eval_error : ir_error {
    using ir_error::ir_error;
};

/// Concrete machine state: named bitvector variables plus byte-addressable
/// little-endian memory. Unbound memory reads go through `mem_default`
/// (defaults to 0), which lets callers model arbitrary initial memory.
struct machine_state {
    std::map<std::string, std::pair<uint64_t, unsigned>> vars; // value, width
    std::unordered_map<uint32_t, uint8_t> mem;
    std::function<uint8_t(uint32_t)> mem_default;

    void set_var(const std::string &name, uint64_t value, unsigned width);
    uint64_t get_var(const std::string &name, unsigned width) const;

    uint8_t read_byte(uint32_t addr) const;
    void write_byte(uint32_t addr, uint8_t value);
    uint64_t read_mem(uint32_t addr, unsigned nbytes) const;
    void write_mem(uint32_t addr, unsigned nbytes, uint64_t value);
};

uint64_t eval_expr(const expr_ptr &e, const machine_state &s);

constexpr uint64_t default_fuel = uint64_t(1) << 20;

struct out_of_fuel {};

struct interp_result {
    std::optional<machine_state> state; // nullopt means out of fuel
    uint64_t steps = 0;

    bool ok() const { return state.has_value(); }
};

/// Runs `p` from its entry to halt. Every arithmetic operation is modular in
/// its width; division by zero raises eval_error.
interp_result interpret(const program &p, machine_state init, uint64_t fuel = default_fuel);

} // namespace tina

#endif
