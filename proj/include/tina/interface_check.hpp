#ifndef TINA_INTERFACE_CHECK_HPP
#define TINA_INTERFACE_CHECK_HPP

#include "tina/decoder.hpp"

namespace tina {

enum class finding_kind {
    register_write, // register written but neither output nor clobbered
    memory_write,   // store without a "memory" clobber or memory output
    flags_write,    // flag written without a "cc" clobber
    unused_input,   // declared input never read by the template
};

const char *finding_kind_name(finding_kind k);

struct compliance_finding {
    finding_kind kind;
    std::string subject; // register, flag, or operand name
    bool downgraded = false;
    std::string message;
};

struct relaxation {
    bool allow_flags = false;  // tolerate missing "cc" clobber
    bool allow_memory = false; // tolerate missing "memory" clobber
};

struct compliance_report {
    std::vector<compliance_finding> findings;
    bool rejected = false;

    bool has(finding_kind k) const;
};

/// Framework-condition audit of a decoded chunk against its declared
/// interface. Register and memory violations reject the chunk; relaxation
/// flags downgrade memory and flags findings to warnings.
compliance_report check_interface(const chunk_spec &spec,
                                  const decoded_chunk &chunk,
                                  const relaxation &relax = {});

} // namespace tina

#endif
