#include "tina/interface_check.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace tina {

namespace {

const std::array<const char *, 6> gp_regs = {"eax", "ebx", "ecx",
                                             "edx", "esi", "edi"};
const std::array<const char *, 5> flag_regs = {"zf", "sf", "cf", "of", "df"};

std::string strip_percent(const std::string &s) {
    return !s.empty() && s[0] == '%' ? s.substr(1) : s;
}

/// The decoded program minus its interface-binding entry block, so that
/// reads and writes reflect the template alone.
program template_body(const program &p) {
    program body;
    const basic_block *init = p.find_block(p.entry);
    if (init && std::holds_alternative<goto_term>(init->term) &&
        init->body.size() ==
            static_cast<size_t>(std::count_if(
                init->body.begin(), init->body.end(), [](const instr &i) {
                    return std::holds_alternative<assign_instr>(i);
                }))) {
        body.entry = std::get<goto_term>(init->term).target;
    } else {
        body.entry = p.entry;
    }
    for (const basic_block &b : p.blocks)
        if (b.id != p.entry || body.entry == p.entry) body.blocks.push_back(b);
    if (!body.find_block(body.entry)) body = p;
    return body;
}

} // namespace

const char *finding_kind_name(finding_kind k) {
    switch (k) {
    case finding_kind::register_write: return "register-write";
    case finding_kind::memory_write: return "memory-write";
    case finding_kind::flags_write: return "flags-write";
    case finding_kind::unused_input: return "unused-input";
    }
    return "?";
}

bool compliance_report::has(finding_kind k) const {
    return std::any_of(findings.begin(), findings.end(),
                       [&](const compliance_finding &f) {
                           return f.kind == k;
                       });
}

compliance_report check_interface(const chunk_spec &spec,
                                  const decoded_chunk &chunk,
                                  const relaxation &relax) {
    compliance_report report;
    std::vector<location> locs = allocate_operands(spec);
    program body = template_body(chunk.prog);

    std::set<std::string> clobbered;
    for (const std::string &c : chunk.clobbered)
        clobbered.insert(strip_percent(c));

    std::set<std::string> output_regs, output_mem;
    for (size_t i = 0; i < spec.outputs.size(); ++i) {
        if (locs[i].kind == location::kind_t::reg)
            output_regs.insert(locs[i].reg);
        else if (locs[i].kind == location::kind_t::mem)
            output_mem.insert(locs[i].mem_base);
    }

    std::map<std::string, unsigned> written = assigned_vars(body);

    // (a) registers written but neither outputs nor clobbered.
    for (const char *r : gp_regs) {
        if (!written.count(r)) continue;
        if (output_regs.count(r) || clobbered.count(r)) continue;
        report.findings.push_back(
            {finding_kind::register_write, r, false,
             std::string("register ") + r +
                 " is written but is neither an output nor clobbered"});
    }

    // (b) memory written without a "memory" clobber or memory output.
    if (program_has_store(body) && !clobbered.count("memory") &&
        output_mem.empty()) {
        report.findings.push_back(
            {finding_kind::memory_write, "memory", relax.allow_memory,
             "template stores to memory without a \"memory\" clobber"});
    }

    // (c) flags written without a "cc" clobber.
    for (const char *f : flag_regs) {
        if (!written.count(f)) continue;
        if (clobbered.count("cc") || clobbered.count("flags")) break;
        report.findings.push_back(
            {finding_kind::flags_write, f, relax.allow_flags,
             std::string("flag ") + f + " is written without a \"cc\" clobber"});
    }

    // (d) declared inputs the template never reads.
    std::map<std::string, unsigned> body_inputs = program_inputs(body);
    for (size_t i = 0; i < spec.inputs.size(); ++i) {
        size_t idx = spec.outputs.size() + i;
        const location &loc = locs[idx];
        bool used = false;
        switch (loc.kind) {
        case location::kind_t::reg: used = body_inputs.count(loc.reg); break;
        case location::kind_t::mem:
            used = body_inputs.count(loc.mem_base);
            break;
        case location::kind_t::imm:
            // Constant immediates dissolve into the instruction stream;
            // symbolic ones are traceable.
            used = body_inputs.count(loc.imm) ||
                   std::isdigit(static_cast<unsigned char>(loc.imm[0])) ||
                   loc.imm[0] == '-';
            break;
        }
        if (!used) {
            const operand_spec &op = spec.inputs[i];
            std::string label =
                op.name.empty() ? "%" + std::to_string(idx) : op.name;
            report.findings.push_back(
                {finding_kind::unused_input, label, false,
                 "input operand " + label + " is never read by the template"});
        }
    }

    for (const compliance_finding &f : report.findings) {
        bool hard = f.kind == finding_kind::register_write ||
                    (f.kind == finding_kind::memory_write && !f.downgraded);
        if (hard) report.rejected = true;
    }
    return report;
}

} // namespace tina
