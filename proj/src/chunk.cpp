#include "tina/chunk.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

namespace tina {

namespace {

std::string trim(const std::string &s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string &s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

bool valid_ident(const std::string &s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_')
        return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_';
    });
}

const std::string constraint_letters = "rmigabcdSD";

operand_spec parse_operand_line(const std::string &line, bool output) {
    // CONSTRAINT [NAME] : CTYPE [= INITIALIZER]
    size_t colon = line.find(':');
    if (colon == std::string::npos)
        throw chunk_error("operand line missing ':': " + line);
    std::string head = trim(line.substr(0, colon));
    std::string tail = trim(line.substr(colon + 1));

    operand_spec op;
    op.is_output = output;
    std::istringstream hs(head);
    std::string constraint, name;
    hs >> constraint >> name;
    if (constraint.empty())
        throw chunk_error("operand line missing constraint: " + line);
    bool saw_modifier = false;
    while (!constraint.empty() &&
           (constraint[0] == '=' || constraint[0] == '+' ||
            constraint[0] == '&')) {
        if (constraint[0] == '=' && !output)
            throw chunk_error("'=' modifier on input operand: " + line);
        if (constraint[0] == '+') {
            if (!output)
                throw chunk_error("'+' modifier on input operand: " + line);
            op.is_inout = true;
        }
        saw_modifier = true;
        constraint.erase(0, 1);
    }
    if (output && !saw_modifier)
        throw chunk_error("output operand lacks '=' or '+': " + line);
    if (constraint.size() != 1 ||
        (constraint_letters.find(constraint[0]) == std::string::npos &&
         !std::isdigit(static_cast<unsigned char>(constraint[0]))))
        throw chunk_error("unknown constraint '" + constraint + "' in: " + line);
    if (std::isdigit(static_cast<unsigned char>(constraint[0])) && output)
        throw chunk_error("matching constraint on output operand: " + line);
    op.constraint = constraint;
    if (!name.empty() && !valid_ident(name))
        throw chunk_error("bad operand name '" + name + "' in: " + line);
    if (output && name.empty())
        throw chunk_error("output operand missing name: " + line);
    op.name = name;

    size_t eq = tail.find('=');
    if (eq != std::string::npos) {
        op.initializer = trim(tail.substr(eq + 1));
        if (op.initializer->empty())
            throw chunk_error("empty initializer in: " + line);
        tail = trim(tail.substr(0, eq));
    }
    op.type = parse_ctype(tail);
    return op;
}

} // namespace

unsigned ctype::pointee_bytes() const {
    if (!is_pointer || !pointee)
        throw chunk_error("pointee_bytes on non-pointer type");
    return pointee->byte_size();
}

std::string ctype::to_string() const {
    if (is_pointer) return "ptr(" + pointee->to_string() + ")";
    return (is_signed ? "i" : "u") + std::to_string(bits);
}

ctype parse_ctype(const std::string &text) {
    std::string t = trim(text);
    if (t.rfind("ptr(", 0) == 0 && t.back() == ')') {
        ctype ct;
        ct.is_pointer = true;
        ct.bits = 32;
        ct.pointee = std::make_shared<ctype>(
            parse_ctype(t.substr(4, t.size() - 5)));
        return ct;
    }
    if (t.size() >= 2 && (t[0] == 'i' || t[0] == 'u')) {
        std::string digits = t.substr(1);
        if (digits == "8" || digits == "16" || digits == "32") {
            ctype ct;
            ct.is_signed = t[0] == 'i';
            ct.bits = static_cast<unsigned>(std::stoul(digits));
            return ct;
        }
    }
    throw chunk_error("unknown C type '" + t + "'");
}

const operand_spec &chunk_spec::operand(size_t global_index) const {
    if (global_index < outputs.size()) return outputs[global_index];
    if (global_index - outputs.size() < inputs.size())
        return inputs[global_index - outputs.size()];
    throw chunk_error("operand index out of range");
}

chunk_spec parse_chunk(const std::string &text) {
    chunk_spec spec;
    spec.arch.clear();
    enum class section { none, tmpl, outputs, inputs, clobbers } sec =
        section::none;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line[0] == '.') {
            std::istringstream ls(line);
            std::string directive;
            ls >> directive;
            if (directive == ".arch") {
                ls >> spec.arch;
                sec = section::none;
            } else if (directive == ".template") {
                sec = section::tmpl;
            } else if (directive == ".outputs") {
                sec = section::outputs;
            } else if (directive == ".inputs") {
                sec = section::inputs;
            } else if (directive == ".clobbers") {
                sec = section::clobbers;
            } else {
                throw chunk_error("unknown directive " + directive);
            }
            continue;
        }
        switch (sec) {
        case section::none:
            throw chunk_error("text outside any section: " + line);
        case section::tmpl:
            spec.template_lines.push_back(line);
            break;
        case section::outputs:
            spec.outputs.push_back(parse_operand_line(line, true));
            break;
        case section::inputs:
            spec.inputs.push_back(parse_operand_line(line, false));
            break;
        case section::clobbers:
            for (const std::string &part : split(line, ',')) {
                std::string c = trim(part);
                if (!c.empty()) spec.clobbers.insert(c);
            }
            break;
        }
    }
    if (spec.arch.empty()) throw chunk_error("missing .arch directive");
    if (spec.arch != "x86-32")
        throw chunk_error("unsupported architecture " + spec.arch);

    // Validate matching constraints and placeholder references.
    for (const operand_spec &op : spec.inputs) {
        if (std::isdigit(static_cast<unsigned char>(op.constraint[0]))) {
            size_t ref = op.constraint[0] - '0';
            if (ref >= spec.outputs.size())
                throw chunk_error("matching constraint " + op.constraint +
                                  " has no such output");
        }
    }
    for (const std::string &line : spec.template_lines) {
        for (size_t i = 0; i + 1 < line.size(); ++i) {
            if (line[i] != '%' ||
                !std::isdigit(static_cast<unsigned char>(line[i + 1])))
                continue;
            size_t n = line[i + 1] - '0';
            if (n >= spec.operand_count())
                throw chunk_error("placeholder %" + std::to_string(n) +
                                  " out of range in: " + line);
            ++i;
        }
    }
    return spec;
}

std::vector<location> allocate_operands(const chunk_spec &spec) {
    const std::array<std::pair<char, const char *>, 6> fixed = {
        {{'a', "eax"},
         {'b', "ebx"},
         {'c', "ecx"},
         {'d', "edx"},
         {'S', "esi"},
         {'D', "edi"}}};
    const std::array<const char *, 6> pool = {"eax", "ebx", "ecx",
                                              "edx", "esi", "edi"};

    std::vector<location> locs(spec.operand_count());
    std::set<std::string> taken;
    size_t mem_count = 0;

    auto place = [&](size_t idx, const operand_spec &op) {
        char letter = op.constraint[0];
        location &loc = locs[idx];
        if (std::isdigit(static_cast<unsigned char>(letter))) {
            loc = locs[letter - '0'];
            return;
        }
        if (letter == 'm') {
            loc.kind = location::kind_t::mem;
            loc.mem_base = "__tina_mem" + std::to_string(mem_count++);
            return;
        }
        if (letter == 'i') {
            loc.kind = location::kind_t::imm;
            loc.imm = op.initializer ? *op.initializer
                                     : "__tina_" + std::to_string(idx);
            return;
        }
        std::string reg;
        if (letter == 'r' || letter == 'g') {
            for (const char *candidate : pool) {
                if (!taken.count(candidate)) {
                    reg = candidate;
                    break;
                }
            }
            if (reg.empty())
                throw chunk_error("register pool exhausted allocating "
                                  "operand " +
                                  std::to_string(idx));
        } else {
            for (const auto &[c, r] : fixed)
                if (c == letter) reg = r;
            if (taken.count(reg))
                throw chunk_error("register " + reg +
                                  " claimed twice by fixed constraints");
        }
        loc.kind = location::kind_t::reg;
        loc.reg = reg;
        taken.insert(reg);
    };

    // Two passes: fixed classes claim their registers before r/g draw from
    // the pool, so "r" never steals a later operand's dedicated register.
    for (size_t i = 0; i < spec.operand_count(); ++i) {
        const operand_spec &op = spec.operand(i);
        char c = op.constraint[0];
        if (c != 'r' && c != 'g' &&
            !std::isdigit(static_cast<unsigned char>(c)))
            place(i, op);
    }
    for (size_t i = 0; i < spec.operand_count(); ++i) {
        const operand_spec &op = spec.operand(i);
        char c = op.constraint[0];
        if (c == 'r' || c == 'g') place(i, op);
    }
    for (size_t i = 0; i < spec.operand_count(); ++i) {
        const operand_spec &op = spec.operand(i);
        if (std::isdigit(static_cast<unsigned char>(op.constraint[0])))
            place(i, op);
    }
    return locs;
}

} // namespace tina
