#include "tina/decoder.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace tina {

namespace {

std::string trim(const std::string &s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// ---- register model -------------------------------------------------------

struct reg_info {
    std::string parent; // 32-bit storage variable
    unsigned lo, hi;
};

const std::map<std::string, reg_info> &reg_table() {
    static const std::map<std::string, reg_info> t = {
        {"eax", {"eax", 0, 31}}, {"ebx", {"ebx", 0, 31}},
        {"ecx", {"ecx", 0, 31}}, {"edx", {"edx", 0, 31}},
        {"esi", {"esi", 0, 31}}, {"edi", {"edi", 0, 31}},
        {"ax", {"eax", 0, 15}},  {"bx", {"ebx", 0, 15}},
        {"cx", {"ecx", 0, 15}},  {"dx", {"edx", 0, 15}},
        {"si", {"esi", 0, 15}},  {"di", {"edi", 0, 15}},
        {"al", {"eax", 0, 7}},   {"bl", {"ebx", 0, 7}},
        {"cl", {"ecx", 0, 7}},   {"dl", {"edx", 0, 7}},
        {"ah", {"eax", 8, 15}},  {"bh", {"ebx", 8, 15}},
        {"ch", {"ecx", 8, 15}},  {"dh", {"edx", 8, 15}},
    };
    return t;
}

const reg_info &lookup_reg(const std::string &name) {
    auto it = reg_table().find(name);
    if (it == reg_table().end())
        throw out_of_scope_error("unsupported register %" + name);
    return it->second;
}

expr_ptr read_reg(const std::string &name) {
    const reg_info &ri = lookup_reg(name);
    expr_ptr full = var(ri.parent, 32);
    if (ri.lo == 0 && ri.hi == 31) return full;
    return extract(ri.lo, ri.hi, full);
}

assign_instr write_reg(const std::string &name, expr_ptr value) {
    const reg_info &ri = lookup_reg(name);
    if (ri.lo == 0 && ri.hi == 31) return {ri.parent, 32, value};
    expr_ptr full = var(ri.parent, 32);
    expr_ptr merged;
    if (ri.lo == 0)
        merged = concat(extract(ri.hi + 1, 31, full), value);
    else
        merged = concat(extract(ri.hi + 1, 31, full),
                        concat(value, extract(0, ri.lo - 1, full)));
    return {ri.parent, 32, merged};
}

// ---- operand parsing ------------------------------------------------------

struct opnd {
    enum class k { reg, imm, mem, label } kind = k::label;
    std::string reg;
    expr_ptr imm;  // width 32
    expr_ptr addr; // width 32, memory operands
    std::string label;
};

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

bool is_integer(const std::string &s) {
    std::string t = s;
    if (!t.empty() && (t[0] == '-' || t[0] == '+')) t.erase(0, 1);
    if (t.empty()) return false;
    if (t.rfind("0x", 0) == 0 || t.rfind("0X", 0) == 0)
        return t.size() > 2 &&
               std::all_of(t.begin() + 2, t.end(), [](unsigned char c) {
                   return std::isxdigit(c);
               });
    return std::all_of(t.begin(), t.end(), [](unsigned char c) {
        return std::isdigit(c);
    });
}

uint64_t parse_integer(const std::string &s) {
    bool negative = !s.empty() && s[0] == '-';
    std::string t = negative ? s.substr(1) : s;
    uint64_t v = std::stoull(t, nullptr, 0);
    return negative ? static_cast<uint64_t>(-static_cast<int64_t>(v)) : v;
}

expr_ptr imm_value(const std::string &text) {
    if (is_integer(text)) return cst(truncate(parse_integer(text), 32), 32);
    if (!text.empty() && ident_char(text[0]) &&
        std::all_of(text.begin(), text.end(), ident_char) &&
        !std::isdigit(static_cast<unsigned char>(text[0])))
        return var(text, 32);
    throw chunk_error("cannot parse immediate '" + text + "'");
}

/// disp(%base,%index,scale) and sub-forms; bare symbols and integers act as
/// absolute displacements.
expr_ptr parse_mem_addr(const std::string &text) {
    std::string disp, inner;
    size_t open = text.find('(');
    if (open == std::string::npos) {
        disp = text;
    } else {
        if (text.back() != ')')
            throw chunk_error("malformed memory operand '" + text + "'");
        disp = trim(text.substr(0, open));
        inner = text.substr(open + 1, text.size() - open - 2);
    }
    expr_ptr addr;
    auto accumulate = [&](expr_ptr e) {
        addr = addr ? add(addr, e) : e;
    };
    if (!disp.empty()) accumulate(imm_value(disp));
    if (!inner.empty()) {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : inner) {
            if (c == ',') {
                parts.push_back(trim(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        parts.push_back(trim(cur));
        if (parts.size() > 3)
            throw chunk_error("malformed memory operand '" + text + "'");
        if (!parts[0].empty()) {
            if (parts[0][0] != '%')
                throw chunk_error("expected register in '" + text + "'");
            expr_ptr base = read_reg(parts[0].substr(1));
            if (base->width != 32)
                throw chunk_error("sub-register base in '" + text + "'");
            accumulate(base);
        }
        if (parts.size() >= 2 && !parts[1].empty()) {
            if (parts[1][0] != '%')
                throw chunk_error("expected register in '" + text + "'");
            expr_ptr index = read_reg(parts[1].substr(1));
            if (index->width != 32)
                throw chunk_error("sub-register index in '" + text + "'");
            uint64_t scale = 1;
            if (parts.size() == 3 && !parts[2].empty())
                scale = parse_integer(parts[2]);
            if (scale != 1 && scale != 2 && scale != 4 && scale != 8)
                throw chunk_error("bad scale in '" + text + "'");
            accumulate(scale == 1 ? index : mul(index, cst(scale, 32)));
        }
    }
    if (!addr) throw chunk_error("empty memory operand '" + text + "'");
    return addr;
}

opnd parse_operand(const std::string &raw) {
    std::string text = trim(raw);
    if (text.empty()) throw chunk_error("empty operand");
    opnd o;
    if (text[0] == '%') {
        o.kind = opnd::k::reg;
        o.reg = text.substr(1);
        lookup_reg(o.reg);
        return o;
    }
    if (text[0] == '$') {
        o.kind = opnd::k::imm;
        o.imm = imm_value(trim(text.substr(1)));
        return o;
    }
    if (text.find('(') != std::string::npos || is_integer(text) ||
        text.rfind("__tina_", 0) == 0) {
        o.kind = opnd::k::mem;
        o.addr = parse_mem_addr(text);
        return o;
    }
    o.kind = opnd::k::label;
    o.label = text;
    return o;
}

std::vector<opnd> parse_operands(const std::string &rest) {
    std::vector<opnd> out;
    std::string cur;
    int depth = 0;
    for (char c : rest) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0) {
            out.push_back(parse_operand(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty()) out.push_back(parse_operand(cur));
    return out;
}

// ---- program builder ------------------------------------------------------

struct builder {
    program prog;
    basic_block *cur = nullptr;
    int fresh = 0;

    std::string fresh_label(const std::string &stem) {
        return "__" + stem + std::to_string(fresh++);
    }

    basic_block &open(const std::string &id) {
        prog.blocks.push_back({id, {}, halt_term{}});
        cur = &prog.blocks.back();
        return *cur;
    }

    void label(const std::string &id) {
        if (cur) cur->term = goto_term{id};
        open(id);
    }

    void emit(instr i) {
        if (!cur) open(fresh_label("bb"));
        cur->body.push_back(std::move(i));
    }

    void terminate(terminator t) {
        if (!cur) open(fresh_label("bb"));
        cur->term = std::move(t);
        cur = nullptr;
    }
};

// ---- flag helpers ---------------------------------------------------------

expr_ptr bxor_(expr_ptr a, expr_ptr b) { return binop(binop_kind::bxor, a, b); }
expr_ptr band_(expr_ptr a, expr_ptr b) { return binop(binop_kind::band, a, b); }
expr_ptr bor_(expr_ptr a, expr_ptr b) { return binop(binop_kind::bor, a, b); }
expr_ptr ult_(expr_ptr a, expr_ptr b) { return binop(binop_kind::ult, a, b); }
expr_ptr slt_(expr_ptr a, expr_ptr b) { return binop(binop_kind::slt, a, b); }
expr_ptr neq_(expr_ptr a, expr_ptr b) { return binop(binop_kind::neq, a, b); }

expr_ptr flag(const std::string &name) { return var(name, 1); }
expr_ptr is_zero(expr_ptr f) { return eq(f, cst(0, 1)); }

struct decoder {
    const chunk_spec &spec;
    const std::vector<location> &locs;
    builder bld;

    decoder(const chunk_spec &s, const std::vector<location> &l)
        : spec(s), locs(l) {}

    // Substitute %N placeholders with the allocated operand's spelling.
    std::string substitute(const std::string &line) const {
        std::string out;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '%' && i + 1 < line.size() && line[i + 1] == '%') {
                out += '%';
                ++i;
                continue;
            }
            if (line[i] == '%' && i + 1 < line.size() &&
                std::isdigit(static_cast<unsigned char>(line[i + 1]))) {
                const location &loc = locs[line[i + 1] - '0'];
                switch (loc.kind) {
                case location::kind_t::reg: out += "%" + loc.reg; break;
                case location::kind_t::mem: out += loc.mem_base; break;
                case location::kind_t::imm: out += "$" + loc.imm; break;
                }
                ++i;
                continue;
            }
            out += line[i];
        }
        return out;
    }

    void emit(instr i) { bld.emit(std::move(i)); }

    void set_zs(expr_ptr res) {
        unsigned w = res->width;
        emit(assign_instr{"zf", 1, eq(res, cst(0, w))});
        emit(assign_instr{"sf", 1, slt_(res, cst(0, w))});
    }

    // ---- operand access ---------------------------------------------------

    // Destination-first so "shll %cl, %eax" sizes by %eax, not %cl.
    unsigned operand_width(const std::vector<opnd> &ops, char suffix) const {
        for (auto it = ops.rbegin(); it != ops.rend(); ++it)
            if (it->kind == opnd::k::reg) {
                const reg_info &ri = lookup_reg(it->reg);
                return ri.hi - ri.lo + 1;
            }
        switch (suffix) {
        case 'b': return 8;
        case 'w': return 16;
        case 'l': return 32;
        default: return 32;
        }
    }

    expr_ptr read(const opnd &o, unsigned width) const {
        switch (o.kind) {
        case opnd::k::reg: {
            expr_ptr v = read_reg(o.reg);
            if (v->width != width)
                throw chunk_error("operand size mismatch on %" + o.reg);
            return v;
        }
        case opnd::k::imm: {
            if (o.imm->is_cst())
                return cst(truncate(o.imm->as_cst().value, width), width);
            return width == 32 ? o.imm : extract(0, width - 1, o.imm);
        }
        case opnd::k::mem: return load(o.addr, width / 8);
        case opnd::k::label:
            throw chunk_error("label used as data operand");
        }
        throw chunk_error("bad operand");
    }

    void write(const opnd &o, expr_ptr value) {
        if (o.kind == opnd::k::reg) {
            emit(write_reg(o.reg, value));
        } else if (o.kind == opnd::k::mem) {
            emit(store_instr{o.addr, value->width / 8, value});
        } else {
            throw chunk_error("write to non-writable operand");
        }
    }

    // ---- instruction families ---------------------------------------------

    void arith(const std::string &mn, const opnd &src, const opnd &dst,
               unsigned w) {
        expr_ptr x = read(dst, w);
        expr_ptr y = read(src, w);
        expr_ptr res;
        if (mn == "add") {
            res = add(x, y);
            emit(assign_instr{"cf", 1, ult_(res, x)});
            emit(assign_instr{
                "of", 1,
                slt_(band_(bxor_(x, res), bxor_(y, res)), cst(0, w))});
        } else if (mn == "sub" || mn == "cmp") {
            res = sub(x, y);
            emit(assign_instr{"cf", 1, ult_(x, y)});
            emit(assign_instr{
                "of", 1, slt_(band_(bxor_(x, y), bxor_(x, res)), cst(0, w))});
        } else if (mn == "adc" || mn == "sbb") {
            expr_ptr c = uext(w + 1, flag("cf"));
            expr_ptr wide, swide;
            if (mn == "adc") {
                wide = add(add(uext(w + 1, x), uext(w + 1, y)), c);
                swide = add(add(sext(w + 1, x), sext(w + 1, y)), c);
            } else {
                wide = sub(sub(uext(w + 1, x), uext(w + 1, y)), c);
                swide = sub(sub(sext(w + 1, x), sext(w + 1, y)), c);
            }
            // of must be emitted first: its formula reads the incoming cf.
            emit(assign_instr{
                "of", 1,
                neq_(swide, sext(w + 1, extract(0, w - 1, wide)))});
            // The wide sum goes through a scratch so later flag and result
            // assignments no longer depend on the incoming cf.
            std::string t = bld.fresh_label("tmp");
            emit(assign_instr{t, w + 1, wide});
            res = extract(0, w - 1, var(t, w + 1));
            emit(assign_instr{"cf", 1, extract(w, w, var(t, w + 1))});
        } else if (mn == "and" || mn == "test") {
            res = band_(x, y);
            emit(assign_instr{"cf", 1, cst(0, 1)});
            emit(assign_instr{"of", 1, cst(0, 1)});
        } else if (mn == "or") {
            res = bor_(x, y);
            emit(assign_instr{"cf", 1, cst(0, 1)});
            emit(assign_instr{"of", 1, cst(0, 1)});
        } else if (mn == "xor") {
            res = bxor_(x, y);
            emit(assign_instr{"cf", 1, cst(0, 1)});
            emit(assign_instr{"of", 1, cst(0, 1)});
        } else {
            throw chunk_error("arith: bad mnemonic " + mn);
        }
        set_zs(res);
        if (mn != "cmp" && mn != "test")
            write(const_cast<opnd &>(dst), res);
    }

    void unary(const std::string &mn, const opnd &dst, unsigned w) {
        expr_ptr x = read(dst, w);
        expr_ptr res;
        if (mn == "inc") {
            res = add(x, cst(1, w));
            emit(assign_instr{
                "of", 1,
                slt_(band_(bxor_(x, res), bxor_(cst(1, w), res)), cst(0, w))});
        } else if (mn == "dec") {
            res = sub(x, cst(1, w));
            emit(assign_instr{
                "of", 1,
                slt_(band_(bxor_(x, cst(1, w)), bxor_(x, res)), cst(0, w))});
        } else if (mn == "neg") {
            res = neg(x);
            emit(assign_instr{"cf", 1, neq_(x, cst(0, w))});
            emit(assign_instr{"of", 1,
                              eq(x, cst(uint64_t{1} << (w - 1), w))});
        } else if (mn == "not") {
            write(const_cast<opnd &>(dst), bnot(x));
            return; // not sets no flags
        } else {
            throw chunk_error("unary: bad mnemonic " + mn);
        }
        set_zs(res);
        write(const_cast<opnd &>(dst), res);
    }

    void shift(const std::string &mn, const opnd &amt, const opnd &dst,
               unsigned w) {
        expr_ptr x = read(dst, w);
        binop_kind op = mn == "shl" || mn == "sal" ? binop_kind::shl
                        : mn == "shr"              ? binop_kind::shr
                                                   : binop_kind::sar;
        if (amt.kind == opnd::k::imm && amt.imm->is_cst()) {
            unsigned k = amt.imm->as_cst().value & 31;
            if (k == 0) return; // zero shifts leave flags and dst alone
            expr_ptr res = binop(op, x, cst(k, w));
            expr_ptr cf;
            if (op == binop_kind::shl)
                cf = k <= w ? extract(w - k, w - k, x) : cst(0, 1);
            else if (op == binop_kind::shr)
                cf = k <= w ? (k == 0 ? cst(0, 1) : extract(k - 1, k - 1, x))
                            : cst(0, 1);
            else
                cf = extract(std::min(k - 1, w - 1), std::min(k - 1, w - 1), x);
            emit(assign_instr{"cf", 1, cf});
            expr_ptr of = op == binop_kind::sar
                              ? cst(0, 1)
                              : (op == binop_kind::shl
                                     ? bxor_(extract(w - 1, w - 1, res), cf)
                                     : extract(w - 1, w - 1, x));
            emit(assign_instr{"of", 1, of});
            set_zs(res);
            write(const_cast<opnd &>(dst), res);
            return;
        }
        // Shift by %cl: flags are modelled as if the masked count were
        // nonzero (the count-zero flag-preservation case is not encoded).
        if (amt.kind != opnd::k::reg || amt.reg != "cl")
            throw out_of_scope_error("unsupported shift count operand");
        expr_ptr count = band_(read_reg("cl"), cst(31, 8));
        expr_ptr cw = w == 8 ? count : uext(w, count);
        expr_ptr res = binop(op, x, cw);
        expr_ptr cf;
        if (op == binop_kind::shl)
            cf = extract(0, 0,
                         binop(binop_kind::shr, x, sub(cst(w, w), cw)));
        else
            cf = extract(0, 0,
                         binop(op, x, sub(cw, cst(1, w))));
        emit(assign_instr{"cf", 1, cf});
        emit(assign_instr{"of", 1,
                          op == binop_kind::sar
                              ? cst(0, 1)
                              : (op == binop_kind::shl
                                     ? bxor_(extract(w - 1, w - 1, res), cf)
                                     : extract(w - 1, w - 1, x))});
        set_zs(res);
        write(const_cast<opnd &>(dst), res);
    }

    void string_op(const std::string &mn) {
        auto step = [&](const std::string &ptr, unsigned bytes) {
            expr_ptr p = var(ptr, 32);
            emit(assign_instr{ptr, 32,
                              ite(flag("df"), sub(p, cst(bytes, 32)),
                                  add(p, cst(bytes, 32)))});
        };
        if (mn == "stosl") {
            emit(store_instr{var("edi", 32), 4, var("eax", 32)});
            step("edi", 4);
        } else if (mn == "stosw") {
            emit(store_instr{var("edi", 32), 2, extract(0, 15, var("eax", 32))});
            step("edi", 2);
        } else if (mn == "stosb") {
            emit(store_instr{var("edi", 32), 1, extract(0, 7, var("eax", 32))});
            step("edi", 1);
        } else if (mn == "lodsl") {
            emit(assign_instr{"eax", 32, load(var("esi", 32), 4)});
            step("esi", 4);
        } else if (mn == "lodsb") {
            emit(write_reg("al", load(var("esi", 32), 1)));
            step("esi", 1);
        } else {
            throw chunk_error("string_op: bad mnemonic " + mn);
        }
    }

    expr_ptr jcc_cond(const std::string &cc) {
        expr_ptr zf = flag("zf"), sf = flag("sf"), cf = flag("cf"),
                 of = flag("of");
        if (cc == "e" || cc == "z") return zf;
        if (cc == "ne" || cc == "nz") return is_zero(zf);
        if (cc == "g") return band_(is_zero(zf), eq(sf, of));
        if (cc == "ge") return eq(sf, of);
        if (cc == "l") return neq_(sf, of);
        if (cc == "le") return bor_(zf, neq_(sf, of));
        if (cc == "a") return band_(is_zero(cf), is_zero(zf));
        if (cc == "ae" || cc == "nc") return is_zero(cf);
        if (cc == "b" || cc == "c") return cf;
        if (cc == "be") return bor_(cf, zf);
        if (cc == "s") return sf;
        if (cc == "ns") return is_zero(sf);
        throw out_of_scope_error("unsupported condition code j" + cc);
    }

    void decode_insn(const std::string &text);

    void rep_prefix(const std::string &rest) {
        std::string mn = trim(rest);
        if (mn != "stosl" && mn != "stosw" && mn != "stosb" && mn != "lodsl" &&
            mn != "lodsb")
            throw out_of_scope_error("unsupported rep body " + mn);
        std::string head = bld.fresh_label("rep_head");
        std::string body = bld.fresh_label("rep_body");
        std::string next = bld.fresh_label("rep_next");
        bld.terminate(goto_term{head});
        bld.open(head);
        bld.terminate(
            branch_term{eq(var("ecx", 32), cst(0, 32)), next, body});
        bld.open(body);
        string_op(mn);
        emit(assign_instr{"ecx", 32, sub(var("ecx", 32), cst(1, 32))});
        bld.terminate(goto_term{head});
        bld.open(next);
    }
};

void decoder::decode_insn(const std::string &text) {
    std::istringstream ss(text);
    std::string mnemonic;
    ss >> mnemonic;
    std::string rest;
    std::getline(ss, rest);
    rest = trim(rest);

    if (mnemonic == "rep" || mnemonic == "repz" || mnemonic == "repe") {
        rep_prefix(rest);
        return;
    }
    if (mnemonic == "cld") {
        emit(assign_instr{"df", 1, cst(0, 1)});
        return;
    }
    if (mnemonic == "std") {
        emit(assign_instr{"df", 1, cst(1, 1)});
        return;
    }
    if (mnemonic == "cdq") {
        emit(assign_instr{"edx", 32,
                          extract(32, 63, sext(64, var("eax", 32)))});
        return;
    }
    if (mnemonic == "stosl" || mnemonic == "stosw" || mnemonic == "stosb" ||
        mnemonic == "lodsl" || mnemonic == "lodsb") {
        string_op(mnemonic);
        return;
    }
    if (mnemonic == "jmp") {
        bld.terminate(goto_term{trim(rest)});
        return;
    }
    if (mnemonic.size() >= 2 && mnemonic[0] == 'j') {
        expr_ptr cond = jcc_cond(mnemonic.substr(1));
        std::string fall = bld.fresh_label("fall");
        bld.terminate(branch_term{cond, trim(rest), fall});
        bld.open(fall);
        return;
    }

    std::vector<opnd> ops = parse_operands(rest);

    // movz/movs with encoded source and destination sizes (movzbl family).
    if ((mnemonic.rfind("movz", 0) == 0 || mnemonic.rfind("movs", 0) == 0) &&
        mnemonic.size() == 6) {
        auto size_of = [](char c) -> unsigned {
            if (c == 'b') return 8;
            if (c == 'w') return 16;
            if (c == 'l') return 32;
            throw out_of_scope_error("unsupported size suffix");
        };
        unsigned sw = size_of(mnemonic[4]);
        unsigned dw = size_of(mnemonic[5]);
        if (ops.size() != 2 || sw >= dw)
            throw chunk_error("malformed " + mnemonic);
        expr_ptr src = read(ops[0], sw);
        expr_ptr v = mnemonic[3] == 'z' ? uext(dw, src) : sext(dw, src);
        write(ops[1], v);
        return;
    }

    // Split the size suffix off suffixed mnemonics.
    std::string base = mnemonic;
    char suffix = 0;
    static const std::set<std::string> suffixed = {
        "mov", "lea", "add", "adc", "sub", "sbb", "inc", "dec",
        "neg", "not", "and", "or",  "xor", "shl", "sal", "shr",
        "sar", "cmp", "test", "imul", "mul", "div"};
    if (!suffixed.count(base) && base.size() > 1) {
        char last = base.back();
        std::string stem = base.substr(0, base.size() - 1);
        if ((last == 'b' || last == 'w' || last == 'l') &&
            suffixed.count(stem)) {
            base = stem;
            suffix = last;
        }
    }
    if (!suffixed.count(base))
        throw out_of_scope_error("unsupported mnemonic " + mnemonic);

    unsigned w = operand_width(ops, suffix);
    if (suffix == 'b') w = std::min(w, 8u);
    if (suffix == 'w') w = std::min(w, 16u);

    if (base == "mov") {
        if (ops.size() != 2) throw chunk_error("malformed mov");
        write(ops[1], read(ops[0], w));
        return;
    }
    if (base == "lea") {
        if (ops.size() != 2 || ops[0].kind != opnd::k::mem ||
            ops[1].kind != opnd::k::reg)
            throw chunk_error("malformed lea");
        write(ops[1], ops[0].addr);
        return;
    }
    if (base == "add" || base == "adc" || base == "sub" || base == "sbb" ||
        base == "and" || base == "or" || base == "xor" || base == "cmp" ||
        base == "test") {
        if (ops.size() != 2) throw chunk_error("malformed " + base);
        arith(base, ops[0], ops[1], w);
        return;
    }
    if (base == "inc" || base == "dec" || base == "neg" || base == "not") {
        if (ops.size() != 1) throw chunk_error("malformed " + base);
        unary(base, ops[0], w);
        return;
    }
    if (base == "shl" || base == "sal" || base == "shr" || base == "sar") {
        if (ops.size() != 2) throw chunk_error("malformed " + base);
        shift(base, ops[0], ops[1], w);
        return;
    }
    if (base == "imul") {
        if (ops.size() != 2)
            throw out_of_scope_error("only two-operand imul is supported");
        expr_ptr x = read(ops[1], w);
        expr_ptr y = read(ops[0], w);
        expr_ptr res = mul(x, y);
        expr_ptr ovf = neq_(mul(sext(2 * w, x), sext(2 * w, y)),
                            sext(2 * w, res));
        emit(assign_instr{"cf", 1, ovf});
        emit(assign_instr{"of", 1, ovf});
        write(ops[1], res);
        return;
    }
    if (base == "mul") {
        if (ops.size() != 1 || w != 32)
            throw out_of_scope_error("only 32-bit one-operand mul is supported");
        // A scratch holds the wide product so neither half-result
        // assignment reads a register the other just overwrote.
        std::string t = bld.fresh_label("tmp");
        emit(assign_instr{
            t, 64, mul(uext(64, var("eax", 32)), uext(64, read(ops[0], 32)))});
        expr_ptr wide = var(t, 64);
        emit(assign_instr{"eax", 32, extract(0, 31, wide)});
        emit(assign_instr{"edx", 32, extract(32, 63, wide)});
        expr_ptr hi_set = neq_(extract(32, 63, wide), cst(0, 32));
        emit(assign_instr{"cf", 1, hi_set});
        emit(assign_instr{"of", 1, hi_set});
        return;
    }
    if (base == "div") {
        if (ops.size() != 1 || w != 32)
            throw out_of_scope_error("only 32-bit unsigned div is supported");
        std::string tn = bld.fresh_label("tmp");
        std::string td = bld.fresh_label("tmp");
        emit(assign_instr{tn, 64, concat(var("edx", 32), var("eax", 32))});
        emit(assign_instr{td, 64, uext(64, read(ops[0], 32))});
        expr_ptr dividend = var(tn, 64);
        expr_ptr divisor = var(td, 64);
        expr_ptr q = binop(binop_kind::udiv, dividend, divisor);
        expr_ptr r = binop(binop_kind::urem, dividend, divisor);
        emit(assign_instr{"eax", 32, extract(0, 31, q)});
        emit(assign_instr{"edx", 32, extract(0, 31, r)});
        return;
    }
    throw out_of_scope_error("unsupported mnemonic " + mnemonic);
}

bool label_def(const std::string &text, std::string &label,
               std::string &rest) {
    size_t i = 0;
    while (i < text.size() && ident_char(text[i])) ++i;
    if (i == 0 || i >= text.size() || text[i] != ':') return false;
    label = text.substr(0, i);
    rest = trim(text.substr(i + 1));
    return true;
}

} // namespace

decoded_chunk decode(const chunk_spec &spec, const std::vector<location> &locs) {
    decoder dec(spec, locs);
    decoded_chunk out;
    out.clobbered = spec.clobbers;

    // Entry block binding interface symbols to allocated locations.
    dec.bld.open("init");
    dec.bld.prog.entry = "init";
    size_t nouts = spec.outputs.size();
    auto symbol_for = [](size_t idx) {
        return "__tina_" + std::to_string(idx);
    };
    auto operand_label = [&](const operand_spec &op, size_t idx) {
        return op.name.empty() ? "%" + std::to_string(idx) : op.name;
    };
    auto init_location = [&](const location &loc, const operand_spec &op,
                             size_t idx, std::string &ir_var) {
        switch (loc.kind) {
        case location::kind_t::reg: {
            expr_ptr value;
            if (op.initializer && is_integer(*op.initializer)) {
                value = cst(truncate(parse_integer(*op.initializer), 32), 32);
                ir_var = *op.initializer;
            } else {
                std::string sym = op.initializer && !op.initializer->empty()
                                      ? *op.initializer
                                      : symbol_for(idx);
                value = var(sym, 32);
                ir_var = sym;
            }
            dec.emit(assign_instr{loc.reg, 32, value});
            break;
        }
        case location::kind_t::mem:
            ir_var = loc.mem_base;
            break;
        case location::kind_t::imm:
            ir_var = loc.imm;
            break;
        }
    };

    for (size_t i = 0; i < nouts; ++i) {
        const operand_spec &op = spec.outputs[i];
        const location &loc = locs[i];
        interface_entry e;
        e.operand = operand_label(op, i);
        e.direction = op.is_inout ? operand_dir::inout : operand_dir::out;
        e.ir_var = loc.kind == location::kind_t::reg ? loc.reg : loc.mem_base;
        if (op.is_inout) {
            std::string ignored;
            init_location(loc, op, i, ignored);
        }
        out.interface.push_back(e);
    }
    for (size_t i = 0; i < spec.inputs.size(); ++i) {
        const operand_spec &op = spec.inputs[i];
        size_t idx = nouts + i;
        const location &loc = locs[idx];
        interface_entry e;
        e.operand = operand_label(op, idx);
        e.direction = operand_dir::in;
        init_location(loc, op, idx, e.ir_var);
        out.interface.push_back(e);
    }

    // Template code starts in its own block so the entry block holds
    // exactly the interface bindings.
    std::string body_lbl = dec.bld.fresh_label("body");
    dec.bld.terminate(goto_term{body_lbl});
    dec.bld.open(body_lbl);

    for (const std::string &line : spec.template_lines) {
        for (std::string part :
             [&] {
                 std::vector<std::string> parts;
                 std::string cur;
                 for (char c : dec.substitute(line)) {
                     if (c == ';') {
                         parts.push_back(cur);
                         cur.clear();
                     } else {
                         cur += c;
                     }
                 }
                 parts.push_back(cur);
                 return parts;
             }()) {
            part = trim(part);
            if (part.empty() || part[0] == '#') continue;
            std::string lbl, rest;
            while (label_def(part, lbl, rest)) {
                dec.bld.label(lbl);
                part = rest;
            }
            if (!part.empty()) dec.decode_insn(part);
        }
    }
    if (dec.bld.cur) dec.bld.terminate(halt_term{});

    out.prog = std::move(dec.bld.prog);
    std::vector<std::string> problems = check_wellformed(out.prog);
    if (!problems.empty())
        throw chunk_error("decoded chunk is ill-formed: " + problems.front());
    return out;
}

decoded_chunk decode(const chunk_spec &spec) {
    return decode(spec, allocate_operands(spec));
}

} // namespace tina
