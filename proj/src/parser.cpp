#include "tina/parser.hpp"

#include <cctype>
#include <optional>
#include <sstream>

namespace tina {

namespace {

struct token {
    enum kind_t { ident, number, punct, end } kind;
    std::string text;
    uint64_t value = 0;
    int line = 1, column = 1;
};

struct lexer {
    const std::string &src;
    size_t pos = 0;
    int line = 1, column = 1;
    token cur;

    explicit lexer(const std::string &s) : src(s) { advance(); }

    [[noreturn]] void fail(const std::string &msg) const {
        throw parse_error(msg, cur.line, cur.column);
    }

    void bump(char c) {
        if (c == '\n') {
            line++;
            column = 1;
        } else {
            column++;
        }
        pos++;
    }

    void advance() {
        while (pos < src.size()) {
            char c = src[pos];
            if (isspace(static_cast<unsigned char>(c))) {
                bump(c);
            } else if (c == '#') { // line comment
                while (pos < src.size() && src[pos] != '\n')
                    bump(src[pos]);
            } else {
                break;
            }
        }
        cur.line = line;
        cur.column = column;
        if (pos >= src.size()) {
            cur.kind = token::end;
            cur.text.clear();
            return;
        }
        char c = src[pos];
        if (isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
            std::string id;
            while (pos < src.size() &&
                   (isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_' ||
                    src[pos] == '.')) {
                id += src[pos];
                bump(src[pos]);
            }
            cur.kind = token::ident;
            cur.text = std::move(id);
            return;
        }
        if (isdigit(static_cast<unsigned char>(c))) {
            std::string num;
            int base = 10;
            if (c == '0' && pos + 1 < src.size() && (src[pos + 1] == 'x' || src[pos + 1] == 'X')) {
                base = 16;
                bump(src[pos]);
                bump(src[pos]);
                while (pos < src.size() && isxdigit(static_cast<unsigned char>(src[pos]))) {
                    num += src[pos];
                    bump(src[pos]);
                }
                if (num.empty())
                    throw parse_error("malformed hex literal", cur.line, cur.column);
            } else {
                while (pos < src.size() && isdigit(static_cast<unsigned char>(src[pos]))) {
                    num += src[pos];
                    bump(src[pos]);
                }
            }
            cur.kind = token::number;
            cur.text = num;
            cur.value = std::stoull(num, nullptr, base);
            return;
        }
        auto two = [&](const char *s) {
            if (pos + 1 < src.size() && src[pos] == s[0] && src[pos + 1] == s[1]) {
                cur.kind = token::punct;
                cur.text = s;
                bump(s[0]);
                bump(s[1]);
                return true;
            }
            return false;
        };
        if (two(":=") || two("::") || two("!=") || two(">u") || two("<u") || two(">s") ||
            two("<s"))
            return;
        static const std::string singles = "?:;()<>@[]+-*&|^=,";
        if (singles.find(c) != std::string::npos) {
            cur.kind = token::punct;
            cur.text = std::string(1, c);
            bump(c);
            return;
        }
        throw parse_error(std::string("unexpected character '") + c + "'", line, column);
    }

    bool at_punct(const std::string &p) const {
        return cur.kind == token::punct && cur.text == p;
    }
    bool at_ident(const std::string &id) const {
        return cur.kind == token::ident && cur.text == id;
    }
    void expect_punct(const std::string &p) {
        if (!at_punct(p))
            fail("expected '" + p + "'");
        advance();
    }
    uint64_t expect_number() {
        if (cur.kind != token::number)
            fail("expected number");
        uint64_t v = cur.value;
        advance();
        return v;
    }
    std::string expect_ident() {
        if (cur.kind != token::ident)
            fail("expected identifier");
        std::string s = cur.text;
        advance();
        return s;
    }
};

bool is_keyword(const std::string &s) {
    static const std::set<std::string> kws = {
        "goto", "if",   "then", "else", "halt", "not",  "neg",  "uext",
        "sext", "extract", "udiv", "urem", "sdiv", "srem", "shl", "shr", "sar"};
    return kws.count(s) != 0;
}

struct expr_parser {
    lexer &lx;
    std::map<std::string, unsigned> &widths;

    expr_ptr parse() { return parse_ternary(); }

    expr_ptr parse_ternary() {
        expr_ptr c = parse_binary(0);
        if (lx.at_punct("?")) {
            lx.advance();
            expr_ptr t = parse_ternary();
            lx.expect_punct(":");
            expr_ptr f = parse_ternary();
            if (c->width != 1)
                lx.fail("ternary condition must have width 1");
            return ite(c, t, f);
        }
        return c;
    }

    // Precedence levels, loosest first.
    std::optional<binop_kind> binop_at_level(int level) {
        const token &t = lx.cur;
        auto m = [&](const char *p, binop_kind k) -> std::optional<binop_kind> {
            if ((t.kind == token::punct && t.text == p) ||
                (t.kind == token::ident && t.text == p))
                return k;
            return std::nullopt;
        };
        switch (level) {
        case 0:
            if (auto k = m("=", binop_kind::eq)) return k;
            if (auto k = m("!=", binop_kind::neq)) return k;
            if (auto k = m(">u", binop_kind::ugt)) return k;
            if (auto k = m("<u", binop_kind::ult)) return k;
            if (auto k = m(">s", binop_kind::sgt)) return k;
            if (auto k = m("<s", binop_kind::slt)) return k;
            return std::nullopt;
        case 1: return m("|", binop_kind::bor);
        case 2: return m("^", binop_kind::bxor);
        case 3: return m("&", binop_kind::band);
        case 4:
            if (auto k = m("shl", binop_kind::shl)) return k;
            if (auto k = m("shr", binop_kind::shr)) return k;
            if (auto k = m("sar", binop_kind::sar)) return k;
            return std::nullopt;
        case 5:
            if (auto k = m("+", binop_kind::add)) return k;
            if (auto k = m("-", binop_kind::sub)) return k;
            return std::nullopt;
        case 6:
            if (auto k = m("*", binop_kind::mul)) return k;
            if (auto k = m("udiv", binop_kind::udiv)) return k;
            if (auto k = m("urem", binop_kind::urem)) return k;
            if (auto k = m("sdiv", binop_kind::sdiv)) return k;
            if (auto k = m("srem", binop_kind::srem)) return k;
            return std::nullopt;
        case 7: return m("::", binop_kind::concat);
        default: return std::nullopt;
        }
    }

    static constexpr int max_level = 8;

    expr_ptr parse_binary(int level) {
        if (level >= max_level)
            return parse_unary();
        expr_ptr lhs = parse_binary(level + 1);
        while (auto k = binop_at_level(level)) {
            lx.advance();
            expr_ptr rhs = parse_binary(level + 1);
            try {
                lhs = binop(*k, lhs, rhs);
            } catch (const ir_error &e) {
                lx.fail(e.what());
            }
        }
        return lhs;
    }

    expr_ptr parse_unary() {
        if (lx.at_ident("not")) {
            lx.advance();
            return bnot(parse_unary());
        }
        if (lx.at_ident("neg")) {
            lx.advance();
            return neg(parse_unary());
        }
        if (lx.at_ident("uext") || lx.at_ident("sext")) {
            bool is_u = lx.cur.text == "uext";
            lx.advance();
            lx.expect_punct(":");
            unsigned n = static_cast<unsigned>(lx.expect_number());
            expr_ptr a = parse_unary();
            try {
                return is_u ? uext(n, a) : sext(n, a);
            } catch (const ir_error &e) {
                lx.fail(e.what());
            }
        }
        if (lx.at_ident("extract")) {
            lx.advance();
            lx.expect_punct(":");
            unsigned lo = static_cast<unsigned>(lx.expect_number());
            lx.expect_punct(":");
            unsigned hi = static_cast<unsigned>(lx.expect_number());
            expr_ptr a = parse_unary();
            try {
                return extract(lo, hi, a);
            } catch (const ir_error &e) {
                lx.fail(e.what());
            }
        }
        return parse_primary();
    }

    expr_ptr parse_primary() {
        if (lx.at_punct("(")) {
            lx.advance();
            expr_ptr e = parse_ternary();
            lx.expect_punct(")");
            return e;
        }
        if (lx.at_punct("@")) {
            lx.advance();
            lx.expect_punct("[");
            expr_ptr addr = parse_ternary();
            lx.expect_punct("]");
            unsigned n = static_cast<unsigned>(lx.expect_number());
            try {
                return load(addr, n);
            } catch (const ir_error &e) {
                lx.fail(e.what());
            }
        }
        if (lx.cur.kind == token::number) {
            uint64_t v = lx.cur.value;
            lx.advance();
            lx.expect_punct("<");
            unsigned w = static_cast<unsigned>(lx.expect_number());
            lx.expect_punct(">");
            try {
                return cst(v, w);
            } catch (const ir_error &e) {
                lx.fail(e.what());
            }
        }
        if (lx.cur.kind == token::ident && !is_keyword(lx.cur.text)) {
            std::string name = lx.expect_ident();
            unsigned w;
            if (lx.at_punct("<")) {
                lx.advance();
                w = static_cast<unsigned>(lx.expect_number());
                lx.expect_punct(">");
                auto [it, fresh] = widths.emplace(name, w);
                if (!fresh && it->second != w)
                    lx.fail("variable '" + name + "' redeclared at width " +
                            std::to_string(w) + ", previously " +
                            std::to_string(it->second));
            } else {
                auto it = widths.find(name);
                if (it == widths.end())
                    lx.fail("variable '" + name + "' used without a width declaration");
                w = it->second;
            }
            try {
                return var(name, w);
            } catch (const ir_error &e) {
                lx.fail(e.what());
            }
        }
        lx.fail("expected expression");
    }
};

struct program_parser {
    lexer lx;
    std::map<std::string, unsigned> widths;
    program result;

    explicit program_parser(const std::string &text) : lx(text) {}

    void skip_separators() {
        while (lx.at_punct(";"))
            lx.advance();
    }

    expr_ptr expression() {
        expr_parser ep{lx, widths};
        return ep.parse();
    }

    program run() {
        skip_separators();
        while (lx.cur.kind != token::end) {
            parse_block();
            skip_separators();
        }
        if (result.blocks.empty())
            lx.fail("empty program");
        result.entry = result.blocks.front().id;
        auto diags = check_wellformed(result);
        if (!diags.empty())
            throw parse_error(diags.front(), 1, 1);
        return std::move(result);
    }

    void parse_block() {
        std::string id = lx.expect_ident();
        lx.expect_punct(":");
        basic_block bb;
        bb.id = id;
        bool terminated = false;
        while (!terminated) {
            skip_separators();
            if (lx.at_ident("halt")) {
                lx.advance();
                bb.term = halt_term{};
                terminated = true;
            } else if (lx.at_ident("goto")) {
                lx.advance();
                bb.term = goto_term{lx.expect_ident()};
                terminated = true;
            } else if (lx.at_ident("if")) {
                lx.advance();
                expr_ptr c = expression();
                if (!lx.at_ident("then"))
                    lx.fail("expected 'then'");
                lx.advance();
                if (!lx.at_ident("goto"))
                    lx.fail("expected 'goto'");
                lx.advance();
                std::string t = lx.expect_ident();
                if (!lx.at_ident("else"))
                    lx.fail("expected 'else'");
                lx.advance();
                if (!lx.at_ident("goto"))
                    lx.fail("expected 'goto'");
                lx.advance();
                std::string f = lx.expect_ident();
                if (c->width != 1)
                    lx.fail("branch condition must have width 1");
                bb.term = branch_term{c, t, f};
                terminated = true;
            } else if (lx.at_punct("@")) {
                lx.advance();
                lx.expect_punct("[");
                expr_ptr addr = expression();
                lx.expect_punct("]");
                unsigned n = static_cast<unsigned>(lx.expect_number());
                lx.expect_punct(":=");
                expr_ptr val = expression();
                if (val->width != n * 8)
                    lx.fail("store of " + std::to_string(n) + " bytes from width " +
                            std::to_string(val->width));
                bb.body.push_back(store_instr{addr, n, val});
            } else if (lx.cur.kind == token::ident && !is_keyword(lx.cur.text)) {
                std::string name = lx.expect_ident();
                std::optional<unsigned> declared;
                if (lx.at_punct("<")) {
                    lx.advance();
                    declared = static_cast<unsigned>(lx.expect_number());
                    lx.expect_punct(">");
                }
                lx.expect_punct(":=");
                expr_ptr rhs = expression();
                unsigned w;
                if (declared) {
                    auto [it, fresh] = widths.emplace(name, *declared);
                    if (!fresh && it->second != *declared)
                        lx.fail("variable '" + name + "' redeclared at width " +
                                std::to_string(*declared));
                    w = *declared;
                } else if (auto it = widths.find(name); it != widths.end()) {
                    w = it->second;
                } else {
                    w = rhs->width; // infer on first assignment
                    widths.emplace(name, w);
                }
                if (w != rhs->width)
                    lx.fail("width mismatch: '" + name + "'<" + std::to_string(w) +
                            "> := expression of width " + std::to_string(rhs->width));
                bb.body.push_back(assign_instr{name, w, rhs});
            } else {
                lx.fail("expected statement or terminator");
            }
        }
        result.blocks.push_back(std::move(bb));
    }
};

// Printer with first-occurrence width annotations.
struct printer {
    std::ostringstream os;
    std::set<std::string> declared;

    void pvar(const std::string &name, unsigned w) {
        os << name;
        if (declared.insert(name).second)
            os << "<" << w << ">";
    }

    void pexpr(const expr_ptr &e, bool atom_ctx) {
        if (e->is_cst()) {
            const auto &c = e->as_cst();
            if (c.value > 9)
                os << "0x" << std::hex << c.value << std::dec;
            else
                os << c.value;
            os << "<" << e->width << ">";
        } else if (e->is_var()) {
            pvar(e->as_var().name, e->width);
        } else if (e->is_load()) {
            os << "@[";
            pexpr(e->as_load().addr, true);
            os << "]" << e->as_load().nbytes;
        } else if (e->is_unop()) {
            const auto &u = e->as_unop();
            switch (u.op) {
            case unop_kind::bnot: os << "not"; break;
            case unop_kind::neg: os << "neg"; break;
            case unop_kind::uext: os << "uext:" << u.n; break;
            case unop_kind::sext: os << "sext:" << u.n; break;
            case unop_kind::extract: os << "extract:" << u.lo << ":" << u.hi; break;
            }
            os << "(";
            pexpr(u.arg, true);
            os << ")";
        } else {
            bool paren = !atom_ctx;
            if (paren)
                os << "(";
            if (e->is_binop()) {
                const auto &b = e->as_binop();
                pexpr(b.lhs, false);
                os << " " << binop_spelling(b.op) << " ";
                pexpr(b.rhs, false);
            } else {
                const auto &t = e->as_ite();
                pexpr(t.cond, false);
                os << " ? ";
                pexpr(t.then_e, false);
                os << " : ";
                pexpr(t.else_e, false);
            }
            if (paren)
                os << ")";
        }
    }
};

} // namespace

program parse_program(const std::string &text) {
    program_parser pp(text);
    return pp.run();
}

expr_ptr parse_expr(const std::string &text, std::map<std::string, unsigned> &widths) {
    lexer lx(text);
    expr_parser ep{lx, widths};
    expr_ptr e = ep.parse();
    if (lx.cur.kind != token::end)
        throw parse_error("trailing input after expression", lx.cur.line, lx.cur.column);
    return e;
}

std::string print_program(const program &p) {
    printer pr;
    for (const auto &b : p.blocks) {
        pr.os << b.id << ":\n";
        for (const auto &i : b.body) {
            pr.os << "  ";
            if (const auto *a = std::get_if<assign_instr>(&i)) {
                pr.pvar(a->lhs, a->width);
                pr.os << " := ";
                pr.pexpr(a->rhs, true);
            } else {
                const auto &s = std::get<store_instr>(i);
                pr.os << "@[";
                pr.pexpr(s.addr, true);
                pr.os << "]" << s.nbytes << " := ";
                pr.pexpr(s.value, true);
            }
            pr.os << "\n";
        }
        pr.os << "  ";
        if (std::holds_alternative<halt_term>(b.term)) {
            pr.os << "halt";
        } else if (const auto *g = std::get_if<goto_term>(&b.term)) {
            pr.os << "goto " << g->target;
        } else {
            const auto &br = std::get<branch_term>(b.term);
            pr.os << "if ";
            pr.pexpr(br.cond, true);
            pr.os << " then goto " << br.then_target << " else goto " << br.else_target;
        }
        pr.os << "\n";
    }
    return pr.os.str();
}

} // namespace tina
