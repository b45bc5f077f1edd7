#ifndef TINA_PARSER_HPP
#define TINA_PARSER_HPP

#include "tina/program.hpp"

#include <string>

namespace tina {

struct parse_error : ir_error {
    int line, column;
    parse_error(const std::string &msg, int line, int column)
        : ir_error(msg + " (line " + std::to_string(line) + ", column " +
                   std::to_string(column) + ")"),
          line(line), column(column) {}
};

/// Parses the textual IR grammar. Variable widths are declared with
/// `name<width>` on first occurrence and may be omitted afterwards.
program parse_program(const std::string &text);

/// Expression-only entry point; `widths` supplies/learns variable widths.
expr_ptr parse_expr(const std::string &text, std::map<std::string, unsigned> &widths);

std::string print_program(const program &p);

} // namespace tina

#endif
