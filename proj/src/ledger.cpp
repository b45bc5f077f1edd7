#include "tina/ledger.hpp"

#include "tina/parser.hpp"

#include "json.hpp"

#include <sstream>

namespace tina {

const char *ledger_kind_name(ledger_kind k) {
    switch (k) {
    case ledger_kind::const_binding: return "const";
    case ledger_kind::alias: return "alias";
    case ledger_kind::affine_relation: return "affine";
    }
    return "?";
}

void assumption_ledger::record(ledger_kind k, const std::string &var, expr_ptr value,
                               const std::string &pass, std::set<std::string> scope) {
    if (!value)
        throw ir_error("ledger: null value for " + var);
    entries.push_back({k, var, std::move(value), pass, std::move(scope)});
}

const ledger_entry *assumption_ledger::find(const std::string &var) const {
    for (const auto &e : entries)
        if (e.var == var)
            return &e;
    return nullptr;
}

std::string assumption_ledger::to_json_lines() const {
    std::ostringstream os;
    for (const auto &e : entries) {
        nlohmann::json j;
        j["kind"] = ledger_kind_name(e.kind);
        j["var"] = e.var;
        j["width"] = e.value->width;
        j["value"] = expr_to_string(e.value);
        nlohmann::json vars = nlohmann::json::object();
        std::map<std::string, unsigned> fv;
        collect_free_vars(e.value, fv);
        for (auto &[n, w] : fv)
            vars[n] = w;
        j["vars"] = vars;
        j["pass"] = e.pass;
        if (!e.scope.empty())
            j["scope"] = e.scope;
        os << j.dump() << "\n";
    }
    return os.str();
}

assumption_ledger assumption_ledger::from_json_lines(const std::string &text) {
    assumption_ledger led;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        nlohmann::json j = nlohmann::json::parse(line);
        std::map<std::string, unsigned> widths;
        for (auto &[n, w] : j.at("vars").items())
            widths[n] = w.get<unsigned>();
        ledger_kind kind = ledger_kind::const_binding;
        std::string ks = j.at("kind").get<std::string>();
        if (ks == "alias")
            kind = ledger_kind::alias;
        else if (ks == "affine")
            kind = ledger_kind::affine_relation;
        else if (ks != "const")
            throw ir_error("ledger: unknown kind '" + ks + "'");
        std::set<std::string> scope;
        if (j.contains("scope"))
            scope = j.at("scope").get<std::set<std::string>>();
        led.record(kind, j.at("var").get<std::string>(),
                   parse_expr(j.at("value").get<std::string>(), widths),
                   j.at("pass").get<std::string>(), std::move(scope));
    }
    return led;
}

} // namespace tina
