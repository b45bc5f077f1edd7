#include "tina/emit.hpp"
#include "tina/interface_check.hpp"
#include "tina/parser.hpp"
#include "tina/validate.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace tina;

struct run_config {
    std::vector<std::string> inputs;
    std::vector<std::vector<std::string>> ir_pairs; // validate: orig, lifted
    std::string level = "O4";
    std::string backend = "brute";
    std::string solver_cmd;
    unsigned timeout_ms = 10000;
    std::string dump_dir;
    std::string out_dir = ".";
    uint64_t seed = 1;
    uint64_t fuzz_iters = 2000;
    std::vector<std::string> relax;
    bool allow_fuzz = false;
    bool fail_out_of_scope = false;
    std::string report_path;
    int test_mutate = -1; // hook: perturb the nth lifted store before validating
};

relaxation to_relaxation(const run_config &cfg) {
    relaxation r;
    for (const auto &s : cfg.relax) {
        if (s == "flags") r.allow_flags = true;
        else if (s == "memory") r.allow_memory = true;
        // "xmm" is accepted for interface compatibility; vector chunks are
        // rejected earlier as out-of-scope, so there is nothing to downgrade.
    }
    return r;
}

backend_kind to_backend(const std::string &name) {
    if (name == "brute") return backend_kind::brute;
    if (name == "smtlib-export") return backend_kind::smtlib_export;
    if (name == "fuzz-only") return backend_kind::fuzz_only;
    throw CLI::ValidationError("--backend", "unknown backend " + name);
}

std::string read_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string &path, const std::string &text) {
    std::filesystem::path p(path);
    if (p.has_parent_path())
        std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path);
    out << text;
}

/// Table 1 taxonomy. A chunk is Relevant when it is neither Trivial,
/// Out-of-scope, nor Rejected; Lifted when the pipeline and emission succeed;
/// Validated when translation validation accepts the result.
enum class chunk_status { trivial, out_of_scope, rejected, lifted, errored };

struct chunk_outcome {
    std::string path, name;
    chunk_status status = chunk_status::errored;
    std::string detail;
    size_t statements = 0;
    size_t instructions = 0;
    std::string verdict; // validation overall, when requested
};

size_t instruction_count(const chunk_spec &spec) {
    size_t n = 0;
    for (const auto &l : spec.template_lines)
        if (!l.empty() && l.back() != ':')
            n++;
    return n;
}

bool verdict_accepted(const std::string &overall, bool allow_fuzz) {
    if (overall == "Equivalent" || overall == "exported-only")
        return true;
    return allow_fuzz && overall == "FuzzPassed";
}

/// Applies the validation self-test hook: adds one to the value of the nth
/// store of the lifted program, which any sound checker must catch.
void mutate_store(program &p, int nth) {
    int seen = 0;
    for (auto &bb : p.blocks)
        for (auto &in : bb.body)
            if (auto *st = std::get_if<store_instr>(&in)) {
                if (seen++ == nth) {
                    st->value = add(st->value, cst(1, st->value->width));
                    return;
                }
            }
}

struct processed {
    chunk_spec spec;
    decoded_chunk chunk;
    pipeline_result res;
    structured_chunk shape;
};

/// Classifies one chunk file and, for relevant chunks, runs the pipeline.
chunk_outcome process(const run_config &cfg, const std::string &path,
                      pipeline_level level, std::optional<processed> &out) {
    chunk_outcome oc;
    oc.path = path;
    oc.name = std::filesystem::path(path).stem().string();
    try {
        chunk_spec spec = parse_chunk(read_file(path));
        oc.instructions = instruction_count(spec);
        if (oc.instructions == 0) {
            oc.status = chunk_status::trivial;
            return oc;
        }
        decoded_chunk chunk = decode(spec);
        compliance_report cr = check_interface(spec, chunk, to_relaxation(cfg));
        if (cr.rejected) {
            oc.status = chunk_status::rejected;
            for (const auto &f : cr.findings) {
                if (!oc.detail.empty())
                    oc.detail += "; ";
                oc.detail += f.message;
            }
            return oc;
        }
        std::string dump =
            cfg.dump_dir.empty() ? "" : cfg.dump_dir + "/" + oc.name;
        pipeline_result res = run_pipeline(spec, chunk, level, dump);
        structured_chunk shape = structure_cfg(res.prog);
        oc.statements = statement_count(shape.body);
        oc.status = chunk_status::lifted;
        out = processed{std::move(spec), std::move(chunk), std::move(res),
                        std::move(shape)};
    } catch (const out_of_scope_error &e) {
        oc.status = chunk_status::out_of_scope;
        oc.detail = e.what();
    } catch (const std::exception &e) {
        oc.status = chunk_status::errored;
        oc.detail = e.what();
    }
    return oc;
}

validate_options make_validate_options(const run_config &cfg,
                                       const std::string &chunk_name) {
    validate_options opt;
    opt.backend = to_backend(cfg.backend);
    opt.solver_cmd = cfg.solver_cmd;
    opt.timeout_ms = cfg.timeout_ms;
    opt.export_dir = cfg.dump_dir.empty() ? cfg.out_dir : cfg.dump_dir;
    opt.fuzz_iters = cfg.fuzz_iters;
    opt.seed = cfg.seed;
    opt.chunk_name = chunk_name;
    return opt;
}

void print_taxonomy(std::ostream &os, const std::vector<chunk_outcome> &ocs,
                    bool with_validated) {
    size_t trivial = 0, oos = 0, rejected = 0, relevant = 0, lifted = 0,
           validated = 0;
    for (const auto &oc : ocs) {
        switch (oc.status) {
        case chunk_status::trivial: trivial++; break;
        case chunk_status::out_of_scope: oos++; break;
        case chunk_status::rejected: rejected++; break;
        case chunk_status::lifted:
            relevant++;
            lifted++;
            break;
        case chunk_status::errored: relevant++; break;
        }
        if (!oc.verdict.empty() && verdict_accepted(oc.verdict, true))
            validated++;
    }
    os << "Trivial      " << trivial << "\n";
    os << "Out-of-scope " << oos << "\n";
    os << "Rejected     " << rejected << "\n";
    os << "Relevant     " << relevant << "\n";
    os << "Lifted       " << lifted << "\n";
    if (with_validated)
        os << "Validated    " << validated << "\n";
}

int cmd_lift(const run_config &cfg) {
    pipeline_level level = parse_level(cfg.level);
    std::vector<chunk_outcome> ocs;
    bool failed = false;
    std::vector<std::string> inputs = cfg.inputs;
    std::sort(inputs.begin(), inputs.end());
    for (const auto &path : inputs) {
        std::optional<processed> pr;
        chunk_outcome oc = process(cfg, path, level, pr);
        if (pr) {
            write_file(cfg.out_dir + "/" + oc.name + ".c",
                       emit_c(pr->spec, pr->chunk, pr->res, oc.name));
            write_file(cfg.out_dir + "/" + oc.name + ".ledger.jsonl",
                       pr->res.ledger.to_json_lines());
        }
        if (oc.status == chunk_status::rejected ||
            oc.status == chunk_status::errored)
            failed = true;
        if (oc.status == chunk_status::out_of_scope && cfg.fail_out_of_scope)
            failed = true;
        std::cout << oc.name << ": ";
        switch (oc.status) {
        case chunk_status::trivial: std::cout << "Trivial"; break;
        case chunk_status::out_of_scope:
            std::cout << "Out-of-scope (" << oc.detail << ")";
            break;
        case chunk_status::rejected:
            std::cout << "Rejected (" << oc.detail << ")";
            break;
        case chunk_status::lifted:
            std::cout << "Lifted (" << oc.statements << " statements / "
                      << oc.instructions << " instructions)";
            break;
        case chunk_status::errored:
            std::cout << "error: " << oc.detail;
            break;
        }
        std::cout << "\n";
        ocs.push_back(std::move(oc));
    }
    print_taxonomy(std::cout, ocs, false);
    return failed ? 1 : 0;
}

int cmd_validate(const run_config &cfg) {
    pipeline_level level = parse_level(cfg.level);
    bool failed = false;
    std::ostringstream reports;
    std::vector<std::string> inputs = cfg.inputs;
    std::sort(inputs.begin(), inputs.end());
    for (const auto &path : inputs) {
        std::optional<processed> pr;
        chunk_outcome oc = process(cfg, path, level, pr);
        if (oc.status == chunk_status::trivial ||
            oc.status == chunk_status::out_of_scope) {
            std::cout << oc.name << ": skipped ("
                      << (oc.status == chunk_status::trivial ? "Trivial"
                                                             : "Out-of-scope")
                      << ")\n";
            if (oc.status == chunk_status::out_of_scope &&
                cfg.fail_out_of_scope)
                failed = true;
            continue;
        }
        if (!pr) {
            std::cout << oc.name << ": " << oc.detail << "\n";
            failed = true;
            continue;
        }
        if (cfg.test_mutate >= 0)
            mutate_store(pr->res.prog.prog, cfg.test_mutate);
        validation_report rep = validate(
            pr->chunk, pr->res, make_validate_options(cfg, oc.name));
        std::cout << oc.name << ": " << rep.overall << "\n";
        reports << rep.to_json() << "\n";
        if (!verdict_accepted(rep.overall, cfg.allow_fuzz))
            failed = true;
    }
    for (const auto &pair : cfg.ir_pairs) {
        decoded_chunk orig;
        orig.prog = parse_program(read_file(pair[0]));
        pipeline_result lifted;
        lifted.prog.prog = parse_program(read_file(pair[1]));
        // Raw IR pairs carry no interface: every variable the original
        // assigns counts as observable.
        for (const auto &[v, w] : assigned_vars(orig.prog))
            lifted.prog.observables.insert(v);
        std::string name = std::filesystem::path(pair[0]).stem().string();
        validation_report rep =
            validate(orig, lifted, make_validate_options(cfg, name));
        std::cout << name << ": " << rep.overall << "\n";
        reports << rep.to_json() << "\n";
        if (!verdict_accepted(rep.overall, cfg.allow_fuzz))
            failed = true;
    }
    if (!cfg.report_path.empty())
        write_file(cfg.report_path, reports.str());
    return failed ? 1 : 0;
}

int cmd_report(const run_config &cfg) {
    static const char *levels[] = {"basic", "O1",    "O2",    "O3",
                                   "O4",    "no-O1", "no-O2", "no-O3"};
    std::ostringstream os;
    os << "level  chunks lifted validated ratio-min ratio-avg ratio-max\n";
    std::vector<std::string> inputs = cfg.inputs;
    std::sort(inputs.begin(), inputs.end());
    for (const char *lname : levels) {
        pipeline_level level = parse_level(lname);
        size_t chunks = 0, lifted = 0, validated = 0;
        std::vector<double> ratios;
        for (const auto &path : inputs) {
            std::optional<processed> pr;
            chunk_outcome oc = process(cfg, path, level, pr);
            if (oc.status == chunk_status::trivial ||
                oc.status == chunk_status::out_of_scope)
                continue;
            chunks++;
            if (!pr)
                continue;
            lifted++;
            ratios.push_back(double(oc.statements) / double(oc.instructions));
            validation_report rep = validate(
                pr->chunk, pr->res, make_validate_options(cfg, oc.name));
            if (verdict_accepted(rep.overall, cfg.allow_fuzz))
                validated++;
        }
        char line[160];
        if (ratios.empty()) {
            std::snprintf(line, sizeof line,
                          "%-6s %6zu %6zu %9zu %9s %9s %9s\n", lname, chunks,
                          lifted, validated, "-", "-", "-");
        } else {
            double mn = ratios[0], mx = ratios[0], sum = 0;
            for (double r : ratios) {
                mn = std::min(mn, r);
                mx = std::max(mx, r);
                sum += r;
            }
            std::snprintf(line, sizeof line,
                          "%-6s %6zu %6zu %9zu %9.3f %9.3f %9.3f\n", lname,
                          chunks, lifted, validated, mn, sum / ratios.size(),
                          mx);
        }
        os << line;
    }
    if (!cfg.report_path.empty())
        write_file(cfg.report_path, os.str());
    else
        std::cout << os.str();
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"lift annotated inline-assembly chunks to verifiable C"};
    app.require_subcommand(1);
    run_config cfg;

    auto add_common = [&](CLI::App *sub, bool needs_inputs) {
        sub->add_option("inputs", cfg.inputs, "chunk files")
            ->required(needs_inputs);
        sub->add_option("--level", cfg.level,
                        "basic|O1|O2|O3|O4|no-O1|no-O2|no-O3");
        sub->add_option("--backend", cfg.backend,
                        "brute|smtlib-export|fuzz-only");
        sub->add_option("--solver-cmd", cfg.solver_cmd,
                        "external SMT solver command");
        sub->add_option("--timeout-ms", cfg.timeout_ms, "solver timeout");
        sub->add_option("--dump-dir", cfg.dump_dir, "pass snapshot directory");
        sub->add_option("--out-dir", cfg.out_dir, "output directory");
        sub->add_option("--seed", cfg.seed, "fuzzer seed");
        sub->add_option("--fuzz-iters", cfg.fuzz_iters, "fuzzer iterations");
        sub->add_option("--relax", cfg.relax, "flags|memory|xmm")
            ->check(CLI::IsMember({"flags", "memory", "xmm"}));
        sub->add_flag("--allow-fuzz", cfg.allow_fuzz,
                      "accept FuzzPassed verdicts");
        sub->add_flag("--fail-out-of-scope", cfg.fail_out_of_scope,
                      "nonzero exit when a chunk is out of scope");
        sub->add_option("--report", cfg.report_path, "report output path");
    };

    CLI::App *lift = app.add_subcommand("lift", "emit C and ledgers");
    add_common(lift, true);
    CLI::App *val = app.add_subcommand("validate", "check lifted chunks");
    add_common(val, false);
    val->add_option("--ir", cfg.ir_pairs,
                    "original and lifted IR file pair")
        ->type_size(2);
    val->add_option("--test-mutate", cfg.test_mutate,
                    "perturb the nth lifted store (self-test hook)")
        ->group("");
    CLI::App *rep = app.add_subcommand("report", "corpus metrics table");
    add_common(rep, true);

    CLI11_PARSE(app, argc, argv);
    try {
        if (lift->parsed())
            return cmd_lift(cfg);
        if (val->parsed()) {
            if (cfg.inputs.empty() && cfg.ir_pairs.empty()) {
                std::cerr << "validate: no inputs\n";
                return 2;
            }
            return cmd_validate(cfg);
        }
        return cmd_report(cfg);
    } catch (const std::exception &e) {
        std::cerr << "tina: " << e.what() << "\n";
        return 2;
    }
}
