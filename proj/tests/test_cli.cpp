#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;

struct run_result {
    int status = -1;
    std::string output;
};

run_result run_cli(const std::string &args) {
    static int n = 0;
    fs::path out = fs::temp_directory_path() /
                   ("tina_cli_out_" + std::to_string(n++) + ".txt");
    std::string cmd =
        std::string(TINA_BIN) + " " + args + " >" + out.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    run_result r;
    r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    fs::remove(out);
    return r;
}

std::string corpus(const std::string &name) {
    return std::string(CORPUS_DIR) + "/" + name;
}

fs::path fresh_dir(const std::string &tag) {
    fs::path d = fs::temp_directory_path() / ("tina_cli_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path &p, const std::string &text) {
    std::ofstream out(p);
    out << text;
}

} // namespace

TEST_CASE("lift writes C and ledger files and exits zero") {
    fs::path d = fresh_dir("lift");
    auto r = run_cli("lift " + corpus("memset_u32.chunk") + " " +
                     corpus("imul2.chunk") + " --out-dir " + d.string());
    CHECK(r.status == 0);
    CHECK(fs::exists(d / "memset_u32.c"));
    CHECK(fs::exists(d / "imul2.c"));
    std::string ledger = slurp(d / "memset_u32.ledger.jsonl");
    CHECK(ledger.find("\"var\":\"eax\"") != std::string::npos);
    CHECK(ledger.find("\"var\":\"df\"") != std::string::npos);
    CHECK(ledger.find("\"kind\":\"affine\"") != std::string::npos);
    CHECK(r.output.find("Lifted       2") != std::string::npos);
    CHECK(r.output.find("Rejected     0") != std::string::npos);
}

TEST_CASE("lift rejects an interface-violating chunk with nonzero exit") {
    fs::path d = fresh_dir("reject");
    write_file(d / "bad.chunk", ".arch x86-32\n"
                                ".template\n"
                                "movl $1, %eax\n"
                                ".outputs\n"
                                ".inputs\n"
                                ".clobbers\n");
    auto r = run_cli("lift " + (d / "bad.chunk").string() + " --out-dir " +
                     d.string());
    CHECK(r.status != 0);
    CHECK(r.output.find("Rejected") != std::string::npos);
}

TEST_CASE("lift classifies trivial and out-of-scope chunks without failing") {
    fs::path d = fresh_dir("taxonomy");
    auto r = run_cli("lift " + corpus("trivial_nop.chunk") + " " +
                     corpus("fp_out_of_scope.chunk") + " --out-dir " +
                     d.string());
    CHECK(r.status == 0);
    CHECK(r.output.find("Trivial      1") != std::string::npos);
    CHECK(r.output.find("Out-of-scope 1") != std::string::npos);
    auto strict = run_cli("lift " + corpus("fp_out_of_scope.chunk") +
                          " --fail-out-of-scope --out-dir " + d.string());
    CHECK(strict.status != 0);
}

TEST_CASE("validate accepts the running example and rejects a mutant") {
    auto ok = run_cli("validate " + corpus("memset_u32.chunk"));
    CHECK(ok.status == 0);
    CHECK(ok.output.find("memset_u32: Equivalent") != std::string::npos);
    auto bad =
        run_cli("validate " + corpus("memset_u32.chunk") + " --test-mutate 0");
    CHECK(bad.status != 0);
    CHECK(bad.output.find("NotEquivalent") != std::string::npos);
}

TEST_CASE("validate smtlib-export without a solver reports exported-only") {
    fs::path d = fresh_dir("smt");
    auto r = run_cli("validate " + corpus("imul2.chunk") +
                     " --backend smtlib-export --dump-dir " + d.string());
    CHECK(r.status == 0);
    CHECK(r.output.find("exported-only") != std::string::npos);
    bool found = false;
    for (auto &e : fs::recursive_directory_iterator(d))
        if (e.path().extension() == ".smt2")
            found = true;
    CHECK(found);
}

TEST_CASE("validate fuzz-only passes under --allow-fuzz and fails without") {
    auto ok = run_cli("validate " + corpus("imul2.chunk") +
                      " --backend fuzz-only --allow-fuzz --fuzz-iters 200");
    CHECK(ok.status == 0);
    CHECK(ok.output.find("FuzzPassed") != std::string::npos);
    auto strict = run_cli("validate " + corpus("imul2.chunk") +
                          " --backend fuzz-only --fuzz-iters 200");
    CHECK(strict.status != 0);
}

TEST_CASE("validate accepts IR pairs and catches a divergent pair") {
    fs::path d = fresh_dir("irpair");
    write_file(d / "orig.ir", "init:\n  x<32> := __in<32>\n  halt\n");
    write_file(d / "same.ir", "init:\n  x<32> := __in<32>\n  halt\n");
    write_file(d / "diff.ir", "init:\n  x<32> := __in<32> + 1<32>\n  halt\n");
    auto ok = run_cli("validate --ir " + (d / "orig.ir").string() + " " +
                      (d / "same.ir").string());
    CHECK(ok.status == 0);
    CHECK(ok.output.find("Equivalent") != std::string::npos);
    auto bad = run_cli("validate --ir " + (d / "orig.ir").string() + " " +
                       (d / "diff.ir").string());
    CHECK(bad.status != 0);
    CHECK(bad.output.find("NotEquivalent") != std::string::npos);
}

TEST_CASE("report is deterministic and basic lifts denser than O4") {
    fs::path d = fresh_dir("report");
    std::string inputs = corpus("memset_u32.chunk") + " " +
                         corpus("imul2.chunk") + " " +
                         corpus("count_down.chunk") + " " +
                         corpus("abs32.chunk");
    std::string args = "report " + inputs + " --fuzz-iters 100 --seed 7";
    auto a = run_cli(args + " --report " + (d / "a.txt").string());
    auto b = run_cli(args + " --report " + (d / "b.txt").string());
    CHECK(a.status == 0);
    CHECK(b.status == 0);
    std::string ta = slurp(d / "a.txt");
    CHECK(ta == slurp(d / "b.txt"));
    // parse the avg column for basic and O4
    auto avg_of = [&](const std::string &level) {
        std::istringstream is(ta);
        std::string line;
        while (std::getline(is, line)) {
            std::istringstream ls(line);
            std::string name;
            ls >> name;
            if (name == level) {
                size_t chunks, lifted, validated;
                double mn, avg, mx;
                ls >> chunks >> lifted >> validated >> mn >> avg >> mx;
                CHECK(lifted == 4);
                CHECK(validated == 4);
                return avg;
            }
        }
        FAIL("missing level row ", level);
        return 0.0;
    };
    CHECK(avg_of("basic") > avg_of("O4"));
}
