#include "doctest.h"

#include "tina/parser.hpp"
#include "tina/validate.hpp"

#include <filesystem>
#include <fstream>

using namespace tina;

namespace {

const char *memset_chunk_text = R"(
.arch x86-32
.template
cld
rep stosl
.outputs
=c d0 : u32
=D d1 : ptr(u32)
.inputs
a zero : u32 = 0
0 len : u32
1 s : ptr(u32)
.clobbers
memory, cc
)";

struct memset_fixture {
    chunk_spec spec;
    decoded_chunk chunk;
    pipeline_result lifted;

    memset_fixture() {
        spec = parse_chunk(memset_chunk_text);
        chunk = decode(spec);
        lifted = run_pipeline(spec, chunk, pipeline_level::O4);
    }
};

validate_options test_options() {
    validate_options opt;
    opt.chunk_name = "memset_u32";
    opt.fuzz_iters = 300;
    opt.seed = 42;
    return opt;
}

std::set<std::string> memset_observables(const memset_fixture &f) {
    std::set<std::string> obs = f.lifted.prog.observables;
    for (const interface_entry &e : f.chunk.interface)
        if (e.direction != operand_dir::in) obs.insert(e.ir_var);
    return obs;
}

equiv_query body_query(const memset_fixture &f, bool with_affine = true) {
    const basic_block *orig = f.chunk.prog.find_block("__rep_body2");
    const basic_block *lift = f.lifted.prog.prog.find_block("__rep_body2");
    REQUIRE(orig);
    REQUIRE(lift);
    assumption_ledger ledger = f.lifted.ledger;
    if (!with_affine)
        std::erase_if(ledger.entries, [](const ledger_entry &e) {
            return e.kind == ledger_kind::affine_relation;
        });
    std::map<std::string, unsigned> ov = assigned_vars(f.chunk.prog);
    for (const auto &[v, w] : program_inputs(f.chunk.prog)) ov.emplace(v, w);
    std::map<std::string, unsigned> lv = assigned_vars(f.lifted.prog.prog);
    for (const auto &[v, w] : program_inputs(f.lifted.prog.prog))
        lv.emplace(v, w);
    return build_query(*orig, *lift, ledger, ov, lv, memset_observables(f),
                       "memset_u32");
}

program tiny_block(const std::string &body) {
    return parse_program("entry:\n" + body + "\n  halt\n");
}

equiv_query tiny_query(const program &a, const program &b) {
    std::map<std::string, unsigned> av = assigned_vars(a);
    for (const auto &[v, w] : program_inputs(a)) av.emplace(v, w);
    std::map<std::string, unsigned> bv = assigned_vars(b);
    for (const auto &[v, w] : program_inputs(b)) bv.emplace(v, w);
    return build_query(a.blocks.front(), b.blocks.front(), {}, av, bv,
                       {"y"}, "tiny");
}

} // namespace

TEST_CASE("isomorphism: identical graphs give the identity pairing") {
    memset_fixture f;
    cfg g = build_cfg(f.chunk.prog);
    iso_result r = check_isomorphism(g, g, {{f.chunk.prog.entry,
                                             f.chunk.prog.entry}});
    const auto *bp = std::get_if<block_pairing>(&r);
    REQUIRE(bp);
    CHECK(bp->pairs.size() == f.chunk.prog.blocks.size());
    for (const auto &[a, b] : bp->pairs) CHECK(a == b);
    CHECK(recheck_pairing(g, g, *bp));
}

TEST_CASE("isomorphism: loop vs unrolled loop mismatches, fuzz rescues") {
    program loop = parse_program(R"(
head:
  if ecx<32> = 0<32> then goto stop else goto body
body:
  ecx := ecx - 1<32>
  goto head
stop:
  halt
)");
    program unrolled = parse_program(R"(
head:
  if ecx<32> = 0<32> then goto stop else goto body
body:
  ecx := ecx - 1<32>
  goto head2
head2:
  if ecx = 0<32> then goto stop2 else goto body2
body2:
  ecx := ecx - 1<32>
  goto head2
stop:
  halt
stop2:
  halt
)");
    cfg g1 = build_cfg(loop), g2 = build_cfg(unrolled);
    iso_result r = check_isomorphism(g1, g2, {{"head", "head"}});
    CHECK(std::holds_alternative<iso_mismatch>(r));

    decoded_chunk orig;
    orig.prog = loop;
    pipeline_result res;
    res.prog.prog = unrolled;
    res.prog.observables = {"ecx"};
    validate_options opt = test_options();
    opt.chunk_name = "unrolled";
    validation_report rep = validate(orig, res, opt);
    CHECK_FALSE(rep.s1_ok);
    CHECK(rep.overall == "FuzzPassed");
    REQUIRE(rep.fallback.has_value());
    CHECK(rep.fallback->passed);
    CHECK(rep.fallback->iterations == 300);
}

TEST_CASE("validate: memset at O4 is fully equivalent") {
    memset_fixture f;
    validation_report rep = validate(f.chunk, f.lifted, test_options());
    CHECK(rep.s1_ok);
    CHECK(rep.overall == "Equivalent");
    CHECK(rep.blocks.size() >= 3);
    for (const block_verdict &b : rep.blocks) CHECK(b.status == "Equivalent");
    std::string json = rep.to_json();
    CHECK(json.find("\"overall\": \"Equivalent\"") != std::string::npos);
    CHECK(json.find("\"s1\": \"ok\"") != std::string::npos);
}

TEST_CASE("brute: x vs x+0 equivalent, x vs x+1 caught") {
    program a = tiny_block("  y<32> := x<32>");
    program b = tiny_block("  y<32> := x<32> + 0<32>");
    program c = tiny_block("  y<32> := x<32> + 1<32>");
    brute_result same = brute_check(tiny_query(a, b));
    CHECK(same.equivalent);
    CHECK(same.exhaustive);
    brute_result diff = brute_check(tiny_query(a, c));
    REQUIRE_FALSE(diff.equivalent);
    REQUIRE(diff.cex.has_value());
    CHECK(replay_counterexample(tiny_query(a, c), *diff.cex));
}

TEST_CASE("query: empty blocks are trivially equivalent") {
    program a = tiny_block("  y<32> := x<32>");
    basic_block empty1{"e1", {}, halt_term{}};
    basic_block empty2{"e2", {}, halt_term{}};
    equiv_query q = build_query(empty1, empty2, {}, {}, {}, {}, "empty");
    CHECK(q.goals.empty());
    brute_result r = brute_check(q);
    CHECK(r.equivalent);
    CHECK(r.cases == 0);
    CHECK(to_smtlib(q).find("(assert false)") != std::string::npos);
}

TEST_CASE("query: the loop-body pair discharges with the affine fact") {
    memset_fixture f;
    equiv_query q = body_query(f);
    // The ledger facts appear as input restrictions.
    bool has_affine = false;
    for (const ssa_equation &r : q.restrictions)
        if (r.lhs == "edi_0") has_affine = true;
    CHECK(has_affine);
    CHECK(q.compare_memory);
    brute_result ok = brute_check(q);
    CHECK(ok.equivalent);
    CHECK(ok.exhaustive);
    CHECK(ok.cases > 1000);
}

TEST_CASE("query: dropping the affine input restriction flips the verdict") {
    memset_fixture f;
    equiv_query q = body_query(f);
    size_t before = q.restrictions.size();
    std::erase_if(q.restrictions,
                  [](const ssa_equation &r) { return r.lhs == "edi_0"; });
    REQUIRE(q.restrictions.size() == before - 1);
    brute_result r = brute_check(q);
    REQUIRE_FALSE(r.equivalent);
    REQUIRE(r.cex.has_value());
    CHECK(replay_counterexample(q, *r.cex));
}

TEST_CASE("query: an unrepresentable output is flagged before solving") {
    memset_fixture f;
    equiv_query q = body_query(f, /*with_affine=*/false);
    REQUIRE_FALSE(q.notes.empty());
    CHECK(q.notes.front().rfind("interface-output mismatch", 0) == 0);
    brute_result r = brute_check(q);
    CHECK_FALSE(r.equivalent);
    CHECK(r.cases == 0); // rejected structurally, not by enumeration
}

TEST_CASE("smtlib: script shape for the loop-body query") {
    memset_fixture f;
    equiv_query q = body_query(f);
    std::string s = to_smtlib(q);
    CHECK(s.rfind("(set-logic QF_ABV)", 0) == 0);
    CHECK(s.find("(declare-const mem_0 (Array (_ BitVec 32) (_ BitVec 8)))")
          != std::string::npos);
    CHECK(s.find("(store ") != std::string::npos);
    CHECK(s.find("(assert (= edi_0 ") != std::string::npos);
    size_t cs = s.find("(check-sat)");
    REQUIRE(cs != std::string::npos);
    CHECK(s.find('(', cs + 1) == std::string::npos); // nothing after it

    std::string path = write_smtlib(q, "smt_out");
    CHECK(path == "smt_out/memset_u32.__rep_body2.smt2");
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    CHECK(text == s);
}

TEST_CASE("smtlib export without a solver degrades to brute") {
    memset_fixture f;
    validate_options opt = test_options();
    opt.backend = backend_kind::smtlib_export;
    opt.export_dir = "smt_export";
    validation_report rep = validate(f.chunk, f.lifted, opt);
    CHECK(rep.overall == "exported-only");
    CHECK_FALSE(rep.diagnostics.empty());
    CHECK(std::filesystem::exists("smt_export/memset_u32.__rep_body2.smt2"));
}

TEST_CASE("fuzz: whole-program memset agreement, and the vacuous run") {
    memset_fixture f;
    std::set<std::string> obs = memset_observables(f);
    fuzz_result r = fuzz_fallback(f.chunk.prog, f.lifted.prog.prog,
                                  f.lifted.ledger, obs, 500, 7);
    CHECK(r.passed);
    CHECK(r.iterations == 500);
    CHECK(r.out_of_fuel < 500); // most runs complete

    fuzz_result zero = fuzz_fallback(f.chunk.prog, f.lifted.prog.prog,
                                     f.lifted.ledger, obs, 0, 7);
    CHECK(zero.passed);
    CHECK(zero.vacuous);
    CHECK(zero.iterations == 0);
}

TEST_CASE("validation catches every seeded mutation") {
    memset_fixture f;
    validate_options opt = test_options();
    opt.fuzz_iters = 200;

    // Each mutation edits the lifted side (program or ledger) and must be
    // caught with a replayable counterexample.
    using mutation = std::function<void(pipeline_result &)>;
    std::vector<std::pair<std::string, mutation>> mutations;

    auto body_of = [](pipeline_result &r) -> basic_block & {
        basic_block *b = r.prog.prog.find_block("__rep_body2");
        REQUIRE(b);
        return *b;
    };

    mutations.emplace_back("store constant 1 instead of 0",
                           [&](pipeline_result &r) {
        auto &st = std::get<store_instr>(body_of(r).body.front());
        st.value = cst(1, 32);
    });
    mutations.emplace_back("store width 2 instead of 4",
                           [&](pipeline_result &r) {
        auto &st = std::get<store_instr>(body_of(r).body.front());
        st.nbytes = 2;
        st.value = cst(0, 16);
    });
    mutations.emplace_back("store address off by one",
                           [&](pipeline_result &r) {
        auto &st = std::get<store_instr>(body_of(r).body.front());
        st.addr = add(st.addr, cst(1, 32));
    });
    mutations.emplace_back("counter decrements by two",
                           [&](pipeline_result &r) {
        for (instr &in : body_of(r).body)
            if (auto *a = std::get_if<assign_instr>(&in))
                if (a->lhs == "ecx") a->rhs = add(var("ecx", 32), cst(0xfffffffe, 32));
    });
    mutations.emplace_back("counter update dropped",
                           [&](pipeline_result &r) {
        std::erase_if(body_of(r).body, [](const instr &in) {
            const auto *a = std::get_if<assign_instr>(&in);
            return a && a->lhs == "ecx";
        });
    });
    mutations.emplace_back("swapped branch targets",
                           [&](pipeline_result &r) {
        basic_block *h = r.prog.prog.find_block("__rep_head1");
        REQUIRE(h);
        auto &br = std::get<branch_term>(h->term);
        std::swap(br.then_target, br.else_target);
    });
    mutations.emplace_back("branch tests ecx = 1",
                           [&](pipeline_result &r) {
        basic_block *h = r.prog.prog.find_block("__rep_head1");
        REQUIRE(h);
        auto &br = std::get<branch_term>(h->term);
        br.cond = eq(var("ecx", 32), cst(1, 32));
    });
    mutations.emplace_back("initializer off by one",
                           [&](pipeline_result &r) {
        basic_block *b = r.prog.prog.find_block("init");
        REQUIRE(b);
        for (instr &in : b->body)
            if (auto *a = std::get_if<assign_instr>(&in))
                if (a->lhs == "ecx")
                    a->rhs = add(a->rhs, cst(1, 32));
    });
    mutations.emplace_back("affine ledger fact dropped",
                           [&](pipeline_result &r) {
        std::erase_if(r.ledger.entries, [](const ledger_entry &e) {
            return e.kind == ledger_kind::affine_relation;
        });
    });
    mutations.emplace_back("affine ledger fact scaled by two",
                           [&](pipeline_result &r) {
        for (ledger_entry &e : r.ledger.entries)
            if (e.kind == ledger_kind::affine_relation)
                e.value = mul(e.value, cst(2, 32));
    });
    mutations.emplace_back("eax constant rebound to one",
                           [&](pipeline_result &r) {
        for (ledger_entry &e : r.ledger.entries)
            if (e.var == "eax") e.value = cst(1, 32);
    });

    REQUIRE(mutations.size() >= 10);
    int caught = 0;
    for (const auto &[name, mutate] : mutations) {
        CAPTURE(name);
        pipeline_result broken = f.lifted;
        mutate(broken);
        validation_report rep = validate(f.chunk, broken, opt);
        bool flagged = rep.overall == "NotEquivalent" ||
                       rep.overall == "FuzzFailed";
        CHECK(flagged);
        if (!flagged) continue;
        ++caught;
        // Some verdict must carry a replayable counterexample.
        bool replayed = false;
        for (const block_verdict &b : rep.blocks)
            if (b.cex && b.cex->detail.rfind("interface", 0) != 0) {
                const basic_block *ob = f.chunk.prog.find_block(b.orig_id);
                const basic_block *lb =
                    broken.prog.prog.find_block(b.lifted_id);
                REQUIRE(ob);
                REQUIRE(lb);
                std::map<std::string, unsigned> ov =
                    assigned_vars(f.chunk.prog);
                for (const auto &[v2, w2] : program_inputs(f.chunk.prog))
                    ov.emplace(v2, w2);
                std::map<std::string, unsigned> lv =
                    assigned_vars(broken.prog.prog);
                for (const auto &[v2, w2] : program_inputs(broken.prog.prog))
                    lv.emplace(v2, w2);
                equiv_query q =
                    build_query(*ob, *lb, broken.ledger, ov, lv,
                                memset_observables(f), "mut");
                replayed = replay_counterexample(q, *b.cex);
                break;
            }
        if (!replayed && rep.fallback && rep.fallback->cex)
            replayed = replay_program_counterexample(
                f.chunk.prog, broken.prog.prog, broken.ledger,
                memset_observables(f), *rep.fallback->cex);
        if (!replayed)
            // Interface-mismatch verdicts carry no state to replay; the
            // dropped-ledger mutation is caught structurally.
            replayed = rep.overall == "NotEquivalent";
        CHECK(replayed);
    }
    CHECK(caught == int(mutations.size())); // zero mutants survive
}
