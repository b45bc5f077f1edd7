#include "doctest.h"

#include "tina/interp.hpp"
#include "tina/parser.hpp"
#include "tina/passes.hpp"

#include <random>

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

decoded_chunk decode_lines(const std::vector<std::string> &lines) {
    chunk_spec spec;
    spec.template_lines = lines;
    return decode(spec);
}

typed_program untyped(const program &p) {
    typed_program t;
    t.prog = p;
    return t;
}

const basic_block *branch_block(const program &p) {
    for (const basic_block &bb : p.blocks)
        if (std::holds_alternative<branch_term>(bb.term)) return &bb;
    return nullptr;
}

size_t count_stores(const program &p) {
    size_t n = 0;
    for (const basic_block &bb : p.blocks)
        for (const instr &in : bb.body)
            if (std::holds_alternative<store_instr>(in)) ++n;
    return n;
}

machine_state random_regs(std::mt19937_64 &rng) {
    machine_state s;
    for (const char *r : {"eax", "ebx", "ecx", "edx", "esi", "edi"})
        s.set_var(r, static_cast<uint32_t>(rng()), 32);
    for (const char *f : {"zf", "sf", "cf", "of", "df"})
        s.set_var(f, rng() & 1, 1);
    s.mem_default = [](uint32_t a) { return static_cast<uint8_t>(a * 37 + 5); };
    return s;
}

/// Both programs, started from the same state, must agree on the named
/// variables and on all of memory.
void check_same_behavior(const program &a, const program &b,
                         const std::vector<std::string> &vars,
                         const machine_state &init) {
    interp_result ra = interpret(a, init);
    interp_result rb = interpret(b, init);
    REQUIRE(ra.ok());
    REQUIRE(rb.ok());
    for (const std::string &v : vars) {
        CAPTURE(v);
        unsigned w = ra.state->vars.at(v).second;
        REQUIRE(ra.state->get_var(v, w) == rb.state->get_var(v, w));
    }
    std::map<uint32_t, uint8_t> ma(ra.state->mem.begin(), ra.state->mem.end());
    std::map<uint32_t, uint8_t> mb(rb.state->mem.begin(), rb.state->mem.end());
    REQUIRE(ma == mb);
}

} // namespace

TEST_CASE("type recovery: memset interface types flow into the IR") {
    chunk_spec spec = parse_chunk(memset_chunk_text);
    decoded_chunk chunk = decode(spec);
    typed_program t = propagate_types(spec, chunk);

    REQUIRE(t.types.count("edi"));
    CHECK(t.types.at("edi").is_pointer);
    CHECK(t.types.at("edi").pointee_bytes() == 4);
    REQUIRE(t.types.count("ecx"));
    CHECK_FALSE(t.types.at("ecx").is_pointer);
    CHECK(t.types.at("ecx").bits == 32);
    REQUIRE(t.types.count("eax"));
    CHECK_FALSE(t.types.at("eax").is_pointer);
    CHECK(t.observables == std::set<std::string>{"ecx", "edi"});
    CHECK(t.diagnostics.empty());

    // The symbolic input carrying the buffer keeps its pointer type.
    REQUIRE(t.types.count("__tina_4"));
    CHECK(t.types.at("__tina_4").is_pointer);
    REQUIRE(t.types.count("__tina_3"));
    CHECK_FALSE(t.types.at("__tina_3").is_pointer);
}

TEST_CASE("type recovery: pointer/value clash degrades to unsigned") {
    chunk_spec spec;
    spec.outputs.push_back({"r", true, false, "out", parse_ctype("u32"), {}});
    spec.inputs.push_back({"r", false, false, "a", parse_ctype("u32"), {}});
    spec.inputs.push_back({"r", false, false, "p", parse_ctype("ptr(u32)"), {}});
    // edx first aliases the pointer, then the plain value.
    spec.template_lines = {"movl %2, %edx", "movl %1, %edx", "movl %1, %0"};
    spec.clobbers = {"edx"};
    decoded_chunk chunk = decode(spec);
    typed_program t = propagate_types(spec, chunk);
    CHECK_FALSE(t.types.at("edx").is_pointer);
    CHECK_FALSE(t.diagnostics.empty());
}

TEST_CASE("type recovery: output type clash is a hard error") {
    chunk_spec spec;
    spec.outputs.push_back({"r", true, false, "out", parse_ctype("u32"), {}});
    spec.inputs.push_back({"r", false, false, "p", parse_ctype("ptr(u32)"), {}});
    spec.template_lines = {"movl %1, %0", "movl $0, (%0)"};
    decoded_chunk chunk = decode(spec);
    CHECK_THROWS_AS(propagate_types(spec, chunk), chunk_error);
}

TEST_CASE("predicate recovery: decl;jg") {
    decoded_chunk chunk = decode_lines(
        {"decl %ecx", "jg done", "movl $5, %ebx", "done: movl %ecx, %eax"});
    typed_program t = recover_predicates(untyped(chunk.prog));

    const basic_block *bb = branch_block(t.prog);
    REQUIRE(bb);
    expr_ptr expected = binop(binop_kind::sgt,
                              add(var("ecx", 32), cst(1, 32)), cst(1, 32));
    CHECK(expr_equal(std::get<branch_term>(bb->term).cond, expected));

    // Flag definitions feeding only the rewritten branch are gone.
    for (const auto &[v, w] : assigned_vars(t.prog)) {
        CAPTURE(v);
        CHECK(w != 1);
    }

    // Behavior is preserved on every 8-bit-embedded counter value.
    std::mt19937_64 rng(11);
    for (int i = 0; i < 300; ++i) {
        machine_state s = random_regs(rng);
        if (i < 16) s.set_var("ecx", static_cast<uint32_t>(i - 8), 32);
        machine_state t0 = s;
        interp_result ra = interpret(chunk.prog, s);
        interp_result rb = interpret(t.prog, t0);
        REQUIRE(ra.ok());
        REQUIRE(rb.ok());
        CHECK(ra.state->get_var("eax", 32) == rb.state->get_var("eax", 32));
        CHECK(ra.state->get_var("ebx", 32) == rb.state->get_var("ebx", 32));
    }
}

TEST_CASE("predicate recovery: cmp;jb becomes an unsigned compare") {
    decoded_chunk chunk = decode_lines(
        {"cmpl %ebx, %eax", "jb less", "movl $0, %edx", "less: movl $1, %ecx"});
    typed_program t = recover_predicates(untyped(chunk.prog));
    const basic_block *bb = branch_block(t.prog);
    REQUIRE(bb);
    expr_ptr expected =
        binop(binop_kind::ult, var("eax", 32), var("ebx", 32));
    CHECK(expr_equal(std::get<branch_term>(bb->term).cond, expected));
}

TEST_CASE("predicate recovery: flag-free branches are untouched") {
    program p = parse_program(R"(
entry:
  goto head
head:
  if ecx<32> = 0<32> then goto out else goto body
body:
  ecx := ecx - 1<32>
  goto head
out:
  halt
)");
    typed_program t = recover_predicates(untyped(p));
    CHECK(print_program(t.prog) == print_program(p));
}

TEST_CASE("predicate recovery: missing backend degrades with a diagnostic") {
    decoded_chunk chunk = decode_lines(
        {"decl %ecx", "jg done", "movl $5, %ebx", "done: movl %ecx, %eax"});
    typed_program t = recover_predicates(untyped(chunk.prog), nullptr);
    CHECK_FALSE(t.diagnostics.empty());
    const basic_block *bb = branch_block(t.prog);
    REQUIRE(bb);
    // Condition still mentions flags.
    CHECK(mentions_var(std::get<branch_term>(bb->term).cond, "zf"));
}

TEST_CASE("register unpacking: byte arithmetic uses byte variables") {
    decoded_chunk chunk = decode_lines({"movl %ebx, %eax", "addb %al, %ah"});
    typed_program t0 = untyped(chunk.prog);
    t0.types["eax"] = parse_ctype("u32");
    typed_program t = unpack_registers(t0);

    std::map<std::string, unsigned> vars = assigned_vars(t.prog);
    CHECK(vars.count("eax_0_7"));
    CHECK(vars.count("eax_8_15"));
    CHECK(vars.at("eax_0_7") == 8);
    CHECK(t.types.at("eax_0_7").bits == 8);

    // The byte add reads the generated fragments, not masked extracts of eax.
    bool uses_fragment = false;
    for (const basic_block &bb : t.prog.blocks)
        for (const instr &in : bb.body)
            if (const auto *a = std::get_if<assign_instr>(&in))
                if (mentions_var(a->rhs, "eax_0_7") &&
                    mentions_var(a->rhs, "eax_8_15"))
                    uses_fragment = true;
    CHECK(uses_fragment);

    std::mt19937_64 rng(22);
    for (int i = 0; i < 200; ++i)
        check_same_behavior(chunk.prog, t.prog,
                            {"eax", "ebx", "zf", "sf", "cf", "of"},
                            random_regs(rng));
}

TEST_CASE("register unpacking: multiple reaching defs block substitution") {
    program p = parse_program(R"(
entry:
  if c<1> then goto a else goto b
a:
  eax<32> := x<32>
  goto join
b:
  eax := y<32>
  goto join
join:
  lo<8> := extract:0:7(eax)
  halt
)");
    typed_program t = unpack_registers(untyped(p));
    // The extract in `join` sees two defs of eax and must stay an extract.
    const basic_block *join = t.prog.find_block("join");
    REQUIRE(join);
    bool extract_left = false;
    for (const instr &in : join->body)
        if (const auto *a = std::get_if<assign_instr>(&in))
            if (a->lhs == "lo" && a->rhs->is_unop() &&
                a->rhs->as_unop().op == unop_kind::extract)
                extract_left = true;
    CHECK(extract_left);
    std::mt19937_64 rng(33);
    for (int i = 0; i < 100; ++i) {
        machine_state s;
        s.set_var("c", rng() & 1, 1);
        s.set_var("x", static_cast<uint32_t>(rng()), 32);
        s.set_var("y", static_cast<uint32_t>(rng()), 32);
        check_same_behavior(p, t.prog, {"eax", "lo"}, s);
    }
}

TEST_CASE("loop normalization: store address rebased onto the counter") {
    program p = parse_program(R"(
entry:
  ecx<32> := len<32>
  edi<32> := base<32>
  goto head
head:
  if ecx = 0<32> then goto out else goto body
body:
  @[edi]4 := 0<32>
  edi := edi + 4<32>
  ecx := ecx - 1<32>
  goto head
out:
  halt
)");
    typed_program t0 = untyped(p);
    t0.observables = {"ecx", "edi"};
    auto [t, ledger] = normalize_loops(t0);

    REQUIRE(ledger.entries.size() == 1);
    const ledger_entry *e = ledger.find("edi");
    REQUIRE(e);
    CHECK(e->kind == ledger_kind::affine_relation);
    CHECK(e->pass == "normalize_loops");
    CHECK(t.observables == std::set<std::string>{"ecx"});

    // edi's update is gone; the store address is counter-based.
    const basic_block *body = t.prog.find_block("body");
    REQUIRE(body);
    for (const instr &in : body->body) {
        if (const auto *a = std::get_if<assign_instr>(&in))
            CHECK(a->lhs != "edi");
        if (const auto *s = std::get_if<store_instr>(&in)) {
            CHECK_FALSE(mentions_var(s->addr, "edi"));
            CHECK(mentions_var(s->addr, "ecx"));
        }
    }

    // Same memory effect and counter, and the relation replays edi.
    for (uint32_t len = 0; len <= 6; ++len) {
        machine_state s;
        s.set_var("len", len, 32);
        s.set_var("base", 0x1000, 32);
        interp_result ra = interpret(p, s);
        interp_result rb = interpret(t.prog, s);
        REQUIRE(ra.ok());
        REQUIRE(rb.ok());
        CHECK(ra.state->get_var("ecx", 32) == rb.state->get_var("ecx", 32));
        std::map<uint32_t, uint8_t> ma(ra.state->mem.begin(),
                                       ra.state->mem.end());
        std::map<uint32_t, uint8_t> mb(rb.state->mem.begin(),
                                       rb.state->mem.end());
        CHECK(ma == mb);
        CHECK(eval_expr(e->value, *rb.state) ==
              ra.state->get_var("edi", 32));
    }
}

TEST_CASE("loop normalization: non-affine loops are skipped") {
    program p = parse_program(R"(
entry:
  ecx<32> := len<32>
  edi<32> := base<32>
  goto head
head:
  if ecx = 0<32> then goto out else goto body
body:
  edi := edi * 2<32>
  ecx := ecx - 1<32>
  goto head
out:
  halt
)");
    auto [t, ledger] = normalize_loops(untyped(p));
    CHECK(ledger.entries.empty());
    CHECK(print_program(t.prog) == print_program(p));
}

TEST_CASE("pipeline: level names round-trip") {
    for (pipeline_level l :
         {pipeline_level::basic, pipeline_level::O1, pipeline_level::O2,
          pipeline_level::O3, pipeline_level::O4, pipeline_level::no_O1,
          pipeline_level::no_O2, pipeline_level::no_O3})
        CHECK(parse_level(level_name(l)) == l);
    CHECK_THROWS_AS(parse_level("O5"), ir_error);
}

TEST_CASE("pipeline: memset at O4 collapses to a single counted store loop") {
    chunk_spec spec = parse_chunk(memset_chunk_text);
    decoded_chunk chunk = decode(spec);
    pipeline_result res = run_pipeline(spec, chunk, pipeline_level::O4);

    CHECK(count_stores(res.prog.prog) == 1);
    std::map<std::string, unsigned> vars = assigned_vars(res.prog.prog);
    CHECK_FALSE(vars.count("edi"));
    CHECK_FALSE(vars.count("eax"));
    CHECK_FALSE(vars.count("df"));

    const ledger_entry *eax = res.ledger.find("eax");
    REQUIRE(eax);
    CHECK(eax->kind == ledger_kind::const_binding);
    CHECK(eax->value->is_cst());
    CHECK(eax->value->as_cst().value == 0);
    const ledger_entry *df = res.ledger.find("df");
    REQUIRE(df);
    CHECK(df->value->as_cst().value == 0);
    const ledger_entry *edi = res.ledger.find("edi");
    REQUIRE(edi);
    CHECK(edi->kind == ledger_kind::affine_relation);

    for (uint32_t len = 0; len <= 8; ++len) {
        machine_state s;
        s.set_var("__tina_3", len, 32);
        s.set_var("__tina_4", 0x2000, 32);
        interp_result ra = interpret(chunk.prog, s);
        interp_result rb = interpret(res.prog.prog, s);
        REQUIRE(ra.ok());
        REQUIRE(rb.ok());
        CHECK(ra.state->get_var("ecx", 32) == rb.state->get_var("ecx", 32));
        std::map<uint32_t, uint8_t> ma(ra.state->mem.begin(),
                                       ra.state->mem.end());
        std::map<uint32_t, uint8_t> mb(rb.state->mem.begin(),
                                       rb.state->mem.end());
        CHECK(ma == mb);
        CHECK(eval_expr(edi->value, *rb.state) ==
              ra.state->get_var("edi", 32));
    }
}

TEST_CASE("pipeline: basic level leaves the decoded program unchanged") {
    chunk_spec spec = parse_chunk(memset_chunk_text);
    decoded_chunk chunk = decode(spec);
    pipeline_result res = run_pipeline(spec, chunk, pipeline_level::basic);
    CHECK(print_program(res.prog.prog) == print_program(chunk.prog));
}

TEST_CASE("pipeline: every level preserves observable behavior") {
    chunk_spec spec = parse_chunk(memset_chunk_text);
    decoded_chunk chunk = decode(spec);
    for (pipeline_level l :
         {pipeline_level::basic, pipeline_level::O1, pipeline_level::O2,
          pipeline_level::O3, pipeline_level::O4, pipeline_level::no_O1,
          pipeline_level::no_O2, pipeline_level::no_O3}) {
        CAPTURE(level_name(l));
        pipeline_result res = run_pipeline(spec, chunk, l);
        for (uint32_t len : {0u, 1u, 3u, 7u}) {
            machine_state s;
            s.set_var("__tina_3", len, 32);
            s.set_var("__tina_4", 0x3000, 32);
            interp_result ra = interpret(chunk.prog, s);
            interp_result rb = interpret(res.prog.prog, s);
            REQUIRE(ra.ok());
            REQUIRE(rb.ok());
            CHECK(ra.state->get_var("ecx", 32) ==
                  rb.state->get_var("ecx", 32));
            std::map<uint32_t, uint8_t> ma(ra.state->mem.begin(),
                                           ra.state->mem.end());
            std::map<uint32_t, uint8_t> mb(rb.state->mem.begin(),
                                           rb.state->mem.end());
            CHECK(ma == mb);
            // Observable outputs survive unless the ledger replays them.
            if (res.ledger.find("edi") == nullptr)
                CHECK(ra.state->get_var("edi", 32) ==
                      rb.state->get_var("edi", 32));
        }
    }
}

TEST_CASE("pipeline: no flag variable drives a branch after O1") {
    for (auto lines : std::vector<std::vector<std::string>>{
             {"decl %ecx", "jg out", "movl $1, %eax", "out: movl $2, %ebx"},
             {"cmpl %ebx, %eax", "jb out", "movl $0, %edx",
              "out: movl $1, %ecx"},
             {"addl %ebx, %eax", "js out", "movl $0, %edx",
              "out: movl $1, %ecx"}}) {
        chunk_spec spec;
        spec.template_lines = lines;
        decoded_chunk chunk = decode(spec);
        pipeline_result res = run_pipeline(spec, chunk, pipeline_level::O1);
        for (const basic_block &bb : res.prog.prog.blocks)
            if (const auto *br = std::get_if<branch_term>(&bb.term))
                for (const char *f : {"zf", "sf", "cf", "of", "df"}) {
                    CAPTURE(bb.id);
                    CHECK_FALSE(mentions_var(br->cond, f));
                }
    }
}
