#include "diag.hpp"
#include "parser.hpp"
#include "tokenizer.hpp"

#include <doctest.h>

#include <random>

using namespace kz;

namespace {

std::vector<TokenTag> tags_of(const std::vector<Token>& tokens) {
    std::vector<TokenTag> out;
    for (const Token& t : tokens) out.push_back(t.tag);
    return out;
}

NodeIndex find_node(const Ast& ast, NodeKind kind) {
    for (NodeIndex i = 0; i < ast.nodes.size(); ++i) {
        if (ast.nodes[i].kind == kind) return i;
    }
    return kNoNode;
}

std::string parse_error(const std::string& source) {
    try {
        parse_source(source);
    } catch (CompileError& e) {
        return e.what();
    }
    return "";
}

std::string nested_directive_source() {
    return "fn main() void {\n"
           "    var i: i64 = 0;\n"
           "    var s: i64 = 0;\n"
           "    //$omp parallel\n"
           "    {\n"
           "        i = 0;\n"
           "        //$omp while\n"
           "        while (i < 4) : (i += 1) {\n"
           "            //$omp atomic\n"
           "            s += i * 2;\n"
           "        }\n"
           "    }\n"
           "    print(s);\n"
           "}\n";
}

} // namespace

TEST_CASE("sentinel comment tokenizes as one sentinel plus ordinary code") {
    auto tokens = tokenize("//$omp parallel default(none)");
    REQUIRE(tags_of(tokens) ==
            std::vector<TokenTag>{TokenTag::omp_sentinel, TokenTag::identifier,
                                  TokenTag::identifier, TokenTag::lparen,
                                  TokenTag::identifier, TokenTag::rparen, TokenTag::eof});
    std::string_view src = "//$omp parallel default(none)";
    CHECK(tokens[1].text(src) == "parallel");
    CHECK(tokens[2].text(src) == "default");
    CHECK(tokens[4].text(src) == "none");
}

TEST_CASE("ordinary comments are skipped and the stream ends with eof") {
    auto tokens = tokenize("// plain comment\nvar x = 1;");
    REQUIRE(tags_of(tokens) ==
            std::vector<TokenTag>{TokenTag::kw_var, TokenTag::identifier, TokenTag::assign,
                                  TokenTag::int_literal, TokenTag::semicolon, TokenTag::eof});
}

TEST_CASE("OpenMP keywords stay plain identifiers outside sentinels") {
    std::string source = "var parallel: i64 = 3;\nvar shared: i64 = parallel + 1;\n";
    auto tokens = tokenize(source);
    CHECK(tokens[1].tag == TokenTag::identifier);
    CHECK(tokens[1].text(source) == "parallel");
    // and such programs parse as ordinary declarations
    Ast ast = parse_source(source);
    const Node& root = ast.nodes[0];
    CHECK(root.rhs - root.lhs == 2);
    CHECK(ast.nodes[ast.extra[root.lhs]].kind == NodeKind::var_decl);
}

TEST_CASE("token spans are increasing and reproduce the source byte for byte") {
    std::string source = "fn main() void {\n    var x: i64 = 1; // trailing\n    print(x);\n}\n";
    auto tokens = tokenize(source);
    uint32_t last_end = 0;
    std::string rebuilt;
    for (const Token& t : tokens) {
        REQUIRE(t.start >= last_end);
        rebuilt += source.substr(last_end, t.start - last_end); // gap: ws/comments
        rebuilt += std::string(t.text(source));
        last_end = t.end;
    }
    rebuilt += source.substr(last_end);
    CHECK(rebuilt == source);
}

TEST_CASE("eat_token matches OpenMP keyword tags against identifiers") {
    std::string source = "parallel myvar (";
    auto tokens = tokenize(source);
    TokenCursor cursor{&tokens, source, 0};

    SUBCASE("identifier text matching the keyword is consumed") {
        auto tok = eat_token(cursor, TokenTag::omp_kw_parallel);
        REQUIRE(tok.has_value());
        CHECK(tok->text(source) == "parallel");
        CHECK(cursor.pos == 1);
    }
    SUBCASE("mismatched identifier leaves the cursor unchanged") {
        cursor.pos = 1;
        auto tok = eat_token(cursor, TokenTag::omp_kw_parallel);
        CHECK(!tok.has_value());
        CHECK(cursor.pos == 1);
    }
    SUBCASE("exact tag match works as before") {
        cursor.pos = 2;
        auto tok = eat_token(cursor, TokenTag::lparen);
        REQUIRE(tok.has_value());
        CHECK(cursor.pos == 3);
    }
    SUBCASE("the worksharing while tag matches the language while keyword") {
        std::string ws = "while";
        auto ws_tokens = tokenize(ws);
        TokenCursor c2{&ws_tokens, ws, 0};
        CHECK(eat_token(c2, TokenTag::omp_kw_while_ws).has_value());
    }
}

TEST_CASE("parallel directive parses with governed block and clause record") {
    std::string source = "fn main() void {\n"
                         "    var a: [4]i64 = undefined;\n"
                         "    //$omp parallel shared(a)\n"
                         "    {\n"
                         "        a[0] = 1;\n"
                         "    }\n"
                         "}\n";
    Ast ast = parse_source(source);
    NodeIndex dir = find_node(ast, NodeKind::omp_parallel);
    REQUIRE(dir != kNoNode);
    const Node& node = ast.nodes[dir];
    CHECK(ast.nodes[node.rhs].kind == NodeKind::block);
    ClauseSet set = clauses::decode(ast.extra, node.lhs);
    REQUIRE(set.shared_vars.size() == 1);
    CHECK(ast.node_text(set.shared_vars[0]) == "a");
    // directive span runs from the sentinel through the governed block
    ByteRange span = ast.node_span(dir);
    CHECK(source.substr(span.start, 6) == "//$omp");
    CHECK(source[span.end - 1] == '}');
}

TEST_CASE("worksharing directive packs the schedule word") {
    std::string source = "fn main() void {\n"
                         "    var i: i64 = 0;\n"
                         "    //$omp while schedule(dynamic, 8)\n"
                         "    while (i < 10) : (i += 1) {\n"
                         "        _ = i;\n"
                         "    }\n"
                         "}\n";
    Ast ast = parse_source(source);
    NodeIndex dir = find_node(ast, NodeKind::omp_while);
    REQUIRE(dir != kNoNode);
    CHECK(ast.extra[ast.nodes[dir].lhs] == 66); // dynamic | (8 << 3)
    CHECK(ast.nodes[ast.nodes[dir].rhs].kind == NodeKind::while_stmt);
}

TEST_CASE("every directive clause record decodes back to the parsed clause set") {
    std::string source =
        "fn main() void {\n"
        "    var i: i64 = 0;\n"
        "    var s: f64 = 0.0;\n"
        "    //$omp parallel reduction(+: s) private(i) default(none)\n"
        "    {\n"
        "        i = 0;\n"
        "        //$omp while schedule(guided, 4) nowait collapse(2)\n"
        "        while (i < 6) : (i += 1) {\n"
        "            var j: i64 = 0;\n"
        "            while (j < 6) : (j += 1) {\n"
        "                s += 1.0;\n"
        "            }\n"
        "        }\n"
        "    }\n"
        "}\n";
    Ast ast = parse_source(source);
    NodeIndex par = find_node(ast, NodeKind::omp_parallel);
    ClauseSet pset = clauses::decode(ast.extra, ast.nodes[par].lhs);
    CHECK(pset.reductions.size() == 1);
    CHECK(pset.reductions[0].first == ReductionOp::add);
    CHECK(pset.private_vars.size() == 1);
    CHECK(pset.default_kind == DefaultKind::none);

    NodeIndex ws = find_node(ast, NodeKind::omp_while);
    ClauseSet wset = clauses::decode(ast.extra, ast.nodes[ws].lhs);
    CHECK(wset.schedule.kind == ScheduleKind::guided);
    CHECK(wset.schedule.chunk == 4);
    CHECK(wset.nowait);
    CHECK(wset.collapse == 2);
}

TEST_CASE("directive and clause errors are located") {
    CHECK(parse_error("fn main() void {\n//$omp single\n{\n}\n}\n")
              .find("unknown OpenMP directive") != std::string::npos);
    CHECK(parse_error("fn main() void {\n//$omp parallel frob(x)\n{\n}\n}\n")
              .find("unknown clause 'frob'") != std::string::npos);
    CHECK(parse_error("fn main() void {\n//$omp parallel schedule(static)\n{\n}\n}\n")
              .find("clause 'schedule' not permitted on 'parallel'") != std::string::npos);
    CHECK(parse_error("fn main() void {\nvar i: i64 = 0;\n"
                      "//$omp while nowait nowait\nwhile (i < 1) : (i += 1) {\n_ = i;\n}\n}\n")
              .find("duplicate 'nowait' clause") != std::string::npos);
    CHECK(parse_error("fn main() void {\nvar x: i64 = 0;\n"
                      "//$omp parallel private(x) shared(x)\n{\nx = 1;\n}\n}\n")
              .find("more than one data-sharing clause") != std::string::npos);
    CHECK(parse_error("fn main() void {\n//$omp parallel\n}\n")
              .find("expected a statement after the directive") != std::string::npos);
}

TEST_CASE("schedule chunk boundaries follow the 29-bit encoding") {
    std::string prefix = "fn main() void {\nvar i: i64 = 0;\n//$omp while schedule(static, ";
    std::string suffix = ")\nwhile (i < 1) : (i += 1) {\n_ = i;\n}\n}\n";
    CHECK(parse_error(prefix + "536870911" + suffix).empty());
    CHECK(parse_error(prefix + "536870912" + suffix).find("chunk size out of range") !=
          std::string::npos);
    CHECK(parse_error(prefix + "0" + suffix).find("must be at least 1") != std::string::npos);
    CHECK(parse_error("fn main() void {\nvar i: i64 = 0;\n//$omp while collapse(16)\n"
                      "while (i < 1) : (i += 1) {\n_ = i;\n}\n}\n")
              .find("collapse count out of range") != std::string::npos);
    CHECK(parse_error("fn main() void {\nvar i: i64 = 0;\n//$omp while schedule(runtime, 4)\n"
                      "while (i < 1) : (i += 1) {\n_ = i;\n}\n}\n")
              .find("schedule(runtime) does not accept a chunk size") != std::string::npos);
}

TEST_CASE("shadowing is rejected at parse time") {
    CHECK(parse_error("fn main() void {\nvar x: i64 = 0;\n{\nvar x: i64 = 1;\n_ = x;\n}\n_ = x;\n}\n")
              .find("shadowing is not allowed") != std::string::npos);
}

TEST_CASE("reserved prefix is rejected only alongside sentinels") {
    std::string with = "fn main() void {\nvar __omp_x: i64 = 0;\n"
                       "//$omp parallel\n{\n__omp_x = 1;\n}\n}\n";
    CHECK(parse_error(with).find("reserved prefix") != std::string::npos);
    std::string without = "fn main() void {\nvar __omp_x: i64 = 0;\n_ = __omp_x;\n}\n";
    CHECK(parse_error(without).empty());
}

TEST_CASE("sentinel must start its line") {
    CHECK_THROWS_AS(tokenize("var x: i64 = 1; //$omp parallel"), CompileError);
}

TEST_CASE("lexical errors carry byte offsets") {
    try {
        tokenize("var s: i64 = \"unterminated");
        FAIL("expected a lexical error");
    } catch (CompileError& e) {
        CHECK(std::string(e.what()).find("unterminated string") != std::string::npos);
        CHECK(e.offset() == 13);
    }
    try {
        tokenize("var x = 1; $");
        FAIL("expected a lexical error");
    } catch (CompileError& e) {
        CHECK(std::string(e.what()).find("illegal byte") != std::string::npos);
    }
}

TEST_CASE("node_span covers constructs and rejects invalid indices") {
    std::string source = "fn main() void {\n    var x: i64 = 1;\n    print(x);\n}\n";
    Ast ast = parse_source(source);
    ByteRange root = ast.node_span(0);
    CHECK(root.start == 0);
    CHECK(root.end == source.size());
    NodeIndex ident = kNoNode;
    for (NodeIndex i = 0; i < ast.nodes.size(); ++i) {
        if (ast.nodes[i].kind == NodeKind::ident && ast.node_text(i) == "x") ident = i;
    }
    REQUIRE(ident != kNoNode);
    CHECK(ast.node_text(ident) == "x");
    CHECK_THROWS_AS(ast.node_span(NodeIndex(ast.nodes.size())), std::out_of_range);
}

TEST_CASE("every node span covers the spans of its children") {
    std::string source = nested_directive_source();
    Ast ast = parse_source(source);
    // spot-check: directive spans contain their governed statements
    for (NodeIndex i = 0; i < ast.nodes.size(); ++i) {
        const Node& n = ast.nodes[i];
        if (n.kind == NodeKind::omp_parallel || n.kind == NodeKind::omp_while ||
            n.kind == NodeKind::omp_atomic) {
            const Node& governed = ast.nodes[n.rhs];
            CHECK(n.span_start <= governed.span_start);
            CHECK(n.span_end >= governed.span_end);
        }
        if (n.kind == NodeKind::binary) {
            CHECK(n.span_start <= ast.nodes[n.lhs].span_start);
            CHECK(n.span_end >= ast.nodes[n.rhs].span_end);
        }
    }
}

TEST_CASE("tokenizer survives random byte input") {
    std::mt19937 rng(12345);
    for (int i = 0; i < 10000; ++i) {
        size_t len = rng() % 64;
        std::string input;
        for (size_t j = 0; j < len; ++j) input += char(rng() % 256);
        try {
            auto tokens = tokenize(input);
            CHECK(!tokens.empty());
            CHECK(tokens.back().tag == TokenTag::eof);
        } catch (CompileError& e) {
            CHECK(e.offset() <= input.size());
        }
    }
}

TEST_CASE("parser survives random printable token soup") {
    std::mt19937 rng(777);
    const char* atoms[] = {"fn",    "var",   "while", "(",      ")",     "{",  "}",
                           "i64",   "x",     "1",     "2.5",    ";",     ":",  "=",
                           "+=",    "//$omp", "parallel", "shared", ",",  "*",  "&",
                           "print", "if",    "else",  "return", "\"s\"", ".",  "undefined"};
    for (int i = 0; i < 3000; ++i) {
        std::string input;
        size_t len = rng() % 40;
        for (size_t j = 0; j < len; ++j) {
            input += atoms[rng() % (sizeof(atoms) / sizeof(atoms[0]))];
            input += (rng() % 4 == 0) ? "\n" : " ";
        }
        try {
            parse_source(input);
        } catch (CompileError& e) {
            CHECK(e.offset() <= input.size());
        }
    }
}
