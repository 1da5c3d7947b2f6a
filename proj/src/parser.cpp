#include "parser.hpp"

#include "tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_set>

namespace kz {

namespace {

class Parser {
public:
    Parser(std::string source, ParseOptions options)
        : options_(options) {
        ast_.source = std::move(source);
        ast_.tokens = tokenize(ast_.source);
        lines_ = LineMap(ast_.source);
    }

    Ast run() {
        ast_.nodes.push_back(Node{NodeKind::root, 0, 0, 0, 0, uint32_t(ast_.source.size())});
        push_scope();
        std::vector<NodeIndex> decls;
        while (!at(TokenTag::eof)) {
            decls.push_back(parse_top_decl());
        }
        pop_scope();
        auto [s, e] = push_extra_list(decls);
        ast_.nodes[0].lhs = s;
        ast_.nodes[0].rhs = e;
        if (options_.reject_reserved_names && saw_sentinel_ && reserved_decl_token_ != kNoNode) {
            fail_at(reserved_decl_token_,
                    "identifiers may not start with the reserved prefix '__omp_'");
        }
        return std::move(ast_);
    }

private:
    ParseOptions options_;
    Ast ast_;
    LineMap lines_;
    uint32_t pos_ = 0;
    std::vector<std::vector<std::string_view>> scopes_;
    bool saw_sentinel_ = false;
    uint32_t reserved_decl_token_ = kNoNode;

    // ----- token cursor -------------------------------------------------

    const Token& peek(uint32_t ahead = 0) const {
        uint32_t i = std::min<uint32_t>(pos_ + ahead, uint32_t(ast_.tokens.size() - 1));
        return ast_.tokens[i];
    }

    bool at(TokenTag tag) const { return peek().tag == tag; }

    Token advance() { return ast_.tokens[pos_++]; }

    std::string_view text_of(const Token& tok) const { return tok.text(ast_.source); }

    // Core token matcher; see token_matches for the OpenMP keyword rule.
    std::optional<Token> eat_token(TokenTag tag) {
        if (token_matches(peek(), tag, ast_.source)) return advance();
        return std::nullopt;
    }

    Token expect(TokenTag tag, const char* context) {
        if (auto tok = eat_token(tag)) return *tok;
        std::string msg = "expected ";
        msg += token_tag_name(tag);
        msg += " ";
        msg += context;
        msg += ", found ";
        msg += token_tag_name(peek().tag);
        fail(std::move(msg));
    }

    [[noreturn]] void fail(std::string msg) { throw CompileError(std::move(msg), peek().start); }

    [[noreturn]] void fail_at(uint32_t token_index, std::string msg) {
        throw CompileError(std::move(msg), ast_.tokens[token_index].start);
    }

    // ----- scopes (no-shadowing rule) ------------------------------------

    void push_scope() { scopes_.emplace_back(); }
    void pop_scope() { scopes_.pop_back(); }

    void declare(const Token& name_tok) {
        std::string_view name = text_of(name_tok);
        if (name == "_") {
            throw CompileError("'_' is not a declarable name", name_tok.start);
        }
        if (name.substr(0, 6) == "__omp_" && reserved_decl_token_ == kNoNode) {
            reserved_decl_token_ = token_index(name_tok);
        }
        for (const auto& scope : scopes_) {
            for (std::string_view existing : scope) {
                if (existing == name) {
                    throw CompileError("cannot redeclare '" + std::string(name) +
                                           "': shadowing is not allowed",
                                       name_tok.start);
                }
            }
        }
        scopes_.back().push_back(name);
    }

    // ----- node construction ---------------------------------------------

    NodeIndex add_node(NodeKind kind, uint32_t main_token, uint32_t lhs, uint32_t rhs,
                       uint32_t span_start, uint32_t span_end) {
        ast_.nodes.push_back(Node{kind, main_token, lhs, rhs, span_start, span_end});
        return NodeIndex(ast_.nodes.size() - 1);
    }

    // Tokens are passed around by value; recover the stream index from the
    // (strictly increasing) start offset.
    uint32_t token_index(const Token& tok) const {
        auto it = std::lower_bound(
            ast_.tokens.begin(), ast_.tokens.end(), tok.start,
            [](const Token& t, uint32_t start) { return t.start < start; });
        return uint32_t(it - ast_.tokens.begin());
    }

    std::pair<uint32_t, uint32_t> push_extra_list(const std::vector<uint32_t>& items) {
        uint32_t s = uint32_t(ast_.extra.size());
        ast_.extra.insert(ast_.extra.end(), items.begin(), items.end());
        return {s, uint32_t(ast_.extra.size())};
    }

    uint32_t span_end_of(NodeIndex n) const { return ast_.nodes[n].span_end; }

    // ----- types ----------------------------------------------------------

    TypeIndex add_type(Type t) {
        ast_.types.push_back(t);
        return TypeIndex(ast_.types.size() - 1);
    }

    TypeIndex parse_type() {
        const Token& tok = peek();
        switch (tok.tag) {
        case TokenTag::question: {
            advance();
            expect(TokenTag::star, "in optional pointer type");
            TypeIndex elem = parse_type();
            return add_type(Type{TypeKind::opt_pointer, elem, kNoNode, 0});
        }
        case TokenTag::star: {
            advance();
            TypeIndex elem = parse_type();
            return add_type(Type{TypeKind::pointer, elem, kNoNode, 0});
        }
        case TokenTag::lbracket: {
            advance();
            if (eat_token(TokenTag::rbracket)) {
                TypeIndex elem = parse_type();
                return add_type(Type{TypeKind::slice, elem, kNoNode, 0});
            }
            NodeIndex size = parse_expr();
            expect(TokenTag::rbracket, "after array length");
            TypeIndex elem = parse_type();
            return add_type(Type{TypeKind::array, elem, size, 0});
        }
        case TokenTag::identifier: {
            std::string_view name = text_of(tok);
            advance();
            if (name == "i64") return add_type(Type{TypeKind::i64_type, kNoType, kNoNode, 0});
            if (name == "f64") return add_type(Type{TypeKind::f64_type, kNoType, kNoNode, 0});
            if (name == "bool") return add_type(Type{TypeKind::bool_type, kNoType, kNoNode, 0});
            if (name == "void") return add_type(Type{TypeKind::void_type, kNoType, kNoNode, 0});
            if (name == "anyopaque") return add_type(Type{TypeKind::anyopaque, kNoType, kNoNode, 0});
            return add_type(Type{TypeKind::named, kNoType, kNoNode, token_index(tok)});
        }
        default:
            fail("expected a type");
        }
    }

    // ----- declarations ----------------------------------------------------

    NodeIndex parse_top_decl() {
        if (at(TokenTag::kw_fn)) return parse_fn_decl();
        if (at(TokenTag::kw_var) || at(TokenTag::kw_const)) return parse_var_decl();
        if (at(TokenTag::omp_sentinel)) {
            fail("directives must appear inside a function body");
        }
        fail("expected a top-level declaration");
    }

    NodeIndex parse_fn_decl() {
        Token fn_tok = advance();
        Token name = expect(TokenTag::identifier, "after 'fn'");
        declare(name);
        expect(TokenTag::lparen, "after function name");
        push_scope();
        std::vector<uint32_t> fn_extra;
        std::vector<std::pair<uint32_t, TypeIndex>> params;
        if (!at(TokenTag::rparen)) {
            do {
                Token pname = expect(TokenTag::identifier, "as parameter name");
                declare(pname);
                expect(TokenTag::colon, "after parameter name");
                TypeIndex ptype = parse_type();
                params.emplace_back(token_index(pname), ptype);
            } while (eat_token(TokenTag::comma));
        }
        expect(TokenTag::rparen, "after parameters");
        TypeIndex ret = parse_type();

        fn_extra.push_back(uint32_t(params.size()));
        for (auto [ptok, ptype] : params) {
            fn_extra.push_back(ptok);
            fn_extra.push_back(ptype);
        }
        fn_extra.push_back(ret);
        auto [extra_at, _] = push_extra_list(fn_extra);

        NodeIndex body = parse_block();
        pop_scope();
        return add_node(NodeKind::fn_decl, token_index(name), extra_at, body, fn_tok.start,
                        span_end_of(body));
    }

    NodeIndex parse_var_decl() {
        Token kw = advance(); // var or const
        Token name = expect(TokenTag::identifier, "as declaration name");
        if (kw.tag == TokenTag::kw_const && at(TokenTag::assign) &&
            peek(1).tag == TokenTag::kw_struct) {
            declare(name);
            advance(); // =
            return parse_struct_decl(kw, name);
        }
        declare(name);
        if (!eat_token(TokenTag::colon)) {
            fail("declaration of '" + std::string(text_of(name)) +
                 "' requires a type annotation");
        }
        TypeIndex type = parse_type();
        expect(TokenTag::assign, "in declaration");
        NodeIndex init = kNoNode;
        if (!eat_token(TokenTag::kw_undefined)) {
            init = parse_expr();
        }
        Token semi = expect(TokenTag::semicolon, "after declaration");
        return add_node(NodeKind::var_decl, token_index(name), type, init, kw.start, semi.end);
    }

    NodeIndex parse_struct_decl(const Token& kw, const Token& name) {
        advance(); // struct
        expect(TokenTag::lbrace, "after 'struct'");
        std::vector<uint32_t> fields;
        std::unordered_set<std::string_view> seen;
        while (!at(TokenTag::rbrace)) {
            Token fname = expect(TokenTag::identifier, "as field name");
            if (!seen.insert(text_of(fname)).second) {
                fail_at(token_index(fname), "duplicate field name");
            }
            expect(TokenTag::colon, "after field name");
            TypeIndex ftype = parse_type();
            fields.push_back(token_index(fname));
            fields.push_back(ftype);
            if (!eat_token(TokenTag::comma)) break;
        }
        expect(TokenTag::rbrace, "after struct fields");
        Token semi = expect(TokenTag::semicolon, "after struct declaration");
        auto [s, e] = push_extra_list(fields);
        return add_node(NodeKind::struct_decl, token_index(name), s, e, kw.start, semi.end);
    }

    // ----- statements -------------------------------------------------------

    NodeIndex parse_block() {
        Token open = expect(TokenTag::lbrace, "to open a block");
        push_scope();
        std::vector<NodeIndex> stmts;
        while (!at(TokenTag::rbrace)) {
            if (at(TokenTag::eof)) fail("unterminated block");
            stmts.push_back(parse_stmt());
        }
        Token close = advance();
        pop_scope();
        auto [s, e] = push_extra_list(stmts);
        return add_node(NodeKind::block, token_index(open), s, e, open.start, close.end);
    }

    NodeIndex parse_stmt() {
        switch (peek().tag) {
        case TokenTag::kw_var:
        case TokenTag::kw_const: return parse_var_decl();
        case TokenTag::kw_while: return parse_while();
        case TokenTag::kw_if: return parse_if();
        case TokenTag::kw_return: return parse_return();
        case TokenTag::lbrace: return parse_block();
        case TokenTag::omp_sentinel: return parse_directive();
        default: return parse_assign_or_call(true);
        }
    }

    NodeIndex parse_while() {
        Token kw = advance();
        expect(TokenTag::lparen, "after 'while'");
        NodeIndex cond = parse_expr();
        expect(TokenTag::rparen, "after loop condition");
        NodeIndex cont = kNoNode;
        if (eat_token(TokenTag::colon)) {
            expect(TokenTag::lparen, "in loop continuation");
            cont = parse_assign_or_call(false);
            expect(TokenTag::rparen, "after loop continuation");
        }
        NodeIndex body = parse_block();
        auto [s, _] = push_extra_list({cont, body});
        return add_node(NodeKind::while_stmt, token_index(kw), cond, s, kw.start,
                        span_end_of(body));
    }

    NodeIndex parse_if() {
        Token kw = advance();
        expect(TokenTag::lparen, "after 'if'");
        NodeIndex cond = parse_expr();
        expect(TokenTag::rparen, "after if condition");
        NodeIndex then_block = parse_block();
        NodeIndex else_stmt = kNoNode;
        uint32_t end = span_end_of(then_block);
        if (eat_token(TokenTag::kw_else)) {
            if (at(TokenTag::kw_if)) {
                else_stmt = parse_if();
            } else {
                else_stmt = parse_block();
            }
            end = span_end_of(else_stmt);
        }
        auto [s, _] = push_extra_list({then_block, else_stmt});
        return add_node(NodeKind::if_stmt, token_index(kw), cond, s, kw.start, end);
    }

    NodeIndex parse_return() {
        Token kw = advance();
        NodeIndex value = kNoNode;
        if (!at(TokenTag::semicolon)) {
            value = parse_expr();
        }
        Token semi = expect(TokenTag::semicolon, "after return");
        return add_node(NodeKind::return_stmt, token_index(kw), value, kNoNode, kw.start,
                        semi.end);
    }

    bool is_assign_op(TokenTag tag) const {
        switch (tag) {
        case TokenTag::assign:
        case TokenTag::plus_eq:
        case TokenTag::minus_eq:
        case TokenTag::star_eq:
        case TokenTag::slash_eq:
        case TokenTag::percent_eq:
        case TokenTag::amp_eq:
        case TokenTag::pipe_eq:
        case TokenTag::caret_eq: return true;
        default: return false;
        }
    }

    // Assignment statement or bare call. `with_semicolon` is false inside a
    // while continuation expression.
    NodeIndex parse_assign_or_call(bool with_semicolon) {
        NodeIndex target = parse_postfix();
        const Node& tnode = ast_.nodes[target];
        if (is_assign_op(peek().tag)) {
            Token op = advance();
            switch (tnode.kind) {
            case NodeKind::ident:
            case NodeKind::index:
            case NodeKind::member:
            case NodeKind::deref: break;
            case NodeKind::discard:
                if (op.tag != TokenTag::assign) {
                    fail_at(token_index(op), "'_' only supports plain assignment");
                }
                break;
            default: fail_at(tnode.main_token, "invalid assignment target");
            }
            NodeIndex value = parse_expr();
            uint32_t end = span_end_of(value);
            if (with_semicolon) {
                end = expect(TokenTag::semicolon, "after assignment").end;
            }
            return add_node(NodeKind::assign, token_index(op), target, value,
                            ast_.nodes[target].span_start, end);
        }
        if (tnode.kind != NodeKind::call && tnode.kind != NodeKind::builtin_call) {
            fail("expected an assignment or call statement");
        }
        uint32_t end = span_end_of(target);
        if (with_semicolon) {
            end = expect(TokenTag::semicolon, "after call statement").end;
        }
        return add_node(NodeKind::expr_stmt, ast_.nodes[target].main_token, target, kNoNode,
                        ast_.nodes[target].span_start, end);
    }

    // ----- OpenMP directives -------------------------------------------------

    NodeIndex parse_directive() {
        Token sentinel = advance();
        saw_sentinel_ = true;
        uint32_t line = lines_.line_of(sentinel.start);

        NodeKind kind;
        if (eat_token(TokenTag::omp_kw_parallel)) {
            kind = NodeKind::omp_parallel;
        } else if (eat_token(TokenTag::omp_kw_while_ws)) {
            kind = NodeKind::omp_while;
        } else if (eat_token(TokenTag::omp_kw_atomic)) {
            kind = NodeKind::omp_atomic;
        } else {
            fail("unknown OpenMP directive '" + std::string(text_of(peek())) + "'");
        }

        ClauseSet set = parse_clauses(kind, line);
        if (lines_.line_of(peek().start) == line && !at(TokenTag::eof)) {
            fail("unexpected token in directive");
        }
        uint32_t clause_index = clauses::encode(set, ast_.extra);

        if (at(TokenTag::eof) || at(TokenTag::rbrace)) {
            fail("expected a statement after the directive");
        }
        NodeIndex governed = parse_stmt();
        return add_node(kind, token_index(sentinel), clause_index, governed, sentinel.start,
                        span_end_of(governed));
    }

    bool clause_legal(NodeKind directive, TokenTag clause) const {
        switch (clause) {
        case TokenTag::omp_kw_private:
        case TokenTag::omp_kw_firstprivate:
        case TokenTag::omp_kw_reduction:
            return directive != NodeKind::omp_atomic;
        case TokenTag::omp_kw_shared:
        case TokenTag::omp_kw_default:
            return directive == NodeKind::omp_parallel;
        case TokenTag::omp_kw_schedule:
        case TokenTag::omp_kw_collapse:
        case TokenTag::omp_kw_nowait:
            return directive == NodeKind::omp_while;
        default: return false;
        }
    }

    const char* directive_name(NodeKind kind) const {
        switch (kind) {
        case NodeKind::omp_parallel: return "parallel";
        case NodeKind::omp_while: return "while";
        default: return "atomic";
        }
    }

    ClauseSet parse_clauses(NodeKind directive, uint32_t line) {
        ClauseSet set;
        bool saw_schedule = false, saw_default = false, saw_collapse = false,
             saw_nowait = false;
        std::unordered_set<std::string_view> sharing_names;

        auto check_sharing = [&](const Token& tok) {
            if (!sharing_names.insert(text_of(tok)).second) {
                fail_at(token_index(tok), "variable '" + std::string(text_of(tok)) +
                                              "' appears in more than one data-sharing clause");
            }
        };

        while (lines_.line_of(peek().start) == line && !at(TokenTag::eof)) {
            const Token& tok = peek();
            if (tok.tag != TokenTag::identifier) break;
            auto clause = omp_keyword(text_of(tok));
            if (!clause) {
                fail("unknown clause '" + std::string(text_of(tok)) + "'");
            }
            if (!clause_legal(directive, *clause)) {
                fail("clause '" + std::string(text_of(tok)) + "' not permitted on '" +
                     directive_name(directive) + "'");
            }
            advance();

            switch (*clause) {
            case TokenTag::omp_kw_private:
            case TokenTag::omp_kw_firstprivate:
            case TokenTag::omp_kw_shared: {
                expect(TokenTag::lparen, "after clause name");
                do {
                    Token name = expect(TokenTag::identifier, "in variable list");
                    check_sharing(name);
                    NodeIndex node = add_node(NodeKind::ident, token_index(name), kNoNode,
                                              kNoNode, name.start, name.end);
                    if (*clause == TokenTag::omp_kw_private) {
                        set.private_vars.push_back(node);
                    } else if (*clause == TokenTag::omp_kw_firstprivate) {
                        set.firstprivate_vars.push_back(node);
                    } else {
                        set.shared_vars.push_back(node);
                    }
                } while (eat_token(TokenTag::comma));
                expect(TokenTag::rparen, "after variable list");
                break;
            }
            case TokenTag::omp_kw_reduction: {
                expect(TokenTag::lparen, "after 'reduction'");
                ReductionOp op = parse_reduction_op();
                expect(TokenTag::colon, "after reduction operator");
                do {
                    Token name = expect(TokenTag::identifier, "in reduction list");
                    check_sharing(name);
                    NodeIndex node = add_node(NodeKind::ident, token_index(name), kNoNode,
                                              kNoNode, name.start, name.end);
                    set.reductions.emplace_back(op, node);
                } while (eat_token(TokenTag::comma));
                expect(TokenTag::rparen, "after reduction list");
                break;
            }
            case TokenTag::omp_kw_default: {
                if (saw_default) fail("duplicate 'default' clause");
                saw_default = true;
                expect(TokenTag::lparen, "after 'default'");
                if (eat_token(TokenTag::omp_kw_shared)) {
                    set.default_kind = DefaultKind::shared;
                } else if (eat_token(TokenTag::omp_kw_none)) {
                    set.default_kind = DefaultKind::none;
                } else {
                    fail("default must be 'shared' or 'none'");
                }
                expect(TokenTag::rparen, "after default kind");
                break;
            }
            case TokenTag::omp_kw_nowait:
                if (saw_nowait) fail("duplicate 'nowait' clause");
                saw_nowait = true;
                set.nowait = true;
                break;
            case TokenTag::omp_kw_schedule: {
                if (saw_schedule) fail("duplicate 'schedule' clause");
                saw_schedule = true;
                expect(TokenTag::lparen, "after 'schedule'");
                if (eat_token(TokenTag::omp_kw_static)) {
                    set.schedule.kind = ScheduleKind::static_sched;
                } else if (eat_token(TokenTag::omp_kw_dynamic)) {
                    set.schedule.kind = ScheduleKind::dynamic;
                } else if (eat_token(TokenTag::omp_kw_guided)) {
                    set.schedule.kind = ScheduleKind::guided;
                } else if (eat_token(TokenTag::omp_kw_runtime)) {
                    set.schedule.kind = ScheduleKind::runtime;
                } else {
                    fail("unknown schedule kind '" + std::string(text_of(peek())) + "'");
                }
                if (eat_token(TokenTag::comma)) {
                    if (set.schedule.kind == ScheduleKind::runtime) {
                        fail("schedule(runtime) does not accept a chunk size");
                    }
                    set.schedule.chunk = parse_clause_int("chunk size", 1, kMaxChunk);
                }
                expect(TokenTag::rparen, "after schedule");
                break;
            }
            case TokenTag::omp_kw_collapse: {
                if (saw_collapse) fail("duplicate 'collapse' clause");
                saw_collapse = true;
                expect(TokenTag::lparen, "after 'collapse'");
                set.collapse = uint8_t(parse_clause_int("collapse count", 1, 15));
                expect(TokenTag::rparen, "after collapse count");
                break;
            }
            default:
                fail("unknown clause");
            }
        }
        return set;
    }

    ReductionOp parse_reduction_op() {
        const Token& tok = peek();
        switch (tok.tag) {
        case TokenTag::plus: advance(); return ReductionOp::add;
        case TokenTag::minus: advance(); return ReductionOp::subtract;
        case TokenTag::star: advance(); return ReductionOp::multiply;
        case TokenTag::amp: advance(); return ReductionOp::bit_and;
        case TokenTag::pipe: advance(); return ReductionOp::bit_or;
        case TokenTag::caret: advance(); return ReductionOp::bit_xor;
        case TokenTag::kw_and: advance(); return ReductionOp::logical_and;
        case TokenTag::kw_or: advance(); return ReductionOp::logical_or;
        case TokenTag::identifier: {
            std::string_view t = text_of(tok);
            if (t == "min") { advance(); return ReductionOp::min; }
            if (t == "max") { advance(); return ReductionOp::max; }
            break;
        }
        default: break;
        }
        fail("unknown reduction operator");
    }

    uint32_t parse_clause_int(const char* what, uint32_t min, uint32_t max) {
        Token tok = expect(TokenTag::int_literal, "as clause argument");
        std::string_view t = text_of(tok);
        uint64_t value = 0;
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
        if (ec != std::errc() || ptr != t.data() + t.size() || value > max) {
            fail_at(token_index(tok), std::string(what) + " out of range (maximum " +
                                          std::to_string(max) + ")");
        }
        if (value < min) {
            fail_at(token_index(tok),
                    std::string(what) + " must be at least " + std::to_string(min));
        }
        return uint32_t(value);
    }

    // ----- expressions --------------------------------------------------------

    NodeIndex parse_expr() { return parse_or(); }

    NodeIndex make_binary(Token op, NodeIndex lhs, NodeIndex rhs) {
        return add_node(NodeKind::binary, token_index(op), lhs, rhs,
                        ast_.nodes[lhs].span_start, span_end_of(rhs));
    }

    NodeIndex parse_or() {
        NodeIndex lhs = parse_and();
        while (at(TokenTag::kw_or)) {
            Token op = advance();
            lhs = make_binary(op, lhs, parse_and());
        }
        return lhs;
    }

    NodeIndex parse_and() {
        NodeIndex lhs = parse_cmp();
        while (at(TokenTag::kw_and)) {
            Token op = advance();
            lhs = make_binary(op, lhs, parse_cmp());
        }
        return lhs;
    }

    bool is_cmp_op(TokenTag tag) const {
        switch (tag) {
        case TokenTag::eq_eq:
        case TokenTag::bang_eq:
        case TokenTag::lt:
        case TokenTag::lt_eq:
        case TokenTag::gt:
        case TokenTag::gt_eq: return true;
        default: return false;
        }
    }

    NodeIndex parse_cmp() {
        NodeIndex lhs = parse_bit_or();
        if (is_cmp_op(peek().tag)) {
            Token op = advance();
            lhs = make_binary(op, lhs, parse_bit_or());
            if (is_cmp_op(peek().tag)) {
                fail("comparison operators cannot be chained");
            }
        }
        return lhs;
    }

    NodeIndex parse_bit_or() {
        NodeIndex lhs = parse_bit_xor();
        while (at(TokenTag::pipe)) {
            Token op = advance();
            lhs = make_binary(op, lhs, parse_bit_xor());
        }
        return lhs;
    }

    NodeIndex parse_bit_xor() {
        NodeIndex lhs = parse_bit_and();
        while (at(TokenTag::caret)) {
            Token op = advance();
            lhs = make_binary(op, lhs, parse_bit_and());
        }
        return lhs;
    }

    NodeIndex parse_bit_and() {
        NodeIndex lhs = parse_add();
        while (at(TokenTag::amp) && peek(1).tag != TokenTag::assign) {
            Token op = advance();
            lhs = make_binary(op, lhs, parse_add());
        }
        return lhs;
    }

    NodeIndex parse_add() {
        NodeIndex lhs = parse_mul();
        while (at(TokenTag::plus) || at(TokenTag::minus)) {
            Token op = advance();
            lhs = make_binary(op, lhs, parse_mul());
        }
        return lhs;
    }

    NodeIndex parse_mul() {
        NodeIndex lhs = parse_unary();
        while (at(TokenTag::star) || at(TokenTag::slash) || at(TokenTag::percent)) {
            Token op = advance();
            lhs = make_binary(op, lhs, parse_unary());
        }
        return lhs;
    }

    NodeIndex parse_unary() {
        if (at(TokenTag::minus) || at(TokenTag::bang) || at(TokenTag::amp)) {
            Token op = advance();
            NodeIndex operand = parse_unary();
            return add_node(NodeKind::unary, token_index(op), operand, kNoNode, op.start,
                            span_end_of(operand));
        }
        return parse_postfix();
    }

    // Appends [start, end) as two extra words and returns their index.
    uint32_t push_extra_pair(uint32_t s, uint32_t e) {
        uint32_t at = uint32_t(ast_.extra.size());
        ast_.extra.push_back(s);
        ast_.extra.push_back(e);
        return at;
    }

    NodeIndex parse_postfix() {
        NodeIndex expr = parse_primary();
        for (;;) {
            if (at(TokenTag::lparen)) {
                if (ast_.nodes[expr].kind != NodeKind::ident) {
                    fail("only named functions can be called");
                }
                advance();
                std::vector<NodeIndex> args;
                if (!at(TokenTag::rparen)) {
                    do {
                        args.push_back(parse_expr());
                    } while (eat_token(TokenTag::comma));
                }
                Token close = expect(TokenTag::rparen, "after call arguments");
                auto [s, e] = push_extra_list(args);
                uint32_t pair = push_extra_pair(s, e);
                expr = add_node(NodeKind::call, ast_.nodes[expr].main_token, expr, pair,
                                ast_.nodes[expr].span_start, close.end);
            } else if (at(TokenTag::lbracket)) {
                advance();
                NodeIndex sub = parse_expr();
                Token close = expect(TokenTag::rbracket, "after index");
                expr = add_node(NodeKind::index, ast_.nodes[expr].main_token, expr, sub,
                                ast_.nodes[expr].span_start, close.end);
            } else if (at(TokenTag::dot_star)) {
                Token tok = advance();
                expr = add_node(NodeKind::deref, ast_.nodes[expr].main_token, expr, kNoNode,
                                ast_.nodes[expr].span_start, tok.end);
            } else if (at(TokenTag::dot)) {
                advance();
                Token field = expect(TokenTag::identifier, "as field name");
                expr = add_node(NodeKind::member, token_index(field), expr, kNoNode,
                                ast_.nodes[expr].span_start, field.end);
            } else {
                break;
            }
        }
        return expr;
    }

    NodeIndex parse_primary() {
        const Token& tok = peek();
        switch (tok.tag) {
        case TokenTag::int_literal: {
            Token t = advance();
            return add_node(NodeKind::int_lit, token_index(t), kNoNode, kNoNode, t.start, t.end);
        }
        case TokenTag::float_literal: {
            Token t = advance();
            return add_node(NodeKind::float_lit, token_index(t), kNoNode, kNoNode, t.start,
                            t.end);
        }
        case TokenTag::string_literal: {
            Token t = advance();
            return add_node(NodeKind::str_lit, token_index(t), kNoNode, kNoNode, t.start, t.end);
        }
        case TokenTag::kw_true:
        case TokenTag::kw_false: {
            Token t = advance();
            return add_node(NodeKind::bool_lit, token_index(t), kNoNode, kNoNode, t.start,
                            t.end);
        }
        case TokenTag::kw_null: {
            Token t = advance();
            return add_node(NodeKind::null_lit, token_index(t), kNoNode, kNoNode, t.start,
                            t.end);
        }
        case TokenTag::builtin: return parse_builtin();
        case TokenTag::lparen: {
            advance();
            NodeIndex inner = parse_expr();
            expect(TokenTag::rparen, "to close parenthesized expression");
            return inner;
        }
        case TokenTag::identifier: {
            Token t = advance();
            if (text_of(t) == "_") {
                return add_node(NodeKind::discard, token_index(t), kNoNode, kNoNode, t.start,
                                t.end);
            }
            // Struct literal: Name{ .field = ... } or Name{}
            if (at(TokenTag::lbrace) &&
                (peek(1).tag == TokenTag::dot || peek(1).tag == TokenTag::rbrace)) {
                return parse_struct_lit(t);
            }
            return add_node(NodeKind::ident, token_index(t), kNoNode, kNoNode, t.start, t.end);
        }
        default:
            fail("expected an expression");
        }
    }

    NodeIndex parse_struct_lit(const Token& name) {
        advance(); // {
        std::vector<uint32_t> inits;
        while (!at(TokenTag::rbrace)) {
            expect(TokenTag::dot, "before field initializer");
            Token field = expect(TokenTag::identifier, "as field name");
            expect(TokenTag::assign, "in field initializer");
            NodeIndex value = parse_expr();
            inits.push_back(token_index(field));
            inits.push_back(value);
            if (!eat_token(TokenTag::comma)) break;
        }
        Token close = expect(TokenTag::rbrace, "after struct literal");
        auto [s, e] = push_extra_list(inits);
        return add_node(NodeKind::struct_lit, token_index(name), s, e, name.start, close.end);
    }

    NodeIndex parse_builtin() {
        Token name = advance();
        std::string_view text = text_of(name);
        bool takes_type = text == "@ptrCast" || text == "@intToFloat" || text == "@floatToInt";
        if (!takes_type) {
            fail_at(token_index(name), "unknown builtin '" + std::string(text) + "'");
        }
        expect(TokenTag::lparen, "after builtin name");
        TypeIndex type = parse_type();
        expect(TokenTag::comma, "after builtin type argument");
        std::vector<NodeIndex> args;
        args.push_back(parse_expr());
        Token close = expect(TokenTag::rparen, "after builtin arguments");
        auto [s, e] = push_extra_list(args);
        uint32_t pair = push_extra_pair(s, e);
        return add_node(NodeKind::builtin_call, token_index(name), type, pair, name.start,
                        close.end);
    }
};

} // namespace

Ast parse(std::string source, ParseOptions options) {
    return Parser(std::move(source), options).run();
}

bool token_matches(const Token& tok, TokenTag tag, std::string_view source) {
    if (tok.tag == tag) return true;
    if (!is_omp_keyword_tag(tag)) return false;
    if (tag == TokenTag::omp_kw_while_ws && tok.tag == TokenTag::kw_while) return true;
    if (tok.tag != TokenTag::identifier) return false;
    auto mapped = omp_keyword(tok.text(source));
    return mapped && *mapped == tag;
}

std::optional<Token> eat_token(TokenCursor& cursor, TokenTag tag) {
    const Token& tok = (*cursor.tokens)[cursor.pos];
    if (token_matches(tok, tag, cursor.source)) {
        ++cursor.pos;
        return tok;
    }
    return std::nullopt;
}

} // namespace kz
