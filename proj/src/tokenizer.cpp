#include "tokenizer.hpp"

#include "diag.hpp"

#include <cctype>

namespace kz {

namespace {

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            Token tok = next();
            out.push_back(tok);
            if (tok.tag == TokenTag::eof) break;
        }
        return out;
    }

private:
    std::string_view src_;
    uint32_t pos_ = 0;

    char peek(uint32_t ahead = 0) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }

    bool starts_with(std::string_view s) const {
        return src_.substr(pos_, s.size()) == s;
    }

    [[noreturn]] void fail(std::string msg, uint32_t at) {
        throw CompileError(std::move(msg), at);
    }

    // True when only spaces/tabs separate `pos_` from the start of its line.
    bool at_line_start() const {
        uint32_t i = pos_;
        while (i > 0) {
            char c = src_[i - 1];
            if (c == '\n') return true;
            if (c != ' ' && c != '\t' && c != '\r') return false;
            --i;
        }
        return true;
    }

    Token make(TokenTag tag, uint32_t start) {
        return Token{tag, start, pos_};
    }

    Token next() {
        for (;;) {
            while (pos_ < src_.size()) {
                char c = src_[pos_];
                if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                    ++pos_;
                } else {
                    break;
                }
            }
            if (pos_ >= src_.size()) return Token{TokenTag::eof, pos_, pos_};
            if (peek() == '/' && peek(1) == '/') {
                if (starts_with("//$omp")) {
                    if (!at_line_start()) {
                        fail("OpenMP sentinel must be the first token on its line", pos_);
                    }
                    uint32_t start = pos_;
                    pos_ += 6;
                    return make(TokenTag::omp_sentinel, start);
                }
                while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
                continue;
            }
            break;
        }

        uint32_t start = pos_;
        char c = src_[pos_];

        if (is_ident_start(c)) {
            while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
            std::string_view text = src_.substr(start, pos_ - start);
            if (auto kw = lang_keyword(text)) return make(*kw, start);
            return make(TokenTag::identifier, start);
        }

        if (std::isdigit(static_cast<unsigned char>(c))) {
            return lex_number(start);
        }

        switch (c) {
        case '"': return lex_string(start);
        case '@': {
            ++pos_;
            if (!is_ident_start(peek())) fail("expected builtin name after '@'", start);
            while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
            return make(TokenTag::builtin, start);
        }
        case '(': ++pos_; return make(TokenTag::lparen, start);
        case ')': ++pos_; return make(TokenTag::rparen, start);
        case '{': ++pos_; return make(TokenTag::lbrace, start);
        case '}': ++pos_; return make(TokenTag::rbrace, start);
        case '[': ++pos_; return make(TokenTag::lbracket, start);
        case ']': ++pos_; return make(TokenTag::rbracket, start);
        case ';': ++pos_; return make(TokenTag::semicolon, start);
        case ':': ++pos_; return make(TokenTag::colon, start);
        case ',': ++pos_; return make(TokenTag::comma, start);
        case '?': ++pos_; return make(TokenTag::question, start);
        case '.':
            ++pos_;
            if (peek() == '*') { ++pos_; return make(TokenTag::dot_star, start); }
            return make(TokenTag::dot, start);
        case '+':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::plus_eq, start); }
            return make(TokenTag::plus, start);
        case '-':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::minus_eq, start); }
            return make(TokenTag::minus, start);
        case '*':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::star_eq, start); }
            return make(TokenTag::star, start);
        case '/':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::slash_eq, start); }
            return make(TokenTag::slash, start);
        case '%':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::percent_eq, start); }
            return make(TokenTag::percent, start);
        case '&':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::amp_eq, start); }
            return make(TokenTag::amp, start);
        case '|':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::pipe_eq, start); }
            return make(TokenTag::pipe, start);
        case '^':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::caret_eq, start); }
            return make(TokenTag::caret, start);
        case '!':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::bang_eq, start); }
            return make(TokenTag::bang, start);
        case '=':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::eq_eq, start); }
            return make(TokenTag::assign, start);
        case '<':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::lt_eq, start); }
            return make(TokenTag::lt, start);
        case '>':
            ++pos_;
            if (peek() == '=') { ++pos_; return make(TokenTag::gt_eq, start); }
            return make(TokenTag::gt, start);
        default:
            fail("illegal byte in source", start);
        }
    }

    Token lex_number(uint32_t start) {
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
        }
        bool is_float = false;
        if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
            is_float = true;
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
            }
        }
        if (peek() == 'e' || peek() == 'E') {
            uint32_t save = pos_;
            ++pos_;
            if (peek() == '+' || peek() == '-') ++pos_;
            if (std::isdigit(static_cast<unsigned char>(peek()))) {
                is_float = true;
                while (pos_ < src_.size() &&
                       std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                    ++pos_;
                }
            } else {
                pos_ = save;
            }
        }
        if (is_ident_start(peek())) {
            fail("invalid character in numeric literal", pos_);
        }
        return make(is_float ? TokenTag::float_literal : TokenTag::int_literal, start);
    }

    Token lex_string(uint32_t start) {
        ++pos_; // opening quote
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '"') {
                ++pos_;
                return make(TokenTag::string_literal, start);
            }
            if (c == '\n') break;
            if (c == '\\') {
                char e = peek(1);
                if (e != 'n' && e != 't' && e != '"' && e != '\\') {
                    fail("unsupported escape sequence", pos_);
                }
                pos_ += 2;
                continue;
            }
            ++pos_;
        }
        fail("unterminated string literal", start);
    }
};

} // namespace

std::vector<Token> tokenize(std::string_view source) {
    return Lexer(source).run();
}

} // namespace kz
