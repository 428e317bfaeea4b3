#include "rbn/model_parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "rbn/error.hpp"

namespace rbn {

namespace {

enum class Tok { Name, Number, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  std::size_t line = 1;
  std::size_t column = 1;
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_reserved(std::string_view name) {
  static constexpr std::string_view kReserved[] = {"wif",  "then",   "else",  "combine",
                                                   "with", "forall", "where"};
  const std::string l = lower(name);
  return std::find(std::begin(kReserved), std::end(kReserved), l) != std::end(kReserved);
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = col_;
      if (pos_ >= text_.size()) {
        out.push_back(t);
        return out;
      }
      const char c = text_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
          advance();
        t.kind = Tok::Name;
        t.text = std::string(text_.substr(start, pos_ - start));
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && pos_ + 1 < text_.size() &&
                  std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
          advance();
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
          std::size_t look = pos_ + 1;
          if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
          if (look < text_.size() && std::isdigit(static_cast<unsigned char>(text_[look]))) {
            while (pos_ < look) advance();
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
              advance();
          }
        }
        t.kind = Tok::Number;
        t.text = std::string(text_.substr(start, pos_ - start));
        const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
        if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size())
          throw SyntaxError("malformed number '" + t.text + "'", t.line, t.column);
      } else {
        t.kind = Tok::Punct;
        const std::string_view two = text_.substr(pos_, 2);
        if (two == "<-" || two == "!=") {
          t.text = std::string(two);
          advance();
          advance();
        } else if (std::string_view(";/[],()+-*&!=").find(c) != std::string_view::npos) {
          t.text = std::string(1, c);
          advance();
        } else {
          throw SyntaxError(std::string("unexpected character '") + c + "'", line_, col_);
        }
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < text_.size()) {
      if (std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        advance();
      } else if (text_.substr(pos_, 2) == "//") {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(Lexer(text).run()) {}

  Model parse_model() {
    while (at_keyword("input") || at_keyword("prob") || at_keyword("param")) {
      parse_decl();
      expect(";");
    }
    if (peek().kind == Tok::End) fail("expected at least one assignment");
    while (peek().kind != Tok::End) {
      assignments_.push_back(parse_assign());
      expect(";");
    }
    return Model::create(relations_, parameters_, assignments_);
  }

  FormulaPtr parse_standalone(const Model& scope) {
    relations_ = scope.relations();
    parameters_ = scope.parameters();
    auto f = parse_formula();
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "' after formula");
    return f;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw SyntaxError(msg, peek().line, peek().column);
  }

  bool at_punct(std::string_view p, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Punct && peek(ahead).text == p;
  }
  bool at_keyword(std::string_view kw) const {
    return peek().kind == Tok::Name && lower(peek().text) == kw;
  }

  void expect(std::string_view p) {
    if (!at_punct(p)) {
      const Token& t = peek();
      fail("expected '" + std::string(p) + "' but found " +
           (t.kind == Tok::End ? std::string("end of input") : "'" + t.text + "'"));
    }
    next();
  }
  void expect_keyword(std::string_view kw) {
    if (!at_keyword(kw)) {
      const Token& t = peek();
      std::string upper(kw);
      std::transform(upper.begin(), upper.end(), upper.begin(),
                     [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
      fail("expected " + upper + " but found " +
           (t.kind == Tok::End ? std::string("end of input") : "'" + t.text + "'"));
    }
    next();
  }

  std::string expect_name(std::string_view what) {
    if (peek().kind != Tok::Name || is_reserved(peek().text)) fail("expected " + std::string(what));
    return next().text;
  }

  int expect_int() {
    if (peek().kind != Tok::Number) fail("expected an integer");
    const Token& t = next();
    if (t.number != static_cast<double>(static_cast<int>(t.number)) ||
        t.text.find_first_of(".eE") != std::string::npos)
      throw SyntaxError("expected an integer, found '" + t.text + "'", t.line, t.column);
    return static_cast<int>(t.number);
  }

  double parse_bound() {
    bool negative = false;
    if (at_punct("-")) {
      next();
      negative = true;
    }
    if (at_keyword("inf")) {
      next();
      return negative ? -kInfinity : kInfinity;
    }
    if (peek().kind != Tok::Number) fail("expected a bound (number, inf or -inf)");
    const double v = next().number;
    return negative ? -v : v;
  }

  Interval parse_range() {
    expect("[");
    Interval r;
    r.lo = parse_bound();
    expect(",");
    r.hi = parse_bound();
    expect("]");
    return r;
  }

  void parse_decl() {
    const Token& kw = next();
    const std::string k = lower(kw.text);
    if (k == "param") {
      ParameterDecl p;
      p.name = expect_name("parameter name");
      if (at_punct("[")) p.range = parse_range();
      parameters_.push_back(std::move(p));
      return;
    }
    RelationDecl r;
    r.name = expect_name("relation name");
    expect("/");
    r.arity = expect_int();
    if (k == "prob") {
      r.kind = RelationKind::Probabilistic;
    } else {
      r.kind = RelationKind::BooleanInput;
      if (at_keyword("numeric")) {
        next();
        r.kind = RelationKind::NumericInput;
        if (at_punct("[")) r.range = parse_range();
        if (at_keyword("learnable")) {
          next();
          r.learnable = true;
        }
      }
    }
    relations_.push_back(std::move(r));
  }

  std::vector<std::string> parse_vars() {
    std::vector<std::string> vars;
    if (peek().kind != Tok::Name || is_reserved(peek().text)) return vars;
    vars.push_back(next().text);
    while (at_punct(",")) {
      next();
      vars.push_back(expect_name("variable"));
    }
    return vars;
  }

  std::vector<std::string> parse_paren_vars() {
    expect("(");
    auto vars = parse_vars();
    expect(")");
    return vars;
  }

  Assignment parse_assign() {
    Assignment a;
    a.relation = expect_name("relation name");
    if (at_punct("(")) a.vars = parse_paren_vars();
    if (at_keyword("where")) {
      next();
      a.guard = parse_guard();
    }
    expect("<-");
    a.formula = parse_formula();
    return a;
  }

  GuardAtom parse_gatom() {
    GuardAtom g;
    if (at_punct("!")) {
      next();
      g.negated = true;
      g.relation = expect_name("relation name");
      if (at_punct("(")) g.vars = parse_paren_vars();
      return g;
    }
    const std::string name = expect_name("guard atom");
    if (at_punct("=") || at_punct("!=")) {
      g.kind = next().text == "=" ? GuardAtom::Kind::Equal : GuardAtom::Kind::NotEqual;
      g.vars = {name, expect_name("variable")};
      return g;
    }
    g.relation = name;
    if (at_punct("(")) g.vars = parse_paren_vars();
    return g;
  }

  Guard parse_guard() {
    Guard g;
    g.push_back(parse_gatom());
    while (at_punct("&")) {
      next();
      g.push_back(parse_gatom());
    }
    return g;
  }

  FormulaPtr parse_formula() {
    auto lhs = parse_term();
    while (at_punct("+") || at_punct("-")) {
      const BinaryOp op = next().text == "+" ? BinaryOp::Plus : BinaryOp::Minus;
      lhs = make_binary(op, lhs, parse_term());
    }
    return lhs;
  }

  FormulaPtr parse_term() {
    auto lhs = parse_factor();
    while (at_punct("*")) {
      next();
      lhs = make_binary(BinaryOp::Times, lhs, parse_factor());
    }
    return lhs;
  }

  CombinationFunction parse_combination_function() {
    if (peek().kind != Tok::Name) fail("expected a combination function");
    std::string name = lower(next().text);
    if (at_punct("-") && peek(1).kind == Tok::Name) {
      const std::string joined = name + "-" + lower(peek(1).text);
      if (combination_function_from_name(joined)) {
        next();
        next();
        name = joined;
      }
    }
    if (auto fn = combination_function_from_name(name)) return *fn;
    throw SyntaxError("unknown combination function '" + name + "'", toks_[pos_ - 1].line,
                      toks_[pos_ - 1].column);
  }

  FormulaPtr parse_factor() {
    const Token& t = peek();
    if (t.kind == Tok::Number) {
      return make_constant(next().number);
    }
    if (at_punct("-")) {
      next();
      if (peek().kind == Tok::Number) return make_constant(-next().number);
      return make_binary(BinaryOp::Minus, make_constant(0.0), parse_factor());
    }
    if (at_punct("(")) {
      next();
      auto f = parse_formula();
      expect(")");
      return f;
    }
    if (at_keyword("wif")) {
      next();
      auto cond = parse_formula();
      expect_keyword("then");
      auto then_branch = parse_formula();
      expect_keyword("else");
      auto else_branch = parse_formula();
      return make_wif(std::move(cond), std::move(then_branch), std::move(else_branch));
    }
    if (at_keyword("combine")) {
      next();
      std::vector<FormulaPtr> bodies;
      bodies.push_back(parse_formula());
      while (at_punct(",")) {
        next();
        bodies.push_back(parse_formula());
      }
      expect_keyword("with");
      const auto fn = parse_combination_function();
      std::vector<std::string> bound;
      Guard where;
      if (at_keyword("forall")) {
        next();
        bound = parse_vars();
        if (at_keyword("where")) {
          next();
          where = parse_guard();
        }
      }
      return make_combine(std::move(bodies), fn, std::move(bound), std::move(where));
    }
    if (t.kind == Tok::Name && !is_reserved(t.text)) {
      const Token name = next();
      if (at_punct("(")) {
        auto args = parse_paren_vars();
        if (!find_relation(name.text))
          throw SyntaxError("undeclared relation '" + name.text + "'", name.line, name.column);
        return make_atom(name.text, std::move(args));
      }
      if (find_parameter(name.text)) return make_param(name.text);
      if (find_relation(name.text)) return make_atom(name.text, {});
      throw SyntaxError("undeclared name '" + name.text + "'", name.line, name.column);
    }
    if (t.kind == Tok::End) fail("unexpected end of input in formula");
    fail("unexpected '" + t.text + "' in formula");
  }

  const RelationDecl* find_relation(const std::string& name) const {
    for (const auto& r : relations_)
      if (r.name == name) return &r;
    return nullptr;
  }
  const ParameterDecl* find_parameter(const std::string& name) const {
    for (const auto& p : parameters_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<RelationDecl> relations_;
  std::vector<ParameterDecl> parameters_;
  std::vector<Assignment> assignments_;
};

}  // namespace

Model parse_model(std::string_view text) { return Parser(text).parse_model(); }

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

FormulaPtr parse_formula(std::string_view text, const Model& scope) {
  return Parser(text).parse_standalone(scope);
}

}  // namespace rbn
