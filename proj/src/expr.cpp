#include "lump/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace lump {
namespace {

enum class Op {
  kConst,
  kVar,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,  // integer exponent in `aux`
  kNeg,
  kSin,
  kCos,
  kExp,
  kLog,
  kSqrt,
};

struct Node {
  Op op;
  double value = 0.0;  // kConst
  int aux = 0;         // kVar: variable index, kPow: exponent
  int a = -1, b = -1;  // child node indices (children precede parents)
  std::size_t pos = 0; // byte offset in source, for diagnostics
};

// First-order dual: value and one directional derivative.
struct Dual {
  double v = 0.0, d = 0.0;
};

// Second-order jet along two directions: value, both first derivatives, and
// the mixed second derivative. Cross terms are grouped so that swapping the
// two seed directions yields a bit-identical `dij`.
struct Jet2 {
  double v = 0.0, di = 0.0, dj = 0.0, dij = 0.0;
};

inline double primal(double x) { return x; }
inline double primal(const Dual& x) { return x.v; }
inline double primal(const Jet2& x) { return x.v; }

inline double add(double a, double b) { return a + b; }
inline Dual add(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
inline Jet2 add(const Jet2& a, const Jet2& b) {
  return {a.v + b.v, a.di + b.di, a.dj + b.dj, a.dij + b.dij};
}

inline double sub(double a, double b) { return a - b; }
inline Dual sub(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
inline Jet2 sub(const Jet2& a, const Jet2& b) {
  return {a.v - b.v, a.di - b.di, a.dj - b.dj, a.dij - b.dij};
}

inline double mul(double a, double b) { return a * b; }
inline Dual mul(const Dual& a, const Dual& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
inline Jet2 mul(const Jet2& a, const Jet2& b) {
  return {a.v * b.v, a.di * b.v + a.v * b.di, a.dj * b.v + a.v * b.dj,
          a.dij * b.v + (a.di * b.dj + a.dj * b.di) + a.v * b.dij};
}

inline double div(double a, double b) { return a / b; }
inline Dual div(const Dual& a, const Dual& b) {
  double v = a.v / b.v;
  return {v, (a.d - v * b.d) / b.v};
}
inline Jet2 div(const Jet2& a, const Jet2& b) {
  double v = a.v / b.v;
  double di = (a.di - v * b.di) / b.v;
  double dj = (a.dj - v * b.dj) / b.v;
  double dij = (a.dij - (di * b.dj + dj * b.di) - v * b.dij) / b.v;
  return {v, di, dj, dij};
}

inline double neg(double a) { return -a; }
inline Dual neg(const Dual& a) { return {-a.v, -a.d}; }
inline Jet2 neg(const Jet2& a) { return {-a.v, -a.di, -a.dj, -a.dij}; }

// h(u) for a smooth unary h with derivatives h', h'' at u.v.
inline double apply(double hv, double, double, double) { return hv; }
inline Dual applyd(double hv, double h1, const Dual& u) {
  return {hv, h1 * u.d};
}
inline Jet2 applyj(double hv, double h1, double h2, const Jet2& u) {
  return {hv, h1 * u.di, h1 * u.dj, h2 * (u.di * u.dj) + h1 * u.dij};
}

inline double sin_(double u) { return std::sin(u); }
inline Dual sin_(const Dual& u) { return applyd(std::sin(u.v), std::cos(u.v), u); }
inline Jet2 sin_(const Jet2& u) {
  double s = std::sin(u.v), c = std::cos(u.v);
  return applyj(s, c, -s, u);
}

inline double cos_(double u) { return std::cos(u); }
inline Dual cos_(const Dual& u) { return applyd(std::cos(u.v), -std::sin(u.v), u); }
inline Jet2 cos_(const Jet2& u) {
  double s = std::sin(u.v), c = std::cos(u.v);
  return applyj(c, -s, -c, u);
}

inline double exp_(double u) { return std::exp(u); }
inline Dual exp_(const Dual& u) {
  double e = std::exp(u.v);
  return applyd(e, e, u);
}
inline Jet2 exp_(const Jet2& u) {
  double e = std::exp(u.v);
  return applyj(e, e, e, u);
}

inline double log_(double u) { return std::log(u); }
inline Dual log_(const Dual& u) { return applyd(std::log(u.v), 1.0 / u.v, u); }
inline Jet2 log_(const Jet2& u) {
  return applyj(std::log(u.v), 1.0 / u.v, -1.0 / (u.v * u.v), u);
}

inline double sqrt_(double u) { return std::sqrt(u); }
inline Dual sqrt_(const Dual& u) {
  double r = std::sqrt(u.v);
  return applyd(r, 0.5 / r, u);
}
inline Jet2 sqrt_(const Jet2& u) {
  double r = std::sqrt(u.v);
  return applyj(r, 0.5 / r, -0.25 / (r * u.v), u);
}

inline double ipow(double x, int k) {
  // k >= 0; exponentiation by squaring keeps the result deterministic.
  double r = 1.0, base = x;
  for (int e = k; e > 0; e >>= 1) {
    if (e & 1) r *= base;
    base *= base;
  }
  return r;
}

inline double pow_(double u, int k) {
  if (k >= 0) return ipow(u, k);
  return 1.0 / ipow(u, -k);
}
inline Dual pow_(const Dual& u, int k) {
  if (k == 0) return {1.0, 0.0};
  double p1 = pow_(u.v, k - 1);
  return {p1 * u.v, k * p1 * u.d};
}
inline Jet2 pow_(const Jet2& u, int k) {
  if (k == 0) return {1.0, 0.0, 0.0, 0.0};
  if (k == 1) return u;
  double p2 = pow_(u.v, k - 2);
  double p1 = p2 * u.v;
  double h1 = k * p1;
  double h2 = double(k) * (k - 1) * p2;
  return applyj(p1 * u.v, h1, h2, u);
}

}  // namespace

struct Expression::Data {
  std::vector<Node> nodes;  // topological order, root last
  std::vector<std::string> variables;
  int arity = 0;
  std::string source;
};

namespace {

class Parser {
 public:
  Parser(std::string_view src, const std::vector<std::string>& vars)
      : src_(src), vars_(vars) {}

  std::vector<Node> run() {
    for (const auto& v : vars_) {
      for (const char* f : {"sin", "cos", "exp", "log", "sqrt", "neg"}) {
        if (v == f)
          throw std::invalid_argument("variable name '" + v +
                                      "' collides with a reserved function");
      }
    }
    int root = parse_expr();
    skip_ws();
    if (pos_ != src_.size())
      throw ParseError("unexpected trailing input", pos_);
    (void)root;
    return std::move(nodes_);
  }

 private:
  std::string_view src_;
  const std::vector<std::string>& vars_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;

  void skip_ws() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t'))
      ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  int push(Node n) {
    nodes_.push_back(n);
    return int(nodes_.size()) - 1;
  }

  int parse_expr() {
    int lhs = parse_term();
    for (;;) {
      skip_ws();
      std::size_t at = pos_;
      if (eat('+')) {
        int rhs = parse_term();
        lhs = push({Op::kAdd, 0, 0, lhs, rhs, at});
      } else if (eat('-')) {
        int rhs = parse_term();
        lhs = push({Op::kSub, 0, 0, lhs, rhs, at});
      } else {
        return lhs;
      }
    }
  }

  int parse_term() {
    int lhs = parse_factor();
    for (;;) {
      skip_ws();
      std::size_t at = pos_;
      if (eat('*')) {
        int rhs = parse_factor();
        lhs = push({Op::kMul, 0, 0, lhs, rhs, at});
      } else if (eat('/')) {
        int rhs = parse_factor();
        lhs = push({Op::kDiv, 0, 0, lhs, rhs, at});
      } else {
        return lhs;
      }
    }
  }

  int parse_factor() {
    skip_ws();
    std::size_t at = pos_;
    if (eat('-')) {
      int inner = parse_factor();
      return push({Op::kNeg, 0, 0, inner, -1, at});
    }
    int b = parse_base();
    skip_ws();
    at = pos_;
    if (eat('^')) {
      int k = parse_int_literal();
      return push({Op::kPow, 0, k, b, -1, at});
    }
    return b;
  }

  int parse_int_literal() {
    skip_ws();
    std::size_t start = pos_;
    if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
    std::size_t digits = pos_;
    while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) ++pos_;
    if (pos_ == digits)
      throw ParseError("expected integer exponent", start);
    int value = 0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc())
      throw ParseError("integer exponent out of range", start);
    return value;
  }

  int parse_base() {
    skip_ws();
    if (pos_ >= src_.size())
      throw ParseError("expected expression", pos_);
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      int inner = parse_expr();
      if (!eat(')'))
        throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit((unsigned char)c) || c == '.') return parse_number();
    if (std::isalpha((unsigned char)c) || c == '_') return parse_ident();
    throw ParseError("expected expression", pos_);
  }

  int parse_number() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t mark = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ >= src_.size() || !std::isdigit((unsigned char)src_[pos_])) {
        pos_ = mark;  // 'e' belongs to something else; not part of the number
      } else {
        while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) ++pos_;
      }
    }
    double value = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
      throw ParseError("malformed number", start);
    if (!std::isfinite(value))
      throw ParseError("number literal out of range", start);
    return push({Op::kConst, value, 0, -1, -1, start});
  }

  int parse_ident() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_'))
      ++pos_;
    std::string name(src_.substr(start, pos_ - start));
    static const struct { const char* name; Op op; } kFuncs[] = {
        {"sin", Op::kSin}, {"cos", Op::kCos},   {"exp", Op::kExp},
        {"log", Op::kLog}, {"sqrt", Op::kSqrt}, {"neg", Op::kNeg},
    };
    for (const auto& f : kFuncs) {
      if (name == f.name) {
        if (!eat('('))
          throw ParseError("expected '(' after function '" + name + "'", pos_);
        int arg = parse_expr();
        if (!eat(')'))
          throw ParseError("expected ')'", pos_);
        return push({f.op, 0, 0, arg, -1, start});
      }
    }
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i] == name)
        return push({Op::kVar, 0, int(i), -1, -1, start});
    }
    throw ParseError("unknown identifier '" + name + "'", start);
  }
};

template <class T>
T eval_nodes(const std::vector<Node>& nodes, std::span<const T> xs) {
  std::vector<T> st(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    switch (n.op) {
      case Op::kConst:
        st[i] = T{};
        if constexpr (std::is_same_v<T, double>) st[i] = n.value;
        else st[i].v = n.value;
        break;
      case Op::kVar:
        st[i] = xs[n.aux];
        break;
      case Op::kAdd: st[i] = add(st[n.a], st[n.b]); break;
      case Op::kSub: st[i] = sub(st[n.a], st[n.b]); break;
      case Op::kMul: st[i] = mul(st[n.a], st[n.b]); break;
      case Op::kDiv:
        if (primal(st[n.b]) == 0.0) throw EvalError("division by zero", n.pos);
        st[i] = div(st[n.a], st[n.b]);
        break;
      case Op::kPow:
        if (primal(st[n.a]) == 0.0 && n.aux < 0)
          throw EvalError("zero raised to a negative power", n.pos);
        st[i] = pow_(st[n.a], n.aux);
        break;
      case Op::kNeg: st[i] = neg(st[n.a]); break;
      case Op::kSin: st[i] = sin_(st[n.a]); break;
      case Op::kCos: st[i] = cos_(st[n.a]); break;
      case Op::kExp: st[i] = exp_(st[n.a]); break;
      case Op::kLog:
        if (primal(st[n.a]) <= 0.0)
          throw EvalError("log of a non-positive value", n.pos);
        st[i] = log_(st[n.a]);
        break;
      case Op::kSqrt:
        if (primal(st[n.a]) < 0.0)
          throw EvalError("sqrt of a negative value", n.pos);
        st[i] = sqrt_(st[n.a]);
        break;
    }
    if (!std::isfinite(primal(st[i])))
      throw EvalError("non-finite intermediate value", n.pos);
  }
  return st.back();
}

// Precedence levels used by render(): 1 additive, 2 multiplicative,
// 3 unary minus, 4 power, 5 atom.
int precedence(const Node& n) {
  switch (n.op) {
    case Op::kAdd:
    case Op::kSub: return 1;
    case Op::kMul:
    case Op::kDiv: return 2;
    case Op::kNeg: return 3;
    case Op::kPow: return 4;
    case Op::kConst: return n.value < 0 ? 3 : 5;
    default: return 5;
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void render_node(const std::vector<Node>& nodes,
                 const std::vector<std::string>& vars, int idx, int min_prec,
                 std::string& out) {
  const Node& n = nodes[idx];
  bool parens = precedence(n) < min_prec;
  if (parens) out += '(';
  switch (n.op) {
    case Op::kConst: out += format_double(n.value); break;
    case Op::kVar: out += vars[n.aux]; break;
    case Op::kAdd:
      render_node(nodes, vars, n.a, 1, out);
      out += " + ";
      render_node(nodes, vars, n.b, 2, out);
      break;
    case Op::kSub:
      render_node(nodes, vars, n.a, 1, out);
      out += " - ";
      render_node(nodes, vars, n.b, 2, out);
      break;
    case Op::kMul:
      render_node(nodes, vars, n.a, 2, out);
      out += "*";
      render_node(nodes, vars, n.b, 3, out);
      break;
    case Op::kDiv:
      render_node(nodes, vars, n.a, 2, out);
      out += "/";
      render_node(nodes, vars, n.b, 3, out);
      break;
    case Op::kNeg:
      out += '-';
      render_node(nodes, vars, n.a, 3, out);
      break;
    case Op::kPow:
      render_node(nodes, vars, n.a, 5, out);
      out += '^';
      out += std::to_string(n.aux);
      break;
    case Op::kSin:
    case Op::kCos:
    case Op::kExp:
    case Op::kLog:
    case Op::kSqrt: {
      const char* name = n.op == Op::kSin   ? "sin"
                         : n.op == Op::kCos ? "cos"
                         : n.op == Op::kExp ? "exp"
                         : n.op == Op::kLog ? "log"
                                            : "sqrt";
      out += name;
      out += '(';
      render_node(nodes, vars, n.a, 1, out);
      out += ')';
      break;
    }
  }
  if (parens) out += ')';
}

}  // namespace

Expression Expression::parse(std::string_view source,
                             const std::vector<std::string>& variables) {
  Parser p(source, variables);
  auto data = std::make_shared<Data>();
  data->nodes = p.run();
  data->variables = variables;
  data->arity = int(variables.size());
  data->source = std::string(source);
  return Expression(std::move(data));
}

int Expression::arity() const { return data_->arity; }

double Expression::evaluate(std::span<const double> x) const {
  if (int(x.size()) != data_->arity)
    throw std::invalid_argument("evaluate: wrong number of variables");
  return eval_nodes<double>(data_->nodes, x);
}

double Expression::derivative(std::span<const double> x, int i) const {
  if (int(x.size()) != data_->arity)
    throw std::invalid_argument("derivative: wrong number of variables");
  if (i < 0 || i >= data_->arity)
    throw std::invalid_argument("derivative: variable index out of range");
  std::vector<Dual> xs(x.size());
  for (std::size_t k = 0; k < x.size(); ++k)
    xs[k] = {x[k], int(k) == i ? 1.0 : 0.0};
  return eval_nodes<Dual>(data_->nodes, std::span<const Dual>(xs)).d;
}

double Expression::second_derivative(std::span<const double> x, int i,
                                     int j) const {
  if (int(x.size()) != data_->arity)
    throw std::invalid_argument("second_derivative: wrong number of variables");
  if (i < 0 || i >= data_->arity || j < 0 || j >= data_->arity)
    throw std::invalid_argument("second_derivative: variable index out of range");
  std::vector<Jet2> xs(x.size());
  for (std::size_t k = 0; k < x.size(); ++k)
    xs[k] = {x[k], int(k) == i ? 1.0 : 0.0, int(k) == j ? 1.0 : 0.0, 0.0};
  return eval_nodes<Jet2>(data_->nodes, std::span<const Jet2>(xs)).dij;
}

std::string Expression::render() const {
  std::string out;
  render_node(data_->nodes, data_->variables, int(data_->nodes.size()) - 1, 1,
              out);
  return out;
}

const std::string& Expression::source() const { return data_->source; }

const std::vector<std::string>& Expression::variables() const {
  return data_->variables;
}

Expression::Expression(std::shared_ptr<const Data> data)
    : data_(std::move(data)) {}

}  // namespace lump
