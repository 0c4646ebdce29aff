#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lump {

/// Rejected source text. `offset` is the byte offset of the offending token.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what), offset(offset) {}
  std::size_t offset;
};

/// Evaluation left the domain of some subterm (log of a non-positive value,
/// division by zero, ...). `offset` locates the subterm in the original source.
struct EvalError : std::runtime_error {
  EvalError(const std::string& what, std::size_t offset)
      : std::runtime_error(what), offset(offset) {}
  std::size_t offset;
};

/// A scalar function of a fixed set of real variables, stored as an immutable
/// expression tree. Evaluation and differentiation are pure; copies share the
/// underlying tree.
///
/// Grammar:
///   expr    := term (('+' | '-') term)*
///   term    := factor (('*' | '/') factor)*
///   factor  := '-' factor | base ('^' integer)?
///   base    := number | ident | '(' expr ')' | func '(' expr ')'
///   func    := sin | cos | exp | log | sqrt | neg
///
/// Identifiers are looked up positionally in the variable list given to
/// parse(); the function names above are reserved. Exponents are (possibly
/// negative) integer literals.
class Expression {
 public:
  /// Parses `source` against the grammar above. Throws ParseError with a byte
  /// offset on any rejection, including unknown identifiers.
  static Expression parse(std::string_view source,
                          const std::vector<std::string>& variables);

  /// Number of variables of the ambient space (the length of the variable
  /// list, not the number of variables that actually occur).
  int arity() const;

  /// Value at x. Throws EvalError on domain violations or non-finite
  /// intermediates. x.size() must equal arity().
  double evaluate(std::span<const double> x) const;

  /// First partial derivative with respect to variable i, by forward-mode
  /// differentiation (exact up to rounding, no truncation error).
  double derivative(std::span<const double> x, int i) const;

  /// Second partial derivative with respect to variables i and j. Bitwise
  /// symmetric in (i, j): cross terms are grouped before accumulation.
  double second_derivative(std::span<const double> x, int i, int j) const;

  /// Re-parseable text form. parse(render()) reproduces the exact tree, so
  /// evaluation of the round-tripped expression is bit-identical.
  std::string render() const;

  /// The source text the expression was parsed from.
  const std::string& source() const;

  /// The variable list the expression was parsed against.
  const std::vector<std::string>& variables() const;

  struct Data;

 private:
  explicit Expression(std::shared_ptr<const Data> data);
  std::shared_ptr<const Data> data_;
};

}  // namespace lump
