#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lump/expr.hpp"

using lump::EvalError;
using lump::Expression;
using lump::ParseError;

namespace {

const std::vector<std::string> kXy{"x", "y"};
const std::vector<std::string> kXyz{"x", "y", "z"};

// Central-difference oracle for first derivatives. Picked h for ~1e-10
// truncation error on smooth expressions at O(1) arguments.
double fd_derivative(const Expression& e, std::vector<double> x, int i,
                     double h = 1e-6) {
  x[i] += h;
  double hi = e.evaluate(x);
  x[i] -= 2 * h;
  double lo = e.evaluate(x);
  return (hi - lo) / (2 * h);
}

double fd_second(const Expression& e, std::vector<double> x, int i, int j,
                 double h = 1e-4) {
  auto at = [&](double di, double dj) {
    auto p = x;
    p[i] += di;
    p[j] += dj;
    return e.evaluate(p);
  };
  if (i == j) return (at(h, 0) - 2 * at(0, 0) + at(-h, 0)) / (h * h);
  return (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
}

}  // namespace

TEST_CASE("numbers, precedence, and parentheses") {
  auto e = Expression::parse("1 + 2*3 - 4/8", {});
  CHECK(e.arity() == 0);
  CHECK(e.evaluate({}) == doctest::Approx(6.5).epsilon(1e-15));

  CHECK(Expression::parse("(1+2)*3", {}).evaluate({}) == 9.0);
  // One optional integer exponent per base; chaining needs parentheses.
  CHECK(Expression::parse("(2^3)^2", {}).evaluate({}) == 64.0);
  CHECK_THROWS_AS(Expression::parse("2^3^1", {}), ParseError);
  CHECK(Expression::parse("1.5e2", {}).evaluate({}) == 150.0);
  CHECK(Expression::parse("2.5E-1", {}).evaluate({}) == 0.25);
  CHECK(Expression::parse(".5", {}).evaluate({}) == 0.5);
}

TEST_CASE("variables resolve by position in the declared list") {
  auto e = Expression::parse("x*y + y", kXy);
  CHECK(e.arity() == 2);
  CHECK(e.evaluate(std::vector<double>{3, 4}) == 16.0);
  CHECK(e.variables() == kXy);
}

TEST_CASE("unary minus binds tighter than addition, looser than power") {
  CHECK(Expression::parse("-2^2", kXy).evaluate(std::vector<double>{0, 0}) == -4.0);
  CHECK(Expression::parse("(-2)^2", kXy).evaluate(std::vector<double>{0, 0}) == 4.0);
  CHECK(Expression::parse("3 - -2", {}).evaluate({}) == 5.0);
  CHECK(Expression::parse("--2", {}).evaluate({}) == 2.0);
  CHECK(Expression::parse("2*-3", {}).evaluate({}) == -6.0);
}

TEST_CASE("integer exponents, including negative") {
  std::vector<double> x{2, 0};
  CHECK(Expression::parse("x^0", kXy).evaluate(x) == 1.0);
  CHECK(Expression::parse("x^3", kXy).evaluate(x) == 8.0);
  CHECK(Expression::parse("x^-2", kXy).evaluate(x) == 0.25);
  CHECK_THROWS_AS(Expression::parse("x^2.5", kXy), ParseError);
  CHECK_THROWS_AS(Expression::parse("x^y", kXy), ParseError);
}

TEST_CASE("functions evaluate through the standard library") {
  std::vector<double> x{0.3, 0.7};
  CHECK(Expression::parse("sin(x)", kXy).evaluate(x) ==
        doctest::Approx(std::sin(0.3)).epsilon(1e-15));
  CHECK(Expression::parse("cos(x*y)", kXy).evaluate(x) ==
        doctest::Approx(std::cos(0.21)).epsilon(1e-15));
  CHECK(Expression::parse("exp(y)", kXy).evaluate(x) ==
        doctest::Approx(std::exp(0.7)).epsilon(1e-15));
  CHECK(Expression::parse("log(y)", kXy).evaluate(x) ==
        doctest::Approx(std::log(0.7)).epsilon(1e-15));
  CHECK(Expression::parse("sqrt(x)", kXy).evaluate(x) ==
        doctest::Approx(std::sqrt(0.3)).epsilon(1e-15));
  CHECK(Expression::parse("neg(x)", kXy).evaluate(x) == -0.3);
}

TEST_CASE("parse errors carry the byte offset of the problem") {
  auto offset_of = [](const char* src) {
    try {
      Expression::parse(src, kXy);
    } catch (const ParseError& e) {
      return e.offset;
    }
    return std::size_t(-1);
  };
  CHECK(offset_of("x + ") == 4);        // missing operand
  CHECK(offset_of("x + q") == 4);       // unknown identifier
  CHECK(offset_of("x + (y") == 6);      // unclosed paren
  CHECK(offset_of("x ? y") == 2);       // stray operator
  CHECK(offset_of("sin x") == 4);       // function needs parentheses
  CHECK(offset_of("x y") == 2);         // trailing garbage
  CHECK(offset_of("") == 0);
}

TEST_CASE("a variable may not shadow a function name") {
  CHECK_THROWS_AS(Expression::parse("sin + 1", {"sin"}),
                  std::invalid_argument);
}

TEST_CASE("evaluation domain errors carry the offending node offset") {
  auto offset_of = [](const char* src, std::vector<double> x) {
    try {
      Expression::parse(src, kXy).evaluate(x);
    } catch (const EvalError& e) {
      return e.offset;
    }
    return std::size_t(-1);
  };
  CHECK(offset_of("1/x", {0, 0}) == 1);
  CHECK(offset_of("log(x)", {-1, 0}) == 0);
  CHECK(offset_of("sqrt(x)", {-1, 0}) == 0);
  CHECK(offset_of("x^-1", {0, 0}) == 1);
  CHECK(offset_of("exp(x)", {1e9, 0}) != std::size_t(-1));  // overflow to inf
}

TEST_CASE("wrong evaluation arity is rejected") {
  auto e = Expression::parse("x + y", kXy);
  CHECK_THROWS_AS(e.evaluate(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("hand-derived derivatives are exact") {
  std::vector<double> x{2, 3};
  CHECK(Expression::parse("x^3", kXy).derivative(x, 0) == 12.0);
  CHECK(Expression::parse("x*y", kXy).derivative(x, 0) == 3.0);
  CHECK(Expression::parse("x*y", kXy).derivative(x, 1) == 2.0);
  CHECK(Expression::parse("7", kXy).derivative(x, 0) == 0.0);
  CHECK(Expression::parse("y", kXy).derivative(x, 0) == 0.0);
  CHECK(Expression::parse("x/y", kXy).derivative(x, 1) ==
        doctest::Approx(-2.0 / 9.0).epsilon(1e-15));
  CHECK(Expression::parse("sin(x)", kXy).derivative(x, 0) ==
        doctest::Approx(std::cos(2.0)).epsilon(1e-15));
}

TEST_CASE("derivatives match the finite-difference oracle") {
  const char* corpus[] = {
      "x^2*y - y^3 + 2*x",
      "sin(x)*cos(y) + exp(x*y/4)",
      "sqrt(x^2 + y^2 + 1)",
      "log(2 + x^2) / (1 + y^2)",
      "x^-2 + y^4 - x*y",
      "(x + 2*y)^3 - neg(x)",
  };
  std::vector<std::vector<double>> points{
      {0.7, -0.4}, {1.3, 0.9}, {-1.1, 2.0}, {0.5, 0.5}};
  for (const char* src : corpus) {
    auto e = Expression::parse(src, kXy);
    for (const auto& p : points) {
      for (int i = 0; i < 2; ++i) {
        double ad = e.derivative(p, i);
        double fd = fd_derivative(e, p, i);
        CHECK_MESSAGE(std::abs(ad - fd) <= 1e-6 * (1 + std::abs(fd)),
                      src << " d/dx_" << i << " at (" << p[0] << "," << p[1]
                          << "): ad=" << ad << " fd=" << fd);
      }
    }
  }
}

TEST_CASE("second derivatives match the finite-difference oracle") {
  const char* corpus[] = {
      "x^3*y^2 + x*y",
      "sin(x*y) + cos(x)",
      "exp(x/2 + y/3)",
      "(1 + x^2 + y^2)^2",
  };
  std::vector<std::vector<double>> points{{0.7, -0.4}, {1.2, 0.8}};
  for (const char* src : corpus) {
    auto e = Expression::parse(src, kXy);
    for (const auto& p : points) {
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          double ad = e.second_derivative(p, i, j);
          double fd = fd_second(e, p, i, j);
          CHECK_MESSAGE(std::abs(ad - fd) <= 1e-5 * (1 + std::abs(fd)),
                        src << " d2/dx_" << i << "dx_" << j << ": ad=" << ad
                            << " fd=" << fd);
        }
      }
    }
  }
}

TEST_CASE("mixed partials are bitwise symmetric") {
  const char* corpus[] = {
      "x^3*y^2 + x*y - y^4",
      "sin(x*y)*exp(x - y)",
      "x/(1 + y^2) + sqrt(4 + x^2*y^2)",
      "(x - y)^5 * (x + y)^2",
      "log(3 + x^2 + y^2) * cos(x*y)",
  };
  std::vector<std::vector<double>> points{
      {0.7, -0.4}, {1.3, 0.9}, {-1.1, 2.0}, {0.25, -0.75}};
  for (const char* src : corpus) {
    auto e = Expression::parse(src, kXy);
    for (const auto& p : points) {
      double ij = e.second_derivative(p, 0, 1);
      double ji = e.second_derivative(p, 1, 0);
      CHECK_MESSAGE(ij == ji, src << ": " << ij << " vs " << ji);
    }
  }
}

TEST_CASE("diagonal second derivative agrees with known values") {
  std::vector<double> x{2, 0};
  CHECK(Expression::parse("x^3", kXy).second_derivative(x, 0, 0) == 12.0);
  CHECK(Expression::parse("x*y", kXy).second_derivative(x, 0, 1) == 1.0);
  CHECK(Expression::parse("x*y", kXy).second_derivative(x, 0, 0) == 0.0);
}

TEST_CASE("render re-parses to the same function") {
  const char* corpus[] = {
      "1 + 2*3 - 4/8",
      "-x^2 + (x - y)*(x + y)",
      "sin(x)*cos(y) - exp(x*y)/(1 + x^2)",
      "x^-3 + sqrt(y^2 + 1)",
      "neg(x) - -y",
      "2*-3 + x",
      "0.1 + 1e3*x",
  };
  std::vector<std::vector<double>> points{{0.7, -0.4}, {1.3, 2.2}};
  for (const char* src : corpus) {
    auto e = Expression::parse(src, kXy);
    auto round = Expression::parse(e.render(), kXy);
    for (const auto& p : points) {
      // Rendering preserves the tree, so values match bitwise.
      CHECK_MESSAGE(e.evaluate(p) == round.evaluate(p),
                    src << " -> " << e.render());
    }
    // Rendering is idempotent once normalized.
    CHECK(round.render() == Expression::parse(round.render(), kXy).render());
  }
}

TEST_CASE("source is preserved verbatim") {
  auto e = Expression::parse("  x +  y ", kXy);
  CHECK(e.source() == "  x +  y ");
}

TEST_CASE("derivative direction out of range is rejected") {
  auto e = Expression::parse("x + y", kXy);
  std::vector<double> p{1, 2};
  CHECK_THROWS_AS(e.derivative(p, 2), std::invalid_argument);
  CHECK_THROWS_AS(e.second_derivative(p, 0, -1), std::invalid_argument);
}

TEST_CASE("three-variable expressions differentiate correctly") {
  auto e = Expression::parse("x*y*z + z^2", kXyz);
  std::vector<double> p{1.5, -2.0, 0.5};
  CHECK(e.derivative(p, 0) == -1.0);
  CHECK(e.derivative(p, 1) == 0.75);
  CHECK(e.derivative(p, 2) == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(e.second_derivative(p, 0, 1) == 0.5);
  CHECK(e.second_derivative(p, 2, 2) == 2.0);
}
