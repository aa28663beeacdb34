#ifndef THINOBS_EXPRESSION_HPP
#define THINOBS_EXPRESSION_HPP

#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace thinobs {

/// Arithmetic expression over named variables: + - * / ^, unary minus,
/// parentheses, pi, and sin cos tan exp log sqrt abs atan2 pow.
class Expression {
 public:
  using Vars = std::map<std::string, double>;

  explicit Expression(std::string text) : text_(std::move(text)) {
    pos_ = 0;
    root_ = parse_sum();
    skip();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
  }

  double operator()(const Vars& v) const { return root_(v); }
  const std::string& text() const { return text_; }

 private:
  using Node = std::function<double(const Vars&)>;
  std::string text_;
  std::size_t pos_ = 0;
  Node root_;

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::invalid_argument("expression '" + text_ + "': " + msg + " at " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Node parse_sum() {
    Node a = parse_product();
    for (;;) {
      if (eat('+')) {
        Node b = parse_product();
        a = [a, b](const Vars& v) { return a(v) + b(v); };
      } else if (eat('-')) {
        Node b = parse_product();
        a = [a, b](const Vars& v) { return a(v) - b(v); };
      } else {
        return a;
      }
    }
  }

  Node parse_product() {
    Node a = parse_unary();
    for (;;) {
      if (eat('*')) {
        Node b = parse_unary();
        a = [a, b](const Vars& v) { return a(v) * b(v); };
      } else if (eat('/')) {
        Node b = parse_unary();
        a = [a, b](const Vars& v) { return a(v) / b(v); };
      } else {
        return a;
      }
    }
  }

  Node parse_unary() {
    if (eat('-')) {
      Node a = parse_unary();
      return [a](const Vars& v) { return -a(v); };
    }
    if (eat('+')) return parse_unary();
    return parse_power();
  }

  Node parse_power() {
    Node a = parse_atom();
    if (eat('^')) {
      Node b = parse_unary();  // right associative
      return [a, b](const Vars& v) { return std::pow(a(v), b(v)); };
    }
    return a;
  }

  Node parse_atom() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end");
    if (eat('(')) {
      Node a = parse_sum();
      if (!eat(')')) fail("expected ')'");
      return a;
    }
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double x = std::stod(text_.substr(pos_), &used);
      pos_ += used;
      return [x](const Vars&) { return x; };
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
      std::string name = text_.substr(start, pos_ - start);
      if (eat('(')) {
        std::vector<Node> args{parse_sum()};
        while (eat(',')) args.push_back(parse_sum());
        if (!eat(')')) fail("expected ')'");
        return call(name, args);
      }
      if (name == "pi") return [](const Vars&) { return std::numbers::pi; };
      return [name, t = text_](const Vars& v) {
        auto it = v.find(name);
        if (it == v.end()) throw std::invalid_argument("expression '" + t + "': unknown variable " + name);
        return it->second;
      };
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Node call(const std::string& name, const std::vector<Node>& a) {
    static const std::map<std::string, double (*)(double)> unary{
        {"sin", [](double x) { return std::sin(x); }},   {"cos", [](double x) { return std::cos(x); }},
        {"tan", [](double x) { return std::tan(x); }},   {"exp", [](double x) { return std::exp(x); }},
        {"log", [](double x) { return std::log(x); }},   {"sqrt", [](double x) { return std::sqrt(x); }},
        {"abs", [](double x) { return std::abs(x); }}};
    if (auto it = unary.find(name); it != unary.end()) {
      if (a.size() != 1) fail(name + " takes one argument");
      auto f = it->second;
      Node x = a[0];
      return [f, x](const Vars& v) { return f(x(v)); };
    }
    if (name == "pow" || name == "atan2") {
      if (a.size() != 2) fail(name + " takes two arguments");
      Node x = a[0], y = a[1];
      if (name == "pow") return [x, y](const Vars& v) { return std::pow(x(v), y(v)); };
      return [x, y](const Vars& v) { return std::atan2(x(v), y(v)); };
    }
    fail("unknown function " + name);
  }
};

}  // namespace thinobs

#endif
