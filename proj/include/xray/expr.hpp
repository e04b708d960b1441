#pragma once

#include <memory>
#include <string>

namespace xray {

// Value, gradient and Hessian of a scalar function of (x1, x2).
struct Jet {
    double v = 0;
    double d1 = 0, d2 = 0;
    double d11 = 0, d12 = 0, d22 = 0;

    static Jet constant(double c) { return Jet{c}; }
    static Jet var1(double x) { return Jet{x, 1, 0}; }
    static Jet var2(double x) { return Jet{x, 0, 1}; }
};

Jet operator+(const Jet& a, const Jet& b);
Jet operator-(const Jet& a, const Jet& b);
Jet operator-(const Jet& a);
Jet operator*(const Jet& a, const Jet& b);
Jet operator/(const Jet& a, const Jet& b);
Jet jet_exp(const Jet& a);
Jet jet_log(const Jet& a);
Jet jet_sin(const Jet& a);
Jet jet_cos(const Jet& a);
Jet jet_tan(const Jet& a);
Jet jet_sqrt(const Jet& a);
Jet jet_sinh(const Jet& a);
Jet jet_cosh(const Jet& a);
Jet jet_tanh(const Jet& a);
Jet jet_atanh(const Jet& a);
Jet jet_pow(const Jet& a, const Jet& b);

// Closed-form scalar expression in x1, x2. Grammar: + - * / ^, unary minus,
// parentheses, numbers, pi, and exp log sin cos tan sqrt sinh cosh tanh atanh.
class Expr {
public:
    struct Node;
    explicit Expr(const std::string& text);
    Jet eval(double x1, double x2) const;
    double value(double x1, double x2) const { return eval(x1, x2).v; }
    const std::string& text() const { return text_; }

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

}  // namespace xray
