#include "xray/expr.hpp"

#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "xray/common.hpp"

namespace xray {

namespace {

// f(a) from f, f', f'' at a.v
Jet chain(const Jet& a, double f0, double f1, double f2) {
    Jet r;
    r.v = f0;
    r.d1 = f1 * a.d1;
    r.d2 = f1 * a.d2;
    r.d11 = f2 * a.d1 * a.d1 + f1 * a.d11;
    r.d12 = f2 * a.d1 * a.d2 + f1 * a.d12;
    r.d22 = f2 * a.d2 * a.d2 + f1 * a.d22;
    return r;
}

bool is_constant(const Jet& a) {
    return a.d1 == 0 && a.d2 == 0 && a.d11 == 0 && a.d12 == 0 && a.d22 == 0;
}

}  // namespace

Jet operator+(const Jet& a, const Jet& b) {
    return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2, a.d11 + b.d11, a.d12 + b.d12, a.d22 + b.d22};
}
Jet operator-(const Jet& a, const Jet& b) {
    return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2, a.d11 - b.d11, a.d12 - b.d12, a.d22 - b.d22};
}
Jet operator-(const Jet& a) { return {-a.v, -a.d1, -a.d2, -a.d11, -a.d12, -a.d22}; }
Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    r.v = a.v * b.v;
    r.d1 = a.d1 * b.v + a.v * b.d1;
    r.d2 = a.d2 * b.v + a.v * b.d2;
    r.d11 = a.d11 * b.v + 2 * a.d1 * b.d1 + a.v * b.d11;
    r.d12 = a.d12 * b.v + a.d1 * b.d2 + a.d2 * b.d1 + a.v * b.d12;
    r.d22 = a.d22 * b.v + 2 * a.d2 * b.d2 + a.v * b.d22;
    return r;
}
Jet operator/(const Jet& a, const Jet& b) {
    double x = b.v;
    return a * chain(b, 1 / x, -1 / (x * x), 2 / (x * x * x));
}
Jet jet_exp(const Jet& a) {
    double e = std::exp(a.v);
    return chain(a, e, e, e);
}
Jet jet_log(const Jet& a) { return chain(a, std::log(a.v), 1 / a.v, -1 / (a.v * a.v)); }
Jet jet_sin(const Jet& a) {
    double s = std::sin(a.v), c = std::cos(a.v);
    return chain(a, s, c, -s);
}
Jet jet_cos(const Jet& a) {
    double s = std::sin(a.v), c = std::cos(a.v);
    return chain(a, c, -s, -c);
}
Jet jet_tan(const Jet& a) {
    double t = std::tan(a.v), s2 = 1 + t * t;
    return chain(a, t, s2, 2 * t * s2);
}
Jet jet_sqrt(const Jet& a) {
    double s = std::sqrt(a.v);
    return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}
Jet jet_sinh(const Jet& a) {
    double s = std::sinh(a.v), c = std::cosh(a.v);
    return chain(a, s, c, s);
}
Jet jet_cosh(const Jet& a) {
    double s = std::sinh(a.v), c = std::cosh(a.v);
    return chain(a, c, s, c);
}
Jet jet_tanh(const Jet& a) {
    double t = std::tanh(a.v), s2 = 1 - t * t;
    return chain(a, t, s2, -2 * t * s2);
}
Jet jet_atanh(const Jet& a) {
    double x = a.v, q = 1 / (1 - x * x);
    return chain(a, std::atanh(x), q, 2 * x * q * q);
}
Jet jet_pow(const Jet& a, const Jet& b) {
    if (is_constant(b)) {
        double p = b.v, x = a.v;
        if (p == 0) return Jet::constant(1);
        if (p == 1) return a;
        if (p == 2) return a * a;
        return chain(a, std::pow(x, p), p * std::pow(x, p - 1), p * (p - 1) * std::pow(x, p - 2));
    }
    return jet_exp(b * jet_log(a));
}

struct Expr::Node {
    enum Kind { Num, X1, X2, Add, Sub, Mul, Div, Pow, Neg, Fn } kind;
    double num = 0;
    Jet (*fn)(const Jet&) = nullptr;
    std::shared_ptr<const Node> a, b;

    Jet eval(double x1, double x2) const {
        switch (kind) {
            case Num: return Jet::constant(num);
            case X1: return Jet::var1(x1);
            case X2: return Jet::var2(x2);
            case Add: return a->eval(x1, x2) + b->eval(x1, x2);
            case Sub: return a->eval(x1, x2) - b->eval(x1, x2);
            case Mul: return a->eval(x1, x2) * b->eval(x1, x2);
            case Div: return a->eval(x1, x2) / b->eval(x1, x2);
            case Pow: return jet_pow(a->eval(x1, x2), b->eval(x1, x2));
            case Neg: return -a->eval(x1, x2);
            case Fn: return fn(a->eval(x1, x2));
        }
        return {};
    }
};

namespace {

using NodeP = std::shared_ptr<const Expr::Node>;

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodeP parse() {
        NodeP n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return n;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) {
        throw ConfigError("expression '" + s_ + "': " + msg + " at offset " + std::to_string(pos_));
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    static NodeP make(Expr::Node::Kind k, NodeP a = nullptr, NodeP b = nullptr) {
        auto n = std::make_shared<Expr::Node>();
        n->kind = k;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }
    NodeP expr() {
        NodeP n = term();
        for (;;) {
            if (eat('+')) n = make(Expr::Node::Add, n, term());
            else if (eat('-')) n = make(Expr::Node::Sub, n, term());
            else return n;
        }
    }
    NodeP term() {
        NodeP n = unary();
        for (;;) {
            if (eat('*')) n = make(Expr::Node::Mul, n, unary());
            else if (eat('/')) n = make(Expr::Node::Div, n, unary());
            else return n;
        }
    }
    NodeP unary() {
        if (eat('-')) return make(Expr::Node::Neg, unary());
        if (eat('+')) return unary();
        return power();
    }
    NodeP power() {
        NodeP base = primary();
        if (eat('^')) return make(Expr::Node::Pow, base, unary());
        return base;
    }
    NodeP primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodeP n = expr();
            if (!eat(')')) fail("expected ')'");
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            auto n = std::make_shared<Expr::Node>();
            n->kind = Expr::Node::Num;
            n->num = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t st = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            std::string id = s_.substr(st, pos_ - st);
            if (id == "x1") return make(Expr::Node::X1);
            if (id == "x2") return make(Expr::Node::X2);
            if (id == "pi") {
                auto n = std::make_shared<Expr::Node>();
                n->kind = Expr::Node::Num;
                n->num = kPi;
                return n;
            }
            static const std::map<std::string, Jet (*)(const Jet&)> fns = {
                {"exp", jet_exp},   {"log", jet_log},   {"sin", jet_sin},   {"cos", jet_cos},
                {"tan", jet_tan},   {"sqrt", jet_sqrt}, {"sinh", jet_sinh}, {"cosh", jet_cosh},
                {"tanh", jet_tanh}, {"atanh", jet_atanh}};
            auto it = fns.find(id);
            if (it == fns.end()) fail("unknown identifier '" + id + "'");
            if (!eat('(')) fail("expected '(' after " + id);
            NodeP arg = expr();
            if (!eat(')')) fail("expected ')'");
            auto n = std::make_shared<Expr::Node>();
            n->kind = Expr::Node::Fn;
            n->fn = it->second;
            n->a = arg;
            return n;
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

}  // namespace

Expr::Expr(const std::string& text) : text_(text), root_(Parser(text).parse()) {}

Jet Expr::eval(double x1, double x2) const { return root_->eval(x1, x2); }

}  // namespace xray
