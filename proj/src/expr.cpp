#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include "ntpboost/rnn.hpp"

namespace ntpboost {

namespace ex {

namespace {

std::shared_ptr<Expr> make(Expr::Op op) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  return e;
}

// Folds constants and nested sums into bias + sum w * arg, merging repeated args.
void flatten(double& bias, Terms& out, const Terms& in) {
  for (auto& [w, e] : in) {
    if (w == 0) continue;
    if (e->op == Expr::Op::constant) {
      bias += w * e->value;
    } else if (e->op == Expr::Op::sum) {
      bias += w * e->value;
      Terms inner;
      for (std::size_t j = 0; j < e->args.size(); ++j) inner.emplace_back(w * e->weights[j], e->args[j]);
      flatten(bias, out, inner);
    } else {
      auto it = std::find_if(out.begin(), out.end(), [&](auto& t) { return t.second == e; });
      if (it != out.end())
        it->first += w;
      else
        out.emplace_back(w, e);
    }
  }
  std::erase_if(out, [](auto& t) { return t.first == 0; });
}

ExprPtr affine(Expr::Op op, double bias, const Terms& terms) {
  auto e = make(op);
  e->value = bias;
  for (auto& [w, a] : terms) {
    e->weights.push_back(w);
    e->args.push_back(a);
  }
  return e;
}

}  // namespace

ExprPtr c(double v) {
  auto e = make(Expr::Op::constant);
  e->value = v;
  return e;
}

ExprPtr ref(int id) {
  auto e = make(Expr::Op::node);
  e->node = id;
  return e;
}

ExprPtr lin(double bias, Terms terms) {
  Terms t;
  flatten(bias, t, terms);
  if (t.empty()) return c(bias);
  if (bias == 0 && t.size() == 1 && t[0].first == 1) return t[0].second;
  return affine(Expr::Op::sum, bias, t);
}

ExprPtr relu(double bias, Terms terms) {
  Terms t;
  flatten(bias, t, terms);
  if (t.empty()) return c(std::max(0.0, bias));
  return affine(Expr::Op::relu, bias, t);
}

ExprPtr relu(ExprPtr e) { return relu(0, {{1.0, std::move(e)}}); }

ExprPtr recip(double bias, Terms terms) {
  Terms t;
  flatten(bias, t, terms);
  if (t.empty()) {
    if (bias == 0) throw Error("recip_zero", "reciprocal of the constant zero");
    return c(1.0 / bias);
  }
  return affine(Expr::Op::recip, bias, t);
}

ExprPtr recip(ExprPtr e) { return recip(0, {{1.0, std::move(e)}}); }

ExprPtr prod(std::vector<ExprPtr> args) {
  std::vector<ExprPtr> flat;
  double k = 1.0;
  for (auto& a : args) {
    if (a->op == Expr::Op::constant) {
      k *= a->value;
    } else if (a->op == Expr::Op::prod) {
      for (auto& b : a->args) flat.push_back(b);
    } else {
      flat.push_back(a);
    }
  }
  if (k == 0 || flat.empty()) return c(flat.empty() ? k : 0.0);
  ExprPtr p;
  if (flat.size() == 1) {
    p = flat[0];
  } else {
    auto e = make(Expr::Op::prod);
    e->args = std::move(flat);
    p = e;
  }
  return k == 1 ? p : lin(0, {{k, p}});
}

ExprPtr add(ExprPtr a, ExprPtr b) { return lin(0, {{1.0, std::move(a)}, {1.0, std::move(b)}}); }
ExprPtr sub(ExprPtr a, ExprPtr b) { return lin(0, {{1.0, std::move(a)}, {-1.0, std::move(b)}}); }
ExprPtr scale(double w, ExprPtr a) { return lin(0, {{w, std::move(a)}}); }
ExprPtr one_minus(ExprPtr a) { return lin(1.0, {{-1.0, std::move(a)}}); }
ExprPtr mul(ExprPtr a, ExprPtr b) { return prod({std::move(a), std::move(b)}); }

ExprPtr sum_of(const std::vector<ExprPtr>& xs) {
  Terms t;
  for (auto& x : xs) t.emplace_back(1.0, x);
  return lin(0, t);
}

bool is_const(const ExprPtr& e, double v) { return e->op == Expr::Op::constant && e->value == v; }

}  // namespace ex

int expr_depth(const ExprPtr& e) {
  std::unordered_map<const Expr*, int> memo;
  std::function<int(const Expr*)> go = [&](const Expr* x) -> int {
    if (x->args.empty()) return 0;
    auto it = memo.find(x);
    if (it != memo.end()) return it->second;
    int d = 0;
    for (auto& a : x->args) d = std::max(d, go(a.get()));
    return memo[x] = d + 1;
  };
  return go(e.get());
}

void expr_refs(const ExprPtr& e, std::vector<int>& out) {
  std::unordered_map<const Expr*, bool> seen;
  std::function<void(const Expr*)> go = [&](const Expr* x) {
    if (seen[x]) return;
    seen[x] = true;
    if (x->op == Expr::Op::node) out.push_back(x->node);
    for (auto& a : x->args) go(a.get());
  };
  go(e.get());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
}

ExprPtr substitute(const ExprPtr& e, const std::function<ExprPtr(int)>& f) {
  std::unordered_map<const Expr*, ExprPtr> memo;
  std::function<ExprPtr(const ExprPtr&)> go = [&](const ExprPtr& x) -> ExprPtr {
    auto it = memo.find(x.get());
    if (it != memo.end()) return it->second;
    ExprPtr r;
    switch (x->op) {
      case Expr::Op::constant:
        r = x;
        break;
      case Expr::Op::node:
        r = f(x->node);
        break;
      case Expr::Op::prod: {
        std::vector<ExprPtr> args;
        for (auto& a : x->args) args.push_back(go(a));
        r = ex::prod(args);
        break;
      }
      default: {
        ex::Terms t;
        for (std::size_t j = 0; j < x->args.size(); ++j) t.emplace_back(x->weights[j], go(x->args[j]));
        if (x->op == Expr::Op::sum) r = ex::lin(x->value, t);
        if (x->op == Expr::Op::relu) r = ex::relu(x->value, t);
        if (x->op == Expr::Op::recip) r = ex::recip(x->value, t);
      }
    }
    return memo[x.get()] = r;
  };
  return go(e);
}

ExprPtr remap(const ExprPtr& e, const std::function<int(int)>& f) {
  return substitute(e, [&](int id) { return ex::ref(f(id)); });
}

namespace {

void put_num(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void write(std::string& out, const Expr& e) {
  switch (e.op) {
    case Expr::Op::constant:
      out += "(const ";
      put_num(out, e.value);
      out += ')';
      return;
    case Expr::Op::node:
      out += "(node " + std::to_string(e.node) + ")";
      return;
    case Expr::Op::prod:
      out += "(prod";
      for (auto& a : e.args) {
        out += ' ';
        write(out, *a);
      }
      out += ')';
      return;
    default:
      out += e.op == Expr::Op::sum ? "(sum " : e.op == Expr::Op::relu ? "(relu " : "(recip ";
      put_num(out, e.value);
      for (std::size_t j = 0; j < e.args.size(); ++j) {
        out += ' ';
        put_num(out, e.weights[j]);
        out += ' ';
        write(out, *e.args[j]);
      }
      out += ')';
  }
}

struct Parser {
  const std::string& s;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error("parse", "expression: " + what + " at offset " + std::to_string(pos));
  }
  void ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  std::string word() {
    ws();
    std::size_t b = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '(' && s[pos] != ')')
      ++pos;
    if (b == pos) fail("expected a token");
    return s.substr(b, pos - b);
  }
  double number() {
    std::string w = word();
    double v = 0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) {
      if (w == "inf") return INFINITY;
      if (w == "-inf") return -INFINITY;
      fail("bad number '" + w + "'");
    }
    return v;
  }
  bool at_close() {
    ws();
    return pos < s.size() && s[pos] == ')';
  }
  void expect(char ch) {
    ws();
    if (pos >= s.size() || s[pos] != ch) fail(std::string("expected '") + ch + "'");
    ++pos;
  }
  ExprPtr expr() {
    expect('(');
    std::string op = word();
    ExprPtr r;
    if (op == "const") {
      r = ex::c(number());
    } else if (op == "node") {
      double v = number();
      if (v < 0 || v != std::floor(v)) fail("node id must be a nonnegative integer");
      r = ex::ref(static_cast<int>(v));
    } else if (op == "prod") {
      auto e = std::make_shared<Expr>();
      e->op = Expr::Op::prod;
      while (!at_close()) e->args.push_back(expr());
      if (e->args.empty()) fail("empty product");
      r = e;
    } else if (op == "sum" || op == "relu" || op == "recip") {
      auto e = std::make_shared<Expr>();
      e->op = op == "sum" ? Expr::Op::sum : op == "relu" ? Expr::Op::relu : Expr::Op::recip;
      e->value = number();
      while (!at_close()) {
        e->weights.push_back(number());
        e->args.push_back(expr());
      }
      r = e;
    } else {
      fail("unknown operator '" + op + "'");
    }
    expect(')');
    return r;
  }
};

}  // namespace

std::string to_sexpr(const ExprPtr& e) {
  std::string out;
  write(out, *e);
  return out;
}

ExprPtr parse_sexpr(const std::string& s) {
  Parser p{s};
  ExprPtr e = p.expr();
  p.ws();
  if (p.pos != s.size()) p.fail("trailing characters");
  return e;
}

double eval_expr(const ExprPtr& e, std::span<const double> values) {
  switch (e->op) {
    case Expr::Op::constant:
      return e->value;
    case Expr::Op::node:
      return values[e->node];
    case Expr::Op::prod: {
      double r = 1;
      for (auto& a : e->args) {
        double v = eval_expr(a, values);
        if (v == 0) return 0;
        r *= v;
      }
      return r;
    }
    default: {
      double v = e->value;
      for (std::size_t j = 0; j < e->args.size(); ++j) v += e->weights[j] * eval_expr(e->args[j], values);
      if (e->op == Expr::Op::relu) return std::max(0.0, v);
      if (e->op == Expr::Op::recip) {
        if (v == 0) throw Error("recip_zero", "reciprocal of zero");
        return 1.0 / v;
      }
      return v;
    }
  }
}

}  // namespace ntpboost
