#include <cmath>

#include "ntpboost/rnn.hpp"

namespace ntpboost {

namespace tf {

using ex::lin;
using ex::relu;

ExprPtr ind_eq(ExprPtr x, double c, double eps) {
  auto above = relu(-c, {{1.0, x}});
  auto below = relu(c, {{-1.0, x}});
  return ex::scale(1.0 / eps, relu(eps, {{-1.0, above}, {-1.0, below}}));
}

ExprPtr ind_le(ExprPtr x, double c, double eps) {
  auto a = relu(c + eps, {{-1.0, x}});
  auto b = relu(c, {{-1.0, x}});
  return ex::scale(1.0 / eps, relu(0, {{1.0, a}, {-1.0, b}}));
}

ExprPtr ind_ge(ExprPtr x, double c, double eps) {
  auto a = relu(eps - c, {{1.0, x}});
  auto b = relu(-c, {{1.0, x}});
  return ex::scale(1.0 / eps, relu(0, {{1.0, a}, {-1.0, b}}));
}

ExprPtr indicator(Cmp cmp, ExprPtr x, double c, double eps) {
  switch (cmp) {
    case Cmp::eq:
      return ind_eq(std::move(x), c, eps);
    case Cmp::le:
      return ind_le(std::move(x), c, eps);
    case Cmp::ge:
      return ind_ge(std::move(x), c, eps);
  }
  return nullptr;
}

ExprPtr if_else(Cmp cmp, ExprPtr x, double c, ExprPtr f1, ExprPtr f2, double eps) {
  auto ind = indicator(cmp, std::move(x), c, eps);
  return ex::add(ex::mul(std::move(f1), ind), ex::mul(std::move(f2), ex::one_minus(ind)));
}

// OR fires once at least one input is 1.
ExprPtr or_(const std::vector<ExprPtr>& xs, double eps) { return ind_ge(ex::sum_of(xs), 1.0, eps); }

ExprPtr and_(const std::vector<ExprPtr>& xs, double eps) {
  return ind_ge(ex::sum_of(xs), static_cast<double>(xs.size()), eps);
}

ExprPtr not_(ExprPtr x) { return ex::one_minus(std::move(x)); }

std::vector<ExprPtr> base_c_increment(const std::vector<ExprPtr>& x, int c) {
  const int k = static_cast<int>(x.size());
  std::vector<ExprPtr> out;
  ex::Terms before;  // x_1 .. x_{i-1}
  for (int i = 1; i <= k; ++i) {
    double full = static_cast<double>(i - 1) * (c - 1);
    ex::Terms neg;
    for (auto& [w, e] : before) neg.emplace_back(-w, e);
    auto h1 = relu(full, neg);
    auto h2 = relu(full - 1, neg);
    ex::Terms upto = before;
    upto.emplace_back(1.0, x[i - 1]);
    auto h3 = relu(-static_cast<double>(i) * (c - 1) + 1, upto);
    out.push_back(relu(1.0, {{1.0, x[i - 1]}, {-1.0, h1}, {1.0, h2}, {-static_cast<double>(c), h3}}));
    before.emplace_back(1.0, x[i - 1]);
  }
  return out;
}

ExprPtr exp_binary(ExprPtr x, double alpha, double eps) {
  double ea = std::exp(alpha);
  return lin(ea, {{1.0 - ea, ind_eq(std::move(x), 0.0, eps)}});
}

}  // namespace tf

std::vector<ExprPtr> build_transition(TransitionKind kind, const TransitionParams& p) {
  using ex::ref;
  auto args = [&](int w) {
    std::vector<ExprPtr> a;
    for (int j = 0; j < w; ++j) a.push_back(ref(j));
    return a;
  };
  switch (kind) {
    case TransitionKind::indicator_eq:
      return {tf::ind_eq(ref(0), p.c, p.eps)};
    case TransitionKind::indicator_le:
      return {tf::ind_le(ref(0), p.c, p.eps)};
    case TransitionKind::indicator_ge:
      return {tf::ind_ge(ref(0), p.c, p.eps)};
    case TransitionKind::if_else:
      return {tf::if_else(p.cmp, ref(0), p.c, ref(1), ref(2), p.eps)};
    case TransitionKind::or_:
      return {tf::or_(args(p.width), p.eps)};
    case TransitionKind::and_:
      return {tf::and_(args(p.width), p.eps)};
    case TransitionKind::not_:
      return {tf::not_(ref(0))};
    case TransitionKind::base_c_increment:
      if (p.c < 2 || p.c != std::floor(p.c)) throw Error("domain", "increment base must be an integer >= 2");
      return tf::base_c_increment(args(p.width), static_cast<int>(p.c));
    case TransitionKind::exp_binary:
      return {tf::exp_binary(ref(0), p.alpha, p.eps)};
  }
  throw Error("domain", "unsupported transition kind");
}

TransitionKind transition_kind(const std::string& name) {
  static const std::pair<const char*, TransitionKind> table[] = {
      {"indicator_eq", TransitionKind::indicator_eq},
      {"indicator_le", TransitionKind::indicator_le},
      {"indicator_ge", TransitionKind::indicator_ge},
      {"if_else", TransitionKind::if_else},
      {"or", TransitionKind::or_},
      {"and", TransitionKind::and_},
      {"not", TransitionKind::not_},
      {"base_c_increment", TransitionKind::base_c_increment},
      {"exp_binary", TransitionKind::exp_binary},
  };
  for (auto& [n, k] : table)
    if (name == n) return k;
  throw Error("domain", "unsupported transition kind '" + name + "'");
}

}  // namespace ntpboost
