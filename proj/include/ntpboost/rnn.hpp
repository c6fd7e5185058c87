#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ntpboost/dist.hpp"
#include "ntpboost/distinguisher.hpp"

namespace ntpboost {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Leaves are constants or node references (value at t-1). sum, relu and recip
// act on bias + sum_j weights[j] * args[j]; prod multiplies its args.
struct Expr {
  enum class Op { constant, node, sum, relu, prod, recip };
  Op op = Op::constant;
  double value = 0;
  int node = -1;
  std::vector<double> weights;
  std::vector<ExprPtr> args;
};

namespace ex {

using Terms = std::vector<std::pair<double, ExprPtr>>;

ExprPtr c(double v);
ExprPtr ref(int id);
ExprPtr lin(double bias, Terms terms);
ExprPtr relu(double bias, Terms terms);
ExprPtr relu(ExprPtr e);
ExprPtr recip(double bias, Terms terms);
ExprPtr recip(ExprPtr e);
ExprPtr prod(std::vector<ExprPtr> args);

ExprPtr add(ExprPtr a, ExprPtr b);
ExprPtr sub(ExprPtr a, ExprPtr b);
ExprPtr scale(double w, ExprPtr a);
ExprPtr one_minus(ExprPtr a);
ExprPtr mul(ExprPtr a, ExprPtr b);
ExprPtr sum_of(const std::vector<ExprPtr>& xs);

bool is_const(const ExprPtr& e, double v);

}  // namespace ex

int expr_depth(const ExprPtr& e);
void expr_refs(const ExprPtr& e, std::vector<int>& out);
// Replace every node reference via f(id) -> expression.
ExprPtr substitute(const ExprPtr& e, const std::function<ExprPtr(int)>& f);
ExprPtr remap(const ExprPtr& e, const std::function<int(int)>& f);

std::string to_sexpr(const ExprPtr& e);
ExprPtr parse_sexpr(const std::string& s);

double eval_expr(const ExprPtr& e, std::span<const double> values);

// Precision gap used by the indicator constructions.
inline constexpr double kMachineEps = 1.0 / 4294967296.0;  // 2^-32

// Transition function library over integer-valued arguments.
namespace tf {
ExprPtr ind_eq(ExprPtr x, double c, double eps = kMachineEps);
ExprPtr ind_le(ExprPtr x, double c, double eps = kMachineEps);
ExprPtr ind_ge(ExprPtr x, double c, double eps = kMachineEps);
enum class Cmp { eq, le, ge };
ExprPtr indicator(Cmp cmp, ExprPtr x, double c, double eps = kMachineEps);
ExprPtr if_else(Cmp cmp, ExprPtr x, double c, ExprPtr f1, ExprPtr f2, double eps = kMachineEps);
ExprPtr or_(const std::vector<ExprPtr>& xs, double eps = kMachineEps);
ExprPtr and_(const std::vector<ExprPtr>& xs, double eps = kMachineEps);
ExprPtr not_(ExprPtr x);
// Digits x[0] (least significant) .. x[k-1] in base c; returns the incremented digits, wrapping at c^k.
std::vector<ExprPtr> base_c_increment(const std::vector<ExprPtr>& x, int c);
// exp(alpha * x) for x in {0, 1}.
ExprPtr exp_binary(ExprPtr x, double alpha, double eps = kMachineEps);
}  // namespace tf

enum class TransitionKind { indicator_eq, indicator_le, indicator_ge, if_else, or_, and_, not_, base_c_increment, exp_binary };

struct TransitionParams {
  double c = 0;      // comparison constant, or the base for increments
  int width = 1;     // argument count for or/and, digit count for increments
  double alpha = 0;  // exp_binary coefficient
  double eps = kMachineEps;
  tf::Cmp cmp = tf::Cmp::eq;  // comparison used by if_else
};

// Expressions over argument slots (node references 0, 1, ...). if_else reads
// (x, f1, f2) from slots 0, 1, 2. Increment returns one expression per digit.
std::vector<ExprPtr> build_transition(TransitionKind kind, const TransitionParams& params);
TransitionKind transition_kind(const std::string& name);

struct RnnNode {
  std::string name;
  double init = 0;
  ExprPtr expr;  // null for input nodes
};

// Output samples are taken at times i * period - offset, i = 1, 2, ...
struct Schedule {
  std::string kind = "per_token";
  long long period = 1;
  long long offset = 0;
};

struct BitsFormat {
  int integer = 0;
  int fraction = 0;
};

// Runtime check that a node only takes listed values (controller outputs).
struct ValueGuard {
  int node = -1;
  std::vector<double> allowed;
};

struct RnnGraph {
  std::vector<RnnNode> nodes;
  std::vector<int> input_ids;
  std::vector<int> hidden_ids;
  int output_id = -1;
  long long rnn_time = 1;
  Schedule schedule;
  std::optional<BitsFormat> bits;
  std::vector<ValueGuard> guards;
  std::vector<int> reset_on_input;
  // Declared incoming neighbours per node; when present every expression must stay inside them.
  std::optional<std::vector<std::vector<int>>> allowed_in;
  std::map<std::string, int> designated;
  int max_depth = 64;

  int add_input(const std::string& name);
  int add_node(const std::string& name, double init = 0, ExprPtr expr = nullptr);
  void set_expr(int id, ExprPtr e) { nodes.at(id).expr = std::move(e); }
  int size() const { return static_cast<int>(nodes.size()); }
  int hidden_size() const { return static_cast<int>(hidden_ids.size()); }
  bool is_input(int id) const;
  bool is_hidden(int id) const;
  std::vector<std::pair<int, int>> edges() const;
  void validate() const;
};

struct ExecutionTrace {
  std::vector<std::vector<double>> values;  // values[t] for t = 0..steps when kept
  std::vector<long long> pointer;           // 1-based token index read at each step
  std::vector<std::pair<long long, double>> outputs;
  long long steps = 0;
  long long saturation_events = 0;
  std::vector<double> final_state;
};

struct RunOptions {
  std::optional<BitsFormat> quantize;
  bool keep_values = true;
  // Called after the state at time t is formed; may modify it.
  std::function<void(long long, std::vector<double>&)> hook;
};

// A graph compiled to flat bytecode with shared subexpressions evaluated once.
class Program {
 public:
  explicit Program(const RnnGraph& g);
  // Computes the state at time t from the state at t-1.
  void step(const std::vector<double>& prev, std::vector<double>& next, long long t) const;
  std::size_t instruction_count() const { return code_.size(); }

 private:
  struct Instr {
    Expr::Op op;
    double value;
    int node;
    int first;
    int count;
    int owner;
  };
  const RnnGraph* g_;
  std::vector<Instr> code_;
  std::vector<std::pair<int, double>> operands_;
  std::vector<int> result_;  // slot per node, -1 for inputs
  mutable std::vector<double> slots_;
};

// Input nodes at time t hold stream[ceil(t / rnn_time) - 1]; total_steps defaults to
// stream.size() * rnn_time.
ExecutionTrace run(const RnnGraph& g, std::span<const int> stream, long long total_steps = -1,
                   const RunOptions& opts = {});

// Output at times i * rnn_time for i = 1..stream.size().
std::vector<double> token_outputs(const RnnGraph& g, std::span<const int> stream,
                                  std::optional<BitsFormat> quantize = std::nullopt,
                                  long long* saturation = nullptr);

// Reads q(x_i | x_{:i}) off a graph at every token boundary, for all prefixes.
LanguageModel lm_from_graph(const RnnGraph& g, int alphabet, int n, std::optional<BitsFormat> quantize = std::nullopt,
                            long long* saturation = nullptr);

// d(i, x) is the output after reading i+k-1 tokens, with the stream padded by token 0 past n.
Distinguisher distinguisher_from_graph(const RnnGraph& g, int k, int n, int alphabet);

struct SufficiencyReport {
  bool passed = true;
  int trials = 0;
  int failing_trial = -1;
  long long cut_time = -1;
  long long diverging_time = -1;
  double expected = 0, got = 0;
  std::string message;
};

SufficiencyReport verify_hidden_sufficiency(const RnnGraph& g, int trials, std::mt19937_64& rng, int alphabet,
                                            int stream_len, double tol = 1e-12);

// Controller output 0 loads from the external source, 1 runs the original rule, 2 holds.
RnnGraph gated_augment(const RnnGraph& q, const std::vector<int>& targets, const RnnGraph& controller,
                       const std::map<int, int>& external_source);

RnnGraph universal_graph(int N, int H);
// Places an RNN inside a universal graph: inputs, hidden nodes, then the rest in order.
RnnGraph embed_in_universal(const RnnGraph& universal, const RnnGraph& g);

}  // namespace ntpboost
