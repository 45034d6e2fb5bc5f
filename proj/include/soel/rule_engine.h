#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace soel {

struct SoelConfig;

// Sum-of-products plasticity: dw = sum_k C_k * prod_l V_kl.
class SumOfProductsRule {
 public:
  enum class Variable {
    kPreTrace,       // p_j
    kPostTrace,      // raw post-trace value y
    kPostError,      // y - offset
    kPostGate,       // 1 when y != 0, else 0
    kPreSpike,
    kPostSpike,
    kConstant,
  };

  struct Factor {
    Variable var = Variable::kConstant;
    double constant = 0.0;  // used by kConstant
    bool operator==(const Factor&) const = default;
  };

  struct Term {
    // Either a literal scale, or a named parameter (optionally negated).
    double scale = 1.0;
    std::string scale_param;
    bool negate_param = false;
    std::vector<Factor> factors;
    bool operator==(const Term&) const = default;
  };

  SumOfProductsRule() = default;
  explicit SumOfProductsRule(std::vector<Term> terms) : terms_(std::move(terms)) {}

  const std::vector<Term>& terms() const { return terms_; }
  void AddTerm(Term t) { terms_.push_back(std::move(t)); }

  // One term per non-empty line: `<scale> * <factor> * ...`, '#' starts a comment.
  // Scale is a number or a parameter name (e.g. `eta`, `-eta`); factors are
  // pre_trace, post_trace, post_error, post_gate, pre_spike, post_spike or numbers.
  static SumOfProductsRule Parse(std::string_view text);
  static SumOfProductsRule FromFile(const std::string& path);
  std::string ToString() const;

  // The SOEL rule in hardware form: eta * post_gate * pre_trace * post_error.
  static SumOfProductsRule Soel();

  bool operator==(const SumOfProductsRule&) const = default;

 private:
  std::vector<Term> terms_;
};

// Values visible to the rule for one synapse. Unset optionals are unbound.
struct RuleBindings {
  std::optional<double> pre_trace;
  std::optional<double> post_trace;
  std::optional<double> offset;
  std::optional<double> pre_spike;
  std::optional<double> post_spike;
  std::map<std::string, double, std::less<>> params;
};

double EvalSumOfProducts(const SumOfProductsRule& rule, const RuleBindings& ctx);

// Evaluates the rule for every pre-neuron of one post-neuron row, binding
// eta and offset from cfg.
Eigen::VectorXd EvalRuleRow(const SumOfProductsRule& rule,
                            const Eigen::Ref<const Eigen::VectorXd>& pre_trace, int encoded,
                            const SoelConfig& cfg);

}  // namespace soel
