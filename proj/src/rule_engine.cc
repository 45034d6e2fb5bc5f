#include "soel/rule_engine.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "soel/error.h"
#include "soel/plasticity.h"

namespace soel {
namespace {

using Variable = SumOfProductsRule::Variable;

struct NamedVariable {
  std::string_view name;
  Variable var;
};

constexpr NamedVariable kVariables[] = {
    {"pre_trace", Variable::kPreTrace},   {"post_trace", Variable::kPostTrace},
    {"post_error", Variable::kPostError}, {"post_gate", Variable::kPostGate},
    {"pre_spike", Variable::kPreSpike},   {"post_spike", Variable::kPostSpike},
};

std::optional<double> ParseNumber(std::string_view tok) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return value;
}

bool IsIdentifier(std::string_view tok) {
  if (tok.empty() || std::isdigit(static_cast<unsigned char>(tok[0]))) return false;
  for (char c : tok)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

// Splits `a * b * c` into operands; empty or space-separated operands are errors.
std::vector<std::string_view> Tokenize(std::string_view line, std::size_t line_no) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  std::vector<std::string_view> out;
  if (trim(line).empty()) return out;
  while (true) {
    const std::size_t star = line.find('*');
    const std::string_view tok = trim(line.substr(0, star));
    const bool spaced = std::any_of(tok.begin(), tok.end(),
                                    [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
    if (tok.empty() || spaced)
      throw RuleError("line " + std::to_string(line_no) + ": expected `operand * operand ...`");
    out.push_back(tok);
    if (star == std::string_view::npos) break;
    line = line.substr(star + 1);
  }
  return out;
}

std::string FormatNumber(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double Require(const std::optional<double>& v, std::string_view name) {
  if (!v) throw RuleError("rule references unbound variable '" + std::string(name) + "'");
  return *v;
}

}  // namespace

SumOfProductsRule SumOfProductsRule::Parse(std::string_view text) {
  SumOfProductsRule rule;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    const auto tokens = Tokenize(line, line_no);
    if (tokens.empty()) continue;

    Term term;
    const std::string_view head = tokens[0];
    if (auto num = ParseNumber(head)) {
      term.scale = *num;
    } else {
      std::string_view name = head;
      if (name.starts_with('-')) {
        term.negate_param = true;
        name.remove_prefix(1);
      }
      if (!IsIdentifier(name))
        throw RuleError("line " + std::to_string(line_no) + ": bad scale '" + std::string(head) + "'");
      term.scale_param = std::string(name);
    }
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      Factor f;
      if (auto num = ParseNumber(tokens[k])) {
        f.constant = *num;
      } else {
        bool found = false;
        for (const auto& nv : kVariables)
          if (nv.name == tokens[k]) {
            f.var = nv.var;
            found = true;
          }
        if (!found)
          throw RuleError("line " + std::to_string(line_no) + ": unknown variable '" +
                          std::string(tokens[k]) + "'");
      }
      term.factors.push_back(f);
    }
    rule.terms_.push_back(std::move(term));
  }
  return rule;
}

SumOfProductsRule SumOfProductsRule::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuleError("cannot open rule file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str());
}

std::string SumOfProductsRule::ToString() const {
  std::string out;
  for (const Term& t : terms_) {
    out += t.scale_param.empty() ? FormatNumber(t.scale)
                                 : (t.negate_param ? "-" : "") + t.scale_param;
    for (const Factor& f : t.factors) {
      out += " * ";
      if (f.var == Variable::kConstant) {
        out += FormatNumber(f.constant);
        continue;
      }
      for (const auto& nv : kVariables)
        if (nv.var == f.var) out += nv.name;
    }
    out += '\n';
  }
  return out;
}

SumOfProductsRule SumOfProductsRule::Soel() {
  return Parse("eta * post_gate * pre_trace * post_error\n");
}

double EvalSumOfProducts(const SumOfProductsRule& rule, const RuleBindings& ctx) {
  double dw = 0.0;
  for (const auto& term : rule.terms()) {
    double prod = term.scale;
    if (!term.scale_param.empty()) {
      auto it = ctx.params.find(term.scale_param);
      if (it == ctx.params.end())
        throw RuleError("rule references unbound parameter '" + term.scale_param + "'");
      prod = term.negate_param ? -it->second : it->second;
    }
    for (const auto& f : term.factors) {
      switch (f.var) {
        case Variable::kPreTrace: prod *= Require(ctx.pre_trace, "pre_trace"); break;
        case Variable::kPostTrace: prod *= Require(ctx.post_trace, "post_trace"); break;
        case Variable::kPostError:
          prod *= Require(ctx.post_trace, "post_trace") - Require(ctx.offset, "offset");
          break;
        case Variable::kPostGate: prod *= Require(ctx.post_trace, "post_trace") != 0.0 ? 1.0 : 0.0; break;
        case Variable::kPreSpike: prod *= Require(ctx.pre_spike, "pre_spike"); break;
        case Variable::kPostSpike: prod *= Require(ctx.post_spike, "post_spike"); break;
        case Variable::kConstant: prod *= f.constant; break;
      }
    }
    dw += prod;
  }
  return dw;
}

Eigen::VectorXd EvalRuleRow(const SumOfProductsRule& rule,
                            const Eigen::Ref<const Eigen::VectorXd>& pre_trace, int encoded,
                            const SoelConfig& cfg) {
  RuleBindings ctx;
  ctx.post_trace = encoded;
  ctx.offset = cfg.offset;
  ctx.params.emplace("eta", cfg.eta);
  Eigen::VectorXd dw(pre_trace.size());
  for (Eigen::Index j = 0; j < pre_trace.size(); ++j) {
    ctx.pre_trace = pre_trace[j];
    dw[j] = EvalSumOfProducts(rule, ctx);
  }
  return dw;
}

}  // namespace soel
