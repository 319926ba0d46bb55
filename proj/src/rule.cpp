#include "survhte/rule.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace survhte {

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool ThresholdRule::contains(std::span<const double> x) const {
  bool all = std::all_of(clauses.begin(), clauses.end(), [&](const Clause& c) { return c.holds(x); });
  return complement ? !all : all;
}

std::string ThresholdRule::describe() const {
  std::string body;
  for (std::size_t k = 0; k < clauses.size(); ++k) {
    if (k) body += " & ";
    const Clause& c = clauses[k];
    body += "x" + std::to_string(c.index + 1) + (c.direction == Direction::kGreaterEqual ? ">=" : "<=") +
            format_double(c.threshold);
  }
  if (clauses.empty()) body = "all";
  return complement ? "not(" + body + ")" : body;
}

SubgroupDefinition::SubgroupDefinition(std::vector<Clause> clauses) {
  if (clauses.empty()) throw std::invalid_argument("subgroup definition needs at least one clause");
  std::set<std::size_t> seen;
  for (const Clause& c : clauses)
    if (!seen.insert(c.index).second)
      throw std::invalid_argument("subgroup definition repeats variable x" + std::to_string(c.index + 1));
  rule_.clauses = std::move(clauses);
}

SubgroupDefinition SubgroupDefinition::at_least(std::vector<std::size_t> indices, double threshold) {
  std::vector<Clause> clauses;
  for (std::size_t i : indices) clauses.push_back({i, threshold, Direction::kGreaterEqual});
  return SubgroupDefinition(std::move(clauses));
}

SubgroupDefinition SubgroupDefinition::parse(const std::string& text) {
  std::vector<Clause> clauses;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, '&')) {
    token.erase(std::remove_if(token.begin(), token.end(), [](unsigned char ch) { return std::isspace(ch); }),
                token.end());
    if (token.empty()) continue;
    if (token.size() < 2 || token[0] != 'x') throw std::invalid_argument("bad subgroup clause '" + token + "'");
    std::size_t op = token.find_first_of("<>");
    if (op == std::string::npos || op + 1 >= token.size() || token[op + 1] != '=')
      throw std::invalid_argument("bad subgroup clause '" + token + "' (expected >= or <=)");
    Clause c;
    const std::string idx = token.substr(1, op - 1);
    const std::string thr = token.substr(op + 2);
    std::size_t one_based = 0;
    auto r1 = std::from_chars(idx.data(), idx.data() + idx.size(), one_based);
    double value = 0.0;
    auto r2 = std::from_chars(thr.data(), thr.data() + thr.size(), value);
    if (r1.ec != std::errc() || r1.ptr != idx.data() + idx.size() || one_based == 0 || r2.ec != std::errc() ||
        r2.ptr != thr.data() + thr.size())
      throw std::invalid_argument("bad subgroup clause '" + token + "'");
    c.index = one_based - 1;
    c.threshold = value;
    c.direction = token[op] == '>' ? Direction::kGreaterEqual : Direction::kLessEqual;
    clauses.push_back(c);
  }
  return SubgroupDefinition(std::move(clauses));
}

std::vector<std::size_t> SubgroupDefinition::variables() const {
  std::vector<std::size_t> v;
  for (const Clause& c : rule_.clauses) v.push_back(c.index);
  return v;
}

void SubgroupDefinition::check_dimension(std::size_t p) const {
  for (const Clause& c : rule_.clauses)
    if (c.index >= p)
      throw std::invalid_argument("subgroup variable x" + std::to_string(c.index + 1) + " exceeds dimension " +
                                  std::to_string(p));
}

}  // namespace survhte
