//
// Copyright 2026 The lastmile Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef LASTMILE_METRICS_HPP_
#define LASTMILE_METRICS_HPP_

// ROUGE-1/2/L over lowercased whitespace entities, the length-adjusted
// variants, and excess-length statistics.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lastmile/error.hpp"

namespace lastmile {

struct RougeTriple {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

inline double harmonic_mean(double p, double r) {
  return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

inline RougeTriple make_triple(double p, double r) { return {p, r, harmonic_mean(p, r)}; }

struct LengthPair {
  std::size_t np = 0;  // entities in the prediction
  std::size_t ng = 0;  // entities in the ground truth
};

inline std::vector<std::string> entities(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::size_t entity_count(std::string_view text) { return entities(text).size(); }

inline LengthPair length_pair(std::string_view pred, std::string_view ref) {
  return {entity_count(pred), entity_count(ref)};
}

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& words, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace detail

// Clipped n-gram overlap; precision over prediction n-grams, recall over
// reference n-grams.
inline RougeTriple rouge_n(std::string_view pred, std::string_view ref, std::size_t n) {
  if (n == 0) throw ConfigError("rouge_n: n must be >= 1");
  const auto pw = entities(pred);
  const auto rw = entities(ref);
  const auto pc = detail::ngram_counts(pw, n);
  const auto rc = detail::ngram_counts(rw, n);
  std::size_t overlap = 0, ptotal = 0, rtotal = 0;
  for (const auto& [g, c] : pc) {
    ptotal += c;
    if (auto it = rc.find(g); it != rc.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [g, c] : rc) rtotal += c;
  const double p = ptotal ? static_cast<double>(overlap) / static_cast<double>(ptotal) : 0.0;
  const double r = rtotal ? static_cast<double>(overlap) / static_cast<double>(rtotal) : 0.0;
  return make_triple(p, r);
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeTriple rouge_l(std::string_view pred, std::string_view ref) {
  const auto pw = entities(pred);
  const auto rw = entities(ref);
  const double lcs = static_cast<double>(lcs_length(pw, rw));
  const double p = pw.empty() ? 0.0 : lcs / static_cast<double>(pw.size());
  const double r = rw.empty() ? 0.0 : lcs / static_cast<double>(rw.size());
  return make_triple(p, r);
}

// recall * ng/np when the prediction is longer; precision * np/ng when it is
// shorter. F1 is the harmonic mean of the adjusted pair.
inline RougeTriple length_adjust(const RougeTriple& t, const LengthPair& lp) {
  if (lp.np == 0 || lp.ng == 0) return {};
  const double np = static_cast<double>(lp.np);
  const double ng = static_cast<double>(lp.ng);
  const double r = lp.np > lp.ng ? t.recall * ng / np : t.recall;
  const double p = lp.np < lp.ng ? t.precision * np / ng : t.precision;
  return make_triple(p, r);
}

// Mean of (np - ng) over pairs.
inline double excess_length(const std::vector<std::string>& preds,
                            const std::vector<std::string>& refs) {
  if (preds.size() != refs.size()) throw ContractError("excess_length: list lengths differ");
  if (preds.empty()) return 0.0;
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    sum += static_cast<double>(entity_count(preds[i])) -
           static_cast<double>(entity_count(refs[i]));
  return sum / static_cast<double>(preds.size());
}

inline double mean_abs_excess_length(const std::vector<std::string>& preds,
                                     const std::vector<std::string>& refs) {
  if (preds.size() != refs.size())
    throw ContractError("mean_abs_excess_length: list lengths differ");
  if (preds.empty()) return 0.0;
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    sum += std::abs(static_cast<double>(entity_count(preds[i])) -
                    static_cast<double>(entity_count(refs[i])));
  return sum / static_cast<double>(preds.size());
}

// Row names in report order: la-rouge{1,2,L}, then rouge{1,2,L}, each as
// F1 / precision / recall, then excess length.
inline const std::vector<std::string>& report_rows() {
  static const std::vector<std::string> rows = [] {
    std::vector<std::string> r;
    for (const char* prefix : {"la-rouge", "rouge"})
      for (const char* kind : {"1", "2", "L"})
        for (const char* part : {"F1", "precision", "recall"})
          r.push_back(std::string(prefix) + kind + "-" + part);
    r.push_back("excess-length");
    return r;
  }();
  return rows;
}

struct MetricReport {
  // Values aligned with report_rows().
  std::vector<double> values;
  double mean_abs_excess = 0;
  std::size_t pairs = 0;

  double get(std::string_view row) const {
    const auto& rows = report_rows();
    const auto it = std::find(rows.begin(), rows.end(), row);
    if (it == rows.end()) throw ContractError("metric report: no row '" + std::string(row) + "'");
    return values[static_cast<std::size_t>(it - rows.begin())];
  }
};

inline MetricReport evaluate(const std::vector<std::string>& outputs,
                             const std::vector<std::string>& refs) {
  if (outputs.size() != refs.size()) throw ContractError("evaluate: list lengths differ");
  MetricReport rep;
  rep.pairs = outputs.size();
  rep.values.assign(report_rows().size(), 0.0);
  if (outputs.empty()) return rep;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const LengthPair lp = length_pair(outputs[i], refs[i]);
    const std::array<RougeTriple, 3> raw = {rouge_n(outputs[i], refs[i], 1),
                                            rouge_n(outputs[i], refs[i], 2),
                                            rouge_l(outputs[i], refs[i])};
    for (std::size_t k = 0; k < 3; ++k) {
      const RougeTriple la = length_adjust(raw[k], lp);
      const std::array<double, 3> la_vals = {la.f1, la.precision, la.recall};
      const std::array<double, 3> raw_vals = {raw[k].f1, raw[k].precision, raw[k].recall};
      for (std::size_t j = 0; j < 3; ++j) {
        rep.values[k * 3 + j] += la_vals[j];
        rep.values[9 + k * 3 + j] += raw_vals[j];
      }
    }
  }
  const double n = static_cast<double>(outputs.size());
  for (std::size_t k = 0; k < 18; ++k) rep.values[k] /= n;
  rep.values[18] = excess_length(outputs, refs);
  rep.mean_abs_excess = mean_abs_excess_length(outputs, refs);
  return rep;
}

// A comparison table: one column per model variant.
struct ComparisonTable {
  std::vector<std::string> columns;
  std::vector<MetricReport> reports;
};

inline std::string format_value(double v, int digits) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << (v == 0.0 ? 0.0 : v);  // no "-0.0000"
  return out.str();
}

inline std::string to_csv(const ComparisonTable& t) {
  std::string out = "metric";
  for (const auto& c : t.columns) out += "," + c;
  out += "\n";
  const auto& rows = report_rows();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += rows[r];
    for (const auto& rep : t.reports) out += "," + format_value(rep.values[r], 6);
    out += "\n";
  }
  return out;
}

inline std::string to_markdown(const ComparisonTable& t) {
  std::string out = "|";
  for (const auto& c : t.columns) out += " | " + c;
  out += " |\n|---";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += "|---:";
  out += "|\n";
  const auto& rows = report_rows();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += "| " + rows[r];
    const int digits = rows[r] == "excess-length" ? 1 : 2;
    for (const auto& rep : t.reports) out += " | " + format_value(rep.values[r], digits);
    out += " |\n";
  }
  return out;
}

}  // namespace lastmile

#endif  // LASTMILE_METRICS_HPP_
