#include "risk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "risk/core.hpp"
#include "risk/csv.hpp"

namespace risk {

namespace {

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw input_error("metric inputs differ in length");
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

CalibrationRow make_row(std::string label, const std::vector<double>& probs, const std::vector<int>& labels,
                        const std::vector<std::size_t>& rows) {
  CalibrationRow r;
  r.label = std::move(label);
  r.n = rows.size();
  for (auto i : rows) {
    r.expected += probs[i];
    r.observed += labels[i];
  }
  r.empty = rows.empty();
  if (r.observed > 0) r.e_over_o = r.expected / r.observed;
  return r;
}

}  // namespace

std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_sizes(scores.size(), labels.size());
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the concordant count plus ties, kept in integers.
  unsigned long long twice = 0;
  unsigned long long neg_below = 0;
  unsigned long long pos = 0;
  unsigned long long neg = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    unsigned long long p_here = 0;
    unsigned long long n_here = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? p_here : n_here) += 1;
      ++j;
    }
    twice += 2 * p_here * neg_below + p_here * n_here;
    neg_below += n_here;
    pos += p_here;
    neg += n_here;
    i = j;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::optional<double> e_over_o(const std::vector<double>& probs, const std::vector<int>& labels) {
  check_sizes(probs.size(), labels.size());
  double e = 0.0;
  double o = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    e += probs[i];
    o += labels[i];
  }
  if (o <= 0) return std::nullopt;
  return e / o;
}

double brier(const std::vector<double>& probs, const std::vector<int>& labels) {
  check_sizes(probs.size(), labels.size());
  if (probs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double d = probs[i] - labels[i];
    s += d * d;
  }
  return s / static_cast<double>(probs.size());
}

nlohmann::json CalibrationRow::to_json() const {
  return {{"label", label}, {"n", n}, {"expected", expected}, {"observed", observed},
          {"e_over_o", optional_json(e_over_o)}, {"empty", empty}};
}

std::vector<CalibrationRow> quintile_table(const std::vector<double>& probs, const std::vector<int>& labels) {
  check_sizes(probs.size(), labels.size());
  const std::size_t n = probs.size();
  if (n < 5) throw input_error("quintile table needs at least 5 rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  const std::size_t q = n / 5;
  const std::size_t r = n % 5;
  std::vector<CalibrationRow> out;
  std::size_t start = 0;
  for (std::size_t g = 0; g < 5; ++g) {
    const std::size_t size = q + (g < r ? 1 : 0);
    std::vector<std::size_t> rows(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                  idx.begin() + static_cast<std::ptrdiff_t>(start + size));
    out.push_back(make_row("Q" + std::to_string(g + 1), probs, labels, rows));
    start += size;
  }
  return out;
}

std::vector<CalibrationRow> subgroup_table(const std::vector<double>& probs, const std::vector<int>& labels,
                                           const std::vector<double>& covariate, SubgroupSplit split,
                                           std::vector<double> levels) {
  check_sizes(probs.size(), labels.size());
  check_sizes(probs.size(), covariate.size());
  std::vector<CalibrationRow> out;
  if (split == SubgroupSplit::median) {
    std::vector<double> sorted = covariate;
    std::sort(sorted.begin(), sorted.end());
    double median = std::numeric_limits<double>::quiet_NaN();
    if (!sorted.empty()) {
      const std::size_t h = sorted.size() / 2;
      median = sorted.size() % 2 == 1 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
    }
    std::vector<std::size_t> lower, upper;
    for (std::size_t i = 0; i < covariate.size(); ++i) (covariate[i] <= median ? lower : upper).push_back(i);
    out.push_back(make_row("<= " + csv::format(median), probs, labels, lower));
    out.push_back(make_row("> " + csv::format(median), probs, labels, upper));
    return out;
  }
  if (levels.empty()) {
    levels = covariate;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  }
  for (double level : levels) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < covariate.size(); ++i)
      if (covariate[i] == level) rows.push_back(i);
    out.push_back(make_row(csv::format(level), probs, labels, rows));
  }
  return out;
}

}  // namespace risk
