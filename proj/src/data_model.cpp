#include "risk/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "risk/csv.hpp"
#include "risk/rng.hpp"

namespace risk {
namespace {

constexpr std::array<std::string_view, 6> fixed_columns{"id",     "group", "cluster_id",
                                                        "weight", "aud",   "cud"};

std::string_view kind_name(PredictorKind k) {
  switch (k) {
    case PredictorKind::continuous: return "continuous";
    case PredictorKind::binary: return "binary";
    case PredictorKind::categorical: return "categorical";
  }
  return "continuous";
}

PredictorKind parse_kind(const std::string& s) {
  if (s == "continuous") return PredictorKind::continuous;
  if (s == "binary") return PredictorKind::binary;
  if (s == "categorical") return PredictorKind::categorical;
  throw input_error("unknown predictor kind '" + s + "'");
}

std::string indicator_name(const PredictorSpec& p, const std::string& level) {
  return p.name + ":" + level;
}

// Collects row-level problems so one load reports all of them.
class ErrorReport {
 public:
  void add(std::size_t line, const std::string& msg) {
    ++count_;
    if (count_ <= 50) text_ += "line " + std::to_string(line) + ": " + msg + "\n";
  }
  void raise_if_any() const {
    if (count_ == 0) return;
    std::string msg = std::to_string(count_) + " invalid row(s)\n" + text_;
    if (count_ > 50) msg += "...\n";
    throw input_error(msg);
  }

 private:
  std::size_t count_ = 0;
  std::string text_;
};

}  // namespace

std::vector<std::string> Schema::design_columns() const {
  std::vector<std::string> cols;
  for (const auto& p : predictors) {
    if (p.kind == PredictorKind::categorical) {
      for (std::size_t l = 1; l < p.levels.size(); ++l) cols.push_back(indicator_name(p, p.levels[l]));
    } else {
      cols.push_back(p.name);
    }
  }
  return cols;
}

const PredictorSpec* Schema::find(std::string_view name) const {
  for (const auto& p : predictors)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<std::string> Schema::expand(std::string_view name) const {
  if (const auto* p = find(name)) {
    if (p->kind != PredictorKind::categorical) return {p->name};
    std::vector<std::string> cols;
    for (std::size_t l = 1; l < p->levels.size(); ++l) cols.push_back(indicator_name(*p, p->levels[l]));
    return cols;
  }
  if (owner_of(name) != nullptr) return {std::string(name)};
  return {};
}

const PredictorSpec* Schema::owner_of(std::string_view column) const {
  for (const auto& p : predictors) {
    if (p.kind != PredictorKind::categorical) {
      if (p.name == column) return &p;
      continue;
    }
    for (std::size_t l = 1; l < p.levels.size(); ++l)
      if (indicator_name(p, p.levels[l]) == column) return &p;
  }
  return nullptr;
}

Schema Schema::from_json(const nlohmann::json& j) {
  Schema s;
  const auto& list = j.contains("predictors") ? j.at("predictors") : j;
  if (!list.is_array()) throw input_error("schema: expected a 'predictors' array");
  for (const auto& e : list) {
    PredictorSpec p;
    p.name = e.at("name").get<std::string>();
    p.kind = parse_kind(e.value("kind", std::string("continuous")));
    if (e.contains("scaling_max") && !e.at("scaling_max").is_null())
      p.scaling_max = e.at("scaling_max").get<double>();
    p.shift = e.value("shift", 0.0);
    p.scaled = e.value("scaled", true);
    if (e.contains("levels")) p.levels = e.at("levels").get<std::vector<std::string>>();
    if (p.name.empty()) throw input_error("schema: empty predictor name");
    if (p.kind == PredictorKind::categorical && p.levels.size() < 2)
      throw input_error("schema: categorical predictor '" + p.name + "' needs at least two levels");
    if (p.scaling_max && !(*p.scaling_max > 0))
      throw input_error("schema: scaling_max of '" + p.name + "' must be positive");
    if (s.find(p.name) != nullptr) throw input_error("schema: duplicate predictor '" + p.name + "'");
    for (auto fixed : fixed_columns)
      if (p.name == fixed) throw input_error("schema: predictor name '" + p.name + "' is reserved");
    s.predictors.push_back(std::move(p));
  }
  return s;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& p : predictors) {
    nlohmann::json e{{"name", p.name}, {"kind", kind_name(p.kind)}};
    if (p.scaling_max) e["scaling_max"] = *p.scaling_max;
    if (p.shift != 0.0) e["shift"] = p.shift;
    if (!p.scaled) e["scaled"] = false;
    if (!p.levels.empty()) e["levels"] = p.levels;
    list.push_back(std::move(e));
  }
  return nlohmann::json{{"predictors", list}};
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open schema " + path.string());
  try {
    return Schema::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw input_error("schema " + path.string() + ": " + e.what());
  }
}

Dataset::Dataset(Schema schema, std::vector<Participant> participants)
    : schema_(std::move(schema)), participants_(std::move(participants)) {
  index();
}

void Dataset::index() {
  columns_ = schema_.design_columns();
  std::map<std::string, std::size_t> ids;
  for (const auto& p : participants_) ids.emplace(p.cluster_id, 0);
  clusters_.clear();
  for (auto& [id, idx] : ids) {
    idx = clusters_.size();
    clusters_.push_back(id);
  }
  cluster_index_.clear();
  cluster_index_.reserve(participants_.size());
  for (const auto& p : participants_) cluster_index_.push_back(ids.at(p.cluster_id));
}

std::optional<std::size_t> Dataset::column_index(std::string_view name) const {
  for (std::size_t c = 0; c < columns_.size(); ++c)
    if (columns_[c] == name) return c;
  return std::nullopt;
}

std::array<std::size_t, 3> Dataset::group_sizes() const {
  std::array<std::size_t, 3> n{};
  for (const auto& p : participants_) ++n[index_of(p.group)];
  return n;
}

bool Dataset::has_outcomes() const {
  return std::all_of(participants_.begin(), participants_.end(), [](const Participant& p) {
    return p.outcomes[0].has_value() && p.outcomes[1].has_value();
  });
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  std::vector<Participant> ps;
  ps.reserve(rows.size());
  for (auto r : rows) ps.push_back(participants_.at(r));
  return Dataset(schema_, std::move(ps));
}

Dataset parse_dataset(std::istream& in, const Schema& schema, const LoadOptions& opts) {
  std::string line;
  if (!csv::next_line(in, line)) throw input_error("dataset: missing header row");
  const auto header = csv::split(line);

  std::map<std::string, std::size_t> pos;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!pos.emplace(header[c], c).second) throw input_error("dataset: duplicate column '" + header[c] + "'");
    const bool fixed = std::find(fixed_columns.begin(), fixed_columns.end(), header[c]) != fixed_columns.end();
    if (!fixed && schema.find(header[c]) == nullptr)
      throw input_error("dataset: unknown column '" + header[c] + "'");
  }
  for (auto required : {"id", "group", "cluster_id"})
    if (!pos.count(required)) throw input_error(std::string("dataset: missing column '") + required + "'");
  if (opts.require_outcomes)
    for (auto required : {"aud", "cud"})
      if (!pos.count(required)) throw input_error(std::string("dataset: missing column '") + required + "'");
  std::vector<std::string> missing_predictors;
  for (const auto& p : schema.predictors)
    if (!pos.count(p.name)) missing_predictors.push_back(p.name);
  if (!missing_predictors.empty()) {
    std::string msg = "dataset: missing predictor column(s):";
    for (const auto& m : missing_predictors) msg += " " + m;
    throw input_error(msg);
  }

  const auto col = [&](std::string_view name) -> std::optional<std::size_t> {
    auto it = pos.find(std::string(name));
    if (it == pos.end()) return std::nullopt;
    return it->second;
  };
  const auto weight_col = col("weight");
  const std::array<std::optional<std::size_t>, 2> outcome_col{col("aud"), col("cud")};

  ErrorReport errors;
  std::vector<Participant> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) {
      errors.add(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(f.size()));
      continue;
    }
    Participant p;
    bool ok = true;
    const auto fail = [&](const std::string& msg) {
      errors.add(line_no, msg);
      ok = false;
    };

    p.id = f[pos.at("id")];
    if (p.id.empty()) fail("missing id");
    const auto& g = f[pos.at("group")];
    if (auto parsed = parse_group(g)) p.group = *parsed;
    else fail("unknown group label '" + g + "'");
    p.cluster_id = f[pos.at("cluster_id")];
    if (p.cluster_id.empty()) fail("missing cluster_id");

    if (weight_col && !f[*weight_col].empty()) {
      auto w = csv::parse_double(f[*weight_col]);
      if (!w || !std::isfinite(*w) || *w < 0) fail("invalid weight '" + f[*weight_col] + "'");
      else p.weight = *w;
    } else {
      p.weight = 1.0;
      p.weight_missing = true;
    }

    for (auto k : all_outcomes) {
      const auto& c = outcome_col[index_of(k)];
      if (!c || f[*c].empty()) {
        if (opts.require_outcomes) fail("missing " + std::string(to_string(k)) + " outcome");
        continue;
      }
      const auto& v = f[*c];
      if (v == "0" || v == "1") p.outcomes[index_of(k)] = v == "1" ? 1 : 0;
      else fail("invalid " + std::string(to_string(k)) + " outcome '" + v + "'");
    }
    if (ok) {
      for (auto k : all_outcomes) {
        if (!at_risk(p.group, k) && p.outcome(k) == 1)
          fail("structural zero violated: group " + std::string(to_string(p.group)) + " cannot have " +
               std::string(to_string(k)) + "=1");
      }
    }

    for (const auto& spec : schema.predictors) {
      const auto& v = f[pos.at(spec.name)];
      if (v.empty()) {
        fail("missing value for predictor '" + spec.name + "'");
        continue;
      }
      switch (spec.kind) {
        case PredictorKind::continuous: {
          auto x = csv::parse_double(v);
          if (!x || !std::isfinite(*x)) {
            fail("non-numeric value '" + v + "' for '" + spec.name + "'");
          } else if (spec.scaled && (*x < 0.0 || *x > 1.0)) {
            fail("value " + v + " of '" + spec.name + "' outside [0, 1]");
          } else {
            p.x.push_back(*x);
          }
          break;
        }
        case PredictorKind::binary: {
          if (v == "0" || v == "1") p.x.push_back(v == "1" ? 1.0 : 0.0);
          else fail("binary predictor '" + spec.name + "' must be 0 or 1, got '" + v + "'");
          break;
        }
        case PredictorKind::categorical: {
          auto it = std::find(spec.levels.begin(), spec.levels.end(), v);
          if (it == spec.levels.end()) {
            fail("unknown level '" + v + "' for '" + spec.name + "'");
            break;
          }
          const auto level = static_cast<std::size_t>(it - spec.levels.begin());
          for (std::size_t l = 1; l < spec.levels.size(); ++l) p.x.push_back(l == level ? 1.0 : 0.0);
          break;
        }
      }
    }
    if (ok) rows.push_back(std::move(p));
  }
  errors.raise_if_any();
  return Dataset(schema, std::move(rows));
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open dataset " + path.string());
  return parse_dataset(in, schema, opts);
}

void write_dataset(const Dataset& d, std::ostream& out) {
  const auto& schema = d.schema();
  out << "id,group,cluster_id,weight,aud,cud";
  for (const auto& p : schema.predictors) out << ',' << csv::quote_if_needed(p.name);
  out << '\n';
  for (const auto& p : d.participants()) {
    out << csv::quote_if_needed(p.id) << ',' << to_string(p.group) << ',' << csv::quote_if_needed(p.cluster_id)
        << ',';
    if (!p.weight_missing) out << csv::format(p.weight);
    for (auto k : all_outcomes) {
      out << ',';
      if (auto y = p.outcome(k)) out << *y;
    }
    std::size_t c = 0;
    for (const auto& spec : schema.predictors) {
      out << ',';
      if (spec.kind == PredictorKind::categorical) {
        std::size_t level = 0;
        for (std::size_t l = 1; l < spec.levels.size(); ++l, ++c)
          if (p.x[c] == 1.0) level = l;
        out << csv::quote_if_needed(spec.levels[level]);
      } else {
        out << csv::format(p.x[c++]);
      }
    }
    out << '\n';
  }
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  write_dataset(d, out);
  if (!out) throw io_error("write failed for " + path.string());
}

Dataset scale_predictors(const Dataset& raw) {
  Schema schema = raw.schema();
  std::vector<Participant> ps = raw.participants();
  std::size_t c = 0;
  for (auto& spec : schema.predictors) {
    if (spec.kind == PredictorKind::categorical) {
      c += spec.levels.size() - 1;
      continue;
    }
    if (spec.kind == PredictorKind::binary || spec.scaled) {
      if (!spec.scaling_max) spec.scaling_max = 1.0;
      ++c;
      continue;
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : ps) {
      lo = std::min(lo, p.x[c]);
      hi = std::max(hi, p.x[c]);
    }
    double shift = spec.shift;
    if (shift == 0.0 && lo < 0.0) shift = -lo;
    const double m = spec.scaling_max.value_or(hi + shift);
    if (ps.empty() || !(m > 0.0))
      throw input_error("predictor '" + spec.name + "' is constant at zero after shifting; cannot scale");
    for (auto& p : ps) {
      const double v = (p.x[c] + shift) / m;
      if (v < 0.0 || v > 1.0)
        throw input_error("predictor '" + spec.name + "' value " + csv::format(p.x[c]) +
                          " falls outside the declared scaling range");
      p.x[c] = v;
    }
    spec.shift = shift;
    spec.scaling_max = m;
    spec.scaled = true;
    ++c;
  }
  return Dataset(std::move(schema), std::move(ps));
}

Dataset normalize_weights(const Dataset& d) {
  if (d.empty()) return d;
  double total = 0.0;
  for (const auto& p : d.participants()) total += p.weight;
  if (!(total > 0.0)) throw input_error("all survey weights are zero");
  const double factor = static_cast<double>(d.size()) / total;
  std::vector<Participant> ps = d.participants();
  for (auto& p : ps) p.weight *= factor;
  return Dataset(d.schema(), std::move(ps));
}

std::vector<Fold> stratified_folds(const Dataset& d, int k, std::uint64_t seed) {
  const std::size_t n = d.size();
  if (k < 2) throw input_error("number of folds must be at least 2");
  if (static_cast<std::size_t>(k) > n) throw input_error("more folds than participants");

  // stratum key = group * 4 + 2 * aud + cud
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = d[i];
    const int key = index_of(p.group) * 4 + 2 * p.outcome(Outcome::aud).value_or(0) +
                    p.outcome(Outcome::cud).value_or(0);
    strata[key].push_back(i);
  }
  // Pool undersized strata into the largest stratum of the same group; if the
  // whole group is undersized, into the overall largest stratum.
  const auto uk = static_cast<std::size_t>(k);
  for (int g = 0; g < 3; ++g) {
    int largest = -1;
    for (int s = g * 4; s < g * 4 + 4; ++s)
      if (strata.count(s) && (largest < 0 || strata[s].size() > strata[largest].size())) largest = s;
    if (largest < 0) continue;
    for (int s = g * 4; s < g * 4 + 4; ++s) {
      if (s == largest || !strata.count(s) || strata[s].size() >= uk) continue;
      auto& dst = strata[largest];
      dst.insert(dst.end(), strata[s].begin(), strata[s].end());
      strata.erase(s);
    }
  }
  for (bool merged = true; merged && strata.size() > 1;) {
    merged = false;
    auto largest = std::max_element(strata.begin(), strata.end(), [](const auto& a, const auto& b) {
      return a.second.size() < b.second.size();
    });
    for (auto it = strata.begin(); it != strata.end(); ++it) {
      if (it == largest || it->second.size() >= uk) continue;
      largest->second.insert(largest->second.end(), it->second.begin(), it->second.end());
      strata.erase(it);
      merged = true;
      break;
    }
  }

  Rng rng(derive_seed(seed, "folds"));
  std::vector<int> fold_of(n, 0);
  std::size_t offset = 0;
  for (auto& [key, members] : strata) {
    std::sort(members.begin(), members.end());
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t r = 0; r < members.size(); ++r) fold_of[members[r]] = static_cast<int>((offset + r) % uk);
    offset = (offset + members.size()) % uk;
  }

  std::vector<Fold> folds(uk);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < uk; ++f) {
      if (static_cast<std::size_t>(fold_of[i]) == f) folds[f].test.push_back(i);
      else folds[f].train.push_back(i);
    }
  }
  return folds;
}

}  // namespace risk
