#include "effdid/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace effdid {

std::vector<int> CohortIndex::treated_at_horizon(int e) const {
  std::vector<int> out;
  for (int g : cohorts_treated)
    if (g + e <= T) out.push_back(g);
  return out;
}

std::vector<int> CohortIndex::event_horizons() const {
  std::vector<int> out;
  if (cohorts_treated.empty()) return out;
  const int e_max = T - cohorts_treated.front();
  for (int e = 0; e <= e_max; ++e) out.push_back(e);
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw Error("PARSE", "non-numeric " + what + " value '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  long long v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw Error("PARSE", "non-integer " + what + " value '" + s + "'");
  return v;
}

bool is_never_label(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  return s.empty() || s == "inf" || s == "never" || s == "nan";
}

} // namespace

PanelDataset load_long_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("IO", "cannot open '" + path + "'");

  std::string header;
  if (!std::getline(in, header)) throw Error("SCHEMA", "empty file '" + path + "'");
  const auto cols = split_csv_line(header);
  std::unordered_map<std::string, int> col_of;
  for (int i = 0; i < static_cast<int>(cols.size()); ++i) col_of[cols[i]] = i;

  auto need = [&](const std::string& name) {
    auto it = col_of.find(name);
    if (it == col_of.end())
      throw Error("SCHEMA", "missing required column '" + name + "'");
    return it->second;
  };
  const int c_unit = need(schema.unit);
  const int c_period = need(schema.period);
  const int c_outcome = need(schema.outcome);
  const int c_cohort = need(schema.cohort);
  std::vector<int> c_x;
  for (int j = 1; j <= schema.n_covariates; ++j)
    c_x.push_back(need(schema.covariate_prefix + std::to_string(j)));
  int c_treat = -1;
  if (!schema.treatment.empty()) c_treat = need(schema.treatment);

  struct Row {
    std::string unit;
    long long period;
    double outcome;
    std::string cohort;
    std::vector<double> x;
    double treat;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != cols.size())
      throw Error("PARSE", "row with " + std::to_string(f.size()) +
                               " fields, expected " + std::to_string(cols.size()));
    Row r;
    r.unit = f[c_unit];
    r.period = parse_int(f[c_period], "period");
    r.outcome = parse_double(f[c_outcome], "outcome");
    r.cohort = f[c_cohort];
    for (int cx : c_x) r.x.push_back(parse_double(f[cx], "covariate"));
    r.treat = c_treat >= 0 ? parse_double(f[c_treat], "treatment") : 0.0;
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error("SCHEMA", "no data rows in '" + path + "'");

  // Unit order = first appearance; period labels sorted ascending.
  std::vector<std::string> units;
  std::unordered_map<std::string, int> unit_of;
  std::set<long long> period_set;
  for (const auto& r : rows) {
    if (!unit_of.count(r.unit)) {
      unit_of[r.unit] = static_cast<int>(units.size());
      units.push_back(r.unit);
    }
    period_set.insert(r.period);
  }
  std::vector<long long> periods(period_set.begin(), period_set.end());
  std::unordered_map<long long, int> period_of;
  for (int j = 0; j < static_cast<int>(periods.size()); ++j) period_of[periods[j]] = j;

  const int n = static_cast<int>(units.size());
  const int T = static_cast<int>(periods.size());

  PanelDataset ds;
  ds.unit_ids = units;
  ds.period_labels = periods;
  ds.outcomes.setConstant(n, T, std::numeric_limits<double>::quiet_NaN());
  ds.cohort.assign(n, kNever);
  ds.covariates.setZero(n, schema.n_covariates);
  if (c_treat >= 0) {
    ds.treatment = Eigen::MatrixXd::Constant(n, T, std::numeric_limits<double>::quiet_NaN());
  }

  std::vector<bool> cohort_seen(n, false), cov_seen(n, false);
  std::vector<std::string> cohort_label(n);
  for (const auto& r : rows) {
    const int i = unit_of[r.unit];
    const int j = period_of[r.period];
    if (!std::isnan(ds.outcomes(i, j)))
      throw Error("DUPLICATE_CELL", "duplicate (unit,period)=(" + r.unit + "," +
                                        std::to_string(r.period) + ")");
    ds.outcomes(i, j) = r.outcome;
    if (ds.treatment) (*ds.treatment)(i, j) = r.treat;
    if (!cohort_seen[i]) {
      cohort_seen[i] = true;
      cohort_label[i] = r.cohort;
    } else if (cohort_label[i] != r.cohort) {
      throw Error("PARSE", "cohort label varies within unit '" + r.unit + "'");
    }
    if (!cov_seen[i]) {
      cov_seen[i] = true;
      for (int k = 0; k < schema.n_covariates; ++k) ds.covariates(i, k) = r.x[k];
    }
  }

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < T; ++j) {
      if (std::isnan(ds.outcomes(i, j)))
        throw Error("UNBALANCED_PANEL", "unit '" + units[i] + "' missing period " +
                                            std::to_string(periods[j]));
    }
    if (is_never_label(cohort_label[i])) {
      ds.cohort[i] = kNever;
    } else {
      const long long raw = parse_int(cohort_label[i], "cohort");
      auto it = period_of.find(raw);
      if (it == period_of.end())
        throw Error("INVALID_COHORT", "cohort label " + cohort_label[i] +
                                          " is not an observed period");
      const int g = it->second + 1; // internal 1-based period
      if (g < 2)
        throw Error("INVALID_COHORT",
                    "cohort " + cohort_label[i] + " maps to period 1; treatment starts at t >= 2");
      ds.cohort[i] = g;
    }
  }

  if (ds.treatment) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < T; ++j) {
        const double v = (*ds.treatment)(i, j);
        if (v != 0.0 && v != 1.0)
          throw Error("PARSE", "treatment values must be 0/1");
      }
  }
  return ds;
}

void save_long_csv(const PanelDataset& ds, const std::string& path,
                   const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw Error("IO", "cannot write '" + path + "'");
  out << schema.unit << ',' << schema.period << ',' << schema.outcome << ','
      << schema.cohort;
  for (int k = 1; k <= ds.d(); ++k) out << ',' << schema.covariate_prefix << k;
  const bool iv = ds.iv_mode();
  if (iv) out << ',' << (schema.treatment.empty() ? std::string("d") : schema.treatment);
  out << '\n';

  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.T(); ++j) {
      out << ds.unit_ids[i] << ',' << ds.period_labels[j] << ','
          << fmt(ds.outcomes(i, j)) << ',';
      if (is_never(ds.cohort[i]))
        out << "inf";
      else
        out << ds.period_labels[ds.cohort[i] - 1];
      for (int k = 0; k < ds.d(); ++k) out << ',' << fmt(ds.covariates(i, k));
      if (iv) out << ',' << fmt((*ds.treatment)(i, j));
      out << '\n';
    }
  }
}

ValidationReport validate(const PanelDataset& ds, const ValidationOptions& opts) {
  ValidationReport rep;
  const int n = ds.n();
  const int T = ds.T();
  if (n == 0 || T < 2) {
    rep.errors.push_back({"EMPTY", "panel needs at least one unit and two periods"});
    return rep;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < T; ++j)
      if (!std::isfinite(ds.outcomes(i, j))) {
        rep.errors.push_back({"NONFINITE_OUTCOME", "unit index " + std::to_string(i)});
        return rep;
      }

  bool has_never = false;
  std::map<int, long long> counts;
  for (int g : ds.cohort) {
    ++counts[g];
    if (is_never(g)) {
      has_never = true;
    } else if (g < 2 || g > T) {
      rep.errors.push_back({"INVALID_COHORT",
                            "cohort " + std::to_string(g) + " outside {2..T}"});
      return rep;
    }
  }
  if (!has_never)
    rep.warnings.push_back({"NO_NEVER_COHORT",
                            "all units eventually treated; apply relabel_terminal_cohort"});

  for (const auto& [g, c] : counts) {
    if (c < opts.min_cell_size) {
      ValidationIssue issue{"SMALL_COHORT",
                            "cohort " + (is_never(g) ? std::string("inf") : std::to_string(g)) +
                                " has " + std::to_string(c) + " unit(s), minimum is " +
                                std::to_string(opts.min_cell_size)};
      if (opts.efficient_mode)
        rep.errors.push_back(issue);
      else
        rep.warnings.push_back(issue);
    }
  }
  return rep;
}

PanelDataset relabel_terminal_cohort(const PanelDataset& ds, ValidationReport* report) {
  for (int g : ds.cohort) {
    if (is_never(g)) {
      if (report)
        report->warnings.push_back(
            {"ALREADY_HAS_NEVER", "never-treated cohort present; relabel is a no-op"});
      return ds;
    }
  }
  const int g_last = *std::max_element(ds.cohort.begin(), ds.cohort.end());
  const int new_T = g_last - 1;
  if (new_T < 2)
    throw Error("INVALID_COHORT", "dropping the terminal cohort leaves fewer than 2 periods");

  PanelDataset out;
  out.unit_ids = ds.unit_ids;
  out.period_labels.assign(ds.period_labels.begin(), ds.period_labels.begin() + new_T);
  out.outcomes = ds.outcomes.leftCols(new_T);
  out.covariates = ds.covariates;
  if (ds.treatment) out.treatment = ds.treatment->leftCols(new_T);
  out.cohort.resize(ds.n());
  for (int i = 0; i < ds.n(); ++i)
    out.cohort[i] = ds.cohort[i] == g_last ? kNever : ds.cohort[i];
  return out;
}

CohortIndex cohort_index(const PanelDataset& ds) {
  CohortIndex idx;
  idx.T = ds.T();
  const double n = static_cast<double>(ds.n());
  for (int g : ds.cohort) ++idx.counts[g];
  for (const auto& [g, c] : idx.counts) {
    idx.shares[g] = static_cast<double>(c) / n;
    if (is_never(g))
      idx.has_never = true;
    else
      idx.cohorts_treated.push_back(g);
  }
  std::sort(idx.cohorts_treated.begin(), idx.cohorts_treated.end());
  return idx;
}

} // namespace effdid
