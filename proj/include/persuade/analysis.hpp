#pragma once

// Regression analysis of per-label F1 on categorical factors (treatment
// coding, QR least squares, sequential sums of squares) and aggregation of
// human ratings of augmented text.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/algorithm/string/trim.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/tokenizer.hpp>
#include <json.hpp>

#include "persuade/error.hpp"
#include "persuade/metrics.hpp"
#include "persuade/taxonomy.hpp"

namespace persuade {

enum class Factor : std::uint8_t { Label, TrainingSet, TestLang };

inline constexpr std::array<std::string_view, 3> kFactorNames = {"label", "trainingSet", "testLang"};

constexpr std::string_view to_string(Factor f) { return kFactorNames[static_cast<std::size_t>(f)]; }

inline Factor parse_factor(std::string_view s) {
  for (std::size_t i = 0; i < kFactorNames.size(); ++i) {
    if (kFactorNames[i] == s) return static_cast<Factor>(i);
  }
  throw ValidationError("unknown factor '" + std::string(s) + "'");
}

struct RegressionRow {
  std::string training_set;
  std::string test_language;
  std::string technique;
  double f1 = 0.0;

  const std::string& level(Factor f) const {
    switch (f) {
      case Factor::Label:
        return technique;
      case Factor::TrainingSet:
        return training_set;
      case Factor::TestLang:
        return test_language;
    }
    return technique;
  }
};

using RegressionTable = std::vector<RegressionRow>;

// One row per (training set, language, technique) using per-label F1.
// Training sets and languages default to those present in `runs`; every
// combination must have a report.
inline RegressionTable build_table(const std::map<std::pair<std::string, std::string>, EvalReport>& runs,
                                   std::vector<std::string> training_sets = {},
                                   std::vector<std::string> languages = {}) {
  if (training_sets.empty() || languages.empty()) {
    std::set<std::string> ts, ls;
    for (const auto& [key, _] : runs) {
      ts.insert(key.first);
      ls.insert(key.second);
    }
    if (training_sets.empty()) training_sets.assign(ts.begin(), ts.end());
    if (languages.empty()) languages.assign(ls.begin(), ls.end());
  }
  std::vector<std::string> missing;
  for (const auto& t : training_sets) {
    for (const auto& l : languages) {
      if (!runs.count({t, l})) missing.push_back("(" + t + ", " + l + ")");
    }
  }
  if (!missing.empty()) {
    std::string msg = "incomplete design, missing cells:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  RegressionTable table;
  table.reserve(training_sets.size() * languages.size() * kTechniqueCount);
  for (const auto& t : training_sets) {
    for (const auto& l : languages) {
      const EvalReport& rep = runs.at({t, l});
      for (Technique tech : all_techniques()) {
        const double f1 = rep.per_label[index_of(tech)].f1;
        table.push_back({t, l, std::string(canonical_name(tech)), std::isfinite(f1) ? f1 : 0.0});
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Model formula

using Term = std::vector<Factor>;

inline std::string term_name(const Term& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ":";
    s += to_string(t[i]);
  }
  return s;
}

struct ModelSpec {
  std::vector<Term> terms;

  // label + trainingSet + testLang + trainingSet:label + testLang:trainingSet
  static ModelSpec full() {
    return {{{Factor::Label},
             {Factor::TrainingSet},
             {Factor::TestLang},
             {Factor::TrainingSet, Factor::Label},
             {Factor::TestLang, Factor::TrainingSet}}};
  }

  static ModelSpec parse(const std::string& formula) {
    ModelSpec spec;
    std::stringstream ss(formula);
    std::string term;
    while (std::getline(ss, term, '+')) {
      term.erase(std::remove_if(term.begin(), term.end(), [](char c) { return c == ' '; }), term.end());
      if (term.empty()) continue;
      Term t;
      std::stringstream ts(term);
      std::string f;
      while (std::getline(ts, f, ':')) t.push_back(parse_factor(f));
      spec.terms.push_back(std::move(t));
    }
    spec.validate();
    return spec;
  }

  bool has_main(Factor f) const {
    return std::any_of(terms.begin(), terms.end(), [f](const Term& t) { return t.size() == 1 && t[0] == f; });
  }

  void validate() const {
    if (terms.empty()) throw ValidationError("model needs at least one term");
    for (const Term& t : terms) {
      if (t.empty() || t.size() > 2) throw ValidationError("terms must be main effects or two-way interactions");
      if (t.size() == 2) {
        if (t[0] == t[1]) throw ValidationError("interaction of a factor with itself");
        for (Factor f : t) {
          if (!has_main(f)) {
            throw ValidationError("interaction " + term_name(t) + " needs main effect " +
                                  std::string(to_string(f)));
          }
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Design matrix with treatment coding (reference = alphabetically first level)

using FactorLevels = std::map<Factor, std::vector<std::string>>;

inline FactorLevels factor_levels(const RegressionTable& table) {
  FactorLevels out;
  for (Factor f : {Factor::Label, Factor::TrainingSet, Factor::TestLang}) {
    std::set<std::string> s;
    for (const auto& r : table) s.insert(r.level(f));
    out[f].assign(s.begin(), s.end());
  }
  return out;
}

struct DesignColumn {
  std::string name;
  int term = -1;  // -1 for the intercept
  // For each factor in the term, the level index (>= 1) this column codes.
  std::vector<std::pair<Factor, std::size_t>> levels;
};

inline std::vector<DesignColumn> design_columns(const ModelSpec& spec, const FactorLevels& levels) {
  std::vector<DesignColumn> cols;
  cols.push_back({"(Intercept)", -1, {}});
  for (std::size_t ti = 0; ti < spec.terms.size(); ++ti) {
    const Term& term = spec.terms[ti];
    auto label = [&](Factor f, std::size_t i) {
      return std::string(to_string(f)) + "[" + levels.at(f)[i] + "]";
    };
    if (term.size() == 1) {
      const auto& lv = levels.at(term[0]);
      for (std::size_t i = 1; i < lv.size(); ++i) {
        cols.push_back({label(term[0], i), static_cast<int>(ti), {{term[0], i}}});
      }
    } else {
      const auto& a = levels.at(term[0]);
      const auto& b = levels.at(term[1]);
      for (std::size_t j = 1; j < b.size(); ++j) {
        for (std::size_t i = 1; i < a.size(); ++i) {
          cols.push_back({label(term[0], i) + ":" + label(term[1], j), static_cast<int>(ti),
                          {{term[0], i}, {term[1], j}}});
        }
      }
    }
  }
  return cols;
}

namespace detail {

inline std::size_t level_index(const FactorLevels& levels, Factor f, const std::string& value) {
  const auto& lv = levels.at(f);
  auto it = std::lower_bound(lv.begin(), lv.end(), value);
  if (it == lv.end() || *it != value) {
    throw ValidationError("level '" + value + "' not seen for factor " + std::string(to_string(f)));
  }
  return static_cast<std::size_t>(it - lv.begin());
}

}  // namespace detail

// Row of the design matrix for given level indices per factor.
inline Eigen::RowVectorXd design_row(const std::vector<DesignColumn>& cols,
                                     const std::map<Factor, std::size_t>& at) {
  Eigen::RowVectorXd x(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    double v = 1.0;
    for (const auto& [f, lvl] : cols[c].levels) {
      if (at.at(f) != lvl) {
        v = 0.0;
        break;
      }
    }
    x(static_cast<Eigen::Index>(c)) = v;
  }
  return x;
}

inline Eigen::MatrixXd design_matrix(const RegressionTable& table, const std::vector<DesignColumn>& cols,
                                     const FactorLevels& levels) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(table.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < table.size(); ++r) {
    std::map<Factor, std::size_t> at;
    for (Factor f : {Factor::Label, Factor::TrainingSet, Factor::TestLang}) {
      at[f] = detail::level_index(levels, f, table[r].level(f));
    }
    X.row(static_cast<Eigen::Index>(r)) = design_row(cols, at);
  }
  return X;
}

// ---------------------------------------------------------------------------
// OLS

struct OlsFit {
  ModelSpec spec;
  FactorLevels levels;
  std::vector<DesignColumn> columns;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  // Q^T y: squared entries are the sequential sums of squares per column.
  Eigen::VectorXd effects;
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  double ss_total = 0.0;
  double ss_residual = 0.0;
  std::size_t n = 0;
  std::size_t p = 0;

  std::size_t df_residual() const { return n - p; }
};

// Householder QR without pivoting, so column order (and with it the
// sequential decomposition) follows the model formula.
inline OlsFit fit_ols(const RegressionTable& table, const ModelSpec& spec) {
  spec.validate();
  if (table.empty()) throw ValidationError("regression table is empty");
  OlsFit fit;
  fit.spec = spec;
  fit.levels = factor_levels(table);
  fit.columns = design_columns(spec, fit.levels);
  const Eigen::MatrixXd X = design_matrix(table, fit.columns, fit.levels);
  Eigen::VectorXd y(static_cast<Eigen::Index>(table.size()));
  for (std::size_t i = 0; i < table.size(); ++i) y(static_cast<Eigen::Index>(i)) = table[i].f1;

  fit.n = table.size();
  fit.p = fit.columns.size();
  if (fit.p > fit.n) throw RankDeficiencyError("more design columns than observations");

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(static_cast<Eigen::Index>(fit.p)).triangularView<Eigen::Upper>();
  std::vector<std::string> aliased;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(fit.p); ++j) {
    const double scale = std::max(1.0, X.col(j).norm());
    if (std::abs(R(j, j)) <= 1e-9 * scale) aliased.push_back(fit.columns[static_cast<std::size_t>(j)].name);
  }
  if (!aliased.empty()) {
    std::string msg = "design matrix is rank deficient; aliased columns:";
    for (const auto& a : aliased) msg += " " + a;
    throw RankDeficiencyError(msg);
  }

  const Eigen::VectorXd qty = qr.householderQ().transpose() * y;
  fit.effects = qty.head(static_cast<Eigen::Index>(fit.p));
  const auto Ru = R.triangularView<Eigen::Upper>();
  fit.coefficients = Ru.solve(fit.effects);
  fit.fitted = X * fit.coefficients;
  fit.residuals = y - fit.fitted;
  fit.ss_residual = fit.residuals.squaredNorm();
  fit.ss_total = (y.array() - y.mean()).matrix().squaredNorm();
  fit.r_squared = fit.ss_total > 0 ? 1.0 - fit.ss_residual / fit.ss_total : 1.0;
  const double dfr = static_cast<double>(fit.n - fit.p);
  fit.adj_r_squared = dfr > 0 ? 1.0 - (1.0 - fit.r_squared) * static_cast<double>(fit.n - 1) / dfr
                              : std::numeric_limits<double>::quiet_NaN();

  const Eigen::MatrixXd Rinv =
      Ru.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(fit.p), static_cast<Eigen::Index>(fit.p)));
  const double sigma2 = dfr > 0 ? fit.ss_residual / dfr : std::numeric_limits<double>::quiet_NaN();
  fit.standard_errors = (Rinv.rowwise().squaredNorm() * sigma2).array().sqrt();
  return fit;
}

// Prediction for one combination of factor levels (given as level strings).
inline double predict(const OlsFit& fit, const std::map<Factor, std::string>& at) {
  std::map<Factor, std::size_t> idx;
  for (Factor f : {Factor::Label, Factor::TrainingSet, Factor::TestLang}) {
    auto it = at.find(f);
    idx[f] = it == at.end() ? 0 : detail::level_index(fit.levels, f, it->second);
  }
  return design_row(fit.columns, idx).dot(fit.coefficients);
}

// ---------------------------------------------------------------------------
// Sequential ANOVA

struct AnovaRow {
  std::string term;
  std::size_t df = 0;
  double ss = 0.0;
  double mean_sq = 0.0;
  double explvar = 0.0;  // percent of total sum of squares
  double f_stat = 0.0;
  double p_value = 0.0;
  std::string stars;
};

struct AnovaTable {
  std::vector<AnovaRow> terms;  // model order
  std::size_t df_residual = 0;
  double ss_residual = 0.0;
  double ss_total = 0.0;
  double r_squared = 0.0;
  double adj_r_squared = 0.0;

  double explained() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.explvar;
    return s;
  }

  // Terms by decreasing explained variance.
  std::vector<AnovaRow> display_order() const {
    std::vector<AnovaRow> out = terms;
    std::stable_sort(out.begin(), out.end(), [](const AnovaRow& a, const AnovaRow& b) { return a.explvar > b.explvar; });
    return out;
  }
};

inline std::string significance_stars(double p) {
  if (std::isnan(p)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

// Upper tail of the F distribution, via the regularized incomplete beta.
inline double f_upper_tail(double f, double df1, double df2) {
  if (std::isnan(f) || df1 <= 0 || df2 <= 0) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(f)) return 0.0;
  const boost::math::fisher_f_distribution<double> dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, f));
}

inline AnovaTable anova_sequential(const OlsFit& fit) {
  AnovaTable out;
  out.df_residual = fit.df_residual();
  out.ss_residual = fit.ss_residual;
  out.ss_total = fit.ss_total;
  out.r_squared = fit.r_squared;
  out.adj_r_squared = fit.adj_r_squared;
  const double ms_res = out.df_residual > 0 ? fit.ss_residual / static_cast<double>(out.df_residual)
                                            : std::numeric_limits<double>::quiet_NaN();
  for (std::size_t ti = 0; ti < fit.spec.terms.size(); ++ti) {
    AnovaRow row;
    row.term = term_name(fit.spec.terms[ti]);
    for (std::size_t c = 0; c < fit.columns.size(); ++c) {
      if (fit.columns[c].term != static_cast<int>(ti)) continue;
      const double e = fit.effects(static_cast<Eigen::Index>(c));
      row.ss += e * e;
      ++row.df;
    }
    row.mean_sq = row.df ? row.ss / static_cast<double>(row.df) : 0.0;
    row.explvar = fit.ss_total > 0 ? 100.0 * row.ss / fit.ss_total : 0.0;
    if (ms_res == 0.0) {
      row.f_stat = row.mean_sq > 0 ? std::numeric_limits<double>::infinity()
                                   : std::numeric_limits<double>::quiet_NaN();
    } else {
      row.f_stat = row.mean_sq / ms_res;
    }
    row.p_value = f_upper_tail(row.f_stat, static_cast<double>(row.df), static_cast<double>(out.df_residual));
    row.stars = significance_stars(row.p_value);
    out.terms.push_back(std::move(row));
  }
  return out;
}

inline AnovaTable anova_sequential(const RegressionTable& table, const ModelSpec& spec) {
  return anova_sequential(fit_ols(table, spec));
}

inline void write_anova_tsv(const AnovaTable& a, std::ostream& out) {
  char buf[64];
  out << "term\tdf\tss\texplvar\tF\tp\tsign\n";
  for (const AnovaRow& r : a.display_order()) {
    out << r.term << '\t' << r.df;
    std::snprintf(buf, sizeof buf, "\t%.6g\t%.2f\t%.6g\t%.3g\t", r.ss, r.explvar, r.f_stat, r.p_value);
    out << buf << r.stars << '\n';
  }
  std::snprintf(buf, sizeof buf, "\t%.6g\t\t\t\t\n", a.ss_residual);
  out << "Residuals\t" << a.df_residual << buf;
  std::snprintf(buf, sizeof buf, "%.2f", a.explained());
  out << "total explained variance\t\t\t" << buf << "\t\t\t\n";
  std::snprintf(buf, sizeof buf, "%.4f\t%.4f", a.r_squared, a.adj_r_squared);
  out << "R2\tadjR2\n" << buf << '\n';
}

inline nlohmann::ordered_json to_json(const AnovaTable& a) {
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::ordered_json j;
  auto terms = nlohmann::ordered_json::array();
  for (const AnovaRow& r : a.terms) {
    terms.push_back({{"term", r.term},
                     {"df", r.df},
                     {"ss", r.ss},
                     {"explvar", r.explvar},
                     {"f", num(r.f_stat)},
                     {"p", num(r.p_value)},
                     {"sign", r.stars}});
  }
  j["terms"] = std::move(terms);
  j["residual"] = {{"df", a.df_residual}, {"ss", a.ss_residual}};
  j["ss_total"] = a.ss_total;
  j["r_squared"] = a.r_squared;
  j["adj_r_squared"] = num(a.adj_r_squared);
  j["explained_variance"] = a.explained();
  return j;
}

// ---------------------------------------------------------------------------
// Effect tables

// Combined corpus sizes of the training sets, used to order the x axis.
inline std::optional<std::size_t> training_set_size(const std::string& name) {
  static const std::map<std::string, std::size_t> kSizes = {
      {"gold", 10933},  {"+span", 21860}, {"+BT", 46197},       {"+BT-sl", 57585},
      {"+T", 65576},    {"+T+BT", 84438}, {"+T+BT-sl", 95826},
  };
  auto it = kSizes.find(name);
  if (it == kSizes.end()) return std::nullopt;
  return it->second;
}

inline std::vector<std::string> order_by_size(std::vector<std::string> sets) {
  std::stable_sort(sets.begin(), sets.end(), [](const std::string& a, const std::string& b) {
    const auto sa = training_set_size(a);
    const auto sb = training_set_size(b);
    if (sa && sb) return *sa < *sb;
    if (sa != sb) return sa.has_value();
    return a < b;
  });
  return sets;
}

struct EffectCell {
  std::string training_set;
  std::string technique;
  double predicted_f1 = 0.0;
};

// Predicted F1 per (training set, technique), averaged with equal weights
// over the test-language levels. Requires the trainingSet:label interaction.
inline std::vector<EffectCell> effects(const OlsFit& fit) {
  const bool has_interaction = std::any_of(fit.spec.terms.begin(), fit.spec.terms.end(), [](const Term& t) {
    return t.size() == 2 && std::find(t.begin(), t.end(), Factor::TrainingSet) != t.end() &&
           std::find(t.begin(), t.end(), Factor::Label) != t.end();
  });
  if (!has_interaction) throw ValidationError("effects need the trainingSet:label interaction term");

  std::vector<std::string> techniques = fit.levels.at(Factor::Label);
  std::stable_sort(techniques.begin(), techniques.end(), [](const std::string& a, const std::string& b) {
    const auto ta = try_parse_technique(a);
    const auto tb = try_parse_technique(b);
    if (ta && tb) return index_of(*ta) < index_of(*tb);
    if (ta.has_value() != tb.has_value()) return ta.has_value();
    return a < b;
  });
  const auto& langs = fit.levels.at(Factor::TestLang);
  std::vector<EffectCell> out;
  for (const std::string& ts : order_by_size(fit.levels.at(Factor::TrainingSet))) {
    for (const std::string& tech : techniques) {
      double sum = 0.0;
      for (const std::string& lang : langs) {
        sum += predict(fit, {{Factor::TrainingSet, ts}, {Factor::Label, tech}, {Factor::TestLang, lang}});
      }
      out.push_back({ts, tech, sum / static_cast<double>(langs.size())});
    }
  }
  return out;
}

inline void write_effects_csv(const std::vector<EffectCell>& cells, std::ostream& out) {
  char buf[32];
  out << "training_set,technique,predicted_f1\n";
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%.6f", c.predicted_f1);
    out << c.training_set << ',' << c.technique << ',' << buf << '\n';
  }
}

// ---------------------------------------------------------------------------
// Human evaluation ratings

struct RatingRecord {
  CoverageKind evaluation = CoverageKind::Translation;
  Language target_language = Language::en;
  Language source_language = Language::en;  // source (T) or pivot (BT)
  int fluency = 0;
  std::optional<int> fidelity;              // BT only
  std::optional<int> surface_variability;   // BT only
  std::optional<bool> human_produced;       // T only
  bool label_ok = false;
  Technique technique = Technique::LoadedLanguage;

  void validate() const {
    auto in_scale = [](int v) { return v >= 1 && v <= 5; };
    if (!in_scale(fluency)) throw ValidationError("fluency must be 1-5");
    if (evaluation == CoverageKind::BackTranslation) {
      if (!fidelity || !surface_variability || human_produced) {
        throw ValidationError("back-translation ratings need fidelity and surface_variability only");
      }
      if (!in_scale(*fidelity) || !in_scale(*surface_variability)) throw ValidationError("ratings must be 1-5");
    } else {
      if (fidelity || surface_variability || !human_produced) {
        throw ValidationError("translation ratings need human_produced only");
      }
    }
  }
};

struct RatingCell {
  CoverageKind evaluation = CoverageKind::Translation;
  Language target = Language::en;
  std::optional<Language> source;      // nullopt: averaged over sources
  std::optional<Technique> technique;  // nullopt: all techniques
  std::size_t n = 0;
  double fluency = 0.0;
  std::optional<double> fidelity;
  std::optional<double> surface_variability;
  std::optional<double> human_produced_pct;
  double label_ok_pct = 0.0;
};

inline std::vector<RatingCell> aggregate_ratings(const std::vector<RatingRecord>& records) {
  if (records.empty()) throw ValidationError("no rating records");
  struct Acc {
    std::size_t n = 0, fid_n = 0, var_n = 0, hum_n = 0, hum_yes = 0, ok = 0;
    double flu = 0, fid = 0, var = 0;
  };
  using Key = std::tuple<CoverageKind, Language, int, int>;  // -1 = aggregated
  std::map<Key, Acc> acc;
  for (const RatingRecord& r : records) {
    r.validate();
    for (int src : {-1, static_cast<int>(r.source_language)}) {
      for (int tech : {-1, static_cast<int>(r.technique)}) {
        Acc& a = acc[{r.evaluation, r.target_language, src, tech}];
        ++a.n;
        a.flu += r.fluency;
        if (r.fidelity) {
          a.fid += *r.fidelity;
          ++a.fid_n;
        }
        if (r.surface_variability) {
          a.var += *r.surface_variability;
          ++a.var_n;
        }
        if (r.human_produced) {
          ++a.hum_n;
          a.hum_yes += *r.human_produced ? 1 : 0;
        }
        a.ok += r.label_ok ? 1 : 0;
      }
    }
  }
  std::vector<RatingCell> out;
  for (const auto& [key, a] : acc) {
    const auto& [kind, target, src, tech] = key;
    RatingCell c;
    c.evaluation = kind;
    c.target = target;
    if (src >= 0) c.source = static_cast<Language>(src);
    if (tech >= 0) c.technique = static_cast<Technique>(tech);
    const auto n = static_cast<double>(a.n);
    c.n = a.n;
    c.fluency = a.flu / n;
    if (a.fid_n) c.fidelity = a.fid / static_cast<double>(a.fid_n);
    if (a.var_n) c.surface_variability = a.var / static_cast<double>(a.var_n);
    if (a.hum_n) c.human_produced_pct = 100.0 * static_cast<double>(a.hum_yes) / static_cast<double>(a.hum_n);
    c.label_ok_pct = 100.0 * static_cast<double>(a.ok) / n;
    out.push_back(c);
  }
  return out;
}

namespace detail {

inline std::string opt_num(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace detail

inline void write_ratings_csv(const std::vector<RatingCell>& cells, std::ostream& out) {
  out << "evaluation,target_language,source_language,technique,n,fluency,fidelity,surface_variability,"
         "human_produced_pct,label_ok_pct\n";
  for (const auto& c : cells) {
    out << (c.evaluation == CoverageKind::Translation ? "translation" : "back_translation") << ','
        << to_string(c.target) << ',' << (c.source ? std::string(to_string(*c.source)) : "Avg") << ','
        << (c.technique ? std::string(canonical_name(*c.technique)) : "*") << ',' << c.n << ','
        << detail::opt_num(c.fluency) << ',' << detail::opt_num(c.fidelity) << ','
        << detail::opt_num(c.surface_variability) << ',' << detail::opt_num(c.human_produced_pct) << ','
        << detail::opt_num(c.label_ok_pct) << '\n';
  }
}

// Header-defined columns: evaluation (translation|back_translation),
// target_language, source_language, technique, fluency, fidelity,
// surface_variability, human_produced, label_ok. Empty cells are absent.
inline std::vector<RatingRecord> read_ratings_csv(std::istream& in, const std::string& source = "<stream>") {
  using Tok = boost::tokenizer<boost::escaped_list_separator<char>>;
  auto fields_of = [](const std::string& line) {
    std::vector<std::string> f;
    Tok tok(line);
    for (const auto& s : tok) f.push_back(boost::algorithm::trim_copy(s));
    return f;
  };
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::map<std::string, std::size_t> col;
  {
    const auto header = fields_of(line);
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  }
  for (const char* need : {"evaluation", "target_language", "source_language", "technique", "fluency", "label_ok"}) {
    if (!col.count(need)) throw ParseError(source, lineno, std::string("missing column ") + need);
  }
  auto parse_flag = [&](const std::string& s) {
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw ParseError(source, lineno, "bad boolean '" + s + "'");
  };
  auto parse_int = [&](const std::string& s) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::logic_error&) {
      throw ParseError(source, lineno, "bad integer '" + s + "'");
    }
  };
  std::vector<RatingRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    try {
      f = fields_of(line);
    } catch (const boost::escaped_list_error& e) {
      throw ParseError(source, lineno, e.what());
    }
    auto get = [&](const std::string& name) -> std::string {
      auto it = col.find(name);
      if (it == col.end() || it->second >= f.size()) return {};
      return f[it->second];
    };
    RatingRecord r;
    const std::string kind = get("evaluation");
    if (kind == "translation" || kind == "T") {
      r.evaluation = CoverageKind::Translation;
    } else if (kind == "back_translation" || kind == "back-translation" || kind == "BT") {
      r.evaluation = CoverageKind::BackTranslation;
    } else {
      throw ParseError(source, lineno, "unknown evaluation kind '" + kind + "'");
    }
    r.target_language = parse_language(get("target_language"));
    r.source_language = parse_language(get("source_language"));
    r.technique = parse_technique(get("technique"));
    r.fluency = parse_int(get("fluency"));
    if (auto s = get("fidelity"); !s.empty()) r.fidelity = parse_int(s);
    if (auto s = get("surface_variability"); !s.empty()) r.surface_variability = parse_int(s);
    if (auto s = get("human_produced"); !s.empty()) r.human_produced = parse_flag(s);
    r.label_ok = parse_flag(get("label_ok"));
    try {
      r.validate();
    } catch (const ValidationError& e) {
      throw ParseError(source, lineno, e.what());
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace persuade
