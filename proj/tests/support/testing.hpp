#pragma once

// Shared fixtures and independent oracles for the test suite and the
// acceptance binary. Oracles here deliberately avoid the library's own
// helpers (string keys, std::set arithmetic) so that agreement means
// something.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "persuade/persuade.hpp"

#ifndef PERSUADE_FIXTURE_DIR
#define PERSUADE_FIXTURE_DIR "tests/fixtures"
#endif

namespace persuade::testkit {

inline std::string fixture(const std::string& name) { return std::string(PERSUADE_FIXTURE_DIR) + "/" + name; }

inline Paragraph make_paragraph(const std::string& article, std::uint32_t index, Language lang, std::string text,
                                LabelSet labels = {}, std::vector<Span> spans = {}) {
  Paragraph p;
  p.id = {article, index};
  p.language = lang;
  p.text = std::move(text);
  p.labels = labels;
  p.spans = std::move(spans);
  return p;
}

// Five gold paragraphs per training language. The first two of each carry a
// span, so +span adds exactly two instances per language.
inline CorpusMap recipe_fixture(std::size_t per_language = 5, std::size_t spanned = 2) {
  CorpusMap gold;
  for (Language lang : kTrainingLanguages) {
    Corpus c;
    for (std::uint32_t i = 1; i <= per_language; ++i) {
      const std::string article = std::string(to_string(lang)) + "art";
      std::string text = "paragraph " + std::to_string(i) + " in " + std::string(to_string(lang)) + " text";
      std::vector<Span> spans;
      LabelSet labels;
      if (i <= spanned) {
        spans.push_back({0, 9, Technique::LoadedLanguage});
        labels.insert(Technique::LoadedLanguage);
      } else if (i % 2 == 1) {
        labels.insert(Technique::Doubt);
      }
      c.add(make_paragraph(article, i, lang, text, labels, spans));
    }
    gold[lang] = std::move(c);
  }
  return gold;
}

inline Corpus merge(const CorpusMap& m) {
  Corpus all;
  for (const auto& [_, c] : m) all.append(c);
  return all;
}

// Coverage transcription: cell[target][source] = {translation, back-translation}.
struct CoverageTranscription {
  std::vector<std::string> sources;
  std::map<std::pair<std::string, std::string>, std::pair<bool, bool>> cells;  // (source, target)
  std::set<std::pair<std::string, std::string>> diagonal;
};

inline CoverageTranscription load_coverage_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing fixture " + path);
  CoverageTranscription out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string x;
    while (std::getline(ss, x, '\t')) f.push_back(x);
    if (header) {
      out.sources.assign(f.begin() + 1, f.end());
      header = false;
      continue;
    }
    const std::string& target = f.at(0);
    for (std::size_t i = 1; i < f.size(); ++i) {
      const std::string& source = out.sources.at(i - 1);
      if (f[i] == "-") {
        out.diagonal.insert({source, target});
      } else {
        out.cells[{source, target}] = {f[i].at(0) == '1', f[i].at(1) == '1'};
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// F1 oracle: explicit contingency tables keyed by label name.

struct OracleF1 {
  double micro = 0.0;
  double macro = 0.0;
  std::map<std::string, double> per_label;
};

inline OracleF1 oracle_f1(const std::vector<std::set<std::string>>& gold,
                          const std::vector<std::set<std::string>>& pred,
                          const std::vector<std::string>& label_names) {
  std::map<std::string, std::tuple<long, long, long>> table;
  for (const auto& name : label_names) table[name] = {0, 0, 0};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& name : label_names) {
      const bool g = gold[i].count(name) > 0;
      const bool p = pred[i].count(name) > 0;
      auto& [tp, fp, fn] = table[name];
      tp += (g && p);
      fp += (!g && p);
      fn += (g && !p);
    }
  }
  OracleF1 out;
  long TP = 0, FP = 0, FN = 0;
  double sum = 0;
  int n = 0;
  // Summation follows the caller's label order, so macro values are
  // reproducible bit for bit.
  for (const auto& name : label_names) {
    const auto [tp, fp, fn] = table.at(name);
    TP += tp;
    FP += fp;
    FN += fn;
    const long den = 2 * tp + fp + fn;
    const double f = den == 0 ? 0.0 : 2.0 * tp / den;
    out.per_label[name] = f;
    if (den > 0) {
      sum += f;
      ++n;
    }
  }
  const long den = 2 * TP + FP + FN;
  out.micro = den == 0 ? 0.0 : 2.0 * TP / den;
  out.macro = n == 0 ? 0.0 : sum / n;
  return out;
}

// Random multi-label fixture: gold corpus plus predictions.
struct LabelFixture {
  Corpus gold;
  PredictionSet pred;
  std::vector<std::set<std::string>> gold_names;
  std::vector<std::set<std::string>> pred_names;
};

inline LabelFixture random_label_fixture(std::mt19937_64& rng, std::size_t max_paragraphs = 50) {
  std::uniform_int_distribution<std::size_t> np(1, max_paragraphs);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t n = np(rng);
  const double density = 0.02 + 0.3 * u(rng);
  LabelFixture f;
  for (std::size_t i = 0; i < n; ++i) {
    LabelSet g, p;
    std::set<std::string> gn, pn;
    for (Technique t : all_techniques()) {
      if (u(rng) < density) {
        g.insert(t);
        gn.insert(std::string(canonical_name(t)));
      }
      if (u(rng) < density) {
        p.insert(t);
        pn.insert(std::string(canonical_name(t)));
      }
    }
    const ParagraphId id{"a" + std::to_string(i / 7), static_cast<std::uint32_t>(i % 7 + 1)};
    f.gold.add(make_paragraph(id.article_id, id.paragraph_index, Language::en, "text", g));
    // Omitting empty predictions exercises the missing-means-empty rule.
    if (!p.empty() || u(rng) < 0.5) f.pred[id] = p;
    f.gold_names.push_back(gn);
    f.pred_names.push_back(pn);
  }
  return f;
}

inline std::vector<std::string> technique_names() {
  std::vector<std::string> v;
  for (Technique t : all_techniques()) v.emplace_back(canonical_name(t));
  return v;
}

// Random score matrix over the paragraphs of `gold`, on a coarse grid so that
// ties between thresholds are common.
inline ScoreMatrix random_scores(const Corpus& gold, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 20);
  ScoreMatrix m;
  for (const Paragraph& p : gold.sorted()) {
    m.ids.push_back(p.id);
    std::array<double, kTechniqueCount> row{};
    for (double& v : row) v = d(rng) / 20.0;
    m.rows.push_back(row);
  }
  return m;
}

inline Corpus random_gold(std::mt19937_64& rng, std::size_t n, Language lang = Language::en,
                          const std::string& prefix = "g") {
  std::uniform_real_distribution<double> u(0, 1);
  Corpus c;
  for (std::size_t i = 0; i < n; ++i) {
    LabelSet g;
    for (Technique t : all_techniques()) {
      if (u(rng) < 0.15) g.insert(t);
    }
    c.add(make_paragraph(prefix + std::to_string(i), 1, lang, "text " + std::to_string(i), g));
  }
  return c;
}

// Oracle micro-F1 of a prediction set through the oracle_f1 path.
inline double oracle_micro(const Corpus& gold, const PredictionSet& pred) {
  std::vector<std::set<std::string>> g, p;
  for (const Paragraph& para : gold) {
    std::set<std::string> gs, ps;
    for (Technique t : para.labels.to_vector()) gs.insert(std::string(canonical_name(t)));
    if (auto it = pred.find(para.id); it != pred.end()) {
      for (Technique t : it->second.to_vector()) ps.insert(std::string(canonical_name(t)));
    }
    g.push_back(gs);
    p.push_back(ps);
  }
  return oracle_f1(g, p, technique_names()).micro;
}

// ---------------------------------------------------------------------------
// Regression fixtures

inline const std::vector<std::string> kSets = {"gold", "+T", "+BT", "+BT-sl", "+T+BT", "+T+BT-sl"};
inline const std::vector<std::string> kLangs = {"en", "fr", "it", "ru", "ge", "po"};

inline std::vector<std::string> sorted_copy(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Full 6 x 23 x 6 table with f1 = value(training set, language, technique).
template <class F>
RegressionTable factorial(F value) {
  RegressionTable t;
  for (const auto& ts : kSets) {
    for (const auto& l : kLangs) {
      for (const auto& tech : technique_names()) t.push_back({ts, l, tech, value(ts, l, tech)});
    }
  }
  return t;
}

// Planted coefficients keyed by the column names that treatment coding with
// alphabetical reference levels produces. Built without the library's design
// code: the reference level is index 0 of each sorted level list.
struct Planted {
  std::map<std::string, double> beta;
  RegressionTable table;
};

inline Planted planted_full_model(std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> coef(0.0, 0.1), noise(0.0, sigma);
  const auto sets = sorted_copy(kSets);
  const auto langs = sorted_copy(kLangs);
  const auto techs = sorted_copy(technique_names());
  Planted p;
  p.beta["(Intercept)"] = 0.4;
  for (std::size_t j = 1; j < techs.size(); ++j) p.beta["label[" + techs[j] + "]"] = coef(rng);
  for (std::size_t i = 1; i < sets.size(); ++i) p.beta["trainingSet[" + sets[i] + "]"] = coef(rng);
  for (std::size_t k = 1; k < langs.size(); ++k) p.beta["testLang[" + langs[k] + "]"] = coef(rng);
  for (std::size_t i = 1; i < sets.size(); ++i) {
    for (std::size_t j = 1; j < techs.size(); ++j) {
      p.beta["trainingSet[" + sets[i] + "]:label[" + techs[j] + "]"] = coef(rng);
    }
  }
  for (std::size_t k = 1; k < langs.size(); ++k) {
    for (std::size_t i = 1; i < sets.size(); ++i) {
      p.beta["testLang[" + langs[k] + "]:trainingSet[" + sets[i] + "]"] = coef(rng);
    }
  }
  auto b = [&](const std::string& key) {
    auto it = p.beta.find(key);
    return it == p.beta.end() ? 0.0 : it->second;
  };
  p.table = factorial([&](const std::string& ts, const std::string& l, const std::string& tech) {
    return b("(Intercept)") + b("label[" + tech + "]") + b("trainingSet[" + ts + "]") + b("testLang[" + l + "]") +
           b("trainingSet[" + ts + "]:label[" + tech + "]") + b("testLang[" + l + "]:trainingSet[" + ts + "]") +
           noise(rng);
  });
  return p;
}

}  // namespace persuade::testkit
