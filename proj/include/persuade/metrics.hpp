#pragma once

// Multi-label F1 (the task's official metric) and corpus-level BLEU.

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "persuade/augment.hpp"
#include "persuade/corpus.hpp"
#include "persuade/error.hpp"
#include "persuade/taxonomy.hpp"
#include "persuade/text.hpp"

namespace persuade {

// Missing key means an empty prediction.
using PredictionSet = std::map<ParagraphId, LabelSet>;

inline PredictionSet predictions_from(const std::vector<LabeledId>& rows) {
  PredictionSet out;
  for (const LabeledId& r : rows) out[r.id] = r.labels;
  return out;
}

inline std::vector<LabeledId> prediction_rows(const PredictionSet& pred) {
  std::vector<LabeledId> rows;
  rows.reserve(pred.size());
  for (const auto& [id, labels] : pred) rows.push_back({id, labels});
  return rows;
}

struct LabelScore {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold occurrences
  bool in_macro = false;      // false only when gold and predicted counts are both zero
};

struct EvalReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::array<LabelScore, kTechniqueCount> per_label{};
  // Optional run tags consumed by the regression analysis.
  std::string training_set;
  std::string language;
};

namespace detail {

inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

// Micro F1 pools TP/FP/FN over all (paragraph, technique) decisions and is 0
// when there is nothing to count. Macro F1 averages per-label F1 over the 23
// techniques, skipping labels absent from both gold and prediction.
inline EvalReport f1_multilabel(const Corpus& gold, const PredictionSet& pred) {
  for (const auto& [id, _] : pred) {
    if (!gold.contains(id)) throw ValidationError("prediction for unknown paragraph " + id.str());
  }
  EvalReport r;
  static const LabelSet kEmpty;
  for (const Paragraph& p : gold) {
    auto it = pred.find(p.id);
    const LabelSet& guess = it == pred.end() ? kEmpty : it->second;
    for (Technique t : all_techniques()) {
      const bool g = p.labels.contains(t);
      const bool q = guess.contains(t);
      LabelScore& s = r.per_label[index_of(t)];
      if (g && q) ++s.tp;
      if (!g && q) ++s.fp;
      if (g && !q) ++s.fn;
    }
  }
  double macro_sum = 0.0;
  std::size_t macro_n = 0;
  for (LabelScore& s : r.per_label) {
    s.support = s.tp + s.fn;
    s.precision = detail::ratio(s.tp, s.tp + s.fp);
    s.recall = detail::ratio(s.tp, s.tp + s.fn);
    s.f1 = detail::ratio(2 * s.tp, 2 * s.tp + s.fp + s.fn);
    s.in_macro = (s.tp + s.fp + s.fn) > 0;
    if (s.in_macro) {
      macro_sum += s.f1;
      ++macro_n;
    }
    r.tp += s.tp;
    r.fp += s.fp;
    r.fn += s.fn;
  }
  r.micro_f1 = detail::ratio(2 * r.tp, 2 * r.tp + r.fp + r.fn);
  r.macro_f1 = macro_n == 0 ? 0.0 : macro_sum / static_cast<double>(macro_n);
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  if (!r.training_set.empty()) j["training_set"] = r.training_set;
  if (!r.language.empty()) j["language"] = r.language;
  j["micro_f1"] = r.micro_f1;
  j["macro_f1"] = r.macro_f1;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  nlohmann::ordered_json labels;
  for (Technique t : all_techniques()) {
    const LabelScore& s = r.per_label[index_of(t)];
    labels[std::string(canonical_name(t))] = {
        {"tp", s.tp},         {"fp", s.fp}, {"fn", s.fn},           {"precision", s.precision},
        {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}, {"in_macro", s.in_macro}};
  }
  j["per_label"] = std::move(labels);
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.training_set = j.value("training_set", "");
  r.language = j.value("language", "");
  r.micro_f1 = j.at("micro_f1").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.tp = j.value("tp", std::size_t{0});
  r.fp = j.value("fp", std::size_t{0});
  r.fn = j.value("fn", std::size_t{0});
  for (const auto& [name, s] : j.at("per_label").items()) {
    LabelScore& ls = r.per_label[index_of(parse_technique(name))];
    ls.tp = s.value("tp", std::size_t{0});
    ls.fp = s.value("fp", std::size_t{0});
    ls.fn = s.value("fn", std::size_t{0});
    ls.precision = s.value("precision", 0.0);
    ls.recall = s.value("recall", 0.0);
    ls.f1 = s.at("f1").get<double>();
    ls.support = s.value("support", std::size_t{0});
    ls.in_macro = s.value("in_macro", true);
  }
  return r;
}

inline void write_per_label_tsv(const EvalReport& r, std::ostream& out) {
  out << "technique\tprecision\trecall\tf1\tsupport\n";
  for (Technique t : all_techniques()) {
    const LabelScore& s = r.per_label[index_of(t)];
    out << canonical_name(t) << '\t' << s.precision << '\t' << s.recall << '\t' << s.f1 << '\t'
        << s.support << '\n';
  }
}

// ---------------------------------------------------------------------------
// BLEU

struct BleuScore {
  // Cumulative BLEU-n for n = 1..max_n on a 0..100 scale.
  std::vector<double> bleu;
  // zero_precision[k] set when the pooled (k+1)-gram precision is zero.
  std::vector<bool> zero_precision;
  std::vector<std::size_t> matches;
  std::vector<std::size_t> totals;
  std::size_t reference_length = 0;
  std::size_t hypothesis_length = 0;
  double brevity_penalty = 1.0;
};

struct BleuPair {
  std::string reference;
  std::string hypothesis;
};

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngrams(const std::vector<std::string>& toks, std::size_t n) {
  NgramCounts out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                   toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace detail

// Corpus BLEU, single reference, clipped counts pooled across pairs, uniform
// weights, no smoothing. BP = min(1, exp(1 - r/c)).
inline BleuScore bleu_corpus(std::span<const BleuPair> pairs, std::size_t max_n = 4) {
  if (pairs.empty()) throw ValidationError("BLEU needs at least one hypothesis");
  if (max_n == 0) throw ValidationError("BLEU max_n must be positive");
  BleuScore s;
  s.matches.assign(max_n, 0);
  s.totals.assign(max_n, 0);
  for (const BleuPair& pair : pairs) {
    const auto ref = text::bleu_tokenize(pair.reference);
    const auto hyp = text::bleu_tokenize(pair.hypothesis);
    s.reference_length += ref.size();
    s.hypothesis_length += hyp.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto h = detail::ngrams(hyp, n);
      const auto r = detail::ngrams(ref, n);
      for (const auto& [gram, count] : h) {
        auto it = r.find(gram);
        if (it != r.end()) s.matches[n - 1] += std::min(count, it->second);
        s.totals[n - 1] += count;
      }
    }
  }
  if (s.hypothesis_length == 0) {
    s.brevity_penalty = 0.0;
  } else if (s.hypothesis_length < s.reference_length) {
    s.brevity_penalty = std::exp(1.0 - static_cast<double>(s.reference_length) /
                                           static_cast<double>(s.hypothesis_length));
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (s.matches[n - 1] == 0) zero = true;
    s.zero_precision.push_back(zero);
    if (zero) {
      s.bleu.push_back(0.0);
      continue;
    }
    log_sum += std::log(static_cast<double>(s.matches[n - 1]) / static_cast<double>(s.totals[n - 1]));
    s.bleu.push_back(100.0 * s.brevity_penalty * std::exp(log_sum / static_cast<double>(n)));
  }
  return s;
}

struct PairBleu {
  Language source;
  Language pivot;
  std::size_t pairs = 0;
  BleuScore score;

  std::string name() const {
    const std::string s(to_string(source));
    return s + "2" + std::string(to_string(pivot)) + "2" + s;
  }
};

struct BleuReport {
  std::vector<PairBleu> groups;                 // ordered by (source, pivot)
  std::map<Language, double> language_average;  // unweighted mean BLEU-4 over pivots
};

// Pairs every back-translated paraphrase with its original through the
// ledger, scores each (source, pivot) group, then averages per language.
inline BleuReport bleu_by_pair(const AugmentationLedger& ledger, const Corpus& originals,
                               const Corpus& paraphrases, std::size_t max_n = 4) {
  std::map<ParagraphId, const LedgerRecord*> by_output;
  for (const LedgerRecord& r : ledger.records) by_output.emplace(r.output, &r);

  std::map<std::pair<Language, Language>, std::vector<BleuPair>> groups;
  for (const Paragraph& p : paraphrases) {
    if (p.provenance.kind != ProvenanceKind::BackTranslated) continue;
    auto it = by_output.find(p.id);
    if (it == by_output.end()) throw ValidationError("orphan paraphrase " + p.id.str() + " has no ledger record");
    const LedgerRecord& rec = *it->second;
    const Paragraph* orig = originals.find(rec.origin);
    if (!orig) throw ValidationError("ledger origin " + rec.origin.str() + " missing from originals");
    groups[{rec.path.at(0), rec.path.at(1)}].push_back({orig->text, p.text});
  }

  BleuReport report;
  std::map<Language, std::pair<double, std::size_t>> sums;
  for (const auto& [key, pairs] : groups) {
    PairBleu g{key.first, key.second, pairs.size(), bleu_corpus(pairs, max_n)};
    auto& acc = sums[key.first];
    acc.first += g.score.bleu.back();
    acc.second += 1;
    report.groups.push_back(std::move(g));
  }
  for (const auto& [lang, acc] : sums) {
    report.language_average[lang] = acc.first / static_cast<double>(acc.second);
  }
  return report;
}

inline void write_bleu_tsv(const BleuReport& report, std::ostream& out) {
  out << "pair";
  const std::size_t n = report.groups.empty() ? 4 : report.groups.front().score.bleu.size();
  for (std::size_t k = 1; k <= n; ++k) out << "\tBLEU-" << k;
  out << '\n';
  char buf[32];
  for (const PairBleu& g : report.groups) {
    out << g.name();
    for (double b : g.score.bleu) {
      std::snprintf(buf, sizeof buf, "%.2f", b);
      out << '\t' << buf;
    }
    out << '\n';
  }
  out << '\n' << "language\tavg_BLEU-" << n << '\n';
  for (const auto& [lang, avg] : report.language_average) {
    std::snprintf(buf, sizeof buf, "%.2f", avg);
    out << to_string(lang) << '\t' << buf << '\n';
  }
}

}  // namespace persuade
