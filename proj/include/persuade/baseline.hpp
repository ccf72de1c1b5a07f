#pragma once

// Hashed character n-gram one-vs-rest logistic classifier, plus the score
// matrix interchange format through which any predictor's outputs enter.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "persuade/corpus.hpp"
#include "persuade/error.hpp"
#include "persuade/metrics.hpp"
#include "persuade/taxonomy.hpp"
#include "persuade/text.hpp"

namespace persuade {

struct FeatureConfig {
  std::size_t ngram_min = 3;
  std::size_t ngram_max = 5;
  std::size_t hash_dim = std::size_t{1} << 18;
  bool l2_normalize = true;

  void validate() const {
    if (ngram_min == 0 || ngram_min > ngram_max) throw ValidationError("bad n-gram range");
    if (hash_dim == 0 || (hash_dim & (hash_dim - 1)) != 0) {
      throw ValidationError("hash_dim must be a power of two");
    }
  }
};

// Sorted by index, no duplicate indices.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

namespace detail {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Final avalanche so the sign bit is independent of the bucket bits.
inline std::uint64_t mix64(std::uint64_t h) {
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

}  // namespace detail

inline SparseVector featurize(std::string_view text_utf8, const FeatureConfig& cfg = {}) {
  if (text_utf8.empty()) throw ValidationError("cannot featurize empty text");
  const std::u32string cps = text::to_codepoints(text::lower_nfc(text_utf8));
  std::map<std::uint32_t, double> acc;
  for (std::size_t n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    if (cps.size() < n) break;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      const std::string gram = text::from_codepoints(std::u32string_view(cps).substr(i, n));
      const std::uint64_t h = detail::mix64(detail::fnv1a64(gram));
      const auto bucket = static_cast<std::uint32_t>(h & (cfg.hash_dim - 1));
      acc[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  SparseVector out;
  double norm2 = 0.0;
  for (const auto& [idx, v] : acc) {
    if (v == 0.0) continue;
    out.emplace_back(idx, v);
    norm2 += v * v;
  }
  if (cfg.l2_normalize && norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& e : out) e.second *= inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic heads

struct LogisticHead {
  std::vector<double> weights;
  double bias = 0.0;

  double logit(const SparseVector& x) const {
    double z = bias;
    for (const auto& [i, v] : x) z += weights[i] * v;
    return z;
  }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Mean binary cross-entropy over the examples.
inline double bce_loss(const LogisticHead& head, std::span<const SparseVector> xs, std::span<const double> ys) {
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double z = head.logit(xs[i]);
    total += softplus(z) - ys[i] * z;
  }
  return xs.empty() ? 0.0 : total / static_cast<double>(xs.size());
}

// Analytic gradient of bce_loss: mean of (sigmoid(z) - y) * [x, 1].
inline void bce_gradient(const LogisticHead& head, std::span<const SparseVector> xs,
                         std::span<const double> ys, std::vector<double>& grad_w, double& grad_b) {
  grad_w.assign(head.weights.size(), 0.0);
  grad_b = 0.0;
  if (xs.empty()) return;
  const double scale = 1.0 / static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = (sigmoid(head.logit(xs[i])) - ys[i]) * scale;
    for (const auto& [j, v] : xs[i]) grad_w[j] += r * v;
    grad_b += r;
  }
}

// ---------------------------------------------------------------------------
// Score matrix

struct ScoreMatrix {
  std::vector<ParagraphId> ids;
  std::vector<std::array<double, kTechniqueCount>> rows;

  std::size_t size() const { return ids.size(); }

  std::map<ParagraphId, std::size_t> index() const {
    std::map<ParagraphId, std::size_t> out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], i);
    return out;
  }

  void validate() const {
    if (ids.size() != rows.size()) throw ValidationError("score matrix row count mismatch");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (double v : rows[i]) {
        if (!(v >= 0.0 && v <= 1.0)) {
          throw ValidationError("score for " + ids[i].str() + " outside [0,1]");
        }
      }
    }
  }
};

inline std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_scores(const ScoreMatrix& m, std::ostream& out) {
  out << "article_id\tparagraph_index";
  for (Technique t : all_techniques()) out << '\t' << canonical_name(t);
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.ids[i].article_id << '\t' << m.ids[i].paragraph_index;
    for (double v : m.rows[i]) out << '\t' << format_score(v);
    out << '\n';
  }
}

inline void write_scores(const ScoreMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_scores(m, out);
}

// Header must list the 23 techniques in canonical order. When `corpus` is
// given, every row id must belong to it.
inline ScoreMatrix read_scores(std::istream& in, const std::string& source = "<stream>",
                               const Corpus* corpus = nullptr) {
  constexpr std::size_t kColumns = kTechniqueCount + 2;
  auto split = [](const std::string& line) {
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return f;
  };
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() != kColumns) {
    throw ParseError(source, lineno, "expected " + std::to_string(kColumns) + " columns, got " +
                                         std::to_string(header.size()));
  }
  if (header[0] != "article_id" || header[1] != "paragraph_index") {
    throw ParseError(source, lineno, "header must start with article_id, paragraph_index");
  }
  for (std::size_t k = 0; k < kTechniqueCount; ++k) {
    auto t = try_parse_technique(header[k + 2]);
    if (!t || index_of(*t) != k) {
      throw ParseError(source, lineno, "column " + std::to_string(k + 3) + " should be '" +
                                           std::string(canonical_name(static_cast<Technique>(k))) + "'");
    }
  }
  ScoreMatrix m;
  std::map<ParagraphId, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != kColumns) {
      throw ParseError(source, lineno, "expected " + std::to_string(kColumns) + " columns, got " +
                                           std::to_string(f.size()));
    }
    ParagraphId id;
    id.article_id = f[0];
    try {
      std::size_t pos = 0;
      const long idx = std::stol(f[1], &pos);
      if (pos != f[1].size() || idx < 0) throw std::invalid_argument("index");
      id.paragraph_index = static_cast<std::uint32_t>(idx);
    } catch (const std::logic_error&) {
      throw ParseError(source, lineno, "bad paragraph index '" + f[1] + "'");
    }
    if (corpus && !corpus->contains(id)) throw ParseError(source, lineno, "unknown paragraph id " + id.str());
    if (!seen.emplace(id, m.size()).second) throw ParseError(source, lineno, "duplicate id " + id.str());
    std::array<double, kTechniqueCount> row{};
    for (std::size_t k = 0; k < kTechniqueCount; ++k) {
      const std::string& cell = f[k + 2];
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw ParseError(source, lineno, "not a number: '" + cell + "'");
      }
      if (!(v >= 0.0 && v <= 1.0)) throw ParseError(source, lineno, "value " + cell + " out of [0,1]");
      row[k] = v;
    }
    m.ids.push_back(std::move(id));
    m.rows.push_back(row);
  }
  return m;
}

inline ScoreMatrix read_scores(const std::filesystem::path& path, const Corpus* corpus = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_scores(in, path.string(), corpus);
}

// ---------------------------------------------------------------------------
// Training

enum class SelectionMetric : std::uint8_t { Micro, Macro };

struct TrainConfig {
  FeatureConfig features;
  double learning_rate = 0.1;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 42;
  SelectionMetric selection = SelectionMetric::Micro;
  unsigned jobs = 1;
};

struct TrainMetadata {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_dev_f1 = -1.0;
  std::uint64_t seed = 0;
  SelectionMetric selection = SelectionMetric::Micro;
  std::vector<double> train_loss;  // after each epoch, summed over heads
  std::vector<double> dev_f1;      // after each epoch
  std::vector<Technique> bias_only;  // labels without both classes in train
};

struct OvrModel {
  FeatureConfig features;
  std::array<LogisticHead, kTechniqueCount> heads;
  TrainMetadata metadata;
};

inline std::array<double, kTechniqueCount> score_features(const OvrModel& model, const SparseVector& x) {
  std::array<double, kTechniqueCount> row{};
  for (std::size_t k = 0; k < kTechniqueCount; ++k) row[k] = sigmoid(model.heads[k].logit(x));
  return row;
}

inline ScoreMatrix predict_scores(const OvrModel& model, const Corpus& corpus) {
  ScoreMatrix m;
  m.ids.reserve(corpus.size());
  m.rows.reserve(corpus.size());
  for (const Paragraph& p : corpus) {
    m.ids.push_back(p.id);
    m.rows.push_back(score_features(model, featurize(p.text, model.features)));
  }
  return m;
}

namespace detail {

inline PredictionSet threshold_rows(const std::vector<ParagraphId>& ids,
                                    const std::vector<std::array<double, kTechniqueCount>>& rows,
                                    double theta) {
  PredictionSet out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    LabelSet s;
    for (std::size_t k = 0; k < kTechniqueCount; ++k) {
      if (rows[i][k] >= theta) s.insert(static_cast<Technique>(k));
    }
    out.emplace(ids[i], s);
  }
  return out;
}

// Fisher-Yates with raw engine output so the order does not depend on the
// standard library's distribution implementations.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

template <class F>
void for_each_head(unsigned jobs, F&& fn) {
  if (jobs <= 1) {
    for (std::size_t k = 0; k < kTechniqueCount; ++k) fn(k);
    return;
  }
  std::vector<std::future<void>> tasks;
  for (unsigned w = 0; w < jobs; ++w) {
    tasks.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t k = w; k < kTechniqueCount; k += jobs) fn(k);
    }));
  }
  for (auto& t : tasks) t.get();
}

}  // namespace detail

// Mini-batch gradient descent per label on mean BCE. After each epoch the
// dev F1 at threshold 0.5 is measured and the best epoch's weights kept.
// Labels whose training data has a single class get a bias-only prior.
inline OvrModel train(const Corpus& train_corpus, const Corpus& dev, const TrainConfig& cfg) {
  if (train_corpus.empty()) throw ValidationError("training corpus is empty");
  if (dev.empty()) throw ValidationError("dev corpus is empty");
  if (cfg.batch_size == 0) throw ValidationError("batch size must be positive");
  cfg.features.validate();

  std::vector<SparseVector> xs;
  xs.reserve(train_corpus.size());
  for (const Paragraph& p : train_corpus) xs.push_back(featurize(p.text, cfg.features));
  std::vector<SparseVector> dev_xs;
  std::vector<ParagraphId> dev_ids;
  for (const Paragraph& p : dev) {
    dev_xs.push_back(featurize(p.text, cfg.features));
    dev_ids.push_back(p.id);
  }

  const std::size_t n = xs.size();
  std::array<std::vector<double>, kTechniqueCount> ys;
  std::array<bool, kTechniqueCount> trainable{};
  OvrModel model;
  model.features = cfg.features;
  model.metadata.seed = cfg.seed;
  model.metadata.selection = cfg.selection;
  for (std::size_t k = 0; k < kTechniqueCount; ++k) {
    ys[k].resize(n);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ys[k][i] = train_corpus[i].labels.contains(static_cast<Technique>(k)) ? 1.0 : 0.0;
      pos += static_cast<std::size_t>(ys[k][i]);
    }
    model.heads[k].weights.assign(cfg.features.hash_dim, 0.0);
    trainable[k] = pos > 0 && pos < n;
    if (!trainable[k]) {
      const double prior = (static_cast<double>(pos) + 0.5) / (static_cast<double>(n) + 1.0);
      model.heads[k].bias = std::log(prior / (1.0 - prior));
      model.metadata.bias_only.push_back(static_cast<Technique>(k));
    }
  }

  std::array<LogisticHead, kTechniqueCount> best = model.heads;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::shuffle_indices(order, rng);
    detail::for_each_head(cfg.jobs, [&](std::size_t k) {
      if (!trainable[k]) return;
      LogisticHead& head = model.heads[k];
      std::unordered_map<std::uint32_t, double> grad;
      for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
        const std::size_t hi = std::min(n, lo + cfg.batch_size);
        const double scale = 1.0 / static_cast<double>(hi - lo);
        grad.clear();
        double grad_b = 0.0;
        for (std::size_t b = lo; b < hi; ++b) {
          const std::size_t i = order[b];
          const double r = (sigmoid(head.logit(xs[i])) - ys[k][i]) * scale;
          for (const auto& [j, v] : xs[i]) grad[j] += r * v;
          grad_b += r;
        }
        // Apply in index order so floating-point results do not depend on
        // hash-map iteration order.
        std::vector<std::pair<std::uint32_t, double>> sorted(grad.begin(), grad.end());
        std::sort(sorted.begin(), sorted.end());
        for (const auto& [j, g] : sorted) head.weights[j] -= cfg.learning_rate * g;
        head.bias -= cfg.learning_rate * grad_b;
      }
    });

    double loss = 0.0;
    for (std::size_t k = 0; k < kTechniqueCount; ++k) loss += bce_loss(model.heads[k], xs, ys[k]);
    model.metadata.train_loss.push_back(loss);

    std::vector<std::array<double, kTechniqueCount>> dev_rows;
    dev_rows.reserve(dev_xs.size());
    for (const auto& x : dev_xs) dev_rows.push_back(score_features(model, x));
    const EvalReport rep = f1_multilabel(dev, detail::threshold_rows(dev_ids, dev_rows, 0.5));
    const double f1 = cfg.selection == SelectionMetric::Micro ? rep.micro_f1 : rep.macro_f1;
    model.metadata.dev_f1.push_back(f1);
    model.metadata.epochs_run = epoch;
    if (f1 > model.metadata.best_dev_f1) {
      model.metadata.best_dev_f1 = f1;
      model.metadata.best_epoch = epoch;
      best = model.heads;
    }
  }
  if (cfg.epochs > 0) model.heads = std::move(best);
  return model;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr std::string_view kModelFormat = "persuade-ovr/1";

inline nlohmann::ordered_json to_json(const OvrModel& m) {
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["features"] = {{"ngram_min", m.features.ngram_min},
                   {"ngram_max", m.features.ngram_max},
                   {"hash_dim", m.features.hash_dim},
                   {"l2_normalize", m.features.l2_normalize}};
  auto bias_only = nlohmann::ordered_json::array();
  for (Technique t : m.metadata.bias_only) bias_only.push_back(std::string(canonical_name(t)));
  j["metadata"] = {{"epochs_run", m.metadata.epochs_run},
                   {"best_epoch", m.metadata.best_epoch},
                   {"best_dev_f1", m.metadata.best_dev_f1},
                   {"seed", m.metadata.seed},
                   {"selection", m.metadata.selection == SelectionMetric::Micro ? "micro" : "macro"},
                   {"train_loss", m.metadata.train_loss},
                   {"dev_f1", m.metadata.dev_f1},
                   {"bias_only", bias_only}};
  auto heads = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < kTechniqueCount; ++k) {
    auto weights = nlohmann::ordered_json::array();
    const auto& w = m.heads[k].weights;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] != 0.0) weights.push_back({i, w[i]});
    }
    heads.push_back({{"technique", canonical_name(static_cast<Technique>(k))},
                     {"bias", m.heads[k].bias},
                     {"weights", std::move(weights)}});
  }
  j["heads"] = std::move(heads);
  return j;
}

inline OvrModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kModelFormat) {
    throw ValidationError("unsupported model format '" + j.value("format", "") + "'");
  }
  OvrModel m;
  const auto& f = j.at("features");
  m.features.ngram_min = f.at("ngram_min").get<std::size_t>();
  m.features.ngram_max = f.at("ngram_max").get<std::size_t>();
  m.features.hash_dim = f.at("hash_dim").get<std::size_t>();
  m.features.l2_normalize = f.at("l2_normalize").get<bool>();
  m.features.validate();
  const auto& md = j.at("metadata");
  m.metadata.epochs_run = md.at("epochs_run").get<std::size_t>();
  m.metadata.best_epoch = md.at("best_epoch").get<std::size_t>();
  m.metadata.best_dev_f1 = md.at("best_dev_f1").get<double>();
  m.metadata.seed = md.at("seed").get<std::uint64_t>();
  m.metadata.selection = md.at("selection").get<std::string>() == "macro" ? SelectionMetric::Macro
                                                                           : SelectionMetric::Micro;
  m.metadata.train_loss = md.at("train_loss").get<std::vector<double>>();
  m.metadata.dev_f1 = md.at("dev_f1").get<std::vector<double>>();
  for (const auto& t : md.at("bias_only")) m.metadata.bias_only.push_back(parse_technique(t.get<std::string>()));
  const auto& heads = j.at("heads");
  if (heads.size() != kTechniqueCount) throw ValidationError("model must have 23 heads");
  for (std::size_t k = 0; k < kTechniqueCount; ++k) {
    const auto& h = heads.at(k);
    if (parse_technique(h.at("technique").get<std::string>()) != static_cast<Technique>(k)) {
      throw ValidationError("model heads out of canonical order");
    }
    LogisticHead& head = m.heads[k];
    head.bias = h.at("bias").get<double>();
    head.weights.assign(m.features.hash_dim, 0.0);
    for (const auto& e : h.at("weights")) {
      const auto i = e.at(0).get<std::size_t>();
      if (i >= m.features.hash_dim) throw ValidationError("weight index out of range");
      head.weights[i] = e.at(1).get<double>();
      if (!std::isfinite(head.weights[i])) throw ValidationError("non-finite weight");
    }
  }
  return m;
}

inline void save_model(const OvrModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(m).dump() << '\n';
}

inline OvrModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace persuade
