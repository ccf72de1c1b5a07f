#pragma once

// Threshold moving, language-specific heuristics and vote-sum ensembling.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "persuade/baseline.hpp"
#include "persuade/corpus.hpp"
#include "persuade/error.hpp"
#include "persuade/metrics.hpp"
#include "persuade/taxonomy.hpp"
#include "persuade/text.hpp"

namespace persuade {

// Decision threshold restricted to the grid 0.1, 0.2, ..., 0.9.
class Threshold {
 public:
  constexpr Threshold() = default;
  static constexpr Threshold from_tenths(int tenths) {
    if (tenths < 1 || tenths > 9) throw ValidationError("threshold must be on the 0.1..0.9 grid");
    Threshold t;
    t.tenths_ = tenths;
    return t;
  }
  static Threshold parse(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ValidationError("bad threshold '" + s + "'");
    const double scaled = v * 10.0;
    const int tenths = static_cast<int>(std::lround(scaled));
    if (std::abs(scaled - tenths) > 1e-9) throw ValidationError("threshold " + s + " is off the 0.1 grid");
    return from_tenths(tenths);
  }

  constexpr int tenths() const { return tenths_; }
  double value() const { return tenths_ / 10.0; }
  std::string str() const { return "0." + std::to_string(tenths_); }

  friend constexpr auto operator<=>(const Threshold&, const Threshold&) = default;

 private:
  int tenths_ = 5;
};

inline std::array<Threshold, 9> threshold_grid() {
  std::array<Threshold, 9> g;
  for (int i = 0; i < 9; ++i) g[static_cast<std::size_t>(i)] = Threshold::from_tenths(i + 1);
  return g;
}

// Technique predicted iff score >= threshold.
inline PredictionSet apply_threshold(const ScoreMatrix& scores, Threshold theta) {
  return detail::threshold_rows(scores.ids, scores.rows, theta.value());
}

namespace detail {

// Rows of `scores` for exactly the paragraphs of `gold`, in gold order.
inline ScoreMatrix restrict_to(const ScoreMatrix& scores, const Corpus& gold) {
  const auto idx = scores.index();
  ScoreMatrix out;
  for (const Paragraph& p : gold) {
    auto it = idx.find(p.id);
    if (it == idx.end()) throw ValidationError("scores lack paragraph " + p.id.str());
    out.ids.push_back(p.id);
    out.rows.push_back(scores.rows[it->second]);
  }
  return out;
}

}  // namespace detail

struct ThresholdChoice {
  Threshold threshold;
  double f1 = 0.0;
  std::array<double, 9> f1_by_grid{};
};

// Grid search maximizing dev micro-F1; ties go to the smallest threshold.
inline ThresholdChoice tune_threshold(const ScoreMatrix& scores, const Corpus& dev_gold) {
  const ScoreMatrix dev = detail::restrict_to(scores, dev_gold);
  ThresholdChoice best;
  best.f1 = -1.0;
  const auto grid = threshold_grid();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double f1 = f1_multilabel(dev_gold, apply_threshold(dev, grid[i])).micro_f1;
    best.f1_by_grid[i] = f1;
    if (f1 > best.f1) {
      best.f1 = f1;
      best.threshold = grid[i];
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Heuristics

enum class HeuristicAction : std::uint8_t { Assert, Suppress };

struct HeuristicRule {
  std::string name;
  Technique technique = Technique::Doubt;
  Language language = Language::en;
  bool question_mark = false;
  std::vector<std::string> question_words;
  HeuristicAction action = HeuristicAction::Assert;
  // Empty: applied to the final ensemble output. Otherwise only to that
  // member's votes.
  std::string member;

  void validate() const {
    if (!question_mark && question_words.empty()) {
      throw ValidationError("heuristic '" + name + "' has no trigger");
    }
  }
};

inline std::vector<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open word list " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const auto stop = line.find_last_not_of(" \t");
    words.push_back(line.substr(start, stop - start + 1));
  }
  return words;
}

inline bool triggers(const HeuristicRule& rule, const Paragraph& p) {
  if (rule.question_mark) {
    if (p.text.find('?') != std::string::npos) return true;
    if (p.text.find("\xEF\xBC\x9F") != std::string::npos) return true;  // U+FF1F
    // Greek marks questions with U+037E, which NFC folds to ';'.
    if (p.language == Language::el && text::nfc(p.text).find(';') != std::string::npos) return true;
  }
  if (rule.question_words.empty()) return false;
  const auto tokens = text::word_tokens(p.text);
  for (const std::string& entry : rule.question_words) {
    const auto needle = text::word_tokens(entry);
    if (needle.empty()) continue;
    if (std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end()) != tokens.end()) {
      return true;
    }
  }
  return false;
}

inline void apply_rule_to(LabelSet& labels, const HeuristicRule& rule, const Paragraph& p) {
  if (p.language != rule.language || !triggers(rule, p)) return;
  if (rule.action == HeuristicAction::Assert) {
    labels.insert(rule.technique);
  } else {
    labels.erase(rule.technique);
  }
}

// Rules fire only on paragraphs of their language. Paragraphs missing from
// `pred` start from an empty prediction.
inline PredictionSet apply_heuristics(const PredictionSet& pred, const Corpus& corpus,
                                      const std::vector<HeuristicRule>& rules) {
  PredictionSet out = pred;
  for (const HeuristicRule& r : rules) r.validate();
  for (const Paragraph& p : corpus) {
    LabelSet labels;
    if (auto it = pred.find(p.id); it != pred.end()) labels = it->second;
    const LabelSet before = labels;
    for (const HeuristicRule& r : rules) apply_rule_to(labels, r, p);
    if (labels != before || out.count(p.id)) out[p.id] = labels;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble

struct EnsembleMember {
  std::string id;
  std::filesystem::path scores;  // score TSV; may be empty when matrices are passed directly
};

struct EnsembleConfig {
  std::vector<EnsembleMember> members;
  std::map<std::pair<std::string, Language>, Threshold> thresholds;
  Threshold default_threshold = Threshold::from_tenths(5);
  std::vector<HeuristicRule> heuristics;
  int voting_threshold = 1;

  Threshold threshold_for(const std::string& member, Language lang) const {
    auto it = thresholds.find({member, lang});
    return it == thresholds.end() ? default_threshold : it->second;
  }

  std::vector<std::string> member_ids() const {
    std::vector<std::string> ids;
    for (const auto& m : members) ids.push_back(m.id);
    return ids;
  }

  void validate() const {
    if (members.empty()) throw ValidationError("ensemble needs at least one member");
    std::vector<std::string> ids = member_ids();
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw ValidationError("duplicate ensemble member id");
    }
    if (voting_threshold < 1 || voting_threshold > static_cast<int>(members.size())) {
      throw ValidationError("voting threshold must lie in [1, " + std::to_string(members.size()) + "]");
    }
    for (const auto& h : heuristics) {
      h.validate();
      if (!h.member.empty() && !std::binary_search(ids.begin(), ids.end(), h.member)) {
        throw ValidationError("heuristic '" + h.name + "' names unknown member '" + h.member + "'");
      }
    }
  }
};

// Per (paragraph, technique) vote counts across members.
using VoteTable = std::map<ParagraphId, std::array<int, kTechniqueCount>>;

inline VoteTable count_votes(const EnsembleConfig& config, const std::vector<ScoreMatrix>& member_scores,
                             const Corpus& corpus) {
  if (member_scores.size() != config.members.size()) {
    throw ValidationError("got " + std::to_string(member_scores.size()) + " score matrices for " +
                          std::to_string(config.members.size()) + " members");
  }
  VoteTable votes;
  for (const Paragraph& p : corpus) votes[p.id].fill(0);
  for (std::size_t m = 0; m < config.members.size(); ++m) {
    const std::string& id = config.members[m].id;
    std::vector<HeuristicRule> own;
    for (const auto& h : config.heuristics) {
      if (h.member == id) own.push_back(h);
    }
    const auto idx = member_scores[m].index();
    for (const Paragraph& p : corpus) {
      auto it = idx.find(p.id);
      if (it == idx.end()) throw ValidationError("member '" + id + "' has no scores for " + p.id.str());
      const auto& row = member_scores[m].rows[it->second];
      const double theta = config.threshold_for(id, p.language).value();
      LabelSet labels;
      for (std::size_t k = 0; k < kTechniqueCount; ++k) {
        if (row[k] >= theta) labels.insert(static_cast<Technique>(k));
      }
      for (const auto& h : own) apply_rule_to(labels, h, p);
      auto& v = votes[p.id];
      for (Technique t : labels.to_vector()) ++v[index_of(t)];
    }
  }
  return votes;
}

inline PredictionSet decide(const VoteTable& votes, int voting_threshold) {
  PredictionSet out;
  for (const auto& [id, v] : votes) {
    LabelSet labels;
    for (std::size_t k = 0; k < kTechniqueCount; ++k) {
      if (v[k] >= voting_threshold) labels.insert(static_cast<Technique>(k));
    }
    out.emplace(id, labels);
  }
  return out;
}

inline std::vector<HeuristicRule> global_rules(const EnsembleConfig& config) {
  std::vector<HeuristicRule> out;
  for (const auto& h : config.heuristics) {
    if (h.member.empty()) out.push_back(h);
  }
  return out;
}

// A technique is assigned when at least `voting_threshold` members vote for it.
inline PredictionSet ensemble_predict(const EnsembleConfig& config, const std::vector<ScoreMatrix>& member_scores,
                                      const Corpus& corpus) {
  config.validate();
  const PredictionSet voted = decide(count_votes(config, member_scores, corpus), config.voting_threshold);
  const auto rules = global_rules(config);
  return rules.empty() ? voted : apply_heuristics(voted, corpus, rules);
}

// Fills thresholds for every (member, language) present in `dev_gold`.
inline EnsembleConfig tune_member_thresholds(EnsembleConfig config, const std::vector<ScoreMatrix>& member_scores,
                                             const Corpus& dev_gold) {
  if (member_scores.size() != config.members.size()) throw ValidationError("member/score count mismatch");
  const CorpusMap by_lang = split_by_language(dev_gold);
  for (std::size_t m = 0; m < config.members.size(); ++m) {
    for (const auto& [lang, dev] : by_lang) {
      config.thresholds[{config.members[m].id, lang}] = tune_threshold(member_scores[m], dev).threshold;
    }
  }
  return config;
}

struct VotingChoice {
  int voting_threshold = 1;
  double f1 = 0.0;
  std::vector<double> f1_by_v;  // index v-1
};

// Evaluates v = 1..|members| on dev micro-F1; ties go to the smallest v.
inline VotingChoice tune_voting_threshold(const EnsembleConfig& config, const std::vector<ScoreMatrix>& member_scores,
                                          const Corpus& dev_gold) {
  if (config.members.empty()) throw ValidationError("ensemble needs at least one member");
  const VoteTable votes = count_votes(config, member_scores, dev_gold);
  const auto rules = global_rules(config);
  VotingChoice best;
  best.f1 = -1.0;
  for (int v = 1; v <= static_cast<int>(config.members.size()); ++v) {
    PredictionSet pred = decide(votes, v);
    if (!rules.empty()) pred = apply_heuristics(pred, dev_gold, rules);
    const double f1 = f1_multilabel(dev_gold, pred).micro_f1;
    best.f1_by_v.push_back(f1);
    if (f1 > best.f1) {
      best.f1 = f1;
      best.voting_threshold = v;
    }
  }
  return best;
}

struct EnsembleSelection {
  EnsembleConfig config;
  double f1 = 0.0;
};

// For each dev language, tunes every candidate member set (thresholds, then
// voting threshold) and keeps the best by dev micro-F1. Ties go to the
// lexicographically smaller sorted member-id list.
inline std::map<Language, EnsembleSelection> select_ensemble(
    const std::vector<std::vector<std::string>>& candidates, const EnsembleConfig& base,
    const std::map<std::string, ScoreMatrix>& scores_by_member, const Corpus& dev_gold) {
  if (candidates.empty()) throw ValidationError("no candidate ensembles");
  std::map<Language, EnsembleSelection> out;
  std::map<Language, std::vector<std::string>> best_ids;
  for (const auto& [lang, dev] : split_by_language(dev_gold)) {
    for (std::vector<std::string> ids : candidates) {
      std::sort(ids.begin(), ids.end());
      if (ids.empty()) throw ValidationError("empty candidate ensemble");
      EnsembleConfig cfg = base;
      cfg.members.clear();
      cfg.thresholds.clear();
      std::vector<ScoreMatrix> mats;
      for (const std::string& id : ids) {
        auto it = scores_by_member.find(id);
        if (it == scores_by_member.end()) throw ValidationError("no scores for member '" + id + "'");
        auto bm = std::find_if(base.members.begin(), base.members.end(),
                               [&id](const EnsembleMember& m) { return m.id == id; });
        cfg.members.push_back(bm == base.members.end() ? EnsembleMember{id, {}} : *bm);
        mats.push_back(it->second);
      }
      std::erase_if(cfg.heuristics, [&ids](const HeuristicRule& h) {
        return !h.member.empty() && !std::binary_search(ids.begin(), ids.end(), h.member);
      });
      cfg = tune_member_thresholds(std::move(cfg), mats, dev);
      const VotingChoice vc = tune_voting_threshold(cfg, mats, dev);
      cfg.voting_threshold = vc.voting_threshold;
      auto cur = out.find(lang);
      const bool better = cur == out.end() || vc.f1 > cur->second.f1 ||
                          (vc.f1 == cur->second.f1 && ids < best_ids[lang]);
      if (better) {
        out[lang] = {std::move(cfg), vc.f1};
        best_ids[lang] = ids;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config file (INI sections). Keys can be overridden through environment
// variables PERSUADE_<SECTION>_<KEY>, upper-cased, non-alphanumerics as '_'.
//
//   [ensemble]            voting_threshold, default_threshold
//   [member:<id>]         scores, threshold.<lang>
//   [heuristic:<name>]    technique, language, question_mark, question_words,
//                         question_words_file, action (assert|suppress), member

inline std::string env_key(const std::string& section, const std::string& key) {
  std::string out = "PERSUADE_";
  for (char c : section + "_" + key) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(c)) : '_');
  }
  return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no" || s.empty()) return false;
  throw ValidationError("bad boolean '" + s + "'");
}

}  // namespace detail

inline EnsembleConfig read_ensemble_config(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(path.string(), e.line(), e.message());
  }
  // read_ini drops sections without keys, but an empty [member:x] is valid
  // and member order matters, so rebuild the section list from the file.
  {
    pt::ptree ordered;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      line = detail::trim(line);
      if (line.size() < 2 || line.front() != '[' || line.back() != ']') continue;
      const std::string name = detail::trim(line.substr(1, line.size() - 2));
      auto it = tree.find(name);
      ordered.push_back({name, it == tree.not_found() ? pt::ptree{} : it->second});
    }
    tree = std::move(ordered);
  }
  const auto base = path.parent_path();
  auto get = [](const std::string& section, const pt::ptree& sec, const std::string& key) -> std::optional<std::string> {
    if (const char* env = std::getenv(env_key(section, key).c_str())) return std::string(env);
    for (const auto& [k, v] : sec) {
      if (k == key) return detail::trim(v.data());
    }
    return std::nullopt;
  };

  EnsembleConfig cfg;
  for (const auto& [section, sec] : tree) {
    if (section == "ensemble") {
      if (auto v = get(section, sec, "voting_threshold")) {
        try {
          cfg.voting_threshold = std::stoi(*v);
        } catch (const std::logic_error&) {
          throw ValidationError("bad voting_threshold '" + *v + "'");
        }
      }
      if (auto v = get(section, sec, "default_threshold")) cfg.default_threshold = Threshold::parse(*v);
    } else if (section.rfind("member:", 0) == 0) {
      EnsembleMember m{section.substr(7), {}};
      if (auto v = get(section, sec, "scores")) {
        std::filesystem::path p(*v);
        m.scores = p.is_absolute() ? p : base / p;
      }
      for (const auto& [k, v] : sec) {
        if (k.rfind("threshold.", 0) != 0) continue;
        const Language lang = parse_language(k.substr(10));
        cfg.thresholds[{m.id, lang}] = Threshold::parse(*get(section, sec, k));
      }
      cfg.members.push_back(std::move(m));
    } else if (section.rfind("heuristic:", 0) == 0) {
      HeuristicRule r;
      r.name = section.substr(10);
      const auto tech = get(section, sec, "technique");
      const auto lang = get(section, sec, "language");
      if (!tech || !lang) throw ValidationError("heuristic '" + r.name + "' needs technique and language");
      r.technique = parse_technique(*tech);
      r.language = parse_language(*lang);
      if (auto v = get(section, sec, "question_mark")) r.question_mark = detail::parse_bool(*v);
      if (auto v = get(section, sec, "question_words")) r.question_words = detail::split_list(*v);
      if (auto v = get(section, sec, "question_words_file")) {
        std::filesystem::path p(*v);
        for (auto& w : load_word_list(p.is_absolute() ? p : base / p)) r.question_words.push_back(std::move(w));
      }
      if (auto v = get(section, sec, "action")) {
        if (*v == "assert") {
          r.action = HeuristicAction::Assert;
        } else if (*v == "suppress") {
          r.action = HeuristicAction::Suppress;
        } else {
          throw ValidationError("heuristic action must be assert or suppress, got '" + *v + "'");
        }
      }
      if (auto v = get(section, sec, "member")) r.member = *v;
      cfg.heuristics.push_back(std::move(r));
    } else {
      throw ValidationError(path.string() + ": unknown section [" + section + "]");
    }
  }
  cfg.validate();
  return cfg;
}

// Paths are written relative to `relative_to` when given.
inline void write_ensemble_config(const EnsembleConfig& cfg, std::ostream& out,
                                  const std::filesystem::path& relative_to = {}) {
  out << "[ensemble]\n";
  out << "voting_threshold = " << cfg.voting_threshold << '\n';
  out << "default_threshold = " << cfg.default_threshold.str() << '\n';
  for (const auto& m : cfg.members) {
    out << "\n[member:" << m.id << "]\n";
    if (!m.scores.empty()) {
      std::filesystem::path p = m.scores;
      if (!relative_to.empty()) p = std::filesystem::relative(m.scores, relative_to);
      out << "scores = " << p.generic_string() << '\n';
    }
    for (const auto& [key, th] : cfg.thresholds) {
      if (key.first == m.id) out << "threshold." << to_string(key.second) << " = " << th.str() << '\n';
    }
  }
  for (const auto& h : cfg.heuristics) {
    out << "\n[heuristic:" << h.name << "]\n";
    out << "technique = " << canonical_name(h.technique) << '\n';
    out << "language = " << to_string(h.language) << '\n';
    out << "question_mark = " << (h.question_mark ? "true" : "false") << '\n';
    if (!h.question_words.empty()) {
      out << "question_words = ";
      for (std::size_t i = 0; i < h.question_words.size(); ++i) out << (i ? ", " : "") << h.question_words[i];
      out << '\n';
    }
    out << "action = " << (h.action == HeuristicAction::Assert ? "assert" : "suppress") << '\n';
    if (!h.member.empty()) out << "member = " << h.member << '\n';
  }
}

}  // namespace persuade
