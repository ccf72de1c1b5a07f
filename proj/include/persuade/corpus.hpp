#pragma once

// Paragraph-level data model, corpus file formats and dataset recipes.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "persuade/error.hpp"
#include "persuade/taxonomy.hpp"
#include "persuade/text.hpp"

namespace persuade {

struct ParagraphId {
  std::string article_id;
  std::uint32_t paragraph_index = 0;

  friend auto operator<=>(const ParagraphId&, const ParagraphId&) = default;
  friend bool operator==(const ParagraphId&, const ParagraphId&) = default;

  std::string str() const { return article_id + ":" + std::to_string(paragraph_index); }
};

// Offsets count Unicode scalar values, end exclusive.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  Technique technique{};

  friend bool operator==(const Span&, const Span&) = default;
};

enum class ProvenanceKind : std::uint8_t { Gold, Translated, BackTranslated, SpanOnly };

inline constexpr std::array<std::string_view, 4> kProvenanceNames = {"gold", "translated",
                                                                     "back_translated", "span_only"};

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::Gold;
  // Source language for Translated, pivot for BackTranslated.
  std::optional<Language> language;
  std::optional<ParagraphId> origin;

  static Provenance gold() { return {}; }
  static Provenance translated(Language source, ParagraphId origin) {
    return {ProvenanceKind::Translated, source, std::move(origin)};
  }
  static Provenance back_translated(Language pivot, ParagraphId origin) {
    return {ProvenanceKind::BackTranslated, pivot, std::move(origin)};
  }
  static Provenance span_only(ParagraphId origin) {
    return {ProvenanceKind::SpanOnly, std::nullopt, std::move(origin)};
  }

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Paragraph {
  ParagraphId id;
  Language language = Language::en;
  std::string text;
  LabelSet labels;
  std::vector<Span> spans;
  Provenance provenance;

  friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

inline void validate(const Paragraph& p) {
  const std::string where = "paragraph " + p.id.str() + ": ";
  if (p.text.empty()) throw ValidationError(where + "empty text");
  const std::size_t len = text::codepoint_length(p.text);
  for (const Span& s : p.spans) {
    if (!(s.start < s.end && s.end <= len)) {
      throw ValidationError(where + "span [" + std::to_string(s.start) + "," +
                            std::to_string(s.end) + ") outside text of length " +
                            std::to_string(len));
    }
    if (!p.labels.contains(s.technique)) {
      throw ValidationError(where + "span technique '" + std::string(canonical_name(s.technique)) +
                            "' missing from labels");
    }
  }
  const Provenance& pv = p.provenance;
  switch (pv.kind) {
    case ProvenanceKind::Gold:
      if (pv.origin || pv.language) throw ValidationError(where + "gold provenance carries origin");
      break;
    case ProvenanceKind::Translated:
    case ProvenanceKind::BackTranslated:
      if (!pv.origin || !pv.language) {
        throw ValidationError(where + "augmented provenance needs origin and language");
      }
      break;
    case ProvenanceKind::SpanOnly:
      if (!pv.origin || pv.language) throw ValidationError(where + "span-only provenance needs origin");
      break;
  }
}

// Ordered collection of paragraphs with unique ids. Insertion order is kept;
// sorted() gives the canonical id order.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Paragraph> paragraphs) {
    paragraphs_.reserve(paragraphs.size());
    for (Paragraph& p : paragraphs) add(std::move(p));
  }

  void add(Paragraph p) {
    validate(p);
    auto [it, inserted] = index_.emplace(p.id, paragraphs_.size());
    if (!inserted) throw DuplicateIdError("duplicate paragraph id " + p.id.str());
    paragraphs_.push_back(std::move(p));
  }

  void append(const Corpus& other) {
    for (const Paragraph& p : other) add(p);
  }

  const Paragraph* find(const ParagraphId& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &paragraphs_[it->second];
  }
  bool contains(const ParagraphId& id) const { return index_.count(id) != 0; }

  std::size_t size() const { return paragraphs_.size(); }
  bool empty() const { return paragraphs_.empty(); }
  std::vector<Paragraph>::const_iterator begin() const { return paragraphs_.begin(); }
  std::vector<Paragraph>::const_iterator end() const { return paragraphs_.end(); }
  const Paragraph& operator[](std::size_t i) const { return paragraphs_[i]; }
  const std::vector<Paragraph>& paragraphs() const { return paragraphs_; }

  Corpus sorted() const {
    Corpus out;
    out.paragraphs_.reserve(size());
    for (const auto& [id, idx] : index_) {
      out.index_.emplace(id, out.paragraphs_.size());
      out.paragraphs_.push_back(paragraphs_[idx]);
    }
    return out;
  }

  template <class Pred>
  Corpus filter(Pred&& keep) const {
    Corpus out;
    for (const Paragraph& p : paragraphs_) {
      if (keep(p)) out.add(p);
    }
    return out;
  }

  Corpus in_language(Language lang) const {
    return filter([lang](const Paragraph& p) { return p.language == lang; });
  }

  friend bool operator==(const Corpus& a, const Corpus& b) { return a.paragraphs_ == b.paragraphs_; }

 private:
  std::vector<Paragraph> paragraphs_;
  std::map<ParagraphId, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Canonical JSON-lines format

namespace detail {

inline nlohmann::ordered_json id_to_json(const ParagraphId& id) {
  return {{"article_id", id.article_id}, {"paragraph_index", id.paragraph_index}};
}

inline ParagraphId id_from_json(const nlohmann::json& j) {
  return {j.at("article_id").get<std::string>(), j.at("paragraph_index").get<std::uint32_t>()};
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const Paragraph& p) {
  nlohmann::ordered_json j;
  j["article_id"] = p.id.article_id;
  j["paragraph_index"] = p.id.paragraph_index;
  j["language"] = std::string(to_string(p.language));
  j["text"] = p.text;
  auto labels = nlohmann::ordered_json::array();
  for (Technique t : p.labels.to_vector()) labels.push_back(std::string(canonical_name(t)));
  j["labels"] = std::move(labels);
  auto spans = nlohmann::ordered_json::array();
  for (const Span& s : p.spans) {
    spans.push_back({{"start", s.start}, {"end", s.end}, {"technique", canonical_name(s.technique)}});
  }
  j["spans"] = std::move(spans);
  nlohmann::ordered_json prov;
  prov["kind"] = std::string(kProvenanceNames[static_cast<std::size_t>(p.provenance.kind)]);
  if (p.provenance.language) prov["source_or_pivot"] = std::string(to_string(*p.provenance.language));
  if (p.provenance.origin) prov["origin"] = detail::id_to_json(*p.provenance.origin);
  j["provenance"] = std::move(prov);
  return j;
}

inline Paragraph paragraph_from_json(const nlohmann::json& j) {
  Paragraph p;
  p.id = detail::id_from_json(j);
  p.language = parse_language(j.at("language").get<std::string>());
  p.text = j.at("text").get<std::string>();
  for (const auto& name : j.value("labels", nlohmann::json::array())) {
    p.labels.insert(parse_technique(name.get<std::string>()));
  }
  for (const auto& s : j.value("spans", nlohmann::json::array())) {
    p.spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                       parse_technique(s.at("technique").get<std::string>())});
  }
  if (j.contains("provenance")) {
    const auto& pj = j.at("provenance");
    const std::string kind = pj.at("kind").get<std::string>();
    auto it = std::find(kProvenanceNames.begin(), kProvenanceNames.end(), kind);
    if (it == kProvenanceNames.end()) throw ValidationError("unknown provenance kind '" + kind + "'");
    p.provenance.kind = static_cast<ProvenanceKind>(it - kProvenanceNames.begin());
    if (pj.contains("source_or_pivot")) {
      p.provenance.language = parse_language(pj.at("source_or_pivot").get<std::string>());
    }
    if (pj.contains("origin")) p.provenance.origin = detail::id_from_json(pj.at("origin"));
  }
  return p;
}

inline Corpus read_jsonl(std::istream& in, const std::string& source = "<stream>") {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      corpus.add(paragraph_from_json(nlohmann::json::parse(line)));
    } catch (const UnknownTechniqueError&) {
      throw;
    } catch (const UnknownLanguageError&) {
      throw;
    } catch (const DuplicateIdError& e) {
      throw DuplicateIdError(source + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return corpus;
}

inline Corpus read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_jsonl(in, path.string());
}

inline void write_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const Paragraph& p : corpus) out << to_json(p).dump() << '\n';
}

inline void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_jsonl(corpus, out);
}

// ---------------------------------------------------------------------------
// Task-labels TSV: article_id TAB paragraph_index TAB comma-separated labels.

struct LabeledId {
  ParagraphId id;
  LabelSet labels;
};

inline std::vector<LabeledId> read_task_labels(std::istream& in, const std::string& source = "<stream>") {
  std::vector<LabeledId> rows;
  std::map<ParagraphId, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (line.back() == '\t') fields.emplace_back();
    if (fields.size() == 2) fields.emplace_back();
    if (fields.size() != 3) throw ParseError(source, lineno, "expected 3 tab-separated fields");
    LabeledId row;
    row.id.article_id = fields[0];
    try {
      std::size_t pos = 0;
      const long idx = std::stol(fields[1], &pos);
      if (pos != fields[1].size() || idx < 0) throw std::invalid_argument("index");
      row.id.paragraph_index = static_cast<std::uint32_t>(idx);
    } catch (const std::logic_error&) {
      throw ParseError(source, lineno, "bad paragraph index '" + fields[1] + "'");
    }
    std::stringstream ls(fields[2]);
    std::string name;
    while (std::getline(ls, name, ',')) {
      if (name.empty()) continue;
      row.labels.insert(parse_technique(name));
    }
    if (!seen.emplace(row.id, rows.size()).second) {
      throw DuplicateIdError(source + ":" + std::to_string(lineno) + ": duplicate paragraph id " +
                             row.id.str());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<LabeledId> read_task_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_task_labels(in, path.string());
}

inline void write_task_labels(const std::vector<LabeledId>& rows, std::ostream& out) {
  for (const LabeledId& r : rows) {
    out << r.id.article_id << '\t' << r.id.paragraph_index << '\t';
    bool first = true;
    for (Technique t : r.labels.to_vector()) {
      if (!first) out << ',';
      out << canonical_name(t);
      first = false;
    }
    out << '\n';
  }
}

// The task labels file carries no text. Paragraph text comes from
// `articles_dir/article<id>.txt`, where paragraph_index is the 1-based line.
inline Corpus import_task_labels(const std::filesystem::path& labels_path,
                                 const std::filesystem::path& articles_dir, Language language) {
  Corpus corpus;
  std::map<std::string, std::vector<std::string>> cache;
  for (LabeledId& row : read_task_labels(labels_path)) {
    auto it = cache.find(row.id.article_id);
    if (it == cache.end()) {
      const auto file = articles_dir / ("article" + row.id.article_id + ".txt");
      std::ifstream in(file, std::ios::binary);
      if (!in) throw DataError("cannot open article text " + file.string());
      std::vector<std::string> lines;
      std::string l;
      while (std::getline(in, l)) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
        lines.push_back(l);
      }
      it = cache.emplace(row.id.article_id, std::move(lines)).first;
    }
    const auto& lines = it->second;
    if (row.id.paragraph_index == 0 || row.id.paragraph_index > lines.size()) {
      throw DataError("article " + row.id.article_id + " has no line " +
                      std::to_string(row.id.paragraph_index));
    }
    Paragraph p;
    p.id = row.id;
    p.language = language;
    p.text = lines[row.id.paragraph_index - 1];
    p.labels = row.labels;
    corpus.add(std::move(p));
  }
  return corpus;
}

inline std::vector<LabeledId> labels_of(const Corpus& corpus) {
  std::vector<LabeledId> rows;
  rows.reserve(corpus.size());
  for (const Paragraph& p : corpus) rows.push_back({p.id, p.labels});
  return rows;
}

// ---------------------------------------------------------------------------
// Statistics

using TechniqueCounts = std::array<std::size_t, kTechniqueCount>;

inline TechniqueCounts stats(const Corpus& corpus) {
  TechniqueCounts counts{};
  for (const Paragraph& p : corpus) {
    for (Technique t : p.labels.to_vector()) ++counts[index_of(t)];
  }
  return counts;
}

inline LabelSet select_low_frequency(const Corpus& corpus, std::size_t threshold) {
  if (threshold == 0) throw ValidationError("low-frequency threshold must be positive");
  const TechniqueCounts counts = stats(corpus);
  LabelSet out;
  for (Technique t : all_techniques()) {
    if (counts[index_of(t)] < threshold) out.insert(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Span injection

inline ParagraphId span_only_id(const ParagraphId& origin) {
  return {origin.article_id + "~span", origin.paragraph_index};
}

// One extra instance per paragraph with spans: span texts in textual order
// joined by single spaces, labelled with the union of span techniques.
inline Paragraph span_only_instance(const Paragraph& p) {
  std::vector<Span> ordered = p.spans;
  std::stable_sort(ordered.begin(), ordered.end(), [](const Span& a, const Span& b) {
    return std::tie(a.start, a.end) < std::tie(b.start, b.end);
  });
  const std::u32string cps = text::to_codepoints(p.text);
  Paragraph out;
  out.id = span_only_id(p.id);
  out.language = p.language;
  for (const Span& s : ordered) {
    if (!out.text.empty()) out.text.push_back(' ');
    out.text += text::from_codepoints(std::u32string_view(cps).substr(s.start, s.end - s.start));
    out.labels.insert(s.technique);
  }
  out.provenance = Provenance::span_only(p.id);
  return out;
}

inline Corpus span_instances(const Corpus& gold) {
  Corpus out;
  for (const Paragraph& p : gold) {
    if (p.provenance.kind != ProvenanceKind::Gold) {
      throw ValidationError("span injection expects gold paragraphs, got " + p.id.str());
    }
    if (!p.spans.empty()) out.add(span_only_instance(p));
  }
  return out;
}

inline Corpus inject_spans(const Corpus& gold) {
  Corpus out = gold;
  out.append(span_instances(gold));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset recipes

enum class RecipeName : std::uint8_t { Gold, T, BT, BTsl, TBT, TBTsl, Span };

inline constexpr std::array<std::string_view, 7> kRecipeNames = {"gold",  "+T",       "+BT", "+BT-sl",
                                                                 "+T+BT", "+T+BT-sl", "+span"};

constexpr std::string_view to_string(RecipeName r) { return kRecipeNames[static_cast<std::size_t>(r)]; }

inline RecipeName parse_recipe(std::string_view name) {
  for (std::size_t i = 0; i < kRecipeNames.size(); ++i) {
    if (kRecipeNames[i] == name) return static_cast<RecipeName>(i);
  }
  throw ValidationError("unknown dataset recipe '" + std::string(name) + "'");
}

struct DatasetRecipe {
  RecipeName name = RecipeName::Gold;
  // Keep only additions carrying a technique whose gold count is below this.
  std::optional<std::size_t> low_frequency_only;
  // Every member language receives the merged output of the whole group.
  std::optional<std::vector<Language>> family_group;
};

using CorpusMap = std::map<Language, Corpus>;

namespace detail {

inline void check_pool_paragraph(const Paragraph& p) {
  const Provenance& pv = p.provenance;
  switch (pv.kind) {
    case ProvenanceKind::Gold:
      throw ValidationError("augmentation pool contains gold paragraph " + p.id.str());
    case ProvenanceKind::Translated:
      if (*pv.language == p.language || !is_covered(CoverageKind::Translation, *pv.language, p.language)) {
        throw ValidationError("pool paragraph " + p.id.str() + " translated " +
                              std::string(to_string(*pv.language)) + "->" +
                              std::string(to_string(p.language)) + " is not a covered pair");
      }
      break;
    case ProvenanceKind::BackTranslated:
      if (*pv.language == p.language ||
          !is_covered(CoverageKind::BackTranslation, p.language, *pv.language)) {
        throw ValidationError("pool paragraph " + p.id.str() + " back-translated " +
                              std::string(to_string(p.language)) + " via " +
                              std::string(to_string(*pv.language)) + " is not a covered pair");
      }
      break;
    case ProvenanceKind::SpanOnly:
      break;
  }
}

}  // namespace detail

// Recipe algebra, per target language L:
//   gold      gold(L)
//   +T        gold(L) + translations into L
//   +BT       gold(L) + back-translations of L via training-language pivots
//   +BT-sl    +BT + back-translations via surprise-language pivots
//   +T+BT     gold(L) + T + BT, surprise-language targets get no translations
//   +T+BT-sl  gold(L) + T + BT + BT-sl, same exclusion
//   +span     gold(L) + span-only instances
// Output has an entry for all nine languages, each sorted by id.
inline CorpusMap assemble(const DatasetRecipe& recipe, const CorpusMap& gold,
                          const std::vector<Corpus>& pool) {
  for (const auto& [lang, corpus] : gold) {
    for (const Paragraph& p : corpus) {
      if (p.language != lang) {
        throw ValidationError("gold corpus for " + std::string(to_string(lang)) +
                              " contains paragraph " + p.id.str() + " in " +
                              std::string(to_string(p.language)));
      }
    }
  }
  for (const Corpus& c : pool) {
    for (const Paragraph& p : c) detail::check_pool_paragraph(p);
  }

  const RecipeName r = recipe.name;
  const bool want_t = r == RecipeName::T || r == RecipeName::TBT || r == RecipeName::TBTsl;
  const bool want_bt = r == RecipeName::BT || r == RecipeName::BTsl || r == RecipeName::TBT ||
                       r == RecipeName::TBTsl;
  const bool want_bt_sl = r == RecipeName::BTsl || r == RecipeName::TBTsl;
  const bool want_span = r == RecipeName::Span;
  const bool combined = r == RecipeName::TBT || r == RecipeName::TBTsl;

  CorpusMap out;
  for (Language lang : kAllLanguages) {
    Corpus result;
    auto git = gold.find(lang);
    const Corpus empty;
    const Corpus& g = git == gold.end() ? empty : git->second;
    result.append(g);

    std::optional<LabelSet> rare;
    if (recipe.low_frequency_only) rare = select_low_frequency(g, *recipe.low_frequency_only);

    auto wanted = [&](const Paragraph& p) {
      if (p.language != lang) return false;
      const Provenance& pv = p.provenance;
      switch (pv.kind) {
        case ProvenanceKind::Translated:
          return want_t && is_training_language(*pv.language) &&
                 !(combined && is_surprise_language(lang));
        case ProvenanceKind::BackTranslated:
          return is_training_language(*pv.language) ? want_bt : want_bt_sl;
        case ProvenanceKind::SpanOnly:
          return want_span;
        case ProvenanceKind::Gold:
          return false;
      }
      return false;
    };

    for (const Corpus& c : pool) {
      for (const Paragraph& p : c) {
        if (!wanted(p)) continue;
        if (rare && (p.labels & *rare).empty()) continue;
        result.add(p);
      }
    }
    out.emplace(lang, result.sorted());
  }

  if (recipe.family_group) {
    Corpus merged;
    for (Language lang : *recipe.family_group) merged.append(out.at(lang));
    merged = merged.sorted();
    for (Language lang : *recipe.family_group) out[lang] = merged;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Language-family grouping

inline const std::vector<std::pair<std::string, std::vector<Language>>>& language_families() {
  static const std::vector<std::pair<std::string, std::vector<Language>>> kFamilies = {
      {"en-ge", {Language::en, Language::ge}},
      {"fr-it", {Language::fr, Language::it}},
      {"ru-po", {Language::ru, Language::po}},
  };
  return kFamilies;
}

inline std::map<std::string, Corpus> group_families(const CorpusMap& corpora) {
  std::map<std::string, Corpus> out;
  for (const auto& [name, members] : language_families()) {
    Corpus merged;
    for (Language lang : members) {
      auto it = corpora.find(lang);
      if (it == corpora.end()) {
        throw ValidationError("language family " + name + " is missing " +
                              std::string(to_string(lang)));
      }
      merged.append(it->second);
    }
    out.emplace(name, merged.sorted());
  }
  return out;
}

inline CorpusMap split_by_language(const Corpus& corpus) {
  CorpusMap out;
  for (const Paragraph& p : corpus) {
    auto [it, _] = out.try_emplace(p.language);
    it->second.add(p);
  }
  return out;
}

}  // namespace persuade
