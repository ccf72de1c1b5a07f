#pragma once

// Registry of persuasion techniques, their coarse categories, the language
// codes of the shared task and the machine-translation coverage matrix.

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "persuade/error.hpp"

namespace persuade {

enum class Language : std::uint8_t { en, fr, it, ru, ge, po, es, el, ka };

inline constexpr std::size_t kLanguageCount = 9;

inline constexpr std::array<Language, kLanguageCount> kAllLanguages = {
    Language::en, Language::fr, Language::it, Language::ru, Language::ge,
    Language::po, Language::es, Language::el, Language::ka};

inline constexpr std::array<Language, 6> kTrainingLanguages = {
    Language::en, Language::fr, Language::it, Language::ru, Language::ge, Language::po};

inline constexpr std::array<Language, 3> kSurpriseLanguages = {Language::es, Language::el,
                                                               Language::ka};

inline constexpr std::array<std::string_view, kLanguageCount> kLanguageCodes = {
    "en", "fr", "it", "ru", "ge", "po", "es", "el", "ka"};

constexpr std::string_view to_string(Language lang) {
  return kLanguageCodes[static_cast<std::size_t>(lang)];
}

constexpr bool is_training_language(Language lang) {
  return static_cast<std::uint8_t>(lang) <= static_cast<std::uint8_t>(Language::po);
}

constexpr bool is_surprise_language(Language lang) { return !is_training_language(lang); }

inline std::optional<Language> try_parse_language(std::string_view code) {
  for (std::size_t i = 0; i < kLanguageCount; ++i) {
    if (kLanguageCodes[i] == code) return static_cast<Language>(i);
  }
  return std::nullopt;
}

inline Language parse_language(std::string_view code) {
  if (auto lang = try_parse_language(code)) return *lang;
  throw UnknownLanguageError(std::string(code));
}

inline std::ostream& operator<<(std::ostream& os, Language lang) { return os << to_string(lang); }

enum class Category : std::uint8_t {
  Justification,
  Simplification,
  Distraction,
  Call,
  ManipulativeWording,
  AttackToReputation
};

inline constexpr std::size_t kCategoryCount = 6;

inline constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "Justification", "Simplification",       "Distraction",
    "Call",          "Manipulative Wording", "Attack to Reputation"};

constexpr std::string_view to_string(Category c) {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

// Canonical order: grouped by category, in label-distribution table order.
// Every per-technique vector (scores, counts, weights) uses this order.
enum class Technique : std::uint8_t {
  AppealToAuthority,
  AppealToPopularity,
  AppealToValues,
  AppealToFearPrejudice,
  FlagWaving,
  CausalOversimplification,
  FalseDilemmaNoChoice,
  ConsequentialOversimplification,
  StrawMan,
  Whataboutism,
  RedHerring,
  AppealToTime,
  Slogans,
  ConversationKiller,
  LoadedLanguage,
  Repetition,
  ExaggerationMinimisation,
  ObfuscationVaguenessConfusion,
  AppealToHypocrisy,
  Doubt,
  NameCallingLabeling,
  GuiltByAssociation,
  QuestioningTheReputation
};

inline constexpr std::size_t kTechniqueCount = 23;

namespace detail {

struct TechniqueInfo {
  std::string_view name;
  Category category;
};

inline constexpr std::array<TechniqueInfo, kTechniqueCount> kTechniqueTable = {{
    {"Appeal to Authority", Category::Justification},
    {"Appeal to Popularity", Category::Justification},
    {"Appeal to Values", Category::Justification},
    {"Appeal to Fear-Prejudice", Category::Justification},
    {"Flag Waving", Category::Justification},
    {"Causal Oversimplification", Category::Simplification},
    {"False Dilemma-No Choice", Category::Simplification},
    {"Consequential Oversimplification", Category::Simplification},
    {"Straw Man", Category::Distraction},
    {"Whataboutism", Category::Distraction},
    {"Red Herring", Category::Distraction},
    {"Appeal to Time", Category::Call},
    {"Slogans", Category::Call},
    {"Conversation Killer", Category::Call},
    {"Loaded Language", Category::ManipulativeWording},
    {"Repetition", Category::ManipulativeWording},
    {"Exaggeration-Minimisation", Category::ManipulativeWording},
    {"Obfuscation-Vagueness-Confusion", Category::ManipulativeWording},
    {"Appeal to Hypocrisy", Category::AttackToReputation},
    {"Doubt", Category::AttackToReputation},
    {"Name Calling-Labeling", Category::AttackToReputation},
    {"Guilt by Association", Category::AttackToReputation},
    {"Questioning the Reputation", Category::AttackToReputation},
}};

// Separators ' ', '-', '_' are interchangeable; runs collapse to one.
inline std::string normalize_label(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  bool pending_sep = false;
  for (char c : name) {
    if (c == ' ' || c == '-' || c == '_' || c == '\t') {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) out.push_back(' ');
    pending_sep = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline constexpr std::array<Technique, kTechniqueCount> all_techniques() {
  std::array<Technique, kTechniqueCount> out{};
  for (std::size_t i = 0; i < kTechniqueCount; ++i) out[i] = static_cast<Technique>(i);
  return out;
}

constexpr std::size_t index_of(Technique t) { return static_cast<std::size_t>(t); }

constexpr std::string_view canonical_name(Technique t) {
  return detail::kTechniqueTable[index_of(t)].name;
}

constexpr Category category_of(Technique t) { return detail::kTechniqueTable[index_of(t)].category; }

inline std::ostream& operator<<(std::ostream& os, Technique t) { return os << canonical_name(t); }

inline std::optional<Technique> try_parse_technique(std::string_view name) {
  const std::string key = detail::normalize_label(name);
  for (std::size_t i = 0; i < kTechniqueCount; ++i) {
    if (detail::normalize_label(detail::kTechniqueTable[i].name) == key) {
      return static_cast<Technique>(i);
    }
  }
  return std::nullopt;
}

inline Technique parse_technique(std::string_view name) {
  if (auto t = try_parse_technique(name)) return *t;
  throw UnknownTechniqueError(std::string(name));
}

inline std::vector<Technique> techniques_in(Category c) {
  std::vector<Technique> out;
  for (Technique t : all_techniques()) {
    if (category_of(t) == c) out.push_back(t);
  }
  return out;
}

// A set of techniques, iterated in canonical order.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<Technique> ts) {
    for (Technique t : ts) insert(t);
  }

  void insert(Technique t) { bits_.set(index_of(t)); }
  void erase(Technique t) { bits_.reset(index_of(t)); }
  bool contains(Technique t) const { return bits_.test(index_of(t)); }
  bool empty() const { return bits_.none(); }
  std::size_t size() const { return bits_.count(); }

  std::vector<Technique> to_vector() const {
    std::vector<Technique> out;
    for (Technique t : all_techniques()) {
      if (contains(t)) out.push_back(t);
    }
    return out;
  }

  LabelSet& operator|=(const LabelSet& o) {
    bits_ |= o.bits_;
    return *this;
  }
  LabelSet& operator&=(const LabelSet& o) {
    bits_ &= o.bits_;
    return *this;
  }
  friend LabelSet operator|(LabelSet a, const LabelSet& b) { return a |= b; }
  friend LabelSet operator&(LabelSet a, const LabelSet& b) { return a &= b; }
  friend bool operator==(const LabelSet&, const LabelSet&) = default;

  const std::bitset<kTechniqueCount>& bits() const { return bits_; }

 private:
  std::bitset<kTechniqueCount> bits_;
};

enum class CoverageKind : std::uint8_t { Translation, BackTranslation };

constexpr std::string_view to_string(CoverageKind k) {
  return k == CoverageKind::Translation ? "translation" : "back-translation";
}

namespace detail {

// Rows are target languages (all nine), columns source languages (the six
// training languages). Each cell holds {translation, back-translation}.
// '-' marks the diagonal.
struct CoverageCell {
  bool translation;
  bool back_translation;
};

inline constexpr CoverageCell Y{true, true};
inline constexpr CoverageCell N{false, false};
inline constexpr CoverageCell T{true, false};  // translation only
inline constexpr CoverageCell D{false, false};  // diagonal

//                                 source: en fr it ru ge po
inline constexpr std::array<std::array<CoverageCell, 6>, kLanguageCount> kCoverage = {{
    /* target en */ {D, Y, Y, Y, Y, Y},
    /* target fr */ {Y, D, T, Y, Y, Y},
    /* target it */ {Y, N, D, N, Y, N},
    /* target ru */ {Y, Y, N, D, N, N},
    /* target ge */ {Y, Y, Y, N, D, Y},
    /* target po */ {N, Y, N, N, Y, D},
    /* target es */ {Y, Y, Y, Y, Y, N},
    /* target el */ {T, Y, N, N, T, N},
    /* target ka */ {N, N, N, N, N, N},
}};

}  // namespace detail

// Translation: can `source` text be rendered in `target`.
// BackTranslation: can `source` text be paraphrased via pivot `target`.
// Sources outside the six training languages have no models.
inline bool is_covered(CoverageKind kind, Language source, Language target) {
  if (source == target) throw SameLanguageError(std::string(to_string(source)));
  if (!is_training_language(source)) return false;
  const auto& cell = detail::kCoverage[static_cast<std::size_t>(target)]
                                      [static_cast<std::size_t>(source)];
  return kind == CoverageKind::Translation ? cell.translation : cell.back_translation;
}

// TSV dump: technique table, blank line, coverage matrix in long form.
inline void export_taxonomy_tsv(std::ostream& os) {
  os << "technique\tcategory\n";
  for (Technique t : all_techniques()) {
    os << canonical_name(t) << '\t' << to_string(category_of(t)) << '\n';
  }
  os << '\n' << "kind\tsource\ttarget\tcovered\n";
  for (CoverageKind kind : {CoverageKind::Translation, CoverageKind::BackTranslation}) {
    for (Language s : kTrainingLanguages) {
      for (Language t : kAllLanguages) {
        if (s == t) continue;
        os << to_string(kind) << '\t' << to_string(s) << '\t' << to_string(t) << '\t'
           << (is_covered(kind, s, t) ? "1" : "0") << '\n';
      }
    }
  }
}

}  // namespace persuade
