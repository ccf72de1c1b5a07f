#include <gtest/gtest.h>

#include <sstream>

#include "support/testing.hpp"

using namespace persuade;

TEST(Taxonomy, TwentyThreeTechniquesInSixCategories) {
  EXPECT_EQ(all_techniques().size(), 23u);
  std::size_t total = 0;
  for (std::size_t c = 0; c < kCategoryCount; ++c) total += techniques_in(static_cast<Category>(c)).size();
  EXPECT_EQ(total, 23u);
  EXPECT_EQ(techniques_in(Category::AttackToReputation).size(), 5u);
  EXPECT_EQ(techniques_in(Category::Distraction).size(), 3u);
}

TEST(Taxonomy, ParsesCanonicalNamesAndSeparatorVariants) {
  EXPECT_EQ(parse_technique("Loaded Language"), Technique::LoadedLanguage);
  EXPECT_EQ(parse_technique("Name_Calling-Labeling"), Technique::NameCallingLabeling);
  EXPECT_EQ(parse_technique("Appeal_to_Fear-Prejudice"), Technique::AppealToFearPrejudice);
  EXPECT_EQ(parse_technique("False Dilemma No Choice"), Technique::FalseDilemmaNoChoice);
  for (Technique t : all_techniques()) EXPECT_EQ(parse_technique(canonical_name(t)), t);
}

TEST(Taxonomy, UnknownTechniqueIsAnError) {
  EXPECT_THROW(parse_technique("Bandwagon"), UnknownTechniqueError);
  EXPECT_THROW(parse_technique("loaded language"), UnknownTechniqueError);
  EXPECT_FALSE(try_parse_technique("").has_value());
}

TEST(Taxonomy, CategoryLookup) {
  EXPECT_EQ(category_of(Technique::Doubt), Category::AttackToReputation);
  EXPECT_EQ(category_of(Technique::Slogans), Category::Call);
  EXPECT_EQ(category_of(Technique::RedHerring), Category::Distraction);
}

TEST(Taxonomy, Languages) {
  EXPECT_EQ(parse_language("ge"), Language::ge);
  EXPECT_THROW(parse_language("de"), UnknownLanguageError);
  EXPECT_TRUE(is_surprise_language(Language::ka));
  EXPECT_TRUE(is_training_language(Language::po));
}

TEST(Taxonomy, LabelSetAlgebra) {
  LabelSet a{Technique::Doubt, Technique::Slogans};
  LabelSet b{Technique::Slogans};
  EXPECT_EQ((a & b), b);
  EXPECT_EQ((a | b), a);
  EXPECT_EQ(a.size(), 2u);
  a.erase(Technique::Doubt);
  EXPECT_EQ(a, b);
}

TEST(Coverage, MatchesTranscriptionCellForCell) {
  const auto tr = testkit::load_coverage_fixture(testkit::fixture("coverage_matrix.tsv"));
  std::size_t checked = 0;
  for (const auto& [key, cell] : tr.cells) {
    const Language s = parse_language(key.first);
    const Language t = parse_language(key.second);
    EXPECT_EQ(is_covered(CoverageKind::Translation, s, t), cell.first) << key.first << "->" << key.second;
    EXPECT_EQ(is_covered(CoverageKind::BackTranslation, s, t), cell.second) << key.first << "->" << key.second;
    checked += 2;
  }
  EXPECT_EQ(checked, 96u);
  EXPECT_EQ(tr.diagonal.size(), 6u);
  for (const auto& [s, t] : tr.diagonal) {
    EXPECT_THROW(is_covered(CoverageKind::Translation, parse_language(s), parse_language(t)), SameLanguageError);
  }
}

TEST(Coverage, Asymmetry) {
  EXPECT_TRUE(is_covered(CoverageKind::Translation, Language::po, Language::en));
  EXPECT_FALSE(is_covered(CoverageKind::Translation, Language::en, Language::po));
  EXPECT_TRUE(is_covered(CoverageKind::Translation, Language::it, Language::fr));
  EXPECT_FALSE(is_covered(CoverageKind::BackTranslation, Language::it, Language::fr));
}

TEST(Coverage, SurpriseSourcesHaveNoModels) {
  for (Language s : kSurpriseLanguages) {
    for (Language t : kAllLanguages) {
      if (s == t) continue;
      EXPECT_FALSE(is_covered(CoverageKind::Translation, s, t));
      EXPECT_FALSE(is_covered(CoverageKind::BackTranslation, s, t));
    }
  }
}

TEST(Coverage, BackTranslationImpliesTranslation) {
  for (Language s : kTrainingLanguages) {
    for (Language t : kAllLanguages) {
      if (s == t) continue;
      if (is_covered(CoverageKind::BackTranslation, s, t)) {
        EXPECT_TRUE(is_covered(CoverageKind::Translation, s, t));
      }
    }
  }
}

TEST(Coverage, ExportListsEveryCell) {
  std::ostringstream os;
  export_taxonomy_tsv(os);
  const std::string s = os.str();
  EXPECT_NE(s.find("Loaded Language\tManipulative Wording"), std::string::npos);
  EXPECT_NE(s.find("translation\tpo\ten\t1"), std::string::npos);
  EXPECT_NE(s.find("translation\ten\tpo\t0"), std::string::npos);
}

TEST(Text, NfcAndLowercase) {
  EXPECT_EQ(text::nfc("e\xCC\x81"), "\xC3\xA9");
  EXPECT_EQ(text::lower_nfc("ÉTÉ Straße"), "été straße");
}

TEST(Text, CodepointSubstrings) {
  EXPECT_EQ(text::codepoint_length("ñandú"), 5u);
  EXPECT_EQ(text::substr_codepoints("ñandú x", 1, 5), "andú");
  EXPECT_THROW(text::substr_codepoints("abc", 2, 4), ValidationError);
  EXPECT_THROW(text::to_codepoints("\xFF"), ValidationError);
}

TEST(Text, BleuTokenizerSplitsEdgePunctuation) {
  const std::vector<std::string> want = {"Hello", ",", "world", "!", "(", "x", ")"};
  EXPECT_EQ(text::bleu_tokenize("Hello, world! (x)"), want);
}

TEST(Text, WordTokens) {
  const std::vector<std::string> want = {"why", "is", "this", "so"};
  EXPECT_EQ(text::word_tokens("Why is this... so?"), want);
}
