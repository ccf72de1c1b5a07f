#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "support/testing.hpp"

using namespace persuade;

namespace {

Corpus one(LabelSet gold) {
  Corpus c;
  c.add(testkit::make_paragraph("1", 1, Language::en, "t", gold));
  return c;
}

}  // namespace

TEST(F1, PerfectPrediction) {
  std::mt19937_64 rng(1);
  const Corpus gold = testkit::random_gold(rng, 30);
  PredictionSet pred;
  for (const Paragraph& p : gold) pred[p.id] = p.labels;
  const EvalReport r = f1_multilabel(gold, pred);
  EXPECT_EQ(r.micro_f1, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
}

TEST(F1, OneExtraLabel) {
  const Corpus gold = one({Technique::Doubt});
  const EvalReport r = f1_multilabel(gold, {{{"1", 1}, {Technique::Doubt, Technique::Slogans}}});
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 0u);
  EXPECT_DOUBLE_EQ(r.micro_f1, 2.0 / 3.0);
  // Doubt scores 1, Slogans 0, the rest are excluded.
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.5);
  EXPECT_FALSE(r.per_label[index_of(Technique::RedHerring)].in_macro);
}

TEST(F1, EmptyPredictionsScoreZero) {
  const EvalReport r = f1_multilabel(one({Technique::Doubt}), {});
  EXPECT_EQ(r.micro_f1, 0.0);
  EXPECT_EQ(r.macro_f1, 0.0);
}

TEST(F1, NothingToCountIsZero) {
  const EvalReport r = f1_multilabel(one({}), {});
  EXPECT_EQ(r.micro_f1, 0.0);
  EXPECT_EQ(r.macro_f1, 0.0);
}

TEST(F1, UnknownPredictionIdIsAnError) {
  EXPECT_THROW(f1_multilabel(one({}), {{{"2", 1}, {}}}), ValidationError);
}

TEST(F1, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    const auto f = testkit::random_label_fixture(rng);
    const EvalReport r = f1_multilabel(f.gold, f.pred);
    const auto o = testkit::oracle_f1(f.gold_names, f.pred_names, testkit::technique_names());
    ASSERT_EQ(r.micro_f1, o.micro) << "instance " << i;
    ASSERT_EQ(r.macro_f1, o.macro) << "instance " << i;
    for (Technique t : all_techniques()) {
      ASSERT_EQ(r.per_label[index_of(t)].f1, o.per_label.at(std::string(canonical_name(t))));
    }
  }
}

TEST(F1, PermutationInvariant) {
  std::mt19937_64 rng(7);
  const auto f = testkit::random_label_fixture(rng);
  std::vector<Paragraph> ps(f.gold.begin(), f.gold.end());
  std::shuffle(ps.begin(), ps.end(), rng);
  const Corpus shuffled(ps);
  const EvalReport a = f1_multilabel(f.gold, f.pred);
  const EvalReport b = f1_multilabel(shuffled, f.pred);
  EXPECT_EQ(a.micro_f1, b.micro_f1);
  EXPECT_EQ(a.macro_f1, b.macro_f1);
}

TEST(F1, ReportJsonRoundTrip) {
  std::mt19937_64 rng(3);
  const auto f = testkit::random_label_fixture(rng);
  EvalReport r = f1_multilabel(f.gold, f.pred);
  r.training_set = "+BT";
  r.language = "fr";
  const EvalReport back = eval_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.micro_f1, r.micro_f1);
  EXPECT_EQ(back.training_set, "+BT");
  for (std::size_t i = 0; i < kTechniqueCount; ++i) EXPECT_EQ(back.per_label[i].f1, r.per_label[i].f1);
  std::ostringstream tsv;
  write_per_label_tsv(r, tsv);
  const std::string text = tsv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 24);
}

// ---------------------------------------------------------------------------
// BLEU

TEST(Bleu, IdentityIsExactlyHundred) {
  const std::vector<BleuPair> pairs = {{"a b c d e", "a b c d e"}, {"the quick brown fox.", "the quick brown fox."}};
  const BleuScore s = bleu_corpus(pairs);
  for (double b : s.bleu) EXPECT_EQ(b, 100.0);
}

TEST(Bleu, ClippedPrecisionExample) {
  // Hand count: 1-grams 5/7 (the clipped to 2), 2-grams 3/6, 3-grams 1/5,
  // 4-grams 0/4; hypothesis longer than reference so BP = 1.
  const std::vector<BleuPair> pairs = {{"the cat sat on the mat", "the cat the cat on the mat"}};
  const BleuScore s = bleu_corpus(pairs);
  EXPECT_EQ(s.matches, (std::vector<std::size_t>{5, 3, 1, 0}));
  EXPECT_EQ(s.totals, (std::vector<std::size_t>{7, 6, 5, 4}));
  EXPECT_EQ(s.brevity_penalty, 1.0);
  EXPECT_NEAR(s.bleu[0], 71.4285714286, 1e-6);
  EXPECT_NEAR(s.bleu[1], 59.7614304667, 1e-6);
  EXPECT_NEAR(s.bleu[2], 41.4913266683, 1e-6);
  EXPECT_EQ(s.bleu[3], 0.0);
  EXPECT_EQ(s.zero_precision, (std::vector<bool>{false, false, false, true}));
}

TEST(Bleu, BrevityPenalty) {
  const std::vector<BleuPair> pairs = {{"a b c d e f", "a b c"}};
  const BleuScore s = bleu_corpus(pairs);
  EXPECT_NEAR(s.brevity_penalty, 0.36787944117144233, 1e-15);
  EXPECT_NEAR(s.bleu[2], 36.787944117144233, 1e-9);
  EXPECT_EQ(s.bleu[3], 0.0);
}

TEST(Bleu, ReorderInvariant) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> w(0, 6), len(1, 12), np(1, 8);
  for (int c = 0; c < 50; ++c) {
    std::vector<BleuPair> pairs;
    for (int i = np(rng); i > 0; --i) {
      BleuPair p;
      for (int k = len(rng); k > 0; --k) p.reference += "w" + std::to_string(w(rng)) + " ";
      for (int k = len(rng); k > 0; --k) p.hypothesis += "w" + std::to_string(w(rng)) + " ";
      pairs.push_back(p);
    }
    const BleuScore a = bleu_corpus(pairs);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const BleuScore b = bleu_corpus(pairs);
    EXPECT_EQ(a.bleu, b.bleu);
  }
}

TEST(Bleu, EmptyInputIsAnError) {
  EXPECT_THROW(bleu_corpus(std::vector<BleuPair>{}), ValidationError);
}

TEST(Bleu, ByPairWithIdentityMock) {
  const CorpusMap gold = testkit::recipe_fixture();
  const Corpus all = testkit::merge(gold);
  MockBackend b(MockMode::identity());
  const AugmentResult r = augment_all(all, b, 1, false, true, false);
  const BleuReport rep = bleu_by_pair(r.ledger, all, r.corpus);
  ASSERT_FALSE(rep.groups.empty());
  for (const auto& g : rep.groups) EXPECT_EQ(g.score.bleu.back(), 100.0) << g.name();
  for (const auto& [lang, avg] : rep.language_average) EXPECT_EQ(avg, 100.0);
  std::ostringstream tsv;
  write_bleu_tsv(rep, tsv);
  EXPECT_NE(tsv.str().find("en2fr2en\t100.00\t100.00\t100.00\t100.00\n"), std::string::npos);
}

TEST(Bleu, LanguageAverageIsUnweightedMean) {
  Corpus orig;
  orig.add(testkit::make_paragraph("1", 1, Language::en, "one two three four five"));
  orig.add(testkit::make_paragraph("2", 1, Language::en, "six seven eight nine ten"));
  Corpus para;
  AugmentationLedger ledger;
  auto add = [&](const char* article, Language pivot, const char* text) {
    Paragraph p = testkit::make_paragraph("", 1, Language::en, text);
    p.id = back_translated_id({article, 1}, Language::en, pivot);
    p.provenance = Provenance::back_translated(pivot, {article, 1});
    para.add(p);
    ledger.records.push_back({{article, 1}, Pipeline::BackTranslation, {Language::en, pivot, Language::en}, p.id});
  };
  add("1", Language::fr, "one two three four five");
  add("2", Language::ru, "completely different words here now");
  const BleuReport rep = bleu_by_pair(ledger, orig, para);
  EXPECT_EQ(rep.language_average.at(Language::en), 50.0);
}

TEST(Bleu, OrphanParaphraseIsAnError) {
  Corpus orig;
  orig.add(testkit::make_paragraph("1", 1, Language::en, "x y"));
  Corpus para;
  Paragraph p = testkit::make_paragraph("1~en2fr2en", 1, Language::en, "x y");
  p.provenance = Provenance::back_translated(Language::fr, {"1", 1});
  para.add(p);
  EXPECT_THROW(bleu_by_pair({}, orig, para), ValidationError);
}
