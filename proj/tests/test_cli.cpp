#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/testing.hpp"

using namespace persuade;
namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path root;
  explicit Workdir(const std::string& name) : root(fs::temp_directory_path() / ("persuade_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workdir() { fs::remove_all(root); }
  std::string operator/(const std::string& rel) const { return (root / rel).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI with stdout and stderr captured; returns the exit code.
int cli(const std::string& args, std::string* output = nullptr) {
  const fs::path log = fs::temp_directory_path() / "persuade_cli_last.log";
  const std::string cmd = quote(PERSUADE_CLI) + " " + args + " >" + quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Writes one gold file per training language and returns the paths.
std::vector<std::string> write_gold(const Workdir& w) {
  fs::create_directories(w.root / "gold");
  std::vector<std::string> paths;
  for (const auto& [lang, c] : testkit::recipe_fixture(8)) {
    const std::string p = w / ("gold/" + std::string(to_string(lang)) + ".jsonl");
    write_jsonl(c, fs::path(p));
    paths.push_back(p);
  }
  return paths;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += quote(x) + " ";
  return s;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// The whole pipeline on the fixture corpus, mock translation backend.
void run_pipeline(const Workdir& w) {
  const auto gold = write_gold(w);
  const std::string en = w / "gold/en.jsonl";
  std::string log;
  auto ok = [&](const std::string& args) {
    ASSERT_EQ(cli(args, &log), 0) << args << "\n" << log;
  };
  ok("augment --gold " + join(gold) + "--backend mock:lossy:3 --out " + quote(w / "pool.jsonl"));
  ok("assemble --gold " + join(gold) + "--pool " + quote(w / "pool.jsonl") + " --recipe +T+BT --out " +
     quote(w / "sets"));
  ok("train --train " + quote(w / "sets/en.jsonl") + " --dev " + quote(en) + " --epochs 3 --hash-bits 12 --out " +
     quote(w / "model.json"));
  ok("predict --model " + quote(w / "model.json") + " --corpus " + quote(en) + " --out " + quote(w / "scores.tsv"));
  ok("tune --scores " + quote(w / "scores.tsv") + " --dev " + quote(en) + " --out " + quote(w / "tune.json"));
  write_file(w / "ens.ini", "[ensemble]\nvoting_threshold = 1\n\n[member:base]\nscores = scores.tsv\n\n"
                            "[heuristic:q]\ntechnique = Doubt\nlanguage = en\nquestion_mark = true\n");
  ok("tune --config " + quote(w / "ens.ini") + " --dev " + quote(en) + " --out " + quote(w / "ens_tuned.ini"));
  ok("ensemble --config " + quote(w / "ens_tuned.ini") + " --corpus " + quote(en) + " --out " + quote(w / "pred.tsv"));
  fs::create_directories(w.root / "runs");
  for (const char* ts : {"gold", "+T+BT"}) {
    ok("evaluate --gold " + quote(en) + " --pred " + quote(w / "pred.tsv") + " --training-set " + ts +
       " --lang en --out " + quote(w / ("runs/" + std::string(ts) + "_en.json")));
  }
  ok("analyze --runs " + quote(w / "runs") + " --formula 'label + trainingSet + trainingSet:label' --out " + quote(w / "analysis"));
  ok("bleu --ledger " + quote(w / "pool.ledger.jsonl") + " --originals " + join(gold) + "--paraphrases " +
     quote(w / "pool.jsonl") + " --out " + quote(w / "bleu.tsv"));
  ok("export labels --corpus " + quote(en) + " --out " + quote(w / "labels.tsv"));
  write_file(w / "ratings.csv",
             "evaluation,target_language,source_language,technique,fluency,fidelity,surface_variability,"
             "human_produced,label_ok\n"
             "translation,ru,en,Doubt,4,,,1,1\nback_translation,en,fr,Doubt,3,4,2,,0\n");
  ok("humaneval --ratings " + quote(w / "ratings.csv") + " --out " + quote(w / "human.csv"));
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return files;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli("--no-such-flag"), 1);
  EXPECT_EQ(cli(""), 1);
  EXPECT_EQ(cli("train --dev x.jsonl"), 1);
  EXPECT_EQ(cli("tune --dev x.jsonl --scores a --config b"), 1);
}

TEST(Cli, HelpAndVersionExitZero) {
  std::string out;
  EXPECT_EQ(cli("--version", &out), 0);
  EXPECT_NE(out.find(std::string(kVersion)), std::string::npos);
  EXPECT_EQ(cli("train --help", &out), 0);
  EXPECT_NE(out.find("--epochs"), std::string::npos);
}

TEST(Cli, DataErrorsExitTwo) {
  Workdir w("data_errors");
  std::string out;
  EXPECT_EQ(cli("export labels --corpus " + quote(w / "missing.jsonl") + " --out " + quote(w / "x.tsv"), &out), 2)
      << out;
  write_file(w / "bad.jsonl", "{\"article_id\": \"1\"}\n");
  EXPECT_EQ(cli("export labels --corpus " + quote(w / "bad.jsonl") + " --out " + quote(w / "x.tsv"), &out), 2);
  EXPECT_NE(out.find(":1"), std::string::npos) << out;
  const auto gold = write_gold(w);
  EXPECT_EQ(cli("augment --gold " + join(gold) + "--backend bridge:false --out " + quote(w / "p.jsonl"), &out), 2)
      << out;
  EXPECT_FALSE(fs::exists(w / "x.tsv.manifest.json"));
}

TEST(Cli, TunePrintsChosenThreshold) {
  Workdir w("tune");
  Corpus dev;
  dev.add(testkit::make_paragraph("a", 1, Language::en, "x", {Technique::Doubt}));
  dev.add(testkit::make_paragraph("b", 1, Language::en, "y"));
  write_jsonl(dev, fs::path(w / "dev.jsonl"));
  ScoreMatrix s;
  s.ids = {{"a", 1}, {"b", 1}};
  s.rows.resize(2);
  s.rows[0][index_of(Technique::Doubt)] = 0.35;
  s.rows[1][index_of(Technique::Doubt)] = 0.25;
  {
    std::ofstream out(w / "s.tsv");
    write_scores(s, out);
  }
  std::string out;
  ASSERT_EQ(cli("tune --scores " + quote(w / "s.tsv") + " --dev " + quote(w / "dev.jsonl"), &out), 0) << out;
  EXPECT_EQ(out, "theta 0.3\tmicro_f1 1.000000\n");
}

TEST(Cli, SingleMemberEnsembleEqualsThresholdedScores) {
  Workdir w("single");
  std::mt19937_64 rng(12);
  const Corpus c = testkit::random_gold(rng, 30);
  write_jsonl(c, fs::path(w / "c.jsonl"));
  const ScoreMatrix s = testkit::random_scores(c, rng);
  {
    std::ofstream out(w / "s.tsv");
    write_scores(s, out);
  }
  write_file(w / "e.ini", "[member:only]\nscores = s.tsv\nthreshold.en = 0.4\n");
  std::string out;
  ASSERT_EQ(cli("ensemble --config " + quote(w / "e.ini") + " --corpus " + quote(w / "c.jsonl") + " --out " +
                         quote(w / "pred.tsv"),
                     &out),
            0)
      << out;
  std::vector<LabeledId> want;
  for (const auto& [id, labels] : apply_threshold(s, Threshold::from_tenths(4))) want.push_back({id, labels});
  std::ostringstream expected;
  write_task_labels(want, expected);
  EXPECT_EQ(slurp(w / "pred.tsv"), expected.str());
}

TEST(Cli, ManifestRecordsInputsOutputsAndConfig) {
  Workdir w("manifest");
  const auto gold = write_gold(w);
  ASSERT_EQ(cli("--seed 7 export labels --corpus " + quote(gold[0]) + " --out " + quote(w / "l.tsv")), 0);
  const auto m = nlohmann::json::parse(slurp(w / "l.tsv.manifest.json"));
  EXPECT_EQ(m.at("subcommand"), "export");
  EXPECT_EQ(m.at("seed"), 7);
  EXPECT_EQ(m.at("inputs").size(), 1u);
  EXPECT_EQ(m.at("outputs").at(0).at("sha256").get<std::string>().size(), 64u);
  EXPECT_EQ(m.at("config_sha256").get<std::string>().size(), 64u);
  EXPECT_EQ(m.at("tool"), "persuade");
}

TEST(Cli, EnvironmentSuppliesOptions) {
  Workdir w("env");
  const auto gold = write_gold(w);
  ::setenv("PERSUADE_EXPORT_CORPUS", gold[0].c_str(), 1);
  const int code = cli("export labels --out " + quote(w / "l.tsv"));
  ::unsetenv("PERSUADE_EXPORT_CORPUS");
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(w / "l.tsv"));
}

TEST(Cli, PipelineIsByteReproducible) {
  Workdir w("pipeline");
  run_pipeline(w);
  if (HasFatalFailure()) return;
  const auto first = snapshot(w.root);
  run_pipeline(w);
  if (HasFatalFailure()) return;
  const auto second = snapshot(w.root);
  ASSERT_EQ(first.size(), second.size());
  for (const auto& [name, bytes] : first) EXPECT_EQ(bytes, second.at(name)) << name;
  for (const char* f : {"pool.jsonl", "pool.ledger.jsonl", "sets/en.jsonl", "model.json", "scores.tsv", "tune.json",
                        "ens_tuned.ini", "pred.tsv", "runs/gold_en.json", "runs/gold_en.per_label.tsv",
                        "analysis/anova.tsv", "analysis/anova.json", "analysis/effects.csv", "bleu.tsv",
                        "labels.tsv", "human.csv", "model.json.manifest.json", "analysis/manifest.json"}) {
    EXPECT_TRUE(first.count(f)) << f;
  }
  EXPECT_EQ(first.at("analysis/effects.csv").rfind("training_set,technique,predicted_f1\n", 0), 0u);
}
