// persuade: command-line driver for the augmentation / training / ensembling
// / analysis pipeline. Every run writes a manifest next to its output.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "persuade/persuade.hpp"

namespace fs = std::filesystem;
using namespace persuade;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string upper_key(std::string s) {
  for (char& c : s) c = std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(c)) : '_';
  return s;
}

// Per-run bookkeeping: declared inputs and outputs, hashed into the manifest.
class Run {
 public:
  void input(const fs::path& p) {
    if (!fs::exists(p)) throw DataError("input not found: " + p.string());
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      for (const auto& f : files) inputs_.insert(f.lexically_normal());
    } else {
      inputs_.insert(p.lexically_normal());
    }
  }
  void output(const fs::path& p) { outputs_.insert(p.lexically_normal()); }

  std::ofstream open(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    output(p);
    return out;
  }

  void write_manifest(const CLI::App& sub, std::uint64_t seed, const fs::path& where) const {
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const CLI::Option* opt : sub.get_options()) {
      if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
      std::vector<std::string> values = opt->results();
      if (values.empty() && !opt->get_default_str().empty()) values.push_back(opt->get_default_str());
      if (values.empty()) continue;
      config[opt->get_name()] = values.size() == 1 ? nlohmann::ordered_json(values[0]) : nlohmann::ordered_json(values);
    }
    nlohmann::ordered_json m;
    m["tool"] = "persuade";
    m["version"] = std::string(kVersion);
    m["subcommand"] = sub.get_name();
    m["config"] = config;
    m["config_sha256"] = sha256_hex(config.dump());
    m["seed"] = seed;
    auto digests = [](const std::set<fs::path>& paths) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& p : paths) {
        if (!fs::is_regular_file(p)) continue;
        arr.push_back({{"path", p.generic_string()}, {"sha256", sha256_hex(slurp(p))}});
      }
      return arr;
    };
    m["inputs"] = digests(inputs_);
    m["outputs"] = digests(outputs_);
    if (where.has_parent_path()) fs::create_directories(where.parent_path());
    std::ofstream out(where, std::ios::binary);
    if (!out) throw DataError("cannot write manifest " + where.string());
    out << m.dump(2) << '\n';
  }

 private:
  std::set<fs::path> inputs_;
  std::set<fs::path> outputs_;
};

fs::path manifest_path(const fs::path& out) {
  if (fs::is_directory(out)) return out / "manifest.json";
  return fs::path(out.string() + ".manifest.json");
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path stem = p;
  stem.replace_extension();
  return fs::path(stem.string() + suffix);
}

Corpus load_corpora(Run& run, const std::vector<std::string>& paths) {
  Corpus all;
  for (const auto& p : paths) {
    run.input(p);
    all.append(read_jsonl(fs::path(p)));
  }
  return all;
}

std::vector<Language> parse_languages(const std::string& list) {
  std::vector<Language> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_language(item));
  }
  return out;
}

std::unique_ptr<TranslatorBackend> make_backend(const std::string& spec, std::uint64_t seed) {
  if (spec.rfind("mock:", 0) == 0) return std::make_unique<MockBackend>(parse_mock_mode(spec.substr(5)), seed);
  if (spec == "mock") return std::make_unique<MockBackend>(MockMode::tagging(), seed);
  if (spec.rfind("bridge:", 0) == 0) return std::make_unique<BridgeBackend>(spec.substr(7));
  throw ValidationError("backend must be mock[:mode] or bridge:<command>, got '" + spec + "'");
}

std::map<std::string, ScoreMatrix> load_member_scores(Run& run, const EnsembleConfig& cfg, const Corpus* corpus) {
  std::map<std::string, ScoreMatrix> out;
  for (const auto& m : cfg.members) {
    if (m.scores.empty()) throw ValidationError("member '" + m.id + "' has no scores file");
    run.input(m.scores);
    out[m.id] = read_scores(m.scores, corpus);
  }
  return out;
}

std::vector<ScoreMatrix> in_member_order(const EnsembleConfig& cfg, const std::map<std::string, ScoreMatrix>& by_id) {
  std::vector<ScoreMatrix> mats;
  for (const auto& m : cfg.members) mats.push_back(by_id.at(m.id));
  return mats;
}

std::string fmt(double v, int digits = 6) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persuasion technique detection pipeline", "persuade"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string(kVersion));

  std::uint64_t seed = 42;
  unsigned jobs = 1;
  app.add_option("--seed", seed, "Random seed")->envname("PERSUADE_SEED");
  app.add_option("--jobs", jobs, "Worker threads")->envname("PERSUADE_JOBS")->check(CLI::Range(1u, 256u));

  Run run;
  fs::path out_path;
  std::function<void()> action;

  // Options get an environment override PERSUADE_<SUBCOMMAND>_<OPTION>.
  auto env = [](CLI::App* sub, CLI::Option* opt) {
    std::string name = opt->get_name();
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    opt->envname("PERSUADE_" + upper_key(sub->get_name()) + "_" + upper_key(name));
    return opt;
  };
  auto add_out = [&](CLI::App* sub, const std::string& desc) {
    env(sub, sub->add_option("--out", out_path, desc)->required());
  };

  // import ------------------------------------------------------------------
  auto* import = app.add_subcommand("import", "Convert task-format labels plus article texts to JSON lines");
  std::string imp_labels, imp_articles, imp_lang;
  env(import, import->add_option("--labels", imp_labels, "Task labels TSV")->required());
  env(import, import->add_option("--articles", imp_articles, "Directory of article<id>.txt files")->required());
  env(import, import->add_option("--lang", imp_lang, "Language code")->required());
  add_out(import, "Output JSON-lines corpus");
  import->callback([&] {
    action = [&] {
      run.input(imp_labels);
      run.input(imp_articles);
      const Corpus c = import_task_labels(imp_labels, imp_articles, parse_language(imp_lang)).sorted();
      auto out = run.open(out_path);
      write_jsonl(c, out);
      std::cout << c.size() << " paragraphs\n";
    };
  });

  // augment -----------------------------------------------------------------
  auto* augment = app.add_subcommand("augment", "Translate and back-translate gold data, add span-only instances");
  std::vector<std::string> aug_gold;
  std::string aug_backend = "mock:tagging";
  std::string aug_ledger;
  bool no_t = false, no_bt = false, no_span = false;
  env(augment, augment->add_option("--gold", aug_gold, "Gold JSON-lines corpora")->required());
  env(augment, augment->add_option("--backend", aug_backend, "mock[:identity|tagging|lossy:k] or bridge:<command>"));
  env(augment, augment->add_option("--ledger", aug_ledger, "Ledger output (default <out>.ledger.jsonl)"));
  env(augment, augment->add_flag("--no-translations", no_t, "Skip translations"));
  env(augment, augment->add_flag("--no-back-translations", no_bt, "Skip back-translations"));
  env(augment, augment->add_flag("--no-spans", no_span, "Skip span-only instances"));
  add_out(augment, "Output augmentation pool (JSON lines)");
  augment->callback([&] {
    action = [&] {
      const Corpus gold = load_corpora(run, aug_gold);
      auto backend = make_backend(aug_backend, seed);
      const AugmentResult r = augment_all(gold, *backend, jobs, !no_t, !no_bt, !no_span);
      {
        auto out = run.open(out_path);
        write_jsonl(r.corpus, out);
      }
      const fs::path ledger_path = aug_ledger.empty() ? with_suffix(out_path, ".ledger.jsonl") : fs::path(aug_ledger);
      auto lo = run.open(ledger_path);
      write_ledger(r.ledger, lo);
      std::cout << r.corpus.size() << " pool paragraphs, " << r.ledger.records.size() << " ledger records, "
                << r.ledger.failures.size() << " failures, " << r.ledger.skipped_uncovered << " uncovered, "
                << r.ledger.skipped_capability << " outside backend capability\n";
      for (const auto& f : r.ledger.failures) std::cerr << "failed: " << f.origin.str() << ": " << f.message << '\n';
    };
  });

  // assemble ----------------------------------------------------------------
  auto* assemble_cmd = app.add_subcommand("assemble", "Build per-language training sets for a recipe");
  std::vector<std::string> asm_gold, asm_pool;
  std::string asm_recipe = "gold", asm_family;
  std::size_t asm_low = 0;
  env(assemble_cmd, assemble_cmd->add_option("--gold", asm_gold, "Gold JSON-lines corpora")->required());
  env(assemble_cmd, assemble_cmd->add_option("--pool", asm_pool, "Augmentation pool corpora"));
  env(assemble_cmd, assemble_cmd->add_option("--recipe", asm_recipe, "gold, +T, +BT, +BT-sl, +T+BT, +T+BT-sl, +span"));
  env(assemble_cmd, assemble_cmd->add_option("--low-frequency", asm_low, "Keep only additions with a technique rarer than this in gold (0 = off)"));
  env(assemble_cmd, assemble_cmd->add_option("--family-group", asm_family, "Comma-separated languages merged into one training set"));
  add_out(assemble_cmd, "Output directory, one <lang>.jsonl per language");
  assemble_cmd->callback([&] {
    action = [&] {
      DatasetRecipe recipe;
      recipe.name = parse_recipe(asm_recipe);
      if (asm_low > 0) recipe.low_frequency_only = asm_low;
      if (!asm_family.empty()) recipe.family_group = parse_languages(asm_family);
      const CorpusMap gold = split_by_language(load_corpora(run, asm_gold));
      std::vector<Corpus> pool;
      for (const auto& p : asm_pool) pool.push_back(load_corpora(run, {p}));
      const CorpusMap sets = assemble(recipe, gold, pool);
      fs::create_directories(out_path);
      for (const auto& [lang, corpus] : sets) {
        auto out = run.open(out_path / (std::string(to_string(lang)) + ".jsonl"));
        write_jsonl(corpus, out);
        std::cout << to_string(lang) << '\t' << corpus.size() << '\n';
      }
    };
  });

  // train -------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train the one-vs-rest n-gram baseline");
  std::vector<std::string> tr_train;
  std::string tr_dev, tr_select = "micro";
  TrainConfig tcfg;
  unsigned hash_bits = 18;
  env(train_cmd, train_cmd->add_option("--train", tr_train, "Training corpora")->required());
  env(train_cmd, train_cmd->add_option("--dev", tr_dev, "Development corpus")->required());
  env(train_cmd, train_cmd->add_option("--lr", tcfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber));
  env(train_cmd, train_cmd->add_option("--epochs", tcfg.epochs, "Epochs")->check(CLI::Range(1, 100000)));
  env(train_cmd, train_cmd->add_option("--batch", tcfg.batch_size, "Mini-batch size")->check(CLI::Range(1, 1 << 20)));
  env(train_cmd, train_cmd->add_option("--selection", tr_select, "Model selection metric")
                     ->check(CLI::IsMember({"micro", "macro"})));
  env(train_cmd, train_cmd->add_option("--ngram-min", tcfg.features.ngram_min, "Smallest character n-gram"));
  env(train_cmd, train_cmd->add_option("--ngram-max", tcfg.features.ngram_max, "Largest character n-gram"));
  env(train_cmd, train_cmd->add_option("--hash-bits", hash_bits, "log2 of the feature space")->check(CLI::Range(4u, 28u)));
  add_out(train_cmd, "Output model (JSON)");
  train_cmd->callback([&] {
    action = [&] {
      tcfg.features.hash_dim = std::size_t{1} << hash_bits;
      tcfg.selection = tr_select == "macro" ? SelectionMetric::Macro : SelectionMetric::Micro;
      tcfg.seed = seed;
      tcfg.jobs = jobs;
      const Corpus train_c = load_corpora(run, tr_train);
      const Corpus dev_c = load_corpora(run, {tr_dev});
      const OvrModel model = train(train_c, dev_c, tcfg);
      save_model(model, out_path);
      run.output(out_path);
      std::cout << "best epoch " << model.metadata.best_epoch << ", dev F1 " << fmt(model.metadata.best_dev_f1)
                << '\n';
    };
  });

  // predict -----------------------------------------------------------------
  auto* predict_cmd = app.add_subcommand("predict", "Score a corpus with a trained model");
  std::string pr_model, pr_corpus;
  env(predict_cmd, predict_cmd->add_option("--model", pr_model, "Model JSON")->required());
  env(predict_cmd, predict_cmd->add_option("--corpus", pr_corpus, "Corpus to score")->required());
  add_out(predict_cmd, "Output score TSV");
  predict_cmd->callback([&] {
    action = [&] {
      run.input(pr_model);
      const OvrModel model = load_model(pr_model);
      const Corpus c = load_corpora(run, {pr_corpus});
      auto out = run.open(out_path);
      write_scores(predict_scores(model, c), out);
    };
  });

  // tune --------------------------------------------------------------------
  auto* tune_cmd = app.add_subcommand("tune", "Tune decision thresholds on a dev set");
  std::string tu_scores, tu_dev, tu_config, tu_candidates;
  env(tune_cmd, tune_cmd->add_option("--dev", tu_dev, "Development corpus")->required());
  auto* tu_scores_opt = env(tune_cmd, tune_cmd->add_option("--scores", tu_scores, "Score TSV of a single model"));
  auto* tu_config_opt = env(tune_cmd, tune_cmd->add_option("--config", tu_config, "Ensemble config to tune"));
  env(tune_cmd, tune_cmd->add_option("--candidates", tu_candidates,
                                     "Candidate member sets, e.g. 'a,b;a,b,c' (per-language selection)"))
      ->needs(tu_config_opt);
  tu_scores_opt->excludes(tu_config_opt);
  env(tune_cmd, tune_cmd->add_option("--out", out_path, "Output: JSON (scores), INI (config) or directory (candidates)"));
  tune_cmd->callback([&] {
    action = [&] {
      if (tu_scores.empty() && tu_config.empty()) throw CLI::RequiredError("--scores or --config");
      const Corpus dev = load_corpora(run, {tu_dev});
      if (!tu_scores.empty()) {
        run.input(tu_scores);
        const ThresholdChoice c = tune_threshold(read_scores(fs::path(tu_scores), nullptr), dev);
        std::cout << "theta " << c.threshold.str() << "\tmicro_f1 " << fmt(c.f1) << '\n';
        if (!out_path.empty()) {
          nlohmann::ordered_json j;
          j["threshold"] = c.threshold.value();
          j["micro_f1"] = c.f1;
          auto grid = nlohmann::ordered_json::object();
          const auto thetas = threshold_grid();
          for (std::size_t i = 0; i < thetas.size(); ++i) grid[thetas[i].str()] = c.f1_by_grid[i];
          j["f1_by_threshold"] = grid;
          auto out = run.open(out_path);
          out << j.dump(2) << '\n';
        }
        return;
      }
      run.input(tu_config);
      EnsembleConfig cfg = read_ensemble_config(tu_config);
      const auto scores = load_member_scores(run, cfg, nullptr);
      if (tu_candidates.empty()) {
        const auto mats = in_member_order(cfg, scores);
        cfg = tune_member_thresholds(std::move(cfg), mats, dev);
        const VotingChoice vc = tune_voting_threshold(cfg, mats, dev);
        cfg.voting_threshold = vc.voting_threshold;
        std::cout << "voting_threshold " << vc.voting_threshold << "\tmicro_f1 " << fmt(vc.f1) << '\n';
        if (!out_path.empty()) {
          auto out = run.open(out_path);
          write_ensemble_config(cfg, out, fs::absolute(out_path).parent_path());
        }
        return;
      }
      std::vector<std::vector<std::string>> candidates;
      std::stringstream ss(tu_candidates);
      std::string set;
      while (std::getline(ss, set, ';')) {
        std::vector<std::string> ids;
        std::stringstream ms(set);
        std::string id;
        while (std::getline(ms, id, ',')) {
          if (!id.empty()) ids.push_back(id);
        }
        if (!ids.empty()) candidates.push_back(std::move(ids));
      }
      for (auto& m : cfg.members) m.scores = fs::absolute(m.scores);
      const auto chosen = select_ensemble(candidates, cfg, scores, dev);
      if (out_path.empty()) throw CLI::RequiredError("--out (directory for per-language configs)");
      fs::create_directories(out_path);
      for (const auto& [lang, sel] : chosen) {
        std::cout << to_string(lang) << '\t';
        for (std::size_t i = 0; i < sel.config.members.size(); ++i) std::cout << (i ? "," : "") << sel.config.members[i].id;
        std::cout << "\tv=" << sel.config.voting_threshold << "\tmicro_f1 " << fmt(sel.f1) << '\n';
        auto out = run.open(out_path / (std::string(to_string(lang)) + ".ini"));
        write_ensemble_config(sel.config, out, fs::absolute(out_path));
      }
    };
  });

  // ensemble ----------------------------------------------------------------
  auto* ens_cmd = app.add_subcommand("ensemble", "Vote-sum ensemble prediction in task label format");
  std::string en_config, en_corpus;
  env(ens_cmd, ens_cmd->add_option("--config", en_config, "Ensemble config (INI)")->required());
  env(ens_cmd, ens_cmd->add_option("--corpus", en_corpus, "Corpus the score files cover")->required());
  add_out(ens_cmd, "Output task-format predictions");
  ens_cmd->callback([&] {
    action = [&] {
      run.input(en_config);
      const EnsembleConfig cfg = read_ensemble_config(en_config);
      const Corpus c = load_corpora(run, {en_corpus});
      const auto mats = in_member_order(cfg, load_member_scores(run, cfg, &c));
      const PredictionSet pred = ensemble_predict(cfg, mats, c);
      std::vector<LabeledId> rows;
      for (const Paragraph& p : c.sorted()) {
        auto it = pred.find(p.id);
        rows.push_back({p.id, it == pred.end() ? LabelSet{} : it->second});
      }
      auto out = run.open(out_path);
      write_task_labels(rows, out);
    };
  });

  // evaluate ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "Micro/macro F1 of task-format predictions");
  std::string ev_gold, ev_pred, ev_per_label, ev_ts, ev_lang;
  env(eval_cmd, eval_cmd->add_option("--gold", ev_gold, "Gold corpus (JSON lines)")->required());
  env(eval_cmd, eval_cmd->add_option("--pred", ev_pred, "Predictions (task TSV)")->required());
  env(eval_cmd, eval_cmd->add_option("--per-label", ev_per_label, "Per-label TSV (default <out>.per_label.tsv)"));
  env(eval_cmd, eval_cmd->add_option("--training-set", ev_ts, "Run tag: training set name"));
  env(eval_cmd, eval_cmd->add_option("--lang", ev_lang, "Run tag: test language"));
  add_out(eval_cmd, "Output report (JSON)");
  eval_cmd->callback([&] {
    action = [&] {
      const Corpus gold = load_corpora(run, {ev_gold});
      run.input(ev_pred);
      EvalReport r = f1_multilabel(gold, predictions_from(read_task_labels(fs::path(ev_pred))));
      r.training_set = ev_ts;
      if (!ev_lang.empty()) r.language = std::string(to_string(parse_language(ev_lang)));
      {
        auto out = run.open(out_path);
        out << to_json(r).dump(2) << '\n';
      }
      auto pl = run.open(ev_per_label.empty() ? with_suffix(out_path, ".per_label.tsv") : fs::path(ev_per_label));
      write_per_label_tsv(r, pl);
      std::cout << "micro_f1 " << fmt(r.micro_f1) << "\tmacro_f1 " << fmt(r.macro_f1) << '\n';
    };
  });

  // bleu --------------------------------------------------------------------
  auto* bleu_cmd = app.add_subcommand("bleu", "BLEU of back-translations against their originals");
  std::string bl_ledger;
  std::vector<std::string> bl_orig, bl_para;
  std::size_t bl_max_n = 4;
  env(bleu_cmd, bleu_cmd->add_option("--ledger", bl_ledger, "Augmentation ledger")->required());
  env(bleu_cmd, bleu_cmd->add_option("--originals", bl_orig, "Gold corpora")->required());
  env(bleu_cmd, bleu_cmd->add_option("--paraphrases", bl_para, "Augmentation pool corpora")->required());
  env(bleu_cmd, bleu_cmd->add_option("--max-n", bl_max_n, "Largest n-gram order")->check(CLI::Range(1, 8)));
  add_out(bleu_cmd, "Output TSV");
  bleu_cmd->callback([&] {
    action = [&] {
      run.input(bl_ledger);
      std::ifstream lin(bl_ledger, std::ios::binary);
      if (!lin) throw DataError("cannot open " + bl_ledger);
      const AugmentationLedger ledger = read_ledger(lin, bl_ledger);
      const BleuReport rep = bleu_by_pair(ledger, load_corpora(run, bl_orig), load_corpora(run, bl_para), bl_max_n);
      auto out = run.open(out_path);
      write_bleu_tsv(rep, out);
    };
  });

  // analyze -----------------------------------------------------------------
  auto* an_cmd = app.add_subcommand("analyze", "Regression and sequential ANOVA over a directory of run reports");
  std::string an_runs, an_formula = "label + trainingSet + testLang + trainingSet:label + testLang:trainingSet";
  std::string an_sets, an_langs;
  env(an_cmd, an_cmd->add_option("--runs", an_runs, "Directory of evaluation reports (*.json)")->required());
  env(an_cmd, an_cmd->add_option("--formula", an_formula, "Model terms"));
  env(an_cmd, an_cmd->add_option("--training-sets", an_sets, "Comma-separated training sets (default: all found)"));
  env(an_cmd, an_cmd->add_option("--languages", an_langs, "Comma-separated test languages (default: all found)"));
  add_out(an_cmd, "Output directory");
  an_cmd->callback([&] {
    action = [&] {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(an_runs)) {
        if (e.is_regular_file() && e.path().extension() == ".json" &&
            e.path().filename().string().find(".manifest.") == std::string::npos) {
          files.push_back(e.path());
        }
      }
      std::sort(files.begin(), files.end());
      std::map<std::pair<std::string, std::string>, EvalReport> runs;
      for (const auto& f : files) {
        run.input(f);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(slurp(f));
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(f.string(), 1, e.what());
        }
        EvalReport r = eval_report_from_json(j);
        if (r.training_set.empty() || r.language.empty()) {
          throw ValidationError(f.string() + ": report lacks training_set/language tags");
        }
        if (!runs.emplace(std::make_pair(r.training_set, r.language), r).second) {
          throw DuplicateIdError(f.string() + ": duplicate run (" + r.training_set + ", " + r.language + ")");
        }
      }
      auto split = [](const std::string& s) {
        std::vector<std::string> v;
        std::stringstream ss(s);
        std::string x;
        while (std::getline(ss, x, ',')) {
          if (!x.empty()) v.push_back(x);
        }
        return v;
      };
      const RegressionTable table = build_table(runs, split(an_sets), split(an_langs));
      const OlsFit fit = fit_ols(table, ModelSpec::parse(an_formula));
      const AnovaTable anova = anova_sequential(fit);
      fs::create_directories(out_path);
      {
        auto out = run.open(out_path / "anova.tsv");
        write_anova_tsv(anova, out);
      }
      {
        auto out = run.open(out_path / "anova.json");
        out << to_json(anova).dump(2) << '\n';
      }
      const bool has_effects = std::any_of(fit.spec.terms.begin(), fit.spec.terms.end(), [](const Term& t) {
        return t.size() == 2 && std::count(t.begin(), t.end(), Factor::TrainingSet) &&
               std::count(t.begin(), t.end(), Factor::Label);
      });
      if (has_effects) {
        auto out = run.open(out_path / "effects.csv");
        write_effects_csv(effects(fit), out);
      }
      std::cout << table.size() << " rows, R2 " << fmt(anova.r_squared, 4) << ", adj R2 "
                << fmt(anova.adj_r_squared, 4) << '\n';
    };
  });

  // humaneval ---------------------------------------------------------------
  auto* he_cmd = app.add_subcommand("humaneval", "Aggregate human ratings of augmented text");
  std::string he_ratings;
  env(he_cmd, he_cmd->add_option("--ratings", he_ratings, "Ratings CSV")->required());
  add_out(he_cmd, "Output CSV");
  he_cmd->callback([&] {
    action = [&] {
      run.input(he_ratings);
      std::ifstream in(he_ratings, std::ios::binary);
      if (!in) throw DataError("cannot open " + he_ratings);
      const auto cells = aggregate_ratings(read_ratings_csv(in, he_ratings));
      auto out = run.open(out_path);
      write_ratings_csv(cells, out);
    };
  });

  // export ------------------------------------------------------------------
  auto* ex_cmd = app.add_subcommand("export", "Export the taxonomy or a corpus in task format");
  std::string ex_what, ex_format = "tsv", ex_corpus;
  ex_cmd->add_option("what", ex_what, "taxonomy | labels")->required()->check(CLI::IsMember({"taxonomy", "labels"}));
  env(ex_cmd, ex_cmd->add_option("--format", ex_format, "Output format")->check(CLI::IsMember({"tsv"})));
  env(ex_cmd, ex_cmd->add_option("--corpus", ex_corpus, "Corpus (for labels)"));
  add_out(ex_cmd, "Output file");
  ex_cmd->callback([&] {
    action = [&] {
      if (ex_what == "taxonomy") {
        auto out = run.open(out_path);
        export_taxonomy_tsv(out);
        return;
      }
      if (ex_corpus.empty()) throw CLI::RequiredError("--corpus");
      const Corpus c = load_corpora(run, {ex_corpus});
      auto out = run.open(out_path);
      write_task_labels(labels_of(c.sorted()), out);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    action();
    if (!out_path.empty()) run.write_manifest(*sub, seed, manifest_path(out_path));
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "persuade " << sub->get_name() << ": " << e.what() << '\n' << sub->help();
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "persuade " << sub->get_name() << ": " << e.what() << '\n';
    return kData;
  } catch (const BackendError& e) {
    std::cerr << "persuade " << sub->get_name() << ": translator backend: " << e.what() << '\n';
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "persuade " << sub->get_name() << ": malformed JSON: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "persuade " << sub->get_name() << ": " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "persuade " << sub->get_name() << ": internal error: " << e.what() << '\n';
    return kInternal;
  }
}
