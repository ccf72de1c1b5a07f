#pragma once

// Translation and back-translation augmentation with label transfer.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <future>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "persuade/corpus.hpp"
#include "persuade/error.hpp"
#include "persuade/taxonomy.hpp"
#include "persuade/text.hpp"

namespace persuade {

using Direction = std::pair<Language, Language>;

class TranslatorBackend {
 public:
  virtual ~TranslatorBackend() = default;

  // Directions this backend serves.
  virtual const std::set<Direction>& capability() const = 0;
  // Throws BackendError on failure.
  virtual std::string translate(const std::string& text, Language source, Language target) = 0;
  // Whether translate() may be called from several threads at once.
  virtual bool concurrent() const { return false; }

  bool serves(Language source, Language target) const {
    return capability().count({source, target}) != 0;
  }
};

// ---------------------------------------------------------------------------
// Mock backend

struct MockMode {
  enum class Kind { Tagging, Lossy, Identity };
  Kind kind = Kind::Identity;
  int k = 0;  // lossy only

  static MockMode tagging() { return {Kind::Tagging, 0}; }
  static MockMode identity() { return {Kind::Identity, 0}; }
  static MockMode lossy(int every) { return {Kind::Lossy, every}; }
};

inline std::string mock_translate(const std::string& text, Language source, Language target,
                                  MockMode mode, std::uint64_t /*seed*/ = 0) {
  switch (mode.kind) {
    case MockMode::Kind::Identity:
      return text;
    case MockMode::Kind::Tagging:
      return "⟦" + std::string(to_string(source)) + "→" + std::string(to_string(target)) +
             "⟧ " + text;
    case MockMode::Kind::Lossy: {
      if (mode.k < 2) throw ValidationError("lossy mock needs k >= 2");
      std::string out;
      const auto tokens = text::split_whitespace(text);
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if ((i + 1) % static_cast<std::size_t>(mode.k) == 0) continue;
        if (!out.empty()) out.push_back(' ');
        out += tokens[i];
      }
      return out;
    }
  }
  return text;
}

// "identity", "tagging" or "lossy:<k>".
inline MockMode parse_mock_mode(const std::string& spec) {
  if (spec == "identity") return MockMode::identity();
  if (spec == "tagging") return MockMode::tagging();
  if (spec.rfind("lossy:", 0) == 0) {
    int k = 0;
    try {
      k = std::stoi(spec.substr(6));
    } catch (const std::logic_error&) {
      throw ValidationError("bad lossy mock mode '" + spec + "'");
    }
    if (k < 2) throw ValidationError("lossy mock needs k >= 2");
    return MockMode::lossy(k);
  }
  throw ValidationError("unknown mock mode '" + spec + "'");
}

class MockBackend final : public TranslatorBackend {
 public:
  explicit MockBackend(MockMode mode = MockMode::identity(), std::uint64_t seed = 0)
      : mode_(mode), seed_(seed) {
    for (Language s : kAllLanguages) {
      for (Language t : kAllLanguages) {
        if (s != t) capability_.insert({s, t});
      }
    }
  }
  MockBackend(MockMode mode, std::uint64_t seed, std::set<Direction> capability)
      : mode_(mode), seed_(seed), capability_(std::move(capability)) {}

  const std::set<Direction>& capability() const override { return capability_; }
  std::string translate(const std::string& text, Language source, Language target) override {
    return mock_translate(text, source, target, mode_, seed_);
  }
  bool concurrent() const override { return true; }

 private:
  MockMode mode_;
  std::uint64_t seed_;
  std::set<Direction> capability_;
};

// ---------------------------------------------------------------------------
// Subprocess bridge: JSON lines over the child's stdin/stdout. The child
// first writes {"directions": [["en","fr"], ...]}; each request
// {"text","source","target"} gets one response line {"text"} or {"error"}.

class BridgeBackend final : public TranslatorBackend {
 public:
  explicit BridgeBackend(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw BackendError("pipe() failed");
    pid_ = fork();
    if (pid_ < 0) throw BackendError("fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    out_ = fdopen(to_child[1], "w");
    in_ = fdopen(from_child[0], "r");
    if (!out_ || !in_) throw BackendError("fdopen() failed");
    signal(SIGPIPE, SIG_IGN);

    const nlohmann::json hello = read_message();
    if (!hello.contains("directions")) throw BackendError("bridge handshake lacks 'directions'");
    for (const auto& d : hello.at("directions")) {
      capability_.insert({parse_language(d.at(0).get<std::string>()),
                          parse_language(d.at(1).get<std::string>())});
    }
  }

  BridgeBackend(const BridgeBackend&) = delete;
  BridgeBackend& operator=(const BridgeBackend&) = delete;

  ~BridgeBackend() override {
    if (out_) fclose(out_);
    if (in_) fclose(in_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  const std::set<Direction>& capability() const override { return capability_; }

  std::string translate(const std::string& text, Language source, Language target) override {
    const nlohmann::json req = {
        {"text", text}, {"source", to_string(source)}, {"target", to_string(target)}};
    const std::string line = req.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), out_) != line.size() || std::fflush(out_) != 0) {
      throw BackendError("bridge closed its input");
    }
    const nlohmann::json resp = read_message();
    if (resp.contains("error")) throw BackendError("bridge: " + resp.at("error").get<std::string>());
    if (!resp.contains("text")) throw BackendError("bridge response lacks 'text'");
    return resp.at("text").get<std::string>();
  }

 private:
  nlohmann::json read_message() {
    char* buf = nullptr;
    std::size_t cap = 0;
    const ssize_t n = getline(&buf, &cap, in_);
    std::string line = n > 0 ? std::string(buf, static_cast<std::size_t>(n)) : std::string();
    std::free(buf);
    if (n <= 0) throw BackendError("bridge process ended");
    try {
      return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("bridge sent malformed JSON: ") + e.what());
    }
  }

  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  FILE* in_ = nullptr;
  std::set<Direction> capability_;
};

// ---------------------------------------------------------------------------
// Ledger

enum class Pipeline : std::uint8_t { Translation, BackTranslation };

struct LedgerRecord {
  ParagraphId origin;
  Pipeline pipeline = Pipeline::Translation;
  std::vector<Language> path;  // [s, t] or [s, v, s]
  ParagraphId output;

  friend bool operator==(const LedgerRecord&, const LedgerRecord&) = default;
};

struct LedgerFailure {
  ParagraphId origin;
  std::string message;
};

struct AugmentationLedger {
  std::vector<LedgerRecord> records;
  std::vector<LedgerFailure> failures;
  std::size_t skipped_uncovered = 0;
  std::size_t skipped_capability = 0;

  void merge(const AugmentationLedger& o) {
    records.insert(records.end(), o.records.begin(), o.records.end());
    failures.insert(failures.end(), o.failures.begin(), o.failures.end());
    skipped_uncovered += o.skipped_uncovered;
    skipped_capability += o.skipped_capability;
  }

  const LedgerRecord* find_output(const ParagraphId& id) const {
    for (const LedgerRecord& r : records) {
      if (r.output == id) return &r;
    }
    return nullptr;
  }
};

inline nlohmann::ordered_json to_json(const LedgerRecord& r) {
  nlohmann::ordered_json j;
  j["origin"] = detail::id_to_json(r.origin);
  j["pipeline"] = r.pipeline == Pipeline::Translation ? "translation" : "back_translation";
  auto path = nlohmann::ordered_json::array();
  for (Language l : r.path) path.push_back(std::string(to_string(l)));
  j["path"] = std::move(path);
  j["output"] = detail::id_to_json(r.output);
  return j;
}

inline void write_ledger(const AugmentationLedger& ledger, std::ostream& out) {
  for (const LedgerRecord& r : ledger.records) out << to_json(r).dump() << '\n';
}

inline AugmentationLedger read_ledger(std::istream& in, const std::string& source = "<stream>") {
  AugmentationLedger ledger;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LedgerRecord r;
      r.origin = detail::id_from_json(j.at("origin"));
      const std::string kind = j.at("pipeline").get<std::string>();
      if (kind == "translation") {
        r.pipeline = Pipeline::Translation;
      } else if (kind == "back_translation") {
        r.pipeline = Pipeline::BackTranslation;
      } else {
        throw ParseError(source, lineno, "unknown pipeline '" + kind + "'");
      }
      for (const auto& l : j.at("path")) r.path.push_back(parse_language(l.get<std::string>()));
      const std::size_t want = r.pipeline == Pipeline::Translation ? 2 : 3;
      if (r.path.size() != want) throw ParseError(source, lineno, "bad path length");
      r.output = detail::id_from_json(j.at("output"));
      ledger.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return ledger;
}

// ---------------------------------------------------------------------------
// Augmentation

inline ParagraphId translated_id(const ParagraphId& origin, Language source, Language target) {
  return {origin.article_id + "~" + std::string(to_string(source)) + "2" +
              std::string(to_string(target)),
          origin.paragraph_index};
}

inline ParagraphId back_translated_id(const ParagraphId& origin, Language source, Language pivot) {
  const std::string s(to_string(source));
  return {origin.article_id + "~" + s + "2" + std::string(to_string(pivot)) + "2" + s,
          origin.paragraph_index};
}

struct AugmentResult {
  Corpus corpus;
  AugmentationLedger ledger;
};

namespace detail {

struct Job {
  const Paragraph* source;
  std::vector<Language> path;
};

// Runs each job's hop chain. Output order equals job order.
inline std::vector<std::variant<std::string, std::string>> run_jobs(const std::vector<Job>& jobs,
                                                                   TranslatorBackend& backend,
                                                                   unsigned parallelism) {
  using Outcome = std::variant<std::string, std::string>;  // index 0 text, 1 error
  auto run_one = [&backend](const Job& job) -> Outcome {
    try {
      std::string t = job.source->text;
      for (std::size_t i = 0; i + 1 < job.path.size(); ++i) {
        t = backend.translate(t, job.path[i], job.path[i + 1]);
        if (t.empty()) throw BackendError("empty translation");
      }
      return Outcome(std::in_place_index<0>, std::move(t));
    } catch (const std::exception& e) {
      return Outcome(std::in_place_index<1>, e.what());
    }
  };
  std::vector<Outcome> out(jobs.size());
  if (parallelism <= 1 || !backend.concurrent() || jobs.size() < 2) {
    for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = run_one(jobs[i]);
    return out;
  }
  const std::size_t chunk = (jobs.size() + parallelism - 1) / parallelism;
  std::vector<std::future<void>> tasks;
  for (std::size_t lo = 0; lo < jobs.size(); lo += chunk) {
    const std::size_t hi = std::min(jobs.size(), lo + chunk);
    tasks.push_back(std::async(std::launch::async, [&, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) out[i] = run_one(jobs[i]);
    }));
  }
  for (auto& t : tasks) t.get();
  return out;
}

inline AugmentResult finish(const std::vector<Job>& jobs,
                            const std::vector<std::variant<std::string, std::string>>& outcomes,
                            Pipeline pipeline, AugmentationLedger ledger) {
  AugmentResult result;
  result.ledger = std::move(ledger);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Paragraph& src = *jobs[i].source;
    if (outcomes[i].index() == 1) {
      result.ledger.failures.push_back({src.id, std::get<1>(outcomes[i])});
      continue;
    }
    Paragraph p;
    const auto& path = jobs[i].path;
    if (pipeline == Pipeline::Translation) {
      p.id = translated_id(src.id, path[0], path[1]);
      p.language = path[1];
      p.provenance = Provenance::translated(path[0], src.id);
    } else {
      p.id = back_translated_id(src.id, path[0], path[1]);
      p.language = path[0];
      p.provenance = Provenance::back_translated(path[1], src.id);
    }
    p.text = std::get<0>(outcomes[i]);
    p.labels = src.labels;
    result.ledger.records.push_back({src.id, pipeline, path, p.id});
    result.corpus.add(std::move(p));
  }
  if (!jobs.empty() && result.ledger.records.empty()) {
    throw BackendError("every paragraph failed; first error: " + result.ledger.failures.front().message);
  }
  return result;
}

}  // namespace detail

// Uncovered pairs are skipped and counted; labels are copied, spans dropped.
inline AugmentResult translate_corpus(const Corpus& corpus, Language target, TranslatorBackend& backend,
                                      unsigned parallelism = 1) {
  AugmentationLedger ledger;
  std::vector<detail::Job> jobs;
  for (const Paragraph& p : corpus) {
    if (p.language == target || !is_covered(CoverageKind::Translation, p.language, target)) {
      ++ledger.skipped_uncovered;
      continue;
    }
    if (!backend.serves(p.language, target)) {
      ++ledger.skipped_capability;
      continue;
    }
    jobs.push_back({&p, {p.language, target}});
  }
  auto outcomes = detail::run_jobs(jobs, backend, parallelism);
  return detail::finish(jobs, outcomes, Pipeline::Translation, std::move(ledger));
}

inline AugmentResult back_translate_corpus(const Corpus& corpus, Language pivot,
                                           TranslatorBackend& backend, unsigned parallelism = 1) {
  AugmentationLedger ledger;
  std::vector<detail::Job> jobs;
  for (const Paragraph& p : corpus) {
    if (p.language == pivot || !is_covered(CoverageKind::BackTranslation, p.language, pivot)) {
      ++ledger.skipped_uncovered;
      continue;
    }
    if (!backend.serves(p.language, pivot) || !backend.serves(pivot, p.language)) {
      ++ledger.skipped_capability;
      continue;
    }
    jobs.push_back({&p, {p.language, pivot, p.language}});
  }
  auto outcomes = detail::run_jobs(jobs, backend, parallelism);
  return detail::finish(jobs, outcomes, Pipeline::BackTranslation, std::move(ledger));
}

// Every covered translation target, every covered pivot, plus span-only
// instances: the full augmentation pool for a gold corpus.
inline AugmentResult augment_all(const Corpus& gold, TranslatorBackend& backend, unsigned parallelism = 1,
                                 bool translations = true, bool back_translations = true,
                                 bool spans = true) {
  AugmentResult all;
  auto absorb = [&all](AugmentResult r) {
    all.corpus.append(r.corpus);
    all.ledger.merge(r.ledger);
  };
  for (Language lang : kAllLanguages) {
    const Corpus others = gold.filter([lang](const Paragraph& p) { return p.language != lang; });
    if (others.empty()) continue;
    if (translations) absorb(translate_corpus(others, lang, backend, parallelism));
    if (back_translations) absorb(back_translate_corpus(others, lang, backend, parallelism));
  }
  if (spans) all.corpus.append(span_instances(gold));
  all.corpus = all.corpus.sorted();
  return all;
}

}  // namespace persuade
