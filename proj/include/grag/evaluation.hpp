#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grag/generation.hpp"

namespace grag {

class Engine;

enum class Country { IT, CH, Both };
enum class Language { IT, EN };

std::string_view to_string(Country c);
std::string_view to_string(Language l);
std::optional<Country> country_from_string(std::string_view s);
std::optional<Language> language_from_string(std::string_view s);
/// "it" / "en"
std::string language_tag(Language l);

struct QaRecord {
  std::string id;
  std::string question_it;
  std::string question_en;
  std::string expected;
  Country country = Country::Both;

  const std::string& question(Language l) const {
    return l == Language::IT ? question_it : question_en;
  }
};

struct QaDataset {
  std::vector<QaRecord> records;
  std::size_t count(Country c) const;
  const QaRecord* find(std::string_view id) const;
};

/// One JSON object per line. Errors carry the offending line number.
QaDataset load_qa_dataset(const std::filesystem::path& path);
QaDataset parse_qa_dataset(std::string_view jsonl);

// Benchmark runs -------------------------------------------------------------

enum class RunMode { rag, ablation };
std::string_view to_string(RunMode m);
std::optional<RunMode> run_mode_from_string(std::string_view s);

struct RunRecord {
  std::string record_id;
  Language language = Language::IT;
  RunMode mode = RunMode::rag;
  bool ok = true;
  Answer answer;  // valid when ok
  std::string error_code;
  std::string error_message;
  bool retryable = false;
};

struct RunOptions {
  /// Stop after this many newly answered records (used to interrupt runs).
  std::optional<std::size_t> max_new_records;
};

struct RunSummary {
  std::size_t answered = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// Answers every record not already present in `run_file`, appending one
/// line per record. A torn final line from an interrupted run is discarded.
RunSummary run_benchmark(const QaDataset& dataset, const Engine& engine, Language language,
                         RunMode mode, const std::filesystem::path& run_file,
                         const RunOptions& options = {});

std::vector<RunRecord> load_run_file(const std::filesystem::path& path);
std::string run_record_to_json(const RunRecord& r);

// Human judgments --------------------------------------------------------------

struct Judgment {
  std::string record_id;
  Language language = Language::IT;
  std::string judge_id;
  double faithfulness = 0.0;
  double answer_relevance = 0.0;
  double context_relevance = 0.0;
  double overall = 0.0;
};

/// Scores in [0, 1]; overall may be 1 only when all three metrics are 1.
void validate(const Judgment& j);

std::vector<Judgment> load_judgments(const std::filesystem::path& path);
std::vector<Judgment> parse_judgments(std::string_view jsonl);

enum class LanguageGroup { IT, EN, All };
enum class CountryGroup { IT, CH, Both, All };
std::string_view to_string(LanguageGroup g);
std::string_view to_string(CountryGroup g);

struct AggregateCell {
  LanguageGroup language = LanguageGroup::All;
  CountryGroup country = CountryGroup::All;
  std::optional<double> mean;    // percentage; empty when n == 0
  std::optional<double> stderr_; // percentage
  std::size_t n = 0;             // judged question-language pairs
  std::size_t judges = 0;

  friend bool operator==(const AggregateCell&, const AggregateCell&) = default;
};

/// Rows IT, EN, All by columns IT, CH, Both, All.
struct AggregateTable {
  std::array<std::array<AggregateCell, 4>, 3> cells;

  const AggregateCell& at(LanguageGroup l, CountryGroup c) const {
    return cells[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)];
  }
  friend bool operator==(const AggregateTable&, const AggregateTable&) = default;
};

/// Pair score = mean over judges of overall. Cell mean = mean of pair scores
/// x 100. Cell stderr = sample std of per-judge cell means / sqrt(judges)
/// x 100 (0 with a single judge). Margins are computed from the union of
/// pairs, never from cell means.
AggregateTable aggregate(const std::vector<Judgment>& judgments, const QaDataset& dataset);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};
MeanSd mean_sd(const std::vector<double>& xs);

struct RunStatistics {
  MeanSd latency_ms;
  MeanSd chat_calls;
  MeanSd embedding_calls;
  MeanSd embedded_texts;
  std::size_t records = 0;
  std::size_t failures = 0;
};

RunStatistics run_statistics(const std::vector<RunRecord>& run);

struct Report {
  std::string text;
  std::string table_json;
};

Report render_report(const AggregateTable& table, const RunStatistics& stats);

/// Reads the table back from render_report's table_json.
AggregateTable parse_report_table(std::string_view json);

}  // namespace grag
