#include "grag/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "grag/error.hpp"
#include "grag/pipeline.hpp"
#include "grag/text.hpp"

namespace grag {

using nlohmann::json;

std::string_view to_string(Country c) {
  switch (c) {
    case Country::IT: return "IT";
    case Country::CH: return "CH";
    case Country::Both: return "Both";
  }
  return "";
}

std::string_view to_string(Language l) { return l == Language::IT ? "IT" : "EN"; }

std::optional<Country> country_from_string(std::string_view s) {
  if (s == "IT") return Country::IT;
  if (s == "CH") return Country::CH;
  if (s == "Both") return Country::Both;
  return std::nullopt;
}

std::optional<Language> language_from_string(std::string_view s) {
  const std::string lower = text::to_lower_ascii(s);
  if (lower == "it") return Language::IT;
  if (lower == "en") return Language::EN;
  return std::nullopt;
}

std::string language_tag(Language l) { return l == Language::IT ? "it" : "en"; }

std::string_view to_string(RunMode m) { return m == RunMode::rag ? "rag" : "ablation"; }

std::optional<RunMode> run_mode_from_string(std::string_view s) {
  if (s == "rag") return RunMode::rag;
  if (s == "ablation") return RunMode::ablation;
  return std::nullopt;
}

std::string_view to_string(LanguageGroup g) {
  switch (g) {
    case LanguageGroup::IT: return "IT";
    case LanguageGroup::EN: return "EN";
    case LanguageGroup::All: return "All";
  }
  return "";
}

std::string_view to_string(CountryGroup g) {
  switch (g) {
    case CountryGroup::IT: return "IT";
    case CountryGroup::CH: return "CH";
    case CountryGroup::Both: return "Both";
    case CountryGroup::All: return "All";
  }
  return "";
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename Fn>
void for_each_line(std::string_view data, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    const bool terminated = nl != std::string_view::npos;
    if (!terminated) nl = data.size();
    ++line_no;
    const std::string_view line = data.substr(pos, nl - pos);
    pos = nl + 1;
    fn(line, line_no, terminated);
  }
}

json parse_object(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw RecordError(ErrorCode::dataset, line_no, e.what());
  }
  if (!j.is_object()) throw RecordError(ErrorCode::dataset, line_no, "expected an object");
  return j;
}

std::string field(const json& j, const char* key, std::size_t line_no) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw RecordError(ErrorCode::dataset, line_no, std::string("missing field '") + key + "'");
  }
  return it->get<std::string>();
}

double score_field(const json& j, const char* key, std::size_t line_no) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw RecordError(ErrorCode::dataset, line_no, std::string("missing score '") + key + "'");
  }
  return it->get<double>();
}

}  // namespace

std::size_t QaDataset::count(Country c) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.country == c ? 1 : 0;
  return n;
}

const QaRecord* QaDataset::find(std::string_view id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

QaDataset parse_qa_dataset(std::string_view jsonl) {
  QaDataset ds;
  std::set<std::string> ids;
  for_each_line(jsonl, [&](std::string_view line, std::size_t line_no, bool) {
    if (text::trim(line).empty()) return;
    const json j = parse_object(line, line_no);
    QaRecord r;
    r.id = field(j, "id", line_no);
    r.question_it = field(j, "question_it", line_no);
    r.question_en = field(j, "question_en", line_no);
    r.expected = field(j, "expected", line_no);
    const std::string country = field(j, "country", line_no);
    const auto c = country_from_string(country);
    if (!c) throw RecordError(ErrorCode::dataset, line_no, "bad country value '" + country + "'");
    r.country = *c;
    if (!ids.insert(r.id).second) {
      throw RecordError(ErrorCode::dataset, line_no, "duplicate id '" + r.id + "'");
    }
    ds.records.push_back(std::move(r));
  });
  return ds;
}

QaDataset load_qa_dataset(const std::filesystem::path& path) { return parse_qa_dataset(read_file(path)); }

// ---------------------------------------------------------------------------
// Runs

std::string run_record_to_json(const RunRecord& r) {
  json j = {{"record_id", r.record_id},
            {"language", std::string(to_string(r.language))},
            {"mode", std::string(to_string(r.mode))},
            {"ok", r.ok}};
  if (r.ok) {
    const Diagnostics& d = r.answer.diagnostics;
    j["answer"] = {{"text", r.answer.text},
                   {"citations", r.answer.citations},
                   {"language", r.answer.language},
                   {"empty_context", r.answer.empty_context},
                   {"diagnostics",
                    {{"llm_calls", d.llm_calls},
                     {"embedding_calls", d.embedding_calls},
                     {"embedded_texts", d.embedded_texts},
                     {"wall_time_ms", d.wall_time_ms},
                     {"dropped_citations", d.dropped_citations}}}};
  } else {
    j["error"] = {{"code", r.error_code}, {"message", r.error_message}, {"retryable", r.retryable}};
  }
  return j.dump();
}

namespace {

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  r.record_id = j.at("record_id").get<std::string>();
  r.language = language_from_string(j.at("language").get<std::string>()).value();
  r.mode = run_mode_from_string(j.at("mode").get<std::string>()).value();
  r.ok = j.at("ok").get<bool>();
  if (r.ok) {
    const auto& a = j.at("answer");
    r.answer.text = a.at("text").get<std::string>();
    r.answer.citations = a.at("citations").get<std::vector<std::string>>();
    r.answer.language = a.at("language").get<std::string>();
    r.answer.empty_context = a.at("empty_context").get<bool>();
    const auto& d = a.at("diagnostics");
    r.answer.diagnostics.llm_calls = d.at("llm_calls").get<std::size_t>();
    r.answer.diagnostics.embedding_calls = d.at("embedding_calls").get<std::size_t>();
    r.answer.diagnostics.embedded_texts = d.at("embedded_texts").get<std::size_t>();
    r.answer.diagnostics.wall_time_ms = d.at("wall_time_ms").get<double>();
    r.answer.diagnostics.dropped_citations = d.value("dropped_citations", std::size_t{0});
  } else {
    const auto& e = j.at("error");
    r.error_code = e.at("code").get<std::string>();
    r.error_message = e.at("message").get<std::string>();
    r.retryable = e.at("retryable").get<bool>();
  }
  return r;
}

// Reads a run file; a final line without a newline that fails to parse is
// the residue of an interrupted write and is reported via `torn_at`.
std::vector<RunRecord> read_run(const std::string& data, std::optional<std::size_t>* torn_at) {
  std::vector<RunRecord> out;
  std::size_t offset = 0;
  for_each_line(data, [&](std::string_view line, std::size_t line_no, bool terminated) {
    const std::size_t line_start = offset;
    offset += line.size() + (terminated ? 1 : 0);
    if (text::trim(line).empty()) return;
    try {
      out.push_back(run_record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      if (!terminated && torn_at) {
        *torn_at = line_start;
        return;
      }
      throw RecordError(ErrorCode::corrupt_record, line_no, e.what());
    }
  });
  return out;
}

}  // namespace

std::vector<RunRecord> load_run_file(const std::filesystem::path& path) {
  std::optional<std::size_t> torn;
  return read_run(read_file(path), &torn);
}

RunSummary run_benchmark(const QaDataset& dataset, const Engine& engine, Language language, RunMode mode,
                         const std::filesystem::path& run_file, const RunOptions& options) {
  std::set<std::string> done;
  if (std::filesystem::exists(run_file)) {
    std::string data = read_file(run_file);
    std::optional<std::size_t> torn;
    for (const auto& r : read_run(data, &torn)) done.insert(r.record_id);
    if (torn) std::filesystem::resize_file(run_file, *torn);
  }

  std::ofstream out(run_file, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::io, "cannot write " + run_file.string());

  RunSummary summary;
  const std::string tag = language_tag(language);
  for (const auto& rec : dataset.records) {
    if (done.count(rec.id)) {
      ++summary.skipped;
      continue;
    }
    if (options.max_new_records && summary.answered + summary.failed >= *options.max_new_records) break;
    RunRecord r;
    r.record_id = rec.id;
    r.language = language;
    r.mode = mode;
    try {
      r.answer = mode == RunMode::rag ? engine.ask({rec.question(language), tag, UserMetadata{}})
                                      : engine.ask_llm_only(rec.question(language), tag);
      ++summary.answered;
    } catch (const Error& e) {
      r.ok = false;
      r.error_code = std::string(to_string(e.code()));
      r.error_message = e.what();
      r.retryable = e.retryable();
      ++summary.failed;
    }
    out << run_record_to_json(r) << '\n';
    out.flush();
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Judgments

void validate(const Judgment& j) {
  for (double s : {j.faithfulness, j.answer_relevance, j.context_relevance, j.overall}) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::dataset, "judgment scores must lie in [0, 1]");
  }
  if (j.overall == 1.0 &&
      (j.faithfulness != 1.0 || j.answer_relevance != 1.0 || j.context_relevance != 1.0)) {
    throw Error(ErrorCode::dataset,
                "overall may be 1 only when every metric is 1 (record " + j.record_id + ")");
  }
}

std::vector<Judgment> parse_judgments(std::string_view jsonl) {
  std::vector<Judgment> out;
  std::set<std::tuple<std::string, Language, std::string>> seen;
  for_each_line(jsonl, [&](std::string_view line, std::size_t line_no, bool) {
    if (text::trim(line).empty()) return;
    const json j = parse_object(line, line_no);
    Judgment g;
    g.record_id = field(j, "record_id", line_no);
    const auto lang = language_from_string(field(j, "language", line_no));
    if (!lang) throw RecordError(ErrorCode::dataset, line_no, "bad language value");
    g.language = *lang;
    g.judge_id = field(j, "judge_id", line_no);
    g.faithfulness = score_field(j, "faithfulness", line_no);
    g.answer_relevance = score_field(j, "answer_relevance", line_no);
    g.context_relevance = score_field(j, "context_relevance", line_no);
    g.overall = score_field(j, "overall", line_no);
    try {
      validate(g);
    } catch (const Error& e) {
      throw RecordError(ErrorCode::dataset, line_no, e.what());
    }
    if (!seen.emplace(g.record_id, g.language, g.judge_id).second) {
      throw RecordError(ErrorCode::dataset, line_no, "duplicate judgment");
    }
    out.push_back(std::move(g));
  });
  return out;
}

std::vector<Judgment> load_judgments(const std::filesystem::path& path) {
  return parse_judgments(read_file(path));
}

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

AggregateTable aggregate(const std::vector<Judgment>& judgments, const QaDataset& dataset) {
  struct Scored {
    Country country;
    Language language;
    std::string judge;
    double overall;
    std::string record;
  };
  std::vector<Scored> rows;
  for (const auto& j : judgments) {
    const QaRecord* rec = dataset.find(j.record_id);
    if (!rec) throw Error(ErrorCode::dataset, "judgment for unknown record '" + j.record_id + "'");
    rows.push_back({rec->country, j.language, j.judge_id, j.overall, j.record_id});
  }

  AggregateTable table;
  constexpr LanguageGroup kLangs[] = {LanguageGroup::IT, LanguageGroup::EN, LanguageGroup::All};
  constexpr CountryGroup kCountries[] = {CountryGroup::IT, CountryGroup::CH, CountryGroup::Both,
                                         CountryGroup::All};
  for (auto lg : kLangs) {
    for (auto cg : kCountries) {
      const auto in_cell = [&](const Scored& s) {
        const bool lang_ok = lg == LanguageGroup::All ||
                             (lg == LanguageGroup::IT) == (s.language == Language::IT);
        const bool country_ok = cg == CountryGroup::All ||
                                static_cast<int>(cg) == static_cast<int>(s.country);
        return lang_ok && country_ok;
      };
      // pair -> judge overall scores; judge -> scores
      std::map<std::pair<std::string, Language>, std::vector<double>> pairs;
      std::map<std::string, std::vector<double>> judges;
      for (const auto& s : rows) {
        if (!in_cell(s)) continue;
        pairs[{s.record, s.language}].push_back(s.overall);
        judges[s.judge].push_back(s.overall);
      }
      AggregateCell& cell = table.cells[static_cast<std::size_t>(lg)][static_cast<std::size_t>(cg)];
      cell.language = lg;
      cell.country = cg;
      cell.n = pairs.size();
      cell.judges = judges.size();
      if (pairs.empty()) continue;
      std::vector<double> pair_scores;
      for (const auto& [key, scores] : pairs) pair_scores.push_back(mean_sd(scores).mean);
      cell.mean = mean_sd(pair_scores).mean * 100.0;
      std::vector<double> judge_means;
      for (const auto& [judge, scores] : judges) judge_means.push_back(mean_sd(scores).mean);
      cell.stderr_ = judge_means.size() > 1
                         ? mean_sd(judge_means).sd / std::sqrt(static_cast<double>(judge_means.size())) * 100.0
                         : 0.0;
    }
  }
  return table;
}

RunStatistics run_statistics(const std::vector<RunRecord>& run) {
  RunStatistics s;
  std::vector<double> latency, chat, embed, texts;
  for (const auto& r : run) {
    ++s.records;
    if (!r.ok) {
      ++s.failures;
      continue;
    }
    const auto& d = r.answer.diagnostics;
    latency.push_back(d.wall_time_ms);
    chat.push_back(static_cast<double>(d.llm_calls));
    embed.push_back(static_cast<double>(d.embedding_calls));
    texts.push_back(static_cast<double>(d.embedded_texts));
  }
  s.latency_ms = mean_sd(latency);
  s.chat_calls = mean_sd(chat);
  s.embedding_calls = mean_sd(embed);
  s.embedded_texts = mean_sd(texts);
  return s;
}

namespace {

constexpr const char* kConvention =
    "mean of per-question scores (judge-averaged) x 100; +/- is the standard deviation of per-judge "
    "group means divided by sqrt(number of judges)";

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  // Width in code points so the ± sign does not skew columns.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80 ? 1 : 0;
  if (cps < width) s.append(width - cps, ' ');
  return s;
}

std::string stat_line(const char* label, const MeanSd& m, const char* unit) {
  if (m.n == 0) return std::string(label) + ": no data\n";
  return std::string(label) + ": " + fmt("%.2f", m.mean) + " ± " + fmt("%.2f", m.sd) + unit +
         " (n=" + std::to_string(m.n) + ")\n";
}

json mean_sd_json(const MeanSd& m) {
  if (m.n == 0) return {{"n", 0}, {"mean", nullptr}, {"sd", nullptr}};
  return {{"n", m.n}, {"mean", m.mean}, {"sd", m.sd}};
}

}  // namespace

Report render_report(const AggregateTable& table, const RunStatistics& stats) {
  Report report;
  std::string& t = report.text;
  t += "Answer validity by answer language and country context (%)\n";
  t += std::string("Convention: ") + kConvention + "\n\n";
  constexpr std::size_t kWidth = 22;
  t += pad("Language", 10);
  for (const char* c : {"IT", "CH", "Both", "All"}) t += pad(c, kWidth);
  t += '\n';
  for (const auto& row : table.cells) {
    t += pad(std::string(to_string(row[0].language)), 10);
    for (const auto& cell : row) {
      std::string s = cell.mean ? fmt("%.1f", *cell.mean) + " ± " + fmt("%.1f", *cell.stderr_) : "n/a";
      s += " (" + std::to_string(cell.n) + ")";
      t += pad(s, kWidth);
    }
    while (!t.empty() && t.back() == ' ') t.pop_back();
    t += '\n';
  }
  t += '\n';
  t += "Run: " + std::to_string(stats.records) + " records, " + std::to_string(stats.failures) +
       " failures\n";
  t += stat_line("Latency", stats.latency_ms, " ms per question");
  t += stat_line("Chat calls", stats.chat_calls, " per question");
  t += stat_line("Embedding calls", stats.embedding_calls, " batches per question");
  t += stat_line("Embedded texts", stats.embedded_texts, " per question");

  json cells = json::array();
  for (const auto& row : table.cells) {
    for (const auto& cell : row) {
      cells.push_back({{"language", std::string(to_string(cell.language))},
                       {"country", std::string(to_string(cell.country))},
                       {"mean", cell.mean ? json(*cell.mean) : json(nullptr)},
                       {"stderr", cell.stderr_ ? json(*cell.stderr_) : json(nullptr)},
                       {"n", cell.n},
                       {"judges", cell.judges}});
    }
  }
  const json out = {{"convention", kConvention},
                    {"cells", cells},
                    {"run",
                     {{"records", stats.records},
                      {"failures", stats.failures},
                      {"latency_ms", mean_sd_json(stats.latency_ms)},
                      {"chat_calls", mean_sd_json(stats.chat_calls)},
                      {"embedding_calls", mean_sd_json(stats.embedding_calls)},
                      {"embedded_texts", mean_sd_json(stats.embedded_texts)}}}};
  report.table_json = out.dump(2) + "\n";
  return report;
}

AggregateTable parse_report_table(std::string_view data) {
  const json j = json::parse(data);
  AggregateTable table;
  const auto lang = [](const std::string& s) {
    return s == "IT" ? LanguageGroup::IT : s == "EN" ? LanguageGroup::EN : LanguageGroup::All;
  };
  const auto country = [](const std::string& s) {
    return s == "IT" ? CountryGroup::IT : s == "CH" ? CountryGroup::CH
           : s == "Both" ? CountryGroup::Both : CountryGroup::All;
  };
  const auto& cells = j.at("cells");
  if (cells.size() != 12) throw Error(ErrorCode::corrupt_record, "report table must have 12 cells");
  for (const auto& c : cells) {
    AggregateCell cell;
    cell.language = lang(c.at("language").get<std::string>());
    cell.country = country(c.at("country").get<std::string>());
    if (!c.at("mean").is_null()) cell.mean = c["mean"].get<double>();
    if (!c.at("stderr").is_null()) cell.stderr_ = c["stderr"].get<double>();
    cell.n = c.at("n").get<std::size_t>();
    cell.judges = c.at("judges").get<std::size_t>();
    table.cells[static_cast<std::size_t>(cell.language)][static_cast<std::size_t>(cell.country)] = cell;
  }
  return table;
}

}  // namespace grag
