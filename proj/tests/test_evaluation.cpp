#include <doctest.h>

#include <cmath>
#include <fstream>

#include "grag/error.hpp"
#include "grag/evaluation.hpp"
#include "grag/pipeline.hpp"
#include "support/support.hpp"

using namespace grag;
using namespace grag::testing;

namespace {

std::size_t error_line(const std::function<void()>& f) {
  try {
    f();
  } catch (const RecordError& e) {
    return e.line();
  }
  return 0;
}

std::string record_line(const std::string& id, const std::string& country) {
  return R"({"id":")" + id + R"(","question_it":"Domanda )" + id + R"(?","question_en":"Question )" + id +
         R"(?","expected":"x","country":")" + country + "\"}\n";
}

Judgment judge(std::string record, Language lang, std::string judge_id, double overall) {
  const double metric = overall == 1.0 ? 1.0 : 0.5;
  return {std::move(record), lang, std::move(judge_id), metric, metric, metric, overall};
}

// A one-triple graph no question reaches, so every rag answer takes the
// no-result path. Questions containing "fail" raise a transport error.
struct RunFixture {
  MockChatProvider chat{[](std::string_view p) -> std::string {
    if (p.find("fail") != std::string_view::npos) throw Error(ErrorCode::transport, "connection reset");
    return "[]";
  }};
  MockEmbeddingProvider embedder{8};
  std::shared_ptr<KnowledgeGraph> graph = [this] {
    auto g = std::make_shared<KnowledgeGraph>();
    g->upsert_triple({"Heat pump", "Device", "Reduces", "Energy use", "Quantity", {}, ""});
    embed_graph(*g, embedder);
    return g;
  }();
  RetrievalParams params = [] {
    RetrievalParams p;
    p.t = 0.75;
    return p;
  }();
  Engine engine{graph, {chat, embedder}, params, frozen_clock()};
};

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("dataset parsing") {
    const auto ds = parse_qa_dataset(record_line("a", "IT") + "\n" + record_line("b", "CH") + record_line("c", "Both"));
    REQUIRE(ds.records.size() == 3);
    CHECK(ds.count(Country::IT) == 1);
    CHECK(ds.find("b")->country == Country::CH);
    CHECK(ds.find("c")->question(Language::EN) == "Question c?");
    CHECK(ds.find("zz") == nullptr);

    CHECK(error_line([] { parse_qa_dataset(record_line("a", "IT") + record_line("b", "FR")); }) == 2);
    CHECK(error_line([] { parse_qa_dataset(record_line("a", "IT") + "\n" + record_line("a", "CH")); }) == 3);
    CHECK(error_line([] { parse_qa_dataset(R"({"id":"a","question_it":"q","question_en":"q","country":"IT"})"); }) == 1);
    CHECK(error_line([] { parse_qa_dataset("[1,2]"); }) == 1);
    CHECK(error_line([] { parse_qa_dataset("{oops"); }) == 1);
  }

  TEST_CASE("synthetic dataset mix") {
    const auto ds = synthetic_dataset();
    CHECK(ds.records.size() == 101);
    CHECK(ds.count(Country::IT) == 25);
    CHECK(ds.count(Country::CH) == 25);
    CHECK(ds.count(Country::Both) == 51);
    CHECK(parse_qa_dataset(synthetic_dataset_jsonl()).records.size() == 101);
  }

  TEST_CASE("judgment validation") {
    CHECK_NOTHROW(validate(judge("a", Language::IT, "j", 1.0)));
    CHECK_NOTHROW(validate(judge("a", Language::IT, "j", 0.0)));
    Judgment j = judge("a", Language::IT, "j", 1.0);
    j.faithfulness = 0.9;
    CHECK_THROWS_AS(validate(j), Error);
    j = judge("a", Language::IT, "j", 1.5);
    CHECK_THROWS_AS(validate(j), Error);

    const std::string good =
        R"({"record_id":"a","language":"it","judge_id":"j1","faithfulness":1,"answer_relevance":1,"context_relevance":1,"overall":1})";
    CHECK(parse_judgments(good).size() == 1);
    CHECK(error_line([&] { parse_judgments(good + "\n" + good); }) == 2);
    CHECK(error_line([] {
            parse_judgments(R"({"record_id":"a","language":"de","judge_id":"j","faithfulness":1,"answer_relevance":1,"context_relevance":1,"overall":1})");
          }) == 1);
    CHECK(error_line([] {
            parse_judgments(R"({"record_id":"a","language":"it","judge_id":"j","faithfulness":0.5,"answer_relevance":1,"context_relevance":1,"overall":1})");
          }) == 1);
  }

  TEST_CASE("single judge: pair scores average into the cell") {
    const auto ds = parse_qa_dataset(record_line("a", "IT") + record_line("b", "IT"));
    const auto t = aggregate({judge("a", Language::IT, "j", 0.5), judge("b", Language::IT, "j", 1.0)}, ds);
    const auto& cell = t.at(LanguageGroup::IT, CountryGroup::IT);
    CHECK(*cell.mean == doctest::Approx(75.0).epsilon(1e-12));
    CHECK(*cell.stderr_ == 0.0);
    CHECK(cell.n == 2);
    CHECK(cell.judges == 1);
    CHECK_FALSE(t.at(LanguageGroup::EN, CountryGroup::IT).mean.has_value());
    CHECK(t.at(LanguageGroup::EN, CountryGroup::IT).n == 0);
    CHECK_FALSE(t.at(LanguageGroup::IT, CountryGroup::CH).mean.has_value());
    CHECK(*t.at(LanguageGroup::All, CountryGroup::All).mean == doctest::Approx(75.0).epsilon(1e-12));
  }

  TEST_CASE("several judges: hand-computed table") {
    // r1 IT, r2 CH, r3 Both.
    //   IT answers: r1 J1=1, J2=.5; r2 J1=0, J2=.5; r3 J1=.5
    //   EN answers: r1 J3=0
    const auto ds = parse_qa_dataset(record_line("r1", "IT") + record_line("r2", "CH") + record_line("r3", "Both"));
    const std::vector<Judgment> js = {
        judge("r1", Language::IT, "J1", 1.0), judge("r1", Language::IT, "J2", 0.5),
        judge("r2", Language::IT, "J1", 0.0), judge("r2", Language::IT, "J2", 0.5),
        judge("r3", Language::IT, "J1", 0.5), judge("r1", Language::EN, "J3", 0.0),
    };
    const auto t = aggregate(js, ds);
    const auto check = [&](LanguageGroup l, CountryGroup c, double mean, double se, std::size_t n, std::size_t judges) {
      const auto& cell = t.at(l, c);
      INFO(to_string(l) << "/" << to_string(c));
      REQUIRE(cell.mean.has_value());
      CHECK(*cell.mean == doctest::Approx(mean).epsilon(1e-12));
      CHECK(*cell.stderr_ == doctest::Approx(se).epsilon(1e-9));
      CHECK(cell.n == n);
      CHECK(cell.judges == judges);
    };
    // IT/IT: pair .75; judge means 1, .5 -> sd .3536 / sqrt 2 = .25
    check(LanguageGroup::IT, CountryGroup::IT, 75.0, 25.0, 1, 2);
    check(LanguageGroup::IT, CountryGroup::CH, 25.0, 25.0, 1, 2);
    check(LanguageGroup::IT, CountryGroup::Both, 50.0, 0.0, 1, 1);
    // IT/All: pairs .75 .25 .5; judge means J1 .5, J2 .5
    check(LanguageGroup::IT, CountryGroup::All, 50.0, 0.0, 3, 2);
    check(LanguageGroup::EN, CountryGroup::IT, 0.0, 0.0, 1, 1);
    // All/IT: pairs .75 and 0; judge means 1, .5, 0 -> sd .5 / sqrt 3
    check(LanguageGroup::All, CountryGroup::IT, 37.5, 50.0 / std::sqrt(3.0), 2, 3);
    // All/All: pairs .75 .25 .5 0; judge means .5 .5 0 -> sd sqrt(1/12) / sqrt 3 = 1/6
    check(LanguageGroup::All, CountryGroup::All, 37.5, 100.0 / 6.0, 4, 3);
    CHECK_FALSE(t.at(LanguageGroup::EN, CountryGroup::CH).mean.has_value());

    CHECK_THROWS_AS(aggregate({judge("nope", Language::IT, "J1", 0.0)}, ds), Error);
  }

  TEST_CASE("report text and JSON") {
    const auto ds = parse_qa_dataset(record_line("a", "IT") + record_line("b", "CH"));
    const auto t = aggregate({judge("a", Language::IT, "j", 1.0), judge("b", Language::IT, "j", 0.0)}, ds);
    RunStatistics stats;
    stats.records = 2;
    stats.chat_calls = mean_sd({2, 2});
    const Report r = render_report(t, stats);
    CHECK(r.text.find("Language  IT") != std::string::npos);
    CHECK(r.text.find("\nIT        100.0 ± 0.0 (1)") != std::string::npos);
    CHECK(r.text.find("\nEN        n/a (0)") != std::string::npos);
    CHECK(r.text.find("50.0 ± 0.0 (2)") != std::string::npos);
    CHECK(r.text.find("Chat calls: 2.00 ± 0.00 per question (n=2)") != std::string::npos);
    CHECK(r.text.find("Latency: no data") != std::string::npos);
    CHECK(parse_report_table(r.table_json) == t);
  }

  TEST_CASE("mean and sample deviation") {
    const auto m = mean_sd({2, 4, 4, 4, 5, 5, 7, 9});
    CHECK(m.mean == 5.0);
    CHECK(m.sd == doctest::Approx(std::sqrt(32.0 / 7.0)).epsilon(1e-15));
    CHECK(mean_sd({3}).sd == 0.0);
    CHECK(mean_sd({}).n == 0);
  }

  TEST_CASE("benchmark runs record answers, failures and resume") {
    RunFixture f;
    const auto ds = parse_qa_dataset(record_line("q1", "IT") + record_line("q2", "CH") + record_line("fail", "Both") +
                                     record_line("q4", "Both"));
    const auto dir = fresh_dir("run");
    const auto file = dir / "run.jsonl";

    RunOptions opts;
    opts.max_new_records = 2;
    auto s = run_benchmark(ds, f.engine, Language::IT, RunMode::rag, file, opts);
    CHECK(s.answered == 2);
    CHECK(s.failed == 0);
    CHECK(load_run_file(file).size() == 2);

    // An interrupted write leaves half a line behind.
    {
      std::ofstream out(file, std::ios::app | std::ios::binary);
      out << R"({"record_id":"fail","lang)";
    }
    s = run_benchmark(ds, f.engine, Language::IT, RunMode::rag, file);
    CHECK(s.skipped == 2);
    CHECK(s.answered == 1);
    CHECK(s.failed == 1);

    const auto run = load_run_file(file);
    REQUIRE(run.size() == 4);
    CHECK(run[0].record_id == "q1");
    CHECK(run[0].answer.empty_context);
    CHECK(run[0].answer.language == "it");
    CHECK(run[0].answer.diagnostics.llm_calls == 1);
    CHECK(run[2].record_id == "fail");
    CHECK_FALSE(run[2].ok);
    CHECK(run[2].error_code == "transport");
    CHECK(run[2].retryable);
    CHECK(run[3].record_id == "q4");

    s = run_benchmark(ds, f.engine, Language::IT, RunMode::rag, file);
    CHECK(s.skipped == 4);
    CHECK(s.answered == 0);

    const auto stats = run_statistics(run);
    CHECK(stats.records == 4);
    CHECK(stats.failures == 1);
    CHECK(stats.chat_calls.mean == 1.0);
    CHECK(stats.embedding_calls.mean == 1.0);

    testing::write_file(dir / "bad.jsonl", "{\"record_id\":1}\n");
    CHECK(error_line([&] { load_run_file(dir / "bad.jsonl"); }) == 1);
  }

  TEST_CASE("ablation runs skip retrieval") {
    RunFixture f;
    const auto ds = parse_qa_dataset(record_line("q1", "IT"));
    const auto file = fresh_dir("ablation") / "run.jsonl";
    run_benchmark(ds, f.engine, Language::EN, RunMode::ablation, file);
    const auto run = load_run_file(file);
    REQUIRE(run.size() == 1);
    CHECK(run[0].mode == RunMode::ablation);
    CHECK(run[0].language == Language::EN);
    CHECK(run[0].answer.diagnostics.llm_calls == 1);
    CHECK(run[0].answer.diagnostics.embedding_calls == 0);
    CHECK(run[0].answer.text == "[]");
  }
}
