// Command-line front end: ingest, extract, build-kg, kg-stats, ask, serve,
// eval run|aggregate, ablate.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "grag/config.hpp"
#include "grag/corpus.hpp"
#include "grag/error.hpp"
#include "grag/evaluation.hpp"
#include "grag/knowledge_graph.hpp"
#include "grag/pipeline.hpp"
#include "grag/service.hpp"
#include "grag/triples.hpp"

namespace {

using nlohmann::json;

grag::ServiceConfig config_from(const std::string& path) {
  if (path.empty()) return grag::parse_config("", grag::process_env());
  return grag::load_config(path);
}

// Mock runs are replayable byte for byte, so their timings are frozen.
grag::Clock clock_for(const grag::ServiceConfig& c) {
  return c.provider.kind == "mock" ? grag::frozen_clock() : grag::steady_clock();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw grag::Error(grag::ErrorCode::io, "cannot write " + path);
  out << text;
}

grag::Service* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based retrieval-augmented question answering"};
  app.require_subcommand(1);

  // ingest
  std::string corpus, chunks_out;
  grag::ChunkingParams chunking;
  auto* ingest = app.add_subcommand("ingest", "Clean and chunk a corpus manifest");
  ingest->add_option("--corpus", corpus, "Manifest (JSON lines)")->required();
  ingest->add_option("--chunk-size", chunking.chunk_size, "Maximum chunk length in characters");
  ingest->add_option("--chunk-overlap", chunking.chunk_overlap, "Maximum overlap between chunks");
  ingest->add_option("--out", chunks_out, "Chunks file")->required();

  // extract
  std::string config_path, chunks_in, triples_path;
  auto* extract = app.add_subcommand("extract", "Extract triples from a chunks file");
  extract->add_option("--chunks", chunks_in)->required();
  extract->add_option("--out", triples_path)->required();
  extract->add_option("--config", config_path);

  // build-kg
  std::string graph_out;
  auto* build = app.add_subcommand("build-kg", "Build a graph file from chunks and triples");
  build->add_option("--chunks", chunks_in)->required();
  build->add_option("--triples", triples_path)->required();
  build->add_option("--out", graph_out)->required();
  build->add_option("--config", config_path);

  // kg-stats
  std::string graph_path;
  auto* stats = app.add_subcommand("kg-stats", "Print node counts of a graph file");
  stats->add_option("graph", graph_path)->required();

  // ask
  std::string question, language, user_id;
  std::optional<std::size_t> k, o, i, c;
  std::optional<double> t;
  bool allow_out_of_range = false, llm_only = false, show_context = false;
  auto* ask = app.add_subcommand("ask", "Answer one question");
  ask->add_option("question", question)->required();
  ask->add_option("--lang", language, "Answer language tag");
  ask->add_option("--graph", graph_path);
  ask->add_option("--config", config_path);
  ask->add_option("--user", user_id, "Stored user whose metadata personalizes the answer");
  ask->add_option("--k", k);
  ask->add_option("--t", t);
  ask->add_option("--o", o);
  ask->add_option("--i", i);
  ask->add_option("--c", c);
  ask->add_flag("--allow-out-of-range", allow_out_of_range);
  ask->add_flag("--llm-only", llm_only, "Skip retrieval");
  ask->add_flag("--context", show_context, "Include the serialized context");

  // serve
  std::optional<int> port;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", config_path);
  serve->add_option("--port", port);
  serve->add_option("--graph", graph_path);

  // eval
  std::string dataset_path, run_out, mode = "rag", judgments_path, run_in;
  std::optional<std::size_t> limit;
  auto* eval = app.add_subcommand("eval", "Benchmark runs and judgment aggregation");
  eval->require_subcommand(1);
  auto* eval_run = eval->add_subcommand("run", "Answer every dataset question");
  eval_run->add_option("--dataset", dataset_path)->required();
  eval_run->add_option("--lang", language)->required()->check(CLI::IsMember({"it", "en"}));
  eval_run->add_option("--mode", mode)->check(CLI::IsMember({"rag", "ablation"}));
  eval_run->add_option("--out", run_out)->required();
  eval_run->add_option("--graph", graph_path);
  eval_run->add_option("--config", config_path);
  eval_run->add_option("--limit", limit, "Stop after this many new answers");
  auto* eval_agg = eval->add_subcommand("aggregate", "Aggregate judgments into the language x country table");
  eval_agg->add_option("--judgments", judgments_path)->required();
  eval_agg->add_option("--dataset", dataset_path)->required();
  eval_agg->add_option("--out", run_out, "Writes <out>.txt and <out>.json")->required();
  eval_agg->add_option("--run", run_in, "Run file for call and latency statistics");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "LLM-only benchmark run (no retrieval)");
  ablate->add_option("--dataset", dataset_path)->required();
  ablate->add_option("--lang", language)->required()->check(CLI::IsMember({"it", "en"}));
  ablate->add_option("--out", run_out)->required();
  ablate->add_option("--config", config_path);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      chunking.validate();
      std::vector<grag::ChunkRecord> records;
      const auto docs = grag::load_manifest(corpus);
      for (const auto& d : docs) {
        for (auto& ch : grag::make_chunks(d, chunking)) records.push_back({std::move(ch), d.uri, d.language});
      }
      grag::save_chunks(chunks_out, records);
      std::printf("%zu documents, %zu chunks\n", docs.size(), records.size());
      return 0;
    }

    if (extract->parsed()) {
      const auto cfg = config_from(config_path);
      auto providers = grag::make_providers(cfg.provider);
      const auto chunks = grag::load_chunks(chunks_in);
      grag::ExtractionReport report;
      const auto triples =
          grag::extract_corpus(chunks, *providers.chat, {}, cfg.extraction_concurrency, &report);
      grag::save_triples(triples_path, triples);
      std::printf("%zu chunks, %zu triples, %zu unreadable replies\n", report.chunks_processed,
                  report.triples_extracted, report.format_failures);
      return 0;
    }

    if (build->parsed()) {
      const auto cfg = config_from(config_path);
      auto providers = grag::make_providers(cfg.provider);
      const auto g = grag::build_graph(grag::load_chunks(chunks_in), grag::load_triples(triples_path),
                                       *providers.embedder);
      g.save(std::filesystem::path(graph_out));
      const auto s = g.stats();
      std::printf("entities %zu\nrelationships %zu\ndocuments %zu\nchunks %zu\n", s.entities,
                  s.relationships, s.documents, s.chunks);
      return 0;
    }

    if (stats->parsed()) {
      const auto g = grag::KnowledgeGraph::load(std::filesystem::path(graph_path));
      const auto s = g.stats();
      std::printf("entities %zu\nrelationships %zu\ndocuments %zu\nchunks %zu\nembedding_dim %zu\n"
                  "nodes %zu\nedges %zu\n",
                  s.entities, s.relationships, s.documents, s.chunks, s.embedding_dim, g.node_count(),
                  g.edge_count());
      return 0;
    }

    if (ask->parsed()) {
      auto cfg = config_from(config_path);
      if (k) cfg.retrieval.k = *k;
      if (t) cfg.retrieval.t = *t;
      if (o) cfg.retrieval.o = *o;
      if (i) cfg.retrieval.i = *i;
      if (c) cfg.retrieval.c = *c;
      cfg.allow_out_of_range = cfg.allow_out_of_range || allow_out_of_range;
      if (!graph_path.empty()) cfg.graph_path = graph_path;
      cfg.validate();
      if (cfg.graph_path.empty() && !llm_only) {
        std::fprintf(stderr, "no graph: pass --graph or set graph_path in the config\n");
        return 2;
      }
      auto providers = grag::make_providers(cfg.provider);
      auto g = std::make_shared<grag::KnowledgeGraph>(
          cfg.graph_path.empty() ? grag::init_ontology()
                                 : grag::KnowledgeGraph::load(std::filesystem::path(cfg.graph_path)));
      grag::Engine engine(g, providers.handles(), cfg.retrieval, clock_for(cfg));
      grag::AnswerRequest req;
      req.question = question;
      if (!user_id.empty()) {
        if (auto row = g->users().get(user_id)) req.user = *row;
      }
      req.language = !language.empty() ? language
                     : !req.user.language.empty() ? req.user.language
                                                  : cfg.default_language;
      const auto a = llm_only ? engine.ask_llm_only(req.question, req.language) : engine.ask(req);
      std::cout << json::parse(grag::answer_json(a, show_context)).dump(2) << "\n";
      return 0;
    }

    if (serve->parsed()) {
      auto cfg = config_from(config_path);
      if (port) cfg.port = *port;
      if (!graph_path.empty()) cfg.graph_path = graph_path;
      cfg.validate();
      auto clock = clock_for(cfg);
      grag::Service svc(cfg, grag::make_providers(cfg.provider), clock);
      if (!cfg.graph_path.empty() && std::filesystem::exists(cfg.graph_path)) svc.load_graph(cfg.graph_path);
      g_service = &svc;
      std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
      });
      std::fprintf(stderr, "listening on %s:%d\n", cfg.host.c_str(), cfg.port);
      if (!svc.listen(cfg.host, cfg.port)) {
        std::fprintf(stderr, "cannot bind %s:%d\n", cfg.host.c_str(), cfg.port);
        return 1;
      }
      svc.wait_idle();
      g_service = nullptr;
      return 0;
    }

    if (eval_run->parsed() || ablate->parsed()) {
      auto cfg = config_from(config_path);
      if (!graph_path.empty()) cfg.graph_path = graph_path;
      const auto run_mode = ablate->parsed() ? grag::RunMode::ablation : *grag::run_mode_from_string(mode);
      if (run_mode == grag::RunMode::rag && cfg.graph_path.empty()) {
        std::fprintf(stderr, "rag runs need --graph or graph_path in the config\n");
        return 2;
      }
      auto providers = grag::make_providers(cfg.provider);
      auto g = std::make_shared<grag::KnowledgeGraph>(
          run_mode == grag::RunMode::ablation || cfg.graph_path.empty()
              ? grag::init_ontology()
              : grag::KnowledgeGraph::load(std::filesystem::path(cfg.graph_path)));
      grag::Engine engine(g, providers.handles(), cfg.retrieval, clock_for(cfg));
      grag::RunOptions opts;
      opts.max_new_records = limit;
      const auto summary = grag::run_benchmark(grag::load_qa_dataset(dataset_path), engine,
                                               *grag::language_from_string(language), run_mode, run_out, opts);
      std::printf("answered %zu, skipped %zu, failed %zu\n", summary.answered, summary.skipped, summary.failed);
      return summary.failed == 0 ? 0 : 3;
    }

    if (eval_agg->parsed()) {
      const auto table = grag::aggregate(grag::load_judgments(judgments_path), grag::load_qa_dataset(dataset_path));
      const auto stats_in = run_in.empty() ? grag::RunStatistics{} : grag::run_statistics(grag::load_run_file(run_in));
      const auto report = grag::render_report(table, stats_in);
      write_text(run_out + ".txt", report.text);
      write_text(run_out + ".json", report.table_json);
      std::cout << report.text;
      return 0;
    }
  } catch (const grag::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(grag::to_string(e.code())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
