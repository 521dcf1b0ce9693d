#include <doctest.h>

#include <sstream>

#include "grag/error.hpp"
#include "grag/knowledge_graph.hpp"
#include "support/support.hpp"

using namespace grag;

namespace {

Triple triple(std::string head, std::string rel, std::string tail, std::string chunk = "") {
  return {std::move(head), "Thing", std::move(rel), std::move(tail), "Thing", {}, std::move(chunk)};
}

NodeId entity(std::string_view name) { return node_id(NodeKind::Entity, name); }

// One document with two chunks.
std::vector<std::string> add_doc(KnowledgeGraph& g) {
  g.add_document({"d", "https://example.org/d", DocumentFormat::plain, "", "en"});
  std::vector<std::string> ids;
  for (std::size_t n = 0; n < 2; ++n) {
    Chunk c;
    c.doc_id = "d";
    c.index = n;
    c.content = "chunk " + std::to_string(n);
    ids.push_back(g.add_chunk(c).hex());
  }
  return ids;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

EmbeddingVector vec(std::initializer_list<double> xs) {
  EmbeddingVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST_SUITE("knowledge_graph") {
  TEST_CASE("init registers the ontology") {
    const KnowledgeGraph g = init_ontology();
    CHECK(g.node_count() == 0);
    CHECK(g.edge_count() == 0);
    CHECK(g.node_kinds().size() == 4);
    CHECK(g.edge_labels().size() == 8);
    CHECK(g.schema_version() == 1);
    CHECK(g == init_ontology());
    for (EdgeLabel l : kEdgeLabels) CHECK(edge_label_from_string(to_string(l)) == l);
  }

  TEST_CASE("one triple adds two entities, a relationship and eight edges") {
    KnowledgeGraph g;
    const auto r = g.upsert_triple(triple("Heat pump", "Reduces", "Energy consumption"));
    CHECK(r.nodes_added == 3);
    CHECK(r.edges_added == 8);
    CHECK_FALSE(r.merged);
    CHECK(g.stats().entities == 2);
    CHECK(g.stats().relationships == 1);
    g.check_integrity();

    const NodeId rel = node_id(NodeKind::Relationship, relationship_key("Reduces", "Heat pump", "Energy consumption"));
    const NodeId head = entity("Heat pump");
    const NodeId tail = entity("Energy consumption");
    for (const GraphEdge& e : std::vector<GraphEdge>{{EdgeLabel::hasSource, rel, head},
                                                     {EdgeLabel::hasTarget, rel, tail},
                                                     {EdgeLabel::hasRelationship, head, rel},
                                                     {EdgeLabel::hasRelationship, tail, rel},
                                                     {EdgeLabel::isSourceOf, head, rel},
                                                     {EdgeLabel::isTargetOf, tail, rel},
                                                     {EdgeLabel::relatesSource, rel, head},
                                                     {EdgeLabel::relatesTarget, rel, tail}}) {
      CHECK(g.edges().count(e) == 1);
    }
    CHECK(g.at(head).type_label == "Thing");
  }

  TEST_CASE("provenance adds three hasChunk edges") {
    KnowledgeGraph g;
    const auto chunks = add_doc(g);
    CHECK(g.edge_count() == 2);
    const auto r = g.upsert_triple(triple("A", "R", "B", chunks[0]));
    CHECK(r.edges_added == 11);
    const auto again = g.upsert_triple(triple("A", "R", "B", chunks[1]));
    CHECK(again.nodes_added == 0);
    CHECK(again.edges_added == 3);
    CHECK(again.merged);
    CHECK(g.reconstruct_triples() == std::vector<Triple>{triple("A", "R", "B", chunks[0] < chunks[1] ? chunks[0] : chunks[1])});
  }

  TEST_CASE("repeating a triple is a no-op merge") {
    KnowledgeGraph g;
    g.upsert_triple(triple("A", "R", "B"));
    const KnowledgeGraph before = g;
    const auto r = g.upsert_triple(triple("A", "R", "B"));
    CHECK(r.nodes_added == 0);
    CHECK(r.edges_added == 0);
    CHECK(r.merged);
    CHECK(g == before);
  }

  TEST_CASE("shared head merges into one entity") {
    KnowledgeGraph g;
    g.upsert_triple(triple("A", "R", "B"));
    const auto r = g.upsert_triple(triple("A", "R", "C"));
    CHECK(r.nodes_added == 2);
    CHECK(r.merged);
    CHECK(g.stats().entities == 3);
    CHECK(g.stats().relationships == 2);
    CHECK(g.node_count() == 5);
  }

  TEST_CASE("self-loops share edges") {
    KnowledgeGraph g;
    const auto r = g.upsert_triple(triple("A", "Contains", "A"));
    CHECK(r.nodes_added == 2);
    CHECK(r.edges_added == 7);
    g.check_integrity();
  }

  TEST_CASE("first type wins, properties land on the head") {
    KnowledgeGraph g;
    Triple t = triple("A", "R", "B");
    t.head_type = "";
    g.upsert_triple(t);
    Triple u = triple("A", "S", "B");
    u.head_type = "Device";
    u.tail_type = "Other";
    u.properties = {{"power", "3 kW"}};
    g.upsert_triple(u);
    CHECK(g.at(entity("A")).type_label == "Device");
    CHECK(g.at(entity("B")).type_label == "Thing");
    CHECK(g.at(entity("A")).properties == PropertyMap{{"power", "3 kW"}});
    CHECK(g.at(entity("B")).properties.empty());
  }

  TEST_CASE("invalid triples and provenance are rejected") {
    KnowledgeGraph g;
    const auto chunks = add_doc(g);
    CHECK(code_of([&] { g.upsert_triple(triple("heat pump", "R", "B")); }) == ErrorCode::invalid_argument);
    CHECK(code_of([&] { g.upsert_triple(triple("A", "", "B")); }) == ErrorCode::invalid_argument);
    CHECK(code_of([&] { g.upsert_triple(triple("A", "R", "B", "xyz")); }) == ErrorCode::provenance);
    CHECK(code_of([&] { g.upsert_triple(triple("A", "R", "B", std::string(32, 'a'))); }) == ErrorCode::provenance);
    // A document id is a valid digest but not a chunk.
    const std::string doc = node_id(NodeKind::Document, "d").hex();
    CHECK(code_of([&] { g.upsert_triple(triple("A", "R", "B", doc)); }) == ErrorCode::provenance);
    CHECK(g.stats().entities == 0);

    Chunk orphan;
    orphan.doc_id = "missing";
    CHECK(code_of([&] { g.add_chunk(orphan); }) == ErrorCode::provenance);
    Chunk wrong;
    wrong.doc_id = "d";
    wrong.index = 5;
    wrong.chunk_id = chunks[0];
    CHECK(code_of([&] { g.add_chunk(wrong); }) == ErrorCode::invalid_key);
  }

  TEST_CASE("attach_embedding fixes one dimension") {
    KnowledgeGraph g;
    g.upsert_triple(triple("A", "R", "B"));
    g.attach_embedding(entity("A"), KnowledgeGraph::EmbeddingField::name, vec({1, 0, 0}));
    CHECK(g.embedding_dim() == 3);
    CHECK(code_of([&] { g.attach_embedding(entity("B"), KnowledgeGraph::EmbeddingField::name, vec({1, 0})); }) ==
          ErrorCode::dimension_mismatch);
    CHECK(code_of([&] { g.attach_embedding(entity("B"), KnowledgeGraph::EmbeddingField::name, EmbeddingVector()); }) ==
          ErrorCode::dimension_mismatch);
    CHECK(code_of([&] { g.attach_embedding(entity("Z"), KnowledgeGraph::EmbeddingField::name, vec({1, 0, 0})); }) ==
          ErrorCode::unknown_node);
    CHECK_FALSE(g.at(entity("B")).name_embedding.has_value());
    const auto index = build_entity_index(g);
    CHECK(index.size() == 1);
  }

  TEST_CASE("neighbors on a star") {
    // Hub -> X1..X4 with distinct relations, plus Y -> Hub.
    KnowledgeGraph g;
    g.upsert_triple(triple("Hub", "Zeta", "X1"));
    g.upsert_triple(triple("Hub", "Alpha", "X2"));
    g.upsert_triple(triple("Hub", "Alpha", "X3"));
    g.upsert_triple(triple("Hub", "Mid", "X4"));
    g.upsert_triple(triple("Y", "Feeds", "Hub"));

    const auto out = g.neighbors(entity("Hub"), Direction::outgoing, 10);
    REQUIRE(out.size() == 4);
    CHECK(out[0].other == entity("X2"));
    CHECK(out[1].other == entity("X3"));
    CHECK(out[2].other == entity("X4"));
    CHECK(out[3].other == entity("X1"));
    CHECK(g.neighbors(entity("Hub"), Direction::outgoing, 2).size() == 2);

    const auto in = g.neighbors(entity("Hub"), Direction::incoming, 10);
    REQUIRE(in.size() == 1);
    CHECK(in[0].other == entity("Y"));
    CHECK(g.neighbors(entity("X1"), Direction::outgoing, 10).empty());

    // A scorer reorders: prefer relation names by length.
    const auto scored = g.neighbors(entity("Hub"), Direction::outgoing, 10,
                                    [](const GraphNode& n) { return static_cast<double>(n.name.size()); });
    CHECK((scored[0].other == entity("X2") || scored[0].other == entity("X3")));
    CHECK(g.at(scored[0].relationship).name == "Alpha");
    CHECK(g.at(scored[3].relationship).name == "Mid");

    const NodeId rel = in[0].relationship;
    CHECK(code_of([&] { g.neighbors(rel, Direction::outgoing, 1); }) == ErrorCode::invalid_argument);
    CHECK(code_of([&] { g.neighbors(entity("Nope"), Direction::outgoing, 1); }) == ErrorCode::unknown_node);
  }

  TEST_CASE("chunks_for deduplicates across sources") {
    KnowledgeGraph g;
    const auto chunks = add_doc(g);
    g.upsert_triple(triple("A", "R", "B", chunks[1]));
    g.upsert_triple(triple("A", "S", "C", chunks[0]));
    const auto found = g.chunks_for({entity("A"), entity("B"), entity("C")}, 10);
    REQUIRE(found.size() == 2);
    CHECK(found[0]->chunk_index == 0);
    CHECK(found[1]->chunk_index == 1);
    CHECK(g.chunks_for({entity("A")}, 1).size() == 1);
    CHECK(g.chunks_for({}, 5).empty());
  }

  TEST_CASE("save and load round-trip") {
    KnowledgeGraph g;
    const auto chunks = add_doc(g);
    Triple t = triple("A \"quoted\"", "R", "B\xc3\xa8", chunks[0]);
    t.properties = {{"note", "line\nbreak"}};
    g.upsert_triple(t);
    g.attach_embedding(entity("A \"quoted\""), KnowledgeGraph::EmbeddingField::name, vec({0.1, 1e-300, -3.5}));
    g.attach_embedding(node_id(NodeKind::Chunk, "d#0"), KnowledgeGraph::EmbeddingField::content, vec({1, 2, 3}));
    set_user_metadata(g, {"u1", "it", "CH", {{"tone", "formal"}}});

    std::stringstream a;
    g.save(a);
    const KnowledgeGraph back = KnowledgeGraph::load(a);
    CHECK(back == g);
    CHECK(back.embedding_dim() == 3);
    CHECK(get_user_metadata(back, "u1")->country == "CH");
    std::stringstream b;
    back.save(b);
    CHECK(a.str() == b.str());

    const auto dir = testing::fresh_dir("kg");
    g.save(dir / "g.kb");
    CHECK(KnowledgeGraph::load(dir / "g.kb") == g);
    CHECK_FALSE(std::filesystem::exists(dir / "g.kb.tmp"));
  }

  TEST_CASE("load failures") {
    std::stringstream v2("graphkb v2\n");
    CHECK(code_of([&] { KnowledgeGraph::load(v2); }) == ErrorCode::version_mismatch);
    std::stringstream other("hello\n");
    CHECK(code_of([&] { KnowledgeGraph::load(other); }) == ErrorCode::corrupt_record);

    KnowledgeGraph g;
    g.upsert_triple(triple("A", "R", "B"));
    std::stringstream good;
    g.save(good);
    const std::string text = good.str();
    const auto line_of = [](const std::string& s) -> std::size_t {
      std::stringstream in(s);
      try {
        KnowledgeGraph::load(in);
      } catch (const RecordError& e) {
        CHECK(e.code() == ErrorCode::corrupt_record);
        return e.line();
      }
      return 0;
    };
    CHECK(line_of(text + "{not json\n") == 13);
    CHECK(line_of(text + R"({"record":"edge","label":"hasSource","from":")" + entity("Q").hex() + R"(","to":")" +
                  entity("A").hex() + "\"}\n") == 13);
    CHECK(line_of(text + R"({"record":"mystery"})" "\n") == 13);
    CHECK(line_of("graphkb v1\n\n{\"record\":\"node\"}\n") == 3);
    CHECK(code_of([] { KnowledgeGraph::load(std::filesystem::path("/nonexistent/graph.kb")); }) == ErrorCode::io);
  }

  TEST_CASE("integrity catches missing inverses") {
    KnowledgeGraph g;
    g.upsert_triple(triple("A", "R", "B"));
    std::stringstream s;
    g.save(s);
    std::string text = s.str();
    const std::string needle = "\"label\":\"isTargetOf\"";
    std::stringstream out;
    std::stringstream in(text);
    for (std::string line; std::getline(in, line);) {
      if (line.find(needle) == std::string::npos) out << line << '\n';
    }
    const KnowledgeGraph broken = KnowledgeGraph::load(out);
    CHECK(code_of([&] { broken.check_integrity(); }) == ErrorCode::integrity);
  }

  TEST_CASE("user table") {
    KnowledgeGraph g;
    CHECK_FALSE(get_user_metadata(g, "x").has_value());
    set_user_metadata(g, {"x", "it", "IT", {}});
    set_user_metadata(g, {"x", "en", "", {{"k", "v"}}});
    const auto u = get_user_metadata(g, "x");
    REQUIRE(u.has_value());
    CHECK(u->language == "en");
    CHECK(u->preferences.at("k") == "v");
    CHECK(g.users().rows().size() == 1);
    CHECK(code_of([&] { set_user_metadata(g, {"", "it", "", {}}); }) == ErrorCode::invalid_argument);
  }

  TEST_CASE("random triple lists reconstruct") {
    testing::Rng rng(17);
    for (int n = 0; n < 100; ++n) {
      KnowledgeGraph g;
      const auto chunks = add_doc(g);
      const auto triples = testing::random_triples(rng, 25, chunks);
      for (const auto& t : triples) g.upsert_triple(t);
      g.check_integrity();
      REQUIRE(g.reconstruct_triples() == testing::deduplicated(triples));
    }
  }
}
