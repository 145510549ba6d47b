#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nl2sparql/kb.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

using namespace nl2sparql::kb;
using nlohmann::json;

namespace {

const nl2sparql::codec::PrefixTable& tab() {
  static auto t = nl2sparql::codec::PrefixTable::dbpedia_defaults();
  return t;
}

std::filesystem::path write_tmp(const std::string& name, const std::string& content) {
  std::filesystem::path p = std::filesystem::path(NL2SPARQL_TEST_TMP) / name;
  std::ofstream out(p);
  out << content;
  return p;
}

RdfTerm iri(const std::string& v) { return RdfTerm::iri(v); }

// Reference evaluator for the random-store comparison: enumerates every
// assignment of store triples to patterns with an odometer, keeps the
// consistent ones, then applies the same sort/distinct/limit contract.
bool ref_term_less(const RdfTerm& a, const RdfTerm& b) {
  auto key = [](const RdfTerm& t) {
    return std::tuple<const std::string&, int, const std::string&, const std::string&>(
        t.value, static_cast<int>(t.kind), t.lang, t.datatype);
  };
  return key(a) < key(b);
}

std::vector<Binding> brute_force(const TripleStore& store, const SelectQuery& q) {
  const auto& ts = store.triples();
  std::vector<Binding> rows;
  const std::size_t k = q.patterns.size();
  if (ts.empty() && k > 0) return rows;

  std::vector<std::size_t> pick(k, 0);
  while (true) {
    std::map<std::string, RdfTerm> env;
    bool ok = true;
    for (std::size_t j = 0; ok && j < k; ++j) {
      const Triple& t = ts[pick[j]];
      const SelectQuery::Pattern& p = q.patterns[j];
      auto accept = [&](const TermOrVar& tv, const RdfTerm& actual) {
        if (const auto* c = std::get_if<RdfTerm>(&tv)) {
          if (*c != actual) ok = false;
          return;
        }
        auto [it, inserted] = env.emplace(std::get<std::string>(tv), actual);
        if (!inserted && it->second != actual) ok = false;
      };
      accept(p.s, t.s);
      if (ok) accept(p.p, t.p);
      if (ok) accept(p.o, t.o);
    }
    if (ok) {
      Binding row;
      for (const auto& v : q.vars) row.emplace(v, env.at(v));
      rows.push_back(std::move(row));
    }
    std::size_t j = 0;
    for (; j < k; ++j) {
      if (++pick[j] < ts.size()) break;
      pick[j] = 0;
    }
    if (j == k) break;
  }

  std::sort(rows.begin(), rows.end(), [&](const Binding& a, const Binding& b) {
    for (const auto& v : q.vars) {
      if (ref_term_less(a.at(v), b.at(v))) return true;
      if (ref_term_less(b.at(v), a.at(v))) return false;
    }
    return false;
  });
  if (q.distinct) rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  if (q.limit && rows.size() > *q.limit) rows.resize(*q.limit);
  return rows;
}

// in-process SPARQL endpoint stand-in on an ephemeral port
struct TestServer {
  httplib::Server svr;
  int port = 0;
  std::thread thread;

  void start() {
    port = svr.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }
  void stop() {
    svr.stop();
    if (thread.joinable()) thread.join();
  }
  ~TestServer() { stop(); }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/sparql"; }
  EndpointConfig config() const {
    EndpointConfig c;
    c.url = url();
    c.max_retries = 2;
    c.backoff_ms = 1;
    return c;
  }
};

std::string uri_rows(const std::vector<std::string>& uris) {
  json rows = json::array();
  for (const auto& u : uris) {
    rows.push_back({{"uri", {{"type", "uri"}, {"value", u}}}});
  }
  json doc = {{"head", {{"vars", {"uri"}}}}, {"results", {{"bindings", rows}}}};
  return doc.dump();
}

}  // namespace

// --- triple file loading -------------------------------------------------------

TEST_CASE("loader reads IRIs, literals, langs, datatypes and blank nodes") {
  auto path = write_tmp("basic.nt",
                        "# monuments fixture, miniature\n"
                        "<http://ex.org/a> <http://ex.org/p> <http://ex.org/b> .\n"
                        "\n"
                        "<http://ex.org/a> <http://ex.org/label> \"Cross of Carew\"@en .\n"
                        "<http://ex.org/a> <http://ex.org/height> "
                        "\"4.3\"^^<http://www.w3.org/2001/XMLSchema#double> .\n"
                        "_:n1 <http://ex.org/p> \"say \\\"hi\\\"\\n\" .\r\n"
                        "   # indented comment\n"
                        "<http://ex.org/a> <http://ex.org/p> <http://ex.org/b> .\n");
  TripleStore store = TripleStore::load(path);
  CHECK(store.size() == 4);  // the duplicate line collapses

  const auto& at_a = store.by_subject(iri("http://ex.org/a"));
  CHECK(at_a.size() == 3);
  const auto& with_p = store.by_predicate(iri("http://ex.org/p"));
  CHECK(with_p.size() == 2);
  CHECK(store.by_subject(iri("http://ex.org/nope")).empty());

  bool saw_lang = false, saw_typed = false, saw_blank = false;
  for (const auto& t : store.triples()) {
    if (t.o == RdfTerm::literal("Cross of Carew", "en")) saw_lang = true;
    if (t.o == RdfTerm::literal("4.3", "", "http://www.w3.org/2001/XMLSchema#double"))
      saw_typed = true;
    if (t.s == RdfTerm::blank("n1") && t.o == RdfTerm::literal("say \"hi\"\n")) saw_blank = true;
  }
  CHECK(saw_lang);
  CHECK(saw_typed);
  CHECK(saw_blank);

  // triples come out sorted
  CHECK(std::is_sorted(store.triples().begin(), store.triples().end()));
}

TEST_CASE("loader failures carry the file name and line number") {
  auto expect_fail = [](const std::string& name, const std::string& content, int line,
                        const std::string& fragment) {
    auto path = write_tmp(name, content);
    try {
      TripleStore::load(path);
      FAIL("expected ParseError for ", name);
    } catch (const ParseError& e) {
      std::string msg = e.what();
      CHECK(msg.find(name) != std::string::npos);
      CHECK(msg.find(":" + std::to_string(line) + ":") != std::string::npos);
      CHECK(msg.find(fragment) != std::string::npos);
    }
  };
  const std::string good = "<http://e/a> <http://e/p> <http://e/b> .\n";

  expect_fail("bad_iri.nt", good + "<http://e/a \"x\" .\n", 2, "unterminated IRI");
  expect_fail("bad_subj.nt", good + good + "\"lit\" <http://e/p> <http://e/b> .\n", 3,
              "literal subjects");
  expect_fail("bad_pred.nt", "<http://e/a> _:b <http://e/b> .\n", 1, "predicates must be IRIs");
  expect_fail("bad_dot.nt", "<http://e/a> <http://e/p> <http://e/b>\n", 1, "terminating '.'");
  expect_fail("bad_tail.nt", "<http://e/a> <http://e/p> <http://e/b> . junk\n", 1,
              "trailing content");
  expect_fail("bad_esc.nt", "<http://e/a> <http://e/p> \"a\\qb\" .\n", 1, "unsupported escape");
  expect_fail("bad_quote.nt", "<http://e/a> <http://e/p> \"open .\n", 1, "unterminated literal");
  expect_fail("bad_lang.nt", "<http://e/a> <http://e/p> \"x\"@ .\n", 1, "empty language tag");
  expect_fail("bad_blank.nt", "_: <http://e/p> <http://e/b> .\n", 1, "empty blank node label");

  CHECK_THROWS_AS(TripleStore::load(std::filesystem::path(NL2SPARQL_TEST_TMP) / "no_such.nt"),
                  ParseError);
}

// --- SELECT parsing ------------------------------------------------------------

TEST_CASE("parse handles the full supported SELECT shape") {
  SelectQuery q = SelectQuery::parse(
      "SELECT DISTINCT ?uri WHERE { ?uri dbo:country dbr:France . } LIMIT 5", tab());
  CHECK(q.distinct);
  REQUIRE(q.limit.has_value());
  CHECK(*q.limit == 5);
  CHECK(q.vars == std::vector<std::string>{"uri"});
  REQUIRE(q.patterns.size() == 1);
  CHECK(std::get<std::string>(q.patterns[0].s) == "uri");
  CHECK(std::get<RdfTerm>(q.patterns[0].p) == iri("http://dbpedia.org/ontology/country"));
  CHECK(std::get<RdfTerm>(q.patterns[0].o) == iri("http://dbpedia.org/resource/France"));
}

TEST_CASE("parse accepts star, omitted WHERE, literals and local prefixes") {
  SelectQuery star = SelectQuery::parse("SELECT * { ?b dbo:p ?a . ?b dbo:q ?c }", tab());
  CHECK(star.vars == std::vector<std::string>{"a", "b", "c"});  // sorted expansion
  CHECK_FALSE(star.distinct);
  CHECK_FALSE(star.limit.has_value());

  SelectQuery lit = SelectQuery::parse("select ?x { ?x rdfs:label \"Amazon\"@en }", tab());
  CHECK(std::get<RdfTerm>(lit.patterns[0].o) == RdfTerm::literal("Amazon", "en"));

  SelectQuery num = SelectQuery::parse("SELECT ?x { ?x dbo:floorCount 42 }", tab());
  CHECK(std::get<RdfTerm>(num.patterns[0].o) == RdfTerm::literal("42"));

  SelectQuery pfx = SelectQuery::parse(
      "PREFIX ex: <http://ex.org/> SELECT ?x { ?x ex:p ex:o }", tab());
  CHECK(std::get<RdfTerm>(pfx.patterns[0].p) == iri("http://ex.org/p"));
  CHECK(std::get<RdfTerm>(pfx.patterns[0].o) == iri("http://ex.org/o"));

  SelectQuery raw = SelectQuery::parse(
      "SELECT ?x { <http://ex.org/a> <http://ex.org/p> ?x }", tab());
  CHECK(std::get<RdfTerm>(raw.patterns[0].s) == iri("http://ex.org/a"));
}

TEST_CASE("parse rejects everything outside the supported shape") {
  auto rejects = [&](const std::string& text) {
    CHECK_THROWS_AS(SelectQuery::parse(text, tab()), UnsupportedQuery);
  };
  rejects("ASK { ?a ?b ?c }");
  rejects("SELECT ?a { ?a ?b ?c FILTER ( ?c > 3 ) }");
  rejects("SELECT ?a WHERE { { ?a ?b ?c } UNION { ?a ?b ?c } }");
  rejects("SELECT ?a { ?a ?b ?c } ORDER BY ?a");
  rejects("SELECT ?z { ?a ?b ?c }");             // ?z never bound
  rejects("SELECT * { dbr:A dbo:b dbr:C }");     // star but no variables
  rejects("SELECT ?a { \"lit\" ?a ?b }");        // literal subject
  rejects("SELECT ?a { ?a \"lit\" ?b }");        // literal predicate
  rejects("SELECT ?a { }");
  rejects("SELECT ?a { ?a ?b ?c } LIMIT ?a");
  rejects("SELECT ?a { ?a ?b ?c } LIMIT 3.5");
  rejects("SELECT { ?a ?b ?c }");                // missing projection
  rejects("SELECT ?a { ?a ?b ?c");               // unclosed block
  rejects("nonsense");
}

// --- local evaluation ----------------------------------------------------------

TEST_CASE("evaluator joins, sorts, deduplicates and truncates") {
  TripleStore store({
      {iri("http://e/a"), iri("http://e/p"), iri("http://e/b")},
      {iri("http://e/b"), iri("http://e/p"), iri("http://e/c")},
      {iri("http://e/b"), iri("http://e/p"), iri("http://e/d")},
      {iri("http://e/a"), iri("http://e/name"), RdfTerm::literal("Cross", "en")},
      {iri("http://e/a"), iri("http://e/name"), RdfTerm::literal("Cross")},
  });

  SUBCASE("single pattern, star projection, deterministic order") {
    auto rows = query_local(store, "SELECT * { ?s ?p ?o }", tab());
    REQUIRE(rows.size() == store.size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& prev = rows[i - 1];
      const auto& cur = rows[i];
      auto key = [](const Binding& b) {
        return std::tuple(b.at("o").value, b.at("p").value, b.at("s").value);
      };
      // sorted by projection order o, p, s (alphabetical via star)
      CHECK(key(prev) <= key(cur));
    }
  }

  SUBCASE("two-pattern join chains through the shared variable") {
    auto rows = query_local(
        store, "SELECT ?x ?z { ?x <http://e/p> ?y . ?y <http://e/p> ?z . }", tab());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].at("x") == iri("http://e/a"));
    CHECK(rows[0].at("z") == iri("http://e/c"));
    CHECK(rows[1].at("z") == iri("http://e/d"));
  }

  SUBCASE("language tags distinguish literals") {
    auto tagged = query_local(store, "SELECT ?s { ?s <http://e/name> \"Cross\"@en }", tab());
    REQUIRE(tagged.size() == 1);
    auto plain = query_local(store, "SELECT ?s { ?s <http://e/name> \"Cross\" }", tab());
    REQUIRE(plain.size() == 1);
    auto both = query_local(store, "SELECT ?n { <http://e/a> <http://e/name> ?n }", tab());
    CHECK(both.size() == 2);
  }

  SUBCASE("distinct collapses repeated projections") {
    auto all = query_local(store, "SELECT ?p { ?s ?p ?o }", tab());
    CHECK(all.size() == 5);
    auto uniq = query_local(store, "SELECT DISTINCT ?p { ?s ?p ?o }", tab());
    REQUIRE(uniq.size() == 2);
    CHECK(uniq[0].at("p") == iri("http://e/name"));
    CHECK(uniq[1].at("p") == iri("http://e/p"));
  }

  SUBCASE("limit truncates after sorting") {
    auto rows = query_local(store, "SELECT ?o { ?s <http://e/p> ?o } LIMIT 2", tab());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].at("o") == iri("http://e/b"));
    CHECK(rows[1].at("o") == iri("http://e/c"));
  }

  SUBCASE("constant-only pattern acts as an existence filter") {
    auto hit = query_local(
        store, "SELECT ?x { <http://e/a> <http://e/p> <http://e/b> . ?x <http://e/p> ?y }",
        tab());
    CHECK(hit.size() == 3);
    auto miss = query_local(
        store, "SELECT ?x { <http://e/a> <http://e/p> <http://e/zz> . ?x <http://e/p> ?y }",
        tab());
    CHECK(miss.empty());
  }

  SUBCASE("a variable repeated inside one pattern must unify") {
    TripleStore loops({
        {iri("http://e/a"), iri("http://e/p"), iri("http://e/a")},
        {iri("http://e/a"), iri("http://e/p"), iri("http://e/b")},
    });
    auto rows = query_local(loops, "SELECT ?x { ?x <http://e/p> ?x }", tab());
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].at("x") == iri("http://e/a"));
  }

  SUBCASE("evaluation is repeatable") {
    auto a = query_local(store, "SELECT ?s ?o { ?s ?p ?o }", tab());
    auto b = query_local(store, "SELECT ?s ?o { ?s ?p ?o }", tab());
    CHECK(a == b);
  }
}

TEST_CASE("evaluator agrees with exhaustive enumeration on random stores") {
  std::mt19937 rng(20260814);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

  std::size_t instances_with_rows = 0;
  std::size_t total_rows = 0;

  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n_nodes = 2 + pick(6);
    const std::size_t n_preds = 1 + pick(3);
    auto node = [&](std::size_t i) { return iri("http://ex.org/n" + std::to_string(i)); };
    auto pred = [&](std::size_t i) { return iri("http://ex.org/p" + std::to_string(i)); };
    auto some_object = [&]() -> RdfTerm {
      switch (pick(5)) {
        case 0: return RdfTerm::literal("v" + std::to_string(pick(3)));
        case 1: return RdfTerm::literal("v" + std::to_string(pick(3)), "en");
        case 2: return RdfTerm::blank("b" + std::to_string(pick(2)));
        default: return node(pick(n_nodes));
      }
    };

    std::vector<Triple> triples;
    const std::size_t n_triples = 1 + pick(30);
    for (std::size_t i = 0; i < n_triples; ++i) {
      Triple t;
      t.s = pick(8) == 0 ? RdfTerm::blank("b" + std::to_string(pick(2))) : node(pick(n_nodes));
      t.p = pred(pick(n_preds));
      t.o = some_object();
      triples.push_back(std::move(t));
    }
    TripleStore store(std::move(triples));

    const std::vector<std::string> pool = {"a", "b", "c", "d"};
    SelectQuery q;
    std::set<std::string> pattern_vars;
    const std::size_t n_patterns = 1 + pick(3);
    for (std::size_t j = 0; j < n_patterns; ++j) {
      // concrete positions mostly copy a stored triple so matches are common
      const Triple& anchor = store.triples()[pick(store.size())];
      auto position = [&](int slot, bool force_var) -> TermOrVar {
        if (force_var || pick(3) < 2) {
          std::string v = pool[pick(pool.size())];
          pattern_vars.insert(v);
          return v;
        }
        if (pick(4) < 3) return slot == 0 ? anchor.s : slot == 1 ? anchor.p : anchor.o;
        if (slot == 2) return some_object();
        return slot == 1 ? pred(pick(n_preds)) : node(pick(n_nodes));
      };
      SelectQuery::Pattern p;
      p.s = position(0, j == 0);  // guarantee at least one variable overall
      p.p = position(1, false);
      p.o = position(2, false);
      q.patterns.push_back(std::move(p));
    }

    std::vector<std::string> candidates(pattern_vars.begin(), pattern_vars.end());
    if (pick(3) == 0) {
      q.vars = candidates;  // the star expansion: every pattern var, sorted
    } else {
      std::shuffle(candidates.begin(), candidates.end(), rng);
      candidates.resize(1 + pick(candidates.size()));
      q.vars = candidates;
    }
    q.distinct = pick(2) == 0;
    if (pick(2) == 0) q.limit = pick(6);

    auto expected = brute_force(store, q);
    auto actual = query_local(store, q);
    REQUIRE(actual == expected);

    if (!actual.empty()) ++instances_with_rows;
    total_rows += actual.size();
  }

  // the comparison must not be vacuous
  CHECK(instances_with_rows > 50);
  CHECK(total_rows > 200);
}

// --- endpoint client -----------------------------------------------------------

TEST_CASE("endpoint client parses the standard results document") {
  TestServer ts;
  std::string seen_query;
  std::string seen_accept;
  ts.svr.Get("/sparql", [&](const httplib::Request& req, httplib::Response& res) {
    seen_query = req.get_param_value("query");
    seen_accept = req.get_header_value("Accept");
    json doc = {
        {"head", {{"vars", {"uri", "name", "height", "who"}}}},
        {"results",
         {{"bindings",
           {{{"uri", {{"type", "uri"}, {"value", "http://dbpedia.org/resource/Carew_Cross"}}},
             {"name", {{"type", "literal"}, {"value", "Carew Cross"}, {"xml:lang", "en"}}},
             {"height",
              {{"type", "typed-literal"},
               {"value", "4.2"},
               {"datatype", "http://www.w3.org/2001/XMLSchema#double"}}},
             {"who", {{"type", "bnode"}, {"value", "b0"}}}}}}}}};
    res.set_content(doc.dump(), "application/sparql-results+json");
  });
  ts.start();

  const std::string query = "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 10";
  auto rows = query_endpoint(ts.config(), query);

  CHECK(seen_query == query);  // own LIMIT, so no paging suffix
  CHECK(seen_accept == "application/sparql-results+json");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].at("uri") == iri("http://dbpedia.org/resource/Carew_Cross"));
  CHECK(rows[0].at("name") == RdfTerm::literal("Carew Cross", "en"));
  CHECK(rows[0].at("height") ==
        RdfTerm::literal("4.2", "", "http://www.w3.org/2001/XMLSchema#double"));
  CHECK(rows[0].at("who") == RdfTerm::blank("b0"));
}

TEST_CASE("endpoint client pages with LIMIT/OFFSET until a short page") {
  TestServer ts;
  std::vector<std::string> dataset = {"u0", "u1", "u2", "u3", "u4"};
  std::vector<std::string> queries_seen;
  std::mutex mtx;
  ts.svr.Get("/sparql", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mtx);
    std::string q = req.get_param_value("query");
    queries_seen.push_back(q);
    std::size_t offset = std::stoul(q.substr(q.rfind(' ') + 1));
    std::vector<std::string> page;
    for (std::size_t i = offset; i < dataset.size() && i < offset + 2; ++i) {
      page.push_back(dataset[i]);
    }
    res.set_content(uri_rows(page), "application/sparql-results+json");
  });
  ts.start();

  EndpointConfig cfg = ts.config();
  cfg.page_size = 2;

  SUBCASE("final page is short") {
    auto rows = query_endpoint(cfg, "SELECT ?uri WHERE { ?uri ?p ?o }");
    REQUIRE(rows.size() == 5);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].at("uri") == iri(dataset[i]));  // server order is preserved
    }
    REQUIRE(queries_seen.size() == 3);
    CHECK(queries_seen[0] == "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 2 OFFSET 0");
    CHECK(queries_seen[1] == "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 2 OFFSET 2");
    CHECK(queries_seen[2] == "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 2 OFFSET 4");
  }

  SUBCASE("final page is exactly full, one empty page closes the loop") {
    dataset.pop_back();  // 4 rows
    auto rows = query_endpoint(cfg, "SELECT ?uri WHERE { ?uri ?p ?o }");
    CHECK(rows.size() == 4);
    CHECK(queries_seen.size() == 3);  // pages of 2, 2, 0
  }

  SUBCASE("no results at all") {
    dataset.clear();
    auto rows = query_endpoint(cfg, "SELECT ?uri WHERE { ?uri ?p ?o }");
    CHECK(rows.empty());
    CHECK(queries_seen.size() == 1);
  }

  SUBCASE("the word limit inside literals or IRIs does not disable paging") {
    dataset.clear();
    query_endpoint(cfg, "SELECT ?uri WHERE { ?uri <http://e/limit> \"no limit here\" }");
    REQUIRE(queries_seen.size() == 1);
    CHECK(queries_seen[0].find("OFFSET 0") != std::string::npos);
  }

  SUBCASE("a lowercase limit clause disables paging") {
    auto rows = query_endpoint(cfg, "SELECT ?uri WHERE { ?uri ?p ?o } limit 20 OFFSET 0");
    CHECK(rows.size() == 2);  // handler slices [0, 2)
    REQUIRE(queries_seen.size() == 1);
    CHECK(queries_seen[0] == "SELECT ?uri WHERE { ?uri ?p ?o } limit 20 OFFSET 0");
  }
}

TEST_CASE("server errors retry with backoff, client errors do not") {
  TestServer ts;
  std::atomic<int> calls{0};
  int fail_first = 0;
  int status = 500;
  ts.svr.Get("/sparql", [&](const httplib::Request&, httplib::Response& res) {
    int n = ++calls;
    if (n <= fail_first) {
      res.status = status;
      res.set_content("boom", "text/plain");
    } else {
      res.set_content(uri_rows({"u0"}), "application/sparql-results+json");
    }
  });
  ts.start();
  const std::string query = "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 1";

  SUBCASE("persistent 500 exhausts the retry budget") {
    fail_first = 1000;
    try {
      query_endpoint(ts.config(), query);
      FAIL("expected HttpError");
    } catch (const HttpError& e) {
      CHECK(e.status() == 500);
    }
    CHECK(calls.load() == 3);  // max_retries = 2 means three attempts
  }

  SUBCASE("a 503 blip heals on a later attempt") {
    fail_first = 2;
    status = 503;
    auto rows = query_endpoint(ts.config(), query);
    REQUIRE(rows.size() == 1);
    CHECK(calls.load() == 3);
  }

  SUBCASE("400 aborts on the first attempt") {
    fail_first = 1000;
    status = 400;
    try {
      query_endpoint(ts.config(), query);
      FAIL("expected HttpError");
    } catch (const HttpError& e) {
      CHECK(e.status() == 400);
    }
    CHECK(calls.load() == 1);
  }
}

TEST_CASE("transport failure raises NetworkError after retries") {
  TestServer ts;
  ts.svr.Get("/sparql", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("unused", "text/plain");
  });
  ts.start();
  EndpointConfig cfg = ts.config();
  cfg.max_retries = 1;
  ts.stop();  // nobody listens on that port anymore

  CHECK_THROWS_AS(query_endpoint(cfg, "SELECT ?uri WHERE { ?u ?p ?o } LIMIT 1"), NetworkError);
}

TEST_CASE("malformed endpoint answers are reported as such") {
  TestServer ts;
  std::string body = "this is not json";
  ts.svr.Get("/sparql", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(body, "application/sparql-results+json");
  });
  ts.start();
  const std::string query = "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 1";

  CHECK_THROWS_AS(query_endpoint(ts.config(), query), MalformedResponse);
  body = "{\"head\": {}}";
  CHECK_THROWS_AS(query_endpoint(ts.config(), query), MalformedResponse);
  json martian;
  martian["results"]["bindings"][0]["uri"] = {{"type", "martian"}, {"value", "x"}};
  body = martian.dump();
  CHECK_THROWS_AS(query_endpoint(ts.config(), query), MalformedResponse);
}

TEST_CASE("long queries switch from GET to POST") {
  TestServer ts;
  std::string got_method;
  std::string got_query;
  auto answer = [&](const httplib::Request& req, httplib::Response& res) {
    got_method = req.method;
    got_query = req.get_param_value("query");
    res.set_content(uri_rows({"u0"}), "application/sparql-results+json");
  };
  ts.svr.Get("/sparql", answer);
  ts.svr.Post("/sparql", answer);
  ts.start();

  std::string slim = "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 1";
  query_endpoint(ts.config(), slim);
  CHECK(got_method == "GET");
  CHECK(got_query == slim);

  std::string fat = "SELECT ?uri WHERE { ?uri <http://ex.org/" + std::string(1500, 'x') +
                    "> ?o } LIMIT 1";
  query_endpoint(ts.config(), fat);
  CHECK(got_method == "POST");
  CHECK(got_query == fat);
}

TEST_CASE("response caching replays without touching the network") {
  namespace fs = std::filesystem;
  fs::path cache_dir = fs::path(NL2SPARQL_TEST_TMP) / "kbcache";
  fs::remove_all(cache_dir);

  TestServer ts;
  std::atomic<int> calls{0};
  ts.svr.Get("/sparql", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.set_content(uri_rows({"http://e/hit"}), "application/sparql-results+json");
  });
  ts.start();

  EndpointConfig cfg = ts.config();
  cfg.cache_dir = cache_dir.string();
  const std::string query = "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 3";

  auto first = query_endpoint(cfg, query);
  REQUIRE(first.size() == 1);
  CHECK(calls.load() == 1);

  auto second = query_endpoint(cfg, query);
  CHECK(second == first);
  CHECK(calls.load() == 1);  // served from disk

  // a different query gets its own cache entry
  query_endpoint(cfg, query + "0");
  CHECK(calls.load() == 2);
  std::size_t files = std::distance(fs::directory_iterator(cache_dir), fs::directory_iterator());
  CHECK(files == 2);

  // the cache replays even with the endpoint gone
  ts.stop();
  auto third = query_endpoint(cfg, query);
  CHECK(third == first);

  // entries whose recorded query does not match the key are refetched, and
  // with the endpoint gone that surfaces as a network failure
  for (const auto& entry : fs::directory_iterator(cache_dir)) {
    std::ifstream in(entry.path());
    json doc = json::parse(in);
    if (doc.value("query", "") != query) continue;
    doc["query"] = "tampered";
    std::ofstream out(entry.path());
    out << doc.dump();
  }
  cfg.max_retries = 0;
  CHECK_THROWS_AS(query_endpoint(cfg, query), NetworkError);
}

TEST_CASE("corrupt cache entries are refetched, not trusted") {
  namespace fs = std::filesystem;
  fs::path cache_dir = fs::path(NL2SPARQL_TEST_TMP) / "kbcache2";
  fs::remove_all(cache_dir);

  TestServer ts;
  std::atomic<int> calls{0};
  ts.svr.Get("/sparql", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.set_content(uri_rows({"http://e/fresh"}), "application/sparql-results+json");
  });
  ts.start();

  EndpointConfig cfg = ts.config();
  cfg.cache_dir = cache_dir.string();
  const std::string query = "SELECT ?uri WHERE { ?uri ?p ?o } LIMIT 3";

  query_endpoint(cfg, query);
  CHECK(calls.load() == 1);
  for (const auto& entry : fs::directory_iterator(cache_dir)) {
    std::ofstream out(entry.path());
    out << "{ broken";
  }
  auto rows = query_endpoint(cfg, query);
  REQUIRE(rows.size() == 1);
  CHECK(calls.load() == 2);  // went back to the server and repaired the entry
  auto again = query_endpoint(cfg, query);
  CHECK(again == rows);
  CHECK(calls.load() == 2);
}

TEST_CASE("the KnowledgeBase interface serves both backends") {
  TripleStore store({{iri("http://e/a"), iri("http://e/p"), iri("http://e/b")}});
  LocalKb local(store, tab());

  TestServer ts;
  ts.svr.Get("/sparql", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(uri_rows({"http://e/b"}), "application/sparql-results+json");
  });
  ts.start();
  EndpointKb remote(ts.config());

  const std::string query = "SELECT ?uri WHERE { <http://e/a> <http://e/p> ?uri } LIMIT 5";
  for (KnowledgeBase* kb : std::vector<KnowledgeBase*>{&local, &remote}) {
    auto rows = kb->select(query);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].at("uri") == iri("http://e/b"));
  }
}
