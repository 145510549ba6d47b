#include "nl2sparql/kb.hpp"

#include "codec_internal.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace nl2sparql::kb {
namespace {

// Sort key: the term value dominates so result ordering follows the data,
// with kind/lang/datatype as tie breakers for totality.
bool term_less(const RdfTerm& a, const RdfTerm& b) {
  if (a.value != b.value) return a.value < b.value;
  if (a.kind != b.kind) return a.kind < b.kind;
  if (a.lang != b.lang) return a.lang < b.lang;
  return a.datatype < b.datatype;
}

bool row_less(const Binding& a, const Binding& b, const std::vector<std::string>& vars) {
  for (const auto& v : vars) {
    const RdfTerm& ta = a.at(v);
    const RdfTerm& tb = b.at(v);
    if (term_less(ta, tb)) return true;
    if (term_less(tb, ta)) return false;
  }
  return false;
}

}  // namespace

TripleStore::TripleStore(std::vector<Triple> triples) : triples_(std::move(triples)) {
  std::sort(triples_.begin(), triples_.end());
  triples_.erase(std::unique(triples_.begin(), triples_.end()), triples_.end());
  for (std::size_t i = 0; i < triples_.size(); ++i) {
    subject_index_[triples_[i].s].push_back(i);
    predicate_index_[triples_[i].p].push_back(i);
  }
}

const std::vector<std::size_t>& TripleStore::by_subject(const RdfTerm& s) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = subject_index_.find(s);
  return it == subject_index_.end() ? kEmpty : it->second;
}

const std::vector<std::size_t>& TripleStore::by_predicate(const RdfTerm& p) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = predicate_index_.find(p);
  return it == predicate_index_.end() ? kEmpty : it->second;
}

// --- N-Triples style loader ---------------------------------------------------

namespace {

struct LineScanner {
  std::string_view line;
  std::size_t pos = 0;
  std::size_t lineno;
  std::string file;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(file + ":" + std::to_string(lineno) + ": " + msg);
  }

  void skip_ws() {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  }

  bool done() {
    skip_ws();
    return pos >= line.size();
  }

  RdfTerm term() {
    skip_ws();
    if (pos >= line.size()) fail("unexpected end of line");
    char c = line[pos];
    if (c == '<') {
      auto end = line.find('>', pos + 1);
      if (end == std::string_view::npos) fail("unterminated IRI");
      RdfTerm t = RdfTerm::iri(std::string(line.substr(pos + 1, end - pos - 1)));
      pos = end + 1;
      return t;
    }
    if (c == '_') {
      if (pos + 1 >= line.size() || line[pos + 1] != ':') fail("malformed blank node");
      std::size_t end = pos + 2;
      while (end < line.size() && (std::isalnum(static_cast<unsigned char>(line[end])) != 0 ||
                                   line[end] == '_')) {
        ++end;
      }
      if (end == pos + 2) fail("empty blank node label");
      RdfTerm t = RdfTerm::blank(std::string(line.substr(pos + 2, end - pos - 2)));
      pos = end;
      return t;
    }
    if (c == '"') {
      std::string content;
      std::size_t i = pos + 1;
      bool closed = false;
      while (i < line.size()) {
        char d = line[i];
        if (d == '"') {
          closed = true;
          ++i;
          break;
        }
        if (d == '\\') {
          if (i + 1 >= line.size()) fail("truncated escape in literal");
          switch (line[i + 1]) {
            case '"': content += '"'; break;
            case '\\': content += '\\'; break;
            case 'n': content += '\n'; break;
            case 't': content += '\t'; break;
            case 'r': content += '\r'; break;
            default: fail("unsupported escape in literal");
          }
          i += 2;
          continue;
        }
        content += d;
        ++i;
      }
      if (!closed) fail("unterminated literal");
      std::string lang, datatype;
      if (i < line.size() && line[i] == '@') {
        std::size_t end = i + 1;
        while (end < line.size() && (std::isalnum(static_cast<unsigned char>(line[end])) != 0 ||
                                     line[end] == '-')) {
          ++end;
        }
        if (end == i + 1) fail("empty language tag");
        lang = std::string(line.substr(i + 1, end - i - 1));
        i = end;
      } else if (i + 1 < line.size() && line[i] == '^' && line[i + 1] == '^') {
        if (i + 2 >= line.size() || line[i + 2] != '<') fail("malformed datatype IRI");
        auto end = line.find('>', i + 3);
        if (end == std::string_view::npos) fail("unterminated datatype IRI");
        datatype = std::string(line.substr(i + 3, end - i - 3));
        i = end + 1;
      }
      pos = i;
      return RdfTerm::literal(std::move(content), std::move(lang), std::move(datatype));
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace

TripleStore TripleStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open triple file: " + path.string());
  std::vector<Triple> triples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;

    LineScanner scan{line, 0, lineno, path.string()};
    Triple t;
    t.s = scan.term();
    if (t.s.kind == TermKind::Literal) scan.fail("literal subjects are not allowed");
    t.p = scan.term();
    if (t.p.kind != TermKind::Iri) scan.fail("predicates must be IRIs");
    t.o = scan.term();
    scan.skip_ws();
    if (scan.pos >= line.size() || line[scan.pos] != '.') scan.fail("expected terminating '.'");
    ++scan.pos;
    if (!scan.done()) scan.fail("trailing content after '.'");
    triples.push_back(std::move(t));
  }
  return TripleStore(std::move(triples));
}

// --- restricted SELECT parser -------------------------------------------------

SelectQuery SelectQuery::parse(std::string_view text, const codec::PrefixTable& prefixes) {
  namespace cd = codec::detail;
  std::vector<cd::Lexeme> body;
  codec::PrefixTable working = prefixes;
  try {
    body = cd::strip_prologue(cd::lex(text), working);
  } catch (const codec::CodecError& e) {
    throw UnsupportedQuery(std::string("cannot parse query: ") + e.what());
  }

  std::size_t i = 0;
  auto fail = [&](const std::string& msg) -> void { throw UnsupportedQuery(msg); };
  auto peek_is = [&](cd::LexKind kind, const char* txt) {
    return i < body.size() && body[i].kind == kind && (txt == nullptr || body[i].text == txt);
  };

  SelectQuery q;
  if (!peek_is(cd::LexKind::Keyword, "SELECT")) fail("only SELECT queries are supported locally");
  ++i;
  if (peek_is(cd::LexKind::Keyword, "DISTINCT")) {
    q.distinct = true;
    ++i;
  }
  bool star = false;
  if (peek_is(cd::LexKind::Punct, "*")) {
    star = true;
    ++i;
  } else {
    while (peek_is(cd::LexKind::Var, nullptr)) {
      q.vars.push_back(body[i].text);
      ++i;
    }
    if (q.vars.empty()) fail("SELECT needs a projection list or *");
  }
  if (peek_is(cd::LexKind::Keyword, "WHERE")) ++i;
  if (!peek_is(cd::LexKind::Punct, "{")) fail("expected '{' after SELECT clause");
  ++i;

  auto term_or_var = [&](bool allow_literal) -> TermOrVar {
    if (i >= body.size()) fail("unexpected end of query in a triple pattern");
    const cd::Lexeme& lx = body[i];
    ++i;
    switch (lx.kind) {
      case cd::LexKind::Var:
        return lx.text;
      case cd::LexKind::Iri:
        return RdfTerm::iri(lx.text);
      case cd::LexKind::PrefixedName:
        return RdfTerm::iri(working.expand(lx.text, lx.second));
      case cd::LexKind::Literal:
        if (!allow_literal) fail("literals are only allowed in the object position");
        return RdfTerm::literal(lx.text, lx.second);
      case cd::LexKind::Number:
        if (!allow_literal) fail("literals are only allowed in the object position");
        return RdfTerm::literal(lx.text);
      default:
        fail("unsupported token in a triple pattern: '" + lx.text + "'");
    }
    return std::string();  // unreachable
  };

  std::set<std::string> pattern_vars;
  while (!peek_is(cd::LexKind::Punct, "}")) {
    Pattern p;
    p.s = term_or_var(false);
    p.p = term_or_var(false);
    p.o = term_or_var(true);
    for (const TermOrVar* tv : {&p.s, &p.p, &p.o}) {
      if (const auto* v = std::get_if<std::string>(tv)) pattern_vars.insert(*v);
    }
    q.patterns.push_back(std::move(p));
    if (peek_is(cd::LexKind::Punct, ".")) ++i;  // the final pattern's dot is optional
  }
  ++i;  // '}'
  if (q.patterns.empty()) fail("empty WHERE block");

  if (peek_is(cd::LexKind::Keyword, "LIMIT")) {
    ++i;
    if (!peek_is(cd::LexKind::Number, nullptr)) fail("LIMIT needs an integer");
    try {
      q.limit = static_cast<std::size_t>(std::stoull(body[i].text));
    } catch (const std::out_of_range&) {
      fail("LIMIT value is out of range");
    }
    ++i;
  }
  if (i != body.size()) {
    fail("unsupported trailing clause starting at '" + body[i].text + "'");
  }

  if (star) {
    q.vars.assign(pattern_vars.begin(), pattern_vars.end());  // sorted by the set
    if (q.vars.empty()) fail("'*' projection with no variables in the patterns");
  } else {
    for (const auto& v : q.vars) {
      if (pattern_vars.count(v) == 0) {
        fail("projected variable ?" + v + " is not bound by any pattern");
      }
    }
  }
  return q;
}

// --- evaluator -----------------------------------------------------------------

std::vector<Binding> query_local(const TripleStore& store, const SelectQuery& query) {
  using Partial = std::map<std::string, RdfTerm>;
  std::vector<Partial> partials = {Partial{}};

  for (const auto& pattern : query.patterns) {
    std::vector<Partial> next;
    for (const auto& bound : partials) {
      auto resolve = [&](const TermOrVar& tv) -> const RdfTerm* {
        if (const auto* t = std::get_if<RdfTerm>(&tv)) return t;
        auto it = bound.find(std::get<std::string>(tv));
        return it == bound.end() ? nullptr : &it->second;
      };
      const RdfTerm* s = resolve(pattern.s);
      const RdfTerm* p = resolve(pattern.p);

      // candidate triples through the most selective available index
      const std::vector<std::size_t>* candidates = nullptr;
      std::vector<std::size_t> all;
      if (s != nullptr) {
        candidates = &store.by_subject(*s);
      } else if (p != nullptr) {
        candidates = &store.by_predicate(*p);
      } else {
        all.resize(store.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        candidates = &all;
      }

      for (std::size_t idx : *candidates) {
        const Triple& t = store.triples()[idx];
        Partial extended = bound;
        bool ok = true;
        auto unify = [&](const TermOrVar& tv, const RdfTerm& actual) {
          if (const auto* term = std::get_if<RdfTerm>(&tv)) {
            if (*term != actual) ok = false;
            return;
          }
          const auto& var = std::get<std::string>(tv);
          auto [it, inserted] = extended.emplace(var, actual);
          if (!inserted && it->second != actual) ok = false;
        };
        unify(pattern.s, t.s);
        if (ok) unify(pattern.p, t.p);
        if (ok) unify(pattern.o, t.o);
        if (ok) next.push_back(std::move(extended));
      }
    }
    partials = std::move(next);
  }

  std::vector<Binding> rows;
  rows.reserve(partials.size());
  for (const auto& bound : partials) {
    Binding row;
    for (const auto& v : query.vars) row.emplace(v, bound.at(v));
    rows.push_back(std::move(row));
  }

  std::sort(rows.begin(), rows.end(),
            [&](const Binding& a, const Binding& b) { return row_less(a, b, query.vars); });
  if (query.distinct) rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  if (query.limit && rows.size() > *query.limit) rows.resize(*query.limit);
  return rows;
}

std::vector<Binding> query_local(const TripleStore& store, std::string_view text,
                                 const codec::PrefixTable& prefixes) {
  return query_local(store, SelectQuery::parse(text, prefixes));
}

}  // namespace nl2sparql::kb
