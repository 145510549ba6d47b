#include "nl2sparql/codec.hpp"

#include "codec_internal.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace nl2sparql::codec {
namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c == '_'; }

std::string to_upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// Keywords the lexer recognizes, before ORDER/GROUP + BY merging.
const std::set<std::string>& keyword_words() {
  static const std::set<std::string> kw = {"SELECT", "ASK",   "DISTINCT", "WHERE", "FILTER",
                                           "ORDER",  "GROUP", "BY",       "LIMIT", "UNION",
                                           "ASC",    "DESC",  "PREFIX"};
  return kw;
}

std::string render_literal(std::string_view content, std::string_view lang) {
  std::string out = "\"";
  for (char c : content) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  out += '"';
  if (!lang.empty()) {
    out += '@';
    out += lang;
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) words.emplace_back(s.substr(start, i - start));
  }
  return words;
}

// Prefix labels may not shadow the reserved token families: a label L is
// banned when some reserved token has the shape L_rest, since label_local
// decoding splits at the first underscore.
void validate_tables(const PrefixTable& prefixes, const ReplacementTable& replacements) {
  std::set<std::string> banned = {"var", "lang", "iri", "quot"};
  for (const auto& rule : replacements.rules()) {
    auto us = rule.token.find('_');
    if (us != std::string::npos) banned.insert(rule.token.substr(0, us));
  }
  for (const auto& entry : prefixes.entries()) {
    if (banned.count(entry.label) != 0) {
      throw TableError("prefix label '" + entry.label +
                       "' collides with a reserved token family");
    }
  }
}

struct IriEncoder {
  const PrefixTable& passed;
  const PrefixTable& working;  // passed plus inline PREFIX declarations
  const EncodeOptions& opts;

  // Canonical token (or prefixed name) for a full IRI, resolved against the
  // passed table only, so that decode with the same table can invert it.
  std::string token_for_iri(const std::string& iri) const {
    auto split = passed.shorten(iri);
    if (split) {
      const auto& [label, local] = *split;
      if (!local.empty() && is_valid_token(local)) return label + "_" + local;
      if (!opts.raw_iri_passthrough) {
        throw LexError("IRI <" + iri + "> has a local name that cannot form a token");
      }
    }
    if (opts.raw_iri_passthrough) return "iri_" + escape_word(iri);
    throw UnknownNamespace("no prefix table entry covers <" + iri + ">");
  }

  std::string surface_for_iri(const std::string& iri) const {
    auto split = passed.shorten(iri);
    if (split) {
      const auto& [label, local] = *split;
      if (!local.empty() && is_valid_token(local)) return label + ":" + local;
      if (!opts.raw_iri_passthrough) {
        throw LexError("IRI <" + iri + "> has a local name that cannot form a token");
      }
    }
    if (opts.raw_iri_passthrough) return "<" + iri + ">";
    throw UnknownNamespace("no prefix table entry covers <" + iri + ">");
  }

  std::string resolve_prefixed(const detail::Lexeme& lx) const {
    if (lx.second.empty()) {
      throw LexError("prefixed name '" + lx.text + ":' is missing its local name");
    }
    return working.expand(lx.text, lx.second) ;
  }
};

}  // namespace

bool is_valid_token(std::string_view token) {
  if (token.empty()) return false;
  return std::all_of(token.begin(), token.end(),
                     [](unsigned char c) { return is_word_char(c); });
}

std::string escape_word(std::string_view word) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  out.reserve(word.size());
  for (unsigned char c : word) {
    if (std::isalnum(c) != 0) {
      out += static_cast<char>(c);
    } else {
      out += '_';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::string unescape_word(std::string_view word) {
  auto hex_val = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  out.reserve(word.size());
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (word[i] != '_') {
      out += word[i];
      continue;
    }
    if (i + 2 >= word.size()) throw UnknownToken("truncated escape in '" + std::string(word) + "'");
    int hi = hex_val(word[i + 1]);
    int lo = hex_val(word[i + 2]);
    if (hi < 0 || lo < 0) throw UnknownToken("malformed escape in '" + std::string(word) + "'");
    out += static_cast<char>(hi * 16 + lo);
    i += 2;
  }
  return out;
}

// --- PrefixTable ------------------------------------------------------------

void PrefixTable::add(std::string label, std::string ns) {
  if (label.empty() || std::isalpha(static_cast<unsigned char>(label[0])) == 0 ||
      !std::all_of(label.begin(), label.end(),
                   [](unsigned char c) { return std::isalnum(c) != 0; })) {
    throw TableError("invalid prefix label '" + label + "' (expected [A-Za-z][A-Za-z0-9]*)");
  }
  if (ns.empty()) throw TableError("empty namespace for prefix label '" + label + "'");
  for (const auto& e : entries_) {
    if (e.label == label) throw TableError("duplicate prefix label '" + label + "'");
    if (e.ns == ns) {
      throw TableError("namespace <" + ns + "> is already bound to label '" + e.label + "'");
    }
  }
  entries_.push_back({std::move(label), std::move(ns)});
}

PrefixTable PrefixTable::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TableError("cannot open prefix table file: " + path.string());
  PrefixTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw TableError(path.string() + ":" + std::to_string(lineno) +
                       ": expected label<TAB>namespace");
    }
    table.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return table;
}

PrefixTable PrefixTable::dbpedia_defaults() {
  PrefixTable t;
  t.add("dbr", "http://dbpedia.org/resource/");
  t.add("dbo", "http://dbpedia.org/ontology/");
  t.add("dbp", "http://dbpedia.org/property/");
  t.add("dbc", "http://dbpedia.org/resource/Category:");
  t.add("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#");
  t.add("rdfs", "http://www.w3.org/2000/01/rdf-schema#");
  t.add("xsd", "http://www.w3.org/2001/XMLSchema#");
  t.add("foaf", "http://xmlns.com/foaf/0.1/");
  t.add("dct", "http://purl.org/dc/terms/");
  return t;
}

const PrefixTable::Entry* PrefixTable::find_label(std::string_view label) const {
  for (const auto& e : entries_) {
    if (e.label == label) return &e;
  }
  return nullptr;
}

std::optional<std::pair<std::string, std::string>> PrefixTable::shorten(
    std::string_view iri) const {
  const Entry* best = nullptr;
  for (const auto& e : entries_) {
    if (iri.size() > e.ns.size() && iri.substr(0, e.ns.size()) == e.ns) {
      if (best == nullptr || e.ns.size() > best->ns.size()) best = &e;
    }
  }
  if (best == nullptr) return std::nullopt;
  return std::make_pair(best->label, std::string(iri.substr(best->ns.size())));
}

std::string PrefixTable::expand(std::string_view label, std::string_view local) const {
  const Entry* e = find_label(label);
  if (e == nullptr) throw UnknownNamespace("undeclared prefix label '" + std::string(label) + "'");
  return e->ns + std::string(local);
}

// --- ReplacementTable -------------------------------------------------------

ReplacementTable ReplacementTable::builtin() {
  ReplacementTable t;
  t.rules_ = {
      {"SELECT", "select"},     {"ASK", "ask"},
      {"DISTINCT", "distinct"}, {"WHERE", "where"},
      {"FILTER", "filter"},     {"ORDER BY", "order_by"},
      {"GROUP BY", "group_by"}, {"LIMIT", "limit"},
      {"UNION", "union"},       {"ASC", "asc"},
      {"DESC", "desc"},         {"{", "brack_open"},
      {"}", "brack_close"},     {"(", "par_open"},
      {")", "par_close"},       {".", "sep_dot"},
      {";", "sep_semicolon"},   {"*", "wildcard"},
      {"<", "math_lt"},         {">", "math_gt"},
      {"<=", "math_leq"},       {">=", "math_geq"},
      {"=", "math_eq"},         {"!=", "math_neq"},
  };
  t.validate();
  return t;
}

ReplacementTable ReplacementTable::with_overrides(const std::filesystem::path& path) {
  ReplacementTable t = builtin();
  std::ifstream in(path);
  if (!in) throw TableError("cannot open replacement table file: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw TableError(path.string() + ":" + std::to_string(lineno) +
                       ": expected surface<TAB>token");
    }
    std::string surface = line.substr(0, tab);
    std::string token = line.substr(tab + 1);
    auto it = std::find_if(t.rules_.begin(), t.rules_.end(),
                           [&](const Rule& r) { return r.surface == surface; });
    if (it == t.rules_.end()) {
      throw TableError(path.string() + ":" + std::to_string(lineno) + ": unknown surface '" +
                       surface + "'");
    }
    it->token = std::move(token);
  }
  t.validate();
  return t;
}

void ReplacementTable::validate() const {
  std::set<std::string_view> surfaces, tokens;
  for (const auto& rule : rules_) {
    if (!is_valid_token(rule.token)) {
      throw TableError("replacement token '" + rule.token + "' is not [A-Za-z0-9_]+");
    }
    if (rule.token == "quot_open" || rule.token == "quot_close" ||
        rule.token.rfind("var_", 0) == 0 || rule.token.rfind("lang_", 0) == 0 ||
        rule.token.rfind("iri_", 0) == 0) {
      throw TableError("replacement token '" + rule.token + "' collides with a structural form");
    }
    if (std::all_of(rule.token.begin(), rule.token.end(),
                    [](unsigned char c) { return std::isdigit(c) != 0; })) {
      throw TableError("replacement token '" + rule.token + "' collides with numeric literals");
    }
    if (!surfaces.insert(rule.surface).second) {
      throw TableError("duplicate replacement surface '" + rule.surface + "'");
    }
    if (!tokens.insert(rule.token).second) {
      throw TableError("duplicate replacement token '" + rule.token + "'");
    }
  }
}

const ReplacementTable::Rule* ReplacementTable::by_surface(std::string_view surface) const {
  for (const auto& r : rules_) {
    if (r.surface == surface) return &r;
  }
  return nullptr;
}

const ReplacementTable::Rule* ReplacementTable::by_token(std::string_view token) const {
  for (const auto& r : rules_) {
    if (r.token == token) return &r;
  }
  return nullptr;
}

// --- lexer ------------------------------------------------------------------

namespace detail {

std::vector<Lexeme> lex(std::string_view in) {
  std::vector<Lexeme> out;
  std::size_t i = 0;
  const std::size_t n = in.size();
  auto fail = [&](std::size_t pos, const std::string& msg) -> void {
    throw LexError(msg + " at offset " + std::to_string(pos));
  };

  while (i < n) {
    unsigned char c = static_cast<unsigned char>(in[i]);
    if (std::isspace(c) != 0) {
      ++i;
      continue;
    }
    if (c == '#') {  // comment to end of line
      while (i < n && in[i] != '\n') ++i;
      continue;
    }
    const std::size_t start = i;

    if (std::isalpha(c) != 0 || c == '_') {
      std::size_t j = i;
      while (j < n && is_word_char(static_cast<unsigned char>(in[j]))) ++j;
      std::string word(in.substr(i, j - i));
      if (j < n && in[j] == ':') {
        // prefixed name: label ':' local, where the local name may not end
        // with '.' (a trailing dot is the triple terminator)
        std::size_t k = j + 1;
        while (k < n && (is_word_char(static_cast<unsigned char>(in[k])) || in[k] == '.' ||
                         in[k] == '-')) {
          ++k;
        }
        while (k > j + 1 && in[k - 1] == '.') --k;
        out.push_back({LexKind::PrefixedName, word, std::string(in.substr(j + 1, k - j - 1)),
                       start});
        i = k;
        continue;
      }
      std::string up = to_upper(word);
      if (keyword_words().count(up) == 0) fail(start, "unexpected identifier '" + word + "'");
      out.push_back({up == "PREFIX" ? LexKind::Prefix : LexKind::Keyword, up, "", start});
      i = j;
      continue;
    }

    if (std::isdigit(c) != 0) {
      std::size_t j = i;
      while (j < n && std::isdigit(static_cast<unsigned char>(in[j])) != 0) ++j;
      if (j < n && in[j] == '.' && j + 1 < n &&
          std::isdigit(static_cast<unsigned char>(in[j + 1])) != 0) {
        fail(start, "decimal literals are not supported");
      }
      out.push_back({LexKind::Number, std::string(in.substr(i, j - i)), "", start});
      i = j;
      continue;
    }

    switch (c) {
      case '?': {
        std::size_t j = i + 1;
        while (j < n && is_word_char(static_cast<unsigned char>(in[j]))) ++j;
        if (j == i + 1) fail(start, "empty variable name");
        out.push_back({LexKind::Var, std::string(in.substr(i + 1, j - i - 1)), "", start});
        i = j;
        continue;
      }
      case '<': {
        if (i + 1 < n && in[i + 1] == '=') {
          out.push_back({LexKind::Punct, "<=", "", start});
          i += 2;
          continue;
        }
        // an IRI if a '>' closes it with no whitespace or quote in between
        std::size_t j = i + 1;
        while (j < n) {
          char d = in[j];
          if (d == '>') break;
          if (std::isspace(static_cast<unsigned char>(d)) != 0 || d == '"' || d == '<') break;
          ++j;
        }
        if (j < n && in[j] == '>') {
          out.push_back({LexKind::Iri, std::string(in.substr(i + 1, j - i - 1)), "", start});
          i = j + 1;
          continue;
        }
        out.push_back({LexKind::Punct, "<", "", start});
        ++i;
        continue;
      }
      case '>': {
        if (i + 1 < n && in[i + 1] == '=') {
          out.push_back({LexKind::Punct, ">=", "", start});
          i += 2;
        } else {
          out.push_back({LexKind::Punct, ">", "", start});
          ++i;
        }
        continue;
      }
      case '!': {
        if (i + 1 < n && in[i + 1] == '=') {
          out.push_back({LexKind::Punct, "!=", "", start});
          i += 2;
          continue;
        }
        fail(start, "'!' is only supported as part of '!='");
        continue;
      }
      case '=': {
        out.push_back({LexKind::Punct, "=", "", start});
        ++i;
        continue;
      }
      case '"': {
        std::string content;
        std::size_t j = i + 1;
        bool closed = false;
        while (j < n) {
          char d = in[j];
          if (d == '"') {
            closed = true;
            ++j;
            break;
          }
          if (d == '\\') {
            if (j + 1 >= n) fail(start, "truncated escape in string literal");
            char e = in[j + 1];
            switch (e) {
              case '"': content += '"'; break;
              case '\\': content += '\\'; break;
              case 'n': content += '\n'; break;
              case 't': content += '\t'; break;
              case 'r': content += '\r'; break;
              default: fail(j, "unsupported escape in string literal");
            }
            j += 2;
            continue;
          }
          content += d;
          ++j;
        }
        if (!closed) fail(start, "unterminated string literal");
        std::string lang;
        if (j < n && in[j] == '@') {
          std::size_t k = j + 1;
          while (k < n && (std::isalnum(static_cast<unsigned char>(in[k])) != 0 || in[k] == '-')) {
            ++k;
          }
          if (k == j + 1) fail(j, "empty language tag");
          lang = std::string(in.substr(j + 1, k - j - 1));
          j = k;
        }
        if (j + 1 < n && in[j] == '^' && in[j + 1] == '^') {
          fail(j, "typed literals are not supported");
        }
        out.push_back({LexKind::Literal, std::move(content), std::move(lang), start});
        i = j;
        continue;
      }
      case '{':
      case '}':
      case '(':
      case ')':
      case '.':
      case ';':
      case '*': {
        out.push_back({LexKind::Punct, std::string(1, static_cast<char>(c)), "", start});
        ++i;
        continue;
      }
      default:
        fail(start, std::string("unsupported character '") + static_cast<char>(c) + "'");
    }
  }

  // merge the two-word keywords; a dangling ORDER, GROUP or BY is an error
  std::vector<Lexeme> merged;
  merged.reserve(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const Lexeme& lx = out[k];
    if (lx.kind == LexKind::Keyword && (lx.text == "ORDER" || lx.text == "GROUP")) {
      if (k + 1 < out.size() && out[k + 1].kind == LexKind::Keyword && out[k + 1].text == "BY") {
        merged.push_back({LexKind::Keyword, lx.text + " BY", "", lx.pos});
        ++k;
        continue;
      }
      throw LexError(lx.text + " must be followed by BY at offset " + std::to_string(lx.pos));
    }
    if (lx.kind == LexKind::Keyword && lx.text == "BY") {
      throw LexError("BY without ORDER or GROUP at offset " + std::to_string(lx.pos));
    }
    merged.push_back(lx);
  }
  return merged;
}

std::vector<Lexeme> strip_prologue(const std::vector<Lexeme>& lexemes, PrefixTable& table) {
  std::size_t i = 0;
  while (i < lexemes.size() && lexemes[i].kind == LexKind::Prefix) {
    if (i + 2 >= lexemes.size() || lexemes[i + 1].kind != LexKind::PrefixedName ||
        !lexemes[i + 1].second.empty() || lexemes[i + 2].kind != LexKind::Iri) {
      throw LexError("malformed PREFIX declaration at offset " +
                     std::to_string(lexemes[i].pos));
    }
    const std::string& label = lexemes[i + 1].text;
    const std::string& ns = lexemes[i + 2].text;
    const PrefixTable::Entry* existing = table.find_label(label);
    if (existing == nullptr) {
      table.add(label, ns);  // rejects a second label for an already-bound namespace
    } else if (existing->ns != ns) {
      throw TableError("PREFIX re-declares label '" + label + "' with a different namespace");
    }
    i += 3;
  }
  std::vector<Lexeme> body(lexemes.begin() + static_cast<std::ptrdiff_t>(i), lexemes.end());
  for (const auto& lx : body) {
    if (lx.kind == LexKind::Prefix) {
      throw LexError("PREFIX is only allowed in the query prologue, at offset " +
                     std::to_string(lx.pos));
    }
  }
  return body;
}

}  // namespace detail

// --- encode / decode / normalize ---------------------------------------------

std::string EncodedQuery::joined() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

EncodedQuery EncodedQuery::from_line(std::string_view line) {
  EncodedQuery q;
  q.tokens = split_whitespace(line);
  return q;
}

EncodedQuery encode(std::string_view query, const PrefixTable& prefixes,
                    const ReplacementTable& replacements, const EncodeOptions& opts) {
  validate_tables(prefixes, replacements);
  PrefixTable working = prefixes;
  auto body = detail::strip_prologue(detail::lex(query), working);
  IriEncoder enc{prefixes, working, opts};

  EncodedQuery out;
  for (const auto& lx : body) {
    switch (lx.kind) {
      case detail::LexKind::Keyword:
      case detail::LexKind::Punct: {
        const auto* rule = replacements.by_surface(lx.text);
        if (rule == nullptr) throw TableError("no replacement rule for surface '" + lx.text + "'");
        out.tokens.push_back(rule->token);
        break;
      }
      case detail::LexKind::Var:
        out.tokens.push_back("var_" + lx.text);
        break;
      case detail::LexKind::PrefixedName:
        out.tokens.push_back(enc.token_for_iri(enc.resolve_prefixed(lx)));
        break;
      case detail::LexKind::Iri:
        out.tokens.push_back(enc.token_for_iri(lx.text));
        break;
      case detail::LexKind::Literal: {
        out.tokens.push_back("quot_open");
        for (const auto& word : split_whitespace(lx.text)) {
          out.tokens.push_back(escape_word(word));
        }
        out.tokens.push_back("quot_close");
        if (!lx.second.empty()) out.tokens.push_back("lang_" + escape_word(lx.second));
        break;
      }
      case detail::LexKind::Number:
        out.tokens.push_back(lx.text);
        break;
      case detail::LexKind::Prefix:
        throw LexError("PREFIX is only allowed in the query prologue");
    }
  }
  return out;
}

std::string decode(const EncodedQuery& encoded, const PrefixTable& prefixes,
                   const ReplacementTable& replacements) {
  validate_tables(prefixes, replacements);
  std::vector<std::string> parts;
  const auto& toks = encoded.tokens;
  std::size_t i = 0;
  while (i < toks.size()) {
    const std::string& tok = toks[i];
    if (const auto* rule = replacements.by_token(tok)) {
      parts.push_back(rule->surface);
      ++i;
      continue;
    }
    if (tok.rfind("var_", 0) == 0 && tok.size() > 4) {
      parts.push_back("?" + tok.substr(4));
      ++i;
      continue;
    }
    if (tok == "quot_open") {
      ++i;
      std::vector<std::string> words;
      while (i < toks.size() && toks[i] != "quot_close") {
        words.push_back(unescape_word(toks[i]));
        ++i;
      }
      if (i == toks.size()) throw UnknownToken("unterminated literal: missing quot_close");
      ++i;
      std::string content;
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (w > 0) content += ' ';
        content += words[w];
      }
      std::string lang;
      if (i < toks.size() && toks[i].rfind("lang_", 0) == 0 && toks[i].size() > 5) {
        lang = unescape_word(toks[i].substr(5));
        ++i;
      }
      parts.push_back(render_literal(content, lang));
      continue;
    }
    if (tok.rfind("lang_", 0) == 0) {
      throw UnknownToken("language tag token '" + tok + "' outside a literal");
    }
    if (tok.rfind("iri_", 0) == 0 && tok.size() > 4) {
      parts.push_back("<" + unescape_word(tok.substr(4)) + ">");
      ++i;
      continue;
    }
    if (std::all_of(tok.begin(), tok.end(),
                    [](unsigned char c) { return std::isdigit(c) != 0; })) {
      parts.push_back(tok);
      ++i;
      continue;
    }
    auto us = tok.find('_');
    if (us != std::string::npos && us > 0 && us + 1 < tok.size()) {
      std::string label = tok.substr(0, us);
      if (prefixes.find_label(label) != nullptr) {
        parts.push_back(label + ":" + tok.substr(us + 1));
        ++i;
        continue;
      }
    }
    throw UnknownToken("cannot decode token '" + tok + "'");
  }
  std::string out;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (p > 0) out += ' ';
    out += parts[p];
  }
  return out;
}

std::string normalize(std::string_view query, const PrefixTable& prefixes,
                      const ReplacementTable& replacements, const EncodeOptions& opts) {
  validate_tables(prefixes, replacements);
  PrefixTable working = prefixes;
  auto body = detail::strip_prologue(detail::lex(query), working);
  IriEncoder enc{prefixes, working, opts};

  std::vector<std::string> parts;
  for (const auto& lx : body) {
    switch (lx.kind) {
      case detail::LexKind::Keyword:
      case detail::LexKind::Punct:
        parts.push_back(lx.text);
        break;
      case detail::LexKind::Var:
        parts.push_back("?" + lx.text);
        break;
      case detail::LexKind::PrefixedName:
        parts.push_back(enc.surface_for_iri(enc.resolve_prefixed(lx)));
        break;
      case detail::LexKind::Iri:
        parts.push_back(enc.surface_for_iri(lx.text));
        break;
      case detail::LexKind::Literal: {
        std::string content;
        auto words = split_whitespace(lx.text);
        for (std::size_t w = 0; w < words.size(); ++w) {
          if (w > 0) content += ' ';
          content += words[w];
        }
        parts.push_back(render_literal(content, lx.second));
        break;
      }
      case detail::LexKind::Number:
        parts.push_back(lx.text);
        break;
      case detail::LexKind::Prefix:
        throw LexError("PREFIX is only allowed in the query prologue");
    }
  }
  std::string out;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (p > 0) out += ' ';
    out += parts[p];
  }
  return out;
}

}  // namespace nl2sparql::codec
