#include "nl2sparql/kb.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cctype>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <thread>

namespace nl2sparql::kb {
namespace {

using nlohmann::json;

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /sparql (defaults to /)
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw NetworkError("endpoint url must start with http:// or https://: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

// case-insensitive whole-word LIMIT outside of quotes and IRIs
bool has_own_limit(const std::string& query) {
  for (std::size_t i = 0; i + 5 <= query.size(); ++i) {
    char c = query[i];
    if (c == '"') {  // skip the literal
      ++i;
      while (i < query.size() && query[i] != '"') i += (query[i] == '\\') ? 2 : 1;
      continue;
    }
    if (c == '<') {
      while (i < query.size() && query[i] != '>') ++i;
      continue;
    }
    if (std::toupper(static_cast<unsigned char>(c)) != 'L') continue;
    static const char* kw = "LIMIT";
    bool match = true;
    for (int k = 0; k < 5; ++k) {
      if (std::toupper(static_cast<unsigned char>(query[i + k])) != kw[k]) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    bool left_ok = i == 0 || std::isalnum(static_cast<unsigned char>(query[i - 1])) == 0;
    bool right_ok =
        i + 5 == query.size() || std::isalnum(static_cast<unsigned char>(query[i + 5])) == 0;
    if (left_ok && right_ok) return true;
  }
  return false;
}

RdfTerm term_from_json(const json& cell) {
  if (!cell.is_object() || !cell.contains("type") || !cell.contains("value")) {
    throw MalformedResponse("binding cell is missing type/value");
  }
  const std::string type = cell["type"].get<std::string>();
  const std::string value = cell["value"].get<std::string>();
  if (type == "uri") return RdfTerm::iri(value);
  if (type == "bnode") return RdfTerm::blank(value);
  if (type == "literal" || type == "typed-literal") {
    std::string lang, datatype;
    if (cell.contains("xml:lang")) lang = cell["xml:lang"].get<std::string>();
    if (cell.contains("datatype")) datatype = cell["datatype"].get<std::string>();
    return RdfTerm::literal(value, lang, datatype);
  }
  throw MalformedResponse("unknown term type '" + type + "'");
}

std::vector<Binding> parse_results(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("response is not JSON: ") + e.what());
  }
  if (!doc.contains("results") || !doc["results"].contains("bindings") ||
      !doc["results"]["bindings"].is_array()) {
    throw MalformedResponse("response lacks results.bindings");
  }
  std::vector<Binding> out;
  for (const auto& row : doc["results"]["bindings"]) {
    Binding b;
    for (auto it = row.begin(); it != row.end(); ++it) {
      b.emplace(it.key(), term_from_json(it.value()));
    }
    out.push_back(std::move(b));
  }
  return out;
}

json results_to_json(const std::vector<Binding>& bindings) {
  json rows = json::array();
  std::vector<std::string> vars;
  for (const auto& b : bindings) {
    json row = json::object();
    for (const auto& [var, term] : b) {
      if (std::find(vars.begin(), vars.end(), var) == vars.end()) vars.push_back(var);
      json cell;
      switch (term.kind) {
        case TermKind::Iri: cell["type"] = "uri"; break;
        case TermKind::Blank: cell["type"] = "bnode"; break;
        case TermKind::Literal: cell["type"] = "literal"; break;
      }
      cell["value"] = term.value;
      if (!term.lang.empty()) cell["xml:lang"] = term.lang;
      if (!term.datatype.empty()) cell["datatype"] = term.datatype;
      row[var] = std::move(cell);
    }
    rows.push_back(std::move(row));
  }
  return json{{"head", {{"vars", vars}}}, {"results", {{"bindings", rows}}}};
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::filesystem::path cache_file(const EndpointConfig& cfg, const std::string& query) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.url + '\n' + query)));
  return std::filesystem::path(cfg.cache_dir) / (std::string(hex) + ".json");
}

// one page fetch with retry/backoff; 4xx is terminal, 5xx and transport
// failures are retried
std::string fetch_page(const EndpointConfig& cfg, const SplitUrl& url,
                       const std::string& query) {
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg.backoff_ms * (1 << (attempt - 1))));
    }
    httplib::Client client(url.base);
    client.set_connection_timeout(cfg.timeout_s, 0);
    client.set_read_timeout(cfg.timeout_s, 0);
    httplib::Headers headers = {{"Accept", "application/sparql-results+json"}};

    httplib::Result res;
    if (query.size() <= 1500) {
      std::string target = url.path + "?query=" + httplib::detail::encode_query_param(query);
      res = client.Get(target, headers);
    } else {
      httplib::Params params = {{"query", query}};
      res = client.Post(url.path, headers, params);
    }

    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
      if (attempt == cfg.max_retries) throw HttpError(res->status, last_error);
      continue;
    }
    if (res->status != 200) {
      throw HttpError(res->status, "endpoint answered " + std::to_string(res->status));
    }
    return res->body;
  }
  throw NetworkError("endpoint unreachable after " + std::to_string(cfg.max_retries + 1) +
                     " attempts (" + last_error + ")");
}

}  // namespace

std::vector<Binding> query_endpoint(const EndpointConfig& config, const std::string& query) {
  const bool caching = !config.cache_dir.empty();
  std::filesystem::path cpath;
  if (caching) {
    cpath = cache_file(config, query);
    std::ifstream in(cpath);
    if (in) {
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::exception&) {
        doc = nullptr;  // corrupt cache entries are refetched
      }
      if (doc.is_object() && doc.value("query", "") == query && doc.value("url", "") == config.url) {
        return parse_results(doc["response"].dump());
      }
    }
  }

  SplitUrl url = split_url(config.url);
  std::vector<Binding> all;
  if (has_own_limit(query)) {
    all = parse_results(fetch_page(config, url, query));
  } else {
    for (std::size_t offset = 0;; offset += config.page_size) {
      std::string paged = query + " LIMIT " + std::to_string(config.page_size) + " OFFSET " +
                          std::to_string(offset);
      std::vector<Binding> page = parse_results(fetch_page(config, url, paged));
      all.insert(all.end(), page.begin(), page.end());
      if (page.size() < config.page_size) break;
    }
  }

  if (caching) {
    std::filesystem::create_directories(cpath.parent_path());
    json doc = {{"url", config.url}, {"query", query}, {"response", results_to_json(all)}};
    std::ofstream out(cpath);
    out << doc.dump(1) << "\n";
  }
  return all;
}

}  // namespace nl2sparql::kb
