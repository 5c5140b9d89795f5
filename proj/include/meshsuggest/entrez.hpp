#pragma once

// Live PubMed adapter over the E-utilities esearch endpoint. Used as an ATM
// mapper (query translation) and as a remote Boolean executor. Calls are
// serialized and spaced by a minimum interval.

#include <algorithm>
#include <chrono>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "meshsuggest/candidate_retrieval.hpp"
#include "meshsuggest/common.hpp"

namespace meshsuggest {

struct EntrezConfig {
  std::string base_url;  // scheme://host[:port], e.g. the eutils host
  std::string path = "/entrez/eutils/esearch.fcgi";
  std::string api_key;
  std::string tool = "meshsuggest";
  std::string email;
  std::chrono::milliseconds min_interval{340};
  std::size_t retmax = 100000;
};

/// Mappings from an esearch JSON response: each translationset entry's `to`
/// is scanned for tagged terms; [MeSH Terms] maps to the mesh category,
/// [Journal] and [Author] to theirs. Mappings keep the order of the
/// translation and carry their `from` text.
inline std::vector<Mapping> parse_translation(const nlohmann::json& response) {
  std::vector<Mapping> out;
  const auto& result = response.at("esearchresult");
  if (!result.contains("translationset")) return out;
  static const std::regex tagged(R"re("([^"]+)"\[([^\]]+)\]|([^\s"()\[\]]+)\[([^\]]+)\])re");
  for (const auto& entry : result.at("translationset")) {
    const auto from = entry.value("from", "");
    const auto to = entry.value("to", "");
    std::set<std::string> seen;
    for (auto it = std::sregex_iterator(to.begin(), to.end(), tagged); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      const std::string term = m[1].matched ? m[1].str() : m[3].str();
      const std::string tag = to_lower(m[1].matched ? m[2].str() : m[4].str());
      std::string category;
      if (tag == "mesh terms" || tag == "mesh") category = "mesh";
      else if (tag == "journal") category = "journal";
      else if (tag == "author") category = "author";
      else continue;
      if (!seen.insert(category + "|" + canonical_heading(term)).second) continue;
      out.push_back({term, 0.0, category, category == "mesh" ? "MSH" : "", from});
    }
  }
  return out;
}

/// PMIDs of an esearch JSON response.
inline std::set<std::string> parse_idlist(const nlohmann::json& response) {
  std::set<std::string> out;
  for (const auto& id : response.at("esearchresult").value("idlist", nlohmann::json::array()))
    out.insert(id.get<std::string>());
  return out;
}

class EntrezClient final : public MapperClient {
 public:
  explicit EntrezClient(EntrezConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw ConfigError("entrez base URL is not configured");
  }

  std::vector<Mapping> map(const std::string& text) const override {
    return parse_translation(get({{"term", text}, {"retmax", "0"}}));
  }

  bool concurrent() const override { return false; }

  std::set<std::string> search(const std::string& query, const std::optional<Date>& date_max) const {
    httplib::Params p{{"term", query}, {"retmax", std::to_string(cfg_.retmax)}};
    if (date_max) {
      p.emplace("datetype", "pdat");
      p.emplace("mindate", "1800/01/01");
      auto iso = date_max->iso();
      std::replace(iso.begin(), iso.end(), '-', '/');
      p.emplace("maxdate", iso);
    }
    return parse_idlist(get(std::move(p)));
  }

 private:
  nlohmann::json get(httplib::Params params) const {
    params.emplace("db", "pubmed");
    params.emplace("retmode", "json");
    params.emplace("tool", cfg_.tool);
    if (!cfg_.email.empty()) params.emplace("email", cfg_.email);
    if (!cfg_.api_key.empty()) params.emplace("api_key", cfg_.api_key);

    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    if (last_ && now - *last_ < cfg_.min_interval) std::this_thread::sleep_for(cfg_.min_interval - (now - *last_));
    last_ = std::chrono::steady_clock::now();

    httplib::Client client(cfg_.base_url);
    client.set_follow_location(true);
    const auto res = client.Get(cfg_.path, params, httplib::Headers{});
    if (!res) throw ClientUnavailable("entrez request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ClientUnavailable("entrez returned HTTP " + std::to_string(res->status));
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("esearchresult")) throw ClientUnavailable("entrez returned malformed JSON");
    return j;
  }

  EntrezConfig cfg_;
  mutable std::mutex mutex_;
  mutable std::optional<std::chrono::steady_clock::time_point> last_;
};

}  // namespace meshsuggest
