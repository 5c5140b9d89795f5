// meshsuggest command-line interface.
//
// Exit codes: 0 success, 1 configuration error, 2 data error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "meshsuggest/entrez.hpp"
#include "meshsuggest/pipeline.hpp"
#include "meshsuggest/service.hpp"

namespace ms = meshsuggest;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;

struct Common {
  ms::ResourcePaths paths;
  std::string umls_dir;
  std::string date_max;
  std::vector<std::string> methods;
  std::optional<int> kappa;
  bool binarize_qrels = false;
  bool strict_replay = false;
  std::size_t umls_top_k = 10;
  std::string entrez_url;
  std::string entrez_key;
  bool atm_live = false;
  bool live_search = false;
  std::string out;
};

void add_resources(CLI::App* app, Common& c) {
  app->add_option("--documents", c.paths.documents, "Document corpus (JSONL)");
  app->add_option("--mesh-tree", c.paths.mesh_tree, "MeSH tree (heading<TAB>tree_number)");
  app->add_option("--umls-dir", c.umls_dir, "Directory with MRCONSO.RRF, MRDEF.RRF, MRSTY.RRF, MRREL.RRF");
  app->add_option("--descriptions", c.paths.descriptions, "MeSH description corpus (JSONL)");
  app->add_option("--atm-fixture", c.paths.atm_fixture, "ATM replay file (JSONL)");
  app->add_option("--metamap-fixture", c.paths.metamap_fixture, "MetaMap replay file (JSONL)");
  app->add_option("--model-dir", c.paths.model_dir, "Directory of per-method ranker models");
  app->add_option("--boundaries", c.paths.boundaries, "Manual fragment boundaries (JSONL)");
  app->add_option("--umls-top-k", c.umls_top_k, "UMLS hits kept per clause")->capture_default_str();
  app->add_flag("--strict-replay", c.strict_replay, "Unknown replay inputs are errors");
  app->add_option("--entrez-url", c.entrez_url, "E-utilities base URL for live adapters");
  app->add_option("--entrez-api-key", c.entrez_key, "E-utilities API key (default: $MESHSUGGEST_ENTREZ_API_KEY)");
  app->add_flag("--atm-live", c.atm_live, "Use the live entrez translation as the ATM mapper");
}

void add_methods(CLI::App* app, Common& c, const std::string& fallback) {
  c.methods = {fallback};
  app->add_option("--method", c.methods, "atm, metamap, umls, fusion or all")->delimiter(',')->capture_default_str();
}

std::vector<ms::Method> parse_methods(const std::vector<std::string>& names, bool allow_fusion = true) {
  std::vector<ms::Method> out;
  for (const auto& n : names) {
    if (ms::to_lower(n) == "all") {
      out.assign(std::begin(ms::kBaseMethods), std::end(ms::kBaseMethods));
      if (allow_fusion) out.push_back(ms::Method::kFusion);
      continue;
    }
    const auto m = ms::method_from_name(n);
    if (!allow_fusion && m == ms::Method::kFusion) throw ms::ConfigError("fusion has no model of its own");
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

std::optional<ms::Date> parse_date(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    return ms::Date::parse(s);
  } catch (const ms::Error& e) {
    throw ms::ConfigError(std::string("--date-max: ") + e.what());
  }
}

void resolve_umls(Common& c) {
  if (c.umls_dir.empty()) return;
  const std::filesystem::path d(c.umls_dir);
  c.paths.conso = (d / "MRCONSO.RRF").string();
  c.paths.def = (d / "MRDEF.RRF").string();
  c.paths.sty = (d / "MRSTY.RRF").string();
  c.paths.rel = (d / "MRREL.RRF").string();
  for (const auto* p : {&c.paths.conso, &c.paths.def, &c.paths.sty, &c.paths.rel})
    if (!std::filesystem::exists(*p)) throw ms::ConfigError("file not found: " + *p);
}

std::shared_ptr<ms::EntrezClient> entrez(const Common& c) {
  ms::EntrezConfig cfg;
  cfg.base_url = c.entrez_url;
  cfg.api_key = c.entrez_key;
  if (cfg.api_key.empty())
    if (const char* env = std::getenv("MESHSUGGEST_ENTREZ_API_KEY")) cfg.api_key = env;
  if (!cfg.api_key.empty()) cfg.min_interval = std::chrono::milliseconds(110);
  return std::make_shared<ms::EntrezClient>(cfg);
}

ms::Resources load_resources(Common& c) {
  resolve_umls(c);
  for (const auto* p : {&c.paths.documents, &c.paths.mesh_tree, &c.paths.descriptions, &c.paths.atm_fixture,
                        &c.paths.metamap_fixture, &c.paths.qrels, &c.paths.boundaries})
    if (!p->empty() && !std::filesystem::exists(*p)) throw ms::ConfigError("file not found: " + *p);
  auto r = ms::Resources::load(c.paths, c.binarize_qrels ? ms::QrelsMode::kBinarize : ms::QrelsMode::kStrict,
                               c.strict_replay);
  r.umls_top_k = c.umls_top_k;
  if (c.atm_live || c.live_search) {
    auto client = entrez(c);
    if (c.atm_live) r.atm = client;
    if (c.live_search)
      r.remote_search = [client](const std::string& q, const std::optional<ms::Date>& d) { return client->search(q, d); };
  }
  return r;
}

std::ostream& output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw ms::ConfigError("cannot write " + path);
  return file;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ms::ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fragments to work on: a fragment dump, or the stripped eligible fragments
/// of a topics file.
std::vector<ms::Fragment> input_fragments(const std::string& dump, const std::string& topics, const ms::Resources& r) {
  if (!dump.empty()) {
    std::ifstream in(dump);
    if (!in) throw ms::ConfigError("cannot open " + dump);
    std::vector<ms::Fragment> out;
    for (auto& f : ms::read_fragments(in)) {
      if (f.pass_through) continue;
      auto id = f.fragment_id;
      auto s = ms::stripped_fragment(f);
      s.fragment_id = id;
      out.push_back(std::move(s));
    }
    return out;
  }
  if (topics.empty()) throw ms::ConfigError("give --fragments or --topics");
  std::vector<ms::Fragment> out;
  for (const auto& t : ms::ingest_topics(topics))
    for (auto& f : ms::eligible_fragments(t, r)) out.push_back(std::move(f));
  return out;
}

void write_candidates(std::ostream& out, const ms::Fragment& f, const std::string& method,
                      const std::vector<ms::MeshCandidate>& cands) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : cands) list.push_back(ms::candidate_to_json(c));
  nlohmann::json gold = nlohmann::json::array();
  for (const auto& g : f.gold_mesh) gold.push_back(g.heading);
  out << nlohmann::json{{"fragment_id", f.fragment_id}, {"method", method}, {"gold", gold}, {"suggestions", list}}
             .dump()
      << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MeSH term suggestion for Boolean queries"};
  app.require_subcommand(1);
  Common c;

  // parse
  auto* parse = app.add_subcommand("parse", "Parse a query and print its AST as JSON");
  std::string query_text, query_file;
  bool serialize_only = false;
  parse->add_option("--query", query_text, "Query text");
  parse->add_option("--file", query_file, "File holding one query");
  parse->add_flag("--serialize", serialize_only, "Print the normalized query text instead of JSON");

  // fragment
  auto* frag = app.add_subcommand("fragment", "Split topic queries into fragments (JSONL dump)");
  std::string topics_path;
  frag->add_option("--topics", topics_path, "Topics (JSONL)")->required();
  frag->add_option("--boundaries", c.paths.boundaries, "Manual fragment boundaries (JSONL)");
  frag->add_option("--out", c.out, "Output file (default stdout)");

  // suggest
  auto* suggest = app.add_subcommand("suggest", "Suggest MeSH headings for fragments");
  std::string fragments_path;
  add_resources(suggest, c);
  add_methods(suggest, c, "fusion");
  suggest->add_option("--fragments", fragments_path, "Fragment dump (JSONL)");
  suggest->add_option("--topics", topics_path, "Topics (JSONL), used when no dump is given");
  suggest->add_option("--kappa", c.kappa, "Refinement cutoff percentage");
  suggest->add_option("--out", c.out, "Output file (default stdout)");

  // train
  auto* train = app.add_subcommand("train", "Train a ranker per retrieval method");
  ms::TrainConfig tcfg;
  std::string features_csv;
  add_resources(train, c);
  add_methods(train, c, "all");
  train->add_option("--train-topics", c.paths.train_topics, "Training topics (JSONL)")->required();
  train->add_option("--out-dir", c.out, "Directory for <method>.json models")->required();
  train->add_option("--trees", tcfg.trees)->capture_default_str();
  train->add_option("--depth", tcfg.depth)->capture_default_str();
  train->add_option("--learning-rate", tcfg.learning_rate)->capture_default_str();
  train->add_option("--seed", tcfg.seed)->capture_default_str();
  train->add_option("--features-csv", features_csv, "Also write the labelled feature rows");

  // rank
  auto* rank_cmd = app.add_subcommand("rank", "Rank retrieved candidates with trained models");
  add_resources(rank_cmd, c);
  add_methods(rank_cmd, c, "fusion");
  rank_cmd->add_option("--fragments", fragments_path, "Fragment dump (JSONL)");
  rank_cmd->add_option("--topics", topics_path, "Topics (JSONL), used when no dump is given");
  rank_cmd->add_option("--out", c.out, "Output file (default stdout)");

  // tune-kappa
  auto* tune = app.add_subcommand("tune-kappa", "Tune the refinement cutoff on training topics");
  add_resources(tune, c);
  add_methods(tune, c, "fusion");
  tune->add_option("--train-topics", c.paths.train_topics, "Training topics (JSONL)")->required();
  tune->add_option("--out", c.out, "Curve CSV (default stdout)");

  // eval-suggest
  auto* eval_suggest = app.add_subcommand("eval-suggest", "Evaluate suggestion files against their gold headings");
  std::string suggestions_path;
  eval_suggest->add_option("--suggestions", suggestions_path, "Output of suggest or rank (JSONL)")->required();
  eval_suggest->add_option("--out", c.out, "CSV output (default stdout)");

  // eval-search
  auto* eval_search = app.add_subcommand("eval-search", "Evaluate Boolean queries against qrels");
  std::string queries_path;
  bool sample_mle = false;
  std::uint64_t seed = 42;
  add_resources(eval_search, c);
  eval_search->add_option("--queries", queries_path, "JSONL {topic_id, query[, method]}; topics files work too")
      ->required();
  eval_search->add_option("--qrels", c.paths.qrels, "Qrels")->required();
  eval_search->add_option("--date-max", c.date_max, "Publication date cutoff YYYY-MM-DD")->required();
  eval_search->add_flag("--binarize-qrels", c.binarize_qrels, "Map graded labels > 0 to 1");
  eval_search->add_flag("--sample-mle", sample_mle, "Sample the MLE residual instead of its expectation");
  eval_search->add_option("--seed", seed)->capture_default_str();
  eval_search->add_flag("--live-search", c.live_search, "Execute queries through entrez");
  eval_search->add_option("--out", c.out, "CSV output (default stdout)");

  // run
  auto* run = app.add_subcommand("run", "Run the evaluated pipeline over a topic set");
  ms::RunConfig rcfg;
  add_resources(run, c);
  add_methods(run, c, "all");
  run->add_option("--topics", c.paths.topics, "Test topics (JSONL)")->required();
  run->add_option("--train-topics", c.paths.train_topics, "Training topics for kappa tuning");
  run->add_option("--qrels", c.paths.qrels, "Qrels");
  run->add_option("--date-max", c.date_max, "Publication date cutoff YYYY-MM-DD");
  run->add_flag("--refine", rcfg.refine, "Apply the kappa cutoff");
  run->add_option("--kappa", c.kappa, "Cutoff percentage; tuned on --train-topics when absent");
  run->add_flag("--binarize-qrels", c.binarize_qrels, "Map graded labels > 0 to 1");
  run->add_flag("--sample-mle", rcfg.sample_mle, "Sample the MLE residual instead of its expectation");
  run->add_option("--seed", rcfg.seed)->capture_default_str();
  run->add_option("--threads", rcfg.threads, "Worker threads (0: all cores)")->capture_default_str();
  run->add_flag("--live-search", c.live_search, "Execute queries through entrez");
  run->add_option("--out-dir", c.out, "Report directory")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the JSON API");
  std::string host = "127.0.0.1";
  int port = 8080;
  add_resources(serve, c);
  std::string serve_method = "fusion";
  serve->add_option("--topics", c.paths.topics, "Topics available to sessions");
  serve->add_option("--qrels", c.paths.qrels, "Qrels (retrieval metrics)");
  serve->add_option("--date-max", c.date_max, "Publication date cutoff YYYY-MM-DD");
  serve->add_option("--method", serve_method, "Default suggestion method")->capture_default_str();
  serve->add_option("--kappa", c.kappa, "Default cutoff percentage");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*parse) {
      if (query_text.empty() == query_file.empty()) throw ms::ConfigError("give exactly one of --query or --file");
      const std::string text = query_text.empty() ? read_file(query_file) : query_text;
      const auto node = ms::normalize(ms::parse_query(text));
      const auto violations = ms::validate(node);
      if (!violations.empty()) throw ms::DataError(violations.front().message);
      if (serialize_only)
        std::cout << ms::serialize_query(node) << '\n';
      else
        std::cout << ms::to_json(node).dump(1) << '\n';
      return 0;
    }

    if (*frag) {
      ms::Resources r;
      if (!c.paths.boundaries.empty()) r.boundaries = ms::read_boundaries(c.paths.boundaries);
      std::ofstream file;
      auto& out = output(c.out, file);
      for (const auto& t : ms::ingest_topics(topics_path)) ms::write_fragments(out, ms::topic_fragments(t, r));
      return 0;
    }

    if (*suggest || *rank_cmd) {
      const bool ranking = rank_cmd->parsed();
      if (ranking && c.paths.model_dir.empty()) throw ms::ConfigError("rank needs --model-dir");
      const auto methods = parse_methods(c.methods);
      auto r = load_resources(c);
      if (c.kappa) ms::RefinementConfig{*c.kappa}.check();
      const ms::Suggester s(r);
      std::ofstream file;
      auto& out = output(c.out, file);
      for (const auto& f : input_fragments(fragments_path, topics_path, r))
        for (auto m : methods) write_candidates(out, f, ms::method_name(m), s.suggest(f, m, ranking ? std::nullopt : c.kappa));
      return 0;
    }

    if (*train) {
      const auto methods = parse_methods(c.methods, false);
      auto r = load_resources(c);
      const auto topics = ms::ingest_topics(c.paths.train_topics);
      std::filesystem::create_directories(c.out);
      std::ofstream features;
      if (!features_csv.empty()) {
        features.open(features_csv, std::ios::binary);
        if (!features) throw ms::ConfigError("cannot write " + features_csv);
        features << "method," << ms::feature_csv_header() << '\n';
      }
      for (auto m : methods) {
        const auto set = ms::training_groups(topics, r, m);
        for (const auto& d : set.discards) std::cerr << "discarded " << d.topic_id << ": " << d.reason << '\n';
        const auto model = ms::train_ranker(set.groups, tcfg, ms::method_name(m));
        const auto path = (std::filesystem::path(c.out) / (ms::method_name(m) + ".json")).string();
        ms::save_model(model, path);
        std::cout << ms::method_name(m) << ": " << set.groups.size() << " groups -> " << path << '\n';
        if (features)
          for (const auto& g : set.groups)
            for (std::size_t i = 0; i < g.instances.size(); ++i) {
              features << ms::method_name(m) << ',';
              ms::write_feature_row(features, g.id, std::to_string(i), g.instances[i]);
            }
      }
      return 0;
    }

    if (*tune) {
      const auto methods = parse_methods(c.methods);
      auto r = load_resources(c);
      const auto topics = ms::ingest_topics(c.paths.train_topics);
      std::ofstream file;
      auto& out = output(c.out, file);
      for (auto m : methods) {
        std::vector<ms::Discard> discards;
        const auto curve = ms::tune_kappa(ms::tuning_instances(topics, r, m, &discards));
        if (methods.size() > 1) out << "# " << ms::method_name(m) << '\n';
        ms::write_kappa_curve(out, curve);
        std::cerr << ms::method_name(m) << " kappa " << curve.best_kappa << '\n';
      }
      return 0;
    }

    if (*eval_suggest) {
      std::ifstream in(suggestions_path);
      if (!in) throw ms::ConfigError("cannot open " + suggestions_path);
      std::ofstream file;
      auto& out = output(c.out, file);
      std::map<std::string, std::vector<ms::MetricRow>> by_method;
      out << "method,fragment_id";
      for (const auto& col : ms::suggestion_columns()) out << ',' << col;
      out << '\n';
      std::string line;
      while (std::getline(in, line)) {
        if (ms::trim_view(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        ms::HeadingSet gold;
        for (const auto& g : j.at("gold")) gold.insert(ms::canonical_heading(g.get<std::string>()));
        if (gold.empty()) continue;
        std::vector<std::string> ranked;
        for (const auto& s : j.at("suggestions")) ranked.push_back(ms::canonical_heading(s.at("heading").get<std::string>()));
        const auto row = ms::to_row(ms::suggestion_metrics(ranked, gold));
        const auto method = j.value("method", "");
        by_method[method].push_back(row);
        out << method << ',' << ms::csv_field(j.at("fragment_id").get<std::string>());
        for (const auto& col : ms::suggestion_columns()) out << ',' << ms::fixed_decimal(row.at(col), 6);
        out << '\n';
      }
      for (const auto& [method, rows] : by_method) {
        const auto mean = ms::aggregate(rows);
        out << method << ",mean";
        for (const auto& col : ms::suggestion_columns()) out << ',' << ms::fixed_decimal(mean.at(col), 6);
        out << '\n';
      }
      return 0;
    }

    if (*eval_search) {
      auto r = load_resources(c);
      const auto date_max = parse_date(c.date_max);
      std::ofstream file;
      auto& out = output(c.out, file);
      std::ifstream in(queries_path);
      if (!in) throw ms::ConfigError("cannot open " + queries_path);
      out << "method,topic";
      for (const auto& col : ms::search_columns()) out << ',' << col;
      out << '\n';
      std::string line;
      while (std::getline(in, line)) {
        if (ms::trim_view(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const auto topic = j.at("topic_id").get<std::string>();
        const auto q = ms::normalize(ms::parse_query(j.at("query").get<std::string>()));
        const auto docs = r.remote_search ? r.remote_search(ms::serialize_query(q), date_max)
                                          : ms::execute_boolean(q, r.documents, r.tree, date_max);
        const auto row = ms::to_row(ms::search_eval(docs, topic, *r.qrels, {sample_mle, seed}));
        out << ms::csv_field(j.value("method", "query")) << ',' << ms::csv_field(topic);
        for (const auto& col : ms::search_columns()) out << ',' << ms::fixed_decimal(row.at(col), 6);
        out << '\n';
      }
      return 0;
    }

    if (*run) {
      resolve_umls(c);
      rcfg.methods = parse_methods(c.methods);
      rcfg.kappa = c.kappa;
      rcfg.date_max = parse_date(c.date_max);
      rcfg.qrels_mode = c.binarize_qrels ? ms::QrelsMode::kBinarize : ms::QrelsMode::kStrict;
      rcfg.strict_replay = c.strict_replay;
      rcfg.umls_top_k = c.umls_top_k;
      rcfg.out_dir = c.out;
      rcfg.live_atm = c.atm_live;
      rcfg.paths = c.paths;
      rcfg.validate();
      auto r = load_resources(c);
      const auto result = ms::run_pipeline(rcfg, r);
      ms::write_run(result, rcfg.out_dir);
      for (const auto& d : result.discards) std::cerr << "discarded " << d.topic_id << " (" << d.stage << "): " << d.reason << '\n';
      std::cout << "evaluated " << result.topics.size() << " topics, discarded " << result.discards.size()
                << "; reports in " << rcfg.out_dir << '\n';
      return 0;
    }

    if (*serve) {
      auto r = load_resources(c);
      std::vector<ms::Topic> topics;
      if (!c.paths.topics.empty()) topics = ms::ingest_topics(c.paths.topics);
      ms::ServiceConfig scfg;
      scfg.default_method = ms::method_from_name(serve_method);
      scfg.kappa = c.kappa;
      if (c.kappa) ms::RefinementConfig{*c.kappa}.check();
      scfg.date_max = parse_date(c.date_max);
      ms::Api api(r, std::move(topics), scfg);
      httplib::Server server;
      ms::mount_api(server, api);
      if (!server.bind_to_port(host, port)) throw ms::ConfigError("cannot bind " + host + ":" + std::to_string(port));
      std::cerr << "listening on " << host << ':' << port << '\n';
      server.listen_after_bind();
      return 0;
    }
  } catch (const ms::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ms::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
