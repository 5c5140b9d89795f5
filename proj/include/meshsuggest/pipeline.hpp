#pragma once

// End-to-end orchestration: resource loading, per-fragment suggestion,
// training, kappa tuning and the evaluated run over a topic set.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "meshsuggest/candidate_retrieval.hpp"
#include "meshsuggest/common.hpp"
#include "meshsuggest/corpus_store.hpp"
#include "meshsuggest/evaluation.hpp"
#include "meshsuggest/fragmenter.hpp"
#include "meshsuggest/fusion_refine.hpp"
#include "meshsuggest/ltr_ranker.hpp"
#include "meshsuggest/query_ast.hpp"

namespace meshsuggest {

struct ResourcePaths {
  std::string documents;
  std::string mesh_tree;
  std::string conso, def, sty, rel;
  std::string descriptions;
  std::string topics;
  std::string train_topics;
  std::string qrels;
  std::string atm_fixture;
  std::string metamap_fixture;
  std::string model_dir;
  std::string boundaries;
};

struct RunConfig {
  std::vector<Method> methods;
  bool refine = false;
  std::optional<int> kappa;
  std::optional<Date> date_max;
  ResourcePaths paths;
  std::string out_dir;
  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0: hardware concurrency
  bool sample_mle = false;
  QrelsMode qrels_mode = QrelsMode::kStrict;
  bool strict_replay = false;
  std::size_t umls_top_k = 10;
  bool live_atm = false;  // ATM served by a live client instead of a replay file

  /// Checks the settings and that every referenced file exists.
  void validate() const {
    if (methods.empty()) throw ConfigError("no method selected");
    if (!date_max) throw ConfigError("--date-max is required for a run");
    if (paths.topics.empty()) throw ConfigError("topics file is required");
    if (paths.qrels.empty()) throw ConfigError("qrels file is required");
    if (paths.documents.empty()) throw ConfigError("document corpus is required");
    if (refine && !kappa && paths.train_topics.empty())
      throw ConfigError("refinement needs --kappa or training topics to tune it");
    if (kappa) RefinementConfig{*kappa}.check();
    bool need_atm = false, need_metamap = false, need_umls = false;
    for (auto m : methods) {
      need_atm |= m == Method::kAtm || m == Method::kFusion;
      need_metamap |= m == Method::kMetaMap || m == Method::kFusion;
      need_umls |= m == Method::kUmls || m == Method::kFusion;
    }
    if (need_atm && paths.atm_fixture.empty() && !live_atm) throw ConfigError("atm needs --atm-fixture");
    if (need_metamap && paths.metamap_fixture.empty()) throw ConfigError("metamap needs --metamap-fixture");
    if (need_umls && paths.conso.empty()) throw ConfigError("umls needs --umls-dir");
    if (!paths.model_dir.empty() && paths.descriptions.empty())
      throw ConfigError("ranking models need --descriptions");
    for (const auto* p : {&paths.documents, &paths.mesh_tree, &paths.conso, &paths.def, &paths.sty, &paths.rel,
                          &paths.descriptions, &paths.topics, &paths.train_topics, &paths.qrels, &paths.atm_fixture,
                          &paths.metamap_fixture, &paths.boundaries})
      if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("file not found: " + *p);
    if (!paths.model_dir.empty() && !std::filesystem::is_directory(paths.model_dir))
      throw ConfigError("model directory not found: " + paths.model_dir);
  }
};

/// Immutable after loading; shared by concurrent topic evaluations.
struct Resources {
  DocumentIndex documents;
  MeshTree tree;
  std::optional<ConceptIndex> umls;
  std::optional<DescriptionCorpus> descriptions;
  std::shared_ptr<const MapperClient> atm;
  std::shared_ptr<const MapperClient> metamap;
  std::optional<Judgments> qrels;
  std::map<Method, RankerModel> models;
  std::map<std::string, std::vector<std::string>> boundaries;
  std::size_t umls_top_k = 10;
  /// Executes a serialized query remotely instead of on the local index.
  std::function<std::set<std::string>(const std::string&, const std::optional<Date>&)> remote_search;

  static Resources load(const ResourcePaths& p, QrelsMode qrels_mode = QrelsMode::kStrict,
                        bool strict_replay = false) {
    Resources r;
    if (!p.documents.empty()) r.documents = ingest_documents(p.documents);
    if (!p.mesh_tree.empty()) r.tree = ingest_mesh_tree(p.mesh_tree);
    if (!p.conso.empty()) r.umls = ingest_umls_tables(p.conso, p.def, p.sty, p.rel);
    if (!p.descriptions.empty()) r.descriptions = DescriptionCorpus::load(p.descriptions);
    if (!p.atm_fixture.empty()) r.atm = ReplayMapperClient::load(p.atm_fixture, strict_replay);
    if (!p.metamap_fixture.empty()) r.metamap = ReplayMapperClient::load(p.metamap_fixture, strict_replay);
    if (!p.qrels.empty()) r.qrels = ingest_qrels(p.qrels, qrels_mode);
    if (!p.boundaries.empty()) r.boundaries = read_boundaries(p.boundaries);
    if (!p.model_dir.empty())
      for (auto m : {Method::kAtm, Method::kMetaMap, Method::kUmls}) {
        const auto file = std::filesystem::path(p.model_dir) / (method_name(m) + ".json");
        if (std::filesystem::exists(file)) r.models.emplace(m, load_model(file.string()));
      }
    return r;
  }

  /// Whether every mapper may be called from several threads.
  bool concurrent() const { return (!atm || atm->concurrent()) && (!metamap || metamap->concurrent()); }
};

/// Fragments of a topic query, honouring manual boundaries when present.
inline std::vector<Fragment> topic_fragments(const Topic& t, const Resources& r) {
  const auto it = r.boundaries.find(t.topic_id);
  if (it != r.boundaries.end()) return fragment_with_boundaries(it->second, t.topic_id);
  return fragment(normalize(parse_query(t.query)), t.topic_id);
}

class Suggester {
 public:
  explicit Suggester(const Resources& r) : r_(r) {}

  /// CombSUM-deduplicated candidates of one base method.
  std::vector<MeshCandidate> retrieve(const Fragment& f, Method m) const {
    switch (m) {
      case Method::kAtm:
        if (!r_.atm) throw ConfigError("no ATM client configured");
        return dedup_combsum(retrieve_atm(f, *r_.atm));
      case Method::kMetaMap:
        if (!r_.metamap) throw ConfigError("no MetaMap client configured");
        return dedup_combsum(retrieve_metamap(f, *r_.metamap));
      case Method::kUmls:
        if (!r_.umls) throw IndexNotBuilt("no UMLS tables loaded");
        return dedup_combsum(retrieve_umls(f, *r_.umls, r_.umls_top_k));
      case Method::kFusion: break;
    }
    throw ConfigError("fusion is not a retrieval method");
  }

  /// Retrieval followed by the method's model when one is loaded. Fusion
  /// combines the three ranked base lists.
  std::vector<MeshCandidate> ranked(const Fragment& f, Method m) const {
    if (m == Method::kFusion) {
      std::map<Method, std::vector<MeshCandidate>> lists;
      for (auto base : kBaseMethods) lists[base] = ranked(f, base);
      return fuse_methods(lists);
    }
    auto cands = retrieve(f, m);
    const auto model = r_.models.find(m);
    if (model == r_.models.end() || cands.empty()) return cands;
    if (!r_.descriptions) throw ConfigError("ranking needs a description corpus");
    return rank(model->second, f, cands, *r_.descriptions);
  }

  std::vector<MeshCandidate> suggest(const Fragment& f, Method m, std::optional<int> kappa) const {
    auto list = ranked(f, m);
    if (!kappa || list.empty()) return list;
    return refine_cutoff(list, {*kappa});
  }

 private:
  const Resources& r_;
};

// ---------------------------------------------------------------------------
// Parallel map with deterministic output order

template <typename T, typename Fn>
auto parallel_map(const std::vector<T>& items, std::size_t threads, Fn&& fn)
    -> std::vector<decltype(fn(items.front()))> {
  using R = decltype(fn(items.front()));
  std::vector<std::optional<R>> slots(items.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, items.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < items.size();) {
      try {
        slots[i].emplace(fn(items[i]));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<R> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Training and tuning

struct Discard {
  std::string topic_id;
  std::string stage;
  std::string reason;
};

inline nlohmann::json discard_to_json(const Discard& d) {
  return {{"topic_id", d.topic_id}, {"stage", d.stage}, {"reason", d.reason}};
}

/// Evaluation-eligible fragments of a topic (at least one gold heading), with
/// their MeSH removed. Throws EmptyFragment for a MeSH-only fragment.
inline std::vector<Fragment> eligible_fragments(const Topic& t, const Resources& r) {
  std::vector<Fragment> out;
  for (const auto& f : topic_fragments(t, r))
    if (!f.pass_through) out.push_back(stripped_fragment(f));
  return out;
}

struct TrainingSet {
  std::vector<TrainingGroup> groups;
  std::vector<Discard> discards;
};

inline TrainingSet training_groups(const std::vector<Topic>& topics, const Resources& r, Method m) {
  if (!r.descriptions) throw ConfigError("training needs a description corpus");
  const Suggester s(r);
  TrainingSet out;
  for (const auto& t : topics) {
    try {
      for (const auto& f : eligible_fragments(t, r)) {
        auto cands = s.retrieve(f, m);
        if (cands.empty()) continue;
        out.groups.push_back({f.fragment_id, label_instances(f, cands, *r.descriptions)});
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      out.discards.push_back({t.topic_id, "train", e.what()});
    }
  }
  return out;
}

/// Rankings of the training fragments for kappa tuning.
inline std::vector<TuningInstance> tuning_instances(const std::vector<Topic>& topics, const Resources& r, Method m,
                                                    std::vector<Discard>* discards = nullptr) {
  const Suggester s(r);
  std::vector<TuningInstance> out;
  for (const auto& t : topics) {
    try {
      std::vector<TuningInstance> topic;
      for (const auto& f : eligible_fragments(t, r)) topic.push_back({s.ranked(f, m), f.gold_headings()});
      out.insert(out.end(), topic.begin(), topic.end());
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      if (discards) discards->push_back({t.topic_id, "tune", e.what()});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluated run

struct FragmentOutcome {
  std::string fragment_id;
  std::vector<std::string> gold;
  std::vector<MeshCandidate> suggestions;
  SuggestionMetrics metrics;
};

struct MethodOutcome {
  std::vector<FragmentOutcome> fragments;
  SuggestionMetrics suggestion;  // mean over the topic's fragments
  std::string query;
  SearchMetrics search;
};

struct TopicOutcome {
  std::string topic_id;
  std::size_t fragments = 0;
  std::map<std::string, MethodOutcome> methods;  // run label -> outcome
  std::map<std::string, SearchMetrics> baselines;  // original, removed
  std::map<std::string, std::string> baseline_queries;
};

struct RunResult {
  std::vector<TopicOutcome> topics;
  std::vector<Discard> discards;
  std::map<Method, int> kappas;
  std::map<Method, KappaCurve> curves;
  std::vector<std::string> labels;  // method labels in report order
};

inline std::string run_label(Method m, bool refined) { return method_name(m) + (refined ? "+refine" : ""); }

inline SuggestionMetrics mean_metrics(const std::vector<FragmentOutcome>& frags) {
  SuggestionMetrics m;
  if (frags.empty()) return m;
  for (const auto& f : frags) {
    m.precision += f.metrics.precision;
    m.recall += f.metrics.recall;
    m.rr += f.metrics.rr;
    m.recall_at_5 += f.metrics.recall_at_5;
    m.recall_at_10 += f.metrics.recall_at_10;
    m.ndcg_at_5 += f.metrics.ndcg_at_5;
    m.ndcg_at_10 += f.metrics.ndcg_at_10;
  }
  const double n = static_cast<double>(frags.size());
  for (double* v : {&m.precision, &m.recall, &m.rr, &m.recall_at_5, &m.recall_at_10, &m.ndcg_at_5, &m.ndcg_at_10})
    *v /= n;
  return m;
}

inline std::vector<std::string> heading_keys(const std::vector<MeshCandidate>& c) {
  std::vector<std::string> out;
  for (const auto& x : c) out.push_back(x.heading.key());
  return out;
}

inline TopicOutcome evaluate_topic(const Topic& t, const Resources& r, const RunConfig& cfg,
                                   const std::map<Method, int>& kappas) {
  TopicOutcome out;
  out.topic_id = t.topic_id;
  const QueryNode query = normalize(parse_query(t.query));
  const auto frags = topic_fragments(t, r);
  out.fragments = frags.size();
  std::vector<Fragment> stripped;
  for (const auto& f : frags) stripped.push_back(f.pass_through ? f : stripped_fragment(f));

  const auto search = [&](const QueryNode& q) {
    auto docs = r.remote_search ? r.remote_search(serialize_query(q), cfg.date_max)
                                : execute_boolean(q, r.documents, r.tree, cfg.date_max);
    return search_eval(docs, t.topic_id, *r.qrels, {cfg.sample_mle, cfg.seed});
  };
  const auto rebuild = [&](const SuggestionMap& s) {
    static const std::vector<MeshTerm> kNone;
    std::vector<QueryNode> parts;
    for (const auto& f : frags) {
      const auto it = s.find(f.fragment_id);
      parts.push_back(defragment_fragment(f, it == s.end() ? kNone : it->second));
    }
    return parts.size() == 1 ? parts.front() : QueryNode::all_of(std::move(parts));
  };

  out.baselines["original"] = search(query);
  out.baseline_queries["original"] = serialize_query(query);
  const QueryNode removed = rebuild({});
  out.baselines["removed"] = search(removed);
  out.baseline_queries["removed"] = serialize_query(removed);

  const Suggester s(r);
  for (auto m : cfg.methods) {
    MethodOutcome mo;
    SuggestionMap map;
    const auto k = kappas.find(m);
    const std::optional<int> kappa = cfg.refine && k != kappas.end() ? std::optional<int>(k->second) : std::nullopt;
    for (std::size_t i = 0; i < frags.size(); ++i) {
      if (frags[i].pass_through) continue;
      FragmentOutcome fo;
      fo.fragment_id = frags[i].fragment_id;
      for (const auto& g : frags[i].gold_mesh) fo.gold.push_back(g.heading);
      fo.suggestions = s.suggest(stripped[i], m, kappa);
      fo.metrics = suggestion_metrics(heading_keys(fo.suggestions), frags[i].gold_headings());
      auto& terms = map[fo.fragment_id];
      for (const auto& c : fo.suggestions) terms.push_back(c.heading);
      mo.fragments.push_back(std::move(fo));
    }
    mo.suggestion = mean_metrics(mo.fragments);
    const QueryNode q = rebuild(map);
    mo.query = serialize_query(q);
    mo.search = search(q);
    out.methods[run_label(m, cfg.refine)] = std::move(mo);
  }
  return out;
}

/// Kappa per method: the configured value, or the argmax of the tuning curve
/// on the training topics.
inline void resolve_kappas(const RunConfig& cfg, const Resources& r, RunResult& result) {
  if (!cfg.refine) return;
  if (cfg.kappa) {
    for (auto m : cfg.methods) result.kappas[m] = *cfg.kappa;
    return;
  }
  const auto train = ingest_topics(cfg.paths.train_topics);
  for (auto m : cfg.methods) {
    auto curve = tune_kappa(tuning_instances(train, r, m, &result.discards));
    result.kappas[m] = curve.best_kappa;
    result.curves[m] = std::move(curve);
  }
}

inline RunResult run_pipeline(const RunConfig& cfg, const Resources& r) {
  if (!r.qrels) throw ConfigError("a run needs qrels");
  RunResult result;
  for (auto m : cfg.methods) result.labels.push_back(run_label(m, cfg.refine));
  resolve_kappas(cfg, r, result);
  const auto topics = ingest_topics(cfg.paths.topics);
  const std::size_t threads = r.concurrent() ? cfg.threads : 1;
  auto outcomes = parallel_map(topics, threads, [&](const Topic& t) -> std::variant<TopicOutcome, Discard> {
    try {
      return evaluate_topic(t, r, cfg, result.kappas);
    } catch (const ConfigError&) {
      throw;
    } catch (const EmptyFragment& e) {
      return Discard{t.topic_id, "fragment", e.what()};
    } catch (const ParseError& e) {
      return Discard{t.topic_id, "parse", e.what()};
    } catch (const Error& e) {
      return Discard{t.topic_id, "pipeline", e.what()};
    }
  });
  for (auto& o : outcomes) {
    if (auto* t = std::get_if<TopicOutcome>(&o))
      result.topics.push_back(std::move(*t));
    else
      result.discards.push_back(std::get<Discard>(o));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports

inline const std::vector<std::string>& suggestion_columns() {
  static const std::vector<std::string> cols = {"precision", "recall", "rr", "recall_at_5", "recall_at_10",
                                                "ndcg_at_5", "ndcg_at_10"};
  return cols;
}

inline const std::vector<std::string>& search_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"retrieved", "unjudged_retrieved"};
    for (const char* metric : {"precision", "recall", "f_half", "f1", "f3"})
      for (auto mode : kResidualModes) c.push_back(std::string(metric) + "_" + residual_name(mode));
    return c;
  }();
  return cols;
}

inline std::vector<std::string> search_row_labels(const RunResult& r) {
  std::vector<std::string> out = {"original", "removed"};
  out.insert(out.end(), r.labels.begin(), r.labels.end());
  return out;
}

inline std::vector<std::pair<std::string, MetricRow>> suggestion_rows(const RunResult& r, const std::string& label) {
  std::vector<std::pair<std::string, MetricRow>> out;
  for (const auto& t : r.topics) out.emplace_back(t.topic_id, to_row(t.methods.at(label).suggestion));
  return out;
}

inline std::vector<std::pair<std::string, MetricRow>> search_rows(const RunResult& r, const std::string& label) {
  std::vector<std::pair<std::string, MetricRow>> out;
  for (const auto& t : r.topics) {
    const auto b = t.baselines.find(label);
    out.emplace_back(t.topic_id, to_row(b != t.baselines.end() ? b->second : t.methods.at(label).search));
  }
  return out;
}

inline MetricRow mean_row(const std::vector<std::pair<std::string, MetricRow>>& rows) {
  std::vector<MetricRow> v;
  for (const auto& [_, row] : rows) v.push_back(row);
  return aggregate(v);
}

inline void write_metric_csv(std::ostream& out, const RunResult& r, const std::vector<std::string>& labels,
                             const std::vector<std::string>& cols,
                             const std::function<std::vector<std::pair<std::string, MetricRow>>(const std::string&)>& rows) {
  out << "method,topic";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  for (const auto& label : labels) {
    const auto per_topic = rows(label);
    const auto emit = [&](const std::string& topic, const MetricRow& row) {
      out << label << ',' << csv_field(topic);
      for (const auto& c : cols) out << ',' << fixed_decimal(row.at(c), 6);
      out << '\n';
    };
    for (const auto& [topic, row] : per_topic) emit(topic, row);
    if (!per_topic.empty()) emit("mean", mean_row(per_topic));
  }
  (void)r;
}

struct PairedTest {
  std::string baseline;
  std::string method;
  std::string metric;
  SignificanceResult result;
};

/// Paired tests of every other method against `baseline` per metric, with
/// Bonferroni correction over the number of compared methods.
inline std::vector<PairedTest> significance_tests(const RunResult& r, const std::string& baseline, bool search) {
  std::vector<PairedTest> out;
  if (r.topics.size() < 2) return out;
  const auto labels = search ? search_row_labels(r) : r.labels;
  if (std::find(labels.begin(), labels.end(), baseline) == labels.end()) return out;
  std::vector<std::string> others;
  for (const auto& l : labels)
    if (l != baseline && l != "original" && l != "removed") others.push_back(l);
  const auto rows = [&](const std::string& l) { return search ? search_rows(r, l) : suggestion_rows(r, l); };
  const auto base = rows(baseline);
  for (const auto& other : others) {
    const auto cmp = rows(other);
    for (const auto& metric : search ? search_columns() : suggestion_columns()) {
      if (metric == "retrieved" || metric == "unjudged_retrieved") continue;
      std::vector<double> a, b;
      for (std::size_t i = 0; i < cmp.size(); ++i) {
        a.push_back(cmp[i].second.at(metric));
        b.push_back(base[i].second.at(metric));
      }
      out.push_back({baseline, other, metric, significance(a, b, others.size())});
    }
  }
  return out;
}

inline void write_significance_csv(std::ostream& out, const std::vector<PairedTest>& tests) {
  out << "baseline,method,metric,n,t,p,corrected_p,significant,degenerate\n";
  for (const auto& t : tests)
    out << t.baseline << ',' << t.method << ',' << t.metric << ',' << t.result.n << ','
        << fixed_decimal(t.result.t, 6) << ',' << fixed_decimal(t.result.p, 6) << ','
        << fixed_decimal(t.result.corrected_p, 6) << ',' << (t.result.significant ? 1 : 0) << ','
        << (t.result.degenerate ? 1 : 0) << '\n';
}

namespace detail {

inline std::string pad(const std::string& s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

/// Display width of UTF-8 text (continuation bytes do not count).
inline std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

inline void write_table(std::ostream& out, const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], display_width(row[i]));
    }
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      const std::size_t extra = row[i].size() - display_width(row[i]);
      if (i) line += "  ";
      line += pad(row[i], width[i] + extra, i == 0);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
}

inline std::string marked(double v, bool star, bool dagger) {
  return fixed_decimal(v, 4) + (star ? "*" : "") + (dagger ? "†" : "");
}

}  // namespace detail

/// Aligned mean tables. '*' marks a significant difference from ATM, and in
/// the search table '†' a significant difference from the original query.
inline void write_text_report(std::ostream& out, const RunResult& r) {
  const auto atm_label = run_label(Method::kAtm, !r.kappas.empty());
  std::set<std::pair<std::string, std::string>> vs_atm, vs_original;
  for (const auto& t : significance_tests(r, atm_label, false))
    if (t.result.significant) vs_atm.emplace(t.method, t.metric);
  for (const auto& t : significance_tests(r, atm_label, true))
    if (t.result.significant) vs_atm.emplace(t.method, "search:" + t.metric);
  for (const auto& t : significance_tests(r, "original", true))
    if (t.result.significant) vs_original.emplace(t.method, t.metric);

  out << "Suggestion effectiveness (" << r.topics.size() << " topics)\n";
  std::vector<std::vector<std::string>> cells = {{"method", "P", "R", "RR", "R@5", "R@10", "nDCG@5", "nDCG@10"}};
  for (const auto& label : r.labels) {
    const auto rows = suggestion_rows(r, label);
    if (rows.empty()) continue;
    const auto mean = mean_row(rows);
    std::vector<std::string> row = {label};
    for (const auto& c : suggestion_columns()) row.push_back(detail::marked(mean.at(c), vs_atm.count({label, c}), false));
    cells.push_back(std::move(row));
  }
  detail::write_table(out, cells);

  out << "\nSearch effectiveness\n";
  cells = {{"method", "P", "P(MLE)", "P(Opt)", "F1", "F1(MLE)", "F1(Opt)", "R", "R(MLE)", "R(Opt)"}};
  for (const auto& label : search_row_labels(r)) {
    const auto rows = search_rows(r, label);
    if (rows.empty()) continue;
    const auto mean = mean_row(rows);
    std::vector<std::string> row = {label};
    for (const char* metric : {"precision", "f1", "recall"})
      for (auto mode : kResidualModes) {
        const std::string c = std::string(metric) + "_" + residual_name(mode);
        row.push_back(detail::marked(mean.at(c), vs_atm.count({label, "search:" + c}), vs_original.count({label, c})));
      }
    cells.push_back(std::move(row));
  }
  detail::write_table(out, cells);

  if (!r.kappas.empty()) {
    out << "\nKappa\n";
    for (const auto& [m, k] : r.kappas) out << method_name(m) << ' ' << k << '\n';
  }
  if (!r.discards.empty()) out << "\nDiscarded topics: " << r.discards.size() << '\n';
}

/// Writes every run artifact into `dir`.
inline void write_run(const RunResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const std::string& name) {
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (std::filesystem::path(dir) / name).string());
    return f;
  };
  {
    auto f = open("suggestion_report.csv");
    write_metric_csv(f, r, r.labels, suggestion_columns(), [&](const std::string& l) { return suggestion_rows(r, l); });
  }
  {
    auto f = open("search_report.csv");
    write_metric_csv(f, r, search_row_labels(r), search_columns(), [&](const std::string& l) { return search_rows(r, l); });
  }
  {
    auto f = open("report.txt");
    write_text_report(f, r);
  }
  {
    auto f = open("significance.csv");
    auto tests = significance_tests(r, run_label(Method::kAtm, !r.kappas.empty()), false);
    const auto search = significance_tests(r, run_label(Method::kAtm, !r.kappas.empty()), true);
    tests.insert(tests.end(), search.begin(), search.end());
    write_significance_csv(f, tests);
  }
  {
    auto f = open("suggestions.jsonl");
    for (const auto& t : r.topics)
      for (const auto& label : r.labels)
        for (const auto& fo : t.methods.at(label).fragments) {
          nlohmann::json s = nlohmann::json::array();
          for (const auto& c : fo.suggestions) s.push_back(candidate_to_json(c));
          f << nlohmann::json{{"topic_id", t.topic_id}, {"method", label},  {"fragment_id", fo.fragment_id},
                              {"gold", fo.gold},         {"suggestions", s}}
                   .dump()
            << '\n';
        }
  }
  {
    auto f = open("queries.jsonl");
    for (const auto& t : r.topics) {
      for (const auto& [label, q] : t.baseline_queries)
        f << nlohmann::json{{"topic_id", t.topic_id}, {"method", label}, {"query", q}}.dump() << '\n';
      for (const auto& label : r.labels)
        f << nlohmann::json{{"topic_id", t.topic_id}, {"method", label}, {"query", t.methods.at(label).query}}.dump()
          << '\n';
    }
  }
  {
    auto f = open("discards.jsonl");
    for (const auto& d : r.discards) f << discard_to_json(d).dump() << '\n';
  }
  for (const auto& [m, curve] : r.curves) {
    auto f = open("kappa_curve_" + method_name(m) + ".csv");
    write_kappa_curve(f, curve);
  }
}

}  // namespace meshsuggest
