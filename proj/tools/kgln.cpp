/*
 * Copyright 2026 The KGLN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// kgln: batch front end for dataset preparation, graph completion,
// training, evaluation, ablation sweeps and recommendation.
//
// Exit codes: 0 ok, 1 internal failure, 2 usage/config/parse error,
// 3 empty data, 4 shape mismatch, 5 unknown id.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kgln/kgln.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kgln;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr const char* kManifestFile = "manifest.json";

/// Bad invocation: missing input file, missing config, etc.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool g_quiet = false;

void log(const std::string& msg) {
  if (!g_quiet) std::cerr << "kgln: " << msg << '\n';
}

void require_file(const fs::path& p, std::string_view what) {
  if (!fs::exists(p) || fs::is_directory(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, std::string_view what) {
  if (!fs::is_directory(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  return in;
}

std::ofstream open_output(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

template <class F>
void write_file(const fs::path& p, F&& body) {
  auto out = open_output(p);
  body(out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + p.string());
}

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), std::size_t(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Regular files directly under dir, sorted, manifest excluded.
std::vector<fs::path> dir_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != kManifestFile) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Run record written last into an output directory.
class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv) : started_(std::chrono::steady_clock::now()) {
    j_["tool"] = "kgln";
    j_["version"] = kVersion;
    j_["command"] = std::move(command);
    j_["argv"] = argv;
    j_["cwd"] = fs::current_path().string();
    j_["started_at"] = utc_now();
    j_["config"] = json::object();
    j_["inputs"] = json::object();
    j_["artifacts"] = json::object();
  }

  void seed(std::uint64_t s) { j_["seed"] = s; }
  void config(const std::string& key, const std::string& value, std::string_view source) {
    j_["config"][key] = {{"value", value}, {"source", source}};
  }
  void input(const fs::path& p) {
    if (fs::is_directory(p)) {
      for (const auto& f : dir_files(p)) j_["inputs"][f.string()] = sha256_file(f);
    } else {
      j_["inputs"][p.string()] = sha256_file(p);
    }
  }
  json& extra(const std::string& key) { return j_[key]; }

  /// Digests every file in dir, then writes the manifest there.
  void finish(const fs::path& dir) {
    for (const auto& f : dir_files(dir)) j_["artifacts"][f.filename().string()] = sha256_file(f);
    j_["finished_at"] = utc_now();
    j_["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    write_file(dir / kManifestFile, [&](std::ostream& out) { out << j_.dump(2) << '\n'; });
  }

 private:
  json j_;
  std::chrono::steady_clock::time_point started_;
};

// Records every option of a subcommand with its provenance.
void record_options(Manifest& m, const CLI::App& sub) {
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "set") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      for (std::size_t i = 0; i < r.size(); ++i) value += (i ? "," : "") + r[i];
    } else {
      value = opt->get_default_str();
    }
    m.config(name, value, opt->count() > 0 ? "flag" : "default");
  }
}

void record_config(Manifest& m, const ResolvedConfig& rc) {
  for (const auto& k : config_keys()) {
    if (k == "preset") continue;
    m.config(k, config_value(rc.value, k), to_string(rc.source.at(k)));
  }
}

std::string dataset_label(const fs::path& data) {
  const auto p = data.lexically_normal();
  return p.has_filename() ? p.filename().string() : p.parent_path().filename().string();
}

ResolvedConfig resolve_train_config(const std::string& config_path, const std::vector<std::string>& sets,
                                    std::optional<std::uint64_t> seed) {
  std::vector<ConfigEntry> entries;
  if (!config_path.empty()) {
    require_file(config_path, "config file");
    auto in = open_input(config_path);
    entries = parse_config_entries(in);
  }
  std::vector<std::pair<std::string, std::string>> flags;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'", s);
    flags.emplace_back(std::string(trim(std::string_view(s).substr(0, eq))),
                       std::string(trim(std::string_view(s).substr(eq + 1))));
  }
  if (seed) flags.emplace_back("seed", std::to_string(*seed));
  return resolve_config(KglnConfig{}, entries, flags);
}

// Config for a saved checkpoint: --config if given, else the sidecar.
KglnConfig checkpoint_config(const fs::path& checkpoint, const std::string& config_path) {
  fs::path p = config_path.empty() ? fs::path(checkpoint.string() + ".cfg") : fs::path(config_path);
  if (!fs::exists(p) || fs::is_directory(p)) {
    throw UsageError("no configuration for " + checkpoint.string() + ": pass --config or keep " + p.string());
  }
  auto in = open_input(p);
  return parse_config(in);
}

KglnParams read_checkpoint(const fs::path& path, const KglnConfig& cfg, const LoadedDataset& ds) {
  require_file(path, "checkpoint");
  auto in = open_input(path);
  return load_checkpoint(in, cfg.model, ds.data.user_count, ds.graph.entity_count(), ds.graph.relation_count());
}

// ---------------------------------------------------------------------------
// Commands

struct PrepareArgs {
  std::string ratings, format = "movielens", kg, item_map, out;
  std::uint64_t seed = 0;
  std::optional<double> threshold;
};

int cmd_prepare(const PrepareArgs& a, const CLI::App& sub, const std::vector<std::string>& argv) {
  require_file(a.ratings, "ratings file");
  require_file(a.kg, "knowledge graph");
  require_file(a.item_map, "item map");
  Manifest m("prepare", argv);
  record_options(m, sub);
  m.seed(a.seed);
  m.input(a.ratings);
  m.input(a.kg);
  m.input(a.item_map);

  DatasetRecipe recipe = a.format == "movielens" ? DatasetRecipe::movielens(a.seed) : DatasetRecipe::bookcrossing(a.seed);
  if (a.threshold) {
    recipe.rule = PositiveRule::threshold;
    recipe.threshold = *a.threshold;
  }
  RatingsLoad ratings;
  {
    auto in = open_input(a.ratings);
    ratings = a.format == "movielens" ? load_movielens_ratings(in) : load_bookcrossing_ratings(in);
  }
  if (ratings.malformed) {
    std::string lines;
    for (auto l : ratings.malformed_examples) lines += " " + std::to_string(l);
    log(std::to_string(ratings.malformed) + " malformed rating lines skipped (first:" + lines + ")");
  }
  TripleLoadStats kg_stats;
  KnowledgeGraph kg;
  {
    auto in = open_input(a.kg);
    kg = load_triples(in, &kg_stats);
  }
  std::unordered_map<std::string, std::string> item_map;
  {
    auto in = open_input(a.item_map);
    item_map = load_item_map(in);
  }
  log("read " + std::to_string(ratings.ratings.size()) + " ratings, " + std::to_string(kg.triples().size()) +
      " triples, " + std::to_string(item_map.size()) + " item mappings");

  const auto prepared = prepare_dataset(ratings.ratings, item_map, kg, recipe);
  fs::create_directories(a.out);
  save_dataset(a.out, kg, prepared.data);

  std::array<std::size_t, 3> per_split{};
  for (const auto& r : prepared.data.records) ++per_split[std::size_t(r.split)];
  json report;
  report["rating_lines"] = ratings.ratings.size() + ratings.malformed;
  report["malformed_lines"] = ratings.malformed;
  report["header_lines"] = ratings.header_lines;
  report["kg_duplicate_triples"] = kg_stats.duplicates;
  report["positive_candidates"] = prepared.drops.input_records;
  report["dropped_records"] = prepared.drops.dropped_records;
  report["dropped_items"] = prepared.drops.dropped_items;
  report["dropped_users"] = prepared.drops.dropped_users;
  report["unmapped_items"] = prepared.drops.unmapped_items;
  report["missing_entities"] = prepared.drops.missing_entities;
  report["users"] = prepared.data.user_count;
  report["items"] = prepared.data.item_count;
  report["positives"] = prepared.positives;
  report["negatives"] = prepared.negatives;
  report["train_records"] = per_split[0];
  report["val_records"] = per_split[1];
  report["test_records"] = per_split[2];
  write_file(fs::path(a.out) / "drop_report.json", [&](std::ostream& out) { out << report.dump(2) << '\n'; });

  m.extra("counts") = report;
  m.extra("recipe") = {{"format", a.format},
                       {"rule", recipe.rule == PositiveRule::threshold ? "threshold" : "any_rating"},
                       {"threshold", recipe.threshold},
                       {"split_ratio", recipe.split_ratio}};
  m.finish(a.out);
  log("prepared " + std::to_string(prepared.data.user_count) + " users, " + std::to_string(prepared.data.item_count) +
      " items, " + std::to_string(prepared.data.records.size()) + " records -> " + a.out);
  return 0;
}

struct CompleteArgs {
  std::string kg, out, item_map;
  std::size_t dim = 16, epochs = 100, max_added = 1000, per_query = 3;
  double threshold = -0.1, lr = 0.01, margin = 1.0;
  std::uint64_t seed = 0;
};

int cmd_complete_kg(const CompleteArgs& a, const CLI::App& sub, const std::vector<std::string>& argv) {
  require_file(a.kg, "knowledge graph");
  if (!a.item_map.empty()) require_file(a.item_map, "item map");
  Manifest m("complete-kg", argv);
  record_options(m, sub);
  m.seed(a.seed);
  m.input(a.kg);
  if (!a.item_map.empty()) m.input(a.item_map);

  KnowledgeGraph g;
  {
    auto in = open_input(a.kg);
    g = load_triples(in);
  }
  if (g.triples().empty()) throw DataError("knowledge graph " + a.kg + " has no triples");
  TransEConfig tc;
  tc.dim = a.dim;
  tc.epochs = a.epochs;
  tc.lr = a.lr;
  tc.margin = a.margin;
  tc.seed = a.seed;
  log("training TransE on " + std::to_string(g.triples().size()) + " triples (dim " + std::to_string(a.dim) + ", " +
      std::to_string(a.epochs) + " epochs)");
  const TransEModel model = train_transe(g, tc);

  CompletionOptions opts;
  opts.per_query = a.per_query;
  if (!a.item_map.empty()) {
    auto in = open_input(a.item_map);
    std::set<EntityId> anchors;
    for (const auto& [item, entity] : load_item_map(in))
      if (const auto e = g.entities().find(entity)) anchors.insert(*e);
    opts.anchors.assign(anchors.begin(), anchors.end());
  }
  const auto [augmented, report] = complete_graph(g, model, a.threshold, a.max_added, opts);

  fs::create_directories(a.out);
  write_file(fs::path(a.out) / kGraphFile, [&](std::ostream& out) { write_triples(out, augmented); });
  write_file(fs::path(a.out) / "completion_report.tsv",
             [&](std::ostream& out) { write_completion_report(out, g, report); });
  write_file(fs::path(a.out) / "transe.kgcp", [&](std::ostream& out) { save_transe(out, model); });
  m.extra("completion") = {{"added", report.added.size()},
                           {"threshold_used", report.threshold_used},
                           {"candidates_considered", report.candidates_considered},
                           {"final_loss", model.final_loss()}};
  m.finish(a.out);
  log("added " + std::to_string(report.added.size()) + " triples (" + std::to_string(report.candidates_considered) +
      " candidates scored) -> " + a.out);
  return 0;
}

struct TrainArgs {
  std::string data, config, out;
  std::size_t runs = 5;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  require_dir(a.data, "dataset directory");
  const ResolvedConfig rc = resolve_train_config(a.config, a.sets, a.seed);
  if (a.runs == 0) throw UsageError("--runs must be >= 1");
  Manifest m("train", argv);
  record_config(m, rc);
  m.config("runs", std::to_string(a.runs), "flag");
  m.seed(rc.value.train.seed);
  m.input(a.data);
  if (!a.config.empty()) m.input(a.config);

  const LoadedDataset ds = load_dataset(a.data);
  const fs::path out = a.out;
  fs::create_directories(out);
  const std::string label = dataset_label(a.data);
  json runs = json::array();

  const auto result = run_many(
      ds.graph, ds.data, rc.value, a.runs,
      [&](std::size_t, const RunResult& r) {
        const std::string stem = "seed" + std::to_string(r.seed);
        const auto ckpt = out / ("checkpoint_" + stem + ".kgcp");
        write_file(ckpt, [&](std::ostream& o) { save_checkpoint(o, r.params); });
        KglnConfig run_cfg = rc.value;
        run_cfg.train.seed = r.seed;
        write_file(ckpt.string() + ".cfg", [&](std::ostream& o) { o << render_config(run_cfg); });
        write_file(out / ("train_report_" + stem + ".csv"), [&](std::ostream& o) { write_train_report_csv(o, r.report); });
        runs.push_back({{"seed", r.seed},
                        {"checkpoint", ckpt.filename().string()},
                        {"best_epoch", r.report.best_epoch},
                        {"best_val_auc", r.report.best_val_auc},
                        {"test_auc", r.test.auc},
                        {"test_f1", r.test.f1},
                        {"wall_seconds", r.report.wall_seconds}});
        log("seed " + std::to_string(r.seed) + ": best epoch " + std::to_string(r.report.best_epoch) +
            ", test auc=" + format_fixed(r.test.auc, 4) + " f1=" + format_fixed(r.test.f1, 4));
      },
      false,
      [&](std::size_t i, const EpochRecord& e) {
        log("run " + std::to_string(i + 1) + "/" + std::to_string(a.runs) + " epoch " + std::to_string(e.epoch) +
            " loss=" + format_fixed(e.train_loss, 5) + " val_auc=" + format_fixed(e.val_auc, 4));
      });

  write_file(out / "metrics.csv", [&](std::ostream& o) {
    write_metrics_csv_header(o);
    for (const auto& r : result.runs) write_metrics_csv_row(o, label, rc.value.model, r.seed, r.test);
  });
  write_file(out / "summary.csv", [&](std::ostream& o) {
    o << "metric,mean,std,runs\n";
    o << "auc," << format_number(result.auc.mean) << ',' << format_number(result.auc.std) << ',' << a.runs << '\n';
    o << "f1," << format_number(result.f1.mean) << ',' << format_number(result.f1.std) << ',' << a.runs << '\n';
  });
  write_file(out / "config.cfg", [&](std::ostream& o) { o << render_config(rc.value); });
  m.extra("runs") = runs;
  m.finish(out);
  std::cout << "auc=" << format_number(result.auc.mean) << " auc_std=" << format_number(result.auc.std)
            << " f1=" << format_number(result.f1.mean) << " f1_std=" << format_number(result.f1.std) << '\n';
  return 0;
}

struct EvalArgs {
  std::string data, checkpoint, split = "test", config, out;
};

int cmd_eval(const EvalArgs& a, const CLI::App& sub, const std::vector<std::string>& argv) {
  require_dir(a.data, "dataset directory");
  require_file(a.checkpoint, "checkpoint");
  const KglnConfig cfg = checkpoint_config(a.checkpoint, a.config);
  const LoadedDataset ds = load_dataset(a.data);
  const KglnParams p = read_checkpoint(a.checkpoint, cfg, ds);
  const Split split = *parse_split(a.split);
  const MetricReport r = evaluate(p, ds.graph, ds.data, split, eval_seed_for(cfg.train.seed));

  const fs::path ckpt(a.checkpoint);
  const fs::path out = a.out.empty() ? ckpt.parent_path() / ("eval_" + ckpt.stem().string() + "_" + a.split) : fs::path(a.out);
  Manifest m("eval", argv);
  record_options(m, sub);
  m.seed(cfg.train.seed);
  m.input(a.data);
  m.input(a.checkpoint);
  if (!a.config.empty()) m.input(a.config);
  else m.input(a.checkpoint + ".cfg");
  fs::create_directories(out);
  write_file(out / "metrics.csv", [&](std::ostream& o) {
    write_metrics_csv_header(o);
    write_metrics_csv_row(o, dataset_label(a.data), cfg.model, cfg.train.seed, r);
  });
  m.extra("metrics") = {{"split", a.split}, {"auc", r.auc}, {"f1", r.f1}, {"positives", r.positives}, {"negatives", r.negatives}};
  m.finish(out);
  std::cout << "auc=" << format_number(r.auc) << " f1=" << format_number(r.f1) << '\n';
  return 0;
}

struct SweepArgs {
  std::string data, config, axes, out;
  std::size_t runs = 5;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& argv) {
  const GridAxes axes = parse_axes(a.axes);
  require_dir(a.data, "dataset directory");
  const ResolvedConfig rc = resolve_train_config(a.config, a.sets, a.seed);
  if (a.runs == 0) throw UsageError("--runs must be >= 1");
  Manifest m("sweep", argv);
  record_config(m, rc);
  m.config("axes", a.axes, "flag");
  m.config("runs", std::to_string(a.runs), "flag");
  m.seed(rc.value.train.seed);
  m.input(a.data);
  if (!a.config.empty()) m.input(a.config);

  const LoadedDataset ds = load_dataset(a.data);
  const auto n_cells = grid_cells(rc.value.model, axes).size();
  std::size_t done = 0;
  const auto cells = run_ablation_grid(
      ds.graph, ds.data, rc.value, axes, a.runs,
      [&](const GridCell& c) {
        ++done;
        log("cell " + std::to_string(done) + "/" + std::to_string(n_cells) + " " + std::string(to_string(c.model.aggregator)) +
            "/" + std::string(to_string(c.model.attention)) + "/H=" + std::to_string(c.model.H) +
            ": auc=" + format_fixed(c.result.auc.mean, 4) + " +- " + format_fixed(c.result.auc.std, 4));
      },
      [&](std::size_t i, const RunResult& r) {
        log("  run " + std::to_string(i + 1) + "/" + std::to_string(a.runs) + " seed " + std::to_string(r.seed) +
            " auc=" + format_fixed(r.test.auc, 4));
      });

  const fs::path out = a.out;
  fs::create_directories(out);
  write_file(out / "ablation.csv", [&](std::ostream& o) { write_ablation_csv(o, cells); });
  write_file(out / "attention_table.csv", [&](std::ostream& o) { write_attention_table_csv(o, cells); });
  write_file(out / "depth_table.csv", [&](std::ostream& o) { write_depth_table_csv(o, cells); });
  m.finish(out);
  return 0;
}

struct RecommendArgs {
  std::string data, checkpoint, user, config;
  std::size_t top_k = 10;
};

int cmd_recommend(const RecommendArgs& a) {
  require_dir(a.data, "dataset directory");
  require_file(a.checkpoint, "checkpoint");
  if (a.top_k == 0) throw UsageError("--top-k must be >= 1");
  const KglnConfig cfg = checkpoint_config(a.checkpoint, a.config);
  const LoadedDataset ds = load_dataset(a.data);
  const KglnParams p = read_checkpoint(a.checkpoint, cfg, ds);
  const auto& keys = ds.data.user_keys;
  const auto it = std::find(keys.begin(), keys.end(), a.user);
  if (it == keys.end()) throw IdError("unknown user '" + a.user + "'");
  const auto user = UserId(it - keys.begin());

  // Items the user already interacted with positively in training are not
  // recommended again.
  std::set<ItemId> seen;
  for (const auto& r : ds.data.records)
    if (r.user == user && r.label == 1 && r.split == Split::train) seen.insert(r.item);
  std::vector<ItemId> candidates;
  for (ItemId v = 0; v < ds.data.item_count; ++v)
    if (!seen.count(v)) candidates.push_back(v);
  for (const auto& rec : recommend(p, ds.graph, ds.data, user, candidates, a.top_k, eval_seed_for(cfg.train.seed)))
    std::cout << ds.data.item_keys[rec.item] << '\t' << format_number(rec.score) << '\n';
  return 0;
}

struct SynthArgs {
  std::string out;
  SyntheticSpec spec;
};

int cmd_synth(const SynthArgs& a, const CLI::App& sub, const std::vector<std::string>& argv) {
  Manifest m("synth", argv);
  record_options(m, sub);
  m.seed(a.spec.seed);
  const auto corpus = make_synthetic_corpus(a.spec);
  const fs::path out = a.out;
  fs::create_directories(out);
  write_file(out / "ratings.dat", [&](std::ostream& o) { write_movielens_ratings(o, corpus.ratings); });
  write_file(out / "item_map.tsv", [&](std::ostream& o) { write_item_map(o, corpus.item_map); });
  write_file(out / kGraphFile, [&](std::ostream& o) { write_triples(o, corpus.graph); });
  write_file(out / "user_attribute.tsv", [&](std::ostream& o) {
    o << "user_key\trelation\tvalue\n";
    for (std::size_t u = 0; u < corpus.user_attribute.size(); ++u)
      o << 'u' << u << '\t' << corpus.user_attribute[u].first << '\t' << corpus.user_attribute[u].second << '\n';
  });
  m.finish(out);
  log("wrote " + std::to_string(corpus.ratings.size()) + " ratings and " + std::to_string(corpus.graph.triples().size()) +
      " triples -> " + a.out);
  return 0;
}

int run_cli(std::vector<std::string> argv);

int cmd_rerun(const std::string& manifest_path, const std::string& out_override) {
  require_file(manifest_path, "manifest");
  json j;
  try {
    auto in = open_input(manifest_path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(manifest_path + ": " + e.what());
  }
  if (!j.contains("argv") || !j.contains("cwd")) throw ParseError(manifest_path + ": not a kgln manifest");
  auto argv = j["argv"].get<std::vector<std::string>>();
  const fs::path cwd = j["cwd"].get<std::string>();
  if (!out_override.empty()) {
    const std::string abs = fs::absolute(out_override).string();
    bool replaced = false;
    for (std::size_t i = 0; i < argv.size(); ++i) {
      if (argv[i] == "--out" && i + 1 < argv.size()) {
        argv[i + 1] = abs;
        replaced = true;
      } else if (argv[i].rfind("--out=", 0) == 0) {
        argv[i] = "--out=" + abs;
        replaced = true;
      }
    }
    if (!replaced) throw UsageError("manifest command has no --out to override");
  }
  fs::current_path(cwd);
  for (const auto& [path, digest] : j["inputs"].items()) {
    if (!fs::exists(path)) throw UsageError("input missing since the manifest was written: " + path);
    if (sha256_file(path) != digest.get<std::string>()) throw UsageError("input changed since the manifest was written: " + path);
  }
  log("rerunning: " + [&] {
    std::string s;
    for (const auto& x : argv) s += " " + x;
    return s;
  }());
  return run_cli(argv);
}

// ---------------------------------------------------------------------------

int exit_code(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const ShapeError& e) {
    std::cerr << "kgln: shape mismatch: " << e.what() << '\n';
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "kgln: config error: " << e.what() << '\n';
    return 2;
  } catch (const IdError& e) {
    std::cerr << "kgln: unknown id: " << e.what() << '\n';
    return 5;
  } catch (const DataError& e) {
    std::cerr << "kgln: empty data: " << e.what() << '\n';
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "kgln: parse error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "kgln: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "kgln: invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "kgln: error: " << e.what() << '\n';
    return 1;
  }
}

int run_cli(std::vector<std::string> argv) {
  CLI::App app{"KGLN knowledge-graph recommender", "kgln"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress logging");

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "Build a prepared dataset from ratings, a KG and an item map");
  prepare->add_option("--ratings", pa.ratings, "Ratings file")->required();
  prepare->add_option("--format", pa.format, "Ratings format")
      ->check(CLI::IsMember({"movielens", "bookcrossing"}))
      ->capture_default_str();
  prepare->add_option("--kg", pa.kg, "Triple file (head<TAB>relation<TAB>tail)")->required();
  prepare->add_option("--item-map", pa.item_map, "item_key<TAB>entity_key file")->required();
  prepare->add_option("--out", pa.out, "Output dataset directory")->required();
  prepare->add_option("--seed", pa.seed, "Negative-sampling and split seed")->capture_default_str();
  prepare->add_option("--threshold", pa.threshold, "Positive if rating >= threshold (overrides the format rule)");

  CompleteArgs ca;
  auto* complete = app.add_subcommand("complete-kg", "Augment a KG with TransE-predicted triples");
  complete->add_option("--kg", ca.kg, "Triple file")->required();
  complete->add_option("--out", ca.out, "Output directory")->required();
  complete->add_option("--dim", ca.dim, "Embedding dimension")->capture_default_str();
  complete->add_option("--epochs", ca.epochs, "Training epochs")->capture_default_str();
  complete->add_option("--lr", ca.lr, "SGD learning rate")->capture_default_str();
  complete->add_option("--margin", ca.margin, "Ranking margin")->capture_default_str();
  complete->add_option("--threshold", ca.threshold, "Minimum score (<= 0) of added triples")->capture_default_str();
  complete->add_option("--max-added", ca.max_added, "Maximum number of added triples")->capture_default_str();
  complete->add_option("--per-query", ca.per_query, "Predictions kept per head/tail query")->capture_default_str();
  complete->add_option("--item-map", ca.item_map, "Restrict candidates to the neighborhood of mapped items");
  complete->add_option("--seed", ca.seed, "Training seed")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train KGLN over several seeds");
  train->add_option("--data", ta.data, "Prepared dataset directory")->required();
  train->add_option("--config", ta.config, "key = value config file");
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--runs", ta.runs, "Number of seeds")->capture_default_str();
  train->add_option("--set", ta.sets, "Config override key=value (repeatable)");
  train->add_option("--seed", ta.seed, "First seed (overrides the config)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a split");
  eval->add_option("--data", ea.data, "Prepared dataset directory")->required();
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", ea.split, "Split")->check(CLI::IsMember({"val", "test"}))->capture_default_str();
  eval->add_option("--config", ea.config, "Config file (default: <checkpoint>.cfg)");
  eval->add_option("--out", ea.out, "Output directory (default: next to the checkpoint)");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Ablation grid over aggregator, attention mode and depth");
  sweep->add_option("--data", sa.data, "Prepared dataset directory")->required();
  sweep->add_option("--config", sa.config, "key = value config file");
  sweep->add_option("--axes", sa.axes, "e.g. aggregator=gcn,graphsage,bi;attention=influence,mean;H=1,2,3")->required();
  sweep->add_option("--out", sa.out, "Output directory")->required();
  sweep->add_option("--runs", sa.runs, "Seeds per cell")->capture_default_str();
  sweep->add_option("--set", sa.sets, "Config override key=value (repeatable)");
  sweep->add_option("--seed", sa.seed, "First seed (overrides the config)");

  RecommendArgs ra;
  auto* rec = app.add_subcommand("recommend", "Top-k items for a user");
  rec->add_option("--data", ra.data, "Prepared dataset directory")->required();
  rec->add_option("--checkpoint", ra.checkpoint, "Checkpoint file")->required();
  rec->add_option("--user", ra.user, "User key as in the ratings file")->required();
  rec->add_option("--top-k", ra.top_k, "Number of items")->capture_default_str();
  rec->add_option("--config", ra.config, "Config file (default: <checkpoint>.cfg)");

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Write a planted-preference corpus (ratings, item map, KG)");
  synth->add_option("--out", ya.out, "Output directory")->required();
  synth->add_option("--users", ya.spec.users)->capture_default_str();
  synth->add_option("--items", ya.spec.items)->capture_default_str();
  synth->add_option("--relations", ya.spec.relations)->capture_default_str();
  synth->add_option("--values", ya.spec.values_per_relation, "Attribute values per relation")->capture_default_str();
  synth->add_option("--informative", ya.spec.informative_relations, "Relations users' preferences draw from")
      ->capture_default_str();
  synth->add_option("--attributes-per-item", ya.spec.attributes_per_item, "Attribute edges per item (0 = all relations)")
      ->capture_default_str();
  synth->add_option("--informative-values", ya.spec.informative_values, "Values per informative relation (0 = --values)")
      ->capture_default_str();
  synth->add_option("--attribute-links", ya.spec.attribute_links, "Random attribute-to-attribute triples")
      ->capture_default_str();
  synth->add_option("--max-likes", ya.spec.max_likes, "Cap on planted likes per user (0 = no cap)")->capture_default_str();
  synth->add_option("--random-likes", ya.spec.random_likes)->capture_default_str();
  synth->add_option("--low-ratings", ya.spec.low_ratings)->capture_default_str();
  synth->add_option("--seed", ya.spec.seed)->capture_default_str();

  std::string manifest_path, rerun_out;
  auto* rerun = app.add_subcommand("rerun", "Replay the command recorded in a manifest");
  rerun->add_option("--manifest", manifest_path, "manifest.json")->required();
  rerun->add_option("--out", rerun_out, "Write to this directory instead of the recorded one");

  try {
    std::vector<std::string> rev(argv.rbegin(), argv.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g_quiet = quiet;

  try {
    if (*prepare) return cmd_prepare(pa, *prepare, argv);
    if (*complete) return cmd_complete_kg(ca, *complete, argv);
    if (*train) return cmd_train(ta, argv);
    if (*eval) return cmd_eval(ea, *eval, argv);
    if (*sweep) return cmd_sweep(sa, argv);
    if (*rec) return cmd_recommend(ra);
    if (*synth) return cmd_synth(ya, *synth, argv);
    if (*rerun) return cmd_rerun(manifest_path, rerun_out);
  } catch (...) {
    return exit_code(std::current_exception());
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
