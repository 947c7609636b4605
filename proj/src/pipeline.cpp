#include "slsr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "slsr/cluster.hpp"
#include "slsr/common.hpp"
#include "slsr/rng.hpp"

namespace slsr::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string canonical_stage(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

// Preserve the error type while naming the failing stage, so the CLI's exit
// code mapping still sees the original class.
template <typename Fn>
auto with_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const MissingInputError& e) {
    throw MissingInputError("stage " + stage + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("stage " + stage + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + stage + ": " + e.what());
  }
}

std::string default_rel(const std::string& name) {
  if (name == "dataset" || name == "generated") return name;
  if (name == "generated_manifest") return "generated/manifest.json";
  if (name == "feature_model" || name == "model") return name + ".ckpt";
  if (name.rfind("gan_log_c", 0) == 0) return name + ".csv";
  if (name.rfind("gan_c", 0) == 0) return name + ".ckpt";
  if (name == "embeddings") return name + ".bin";
  if (name == "assignments" || name == "features_log" || name == "train_log")
    return name + ".csv";
  if (name == "silhouette" || name == "report" || name.rfind("report_", 0) == 0)
    return name + ".json";
  if (name == "ablation") return name + ".md";
  throw ConfigError("unknown artifact name: " + name);
}

struct GeneratedEntry {
  std::string file;
  int64_t cluster = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Runner internals live in a helper so the header stays small.

namespace {

class Stages {
 public:
  Stages(const config::PipelineConfig& cfg, const std::string& hash) : cfg_(cfg), hash_(hash) {}

  std::string out(const std::string& rel) const {
    return (fs::path(cfg_.paths.output_dir) / rel).string();
  }

  json read_manifest() const {
    const std::string path = out("manifest.json");
    if (!fs::exists(path)) return json::object();
    try {
      json m = json::parse(read_text(path));
      if (!m.is_object()) throw DataError("manifest is not an object");
      return m;
    } catch (const json::exception& e) {
      throw DataError("corrupt manifest at " + path + ": " + e.what());
    }
  }

  void record_stage(const std::string& stage, uint64_t seed,
                    const std::map<std::string, std::string>& artifacts) const {
    json m = read_manifest();
    json entry;
    entry["config_hash"] = hash_;
    entry["seed"] = seed;
    json arts = json::object();
    for (const auto& [name, rel] : artifacts) arts[name] = rel;
    entry["artifacts"] = arts;
    m["stages"][stage] = entry;
    write_text(out("manifest.json"), m.dump(2) + "\n");
  }

  bool stage_cached(const std::string& stage) const {
    const json m = read_manifest();
    if (!m.contains("stages") || !m["stages"].contains(stage)) return false;
    const json& entry = m["stages"][stage];
    if (entry.value("config_hash", std::string()) != hash_) return false;
    if (!entry.contains("artifacts")) return false;
    for (const auto& [name, rel] : entry["artifacts"].items()) {
      (void)name;
      if (!fs::exists(out(rel.get<std::string>()))) return false;
    }
    return true;
  }

  std::vector<std::string> stage_artifact_names(const std::string& stage) const {
    const json m = read_manifest();
    std::vector<std::string> names;
    if (m.contains("stages") && m["stages"].contains(stage) &&
        m["stages"][stage].contains("artifacts"))
      for (const auto& [name, rel] : m["stages"][stage]["artifacts"].items()) {
        (void)rel;
        names.push_back(name);
      }
    return names;
  }

  data::DatasetBundle load_bundle() const {
    const bool synthetic = cfg_.paths.dataset_dir.empty();
    const std::string root = synthetic ? out("dataset") : cfg_.paths.dataset_dir;
    if (!fs::exists(root))
      throw MissingInputError(synthetic
                                  ? "dataset not found at " + root + "; run `slsr synth` first"
                                  : "dataset directory not found: " + root);
    return data::load_reid_dir(root);
  }

  void require(const std::string& rel, const std::string& producer) const {
    if (!fs::exists(out(rel)))
      throw MissingInputError(rel + " not found; run `slsr " + producer + "` first");
  }

  // image_id -> cluster and aligned identity vectors, from assignments.csv
  void load_assignments(std::vector<std::string>& ids, std::vector<int64_t>& identities,
                        std::vector<int64_t>& clusters) const {
    require("assignments.csv", "cluster");
    cluster::parse_assignments_csv(read_text(out("assignments.csv")), ids, identities, clusters);
  }

  // --- stages -------------------------------------------------------------

  std::map<std::string, std::string> run_synth(uint64_t seed) const {
    if (!cfg_.paths.dataset_dir.empty())
      throw ConfigError("synth: paths.dataset_dir is set; the synthetic corpus is only "
                        "generated when no dataset directory is configured");
    data::SynthConfig sc = cfg_.synth;
    sc.seed = seed;
    data::DatasetBundle bundle = data::make_synthetic_corpus(sc);
    data::save_bundle_tree(bundle, out("dataset"));
    return {{"dataset", "dataset"}};
  }

  std::map<std::string, std::string> run_features(uint64_t seed) const {
    data::DatasetBundle bundle = load_bundle();
    backbone::BackboneConfig bcfg = cfg_.backbone;
    bcfg.n_classes = bundle.n_classes;
    bcfg.extra_class = false;
    backbone::TrainCurve curve;
    backbone::ModelState model =
        backbone::train_feature_model(bundle, bcfg, cfg_.preprocess, cfg_.stage1, seed, &curve);
    backbone::save_model(out("feature_model.ckpt"), model);
    std::string log = "epoch,loss\n";
    char buf[64];
    for (size_t e = 0; e < curve.epoch_loss.size(); ++e) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e, curve.epoch_loss[e]);
      log += buf;
    }
    write_text(out("features_log.csv"), log);
    return {{"feature_model", "feature_model.ckpt"}, {"features_log", "features_log.csv"}};
  }

  std::map<std::string, std::string> run_cluster(uint64_t seed) const {
    require("feature_model.ckpt", "train-features");
    data::DatasetBundle bundle = load_bundle();
    backbone::ModelState model = backbone::load_model(out("feature_model.ckpt"));
    const backbone::EmbeddingResult emb =
        backbone::extract_features(model, bundle.train, cfg_.preprocess);
    cluster::save_embeddings(out("embeddings.bin"), emb.values);

    const int64_t n = emb.values.rows();
    std::set<int64_t> table_ks{2, 3, 4, 5};
    table_ks.insert(cfg_.train.k);

    json scores = json::object();
    std::vector<int64_t> assignments;
    for (int64_t k : table_ks) {
      if (k > n) continue;
      cluster::KmeansConfig kc;
      kc.k = k;
      Rng rng(derive_seed(seed, "kmeans", static_cast<uint64_t>(k)));
      const cluster::KmeansResult res = cluster::kmeans_fit(emb.values, kc, rng);
      if (k >= 2)
        scores[std::to_string(k)] = cluster::silhouette_score(emb.values, res.assignments);
      if (k == cfg_.train.k) assignments = res.assignments;
    }
    if (assignments.empty())
      throw DataError("cluster: fewer training images than requested clusters");

    std::vector<int64_t> identities;
    identities.reserve(bundle.train.size());
    for (const auto& rec : bundle.train) identities.push_back(rec.identity);
    write_text(out("assignments.csv"),
               cluster::assignments_to_csv(emb.row_ids, identities, assignments));

    json sj;
    sj["k"] = cfg_.train.k;
    sj["scores"] = scores;
    write_text(out("silhouette.json"), sj.dump(2) + "\n");
    return {{"embeddings", "embeddings.bin"},
            {"assignments", "assignments.csv"},
            {"silhouette", "silhouette.json"}};
  }

  // cluster -> records resized to the GAN's input size in [-1,1]
  std::map<int64_t, std::vector<data::ImageRecord>> clustered_gan_inputs() const {
    std::vector<std::string> ids;
    std::vector<int64_t> identities, clusters;
    load_assignments(ids, identities, clusters);
    std::map<std::string, int64_t> cluster_of;
    for (size_t i = 0; i < ids.size(); ++i) cluster_of[ids[i]] = clusters[i];

    data::DatasetBundle bundle = load_bundle();
    std::map<int64_t, std::vector<data::ImageRecord>> grouped;
    for (const auto& r : bundle.train) {
      const auto it = cluster_of.find(r.image_id);
      if (it == cluster_of.end())
        throw DataError("gan: no cluster assignment for " + r.image_id +
                        "; re-run `slsr cluster`");
      data::ImageRecord rec = r;
      data::load_pixels(rec);
      rec.pixels =
          data::resize_bilinear(rec.pixels, cfg_.gan.image_size, cfg_.gan.image_size);
      for (double& v : rec.pixels.data) v = v * 2.0 - 1.0;
      rec.cluster = it->second;
      grouped[it->second].push_back(std::move(rec));
    }
    return grouped;
  }

  std::map<std::string, std::string> run_gan(uint64_t seed) const {
    const auto grouped = clustered_gan_inputs();
    gan::GanConfig g = cfg_.gan;
    g.seed = seed;
    std::map<std::string, std::string> artifacts;
    for (const auto& [cid, recs] : grouped) {
      gan::GanTrainLog glog;
      gan::GanPair pair = gan::train_gan(recs, g, &glog);
      const std::string base = "gan_c" + std::to_string(cid);
      const std::string log_name = "gan_log_c" + std::to_string(cid);
      gan::save_gan(out(base + ".ckpt"), pair);
      std::string log = "iter,d_real,d_fake,g_loss\n";
      char buf[128];
      for (size_t i = 0; i < glog.g_loss.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i, glog.d_real_loss[i],
                      glog.d_fake_loss[i], glog.g_loss[i]);
        log += buf;
      }
      write_text(out(log_name + ".csv"), log);
      artifacts[base] = base + ".ckpt";
      artifacts[log_name] = log_name + ".csv";
    }
    return artifacts;
  }

  // per-cluster generation quotas summing exactly to generated_total
  std::map<int64_t, int64_t> generation_quotas() const {
    std::vector<std::string> ids;
    std::vector<int64_t> identities, clusters;
    load_assignments(ids, identities, clusters);
    std::map<int64_t, int64_t> sizes;
    for (int64_t c : clusters) ++sizes[c];
    const int64_t total = cfg_.train.generated_total;
    const int64_t n = static_cast<int64_t>(clusters.size());
    std::map<int64_t, int64_t> quota;
    if (cfg_.uniform_generation) {
      const int64_t ccount = static_cast<int64_t>(sizes.size());
      int64_t extra = total % ccount;
      for (const auto& [cid, sz] : sizes) {
        (void)sz;
        quota[cid] = total / ccount + (extra > 0 ? 1 : 0);
        if (extra > 0) --extra;
      }
      return quota;
    }
    // proportional with largest-remainder rounding
    int64_t assigned = 0;
    std::vector<std::pair<int64_t, int64_t>> remainders;  // (-remainder, cid)
    for (const auto& [cid, sz] : sizes) {
      quota[cid] = total * sz / n;
      assigned += quota[cid];
      remainders.push_back({-(total * sz % n), cid});
    }
    std::sort(remainders.begin(), remainders.end());
    for (auto& [negrem, cid] : remainders) {
      (void)negrem;
      if (assigned >= total) break;
      ++quota[cid];
      ++assigned;
    }
    return quota;
  }

  std::map<std::string, std::string> run_generate(uint64_t seed) const {
    const auto quota = generation_quotas();
    for (const auto& [cid, count] : quota)
      if (count > 0) require("gan_c" + std::to_string(cid) + ".ckpt", "gan");

    fs::remove_all(out("generated"));
    fs::create_directories(out("generated"));
    json images = json::array();
    for (const auto& [cid, count] : quota) {
      if (count <= 0) continue;
      gan::GanPair pair = gan::load_gan(out("gan_c" + std::to_string(cid) + ".ckpt"));
      const auto samples = gan::sample(pair, count, seed);
      for (const auto& rec : samples) {
        Tensor unit = rec.pixels;
        for (double& v : unit.data) v = (v + 1.0) / 2.0;
        const std::string file = rec.image_id + ".png";
        data::save_png(out("generated/" + file), unit);
        json e;
        e["file"] = file;
        e["cluster"] = cid;
        e["seed"] = seed;
        images.push_back(e);
      }
    }
    json gm;
    gm["images"] = images;
    gm["total"] = static_cast<int64_t>(images.size());
    write_text(out("generated/manifest.json"), gm.dump(2) + "\n");
    return {{"generated", "generated"}, {"generated_manifest", "generated/manifest.json"}};
  }

  std::vector<data::ImageRecord> load_generated() const {
    require("generated/manifest.json", "generate");
    std::vector<data::ImageRecord> records;
    try {
      const json gm = json::parse(read_text(out("generated/manifest.json")));
      for (const auto& e : gm.at("images")) {
        data::ImageRecord rec;
        const std::string file = e.at("file").get<std::string>();
        rec.image_id = fs::path(file).stem().string();
        rec.cluster = e.at("cluster").get<int64_t>();
        rec.identity = -1;
        rec.camera = 0;
        rec.sequence = 0;
        rec.split = data::Split::generated;
        rec.pixels = data::load_png(out("generated/" + file));
        for (double& v : rec.pixels.data) v = v * 2.0 - 1.0;
        records.push_back(std::move(rec));
      }
    } catch (const json::exception& e) {
      throw DataError(std::string("corrupt generated manifest: ") + e.what());
    }
    return records;
  }

  std::map<std::string, std::string> run_train(uint64_t seed) const {
    data::DatasetBundle bundle = load_bundle();
    trainer::TrainConfig tc = cfg_.train;
    tc.seed = seed;

    std::vector<data::ImageRecord> generated;
    std::map<int64_t, std::vector<int64_t>> support;
    if (tc.generated_total > 0) {
      generated = load_generated();
      if (tc.generated_scheme == labels::Scheme::slsr) {
        std::vector<std::string> ids;
        std::vector<int64_t> identities, clusters;
        load_assignments(ids, identities, clusters);
        support = trainer::class_support(clusters, identities, bundle.class_of_identity);
      }
    }

    backbone::BackboneConfig bcfg = cfg_.backbone;
    bcfg.n_classes = bundle.n_classes;
    bcfg.extra_class = tc.generated_scheme == labels::Scheme::all_in_one;

    trainer::JointLog log;
    backbone::ModelState model =
        trainer::joint_train(bundle, generated, support, bcfg, tc, cfg_.preprocess, &log);
    backbone::save_model(out("model.ckpt"), model);
    write_text(out("train_log.csv"), trainer::log_to_csv(log));
    return {{"model", "model.ckpt"}, {"train_log", "train_log.csv"}};
  }

  std::map<std::string, std::string> run_eval(uint64_t) const {
    require("model.ckpt", "train");
    data::DatasetBundle bundle = load_bundle();
    if (bundle.query.empty() || bundle.gallery.empty())
      throw DataError("eval: the dataset provides no query/gallery split");
    backbone::ModelState model = backbone::load_model(out("model.ckpt"));

    const backbone::EmbeddingResult qe =
        backbone::extract_features(model, bundle.query, cfg_.preprocess);
    const backbone::EmbeddingResult ge =
        backbone::extract_features(model, bundle.gallery, cfg_.preprocess);
    std::vector<int64_t> qids, qcams, gids, gcams;
    for (const auto& r : bundle.query) {
      qids.push_back(r.identity);
      qcams.push_back(r.camera);
    }
    for (const auto& r : bundle.gallery) {
      gids.push_back(r.identity);
      gcams.push_back(r.camera);
    }

    Matrix qf = qe.values;
    if (cfg_.eval.protocol == eval::Protocol::market_multi) {
      const eval::MergedQueries merged = eval::merge_multi_query(qe.values, qids, qcams);
      qf = merged.features;
      qids = merged.ids;
      qcams = merged.cams;
    }
    const Matrix dist =
        cfg_.eval.rerank
            ? eval::rerank_k_reciprocal(qf, ge.values, cfg_.eval.rerank_k1, cfg_.eval.rerank_k2,
                                        cfg_.eval.rerank_lambda)
            : eval::pairwise_l2(qf, ge.values);
    const eval::RankingResult result =
        eval::cmc_map(dist, qids, qcams, gids, gcams, cfg_.eval.protocol);
    const std::string text = eval::report_to_json(result);
    write_text(out("report.json"), text);
    const std::string grid_name = "report_k" + std::to_string(cfg_.train.k) + "_g" +
                                  std::to_string(cfg_.train.generated_total);
    write_text(out(grid_name + ".json"), text);
    return {{"report", "report.json"}, {grid_name, grid_name + ".json"}};
  }

  std::string render_report() const {
    std::string md = "# Pipeline summary\n";

    if (fs::exists(out("silhouette.json"))) {
      try {
        const json sj = json::parse(read_text(out("silhouette.json")));
        md += "\n## Cluster quality (silhouette by K)\n\n| K | silhouette |\n|---|---|\n";
        char buf[96];
        for (const auto& [k, v] : sj.at("scores").items()) {
          std::snprintf(buf, sizeof(buf), "| %s | %.4f |\n", k.c_str(), v.get<double>());
          md += buf;
        }
      } catch (const json::exception& e) {
        throw DataError(std::string("corrupt silhouette table: ") + e.what());
      }
    }

    // grid: rows = generated counts, columns = K, cells R1/R5/R10/mAP
    std::map<int64_t, std::map<int64_t, json>> grid;  // generated -> k -> report
    std::set<int64_t> ks;
    if (fs::exists(cfg_.paths.output_dir))
      for (const auto& entry : fs::directory_iterator(cfg_.paths.output_dir)) {
        const std::string name = entry.path().filename().string();
        long long k = 0, g = 0;
        if (std::sscanf(name.c_str(), "report_k%lld_g%lld.json", &k, &g) == 2) {
          try {
            grid[g][k] = json::parse(read_text(entry.path().string()));
          } catch (const json::exception& e) {
            throw DataError("corrupt report " + name + ": " + e.what());
          }
          ks.insert(k);
        }
      }
    if (!grid.empty()) {
      md += "\n## Retrieval by cluster count and generated images\n\n| generated |";
      for (int64_t k : ks) md += " K=" + std::to_string(k) + " R1/R5/R10/mAP |";
      md += "\n|---|";
      for (size_t i = 0; i < ks.size(); ++i) md += "---|";
      md += "\n";
      auto rank = [](const json& rep, size_t idx) {
        const auto& cmc = rep.at("cmc");
        return idx < cmc.size() ? cmc[idx].get<double>() : 1.0;
      };
      try {
        for (const auto& [g, row] : grid) {
          md += "| " + std::to_string(g) + " |";
          for (int64_t k : ks) {
            const auto it = row.find(k);
            if (it == row.end()) {
              md += " - |";
              continue;
            }
            char buf[128];
            std::snprintf(buf, sizeof(buf), " %.4f/%.4f/%.4f/%.4f |", rank(it->second, 0),
                          rank(it->second, 4), rank(it->second, 9),
                          it->second.at("mAP").get<double>());
            md += buf;
          }
          md += "\n";
        }
      } catch (const json::exception& e) {
        throw DataError(std::string("corrupt retrieval report: ") + e.what());
      }
    }
    return md;
  }

  std::map<std::string, std::string> run_report(uint64_t) const {
    bool any = fs::exists(out("silhouette.json"));
    if (!any && fs::exists(cfg_.paths.output_dir))
      for (const auto& entry : fs::directory_iterator(cfg_.paths.output_dir)) {
        long long k = 0, g = 0;
        if (std::sscanf(entry.path().filename().string().c_str(), "report_k%lld_g%lld.json", &k,
                        &g) == 2)
          any = true;
      }
    if (!any)
      throw MissingInputError(
          "nothing to aggregate; run `slsr cluster` or `slsr eval` first");
    write_text(out("ablation.md"), render_report());
    return {{"ablation", "ablation.md"}};
  }

 private:
  const config::PipelineConfig& cfg_;
  std::string hash_;
};

}  // namespace

Runner::Runner(config::PipelineConfig cfg) : cfg_(std::move(cfg)) {
  config::validate(cfg_);
  hash_ = config::config_hash(cfg_);
}

StageResult Runner::run_stage(const std::string& name, bool force) {
  const std::string stage = canonical_stage(name);
  Stages st(cfg_, hash_);

  using Fn = std::map<std::string, std::string> (Stages::*)(uint64_t) const;
  struct Entry {
    Fn fn;
    const char* seed_tag;
    bool cacheable;
  };
  static const std::map<std::string, Entry> kStages{
      {"synth", {&Stages::run_synth, "stage_synth", true}},
      {"train-features", {&Stages::run_features, "stage_features", true}},
      {"cluster", {&Stages::run_cluster, "stage_cluster", true}},
      {"gan", {&Stages::run_gan, "stage_gan", true}},
      {"generate", {&Stages::run_generate, "stage_generate", true}},
      {"train", {&Stages::run_train, "stage_train", true}},
      {"eval", {&Stages::run_eval, "stage_eval", true}},
      {"report", {&Stages::run_report, "stage_report", false}},
  };
  const auto it = kStages.find(stage);
  if (it == kStages.end()) throw ConfigError("unknown stage: " + name);

  StageResult result;
  result.stage = stage;
  if (it->second.cacheable && !force && st.stage_cached(stage)) {
    result.skipped = true;
    result.artifacts = st.stage_artifact_names(stage);
    return result;
  }

  const uint64_t seed = derive_seed(cfg_.seed, it->second.seed_tag, 0);
  const auto artifacts =
      with_stage(stage, [&] { return (st.*(it->second.fn))(seed); });
  st.record_stage(stage, seed, artifacts);
  for (const auto& [aname, rel] : artifacts) {
    (void)rel;
    result.artifacts.push_back(aname);
  }
  return result;
}

std::vector<StageResult> Runner::run_all(bool force) {
  std::vector<std::string> stages;
  if (cfg_.paths.dataset_dir.empty()) stages.push_back("synth");
  if (cfg_.train.generated_total > 0) {
    stages.insert(stages.end(), {"train-features", "cluster", "gan", "generate"});
  }
  stages.insert(stages.end(), {"train", "eval", "report"});

  std::vector<StageResult> results;
  for (const auto& s : stages) results.push_back(run_stage(s, force));
  return results;
}

std::string Runner::render_report() const { return Stages(cfg_, hash_).render_report(); }

std::string Runner::manifest_json() const {
  return Stages(cfg_, hash_).read_manifest().dump(2);
}

std::string Runner::artifact_path(const std::string& name) const {
  Stages st(cfg_, hash_);
  const json m = st.read_manifest();
  if (m.contains("stages"))
    for (const auto& [stage, entry] : m["stages"].items()) {
      (void)stage;
      if (entry.contains("artifacts") && entry["artifacts"].contains(name))
        return st.out(entry["artifacts"][name].get<std::string>());
    }
  return st.out(default_rel(name));
}

}  // namespace slsr::pipeline
