#include "prema/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <json.hpp>

#include "prema/checkpoint.hpp"
#include "prema/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace prema {

namespace {

// Round-trippable doubles in every CSV.
std::ostringstream csv_stream() {
  std::ostringstream os;
  os << std::setprecision(17);
  return os;
}

int run_guarded(const char* what, const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const checkpoint_error& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const io_error& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return kExitValidation;
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open " + path);
  out << text;
  if (!out) throw io_error("write failed for " + path);
}

void write_resolved_config(const RunConfig& config, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir + ": " + ec.message());
  write_text((fs::path(dir) / "resolved_config.txt").string(), config.serialize());
}

std::string manifest_path(const RunConfig& config) {
  return (fs::path(config.data_dir) / "manifest.jsonl").string();
}

LoadedDataset load_data(const RunConfig& config) {
  return load_dataset(load_manifest(manifest_path(config)));
}

PremaParams params_from_checkpoint(const RunConfig& config, const std::string& path,
                                   const std::string& variant_name) {
  Rng rng(0);
  PremaParams params = PremaParams::init(config.model_dims(), parse_variant(variant_name), rng);
  apply_checkpoint(load_checkpoint(path), params.named());
  return params;
}

json metrics_json(const MetricsReport& r) {
  json j;
  j["map"] = r.map;
  j["auc_pr"] = r.auc_pr;
  j["ndcg"] = r.ndcg;
  j["f1_at_k"] = r.f1_at_k;
  j["k"] = r.k;
  j["accuracy_per_instance"] = r.accuracy_per_instance;
  j["accuracy_per_class"] = r.accuracy_per_class;
  json per_query = json::array();
  for (const auto& [id, ap] : r.per_query_ap) {
    per_query.push_back({{"query", id}, {"ap", ap}});
  }
  j["per_query_ap"] = per_query;
  return j;
}

MetricsReport make_report(const PremaParams& params, const std::vector<EmbeddedShape>& embedded,
                          const std::vector<RetrievalResult>& results, std::size_t k) {
  MetricsReport r;
  r.map = compute_map(results);
  r.auc_pr = compute_auc_pr(results);
  r.ndcg = compute_ndcg(results);
  r.k = k;
  r.f1_at_k = compute_f1(results, k);
  auto [inst, cls] = compute_accuracy(params, embedded);
  r.accuracy_per_instance = inst;
  r.accuracy_per_class = cls;
  for (const RetrievalResult& q : results) {
    if (q.relevant_count() == 0) continue;
    r.per_query_ap.emplace_back(q.query_id, compute_ap(q));
  }
  r.pr_curve = mean_pr_curve(results);
  return r;
}

void write_report(const MetricsReport& r, const std::string& dir, const std::string& tag) {
  write_text((fs::path(dir) / (tag + ".json")).string(), metrics_json(r).dump(2) + "\n");
  std::ostringstream per_query = csv_stream();
  per_query << "query,ap\n";
  for (const auto& [id, ap] : r.per_query_ap) per_query << id << ',' << ap << '\n';
  write_text((fs::path(dir) / (tag + "_per_query.csv")).string(), per_query.str());
  std::ostringstream pr = csv_stream();
  pr << "recall,precision\n";
  for (const PrPoint& p : r.pr_curve) pr << p.recall << ',' << p.precision << '\n';
  write_text((fs::path(dir) / (tag + "_pr_curve.csv")).string(), pr.str());
}

void write_conf_maps(const std::vector<EmbeddedShape>& embedded, const std::string& path) {
  std::ostringstream os = csv_stream();
  os << "shape_id,view,conf\n";
  for (const EmbeddedShape& e : embedded) {
    for (std::size_t v = 0; v < e.conf_maps.size(); ++v) {
      os << e.shape_id << ',' << v;
      for (double c : e.conf_maps[v]) os << ',' << c;
      os << '\n';
    }
  }
  write_text(path, os.str());
}

}  // namespace

int cmd_generate(const RunConfig& config) {
  return run_guarded("generate", [&] {
    const DatasetManifest manifest = generate_dataset(config.gen_config());
    write_resolved_config(config, config.data_dir);
    std::cout << "wrote " << manifest.records.size() << " shapes, manifest at "
              << manifest_path(config) << "\n";
  });
}

int cmd_train(const RunConfig& config) {
  return run_guarded("train", [&] {
    const LoadedDataset data = load_data(config);
    write_resolved_config(config, config.out_dir);
    const TrainConfig tc = config.train_config();
    const ModelDims dims = config.model_dims();
    const bool f32 = config.checkpoint_dtype == "f32";

    std::vector<TrainLogRow> log;
    std::cout << "stage 1: " << tc.stage1.epochs << " epochs over the per-view head\n";
    const Stage1Result stage1 = train_stage1(tc, data, dims, &log);
    std::vector<std::pair<std::string, Tensor>> stage1_named;
    stage1.encoder.named("encoder", stage1_named);
    const std::string s1_path = (fs::path(config.out_dir) / "stage1.ckpt").string();
    save_checkpoint(s1_path, stage1_named, f32);

    std::cout << "stage 2: " << tc.stage2.epochs << " epochs, variant " << config.variant << "\n";
    const PremaParams params = train_stage2(tc, data, dims, stage1.encoder, &log);
    const std::string s2_path = (fs::path(config.out_dir) / "stage2.ckpt").string();
    save_checkpoint(s2_path, params.named(), f32);

    std::ostringstream csv = csv_stream();
    csv << "stage,epoch,lr,mean_loss\n";
    for (const TrainLogRow& row : log) {
      csv << row.stage << ',' << row.epoch << ',' << row.lr << ',' << row.mean_loss << '\n';
    }
    write_text((fs::path(config.out_dir) / "training_log.csv").string(), csv.str());
    std::cout << "checkpoints: " << s1_path << ", " << s2_path << "\n";
  });
}

int cmd_evaluate(const RunConfig& config) {
  return run_guarded("evaluate", [&] {
    if (config.checkpoint.empty()) {
      throw std::invalid_argument("evaluate: no checkpoint configured (set checkpoint=...)");
    }
    const LoadedDataset data = load_data(config);
    write_resolved_config(config, config.out_dir);
    const PremaParams params = params_from_checkpoint(config, config.checkpoint, config.variant);
    const bool want_conf = config.export_conf && params.has_rau();
    const std::vector<EmbeddedShape> embedded = embed_split(
        params, data, config.split, config.noise_config(), want_conf, config.workers);
    const std::vector<RetrievalResult> results = rank_results(embedded);
    const MetricsReport report = make_report(params, embedded, results, config.f1_k);
    write_report(report, config.out_dir, "metrics");
    if (want_conf) {
      write_conf_maps(embedded, (fs::path(config.out_dir) / "conf_maps.csv").string());
    }
    std::cout << "split " << config.split << ": mAP " << report.map << ", AUC " << report.auc_pr
              << ", NDCG " << report.ndcg << ", acc " << report.accuracy_per_instance << "\n";
  });
}

int cmd_ablate(const RunConfig& config) {
  return run_guarded("ablate", [&] {
    const LoadedDataset data = load_data(config);
    write_resolved_config(config, config.out_dir);
    TrainConfig tc = config.train_config();
    const ModelDims dims = config.model_dims();

    std::cout << "ablation: shared stage-1 encoder\n";
    const Stage1Result stage1 = train_stage1(tc, data, dims, nullptr);

    const AggregationVariant variants[] = {
        AggregationVariant::Prema, AggregationVariant::DoubleLstms,
        AggregationVariant::MaxPoolOnly, AggregationVariant::SingleDirectionPrema};
    std::ostringstream csv = csv_stream();
    csv << "variant,map,auc_pr,ndcg,f1_at_k,accuracy_per_instance,accuracy_per_class\n";
    json rows = json::array();
    for (AggregationVariant v : variants) {
      tc.variant = v;
      std::cout << "ablation: training " << to_string(v) << "\n";
      const PremaParams params = train_stage2(tc, data, dims, stage1.encoder, nullptr);
      const auto embedded =
          embed_split(params, data, config.split, NoiseConfig{}, false, config.workers);
      const auto results = rank_results(embedded);
      const MetricsReport r = make_report(params, embedded, results, config.f1_k);
      csv << to_string(v) << ',' << r.map << ',' << r.auc_pr << ',' << r.ndcg << ',' << r.f1_at_k
          << ',' << r.accuracy_per_instance << ',' << r.accuracy_per_class << '\n';
      json row = metrics_json(r);
      row.erase("per_query_ap");
      row["variant"] = to_string(v);
      rows.push_back(row);
    }
    write_text((fs::path(config.out_dir) / "ablation.csv").string(), csv.str());
    write_text((fs::path(config.out_dir) / "ablation.json").string(), rows.dump(2) + "\n");
  });
}

int cmd_robust(const RunConfig& config) {
  return run_guarded("robust", [&] {
    if (config.checkpoint.empty()) {
      throw std::invalid_argument("robust: no checkpoint configured (set checkpoint=...)");
    }
    const LoadedDataset data = load_data(config);
    write_resolved_config(config, config.out_dir);
    const PremaParams params = params_from_checkpoint(config, config.checkpoint, config.variant);

    auto sweep_eval = [&](const NoiseConfig& noise, const std::string& tag) {
      const auto embedded = embed_split(params, data, config.split, noise, false, config.workers);
      const auto results = rank_results(embedded);
      const MetricsReport r = make_report(params, embedded, results, config.f1_k);
      std::ostringstream pr = csv_stream();
      pr << "recall,precision\n";
      for (const PrPoint& p : r.pr_curve) pr << p.recall << ',' << p.precision << '\n';
      write_text((fs::path(config.out_dir) / ("pr_" + tag + ".csv")).string(), pr.str());
      return r;
    };

    json trend;

    const std::size_t missing_levels[] = {0, 2, 4, 6, 8};
    std::ostringstream mcsv = csv_stream();
    mcsv << "missing,map,auc_pr,ndcg,f1_at_k\n";
    std::vector<double> missing_map;
    for (std::size_t m : missing_levels) {
      NoiseConfig noise = config.noise_config();
      noise.missing_view_count = m;
      noise.occluder_scale = 0;
      noise.clutter_count = 0;
      const MetricsReport r = sweep_eval(noise, "missing_" + std::to_string(m));
      mcsv << m << ',' << r.map << ',' << r.auc_pr << ',' << r.ndcg << ',' << r.f1_at_k << '\n';
      missing_map.push_back(r.map);
      std::cout << "missing " << m << ": mAP " << r.map << "\n";
    }
    write_text((fs::path(config.out_dir) / "robust_missing.csv").string(), mcsv.str());
    trend["missing_map_drop"] = missing_map.front() - missing_map.back();

    const double occ_levels[] = {0.8, 1.0, 1.2, 1.4};
    std::ostringstream ocsv = csv_stream();
    ocsv << "occluder_scale,map,auc_pr,ndcg,f1_at_k\n";
    std::vector<double> occ_map;
    for (double s : occ_levels) {
      NoiseConfig noise = config.noise_config();
      noise.missing_view_count = 0;
      noise.occluder_scale = s;
      noise.clutter_count = 0;
      std::ostringstream tag;
      tag << "occ_" << s;
      const MetricsReport r = sweep_eval(noise, tag.str());
      ocsv << s << ',' << r.map << ',' << r.auc_pr << ',' << r.ndcg << ',' << r.f1_at_k << '\n';
      occ_map.push_back(r.map);
      std::cout << "occluder " << s << ": mAP " << r.map << "\n";
    }
    write_text((fs::path(config.out_dir) / "robust_occlusion.csv").string(), ocsv.str());
    trend["occlusion_map_drop"] = occ_map.front() - occ_map.back();

    const std::size_t clutter_levels[] = {0, 4};
    std::ostringstream ccsv = csv_stream();
    ccsv << "clutter,map,auc_pr,ndcg,f1_at_k\n";
    std::vector<double> clutter_map;
    for (std::size_t c : clutter_levels) {
      NoiseConfig noise = config.noise_config();
      noise.missing_view_count = 0;
      noise.occluder_scale = 0;
      noise.clutter_count = c;
      const MetricsReport r = sweep_eval(noise, "clutter_" + std::to_string(c));
      ccsv << c << ',' << r.map << ',' << r.auc_pr << ',' << r.ndcg << ',' << r.f1_at_k << '\n';
      clutter_map.push_back(r.map);
      std::cout << "clutter " << c << ": mAP " << r.map << "\n";
    }
    write_text((fs::path(config.out_dir) / "robust_clutter.csv").string(), ccsv.str());
    trend["clutter_map_drop"] = clutter_map.front() - clutter_map.back();

    write_text((fs::path(config.out_dir) / "trend_summary.json").string(), trend.dump(2) + "\n");
  });
}

}  // namespace prema
