// Command-line harness for the dual-stream video-classification framework:
// synthetic data generation, preprocessing, optical flow, architecture
// verification, training, evaluation, ensembling and ablation grids.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "stshare/config.hpp"
#include "stshare/serialize.hpp"
#include "stshare/svg.hpp"
#include "stshare/synth.hpp"
#include "stshare/verify.hpp"

namespace fs = std::filesystem;
using namespace stshare;

namespace {

constexpr const char* kToolVersion = "stshare 1.0.0";

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitVerification = 3;
constexpr int kExitDivergence = 4;

Json run_header(const Json& config) {
  Json j;
  j["tool"] = kToolVersion;
  j["config"] = config;
  j["config_hash"] = config_hash(config);
  j["deterministic"] = deterministic_mode();
  return j;
}

void add_input_hashes(Json& header, const std::vector<std::string>& files) {
  Json inputs = Json::object();
  for (const auto& f : files)
    if (fs::exists(f) && fs::is_regular_file(f)) inputs[f] = file_blob_hash(f);
  header["inputs"] = inputs;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out, std::uint64_t seed, int clips_per_class, int t, int height,
              int width) {
  SynthOptions opt;
  opt.clips_per_class = clips_per_class;
  opt.t = t;
  opt.height = height;
  opt.width = width;
  auto clips = synth_generate(seed, opt);
  Json extra{{"seed", seed},
             {"clips_per_class", clips_per_class},
             {"t", t},
             {"height", height},
             {"width", width},
             {"tool", kToolVersion}};
  save_clips(out, clips, extra);
  std::printf("wrote %zu clips (%d per class) to %s\n", clips.size(), clips_per_class, out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// prep
// ---------------------------------------------------------------------------

struct PrepArgs {
  std::string in, out;
  std::string modality = "nightified";
  std::string policy = "stratified";
  int t = 8, height = 0, width = 0;
  std::uint64_t seed = 1;
};

int cmd_prep(const PrepArgs& a) {
  auto clips = load_clips(a.in);
  if (clips.empty()) throw std::invalid_argument("no clips in " + a.in);

  const Json src_manifest = Json::parse(read_file((fs::path(a.in) / "manifest.json").string()));
  PipelineOptions popt;
  popt.t = a.t;
  popt.height = a.height > 0 ? a.height : src_manifest.at("extra").value("height", 96);
  popt.width = a.width > 0 ? a.width : src_manifest.at("extra").value("width", 128);
  popt.modality = modality_from(a.modality);

  ChannelStats stats;
  bool have_stats = false;
  if (popt.modality == Modality::kNightified) {
    stats = night_stats(clips);
    have_stats = true;
  }

  const SplitPolicy policy =
      a.policy == "main-vs-clipped" ? SplitPolicy::kMainVsClipped : SplitPolicy::kStratified;
  auto split = split_dataset(clips, policy, a.seed);

  fs::create_directories(a.out);
  Json counts = Json::object();
  std::size_t discarded = 0;
  const std::vector<std::pair<std::string, const std::vector<const VideoClip*>*>> splits{
      {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
  for (const auto& [name, members] : splits) {
    auto built = build_split(*members, popt, have_stats ? &stats : nullptr, name);
    if (built.image.labels.empty())
      throw std::invalid_argument("split '" + name + "' produced no cuboids");
    save_split(a.out, name, built);
    discarded += built.discarded_frames;
    auto c = label_counts(built.image.labels);
    Json per = Json::object();
    for (int k = 0; k < kNumClasses; ++k) per[class_name(k)] = c[static_cast<std::size_t>(k)];
    per["total"] = built.image.labels.size();
    counts[name] = per;
    std::printf("split %-5s: %4zu cuboids\n", name.c_str(), built.image.labels.size());
  }

  Json config{{"in", a.in},  {"modality", a.modality}, {"policy", a.policy},
              {"t", popt.t}, {"h", popt.height},       {"w", popt.width},
              {"seed", a.seed}};
  Json manifest = run_header(config);
  manifest["counts"] = counts;
  manifest["discarded_frames"] = discarded;
  manifest["c"] = popt.modality == Modality::kGrayscale ? 1 : 3;
  manifest["modality"] = a.modality;
  manifest["t"] = popt.t;
  manifest["h"] = popt.height;
  manifest["w"] = popt.width;
  if (have_stats) manifest["night_stats"] = {stats.mean_r, stats.mean_g, stats.mean_b};
  add_input_hashes(manifest, {(fs::path(a.in) / "manifest.json").string()});
  write_file((fs::path(a.out) / "manifest.json").string(), manifest.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

int cmd_flow(const std::string& frames_dir, const std::string& out, int levels, int iters,
             int window, double sigma) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(frames_dir)) {
    const std::string ext = entry.path().extension().string();
    if (ext == ".frm" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) throw std::invalid_argument("need at least 2 frames in " + frames_dir);
  std::vector<Tensor<double>> planes;
  for (const auto& f : files) planes.push_back(luma_plane(load_frame(f.string())));
  auto fields = flow_sequence(planes, levels, iters, window, sigma);
  save_tensor(out, stack_flow(fields));
  std::printf("wrote flow cuboid [%zu x %d x %d x 2] to %s\n", fields.size(), fields[0].dim(0),
              fields[0].dim(1), out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// shapes / gradcheck
// ---------------------------------------------------------------------------

int cmd_shapes(const std::string& model, bool standalone) {
  bool ok = true;
  auto run_one = [&](ModelKind kind) {
    if (!standalone) {
      auto items = verify_shape_traces(kind);
      int pass = 0;
      for (const auto& item : items) {
        std::printf("%-4s %-22s %s\n", item.pass ? "PASS" : "FAIL", item.name.c_str(),
                    item.detail.c_str());
        pass += item.pass;
        ok &= item.pass;
      }
      std::printf("%d/%zu junctions PASS for %s\n", pass, items.size(), model_name(kind));
    } else {
      ModelConfig cfg;
      cfg.kind = kind;
      cfg.sharing = false;
      auto net = Network<float>::assemble(cfg);
      std::printf("%s/standalone junction trace:\n", model_name(kind));
      for (const auto& s : net.shape_trace()) std::printf("  %s\n", shape_str(s).c_str());
    }
  };
  if (model == "all") {
    for (ModelKind kind : kAllModelKinds) run_one(kind);
  } else {
    run_one(model_from(model));
  }
  return ok ? kExitOk : kExitVerification;
}

int cmd_gradcheck(int seeds, bool layers_only) {
  bool ok = true;
  std::printf("layer gradient checks (rtol 1e-4, eps 1e-4, float64, %d seeds each):\n", seeds);
  for (const auto& item : verify_layer_gradients(seeds)) {
    std::printf("%-4s %-14s %s\n", item.pass ? "PASS" : "FAIL", item.name.c_str(),
                item.detail.c_str());
    ok &= item.pass;
  }
  if (!layers_only) {
    std::printf("model gradient checks (rtol 1e-3, 1/8 width, float64):\n");
    for (const auto& item : verify_model_gradients()) {
      std::printf("%-4s %-24s %s\n", item.pass ? "PASS" : "FAIL", item.name.c_str(),
                  item.detail.c_str());
      ok &= item.pass;
    }
  }
  return ok ? kExitOk : kExitVerification;
}

// ---------------------------------------------------------------------------
// train / eval / ensemble
// ---------------------------------------------------------------------------

struct LoadedData {
  Json manifest;
  SplitCuboids train, val, test;
};

LoadedData load_prepped(const std::string& dir) {
  LoadedData d;
  d.manifest = Json::parse(read_file((fs::path(dir) / "manifest.json").string()));
  d.train = load_split(dir, "train");
  d.val = load_split(dir, "val");
  d.test = load_split(dir, "test");
  return d;
}

template <typename T>
int run_train(ExperimentConfig cfg, const std::string& data_dir, const std::string& out_dir) {
  LoadedData data = load_prepped(data_dir);
  cfg.model.t = data.manifest.at("t").get<int>();
  cfg.model.h = data.manifest.at("h").get<int>();
  cfg.model.w = data.manifest.at("w").get<int>();
  cfg.model.img_channels = data.manifest.at("c").get<int>();
  cfg.modality = modality_from(data.manifest.at("modality").get<std::string>());
  cfg.validate();

  const auto train_t = to_split_tensors<T>(data.train);
  const auto val_t = to_split_tensors<T>(data.val);
  const auto test_t = to_split_tensors<T>(data.test);

  const Json config_json{{"model", to_json(cfg.model)},
                         {"train", to_json(cfg.train)},
                         {"data", data_dir}};
  fs::create_directories(out_dir);

  std::vector<double> accs;
  bool any_failed = false;

  for (std::uint64_t seed : cfg.train.seeds) {
    ModelConfig mc = cfg.model;
    mc.init_seed = seed;
    auto net = Network<T>::assemble(mc);
    const std::string run_dir = (fs::path(out_dir) / ("seed_" + std::to_string(seed))).string();
    fs::create_directories(run_dir);

    auto manifest = fit(net, train_t, val_t, cfg.train, seed, [&](const EpochRow& row) {
      std::printf("[%s seed %llu] epoch %3d lr %.2e train %.4f/%.3f val %.4f/%.3f\n",
                  cfg.model.variant_name().c_str(), static_cast<unsigned long long>(seed),
                  row.epoch, row.lr, row.train_loss, row.train_acc, row.val_loss, row.val_acc);
      std::fflush(stdout);
    });
    manifest.config_hash = config_hash(config_json);
    save_history_csv((fs::path(run_dir) / "history.csv").string(), manifest);

    if (manifest.failed) {
      any_failed = true;
      write_file((fs::path(run_dir) / "manifest.json").string(), to_json(manifest).dump(2) + "\n");
      std::fprintf(stderr, "seed %llu failed: %s\n", static_cast<unsigned long long>(seed),
                   manifest.fail_reason.c_str());
      continue;
    }

    save_checkpoint((fs::path(run_dir) / "checkpoint").string(), net,
                    Json{{"seed", seed}, {"best_epoch", manifest.best_epoch}});
    auto p = predict(net, test_t, cfg.train.batch);
    p.model_tag = cfg.model.variant_name() + "#" + std::to_string(seed);
    p.split_tag = "test";
    auto metrics = evaluate(p);
    manifest.has_test_metrics = true;
    manifest.test_metrics = metrics;
    write_file((fs::path(run_dir) / "manifest.json").string(), to_json(manifest).dump(2) + "\n");
    write_file((fs::path(run_dir) / "metrics.json").string(), to_json(metrics).dump(2) + "\n");
    save_predictions((fs::path(run_dir) / "predictions").string(), p);
    accs.push_back(metrics.accuracy);
    std::printf("[%s seed %llu] test acc %.4f mAUC %.4f\n", cfg.model.variant_name().c_str(),
                static_cast<unsigned long long>(seed), metrics.accuracy, metrics.auc_micro);
  }
  if (accs.empty()) return kExitDivergence;

  Json summary = run_header(config_json);
  add_input_hashes(summary, {(fs::path(data_dir) / "manifest.json").string()});
  if (accs.size() >= 2) {
    auto agg = Aggregate::of(accs);
    summary["accuracy_mean_std"] = format_mean_std(agg.mean, agg.std, true) + "%";
    std::printf("%s accuracy over %zu seeds: %s%%\n", cfg.model.variant_name().c_str(), accs.size(),
                format_mean_std(agg.mean, agg.std, true).c_str());
  }
  summary["seeds_completed"] = accs.size();
  summary["failed_seeds"] = cfg.train.seeds.size() - accs.size();
  write_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
  return any_failed ? kExitDivergence : kExitOk;
}

template <typename T>
int run_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             const std::string& out_dir, bool svg) {
  const Json manifest = load_checkpoint_manifest(ckpt);
  ModelConfig mc = model_config_from_json(manifest.at("model_config"));
  auto net = Network<T>::assemble(mc);
  load_checkpoint(ckpt, net);
  auto cuboids = load_split(data_dir, split);
  auto data = to_split_tensors<T>(cuboids);
  auto p = predict(net, data);
  p.model_tag = mc.variant_name();
  p.split_tag = split;
  auto metrics = evaluate(p);

  fs::create_directories(out_dir);
  Json header = run_header(Json{{"checkpoint", ckpt}, {"data", data_dir}, {"split", split}});
  add_input_hashes(header, {(fs::path(ckpt) / "manifest.json").string(),
                            (fs::path(data_dir) / "manifest.json").string()});
  header["metrics"] = to_json(metrics);
  write_file((fs::path(out_dir) / "metrics.json").string(), header.dump(2) + "\n");
  save_confusion_csv((fs::path(out_dir) / "confusion.csv").string(), metrics);
  save_curves_csv((fs::path(out_dir) / "roc_micro.csv").string(),
                  (fs::path(out_dir) / "pr_micro.csv").string(), metrics);
  save_predictions((fs::path(out_dir) / "predictions").string(), p);
  if (svg) {
    save_roc_svg((fs::path(out_dir) / "roc_micro.svg").string(), metrics, p.model_tag);
    save_pr_svg((fs::path(out_dir) / "pr_micro.svg").string(), metrics, p.model_tag);
  }
  std::printf("%s on %s: acc %.4f  F1 %.4f  AP %.4f  mAUC %.4f  MAUC %.4f\n", p.model_tag.c_str(),
              split.c_str(), metrics.accuracy, metrics.f1_macro, metrics.ap_micro,
              metrics.auc_micro, metrics.auc_macro);
  return kExitOk;
}

int cmd_ensemble(const std::vector<std::string>& pred_dirs, const std::string& out_dir, bool svg) {
  std::vector<PredictionSet> sets;
  std::vector<const PredictionSet*> ptrs;
  for (const auto& d : pred_dirs) sets.push_back(load_predictions(d));
  for (const auto& s : sets) ptrs.push_back(&s);
  auto combined = ensemble(ptrs);
  auto metrics = evaluate(combined);
  fs::create_directories(out_dir);
  Json header = run_header(Json{{"members", pred_dirs}});
  header["metrics"] = to_json(metrics);
  write_file((fs::path(out_dir) / "metrics.json").string(), header.dump(2) + "\n");
  save_confusion_csv((fs::path(out_dir) / "confusion.csv").string(), metrics);
  save_predictions((fs::path(out_dir) / "predictions").string(), combined);
  if (svg) {
    save_roc_svg((fs::path(out_dir) / "roc_micro.svg").string(), metrics, "ensemble");
    save_pr_svg((fs::path(out_dir) / "pr_micro.svg").string(), metrics, "ensemble");
  }
  std::printf("ensemble of %zu members: acc %.4f  F1 %.4f  AP %.4f  mAUC %.4f  MAUC %.4f\n",
              sets.size(), metrics.accuracy, metrics.f1_macro, metrics.ap_micro, metrics.auc_micro,
              metrics.auc_macro);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate: {model} x {sharing, standalone} x {modality} x {T} grids.
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string clips_dir, out_dir;
  std::string grid = "sharing";
  std::vector<std::string> models;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  int max_epochs = 85;
  int jobs = 1;
  std::uint64_t split_seed = 1;
};

struct AblateCell {
  ModelKind kind;
  bool sharing;
  Modality modality;
  int t;
};

struct AblateResult {
  AblateCell cell{};
  Aggregate acc, f1, ap, mauc, Mauc;
  std::size_t seeds = 0;
  bool single_seed = false;
};

template <typename T>
AblateResult run_cell(const AblateCell& cell, const LoadedData& data, const AblateArgs& args) {
  TrainConfig tc;
  tc.lr0 = default_lr(cell.kind);
  tc.max_epochs = args.max_epochs;
  tc.seeds = args.seeds;

  ModelConfig mc;
  mc.kind = cell.kind;
  mc.sharing = cell.sharing;
  mc.t = data.manifest.at("t").get<int>();
  mc.h = data.manifest.at("h").get<int>();
  mc.w = data.manifest.at("w").get<int>();
  mc.img_channels = data.manifest.at("c").get<int>();

  const auto train_t = to_split_tensors<T>(data.train);
  const auto val_t = to_split_tensors<T>(data.val);
  const auto test_t = to_split_tensors<T>(data.test);

  AblateResult result;
  result.cell = cell;
  std::vector<double> acc, f1, ap, mauc, Mauc;
  for (std::uint64_t seed : tc.seeds) {
    ModelConfig seeded = mc;
    seeded.init_seed = seed;
    auto net = Network<T>::assemble(seeded);
    auto manifest = fit(net, train_t, val_t, tc, seed);
    if (manifest.failed) continue;
    auto preds = predict(net, test_t, tc.batch);
    auto m = evaluate(preds);
    acc.push_back(m.accuracy);
    f1.push_back(m.f1_macro);
    ap.push_back(m.ap_micro);
    mauc.push_back(m.auc_micro);
    Mauc.push_back(m.auc_macro);
  }
  if (acc.empty()) throw std::runtime_error("every seed diverged for an ablation cell");
  result.acc = Aggregate::of(acc);
  result.f1 = Aggregate::of(f1);
  result.ap = Aggregate::of(ap);
  result.mauc = Aggregate::of(mauc);
  result.Mauc = Aggregate::of(Mauc);
  result.seeds = acc.size();
  result.single_seed = acc.size() == 1;
  return result;
}

template <typename T>
int run_ablate(const AblateArgs& args) {
  auto clips = load_clips(args.clips_dir);
  const Json src_manifest =
      Json::parse(read_file((fs::path(args.clips_dir) / "manifest.json").string()));
  const int base_h = src_manifest.at("extra").value("height", 96);
  const int base_w = src_manifest.at("extra").value("width", 128);

  std::vector<ModelKind> kinds;
  if (args.models.empty()) {
    if (args.grid == "modality")
      kinds = {ModelKind::kBaseline, ModelKind::kCiv3dMha, ModelKind::kSrs};
    else if (args.grid == "temporal")
      kinds = {ModelKind::kBaseline, ModelKind::kSrs};
    else
      kinds = {ModelKind::kBaseline, ModelKind::kCiv3dBilstm, ModelKind::kCiv3dMha, ModelKind::kSrs,
               ModelKind::kCrs};
  } else {
    for (const auto& m : args.models) kinds.push_back(model_from(m));
  }

  std::vector<AblateCell> cells;
  if (args.grid == "sharing") {
    for (ModelKind k : kinds)
      for (bool sharing : {true, false}) cells.push_back({k, sharing, Modality::kNightified, 8});
  } else if (args.grid == "modality") {
    for (ModelKind k : kinds)
      for (Modality m : {Modality::kGrayscale, Modality::kRgb, Modality::kNightified})
        cells.push_back({k, true, m, 8});
  } else if (args.grid == "temporal") {
    for (ModelKind k : kinds)
      for (int t : {4, 8, 16}) cells.push_back({k, true, Modality::kNightified, t});
  } else if (args.grid == "full") {
    for (ModelKind k : kinds)
      for (bool sharing : {true, false})
        for (Modality m : {Modality::kGrayscale, Modality::kRgb, Modality::kNightified})
          for (int t : {4, 8, 16}) cells.push_back({k, sharing, m, t});
  } else {
    throw std::invalid_argument("unknown grid: " + args.grid);
  }

  // Cuboid cache per (modality, T); datasets are shared across cells.
  std::map<std::pair<int, int>, LoadedData> cache;
  auto data_for = [&](const AblateCell& cell) -> const LoadedData& {
    const auto key = std::make_pair(static_cast<int>(cell.modality), cell.t);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    PipelineOptions popt;
    popt.t = cell.t;
    popt.height = base_h;
    popt.width = base_w;
    popt.modality = cell.modality;
    ChannelStats stats;
    const ChannelStats* stats_ptr = nullptr;
    if (cell.modality == Modality::kNightified) {
      stats = night_stats(clips);
      stats_ptr = &stats;
    }
    auto split = split_dataset(clips, SplitPolicy::kStratified, args.split_seed);
    LoadedData d;
    d.train = build_split(split.train, popt, stats_ptr, "train");
    d.val = build_split(split.val, popt, stats_ptr, "val");
    d.test = build_split(split.test, popt, stats_ptr, "test");
    d.manifest = Json{{"t", cell.t},
                      {"h", base_h},
                      {"w", base_w},
                      {"c", cell.modality == Modality::kGrayscale ? 1 : 3}};
    return cache.emplace(key, std::move(d)).first->second;
  };
  for (const auto& cell : cells) data_for(cell);  // build once, up front

  std::vector<AblateResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex print_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto& cell = cells[i];
      results[i] = run_cell<T>(cell, data_for(cell), args);
      std::lock_guard<std::mutex> lock(print_mutex);
      std::printf("done %s/%s %s T=%d acc=%.4f\n", model_name(cell.kind),
                  cell.sharing ? "sharing" : "standalone", modality_name(cell.modality).c_str(),
                  cell.t, results[i].acc.mean);
      std::fflush(stdout);
    }
  };
  const int jobs = std::max(1, args.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Consolidated comparison table.
  std::ostringstream table, csv;
  table << "\nmodel         variant     modality    T   mAUC    MAUC    AP      F1      "
           "accuracy(%)\n";
  csv << "model,variant,modality,t,seeds,mauc,mauc_std,Mauc,Mauc_std,ap,ap_std,f1,f1_std,acc,"
         "acc_std\n";
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-13s %-11s %-11s %-3d %.4f  %.4f  %.4f  %.4f  %s\n",
                  model_name(r.cell.kind), r.cell.sharing ? "sharing" : "standalone",
                  modality_name(r.cell.modality).c_str(), r.cell.t, r.mauc.mean, r.Mauc.mean,
                  r.ap.mean, r.f1.mean,
                  r.single_seed
                      ? std::to_string(100.0 * r.acc.mean).substr(0, 5).c_str()
                      : format_mean_std(r.acc.mean, r.acc.std, true).c_str());
    table << line;
    csv << model_name(r.cell.kind) << "," << (r.cell.sharing ? "sharing" : "standalone") << ","
        << modality_name(r.cell.modality) << "," << r.cell.t << "," << r.seeds << ","
        << r.mauc.mean << "," << r.mauc.std << "," << r.Mauc.mean << "," << r.Mauc.std << ","
        << r.ap.mean << "," << r.ap.std << "," << r.f1.mean << "," << r.f1.std << "," << r.acc.mean
        << "," << r.acc.std << "\n";
  }
  std::printf("%s", table.str().c_str());
  fs::create_directories(args.out_dir);
  write_file((fs::path(args.out_dir) / "ablation.csv").string(), csv.str());
  Json header = run_header(Json{{"grid", args.grid},
                                {"seeds", args.seeds},
                                {"max_epochs", args.max_epochs},
                                {"clips", args.clips_dir}});
  add_input_hashes(header, {(fs::path(args.clips_dir) / "manifest.json").string()});
  write_file((fs::path(args.out_dir) / "manifest.json").string(), header.dump(2) + "\n");
  return kExitOk;
}

template <typename Fn>
int with_lane(Fn&& fn) {
  // STSHARE_DETERMINISTIC=1 forces the float64 sequential lane.
  if (deterministic_mode()) return fn(double{});
  return fn(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-stream spatiotemporal video classification harness"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled clip store");
  std::string synth_out = "data/synth";
  std::uint64_t synth_seed = 7;
  int synth_cpc = 16, synth_t = 8, synth_h = 96, synth_w = 128;
  synth->add_option("--out", synth_out, "output clip directory");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--clips-per-class", synth_cpc, "clips per class");
  synth->add_option("--t", synth_t, "target cuboid length");
  synth->add_option("--height", synth_h, "frame height");
  synth->add_option("--width", synth_w, "frame width");

  auto* prep = app.add_subcommand("prep", "standardize, split and pack cuboids");
  PrepArgs prep_args;
  prep->add_option("--in", prep_args.in, "clip store directory")->required();
  prep->add_option("--out", prep_args.out, "output dataset directory")->required();
  prep->add_option("--modality", prep_args.modality, "rgb | nightified | grayscale");
  prep->add_option("--policy", prep_args.policy, "stratified | main-vs-clipped");
  prep->add_option("--t", prep_args.t, "cuboid temporal length");
  prep->add_option("--height", prep_args.height, "standardized height (default from store)");
  prep->add_option("--width", prep_args.width, "standardized width (default from store)");
  prep->add_option("--seed", prep_args.seed, "split seed");

  auto* flow = app.add_subcommand("flow", "dense optical flow for a frame directory");
  std::string flow_in, flow_out = "flow.stt1";
  int flow_levels = 3, flow_iters = 3, flow_window = 15;
  double flow_sigma = 1.5;
  flow->add_option("--frames", flow_in, "directory of frame files")->required();
  flow->add_option("--out", flow_out, "output STT1 flow cuboid");
  flow->add_option("--levels", flow_levels, "pyramid levels");
  flow->add_option("--iters", flow_iters, "iterations per level");
  flow->add_option("--window", flow_window, "expansion/averaging window (odd)");
  flow->add_option("--sigma", flow_sigma, "expansion applicability sigma");

  auto* shapes = app.add_subcommand("shapes", "junction shape conformance");
  std::string shapes_model = "all";
  bool shapes_standalone = false, shapes_sharing = false;
  shapes->add_option("--model", shapes_model, "model name or 'all'");
  shapes->add_flag("--sharing", shapes_sharing, "check the feature-sharing build (default)");
  shapes->add_flag("--standalone", shapes_standalone, "print the standalone trace instead");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient integrity");
  int gc_seeds = 20;
  bool gc_layers_only = false;
  gradcheck->add_option("--seeds", gc_seeds, "random configurations per layer");
  gradcheck->add_flag("--layers-only", gc_layers_only, "skip the full-model checks");

  auto* train = app.add_subcommand("train", "train one model under the standard protocol");
  std::string train_config, train_model = "baseline", train_data, train_out = "runs/run";
  std::string train_seeds;
  int train_epochs = -1;
  double train_lr = -1;
  double train_width = 1.0;
  bool train_standalone = false;
  train->add_option("--config", train_config, "experiment config file (ini)");
  train->add_option("--model", train_model, "model name");
  train->add_flag("--standalone", train_standalone, "standalone streams variant");
  train->add_option("--data", train_data, "prepped dataset directory");
  train->add_option("--out", train_out, "output run directory");
  train->add_option("--seeds", train_seeds, "comma-separated seeds (default 1,2,3,4)");
  train->add_option("--max-epochs", train_epochs, "override protocol epochs");
  train->add_option("--lr", train_lr, "override initial learning rate");
  train->add_option("--width-scale", train_width, "channel width multiplier");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out = "runs/eval";
  bool eval_svg = false;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--data", eval_data, "prepped dataset directory")->required();
  eval->add_option("--split", eval_split, "train | val | test");
  eval->add_option("--out", eval_out, "output directory");
  eval->add_flag("--svg", eval_svg, "emit ROC/PR SVG plots");

  auto* ens = app.add_subcommand("ensemble", "average prediction sets");
  std::vector<std::string> ens_preds;
  std::string ens_out = "runs/ensemble";
  bool ens_svg = false;
  ens->add_option("--preds", ens_preds, "prediction directories (repeatable)")->required();
  ens->add_option("--out", ens_out, "output directory");
  ens->add_flag("--svg", ens_svg, "emit ROC/PR SVG plots");

  auto* ablate = app.add_subcommand("ablate", "run an ablation grid");
  AblateArgs ab;
  std::string ab_models, ab_seeds;
  ablate->add_option("--data", ab.clips_dir, "clip store directory")->required();
  ablate->add_option("--out", ab.out_dir, "output directory")->required();
  ablate->add_option("--grid", ab.grid, "sharing | modality | temporal | full");
  ablate->add_option("--models", ab_models, "comma-separated model names");
  ablate->add_option("--seeds", ab_seeds, "comma-separated seeds (default 1,2,3,4)");
  ablate->add_option("--max-epochs", ab.max_epochs, "override protocol epochs");
  ablate->add_option("--jobs", ab.jobs, "parallel cells");
  ablate->add_option("--split-seed", ab.split_seed, "dataset split seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_seed, synth_cpc, synth_t, synth_h, synth_w);
    if (*prep) return cmd_prep(prep_args);
    if (*flow) return cmd_flow(flow_in, flow_out, flow_levels, flow_iters, flow_window, flow_sigma);
    if (*shapes) return cmd_shapes(shapes_model, shapes_standalone);
    if (*gradcheck) return cmd_gradcheck(gc_seeds, gc_layers_only);
    if (*train) {
      ExperimentConfig cfg;
      if (!train_config.empty()) {
        cfg = experiment_from_ini(read_file(train_config));
      } else {
        cfg.model.kind = model_from(train_model);
        cfg.model.sharing = !train_standalone;
        cfg.train.lr0 = default_lr(cfg.model.kind);
      }
      if (!train_data.empty()) cfg.data_dir = train_data;
      if (cfg.data_dir.empty()) throw std::invalid_argument("train needs --data or [data] dir");
      if (!train_seeds.empty()) cfg.train.seeds = parse_u64_list(train_seeds);
      if (train_epochs > 0) cfg.train.max_epochs = train_epochs;
      if (train_lr > 0) cfg.train.lr0 = train_lr;
      cfg.model.width_scale = train_width;
      return with_lane(
          [&](auto tag) { return run_train<decltype(tag)>(cfg, cfg.data_dir, train_out); });
    }
    if (*eval)
      return with_lane([&](auto tag) {
        return run_eval<decltype(tag)>(eval_ckpt, eval_data, eval_split, eval_out, eval_svg);
      });
    if (*ens) return cmd_ensemble(ens_preds, ens_out, ens_svg);
    if (*ablate) {
      if (!ab_models.empty()) {
        std::istringstream is(ab_models);
        std::string tok;
        while (std::getline(is, tok, ',')) ab.models.push_back(tok);
      }
      if (!ab_seeds.empty()) ab.seeds = parse_u64_list(ab_seeds);
      return with_lane([&](auto tag) { return run_ablate<decltype(tag)>(ab); });
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  }
  return kExitOk;
}
