#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stshare/detail/sha1.hpp"
#include "stshare/io.hpp"
#include "stshare/metrics.hpp"
#include "stshare/models.hpp"
#include "stshare/pipeline.hpp"
#include "stshare/training.hpp"

namespace stshare {

using Json = nlohmann::json;
namespace fs = std::filesystem;

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << content;
}

inline std::string file_blob_hash(const std::string& path) {
  return detail::blob_hash(read_file(path));
}

// ---------------------------------------------------------------------------
// Config JSON round-trips (hashing uses the canonical dump).
// ---------------------------------------------------------------------------

inline Json to_json(const ModelConfig& c) {
  return Json{{"model", model_name(c.kind)},
              {"sharing", c.sharing},
              {"t", c.t},
              {"h", c.h},
              {"w", c.w},
              {"img_channels", c.img_channels},
              {"width_scale", c.width_scale},
              {"heads", c.heads},
              {"bilstm_hidden", c.bilstm_hidden},
              {"dropout_rate", c.dropout_rate},
              {"leaky_slope", c.leaky_slope},
              {"fc_units", c.fc_units},
              {"init_seed", c.init_seed}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.kind = model_from(j.at("model").get<std::string>());
  c.sharing = j.at("sharing").get<bool>();
  c.t = j.at("t").get<int>();
  c.h = j.at("h").get<int>();
  c.w = j.at("w").get<int>();
  c.img_channels = j.at("img_channels").get<int>();
  c.width_scale = j.at("width_scale").get<double>();
  c.heads = j.at("heads").get<int>();
  c.bilstm_hidden = j.at("bilstm_hidden").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.fc_units = j.at("fc_units").get<std::vector<int>>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"lr0", c.lr0},
              {"batch", c.batch},
              {"max_epochs", c.max_epochs},
              {"plateau_factor", c.plateau_factor},
              {"plateau_patience", c.plateau_patience},
              {"early_stop_patience", c.early_stop_patience},
              {"min_lr", c.min_lr},
              {"improve_threshold", c.improve_threshold},
              {"seeds", c.seeds}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.lr0 = j.at("lr0").get<double>();
  c.batch = j.at("batch").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.plateau_factor = j.at("plateau_factor").get<double>();
  c.plateau_patience = j.at("plateau_patience").get<int>();
  c.early_stop_patience = j.at("early_stop_patience").get<int>();
  c.min_lr = j.at("min_lr").get<double>();
  c.improve_threshold = j.at("improve_threshold").get<double>();
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  return c;
}

inline std::string config_hash(const Json& j) { return detail::sha1_hex(j.dump()); }

// ---------------------------------------------------------------------------
// Metric report JSON
// ---------------------------------------------------------------------------

inline Json to_json(const MetricReport& r) {
  Json j{{"accuracy", r.accuracy},   {"f1_macro", r.f1_macro},   {"ap_micro", r.ap_micro},
         {"ap_macro", r.ap_macro},   {"auc_micro", r.auc_micro}, {"auc_macro", r.auc_macro},
         {"confusion", r.confusion}, {"precision_per_class", r.precision_per_class},
         {"recall_per_class", r.recall_per_class}, {"topk", r.topk}, {"warnings", r.warnings}};
  return j;
}

inline Json to_json(const RunManifest& m) {
  Json rows = Json::array();
  for (const auto& r : m.history)
    rows.push_back(Json{{"epoch", r.epoch},
                        {"lr", r.lr},
                        {"train_loss", r.train_loss},
                        {"train_acc", r.train_acc},
                        {"val_loss", r.val_loss},
                        {"val_acc", r.val_acc}});
  Json j{{"config_hash", m.config_hash},
         {"seed", m.seed},
         {"history", rows},
         {"lr_trace", m.lr_trace},
         {"best_epoch", m.best_epoch},
         {"best_val_loss", m.best_val_loss},
         {"failed", m.failed},
         {"fail_reason", m.fail_reason}};
  if (m.has_test_metrics) j["test_metrics"] = to_json(m.test_metrics);
  return j;
}

// ---------------------------------------------------------------------------
// Checkpoints: a directory holding manifest.json plus one STT1 tensor per
// parameter (and per batch-norm running statistic).
// ---------------------------------------------------------------------------

template <typename T>
void save_checkpoint(const std::string& dir, Network<T>& net, const Json& extra = Json::object()) {
  fs::create_directories(fs::path(dir) / "params");
  Json manifest;
  manifest["model_config"] = to_json(net.config());
  manifest["extra"] = extra;
  Json names = Json::array();
  for (Parameter<T>* p : net.params()) {
    names.push_back(p->name);
    save_tensor((fs::path(dir) / "params" / (p->name + ".stt1")).string(), p->value);
  }
  manifest["params"] = names;
  Json state_names = Json::array();
  for (auto& [name, tensor] : net.state()) {
    state_names.push_back(name);
    save_tensor((fs::path(dir) / "params" / (name + ".stt1")).string(), *tensor);
  }
  manifest["state"] = state_names;
  manifest["dtype"] = std::is_same_v<T, double> ? "float64" : "float32";
  write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

inline Json load_checkpoint_manifest(const std::string& dir) {
  return Json::parse(read_file((fs::path(dir) / "manifest.json").string()));
}

template <typename T>
void load_checkpoint(const std::string& dir, Network<T>& net) {
  const Json manifest = load_checkpoint_manifest(dir);
  for (Parameter<T>* p : net.params()) {
    const std::string path = (fs::path(dir) / "params" / (p->name + ".stt1")).string();
    Tensor<T> t = load_tensor<T>(path);
    if (!(t.shape() == p->value.shape()))
      throw std::runtime_error("checkpoint shape mismatch for " + p->name + ": file " +
                               shape_str(t.shape()) + " vs model " + shape_str(p->value.shape()));
    p->value = std::move(t);
  }
  if (manifest.contains("state")) {
    for (auto& [name, tensor] : net.state()) {
      const std::string path = (fs::path(dir) / "params" / (name + ".stt1")).string();
      Tensor<T> t = load_tensor<T>(path);
      if (!(t.shape() == tensor->shape()))
        throw std::runtime_error("checkpoint shape mismatch for " + name);
      *tensor = std::move(t);
    }
  }
}

// ---------------------------------------------------------------------------
// Cuboid datasets on disk: <dir>/<split>_<kind>.stt1 + labels + manifest.
// ---------------------------------------------------------------------------

inline void save_labels(const std::string& path, const std::vector<int>& labels) {
  Tensor<std::int32_t> t({std::max(1, static_cast<int>(labels.size()))});
  for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i];
  save_tensor(path, t);
}

inline std::vector<int> load_labels(const std::string& path) {
  auto t = load_tensor<std::int32_t>(path);
  std::vector<int> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i];
  return out;
}

inline void save_split(const std::string& dir, const std::string& split, const SplitCuboids& s) {
  fs::create_directories(dir);
  save_tensor((fs::path(dir) / (split + "_image.stt1")).string(), s.image.cuboids);
  save_tensor((fs::path(dir) / (split + "_flow.stt1")).string(), s.flow.cuboids);
  save_labels((fs::path(dir) / (split + "_labels.stt1")).string(), s.image.labels);
}

inline SplitCuboids load_split(const std::string& dir, const std::string& split) {
  SplitCuboids s;
  s.image.cuboids = load_tensor<float>((fs::path(dir) / (split + "_image.stt1")).string());
  s.flow.cuboids = load_tensor<float>((fs::path(dir) / (split + "_flow.stt1")).string());
  s.image.labels = load_labels((fs::path(dir) / (split + "_labels.stt1")).string());
  s.flow.labels = s.image.labels;
  s.image.split = s.flow.split = split;
  return s;
}

// ---------------------------------------------------------------------------
// Prediction sets: probabilities + labels + a small meta file.
// ---------------------------------------------------------------------------

inline void save_predictions(const std::string& dir, const PredictionSet& p) {
  fs::create_directories(dir);
  Tensor<double> probs({std::max(1, p.n), p.classes});
  std::copy(p.probs.begin(), p.probs.end(), probs.data());
  save_tensor((fs::path(dir) / "probs.stt1").string(), probs);
  save_labels((fs::path(dir) / "labels.stt1").string(), p.labels);
  Json meta{{"n", p.n}, {"classes", p.classes}, {"model_tag", p.model_tag},
            {"split_tag", p.split_tag}};
  write_file((fs::path(dir) / "meta.json").string(), meta.dump(2) + "\n");
}

inline PredictionSet load_predictions(const std::string& dir) {
  PredictionSet p;
  const Json meta = Json::parse(read_file((fs::path(dir) / "meta.json").string()));
  p.n = meta.at("n").get<int>();
  p.classes = meta.at("classes").get<int>();
  p.model_tag = meta.at("model_tag").get<std::string>();
  p.split_tag = meta.at("split_tag").get<std::string>();
  auto probs = load_tensor<double>((fs::path(dir) / "probs.stt1").string());
  p.probs.assign(probs.data(), probs.data() + probs.size());
  p.labels = load_labels((fs::path(dir) / "labels.stt1").string());
  return p;
}

// ---------------------------------------------------------------------------
// Clip stores: one directory per clip with frame files (frame_%06d.frm or
// .png), a labels.csv sidecar (frame_index,class_id) and a clip.json with
// the lighting tag, split tag and fps; plus a top-level manifest.
// ---------------------------------------------------------------------------

inline void save_clips(const std::string& dir, const std::vector<VideoClip>& clips,
                       Json extra = Json::object()) {
  fs::create_directories(fs::path(dir) / "clips");
  Json list = Json::array();
  int id = 0;
  for (const VideoClip& clip : clips) {
    const std::string cid = "clip_" + std::to_string(id++);
    const fs::path cdir = fs::path(dir) / "clips" / cid;
    fs::create_directories(cdir);
    char name[32];
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      std::snprintf(name, sizeof(name), "frame_%06zu.frm", f);
      save_frame_frm((cdir / name).string(), clip.frames[f]);
    }
    std::ostringstream labels;
    labels << "frame_index,class_id\n";
    for (std::size_t f = 0; f < clip.labels.size(); ++f)
      labels << f << "," << clip.labels[f] << "\n";
    write_file((cdir / "labels.csv").string(), labels.str());
    Json meta{{"lighting", clip.lighting == Lighting::kNight ? "night" : "day"},
              {"split_tag", clip.split_tag},
              {"fps", clip.fps},
              {"source_id", clip.source_id}};
    write_file((cdir / "clip.json").string(), meta.dump(2) + "\n");
    list.push_back(Json{{"id", cid},
                        {"frames", clip.frames.size()},
                        {"class", clip.labels.empty() ? -1 : clip.labels[0]},
                        {"lighting", clip.lighting == Lighting::kNight ? "night" : "day"},
                        {"source_id", clip.source_id}});
  }
  Json manifest{{"clips", list}, {"extra", extra}};
  write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

inline VideoClip load_clip_dir(const fs::path& cdir) {
  VideoClip clip;
  const Json meta = Json::parse(read_file((cdir / "clip.json").string()));
  clip.lighting = meta.at("lighting").get<std::string>() == "night" ? Lighting::kNight : Lighting::kDay;
  clip.split_tag = meta.at("split_tag").get<std::string>();
  clip.fps = meta.at("fps").get<double>();
  clip.source_id = meta.at("source_id").get<std::string>();

  std::vector<fs::path> frame_files;
  for (const auto& entry : fs::directory_iterator(cdir)) {
    const std::string ext = entry.path().extension().string();
    if (ext == ".frm" || ext == ".png") frame_files.push_back(entry.path());
  }
  std::sort(frame_files.begin(), frame_files.end());
  for (const auto& f : frame_files) clip.frames.push_back(load_frame(f.string()));

  clip.labels.assign(clip.frames.size(), 0);
  std::istringstream labels(read_file((cdir / "labels.csv").string()));
  std::string line;
  std::getline(labels, line);  // header
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::size_t idx = std::stoul(line.substr(0, comma));
    if (idx < clip.labels.size()) clip.labels[idx] = std::stoi(line.substr(comma + 1));
  }
  return clip;
}

inline std::vector<VideoClip> load_clips(const std::string& dir) {
  const Json manifest = Json::parse(read_file((fs::path(dir) / "manifest.json").string()));
  std::vector<VideoClip> clips;
  for (const auto& entry : manifest.at("clips"))
    clips.push_back(load_clip_dir(fs::path(dir) / "clips" / entry.at("id").get<std::string>()));
  return clips;
}

// Per-epoch CSV: epoch,lr,train_loss,train_acc,val_loss,val_acc
inline void save_history_csv(const std::string& path, const RunManifest& m) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : m.history)
    os << r.epoch << "," << r.lr << "," << r.train_loss << "," << r.train_acc << "," << r.val_loss
       << "," << r.val_acc << "\n";
  write_file(path, os.str());
}

inline void save_confusion_csv(const std::string& path, const MetricReport& r) {
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) os << "," << class_name(static_cast<int>(c));
  os << "\n";
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    os << class_name(static_cast<int>(i));
    for (std::size_t j = 0; j < r.confusion[i].size(); ++j) os << "," << r.confusion[i][j];
    os << "\n";
  }
  write_file(path, os.str());
}

inline void save_curves_csv(const std::string& roc_path, const std::string& pr_path,
                            const MetricReport& r) {
  std::ostringstream roc;
  roc << "fpr,tpr\n";
  for (const auto& pt : r.roc_micro) roc << pt.fpr << "," << pt.tpr << "\n";
  write_file(roc_path, roc.str());
  std::ostringstream pr;
  pr << "recall,precision\n";
  for (const auto& pt : r.pr_micro) pr << pt.recall << "," << pt.precision << "\n";
  write_file(pr_path, pr.str());
}

}  // namespace stshare
