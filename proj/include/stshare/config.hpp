#pragma once

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshare/models.hpp"
#include "stshare/pipeline.hpp"
#include "stshare/training.hpp"

namespace stshare {

// Experiment files are plain text: "[section]" headers and "key = value"
// lines, '#' comments. The per-module sections are written out for
// inspection and validated on load against the canonical schedules, so a
// hand-edited file that silently disagrees with the architecture is
// rejected rather than assembled.

class IniFile {
 public:
  static IniFile parse(const std::string& text) {
    IniFile ini;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw std::invalid_argument("bad section at line " + std::to_string(lineno));
        section = trim(line.substr(1, line.size() - 2));
        ini.order_.push_back(section);
        ini.sections_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("expected key = value at line " + std::to_string(lineno));
      ini.sections_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return ini;
  }

  bool has(const std::string& section) const { return sections_.count(section) != 0; }

  std::string get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end() || !s->second.count(key))
      throw std::invalid_argument("config missing [" + section + "] " + key);
    return s->second.at(key);
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end() || !s->second.count(key)) return fallback;
    return s->second.at(key);
  }

  double get_num(const std::string& section, const std::string& key) const {
    return std::stod(get(section, key));
  }

  double get_num_or(const std::string& section, const std::string& key, double fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end() || !s->second.count(key)) return fallback;
    return std::stod(s->second.at(key));
  }

  bool get_bool(const std::string& section, const std::string& key) const {
    const std::string v = get(section, key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("expected boolean for [" + section + "] " + key);
  }

 private:
  static std::string trim(std::string s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::vector<std::string> order_;
};

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

inline std::vector<std::uint64_t> parse_u64_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoull(tok));
  return out;
}

template <typename V>
std::string join_list(const std::vector<V>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

// One experiment: which model, its input contract, the data, the protocol.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  Modality modality = Modality::kNightified;
  std::string data_dir;
  std::string out_dir = "runs";

  void validate() const {
    validate_model_config(model);
    train.validate();
    if (model.t != 4 && model.t != 8 && model.t != 16)
      throw std::invalid_argument("temporal length must be one of 4, 8, 16");
  }
};

inline std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "[model]\n";
  os << "name = " << model_name(c.model.kind) << "\n";
  os << "sharing = " << (c.model.sharing ? "true" : "false") << "\n";
  os << "t = " << c.model.t << "\n";
  os << "h = " << c.model.h << "\n";
  os << "w = " << c.model.w << "\n";
  os << "width_scale = " << c.model.width_scale << "\n";
  os << "heads = " << c.model.heads << "\n";
  os << "bilstm_hidden = " << c.model.bilstm_hidden << "\n";
  os << "dropout_rate = " << c.model.dropout_rate << "\n";
  os << "leaky_slope = " << c.model.leaky_slope << "\n";
  os << "fc_units = " << join_list(c.model.fc_units) << "\n";
  os << "init_seed = " << c.model.init_seed << "\n";
  const auto table = module_table(c.model.kind);
  for (std::size_t i = 0; i < table.size(); ++i) {
    os << "\n[module" << i + 1 << "]\n";
    os << "n = " << table[i].n << "\n";
    os << "k = " << table[i].k << "\n";
    os << "m = " << table[i].m << "\n";
  }
  os << "\n[data]\n";
  os << "dir = " << c.data_dir << "\n";
  os << "modality = " << modality_name(c.modality) << "\n";
  os << "\n[train]\n";
  os << "lr0 = " << c.train.lr0 << "\n";
  os << "batch = " << c.train.batch << "\n";
  os << "max_epochs = " << c.train.max_epochs << "\n";
  os << "plateau_factor = " << c.train.plateau_factor << "\n";
  os << "plateau_patience = " << c.train.plateau_patience << "\n";
  os << "early_stop_patience = " << c.train.early_stop_patience << "\n";
  os << "min_lr = " << c.train.min_lr << "\n";
  os << "improve_threshold = " << c.train.improve_threshold << "\n";
  os << "seeds = " << join_list(c.train.seeds) << "\n";
  os << "\n[out]\n";
  os << "dir = " << c.out_dir << "\n";
  return os.str();
}

inline ExperimentConfig experiment_from_ini(const std::string& text) {
  const IniFile ini = IniFile::parse(text);
  ExperimentConfig c;
  c.model.kind = model_from(ini.get("model", "name"));
  c.model.sharing = ini.get_bool("model", "sharing");
  c.model.t = static_cast<int>(ini.get_num("model", "t"));
  c.model.h = static_cast<int>(ini.get_num_or("model", "h", 96));
  c.model.w = static_cast<int>(ini.get_num_or("model", "w", 128));
  c.model.width_scale = ini.get_num_or("model", "width_scale", 1.0);
  c.model.heads = static_cast<int>(ini.get_num_or("model", "heads", 4));
  c.model.bilstm_hidden = static_cast<int>(ini.get_num_or("model", "bilstm_hidden", 256));
  c.model.dropout_rate = ini.get_num_or("model", "dropout_rate", 0.2);
  c.model.leaky_slope = ini.get_num_or("model", "leaky_slope", 0.2);
  c.model.fc_units = parse_int_list(ini.get_or("model", "fc_units", "512,64"));
  c.model.init_seed = static_cast<std::uint64_t>(ini.get_num_or("model", "init_seed", 1234));

  // Per-module sections, when present, must agree with the canonical
  // schedule of the named model.
  const auto table = module_table(c.model.kind);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string sec = "module" + std::to_string(i + 1);
    if (!ini.has(sec)) continue;
    if (static_cast<int>(ini.get_num(sec, "n")) != table[i].n ||
        ini.get_num(sec, "k") != table[i].k ||
        static_cast<int>(ini.get_num(sec, "m")) != table[i].m)
      throw std::invalid_argument("[" + sec + "] disagrees with the " +
                                  model_name(c.model.kind) + " schedule");
  }

  c.modality = modality_from(ini.get_or("data", "modality", "nightified"));
  c.model.img_channels = c.modality == Modality::kGrayscale ? 1 : 3;
  c.data_dir = ini.get_or("data", "dir", "");

  c.train.lr0 = ini.get_num_or("train", "lr0",
                               c.model.kind == ModelKind::kBaseline ? 0.0005 : 0.001);
  c.train.batch = static_cast<int>(ini.get_num_or("train", "batch", 8));
  c.train.max_epochs = static_cast<int>(ini.get_num_or("train", "max_epochs", 85));
  c.train.plateau_factor = ini.get_num_or("train", "plateau_factor", 0.5);
  c.train.plateau_patience = static_cast<int>(ini.get_num_or("train", "plateau_patience", 5));
  c.train.early_stop_patience =
      static_cast<int>(ini.get_num_or("train", "early_stop_patience", 12));
  c.train.min_lr = ini.get_num_or("train", "min_lr", 1e-6);
  c.train.improve_threshold = ini.get_num_or("train", "improve_threshold", 1e-4);
  c.train.seeds = parse_u64_list(ini.get_or("train", "seeds", "1,2,3,4"));
  c.out_dir = ini.get_or("out", "dir", "runs");
  c.validate();
  return c;
}

// 0.0005 for the baseline, 0.001 otherwise.
inline double default_lr(ModelKind kind) {
  return kind == ModelKind::kBaseline ? 0.0005 : 0.001;
}

}  // namespace stshare
