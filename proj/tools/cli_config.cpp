#include "cli_config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "netspectra/io.hpp"

namespace netspectra::cli {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

struct IniFile {
  std::map<std::string, Entry> entries;  // "section.key"
  std::string text;

  const Entry* find(const std::string& key) const {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  }
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

IniFile parse_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  IniFile ini;
  std::ostringstream echo;
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    echo << line << '\n';
    std::string stripped = trim(line);
    const auto comment = stripped.find_first_of("#;");
    if (comment != std::string::npos) stripped = trim(stripped.substr(0, comment));
    if (stripped.empty()) continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']')
        throw ConfigError(path + ":" + std::to_string(number) + ": malformed section header");
      section = trim(stripped.substr(1, stripped.size() - 2));
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(number) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    if (key.empty() || section.empty())
      throw ConfigError(path + ":" + std::to_string(number) + ": key outside a [section]");
    const std::string full = section + "." + key;
    if (ini.entries.count(full))
      throw ConfigError(path + ":" + std::to_string(number) + ": duplicate key '" + full + "'");
    ini.entries[full] = Entry{trim(stripped.substr(eq + 1)), number, false};
  }
  ini.text = echo.str();
  return ini;
}

class Reader {
 public:
  Reader(IniFile& ini, std::string path) : ini_(ini), path_(std::move(path)) {}

  std::optional<std::string> raw(const std::string& key) {
    auto it = ini_.entries.find(key);
    if (it == ini_.entries.end()) return std::nullopt;
    it->second.used = true;
    return it->second.value;
  }

  std::string str(const std::string& key, const std::string& fallback) {
    return raw(key).value_or(fallback);
  }

  std::string require(const std::string& key) {
    auto v = raw(key);
    if (!v) throw ConfigError(path_ + ": missing required key '" + key + "'");
    return *v;
  }

  double number(const std::string& key, double fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    return parse_number(key, *v);
  }

  long integer(const std::string& key, long fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    return parse_integer(key, *v);
  }

  std::vector<int> int_list(const std::string& key) {
    auto v = raw(key);
    std::vector<int> out;
    if (!v) return out;
    std::istringstream ss(*v);
    std::string token;
    while (ss >> token) out.push_back(static_cast<int>(parse_integer(key, token)));
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, entry] : ini_.entries)
      if (!entry.used)
        throw ConfigError(path_ + ":" + std::to_string(entry.line) + ": unknown key '" + key +
                          "'");
  }

 private:
  double parse_number(const std::string& key, const std::string& text) {
    try {
      std::size_t used = 0;
      const double value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return value;
    } catch (const std::exception&) {
      throw ConfigError(path_ + ": key '" + key + "' is not a number: '" + text + "'");
    }
  }

  long parse_integer(const std::string& key, const std::string& text) {
    try {
      std::size_t used = 0;
      const long value = std::stol(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return value;
    } catch (const std::exception&) {
      throw ConfigError(path_ + ": key '" + key + "' is not an integer: '" + text + "'");
    }
  }

  IniFile& ini_;
  std::string path_;
};

LrSchedule read_schedule(Reader& r, const std::string& path) {
  const std::string kind = r.str("train.schedule", "constant");
  if (kind == "constant") return ConstantSchedule{r.number("train.lr", 0.01)};
  if (kind == "geometric")
    return GeometricSchedule{r.number("train.lr", 0.01), r.number("train.decay", 0.99)};
  if (kind == "piecewise") {
    PiecewiseSchedule pw;
    std::istringstream ss(r.require("train.piecewise"));
    std::string token;
    while (ss >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos)
        throw ConfigError(path + ": train.piecewise entries are epoch:lr pairs");
      pw.points.emplace_back(std::stoi(token.substr(0, colon)),
                             std::stod(token.substr(colon + 1)));
    }
    if (pw.points.empty()) throw ConfigError(path + ": train.piecewise is empty");
    return pw;
  }
  throw ConfigError(path + ": unknown schedule '" + kind + "'");
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  IniFile ini = parse_ini(path);
  Reader r(ini, path);
  RunConfig cfg;
  cfg.raw_text = ini.text;

  cfg.dataset.kind = r.str("dataset.kind", "synth");
  if (cfg.dataset.kind == "synth") {
    cfg.dataset.classes = static_cast<int>(r.integer("dataset.classes", 10));
    cfg.dataset.dim = static_cast<int>(r.integer("dataset.dim", 20));
    cfg.dataset.per_class = static_cast<int>(r.integer("dataset.per_class", 100));
    cfg.dataset.separation = r.number("dataset.separation", 5.0);
  } else if (cfg.dataset.kind == "idx") {
    cfg.dataset.train_images = r.require("dataset.train_images");
    cfg.dataset.train_labels = r.require("dataset.train_labels");
    cfg.dataset.test_images = r.str("dataset.test_images", "");
    cfg.dataset.test_labels = r.str("dataset.test_labels", "");
  } else {
    throw ConfigError(path + ": dataset.kind must be synth or idx");
  }

  for (int d : r.int_list("network.dims")) cfg.dims.push_back(d);
  if (cfg.dims.empty()) throw ConfigError(path + ": missing required key 'network.dims'");

  cfg.train.schedule = read_schedule(r, path);
  cfg.train.momentum = r.number("train.momentum", 0.0);
  cfg.train.weight_decay = r.number("train.weight_decay", 0.0);
  cfg.train.batch_size = static_cast<int>(r.integer("train.batch_size", 32));
  cfg.train.epochs = static_cast<int>(r.integer("train.epochs", 1));
  cfg.train.trainable_layers = r.int_list("train.trainable_layers");
  const std::string record = r.str("train.record", "epoch");
  if (record == "epoch") {
    cfg.train.record_stride = 0;
  } else if (record.rfind("every:", 0) == 0) {
    cfg.train.record_stride = std::stoi(record.substr(6));
  } else {
    throw ConfigError(path + ": train.record must be 'epoch' or 'every:<steps>'");
  }

  cfg.analysis.lanczos_k = static_cast<int>(r.integer("analysis.lanczos_k", 20));
  cfg.analysis.lanczos_iters = static_cast<int>(r.integer("analysis.lanczos_iters", 0));
  cfg.analysis.hessian_cap = static_cast<int>(r.integer("analysis.hessian_cap", kDenseHessianCap));
  cfg.analysis.subset = static_cast<int>(r.integer("analysis.subset", 0));
  const std::string estimator = r.str("analysis.mp_estimator", "mean-square");
  if (estimator == "mean-square") {
    cfg.analysis.mp_estimator = VarianceEstimator::MeanSquare;
  } else if (estimator == "median") {
    cfg.analysis.mp_estimator = VarianceEstimator::MedianBased;
  } else {
    throw ConfigError(path + ": analysis.mp_estimator must be mean-square or median");
  }
  cfg.analysis.unfold_k = static_cast<int>(r.integer("analysis.unfold_k", 10));
  cfg.analysis.density_sigma = r.number("analysis.density_sigma", 1.0);
  cfg.analysis.density_points = static_cast<int>(r.integer("analysis.density_points", 512));
  cfg.analysis.fit_begin = static_cast<int>(r.integer("analysis.fit_begin", 0));
  cfg.analysis.fit_end = static_cast<int>(r.integer("analysis.fit_end", 0));
  cfg.analysis.component = static_cast<int>(r.integer("analysis.component", 0));
  cfg.analysis.t0 = r.number("analysis.t0", 0.0);
  cfg.analysis.scaling_points = static_cast<int>(r.integer("analysis.scaling_points", 21));
  cfg.analysis.scaling_max = r.number("analysis.scaling_max", 2.0);

  cfg.forget.classes_a = r.int_list("forget.classes_a");
  cfg.forget.classes_b = r.int_list("forget.classes_b");
  if (auto m = r.raw("forget.method")) cfg.forget.method = cf_method_from_string(*m);
  cfg.forget.lambda_cf = r.number("forget.lambda_cf", 1000.0);
  cfg.forget.gamma = r.number("forget.gamma", 1.0);
  cfg.forget.epochs = static_cast<int>(r.integer("forget.epochs", 50));
  cfg.forget.lr_fraction = r.number("forget.lr_fraction", 0.01);
  cfg.forget.weight_decay = r.number("forget.weight_decay", 0.0);
  cfg.forget.batch_size = static_cast<int>(r.integer("forget.batch_size", 32));
  cfg.forget.hess_budget = static_cast<int>(r.integer("forget.hess_budget", 0));
  cfg.forget.sv_budget = static_cast<int>(r.integer("forget.sv_budget", 5));
  cfg.forget.bias_fraction = r.number("forget.bias_fraction", 0.2);
  cfg.forget.scope_layers = r.int_list("forget.scope_layers");
  cfg.forget.pretrain_epochs = static_cast<int>(r.integer("forget.pretrain_epochs", 0));
  cfg.forget.task1_epochs = static_cast<int>(r.integer("forget.task1_epochs", 0));

  cfg.seed = static_cast<std::uint64_t>(r.integer("run.seed", 0));
  cfg.out_dir = r.str("run.out_dir", "out");

  r.reject_unknown();

  ParamLayout layout(cfg.dims);  // validates widths
  cfg.train.seed = derive_seed(cfg.seed, "train");
  cfg.train.validate(layout.layer_count());
  return cfg;
}

std::pair<Dataset, std::optional<Dataset>> load_dataset(const DatasetSpec& spec,
                                                        std::uint64_t seed) {
  if (spec.kind == "idx") {
    Dataset train = load_idx(spec.train_images, spec.train_labels);
    std::optional<Dataset> test;
    if (!spec.test_images.empty()) test = load_idx(spec.test_images, spec.test_labels);
    return {std::move(train), std::move(test)};
  }
  Dataset train = synth_blobs(spec.classes, spec.dim, spec.per_class, spec.separation,
                              derive_seed(seed, "data-train"));
  Dataset test = synth_blobs(spec.classes, spec.dim, std::max(1, spec.per_class / 2),
                             spec.separation, derive_seed(seed, "data-test"));
  return {std::move(train), std::move(test)};
}

}  // namespace netspectra::cli
