#include "agrav/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "agrav/errors.hpp"
#include "agrav/rng.hpp"

namespace agrav {

namespace {

const nlohmann::json& require_field(const nlohmann::json& j,
                                    const std::string& path,
                                    const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(path.empty() ? std::string(key) + ": missing field"
                                   : path + "." + key + ": missing field");
  }
  return j.at(key);
}

template <typename T>
T typed(const nlohmann::json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": wrong type");
  }
}

template <typename T>
T field(const nlohmann::json& j, const std::string& path, const char* key) {
  const std::string where =
      path.empty() ? std::string(key) : path + "." + key;
  return typed<T>(require_field(j, path, key), where);
}

template <typename T>
T field_or(const nlohmann::json& j, const std::string& path, const char* key,
           T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) {
    return fallback;
  }
  return typed<T>(j.at(key), path.empty() ? std::string(key)
                                          : path + "." + key);
}

AttackSpec parse_attack(const nlohmann::json& j, const std::string& path,
                        std::uint64_t seed) {
  const AttackFamily family = [&] {
    const std::string name = field<std::string>(j, path, "family");
    try {
      return family_from_name(name);
    } catch (const ValueError& e) {
      throw ConfigError(path + ".family: " + e.what());
    }
  }();
  AttackSpec spec =
      default_attack(family, field<double>(j, path, "epsilon"), seed);
  spec.step_size = field_or<double>(j, path, "step_size", spec.step_size);
  spec.steps = field_or<Index>(j, path, "steps", spec.steps);
  spec.decay = field_or<double>(j, path, "decay", spec.decay);
  spec.random_start =
      field_or<bool>(j, path, "random_start", spec.random_start);
  try {
    spec.validate();
  } catch (const ValueError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return spec;
}

DatasetBlock parse_dataset(const nlohmann::json& j, std::uint64_t seed) {
  DatasetBlock d;
  d.kind = field<std::string>(j, "dataset", "kind");
  if (d.kind == "idx") {
    d.images = field<std::string>(j, "dataset", "images");
    d.labels = field<std::string>(j, "dataset", "labels");
    if (!std::filesystem::exists(d.images)) {
      throw ConfigError("dataset.images: file '" + d.images.string() +
                        "' does not exist");
    }
    if (!std::filesystem::exists(d.labels)) {
      throw ConfigError("dataset.labels: file '" + d.labels.string() +
                        "' does not exist");
    }
  } else if (d.kind == "blobs") {
    d.blobs.classes = field<Index>(j, "dataset", "classes");
    d.blobs.per_class = field<Index>(j, "dataset", "per_class");
    d.blobs.dim = field<Index>(j, "dataset", "dim");
    const auto means =
        field<std::vector<std::vector<double>>>(j, "dataset", "means");
    for (const auto& m : means) {
      Eigen::VectorXd v(static_cast<Index>(m.size()));
      for (std::size_t i = 0; i < m.size(); ++i) {
        v[static_cast<Index>(i)] = m[i];
      }
      d.blobs.means.push_back(std::move(v));
    }
    d.blobs.stds = field<std::vector<double>>(j, "dataset", "stds");
    d.blobs.seed = seed;
  } else {
    throw ConfigError("dataset.kind: '" + d.kind +
                      "' is not one of idx, blobs");
  }
  d.train_samples = field<Index>(j, "dataset", "train_samples");
  d.eval_samples = field<Index>(j, "dataset", "eval_samples");
  return d;
}

ModelBlock parse_model(const nlohmann::json& j, const std::string& path) {
  ModelBlock m;
  m.kind = field<std::string>(j, path, "kind");
  if (m.kind != "lenet" && m.kind != "mlp") {
    throw ConfigError(path + ".kind: '" + m.kind +
                      "' is not one of lenet, mlp");
  }
  m.name = field_or<std::string>(j, path, "name", "");
  if (m.kind == "mlp") {
    m.hidden = field<std::vector<Index>>(j, path, "hidden");
    if (m.hidden.empty()) {
      throw ConfigError(path + ".hidden: must be nonempty");
    }
  }
  return m;
}

GravityConfig parse_gravity(const nlohmann::json& j, std::uint64_t seed) {
  GravityConfig g;
  g.seed = seed;
  g.g_head = field_or<double>(j, "gravity", "g_head", g.g_head);
  g.g_tail = field_or<double>(j, "gravity", "g_tail", g.g_tail);
  g.iterations = field_or<Index>(j, "gravity", "iterations", g.iterations);
  g.epochs_per_iteration = field_or<Index>(j, "gravity",
                                           "epochs_per_iteration",
                                           g.epochs_per_iteration);
  g.batch_size = field_or<Index>(j, "gravity", "batch_size", g.batch_size);
  g.learning_rate =
      field_or<double>(j, "gravity", "learning_rate", g.learning_rate);
  g.accuracy_threshold = field_or<double>(j, "gravity", "accuracy_threshold",
                                          g.accuracy_threshold);
  const std::string adv =
      field_or<std::string>(j, "gravity", "adv_mode", "none");
  try {
    g.adv_mode = adv_mode_from_name(adv);
  } catch (const ValueError& e) {
    throw ConfigError(std::string("gravity.adv_mode: ") + e.what());
  }
  if (g.adv_mode != AdvMode::none) {
    g.adv_attack = parse_attack(require_field(j, "gravity", "adv_attack"),
                                "gravity.adv_attack", seed);
  }
  g.cold_start = field_or<bool>(j, "gravity", "cold_start", false);
  if (j.contains("fixed_gamma") && !j.at("fixed_gamma").is_null()) {
    g.fixed_gamma = typed<double>(j.at("fixed_gamma"), "gravity.fixed_gamma");
  }
  if (j.contains("selection_attack") && !j.at("selection_attack").is_null()) {
    g.selection_attack = parse_attack(j.at("selection_attack"),
                                      "gravity.selection_attack", seed);
  }
  g.selection_samples =
      field_or<Index>(j, "gravity", "selection_samples", g.selection_samples);
  const std::string icc =
      field_or<std::string>(j, "gravity", "icc_mode", "mean_distance");
  if (icc == "mean_distance") {
    g.icc_mode = IccMode::mean_distance;
  } else if (icc == "spread_norm") {
    g.icc_mode = IccMode::spread_norm;
  } else {
    throw ConfigError("gravity.icc_mode: '" + icc +
                      "' is not one of mean_distance, spread_norm");
  }
  try {
    g.validate();
  } catch (const ValueError& e) {
    throw ConfigError(std::string("gravity: ") + e.what());
  }
  return g;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config '" + file.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + file.string() + "': " + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError("config '" + file.string() +
                      "': top level must be an object");
  }

  ExperimentConfig cfg;
  cfg.seed = field<std::uint64_t>(j, "", "seed");
  cfg.dataset = parse_dataset(require_field(j, "", "dataset"), cfg.seed);
  cfg.model = parse_model(require_field(j, "", "model"), "model");
  if (j.contains("substitute") && !j.at("substitute").is_null()) {
    cfg.substitute = parse_model(j.at("substitute"), "substitute");
  }
  if (j.contains("gravity")) {
    cfg.gravity = parse_gravity(j.at("gravity"), cfg.seed);
  } else {
    cfg.gravity.seed = cfg.seed;
  }
  cfg.baseline_epochs =
      field_or<Index>(j, "", "baseline_epochs", cfg.baseline_epochs);
  if (cfg.baseline_epochs < 1) {
    throw ConfigError("baseline_epochs: must be >= 1");
  }
  if (j.contains("attacks")) {
    const nlohmann::json& arr = j.at("attacks");
    if (!arr.is_array()) throw ConfigError("attacks: must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      cfg.attacks.push_back(parse_attack(
          arr[i], "attacks[" + std::to_string(i) + "]", cfg.seed));
    }
  }
  cfg.attack_checkpoint =
      field_or<std::string>(j, "", "attack_checkpoint", "");
  cfg.output_dir = field_or<std::string>(j, "", "output_dir", "out");
  cfg.canonical = j;
  return cfg;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  const std::string dump = config.canonical.dump();
  return detail::fnv1a64_bytes(dump.data(), dump.size());
}

SplitDataset load_split(const ExperimentConfig& config) {
  Dataset full;
  if (config.dataset.kind == "idx") {
    full = load_idx(config.dataset.images, config.dataset.labels);
  } else {
    full = make_blobs(config.dataset.blobs);
  }
  return stratified_split(full, config.dataset.train_samples,
                          config.dataset.eval_samples, config.seed);
}

ModelSpec resolve_model_spec(const ModelBlock& block, const Dataset& ds) {
  ModelSpec spec;
  if (block.kind == "lenet") {
    spec = lenet_lite_spec(ds.sample_shape, ds.classes);
  } else {
    if (ds.sample_shape.size() == 1) {
      spec = mlp_spec(ds.sample_shape[0], block.hidden, ds.classes);
    } else {
      // image data through an mlp: flatten first
      spec.input_shape = ds.sample_shape;
      spec.classes = ds.classes;
      spec.layers.push_back(LayerSpec::activation(LayerKind::flatten));
      Index prev = shape_size(ds.sample_shape);
      for (std::size_t i = 0; i < block.hidden.size(); ++i) {
        const bool last = i + 1 == block.hidden.size();
        spec.layers.push_back(LayerSpec::linear(
            prev, block.hidden[i], last ? LayerTag::tail : LayerTag::plain));
        spec.layers.push_back(LayerSpec::activation(LayerKind::relu));
        prev = block.hidden[i];
      }
      spec.layers.push_back(
          LayerSpec::linear(prev, ds.classes, LayerTag::head));
      spec.name = "mlp";
      spec.validate();
    }
  }
  if (!block.name.empty()) spec.name = block.name;
  return spec;
}

std::string file_checksum(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open '" + file.string() + "' for checksum");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    h = detail::fnv1a64_bytes(buf, static_cast<std::size_t>(is.gcount()), h);
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

void write_manifest(const std::filesystem::path& out_dir,
                    const std::string& command, const ExperimentConfig& config,
                    const std::vector<std::filesystem::path>& outputs) {
  nlohmann::json entries = nlohmann::json::array();
  for (const std::filesystem::path& p : outputs) {
    entries.push_back({{"path", p.filename().string()},
                       {"checksum", file_checksum(out_dir / p.filename())}});
  }
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);

  std::ostringstream hash_hex;
  hash_hex << std::hex << std::setw(16) << std::setfill('0')
           << config_hash(config);
  nlohmann::json j{{"command", command},
                   {"config_hash", hash_hex.str()},
                   {"tool_version", kToolVersion},
                   {"timestamp", stamp},
                   {"outputs", entries}};
  const std::filesystem::path file = out_dir / ("manifest_" + command + ".json");
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + file.string() + "' for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed for '" + file.string() + "'");
}

}  // namespace agrav
