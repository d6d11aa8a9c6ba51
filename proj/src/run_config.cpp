#include "ent/run_config.hpp"

#include <fstream>
#include <sstream>

namespace ent {

using nlohmann::ordered_json;

ordered_json default_config_tree() {
  return ordered_json::parse(R"({
    "seed": 7,
    "emotions": ["neutral", "angry", "happy", "sad", "surprised"],
    "neutral": "neutral",
    "vocab": "abcdefg ",
    "model": {
      "variant": "ENT",
      "hidden_dim": 64,
      "feature_dim": 16,
      "lattice_loss": "maxpool",
      "lambda_utt": 1.0,
      "lambda_lat": 1.0,
      "max_symbols_per_frame": 10
    },
    "optimizer": {"lr": 0.003, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "train": {
      "manifest": "data/train/manifest.jsonl",
      "epochs": 80,
      "batch_size": 8,
      "max_steps": 2000,
      "mix_count": 0
    },
    "eval": {"manifest": "data/eval/manifest.jsonl", "min_run": 1},
    "synth": {
      "train_utterances": 200,
      "eval_utterances": 50,
      "frames_per_token": 4,
      "noise_stddev": 0.1,
      "region_fraction_min": 0.4,
      "region_fraction_max": 0.7,
      "neutral_fraction": 0.2,
      "min_words": 1,
      "max_words": 3,
      "min_word_length": 1,
      "max_word_length": 3,
      "basis_scale": 1.0
    },
    "gradcheck": {
      "hidden_dim": 4,
      "feature_dim": 3,
      "vocab_size": 3,
      "emotion_count": 3,
      "frames": 3,
      "targets": 2,
      "eps": 1e-5,
      "tolerance": 1e-4
    }
  })");
}

namespace {

bool compatible(const ordered_json& expected, const ordered_json& given) {
  if (expected.is_number()) {
    if (expected.is_number_float()) return given.is_number();
    return given.is_number_integer() || given.is_number_unsigned();
  }
  if (expected.is_array()) return given.is_array();
  return expected.type() == given.type();
}

void merge(ordered_json& base, const ordered_json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ArgumentError("config: " + (prefix.empty() ? "root" : prefix) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ArgumentError("config: unknown key '" + path + "'");
    ordered_json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, path);
    } else {
      if (!compatible(slot, value)) throw ArgumentError("config: wrong type for '" + path + "'");
      slot = value;
    }
  }
}

template <typename T>
T get(const ordered_json& tree, const char* section, const char* key) {
  try {
    return tree.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ArgumentError(std::string("config: bad value for '") + section + "." + key + "'");
  }
}

Index positive(Index v, const char* name) {
  if (v < 1) throw ArgumentError(std::string("config: ") + name + " must be >= 1");
  return v;
}

}  // namespace

void apply_override(ordered_json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ArgumentError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  // Rebuild as a nested patch so merge() performs the key and type checks.
  ordered_json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  std::size_t pos;
  while ((pos = rest.find('.')) != std::string::npos) {
    parts.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    ordered_json wrapper = ordered_json::object();
    wrapper[*it] = patch;
    patch = wrapper;
  }
  merge(tree, patch, "");
}

RunConfig resolve_run_config(const ordered_json& tree) {
  RunConfig rc;
  rc.tree = tree;
  try {
    rc.seed = tree.at("seed").get<std::uint64_t>();
    rc.emotions = EmotionSet(tree.at("emotions").get<std::vector<std::string>>(), tree.at("neutral").get<std::string>());
    rc.vocab = Vocabulary(tree.at("vocab").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }

  ModelConfig& m = rc.model;
  m.variant = parse_variant(get<std::string>(tree, "model", "variant"));
  m.hidden_dim = get<Index>(tree, "model", "hidden_dim");
  m.feature_dim = get<Index>(tree, "model", "feature_dim");
  m.vocab_size = rc.vocab.size();
  m.emotion_count = rc.emotions.size();
  m.neutral_index = rc.emotions.neutral();
  m.lattice_loss = parse_lattice_loss(get<std::string>(tree, "model", "lattice_loss"));
  m.lambda_utt = get<double>(tree, "model", "lambda_utt");
  m.lambda_lat = get<double>(tree, "model", "lambda_lat");
  m.max_symbols_per_frame = get<int>(tree, "model", "max_symbols_per_frame");
  m.optimizer.lr = get<double>(tree, "optimizer", "lr");
  m.optimizer.beta1 = get<double>(tree, "optimizer", "beta1");
  m.optimizer.beta2 = get<double>(tree, "optimizer", "beta2");
  m.optimizer.eps = get<double>(tree, "optimizer", "eps");
  m.seed = rc.seed;
  m.validate();

  rc.train.epochs = get<Index>(tree, "train", "epochs");
  rc.train.batch_size = positive(get<Index>(tree, "train", "batch_size"), "train.batch_size");
  rc.train.max_steps = get<std::int64_t>(tree, "train", "max_steps");
  rc.train.shuffle_seed = rc.seed;
  rc.mix_count = get<std::size_t>(tree, "train", "mix_count");
  rc.train_manifest = get<std::string>(tree, "train", "manifest");
  rc.eval_manifest = get<std::string>(tree, "eval", "manifest");
  rc.eval.min_run = positive(get<Index>(tree, "eval", "min_run"), "eval.min_run");

  SyntheticTaskConfig& s = rc.synth.task;
  s.vocabulary = rc.vocab.characters();
  s.emotion_count = rc.emotions.size();
  s.neutral_index = rc.emotions.neutral();
  s.feature_dim = m.feature_dim;
  s.frames_per_token = get<Index>(tree, "synth", "frames_per_token");
  s.noise_stddev = get<double>(tree, "synth", "noise_stddev");
  s.region_fraction_min = get<double>(tree, "synth", "region_fraction_min");
  s.region_fraction_max = get<double>(tree, "synth", "region_fraction_max");
  s.neutral_fraction = get<double>(tree, "synth", "neutral_fraction");
  s.min_words = get<Index>(tree, "synth", "min_words");
  s.max_words = get<Index>(tree, "synth", "max_words");
  s.min_word_length = get<Index>(tree, "synth", "min_word_length");
  s.max_word_length = get<Index>(tree, "synth", "max_word_length");
  s.basis_scale = get<double>(tree, "synth", "basis_scale");
  s.seed = rc.seed;
  rc.synth.train_utterances = get<std::size_t>(tree, "synth", "train_utterances");
  rc.synth.eval_utterances = get<std::size_t>(tree, "synth", "eval_utterances");

  GradcheckOptions& g = rc.gradcheck;
  g.hidden_dim = positive(get<Index>(tree, "gradcheck", "hidden_dim"), "gradcheck.hidden_dim");
  g.feature_dim = positive(get<Index>(tree, "gradcheck", "feature_dim"), "gradcheck.feature_dim");
  g.vocab_size = positive(get<Index>(tree, "gradcheck", "vocab_size"), "gradcheck.vocab_size");
  g.emotion_count = get<Index>(tree, "gradcheck", "emotion_count");
  if (g.emotion_count < 2) throw ArgumentError("config: gradcheck.emotion_count must be >= 2");
  g.frames = positive(get<Index>(tree, "gradcheck", "frames"), "gradcheck.frames");
  g.targets = get<Index>(tree, "gradcheck", "targets");
  g.eps = get<double>(tree, "gradcheck", "eps");
  g.tolerance = get<double>(tree, "gradcheck", "tolerance");
  return rc;
}

RunConfig load_run_config(const std::string& config_path, std::span<const std::string> overrides,
                          std::optional<std::uint64_t> seed) {
  ordered_json tree = default_config_tree();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ArgumentError("cannot open config " + config_path);
    ordered_json file;
    try {
      file = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(config_path + ": " + e.what());
    }
    merge(tree, file, "");
  }
  for (const std::string& o : overrides) apply_override(tree, o);
  if (seed) tree["seed"] = *seed;
  return resolve_run_config(tree);
}

}  // namespace ent
