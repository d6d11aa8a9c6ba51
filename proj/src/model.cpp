#include "ent/model.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ent {

using nlohmann::json;

std::string to_string(Variant v) { return v == Variant::Ent ? "ENT" : "FENT"; }

Variant parse_variant(const std::string& name) {
  if (name == "ENT" || name == "ent") return Variant::Ent;
  if (name == "FENT" || name == "fent") return Variant::Fent;
  throw ArgumentError("unknown model variant '" + name + "' (expected ENT or FENT)");
}

void ModelConfig::validate() const {
  if (hidden_dim < 1) throw ArgumentError("model.hidden_dim must be >= 1");
  if (feature_dim < 1) throw ArgumentError("model.feature_dim must be >= 1");
  if (vocab_size < 1) throw ArgumentError("vocabulary must contain at least one character");
  if (emotion_count < 2) throw ArgumentError("at least two emotion classes are required");
  if (neutral_index < 0 || neutral_index >= emotion_count) {
    throw ArgumentError("neutral index must be below the emotion count");
  }
  if (lambda_utt < 0 || lambda_lat < 0) throw ArgumentError("loss weights must be non-negative");
  if (max_symbols_per_frame < 1) throw ArgumentError("max_symbols_per_frame must be >= 1");
  if (!(optimizer.lr > 0)) throw ArgumentError("optimizer.lr must be positive");
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"variant", to_string(c.variant)},
              {"hidden_dim", c.hidden_dim},
              {"feature_dim", c.feature_dim},
              {"vocab_size", c.vocab_size},
              {"emotion_count", c.emotion_count},
              {"neutral_index", c.neutral_index},
              {"lattice_loss", to_string(c.lattice_loss)},
              {"lambda_utt", c.lambda_utt},
              {"lambda_lat", c.lambda_lat},
              {"optimizer",
               {{"lr", c.optimizer.lr},
                {"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"eps", c.optimizer.eps}}},
              {"seed", c.seed},
              {"max_symbols_per_frame", c.max_symbols_per_frame}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.hidden_dim = j.at("hidden_dim").get<Index>();
  c.feature_dim = j.at("feature_dim").get<Index>();
  c.vocab_size = j.at("vocab_size").get<Index>();
  c.emotion_count = j.at("emotion_count").get<Index>();
  c.neutral_index = j.at("neutral_index").get<int>();
  c.lattice_loss = parse_lattice_loss(j.at("lattice_loss").get<std::string>());
  c.lambda_utt = j.at("lambda_utt").get<double>();
  c.lambda_lat = j.at("lambda_lat").get<double>();
  const json& opt = j.at("optimizer");
  c.optimizer.lr = opt.at("lr").get<double>();
  c.optimizer.beta1 = opt.at("beta1").get<double>();
  c.optimizer.beta2 = opt.at("beta2").get<double>();
  c.optimizer.eps = opt.at("eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_symbols_per_frame = j.at("max_symbols_per_frame").get<int>();
  c.validate();
  return c;
}

}  // namespace

std::string to_canonical_text(const ModelConfig& config) { return config_to_json(config).dump(); }

ModelConfig model_config_from_text(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

// --- EmotionTransducer ------------------------------------------------------

EmotionTransducer::EmotionTransducer(const ModelConfig& config) : config_(config) {
  config_.validate();
  const Index hd = config_.hidden_dim;
  const Index vocab = config_.vocab_size;
  encoder = Lstm("encoder", config_.feature_dim, hd);
  vocab_embedding = Embedding("vocab_embedding", vocab + 1, hd);
  vocab_predictor = Lstm("vocab_predictor", hd, hd);
  if (factorized()) {
    blank_embedding = Embedding("blank_embedding", vocab + 1, hd);
    blank_predictor = Lstm("blank_predictor", hd, hd);
    blank_joint = AdditiveJoint("blank_joint", hd, 1);
    vocab_joint = AdditiveJoint("vocab_joint", hd, vocab);
  } else {
    vocab_joint = AdditiveJoint("vocab_joint", hd, vocab + 1);
  }
  emotion_joint = AdditiveJoint("emotion_joint", hd, config_.emotion_count);
  utterance_head = Linear("utterance_head", hd, config_.emotion_count);

  Rng rng(config_.seed);
  encoder.init(rng);
  vocab_embedding.init(rng);
  vocab_predictor.init(rng);
  if (factorized()) {
    blank_embedding.init(rng);
    blank_predictor.init(rng);
    blank_joint.init(rng);
  }
  vocab_joint.init(rng);
  emotion_joint.init(rng);
  utterance_head.init(rng);
}

ParameterList EmotionTransducer::parameters() {
  ParameterList out;
  encoder.append_parameters(out);
  vocab_embedding.append_parameters(out);
  vocab_predictor.append_parameters(out);
  if (factorized()) {
    blank_embedding.append_parameters(out);
    blank_predictor.append_parameters(out);
    blank_joint.append_parameters(out);
  }
  vocab_joint.append_parameters(out);
  emotion_joint.append_parameters(out);
  utterance_head.append_parameters(out);
  return out;
}

std::vector<const Parameter*> EmotionTransducer::parameters() const {
  const ParameterList mutable_list = const_cast<EmotionTransducer*>(this)->parameters();
  return {mutable_list.begin(), mutable_list.end()};
}

VocabLogProbLattice ForwardOutputs::lattice() const {
  const Index states = targets + 1;
  Matrix blank(frames, states);
  Matrix token(frames, targets);
  for (Index t = 0; t < frames; ++t) {
    for (Index u = 0; u < states; ++u) {
      const Index node = t * states + u;
      blank(t, u) = vocab_log_probs(node, kBlankId);
      if (u < targets) token(t, u) = vocab_log_probs(node, predictor_inputs[u + 1]);
    }
  }
  return {std::move(blank), std::move(token)};
}

ForwardOutputs EmotionTransducer::forward(const Matrix& features, std::span<const int> tokens) const {
  if (features.rows() < 1) throw ArgumentError("forward: at least one frame is required");
  if (features.cols() != config_.feature_dim) {
    throw ArgumentError("forward: feature dim " + std::to_string(features.cols()) +
                        " does not match model feature dim " + std::to_string(config_.feature_dim));
  }
  ForwardOutputs out;
  out.frames = features.rows();
  out.targets = static_cast<Index>(tokens.size());
  out.predictor_inputs.reserve(tokens.size() + 1);
  out.predictor_inputs.push_back(kBlankId);
  for (int id : tokens) {
    if (id < 1 || id > config_.vocab_size) {
      throw ArgumentError("forward: unknown token id " + std::to_string(id));
    }
    out.predictor_inputs.push_back(id);
  }

  out.encoder = encoder.forward_sequence(features, &out.encoder_cache);
  out.vocab_states =
      vocab_predictor.forward_sequence(vocab_embedding.forward(out.predictor_inputs), &out.vocab_predictor_cache);

  if (factorized()) {
    out.blank_states = blank_predictor.forward_sequence(blank_embedding.forward(out.predictor_inputs),
                                                        &out.blank_predictor_cache);
    const Matrix blank_logits = blank_joint.forward(out.encoder, out.blank_states);
    const Matrix vocab_logits = vocab_joint.forward(out.encoder, out.vocab_states);
    Matrix joint(blank_logits.rows(), 1 + vocab_logits.cols());
    joint << blank_logits, vocab_logits;
    out.vocab_log_probs = log_softmax_rows(joint);
  } else {
    out.vocab_log_probs = log_softmax_rows(vocab_joint.forward(out.encoder, out.vocab_states));
  }

  const Matrix& g = out.emotion_states();
  out.emotion = ent::emotion_joint(out.encoder, g, emotion_joint);
  out.pooled = out.encoder.colwise().mean() + g.colwise().mean();
  out.utterance_logits = utterance_head.forward(out.pooled).row(0);
  return out;
}

void EmotionTransducer::backward(const ForwardOutputs& out, const OutputGradients& grads) {
  const Index hd = config_.hidden_dim;
  const Index states = out.targets + 1;
  Matrix grad_h = Matrix::Zero(out.frames, hd);
  Matrix grad_vocab_g = Matrix::Zero(states, hd);
  Matrix grad_blank_g = Matrix::Zero(factorized() ? states : 0, hd);
  Matrix& grad_emotion_g = factorized() ? grad_blank_g : grad_vocab_g;
  const Matrix& g_emotion = out.emotion_states();

  const Matrix grad_joint = log_softmax_rows_backward(out.vocab_log_probs, grads.vocab_log_probs);
  if (factorized()) {
    blank_joint.backward(out.encoder, out.blank_states, grad_joint.leftCols(1), grad_h, grad_blank_g);
    vocab_joint.backward(out.encoder, out.vocab_states, grad_joint.rightCols(config_.vocab_size), grad_h,
                         grad_vocab_g);
  } else {
    vocab_joint.backward(out.encoder, out.vocab_states, grad_joint, grad_h, grad_vocab_g);
  }

  const Matrix grad_emotion_logits = emotion_logits_grad(out.emotion, grads.emotion_log_probs);
  emotion_joint.backward(out.encoder, g_emotion, grad_emotion_logits, grad_h, grad_emotion_g);

  const RowVector grad_pooled = utterance_head.backward(out.pooled, grads.utterance_logits).row(0);
  grad_h.rowwise() += grad_pooled / static_cast<double>(out.frames);
  grad_emotion_g.rowwise() += grad_pooled / static_cast<double>(states);

  encoder.backward_sequence(out.encoder_cache, grad_h);
  vocab_embedding.backward(out.predictor_inputs,
                           vocab_predictor.backward_sequence(out.vocab_predictor_cache, grad_vocab_g));
  if (factorized()) {
    blank_embedding.backward(out.predictor_inputs,
                             blank_predictor.backward_sequence(out.blank_predictor_cache, grad_blank_g));
  }
}

ForwardOutputs ent_forward(const Matrix& features, std::span<const int> tokens,
                           const EmotionTransducer& model) {
  if (model.factorized()) throw ArgumentError("ent_forward called with a FENT model");
  return model.forward(features, tokens);
}

ForwardOutputs fent_forward(const Matrix& features, std::span<const int> tokens,
                            const EmotionTransducer& model) {
  if (!model.factorized()) throw ArgumentError("fent_forward called with an ENT model");
  return model.forward(features, tokens);
}

// --- Losses -----------------------------------------------------------------

LossEvaluation total_loss(const ModelConfig& config, const ForwardOutputs& outputs,
                          int target_emotion, std::span<const FrameRegion> regions) {
  if (target_emotion < 0 || target_emotion >= config.emotion_count) {
    throw ArgumentError("target emotion " + std::to_string(target_emotion) + " out of range");
  }
  LossEvaluation eval;
  const Index states = outputs.targets + 1;

  const TransducerLoss trans = transducer_loss(outputs.lattice());
  eval.terms.transducer = trans.loss;
  Matrix& grad_vocab = eval.grads.vocab_log_probs;
  grad_vocab = Matrix::Zero(outputs.vocab_log_probs.rows(), outputs.vocab_log_probs.cols());
  for (Index t = 0; t < outputs.frames; ++t) {
    for (Index u = 0; u < states; ++u) {
      const Index node = t * states + u;
      grad_vocab(node, kBlankId) = trans.posteriors.grad_blank(t, u);
      if (u < outputs.targets) {
        grad_vocab(node, outputs.predictor_inputs[u + 1]) += trans.posteriors.grad_token(t, u);
      }
    }
  }

  const Vector utt_log_probs = log_softmax(outputs.utterance_logits.transpose());
  eval.terms.utterance = -utt_log_probs(target_emotion);
  eval.grads.utterance_logits = utt_log_probs.array().exp().matrix().transpose();
  eval.grads.utterance_logits(target_emotion) -= 1.0;
  eval.grads.utterance_logits *= config.lambda_utt;

  if (config.lattice_loss == LatticeLossKind::Region && regions.empty()) {
    throw ArgumentError("region lattice loss selected but the example has no regions");
  }
  EmotionLossResult lat = emotion_lattice_loss(config.lattice_loss, outputs.emotion, target_emotion,
                                               config.neutral_index, regions);
  eval.terms.lattice = lat.loss;
  eval.grads.emotion_log_probs = config.lambda_lat * lat.grad_log_probs;

  eval.terms.total = eval.terms.transducer + config.lambda_utt * eval.terms.utterance +
                     config.lambda_lat * eval.terms.lattice;
  return eval;
}

namespace {

OutputGradients scaled(OutputGradients g, double factor) {
  g.vocab_log_probs *= factor;
  g.emotion_log_probs *= factor;
  g.utterance_logits *= factor;
  return g;
}

void require_finite(double value, const char* term, std::size_t index) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string("non-finite ") + term + " loss on batch item " + std::to_string(index));
  }
}

}  // namespace

StepMetrics train_step(std::span<const Example> batch, EmotionTransducer& model, AdamState& adam) {
  if (batch.empty()) throw ArgumentError("train_step: empty batch");
  const ParameterList params = model.parameters();
  zero_grads(params);
  const double scale = 1.0 / static_cast<double>(batch.size());
  StepMetrics metrics;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = batch[i];
    ForwardOutputs out;
    LossEvaluation eval;
    try {
      out = model.forward(ex.features, ex.tokens);
      eval = total_loss(model.config(), out, ex.emotion, ex.regions);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (batch item " + std::to_string(i) + ")");
    }
    require_finite(eval.terms.transducer, "transducer", i);
    require_finite(eval.terms.utterance, "utterance", i);
    require_finite(eval.terms.lattice, "lattice", i);
    model.backward(out, scaled(eval.grads, scale));
    metrics.mean.transducer += scale * eval.terms.transducer;
    metrics.mean.utterance += scale * eval.terms.utterance;
    metrics.mean.lattice += scale * eval.terms.lattice;
    metrics.mean.total += scale * eval.terms.total;
  }
  metrics.grad_norm = grad_norm(params);
  if (!std::isfinite(metrics.grad_norm)) throw NumericError("non-finite gradient norm");
  adam_step(params, adam);
  return metrics;
}

// --- Checkpoints ------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and feature files are written in host order, which must be little-endian");

constexpr char kCheckpointMagic[4] = {'E', 'N', 'T', 'C'};

void put_u32(std::string& buf, std::uint32_t v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_matrix(std::string& buf, const std::string& name, const Matrix& m) {
  put_u32(buf, static_cast<std::uint32_t>(name.size()));
  buf += name;
  put_u32(buf, static_cast<std::uint32_t>(m.rows()));
  put_u32(buf, static_cast<std::uint32_t>(m.cols()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = m;
  buf.append(reinterpret_cast<const char*>(row_major.data()),
             static_cast<std::size_t>(row_major.size()) * sizeof(double));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw FormatError(path_ + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, data_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix matrix(std::uint32_t rows, std::uint32_t cols) {
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    need(count * sizeof(double));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(rows, cols);
    std::memcpy(m.data(), data_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
    return m;
  }
  bool done() const { return pos_ == data_.size(); }
  const std::string& path() const { return path_; }

 private:
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const EmotionTransducer& model,
                     const AdamState* optimizer) {
  json header{{"model", config_to_json(model.config())}};
  if (optimizer != nullptr) header["optimizer_step"] = optimizer->step;

  std::string buf(kCheckpointMagic, 4);
  put_u32(buf, kCheckpointVersion);
  const std::string text = header.dump();
  put_u32(buf, static_cast<std::uint32_t>(text.size()));
  buf += text;

  const auto params = model.parameters();
  const std::size_t count = params.size() * (optimizer != nullptr ? 3 : 1);
  put_u32(buf, static_cast<std::uint32_t>(count));
  for (const Parameter* p : params) put_matrix(buf, p->name, p->value);
  if (optimizer != nullptr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      put_matrix(buf, "adam.m/" + params[i]->name, optimizer->first_moment[i]);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      put_matrix(buf, "adam.v/" + params[i]->name, optimizer->second_moment[i]);
    }
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ArgumentError("cannot open " + tmp + " for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw ArgumentError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string data = ss.str();
  Reader r(data, path);

  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) throw FormatError(path + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  json header;
  try {
    header = json::parse(r.bytes(r.u32()));
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad config block: " + e.what());
  }
  ModelConfig config;
  try {
    config = config_from_json(header.at("model"));
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad model config: " + e.what());
  }

  Checkpoint ckpt{EmotionTransducer(config), std::nullopt};
  ParameterList params = ckpt.model.parameters();
  const bool has_optimizer = header.contains("optimizer_step");
  const std::uint32_t count = r.u32();
  if (count != params.size() * (has_optimizer ? 3 : 1)) {
    throw FormatError(path + ": parameter count " + std::to_string(count) + " does not match the model");
  }

  auto read_into = [&r](const std::string& expected_name, Matrix& dest) {
    const std::string name = r.bytes(r.u32());
    if (name != expected_name) {
      throw FormatError(r.path() + ": expected parameter '" + expected_name + "', found '" + name + "'");
    }
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows != dest.rows() || cols != dest.cols()) {
      throw FormatError(r.path() + ": shape mismatch for '" + name + "'");
    }
    dest = r.matrix(rows, cols);
  };

  for (Parameter* p : params) read_into(p->name, p->value);
  if (has_optimizer) {
    AdamState adam = AdamState::for_parameters(params, config.optimizer);
    adam.step = header.at("optimizer_step").get<std::int64_t>();
    for (std::size_t i = 0; i < params.size(); ++i) read_into("adam.m/" + params[i]->name, adam.first_moment[i]);
    for (std::size_t i = 0; i < params.size(); ++i) read_into("adam.v/" + params[i]->name, adam.second_moment[i]);
    ckpt.optimizer = std::move(adam);
  }
  if (!r.done()) throw FormatError(path + ": trailing bytes after the last parameter");
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path, Variant expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.model.config().variant != expected) {
    throw FormatError(path + ": checkpoint holds a " + to_string(ckpt.model.config().variant) +
                      " model, expected " + to_string(expected));
  }
  return ckpt;
}

}  // namespace ent
