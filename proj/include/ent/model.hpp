#pragma once

// Emotion neural transducer assemblies.
//
// ENT: one LSTM encoder, one LSTM vocabulary predictor, and three heads fed
// by additive fusion of encoder and predictor states: the vocabulary joint
// (V+1 logits, blank at index 0), the emotion joint (K logits) and an
// utterance head over the mean-pooled states.
//
// FENT: blank and vocabulary prediction are split across two predictors.
// The blank joint emits a single logit from the blank predictor, the
// vocabulary joint emits V logits from the vocabulary predictor, and the
// per-node distribution is softmax([z_blank; z_vocab]). The emotion joint
// and utterance head share the blank predictor.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ent/emotion_lattice.hpp"
#include "ent/numerics.hpp"
#include "ent/transducer_lattice.hpp"

namespace ent {

enum class Variant { Ent, Fent };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::Ent;
  Index hidden_dim = 64;
  Index feature_dim = 16;
  Index vocab_size = 8;  // characters, blank excluded
  Index emotion_count = 5;
  int neutral_index = 0;
  LatticeLossKind lattice_loss = LatticeLossKind::MaxPool;
  double lambda_utt = 1.0;
  double lambda_lat = 1.0;
  AdamConfig optimizer;
  std::uint64_t seed = 0;
  int max_symbols_per_frame = 10;

  void validate() const;
};

// Canonical text form (sorted-key JSON); used inside checkpoints.
std::string to_canonical_text(const ModelConfig& config);
ModelConfig model_config_from_text(const std::string& text);

inline constexpr int kBlankId = 0;

struct Example {
  Matrix features;          // T x D
  std::vector<int> tokens;  // ids in [1, V]
  int emotion = 0;
  std::vector<FrameRegion> regions;  // only needed by region supervision
};

struct ForwardOutputs {
  Index frames = 0;
  Index targets = 0;
  std::vector<int> predictor_inputs;  // start symbol followed by the targets

  Matrix encoder;        // T x H
  Matrix vocab_states;   // (U+1) x H
  Matrix blank_states;   // (U+1) x H, FENT only
  Matrix vocab_log_probs;  // T(U+1) x (V+1), column 0 is blank
  EmotionLattice emotion;
  RowVector pooled;
  RowVector utterance_logits;

  std::vector<LstmStepCache> encoder_cache;
  std::vector<LstmStepCache> vocab_predictor_cache;
  std::vector<LstmStepCache> blank_predictor_cache;

  // Gathers blank and target-token log-probs into the alignment lattice.
  VocabLogProbLattice lattice() const;
  // Predictor states consumed by the emotion joint and the utterance head.
  const Matrix& emotion_states() const { return blank_states.size() ? blank_states : vocab_states; }
};

struct OutputGradients {
  Matrix vocab_log_probs;
  Matrix emotion_log_probs;
  RowVector utterance_logits;
};

struct LossBreakdown {
  double transducer = 0.0;
  double utterance = 0.0;  // unweighted cross-entropy
  double lattice = 0.0;    // unweighted lattice loss
  double total = 0.0;      // transducer + λ_utt·utterance + λ_lat·lattice
};

struct LossEvaluation {
  LossBreakdown terms;
  OutputGradients grads;
};

class EmotionTransducer {
 public:
  explicit EmotionTransducer(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  bool factorized() const { return config_.variant == Variant::Fent; }

  ForwardOutputs forward(const Matrix& features, std::span<const int> tokens) const;
  // Accumulates parameter gradients for one utterance.
  void backward(const ForwardOutputs& outputs, const OutputGradients& grads);

  ParameterList parameters();
  std::vector<const Parameter*> parameters() const;

  Lstm encoder;
  Embedding vocab_embedding;
  Lstm vocab_predictor;
  Embedding blank_embedding;  // FENT only
  Lstm blank_predictor;       // FENT only
  AdditiveJoint vocab_joint;  // ENT: V+1 outputs; FENT: V outputs
  AdditiveJoint blank_joint;  // FENT only, 1 output
  AdditiveJoint emotion_joint;
  Linear utterance_head;

 private:
  ModelConfig config_;
};

ForwardOutputs ent_forward(const Matrix& features, std::span<const int> tokens,
                           const EmotionTransducer& model);
ForwardOutputs fent_forward(const Matrix& features, std::span<const int> tokens,
                            const EmotionTransducer& model);

LossEvaluation total_loss(const ModelConfig& config, const ForwardOutputs& outputs,
                          int target_emotion, std::span<const FrameRegion> regions = {});

struct StepMetrics {
  LossBreakdown mean;
  double grad_norm = 0.0;
};

// Mean gradient over the batch followed by one Adam update.
StepMetrics train_step(std::span<const Example> batch, EmotionTransducer& model, AdamState& adam);

struct Checkpoint {
  EmotionTransducer model;
  std::optional<AdamState> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Written to a temporary file and renamed into place.
void save_checkpoint(const std::string& path, const EmotionTransducer& model,
                     const AdamState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint load_checkpoint(const std::string& path, Variant expected);

}  // namespace ent
