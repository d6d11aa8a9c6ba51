#pragma once

// Training loop and corpus evaluation shared by the CLI and the acceptance
// suite.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ent/data.hpp"
#include "ent/decode.hpp"
#include "ent/metrics.hpp"
#include "ent/model.hpp"

namespace ent {

struct TrainOptions {
  Index epochs = 80;
  Index batch_size = 8;
  std::int64_t max_steps = 0;  // 0: no cap
  std::uint64_t shuffle_seed = 0;
};

struct EpochLog {
  Index epoch = 0;
  std::int64_t step = 0;  // optimizer steps completed after this epoch
  LossBreakdown mean;
  double grad_norm = 0.0;  // mean over the epoch's steps
  Index batches = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Converts utterances to training examples. With mix_count > 0 the
// originals keep only their utterance label (one whole-utterance region) and
// `mix_count` neutral+emotional concatenations supply the segment-level
// regions.
std::vector<Example> training_examples(std::span<const Utterance> utterances, const Vocabulary& vocab,
                                       int neutral, std::size_t mix_count, std::uint64_t mix_seed);

// Runs epochs of shuffled mini-batches. Training resumes from adam.step: the
// epoch index and in-epoch position are derived from it, so an interrupted
// run continues with the same batches.
std::vector<EpochLog> train(EmotionTransducer& model, AdamState& adam, std::span<const Example> examples,
                            const TrainOptions& options, const EpochCallback& on_epoch = {});

struct Hypothesis {
  std::string id;
  std::string transcript;
  std::vector<int> frame_emotions;
  SegmentList segments;
  int utterance_emotion = 0;
  bool forced_blank = false;
};

struct EvalOptions {
  Index min_run = 1;
  bool require_segments = true;
};

struct EvalOutput {
  EvalReport report;
  std::vector<Hypothesis> hypotheses;
};

// Decodes every utterance, predicts its utterance-level emotion from the
// decoded token history, and scores WER, WA/UA and EDER.
EvalOutput evaluate(const EmotionTransducer& model, std::span<const Utterance> utterances,
                    const Vocabulary& vocab, const EmotionSet& emotions, const EvalOptions& options = {});

// Scores given hypotheses against the references (no model involved).
EvalReport score(std::span<const Utterance> references, std::span<const Hypothesis> hypotheses,
                 const EmotionSet& emotions);

// EDER of predicting neutral everywhere.
EderBreakdown all_neutral_eder(std::span<const Utterance> utterances, int neutral);

std::string hypothesis_to_text(const Hypothesis& hyp, const EmotionSet& emotions);
std::string epoch_log_to_text(const EpochLog& log);

}  // namespace ent
