#include "ent/experiment.hpp"

#include <numeric>

#include <json.hpp>

namespace ent {

std::vector<Example> training_examples(std::span<const Utterance> utterances, const Vocabulary& vocab,
                                       int neutral, std::size_t mix_count, std::uint64_t mix_seed) {
  std::vector<Example> out;
  out.reserve(utterances.size() + mix_count);
  for (const Utterance& u : utterances) {
    if (mix_count == 0) {
      out.push_back(to_example(u, vocab, neutral));
      continue;
    }
    Utterance coarse = u;
    coarse.segments.clear();
    out.push_back(to_example(coarse, vocab, neutral));
  }
  if (mix_count > 0) {
    Rng rng(mix_seed);
    for (const Utterance& m : build_mixed_set(utterances, neutral, mix_count, rng)) {
      out.push_back(to_example(m, vocab, neutral));
    }
  }
  return out;
}

std::vector<EpochLog> train(EmotionTransducer& model, AdamState& adam, std::span<const Example> examples,
                            const TrainOptions& options, const EpochCallback& on_epoch) {
  if (examples.empty()) throw ArgumentError("train: no training examples");
  if (options.batch_size < 1 || options.epochs < 0) throw ArgumentError("train: bad batch size or epoch count");
  const std::size_t n = examples.size();
  const std::size_t batch = static_cast<std::size_t>(options.batch_size);
  const std::int64_t per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);

  std::vector<EpochLog> logs;
  Index epoch = static_cast<Index>(adam.step / per_epoch);
  std::int64_t skip = adam.step % per_epoch;
  for (; epoch < options.epochs; ++epoch) {
    if (options.max_steps > 0 && adam.step >= options.max_steps) break;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(options.shuffle_seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1));
    rng.shuffle(order);

    EpochLog log;
    log.epoch = epoch;
    std::vector<Example> chunk;
    for (std::int64_t b = skip; b < per_epoch; ++b) {
      if (options.max_steps > 0 && adam.step >= options.max_steps) break;
      chunk.clear();
      const std::size_t begin = static_cast<std::size_t>(b) * batch;
      for (std::size_t i = begin; i < std::min(n, begin + batch); ++i) chunk.push_back(examples[order[i]]);
      const StepMetrics m = train_step(chunk, model, adam);
      log.mean.transducer += m.mean.transducer;
      log.mean.utterance += m.mean.utterance;
      log.mean.lattice += m.mean.lattice;
      log.mean.total += m.mean.total;
      log.grad_norm += m.grad_norm;
      ++log.batches;
    }
    skip = 0;
    if (log.batches == 0) break;
    const double inv = 1.0 / static_cast<double>(log.batches);
    log.mean.transducer *= inv;
    log.mean.utterance *= inv;
    log.mean.lattice *= inv;
    log.mean.total *= inv;
    log.grad_norm *= inv;
    log.step = adam.step;
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

namespace {

int argmax(const RowVector& v) {
  Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

EvalReport score(std::span<const Utterance> references, std::span<const Hypothesis> hypotheses,
                 const EmotionSet& emotions) {
  if (references.size() != hypotheses.size()) throw ArgumentError("score: reference/hypothesis count mismatch");
  if (references.empty()) throw ArgumentError("score: nothing to evaluate");
  std::size_t errors = 0, ref_words = 0;
  std::vector<int> predicted, labels;
  EderAccumulator eder_acc;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const Utterance& ref = references[i];
    const Hypothesis& hyp = hypotheses[i];
    const auto rw = split_words(ref.transcript);
    const auto hw = split_words(hyp.transcript);
    errors += edit_counts(rw, hw).errors();
    ref_words += rw.size();
    predicted.push_back(hyp.utterance_emotion);
    labels.push_back(ref.emotion);
    eder_acc.add(ref.segments, hyp.segments, ref.frames(), emotions.neutral());
  }
  if (ref_words == 0) throw ArgumentError("score: all reference transcripts are empty");
  EvalReport report;
  report.utterances = references.size();
  report.wer = static_cast<double>(errors) / static_cast<double>(ref_words);
  const Accuracy acc = wa_ua(predicted, labels);
  report.wa = acc.wa;
  report.ua = acc.ua;
  for (const auto& [label, r] : acc.recall) report.class_recall[emotions.name(label)] = r;
  report.eder = eder_acc.result();
  return report;
}

EvalOutput evaluate(const EmotionTransducer& model, std::span<const Utterance> utterances,
                    const Vocabulary& vocab, const EmotionSet& emotions, const EvalOptions& options) {
  if (vocab.size() != model.config().vocab_size) {
    throw ArgumentError("vocabulary size does not match the model");
  }
  EvalOutput out;
  for (const Utterance& u : utterances) {
    if (options.require_segments && u.segments.empty()) {
      throw ArgumentError("record " + u.id + " has no segments but EDER was requested");
    }
    const DecodeResult dec = greedy_decode(model, u.features);
    Hypothesis hyp;
    hyp.id = u.id;
    hyp.transcript = vocab.detokenize(dec.tokens);
    hyp.frame_emotions = dec.frame_emotions;
    hyp.segments = frames_to_segments(dec.frame_emotions, options.min_run);
    hyp.forced_blank = dec.forced_blank;
    hyp.utterance_emotion = argmax(model.forward(u.features, dec.tokens).utterance_logits);
    out.hypotheses.push_back(std::move(hyp));
  }
  out.report = score(utterances, out.hypotheses, emotions);
  return out;
}

EderBreakdown all_neutral_eder(std::span<const Utterance> utterances, int neutral) {
  EderAccumulator acc;
  for (const Utterance& u : utterances) acc.add(u.segments, {}, u.frames(), neutral);
  return acc.result();
}

std::string hypothesis_to_text(const Hypothesis& hyp, const EmotionSet& emotions) {
  nlohmann::ordered_json j;
  j["id"] = hyp.id;
  j["transcript"] = hyp.transcript;
  j["emotion"] = emotions.name(hyp.utterance_emotion);
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (int e : hyp.frame_emotions) frames.push_back(emotions.name(e));
  j["frame_emotions"] = frames;
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const EmotionSegment& s : hyp.segments) segs.push_back({s.start_frame, s.end_frame, emotions.name(s.label)});
  j["segments"] = segs;
  j["forced_blank"] = hyp.forced_blank;
  return j.dump();
}

std::string epoch_log_to_text(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["step"] = log.step;
  j["batches"] = log.batches;
  j["loss_total"] = log.mean.total;
  j["loss_transducer"] = log.mean.transducer;
  j["loss_utterance"] = log.mean.utterance;
  j["loss_lattice"] = log.mean.lattice;
  j["grad_norm"] = log.grad_norm;
  return j.dump();
}

}  // namespace ent
