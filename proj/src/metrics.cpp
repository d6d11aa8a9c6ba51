#include "ent/metrics.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

namespace ent {

std::vector<std::string> split_words(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

EditCounts edit_counts(std::span<const std::string> ref, std::span<const std::string> hyp) {
  struct Cell {
    std::size_t cost = 0, sub = 0, ins = 0, del = 0;
  };
  const std::size_t m = ref.size();
  const std::size_t n = hyp.size();
  std::vector<Cell> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = {j, 0, j, 0};
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = {i, 0, 0, i};
    for (std::size_t j = 1; j <= n; ++j) {
      Cell diag = prev[j - 1];
      if (ref[i - 1] != hyp[j - 1]) {
        ++diag.cost;
        ++diag.sub;
      }
      Cell del = prev[j];
      ++del.cost;
      ++del.del;
      Cell ins = cur[j - 1];
      ++ins.cost;
      ++ins.ins;
      // prefer diagonal, then deletion, then insertion on equal cost
      Cell best = diag;
      if (del.cost < best.cost) best = del;
      if (ins.cost < best.cost) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[n];
  return {end.sub, end.ins, end.del, m};
}

double wer(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (reference.empty()) throw ArgumentError("wer: empty reference");
  const EditCounts c = edit_counts(reference, hypothesis);
  return static_cast<double>(c.errors()) / static_cast<double>(reference.size());
}

double wer(std::string_view reference, std::string_view hypothesis) {
  const auto r = split_words(reference);
  const auto h = split_words(hypothesis);
  return wer(std::span<const std::string>(r), std::span<const std::string>(h));
}

Accuracy wa_ua(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ArgumentError("wa_ua: length mismatch");
  if (labels.empty()) throw ArgumentError("wa_ua: no labels");
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // label -> (correct, total)
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [ok, total] = per_class[labels[i]];
    ++total;
    if (predictions[i] == labels[i]) {
      ++ok;
      ++correct;
    }
  }
  Accuracy acc;
  acc.wa = static_cast<double>(correct) / static_cast<double>(labels.size());
  for (const auto& [label, counts] : per_class) {
    const double r = static_cast<double>(counts.first) / static_cast<double>(counts.second);
    acc.recall[label] = r;
    acc.ua += r;
  }
  acc.ua /= static_cast<double>(per_class.size());
  return acc;
}

void EderAccumulator::add(const SegmentList& reference, const SegmentList& hypothesis,
                          Index total_frames, int neutral) {
  if (total_frames < 1) throw ArgumentError("eder: total_frames must be positive");
  const std::vector<int> ref = segments_to_frames(reference, total_frames, neutral);
  const std::vector<int> hyp = segments_to_frames(hypothesis, total_frames, neutral);
  for (std::size_t t = 0; t < ref.size(); ++t) {
    const bool ref_emotional = ref[t] != neutral;
    const bool hyp_emotional = hyp[t] != neutral;
    if (ref_emotional && !hyp_emotional) {
      ++missed_;
    } else if (!ref_emotional && hyp_emotional) {
      ++false_alarm_;
    } else if (ref_emotional && ref[t] != hyp[t]) {
      ++confusion_;
    }
  }
  frames_ += ref.size();
}

EderBreakdown EderAccumulator::result() const {
  if (frames_ == 0) throw ArgumentError("eder: nothing accumulated");
  const double total = static_cast<double>(frames_);
  EderBreakdown b;
  b.missed = static_cast<double>(missed_) / total;
  b.false_alarm = static_cast<double>(false_alarm_) / total;
  b.confusion = static_cast<double>(confusion_) / total;
  b.eder = static_cast<double>(missed_ + false_alarm_ + confusion_) / total;
  return b;
}

EderBreakdown eder(const SegmentList& reference, const SegmentList& hypothesis, Index total_frames,
                   int neutral) {
  EderAccumulator acc;
  acc.add(reference, hypothesis, total_frames, neutral);
  return acc.result();
}

std::string EvalReport::to_text() const {
  nlohmann::ordered_json j;
  j["wer"] = wer;
  j["wa"] = wa;
  j["ua"] = ua;
  j["eder"] = eder.eder;
  j["eder_missed"] = eder.missed;
  j["eder_false_alarm"] = eder.false_alarm;
  j["eder_confusion"] = eder.confusion;
  j["utterances"] = utterances;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [name, r] : class_recall) recall[name] = r;
  j["class_recall"] = recall;
  return j.dump(2) + "\n";
}

}  // namespace ent
