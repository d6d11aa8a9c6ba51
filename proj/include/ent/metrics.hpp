#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ent/segments.hpp"

namespace ent {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

std::vector<std::string> split_words(std::string_view text);

// Unit-cost Levenshtein alignment of hypothesis against reference.
EditCounts edit_counts(std::span<const std::string> reference, std::span<const std::string> hypothesis);

double wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);
double wer(std::string_view reference, std::string_view hypothesis);

struct Accuracy {
  double wa = 0.0;
  double ua = 0.0;
  std::map<int, double> recall;  // classes present in the labels
};

Accuracy wa_ua(std::span<const int> predictions, std::span<const int> labels);

struct EderBreakdown {
  double eder = 0.0;
  double missed = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
};

// Frame-wise emotion diarization error. Frames not covered by a segment
// count as `neutral`.
EderBreakdown eder(const SegmentList& reference, const SegmentList& hypothesis, Index total_frames,
                   int neutral);

// Accumulates frame counts across utterances so the corpus score is
// weighted by duration.
class EderAccumulator {
 public:
  void add(const SegmentList& reference, const SegmentList& hypothesis, Index total_frames, int neutral);
  EderBreakdown result() const;

 private:
  std::size_t frames_ = 0, missed_ = 0, false_alarm_ = 0, confusion_ = 0;
};

struct EvalReport {
  double wer = 0.0;
  double wa = 0.0;
  double ua = 0.0;
  EderBreakdown eder;
  std::map<std::string, double> class_recall;
  std::size_t utterances = 0;

  // Fixed-field JSON text, stable across runs.
  std::string to_text() const;
};

}  // namespace ent
