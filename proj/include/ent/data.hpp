#pragma once

// Dataset I/O, character tokenization, the synthetic diarization task and
// neutral/emotional mixing.
//
// Feature file layout (little-endian):
//   "ENTF" | u32 version (=1) | u32 n_frames | u32 dim | f32[n_frames*dim], row-major
//
// Manifests are JSON lines with fields id, features (path relative to the
// manifest directory), transcript, emotion, segments ([[start, end, label]],
// optional) and n_frames.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ent/emotion_lattice.hpp"
#include "ent/model.hpp"
#include "ent/numerics.hpp"
#include "ent/segments.hpp"

namespace ent {

// Character vocabulary; ids start at 1 (0 is the blank).
class Vocabulary {
 public:
  explicit Vocabulary(std::string characters);

  Index size() const { return static_cast<Index>(chars_.size()); }
  const std::string& characters() const { return chars_; }
  std::optional<int> space_id() const;
  int id(char c) const;  // -1 when absent
  char symbol(int id) const;

  std::string detokenize(std::span<const int> ids) const;

 private:
  std::string chars_;
};

// One token per character; any whitespace maps to the space token.
std::vector<int> char_tokenize(std::string_view transcript, const Vocabulary& vocab,
                               std::string_view record_id = {});

class EmotionSet {
 public:
  EmotionSet(std::vector<std::string> names, const std::string& neutral);

  Index size() const { return static_cast<Index>(names_.size()); }
  int neutral() const { return neutral_; }
  const std::string& name(int id) const;
  int id(const std::string& name) const;  // throws ArgumentError when unknown
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  int neutral_ = 0;
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

struct FeatureHeader {
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
};

void write_features(const std::string& path, const Matrix& features);
FeatureHeader read_feature_header(const std::string& path);
// Widens to f64. Throws FormatError on a malformed file and ArgumentError
// for a zero-frame file.
Matrix read_features(const std::string& path);

struct LabeledSegment {
  Index start_frame = 0;
  Index end_frame = 0;
  std::string label;
};

struct ManifestRecord {
  std::string id;
  std::string features;
  std::string transcript;
  std::string emotion;
  std::optional<std::vector<LabeledSegment>> segments;
  Index n_frames = 0;
};

// Validates segment bounds, optional emotion labels and feature files.
// Error messages carry the line number and record id.
std::vector<ManifestRecord> load_manifest(const std::string& path, const EmotionSet* emotions = nullptr,
                                          bool check_features = true);
void write_manifest(const std::string& path, std::span<const ManifestRecord> records);

// In-memory utterance with decoded labels.
struct Utterance {
  std::string id;
  Matrix features;
  std::string transcript;
  int emotion = 0;
  SegmentList segments;  // empty when unknown

  Index frames() const { return features.rows(); }
};

std::vector<Utterance> load_dataset(const std::string& manifest_path, const EmotionSet& emotions);
// Writes <dir>/manifest.jsonl and <dir>/features/<id>.entf.
void write_dataset(const std::string& dir, std::span<const Utterance> utterances,
                   const EmotionSet& emotions);

// Gaps between segments are filled with `neutral` so the result tiles
// [0, frames).
std::vector<FrameRegion> regions_from_segments(const SegmentList& segments, Index frames, int neutral);

// Region supervision uses the segments when present, otherwise one region
// spanning the utterance with its utterance label.
Example to_example(const Utterance& utt, const Vocabulary& vocab, int neutral);

struct SyntheticTaskConfig {
  std::string vocabulary = "abcdefg ";  // must contain a space
  Index emotion_count = 5;
  int neutral_index = 0;
  Index frames_per_token = 4;
  Index feature_dim = 16;
  double noise_stddev = 0.1;
  double region_fraction_min = 0.4;
  double region_fraction_max = 0.7;
  double neutral_fraction = 0.2;  // share of utterances with no emotional region
  Index min_words = 1;
  Index max_words = 3;
  Index min_word_length = 1;
  Index max_word_length = 3;
  double basis_scale = 1.0;
  std::uint64_t seed = 0;

  Index vocab_size() const { return static_cast<Index>(vocabulary.size()); }
  void validate() const;
};

// The first vocab_size-1 lowercase letters followed by a space.
std::string synthetic_vocabulary(Index vocab_size);

struct SyntheticBasis {
  Matrix token_basis;      // V x D, row id-1 renders token id
  Matrix emotion_offsets;  // K x D
};

// Scaled unit vectors on distinct, seed-permuted axes, so token and emotion
// directions are mutually orthogonal.
SyntheticBasis synthetic_basis(const SyntheticTaskConfig& config);

// Each token is rendered as frames_per_token frames of token basis + the
// frame's emotion offset + N(0, σ²) noise. Emotional utterances carry one
// contiguous region of a non-neutral emotion; the rest is neutral. Words
// never repeat a character back to back, so token boundaries stay visible.
std::vector<Utterance> synth_generate(const SyntheticTaskConfig& config, std::size_t n_utterances,
                                      const EmotionSet& emotions);

// Concatenates a neutral utterance with an emotional one; the emotional
// part is labelled with the emotional utterance's label throughout.
Utterance mix_segments(const Utterance& neutral, const Utterance& emotional, int neutral_index);

// `count` mixes of randomly paired neutral and emotional utterances.
std::vector<Utterance> build_mixed_set(std::span<const Utterance> pool, int neutral_index, std::size_t count,
                                       Rng& rng);

}  // namespace ent
