#include "ent/data.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ent {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

// --- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary(std::string characters) : chars_(std::move(characters)) {
  if (chars_.empty()) throw ArgumentError("vocabulary is empty");
  std::set<char> seen;
  for (char c : chars_) {
    if (!seen.insert(c).second) throw ArgumentError(std::string("duplicate vocabulary character '") + c + "'");
  }
}

std::optional<int> Vocabulary::space_id() const {
  const int i = id(' ');
  return i < 0 ? std::nullopt : std::optional<int>(i);
}

int Vocabulary::id(char c) const {
  const auto pos = chars_.find(c);
  return pos == std::string::npos ? -1 : static_cast<int>(pos) + 1;
}

char Vocabulary::symbol(int id) const {
  if (id < 1 || id > size()) throw ArgumentError("token id " + std::to_string(id) + " out of vocabulary");
  return chars_[static_cast<std::size_t>(id - 1)];
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(symbol(i));
  return out;
}

std::vector<int> char_tokenize(std::string_view transcript, const Vocabulary& vocab,
                               std::string_view record_id) {
  std::vector<int> ids;
  ids.reserve(transcript.size());
  for (char c : transcript) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    const int id = space ? vocab.space_id().value_or(-1) : vocab.id(c);
    if (id < 0) {
      std::string msg = "out-of-vocabulary character '";
      msg += c;
      msg += "'";
      if (!record_id.empty()) msg += " in record " + std::string(record_id);
      throw ArgumentError(msg);
    }
    ids.push_back(id);
  }
  return ids;
}

// --- EmotionSet -------------------------------------------------------------

EmotionSet::EmotionSet(std::vector<std::string> names, const std::string& neutral)
    : names_(std::move(names)) {
  if (names_.size() < 2) throw ArgumentError("at least two emotion classes are required");
  std::set<std::string> seen(names_.begin(), names_.end());
  if (seen.size() != names_.size()) throw ArgumentError("duplicate emotion name");
  neutral_ = id(neutral);
}

const std::string& EmotionSet::name(int id) const {
  if (id < 0 || id >= size()) throw ArgumentError("emotion id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

int EmotionSet::id(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ArgumentError("unknown emotion label '" + name + "'");
  return static_cast<int>(it - names_.begin());
}

// --- Feature files ----------------------------------------------------------

namespace {

constexpr char kFeatureMagic[4] = {'E', 'N', 'T', 'F'};
constexpr std::size_t kFeatureHeaderBytes = 16;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FeatureHeader parse_header(const std::string& bytes, const std::string& path) {
  if (bytes.size() < kFeatureHeaderBytes) throw FormatError(path + ": truncated feature header");
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) throw FormatError(path + ": bad feature file magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFeatureFileVersion) {
    throw FormatError(path + ": unsupported feature file version " + std::to_string(version));
  }
  return {get_u32(bytes.data() + 8), get_u32(bytes.data() + 12)};
}

}  // namespace

void write_features(const std::string& path, const Matrix& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot open " + path + " for writing");
  out.write(kFeatureMagic, 4);
  put_u32(out, kFeatureFileVersion);
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  std::vector<float> row(static_cast<std::size_t>(features.cols()));
  for (Index t = 0; t < features.rows(); ++t) {
    for (Index d = 0; d < features.cols(); ++d) row[static_cast<std::size_t>(d)] = static_cast<float>(features(t, d));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw ArgumentError("failed writing " + path);
}

FeatureHeader read_feature_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path);
  std::string head(kFeatureHeaderBytes, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(head, path);
}

Matrix read_features(const std::string& path) {
  const std::string bytes = slurp(path);
  const FeatureHeader h = parse_header(bytes, path);
  const std::size_t expected = static_cast<std::size_t>(h.frames) * h.dim * sizeof(float);
  if (bytes.size() - kFeatureHeaderBytes != expected) {
    throw FormatError(path + ": payload is " + std::to_string(bytes.size() - kFeatureHeaderBytes) +
                      " bytes, header implies " + std::to_string(expected));
  }
  if (h.frames == 0) throw ArgumentError(path + ": feature file has zero frames");
  if (h.dim == 0) throw FormatError(path + ": feature dimension is zero");
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> raw(h.frames, h.dim);
  std::memcpy(raw.data(), bytes.data() + kFeatureHeaderBytes, expected);
  return raw.cast<double>();
}

// --- Manifests --------------------------------------------------------------

namespace {

json record_to_json(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["features"] = r.features;
  j["transcript"] = r.transcript;
  j["emotion"] = r.emotion;
  if (r.segments) {
    nlohmann::ordered_json segs = nlohmann::ordered_json::array();
    for (const LabeledSegment& s : *r.segments) segs.push_back({s.start_frame, s.end_frame, s.label});
    j["segments"] = segs;
  }
  j["n_frames"] = r.n_frames;
  return j;
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).string();
}

}  // namespace

std::vector<ManifestRecord> load_manifest(const std::string& path, const EmotionSet* emotions,
                                          bool check_features) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestRecord> records;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    ManifestRecord r;
    try {
      const json j = json::parse(line);
      r.id = j.at("id").get<std::string>();
      r.features = j.at("features").get<std::string>();
      r.transcript = j.at("transcript").get<std::string>();
      r.emotion = j.at("emotion").get<std::string>();
      r.n_frames = j.at("n_frames").get<Index>();
      if (j.contains("segments") && !j.at("segments").is_null()) {
        std::vector<LabeledSegment> segs;
        for (const json& s : j.at("segments")) {
          if (!s.is_array() || s.size() != 3) throw FormatError(where + ": segments must be [start, end, label]");
          segs.push_back({s.at(0).get<Index>(), s.at(1).get<Index>(), s.at(2).get<std::string>()});
        }
        r.segments = std::move(segs);
      }
    } catch (const json::exception& e) {
      throw FormatError(where + ": malformed record: " + e.what());
    }
    const std::string rec = where + " (record " + r.id + ")";
    if (!ids.insert(r.id).second) throw FormatError(rec + ": duplicate id");
    if (r.n_frames < 1) throw ArgumentError(rec + ": n_frames must be positive");
    if (emotions != nullptr) emotions->id(r.emotion);
    if (r.segments) {
      Index prev_end = 0;
      for (const LabeledSegment& s : *r.segments) {
        if (s.start_frame < 0 || s.end_frame > r.n_frames || s.start_frame >= s.end_frame) {
          throw ArgumentError(rec + ": segment [" + std::to_string(s.start_frame) + ", " +
                              std::to_string(s.end_frame) + ") outside [0, " + std::to_string(r.n_frames) + ")");
        }
        if (s.start_frame < prev_end) throw ArgumentError(rec + ": segments overlap or are unsorted");
        prev_end = s.end_frame;
        if (emotions != nullptr) emotions->id(s.label);
      }
    }
    r.features = resolve(base, r.features);
    if (check_features) {
      if (!fs::exists(r.features)) throw ArgumentError(rec + ": missing feature file " + r.features);
      const FeatureHeader h = read_feature_header(r.features);
      if (h.frames != static_cast<std::uint32_t>(r.n_frames)) {
        throw FormatError(rec + ": n_frames " + std::to_string(r.n_frames) + " but feature file has " +
                          std::to_string(h.frames));
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const std::string& path, std::span<const ManifestRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot open " + path + " for writing");
  const fs::path base = fs::path(path).parent_path();
  for (const ManifestRecord& r : records) {
    ManifestRecord rel = r;
    const fs::path p(r.features);
    if (p.is_absolute() && !base.empty()) rel.features = fs::relative(p, fs::absolute(base)).string();
    out << record_to_json(rel).dump() << '\n';
  }
}

std::vector<Utterance> load_dataset(const std::string& manifest_path, const EmotionSet& emotions) {
  std::vector<Utterance> out;
  for (const ManifestRecord& r : load_manifest(manifest_path, &emotions, true)) {
    Utterance u;
    u.id = r.id;
    u.features = read_features(r.features);
    u.transcript = r.transcript;
    u.emotion = emotions.id(r.emotion);
    if (r.segments) {
      for (const LabeledSegment& s : *r.segments) u.segments.push_back({s.start_frame, s.end_frame, emotions.id(s.label)});
    }
    out.push_back(std::move(u));
  }
  return out;
}

void write_dataset(const std::string& dir, std::span<const Utterance> utterances, const EmotionSet& emotions) {
  const fs::path root(dir);
  fs::create_directories(root / "features");
  std::vector<ManifestRecord> records;
  for (const Utterance& u : utterances) {
    ManifestRecord r;
    r.id = u.id;
    r.features = "features/" + u.id + ".entf";
    write_features((root / r.features).string(), u.features);
    r.transcript = u.transcript;
    r.emotion = emotions.name(u.emotion);
    r.n_frames = u.frames();
    if (!u.segments.empty()) {
      std::vector<LabeledSegment> segs;
      for (const EmotionSegment& s : u.segments) segs.push_back({s.start_frame, s.end_frame, emotions.name(s.label)});
      r.segments = std::move(segs);
    }
    records.push_back(std::move(r));
  }
  write_manifest((root / "manifest.jsonl").string(), records);
}

std::vector<FrameRegion> regions_from_segments(const SegmentList& segments, Index frames, int neutral) {
  const std::vector<int> labels = segments_to_frames(segments, frames, neutral);
  std::vector<FrameRegion> regions;
  for (Index t = 0; t < frames; ++t) {
    const int label = labels[static_cast<std::size_t>(t)];
    if (regions.empty() || regions.back().label != label) {
      regions.push_back({t, t + 1, label});
    } else {
      regions.back().end = t + 1;
    }
  }
  return regions;
}

Example to_example(const Utterance& utt, const Vocabulary& vocab, int neutral) {
  Example ex;
  ex.features = utt.features;
  ex.tokens = char_tokenize(utt.transcript, vocab, utt.id);
  ex.emotion = utt.emotion;
  ex.regions = utt.segments.empty() ? std::vector<FrameRegion>{{0, utt.frames(), utt.emotion}}
                                    : regions_from_segments(utt.segments, utt.frames(), neutral);
  return ex;
}

// --- Synthetic task ---------------------------------------------------------

void SyntheticTaskConfig::validate() const {
  const Vocabulary vocab(vocabulary);
  if (!vocab.space_id()) throw ArgumentError("synthetic vocabulary must contain a space");
  if (vocab.size() < 2) throw ArgumentError("synthetic vocabulary needs at least one letter");
  if (emotion_count < 2) throw ArgumentError("synth.emotion_count must be >= 2");
  if (neutral_index < 0 || neutral_index >= emotion_count) throw ArgumentError("synth neutral index out of range");
  if (frames_per_token < 1) throw ArgumentError("synth.frames_per_token must be >= 1");
  if (noise_stddev < 0) throw ArgumentError("synth.noise_stddev must be >= 0");
  if (feature_dim < vocab_size() + emotion_count) {
    throw ArgumentError("synth.feature_dim must be at least vocab_size + emotion_count for orthogonal bases");
  }
  if (!(region_fraction_min > 0 && region_fraction_min <= region_fraction_max && region_fraction_max <= 1)) {
    throw ArgumentError("synth region fractions must satisfy 0 < min <= max <= 1");
  }
  if (neutral_fraction < 0 || neutral_fraction > 1) throw ArgumentError("synth.neutral_fraction must be in [0, 1]");
  if (min_words < 1 || max_words < min_words) throw ArgumentError("synth word counts invalid");
  if (min_word_length < 1 || max_word_length < min_word_length) throw ArgumentError("synth word lengths invalid");
  if (max_word_length > 1 && vocab_size() < 3) throw ArgumentError("words longer than one letter need two letters");
}

std::string synthetic_vocabulary(Index vocab_size) {
  std::string chars;
  for (Index i = 0; i + 1 < vocab_size; ++i) chars.push_back(static_cast<char>('a' + i));
  chars.push_back(' ');
  return chars;
}

SyntheticBasis synthetic_basis(const SyntheticTaskConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<Index> axes(static_cast<std::size_t>(config.feature_dim));
  std::iota(axes.begin(), axes.end(), Index{0});
  rng.shuffle(axes);
  SyntheticBasis basis{Matrix::Zero(config.vocab_size(), config.feature_dim),
                       Matrix::Zero(config.emotion_count, config.feature_dim)};
  std::size_t next = 0;
  for (Index v = 0; v < config.vocab_size(); ++v) basis.token_basis(v, axes[next++]) = config.basis_scale;
  for (Index k = 0; k < config.emotion_count; ++k) basis.emotion_offsets(k, axes[next++]) = config.basis_scale;
  return basis;
}

namespace {

Index uniform_int(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

std::vector<Utterance> synth_generate(const SyntheticTaskConfig& config, std::size_t n_utterances,
                                      const EmotionSet& emotions) {
  config.validate();
  if (emotions.size() != config.emotion_count || emotions.neutral() != config.neutral_index) {
    throw ArgumentError("synthetic config and emotion set disagree on classes");
  }
  const SyntheticBasis basis = synthetic_basis(config);
  const Vocabulary vocab(config.vocabulary);
  std::string letters;
  for (char ch : config.vocabulary) {
    if (ch != ' ') letters.push_back(ch);
  }
  const int letter_count = static_cast<int>(letters.size());
  // Separate stream from the basis draw so the basis depends only on the seed.
  Rng rng(config.seed ^ 0x5eed5eed5eed5eedULL);

  std::vector<Utterance> out;
  out.reserve(n_utterances);
  for (std::size_t n = 0; n < n_utterances; ++n) {
    Utterance u;
    std::ostringstream id;
    id << "utt" << std::setw(5) << std::setfill('0') << n;
    u.id = id.str();

    const Index words = uniform_int(rng, config.min_words, config.max_words);
    for (Index w = 0; w < words; ++w) {
      if (w > 0) u.transcript.push_back(' ');
      const Index len = uniform_int(rng, config.min_word_length, config.max_word_length);
      int prev = -1;
      for (Index i = 0; i < len; ++i) {
        int letter = static_cast<int>(rng.below(static_cast<std::uint64_t>(letter_count)));
        if (letter == prev) {
          letter = (letter + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(letter_count - 1)))) % letter_count;
        }
        u.transcript.push_back(letters[static_cast<std::size_t>(letter)]);
        prev = letter;
      }
    }
    const std::vector<int> tokens = char_tokenize(u.transcript, vocab);
    const Index frames = static_cast<Index>(tokens.size()) * config.frames_per_token;

    const bool neutral_only = rng.uniform() < config.neutral_fraction;
    std::vector<int> frame_labels(static_cast<std::size_t>(frames), config.neutral_index);
    if (neutral_only) {
      u.emotion = config.neutral_index;
      u.segments.push_back({0, frames, config.neutral_index});
    } else {
      int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.emotion_count - 1)));
      if (label >= config.neutral_index) ++label;
      const double frac = rng.uniform(config.region_fraction_min, config.region_fraction_max);
      const Index len = std::clamp<Index>(static_cast<Index>(std::lround(frac * static_cast<double>(frames))), 1, frames);
      const Index start = uniform_int(rng, 0, frames - len);
      u.emotion = label;
      if (start > 0) u.segments.push_back({0, start, config.neutral_index});
      u.segments.push_back({start, start + len, label});
      if (start + len < frames) u.segments.push_back({start + len, frames, config.neutral_index});
      std::fill(frame_labels.begin() + start, frame_labels.begin() + start + len, label);
    }

    u.features.resize(frames, config.feature_dim);
    for (Index t = 0; t < frames; ++t) {
      const int token = tokens[static_cast<std::size_t>(t / config.frames_per_token)];
      u.features.row(t) = basis.token_basis.row(token - 1) +
                          basis.emotion_offsets.row(frame_labels[static_cast<std::size_t>(t)]);
      if (config.noise_stddev > 0) {
        for (Index d = 0; d < config.feature_dim; ++d) u.features(t, d) += config.noise_stddev * rng.normal();
      }
    }
    out.push_back(std::move(u));
  }
  return out;
}

Utterance mix_segments(const Utterance& neutral, const Utterance& emotional, int neutral_index) {
  if (neutral.emotion != neutral_index) throw ArgumentError("mix_segments: first record " + neutral.id + " is not neutral");
  if (neutral.frames() < 1 || emotional.frames() < 1) throw ArgumentError("mix_segments: zero-frame record");
  if (neutral.features.cols() != emotional.features.cols()) {
    throw ArgumentError("mix_segments: feature dims differ (" + std::to_string(neutral.features.cols()) + " vs " +
                        std::to_string(emotional.features.cols()) + ")");
  }
  Utterance out;
  out.id = neutral.id + "+" + emotional.id;
  out.features.resize(neutral.frames() + emotional.frames(), neutral.features.cols());
  out.features << neutral.features, emotional.features;
  out.transcript = neutral.transcript + " " + emotional.transcript;
  out.emotion = emotional.emotion;
  out.segments = {{0, neutral.frames(), neutral_index},
                  {neutral.frames(), neutral.frames() + emotional.frames(), emotional.emotion}};
  return out;
}

std::vector<Utterance> build_mixed_set(std::span<const Utterance> pool, int neutral_index, std::size_t count,
                                       Rng& rng) {
  std::vector<const Utterance*> neutrals, emotionals;
  for (const Utterance& u : pool) (u.emotion == neutral_index ? neutrals : emotionals).push_back(&u);
  if (count > 0 && (neutrals.empty() || emotionals.empty())) {
    throw ArgumentError("mixing needs both neutral and emotional utterances");
  }
  std::vector<Utterance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Utterance& n = *neutrals[rng.below(neutrals.size())];
    const Utterance& e = *emotionals[rng.below(emotionals.size())];
    out.push_back(mix_segments(n, e, neutral_index));
  }
  return out;
}

}  // namespace ent
