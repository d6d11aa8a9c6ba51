// ent: synthetic data generation, training, evaluation and gradient checks
// for emotion neural transducers.
//
//   ent synth --out data
//   ent train --out runs/ent model.variant=FENT
//   ent eval --checkpoint runs/ent/last.ckpt --out runs/ent/eval
//   ent gradcheck

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>

#include "ent/experiment.hpp"
#include "ent/gradcheck_suite.hpp"
#include "ent/run_config.hpp"

namespace fs = std::filesystem;

namespace {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("ENT_LOG_LEVEL");
  if (env == nullptr) return LogLevel::Info;
  const std::string v(env);
  if (v == "error") return LogLevel::Error;
  if (v == "debug") return LogLevel::Debug;
  if (v == "info" || v.empty()) return LogLevel::Info;
  throw ent::ArgumentError("ENT_LOG_LEVEL must be one of error, info, debug (got '" + v + "')");
}

void log(LogLevel level, const std::string& message) {
  static const LogLevel threshold = log_level();
  if (level <= threshold) std::cerr << "[ent] " << message << "\n";
}

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  bool force = false;
  std::vector<std::string> overrides;

  ent::RunConfig resolve() const { return ent::load_run_config(config, overrides, seed); }
};

void add_common(CLI::App* cmd, CommonOptions& opts, const std::string& default_out) {
  opts.out = default_out;
  cmd->add_option("--config", opts.config, "JSON config file layered over the defaults");
  cmd->add_option("--seed", opts.seed, "seed (overrides the config)");
  cmd->add_option("--out", opts.out, "output directory")->capture_default_str();
  cmd->add_option("--checkpoint", opts.checkpoint, "checkpoint to load");
  cmd->add_flag("--force", opts.force, "overwrite existing outputs");
  cmd->add_option("overrides", opts.overrides, "dotted-key overrides, e.g. model.hidden_dim=32");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// --- synth ------------------------------------------------------------------

int cmd_synth(const CommonOptions& opts) {
  const ent::RunConfig rc = opts.resolve();
  const fs::path out(opts.out);
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!opts.force) throw ent::ArgumentError("output directory " + out.string() + " exists (use --force)");
    fs::remove_all(out / "train");
    fs::remove_all(out / "eval");
  }
  const std::size_t n_train = rc.synth.train_utterances;
  const std::size_t n_eval = rc.synth.eval_utterances;
  if (n_train == 0 || n_eval == 0) throw ent::ArgumentError("synth: utterance counts must be positive");

  const std::vector<ent::Utterance> all = ent::synth_generate(rc.synth.task, n_train + n_eval, rc.emotions);
  const std::span<const ent::Utterance> train(all.data(), n_train);
  const std::span<const ent::Utterance> eval(all.data() + n_train, n_eval);
  ent::write_dataset((out / "train").string(), train, rc.emotions);
  ent::write_dataset((out / "eval").string(), eval, rc.emotions);
  write_text(out / "config.json", rc.tree.dump(2) + "\n");

  for (const auto& [name, split] : {std::pair{"train", train}, std::pair{"eval", eval}}) {
    std::map<std::string, int> per_emotion;
    ent::Index frames = 0;
    for (const ent::Utterance& u : split) {
      ++per_emotion[rc.emotions.name(u.emotion)];
      frames += u.frames();
    }
    std::cout << name << ": " << split.size() << " utterances, " << frames << " frames, feature dim "
              << rc.synth.task.feature_dim << ", emotions";
    for (const auto& [emotion, count] : per_emotion) std::cout << " " << emotion << "=" << count;
    std::cout << "\n";
  }
  std::cout << "wrote " << (out / "train" / "manifest.jsonl").string() << " and "
            << (out / "eval" / "manifest.jsonl").string() << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

int cmd_train(const CommonOptions& opts) {
  const ent::RunConfig rc = opts.resolve();
  const fs::path out(opts.out);
  const fs::path log_path = out / "train_log.jsonl";
  if (fs::exists(log_path) && !opts.force && opts.checkpoint.empty()) {
    throw ent::ArgumentError(out.string() + " already holds a run (use --force or --checkpoint to resume)");
  }
  fs::create_directories(out);

  const std::vector<ent::Utterance> utterances = ent::load_dataset(rc.train_manifest, rc.emotions);
  log(LogLevel::Info, "loaded " + std::to_string(utterances.size()) + " training utterances from " +
                          rc.train_manifest);
  const std::uint64_t mix_seed = rc.seed ^ 0x6d69786d69786d69ULL;
  const std::vector<ent::Example> examples =
      ent::training_examples(utterances, rc.vocab, rc.emotions.neutral(), rc.mix_count, mix_seed);
  if (rc.mix_count > 0) {
    log(LogLevel::Info, "added " + std::to_string(rc.mix_count) + " mixed utterances; originals use utterance labels");
  }

  std::optional<ent::EmotionTransducer> model;
  ent::AdamState adam;
  if (!opts.checkpoint.empty()) {
    ent::Checkpoint ckpt = ent::load_checkpoint(opts.checkpoint, rc.model.variant);
    if (ent::to_canonical_text(ckpt.model.config()) != ent::to_canonical_text(rc.model)) {
      throw ent::ArgumentError("checkpoint " + opts.checkpoint + " was trained with a different model config");
    }
    model.emplace(std::move(ckpt.model));
    adam = ckpt.optimizer ? std::move(*ckpt.optimizer)
                          : ent::AdamState::for_parameters(model->parameters(), rc.model.optimizer);
    log(LogLevel::Info, "resuming from " + opts.checkpoint + " at step " + std::to_string(adam.step));
  } else {
    model.emplace(rc.model);
    adam = ent::AdamState::for_parameters(model->parameters(), rc.model.optimizer);
    std::ofstream(log_path, std::ios::trunc);
  }
  write_text(out / "config.json", rc.tree.dump(2) + "\n");

  std::ofstream log_file(log_path, std::ios::app);
  double best = std::numeric_limits<double>::infinity();
  const ent::EpochCallback on_epoch = [&](const ent::EpochLog& epoch) {
    const std::string line = ent::epoch_log_to_text(epoch);
    log_file << line << "\n";
    log_file.flush();
    log(LogLevel::Debug, line);
    log(LogLevel::Info, "epoch " + std::to_string(epoch.epoch) + " step " + std::to_string(epoch.step) +
                            " loss " + std::to_string(epoch.mean.total));
    ent::save_checkpoint((out / "last.ckpt").string(), *model, &adam);
    if (epoch.mean.total < best) {
      best = epoch.mean.total;
      ent::save_checkpoint((out / "best.ckpt").string(), *model, &adam);
    }
  };
  try {
    ent::train(*model, adam, examples, rc.train, on_epoch);
  } catch (const ent::NumericError& e) {
    throw ent::NumericError(std::string(e.what()) + " (optimizer step " + std::to_string(adam.step + 1) + ")");
  }
  if (!fs::exists(out / "last.ckpt")) ent::save_checkpoint((out / "last.ckpt").string(), *model, &adam);
  std::cout << "trained to step " << adam.step << "; checkpoints in " << out.string() << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------

int cmd_eval(const CommonOptions& opts) {
  if (opts.checkpoint.empty()) throw ent::ArgumentError("eval needs --checkpoint");
  const ent::RunConfig rc = opts.resolve();
  const ent::Checkpoint ckpt = ent::load_checkpoint(opts.checkpoint, rc.model.variant);
  const std::vector<ent::Utterance> utterances = ent::load_dataset(rc.eval_manifest, rc.emotions);
  log(LogLevel::Info, "evaluating " + std::to_string(utterances.size()) + " utterances from " + rc.eval_manifest);

  const ent::EvalOutput result = ent::evaluate(ckpt.model, utterances, rc.vocab, rc.emotions, rc.eval);
  const fs::path out(opts.out);
  fs::create_directories(out);
  const std::string report = result.report.to_text();
  write_text(out / "report.json", report + "\n");
  std::ofstream hyps(out / "hypotheses.jsonl");
  for (const ent::Hypothesis& h : result.hypotheses) hyps << ent::hypothesis_to_text(h, rc.emotions) << "\n";

  const ent::EderBreakdown baseline = ent::all_neutral_eder(utterances, rc.emotions.neutral());
  log(LogLevel::Info, "all-neutral baseline EDER " + std::to_string(baseline.eder));
  std::cout << report << "\n";
  return 0;
}

// --- gradcheck --------------------------------------------------------------

int cmd_gradcheck(const CommonOptions& opts, bool inject_bug) {
  const ent::RunConfig rc = opts.resolve();
  const std::vector<ent::GradcheckRow> rows = ent::run_gradcheck_suite(rc.gradcheck, rc.seed, inject_bug);
  std::cout << ent::format_gradcheck_table(rows);
  double worst = 0.0;
  for (const ent::GradcheckRow& r : rows) worst = std::max(worst, r.result.max_rel_error);
  const bool ok = ent::all_passed(rows);
  std::cout << "worst relative error " << worst << " (tolerance " << rc.gradcheck.tolerance << "): "
            << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion neural transducer toolkit"};
  app.require_subcommand(1);

  CommonOptions synth_opts, train_opts, eval_opts, grad_opts;
  bool inject_bug = false;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic train/eval dataset");
  add_common(synth, synth_opts, "data");
  CLI::App* train = app.add_subcommand("train", "train a model from the train manifest");
  add_common(train, train_opts, "runs/train");
  CLI::App* eval = app.add_subcommand("eval", "decode and score the eval manifest");
  add_common(eval, eval_opts, "runs/eval");
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(grad, grad_opts, ".");
  grad->add_flag("--inject-bug", inject_bug, "corrupt one analytic gradient (checks the checker)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    log_level();
    if (synth->parsed()) return cmd_synth(synth_opts);
    if (train->parsed()) return cmd_train(train_opts);
    if (eval->parsed()) return cmd_eval(eval_opts);
    if (grad->parsed()) return cmd_gradcheck(grad_opts, inject_bug);
  } catch (const ent::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ent::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const ent::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
