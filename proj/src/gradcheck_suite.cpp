#include "ent/gradcheck_suite.hpp"

#include <cstdio>
#include <sstream>

#include "ent/emotion_lattice.hpp"
#include "ent/model.hpp"
#include "ent/transducer_lattice.hpp"

namespace ent {

namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Parameter random_parameter(Rng& rng, const std::string& name, Index rows, Index cols) {
  Parameter p(name, rows, cols);
  p.value = random_matrix(rng, rows, cols);
  return p;
}

// Projects an output onto fixed random weights so every output coordinate
// contributes to the scalar being checked.
double project(const Matrix& out, const Matrix& weights) { return (out.array() * weights.array()).sum(); }

class Suite {
 public:
  Suite(const GradcheckOptions& options, std::uint64_t seed, bool inject_bug)
      : options_(options), rng_(seed), inject_bug_(inject_bug) {}

  std::vector<GradcheckRow> run() {
    log_reductions();
    layers();
    transducer();
    lattice_losses();
    models();
    return std::move(rows_);
  }

 private:
  void record(const std::string& name, const LossFunction& loss, const ParameterList& params) {
    zero_grads(params);
    GradcheckRow row;
    row.name = name;
    row.result = grad_check(loss, params, options_.eps);
    row.passed = row.result.max_rel_error <= options_.tolerance;
    rows_.push_back(std::move(row));
  }

  void log_reductions() {
    {
      Parameter x = random_parameter(rng_, "x", 1, 5);
      record("logsumexp", [&](bool with_grad) {
        const double value = logsumexp(x.value);
        if (with_grad) x.grad += (x.value.array() - value).exp().matrix();
        return value;
      }, {&x});
    }
    {
      Parameter x = random_parameter(rng_, "x", 1, 2);
      record("log_add", [&](bool with_grad) {
        const double value = log_add(x.value(0), x.value(1));
        if (with_grad) x.grad += (x.value.array() - value).exp().matrix();
        return value;
      }, {&x});
    }
    {
      Parameter x = random_parameter(rng_, "logits", 3, 4);
      const Matrix w = random_matrix(rng_, 3, 4);
      record("log_softmax_rows", [&](bool with_grad) {
        const Matrix lp = log_softmax_rows(x.value);
        if (with_grad) x.grad += log_softmax_rows_backward(lp, w);
        return project(lp, w);
      }, {&x});
    }
    {
      Parameter x = random_parameter(rng_, "x", 1, 6);
      const Matrix w = random_matrix(rng_, 1, 6);
      record("sigmoid", [&](bool with_grad) {
        double value = 0.0;
        for (Index i = 0; i < x.value.size(); ++i) {
          const double s = sigmoid(x.value(i));
          value += w(i) * s;
          if (with_grad) x.grad(i) += w(i) * s * (1.0 - s);
        }
        return value;
      }, {&x});
    }
  }

  void layers() {
    const Index h = options_.hidden_dim;
    const Index d = options_.feature_dim;
    const Index t = options_.frames;
    {
      Linear layer("linear", d, h);
      layer.init(rng_);
      Parameter x = random_parameter(rng_, "input", t, d);
      const Matrix w = random_matrix(rng_, t, h);
      ParameterList params{&x};
      layer.append_parameters(params);
      record("linear", [&](bool with_grad) {
        if (with_grad) {
          const Matrix before = layer.bias.grad;
          x.grad += layer.backward(x.value, w);
          if (inject_bug_) layer.bias.grad = before + 0.5 * (layer.bias.grad - before);
        }
        return project(layer.forward(x.value), w);
      }, params);
    }
    {
      Embedding emb("embedding", options_.vocab_size + 1, h);
      emb.init(rng_);
      const std::vector<int> ids{0, 2, 1, 2};
      const Matrix w = random_matrix(rng_, static_cast<Index>(ids.size()), h);
      ParameterList params;
      emb.append_parameters(params);
      record("embedding", [&](bool with_grad) {
        if (with_grad) emb.backward(ids, w);
        return project(emb.forward(ids), w);
      }, params);
    }
    {
      AdditiveJoint joint("joint", h, options_.emotion_count);
      joint.init(rng_);
      Parameter enc = random_parameter(rng_, "h", t, h);
      Parameter pred = random_parameter(rng_, "g", options_.targets + 1, h);
      const Matrix w = random_matrix(rng_, t * (options_.targets + 1), options_.emotion_count);
      ParameterList params{&enc, &pred};
      joint.append_parameters(params);
      record("additive_joint", [&](bool with_grad) {
        if (with_grad) joint.backward(enc.value, pred.value, w, enc.grad, pred.grad);
        return project(joint.forward(enc.value, pred.value), w);
      }, params);
    }
    {
      Lstm lstm("lstm", d, h);
      lstm.init(rng_);
      Parameter x = random_parameter(rng_, "input", t, d);
      const Matrix w = random_matrix(rng_, t, h);
      ParameterList params{&x};
      lstm.append_parameters(params);
      record("lstm", [&](bool with_grad) {
        std::vector<LstmStepCache> caches;
        const Matrix out = lstm.forward_sequence(x.value, &caches);
        if (with_grad) x.grad += lstm.backward_sequence(caches, w);
        return project(out, w);
      }, params);
    }
  }

  void transducer() {
    const Index t = options_.frames;
    const Index u = options_.targets;
    Parameter blank = random_parameter(rng_, "blank", t, u + 1);
    Parameter token = random_parameter(rng_, "token", t, u);
    record("transducer_loss", [&](bool with_grad) {
      VocabLogProbLattice lattice{blank.value, token.value};
      const TransducerLoss result = transducer_loss(lattice);
      if (with_grad) {
        blank.grad += result.posteriors.grad_blank;
        token.grad += result.posteriors.grad_token;
      }
      return result.loss;
    }, {&blank, &token});
  }

  void lattice_losses() {
    const Index t = options_.frames;
    const Index s = options_.targets + 1;
    const Index k = options_.emotion_count;
    const int neutral = 0;
    const int target = static_cast<int>(k - 1);
    std::vector<FrameRegion> regions;
    if (t > 1) {
      regions = {{0, 1, neutral}, {1, t, target}};
    } else {
      regions = {{0, 1, target}};
    }
    for (LatticeLossKind kind : {LatticeLossKind::MaxPool, LatticeLossKind::Temporal, LatticeLossKind::Token,
                                 LatticeLossKind::Full, LatticeLossKind::Region}) {
      Parameter logits = random_parameter(rng_, "logits", t * s, k);
      record("lattice_" + to_string(kind), [&](bool with_grad) {
        const EmotionLattice lattice = EmotionLattice::from_logits(t, s, logits.value);
        const EmotionLossResult result = emotion_lattice_loss(kind, lattice, target, neutral, regions);
        if (with_grad) logits.grad += emotion_logits_grad(lattice, result.grad_log_probs);
        return result.loss;
      }, {&logits});
    }
  }

  void models() {
    for (Variant variant : {Variant::Ent, Variant::Fent}) {
      for (LatticeLossKind kind : {LatticeLossKind::MaxPool, LatticeLossKind::Region}) {
        ModelConfig config;
        config.variant = variant;
        config.hidden_dim = options_.hidden_dim;
        config.feature_dim = options_.feature_dim;
        config.vocab_size = options_.vocab_size;
        config.emotion_count = options_.emotion_count;
        config.neutral_index = 0;
        config.lattice_loss = kind;
        config.lambda_utt = 0.7;
        config.lambda_lat = 0.3;
        config.seed = rng_.next_u64();
        EmotionTransducer model(config);
        const Matrix features = random_matrix(rng_, options_.frames, options_.feature_dim);
        std::vector<int> tokens;
        for (Index i = 0; i < options_.targets; ++i) {
          tokens.push_back(1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(options_.vocab_size))));
        }
        const int target = static_cast<int>(options_.emotion_count - 1);
        const std::vector<FrameRegion> regions{{0, options_.frames, target}};
        record(to_string(variant) + "_total_loss_" + to_string(kind), [&](bool with_grad) {
          const ForwardOutputs out = model.forward(features, tokens);
          const LossEvaluation eval = total_loss(config, out, target, regions);
          if (with_grad) model.backward(out, eval.grads);
          return eval.terms.total;
        }, model.parameters());
      }
    }
  }

  GradcheckOptions options_;
  Rng rng_;
  bool inject_bug_;
  std::vector<GradcheckRow> rows_;
};

}  // namespace

std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckOptions& options, std::uint64_t seed,
                                              bool inject_bug) {
  if (options.hidden_dim < 1 || options.feature_dim < 1 || options.vocab_size < 1 || options.frames < 1 ||
      options.targets < 0 || options.emotion_count < 2) {
    throw ArgumentError("gradcheck: dimensions must be positive and emotion_count >= 2");
  }
  if (!(options.eps > 0.0) || !(options.tolerance > 0.0)) {
    throw ArgumentError("gradcheck: eps and tolerance must be positive");
  }
  return Suite(options, seed, inject_bug).run();
}

bool all_passed(const std::vector<GradcheckRow>& rows) {
  for (const GradcheckRow& r : rows) {
    if (!r.passed) return false;
  }
  return !rows.empty();
}

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-32s %8s %12s  %-24s %s\n", "check", "coords", "max_rel_err", "worst",
                "status");
  out << line;
  for (const GradcheckRow& r : rows) {
    const std::string worst = r.result.worst_parameter.empty()
                                  ? "-"
                                  : r.result.worst_parameter + "[" + std::to_string(r.result.worst_index) + "]";
    std::snprintf(line, sizeof line, "%-32s %8zu %12.3e  %-24s %s\n", r.name.c_str(), r.result.coordinates,
                  r.result.max_rel_error, worst.c_str(), r.passed ? "ok" : "FAIL");
    out << line;
  }
  return out.str();
}

}  // namespace ent
