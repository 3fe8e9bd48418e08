#include "bijou/probe.hpp"

#include "bijou/errors.hpp"
#include "bijou/ops.hpp"

namespace bijou {

namespace {

struct Features {
  Tensor x;  // [N × d]
  std::vector<std::size_t> y;
};

Features collect(const EncoderBundle& bundle, const ProbeTask& task, const std::vector<Example>& inputs,
                 const std::vector<std::vector<int>>& labels) {
  const std::size_t d = bundle.width();
  std::vector<double> rows;
  Features f;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto out = bundle.encode(inputs[i]).output;
    const std::size_t T = out.dim(0);
    const auto data = out.data();
    if (task.kind == ProbeKind::token) {
      if (labels[i].size() != T) {
        throw DimensionError("probe task '" + task.name + "': " + std::to_string(labels[i].size()) +
                             " labels for " + std::to_string(T) + " frames");
      }
      rows.insert(rows.end(), data.begin(), data.end());
      for (int l : labels[i]) f.y.push_back(static_cast<std::size_t>(l));
    } else {
      std::vector<double> mean(d, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += data[t * d + j];
      }
      for (auto& m : mean) m /= static_cast<double>(T);
      rows.insert(rows.end(), mean.begin(), mean.end());
      f.y.push_back(static_cast<std::size_t>(labels[i][0]));
    }
  }
  f.x = Tensor::from({f.y.size(), d}, std::move(rows));
  return f;
}

double accuracy(const Tensor& logits, const std::vector<std::size_t>& y) {
  const std::size_t C = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (logits.at(i, c) > logits.at(i, best)) best = c;
    }
    hits += best == y[i];
  }
  return y.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(y.size());
}

}  // namespace

void ProbeTask::validate() const {
  if (num_labels < 1) throw ConfigError("probe task needs at least one label");
  if (train_inputs.empty() || eval_inputs.empty()) throw ConfigError("probe task needs train and eval inputs");
  if (train_inputs.size() != train_labels.size() || eval_inputs.size() != eval_labels.size()) {
    throw DimensionError("probe task inputs and labels differ in count");
  }
  for (const auto* set : {&train_labels, &eval_labels}) {
    for (const auto& ls : *set) {
      if (kind == ProbeKind::sequence && ls.size() != 1) {
        throw DimensionError("sequence probe examples carry exactly one label");
      }
      for (int l : ls) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_labels) {
          throw ConfigError("probe label " + std::to_string(l) + " out of range");
        }
      }
    }
  }
}

ProbeResult fit_probe(const EncoderBundle& bundle, const ProbeTask& task, const ProbeOptions& opt, Rng& rng) {
  task.validate();
  const std::size_t d = bundle.width();
  const std::size_t C = task.num_labels;

  ParameterSet head;
  if (opt.init) {
    if (opt.init->weight.shape() != Shape{d, C} || opt.init->bias.shape() != Shape{C}) {
      throw ConfigError("probe head of shape " + shape_str(opt.init->weight.shape()) + " does not fit width " +
                        std::to_string(d) + " with " + std::to_string(C) + " labels");
    }
    head.add("weight", Tensor::from({d, C}, {opt.init->weight.data().begin(), opt.init->weight.data().end()}));
    head.add("bias", Tensor::from({C}, {opt.init->bias.data().begin(), opt.init->bias.data().end()}));
  } else {
    head.add("weight", init::normal({d, C}, 0.01, rng));
    head.add("bias", init::zeros({C}));
  }

  const auto train = collect(bundle, task, task.train_inputs, task.train_labels);
  const auto eval = collect(bundle, task, task.eval_inputs, task.eval_labels);

  OptimConfig oc;
  oc.lr_min = opt.lr;
  oc.lr_max = opt.lr;
  oc.warmup_steps = 0;
  oc.max_steps = std::max<std::size_t>(opt.epochs, 1);
  oc.beta2 = 0.999;
  oc.eps = 1e-8;
  oc.weight_decay = 0.0;
  Adam adam(head, oc);
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    head.zero_grad();
    const auto logits = ops::linear(train.x, head.get("weight"), head.get("bias"));
    ops::cross_entropy(logits, train.y).backward();
    adam.step(head, e + 1, opt.lr);
  }

  ProbeResult result;
  {
    NoGradGuard no_grad;
    result.train_accuracy = accuracy(ops::linear(train.x, head.get("weight"), head.get("bias")), train.y);
    result.accuracy = accuracy(ops::linear(eval.x, head.get("weight"), head.get("bias")), eval.y);
  }
  result.head.weight = head.get("weight").detach();
  result.head.bias = head.get("bias").detach();
  return result;
}

}  // namespace bijou
