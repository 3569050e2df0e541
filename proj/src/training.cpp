#include "lungct/training.hpp"

#include <cmath>
#include <numeric>
#include <span>

#include <fmt/format.h>

#include "lungct/error.hpp"
#include "lungct/rng.hpp"

namespace lungct {

namespace {

constexpr std::uint64_t kShuffleStream = ~std::uint64_t{0};

Matrix to_matrix(const torch::Tensor& t) {
  const auto d = t.detach().to(torch::kDouble).contiguous();
  Matrix m(static_cast<std::size_t>(d.size(0)), static_cast<std::size_t>(d.size(1)));
  std::copy_n(d.data_ptr<double>(), m.values.size(), m.values.begin());
  return m;
}

class FocalLossFunction : public torch::autograd::Function<FocalLossFunction> {
public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& logits,
                               const torch::Tensor& targets, double gamma, std::vector<double> alpha) {
    const auto result = focal_loss_with_grad(to_matrix(logits), to_matrix(targets), FocalLossConfig{gamma, alpha});
    auto grad = torch::from_blob(const_cast<double*>(result.grad.values.data()),
                                 {static_cast<long>(result.grad.rows), static_cast<long>(result.grad.cols)},
                                 torch::kDouble)
                    .to(logits.dtype(), /*non_blocking=*/false, /*copy=*/true);
    ctx->saved_data["grad"] = grad;
    return torch::tensor(result.loss, torch::TensorOptions().dtype(logits.dtype()));
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grad_output) {
    const auto grad = ctx->saved_data["grad"].toTensor();
    return {grad * grad_output[0], torch::Tensor(), torch::Tensor(), torch::Tensor()};
  }
};

std::vector<Tensor299> tensors_for(const LabeledSet& data, std::span<const std::size_t> indices) {
  std::vector<Tensor299> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(to_tensor299(data.images[i]));
  return out;
}

std::vector<ClassLabel> labels_for(const LabeledSet& data, std::span<const std::size_t> indices) {
  std::vector<ClassLabel> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.labels[i]);
  return out;
}

std::int64_t count_correct(const torch::Tensor& logits, const std::vector<ClassLabel>& labels) {
  // argmax picks the first maximum, i.e. the lowest class index on ties.
  const auto pred = logits.argmax(1).contiguous();
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (pred[static_cast<long>(i)].item<std::int64_t>() == static_cast<std::int64_t>(labels[i])) ++correct;
  }
  return correct;
}

struct WeightSnapshot {
  std::vector<torch::Tensor> values;

  static WeightSnapshot take(torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    WeightSnapshot s;
    for (const auto& p : module.parameters()) s.values.push_back(p.detach().clone());
    for (const auto& b : module.buffers()) s.values.push_back(b.detach().clone());
    return s;
  }

  void restore(torch::nn::Module& module) const {
    torch::NoGradGuard no_grad;
    std::size_t i = 0;
    for (auto& p : module.parameters()) p.copy_(values[i++]);
    for (auto& b : module.buffers()) b.copy_(values[i++]);
  }
};

} // namespace

void LabeledSet::add(RawImage gray299, ClassLabel label) {
  images.push_back(std::move(gray299));
  labels.push_back(label);
}

std::vector<std::size_t> LabeledSet::class_counts() const {
  std::vector<std::size_t> counts(kNumClasses, 0);
  for (ClassLabel l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

LabeledSet load_split(const DatasetManifest& manifest, Split split, PreprocessCache* cache) {
  LabeledSet out;
  for (const ImageRecord& r : manifest.in_split(split)) {
    out.add(cache != nullptr ? cache->load_or_prepare(r.path) : prepare_gray299(r.path), r.label);
  }
  if (out.empty()) throw Error(ErrorKind::EmptyDataset, fmt::format("split '{}' is empty", to_string(split)));
  return out;
}

torch::Tensor to_batch(const std::vector<Tensor299>& images) {
  if (images.empty()) throw Error(ErrorKind::EmptyDataset, "cannot batch zero images");
  auto batch = torch::empty({static_cast<long>(images.size()), kTensorChannels, kTensorSide, kTensorSide});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& px = images[i].image().pixels;
    auto hwc = torch::from_blob(const_cast<float*>(px.data()), {kTensorSide, kTensorSide, kTensorChannels},
                                torch::kFloat32);
    batch[static_cast<long>(i)].copy_(hwc.permute({2, 0, 1}));
  }
  return batch;
}

torch::Tensor to_one_hot_batch(const std::vector<ClassLabel>& labels) {
  auto out = torch::zeros({static_cast<long>(labels.size()), kNumClasses});
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<long>(i)][static_cast<long>(labels[i])] = 1.0F;
  return out;
}

torch::Tensor focal_loss_autograd(const torch::Tensor& logits, const torch::Tensor& targets,
                                  const FocalLossConfig& cfg) {
  return FocalLossFunction::apply(logits, targets, cfg.gamma, cfg.alpha);
}

SplitScore score_split(Classifier& model, const LabeledSet& data, const FocalLossConfig& loss_cfg, int batch_size) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "cannot score an empty split");
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  const auto step = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < order.size(); start += step) {
    const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(step, order.size() - start));
    const auto labels = labels_for(data, idx);
    const auto logits = model->logits(to_batch(tensors_for(data, idx)));
    const double loss = focal_loss(to_matrix(torch::softmax(logits.to(torch::kDouble), 1)),
                                   to_matrix(to_one_hot_batch(labels)), loss_cfg);
    loss_sum += loss * static_cast<double>(idx.size());
    correct += count_correct(logits, labels);
  }
  model->train(was_training);
  const auto n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainResult train_model(Classifier& model, const LabeledSet& train, const LabeledSet& val,
                        const AugmentationPolicy& policy, const TrainConfig& cfg, const FocalLossConfig& loss_cfg,
                        const EpochObserver& observer) {
  if (train.empty()) throw Error(ErrorKind::EmptyDataset, "training split is empty");
  if (val.empty()) throw Error(ErrorKind::EmptyDataset, "validation split is empty");
  cfg.validate();
  loss_cfg.validate();
  policy.validate();

  torch::optim::Adam optimizer(model->trainable_parameters(),
                               torch::optim::AdamOptions(cfg.initial_lr).betas({0.9, 0.999}).eps(1e-8));
  PlateauScheduler plateau(cfg, cfg.initial_lr);
  EarlyStopping stopper(cfg);
  TrainResult result;
  WeightSnapshot best = WeightSnapshot::take(*model);
  double lr = cfg.initial_lr;

  std::vector<std::size_t> order(train.size());
  const auto step = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch), kShuffleStream);
    shuffler.shuffle(std::span<std::size_t>(order));

    model->train();
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += step) {
      const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(step, order.size() - start));
      std::vector<Tensor299> images;
      images.reserve(idx.size());
      const auto labels = labels_for(train, idx);
      for (std::size_t i : idx) {
        Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch), i);
        OneHot hot{};
        hot[static_cast<std::size_t>(train.labels[i])] = 1.0F;
        auto [img, kept] = apply_policy(to_tensor299(train.images[i]), hot, policy, rng);
        images.push_back(std::move(img));
      }
      const auto logits = model->logits(to_batch(images));
      if (!torch::isfinite(logits).all().item<bool>()) {
        throw Error(ErrorKind::NonFiniteLoss,
                    fmt::format("model produced non-finite scores in epoch {} at batch offset {}", epoch, start));
      }
      auto loss = focal_loss_autograd(logits, to_one_hot_batch(labels), loss_cfg);
      const double loss_value = loss.item<double>();
      if (!std::isfinite(loss_value)) {
        throw Error(ErrorKind::NonFiniteLoss,
                    fmt::format("loss became {} in epoch {} at batch offset {}", loss_value, epoch, start));
      }
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      loss_sum += loss_value * static_cast<double>(idx.size());
      correct += count_correct(logits.detach(), labels);
    }

    const SplitScore v = score_split(model, val, loss_cfg, cfg.batch_size);
    if (!std::isfinite(v.loss)) {
      throw Error(ErrorKind::NonFiniteLoss, fmt::format("validation loss became {} in epoch {}", v.loss, epoch));
    }
    const auto n = static_cast<double>(train.size());
    const EpochRow row{epoch, loss_sum / n, static_cast<double>(correct) / n, v.loss, v.accuracy, lr};
    result.history.append(row);
    if (observer) observer(row);

    const bool stop = stopper.step(v.loss);
    if (stopper.improved_last()) {
      best = WeightSnapshot::take(*model);
      result.best_epoch = epoch;
      result.best_val_loss = v.loss;
    }
    if (stop) {
      result.stopped_early = true;
      break;
    }
    lr = plateau.step(v.loss);
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
  }
  best.restore(*model);
  return result;
}

void seed_backend(std::uint64_t seed) {
  torch::manual_seed(seed);
  at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/false);
}

} // namespace lungct
