#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "lungct/augment.hpp"
#include "lungct/callbacks.hpp"
#include "lungct/dataset.hpp"
#include "lungct/focal_loss.hpp"
#include "lungct/image.hpp"
#include "lungct/model_zoo.hpp"
#include "lungct/preprocess.hpp"

namespace lungct {

/// In-memory split: 299 x 299 grayscale images plus labels. Tensor299
/// conversion happens per batch to keep the resident set small.
struct LabeledSet {
  std::vector<RawImage> images;
  std::vector<ClassLabel> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  void add(RawImage gray299, ClassLabel label);
  std::vector<std::size_t> class_counts() const;
};

/// Loads every record of `split` (decode + grayscale + resize), through
/// `cache` when given. Throws EmptyDataset if the split is empty.
LabeledSet load_split(const DatasetManifest& manifest, Split split, PreprocessCache* cache = nullptr);

/// Stacks tensors into a B x 3 x 299 x 299 float batch.
torch::Tensor to_batch(const std::vector<Tensor299>& images);
/// B x 4 one-hot float batch.
torch::Tensor to_one_hot_batch(const std::vector<ClassLabel>& labels);

/// Focal loss on logits as an autograd node; backward uses the analytic
/// gradient from focal_loss_with_grad.
torch::Tensor focal_loss_autograd(const torch::Tensor& logits, const torch::Tensor& targets,
                                  const FocalLossConfig& cfg);

struct SplitScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean focal loss and accuracy over `data` in inference mode.
SplitScore score_split(Classifier& model, const LabeledSet& data, const FocalLossConfig& loss_cfg,
                       int batch_size);

struct TrainResult {
  EpochHistory history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

using EpochObserver = std::function<void(const EpochRow&)>;

/// Adam on focal loss over augmented TRAIN batches; plateau and early-stop
/// callbacks on validation loss at each epoch boundary. The model ends up
/// carrying its best-validation-loss weights. Throws EmptyDataset,
/// NonFiniteLoss.
TrainResult train_model(Classifier& model, const LabeledSet& train, const LabeledSet& val,
                        const AugmentationPolicy& policy, const TrainConfig& cfg, const FocalLossConfig& loss_cfg,
                        const EpochObserver& observer = {});

/// Fixes torch's global RNG and selects deterministic kernels.
void seed_backend(std::uint64_t seed);

} // namespace lungct
