#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "lungct/backbone.hpp"
#include "lungct/dataset.hpp"

namespace lungct {

struct BackboneSpec {
  Backbone name = Backbone::DENSENET201;
  BackboneScale scale = BackboneScale::Full;
  bool pretrained = false;
  double unfreeze_fraction = 0.1;
  /// State dict saved with `torch.save` (see tools/export_torchvision_weights.py).
  std::filesystem::path weights_path;
};

struct HeadSpec {
  std::vector<int> dense_units = {256};
  double dropout_rate = 0.3;
  int num_classes = kNumClasses;
};

/// One freezable unit of the trunk: a convolution together with its batch
/// norm, in forward order.
struct TrunkLayer {
  std::string name;
  std::vector<std::shared_ptr<torch::nn::Module>> modules;

  std::vector<torch::Tensor> parameters() const;
};

/// Convolutional trunk without its classification head; maps B x 3 x 299 x 299
/// to a B x C x h x w feature map.
class FeatureExtractor : public torch::nn::Module {
public:
  virtual torch::Tensor forward(torch::Tensor x) = 0;

  Backbone kind() const noexcept { return kind_; }
  BackboneScale scale() const noexcept { return scale_; }
  int out_channels() const noexcept { return out_channels_; }
  const std::vector<TrunkLayer>& layers() const noexcept { return layers_; }
  std::size_t conv_count() const;

protected:
  FeatureExtractor(Backbone kind, BackboneScale scale) : kind_(kind), scale_(scale) {}

  Backbone kind_;
  BackboneScale scale_;
  int out_channels_ = 0;
  std::vector<TrunkLayer> layers_;
};

/// Builds the trunk for `spec`, loading weights when `pretrained` is set.
/// Throws WeightsUnavailable, ShapeMismatch.
std::shared_ptr<FeatureExtractor> load_backbone(const BackboneSpec& spec);

/// Copies matching tensors from a `torch.save`d state dict into `module`.
/// Every parameter and buffer of `module` must be present. Throws
/// WeightsUnavailable, ShapeMismatch.
void load_state_dict(torch::nn::Module& module, const std::filesystem::path& path);

/// GAP -> [dense + ReLU]* -> dropout -> dense(num_classes). Emits logits.
class ClassifierHeadImpl : public torch::nn::Module {
public:
  ClassifierHeadImpl(int in_features, const HeadSpec& spec);
  torch::Tensor forward(torch::Tensor feature_map);

  torch::nn::Linear output_layer() const { return output_; }

private:
  std::vector<torch::nn::Linear> dense_;
  torch::nn::Dropout dropout_{nullptr};
  torch::nn::Linear output_{nullptr};
};
TORCH_MODULE(ClassifierHead);

/// Stripped backbone plus custom head. forward() returns softmax rows.
class ClassifierImpl : public torch::nn::Module {
public:
  ClassifierImpl(std::shared_ptr<FeatureExtractor> extractor, const HeadSpec& head);

  torch::Tensor logits(torch::Tensor x);
  torch::Tensor forward(torch::Tensor x);

  /// Frozen trunk layers stay in inference mode (their batch norms use
  /// running statistics) even while the model trains.
  void train(bool on = true) override;

  /// Head always trainable; the last ceil(fraction * L) trunk layers
  /// trainable; the rest frozen.
  void set_trainable_policy(double unfreeze_fraction);
  std::size_t trainable_layer_count() const noexcept { return trainable_layers_; }

  std::vector<torch::Tensor> trainable_parameters() const;
  std::vector<torch::Tensor> head_parameters() const;
  std::vector<torch::Tensor> backbone_parameters() const;

  FeatureExtractor& extractor() { return *extractor_; }
  const FeatureExtractor& extractor() const { return *extractor_; }
  ClassifierHead head() const { return head_; }
  const HeadSpec& head_spec() const noexcept { return head_spec_; }

private:
  std::shared_ptr<FeatureExtractor> extractor_;
  ClassifierHead head_{nullptr};
  HeadSpec head_spec_;
  std::size_t trainable_layers_ = 0;
};
TORCH_MODULE(Classifier);

/// Throws ShapeMismatch for an invalid head.
Classifier attach_head(std::shared_ptr<FeatureExtractor> extractor, const HeadSpec& head);

/// Convenience: load_backbone + attach_head + set_trainable_policy.
Classifier build_classifier(const BackboneSpec& backbone, const HeadSpec& head);

/// Order-sensitive sum over parameter values, for before/after comparisons.
double parameter_checksum(const std::vector<torch::Tensor>& params);

/// `<dir>/model.pt` (weights) and `<dir>/spec.json` (architecture).
void save_checkpoint(Classifier& model, const BackboneSpec& backbone, const std::filesystem::path& dir);

struct LoadedCheckpoint {
  Classifier model{nullptr};
  BackboneSpec backbone;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace lungct
