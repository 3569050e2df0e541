#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "lungct/dataset.hpp"
#include "lungct/metrics.hpp"
#include "lungct/model_zoo.hpp"
#include "lungct/training.hpp"

namespace lungct {

/// Softmax rows for every image in `data`, inference mode, B x 4.
torch::Tensor predict_probabilities(Classifier& model, const LabeledSet& data, int batch_size = 32);

/// Row-wise argmax; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const torch::Tensor& probabilities);

/// argmax -> confusion matrix -> full report. Throws EmptyDataset.
MetricsReport evaluate_model(Classifier& model, const LabeledSet& test_data, const std::string& backbone,
                             const std::string& run_id = {}, int batch_size = 32);

struct Prediction {
  ClassLabel label = ClassLabel::ADC;
  std::array<double, kNumClasses> probabilities{};
};

/// Same preprocessing as training (no augmentation). Throws UndecodableFile.
Prediction predict_single(Classifier& model, const std::filesystem::path& image_path);

/// `LABEL, p0 p1 p2 p3` with six decimals per probability.
std::string format_prediction(const Prediction& prediction);

} // namespace lungct
