#include "lungct/evaluation.hpp"

#include <numeric>

#include <fmt/format.h>

#include "lungct/error.hpp"
#include "lungct/preprocess.hpp"

namespace lungct {

namespace {

std::vector<std::string> class_names() {
  std::vector<std::string> names;
  for (ClassLabel c : kAllClasses) names.emplace_back(class_name(c));
  return names;
}

} // namespace

torch::Tensor predict_probabilities(Classifier& model, const LabeledSet& data, int batch_size) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "cannot evaluate an empty split");
  if (batch_size < 1) throw Error(ErrorKind::InvalidValue, "batch_size must be >= 1");
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  std::vector<torch::Tensor> parts;
  const auto step = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < data.size(); start += step) {
    std::vector<Tensor299> images;
    for (std::size_t i = start; i < std::min(data.size(), start + step); ++i) {
      images.push_back(to_tensor299(data.images[i]));
    }
    parts.push_back(model->forward(to_batch(images)));
  }
  model->train(was_training);
  return torch::cat(parts, 0);
}

std::vector<int> argmax_rows(const torch::Tensor& probabilities) {
  const auto p = probabilities.detach().to(torch::kDouble).contiguous();
  const auto rows = p.size(0);
  const auto cols = p.size(1);
  const double* data = p.data_ptr<double>();
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (long r = 0; r < rows; ++r) {
    int best = 0;
    for (long c = 1; c < cols; ++c) {
      if (data[r * cols + c] > data[r * cols + best]) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

MetricsReport evaluate_model(Classifier& model, const LabeledSet& test_data, const std::string& backbone,
                             const std::string& run_id, int batch_size) {
  const auto predicted = argmax_rows(predict_probabilities(model, test_data, batch_size));
  std::vector<int> truth;
  truth.reserve(test_data.size());
  for (ClassLabel l : test_data.labels) truth.push_back(static_cast<int>(l));
  return make_report(confusion_matrix(truth, predicted, kNumClasses, class_names()), backbone, run_id);
}

Prediction predict_single(Classifier& model, const std::filesystem::path& image_path) {
  LabeledSet one;
  one.add(prepare_gray299(image_path), ClassLabel::ADC);
  const auto probs = predict_probabilities(model, one, 1).to(torch::kDouble).contiguous();
  Prediction out;
  for (int c = 0; c < kNumClasses; ++c) out.probabilities[static_cast<std::size_t>(c)] = probs[0][c].item<double>();
  out.label = label_from_index(argmax_rows(probs).front());
  return out;
}

std::string format_prediction(const Prediction& prediction) {
  const auto& p = prediction.probabilities;
  return fmt::format("{}, {:.6f} {:.6f} {:.6f} {:.6f}", class_name(prediction.label), p[0], p[1], p[2], p[3]);
}

} // namespace lungct
