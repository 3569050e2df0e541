#include "lungct/model_zoo.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "lungct/error.hpp"

namespace lungct {

namespace fs = std::filesystem;
namespace nn = torch::nn;

std::vector<torch::Tensor> TrunkLayer::parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& m : modules) {
    for (auto& p : m->parameters()) out.push_back(p);
  }
  return out;
}

std::size_t FeatureExtractor::conv_count() const {
  std::size_t n = 0;
  for (const auto& m : modules(/*include_self=*/false)) {
    if (m->as<nn::Conv2d>() != nullptr) ++n;
  }
  return n;
}

namespace {

void init_conv(nn::Conv2d& conv) {
  nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
  if (conv->options.bias()) nn::init::zeros_(conv->bias);
}

// ---------------------------------------------------------------- VGG

class VggTrunk final : public FeatureExtractor {
public:
  VggTrunk(Backbone kind, BackboneScale scale) : FeatureExtractor(kind, scale) {
    constexpr int M = 0;
    std::vector<int> cfg = kind == Backbone::VGG16
                               ? std::vector<int>{64, 64, M, 128, 128, M, 256, 256, 256, M, 512, 512, 512, M,
                                                  512, 512, 512, M}
                               : std::vector<int>{64,  64,  M,   128, 128, M,   256, 256, 256, 256, M,
                                                  512, 512, 512, 512, M,   512, 512, 512, 512, M};
    if (scale == BackboneScale::Reduced) {
      for (int& v : cfg) v /= 16;
    }
    int in = 3;
    for (int v : cfg) {
      if (v == M) {
        features_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
        continue;
      }
      auto conv = nn::Conv2d(nn::Conv2dOptions(in, v, 3).padding(1));
      init_conv(conv);
      layers_.push_back({fmt::format("features.{}", features_->size()), {conv.ptr()}});
      features_->push_back(conv);
      features_->push_back(nn::ReLU(nn::ReLUOptions(true)));
      in = v;
    }
    out_channels_ = in;
    register_module("features", features_);
  }

  torch::Tensor forward(torch::Tensor x) override { return features_->forward(x); }

private:
  nn::Sequential features_;
};

// ---------------------------------------------------------------- DenseNet

nn::BatchNorm2d make_bn(int channels, double eps = 1e-5) {
  return nn::BatchNorm2d(nn::BatchNorm2dOptions(channels).eps(eps));
}

class DenseLayerImpl : public nn::Module {
public:
  DenseLayerImpl(int in, int growth, int bn_size)
      : norm1(register_module("norm1", make_bn(in))),
        conv1(register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, bn_size * growth, 1).bias(false)))),
        norm2(register_module("norm2", make_bn(bn_size * growth))),
        conv2(register_module("conv2",
                              nn::Conv2d(nn::Conv2dOptions(bn_size * growth, growth, 3).padding(1).bias(false)))) {
    init_conv(conv1);
    init_conv(conv2);
  }

  torch::Tensor forward(torch::Tensor x) {
    auto y = conv1->forward(torch::relu(norm1->forward(x)));
    y = conv2->forward(torch::relu(norm2->forward(y)));
    return torch::cat({x, y}, 1);
  }

  nn::BatchNorm2d norm1;
  nn::Conv2d conv1;
  nn::BatchNorm2d norm2;
  nn::Conv2d conv2;
};
TORCH_MODULE(DenseLayer);

class DenseBlockImpl : public nn::Module {
public:
  DenseBlockImpl(int count, int in, int growth, int bn_size) {
    for (int i = 0; i < count; ++i) {
      layers.push_back(register_module(fmt::format("denselayer{}", i + 1), DenseLayer(in + i * growth, growth, bn_size)));
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    for (auto& layer : layers) x = layer->forward(x);
    return x;
  }

  std::vector<DenseLayer> layers;
};
TORCH_MODULE(DenseBlock);

class TransitionImpl : public nn::Module {
public:
  TransitionImpl(int in, int out)
      : norm(register_module("norm", make_bn(in))),
        conv(register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 1).bias(false)))) {
    init_conv(conv);
  }

  torch::Tensor forward(torch::Tensor x) {
    return torch::avg_pool2d(conv->forward(torch::relu(norm->forward(x))), 2, 2);
  }

  nn::BatchNorm2d norm;
  nn::Conv2d conv;
};
TORCH_MODULE(Transition);

class DenseNetTrunk final : public FeatureExtractor {
public:
  explicit DenseNetTrunk(BackboneScale scale) : FeatureExtractor(Backbone::DENSENET201, scale) {
    const bool full = scale == BackboneScale::Full;
    const int growth = full ? 32 : 8;
    const int bn_size = full ? 4 : 2;
    const int init = full ? 64 : 16;
    const std::vector<int> blocks = full ? std::vector<int>{6, 12, 48, 32} : std::vector<int>{2, 2, 2, 2};

    auto conv0 = nn::Conv2d(nn::Conv2dOptions(3, init, 7).stride(2).padding(3).bias(false));
    init_conv(conv0);
    auto norm0 = make_bn(init);
    features_->push_back("conv0", conv0);
    features_->push_back("norm0", norm0);
    features_->push_back("relu0", nn::ReLU(nn::ReLUOptions(true)));
    features_->push_back("pool0", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    layers_.push_back({"features.conv0", {conv0.ptr(), norm0.ptr()}});

    int channels = init;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto block = DenseBlock(blocks[b], channels, growth, bn_size);
      for (std::size_t i = 0; i < block->layers.size(); ++i) {
        const auto& l = block->layers[i];
        const auto prefix = fmt::format("features.denseblock{}.denselayer{}", b + 1, i + 1);
        // Pre-activation: each batch norm travels with the convolution it feeds.
        layers_.push_back({prefix + ".conv1", {l->norm1.ptr(), l->conv1.ptr()}});
        layers_.push_back({prefix + ".conv2", {l->norm2.ptr(), l->conv2.ptr()}});
      }
      features_->push_back(fmt::format("denseblock{}", b + 1), block);
      channels += blocks[b] * growth;
      if (b + 1 < blocks.size()) {
        auto transition = Transition(channels, channels / 2);
        layers_.push_back({fmt::format("features.transition{}", b + 1), {transition->norm.ptr(), transition->conv.ptr()}});
        features_->push_back(fmt::format("transition{}", b + 1), transition);
        channels /= 2;
      }
    }
    auto norm5 = make_bn(channels);
    features_->push_back("norm5", norm5);
    layers_.push_back({"features.norm5", {norm5.ptr()}});
    out_channels_ = channels;
    register_module("features", features_);
  }

  torch::Tensor forward(torch::Tensor x) override { return torch::relu(features_->forward(x)); }

private:
  nn::Sequential features_;
};

// ---------------------------------------------------------------- Inception v3

class BasicConv2dImpl : public nn::Module {
public:
  BasicConv2dImpl(int in, int out, nn::Conv2dOptions options)
      : conv(register_module("conv", nn::Conv2d(options.bias(false)))),
        bn(register_module("bn", make_bn(out, 0.001))) {
    (void)in;
    init_conv(conv);
  }

  torch::Tensor forward(torch::Tensor x) { return torch::relu(bn->forward(conv->forward(x))); }

  nn::Conv2d conv;
  nn::BatchNorm2d bn;
};
TORCH_MODULE(BasicConv2d);

using Width = std::function<int(int)>;

// Collects every BasicConv2d in registration order for the freeze policy.
struct ConvRegistry {
  std::vector<TrunkLayer>* layers;
  std::string prefix;

  BasicConv2d make(nn::Module& owner, const std::string& name, int in, int out, nn::Conv2dOptions opts) {
    BasicConv2d m(in, out, opts);
    owner.register_module(name, m);
    layers->push_back({prefix + name, {m.ptr()}});
    return m;
  }
};

nn::Conv2dOptions k(int in, int out, int size) { return nn::Conv2dOptions(in, out, size); }
nn::Conv2dOptions k(int in, int out, std::array<int64_t, 2> size) { return nn::Conv2dOptions(in, out, size); }

class InceptionAImpl : public nn::Module {
public:
  InceptionAImpl(ConvRegistry reg, int in, int pool_features, const Width& w) {
    b1x1 = reg.make(*this, "branch1x1", in, w(64), k(in, w(64), 1));
    b5x5_1 = reg.make(*this, "branch5x5_1", in, w(48), k(in, w(48), 1));
    b5x5_2 = reg.make(*this, "branch5x5_2", w(48), w(64), k(w(48), w(64), 5).padding(2));
    b3dbl_1 = reg.make(*this, "branch3x3dbl_1", in, w(64), k(in, w(64), 1));
    b3dbl_2 = reg.make(*this, "branch3x3dbl_2", w(64), w(96), k(w(64), w(96), 3).padding(1));
    b3dbl_3 = reg.make(*this, "branch3x3dbl_3", w(96), w(96), k(w(96), w(96), 3).padding(1));
    bpool = reg.make(*this, "branch_pool", in, pool_features, k(in, pool_features, 1));
    out_channels = w(64) + w(64) + w(96) + pool_features;
  }

  torch::Tensor forward(torch::Tensor x) {
    auto a = b1x1->forward(x);
    auto b = b5x5_2->forward(b5x5_1->forward(x));
    auto c = b3dbl_3->forward(b3dbl_2->forward(b3dbl_1->forward(x)));
    auto d = bpool->forward(torch::avg_pool2d(x, 3, 1, 1));
    return torch::cat({a, b, c, d}, 1);
  }

  BasicConv2d b1x1{nullptr}, b5x5_1{nullptr}, b5x5_2{nullptr}, b3dbl_1{nullptr}, b3dbl_2{nullptr}, b3dbl_3{nullptr},
      bpool{nullptr};
  int out_channels = 0;
};
TORCH_MODULE(InceptionA);

class InceptionBImpl : public nn::Module {
public:
  InceptionBImpl(ConvRegistry reg, int in, const Width& w) {
    b3x3 = reg.make(*this, "branch3x3", in, w(384), k(in, w(384), 3).stride(2));
    b3dbl_1 = reg.make(*this, "branch3x3dbl_1", in, w(64), k(in, w(64), 1));
    b3dbl_2 = reg.make(*this, "branch3x3dbl_2", w(64), w(96), k(w(64), w(96), 3).padding(1));
    b3dbl_3 = reg.make(*this, "branch3x3dbl_3", w(96), w(96), k(w(96), w(96), 3).stride(2));
    out_channels = w(384) + w(96) + in;
  }

  torch::Tensor forward(torch::Tensor x) {
    auto a = b3x3->forward(x);
    auto b = b3dbl_3->forward(b3dbl_2->forward(b3dbl_1->forward(x)));
    auto c = torch::max_pool2d(x, 3, 2);
    return torch::cat({a, b, c}, 1);
  }

  BasicConv2d b3x3{nullptr}, b3dbl_1{nullptr}, b3dbl_2{nullptr}, b3dbl_3{nullptr};
  int out_channels = 0;
};
TORCH_MODULE(InceptionB);

class InceptionCImpl : public nn::Module {
public:
  InceptionCImpl(ConvRegistry reg, int in, int c7, const Width& w) {
    const int o = w(192);
    b1x1 = reg.make(*this, "branch1x1", in, o, k(in, o, 1));
    b7_1 = reg.make(*this, "branch7x7_1", in, c7, k(in, c7, 1));
    b7_2 = reg.make(*this, "branch7x7_2", c7, c7, k(c7, c7, {1, 7}).padding({0, 3}));
    b7_3 = reg.make(*this, "branch7x7_3", c7, o, k(c7, o, {7, 1}).padding({3, 0}));
    b7dbl_1 = reg.make(*this, "branch7x7dbl_1", in, c7, k(in, c7, 1));
    b7dbl_2 = reg.make(*this, "branch7x7dbl_2", c7, c7, k(c7, c7, {7, 1}).padding({3, 0}));
    b7dbl_3 = reg.make(*this, "branch7x7dbl_3", c7, c7, k(c7, c7, {1, 7}).padding({0, 3}));
    b7dbl_4 = reg.make(*this, "branch7x7dbl_4", c7, c7, k(c7, c7, {7, 1}).padding({3, 0}));
    b7dbl_5 = reg.make(*this, "branch7x7dbl_5", c7, o, k(c7, o, {1, 7}).padding({0, 3}));
    bpool = reg.make(*this, "branch_pool", in, o, k(in, o, 1));
    out_channels = 4 * o;
  }

  torch::Tensor forward(torch::Tensor x) {
    auto a = b1x1->forward(x);
    auto b = b7_3->forward(b7_2->forward(b7_1->forward(x)));
    auto c = b7dbl_5->forward(b7dbl_4->forward(b7dbl_3->forward(b7dbl_2->forward(b7dbl_1->forward(x)))));
    auto d = bpool->forward(torch::avg_pool2d(x, 3, 1, 1));
    return torch::cat({a, b, c, d}, 1);
  }

  BasicConv2d b1x1{nullptr}, b7_1{nullptr}, b7_2{nullptr}, b7_3{nullptr}, b7dbl_1{nullptr}, b7dbl_2{nullptr},
      b7dbl_3{nullptr}, b7dbl_4{nullptr}, b7dbl_5{nullptr}, bpool{nullptr};
  int out_channels = 0;
};
TORCH_MODULE(InceptionC);

class InceptionDImpl : public nn::Module {
public:
  InceptionDImpl(ConvRegistry reg, int in, const Width& w) {
    b3_1 = reg.make(*this, "branch3x3_1", in, w(192), k(in, w(192), 1));
    b3_2 = reg.make(*this, "branch3x3_2", w(192), w(320), k(w(192), w(320), 3).stride(2));
    b7_1 = reg.make(*this, "branch7x7x3_1", in, w(192), k(in, w(192), 1));
    b7_2 = reg.make(*this, "branch7x7x3_2", w(192), w(192), k(w(192), w(192), {1, 7}).padding({0, 3}));
    b7_3 = reg.make(*this, "branch7x7x3_3", w(192), w(192), k(w(192), w(192), {7, 1}).padding({3, 0}));
    b7_4 = reg.make(*this, "branch7x7x3_4", w(192), w(192), k(w(192), w(192), 3).stride(2));
    out_channels = w(320) + w(192) + in;
  }

  torch::Tensor forward(torch::Tensor x) {
    auto a = b3_2->forward(b3_1->forward(x));
    auto b = b7_4->forward(b7_3->forward(b7_2->forward(b7_1->forward(x))));
    auto c = torch::max_pool2d(x, 3, 2);
    return torch::cat({a, b, c}, 1);
  }

  BasicConv2d b3_1{nullptr}, b3_2{nullptr}, b7_1{nullptr}, b7_2{nullptr}, b7_3{nullptr}, b7_4{nullptr};
  int out_channels = 0;
};
TORCH_MODULE(InceptionD);

class InceptionEImpl : public nn::Module {
public:
  InceptionEImpl(ConvRegistry reg, int in, const Width& w) {
    b1x1 = reg.make(*this, "branch1x1", in, w(320), k(in, w(320), 1));
    b3_1 = reg.make(*this, "branch3x3_1", in, w(384), k(in, w(384), 1));
    b3_2a = reg.make(*this, "branch3x3_2a", w(384), w(384), k(w(384), w(384), {1, 3}).padding({0, 1}));
    b3_2b = reg.make(*this, "branch3x3_2b", w(384), w(384), k(w(384), w(384), {3, 1}).padding({1, 0}));
    b3dbl_1 = reg.make(*this, "branch3x3dbl_1", in, w(448), k(in, w(448), 1));
    b3dbl_2 = reg.make(*this, "branch3x3dbl_2", w(448), w(384), k(w(448), w(384), 3).padding(1));
    b3dbl_3a = reg.make(*this, "branch3x3dbl_3a", w(384), w(384), k(w(384), w(384), {1, 3}).padding({0, 1}));
    b3dbl_3b = reg.make(*this, "branch3x3dbl_3b", w(384), w(384), k(w(384), w(384), {3, 1}).padding({1, 0}));
    bpool = reg.make(*this, "branch_pool", in, w(192), k(in, w(192), 1));
    out_channels = w(320) + 2 * w(384) + 2 * w(384) + w(192);
  }

  torch::Tensor forward(torch::Tensor x) {
    auto a = b1x1->forward(x);
    auto t = b3_1->forward(x);
    auto b = torch::cat({b3_2a->forward(t), b3_2b->forward(t)}, 1);
    auto u = b3dbl_2->forward(b3dbl_1->forward(x));
    auto c = torch::cat({b3dbl_3a->forward(u), b3dbl_3b->forward(u)}, 1);
    auto d = bpool->forward(torch::avg_pool2d(x, 3, 1, 1));
    return torch::cat({a, b, c, d}, 1);
  }

  BasicConv2d b1x1{nullptr}, b3_1{nullptr}, b3_2a{nullptr}, b3_2b{nullptr}, b3dbl_1{nullptr}, b3dbl_2{nullptr},
      b3dbl_3a{nullptr}, b3dbl_3b{nullptr}, bpool{nullptr};
  int out_channels = 0;
};
TORCH_MODULE(InceptionE);

class InceptionTrunk final : public FeatureExtractor {
public:
  explicit InceptionTrunk(BackboneScale scale) : FeatureExtractor(Backbone::INCEPTIONV3, scale) {
    const double width = scale == BackboneScale::Full ? 1.0 : 0.125;
    const Width w = [width](int c) { return std::max(1, static_cast<int>(std::lround(c * width))); };
    ConvRegistry top{&layers_, ""};
    c1a_ = top.make(*this, "Conv2d_1a_3x3", 3, w(32), k(3, w(32), 3).stride(2));
    c2a_ = top.make(*this, "Conv2d_2a_3x3", w(32), w(32), k(w(32), w(32), 3));
    c2b_ = top.make(*this, "Conv2d_2b_3x3", w(32), w(64), k(w(32), w(64), 3).padding(1));
    c3b_ = top.make(*this, "Conv2d_3b_1x1", w(64), w(80), k(w(64), w(80), 1));
    c4a_ = top.make(*this, "Conv2d_4a_3x3", w(80), w(192), k(w(80), w(192), 3));

    auto sub = [this](const char* name) { return ConvRegistry{&layers_, std::string(name) + "."}; };
    m5b_ = register_module("Mixed_5b", InceptionA(sub("Mixed_5b"), w(192), w(32), w));
    m5c_ = register_module("Mixed_5c", InceptionA(sub("Mixed_5c"), m5b_->out_channels, w(64), w));
    m5d_ = register_module("Mixed_5d", InceptionA(sub("Mixed_5d"), m5c_->out_channels, w(64), w));
    m6a_ = register_module("Mixed_6a", InceptionB(sub("Mixed_6a"), m5d_->out_channels, w));
    m6b_ = register_module("Mixed_6b", InceptionC(sub("Mixed_6b"), m6a_->out_channels, w(128), w));
    m6c_ = register_module("Mixed_6c", InceptionC(sub("Mixed_6c"), m6b_->out_channels, w(160), w));
    m6d_ = register_module("Mixed_6d", InceptionC(sub("Mixed_6d"), m6c_->out_channels, w(160), w));
    m6e_ = register_module("Mixed_6e", InceptionC(sub("Mixed_6e"), m6d_->out_channels, w(192), w));
    m7a_ = register_module("Mixed_7a", InceptionD(sub("Mixed_7a"), m6e_->out_channels, w));
    m7b_ = register_module("Mixed_7b", InceptionE(sub("Mixed_7b"), m7a_->out_channels, w));
    m7c_ = register_module("Mixed_7c", InceptionE(sub("Mixed_7c"), m7b_->out_channels, w));
    out_channels_ = m7c_->out_channels;
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = c2b_->forward(c2a_->forward(c1a_->forward(x)));
    x = torch::max_pool2d(x, 3, 2);
    x = c4a_->forward(c3b_->forward(x));
    x = torch::max_pool2d(x, 3, 2);
    x = m5d_->forward(m5c_->forward(m5b_->forward(x)));
    x = m6a_->forward(x);
    x = m6e_->forward(m6d_->forward(m6c_->forward(m6b_->forward(x))));
    x = m7a_->forward(x);
    return m7c_->forward(m7b_->forward(x));
  }

private:
  BasicConv2d c1a_{nullptr}, c2a_{nullptr}, c2b_{nullptr}, c3b_{nullptr}, c4a_{nullptr};
  InceptionA m5b_{nullptr}, m5c_{nullptr}, m5d_{nullptr};
  InceptionB m6a_{nullptr};
  InceptionC m6b_{nullptr}, m6c_{nullptr}, m6d_{nullptr}, m6e_{nullptr};
  InceptionD m7a_{nullptr};
  InceptionE m7b_{nullptr}, m7c_{nullptr};
};

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::WeightsUnavailable, "cannot read weights file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

void load_state_dict(nn::Module& module, const fs::path& path) {
  std::map<std::string, torch::Tensor> tensors;
  try {
    const auto value = torch::pickle_load(read_bytes(path));
    for (const auto& item : value.toGenericDict()) tensors.emplace(item.key().toStringRef(), item.value().toTensor());
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::WeightsUnavailable, path.string() + " is not a readable state dict: " + e.what_without_backtrace());
  }
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorKind::WeightsUnavailable, path.string() + " lacks tensor " + name);
    if (it->second.sizes() != target.sizes()) {
      throw Error(ErrorKind::ShapeMismatch, fmt::format("{}: expected {} but file has {}", name,
                                                        fmt::join(target.sizes(), "x"), fmt::join(it->second.sizes(), "x")));
    }
    target.copy_(it->second.to(target.dtype()));
  };
  for (auto& p : module.named_parameters(true)) assign(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) assign(b.key(), b.value());
}

std::shared_ptr<FeatureExtractor> load_backbone(const BackboneSpec& spec) {
  std::shared_ptr<FeatureExtractor> trunk;
  switch (spec.name) {
    case Backbone::VGG16:
    case Backbone::VGG19: trunk = std::make_shared<VggTrunk>(spec.name, spec.scale); break;
    case Backbone::INCEPTIONV3: trunk = std::make_shared<InceptionTrunk>(spec.scale); break;
    case Backbone::DENSENET201: trunk = std::make_shared<DenseNetTrunk>(spec.scale); break;
    default: throw Error(ErrorKind::UnknownBackbone, "unsupported backbone");
  }
  if (spec.pretrained) {
    if (spec.weights_path.empty()) {
      throw Error(ErrorKind::WeightsUnavailable,
                  fmt::format("pretrained {} requested but no weights_path given", backbone_name(spec.name)));
    }
    load_state_dict(*trunk, spec.weights_path);
  }
  return trunk;
}

ClassifierHeadImpl::ClassifierHeadImpl(int in_features, const HeadSpec& spec) {
  int in = in_features;
  for (std::size_t i = 0; i < spec.dense_units.size(); ++i) {
    dense_.push_back(register_module(fmt::format("dense{}", i), nn::Linear(in, spec.dense_units[i])));
    in = spec.dense_units[i];
  }
  dropout_ = register_module("dropout", nn::Dropout(spec.dropout_rate));
  output_ = register_module("output", nn::Linear(in, spec.num_classes));
}

torch::Tensor ClassifierHeadImpl::forward(torch::Tensor feature_map) {
  auto x = torch::adaptive_avg_pool2d(feature_map, {1, 1}).flatten(1);
  for (auto& dense : dense_) x = torch::relu(dense->forward(x));
  return output_->forward(dropout_->forward(x));
}

ClassifierImpl::ClassifierImpl(std::shared_ptr<FeatureExtractor> extractor, const HeadSpec& head)
    : extractor_(std::move(extractor)), head_spec_(head) {
  register_module("backbone", extractor_);
  head_ = register_module("head", ClassifierHead(extractor_->out_channels(), head));
  set_trainable_policy(1.0);
}

torch::Tensor ClassifierImpl::logits(torch::Tensor x) {
  auto features = extractor_->forward(x);
  if (features.dim() != 4 || features.size(1) != extractor_->out_channels()) {
    throw Error(ErrorKind::ShapeMismatch, "backbone did not produce the expected feature map");
  }
  return head_->forward(features);
}

torch::Tensor ClassifierImpl::forward(torch::Tensor x) { return torch::softmax(logits(x), 1); }

void ClassifierImpl::train(bool on) {
  nn::Module::train(on);
  const auto& layers = extractor_->layers();
  const std::size_t frozen = layers.size() - std::min(trainable_layers_, layers.size());
  for (std::size_t i = 0; i < frozen; ++i) {
    for (const auto& m : layers[i].modules) m->eval();
  }
}

void ClassifierImpl::set_trainable_policy(double unfreeze_fraction) {
  if (!(unfreeze_fraction >= 0.0 && unfreeze_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidValue, "unfreeze_fraction must lie in [0,1]");
  }
  const auto& layers = extractor_->layers();
  trainable_layers_ = static_cast<std::size_t>(std::ceil(unfreeze_fraction * static_cast<double>(layers.size()) - 1e-9));
  trainable_layers_ = std::min(trainable_layers_, layers.size());
  const std::size_t frozen = layers.size() - trainable_layers_;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (auto& p : layers[i].parameters()) p.set_requires_grad(i >= frozen);
  }
  for (auto& p : head_->parameters()) p.set_requires_grad(true);
  train(is_training());
}

std::vector<torch::Tensor> ClassifierImpl::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

std::vector<torch::Tensor> ClassifierImpl::head_parameters() const { return head_->parameters(); }

std::vector<torch::Tensor> ClassifierImpl::backbone_parameters() const { return extractor_->parameters(); }

Classifier attach_head(std::shared_ptr<FeatureExtractor> extractor, const HeadSpec& head) {
  if (!extractor || extractor->out_channels() <= 0) {
    throw Error(ErrorKind::ShapeMismatch, "extractor does not emit a spatial feature map");
  }
  if (head.num_classes != kNumClasses) {
    throw Error(ErrorKind::ShapeMismatch, fmt::format("head must have {} outputs", kNumClasses));
  }
  if (!(head.dropout_rate >= 0.0 && head.dropout_rate < 1.0)) {
    throw Error(ErrorKind::InvalidValue, "dropout_rate must lie in [0,1)");
  }
  for (int u : head.dense_units) {
    if (u < 1) throw Error(ErrorKind::ShapeMismatch, "dense layer widths must be >= 1");
  }
  return Classifier(std::move(extractor), head);
}

Classifier build_classifier(const BackboneSpec& backbone, const HeadSpec& head) {
  auto model = attach_head(load_backbone(backbone), head);
  model->set_trainable_policy(backbone.unfreeze_fraction);
  return model;
}

double parameter_checksum(const std::vector<torch::Tensor>& params) {
  torch::NoGradGuard no_grad;
  double sum = 0.0;
  double k = 1.0;
  for (const auto& p : params) {
    const auto flat = p.detach().to(torch::kDouble).flatten();
    sum += k * flat.sum().item<double>() + flat.abs().sum().item<double>();
    k += 1.0;
  }
  return sum;
}

void save_checkpoint(Classifier& model, const BackboneSpec& backbone, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::UnwritablePath, "cannot create " + dir.string());
  const HeadSpec& head = model->head_spec();
  const nlohmann::json spec = {{"backbone", std::string(backbone_name(backbone.name))},
                               {"backbone_scale", std::string(to_string(backbone.scale))},
                               {"unfreeze_fraction", backbone.unfreeze_fraction},
                               {"dense_units", head.dense_units},
                               {"dropout_rate", head.dropout_rate},
                               {"num_classes", head.num_classes}};
  std::ofstream out(dir / "spec.json", std::ios::trunc);
  if (!out) throw Error(ErrorKind::UnwritablePath, "cannot write " + (dir / "spec.json").string());
  out << spec.dump(2) << '\n';
  torch::serialize::OutputArchive archive;
  model->save(archive);
  try {
    archive.save_to((dir / "model.pt").string());
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::Io, "cannot save model: " + std::string(e.what_without_backtrace()));
  }
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "spec.json");
  if (!in) throw Error(ErrorKind::MissingFile, "no checkpoint spec in " + dir.string());
  LoadedCheckpoint loaded;
  HeadSpec head;
  try {
    nlohmann::json spec;
    in >> spec;
    loaded.backbone.name = parse_backbone(spec.at("backbone").get<std::string>());
    loaded.backbone.scale = parse_backbone_scale(spec.at("backbone_scale").get<std::string>());
    loaded.backbone.unfreeze_fraction = spec.at("unfreeze_fraction").get<double>();
    head.dense_units = spec.at("dense_units").get<std::vector<int>>();
    head.dropout_rate = spec.at("dropout_rate").get<double>();
    head.num_classes = spec.at("num_classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidValue, "malformed checkpoint spec: " + std::string(e.what()));
  }
  loaded.model = build_classifier(loaded.backbone, head);
  try {
    torch::serialize::InputArchive archive;
    archive.load_from((dir / "model.pt").string());
    loaded.model->load(archive);
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::Io, "cannot load model weights: " + std::string(e.what_without_backtrace()));
  }
  loaded.model->eval();
  return loaded;
}

} // namespace lungct
