#include "torch_doctest.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "lungct/error.hpp"
#include "lungct/model_zoo.hpp"
#include "support.hpp"

using namespace lungct;

namespace {

std::int64_t numel(const std::vector<torch::Tensor>& params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

BackboneSpec spec(Backbone b, BackboneScale s = BackboneScale::Full, double unfreeze = 1.0) {
  BackboneSpec out;
  out.name = b;
  out.scale = s;
  out.unfreeze_fraction = unfreeze;
  return out;
}

bool python_torchvision_available() {
  return std::system("python3 -c 'import torchvision' > /dev/null 2>&1") == 0;
}

torch::Tensor read_tensor(const std::filesystem::path& file, const std::string& key) {
  std::ifstream in(file, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return torch::pickle_load(bytes).toGenericDict().at(key).toTensor();
}

} // namespace

TEST_CASE("full-scale trunks match the reference architectures") {
  struct Expect {
    Backbone b;
    std::int64_t params;
    std::size_t convs;
    int channels;
    std::int64_t side;
  };
  for (const Expect e : {Expect{Backbone::VGG16, 14714688, 13, 512, 9}, Expect{Backbone::VGG19, 20024384, 16, 512, 9},
                         Expect{Backbone::DENSENET201, 18092928, 200, 1920, 9},
                         Expect{Backbone::INCEPTIONV3, 21785568, 94, 2048, 8}}) {
    CAPTURE(backbone_name(e.b));
    torch::NoGradGuard no_grad;
    auto trunk = load_backbone(spec(e.b));
    CHECK(numel(trunk->parameters()) == e.params);
    CHECK(trunk->conv_count() == e.convs);
    CHECK(trunk->out_channels() == e.channels);
    trunk->eval();
    const auto y = trunk->forward(torch::rand({1, 3, 299, 299}));
    CHECK((y.sizes() == torch::IntArrayRef({1, e.channels, e.side, e.side})));
  }
}

TEST_CASE("trunks reproduce torchvision forward passes from exported weights") {
  if (!python_torchvision_available()) {
    MESSAGE("python3 with torchvision not found; skipping weight-compatibility check");
    return;
  }
  testing::TempDir dir("tv");
  for (const auto& [name, backbone] : {std::pair{"vgg16", Backbone::VGG16}, std::pair{"densenet201", Backbone::DENSENET201},
                                       std::pair{"inceptionv3", Backbone::INCEPTIONV3}}) {
    CAPTURE(name);
    const auto weights = dir / (std::string(name) + ".pt");
    const auto ref = dir / (std::string(name) + "-ref.pt");
    const std::string cmd = fmt::format("python3 {}/torchvision_reference.py {} {} {}", LUNGCT_TEST_DIR, name,
                                        weights.string(), ref.string());
    REQUIRE(std::system(cmd.c_str()) == 0);
    BackboneSpec s = spec(backbone);
    s.pretrained = true;
    s.weights_path = weights;
    auto trunk = load_backbone(s);
    trunk->eval();
    torch::NoGradGuard no_grad;
    const auto y = trunk->forward(read_tensor(ref, "input"));
    const auto expected = read_tensor(ref, "output");
    REQUIRE(y.sizes() == expected.sizes());
    const double scale = expected.abs().max().item<double>();
    const double diff = (y - expected).abs().max().item<double>();
    CAPTURE(scale);
    CHECK(scale > 1e-3);
    CHECK(scale < 1e3);
    CHECK(diff <= 1e-4 * scale);
  }
}

TEST_CASE("weights problems are reported") {
  testing::TempDir dir("weights");
  BackboneSpec s = spec(Backbone::VGG16, BackboneScale::Reduced);
  s.pretrained = true;
  try {
    load_backbone(s);
    FAIL("expected WeightsUnavailable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WeightsUnavailable);
  }
  s.weights_path = dir / "absent.pt";
  CHECK_THROWS_WITH_AS(load_backbone(s), doctest::Contains("WeightsUnavailable"), Error);

  // A reduced VGG16 state dict does not fit a reduced VGG19.
  auto vgg16 = load_backbone(spec(Backbone::VGG16, BackboneScale::Reduced));
  c10::Dict<std::string, torch::Tensor> dict;
  for (const auto& p : vgg16->named_parameters()) dict.insert(p.key(), p.value().detach());
  const auto bytes = torch::pickle_save(c10::IValue(dict));
  std::ofstream(dir / "vgg16.pt", std::ios::binary).write(bytes.data(), static_cast<long>(bytes.size()));
  auto same = load_backbone(spec(Backbone::VGG16, BackboneScale::Reduced));
  CHECK_NOTHROW(load_state_dict(*same, dir / "vgg16.pt"));
  CHECK(parameter_checksum(same->parameters()) == parameter_checksum(vgg16->parameters()));
  auto vgg19 = load_backbone(spec(Backbone::VGG19, BackboneScale::Reduced));
  CHECK_THROWS_AS(load_state_dict(*vgg19, dir / "vgg16.pt"), Error);
}

TEST_CASE("classifier head emits probability rows") {
  torch::manual_seed(1);
  for (Backbone b : kAllBackbones) {
    CAPTURE(backbone_name(b));
    auto model = build_classifier(spec(b, BackboneScale::Reduced), HeadSpec{});
    model->eval();
    torch::NoGradGuard no_grad;
    const auto x = torch::rand({2, 3, 299, 299});
    const auto p = model->forward(x);
    CHECK((p.sizes() == torch::IntArrayRef{2, 4}));
    CHECK((p.sum(1) - 1.0).abs().max().item<double>() < 1e-6);
    CHECK((model->forward(x) - p).abs().max().item<double>() <= 1e-6);
  }
}

TEST_CASE("dropout only acts in training mode") {
  torch::manual_seed(2);
  auto trunk = load_backbone(spec(Backbone::VGG16, BackboneScale::Reduced));
  HeadSpec light;
  light.dropout_rate = 0.0;
  HeadSpec heavy;
  heavy.dropout_rate = 0.9;
  auto a = attach_head(trunk, light);
  auto b = attach_head(trunk, heavy);
  {
    torch::NoGradGuard no_grad;
    auto pa = b->head()->parameters();
    auto pb = a->head()->parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) pa[i].copy_(pb[i]);
  }
  a->eval();
  b->eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::rand({2, 3, 299, 299});
  CHECK((a->forward(x) - b->forward(x)).abs().max().item<double>() <= 1e-6);
  b->train();
  CHECK((a->forward(x) - b->forward(x)).abs().max().item<double>() > 1e-6);
}

TEST_CASE("invalid heads are rejected") {
  auto trunk = load_backbone(spec(Backbone::VGG16, BackboneScale::Reduced));
  HeadSpec wrong;
  wrong.num_classes = 3;
  CHECK_THROWS_WITH_AS(attach_head(trunk, wrong), doctest::Contains("ShapeMismatch"), Error);
  HeadSpec zero;
  zero.dense_units = {0};
  CHECK_THROWS_AS(attach_head(trunk, zero), Error);
  CHECK_THROWS_AS(attach_head(nullptr, HeadSpec{}), Error);
}

TEST_CASE("freeze policy keeps the top fraction of the trunk trainable") {
  auto model = build_classifier(spec(Backbone::DENSENET201, BackboneScale::Full, 0.1), HeadSpec{});
  const auto& layers = model->extractor().layers();
  CHECK(layers.size() == 201);
  CHECK(model->trainable_layer_count() == 21);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const auto& p : layers[i].parameters()) CHECK(p.requires_grad() == (i >= 180));
  }
  for (const auto& p : model->head_parameters()) CHECK(p.requires_grad());

  model->set_trainable_policy(0.0);
  CHECK(model->trainable_parameters().size() == model->head_parameters().size());
  model->set_trainable_policy(1.0);
  CHECK(model->trainable_parameters().size() == model->parameters().size());
  CHECK_THROWS_AS(model->set_trainable_policy(1.5), Error);
}

TEST_CASE("frozen layers do not change during a training step") {
  torch::manual_seed(3);
  auto model = build_classifier(spec(Backbone::DENSENET201, BackboneScale::Reduced, 0.5), HeadSpec{});
  model->train();
  const auto& layers = model->extractor().layers();
  const std::size_t frozen = layers.size() - model->trainable_layer_count();
  std::vector<torch::Tensor> frozen_state;
  for (std::size_t i = 0; i < frozen; ++i) {
    for (const auto& m : layers[i].modules) {
      CHECK_FALSE(m->is_training());
      for (const auto& t : m->parameters()) frozen_state.push_back(t.detach().clone());
      for (const auto& t : m->buffers()) frozen_state.push_back(t.detach().clone());
    }
  }
  const double head_before = parameter_checksum(model->head_parameters());
  torch::optim::Adam opt(model->trainable_parameters(), torch::optim::AdamOptions(1e-2));
  const auto loss = model->logits(torch::rand({2, 3, 299, 299})).pow(2).mean();
  opt.zero_grad();
  loss.backward();
  opt.step();
  std::size_t k = 0;
  for (std::size_t i = 0; i < frozen; ++i) {
    for (const auto& m : layers[i].modules) {
      for (const auto& t : m->parameters()) CHECK(torch::equal(t, frozen_state[k++]));
      for (const auto& t : m->buffers()) CHECK(torch::equal(t, frozen_state[k++]));
    }
  }
  CHECK(parameter_checksum(model->head_parameters()) != head_before);
}

TEST_CASE("checkpoints reload to identical outputs") {
  torch::manual_seed(4);
  testing::TempDir dir("ckpt");
  const auto s = spec(Backbone::INCEPTIONV3, BackboneScale::Reduced, 0.3);
  HeadSpec head;
  head.dense_units = {32, 16};
  auto model = build_classifier(s, head);
  model->eval();
  save_checkpoint(model, s, dir / "checkpoint");
  auto loaded = load_checkpoint(dir / "checkpoint");
  CHECK(loaded.backbone.name == Backbone::INCEPTIONV3);
  CHECK(loaded.model->head_spec().dense_units == head.dense_units);
  torch::NoGradGuard no_grad;
  const auto x = torch::rand({2, 3, 299, 299});
  CHECK((model->forward(x) - loaded.model->forward(x)).abs().max().item<double>() <= 1e-6);
  CHECK_THROWS_AS(load_checkpoint(dir / "nothing"), Error);
}
