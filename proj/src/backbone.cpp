#include "lungct/backbone.hpp"

#include <algorithm>
#include <cctype>

#include "lungct/error.hpp"

namespace lungct {

namespace {

std::string squash(std::string_view text) {
  std::string out;
  for (unsigned char c : text) {
    if (c != '-' && c != '_' && c != ' ') out.push_back(static_cast<char>(std::toupper(c)));
  }
  return out;
}

} // namespace

std::string_view backbone_name(Backbone b) {
  switch (b) {
    case Backbone::VGG16: return "VGG16";
    case Backbone::VGG19: return "VGG19";
    case Backbone::INCEPTIONV3: return "INCEPTIONV3";
    case Backbone::DENSENET201: return "DENSENET201";
  }
  return "?";
}

Backbone parse_backbone(std::string_view text) {
  const std::string key = squash(text);
  for (Backbone b : kAllBackbones) {
    if (key == backbone_name(b)) return b;
  }
  throw Error(ErrorKind::UnknownBackbone,
              "'" + std::string(text) + "' is not one of vgg16, vgg19, inceptionv3, densenet201");
}

int nominal_depth(Backbone b) {
  switch (b) {
    case Backbone::VGG16: return 16;
    case Backbone::VGG19: return 19;
    case Backbone::INCEPTIONV3: return 42;
    case Backbone::DENSENET201: return 201;
  }
  return 0;
}

std::string_view to_string(BackboneScale s) { return s == BackboneScale::Full ? "full" : "reduced"; }

BackboneScale parse_backbone_scale(std::string_view text) {
  const std::string key = squash(text);
  if (key == "FULL") return BackboneScale::Full;
  if (key == "REDUCED") return BackboneScale::Reduced;
  throw Error(ErrorKind::InvalidValue, "backbone_scale must be 'full' or 'reduced'");
}

} // namespace lungct
