#pragma once

#include <array>
#include <string>
#include <string_view>

namespace lungct {

enum class Backbone { VGG16, VGG19, INCEPTIONV3, DENSENET201 };

inline constexpr std::array<Backbone, 4> kAllBackbones = {Backbone::VGG16, Backbone::VGG19, Backbone::INCEPTIONV3,
                                                          Backbone::DENSENET201};

/// "VGG16", "VGG19", "INCEPTIONV3", "DENSENET201".
std::string_view backbone_name(Backbone b);

/// Case-insensitive; dashes and underscores are ignored. Throws UnknownBackbone.
Backbone parse_backbone(std::string_view text);

/// Depth the architecture is known by: 16, 19, 42, 201.
int nominal_depth(Backbone b);

/// Full: the published architecture. Reduced: same topology family with far
/// fewer channels, for desk-scale runs from random initialization.
enum class BackboneScale { Full, Reduced };

std::string_view to_string(BackboneScale s);
BackboneScale parse_backbone_scale(std::string_view text);

} // namespace lungct
