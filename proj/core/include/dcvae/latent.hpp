#pragma once

#include <string>

#include "dcvae/autodiff.hpp"

namespace dcvae {

// A latent code is either a one-channel spatial map (H/k x W/k x 1) or a
// style vector (1 x 1 x C). In the reference configuration both flatten to
// 256 values, so total latent width is 512.
enum class CodeRole { SpatialMap, StyleVector };
enum class CodeOrigin { LabelRelevant, LabelIrrelevant };

struct LatentCode {
  CodeRole role;
  CodeOrigin origin;
  Var values;  // SpatialMap: (N, hw, hw, 1); StyleVector: (N, 1, 1, C)
};

// Whether the condition label directly relates to spatial structure (e.g. a
// rotation angle) or not (e.g. an identity). Decides the default role of the
// label-relevant code.
enum class LabelKind { SpatialRelated, StyleRelated };

struct LabelSpec {
  int n_classes = 2;
  LabelKind kind = LabelKind::SpatialRelated;
};

// How a code enters the decoder.
enum class Route { DecInput, AdaIN, Spade };

enum class Preset { CvaeGan, S1, S2, S3, S4, Proposed };

Preset preset_from_name(const std::string& name);  // throws ConfigError
std::string preset_name(Preset p);

// Presets defined per label family: the spatial family admits all six, the
// style family only cvae_gan, s1, s3 and proposed.
bool preset_valid_for(Preset p, LabelKind kind);

// Injection routes plus the code roles they imply. A normalization route
// forces the role it consumes (AdaIN takes a style vector, SPADE a spatial
// map); a DecInput-routed code takes the complementary role, or the family
// default when both codes go to the decoder input. s3 routes both codes
// through AdaIN, so both are style vectors there.
struct RoutingConfig {
  Route z_s = Route::DecInput;
  Route z_u = Route::DecInput;
  CodeRole z_s_role = CodeRole::SpatialMap;
  CodeRole z_u_role = CodeRole::StyleVector;
};

// Throws ConfigError when the preset is undefined for the family.
RoutingConfig make_routing(Preset p, LabelKind kind);

std::string role_name(CodeRole r);
std::string route_name(Route r);

}  // namespace dcvae
