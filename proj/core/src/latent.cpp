#include "dcvae/latent.hpp"

namespace dcvae {

Preset preset_from_name(const std::string& name) {
  if (name == "cvae_gan") return Preset::CvaeGan;
  if (name == "s1") return Preset::S1;
  if (name == "s2") return Preset::S2;
  if (name == "s3") return Preset::S3;
  if (name == "s4") return Preset::S4;
  if (name == "proposed") return Preset::Proposed;
  throw ConfigError("unknown preset '" + name +
                    "' (expected cvae_gan|s1|s2|s3|s4|proposed)");
}

std::string preset_name(Preset p) {
  switch (p) {
    case Preset::CvaeGan: return "cvae_gan";
    case Preset::S1: return "s1";
    case Preset::S2: return "s2";
    case Preset::S3: return "s3";
    case Preset::S4: return "s4";
    case Preset::Proposed: return "proposed";
  }
  return "?";
}

bool preset_valid_for(Preset p, LabelKind kind) {
  if (kind == LabelKind::SpatialRelated) return true;
  return p == Preset::CvaeGan || p == Preset::S1 || p == Preset::S3 ||
         p == Preset::Proposed;
}

RoutingConfig make_routing(Preset p, LabelKind kind) {
  if (!preset_valid_for(p, kind))
    throw ConfigError("preset '" + preset_name(p) +
                      "' is not defined for the style-label family");
  const bool spatial_family = kind == LabelKind::SpatialRelated;
  RoutingConfig r;
  switch (p) {
    case Preset::CvaeGan:
      r = {Route::DecInput, Route::DecInput,
           spatial_family ? CodeRole::SpatialMap : CodeRole::StyleVector,
           spatial_family ? CodeRole::StyleVector : CodeRole::SpatialMap};
      break;
    case Preset::S1:
      r = {Route::AdaIN, Route::DecInput, CodeRole::StyleVector,
           CodeRole::SpatialMap};
      break;
    case Preset::S2:
      r = {Route::Spade, Route::DecInput, CodeRole::SpatialMap,
           CodeRole::StyleVector};
      break;
    case Preset::S3:
      // both codes ride AdaIN; both are style vectors (Table 1's S3 column)
      r = {Route::AdaIN, Route::AdaIN, CodeRole::StyleVector,
           CodeRole::StyleVector};
      break;
    case Preset::S4:
      r = {Route::AdaIN, Route::Spade, CodeRole::StyleVector,
           CodeRole::SpatialMap};
      break;
    case Preset::Proposed:
      if (spatial_family)
        r = {Route::Spade, Route::AdaIN, CodeRole::SpatialMap,
             CodeRole::StyleVector};
      else
        r = {Route::AdaIN, Route::Spade, CodeRole::StyleVector,
             CodeRole::SpatialMap};
      break;
  }
  return r;
}

std::string role_name(CodeRole r) {
  return r == CodeRole::SpatialMap ? "SpatialMap" : "StyleVector";
}

std::string route_name(Route r) {
  switch (r) {
    case Route::DecInput: return "DecInput";
    case Route::AdaIN: return "AdaIN";
    case Route::Spade: return "SPADE";
  }
  return "?";
}

}  // namespace dcvae
