#pragma once

// A config of 1x1 convs whose costs are products of a spatial size and two
// channel counts. Latent 4, hyperlatent 2, features 2.

#include "mnvc/mnvc.hpp"

namespace mnvc::test {

inline LayerConfig fwd(int in, int out, TensorKind k) { return {in, out, 1, 2, ConvMode::Forward, Activation::None, k}; }
inline LayerConfig tr(int in, int out, TensorKind k) { return {in, out, 1, 2, ConvMode::Transposed, Activation::None, k}; }

inline CodecConfig unit_config() {
  using K = TensorKind;
  CodecConfig c;
  auto set = [&](NetId id, K in, std::vector<LayerConfig> layers) {
    c.nets[static_cast<std::size_t>(id)] = NetworkConfig{in, std::move(layers)};
  };
  const std::vector<LayerConfig> analysis = {fwd(3, 4, K::Feature), fwd(4, 4, K::Feature), fwd(4, 4, K::Feature),
                                             fwd(4, 4, K::Latent)};
  const std::vector<LayerConfig> ha = {fwd(4, 2, K::Feature), fwd(2, 2, K::Latent)};
  const std::vector<LayerConfig> hs = {tr(2, 2, K::Feature), tr(2, 4, K::LogScale)};
  set(NetId::IA, K::Frame, analysis);
  set(NetId::IS, K::Latent, {tr(4, 4, K::Feature), tr(4, 4, K::Feature), tr(4, 4, K::Feature), tr(4, 3, K::Frame)});
  set(NetId::HIA, K::Latent, ha);
  set(NetId::HIS, K::Latent, hs);
  set(NetId::FPrev, K::Frame, {fwd(3, 2, K::Feature), fwd(2, 2, K::Feature)});
  set(NetId::FCurr, K::Frame, {fwd(3, 2, K::Feature), fwd(2, 2, K::Feature)});
  set(NetId::MC, K::Feature, {fwd(4, 4, K::Feature), fwd(4, 4, K::Latent)});
  set(NetId::MSUp, K::Latent, {tr(4, 2, K::Feature), tr(2, 2, K::Feature)});
  set(NetId::MS, K::Feature, {tr(4, 2, K::Feature), tr(2, 3, K::Frame)});
  set(NetId::HMA, K::Latent, ha);
  set(NetId::HMS, K::Latent, hs);
  auto residual = analysis;
  set(NetId::RA, K::Residual, residual);
  set(NetId::RS, K::Latent, {tr(4, 4, K::Feature), tr(4, 4, K::Feature), tr(4, 4, K::Feature), tr(4, 3, K::Residual)});
  set(NetId::HRA, K::Latent, ha);
  set(NetId::HRS, K::Latent, hs);
  return c;
}

}  // namespace mnvc::test
