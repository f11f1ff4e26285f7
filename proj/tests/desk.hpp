#pragma once

#include "necplus/nec.hpp"
#include "necplus/synth.hpp"

namespace necplus::testing {

// Small configuration that trains in seconds on one core.
inline NecConfig desk_config() {
  NecConfig c;
  c.sensor_id = "synthetic";
  c.h = 24;
  c.f = 6;
  c.epsilon = 1.5;
  c.gmm_components = 3;
  c.normal = {2, 16, 32, 2000, 0.0, 30, 3, 1};
  c.extreme = {2, 16, 16, 1000, 1.0, 30, 4, 2};
  c.classifier = {2, 16, 32, 2000, 1.0, 30, 4, 3};
  c.alpha = 2.0;
  c.beta = 0.5;
  c.exogenous_columns = {"rain"};
  return c;
}

inline SeriesTable desk_table(std::uint64_t seed, std::size_t length) {
  SynthOptions o;
  o.seed = seed;
  o.length = length;
  return generate_synthetic(o).table;
}

}  // namespace necplus::testing
