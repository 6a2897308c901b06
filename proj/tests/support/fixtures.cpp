#include "fixtures.hpp"

namespace fixture {

using namespace mixvox;

SyntheticSceneSpec tiny_spec() {
  SyntheticSceneSpec s = default_synthetic_spec();
  s.width = s.height = 12;
  s.frame_count = 6;
  s.ring.train = 3;
  s.ring.eval = 1;
  s.label_resolution = 16;
  return s;
}

SyntheticScene tiny_scene() { return generate_synthetic(tiny_spec()); }

RunConfig tiny_config(long iterations) {
  RunConfig c;
  c.threads = 1;
  c.iterations = iterations;
  c.batch_rays = 64;
  c.time_queries = 4;
  c.log_every = 5;
  c.start_resolution = c.final_resolution = 16;
  c.upsample_steps.clear();
  c.rank = 4;
  c.color_channels = 6;
  c.dynamic_density_channels = 4;
  c.dynamic_color_channels = 4;
  c.static_hidden = 16;
  c.decompressor_hidden = 8;
  c.k_m = 3;
  c.variation_iterations = 20;
  c.variation_retrain_iterations = 10;
  c.variation_rays = 128;
  return c;
}

}  // namespace fixture
