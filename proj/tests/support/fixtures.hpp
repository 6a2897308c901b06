#pragma once

#include "mixvox/config.hpp"
#include "mixvox/synthetic.hpp"

namespace fixture {

/// 12x12 pixels, 3 train cameras plus one eval camera, T = 6.
mixvox::SyntheticSceneSpec tiny_spec();
mixvox::SyntheticScene tiny_scene();

/// A few-second training run on tiny_scene: 16^3 grids, small networks,
/// no upsampling, short variation stage.
mixvox::RunConfig tiny_config(long iterations);

}  // namespace fixture
