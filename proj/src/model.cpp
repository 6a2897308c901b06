#include "mixvox/model.hpp"

namespace mixvox {

Model::Model(const ModelConfig& cfg, const BBox& box, uint32_t res, uint32_t frames, Rng& rng)
    : bbox(box), resolution(res), frame_count(frames) {
  box.validate();
  stat = StaticField(cfg.static_field, res, box, rng);
  dyn = DynamicField(cfg.dynamic_field, res, box, frames, rng);
  variation = make_variation_field(GridKind::dense, res, box, 0.0, 1, rng);
  mask = empty_mask(GridDims::cube(res), box);
}

std::vector<Param*> Model::parameters() {
  std::vector<Param*> out;
  stat.collect(out);
  dyn.collect(out);
  variation.logits.collect(out);
  return out;
}

void Model::upsample(uint32_t res) {
  if (res < resolution) throw UnsupportedError("grids can only grow");
  stat.upsample(res);
  dyn.upsample(res);
  resolution = res;
}

}  // namespace mixvox
