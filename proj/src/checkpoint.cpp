#include "mixvox/checkpoint.hpp"

#include <bit>
#include <functional>

#include "mixvox/binary_io.hpp"

namespace mixvox {

namespace {

enum class Tag : uint8_t { meta = 1, grid = 2, mlp = 3, matrix = 4, mask = 5, adam = 6, step = 7 };

void put_f64(ByteWriter& w, double v) { w.u64(std::bit_cast<uint64_t>(v)); }
double get_f64(ByteReader& r) { return std::bit_cast<double>(r.u64()); }

class BlockWriter {
 public:
  void add(Tag tag, const std::string& name, const std::function<void(ByteWriter&)>& fill) {
    ByteWriter payload;
    fill(payload);
    body_.u8(uint8_t(tag));
    body_.str(name);
    body_.u64(payload.bytes().size());
    body_.raw(payload.bytes().data(), payload.bytes().size());
    ++count_;
  }
  uint32_t count() const { return count_; }
  const std::vector<uint8_t>& bytes() const { return body_.bytes(); }

 private:
  ByteWriter body_;
  uint32_t count_ = 0;
};

void write_matrix(ByteWriter& w, const Param& p, uint32_t rows, uint32_t cols) {
  if (size_t(rows) * cols != p.value.size()) throw DomainError("matrix shape mismatch for " + p.name);
  w.u32(rows);
  w.u32(cols);
  w.f32s(p.value);
}

Param read_matrix(ByteReader& r, const std::string& name, ParamGroup group) {
  const uint32_t rows = r.u32(), cols = r.u32();
  if (size_t(rows) * cols > r.remaining() / 4) throw LoadError("matrix block '" + name + "' truncated");
  Param p(name, group, size_t(rows) * cols);
  r.f32s(p.value);
  return p;
}

struct Block {
  Tag tag;
  std::string name;
  std::span<const uint8_t> payload;
};

}  // namespace

std::vector<uint8_t> encode_checkpoint(const Checkpoint& c) {
  const Model& m = c.model;
  BlockWriter bw;
  bw.add(Tag::meta, "model", [&](ByteWriter& w) {
    for (float v : m.bbox.lo) w.f32(v);
    for (float v : m.bbox.hi) w.f32(v);
    w.u32(m.resolution);
    w.u32(m.frame_count);
    w.u32(m.stat.encoding.n_bands);
    put_f64(w, m.stat.density_shift);
    w.u32(m.dyn.encoding.n_bands);
    put_f64(w, m.dyn.density_shift);
    w.u32(m.dyn.concat_embed_width);
    w.u32(m.dyn.hidden());
  });
  bw.add(Tag::grid, "static.density", [&](ByteWriter& w) { write_grid(w, m.stat.density_grid); });
  bw.add(Tag::grid, "static.color", [&](ByteWriter& w) { write_grid(w, m.stat.color_grid); });
  bw.add(Tag::mlp, "static.color_net", [&](ByteWriter& w) { m.stat.color_net.write(w); });
  bw.add(Tag::grid, "dynamic.density_feat", [&](ByteWriter& w) { write_grid(w, m.dyn.density_feat); });
  bw.add(Tag::grid, "dynamic.color_feat", [&](ByteWriter& w) { write_grid(w, m.dyn.color_feat); });
  bw.add(Tag::mlp, "dynamic.density_dec", [&](ByteWriter& w) { m.dyn.density_dec.write(w); });
  bw.add(Tag::mlp, "dynamic.color_dec", [&](ByteWriter& w) { m.dyn.color_dec.write(w); });
  bw.add(Tag::matrix, "dynamic.latent_sigma",
         [&](ByteWriter& w) { write_matrix(w, m.dyn.latent_sigma, m.frame_count, m.dyn.hidden()); });
  bw.add(Tag::matrix, "dynamic.latent_color",
         [&](ByteWriter& w) { write_matrix(w, m.dyn.latent_color, m.frame_count, m.dyn.hidden()); });
  bw.add(Tag::grid, "variation.logits", [&](ByteWriter& w) { write_grid(w, m.variation.logits); });
  bw.add(Tag::mask, "mask", [&](ByteWriter& w) {
    const auto rle = encode_mask_rle(m.mask);
    w.raw(rle.data(), rle.size());
  });
  if (c.adam) bw.add(Tag::adam, "adam", [&](ByteWriter& w) { c.adam->write(w); });
  bw.add(Tag::step, "step", [&](ByteWriter& w) { w.u64(c.step); });

  ByteWriter out;
  out.raw("MXVX", 4);
  out.u32(kCheckpointVersion);
  out.str(c.config_text);
  out.u32(bw.count());
  out.raw(bw.bytes().data(), bw.bytes().size());
  return out.take();
}

Checkpoint decode_checkpoint(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "MXVX") throw LoadError("not a checkpoint (bad magic)");
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw LoadError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  c.config_text = r.str();
  const uint32_t n = r.u32();
  std::vector<Block> blocks;
  for (uint32_t i = 0; i < n; ++i) {
    Block b;
    b.tag = Tag(r.u8());
    b.name = r.str();
    const uint64_t len = r.u64();
    if (len > r.remaining()) throw LoadError("checkpoint block '" + b.name + "' truncated");
    b.payload = r.bytes(size_t(len));
    blocks.push_back(b);
  }
  if (!r.done()) throw LoadError("trailing bytes after checkpoint blocks");

  auto find = [&](Tag tag, const std::string& name) -> const Block* {
    for (const Block& b : blocks)
      if (b.tag == tag && b.name == name) return &b;
    return nullptr;
  };
  auto need = [&](Tag tag, const std::string& name) -> ByteReader {
    const Block* b = find(tag, name);
    if (!b) throw LoadError("checkpoint is missing block '" + name + "'");
    return ByteReader(b->payload);
  };
  auto finish = [](ByteReader& br, const std::string& name) {
    if (!br.done()) throw LoadError("checkpoint block '" + name + "' has trailing bytes");
  };

  Model& m = c.model;
  uint32_t dyn_hidden;
  {
    ByteReader br = need(Tag::meta, "model");
    for (auto& v : m.bbox.lo) v = br.f32();
    for (auto& v : m.bbox.hi) v = br.f32();
    m.resolution = br.u32();
    m.frame_count = br.u32();
    m.stat.encoding.n_bands = br.u32();
    m.stat.density_shift = get_f64(br);
    m.dyn.encoding.n_bands = br.u32();
    m.dyn.density_shift = get_f64(br);
    m.dyn.concat_embed_width = br.u32();
    dyn_hidden = br.u32();
    finish(br, "model");
  }
  auto grid = [&](const std::string& name, ParamGroup g) {
    ByteReader br = need(Tag::grid, name);
    Grid out = read_grid(br, name, g);
    finish(br, name);
    return out;
  };
  auto mlp = [&](const std::string& name) {
    ByteReader br = need(Tag::mlp, name);
    Mlp out = Mlp::read(br, name);
    finish(br, name);
    return out;
  };
  auto matrix = [&](const std::string& name) {
    ByteReader br = need(Tag::matrix, name);
    Param p = read_matrix(br, name, ParamGroup::network);
    finish(br, name);
    return p;
  };
  m.stat.density_grid = grid("static.density", ParamGroup::voxel);
  m.stat.color_grid = grid("static.color", ParamGroup::voxel);
  m.stat.color_net = mlp("static.color_net");
  m.dyn.density_feat = grid("dynamic.density_feat", ParamGroup::voxel);
  m.dyn.color_feat = grid("dynamic.color_feat", ParamGroup::voxel);
  m.dyn.density_dec = mlp("dynamic.density_dec");
  m.dyn.color_dec = mlp("dynamic.color_dec");
  m.dyn.latent_sigma = matrix("dynamic.latent_sigma");
  m.dyn.latent_color = matrix("dynamic.latent_color");
  m.dyn.restore_shape(m.frame_count, dyn_hidden);
  if (m.dyn.latent_sigma.value.size() != size_t(m.frame_count) * dyn_hidden ||
      m.dyn.latent_color.value.size() != size_t(m.frame_count) * dyn_hidden)
    throw LoadError("time latents do not match frame count and hidden width");
  m.variation.logits = grid("variation.logits", ParamGroup::frozen);
  m.variation.set_trainable(false);
  {
    const Block* b = find(Tag::mask, "mask");
    if (!b) throw LoadError("checkpoint is missing block 'mask'");
    m.mask = decode_mask_rle(b->payload);
  }
  if (find(Tag::adam, "adam")) {
    ByteReader br = need(Tag::adam, "adam");
    c.adam = Adam::read(br);
    finish(br, "adam");
  }
  {
    ByteReader br = need(Tag::step, "step");
    c.step = br.u64();
    finish(br, "step");
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) { write_file_atomic(path, encode_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace mixvox
