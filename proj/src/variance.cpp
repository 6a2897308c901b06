#include "mixvox/variance.hpp"

#include "mixvox/binary_io.hpp"

namespace mixvox {

std::vector<uint8_t> VarianceMap::binarize(double gamma) const {
  std::vector<uint8_t> m(stddev.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = dynamic(i, gamma) ? 1 : 0;
  return m;
}

PixelVariance pixel_variance(std::span<const Rgb> frames) {
  if (frames.size() < 2) throw DomainError("pixel variance needs at least two frames");
  PixelVariance out;
  for (const Rgb& c : frames)
    for (int k = 0; k < 3; ++k) out.mean[k] += c[k];
  const double n = double(frames.size());
  for (int k = 0; k < 3; ++k) out.mean[k] /= n;
  double acc = 0.0;
  for (const Rgb& c : frames)
    for (int k = 0; k < 3; ++k) {
      const double d = c[k] - out.mean[k];
      acc += d * d;
    }
  out.stddev = std::sqrt(acc / (3.0 * n));
  return out;
}

std::vector<uint8_t> encode_variance_map(const VarianceMap& m) {
  if (m.stddev.size() != size_t(m.width) * m.height) throw DomainError("variance map size mismatch");
  ByteWriter w;
  w.u32(m.height);
  w.u32(m.width);
  w.f32s(m.stddev);
  return w.take();
}

VarianceMap decode_variance_map(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  VarianceMap m;
  m.height = r.u32();
  m.width = r.u32();
  const size_t n = size_t(m.width) * m.height;
  if (r.remaining() != n * 4) throw LoadError("variance map payload has the wrong length");
  m.stddev.resize(n);
  r.f32s(m.stddev);
  return m;
}

void write_variance_map(const std::string& path, const VarianceMap& m) {
  write_file_atomic(path, encode_variance_map(m));
}

VarianceMap read_variance_map(const std::string& path) { return decode_variance_map(read_file_bytes(path)); }

}  // namespace mixvox
