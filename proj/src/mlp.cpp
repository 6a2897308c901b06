#include "mixvox/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace mixvox {

Mlp::Mlp(MlpShape shape, const std::string& name, ParamGroup group) : shape_(shape) {
  if (shape.in == 0 || shape.out == 0 || (shape.hidden_layers > 0 && shape.hidden == 0))
    throw DomainError("mlp dimensions must be positive");
  const size_t n = size_t(shape.hidden_layers) + 1;
  for (size_t l = 0; l < n; ++l) {
    weights_.emplace_back(name + ".w" + std::to_string(l), group, size_t(layer_out(l)) * layer_in(l));
    biases_.emplace_back(name + ".b" + std::to_string(l), group, layer_out(l));
  }
}

uint32_t Mlp::layer_in(size_t l) const { return l == 0 ? shape_.in : shape_.hidden; }
uint32_t Mlp::layer_out(size_t l) const { return l == shape_.hidden_layers ? shape_.out : shape_.hidden; }

void Mlp::init(Rng& rng) {
  for (size_t l = 0; l < weights_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(double(layer_in(l)));
    for (auto& w : weights_[l].value) w = float((2.0 * uniform01(rng) - 1.0) * bound);
    std::fill(biases_[l].value.begin(), biases_[l].value.end(), 0.f);
  }
}

void Mlp::zero() {
  for (auto& p : weights_) std::fill(p.value.begin(), p.value.end(), 0.f);
  for (auto& p : biases_) std::fill(p.value.begin(), p.value.end(), 0.f);
}

namespace {

void affine(const float* W, const float* b, const double* x, uint32_t in, uint32_t out, double* y) {
  for (uint32_t o = 0; o < out; ++o) {
    const float* row = W + size_t(o) * in;
    // Four partial sums so the loop pipelines without reassociation flags.
    double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
    uint32_t i = 0;
    for (; i + 4 <= in; i += 4) {
      a0 += double(row[i]) * x[i];
      a1 += double(row[i + 1]) * x[i + 1];
      a2 += double(row[i + 2]) * x[i + 2];
      a3 += double(row[i + 3]) * x[i + 3];
    }
    for (; i < in; ++i) a0 += double(row[i]) * x[i];
    y[o] = double(b[o]) + ((a0 + a1) + (a2 + a3));
  }
}

}  // namespace

void Mlp::forward(std::span<const double> in, Cache& cache, std::span<double> out) const {
  calls_.bump();
  const size_t L = weights_.size();
  cache.acts.resize(L);
  cache.acts[0].assign(in.begin(), in.end());
  for (size_t l = 0; l < L; ++l) {
    const uint32_t ni = layer_in(l), no = layer_out(l);
    const bool last = l + 1 == L;
    double* y = last ? out.data() : nullptr;
    if (!last) {
      cache.acts[l + 1].resize(no);
      y = cache.acts[l + 1].data();
    }
    affine(weights_[l].value.data(), biases_[l].value.data(), cache.acts[l].data(), ni, no, y);
    if (!last)
      for (uint32_t o = 0; o < no; ++o) y[o] = y[o] > 0.0 ? y[o] : 0.0;
  }
}

std::vector<double> Mlp::operator()(std::span<const double> in) const {
  Cache c;
  std::vector<double> out(shape_.out);
  forward(in, c, out);
  return out;
}

void Mlp::backward(const Cache& cache, std::span<const double> dout, std::span<double> din, GradBuffer& grads) const {
  const size_t L = weights_.size();
  thread_local std::vector<double> dy, dx;
  dy.assign(dout.begin(), dout.end());
  for (size_t l = L; l-- > 0;) {
    const uint32_t ni = layer_in(l), no = layer_out(l);
    const std::vector<double>& x = cache.acts[l];
    const float* W = weights_[l].value.data();
    double* gW = grads.at(weights_[l]);
    double* gb = grads.at(biases_[l]);
    const bool need_dx = l > 0 || !din.empty();
    if (need_dx) dx.assign(ni, 0.0);
    for (uint32_t o = 0; o < no; ++o) {
      const double g = dy[o];
      if (g == 0.0) continue;
      if (gb) gb[o] += g;
      const float* row = W + size_t(o) * ni;
      if (gW) {
        double* grow = gW + size_t(o) * ni;
        for (uint32_t i = 0; i < ni; ++i) grow[i] += g * x[i];
      }
      if (need_dx)
        for (uint32_t i = 0; i < ni; ++i) dx[i] += double(row[i]) * g;
    }
    if (l > 0) {
      // ReLU gate: the stored activation is positive exactly where the gate was open.
      for (uint32_t i = 0; i < ni; ++i)
        if (x[i] <= 0.0) dx[i] = 0.0;
      dy.swap(dx);
    } else if (!din.empty()) {
      std::copy(dx.begin(), dx.end(), din.begin());
    }
  }
}

size_t Mlp::flops() const {
  size_t f = 0;
  for (size_t l = 0; l < weights_.size(); ++l) f += size_t(layer_in(l)) * layer_out(l);
  return f;
}

void Mlp::collect(std::vector<Param*>& out) {
  for (size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
}

void Mlp::write(ByteWriter& w) const {
  w.u32(uint32_t(weights_.size()));
  for (size_t l = 0; l < weights_.size(); ++l) {
    w.u32(layer_out(l));
    w.u32(layer_in(l));
  }
  for (size_t l = 0; l < weights_.size(); ++l) {
    w.f32s(weights_[l].value);
    w.f32s(biases_[l].value);
  }
}

Mlp Mlp::read(ByteReader& r, const std::string& name, ParamGroup group) {
  const uint32_t n = r.u32();
  if (n == 0 || n > 64) throw LoadError("corrupt network header");
  std::vector<std::pair<uint32_t, uint32_t>> dims(n);
  for (auto& d : dims) {
    d.first = r.u32();
    d.second = r.u32();
  }
  MlpShape s;
  s.in = dims[0].second;
  s.out = dims.back().first;
  s.hidden_layers = n - 1;
  s.hidden = n > 1 ? dims[0].first : 0;
  for (uint32_t l = 0; l < n; ++l) {
    const uint32_t ei = l == 0 ? s.in : s.hidden;
    const uint32_t eo = l + 1 == n ? s.out : s.hidden;
    if (dims[l].first != eo || dims[l].second != ei) throw LoadError("inconsistent network layer shapes");
  }
  Mlp m(s, name, group);
  for (uint32_t l = 0; l < n; ++l) {
    r.f32s(m.weights_[l].value);
    r.f32s(m.biases_[l].value);
  }
  return m;
}

}  // namespace mixvox
