#pragma once

#include <atomic>
#include <span>
#include <string>
#include <vector>

#include "mixvox/binary_io.hpp"
#include "mixvox/core.hpp"

namespace mixvox {

struct MlpShape {
  uint32_t in = 1;
  uint32_t hidden = 1;
  uint32_t out = 1;
  uint32_t hidden_layers = 1;  ///< ReLU layers before the linear head
};

/// Copyable forward-pass counter.
class CallCounter {
 public:
  CallCounter() = default;
  CallCounter(const CallCounter& o) : n_(o.n_.load()) {}
  CallCounter& operator=(const CallCounter& o) {
    n_ = o.n_.load();
    return *this;
  }
  void bump() const { n_.fetch_add(1, std::memory_order_relaxed); }
  uint64_t value() const { return n_.load(); }
  void reset() const { n_ = 0; }

 private:
  mutable std::atomic<uint64_t> n_{0};
};

/// Small fully connected ReLU network with a linear head. Parameters are
/// float; activations are evaluated in double.
class Mlp {
 public:
  struct Cache {
    // acts[0] is the input; acts[l] the post-ReLU output of layer l-1.
    std::vector<std::vector<double>> acts;
  };

  Mlp() = default;
  Mlp(MlpShape shape, const std::string& name, ParamGroup group = ParamGroup::network);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  void init(Rng& rng);
  void zero();

  const MlpShape& shape() const { return shape_; }
  size_t layer_count() const { return weights_.size(); }
  Param& weight(size_t l) { return weights_[l]; }
  const Param& weight(size_t l) const { return weights_[l]; }
  Param& bias(size_t l) { return biases_[l]; }
  const Param& bias(size_t l) const { return biases_[l]; }
  uint32_t layer_in(size_t l) const;
  uint32_t layer_out(size_t l) const;

  void forward(std::span<const double> in, Cache& cache, std::span<double> out) const;
  /// Plain evaluation without a reusable cache.
  std::vector<double> operator()(std::span<const double> in) const;
  /// Accumulates parameter gradients; writes d(loss)/d(input) when din is non-empty.
  void backward(const Cache& cache, std::span<const double> dout, std::span<double> din, GradBuffer& grads) const;

  /// Multiply-adds of one forward pass.
  size_t flops() const;
  const CallCounter& calls() const { return calls_; }

  void collect(std::vector<Param*>& out);
  void write(ByteWriter& w) const;
  static Mlp read(ByteReader& r, const std::string& name, ParamGroup group = ParamGroup::network);

 private:
  MlpShape shape_;
  std::vector<Param> weights_;  // [out x in] row-major per layer
  std::vector<Param> biases_;
  CallCounter calls_;
};

}  // namespace mixvox
