#include "mixvox/params.hpp"

#include <bit>
#include <cmath>
#include <unordered_set>

namespace mixvox {

ParamSet::ParamSet(std::vector<Param*> params) : params_(std::move(params)) {
  std::unordered_set<std::string> names;
  std::unordered_set<const Param*> seen;
  for (size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (!seen.insert(p).second) throw DomainError("parameter registered twice: " + p->name);
    if (!names.insert(p->name).second) throw DomainError("duplicate parameter name: " + p->name);
    p->slot = int(i);
  }
}

Param* ParamSet::find(const std::string& name) const {
  for (Param* p : params_)
    if (p->name == name) return p;
  return nullptr;
}

size_t ParamSet::scalar_count() const {
  size_t n = 0;
  for (const Param* p : params_) n += p->value.size();
  return n;
}

void ParamSet::check_finite(const GradBuffer& g) const {
  for (size_t i = 0; i < params_.size(); ++i)
    for (double v : g.slot(i))
      if (!std::isfinite(v)) throw TrainingError("non-finite gradient in parameter '" + params_[i]->name + "'");
}

double lr_decay_factor(uint64_t iteration, uint64_t total, double final_ratio) {
  if (total == 0) return 1.0;
  return std::pow(final_ratio, double(std::min(iteration, total)) / double(total));
}

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  m_.resize(params.size());
  v_.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i].assign(params[i].value.size(), 0.f);
    v_[i].assign(params[i].value.size(), 0.f);
  }
}

bool Adam::matches(const ParamSet& params) const {
  if (m_.size() != params.size()) return false;
  for (size_t i = 0; i < params.size(); ++i)
    if (m_[i].size() != params[i].value.size()) return false;
  return true;
}

void Adam::step(ParamSet& params, const GradBuffer& grads, const LearningRates& lr) {
  if (!matches(params)) throw DomainError("optimizer state does not match parameter set");
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(steps_));
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    const double rate = lr.for_group(p.group);
    if (rate == 0.0) continue;
    const std::vector<double>& g = grads.slot(i);
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (size_t k = 0; k < p.value.size(); ++k) {
      const double mk = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      const double vk = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      m[k] = float(mk);
      v[k] = float(vk);
      const double mh = mk / bc1, vh = vk / bc2;
      p.value[k] = float(double(p.value[k]) - rate * mh / (std::sqrt(vh) + cfg_.eps));
    }
  }
}

void Adam::write(ByteWriter& w) const {
  w.u64(std::bit_cast<uint64_t>(cfg_.beta1));
  w.u64(std::bit_cast<uint64_t>(cfg_.beta2));
  w.u64(std::bit_cast<uint64_t>(cfg_.eps));
  w.u64(steps_);
  w.u32(uint32_t(m_.size()));
  for (size_t i = 0; i < m_.size(); ++i) {
    w.u64(m_[i].size());
    w.f32s(m_[i]);
    w.f32s(v_[i]);
  }
}

Adam Adam::read(ByteReader& r) {
  Adam a;
  a.cfg_.beta1 = std::bit_cast<double>(r.u64());
  a.cfg_.beta2 = std::bit_cast<double>(r.u64());
  a.cfg_.eps = std::bit_cast<double>(r.u64());
  a.steps_ = r.u64();
  const uint32_t n = r.u32();
  a.m_.resize(n);
  a.v_.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint64_t len = r.u64();
    if (len > r.remaining() / 8) throw LoadError("optimizer block truncated");
    a.m_[i].resize(len);
    a.v_[i].resize(len);
    r.f32s(a.m_[i]);
    r.f32s(a.v_[i]);
  }
  return a;
}

}  // namespace mixvox
