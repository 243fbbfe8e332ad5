#include "mgcat/nn/optim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mgcat/common.hpp"

namespace mgcat::nn {

// ---------------------------------------------------------------------------
// ParamStore

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ValidationError("duplicate parameter " + name);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

Tensor& ParamStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return add(name, Tensor::from(std::move(shape), std::move(v), true));
}

Tensor& ParamStore::add_constant(const std::string& name, Shape shape, double value) {
  std::vector<double> v(shape_size(shape), value);
  return add(name, Tensor::from(std::move(shape), std::move(v), true));
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter " + name);
  return tensors_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter " + name);
  return tensors_[it->second];
}

std::vector<Tensor> ParamStore::tensors() const { return tensors_; }

std::vector<std::string> ParamStore::names_with_prefix(const std::vector<std::string>& prefixes) const {
  std::vector<std::string> out;
  for (const auto& n : names_)
    for (const auto& p : prefixes)
      if (n.rfind(p, 0) == 0) {
        out.push_back(n);
        break;
      }
  return out;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

std::uint64_t ParamStore::checksum(const std::vector<std::string>& names) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& n : names) {
    for (double v : at(n).data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& t = tensors_[i];
    out.add(names_[i], Tensor::from(t.shape(), std::vector<double>(t.data().begin(), t.data().end()),
                                    t.requires_grad()));
  }
  return out;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& src = other.at(names_[i]);
    auto dst = tensors_[i].data_mut();
    if (src.size() != dst.size()) throw ValidationError("shape mismatch copying " + names_[i]);
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------
// Adam

ParamGroup::ParamGroup(ParamStore& store, std::vector<std::string> names) : store_(&store), names_(std::move(names)) {
  for (const auto& n : names_) {
    const auto size = store.at(n).size();
    m_.emplace_back(size, 0.0);
    v_.emplace_back(size, 0.0);
  }
}

void ParamGroup::adam_step(const AdamOptions& opt) {
  for (const auto& n : names_) {
    const auto& t = store_->at(n);
    for (double g : t.grad())
      if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in parameter " + n);
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < names_.size(); ++p) {
    auto& t = store_->at(names_[p]);
    if (!t.has_grad()) continue;
    auto w = t.data_mut();
    auto g = t.grad_mut();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
      g[i] = 0.0;
    }
  }
}

// ---------------------------------------------------------------------------
// Finite differences

namespace {

double rel_err(double a, double n) { return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)); }

std::vector<std::vector<double>> analytic_grads(const std::function<Tensor()>& loss, std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
  auto l = loss();
  backward(l);
  std::vector<std::vector<double>> out;
  for (auto& p : params) {
    if (p.has_grad())
      out.emplace_back(p.grad().begin(), p.grad().end());
    else
      out.emplace_back(p.size(), 0.0);
    p.zero_grad();
  }
  return out;
}

double numeric(const std::function<Tensor()>& loss, Tensor& p, std::size_t i, double h) {
  NoGradGuard guard;
  auto w = p.data_mut();
  const double orig = w[i];
  w[i] = orig + h;
  const double fp = loss().item();
  w[i] = orig - h;
  const double fm = loss().item();
  w[i] = orig;
  return (fp - fm) / (2.0 * h);
}

}  // namespace

double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params, double h) {
  auto grads = analytic_grads(loss, params);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].size(); ++i)
      worst = std::max(worst, rel_err(grads[p][i], numeric(loss, params[p], i, h)));
  return worst;
}

std::map<std::string, double> finite_diff_report(const std::function<Tensor()>& loss, const ParamStore& store,
                                                 const std::vector<std::string>& names, double h) {
  return finite_diff_report(loss, store, names, std::vector<double>{h});
}

std::map<std::string, double> finite_diff_report(const std::function<Tensor()>& loss, const ParamStore& store,
                                                 const std::vector<std::string>& names,
                                                 const std::vector<double>& steps) {
  if (steps.empty()) throw ValidationError("finite_diff_report: no steps");
  std::vector<Tensor> params;
  for (const auto& n : names) params.push_back(store.at(n));
  auto grads = analytic_grads(loss, params);
  std::map<std::string, double> report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double h : steps) {
        best = std::min(best, rel_err(grads[p][i], numeric(loss, params[p], i, h)));
        if (best < 1e-7) break;
      }
      worst = std::max(worst, best);
    }
    report[names[p]] = worst;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ValidationError(path + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.names().size()));
  for (const auto& name : store.names()) {
    const auto& t = store.at(name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p);
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw ValidationError(p + ": not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in, p);
  if (version != kCheckpointVersion) throw ValidationError(p + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in, p);
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, p);
    if (len > 4096) throw ValidationError(p + ": implausible name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ValidationError(p + ": truncated checkpoint");
    const auto rank = get<std::uint32_t>(in, p);
    if (rank > 8) throw ValidationError(p + ": implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, p));
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = get<double>(in, p);
    store.add(name, Tensor::from(std::move(shape), std::move(values), true));
  }
  return store;
}

}  // namespace mgcat::nn
