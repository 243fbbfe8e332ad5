#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mgcat/nn/tensor.hpp"
#include "mgcat/rng.hpp"

namespace mgcat::nn {

/// Insertion-ordered set of named leaf tensors.
class ParamStore {
 public:
  /// New trainable tensor filled from Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor& add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor& add_constant(const std::string& name, Shape shape, double value);
  Tensor& add(const std::string& name, Tensor t);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Tensor> tensors() const;
  /// Tensors whose names start with any of `prefixes`.
  std::vector<std::string> names_with_prefix(const std::vector<std::string>& prefixes) const;

  void zero_grad();
  /// FNV-1a over the raw bytes of the listed tensors, for freeze checks.
  std::uint64_t checksum(const std::vector<std::string>& names) const;
  /// Deep copy of values (graph state is not copied).
  ParamStore clone() const;
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam state for a subset of a ParamStore.
class ParamGroup {
 public:
  ParamGroup(ParamStore& store, std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::int64_t step_count() const noexcept { return step_; }

  /// Bias-corrected Adam update, then zeroes grads. Throws on NaN/inf grads
  /// naming the parameter (no parameter is modified in that case).
  void adam_step(const AdamOptions& opt);

 private:
  ParamStore* store_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_ = 0;
};

/// Max over all elements of |analytic - numeric| / max(1e-8, |analytic|+|numeric|),
/// numeric from central differences with step h. `loss` must rebuild its
/// graph on every call and be deterministic.
double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params, double h = 1e-5);

/// Per-name breakdown of the same check.
std::map<std::string, double> finite_diff_report(const std::function<Tensor()>& loss, const ParamStore& store,
                                                 const std::vector<std::string>& names, double h = 1e-5);

/// Per-name breakdown where each element keeps its smallest error over
/// `steps`.
std::map<std::string, double> finite_diff_report(const std::function<Tensor()>& loss, const ParamStore& store,
                                                 const std::vector<std::string>& names,
                                                 const std::vector<double>& steps);

inline const std::vector<double> kStepLadder = {1e-3, 1e-4, 1e-5, 1e-6};

// Checkpoint: magic "MGCATCKP", uint32 version, uint32 count, then per tensor:
// uint32 name length, name bytes, uint32 rank, uint64 dims, float64 payload.
// All integers and floats little-endian.
inline constexpr char kCheckpointMagic[8] = {'M', 'G', 'C', 'A', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace mgcat::nn
