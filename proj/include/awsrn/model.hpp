#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "awsrn/autodiff.hpp"
#include "awsrn/errors.hpp"
#include "awsrn/tensor.hpp"

namespace awsrn {

enum class RuKind { Basic, Adaptive };

inline std::string to_string(RuKind k) { return k == RuKind::Basic ? "basic" : "adaptive"; }

inline RuKind parse_ru_kind(std::string_view s) {
  if (s == "basic") return RuKind::Basic;
  if (s == "adaptive") return RuKind::Adaptive;
  throw ConfigError("unknown ru_kind '" + std::string(s) + "' (expected basic|adaptive)");
}

/// Architecture of one member of the network family.
struct ModelConfig {
  int scale = 2;
  int n_lfb = 1;
  int n_awru = 4;
  int c_feat = 32;
  int c_wide = 128;
  std::vector<int> awms_kernels{3, 5, 7, 9};
  RuKind ru_kind = RuKind::Adaptive;
  bool use_lrfu = true;
  bool use_awms = true;
  double init_unit_weight = 1.0;
  double init_branch_weight = 0.25;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  void validate() const {
    if (scale != 2 && scale != 3 && scale != 4 && scale != 8) {
      throw ConfigError("scale must be one of 2, 3, 4, 8 (got " + std::to_string(scale) + ")");
    }
    if (n_lfb < 1 || n_awru < 1 || c_feat < 1 || c_wide < 1) {
      throw ConfigError("n_lfb, n_awru, c_feat and c_wide must all be >= 1");
    }
    if (use_awms && awms_kernels.empty()) throw ConfigError("awms_kernels must not be empty");
    std::set<int> seen;
    for (int k : awms_kernels) {
      if (k < 1 || k % 2 == 0) {
        throw ConfigError("awms kernel sizes must be odd and positive (got " + std::to_string(k) +
                          ")");
      }
      if (!seen.insert(k).second) {
        throw ConfigError("awms kernel " + std::to_string(k) + " listed twice");
      }
    }
  }

  int upsample_channels() const { return 3 * scale * scale; }
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"awsrn-s", "awsrn-sd", "awsrn-m", "awsrn"};
  return names;
}

inline ModelConfig preset(std::string_view name, int scale) {
  ModelConfig c;
  c.scale = scale;
  if (name == "awsrn-s") {
    c.n_lfb = 1;
  } else if (name == "awsrn-sd") {
    c.n_lfb = 1;
    c.n_awru = 8;
    c.c_feat = 16;
  } else if (name == "awsrn-m") {
    c.n_lfb = 3;
  } else if (name == "awsrn") {
    c.n_lfb = 4;
  } else {
    std::string list;
    for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + std::string(name) + "' (valid: " + list + ")");
  }
  c.validate();
  return c;
}

enum class ParamRole { ConvDirection, ConvGain, ConvBias, UnitWeight, BranchWeight };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role;
};

/// The registry layout implied by a config: names, shapes and roles in
/// canonical order. Names depend on nothing but the config.
inline std::vector<ParamSpec> expected_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  auto conv = [&](const std::string& prefix, int cin, int cout, int k) {
    const auto ci = static_cast<std::size_t>(cin), co = static_cast<std::size_t>(cout),
               kk = static_cast<std::size_t>(k);
    out.push_back({prefix + ".v", {co, ci, kk, kk}, ParamRole::ConvDirection});
    out.push_back({prefix + ".g", {1, co, 1, 1}, ParamRole::ConvGain});
    out.push_back({prefix + ".b", {1, co, 1, 1}, ParamRole::ConvBias});
  };
  auto scalar = [&](const std::string& name, ParamRole role) {
    out.push_back({name, {1, 1, 1, 1}, role});
  };

  conv("ext", 3, cfg.c_feat, 3);
  for (int m = 0; m < cfg.n_lfb; ++m) {
    const std::string lfb = "lfb" + std::to_string(m);
    for (int k = 0; k < cfg.n_awru; ++k) {
      const std::string unit = lfb + ".awru" + std::to_string(k);
      conv(unit + ".expand", cfg.c_feat, cfg.c_wide, 3);
      conv(unit + ".shrink", cfg.c_wide, cfg.c_feat, 3);
      if (cfg.ru_kind == RuKind::Adaptive) {
        scalar(unit + ".lambda_res", ParamRole::UnitWeight);
        scalar(unit + ".lambda_x", ParamRole::UnitWeight);
      }
    }
    if (cfg.use_lrfu) {
      conv(lfb + ".fuse", cfg.n_awru * cfg.c_feat, cfg.c_feat, 3);
      scalar(lfb + ".lambda_res", ParamRole::UnitWeight);
      scalar(lfb + ".lambda_x", ParamRole::UnitWeight);
    }
  }
  if (cfg.use_awms) {
    for (int k : cfg.awms_kernels) {
      const std::string br = "awms.k" + std::to_string(k);
      conv(br, cfg.c_feat, cfg.upsample_channels(), k);
      scalar(br + ".alpha", ParamRole::BranchWeight);
    }
  } else {
    conv("head", cfg.c_feat, cfg.upsample_channels(), 3);
  }
  conv("up", 3, cfg.upsample_channels(), 3);
  return out;
}

template <class T>
struct Parameter {
  std::string name;
  Var<T> var;
  bool trainable = true;

  Tensor<T>& value() { return var.value(); }
  const Tensor<T>& value() const { return var.value(); }
};

/// Named parameters in insertion order.
template <class T>
class ParameterRegistry {
 public:
  ParameterRegistry() = default;
  ParameterRegistry(const ParameterRegistry&) = delete;
  ParameterRegistry& operator=(const ParameterRegistry&) = delete;
  ParameterRegistry(ParameterRegistry&&) noexcept = default;
  ParameterRegistry& operator=(ParameterRegistry&&) noexcept = default;

  Parameter<T>& add(std::string name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_[name] = items_.size();
    items_.push_back({std::move(name), trainable ? Var<T>::leaf(std::move(value))
                                                 : Var<T>::constant(std::move(value)),
                      trainable});
    return items_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
    return items_[it->second];
  }
  const Parameter<T>& at(const std::string& name) const {
    return const_cast<ParameterRegistry*>(this)->at(name);
  }

  void erase(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
    items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(it->second));
    reindex();
  }

  std::size_t size() const noexcept { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) p.value().zero_grad();
  }

  /// Deep copy: the clone shares no nodes with this registry.
  ParameterRegistry clone() const {
    ParameterRegistry out;
    for (const auto& p : items_) {
      Tensor<T> v(p.value().shape(), p.value().storage());
      out.add(p.name, std::move(v), p.trainable);
    }
    return out;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < items_.size(); ++i) index_[items_[i].name] = i;
  }

  std::vector<Parameter<T>> items_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// The network: feature extraction, stacked LFBs, AWMS head with global skip.
template <class T>
class AwsrnModel {
 public:
  /// Conv directions ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); gains = filter
  /// norms so the effective weight equals the raw draw; biases zero.
  static AwsrnModel build(const ModelConfig& cfg, std::uint64_t seed) {
    AwsrnModel m;
    m.config_ = cfg;
    std::mt19937_64 rng(seed);
    std::map<std::string, std::vector<double>> norms;
    for (const ParamSpec& spec : expected_layout(cfg)) {
      Tensor<T> t(spec.shape);
      switch (spec.role) {
        case ParamRole::ConvDirection: {
          const std::size_t fan = spec.shape.c * spec.shape.h * spec.shape.w;
          const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
          auto& nv = norms[layer_of(spec.name)];
          for (std::size_t o = 0; o < spec.shape.n; ++o) {
            double ss = 0.0;
            for (std::size_t i = 0; i < fan; ++i) {
              const T v = static_cast<T>((2.0 * detail::unit_uniform(rng) - 1.0) * bound);
              t[o * fan + i] = v;
              ss += static_cast<double>(v) * v;
            }
            if (!(ss > 0.0)) {
              throw NumericError("zero-norm filter " + std::to_string(o) + " in " + spec.name);
            }
            nv.push_back(std::sqrt(ss));
          }
          break;
        }
        case ParamRole::ConvGain: {
          const auto& nv = norms.at(layer_of(spec.name));
          for (std::size_t o = 0; o < nv.size(); ++o) t[o] = static_cast<T>(nv[o]);
          break;
        }
        case ParamRole::ConvBias: break;
        case ParamRole::UnitWeight: t[0] = static_cast<T>(cfg.init_unit_weight); break;
        case ParamRole::BranchWeight: t[0] = static_cast<T>(cfg.init_branch_weight); break;
      }
      m.params_.add(spec.name, std::move(t));
    }
    return m;
  }

  /// Wraps an existing registry; it must match the config's layout exactly.
  static AwsrnModel from_registry(const ModelConfig& cfg, ParameterRegistry<T> params) {
    const auto layout = expected_layout(cfg);
    if (layout.size() != params.size()) {
      throw ConfigError("registry has " + std::to_string(params.size()) +
                        " parameters, config expects " + std::to_string(layout.size()));
    }
    auto it = params.begin();
    for (const auto& spec : layout) {
      if (it->name != spec.name || !(it->value().shape() == spec.shape)) {
        throw ConfigError("registry entry '" + it->name + "' " + it->value().shape().str() +
                          " does not match expected '" + spec.name + "' " + spec.shape.str());
      }
      ++it;
    }
    AwsrnModel m;
    m.config_ = cfg;
    m.params_ = std::move(params);
    return m;
  }

  AwsrnModel clone() const { return from_registry(config_, params_.clone()); }

  const ModelConfig& config() const noexcept { return config_; }
  ParameterRegistry<T>& params() noexcept { return params_; }
  const ParameterRegistry<T>& params() const noexcept { return params_; }

  /// x0 = f_ext(I_LR).
  Var<T> extract(Tape<T>& tape, const Var<T>& lr) const { return conv(tape, lr, "ext"); }

  /// x_k = lambda_res * f_res(x) + lambda_x * x with f_res = conv3x3 -> ReLU -> conv3x3.
  /// Basic units use fixed unit weights (plain residual addition).
  Var<T> awru_forward(Tape<T>& tape, const Var<T>& x, int lfb, int unit) const {
    require_channels(x, config_.c_feat, "awru input");
    const std::string p = "lfb" + std::to_string(lfb) + ".awru" + std::to_string(unit);
    Var<T> h = conv(tape, x, p + ".expand");
    h = relu(tape, h);
    h = conv(tape, h, p + ".shrink");
    if (config_.ru_kind == RuKind::Basic) {
      const auto one = Var<T>::constant(Tensor<T>::scalar(T(1)));
      return weighted_add(tape, h, x, one, one);
    }
    return weighted_add(tape, h, x, params_.at(p + ".lambda_res").var,
                        params_.at(p + ".lambda_x").var);
  }

  /// Runs the block's AWRUs, fuses their concatenated outputs with a 3x3
  /// bottleneck and adds the weighted block input. Without LRFU the last
  /// unit's output is returned directly.
  Var<T> lfb_forward(Tape<T>& tape, const Var<T>& x_prev, int lfb) const {
    require_channels(x_prev, config_.c_feat, "lfb input");
    std::vector<Var<T>> outs;
    Var<T> h = x_prev;
    for (int k = 0; k < config_.n_awru; ++k) {
      h = awru_forward(tape, h, lfb, k);
      outs.push_back(h);
    }
    if (!config_.use_lrfu) return h;
    const std::string p = "lfb" + std::to_string(lfb);
    Var<T> cat = concat_channels<T>(tape, outs);
    Var<T> fused = conv(tape, cat, p + ".fuse");
    return weighted_add(tape, fused, x_prev, params_.at(p + ".lambda_res").var,
                        params_.at(p + ".lambda_x").var);
  }

  /// x_n from x_0 through every LFB.
  Var<T> body(Tape<T>& tape, const Var<T>& x0) const {
    Var<T> x = x0;
    for (int m = 0; m < config_.n_lfb; ++m) x = lfb_forward(tape, x, m);
    return x;
  }

  /// One unweighted reconstruction branch after pixel shuffle.
  Var<T> awms_branch(Tape<T>& tape, const Var<T>& xn, int kernel) const {
    return pixel_shuffle(tape, conv(tape, xn, "awms.k" + std::to_string(kernel)),
                         static_cast<std::size_t>(config_.scale));
  }

  /// f_up(I_LR): conv3x3 then pixel shuffle.
  Var<T> global_skip(Tape<T>& tape, const Var<T>& lr) const {
    return pixel_shuffle(tape, conv(tape, lr, "up"), static_cast<std::size_t>(config_.scale));
  }

  /// I_SR = sum_i alpha_i * f_rec^i(x_n) + f_up(I_LR).
  /// Branches are combined before the (shared) pixel shuffle; the shuffle is a
  /// permutation, so this equals shuffling each branch first, bit for bit.
  Var<T> awms_forward(Tape<T>& tape, const Var<T>& xn, const Var<T>& lr) const {
    require_channels(xn, config_.c_feat, "reconstruction input");
    require_channels(lr, 3, "low-resolution image");
    if (xn.shape().n != lr.shape().n || xn.shape().h != lr.shape().h ||
        xn.shape().w != lr.shape().w) {
      throw ShapeError("reconstruction input " + xn.shape().str() +
                       " does not match low-resolution image " + lr.shape().str());
    }
    std::vector<Term<T>> terms;
    if (config_.use_awms) {
      for (int k : config_.awms_kernels) {
        const std::string p = "awms.k" + std::to_string(k);
        terms.push_back({conv(tape, xn, p), params_.at(p + ".alpha").var});
      }
    } else {
      terms.push_back({conv(tape, xn, "head"), std::nullopt});
    }
    terms.push_back({conv(tape, lr, "up"), std::nullopt});
    return pixel_shuffle(tape, scaled_sum(tape, std::move(terms)),
                         static_cast<std::size_t>(config_.scale));
  }

  /// Unclamped I_SR of shape (N, 3, sH, sW).
  Var<T> forward(Tape<T>& tape, const Var<T>& lr) const {
    require_channels(lr, 3, "low-resolution image");
    const Var<T> x0 = extract(tape, lr);
    const Var<T> xn = body(tape, x0);
    return awms_forward(tape, xn, lr);
  }

  /// Inference entry point: no graph is kept and the result is clamped to [0, 1].
  Tensor<T> infer(const Tensor<T>& lr) const {
    Tape<T> tape(false);
    Tensor<T> out = forward(tape, Var<T>::constant(lr)).value();
    for (T& v : out.data()) v = std::clamp(v, T(0), T(1));
    return out;
  }

 private:
  AwsrnModel() = default;

  static std::string layer_of(const std::string& name) {
    return name.substr(0, name.rfind('.'));
  }

  static void require_channels(const Var<T>& x, int c, const char* what) {
    if (x.shape().c != static_cast<std::size_t>(c)) {
      throw ShapeError(std::string(what) + " has shape " + x.shape().str() + ", expected " +
                       std::to_string(c) + " channels");
    }
  }

  Var<T> conv(Tape<T>& tape, const Var<T>& x, const std::string& layer) const {
    const Var<T> w = weight_norm(tape, params_.at(layer + ".v").var, params_.at(layer + ".g").var);
    return conv2d(tape, x, w, params_.at(layer + ".b").var);
  }

  ModelConfig config_;
  ParameterRegistry<T> params_;
};

}  // namespace awsrn
