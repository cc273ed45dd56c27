#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "awsrn/errors.hpp"
#include "awsrn/model.hpp"

namespace awsrn {

struct LayerCost {
  std::string name;
  std::size_t params = 0;
  double mults = 0.0;
};

/// Parameter and Multi-Adds totals with a per-layer breakdown.
/// Multi-Adds count one multiply per kernel tap per output position; every
/// conv runs on the LR grid, i.e. (out_w * out_h) / s^2 positions.
struct ComplexityReport {
  std::size_t out_w = 1280;
  std::size_t out_h = 720;
  std::vector<LayerCost> layers;
  std::size_t total_params = 0;
  double multi_adds = 0.0;

  std::string to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(28) << "layer" << std::right << std::setw(12) << "params"
       << std::setw(20) << "mult-adds" << '\n';
    for (const auto& l : layers) {
      os << std::left << std::setw(28) << l.name << std::right << std::setw(12) << l.params
         << std::setw(20) << std::fixed << std::setprecision(0) << l.mults << '\n';
    }
    os << std::left << std::setw(28) << "total" << std::right << std::setw(12) << total_params
       << std::setw(20) << std::fixed << std::setprecision(0) << multi_adds << '\n';
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "layer,params,mult_adds\n";
    for (const auto& l : layers) {
      os << l.name << ',' << l.params << ',' << std::fixed << std::setprecision(0) << l.mults
         << '\n';
    }
    os << "total," << total_params << ',' << std::fixed << std::setprecision(0) << multi_adds
       << '\n';
    return os.str();
  }
};

/// Thousands, rounded to nearest ("397K").
inline std::string format_kilo(std::size_t n) {
  return std::to_string((n + 500) / 1000) + "K";
}

/// Billions with one decimal ("91.2G").
inline std::string format_giga(double n) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << n / 1e9 << 'G';
  return os.str();
}

namespace detail {

inline std::string layer_name(const std::string& param) {
  return param.substr(0, param.rfind('.'));
}

inline bool is_conv_direction(const std::string& param) {
  return param.size() > 2 && param.compare(param.size() - 2, 2, ".v") == 0;
}

/// Builds the report from (name, shape) pairs in registry order.
template <class Range>
ComplexityReport tally(const Range& entries, int scale, std::size_t out_w, std::size_t out_h) {
  ComplexityReport r;
  r.out_w = out_w;
  r.out_h = out_h;
  const double positions =
      static_cast<double>(out_w) * static_cast<double>(out_h) / (double(scale) * double(scale));
  for (const auto& [name, shape] : entries) {
    const std::string layer = layer_name(name);
    if (r.layers.empty() || r.layers.back().name != layer) r.layers.push_back({layer, 0, 0.0});
    LayerCost& l = r.layers.back();
    l.params += shape.numel();
    if (is_conv_direction(name)) l.mults += static_cast<double>(shape.numel()) * positions;
  }
  for (const auto& l : r.layers) {
    r.total_params += l.params;
    r.multi_adds += l.mults;
  }
  return r;
}

}  // namespace detail

/// Complexity of the architecture a config describes (no weights needed).
inline ComplexityReport analyze_complexity(const ModelConfig& cfg, std::size_t out_w = 1280,
                                           std::size_t out_h = 720) {
  std::vector<std::pair<std::string, Shape>> entries;
  for (const auto& spec : expected_layout(cfg)) entries.emplace_back(spec.name, spec.shape);
  return detail::tally(entries, cfg.scale, out_w, out_h);
}

/// Complexity of a built model, counting every stored scalar in its registry.
template <class T>
ComplexityReport analyze_complexity(const AwsrnModel<T>& model, std::size_t out_w = 1280,
                                    std::size_t out_h = 720) {
  std::vector<std::pair<std::string, Shape>> entries;
  for (const auto& p : model.params()) entries.emplace_back(p.name, p.value().shape());
  return detail::tally(entries, model.config().scale, out_w, out_h);
}

template <class T>
std::size_t count_params(const AwsrnModel<T>& model) {
  return analyze_complexity(model).total_params;
}

template <class T>
double count_multi_adds(const AwsrnModel<T>& model, std::size_t out_w = 1280,
                        std::size_t out_h = 720) {
  return analyze_complexity(model, out_w, out_h).multi_adds;
}

// ---------------------------------------------------------------------------
// Adaptive-weight inspection

struct UnitWeightRow {
  int depth = 0;  // global AWRU index, lfb * n_awru + unit
  int lfb = 0;
  int unit = 0;
  double lambda_res = 1.0;
  double lambda_x = 1.0;
  bool learnable = true;

  friend bool operator==(const UnitWeightRow&, const UnitWeightRow&) = default;
};

struct BlockWeightRow {
  int lfb = 0;
  double lambda_res = 1.0;
  double lambda_x = 1.0;

  friend bool operator==(const BlockWeightRow&, const BlockWeightRow&) = default;
};

struct BranchWeightRow {
  int kernel = 0;
  double alpha = 0.0;

  friend bool operator==(const BranchWeightRow&, const BranchWeightRow&) = default;
};

/// Current adaptive weights in depth order. Basic units report their fixed
/// unit weights; blocks without LRFU and heads without AWMS have no rows.
struct WeightReport {
  std::vector<UnitWeightRow> units;
  std::vector<BlockWeightRow> blocks;
  std::vector<BranchWeightRow> branches;

  friend bool operator==(const WeightReport&, const WeightReport&) = default;

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(9);
    os << "kind,depth,lfb,unit,kernel,lambda_res,lambda_x,alpha\n";
    for (const auto& u : units) {
      os << (u.learnable ? "awru" : "basic_ru") << ',' << u.depth << ',' << u.lfb << ','
         << u.unit << ",," << u.lambda_res << ',' << u.lambda_x << ",\n";
    }
    for (const auto& b : blocks) {
      os << "lfb," << b.lfb << ',' << b.lfb << ",,," << b.lambda_res << ',' << b.lambda_x
         << ",\n";
    }
    for (const auto& b : branches) os << "branch,,,," << b.kernel << ",,," << b.alpha << '\n';
    return os.str();
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "residual units (depth, lfb, unit, lambda_res, lambda_x)\n";
    for (const auto& u : units) {
      os << "  " << std::setw(3) << u.depth << std::setw(5) << u.lfb << std::setw(5) << u.unit
         << std::setw(10) << u.lambda_res << std::setw(10) << u.lambda_x
         << (u.learnable ? "" : "  (fixed)") << '\n';
    }
    if (!blocks.empty()) {
      os << "fusion blocks (lfb, lambda_res, lambda_x)\n";
      for (const auto& b : blocks) {
        os << "  " << std::setw(3) << b.lfb << std::setw(10) << b.lambda_res << std::setw(10)
           << b.lambda_x << '\n';
      }
    }
    if (!branches.empty()) {
      os << "reconstruction branches (kernel, alpha)\n";
      for (const auto& b : branches) {
        os << "  " << b.kernel << 'x' << b.kernel << std::setw(10) << b.alpha << '\n';
      }
    }
    return os.str();
  }
};

template <class T>
WeightReport inspect_weights(const AwsrnModel<T>& model) {
  const ModelConfig& cfg = model.config();
  const auto& reg = model.params();
  auto scalar = [&](const std::string& name) {
    return static_cast<double>(reg.at(name).value()[0]);
  };
  WeightReport r;
  for (int m = 0; m < cfg.n_lfb; ++m) {
    const std::string lfb = "lfb" + std::to_string(m);
    for (int k = 0; k < cfg.n_awru; ++k) {
      UnitWeightRow row{m * cfg.n_awru + k, m, k, 1.0, 1.0, cfg.ru_kind == RuKind::Adaptive};
      if (row.learnable) {
        const std::string unit = lfb + ".awru" + std::to_string(k);
        row.lambda_res = scalar(unit + ".lambda_res");
        row.lambda_x = scalar(unit + ".lambda_x");
      }
      r.units.push_back(row);
    }
    if (cfg.use_lrfu) {
      r.blocks.push_back({m, scalar(lfb + ".lambda_res"), scalar(lfb + ".lambda_x")});
    }
  }
  if (cfg.use_awms) {
    for (int k : cfg.awms_kernels) {
      r.branches.push_back({k, scalar("awms.k" + std::to_string(k) + ".alpha")});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Branch pruning

template <class T>
struct PruneResult {
  AwsrnModel<T> model;
  std::vector<int> removed;  // kernel sizes, in config order
};

/// Removes every reconstruction branch with |alpha| < threshold. The input
/// model is untouched; refusing to remove every branch.
template <class T>
PruneResult<T> prune_branches(const AwsrnModel<T>& model, double threshold) {
  const ModelConfig& cfg = model.config();
  if (!cfg.use_awms) throw PruneError("model has no multi-scale reconstruction branches");
  std::vector<int> keep, removed;
  for (int k : cfg.awms_kernels) {
    const double a = model.params().at("awms.k" + std::to_string(k) + ".alpha").value()[0];
    (std::abs(a) < threshold ? removed : keep).push_back(k);
  }
  if (keep.empty()) {
    throw PruneError("threshold " + std::to_string(threshold) +
                     " would remove every reconstruction branch");
  }
  ParameterRegistry<T> reg = model.params().clone();
  for (int k : removed) {
    const std::string p = "awms.k" + std::to_string(k);
    for (const char* suffix : {".v", ".g", ".b", ".alpha"}) reg.erase(p + suffix);
  }
  ModelConfig pruned = cfg;
  pruned.awms_kernels = keep;
  return {AwsrnModel<T>::from_registry(pruned, std::move(reg)), removed};
}

}  // namespace awsrn
