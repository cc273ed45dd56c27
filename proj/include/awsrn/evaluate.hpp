#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "awsrn/errors.hpp"
#include "awsrn/image.hpp"
#include "awsrn/metrics.hpp"
#include "awsrn/model.hpp"

namespace awsrn {

struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double bicubic_psnr = 0.0;
  double bicubic_ssim = 0.0;
  std::string error;  // non-empty when this image could not be scored

  bool ok() const { return error.empty(); }
};

struct EvalReport {
  std::vector<EvalRow> rows;

  /// Means over successfully scored images; infinite PSNRs propagate.
  EvalRow mean() const {
    EvalRow m;
    m.name = "mean";
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (!r.ok()) continue;
      m.psnr += r.psnr;
      m.ssim += r.ssim;
      m.bicubic_psnr += r.bicubic_psnr;
      m.bicubic_ssim += r.bicubic_ssim;
      ++n;
    }
    if (n == 0) {
      m.error = "no image scored";
      return m;
    }
    const double d = static_cast<double>(n);
    m.psnr /= d;
    m.ssim /= d;
    m.bicubic_psnr /= d;
    m.bicubic_ssim /= d;
    return m;
  }

  static std::string fmt_psnr(double v) {
    if (is_identical(v)) return "identical";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
  }
  static std::string fmt(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(24) << "image" << std::right << std::setw(12) << "psnr"
       << std::setw(10) << "ssim" << std::setw(14) << "bicubic_psnr" << std::setw(14)
       << "bicubic_ssim" << '\n';
    auto line = [&](const EvalRow& r) {
      os << std::left << std::setw(24) << r.name;
      if (!r.ok()) {
        os << "  error: " << r.error << '\n';
        return;
      }
      os << std::right << std::setw(12) << fmt_psnr(r.psnr) << std::setw(10) << fmt(r.ssim)
         << std::setw(14) << fmt_psnr(r.bicubic_psnr) << std::setw(14) << fmt(r.bicubic_ssim)
         << '\n';
    };
    for (const auto& r : rows) line(r);
    line(mean());
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "image,psnr,ssim,bicubic_psnr,bicubic_ssim,error\n";
    auto line = [&](const EvalRow& r) {
      os << r.name << ',';
      if (r.ok()) {
        os << fmt_psnr(r.psnr) << ',' << fmt(r.ssim) << ',' << fmt_psnr(r.bicubic_psnr) << ','
           << fmt(r.bicubic_ssim) << ",\n";
      } else {
        os << ",,,," << r.error << '\n';
      }
    };
    for (const auto& r : rows) line(r);
    line(mean());
    return os.str();
  }
};

/// Produces an SR image from the degraded LR image. The HR reference is passed
/// along for diagnostic upscalers; real models must ignore it.
using Upscaler = std::function<Image(const Image& lr, const Image& hr)>;

/// Degrades each HR image by bicubic 1/s, super-resolves it and scores the
/// result (and the bicubic baseline) on Y with `shave` border pixels removed.
/// Per-image failures are recorded and the run continues.
inline EvalReport evaluate_images(const std::vector<std::string>& paths, int scale,
                                  std::size_t shave, const Upscaler& upscale) {
  if (paths.empty()) throw DataError("no images to evaluate");
  EvalReport report;
  const auto s = static_cast<std::size_t>(scale);
  for (const auto& path : paths) {
    EvalRow row;
    row.name = std::filesystem::path(path).filename().string();
    try {
      const ImagePair pair = make_pair(load_png(path), scale);
      const Image sr = upscale(pair.lr, pair.hr);
      if (sr.width != pair.hr.width || sr.height != pair.hr.height) {
        throw ImageError("upscaler returned " + std::to_string(sr.width) + "x" +
                         std::to_string(sr.height) + ", expected " +
                         std::to_string(pair.hr.width) + "x" + std::to_string(pair.hr.height));
      }
      const Image bic = bicubic_resize(pair.lr, Ratio{s, 1});
      row.psnr = psnr_y(sr, pair.hr, shave);
      row.ssim = ssim_y(sr, pair.hr, shave);
      row.bicubic_psnr = psnr_y(bic, pair.hr, shave);
      row.bicubic_ssim = ssim_y(bic, pair.hr, shave);
    } catch (const Error& e) {
      row.error = e.what();
    }
    report.rows.push_back(row);
  }
  return report;
}

template <class T>
Upscaler model_upscaler(const AwsrnModel<T>& model) {
  return [&model](const Image& lr, const Image&) {
    return to_image(model.infer(to_tensor<T>(lr)));
  };
}

}  // namespace awsrn
