#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "awsrn/errors.hpp"
#include "awsrn/image.hpp"

namespace awsrn {

namespace detail {

inline void require_same_size(const Plane& a, const Plane& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw ImageError(std::string(what) + ": dimension mismatch " + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height));
  }
}

inline Plane shave_plane(const Plane& p, std::size_t shave) {
  if (2 * shave >= p.width || 2 * shave >= p.height) {
    throw ImageError("shave of " + std::to_string(shave) + " px consumes the whole " +
                     std::to_string(p.width) + "x" + std::to_string(p.height) + " image");
  }
  if (shave == 0) return p;
  Plane out(p.width - 2 * shave, p.height - 2 * shave);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) out.at(x, y) = p.at(x + shave, y + shave);
  return out;
}

}  // namespace detail

/// PSNR between two planes with peak 255. Identical planes give +infinity.
inline double psnr(const Plane& a, const Plane& b, std::size_t shave = 0) {
  detail::require_same_size(a, b, "psnr");
  const Plane sa = detail::shave_plane(a, shave), sb = detail::shave_plane(b, shave);
  double se = 0.0;
  for (std::size_t i = 0; i < sa.data.size(); ++i) {
    const double d = sa.data[i] - sb.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(sa.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// PSNR on the studio-swing Y channel after removing `shave` border pixels.
inline double psnr_y(const Image& sr, const Image& hr, std::size_t shave = 0) {
  return psnr(rgb_to_y(sr), rgb_to_y(hr), shave);
}

inline bool is_identical(double psnr_db) { return std::isinf(psnr_db) && psnr_db > 0; }

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::vector<double> gaussian_taps(int size = 11, double sigma = 1.5) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - c;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

namespace detail {

/// Valid-region separable filtering.
inline Plane filter_valid(const Plane& src, const std::vector<double>& taps) {
  const std::size_t k = taps.size();
  const std::size_t ow = src.width - k + 1, oh = src.height - k + 1;
  Plane mid(ow, src.height);
  for (std::size_t y = 0; y < src.height; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += taps[i] * src.at(x + i, y);
      mid.at(x, y) = acc;
    }
  Plane out(ow, oh);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += taps[i] * mid.at(x, y + i);
      out.at(x, y) = acc;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// L = 255, statistics only where the window fits entirely inside the image.
inline double ssim(const Plane& a, const Plane& b) {
  detail::require_same_size(a, b, "ssim");
  const auto taps = gaussian_taps();
  if (a.width < taps.size() || a.height < taps.size()) {
    throw ImageError("ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                     " is smaller than the 11x11 window");
  }
  constexpr double L = 255.0;
  constexpr double C1 = (0.01 * L) * (0.01 * L);
  constexpr double C2 = (0.03 * L) * (0.03 * L);

  Plane aa(a.width, a.height), bb(a.width, a.height), ab(a.width, a.height);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    aa.data[i] = a.data[i] * a.data[i];
    bb.data[i] = b.data[i] * b.data[i];
    ab.data[i] = a.data[i] * b.data[i];
  }
  const Plane mu_a = detail::filter_valid(a, taps), mu_b = detail::filter_valid(b, taps);
  const Plane e_aa = detail::filter_valid(aa, taps), e_bb = detail::filter_valid(bb, taps),
              e_ab = detail::filter_valid(ab, taps);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.data.size(); ++i) {
    const double ma = mu_a.data[i], mb = mu_b.data[i];
    const double va = e_aa.data[i] - ma * ma, vb = e_bb.data[i] - mb * mb;
    const double cov = e_ab.data[i] - ma * mb;
    total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) /
             ((ma * ma + mb * mb + C1) * (va + vb + C2));
  }
  return total / static_cast<double>(mu_a.data.size());
}

/// SSIM on the Y channel after removing `shave` border pixels.
inline double ssim_y(const Image& sr, const Image& hr, std::size_t shave = 0) {
  const Plane a = rgb_to_y(sr), b = rgb_to_y(hr);
  detail::require_same_size(a, b, "ssim");
  return ssim(detail::shave_plane(a, shave), detail::shave_plane(b, shave));
}

}  // namespace awsrn
