#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "awsrn/awsrn.hpp"

namespace awsrn::test {

template <class T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

inline double rel_err(double a, double b, double floor = 0.0) {
  const double den = std::max({std::abs(a), std::abs(b), floor});
  return den == 0.0 ? 0.0 : std::abs(a - b) / den;
}

// Direct zero-padded cross-correlation, written independently of the kernel under test.
inline Tensor<double> direct_conv(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& b) {
  const Shape xs = x.shape(), ws = w.shape();
  const long K = static_cast<long>(ws.h), P = K / 2;
  Tensor<double> out({xs.n, ws.n, xs.h, xs.w});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ws.n; ++o)
      for (long h = 0; h < long(xs.h); ++h)
        for (long q = 0; q < long(xs.w); ++q) {
          double acc = b[o];
          for (std::size_t i = 0; i < xs.c; ++i)
            for (long u = 0; u < K; ++u)
              for (long v = 0; v < K; ++v) {
                const long yy = h + u - P, xx = q + v - P;
                if (yy < 0 || xx < 0 || yy >= long(xs.h) || xx >= long(xs.w)) continue;
                acc += w.at(o, i, u, v) * x.at(n, i, yy, xx);
              }
          out.at(n, o, h, q) = acc;
        }
  return out;
}

inline double max_rel(const Tensor<double>& a, const Tensor<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den == 0.0 ? num : num / den;
}

// Keys kernel written out piecewise, a = -0.5.
inline double keys(double x) {
  x = std::abs(x);
  if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
  if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
  return 0.0;
}

// Resampling by evaluating the 2-D kernel at every source pixel of an
// edge-extended neighbourhood; no separability, no precomputed taps.
inline Plane direct_resample(const Plane& src, std::size_t ow, std::size_t oh, double scale) {
  const double ks = std::min(scale, 1.0);
  const long reach = static_cast<long>(std::ceil(2.0 / ks)) + 2;
  Plane out(ow, oh);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double u = (ox + 0.5) / scale - 0.5, v = (oy + 0.5) / scale - 0.5;
      double acc = 0.0, norm = 0.0;
      for (long j = long(std::floor(v)) - reach; j <= long(std::floor(v)) + reach; ++j)
        for (long i = long(std::floor(u)) - reach; i <= long(std::floor(u)) + reach; ++i) {
          const double w = keys(ks * (u - i)) * keys(ks * (v - j));
          const long ci = std::clamp(i, 0L, long(src.width) - 1), cj = std::clamp(j, 0L, long(src.height) - 1);
          acc += w * src.at(std::size_t(ci), std::size_t(cj));
          norm += w;
        }
      out.at(ox, oy) = acc / norm;
    }
  return out;
}

inline double psnr_oracle(const Plane& a, const Plane& b, std::size_t shave) {
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t y = shave; y + shave < a.height; ++y)
    for (std::size_t x = shave; x + shave < a.width; ++x) {
      se += (a.at(x, y) - b.at(x, y)) * (a.at(x, y) - b.at(x, y));
      ++n;
    }
  return 10.0 * std::log10(255.0 * 255.0 / (se / double(n)));
}

// Mean SSIM from windowed statistics with a full 2-D Gaussian window.
inline double ssim_oracle(const Plane& a, const Plane& b) {
  const int R = 5;
  double win[11][11], total = 0.0;
  for (int i = -R; i <= R; ++i)
    for (int j = -R; j <= R; ++j) total += win[i + R][j + R] = std::exp(-(i * i + j * j) / (2 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t y = R; y + R < a.height; ++y)
    for (std::size_t x = R; x + R < a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = -R; i <= R; ++i)
        for (int j = -R; j <= R; ++j) {
          const double w = win[i + R][j + R] / total;
          const double va = a.at(x + j, y + i), vb = b.at(x + j, y + i);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return acc / double(n);
}

// Inverse of pixel shuffle by direct index arithmetic.
inline Tensor<double> pixel_unshuffle(const Tensor<double>& y, std::size_t s) {
  const Shape ys = y.shape();
  Tensor<double> x({ys.n, ys.c * s * s, ys.h / s, ys.w / s});
  for (std::size_t n = 0; n < ys.n; ++n)
    for (std::size_t ch = 0; ch < ys.c * s * s; ++ch)
      for (std::size_t h = 0; h < ys.h / s; ++h)
        for (std::size_t w = 0; w < ys.w / s; ++w) {
          const std::size_t oc = ch / (s * s), i = (ch % (s * s)) / s, j = ch % s;
          x.at(n, ch, h, w) = y.at(n, oc, h * s + i, w * s + j);
        }
  return x;
}

/// Deterministic RGB test image with smooth gradients, sharp edges and fine stripes.
inline Image synthetic_image(std::size_t w, std::size_t h, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = 0.15 + 0.3 * u(rng), fy = 0.1 + 0.3 * u(rng), ph = 6.28 * u(rng);
  struct Rect {
    double x0, y0, x1, y1, r, g, b;
  };
  std::vector<Rect> rects;
  for (int i = 0; i < 6; ++i) {
    const double x0 = u(rng) * w, y0 = u(rng) * h;
    rects.push_back({x0, y0, x0 + (0.1 + 0.4 * u(rng)) * w, y0 + (0.1 + 0.4 * u(rng)) * h,
                     u(rng), u(rng), u(rng)});
  }
  Image img(w, h, 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double rgb[3] = {0.5 + 0.25 * std::sin(fx * x + ph), 0.5 + 0.25 * std::cos(fy * y),
                       double(x + y) / double(w + h)};
      for (const auto& r : rects) {
        if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) {
          rgb[0] = 0.5 * rgb[0] + 0.5 * r.r;
          rgb[1] = 0.5 * rgb[1] + 0.5 * r.g;
          rgb[2] = 0.5 * rgb[2] + 0.5 * r.b;
        }
      }
      if ((x / 3 + y / 7) % 5 == 0) {
        for (double& c : rgb) c = 1.0 - c;
      }
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = quantize(rgb[c] * 255.0);
    }
  return img;
}

/// Flat-shaded disks and thin dark lines over a smooth gradient: sharp edges
/// a learned upscaler can recover, unlike near-Nyquist stripes.
inline Image scene_image(std::size_t w, std::size_t h, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Disk {
    double cx, cy, r, c[3];
  };
  std::vector<Disk> disks;
  for (int i = 0; i < 8; ++i) {
    disks.push_back({u(rng) * w, u(rng) * h, 6 + 18 * u(rng), {u(rng), u(rng), u(rng)}});
  }
  Image img(w, h, 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double c[3] = {0.2 + 0.6 * x / w, 0.3 + 0.4 * y / h, 0.5};
      for (const auto& d : disks) {
        const double dx = x + 0.5 - d.cx, dy = y + 0.5 - d.cy;
        if (dx * dx + dy * dy < d.r * d.r) {
          for (int k = 0; k < 3; ++k) c[k] = d.c[k];
        }
      }
      if ((x + 2 * y) % 23 < 2) {
        for (double& v : c) v *= 0.3;
      }
      for (std::size_t k = 0; k < 3; ++k) img.at(x, y, k) = quantize(c[k] * 255.0);
    }
  return img;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("awsrn_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Tiny configuration used by gradient checks and the overfit recipe.
inline ModelConfig tiny_config(int scale = 2) {
  ModelConfig c;
  c.scale = scale;
  c.n_lfb = 1;
  c.n_awru = 1;
  c.c_feat = 8;
  c.c_wide = 32;
  return c;
}

/// 64-bit FNV-1a over the raw bytes of a tensor.
template <class T>
std::uint64_t fnv1a(const Tensor<T>& t) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* p = reinterpret_cast<const unsigned char*>(t.data().data());
  for (std::size_t i = 0; i < t.size() * sizeof(T); ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <class T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

/// The checkpoint error kind raised by parsing `bytes`, or nullopt if it loads.
inline std::optional<CheckpointErrorKind> checkpoint_failure(
    std::vector<char> bytes, const std::optional<ModelConfig>& expected = std::nullopt) {
  try {
    deserialize_checkpoint<float>(std::move(bytes), expected);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace awsrn::test
