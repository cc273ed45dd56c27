#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "awsrn/errors.hpp"
#include "awsrn/tensor.hpp"

namespace awsrn {

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> samples;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), samples(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t ch) {
    return samples[(y * width + x) * channels + ch];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t ch) const {
    return samples[(y * width + x) * channels + ch];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Single floating-point channel, row-major.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), data(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return data[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
};

// ---------------------------------------------------------------------------
// PNG

/// Decodes any 8-bit PNG to RGB (gray and palette images are expanded;
/// alpha is composited onto black). 16-bit files are rejected.
inline Image load_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ImageError("cannot decode '" + path + "': " + img.message);
  }
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw ImageError("unsupported bit depth in '" + path + "' (only 8-bit PNG is supported)");
  }
  img.format = PNG_FORMAT_RGB;
  Image out(img.width, img.height, 3);
  const png_color black{0, 0, 0};
  if (!png_image_finish_read(&img, &black, out.samples.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("cannot decode '" + path + "': " + msg);
  }
  return out;
}

inline void save_png(const Image& image, const std::string& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw ImageError("save_png: unsupported channel count " + std::to_string(image.channels));
  }
  if (image.samples.size() != image.width * image.height * image.channels) {
    throw ImageError("save_png: sample count does not match dimensions");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.samples.data(), 0, nullptr)) {
    throw ImageError("cannot write '" + path + "': " + img.message);
  }
}

// ---------------------------------------------------------------------------
// Color

/// Studio-swing BT.601 luma: Y = 16 + (65.481 R + 128.553 G + 24.966 B) / 255.
/// Gray images are returned as-is.
inline Plane rgb_to_y(const Image& image) {
  Plane y(image.width, image.height);
  for (std::size_t i = 0; i < image.width * image.height; ++i) {
    if (image.channels == 1) {
      y.data[i] = image.samples[i];
    } else {
      const double r = image.samples[3 * i], g = image.samples[3 * i + 1],
                   b = image.samples[3 * i + 2];
      y.data[i] = 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Bicubic resampling

/// Positive rational scale factor num/den.
struct Ratio {
  std::size_t num = 1;
  std::size_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::size_t apply(std::size_t n) const { return (n * num + den - 1) / den; }
};

/// Keys cubic convolution kernel with a = -0.5.
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

/// Sampling taps for one output coordinate: clamped source indices and normalized weights.
struct Taps {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

/// Taps along one axis. Source position u = (dst + 0.5) / scale - 0.5; when
/// shrinking, the kernel is stretched by 1/scale (antialiasing). Weights are
/// normalized to sum to one and out-of-range indices clamp to the edge.
inline std::vector<Taps> resample_taps(std::size_t in, std::size_t out, double scale) {
  const bool shrink = scale < 1.0;
  const double kscale = shrink ? scale : 1.0;
  const double width = 4.0 / kscale;
  const auto ntaps = static_cast<long>(std::ceil(width)) + 2;
  std::vector<Taps> taps(out);
  for (std::size_t j = 0; j < out; ++j) {
    const double u = (static_cast<double>(j) + 0.5) / scale - 0.5;
    const long left = static_cast<long>(std::floor(u - width / 2.0));
    double total = 0.0;
    Taps& t = taps[j];
    for (long p = 0; p < ntaps; ++p) {
      const long src = left + p;
      const double w = kscale * cubic_kernel(kscale * (u - static_cast<double>(src)));
      if (w == 0.0) continue;
      t.index.push_back(static_cast<std::size_t>(std::clamp(src, 0L, static_cast<long>(in) - 1)));
      t.weight.push_back(w);
      total += w;
    }
    for (double& w : t.weight) w /= total;
  }
  return taps;
}

inline Plane resize_plane(const Plane& src, std::size_t out_w, std::size_t out_h, double sx,
                          double sy) {
  if (out_w == 0 || out_h == 0) throw ImageError("bicubic resize produces an empty image");
  const auto tx = resample_taps(src.width, out_w, sx);
  const auto ty = resample_taps(src.height, out_h, sy);
  Plane mid(out_w, src.height);
  for (std::size_t y = 0; y < src.height; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tx[x].index.size(); ++k) {
        acc += tx[x].weight[k] * src.at(tx[x].index[k], y);
      }
      mid.at(x, y) = acc;
    }
  }
  Plane dst(out_w, out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < ty[y].index.size(); ++k) {
        acc += ty[y].weight[k] * mid.at(x, ty[y].index[k]);
      }
      dst.at(x, y) = acc;
    }
  }
  return dst;
}

inline Plane bicubic_resize(const Plane& src, Ratio factor) {
  if (factor.num == 0 || factor.den == 0) throw ImageError("bicubic resize factor must be positive");
  return resize_plane(src, factor.apply(src.width), factor.apply(src.height), factor.value(),
                      factor.value());
}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

/// Resizes each channel in floating point and rounds back to 8 bits.
inline Image bicubic_resize(const Image& src, Ratio factor) {
  if (factor.num == 0 || factor.den == 0) throw ImageError("bicubic resize factor must be positive");
  const std::size_t ow = factor.apply(src.width), oh = factor.apply(src.height);
  if (ow == 0 || oh == 0) throw ImageError("bicubic resize produces an empty image");
  Image out(ow, oh, src.channels);
  for (std::size_t c = 0; c < src.channels; ++c) {
    Plane p(src.width, src.height);
    for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = src.samples[i * src.channels + c];
    const Plane r = bicubic_resize(p, factor);
    for (std::size_t i = 0; i < r.data.size(); ++i) out.samples[i * src.channels + c] = quantize(r.data[i]);
  }
  return out;
}

/// Resizes every (n, c) plane of an NCHW tensor without quantization.
template <class T>
Tensor<T> bicubic_resize(const Tensor<T>& src, Ratio factor) {
  if (factor.num == 0 || factor.den == 0) throw ImageError("bicubic resize factor must be positive");
  const Shape s = src.shape();
  const std::size_t ow = factor.apply(s.w), oh = factor.apply(s.h);
  if (ow == 0 || oh == 0) throw ImageError("bicubic resize produces an empty image");
  Tensor<T> out({s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      Plane p(s.w, s.h);
      for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = src[(n * s.c + c) * s.plane() + i];
      const Plane r = resize_plane(p, ow, oh, factor.value(), factor.value());
      for (std::size_t i = 0; i < r.data.size(); ++i) out[(n * s.c + c) * oh * ow + i] = static_cast<T>(r.data[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pairs and tensor conversion

inline Image crop(const Image& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > src.width || y0 + h > src.height) throw ImageError("crop outside image bounds");
  Image out(w, h, src.channels);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = &src.samples[((y0 + y) * src.width + x0) * src.channels];
    std::copy(row, row + w * src.channels, &out.samples[y * w * src.channels]);
  }
  return out;
}

struct ImagePair {
  Image lr;
  Image hr;
};

/// Crops `hr` to multiples of s and degrades it by bicubic 1/s.
inline ImagePair make_pair(const Image& hr, int s) {
  if (s != 2 && s != 3 && s != 4 && s != 8) {
    throw ImageError("scale must be one of 2, 3, 4, 8 (got " + std::to_string(s) + ")");
  }
  const auto us = static_cast<std::size_t>(s);
  if (hr.width < us || hr.height < us) {
    throw ImageError("image " + std::to_string(hr.width) + "x" + std::to_string(hr.height) +
                     " is smaller than the scale factor " + std::to_string(s));
  }
  ImagePair p;
  p.hr = crop(hr, 0, 0, hr.width / us * us, hr.height / us * us);
  p.lr = bicubic_resize(p.hr, Ratio{1, us});
  return p;
}

inline Image to_rgb(const Image& src) {
  if (src.channels == 3) return src;
  Image out(src.width, src.height, 3);
  for (std::size_t i = 0; i < src.width * src.height; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out.samples[3 * i + c] = src.samples[i];
  }
  return out;
}

/// (1, 3, H, W) tensor with samples scaled to [0, 1].
template <class T>
Tensor<T> to_tensor(const Image& src) {
  const Image rgb = to_rgb(src);
  Tensor<T> t({1, 3, rgb.height, rgb.width});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < rgb.height; ++y)
      for (std::size_t x = 0; x < rgb.width; ++x)
        t.at(0, c, y, x) = static_cast<T>(rgb.at(x, y, c)) / T(255);
  return t;
}

/// Clamps to [0, 1] and quantizes batch item `n` of a 3-channel tensor.
template <class T>
Image to_image(const Tensor<T>& t, std::size_t n = 0) {
  const Shape s = t.shape();
  if (s.c != 3) throw ShapeError("to_image expects 3 channels, got " + s.str());
  Image out(s.w, s.h, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x)
        out.at(x, y, c) = quantize(static_cast<double>(t.at(n, c, y, x)) * 255.0);
  return out;
}

}  // namespace awsrn
