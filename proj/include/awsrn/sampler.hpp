#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "awsrn/errors.hpp"
#include "awsrn/image.hpp"
#include "awsrn/tensor.hpp"

namespace awsrn {

/// Unbiased draw from [0, n) by rejection; independent of the standard library's distributions.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = 0;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

/// The eight symmetries of the square: `code & 3` quarter turns
/// counter-clockwise, then a horizontal flip if `code & 4`.
struct Dihedral {
  int code = 0;

  int rotations() const { return code & 3; }
  bool flipped() const { return (code & 4) != 0; }

  /// Source (x, y) feeding destination (x, y) in a size x size square.
  std::pair<std::size_t, std::size_t> source(std::size_t x, std::size_t y, std::size_t size) const {
    const std::size_t last = size - 1;
    if (flipped()) x = last - x;
    for (int r = 0; r < rotations(); ++r) {
      // Undo one counter-clockwise quarter turn: dst(x, y) <- src(last - y, x).
      const std::size_t sx = last - y, sy = x;
      x = sx;
      y = sy;
    }
    return {x, y};
  }
};

/// Applies `d` to a square image.
inline Image apply_dihedral(const Image& src, Dihedral d) {
  if (src.width != src.height) throw ImageError("dihedral transforms need a square patch");
  Image out(src.width, src.height, src.channels);
  for (std::size_t y = 0; y < src.height; ++y)
    for (std::size_t x = 0; x < src.width; ++x) {
      const auto [sx, sy] = d.source(x, y, src.width);
      for (std::size_t c = 0; c < src.channels; ++c) out.at(x, y, c) = src.at(sx, sy, c);
    }
  return out;
}

struct PatchOrigin {
  std::size_t image = 0;
  std::size_t x = 0;  // LR offset; the HR offset is scale times this
  std::size_t y = 0;
  Dihedral transform;
};

template <class T>
struct PatchBatch {
  Tensor<T> lr;  // (B, 3, p, p)
  Tensor<T> hr;  // (B, 3, s*p, s*p)
  std::vector<PatchOrigin> provenance;
};

/// Random aligned LR/HR crops with dihedral augmentation, values in [0, 1].
/// Image, offset and transform are drawn uniformly and independently per patch.
template <class T>
PatchBatch<T> sample_batch(const std::vector<ImagePair>& pairs, int scale, std::mt19937_64& rng,
                           std::size_t patch = 48, std::size_t batch = 16) {
  if (pairs.empty()) throw DataError("sample_batch: no image pairs");
  const auto s = static_cast<std::size_t>(scale);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& lr = pairs[i].lr;
    if (lr.width < patch || lr.height < patch) {
      throw DataError("LR image " + std::to_string(i) + " (" + std::to_string(lr.width) + "x" +
                      std::to_string(lr.height) + ") is smaller than the patch size " +
                      std::to_string(patch));
    }
    if (pairs[i].hr.width != lr.width * s || pairs[i].hr.height != lr.height * s) {
      throw DataError("pair " + std::to_string(i) + " is not an exact x" + std::to_string(s) +
                      " pair");
    }
  }
  const std::size_t hp = patch * s;
  PatchBatch<T> out{Tensor<T>({batch, 3, patch, patch}), Tensor<T>({batch, 3, hp, hp}), {}};
  for (std::size_t b = 0; b < batch; ++b) {
    PatchOrigin o;
    o.image = uniform_index(rng, pairs.size());
    const ImagePair& pair = pairs[o.image];
    o.x = uniform_index(rng, pair.lr.width - patch + 1);
    o.y = uniform_index(rng, pair.lr.height - patch + 1);
    o.transform.code = static_cast<int>(uniform_index(rng, 8));
    out.provenance.push_back(o);

    auto fill = [&](const Image& img, std::size_t x0, std::size_t y0, std::size_t size,
                    Tensor<T>& dst) {
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const auto [sx, sy] = o.transform.source(x, y, size);
          for (std::size_t c = 0; c < 3; ++c) {
            dst.at(b, c, y, x) = static_cast<T>(img.at(x0 + sx, y0 + sy, img.channels == 1 ? 0 : c)) / T(255);
          }
        }
    };
    fill(pair.lr, o.x, o.y, patch, out.lr);
    fill(pair.hr, o.x * s, o.y * s, hp, out.hr);
  }
  return out;
}

/// HR image paths of a dataset directory: the lines of `manifest.txt` when it
/// exists (relative paths resolve against the directory), else every *.png in
/// lexicographic order.
inline std::vector<std::string> dataset_paths(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::vector<std::string> out;
  const fs::path manifest = fs::path(dir) / "manifest.txt";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const fs::path p(line);
      out.push_back((p.is_absolute() ? p : fs::path(dir) / p).string());
    }
  } else {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
  }
  if (out.empty()) throw DataError("no images found in '" + dir + "'");
  return out;
}

}  // namespace awsrn
