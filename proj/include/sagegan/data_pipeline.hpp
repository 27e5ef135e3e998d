#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sagegan/nn_ops.hpp"
#include "sagegan/png_io.hpp"
#include "sagegan/rng.hpp"

namespace sagegan {

// Dataset ingestion, deterministic splitting, preprocessing and stochastic
// augmentation. Images and masks travel together as SamplePairs so every
// geometric transform stays pixel-aligned.

template <typename T>
struct SamplePair {
  Tensor<T> image;  // {H,W} in [0,1]
  Tensor<T> mask;   // {H,W} in {0,1}
  std::string id;   // source filename stem
};

template <typename T>
inline void validate_pair(const SamplePair<T>& p) {
  if (!p.image.same_shape(p.mask))
    throw ShapeError("sample '" + p.id + "': image " + shape_str(p.image.shape()) +
                     " vs mask " + shape_str(p.mask.shape()));
  if (p.image.ndim() != 2) throw ShapeError("sample '" + p.id + "': expected rank-2 image");
  for (int64_t i = 0; i < p.image.numel(); ++i)
    if (p.image[i] < T(0) || p.image[i] > T(1))
      throw DataError("sample '" + p.id + "': image value outside [0,1]");
  for (int64_t i = 0; i < p.mask.numel(); ++i)
    if (p.mask[i] != T(0) && p.mask[i] != T(1))
      throw DataError("sample '" + p.id + "': mask value not in {0,1}");
}

template <typename T>
struct DatasetSplit {
  std::vector<SamplePair<T>> train, val;
  uint64_t seed = 0;
  double ratio = 0.8;
};

struct AugmentConfig {
  double flip_h = 0.5;
  double flip_v = 0.5;
  bool clahe = true;
  double clahe_clip = 2.0;  // relative to the uniform histogram level
  int clahe_tiles = 8;
  bool random_crop = true;
  double crop_fraction = 0.9;

  void validate() const {
    if (flip_h < 0 || flip_h > 1 || flip_v < 0 || flip_v > 1)
      throw ParamError("augment: flip probabilities must be in [0,1]");
    if (crop_fraction <= 0 || crop_fraction > 1)
      throw ParamError("augment: crop fraction must be in (0,1]");
    if (clahe_clip <= 0 || clahe_tiles < 1) throw ParamError("augment: bad CLAHE parameters");
  }
};

template <typename T>
inline Tensor<T> binarize_mask(const Tensor<T>& m, T threshold = T(0.5)) {
  Tensor<T> out(m.shape());
  for (int64_t i = 0; i < m.numel(); ++i) out[i] = m[i] >= threshold ? T(1) : T(0);
  return out;
}

/// Load stem-matched `images/*.png` + `masks/*.png` pairs, sorted by stem.
template <typename T>
inline std::vector<SamplePair<T>> load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  const fs::path img_dir = fs::path(root) / "images";
  const fs::path mask_dir = fs::path(root) / "masks";
  for (const auto& d : {img_dir, mask_dir})
    if (!fs::is_directory(d)) throw IoError("dataset root is missing directory: " + d.string());

  auto stems_of = [](const fs::path& dir) {
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png")
        stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    return stems;
  };
  const auto img_stems = stems_of(img_dir);
  const auto mask_stems = stems_of(mask_dir);

  std::vector<std::string> unmatched;
  std::set_symmetric_difference(img_stems.begin(), img_stems.end(), mask_stems.begin(),
                                mask_stems.end(), std::back_inserter(unmatched));
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& s : unmatched) list += (list.empty() ? "" : ", ") + s;
    throw DataError("unmatched image/mask stems: " + list);
  }
  if (img_stems.empty()) throw DataError("empty dataset under " + root);

  std::vector<SamplePair<T>> pairs;
  pairs.reserve(img_stems.size());
  for (const auto& stem : img_stems) {
    SamplePair<T> p;
    p.id = stem;
    p.image = read_png_gray<T>((img_dir / (stem + ".png")).string());
    p.mask = binarize_mask(read_png_gray<T>((mask_dir / (stem + ".png")).string()));
    if (!p.image.same_shape(p.mask))
      throw ShapeError("sample '" + stem + "': image " + shape_str(p.image.shape()) +
                       " vs mask " + shape_str(p.mask.shape()));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

/// Deterministic shuffled split: floor(ratio*N) samples to train, rest to
/// val.
template <typename T>
inline DatasetSplit<T> split_dataset(const std::vector<SamplePair<T>>& pairs, double ratio,
                                     uint64_t seed) {
  if (ratio <= 0 || ratio >= 1) throw ParamError("split ratio must be in (0,1)");
  if (pairs.size() < 2) throw ParamError("split needs at least 2 samples");
  std::vector<size_t> idx(pairs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng::from(seed, "split").shuffle(idx.begin(), idx.end());

  DatasetSplit<T> split;
  split.seed = seed;
  split.ratio = ratio;
  const size_t n_train = static_cast<size_t>(std::floor(ratio * static_cast<double>(pairs.size())));
  for (size_t i = 0; i < idx.size(); ++i)
    (i < n_train ? split.train : split.val).push_back(pairs[idx[i]]);
  return split;
}

// ---- plain-tensor resizes (no autodiff) ----

/// Bilinear with half-pixel centers, same mapping as the graph op.
template <typename T>
inline Tensor<T> resize_bilinear(const Tensor<T>& img, int ho, int wo) {
  if (img.ndim() != 2) throw ShapeError("resize_bilinear: expected {H,W}");
  if (ho <= 0 || wo <= 0) throw ParamError("resize_bilinear: target must be positive");
  const auto ty = detail::bilinear_taps(img.dim(0), ho);
  const auto tx = detail::bilinear_taps(img.dim(1), wo);
  Tensor<T> out({ho, wo});
  for (int y = 0; y < ho; ++y) {
    const auto& a = ty[static_cast<size_t>(y)];
    for (int x = 0; x < wo; ++x) {
      const auto& b = tx[static_cast<size_t>(x)];
      out.at(y, x) = static_cast<T>(
          (1 - a.w1) * ((1 - b.w1) * img.at(a.i0, b.i0) + b.w1 * img.at(a.i0, b.i1)) +
          a.w1 * ((1 - b.w1) * img.at(a.i1, b.i0) + b.w1 * img.at(a.i1, b.i1)));
    }
  }
  return out;
}

/// Nearest neighbor: source index floor((dst+0.5)*src/dst).
template <typename T>
inline Tensor<T> resize_nearest(const Tensor<T>& img, int ho, int wo) {
  if (img.ndim() != 2) throw ShapeError("resize_nearest: expected {H,W}");
  if (ho <= 0 || wo <= 0) throw ParamError("resize_nearest: target must be positive");
  const int h = img.dim(0), w = img.dim(1);
  Tensor<T> out({ho, wo});
  for (int y = 0; y < ho; ++y) {
    const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / ho));
    for (int x = 0; x < wo; ++x) {
      const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / wo));
      out.at(y, x) = img.at(sy, sx);
    }
  }
  return out;
}

/// Resize to the working resolution: image bilinear + clamp, mask nearest +
/// re-binarize.
template <typename T>
inline SamplePair<T> preprocess(const SamplePair<T>& pair, int h, int w) {
  if (h <= 0 || w <= 0) throw ParamError("preprocess: size must be positive");
  SamplePair<T> out;
  out.id = pair.id;
  out.image = resize_bilinear(pair.image, h, w);
  for (int64_t i = 0; i < out.image.numel(); ++i)
    out.image[i] = std::min(T(1), std::max(T(0), out.image[i]));
  out.mask = binarize_mask(resize_nearest(pair.mask, h, w));
  return out;
}

template <typename T>
inline Tensor<T> flip_horizontal(const Tensor<T>& m) {
  const int h = m.dim(0), w = m.dim(1);
  Tensor<T> out(m.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = m.at(y, w - 1 - x);
  return out;
}

template <typename T>
inline Tensor<T> flip_vertical(const Tensor<T>& m) {
  const int h = m.dim(0), w = m.dim(1);
  Tensor<T> out(m.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = m.at(h - 1 - y, x);
  return out;
}

/// Contrast-limited adaptive histogram equalization on a [0,1] image.
/// Per-tile 256-bin histograms are clipped at clip*uniform level, the
/// excess redistributed evenly, and per-pixel mappings bilinearly
/// interpolated between tile lookup tables.
template <typename T>
inline Tensor<T> clahe(const Tensor<T>& img, double clip_limit = 2.0, int tiles = 8) {
  if (img.ndim() != 2) throw ShapeError("clahe: expected {H,W}");
  if (clip_limit <= 0 || tiles < 1) throw ParamError("clahe: bad parameters");
  constexpr int kBins = 256;
  const int h = img.dim(0), w = img.dim(1);
  const int ty = std::min(tiles, h), tx = std::min(tiles, w);

  auto bin_of = [](T v) {
    int b = static_cast<int>(std::lround(static_cast<double>(v) * (kBins - 1)));
    return std::min(kBins - 1, std::max(0, b));
  };

  // one 256-entry LUT per tile
  std::vector<std::array<T, kBins>> luts(static_cast<size_t>(ty) * tx);
  for (int i = 0; i < ty; ++i) {
    const int y0 = i * h / ty, y1 = (i + 1) * h / ty;
    for (int j = 0; j < tx; ++j) {
      const int x0 = j * w / tx, x1 = (j + 1) * w / tx;
      const double n_px = static_cast<double>(y1 - y0) * (x1 - x0);
      std::array<double, kBins> hist{};
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hist[static_cast<size_t>(bin_of(img.at(y, x)))] += 1;

      const double clip = std::max(1.0, clip_limit * n_px / kBins);
      double excess = 0;
      for (auto& c : hist)
        if (c > clip) {
          excess += c - clip;
          c = clip;
        }
      const double bonus = excess / kBins;
      for (auto& c : hist) c += bonus;

      double cum = 0;
      auto& lut = luts[static_cast<size_t>(i) * tx + j];
      for (int b = 0; b < kBins; ++b) {
        cum += hist[static_cast<size_t>(b)];
        lut[static_cast<size_t>(b)] = static_cast<T>(std::min(1.0, cum / n_px));
      }
    }
  }

  // interpolate between tile mappings with half-pixel tile centers
  const auto taps_y = detail::bilinear_taps(ty, h);
  const auto taps_x = detail::bilinear_taps(tx, w);
  Tensor<T> out({h, w});
  for (int y = 0; y < h; ++y) {
    const auto& a = taps_y[static_cast<size_t>(y)];
    for (int x = 0; x < w; ++x) {
      const auto& b = taps_x[static_cast<size_t>(x)];
      const int bin = bin_of(img.at(y, x));
      const double v00 = luts[static_cast<size_t>(a.i0) * tx + b.i0][static_cast<size_t>(bin)];
      const double v01 = luts[static_cast<size_t>(a.i0) * tx + b.i1][static_cast<size_t>(bin)];
      const double v10 = luts[static_cast<size_t>(a.i1) * tx + b.i0][static_cast<size_t>(bin)];
      const double v11 = luts[static_cast<size_t>(a.i1) * tx + b.i1][static_cast<size_t>(bin)];
      out.at(y, x) = static_cast<T>((1 - a.w1) * ((1 - b.w1) * v00 + b.w1 * v01) +
                                    a.w1 * ((1 - b.w1) * v10 + b.w1 * v11));
    }
  }
  return out;
}

/// Stochastic augmentation: flips and crop hit image and mask identically;
/// CLAHE touches the image only and runs after the geometry is final.
template <typename T>
inline SamplePair<T> augment(const SamplePair<T>& pair, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  SamplePair<T> out = pair;
  if (cfg.flip_h > 0 && rng.bernoulli(cfg.flip_h)) {
    out.image = flip_horizontal(out.image);
    out.mask = flip_horizontal(out.mask);
  }
  if (cfg.flip_v > 0 && rng.bernoulli(cfg.flip_v)) {
    out.image = flip_vertical(out.image);
    out.mask = flip_vertical(out.mask);
  }
  if (cfg.random_crop && cfg.crop_fraction < 1.0) {
    const int h = out.image.dim(0), w = out.image.dim(1);
    const int ch = std::max(1, static_cast<int>(std::lround(cfg.crop_fraction * h)));
    const int cw = std::max(1, static_cast<int>(std::lround(cfg.crop_fraction * w)));
    const int oy = rng.uniform_int(0, h - ch);
    const int ox = rng.uniform_int(0, w - cw);
    Tensor<T> ci({ch, cw}), cm({ch, cw});
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) {
        ci.at(y, x) = out.image.at(oy + y, ox + x);
        cm.at(y, x) = out.mask.at(oy + y, ox + x);
      }
    out.image = resize_bilinear(ci, h, w);
    for (int64_t i = 0; i < out.image.numel(); ++i)
      out.image[i] = std::min(T(1), std::max(T(0), out.image[i]));
    out.mask = binarize_mask(resize_nearest(cm, h, w));
  }
  if (cfg.clahe) out.image = clahe(out.image, cfg.clahe_clip, cfg.clahe_tiles);
  return out;
}

// ---- split manifest ----

struct SplitManifest {
  uint64_t seed = 0;
  double ratio = 0.0;
  std::vector<std::string> train, val;
};

template <typename T>
inline SplitManifest manifest_of(const DatasetSplit<T>& s) {
  SplitManifest m;
  m.seed = s.seed;
  m.ratio = s.ratio;
  for (const auto& p : s.train) m.train.push_back(p.id);
  for (const auto& p : s.val) m.val.push_back(p.id);
  return m;
}

inline void write_split_manifest(const std::string& path, const SplitManifest& m) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write split manifest: " + path);
  f << "seed " << m.seed << "\n";
  f << "ratio " << std::setprecision(17) << m.ratio << "\n";
  for (const auto& s : m.train) f << "train " << s << "\n";
  for (const auto& s : m.val) f << "val " << s << "\n";
  if (!f.good()) throw IoError("failed writing split manifest: " + path);
}

inline SplitManifest read_split_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read split manifest: " + path);
  SplitManifest m;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string key, value;
    ss >> key >> value;
    if (key == "seed")
      m.seed = std::stoull(value);
    else if (key == "ratio")
      m.ratio = std::stod(value);
    else if (key == "train")
      m.train.push_back(value);
    else if (key == "val")
      m.val.push_back(value);
    else
      throw DataError("split manifest " + path + ": unknown line '" + line + "'");
  }
  return m;
}

/// Re-create a split from a manifest over freshly loaded pairs; every stem
/// must resolve.
template <typename T>
inline DatasetSplit<T> apply_manifest(const std::vector<SamplePair<T>>& pairs,
                                      const SplitManifest& m) {
  std::map<std::string, const SamplePair<T>*> by_id;
  for (const auto& p : pairs) by_id[p.id] = &p;
  DatasetSplit<T> split;
  split.seed = m.seed;
  split.ratio = m.ratio;
  auto take = [&](const std::vector<std::string>& stems, std::vector<SamplePair<T>>& dst) {
    for (const auto& s : stems) {
      auto it = by_id.find(s);
      if (it == by_id.end()) throw DataError("manifest stem '" + s + "' not found in dataset");
      dst.push_back(*it->second);
    }
  };
  take(m.train, split.train);
  take(m.val, split.val);
  return split;
}

}  // namespace sagegan
