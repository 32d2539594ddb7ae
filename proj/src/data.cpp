// lwisp/data.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "lwisp/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <stdexcept>

namespace lwisp {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngPixels {
  int64_t width = 0, height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<uint16_t> samples;  // row-major, interleaved
};

// Decodes a PNG with no colour conversion or gamma handling. Palette images
// and alpha channels are reported through `channels`, never converted.
PngPixels decode_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open '" + path + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw std::runtime_error("'" + path + "' is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  PngPixels out;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("corrupt PNG '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("'" + path + "' is a palette PNG; expected gray or RGB");
  }
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.width = w;
  out.height = h;
  out.channels = channels;
  out.bit_depth = depth;
  const size_t n = static_cast<size_t>(w) * h * static_cast<size_t>(channels);
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    out.samples[i] = depth == 16 ? static_cast<uint16_t>(buffer[2 * i] << 8 | buffer[2 * i + 1])
                                 : buffer[i];
  return out;
}

void encode_png(const std::string& path, int64_t width, int64_t height, int channels,
                int bit_depth, const std::vector<uint16_t>& samples) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot open '" + path + "' for writing");
  const size_t bytes = bit_depth == 16 ? 2 : 1;
  const size_t rowbytes = static_cast<size_t>(width) * static_cast<size_t>(channels) * bytes;
  std::vector<unsigned char> buffer(rowbytes * static_cast<size_t>(height));
  for (size_t i = 0; i < samples.size(); ++i) {
    if (bytes == 2) {
      buffer[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<unsigned char>(samples[i]);
    }
  }
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (size_t y = 0; y < rows.size(); ++y) rows[y] = buffer.data() + y * rowbytes;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed writing PNG '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw std::runtime_error("write to '" + path + "' failed");
}

void require_unit_range(const Tensor& t, const std::string& what) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!(t[i] >= 0.0 && t[i] <= 1.0))
      throw std::domain_error(what + ": value " + std::to_string(t[i]) + " at index " +
                              std::to_string(i) + " is outside [0,1]");
}

}  // namespace

BayerPattern parse_bayer_pattern(const std::string& s) {
  if (s == "RGGB" || s == "rggb") return BayerPattern::kRggb;
  if (s == "BGGR" || s == "bggr") return BayerPattern::kBggr;
  if (s == "GRBG" || s == "grbg") return BayerPattern::kGrbg;
  if (s == "GBRG" || s == "gbrg") return BayerPattern::kGbrg;
  throw std::invalid_argument("unknown Bayer pattern '" + s + "'");
}

std::string to_string(BayerPattern p) {
  switch (p) {
    case BayerPattern::kRggb: return "RGGB";
    case BayerPattern::kBggr: return "BGGR";
    case BayerPattern::kGrbg: return "GRBG";
    case BayerPattern::kGbrg: return "GBRG";
  }
  return "?";
}

Tensor pack_bayer(const Tensor& mosaic) {
  if (mosaic.rank() != 3 || mosaic.dim(0) != 1)
    throw ShapeError("pack_bayer: expected a [1,2H,2W] mosaic, got " + mosaic.shape().str());
  const int64_t hh = mosaic.dim(1), ww = mosaic.dim(2);
  if (hh % 2 != 0 || ww % 2 != 0)
    throw ShapeError("pack_bayer: mosaic extents " + std::to_string(hh) + "x" +
                     std::to_string(ww) + " must be even");
  const int64_t h = hh / 2, w = ww / 2;
  Tensor out(Shape{4, h, w});
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        out[(c * h + y) * w + x] = mosaic[(2 * y + c / 2) * ww + 2 * x + c % 2];
  return out;
}

Tensor unpack_bayer(const Tensor& packed) {
  if (packed.rank() != 3 || packed.dim(0) != 4)
    throw ShapeError("unpack_bayer: expected [4,H,W], got " + packed.shape().str());
  const int64_t h = packed.dim(1), w = packed.dim(2);
  Tensor out(Shape{1, 2 * h, 2 * w});
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        out[(2 * y + c / 2) * 2 * w + 2 * x + c % 2] = packed[(c * h + y) * w + x];
  return out;
}

Tensor read_gray_png(const std::string& path) {
  const PngPixels p = decode_png(path);
  if (p.channels != 1)
    throw std::runtime_error("'" + path + "' has " + std::to_string(p.channels) +
                             " channels; a RAW mosaic must be single-channel gray");
  const Real scale = p.bit_depth == 16 ? 65535.0 : 255.0;
  Tensor t(Shape{1, p.height, p.width});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = p.samples[static_cast<size_t>(i)] / scale;
  return t;
}

Tensor read_rgb_png(const std::string& path) {
  const PngPixels p = decode_png(path);
  if (p.channels != 3 || p.bit_depth != 8)
    throw std::runtime_error("'" + path + "' must be an 8-bit RGB PNG (got " +
                             std::to_string(p.channels) + " channels, " +
                             std::to_string(p.bit_depth) + " bit)");
  const int64_t plane = p.height * p.width;
  Tensor t(Shape{3, p.height, p.width});
  for (int64_t i = 0; i < plane; ++i)
    for (int64_t c = 0; c < 3; ++c)
      t[c * plane + i] = p.samples[static_cast<size_t>(i * 3 + c)] / 255.0;
  return t;
}

void write_rgb(const std::string& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3)
    throw ShapeError("write_rgb: expected [3,H,W], got " + rgb.shape().str());
  require_unit_range(rgb, "write_rgb '" + path + "'");
  const int64_t h = rgb.dim(1), w = rgb.dim(2), plane = h * w;
  std::vector<uint16_t> samples(static_cast<size_t>(plane * 3));
  for (int64_t i = 0; i < plane; ++i)
    for (int64_t c = 0; c < 3; ++c)
      samples[static_cast<size_t>(i * 3 + c)] =
          static_cast<uint16_t>(std::round(rgb[c * plane + i] * 255.0));
  encode_png(path, w, h, 3, 8, samples);
}

void write_gray_png(const std::string& path, const Tensor& gray, int bit_depth) {
  if (gray.rank() != 3 || gray.dim(0) != 1)
    throw ShapeError("write_gray_png: expected [1,H,W], got " + gray.shape().str());
  if (bit_depth != 8 && bit_depth != 16)
    throw std::invalid_argument("write_gray_png: bit depth must be 8 or 16");
  require_unit_range(gray, "write_gray_png '" + path + "'");
  const Real scale = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<uint16_t> samples(static_cast<size_t>(gray.numel()));
  for (int64_t i = 0; i < gray.numel(); ++i)
    samples[static_cast<size_t>(i)] = static_cast<uint16_t>(std::round(gray[i] * scale));
  encode_png(path, gray.dim(2), gray.dim(1), 1, bit_depth, samples);
}

// Manifest

DatasetManifest DatasetManifest::load(const std::string& root, const std::string& split) {
  DatasetManifest m;
  m.root = root;
  m.split = split;
  const fs::path dir = fs::path(root) / split;
  const fs::path list = dir / "manifest.txt";
  if (fs::exists(list)) {
    std::ifstream in(list);
    if (!in) throw std::runtime_error("cannot read '" + list.string() + "'");
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      m.ids.push_back(line);
    }
  } else {
    const fs::path raw = dir / "raw";
    if (!fs::is_directory(raw))
      throw std::runtime_error("dataset split '" + dir.string() + "' has no raw/ directory");
    for (const auto& e : fs::directory_iterator(raw))
      if (e.is_regular_file() && e.path().extension() == ".png")
        m.ids.push_back(e.path().stem().string());
    std::sort(m.ids.begin(), m.ids.end());
  }
  m.validate();
  return m;
}

std::string DatasetManifest::raw_path(const std::string& id) const {
  return (fs::path(root) / split / "raw" / (id + ".png")).string();
}

std::string DatasetManifest::rgb_path(const std::string& id) const {
  return (fs::path(root) / split / "rgb" / (id + ".png")).string();
}

void DatasetManifest::validate() const {
  if (ids.empty()) throw std::runtime_error("dataset split '" + split + "' under '" + root +
                                            "' lists no samples");
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second)
      throw std::runtime_error("dataset split '" + split + "' lists id '" + id + "' twice");
    for (const auto& p : {raw_path(id), rgb_path(id)})
      if (!fs::exists(p)) throw std::runtime_error("missing sample file '" + p + "'");
  }
  if (black_level || white_level) {
    const Real b = black_level.value_or(0.0), w = white_level.value_or(1.0);
    if (!(w > b)) throw std::invalid_argument("raw white level must exceed black level");
  }
}

void require_disjoint(const DatasetManifest& a, const DatasetManifest& b) {
  const std::set<std::string> left(a.ids.begin(), a.ids.end());
  for (const auto& id : b.ids)
    if (left.count(id))
      throw std::runtime_error("id '" + id + "' appears in both '" + a.split + "' and '" +
                               b.split + "' splits");
}

RawSample load_sample(const DatasetManifest& m, const std::string& id) {
  Tensor mosaic = read_gray_png(m.raw_path(id));
  if (m.black_level || m.white_level) {
    const Real b = m.black_level.value_or(0.0), w = m.white_level.value_or(1.0);
    for (Real& v : mosaic.data()) v = (v - b) / (w - b);
  }
  require_unit_range(mosaic, "raw '" + m.raw_path(id) + "' after normalisation");
  RawSample s;
  s.id = id;
  s.raw_packed = pack_bayer(mosaic);
  s.target_rgb = read_rgb_png(m.rgb_path(id));
  const Shape expect{3, 2 * s.raw_packed.dim(1), 2 * s.raw_packed.dim(2)};
  if (s.target_rgb.shape() != expect)
    throw ShapeError("sample '" + id + "': raw mosaic " + mosaic.shape().str() +
                     " does not match target " + s.target_rgb.shape().str());
  return s;
}

std::vector<RawSample> load_all(const DatasetManifest& m) {
  std::vector<RawSample> out;
  out.reserve(m.ids.size());
  for (const auto& id : m.ids) out.push_back(load_sample(m, id));
  return out;
}

// Batching

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(epoch + 1)));
  // Explicit Fisher-Yates: std::shuffle's draw sequence is library-specific.
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

Batch make_batch(const std::vector<RawSample>& samples, const std::vector<size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
  const RawSample& first = samples.at(indices[0]);
  const Shape in = first.raw_packed.shape(), out = first.target_rgb.shape();
  const auto b = static_cast<int64_t>(indices.size());
  Batch batch;
  batch.input = Tensor(Shape{b, in[0], in[1], in[2]});
  batch.target = Tensor(Shape{b, out[0], out[1], out[2]});
  for (int64_t k = 0; k < b; ++k) {
    const RawSample& s = samples.at(indices[static_cast<size_t>(k)]);
    if (s.raw_packed.shape() != in || s.target_rgb.shape() != out)
      throw ShapeError("make_batch: sample '" + s.id + "' has shape " +
                       s.raw_packed.shape().str() + ", batch expects " + in.str());
    std::copy(s.raw_packed.data().begin(), s.raw_packed.data().end(),
              batch.input.ptr() + k * in.numel());
    std::copy(s.target_rgb.data().begin(), s.target_rgb.data().end(),
              batch.target.ptr() + k * out.numel());
    batch.ids.push_back(s.id);
  }
  return batch;
}

std::vector<Batch> epoch_batches(const std::vector<RawSample>& samples, int64_t batch,
                                 uint64_t seed, int64_t epoch) {
  if (batch < 1) throw std::invalid_argument("batch size must be >= 1");
  const auto order = epoch_order(samples.size(), seed, epoch);
  std::vector<Batch> out;
  for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch)) {
    const size_t end = std::min(order.size(), i + static_cast<size_t>(batch));
    out.push_back(make_batch(samples, std::vector<size_t>(order.begin() + i, order.begin() + end)));
  }
  return out;
}

// Synthetic data

RawSample synthetic_sample(uint64_t seed, int64_t size, const std::string& id) {
  if (size < 2 || size % 2 != 0) throw std::invalid_argument("synthetic size must be even");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> u(0.0, 1.0);
  constexpr Real kPi = 3.14159265358979323846;
  // Per channel: a base level, a linear ramp and one low-frequency wave.
  Real base[3], gx[3], gy[3], amp[3], fx[3], fy[3], ph[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.2 + 0.6 * u(rng);
    gx[c] = 0.3 * (u(rng) - 0.5);
    gy[c] = 0.3 * (u(rng) - 0.5);
    amp[c] = 0.15 * u(rng);
    fx[c] = 1.0 + 2.0 * u(rng);
    fy[c] = 1.0 + 2.0 * u(rng);
    ph[c] = 2 * kPi * u(rng);
  }
  const int64_t plane = size * size;
  Tensor rgb(Shape{3, size, size});
  for (int c = 0; c < 3; ++c)
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        const Real sx = static_cast<Real>(x) / size, sy = static_cast<Real>(y) / size;
        Real v = base[c] + gx[c] * (sx - 0.5) + gy[c] * (sy - 0.5) +
                 amp[c] * std::sin(2 * kPi * (fx[c] * sx + fy[c] * sy) + ph[c]);
        v = std::clamp(v, 0.0, 1.0);
        rgb[c * plane + y * size + x] = std::round(v * 255.0) / 255.0;
      }
  // RGGB: R at (even, even), G at (even, odd) and (odd, even), B at (odd, odd).
  Tensor mosaic(Shape{1, size, size});
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const int c = (y % 2) + (x % 2);
      mosaic[y * size + x] = std::round(rgb[c * plane + y * size + x] * 65535.0) / 65535.0;
    }
  RawSample s;
  s.id = id;
  s.raw_packed = pack_bayer(mosaic);
  s.target_rgb = std::move(rgb);
  return s;
}

DatasetManifest make_synthetic_dataset(const std::string& root, const std::string& split,
                                       int count, int64_t size, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("synthetic dataset needs at least one sample");
  const fs::path dir = fs::path(root) / split;
  fs::create_directories(dir / "raw");
  fs::create_directories(dir / "rgb");
  std::ofstream list(dir / "manifest.txt");
  if (!list) throw std::runtime_error("cannot write '" + (dir / "manifest.txt").string() + "'");
  list << "# synthetic " << split << " split, seed " << seed << "\n";
  DatasetManifest m;
  m.root = root;
  m.split = split;
  for (int i = 0; i < count; ++i) {
    std::string name = std::to_string(i);
    name = split + "_" + std::string(name.size() < 4 ? 4 - name.size() : 0, '0') + name;
    const RawSample s = synthetic_sample(seed * 1000003ULL + static_cast<uint64_t>(i), size, name);
    write_gray_png(m.raw_path(name), unpack_bayer(s.raw_packed), 16);
    write_rgb(m.rgb_path(name), s.target_rgb);
    list << name << "\n";
    m.ids.push_back(name);
  }
  return m;
}

}  // namespace lwisp
