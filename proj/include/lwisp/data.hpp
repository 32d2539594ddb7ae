// lwisp/data.hpp

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

// Paired RAW/RGB sample loading, Bayer packing, batching and PNG output.
//
// Layout on disk:
//   <root>/<split>/raw/<id>.png   single-channel mosaic, 8 or 16 bit
//   <root>/<split>/rgb/<id>.png   8-bit RGB target, twice the packed extent
//   <root>/<split>/manifest.txt   optional; one id per line, '#' comments

#ifndef LWISP_DATA_HPP_
#define LWISP_DATA_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lwisp/tensor.hpp"

namespace lwisp {

enum class BayerPattern { kRggb, kBggr, kGrbg, kGbrg };
BayerPattern parse_bayer_pattern(const std::string& s);
std::string to_string(BayerPattern p);

// [1,2H,2W] mosaic -> [4,H,W]; channels are the top-left, top-right,
// bottom-left and bottom-right cell positions whatever the colour pattern.
Tensor pack_bayer(const Tensor& mosaic);
Tensor unpack_bayer(const Tensor& packed);

// PNG I/O. Values are scaled by the bit-depth maximum.
Tensor read_gray_png(const std::string& path);  // [1,H,W]
Tensor read_rgb_png(const std::string& path);   // [3,H,W]
// Rounds v * 255 half away from zero. Values outside [0,1] are rejected.
void write_rgb(const std::string& path, const Tensor& rgb);
void write_gray_png(const std::string& path, const Tensor& gray, int bit_depth);

struct RawSample {
  Tensor raw_packed;  // [4,H,W]
  Tensor target_rgb;  // [3,2H,2W]
  std::string id;
};

struct DatasetManifest {
  std::string root;
  std::string split;
  std::vector<std::string> ids;
  BayerPattern pattern = BayerPattern::kRggb;
  // Optional linear normalisation of raw values: (v - black) / (white - black).
  std::optional<Real> black_level;
  std::optional<Real> white_level;

  // Reads manifest.txt if present, otherwise lists raw/*.png sorted by name.
  static DatasetManifest load(const std::string& root, const std::string& split);

  std::string raw_path(const std::string& id) const;
  std::string rgb_path(const std::string& id) const;
  void validate() const;
};

// Throws if any id appears in both manifests.
void require_disjoint(const DatasetManifest& a, const DatasetManifest& b);

RawSample load_sample(const DatasetManifest& m, const std::string& id);
std::vector<RawSample> load_all(const DatasetManifest& m);

struct Batch {
  Tensor input;   // [B,4,H,W]
  Tensor target;  // [B,3,2H,2W]
  std::vector<std::string> ids;
};

// Deterministic permutation of [0, n) for the given seed and epoch.
std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch);
Batch make_batch(const std::vector<RawSample>& samples, const std::vector<size_t>& indices);
// Batches of an epoch in permutation order; the last batch may be smaller.
std::vector<Batch> epoch_batches(const std::vector<RawSample>& samples, int64_t batch,
                                 uint64_t seed, int64_t epoch);

// One smooth random scene, quantised exactly as the PNG files would store it
// (8-bit target, 16-bit RGGB mosaic). `size` is the RGB extent and must be even.
RawSample synthetic_sample(uint64_t seed, int64_t size, const std::string& id);

// Writes `count` smooth random scenes as 16-bit RGGB mosaics plus 8-bit
// targets. `size` is the RGB extent and must be even.
DatasetManifest make_synthetic_dataset(const std::string& root, const std::string& split,
                                       int count, int64_t size, uint64_t seed);

}  // namespace lwisp

#endif  // LWISP_DATA_HPP_
