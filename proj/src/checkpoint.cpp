// lwisp/checkpoint.cpp

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

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lwisp/model.hpp"

namespace lwisp {

namespace {

constexpr char kMagic[8] = {'L', 'W', 'I', 'S', 'P', 'C', 'K', 'P'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  void bytes(char* out, size_t n) {
    is_.read(out, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is_.gcount()) != n) fail("truncated file");
  }
  uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::string str(uint32_t limit) {
    const uint32_t n = u32();
    if (n > limit) fail("string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("checkpoint '" + path_ + "': " + what);
  }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (ckpt.scalar_bytes != 4 && ckpt.scalar_bytes != 8)
    throw std::invalid_argument("checkpoint scalar width must be 4 or 8 bytes");
  std::ostringstream cfg;
  for (const auto& [k, v] : ckpt.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw std::invalid_argument("checkpoint config entry '" + k + "' is not a single line");
    cfg << k << '=' << v << '\n';
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    os.write(kMagic, sizeof kMagic);
    put_u32(os, kCheckpointVersion);
    put_u32(os, ckpt.scalar_bytes);
    const std::string text = cfg.str();
    put_u32(os, static_cast<uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_u32(os, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      put_u32(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put_u32(os, static_cast<uint32_t>(t.rank()));
      for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
      for (Real v : t.data()) {
        if (ckpt.scalar_bytes == 8) {
          uint64_t bits;
          std::memcpy(&bits, &v, 8);
          put_u64(os, bits);
        } else {
          const float f = static_cast<float>(v);
          uint32_t bits;
          std::memcpy(&bits, &f, 4);
          put_u32(os, bits);
        }
      }
    }
    if (!os) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place at '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  Reader r(is, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) r.fail("bad magic");
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.scalar_bytes = r.u32();
  if (ckpt.scalar_bytes != 4 && ckpt.scalar_bytes != 8)
    r.fail("scalar width " + std::to_string(ckpt.scalar_bytes));

  std::istringstream cfg(r.str(1u << 20));
  std::string line;
  while (std::getline(cfg, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("malformed config line '" + line + "'");
    ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const uint32_t count = r.u32();
  for (uint32_t k = 0; k < count; ++k) {
    std::string name = r.str(4096);
    const uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("tensor '" + name + "' has rank " + std::to_string(rank));
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) {
      d = r.u32();
      if (d == 0) r.fail("tensor '" + name + "' has a zero extent");
    }
    Tensor t{Shape(dims)};
    for (Real& v : t.data()) {
      if (ckpt.scalar_bytes == 8) {
        const uint64_t bits = r.u64();
        std::memcpy(&v, &bits, 8);
      } else {
        const uint32_t bits = r.u32();
        float f;
        std::memcpy(&f, &bits, 4);
        v = f;
      }
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  char extra;
  if (is.read(&extra, 1)) r.fail("trailing bytes after last tensor");
  return ckpt;
}

void load_params(ParamStore& store, const Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& p : store.params()) {
    const Tensor* t = ckpt.find(prefix + p.name);
    if (t == nullptr) throw std::runtime_error("checkpoint is missing '" + prefix + p.name + "'");
    Var v = p.var;
    if (!(t->shape() == v.shape()))
      throw ShapeError("checkpoint tensor '" + prefix + p.name + "' has shape " +
                       t->shape().str() + ", model expects " + v.shape().str());
    v.mutable_value() = *t;
  }
}

void append_params(Checkpoint& ckpt, const ParamStore& store, const std::string& prefix) {
  for (const auto& p : store.params()) ckpt.tensors.emplace_back(prefix + p.name, p.var.value());
}

}  // namespace lwisp
