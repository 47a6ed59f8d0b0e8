/* Copyright 2026 The WWT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <bit>
#include <fstream>
#include <iterator>
#include <vector>

#include "wwt/params.hpp"

namespace wwt {
namespace {

constexpr char kMagic[4] = {'W', 'W', 'T', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 4;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& buf) : buf_(buf) {}
  std::uint64_t get(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamMap<float>& params) {
  std::vector<unsigned char> body;
  for (const auto& [name, t] : params) {
    put_u32(body, static_cast<std::uint32_t>(name.size()));
    body.insert(body.end(), name.begin(), name.end());
    put_u32(body, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(body, e);
    for (float v : t.data()) put_u32(body, std::bit_cast<std::uint32_t>(v));
  }
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, kHeaderBytes + body.size());
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  out.insert(out.end(), body.begin(), body.end());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

ParamMap<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                       std::istreambuf_iterator<char>());
  Reader r(buf);
  if (r.str(4) != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic");
  const auto version = r.get(4);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto total = r.get(8);
  if (total != buf.size()) {
    throw FormatError("checkpoint length " + std::to_string(buf.size()) +
                      " does not match recorded " + std::to_string(total));
  }
  const auto count = r.get(4);
  ParamMap<float> out;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto nlen = r.get(4);
    std::string name = r.str(nlen);
    const auto rank = r.get(4);
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(r.get(8));
    std::vector<float> data(numel(shape));
    for (float& v : data) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.get(4)));
    out.emplace(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (r.pos() != buf.size()) throw FormatError("trailing bytes in checkpoint");
  return out;
}

}  // namespace wwt
