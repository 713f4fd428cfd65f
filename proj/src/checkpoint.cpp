// SPDX-License-Identifier: Apache-2.0
#include "finetype/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "finetype/errors.hpp"

namespace finetype {

namespace {

constexpr const char* kMagic = "FINETYPE-CHECKPOINT";

template <typename U>
void put_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

template <typename U>
U get_le(const unsigned char* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return bits;
}

Shape parse_shape(const std::string& s, const std::string& origin, std::size_t line) {
  Shape shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      shape.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw ParseError(origin, line, "bad shape '" + s + "'");
    }
  }
  if (shape.empty()) throw ParseError(origin, line, "empty shape");
  return shape;
}

std::string shape_token(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

}  // namespace

std::string encode_checkpoint(const ParamStore& params,
                              const std::map<std::string, std::string>& meta,
                              StorageType storage) {
  const bool f32 = storage == StorageType::f32;
  const std::size_t width = f32 ? 4 : 8;
  std::ostringstream head;
  head << kMagic << '\n' << "format_version " << kCheckpointFormatVersion << '\n';
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint metadata key/value contains a separator: " + k);
    }
    head << "meta " << k << ' ' << v << '\n';
  }
  std::size_t offset = 0;
  for (const auto& e : params) {
    head << "param " << e.name << ' ' << (f32 ? "f32" : "f64") << ' ' << shape_token(e.value.shape())
         << ' ' << offset << ' ' << e.value.numel() << '\n';
    offset += e.value.numel() * width;
  }
  head << "end_manifest " << offset << '\n';

  std::string out = head.str();
  out.reserve(out.size() + offset);
  for (const auto& e : params) {
    for (double v : e.value.data()) {
      if (f32) {
        put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
  Checkpoint ck;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw ParseError(origin, line_no + 1, "truncated manifest");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return line;
  };

  if (next_line() != kMagic) throw ParseError(origin, 1, "not a finetype checkpoint");
  struct Pending {
    std::string name;
    bool f32;
    Shape shape;
    std::size_t offset, count;
  };
  std::vector<Pending> pending;
  std::size_t data_bytes = 0;
  bool have_version = false;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format_version") {
      ls >> ck.format_version;
      if (ck.format_version != kCheckpointFormatVersion) {
        throw ParseError(origin, line_no,
                         "unsupported format_version " + std::to_string(ck.format_version));
      }
      have_version = true;
    } else if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ck.meta[key] = value;
    } else if (tag == "param") {
      Pending p;
      std::string dtype, shape;
      ls >> p.name >> dtype >> shape >> p.offset >> p.count;
      if (!ls || (dtype != "f32" && dtype != "f64")) {
        throw ParseError(origin, line_no, "malformed param record");
      }
      p.f32 = dtype == "f32";
      p.shape = parse_shape(shape, origin, line_no);
      if (shape_numel(p.shape) != p.count) throw ParseError(origin, line_no, "count/shape mismatch");
      pending.push_back(std::move(p));
    } else if (tag == "end_manifest") {
      ls >> data_bytes;
      break;
    } else {
      throw ParseError(origin, line_no, "unknown manifest record '" + tag + "'");
    }
  }
  if (!have_version) throw ParseError(origin, line_no, "missing format_version");
  if (bytes.size() - pos != data_bytes) {
    throw ParseError(origin, line_no, "data section is " + std::to_string(bytes.size() - pos) +
                                          " bytes, manifest declares " + std::to_string(data_bytes));
  }
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (const auto& p : pending) {
    const std::size_t width = p.f32 ? 4 : 8;
    if (p.offset + p.count * width > data_bytes) {
      throw ParseError(origin, line_no, "param " + p.name + " extends past the data section");
    }
    std::vector<double> values(p.count);
    for (std::size_t i = 0; i < p.count; ++i) {
      const unsigned char* src = data + p.offset + i * width;
      values[i] = p.f32 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(src)))
                        : std::bit_cast<double>(get_le<std::uint64_t>(src));
    }
    ck.params.add(p.name, Tensor(p.shape, std::move(values)));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta, StorageType storage) {
  const std::string bytes = encode_checkpoint(params, meta, storage);
  // Write-then-rename so an interrupted save never clobbers the last good file.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write on checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str(), path.string());
}

}  // namespace finetype
