#include "nl2sparql/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace nl2sparql::ad {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'Q', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

[[noreturn]] void truncated(const std::string& path) {
  throw SerializationError(path + ": truncated parameter file");
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) truncated(path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& in, const std::string& path) {
  std::uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string get_str(std::istream& in, const std::string& path) {
  std::uint32_t len = get_u32(in, path);
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) truncated(path);
  return s;
}

std::ifstream open_and_check_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SerializationError(path + ": cannot open");
  char magic[4];
  if (!in.read(magic, 4)) truncated(path);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw SerializationError(path + ": not a parameter file (bad magic)");
  }
  std::uint32_t version = get_u32(in, path);
  if (version != kVersion) {
    throw SerializationError(path + ": unsupported format version " + std::to_string(version));
  }
  return in;
}

std::map<std::string, std::string> read_metadata(std::ifstream& in, const std::string& path) {
  std::map<std::string, std::string> meta;
  std::uint32_t n = get_u32(in, path);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string key = get_str(in, path);
    std::string value = get_str(in, path);
    meta[key] = std::move(value);
  }
  return meta;
}

}  // namespace

template <typename Real>
void save_params(const std::string& path, const ParamSet<Real>& params,
                 const std::map<std::string, std::string>& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SerializationError(path + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [key, value] : metadata) {
    put_str(out, key);
    put_str(out, value);
  }
  put_u32(out, static_cast<std::uint32_t>(params.count()));
  for (const auto& [name, p] : params) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (Real v : p.value) put_f32(out, static_cast<float>(v));
  }
  if (!out) throw SerializationError(path + ": write failed");
}

template <typename Real>
std::map<std::string, std::string> load_params(const std::string& path, ParamSet<Real>& params) {
  std::ifstream in = open_and_check_header(path);
  auto meta = read_metadata(in, path);
  std::uint32_t n = get_u32(in, path);
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = get_str(in, path);
    std::uint32_t rank = get_u32(in, path);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = get_u32(in, path);
    if (!params.contains(name)) {
      throw SerializationError(path + ": stored parameter '" + name +
                               "' has no counterpart in the model");
    }
    Param<Real>& p = params.get(name);
    if (p.shape != shape) {
      throw SerializationError(path + ": parameter '" + name + "' stored as " +
                               shape_str(shape) + " but the model expects " +
                               shape_str(p.shape));
    }
    for (Real& v : p.value) v = static_cast<Real>(get_f32(in, path));
    seen.insert(std::move(name));
  }
  if (seen.size() != params.count()) {
    for (const auto& [name, p] : params) {
      if (!seen.count(name)) {
        throw SerializationError(path + ": model parameter '" + name + "' missing from file");
      }
    }
  }
  return meta;
}

std::map<std::string, std::string> load_metadata(const std::string& path) {
  std::ifstream in = open_and_check_header(path);
  return read_metadata(in, path);
}

template void save_params<float>(const std::string&, const ParamSet<float>&,
                                 const std::map<std::string, std::string>&);
template void save_params<double>(const std::string&, const ParamSet<double>&,
                                  const std::map<std::string, std::string>&);
template std::map<std::string, std::string> load_params<float>(const std::string&,
                                                               ParamSet<float>&);
template std::map<std::string, std::string> load_params<double>(const std::string&,
                                                                ParamSet<double>&);

}  // namespace nl2sparql::ad
