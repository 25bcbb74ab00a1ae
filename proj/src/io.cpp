#include "nbe/io.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nbe {

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a_str(const std::string& s) { return fnv1a(s.data(), s.size()); }

namespace {
std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}
}  // namespace

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc) {
  static const auto table = make_crc_table();
  const auto* p = static_cast<const unsigned char*>(data);
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

std::uint64_t dataset_content_hash(const SpatialDataset& data) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < data.S.size(); ++i) {
    const auto& s = data.S[i];
    const auto& z = data.Z[i];
    for (long r = 0; r < s.rows(); ++r) {
      const double row[3] = {s(r, 0), s(r, 1), z[r]};
      h = fnv1a(row, sizeof(row), h);
    }
  }
  return h;
}

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xFF));
}

void append_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  append_u32(buf, bits);
}

std::uint32_t read_u32(const std::string& buf, std::size_t off) {
  if (off + 4 > buf.size()) throw std::runtime_error("read_u32: out of range");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | std::uint8_t(buf[off + i]);
  return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t off) {
  if (off + 8 > buf.size()) throw std::runtime_error("read_u64: out of range");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | std::uint8_t(buf[off + i]);
  return v;
}

float read_f32(const std::string& buf, std::size_t off) {
  const std::uint32_t bits = read_u32(buf, off);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // prefer the shortest representation that round-trips
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::strtod(probe, nullptr) == v) return probe;
  }
  return buf;
}

void write_dataset_csv(const std::string& path, const SpatialDataset& data,
                       const std::string& meta_line) {
  data.validate();
  std::string out;
  if (!meta_line.empty()) out += "# " + meta_line + "\n";
  out += "replicate,x,y,z\n";
  for (int i = 0; i < data.replicates(); ++i) {
    for (long r = 0; r < data.S[i].rows(); ++r) {
      out += std::to_string(i + 1);
      out += ',';
      out += format_double(data.S[i](r, 0));
      out += ',';
      out += format_double(data.S[i](r, 1));
      out += ',';
      out += format_double(data.Z[i][r]);
      out += '\n';
    }
  }
  write_file(path, out);
}

SpatialDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string line;
  bool header_seen = false;
  std::vector<std::vector<std::array<double, 3>>> rows;  // per replicate
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "replicate,x,y,z")
        throw std::runtime_error(path + ": expected header replicate,x,y,z");
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string field;
    std::array<double, 4> vals{};
    for (int f = 0; f < 4; ++f) {
      if (!std::getline(ss, field, ','))
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected 4 fields");
      vals[std::size_t(f)] = std::strtod(field.c_str(), nullptr);
    }
    const long rep = long(vals[0]);
    if (rep < 1)
      throw std::runtime_error(path + ": replicate indices are 1-based");
    if (long(rows.size()) < rep) rows.resize(std::size_t(rep));
    rows[std::size_t(rep - 1)].push_back({vals[1], vals[2], vals[3]});
  }
  if (!header_seen) throw std::runtime_error(path + ": missing header");
  SpatialDataset data;
  for (const auto& rep : rows) {
    Points s(long(rep.size()), 2);
    Eigen::VectorXd z(long(rep.size()));
    for (long r = 0; r < s.rows(); ++r) {
      s(r, 0) = rep[std::size_t(r)][0];
      s(r, 1) = rep[std::size_t(r)][1];
      z[r] = rep[std::size_t(r)][2];
    }
    data.S.push_back(std::move(s));
    data.Z.push_back(std::move(z));
  }
  return data;
}

}  // namespace nbe
