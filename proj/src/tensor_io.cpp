// SPDX-License-Identifier: Apache-2.0
#include "gam/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gam {

namespace {

void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  put_bytes(os, b, 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(os, b, 4);
}

void put_f32(std::ostream& os, float v) {
  static_assert(sizeof(float) == 4);
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

void put_f64(std::ostream& os, double v) {
  static_assert(sizeof(double) == 8);
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u32(os, static_cast<uint32_t>(u & 0xffffffffu));
  put_u32(os, static_cast<uint32_t>(u >> 32));
}

void get_bytes(std::istream& is, void* p, size_t n, const std::string& ctx) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  check(static_cast<size_t>(is.gcount()) == n, ctx, ": truncated file");
}

uint16_t get_u16(std::istream& is, const std::string& ctx) {
  unsigned char b[2];
  get_bytes(is, b, 2, ctx);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is, const std::string& ctx) {
  unsigned char b[4];
  get_bytes(is, b, 4, ctx);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

double get_f32(std::istream& is, const std::string& ctx) {
  const uint32_t u = get_u32(is, ctx);
  float f;
  std::memcpy(&f, &u, 4);
  return static_cast<double>(f);
}

double get_f64(std::istream& is, const std::string& ctx) {
  const uint64_t lo = get_u32(is, ctx);
  const uint64_t hi = get_u32(is, ctx);
  const uint64_t u = lo | (hi << 32);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

bool valid_bundle_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

void write_gten(std::ostream& os, const Tensor& t, Dtype dt) {
  check(t.defined(), "write_gten: undefined tensor");
  put_bytes(os, "GTEN", 4);
  const unsigned char ver = 1;
  const unsigned char dtb = static_cast<unsigned char>(dt);
  put_bytes(os, &ver, 1);
  put_bytes(os, &dtb, 1);
  put_u16(os, static_cast<uint16_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
  if (dt == Dtype::f32) {
    for (int64_t i = 0; i < t.numel(); ++i) put_f32(os, static_cast<float>(t[i]));
  } else {
    for (int64_t i = 0; i < t.numel(); ++i) put_f64(os, t[i]);
  }
}

Tensor read_gten(std::istream& is, const std::string& ctx) {
  char magic[4];
  get_bytes(is, magic, 4, ctx);
  check(std::memcmp(magic, "GTEN", 4) == 0, ctx, ": bad magic, not a GTEN file");
  unsigned char ver = 0, dtb = 0;
  get_bytes(is, &ver, 1, ctx);
  check(ver == 1, ctx, ": unsupported GTEN version ", int(ver));
  get_bytes(is, &dtb, 1, ctx);
  check(dtb == 1 || dtb == 2, ctx, ": unsupported GTEN dtype ", int(dtb));
  const uint16_t rank = get_u16(is, ctx);
  check(rank >= 1 && rank <= 8, ctx, ": unreasonable GTEN rank ", rank);
  std::vector<int> shape(rank);
  int64_t n = 1;
  for (int i = 0; i < rank; ++i) {
    const uint32_t d = get_u32(is, ctx);
    check(d >= 1 && d <= (1u << 24), ctx, ": unreasonable GTEN dim ", d);
    shape[i] = static_cast<int>(d);
    n *= d;
    check(n <= (int64_t(1) << 31), ctx, ": GTEN tensor too large");
  }
  std::vector<double> data(static_cast<size_t>(n));
  if (dtb == 1) {
    for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i)] = get_f32(is, ctx);
  } else {
    for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i)] = get_f64(is, ctx);
  }
  return Tensor::from_data(std::move(shape), std::move(data));
}

void write_gten_file(const std::string& path, const Tensor& t, Dtype dt) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open ", path, " for writing");
  write_gten(os, t, dt);
  os.flush();
  check(os.good(), "write failed for ", path);
}

Tensor read_gten_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open ", path);
  Tensor t = read_gten(is, path);
  is.peek();
  check(is.eof(), path, ": trailing bytes after tensor payload");
  return t;
}

void write_bundle(const std::string& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open ", path, " for writing");
  os << "GAMBUNDLE 1\n";
  for (const auto& [name, t] : tensors) {
    check(valid_bundle_name(name), "bundle tensor name '", name, "' is not valid");
    os << "tensor " << name << "\n";
  }
  os << "END\n";
  for (const auto& [name, t] : tensors) write_gten(os, t, Dtype::f64);
  os.flush();
  check(os.good(), "write failed for ", path);
}

NamedTensors read_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open ", path);
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), path, ": empty bundle");
  check(line == "GAMBUNDLE 1", path, ": bad bundle header '", line, "'");
  std::vector<std::string> names;
  for (;;) {
    check(static_cast<bool>(std::getline(is, line)), path,
          ": bundle manifest ended before END");
    if (line == "END") break;
    check(line.rfind("tensor ", 0) == 0, path, ": bad manifest line '", line, "'");
    std::string name = line.substr(7);
    check(valid_bundle_name(name), path, ": bad tensor name '", name, "'");
    for (const auto& seen : names)
      check(seen != name, path, ": duplicate tensor name '", name, "'");
    names.push_back(std::move(name));
  }
  NamedTensors out;
  out.reserve(names.size());
  for (const auto& name : names)
    out.emplace_back(name, read_gten(is, path + ":" + name));
  is.peek();
  check(is.eof(), path, ": trailing bytes after last tensor");
  return out;
}

void write_pgm(const std::string& path, const Tensor& t) {
  check(t.ndim() == 2, "write_pgm expects a rank-2 tensor, got ", t.shape_str());
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open ", path, " for writing");
  os << "P5\n" << t.dim(1) << " " << t.dim(0) << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double v = t[i];
    check(v == std::floor(v) && v >= 0.0 && v <= 255.0,
          "write_pgm: pixel value ", v, " is not an integer in [0,255]");
    row[static_cast<size_t>(i)] = static_cast<unsigned char>(v);
  }
  put_bytes(os, row.data(), row.size());
  os.flush();
  check(os.good(), "write failed for ", path);
}

Tensor read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open ", path);
  std::string magic;
  is >> magic;
  check(magic == "P5", path, ": not a binary PGM (P5) file");
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  check(is.good() && w > 0 && h > 0, path, ": bad PGM header");
  check(maxval == 255, path, ": unsupported PGM maxval ", maxval);
  is.get();  // single whitespace byte after header
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
  get_bytes(is, buf.data(), buf.size(), path);
  Tensor t({h, w});
  for (size_t i = 0; i < buf.size(); ++i) t[static_cast<int64_t>(i)] = buf[i];
  return t;
}

}  // namespace gam
