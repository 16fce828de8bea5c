#include "sfc/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace sfc {

namespace {

struct Parser {
  std::string buf;
  size_t pos = 0;
  const std::string& path;

  explicit Parser(const std::string& p) : path(p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open '" + p + "'");
    buf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("'" + path + "': " + what + " at byte " + std::to_string(pos));
  }

  void skip_space() {
    while (pos < buf.size()) {
      const char c = buf[pos];
      if (c == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        return;
      }
    }
  }

  int read_int() {
    skip_space();
    if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9') fail("expected integer");
    long v = 0;
    while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
      v = v * 10 + (buf[pos] - '0');
      if (v > 1 << 30) fail("integer out of range");
      ++pos;
    }
    return static_cast<int>(v);
  }

  // magic, dims, maxval, then exactly one whitespace byte before the raster
  void read_header(const char* magic, int& w, int& h) {
    if (buf.size() < 2 || buf[0] != magic[0] || buf[1] != magic[1])
      fail(std::string("expected ") + magic + " magic");
    pos = 2;
    w = read_int();
    h = read_int();
    const int maxval = read_int();
    if (w < 1 || h < 1) fail("invalid dimensions");
    if (maxval != 255) fail("unsupported maxval " + std::to_string(maxval));
    if (pos >= buf.size() || (buf[pos] != '\n' && buf[pos] != ' ' && buf[pos] != '\t' &&
                              buf[pos] != '\r'))
      fail("expected whitespace before raster");
    ++pos;
  }

  void read_raster(uint8_t* dst, size_t n) {
    if (buf.size() - pos < n)
      fail("raster truncated, need " + std::to_string(n) + " bytes, have " +
           std::to_string(buf.size() - pos));
    std::copy(buf.begin() + static_cast<long>(pos), buf.begin() + static_cast<long>(pos + n),
              dst);
    pos += n;
  }
};

void write_file(const std::string& path, const std::string& header, const uint8_t* data,
                size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(header.data(), static_cast<long>(header.size()));
  out.write(reinterpret_cast<const char*>(data), static_cast<long>(n));
  if (!out) throw DataError("short write to '" + path + "'");
}

}  // namespace

RgbImage read_ppm(const std::string& path) {
  Parser p(path);
  int w, h;
  p.read_header("P6", w, h);
  RgbImage img(w, h);
  p.read_raster(img.px.data(), img.px.size());
  return img;
}

void write_ppm(const std::string& path, const RgbImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  write_file(path, header, img.px.data(), img.px.size());
}

ByteImage read_pgm(const std::string& path) {
  Parser p(path);
  int w, h;
  p.read_header("P5", w, h);
  ByteImage img(w, h);
  p.read_raster(img.px.data(), img.px.size());
  return img;
}

void write_pgm(const std::string& path, const ByteImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  write_file(path, header, img.px.data(), img.px.size());
}

Tensor tensor_from_rgb(const RgbImage& img) {
  Tensor t({3, img.h, img.w});
  const size_t plane = static_cast<size_t>(img.h) * img.w;
  for (size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      t[static_cast<size_t>(c) * plane + i] = static_cast<float>(img.px[i * 3 + c]) / 255.0f;
  return t;
}

RgbImage rgb_from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3)
    throw ShapeError("expected [3,H,W], got " + shape_str(t.shape));
  RgbImage img(t.dim(2), t.dim(1));
  const size_t plane = static_cast<size_t>(img.h) * img.w;
  for (size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      float v = t[static_cast<size_t>(c) * plane + i];
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      img.px[i * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
  return img;
}

}  // namespace sfc
