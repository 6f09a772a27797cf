#include "rasterfix/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace rasterfix {

namespace {

constexpr uint32_t kFormatVersion = 1;

uint32_t to_le32(uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap32(v);
}

uint64_t to_le64(uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap64(v);
}

void write_u32(std::ostream& out, uint32_t v) {
  const uint32_t le = to_le32(v);
  out.write(reinterpret_cast<const char*>(&le), sizeof le);
}

void write_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  bits = to_le64(bits);
  out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

uint32_t read_u32(std::istream& in, const std::string& what) {
  uint32_t le = 0;
  in.read(reinterpret_cast<char*>(&le), sizeof le);
  require(in.good(), ErrorCode::io_truncated, "truncated payload reading " + what);
  return to_le32(le);
}

double read_f64(std::istream& in, const std::string& what) {
  uint64_t le = 0;
  in.read(reinterpret_cast<char*>(&le), sizeof le);
  require(in.good(), ErrorCode::io_truncated, "truncated payload reading " + what);
  le = to_le64(le);
  double v;
  std::memcpy(&v, &le, sizeof v);
  return v;
}

}  // namespace

void save_raw_container(const RawContainer& c, const std::filesystem::path& path,
                        bool single_image_magic) {
  require(!c.frames.empty(), ErrorCode::invalid_argument, "save: no frames");
  require(!single_image_magic || c.frames.size() == 1, ErrorCode::invalid_argument,
          "save: RSIM holds exactly one image");
  const int w = c.frames.front().width();
  const int h = c.frames.front().height();
  for (const PixelImage& f : c.frames) {
    require(f.width() == w && f.height() == h, ErrorCode::invalid_argument,
            "save: frames differ in size");
  }
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io_failure, "cannot open for writing: " + path.string());
  out.write(single_image_magic ? "RSIM" : "RSIS", 4);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<uint32_t>(c.frames.size()));
  write_u32(out, static_cast<uint32_t>(w));
  write_u32(out, static_cast<uint32_t>(h));
  write_f64(out, c.dwell_time_s);
  write_f64(out, c.flyback_time_s);
  for (const PixelImage& f : c.frames) {
    for (double v : f.values()) write_f64(out, v);
  }
  require(out.good(), ErrorCode::io_failure, "write failed: " + path.string());
}

RawContainer load_raw_container(const std::filesystem::path& path,
                                bool single_image_magic) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io_failure, "cannot open: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  require(in.good(), ErrorCode::io_truncated, "truncated payload reading magic");
  const char* expected = single_image_magic ? "RSIM" : "RSIS";
  require(std::memcmp(magic, expected, 4) == 0, ErrorCode::io_bad_magic,
          "bad magic in " + path.string() + " (expected " + expected + ")");
  const uint32_t version = read_u32(in, "version");
  require(version == kFormatVersion, ErrorCode::io_bad_version,
          "unsupported format version " + std::to_string(version));
  const uint32_t k = read_u32(in, "frame count");
  const uint32_t w = read_u32(in, "width");
  const uint32_t h = read_u32(in, "height");
  require(k >= 1, ErrorCode::io_dimension_mismatch, "frame count must be >= 1");
  require(!single_image_magic || k == 1, ErrorCode::io_dimension_mismatch,
          "RSIM must hold exactly one image");
  require(w >= 2 && h >= 2 && w <= (1u << 20) && h <= (1u << 20),
          ErrorCode::io_dimension_mismatch,
          "implausible dimensions " + std::to_string(w) + "x" + std::to_string(h));
  RawContainer c;
  c.dwell_time_s = read_f64(in, "dwell time");
  c.flyback_time_s = read_f64(in, "flyback time");
  c.frames.reserve(k);
  for (uint32_t frame = 0; frame < k; ++frame) {
    PixelImage img(static_cast<int>(w), static_cast<int>(h));
    for (double& v : img.values()) v = read_f64(in, "pixel data");
    c.frames.push_back(std::move(img));
  }
  return c;
}

void save_series(const ImageSeries& series, const std::filesystem::path& path) {
  RawContainer c;
  c.frames = series.frames();
  c.dwell_time_s = series.metadata().dwell_time_s;
  c.flyback_time_s = series.metadata().flyback_time_s;
  save_raw_container(c, path, /*single_image_magic=*/false);
}

ImageSeries load_series(const std::filesystem::path& path) {
  RawContainer c = load_raw_container(path, /*single_image_magic=*/false);
  SeriesMetadata meta;
  meta.dwell_time_s = c.dwell_time_s;
  meta.flyback_time_s = c.flyback_time_s;
  return ImageSeries(std::move(c.frames), meta);
}

void save_image(const PixelImage& img, const std::filesystem::path& path) {
  RawContainer c;
  c.frames.push_back(img);
  save_raw_container(c, path, /*single_image_magic=*/true);
}

PixelImage load_image(const std::filesystem::path& path) {
  RawContainer c = load_raw_container(path, /*single_image_magic=*/true);
  return std::move(c.frames.front());
}

namespace {

int pgm_next_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next integer token.
  while (true) {
    const int c = in.peek();
    require(c != EOF, ErrorCode::io_truncated, "truncated PGM header");
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int value = 0;
  in >> value;
  require(in.good(), ErrorCode::io_truncated, "malformed PGM header token");
  return value;
}

}  // namespace

void save_pgm16(const PixelImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io_failure, "cannot open for writing: " + path.string());
  out << "P5\n" << img.width() << " " << img.height() << "\n65535\n";
  for (int j = 0; j < img.height(); ++j) {
    for (int i = 0; i < img.width(); ++i) {
      const double v = std::round(img.at(i, j));
      const uint16_t q = static_cast<uint16_t>(std::clamp(v, 0.0, 65535.0));
      const unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8),
                                      static_cast<unsigned char>(q & 0xff)};
      out.write(reinterpret_cast<const char*>(bytes), 2);
    }
  }
  require(out.good(), ErrorCode::io_failure, "write failed: " + path.string());
}

PixelImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io_failure, "cannot open: " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  require(in.good() && magic[0] == 'P' && magic[1] == '5', ErrorCode::io_bad_magic,
          "bad magic: not a binary PGM (P5) file");
  const int w = pgm_next_token(in);
  const int h = pgm_next_token(in);
  const int maxval = pgm_next_token(in);
  require(w >= 2 && h >= 2, ErrorCode::io_dimension_mismatch, "PGM dimensions too small");
  require(maxval > 0 && maxval <= 65535, ErrorCode::io_dimension_mismatch,
          "unsupported PGM maxval " + std::to_string(maxval));
  in.get();  // single whitespace after maxval
  const bool two_byte = maxval >= 256;
  PixelImage img(w, h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      int value;
      if (two_byte) {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        require(in.good(), ErrorCode::io_truncated, "truncated PGM payload");
        value = (b[0] << 8) | b[1];
      } else {
        unsigned char b;
        in.read(reinterpret_cast<char*>(&b), 1);
        require(in.good(), ErrorCode::io_truncated, "truncated PGM payload");
        value = b;
      }
      img.at(i, j) = static_cast<double>(value);
    }
  }
  return img;
}

}  // namespace rasterfix
