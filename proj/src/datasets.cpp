#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "inrbo/errors.hpp"
#include "inrbo/objectives.hpp"

namespace inrbo {
namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[noreturn]] void corrupt(const std::string& path, std::size_t offset, const std::string& what) {
  throw Error(ErrorCode::kCorruptFile, path + ": " + what + " at byte " + std::to_string(offset));
}

// Decoded 8-bit-or-wider raster, row-major, channel-interleaved, in [0,1].
struct Raster {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<double> values;
};

// --- PNG -------------------------------------------------------------------

struct PngSource {
  const std::vector<unsigned char>* bytes;
  std::size_t pos = 0;
  std::string message;
};

void png_read_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
  if (src->pos + count > src->bytes->size()) png_error(png, "unexpected end of file");
  std::memcpy(out, src->bytes->data() + src->pos, count);
  src->pos += count;
}

void png_on_error(png_structp png, png_const_charp msg) {
  static_cast<PngSource*>(png_get_error_ptr(png))->message = msg;
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

Raster decode_png(const std::vector<unsigned char>& bytes, const std::string& path) {
  PngSource src{&bytes, 0, {}};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &src, png_on_error, png_on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoError, "libpng initialization failed");
  }
  Raster r;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> pixels;
  std::string unsupported;
  // No C++ objects with non-trivial destructors are created between setjmp and
  // a possible longjmp below, other than those declared above.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    corrupt(path, src.pos, "invalid PNG (" + src.message + ")");
  }
  png_set_read_fn(png, &src, png_read_memory);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    unsupported = "only 8-bit grayscale or RGB PNG is supported (bit depth " + std::to_string(depth) +
                  ", color type " + std::to_string(color) + ")";
  } else {
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    r.height = png_get_image_height(png, info);
    r.width = png_get_image_width(png, info);
    r.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * r.height);
    rows.resize(r.height);
    for (std::size_t y = 0; y < r.height; ++y) rows[y] = pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!unsupported.empty()) throw Error(ErrorCode::kUnsupportedFormat, path + ": " + unsupported);
  r.values.resize(r.height * r.width * r.channels);
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = pixels[i] / 255.0;
  return r;
}

// --- PGM / PPM -------------------------------------------------------------

class PnmReader {
 public:
  PnmReader(const std::vector<unsigned char>& b, const std::string& path) : b_(b), path_(path) {}

  std::size_t pos() const { return pos_; }

  // Next whitespace-separated unsigned integer, skipping '#' comments.
  std::size_t number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1u << 24) corrupt(path_, start, std::string(what) + " out of range");
      ++pos_;
    }
    if (pos_ == start) corrupt(path_, start, std::string("expected ") + what);
    return v;
  }

  // Exactly one whitespace byte separates the header from raster data.
  void raster_start() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) corrupt(path_, pos_, "missing raster separator");
    ++pos_;
  }

  std::size_t byte() {
    if (pos_ >= b_.size()) corrupt(path_, pos_, "truncated raster");
    return b_[pos_++];
  }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& b_;
  const std::string& path_;
  std::size_t pos_ = 2;
};

Raster decode_pnm(const std::vector<unsigned char>& bytes, const std::string& path) {
  const char kind = static_cast<char>(bytes[1]);
  const bool ascii = kind == '2' || kind == '3';
  Raster r;
  r.channels = (kind == '3' || kind == '6') ? 3 : 1;
  PnmReader in(bytes, path);
  r.width = in.number("width");
  r.height = in.number("height");
  const std::size_t header_max = in.number("maxval");
  if (r.width == 0 || r.height == 0) corrupt(path, in.pos(), "empty image");
  if (header_max == 0 || header_max > 65535) corrupt(path, in.pos(), "maxval must be in [1, 65535]");
  const double maxval = static_cast<double>(header_max);
  if (!ascii) in.raster_start();
  r.values.resize(r.width * r.height * r.channels);
  for (auto& v : r.values) {
    std::size_t raw;
    if (ascii) {
      raw = in.number("sample");
    } else if (header_max < 256) {
      raw = in.byte();
    } else {
      raw = in.byte() << 8;
      raw |= in.byte();
    }
    if (raw > header_max) corrupt(path, in.pos(), "sample exceeds maxval");
    v = static_cast<double>(raw) / maxval;
  }
  return r;
}

// --- helpers ---------------------------------------------------------------

Raster box_downscale(const Raster& in, std::size_t max_side) {
  const std::size_t side = std::max(in.height, in.width);
  if (max_side == 0 || side <= max_side) return in;
  const std::size_t f = (side + max_side - 1) / max_side;
  Raster out;
  out.height = in.height / f;
  out.width = in.width / f;
  out.channels = in.channels;
  if (out.height == 0 || out.width == 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_side too small for a " + std::to_string(in.height) + "x" +
                                                 std::to_string(in.width) + " image");
  }
  out.values.assign(out.height * out.width * out.channels, 0.0);
  const double inv = 1.0 / static_cast<double>(f * f);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < out.channels; ++c) {
        double sum = 0.0;
        for (std::size_t dy = 0; dy < f; ++dy) {
          for (std::size_t dx = 0; dx < f; ++dx) {
            sum += in.values[((y * f + dy) * in.width + (x * f + dx)) * in.channels + c];
          }
        }
        out.values[(y * out.width + x) * out.channels + c] = sum * inv;
      }
    }
  }
  return out;
}

double pixel_centre(std::size_t i, std::size_t n) {
  return -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
}

std::uint32_t le32(const std::vector<unsigned char>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
std::uint16_t le16(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

}  // namespace

SignalDataset load_image(const std::string& path, std::size_t max_side) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  Raster raster;
  static constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) {
    raster = decode_png(bytes, path);
  } else if (bytes.size() >= 2 && bytes[0] == 'P' && std::strchr("2356", bytes[1]) && bytes[1] != 0) {
    raster = decode_pnm(bytes, path);
  } else if (bytes.size() < 2) {
    corrupt(path, bytes.size(), "file too short to identify");
  } else {
    throw Error(ErrorCode::kUnsupportedFormat, path + ": not a PNG, PGM or PPM file");
  }
  raster = box_downscale(raster, max_side);

  SignalDataset d;
  d.modality = Modality::kImage;
  d.shape = {raster.height, raster.width, raster.channels};
  const auto n = static_cast<Eigen::Index>(raster.height * raster.width);
  d.coords.resize(n, 2);
  d.targets.resize(n, static_cast<Eigen::Index>(raster.channels));
  for (std::size_t y = 0; y < raster.height; ++y) {
    for (std::size_t x = 0; x < raster.width; ++x) {
      const auto r = static_cast<Eigen::Index>(y * raster.width + x);
      d.coords(r, 0) = pixel_centre(x, raster.width);
      d.coords(r, 1) = pixel_centre(y, raster.height);
      for (std::size_t c = 0; c < raster.channels; ++c) {
        d.targets(r, static_cast<Eigen::Index>(c)) = raster.values[static_cast<std::size_t>(r) * raster.channels + c];
      }
    }
  }
  return d;
}

SignalDataset load_audio_wav(const std::string& path, std::size_t max_samples) {
  const std::vector<unsigned char> b = read_bytes(path);
  if (b.size() < 12) corrupt(path, b.size(), "truncated RIFF header");
  if (std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kUnsupportedFormat, path + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::size_t data_at = 0, data_len = 0;
  bool have_data = false;
  while (pos + 8 <= b.size() && !have_data) {
    const std::uint32_t len = le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (len < 16 || body + 16 > b.size()) corrupt(path, body, "truncated fmt chunk");
      std::uint16_t format = le16(b, body);
      channels = le16(b, body + 2);
      bits = le16(b, body + 14);
      if (format == 0xFFFE && len >= 40 && body + 26 <= b.size()) format = le16(b, body + 24);  // extensible
      if (format != 1) {
        throw Error(ErrorCode::kUnsupportedFormat, path + ": audio format " + std::to_string(format) +
                                                       " is not integer PCM");
      }
      if (bits != 16) {
        throw Error(ErrorCode::kUnsupportedFormat, path + ": " + std::to_string(bits) + "-bit samples (need 16)");
      }
      if (channels == 0) corrupt(path, body + 2, "zero channels");
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      if (!have_fmt) corrupt(path, pos, "data chunk before fmt chunk");
      data_at = body;
      data_len = len;
      if (data_at + data_len > b.size()) corrupt(path, b.size(), "truncated data chunk");
      have_data = true;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_data) corrupt(path, b.size(), have_fmt ? "missing data chunk" : "missing fmt chunk");
  const std::size_t frame = 2u * channels;
  if (data_len % frame != 0) corrupt(path, data_at + data_len, "partial sample frame");
  std::size_t frames = data_len / frame;
  if (max_samples > 0) frames = std::min(frames, max_samples);

  SignalDataset d;
  d.modality = Modality::kAudio;
  d.coord_low = -100.0;
  d.coord_high = 100.0;
  d.shape = {frames};
  d.coords.resize(static_cast<Eigen::Index>(frames), 1);
  d.targets.resize(static_cast<Eigen::Index>(frames), 1);
  for (std::size_t i = 0; i < frames; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      sum += static_cast<std::int16_t>(le16(b, data_at + i * frame + 2 * c));
    }
    const auto r = static_cast<Eigen::Index>(i);
    d.targets(r, 0) = sum / static_cast<double>(channels) / 32768.0;
    d.coords(r, 0) = frames == 1 ? 0.0 : -100.0 + 200.0 * static_cast<double>(i) / static_cast<double>(frames - 1);
  }
  return d;
}

OccupancyShape OccupancyShape::sphere(double radius) {
  OccupancyShape s;
  s.kind = Kind::kSphere;
  s.radius = radius;
  return s;
}

OccupancyShape OccupancyShape::torus(double major, double minor) {
  OccupancyShape s;
  s.kind = Kind::kTorus;
  s.major = major;
  s.minor = minor;
  return s;
}

OccupancyShape OccupancyShape::union_of(double radius, double major, double minor) {
  OccupancyShape s;
  s.kind = Kind::kUnion;
  s.radius = radius;
  s.major = major;
  s.minor = minor;
  return s;
}

bool OccupancyShape::contains(double x, double y, double z) const {
  const bool in_sphere = x * x + y * y + z * z < radius * radius;
  const double ring = std::hypot(x, y) - major;
  const bool in_torus = ring * ring + z * z < minor * minor;
  switch (kind) {
    case Kind::kSphere: return in_sphere;
    case Kind::kTorus: return in_torus;
    case Kind::kUnion: return in_sphere || in_torus;
  }
  return false;
}

nlohmann::json occupancy_to_json(const OccupancyShape& s) {
  switch (s.kind) {
    case OccupancyShape::Kind::kSphere: return {{"kind", "sphere"}, {"radius", s.radius}};
    case OccupancyShape::Kind::kTorus: return {{"kind", "torus"}, {"major", s.major}, {"minor", s.minor}};
    case OccupancyShape::Kind::kUnion:
      return {{"kind", "union"}, {"radius", s.radius}, {"major", s.major}, {"minor", s.minor}};
  }
  return {};
}

OccupancyShape occupancy_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfigError, "occupancy shape must be an object");
  const std::string kind = doc.value("kind", std::string("sphere"));
  auto num = [&](const char* key, double fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc.at(key).is_number()) throw Error(ErrorCode::kConfigError, std::string("occupancy.") + key + " must be a number");
    const double v = doc.at(key).get<double>();
    if (!(v > 0.0)) throw Error(ErrorCode::kConfigError, std::string("occupancy.") + key + " must be positive");
    return v;
  };
  if (kind == "sphere") return OccupancyShape::sphere(num("radius", 0.5));
  if (kind == "torus") return OccupancyShape::torus(num("major", 0.5), num("minor", 0.2));
  if (kind == "union") return OccupancyShape::union_of(num("radius", 0.3), num("major", 0.6), num("minor", 0.15));
  throw Error(ErrorCode::kConfigError, "occupancy.kind must be sphere, torus or union (got '" + kind + "')");
}

SignalDataset make_occupancy(const OccupancyShape& shape, std::size_t resolution) {
  if (resolution == 0 || resolution > 64) {
    throw Error(ErrorCode::kInvalidArgument, "occupancy resolution must be in [1, 64]");
  }
  const std::size_t r = resolution;
  SignalDataset d;
  d.modality = Modality::kOccupancy;
  d.shape = {r, r, r};
  const auto n = static_cast<Eigen::Index>(r * r * r);
  d.coords.resize(n, 3);
  d.targets.resize(n, 1);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t j = 0; j < r; ++j) {
      for (std::size_t i = 0; i < r; ++i, ++row) {
        const double x = pixel_centre(i, r), y = pixel_centre(j, r), z = pixel_centre(k, r);
        d.coords.row(row) << x, y, z;
        d.targets(row, 0) = shape.contains(x, y, z) ? 1.0 : 0.0;
      }
    }
  }
  return d;
}

}  // namespace inrbo
