#pragma once

/// \file
/// PNG (8/16-bit, via libpng), binary PPM/PGM, and the KITTI 16-bit flow PNG.
///
/// KITTI flow PNG: three 16-bit channels per pixel,
///   u = (R - 2^15) / 64,  v = (G - 2^15) / 64,  valid = B (0 or 1).

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqflow/grid.hpp"

namespace seqflow {

/// Raw decoded samples, row-major, interleaved channels.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

namespace detail {

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
  std::string error;
};

struct PngWriteState {
  std::vector<std::uint8_t> out;
  std::string error;
};

inline void png_error_handler(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg ? msg : "libpng error";
  png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

inline void png_read_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->offset + length > st->bytes.size()) {
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(data, st->bytes.data() + st->offset, length);
  st->offset += length;
}

inline void png_write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
  st->out.insert(st->out.end(), data, data + length);
}

inline void png_flush_callback(png_structp) {}

}  // namespace detail

/// Decodes a PNG without any colour or gamma conversion (palette expanded,
/// bit depths below 8 expanded to 8).
inline RawImage decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw FormatError("decode_png: not a PNG stream");

  detail::PngReadState state{bytes, 0, {}};
  RawImage img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state.error,
                                           detail::png_error_handler, detail::png_warning_handler);
  if (!png) throw FormatError("decode_png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("decode_png: cannot allocate info");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("decode_png: " + state.error);
  }
  png_set_read_fn(png, &state, detail::png_read_callback);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  bit_depth = png_get_bit_depth(png, info);
  img.bit_depth = bit_depth;

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(img.height));
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(count);
  if (bit_depth == 16) {
    for (int y = 0; y < img.height; ++y) {
      const std::size_t n = static_cast<std::size_t>(img.width) * img.channels;
      std::memcpy(img.samples.data() + n * y, rows[y], n * 2);
    }
  } else {
    for (int y = 0; y < img.height; ++y) {
      const std::size_t n = static_cast<std::size_t>(img.width) * img.channels;
      for (std::size_t i = 0; i < n; ++i) img.samples[n * y + i] = rows[y][i];
    }
  }
  return img;
}

/// Encodes 1 (gray), 2 (gray+alpha), 3 (RGB) or 4 (RGBA) channels at 8 or 16 bits.
/// Output is a deterministic function of the input samples.
inline std::vector<std::uint8_t> encode_png(const RawImage& img) {
  if (img.bit_depth != 8 && img.bit_depth != 16)
    throw ParameterError("encode_png: bit depth must be 8 or 16");
  if (img.channels < 1 || img.channels > 4)
    throw ParameterError("encode_png: channels must be 1..4");
  if (img.samples.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
    throw LengthError("encode_png: sample count mismatch");
  if (img.width < 1 || img.height < 1) throw ParameterError("encode_png: empty image");

  static constexpr int kColorTypes[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA,
                                        PNG_COLOR_TYPE_RGB, PNG_COLOR_TYPE_RGB_ALPHA};
  detail::PngWriteState state;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.channels;
  const std::size_t bytes_per = img.bit_depth == 16 ? 2 : 1;
  std::vector<std::uint8_t> buffer(n * bytes_per * img.height);
  for (int y = 0; y < img.height; ++y) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint16_t s = img.samples[n * y + i];
      if (img.bit_depth == 16) {
        buffer[(n * y + i) * 2] = static_cast<std::uint8_t>(s >> 8);
        buffer[(n * y + i) * 2 + 1] = static_cast<std::uint8_t>(s & 0xff);
      } else {
        if (s > 255) throw ParameterError("encode_png: 8-bit sample out of range");
        buffer[n * y + i] = static_cast<std::uint8_t>(s);
      }
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + n * bytes_per * y;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state.error,
                                            detail::png_error_handler, detail::png_warning_handler);
  if (!png) throw FormatError("encode_png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("encode_png: cannot allocate info");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("encode_png: " + state.error);
  }
  png_set_write_fn(png, &state, detail::png_write_callback, detail::png_flush_callback);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               img.bit_depth, kColorTypes[img.channels - 1], PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(state.out);
}

/// Decodes binary PPM (P6) or PGM (P5), maxval up to 65535.
inline RawImage decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw FormatError("decode_pnm: malformed header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1 << 24)) throw FormatError("decode_pnm: header value too large");
      ++pos;
    }
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5'))
    throw FormatError("decode_pnm: expected P5 or P6");
  RawImage img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  img.width = read_int();
  img.height = read_int();
  const int maxval = read_int();
  if (maxval < 1 || maxval > 65535) throw FormatError("decode_pnm: bad maxval");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("decode_pnm: bad header");
  ++pos;
  img.bit_depth = maxval > 255 ? 16 : 8;
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < count * bytes_per) throw LengthError("decode_pnm: truncated payload");
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (bytes_per == 2) {
      img.samples[i] = static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
    } else {
      img.samples[i] = bytes[pos + i];
    }
  }
  // Rescale non-standard maxvals onto the full code range of the chosen depth.
  const int full = img.bit_depth == 16 ? 65535 : 255;
  if (maxval != full) {
    for (auto& s : img.samples)
      s = static_cast<std::uint16_t>(std::lround(static_cast<double>(s) * full / maxval));
  }
  return img;
}

inline std::vector<std::uint8_t> encode_pnm(const RawImage& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ParameterError("encode_pnm: channels must be 1 or 3");
  const int maxval = img.bit_depth == 16 ? 65535 : 255;
  std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                       std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                       std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::uint16_t s : img.samples) {
    if (img.bit_depth == 16) {
      out.push_back(static_cast<std::uint8_t>(s >> 8));
      out.push_back(static_cast<std::uint8_t>(s & 0xff));
    } else {
      out.push_back(static_cast<std::uint8_t>(s));
    }
  }
  return out;
}

/// Normalizes by the maximum code value. Alpha channels are dropped.
inline Image to_image(const RawImage& raw) {
  const double full = raw.bit_depth == 16 ? 65535.0 : 255.0;
  int out_channels = 0;
  switch (raw.channels) {
    case 1:
    case 2: out_channels = 1; break;
    case 3:
    case 4: out_channels = 3; break;
    default: throw FormatError("to_image: unsupported channel count");
  }
  Grid g(raw.height, raw.width, out_channels);
  for (std::size_t p = 0; p < g.pixels(); ++p)
    for (int c = 0; c < out_channels; ++c)
      g.storage()[p * out_channels + c] = raw.samples[p * raw.channels + c] / full;
  return Image(std::move(g));
}

inline RawImage from_image(const Image& image, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw ParameterError("from_image: bit depth must be 8 or 16");
  const double full = bit_depth == 16 ? 65535.0 : 255.0;
  RawImage raw;
  raw.width = image.width();
  raw.height = image.height();
  raw.channels = image.channels();
  raw.bit_depth = bit_depth;
  raw.samples.reserve(image.data().size());
  for (double v : image.data())
    raw.samples.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * full)));
  return raw;
}

inline std::pair<FlowField, VisibilityMask> read_kitti_png(std::span<const std::uint8_t> bytes) {
  const RawImage raw = decode_png(bytes);
  if (raw.bit_depth != 16) throw FormatError("read_kitti_png: expected 16-bit PNG");
  if (raw.channels != 3) throw FormatError("read_kitti_png: expected 3 channels");
  Grid flow(raw.height, raw.width, 2);
  Grid valid(raw.height, raw.width, 1);
  for (std::size_t p = 0; p < flow.pixels(); ++p) {
    flow.storage()[2 * p] = (static_cast<double>(raw.samples[3 * p]) - 32768.0) / 64.0;
    flow.storage()[2 * p + 1] = (static_cast<double>(raw.samples[3 * p + 1]) - 32768.0) / 64.0;
    valid.storage()[p] = raw.samples[3 * p + 2] != 0 ? 1.0 : 0.0;
  }
  return {FlowField(std::move(flow)), VisibilityMask(std::move(valid))};
}

/// Flow is quantized to 1/64 px and saturated at the 16-bit code range.
inline std::vector<std::uint8_t> write_kitti_png(const FlowField& flow, const VisibilityMask& valid) {
  require_same_extent(flow, valid, "write_kitti_png");
  RawImage raw;
  raw.width = flow.width();
  raw.height = flow.height();
  raw.channels = 3;
  raw.bit_depth = 16;
  raw.samples.resize(flow.pixels() * 3);
  auto encode = [](double v) {
    return static_cast<std::uint16_t>(std::clamp(std::lround(v * 64.0 + 32768.0), 0l, 65535l));
  };
  for (std::size_t p = 0; p < flow.pixels(); ++p) {
    raw.samples[3 * p] = encode(flow.data()[2 * p]);
    raw.samples[3 * p + 1] = encode(flow.data()[2 * p + 1]);
    raw.samples[3 * p + 2] = valid.data()[p] != 0.0 ? 1 : 0;
  }
  return encode_png(raw);
}

// File helpers -------------------------------------------------------------

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

/// Writes to a sibling temporary and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

/// Reads .png, .ppm or .pgm.
inline Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (has_extension(path, ".png")) return to_image(decode_png(bytes));
  if (has_extension(path, ".ppm") || has_extension(path, ".pgm")) return to_image(decode_pnm(bytes));
  throw FormatError("read_image: unsupported extension " + path.extension().string());
}

inline void write_image(const std::filesystem::path& path, const Image& image, int bit_depth = 8) {
  const RawImage raw = from_image(image, bit_depth);
  if (has_extension(path, ".png")) return write_file_atomic(path, encode_png(raw));
  if (has_extension(path, ".ppm") || has_extension(path, ".pgm"))
    return write_file_atomic(path, encode_pnm(raw));
  throw FormatError("write_image: unsupported extension " + path.extension().string());
}

}  // namespace seqflow
