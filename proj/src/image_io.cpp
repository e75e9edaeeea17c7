#include "unipaint/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iterator>

#include "unipaint/codec.hpp"

namespace unipaint {

namespace {

png_uint_32 png_format(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: throw Error(ErrorKind::InvalidInput, "PNG needs 1, 3 or 4 channels");
  }
}

ImageBuffer unpack(const std::vector<std::uint8_t>& raw, int channels, int height, int width) {
  ImageBuffer image(channels, height, width);
  for (int i = 0; i < height * width; ++i) {
    for (int c = 0; c < channels; ++c) {
      image.values()(c, i) = quantize_pixel(raw[static_cast<std::size_t>(i) * channels + c] / 255.0);
    }
  }
  return image;
}

std::vector<std::uint8_t> pack(const ImageBuffer& image) {
  if (!image.all_finite()) throw Error(ErrorKind::NonFinite, "image contains non-finite values");
  const int channels = image.channels();
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(image.pixels()) * channels);
  for (int i = 0; i < image.pixels(); ++i) {
    for (int c = 0; c < channels; ++c) {
      const double v = std::clamp(image.values()(c, i), 0.0, 1.0);
      raw[static_cast<std::size_t>(i) * channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return raw;
}

ImageBuffer finish_read(png_image& img, PixelFormat format, const std::string& what,
                        const std::function<int(png_image&, std::vector<std::uint8_t>&)>& finish) {
  const int channels = static_cast<int>(format);
  img.format = png_format(channels);
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(img));
  if (!finish(img, raw)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error(ErrorKind::Io, what + ": " + msg);
  }
  return unpack(raw, channels, static_cast<int>(img.height), static_cast<int>(img.width));
}

}  // namespace

ImageBuffer read_png(const std::string& path, PixelFormat format) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw Error(ErrorKind::Io, "cannot read PNG " + path + ": " + img.message);
  }
  return finish_read(img, format, path, [](png_image& i, std::vector<std::uint8_t>& raw) {
    return png_image_finish_read(&i, nullptr, raw.data(), 0, nullptr);
  });
}

ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes, PixelFormat format) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::InvalidInput, std::string("not a PNG: ") + (bytes.empty() ? "empty" : img.message));
  }
  return finish_read(img, format, "PNG decode", [](png_image& i, std::vector<std::uint8_t>& raw) {
    return png_image_finish_read(&i, nullptr, raw.data(), 0, nullptr);
  });
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = png_format(image.channels());
  const auto raw = pack(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, raw.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, std::string("PNG encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, raw.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, std::string("PNG encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::string& path, const ImageBuffer& image) {
  write_file_atomic(path, encode_png(image));
}

RegionMask threshold_mask(const ImageBuffer& gray) {
  RegionMask mask(gray.height(), gray.width(), 0);
  for (int i = 0; i < gray.pixels(); ++i) {
    if (gray.values()(0, i) >= 128.0 / 255.0 - 1e-12) mask[i] = 1;
  }
  return mask;
}

RegionMask read_mask_png(const std::string& path) { return threshold_mask(read_png(path, PixelFormat::Gray)); }

RegionMask decode_mask_png(const std::vector<std::uint8_t>& bytes) {
  return threshold_mask(decode_png(bytes, PixelFormat::Gray));
}

std::vector<std::uint8_t> encode_mask_png(const RegionMask& mask) {
  ImageBuffer gray(1, mask.height(), mask.width());
  for (int i = 0; i < mask.size(); ++i) gray.values()(0, i) = mask[i] ? 1.0 : 0.0;
  return encode_png(gray);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp + ": " + ec.message());
}

void write_file_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace unipaint
