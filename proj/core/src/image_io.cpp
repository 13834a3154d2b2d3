#include "addmark/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

namespace addmark {
namespace fs = std::filesystem;

namespace {

std::uint8_t to_byte(double v, ValueRange range) {
  const double scale = range == ValueRange::byte ? 1.0 : 255.0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v * scale, 0.0, 255.0)));
}

double from_byte(std::uint8_t b, ValueRange target) {
  return target == ValueRange::byte ? static_cast<double>(b) : b / 255.0;
}

// Interleaved HWC bytes -> planar CHW tensor.
ImageTensor from_interleaved(const std::vector<std::uint8_t>& px, int channels, int height,
                             int width, ValueRange target) {
  if (target == ValueRange::unbounded) target = ValueRange::unit;
  ImageTensor img({channels, height, width}, target);
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w)
      for (int c = 0; c < channels; ++c)
        img.at(c, h, w) =
            from_byte(px[(static_cast<std::size_t>(h) * width + w) * channels + c], target);
  return img;
}

std::vector<std::uint8_t> to_interleaved(const ImageTensor& img) {
  const int ch = img.channels(), ht = img.height(), wd = img.width();
  std::vector<std::uint8_t> px(img.size());
  for (int h = 0; h < ht; ++h)
    for (int w = 0; w < wd; ++w)
      for (int c = 0; c < ch; ++c)
        px[(static_cast<std::size_t>(h) * wd + w) * ch + c] =
            to_byte(img.at(c, h, w), img.value_range());
  return px;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF),
                              static_cast<char>((v >> 24) & 0xFF)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

ImageTensor read_png(const fs::path& path, ValueRange target) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  return from_interleaved(px, channels, static_cast<int>(image.height),
                          static_cast<int>(image.width), target);
}

void write_png(const fs::path& path, const ImageTensor& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("PNG output supports 1 or 3 channels, got " +
                                std::to_string(img.channels()));
  auto px = to_interleaved(img);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
}

ImageTensor read_ppm(const fs::path& path, ValueRange target) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto next_token = [&in, &path]() {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {}
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw std::runtime_error("truncated PPM header in " + path.string());
    return tok;
  };
  if (next_token() != "P6") throw std::runtime_error(path.string() + " is not a binary PPM (P6)");
  const int width = std::stoi(next_token());
  const int height = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 255) throw std::runtime_error("only 8-bit PPM is supported");
  if (width <= 0 || height <= 0) throw std::runtime_error("invalid PPM dimensions");
  std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height * 3);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (in.gcount() != static_cast<std::streamsize>(px.size()))
    throw std::runtime_error("truncated PPM payload in " + path.string());
  return from_interleaved(px, 3, height, width, target);
}

void write_ppm(const fs::path& path, const ImageTensor& img) {
  if (img.channels() != 3)
    throw std::invalid_argument("PPM output requires 3 channels, got " +
                                std::to_string(img.channels()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  auto px = to_interleaved(img);
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ImageTensor read_raw_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ADDT", 4) != 0)
    throw std::runtime_error(path.string() + " is not an ADDT tensor");
  const auto c = get_u32(in), h = get_u32(in), w = get_u32(in);
  const int range_code = in.get();
  if (!in || range_code < 0 || range_code > 2)
    throw std::runtime_error("corrupt ADDT header in " + path.string());
  const Shape shape{static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)};
  std::vector<double> data(shape.size());
  std::array<unsigned char, 4> b{};
  for (double& v : data) {
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw std::runtime_error("truncated ADDT payload in " + path.string());
    const std::uint32_t bits =
        b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    v = static_cast<double>(std::bit_cast<float>(bits));
  }
  return ImageTensor(shape, std::move(data), static_cast<ValueRange>(range_code));
}

void write_raw_tensor(const fs::path& path, const ImageTensor& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write("ADDT", 4);
  put_u32(out, static_cast<std::uint32_t>(img.channels()));
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  out.put(static_cast<char>(img.value_range()));
  for (double v : img.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ImageTensor read_image(const fs::path& path, ValueRange target) {
  const auto ext = lower_ext(path);
  if (ext == ".png") return read_png(path, target);
  if (ext == ".ppm") return read_ppm(path, target);
  if (ext == ".addt") return read_raw_tensor(path);
  throw std::invalid_argument("unsupported image extension '" + ext + "'");
}

void write_image(const fs::path& path, const ImageTensor& img) {
  const auto ext = lower_ext(path);
  if (ext == ".png") return write_png(path, img);
  if (ext == ".ppm") return write_ppm(path, img);
  if (ext == ".addt") return write_raw_tensor(path, img);
  throw std::invalid_argument("unsupported image extension '" + ext + "'");
}

bool is_image_file(const fs::path& path) {
  const auto ext = lower_ext(path);
  return ext == ".png" || ext == ".ppm" || ext == ".addt";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("no such directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace addmark
