#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace addmark {

enum class ValueRange : std::uint8_t { unit = 0, byte = 1, unbounded = 2 };

std::string_view to_string(ValueRange range);
ValueRange parse_value_range(std::string_view name);

/// Upper end of the declared range (1 for unit, 255 for byte). Unbounded
/// images report 1, which is the convention used for PSNR on raw tensors.
double range_max(ValueRange range);

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& shape);

/// C x H x W image stored row-major in (c, h, w) order. This flattening is the
/// single embedding of images into R^D used everywhere in the library.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(Shape shape, ValueRange range);
  ImageTensor(Shape shape, std::vector<double> data, ValueRange range);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  ValueRange value_range() const { return range_; }

  double& at(int c, int h, int w) { return data_[index(c, h, w)]; }
  double at(int c, int h, int w) const { return data_[index(c, h, w)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;

  /// Throws if any element lies outside the declared closed interval.
  void check_range() const;
  bool in_range() const;
  /// Clamps in place to the declared interval; no-op for unbounded images.
  void clamp_to_range();
  /// Reinterprets the payload under another declared range without rescaling.
  ImageTensor with_range(ValueRange range) const;

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t index(int c, int h, int w) const {
    return (static_cast<std::size_t>(c) * shape_.height + h) * shape_.width + w;
  }

  Shape shape_{};
  std::vector<double> data_;
  ValueRange range_ = ValueRange::unbounded;
};

std::vector<double> flatten(const ImageTensor& img);
ImageTensor unflatten(std::span<const double> v, Shape shape, ValueRange range);

/// Labels `img` with `range` when every value fits, otherwise as unbounded.
ImageTensor relabel_if_fits(const ImageTensor& img, ValueRange range);
/// Copy clamped to `range` and labelled with it.
ImageTensor clamped(const ImageTensor& img, ValueRange range);

/// Element-wise K-bit message over {-1, +1}.
class Message {
 public:
  Message() = default;
  explicit Message(std::vector<int> bits);

  /// Parses "+-+-" or "1010" (1 <-> +1).
  static Message parse(std::string_view text);

  std::size_t size() const { return bits_.size(); }
  int operator[](std::size_t k) const { return bits_[k]; }
  std::span<const int> bits() const { return bits_; }
  Message negated() const;
  std::string to_string() const;

  bool operator==(const Message&) const = default;
  /// Lexicographic with -1 < +1.
  auto operator<=>(const Message& other) const { return bits_ <=> other.bits_; }

 private:
  std::vector<int> bits_;
};

/// Deterministic random stream. Identical (seed, stream_id) pairs produce
/// identical draws; independent workers derive their own stream via split().
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  SeededRng split(std::uint64_t child) const;

  double normal();
  double uniform();
  int sign();
  /// Uniform on [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

Message sample_uniform_message(std::size_t k, SeededRng& rng);

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

double mse(const ImageTensor& x, const ImageTensor& y);
/// 10 log10(max^2 / MSE); returns kPsnrInfinity when the images coincide.
double psnr(const ImageTensor& x, const ImageTensor& y, double max_value);
std::string format_psnr(double db);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

}  // namespace addmark
