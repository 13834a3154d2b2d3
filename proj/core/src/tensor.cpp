#include "addmark/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace addmark {

std::string_view to_string(ValueRange range) {
  switch (range) {
    case ValueRange::unit: return "unit";
    case ValueRange::byte: return "byte";
    case ValueRange::unbounded: return "unbounded";
  }
  return "unbounded";
}

ValueRange parse_value_range(std::string_view name) {
  if (name == "unit") return ValueRange::unit;
  if (name == "byte") return ValueRange::byte;
  if (name == "unbounded") return ValueRange::unbounded;
  throw std::invalid_argument("unknown value range '" + std::string(name) + "'");
}

double range_max(ValueRange range) { return range == ValueRange::byte ? 255.0 : 1.0; }

std::string to_string(const Shape& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" +
         std::to_string(shape.width);
}

ImageTensor::ImageTensor(Shape shape, ValueRange range)
    : ImageTensor(shape, std::vector<double>(shape.size(), 0.0), range) {}

ImageTensor::ImageTensor(Shape shape, std::vector<double> data, ValueRange range)
    : shape_(shape), data_(std::move(data)), range_(range) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0)
    throw std::invalid_argument("image dimensions must be positive, got " + to_string(shape));
  if (data_.size() != shape.size())
    throw std::invalid_argument("image data length " + std::to_string(data_.size()) +
                                " does not match shape " + to_string(shape));
  check_range();
}

std::span<double> ImageTensor::channel(int c) {
  const std::size_t plane = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<double>(data_).subspan(static_cast<std::size_t>(c) * plane, plane);
}

std::span<const double> ImageTensor::channel(int c) const {
  const std::size_t plane = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<const double>(data_).subspan(static_cast<std::size_t>(c) * plane, plane);
}

bool ImageTensor::in_range() const {
  if (range_ == ValueRange::unbounded) return true;
  const double hi = range_max(range_);
  return std::all_of(data_.begin(), data_.end(),
                     [hi](double v) { return v >= 0.0 && v <= hi; });
}

void ImageTensor::check_range() const {
  if (!in_range())
    throw std::invalid_argument("image values fall outside the declared " +
                                std::string(to_string(range_)) + " range");
}

void ImageTensor::clamp_to_range() {
  if (range_ == ValueRange::unbounded) return;
  const double hi = range_max(range_);
  for (double& v : data_) v = std::clamp(v, 0.0, hi);
}

ImageTensor ImageTensor::with_range(ValueRange range) const {
  ImageTensor out;
  out.shape_ = shape_;
  out.data_ = data_;
  out.range_ = range;
  out.check_range();
  return out;
}

std::vector<double> flatten(const ImageTensor& img) {
  auto d = img.data();
  return {d.begin(), d.end()};
}

ImageTensor unflatten(std::span<const double> v, Shape shape, ValueRange range) {
  return ImageTensor(shape, std::vector<double>(v.begin(), v.end()), range);
}

Message::Message(std::vector<int> bits) : bits_(std::move(bits)) {
  for (int b : bits_)
    if (b != 1 && b != -1) throw std::invalid_argument("message bits must be -1 or +1");
}

Message Message::parse(std::string_view text) {
  std::vector<int> bits;
  bits.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case '+': case '1': bits.push_back(1); break;
      case '-': case '0': bits.push_back(-1); break;
      default:
        throw std::invalid_argument(std::string("invalid message character '") + ch + "'");
    }
  }
  if (bits.empty()) throw std::invalid_argument("empty message");
  return Message(std::move(bits));
}

Message Message::negated() const {
  Message out = *this;
  for (int& b : out.bits_) b = -b;
  return out;
}

std::string Message::to_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (int b : bits_) s.push_back(b > 0 ? '+' : '-');
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      engine_(splitmix64(seed ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL))) {}

SeededRng SeededRng::split(std::uint64_t child) const {
  return SeededRng(seed_, splitmix64(stream_id_ * 0x9E3779B97F4A7C15ULL + child + 1));
}

double SeededRng::normal() { return normal_(engine_); }
double SeededRng::uniform() { return uniform_(engine_); }
int SeededRng::sign() { return (engine_() >> 63) ? 1 : -1; }

std::size_t SeededRng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("index range must be nonempty");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Message sample_uniform_message(std::size_t k, SeededRng& rng) {
  if (k == 0) throw std::invalid_argument("message length must be at least 1");
  std::vector<int> bits(k);
  for (int& b : bits) b = rng.sign();
  return Message(std::move(bits));
}

double mse(const ImageTensor& x, const ImageTensor& y) {
  if (!(x.shape() == y.shape()))
    throw std::invalid_argument("shape mismatch: " + to_string(x.shape()) + " vs " +
                                to_string(y.shape()));
  auto a = x.data();
  auto b = y.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(const ImageTensor& x, const ImageTensor& y, double max_value) {
  if (!(max_value > 0.0)) throw std::invalid_argument("max_value must be positive");
  const double e = mse(x, y);
  if (e == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(max_value * max_value / e);
}

std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", db);
  return buf;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a) acc += v * v;
  return acc;
}

ImageTensor relabel_if_fits(const ImageTensor& img, ValueRange range) {
  std::vector<double> data(img.data().begin(), img.data().end());
  if (range != ValueRange::unbounded) {
    const double hi = range_max(range);
    if (std::all_of(data.begin(), data.end(), [hi](double v) { return v >= 0.0 && v <= hi; }))
      return ImageTensor(img.shape(), std::move(data), range);
  }
  return ImageTensor(img.shape(), std::move(data), ValueRange::unbounded);
}

ImageTensor clamped(const ImageTensor& img, ValueRange range) {
  std::vector<double> data(img.data().begin(), img.data().end());
  if (range != ValueRange::unbounded) {
    const double hi = range_max(range);
    for (double& v : data) v = std::clamp(v, 0.0, hi);
  }
  return ImageTensor(img.shape(), std::move(data), range);
}

}  // namespace addmark
