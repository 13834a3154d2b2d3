#include "addmark/distortions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace addmark {
namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "identity", "gaussian_blur", "jpeg_like",  "brightness",  "contrast",
    "gaussian_noise", "rotation", "center_crop", "random_erase"};

// Standard JPEG luminance quantization table (Annex K).
constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

double reflect_coord(double x, int n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * (n - 1);
  x = std::fmod(x, period);
  if (x < 0) x += period;
  return x <= n - 1 ? x : period - x;
}

double sample_bilinear(std::span<const double> plane, int height, int width, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  auto at = [&](int r, int c) { return plane[static_cast<std::size_t>(r) * width + c]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
         fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

std::vector<double> blur_kernel(int radius, double sigma) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

void blur_plane(std::span<double> plane, int height, int width, const std::vector<double>& k) {
  const int radius = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(plane.size());
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += k[j + radius] * plane[static_cast<std::size_t>(h) * width + reflect_index(w + j, width)];
      tmp[static_cast<std::size_t>(h) * width + w] = acc;
    }
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += k[j + radius] * tmp[static_cast<std::size_t>(reflect_index(h + j, height)) * width + w];
      plane[static_cast<std::size_t>(h) * width + w] = acc;
    }
}

const std::array<double, 64>& dct_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> out{};
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x) {
        const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        out[u * 8 + x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    return out;
  }();
  return m;
}

double pixel_scale(ValueRange range) { return range == ValueRange::byte ? 1.0 : 255.0; }

}  // namespace

std::string_view to_string(DistortionKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

DistortionKind parse_distortion_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<DistortionKind>(i);
  throw std::invalid_argument("unknown distortion '" + std::string(name) + "'");
}

DistortionSpec DistortionSpec::make(DistortionKind kind, double weight) {
  DistortionSpec spec;
  spec.kind = kind;
  spec.weight = weight;
  return spec;
}

std::string DistortionSpec::label() const {
  char buf[96];
  switch (kind) {
    case DistortionKind::identity: return "none";
    case DistortionKind::gaussian_blur:
      std::snprintf(buf, sizeof buf, "blur(r=%d,s=%g)", blur_radius, blur_sigma);
      break;
    case DistortionKind::jpeg_like: std::snprintf(buf, sizeof buf, "jpeg(q=%d)", jpeg_quality); break;
    case DistortionKind::brightness: std::snprintf(buf, sizeof buf, "brightness(%g)", brightness); break;
    case DistortionKind::contrast: std::snprintf(buf, sizeof buf, "contrast(%g)", contrast); break;
    case DistortionKind::gaussian_noise: std::snprintf(buf, sizeof buf, "noise(%g)", noise_sigma); break;
    case DistortionKind::rotation: std::snprintf(buf, sizeof buf, "rotation(%gdeg)", rotation_degrees); break;
    case DistortionKind::center_crop: std::snprintf(buf, sizeof buf, "crop(%g)", crop_fraction); break;
    case DistortionKind::random_erase:
      std::snprintf(buf, sizeof buf, "erase(%gx%d)", erase_fraction, erase_count);
      break;
  }
  return buf;
}

void DistortionSpec::validate() const {
  auto fail = [this](const std::string& what) {
    throw std::invalid_argument(std::string(to_string(kind)) + ": " + what);
  };
  if (!(weight >= 0.0)) fail("weight must be nonnegative");
  switch (kind) {
    case DistortionKind::identity: break;
    case DistortionKind::gaussian_blur:
      if (blur_radius < 0 || blur_radius > 64) fail("radius must be in [0, 64]");
      if (!(blur_sigma > 0.0)) fail("sigma must be positive");
      break;
    case DistortionKind::jpeg_like:
      if (jpeg_quality < 1 || jpeg_quality > 100) fail("quality must be in [1, 100]");
      break;
    case DistortionKind::brightness:
      if (!(brightness > 0.0)) fail("scale must be positive");
      break;
    case DistortionKind::contrast:
      if (!(contrast > 0.0)) fail("scale must be positive");
      break;
    case DistortionKind::gaussian_noise:
      if (!(noise_sigma >= 0.0)) fail("noise sigma must be nonnegative");
      break;
    case DistortionKind::rotation:
      if (!(std::abs(rotation_degrees) <= 180.0)) fail("angle must be within [-180, 180]");
      break;
    case DistortionKind::center_crop:
      if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) fail("crop fraction must be in (0, 1]");
      break;
    case DistortionKind::random_erase:
      if (!(erase_fraction >= 0.0 && erase_fraction <= 1.0)) fail("erase fraction must be in [0, 1]");
      if (erase_count < 0) fail("erase count must be nonnegative");
      break;
  }
}

ImageTensor gaussian_blur(const ImageTensor& img, int radius, double sigma) {
  ImageTensor out = img.with_range(ValueRange::unbounded);
  const auto k = blur_kernel(radius, sigma);
  for (int c = 0; c < out.channels(); ++c) blur_plane(out.channel(c), out.height(), out.width(), k);
  return out;
}

ImageTensor jpeg_like(const ImageTensor& img, int quality) {
  const double scale = pixel_scale(img.value_range());
  const int q = std::clamp(quality, 1, 100);
  const int factor = q < 50 ? 5000 / q : 200 - 2 * q;
  std::array<double, 64> table{};
  for (int i = 0; i < 64; ++i)
    table[i] = std::clamp((kLumaTable[i] * factor + 50) / 100, 1, 255);
  const auto& m = dct_matrix();

  ImageTensor out = img.with_range(ValueRange::unbounded);
  const int H = img.height(), W = img.width();
  std::array<double, 64> block{}, tmp{}, coef{};
  for (int c = 0; c < img.channels(); ++c) {
    for (int by = 0; by < H; by += 8)
      for (int bx = 0; bx < W; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            block[y * 8 + x] =
                img.at(c, std::min(by + y, H - 1), std::min(bx + x, W - 1)) * scale - 128.0;
        // coef = M * block * M^T
        for (int u = 0; u < 8; ++u)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) acc += m[u * 8 + y] * block[y * 8 + x];
            tmp[u * 8 + x] = acc;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x) acc += tmp[u * 8 + x] * m[v * 8 + x];
            coef[u * 8 + v] = std::round(acc / table[u * 8 + v]) * table[u * 8 + v];
          }
        // block = M^T * coef * M
        for (int y = 0; y < 8; ++y)
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u) acc += m[u * 8 + y] * coef[u * 8 + v];
            tmp[y * 8 + v] = acc;
          }
        for (int y = 0; y < 8 && by + y < H; ++y)
          for (int x = 0; x < 8 && bx + x < W; ++x) {
            double acc = 0.0;
            for (int v = 0; v < 8; ++v) acc += tmp[y * 8 + v] * m[v * 8 + x];
            out.at(c, by + y, bx + x) = (acc + 128.0) / scale;
          }
      }
  }
  return out;
}

ImageTensor rotate(const ImageTensor& img, double degrees) {
  const int H = img.height(), W = img.width();
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  ImageTensor out(img.shape(), ValueRange::unbounded);
  for (int c = 0; c < img.channels(); ++c) {
    auto src = img.channel(c);
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        const double dy = h - cy, dx = w - cx;
        const double sy = reflect_coord(cy + cs * dy - sn * dx, H);
        const double sx = reflect_coord(cx + sn * dy + cs * dx, W);
        out.at(c, h, w) = sample_bilinear(src, H, W, sy, sx);
      }
  }
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int height, int width) {
  ImageTensor out({img.channels(), height, width}, ValueRange::unbounded);
  const double ry = static_cast<double>(img.height()) / height;
  const double rx = static_cast<double>(img.width()) / width;
  for (int c = 0; c < img.channels(); ++c) {
    auto src = img.channel(c);
    for (int h = 0; h < height; ++h)
      for (int w = 0; w < width; ++w)
        out.at(c, h, w) =
            sample_bilinear(src, img.height(), img.width(), (h + 0.5) * ry - 0.5, (w + 0.5) * rx - 0.5);
  }
  return out;
}

ImageTensor center_crop_resize(const ImageTensor& img, double fraction) {
  const int H = img.height(), W = img.width();
  const int ch = std::max(1, static_cast<int>(std::lround(H * fraction)));
  const int cw = std::max(1, static_cast<int>(std::lround(W * fraction)));
  const int oy = (H - ch) / 2, ox = (W - cw) / 2;
  ImageTensor crop({img.channels(), ch, cw}, ValueRange::unbounded);
  for (int c = 0; c < img.channels(); ++c)
    for (int h = 0; h < ch; ++h)
      for (int w = 0; w < cw; ++w) crop.at(c, h, w) = img.at(c, oy + h, ox + w);
  return resize_bilinear(crop, H, W);
}

ImageTensor apply(const DistortionSpec& spec, const ImageTensor& img, SeededRng& rng) {
  spec.validate();
  const ValueRange range = img.value_range();
  ImageTensor out;
  switch (spec.kind) {
    case DistortionKind::identity: return img;
    case DistortionKind::gaussian_blur:
      out = gaussian_blur(img, spec.blur_radius, spec.blur_sigma);
      break;
    case DistortionKind::jpeg_like: out = jpeg_like(img, spec.jpeg_quality); break;
    case DistortionKind::brightness:
      out = img.with_range(ValueRange::unbounded);
      for (double& v : out.data()) v *= spec.brightness;
      break;
    case DistortionKind::contrast: {
      out = img.with_range(ValueRange::unbounded);
      const double pivot = range_max(range) / 2.0;
      for (double& v : out.data()) v = pivot + spec.contrast * (v - pivot);
      break;
    }
    case DistortionKind::gaussian_noise: {
      out = img.with_range(ValueRange::unbounded);
      const double sd = spec.noise_sigma * range_max(range);
      for (double& v : out.data()) v += sd * rng.normal();
      break;
    }
    case DistortionKind::rotation: out = rotate(img, spec.rotation_degrees); break;
    case DistortionKind::center_crop: out = center_crop_resize(img, spec.crop_fraction); break;
    case DistortionKind::random_erase: {
      out = img.with_range(ValueRange::unbounded);
      const int H = img.height(), W = img.width();
      const double side = std::sqrt(spec.erase_fraction);
      const int eh = std::clamp(static_cast<int>(std::lround(H * side)), 0, H);
      const int ew = std::clamp(static_cast<int>(std::lround(W * side)), 0, W);
      for (int e = 0; e < spec.erase_count; ++e) {
        if (eh == 0 || ew == 0) break;
        const int top = static_cast<int>(rng.index(static_cast<std::size_t>(H - eh + 1)));
        const int left = static_cast<int>(rng.index(static_cast<std::size_t>(W - ew + 1)));
        for (int c = 0; c < img.channels(); ++c)
          for (int h = top; h < top + eh; ++h)
            for (int w = left; w < left + ew; ++w) out.at(c, h, w) = 0.0;
      }
      break;
    }
  }
  // Values may leave the declared interval (no clipping); keep the input's
  // range label only when the result still satisfies it.
  if (range != ValueRange::unbounded) {
    ImageTensor relabeled = out.with_range(ValueRange::unbounded);
    bool fits = true;
    for (double v : relabeled.data()) fits = fits && v >= 0.0 && v <= range_max(range);
    if (fits) return relabeled.with_range(range);
  }
  return out;
}

void backward_in_place(const DistortionSpec& spec, std::span<double> grad, Shape shape) {
  switch (spec.kind) {
    case DistortionKind::brightness:
      for (double& g : grad) g *= spec.brightness;
      break;
    case DistortionKind::contrast:
      for (double& g : grad) g *= spec.contrast;
      break;
    case DistortionKind::gaussian_blur: {
      const auto k = blur_kernel(spec.blur_radius, spec.blur_sigma);
      const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
      for (int c = 0; c < shape.channels; ++c)
        blur_plane(grad.subspan(c * plane, plane), shape.height, shape.width, k);
      break;
    }
    default: break;
  }
}

const DistortionSpec& sample_channel(const std::vector<DistortionSpec>& pool, SeededRng& rng) {
  if (pool.empty()) throw std::invalid_argument("distortion pool is empty");
  const double u = rng.uniform();
  double acc = 0.0;
  const DistortionSpec* last_positive = nullptr;
  for (const auto& spec : pool) {
    if (spec.weight <= 0.0) continue;
    last_positive = &spec;
    acc += spec.weight;
    if (u < acc) return spec;
  }
  if (last_positive == nullptr) throw std::invalid_argument("distortion pool has no positive weight");
  return *last_positive;
}

void validate_pool(const std::vector<DistortionSpec>& pool) {
  if (pool.empty()) throw std::invalid_argument("distortion pool is empty");
  double total = 0.0;
  for (const auto& spec : pool) {
    spec.validate();
    total += spec.weight;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument("distortion weights must sum to 1, got " + std::to_string(total));
}

std::vector<DistortionSpec> default_pool() {
  std::vector<DistortionSpec> pool;
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    pool.push_back(DistortionSpec::make(static_cast<DistortionKind>(i), 1.0 / kKindNames.size()));
  return pool;
}

void to_json(nlohmann::json& j, const DistortionSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)}, {"weight", s.weight}};
  switch (s.kind) {
    case DistortionKind::identity: break;
    case DistortionKind::gaussian_blur:
      j["radius"] = s.blur_radius;
      j["sigma"] = s.blur_sigma;
      break;
    case DistortionKind::jpeg_like: j["quality"] = s.jpeg_quality; break;
    case DistortionKind::brightness: j["scale"] = s.brightness; break;
    case DistortionKind::contrast: j["scale"] = s.contrast; break;
    case DistortionKind::gaussian_noise: j["sigma"] = s.noise_sigma; break;
    case DistortionKind::rotation: j["degrees"] = s.rotation_degrees; break;
    case DistortionKind::center_crop: j["fraction"] = s.crop_fraction; break;
    case DistortionKind::random_erase:
      j["fraction"] = s.erase_fraction;
      j["count"] = s.erase_count;
      break;
  }
}

void from_json(const nlohmann::json& j, DistortionSpec& s) {
  s = DistortionSpec::make(parse_distortion_kind(j.at("kind").get<std::string>()),
                           j.value("weight", 1.0));
  switch (s.kind) {
    case DistortionKind::identity: break;
    case DistortionKind::gaussian_blur:
      s.blur_radius = j.value("radius", s.blur_radius);
      s.blur_sigma = j.value("sigma", s.blur_sigma);
      break;
    case DistortionKind::jpeg_like: s.jpeg_quality = j.value("quality", s.jpeg_quality); break;
    case DistortionKind::brightness: s.brightness = j.value("scale", s.brightness); break;
    case DistortionKind::contrast: s.contrast = j.value("scale", s.contrast); break;
    case DistortionKind::gaussian_noise: s.noise_sigma = j.value("sigma", s.noise_sigma); break;
    case DistortionKind::rotation: s.rotation_degrees = j.value("degrees", s.rotation_degrees); break;
    case DistortionKind::center_crop: s.crop_fraction = j.value("fraction", s.crop_fraction); break;
    case DistortionKind::random_erase:
      s.erase_fraction = j.value("fraction", s.erase_fraction);
      s.erase_count = j.value("count", s.erase_count);
      break;
  }
  s.validate();
}

}  // namespace addmark
