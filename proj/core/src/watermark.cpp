#include "addmark/watermark.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace addmark {

WatermarkSet::WatermarkSet(Eigen::MatrixXd vectors, Shape image_shape, ValueRange range)
    : vectors_(std::move(vectors)), shape_(image_shape), range_(range) {
  if (vectors_.rows() < 1) throw std::invalid_argument("watermark needs at least one bit");
  if (static_cast<std::size_t>(vectors_.cols()) != shape_.size())
    throw std::invalid_argument("watermark dimension " + std::to_string(vectors_.cols()) +
                                " does not match image shape " + to_string(shape_));
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_watermark(const std::filesystem::path& path, const WatermarkSet& w) {
  nlohmann::json header{
      {"format", "addwm"},
      {"version", 1},
      {"K", w.bits()},
      {"D", w.dim()},
      {"shape", {w.image_shape().channels, w.image_shape().height, w.image_shape().width}},
      {"value_range", to_string(w.value_range())},
      {"config_digest", w.config_digest},
      {"metadata", w.metadata.is_null() ? nlohmann::json::object() : w.metadata},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  const auto& v = w.vectors();
  for (Eigen::Index k = 0; k < v.rows(); ++k)
    for (Eigen::Index i = 0; i < v.cols(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v(k, i)));
      const std::array<char, 4> b{static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                                  static_cast<char>((bits >> 16) & 0xFF),
                                  static_cast<char>((bits >> 24) & 0xFF)};
      out.write(b.data(), 4);
    }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

WatermarkSet load_watermark(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed header: " + e.what());
  }
  if (header.value("format", "") != "addwm")
    throw std::runtime_error(path.string() + " is not an .addwm watermark file");
  const auto K = header.at("K").get<std::size_t>();
  const auto D = header.at("D").get<std::size_t>();
  const auto s = header.at("shape");
  const Shape shape{s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()};
  Eigen::MatrixXd v(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(D));
  std::array<unsigned char, 4> b{};
  for (Eigen::Index k = 0; k < v.rows(); ++k)
    for (Eigen::Index i = 0; i < v.cols(); ++i) {
      in.read(reinterpret_cast<char*>(b.data()), 4);
      if (!in) throw std::runtime_error(path.string() + ": truncated watermark payload");
      const std::uint32_t bits =
          b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      v(k, i) = static_cast<double>(std::bit_cast<float>(bits));
    }
  WatermarkSet w(std::move(v), shape, parse_value_range(header.at("value_range").get<std::string>()));
  w.config_digest = header.value("config_digest", "");
  w.metadata = header.value("metadata", nlohmann::json::object());
  return w;
}

}  // namespace addmark
