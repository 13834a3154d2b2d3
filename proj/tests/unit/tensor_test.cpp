#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "addmark/image_io.hpp"
#include "addmark/tensor.hpp"
#include "test_util.hpp"

using namespace addmark;

TEST(Message, ParsesBothAlphabets) {
  EXPECT_EQ(Message::parse("+-+"), Message::parse("101"));
  EXPECT_EQ(Message::parse("+-+").to_string(), "+-+");
  EXPECT_EQ(Message::parse("0011").negated(), Message::parse("1100"));
  EXPECT_THROW(Message::parse(""), std::invalid_argument);
  EXPECT_THROW(Message::parse("+x-"), std::invalid_argument);
  EXPECT_THROW(Message({1, 0, -1}), std::invalid_argument);
}

TEST(Message, LexicographicOrderPutsMinusFirst) {
  EXPECT_LT(Message::parse("--"), Message::parse("-+"));
  EXPECT_LT(Message::parse("-+"), Message::parse("+-"));
}

TEST(ImageTensor, LayoutIsChannelRowColumn) {
  ImageTensor img({2, 3, 4}, ValueRange::unit);
  img.at(1, 2, 3) = 0.5;
  EXPECT_EQ(img.data()[1 * 12 + 2 * 4 + 3], 0.5);
  EXPECT_EQ(img.channel(1).size(), 12u);
}

TEST(ImageTensor, RangeChecks) {
  ImageTensor img({1, 1, 2}, {0.2, 1.4}, ValueRange::unbounded);
  EXPECT_THROW(img.with_range(ValueRange::unit), std::invalid_argument);
  EXPECT_EQ(relabel_if_fits(img, ValueRange::unit).value_range(), ValueRange::unbounded);
  EXPECT_EQ(relabel_if_fits(img, ValueRange::byte).value_range(), ValueRange::byte);
  const ImageTensor c = clamped(img, ValueRange::unit);
  EXPECT_EQ(c.value_range(), ValueRange::unit);
  EXPECT_EQ(c.data()[1], 1.0);
  EXPECT_THROW(ImageTensor({1, 1, 2}, {0.0}, ValueRange::unit), std::invalid_argument);
}

TEST(Psnr, ByteImagesOffByOne) {
  ImageTensor a({3, 8, 8}, ValueRange::byte), b({3, 8, 8}, ValueRange::byte);
  for (auto& v : a.data()) v = 100;
  for (auto& v : b.data()) v = 101;
  // MSE = 1, so PSNR = 20 log10(255).
  EXPECT_NEAR(psnr(a, b, 255.0), 48.1308, 5e-5);
  EXPECT_NEAR(mse(a, b), 1.0, 1e-15);
  EXPECT_EQ(psnr(a, a, 255.0), kPsnrInfinity);
  EXPECT_EQ(format_psnr(psnr(a, a, 255.0)), "inf");
  EXPECT_EQ(format_psnr(48.13080361), "48.1308");
}

TEST(SeededRng, StreamsAreReproducibleAndDistinct) {
  SeededRng a(7, 3), b(7, 3), c(7, 4);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_NE(SeededRng(7, 3).normal(), c.normal());
  EXPECT_EQ(SeededRng(1).split(5).uniform(), SeededRng(1).split(5).uniform());
  EXPECT_NE(SeededRng(1).split(5).uniform(), SeededRng(1).split(6).uniform());
}

TEST(ImageIo, RoundTrips) {
  test::TempDir dir;
  SeededRng rng(11);
  ImageTensor img({3, 5, 7}, ValueRange::unit);
  for (auto& v : img.data()) v = rng.uniform();

  write_raw_tensor(dir / "a.addt", img);
  const ImageTensor raw = read_raw_tensor(dir / "a.addt");
  ASSERT_EQ(raw.shape(), img.shape());
  EXPECT_EQ(raw.value_range(), ValueRange::unit);
  for (std::size_t i = 0; i < img.size(); ++i)
    EXPECT_EQ(raw.data()[i], static_cast<double>(static_cast<float>(img.data()[i])));

  ImageTensor bytes({3, 5, 7}, ValueRange::byte);
  for (auto& v : bytes.data()) v = std::floor(rng.uniform() * 256.0);
  for (const char* name : {"b.png", "b.ppm"}) {
    write_image(dir / name, bytes);
    EXPECT_EQ(read_image(dir / name, ValueRange::byte), bytes) << name;
    const ImageTensor unit = read_image(dir / name, ValueRange::unit);
    EXPECT_NEAR(unit.data()[4] * 255.0, bytes.data()[4], 1e-12);
  }

  ImageTensor gray({1, 4, 4}, ValueRange::byte);
  gray.at(0, 1, 2) = 200;
  write_png(dir / "g.png", gray);
  EXPECT_EQ(read_png(dir / "g.png", ValueRange::byte), gray);
}

TEST(ImageIo, ListsOnlyImagesSorted) {
  test::TempDir dir;
  ImageTensor img({3, 2, 2}, ValueRange::unit);
  write_image(dir / "b.png", img);
  write_image(dir / "a.ppm", img);
  test::write_text(dir / "notes.txt", "x");
  const auto files = list_images(dir.path());
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "a.ppm");
  EXPECT_THROW(list_images(dir / "missing"), std::exception);
  EXPECT_THROW(read_image(dir / "notes.txt"), std::exception);
}
