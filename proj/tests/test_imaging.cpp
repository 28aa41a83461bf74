#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <png.h>

#include "idm/image.hpp"
#include "idm/metrics.hpp"
#include "idm/rng.hpp"
#include "idm/toyface.hpp"

using namespace idm;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  const fs::path p = fs::temp_directory_path() / "idm_imaging_tests";
  fs::create_directories(p);
  return p;
}

// test-support writer for the 16-bit load path (save_png is 8-bit only)
void write_png16(const std::string& path, int h, int w, const std::vector<std::uint16_t>& gray) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    std::memcpy(row.data(), gray.data() + static_cast<std::size_t>(y) * w, row.size());
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

TEST_CASE("rng: identical (seed, stream) gives identical sequences") {
  RngStream a(123, 7), b(123, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(123, 8);
  bool differs = false;
  RngStream a2(123, 7);
  for (int i = 0; i < 10; ++i) differs |= (a2.next_u64() != c.next_u64());
  CHECK(differs);
}

TEST_CASE("rng: child streams are independent of parent position") {
  RngStream a(5, 0);
  RngStream child_before = a.child(3);
  a.next_u64();
  a.next_u64();
  RngStream child_after = a.child(3);
  CHECK(child_before.next_u64() == child_after.next_u64());
}

TEST_CASE("rng: uniform and uniform_int stay in bounds") {
  RngStream r(99);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = r.uniform_int(-3, 4);
    CHECK(k >= -3);
    CHECK(k <= 4);
  }
}

TEST_CASE("rng: normal moments match a standard gaussian") {
  RngStream r(2024);
  const int n = 40000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("png: degenerate and endpoint values") {
  const auto dir = tmp_dir();
  ImageTensor black(8, 8, 3);
  save_png(black, (dir / "black.png").string());
  const ImageTensor loaded = load_png((dir / "black.png").string());
  CHECK(loaded.channels == 3);
  CHECK(loaded.data.abs().maxCoeff() == 0.0f);

  ImageTensor white(8, 8, 1);
  white.data.setOnes();
  save_png(white, (dir / "white.png").string());
  const ImageTensor lw = load_png((dir / "white.png").string());
  CHECK(lw.channels == 1);
  CHECK(lw.data.minCoeff() == 1.0f);
}

TEST_CASE("png: quantization rule is round-half-up") {
  CHECK(quantize8(0.5f) == 128);  // 127.5 rounds up
  CHECK(quantize8(1.0f) == 255);
  CHECK(quantize8(0.0f) == 0);
  CHECK(quantize8(127.4f / 255.0f) == 127);
}

TEST_CASE("png: round trip is byte-identical on random 8-bit images") {
  const auto dir = tmp_dir();
  RngStream rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    ImageTensor img(8, 8, trial % 2 ? 1 : 3);
    for (Eigen::Index i = 0; i < img.data.size(); ++i)
      img.data[i] = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
    const std::string path = (dir / "rt.png").string();
    save_png(img, path);
    const ImageTensor back = load_png(path);
    REQUIRE(back.same_shape(img));
    for (Eigen::Index i = 0; i < img.data.size(); ++i)
      CHECK(quantize8(back.data[i]) == quantize8(img.data[i]));
    CHECK((back.data - img.data).abs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("png: save-then-load error is at most 1/510 over every byte cell") {
  const auto dir = tmp_dir();
  ImageTensor img(16, 16, 1);
  // 256 cells x two off-center probes per cell
  for (int k = 0; k < 256; ++k) {
    img.data[2 * k] = std::min(1.0f, (k + 0.25f) / 255.0f);
    img.data[2 * k + 1] = std::min(1.0f, (k + 0.49f) / 255.0f);
  }
  const std::string path = (dir / "grid.png").string();
  save_png(img, path);
  const ImageTensor back = load_png(path);
  CHECK((back.data - img.data).abs().maxCoeff() <= 1.0f / 510.0f + 1e-7f);
}

TEST_CASE("png: 16-bit input maps linearly and keeps one channel") {
  const auto dir = tmp_dir();
  std::vector<std::uint16_t> gray(8 * 8, 0);
  gray[0] = 65535;
  gray[1] = 32768;
  const std::string path = (dir / "g16.png").string();
  write_png16(path, 8, 8, gray);
  const ImageTensor img = load_png(path);
  CHECK(img.channels == 1);
  CHECK(img.data[0] == doctest::Approx(1.0));
  CHECK(img.data[1] == doctest::Approx(32768.0 / 65535.0));
  CHECK(img.data[2] == 0.0f);
}

TEST_CASE("png: error taxonomy") {
  CHECK_THROWS_AS(load_png("/nonexistent/nope.png"), io_error);
  const auto dir = tmp_dir();
  const std::string garbage = (dir / "garbage.png").string();
  std::ofstream(garbage) << "this is not a png";
  CHECK_THROWS_AS(load_png(garbage), decode_error);
}

TEST_CASE("toy face: deterministic for fixed (spec, rng)") {
  ToyFaceSpec spec;
  spec.size = 32;
  const ImageTensor a = gen_toy_face(spec, RngStream(11));
  const ImageTensor b = gen_toy_face(spec, RngStream(11));
  CHECK((a.data - b.data).abs().maxCoeff() == 0.0f);
  CHECK(a.data.minCoeff() >= 0.0f);
  CHECK(a.data.maxCoeff() <= 1.0f);
}

TEST_CASE("toy face: different seeds differ in at least 1% of pixels") {
  ToyFaceSpec spec;
  spec.size = 32;
  RngStream seeds(5);
  for (int pair = 0; pair < 50; ++pair) {
    const auto s1 = seeds.next_u64(), s2 = seeds.next_u64();
    const ImageTensor a = gen_toy_face(spec, RngStream(s1));
    const ImageTensor b = gen_toy_face(spec, RngStream(s2));
    int differing = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        for (int c = 0; c < 3; ++c)
          if (a.at(y, x, c) != b.at(y, x, c)) {
            ++differing;
            c = 3;
          }
    CHECK(differing >= 32 * 32 / 100);
  }
}

TEST_CASE("toy face: freckles carry at least the requested contrast") {
  ToyFaceSpec plain;
  plain.size = 32;
  plain.n_freckles = 0;
  plain.n_hair_strokes = 0;
  ToyFaceSpec marked = plain;
  marked.n_freckles = 12;
  marked.freckle_contrast = 0.4f;

  for (std::uint64_t seed : {3ull, 17ull, 23ull}) {
    const ImageTensor base = gen_toy_face(plain, RngStream(seed));
    const ImageTensor with = gen_toy_face(marked, RngStream(seed));
    const Eigen::VectorXf lb = luminance(base), lw = luminance(with);
    int marks = 0;
    for (Eigen::Index i = 0; i < lb.size(); ++i)
      if (lb[i] != lw[i]) {
        CHECK(std::abs(lb[i] - lw[i]) >= marked.freckle_contrast - 1e-5f);
        ++marks;
      }
    CHECK(marks >= marked.n_freckles);  // 1px or 2x2 marks
  }
}

TEST_CASE("toy face: without marks the Laplacian peak stays at face-edge level") {
  ToyFaceSpec plain;
  plain.size = 32;
  plain.n_freckles = 0;
  plain.n_hair_strokes = 0;
  ToyFaceSpec marked = plain;
  marked.n_freckles = 10;
  marked.freckle_contrast = 0.45f;
  for (std::uint64_t seed : {1ull, 2ull, 9ull}) {
    const double edge_level = laplacian_response(gen_toy_face(plain, RngStream(seed))).cwiseAbs().maxCoeff();
    const double mark_level = laplacian_response(gen_toy_face(marked, RngStream(seed))).cwiseAbs().maxCoeff();
    CHECK(edge_level < mark_level);
  }
}

TEST_CASE("toy face: rejects sizes below 16") {
  ToyFaceSpec spec;
  spec.size = 8;
  CHECK_THROWS_AS(gen_toy_face(spec, RngStream(0)), std::invalid_argument);
}

TEST_CASE("image tensor: validates dimensions") {
  CHECK_THROWS_AS(ImageTensor(4, 16, 3), std::invalid_argument);
  CHECK_THROWS_AS(ImageTensor(16, 16, 2), std::invalid_argument);
}
