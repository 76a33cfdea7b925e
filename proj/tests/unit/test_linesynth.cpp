#include "abr/linesynth.hpp"

#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <set>

using namespace abr;
using namespace abr::line;

namespace {

tex::TextureImage rows_image(const std::vector<std::uint8_t>& grays, int width = 3) {
  Image img(width, static_cast<int>(grays.size()), 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < width; ++x) std::fill_n(img.at(x, y), 3, grays[static_cast<std::size_t>(y)]);
  return tex::TextureImage(img);
}

RowSimilarity random_similarity(int n, Rng& rng) {
  RowSimilarity d(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = std::round(1.0 + rng.uniform() * 20.0);  // ties on purpose
  return d;
}

}  // namespace

TEST_SUITE("linesynth") {
  TEST_CASE("defaults") {
    SynthesisParams p;
    CHECK(p.outputHeight == 2048);
    CHECK(kBufferFactor == 5);
    p.jumpProbability = 1.5;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.outputHeight = 1;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.minJumpSize = 0;
    CHECK_THROWS_AS(p.validate(), Error);
  }

  TEST_CASE("row similarity") {
    const auto same = row_similarity(rows_image({7, 7, 7}));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(same(i, j) == 0.0);
    const auto bw = row_similarity(rows_image({0, 255}));
    CHECK(bw(0, 1) == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(bw(1, 0) == bw(0, 1));
    const auto grad = row_similarity(rows_image({0, 60, 120, 180}));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k)
          if (std::abs(i - j) < std::abs(i - k) && ((j - i) * (k - i) > 0)) CHECK(grad(i, j) < grad(i, k));
    // RMS across the row.
    Image two(2, 2, 3, 0);
    std::fill_n(two.at(0, 1), 3, 255);
    const auto half = row_similarity(tex::TextureImage(two));
    CHECK(half(0, 1) == doctest::Approx(std::sqrt(100.0 * 100.0 / 2.0)).epsilon(1e-6));
    CHECK_THROWS_AS(row_similarity(rows_image({1})), Error);
  }

  TEST_CASE("no jumps tiles the source") {
    const auto src = tex::TextureImage(fixtures::stroke_source(8, 13, 4));
    SynthesisParams p;
    p.jumpProbability = 0.0;
    p.outputHeight = 39;
    const auto r = synthesize(src, p);
    CHECK(r.buffer.size() == 195);
    for (std::size_t i = 0; i < r.buffer.size(); ++i) REQUIRE(r.buffer[i] == static_cast<int>(i % 13));
    CHECK(r.loopStart == 0);
    CHECK(r.image.pixels == tex::tile_preview(src, 1, 3).pixels);

    // Other heights give the same tiling, rotated to the best seam.
    p.outputHeight = 40;
    const auto shifted = synthesize(src, p);
    const auto tiled = tex::tile_preview(src, 1, 5);
    CHECK(shifted.image.pixels == tex::crop(tiled, {0, shifted.loopStart % 13, 8, 40}).pixels);
  }

  TEST_CASE("walk determinism and row copies") {
    const auto src = tex::TextureImage(fixtures::stroke_source(16, 48, 9));
    SynthesisParams p;
    p.jumpProbability = 1.0;
    p.outputHeight = 64;
    p.seed = 42;
    const auto a = synthesize(src, p), b = synthesize(src, p);
    CHECK(a.buffer == b.buffer);
    CHECK(encode_png(a.image.pixels) == encode_png(b.image.pixels));
    CHECK(a.buffer.size() == static_cast<std::size_t>(kBufferFactor * p.outputHeight));
    for (int y = 0; y < 64; ++y) {
      const int row = a.rows[static_cast<std::size_t>(y)];
      REQUIRE(std::equal(a.image.pixels.at(0, y), a.image.pixels.at(0, y) + 16 * 4, src.pixels.at(0, row)));
    }
    p.seed = 43;
    CHECK(synthesize(src, p).buffer != a.buffer);
  }

  TEST_CASE("jump rules") {
    Rng rng(6);
    const auto d = random_similarity(30, rng);
    SynthesisParams p;
    p.jumpProbability = 1.0;
    p.minJumpSize = 5;
    p.minQuality = 8.0;
    p.seed = 3;
    const auto rows = synthesize_rows(d, p, 2000);
    int jumps = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const int next = (rows[i - 1] + 1) % 30;
      if (rows[i] == next) continue;
      ++jumps;
      REQUIRE(std::abs(rows[i] - next) >= 5);
      REQUIRE(d(next, rows[i]) <= 8.0);
    }
    CHECK(jumps > 100);

    // Nothing qualifies: walk is sequential with wrap.
    p.minQuality = 0.0;
    p.minJumpSize = 1;
    const auto seq = synthesize_rows(d, p, 100);
    for (std::size_t i = 0; i < seq.size(); ++i) REQUIRE(seq[i] == (seq[0] + static_cast<int>(i)) % 30);
  }

  TEST_CASE("find_loop matches the exhaustive oracle") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const auto d = random_similarity(64, rng);
      std::vector<int> buffer(80);
      for (auto& b : buffer) b = static_cast<int>(rng.below(64));
      const int h = 16;
      const int ref = oracle::find_loop(buffer, [&](int i, int j) { return d(i, j); }, h);
      REQUIRE(find_loop(buffer, d, h) == ref);
    }
    RowSimilarity zero(4);
    CHECK(find_loop(std::vector<int>(20, 2), zero, 5) == 0);

    // Unique zero seam.
    RowSimilarity d(6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) d(i, j) = i == j ? 0.0 : 1.0 + i + j;
    const std::vector<int> buf{0, 1, 2, 3, 4, 5, 1, 2, 3, 3, 5, 0};
    CHECK(find_loop(buf, d, 6) == 3);
  }

  TEST_CASE("synthesis loop window is the oracle window") {
    const auto src = tex::TextureImage(fixtures::stroke_source(8, 32, 2));
    SynthesisParams p;
    p.jumpProbability = 0.3;
    p.outputHeight = 50;
    p.seed = 9;
    const auto r = synthesize(src, p);
    const auto d = row_similarity(src);
    CHECK(r.loopStart == oracle::find_loop(r.buffer, [&](int i, int j) { return d(i, j); }, 50));
    CHECK(std::vector<int>(r.buffer.begin() + r.loopStart, r.buffer.begin() + r.loopStart + 50) == r.rows);
  }
}
