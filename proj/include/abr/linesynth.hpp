#pragma once

#include "abr/texture.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace abr::line {

inline constexpr int kDefaultOutputHeight = 2048;
/// The walk produces this many times the requested height before the loop search.
inline constexpr int kBufferFactor = 5;

struct SynthesisParams {
  double jumpProbability = 0.1;
  /// Largest row distance a jump may cover; infinity allows every jump.
  double minQuality = std::numeric_limits<double>::infinity();
  int minJumpSize = 1;
  int outputHeight = kDefaultOutputHeight;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Dense symmetric matrix of RMS Lab dE76 distances between source rows.
class RowSimilarity {
 public:
  RowSimilarity() = default;
  explicit RowSimilarity(int rows) : rows_(rows), d_(static_cast<std::size_t>(rows) * rows, 0.0) {}

  int rows() const { return rows_; }
  double operator()(int i, int j) const { return d_[static_cast<std::size_t>(i) * rows_ + j]; }
  double& operator()(int i, int j) { return d_[static_cast<std::size_t>(i) * rows_ + j]; }
  double mean() const;

 private:
  int rows_ = 0;
  std::vector<double> d_;
};

RowSimilarity row_similarity(const tex::TextureImage& source);

struct SynthesisResult {
  std::vector<int> buffer;   // source row per buffer row, length 5 x outputHeight
  int loopStart = 0;         // chosen window start inside `buffer`
  std::vector<int> rows;     // source row per output row
  tex::TextureImage image;
};

/// Video-textures style walk over source rows followed by the seamless-loop
/// window search. Deterministic for a given (source, params).
SynthesisResult synthesize(const tex::TextureImage& source, const SynthesisParams& params);

/// Walk only; exposed for tests.
std::vector<int> synthesize_rows(const RowSimilarity& similarity, const SynthesisParams& params, int length);

/// Window start s minimizing D[row(s), row(s + outputHeight)]; ties -> smallest s.
int find_loop(const std::vector<int>& buffer, const RowSimilarity& similarity, int outputHeight);

}  // namespace abr::line
