#include "abr/linesynth.hpp"

#include "abr/color.hpp"
#include "abr/common.hpp"

#include <cmath>
#include <numeric>

namespace abr::line {

void SynthesisParams::validate() const {
  if (!(jumpProbability >= 0.0 && jumpProbability <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "jumpProbability must be in [0, 1]");
  if (std::isnan(minQuality) || minQuality < 0.0)
    throw Error(ErrorCode::InvalidArgument, "minQuality must be >= 0");
  if (minJumpSize < 1) throw Error(ErrorCode::InvalidArgument, "minJumpSize must be >= 1");
  if (outputHeight < 2) throw Error(ErrorCode::InvalidArgument, "outputHeight must be >= 2");
}

double RowSimilarity::mean() const {
  if (d_.empty()) return 0.0;
  return std::accumulate(d_.begin(), d_.end(), 0.0) / static_cast<double>(d_.size());
}

RowSimilarity row_similarity(const tex::TextureImage& source) {
  const int w = source.width(), h = source.height();
  if (h < 2) throw Error(ErrorCode::InvalidArgument, "row_similarity: source needs at least 2 rows");
  std::vector<color::LabColor> lab(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = source.pixels.at(x, y);
      lab[static_cast<std::size_t>(y) * w + x] = color::srgb_to_lab({p[0], p[1], p[2]});
    }
  RowSimilarity d(h);
  for (int i = 0; i < h; ++i) {
    for (int j = i + 1; j < h; ++j) {
      double sum = 0.0;
      for (int x = 0; x < w; ++x) {
        const auto& a = lab[static_cast<std::size_t>(i) * w + x];
        const auto& b = lab[static_cast<std::size_t>(j) * w + x];
        const double dl = a.L - b.L, da = a.a - b.a, db = a.b - b.b;
        sum += dl * dl + da * da + db * db;
      }
      const double rms = std::sqrt(sum / w);
      d(i, j) = rms;
      d(j, i) = rms;
    }
  }
  return d;
}

std::vector<int> synthesize_rows(const RowSimilarity& D, const SynthesisParams& params, int length) {
  params.validate();
  const int h = D.rows();
  if (h < 2) throw Error(ErrorCode::InvalidArgument, "synthesize: source needs at least 2 rows");
  Rng rng(params.seed);
  const bool jumps = params.jumpProbability > 0.0;
  const double sigma = D.mean();

  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(length));
  // Without jumps the walk is plain tiling from row 0.
  int current = jumps ? static_cast<int>(rng.below(static_cast<std::uint64_t>(h))) : 0;
  std::vector<int> candidates;
  std::vector<double> weights;
  for (int k = 0; k < length; ++k) {
    rows.push_back(current);
    const int next = (current + 1) % h;
    int chosen = next;
    if (jumps && rng.uniform() < params.jumpProbability) {
      candidates.clear();
      weights.clear();
      double total = 0.0;
      for (int j = 0; j < h; ++j) {
        const double dist = D(next, j);
        if (dist <= params.minQuality && std::abs(j - next) >= params.minJumpSize) {
          const double w = sigma > 0.0 ? std::exp(-dist / sigma) : 1.0;
          candidates.push_back(j);
          weights.push_back(w);
          total += w;
        }
      }
      if (!candidates.empty()) {
        const double pick = rng.uniform() * total;
        double acc = 0.0;
        chosen = candidates.back();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
          acc += weights[c];
          if (pick < acc) {
            chosen = candidates[c];
            break;
          }
        }
      }
    }
    current = chosen;
  }
  return rows;
}

int find_loop(const std::vector<int>& buffer, const RowSimilarity& D, int outputHeight) {
  const int n = static_cast<int>(buffer.size());
  if (outputHeight < 1 || n < outputHeight)
    throw Error(ErrorCode::InvalidArgument, "find_loop: buffer shorter than output height");
  int best = 0;
  double bestDist = std::numeric_limits<double>::infinity();
  for (int s = 0; s + outputHeight < n; ++s) {
    const double dist = D(buffer[static_cast<std::size_t>(s)], buffer[static_cast<std::size_t>(s + outputHeight)]);
    if (dist < bestDist) {
      bestDist = dist;
      best = s;
    }
  }
  return best;
}

SynthesisResult synthesize(const tex::TextureImage& source, const SynthesisParams& params) {
  params.validate();
  const RowSimilarity D = row_similarity(source);
  SynthesisResult result;
  result.buffer = synthesize_rows(D, params, kBufferFactor * params.outputHeight);
  result.loopStart = find_loop(result.buffer, D, params.outputHeight);
  result.rows.assign(result.buffer.begin() + result.loopStart,
                     result.buffer.begin() + result.loopStart + params.outputHeight);
  const int w = source.width();
  Image out(w, params.outputHeight, 4);
  for (int y = 0; y < params.outputHeight; ++y)
    std::copy_n(source.pixels.at(0, result.rows[static_cast<std::size_t>(y)]), static_cast<std::size_t>(w) * 4,
                out.at(0, y));
  result.image = tex::TextureImage(std::move(out), source.physicalScale);
  return result;
}

}  // namespace abr::line
