#pragma once

#include "abr/common.hpp"
#include "abr/image.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace abr::tex {

/// RGBA texture with an optional physical scale (texels per world unit).
struct TextureImage {
  Image pixels;  // always 4 channels
  std::optional<double> physicalScale;

  TextureImage() = default;
  explicit TextureImage(Image img, std::optional<double> scale = std::nullopt);

  int width() const { return pixels.width; }
  int height() const { return pixels.height; }
  bool operator==(const TextureImage&) const = default;
};

/// RGB raster of tangent-space normals, channel = round((n + 1) / 2 * 255).
struct NormalMap {
  Image pixels;  // 3 channels
};

inline constexpr double kDefaultNormalStrength = 2.0;

struct Rect {
  int x = 0, y = 0, width = 0, height = 0;
};

TextureImage crop(const TextureImage& image, const Rect& rect);
TextureImage tile_preview(const TextureImage& image, int nx, int ny);

/// Height = Rec.709 luminance in [0, 1]; Sobel 3x3 gradients with
/// clamp-to-edge borders; normal = normalize(-s*gx, -s*gy, 1).
NormalMap make_normal_map(const TextureImage& image, double strength = kDefaultNormalStrength);

std::array<std::uint8_t, 3> encode_normal(const Vec3& n);
Vec3 decode_normal(const std::uint8_t* rgb);

/// Bilinear resample with texel centers aligned (clamp-to-edge).
Image resample_bilinear(const Image& img, int width, int height);

struct TextureSet {
  std::string name;
  std::vector<TextureImage> entries;  // index k encodes increasing magnitude
  std::vector<NormalMap> normalMaps;  // empty or parallel to entries
  std::vector<Image> alphaMasks;      // empty or parallel to entries, 1 channel

  std::size_t size() const { return entries.size(); }
};

struct TextureSetOptions {
  std::optional<double> normalStrength;
  bool resample = false;
  std::string name;
};

TextureSet build_texture_set(std::vector<TextureImage> images, const TextureSetOptions& options = {});

/// Manifest: {"name": ..., "entries": [{"image": p, "normal": p?, "alpha": p?}, ...]}
/// with paths relative to the manifest's directory.
TextureSet load_texture_set(const std::filesystem::path& manifest);
/// Writes PNGs named <stem>_<k>.png (+ _normal, _alpha) next to the manifest.
void save_texture_set(const TextureSet& set, const std::filesystem::path& manifest);

}  // namespace abr::tex
