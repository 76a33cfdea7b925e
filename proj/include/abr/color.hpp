#pragma once

#include "abr/image.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace abr::color {

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb8&) const = default;
};

/// CIE L*a*b* under the D65 reference white.
struct LabColor {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;
  bool operator==(const LabColor&) const = default;
};

/// Nonlinear sRGB with channels as reals in [0, 1] (unclamped on output).
struct RgbF {
  double r = 0.0, g = 0.0, b = 0.0;
};

LabColor srgb_to_lab(Rgb8 rgb);
LabColor srgbf_to_lab(RgbF rgb);
/// Inverse conversion; out-of-gamut channels are clamped to [0, 255].
Rgb8 lab_to_srgb(LabColor lab);
RgbF lab_to_srgbf(LabColor lab);

double delta_e76(LabColor x, LabColor y);

std::string to_hex(Rgb8 c);
/// Accepts "#rrggbb" or "rrggbb".
Rgb8 parse_hex(std::string_view text);

struct PixelRef {
  int imageId = 0;
  int x = 0;
  int y = 0;
};

struct Swatch {
  LabColor color;
  std::optional<PixelRef> sourcePixel;
  /// Number of source pixels represented by the swatch's median-cut box.
  std::uint64_t population = 0;
};

inline constexpr int kDefaultPaletteSize = 6;

/// Modified median cut in Lab space. The box with the largest
/// population x longest-axis extent is split at its weighted median until
/// `count` boxes exist; each swatch is its box's mean color. When fewer
/// distinct colors than `count` exist, the most populous box is duplicated
/// with its population halved, so populations always sum to the pixel count.
std::vector<Swatch> extract_palette(const Image& image, int count = kDefaultPaletteSize, int imageId = 0);

struct ControlPoint {
  double position = 0.0;
  LabColor color;
};

class ColorMap {
 public:
  /// Validates: >= 2 points, positions strictly increasing, first 0, last 1.
  ColorMap(std::string name, std::vector<ControlPoint> points);

  /// Rescales positions affinely onto [0, 1] before validating.
  static ColorMap normalized(std::string name, std::vector<ControlPoint> points);

  const std::string& name() const { return name_; }
  const std::vector<ControlPoint>& points() const { return points_; }

 private:
  std::string name_;
  std::vector<ControlPoint> points_;
};

/// Piecewise-linear Lab interpolation; t is clamped to [0, 1].
LabColor sample_colormap(const ColorMap& map, double t);

inline constexpr int kStripWidth = 1024;
inline constexpr int kStripHeight = 32;

std::string export_colormap_xml(const ColorMap& map);
ColorMap parse_colormap_xml(std::string_view xml);
/// 1024x32 RGB image; column c holds sample_colormap(c / 1023).
Image export_colormap_png_strip(const ColorMap& map);

}  // namespace abr::color
