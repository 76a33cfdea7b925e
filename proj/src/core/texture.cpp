#include "abr/texture.hpp"

#include "abr/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace abr::tex {

using json = nlohmann::json;

TextureImage::TextureImage(Image img, std::optional<double> scale)
    : pixels(to_rgba(img)), physicalScale(scale) {
  if (pixels.empty()) throw Error(ErrorCode::InvalidArgument, "texture image must be at least 1x1");
}

TextureImage crop(const TextureImage& image, const Rect& r) {
  if (r.x < 0 || r.y < 0 || r.width < 1 || r.height < 1 || r.x + r.width > image.width() ||
      r.y + r.height > image.height()) {
    throw Error(ErrorCode::InvalidArgument,
                "crop rect (x=" + std::to_string(r.x) + ", y=" + std::to_string(r.y) +
                    ", w=" + std::to_string(r.width) + ", h=" + std::to_string(r.height) +
                    ") outside image " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  Image out(r.width, r.height, 4);
  for (int y = 0; y < r.height; ++y)
    std::copy_n(image.pixels.at(r.x, r.y + y), static_cast<std::size_t>(r.width) * 4, out.at(0, y));
  return TextureImage(std::move(out), image.physicalScale);
}

TextureImage tile_preview(const TextureImage& image, int nx, int ny) {
  if (nx < 1 || ny < 1) throw Error(ErrorCode::InvalidArgument, "tile_preview: nx and ny must be >= 1");
  const int w = image.width(), h = image.height();
  Image out(w * nx, h * ny, 4);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) std::copy_n(image.pixels.at(x % w, y % h), 4, out.at(x, y));
  return TextureImage(std::move(out), image.physicalScale);
}

std::array<std::uint8_t, 3> encode_normal(const Vec3& n) {
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(std::clamp(std::lround((n[c] + 1.0) * 0.5 * 255.0), 0L, 255L));
  return out;
}

Vec3 decode_normal(const std::uint8_t* rgb) {
  return {rgb[0] / 255.0 * 2.0 - 1.0, rgb[1] / 255.0 * 2.0 - 1.0, rgb[2] / 255.0 * 2.0 - 1.0};
}

NormalMap make_normal_map(const TextureImage& image, double strength) {
  if (image.pixels.empty()) throw Error(ErrorCode::InvalidArgument, "make_normal_map: empty image");
  if (!(strength > 0.0)) throw Error(ErrorCode::InvalidArgument, "make_normal_map: strength must be > 0");
  const int w = image.width(), h = image.height();
  std::vector<double> height(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = image.pixels.at(x, y);
      height[static_cast<std::size_t>(y) * w + x] = (0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]) / 255.0;
    }
  }
  auto hAt = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return height[static_cast<std::size_t>(y) * w + x];
  };
  NormalMap nm{Image(w, h, 3)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (hAt(x + 1, y - 1) + 2.0 * hAt(x + 1, y) + hAt(x + 1, y + 1)) -
                        (hAt(x - 1, y - 1) + 2.0 * hAt(x - 1, y) + hAt(x - 1, y + 1));
      const double gy = (hAt(x - 1, y + 1) + 2.0 * hAt(x, y + 1) + hAt(x + 1, y + 1)) -
                        (hAt(x - 1, y - 1) + 2.0 * hAt(x, y - 1) + hAt(x + 1, y - 1));
      const Vec3 n = Vec3(-strength * gx, -strength * gy, 1.0).normalized();
      const auto enc = encode_normal(n);
      std::copy(enc.begin(), enc.end(), nm.pixels.at(x, y));
    }
  }
  return nm;
}

Image resample_bilinear(const Image& img, int width, int height) {
  if (img.empty() || width < 1 || height < 1)
    throw Error(ErrorCode::InvalidArgument, "resample_bilinear: invalid size");
  if (img.width == width && img.height == height) return img;
  Image out(width, height, img.channels);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(x0, y0)[c] * (1 - tx) + img.at(x1, y0)[c] * tx;
        const double bottom = img.at(x0, y1)[c] * (1 - tx) + img.at(x1, y1)[c] * tx;
        out.at(x, y)[c] = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bottom * ty));
      }
    }
  }
  return out;
}

TextureSet build_texture_set(std::vector<TextureImage> images, const TextureSetOptions& options) {
  if (images.empty()) throw Error(ErrorCode::InvalidArgument, "texture set needs at least one image");
  std::size_t largest = 0;
  bool uniform = true;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width() != images[0].width() || images[i].height() != images[0].height()) uniform = false;
    if (static_cast<long>(images[i].width()) * images[i].height() >
        static_cast<long>(images[largest].width()) * images[largest].height())
      largest = i;
  }
  if (!uniform) {
    if (!options.resample) {
      std::string sizes;
      for (std::size_t i = 0; i < images.size(); ++i)
        sizes += (i ? ", " : "") + std::to_string(images[i].width()) + "x" + std::to_string(images[i].height());
      throw Error(ErrorCode::InvalidArgument, "texture set entries differ in size: " + sizes);
    }
    const int w = images[largest].width(), h = images[largest].height();
    for (auto& img : images) img.pixels = resample_bilinear(img.pixels, w, h);
  }
  TextureSet set;
  set.name = options.name;
  set.entries = std::move(images);
  if (options.normalStrength) {
    for (const auto& e : set.entries) set.normalMaps.push_back(make_normal_map(e, *options.normalStrength));
  }
  return set;
}

TextureSet load_texture_set(const std::filesystem::path& manifest) {
  json doc;
  try {
    doc = json::parse(read_text_file(manifest));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, manifest.string() + ": " + e.what());
  }
  const auto dir = manifest.parent_path();
  TextureSet set;
  set.name = doc.value("name", "");
  if (!doc.contains("entries") || !doc["entries"].is_array() || doc["entries"].empty())
    throw Error(ErrorCode::Parse, manifest.string() + ": 'entries' must be a non-empty array");
  const auto& entries = doc["entries"];
  std::vector<TextureImage> images;
  for (const auto& e : entries) {
    const std::string p = e.is_string() ? e.get<std::string>() : e.at("image").get<std::string>();
    images.emplace_back(load_image(dir / p));
  }
  TextureSetOptions opts;
  opts.name = set.name;
  opts.resample = doc.value("resample", false);
  set = build_texture_set(std::move(images), opts);
  const bool hasNormals = entries[0].is_object() && entries[0].contains("normal");
  const bool hasAlpha = entries[0].is_object() && entries[0].contains("alpha");
  for (const auto& e : entries) {
    if (hasNormals) {
      if (!e.is_object() || !e.contains("normal"))
        throw Error(ErrorCode::Parse, manifest.string() + ": normal maps must be given for every entry or none");
      set.normalMaps.push_back({to_rgb(load_image(dir / e["normal"].get<std::string>()))});
    }
    if (hasAlpha) {
      if (!e.is_object() || !e.contains("alpha"))
        throw Error(ErrorCode::Parse, manifest.string() + ": alpha masks must be given for every entry or none");
      set.alphaMasks.push_back(to_gray(load_image(dir / e["alpha"].get<std::string>())));
    }
  }
  return set;
}

void save_texture_set(const TextureSet& set, const std::filesystem::path& manifest) {
  const auto dir = manifest.parent_path();
  const std::string stem = manifest.stem().string();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  json entries = json::array();
  for (std::size_t k = 0; k < set.entries.size(); ++k) {
    json e;
    const std::string base = stem + "_" + std::to_string(k);
    e["image"] = base + ".png";
    save_png(set.entries[k].pixels, dir / (base + ".png"));
    if (k < set.normalMaps.size()) {
      e["normal"] = base + "_normal.png";
      save_png(set.normalMaps[k].pixels, dir / (base + "_normal.png"));
    }
    if (k < set.alphaMasks.size()) {
      e["alpha"] = base + "_alpha.png";
      save_png(set.alphaMasks[k], dir / (base + "_alpha.png"));
    }
    entries.push_back(e);
  }
  json doc{{"name", set.name}, {"entries", entries}};
  write_text_file(manifest, doc.dump(2) + "\n");
}

}  // namespace abr::tex
