#pragma once

// JSON request/response forms shared by the HTTP service and the C API.

#include "abr/assetlib.hpp"
#include "abr/color.hpp"
#include "abr/linesynth.hpp"
#include "abr/mesh.hpp"
#include "abr/sampling.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace abr::api {

using json = nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Accepts plain base64 or a data URL; whitespace is ignored.
std::vector<std::uint8_t> base64_decode(std::string_view text);

json parse_body(std::string_view text);

/// Typed field access that reports the offending key on failure.
template <typename T>
T get(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::InvalidArgument, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key);
}

Vec3 vec3_field(const json& j, const char* key);
json vec3_json(const Vec3& v);

json lab_json(const color::LabColor& c);
json swatches_json(const std::vector<color::Swatch>& swatches);

/// {"xml": "..."} or {"name": n, "points": [{"position": p, "lab": [L,a,b] | "hex": "#rrggbb" | "rgb": [r,g,b]}],
/// "normalize": bool}. With "normalize" positions are rescaled onto [0, 1].
color::ColorMap colormap_from_json(const json& j);
json colormap_json(const color::ColorMap& map);
/// {"lab": [...], "hex": "#...", "rgb": [r, g, b]} with rgb as unclamped reals in [0, 1].
json color_sample_json(const color::LabColor& c);

line::SynthesisParams synthesis_params_from_json(const json& j);

/// Sampling request:
///   method: "regular" | "random" | "density"; spacing, count, seed, chains
///   variable: density scalar (default: the only scalar); interpolation: "nearest" | "trilinear"
///   one source: "box": {"min", "max"} | "volume": inline volume header | "obj": text (+ "values")
///   | "points": CSV text | "data": file path (+ "format", "variables"), resolved against baseDir
sampling::SampleSet run_sample_request(const json& req, const std::filesystem::path& baseDir);
json sample_set_json(const sampling::SampleSet& s);

json record_json(const assets::AssetRecord& r);
json records_json(const std::vector<assets::AssetRecord>& rs);

/// Error body {"code", "message", "details"}.
json error_json(const std::string& code, const std::string& message, const json& details = json::object());

}  // namespace abr::api
