#pragma once

#include "abr/color.hpp"
#include "abr/mesh.hpp"
#include "abr/texture.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace abr::assets {

enum class AssetKind { ColorMap, Texture, TextureSet, Glyph, LineTexture, AlphaMask, NormalMap };

const char* to_string(AssetKind kind);
AssetKind parse_kind(std::string_view text);

/// Allowed intended-use tags: data type and channel role.
inline constexpr std::string_view kUseTags[] = {"point", "line", "surface", "volume", "identity", "magnitude"};

struct Metadata {
  std::string name;
  std::string materialType;
  std::vector<std::string> intendedUse;
  std::string description;

  bool operator==(const Metadata&) const = default;
};

struct AssetRecord {
  std::string id;
  AssetKind kind = AssetKind::Texture;
  Metadata metadata;
  std::vector<std::string> payload;  // relative to the record directory; first entry is the main file
  std::string contentHash;           // sha256 hex over the payload files
  std::string created;               // UTC, ISO 8601 with milliseconds

  bool operator==(const AssetRecord&) const = default;
};

struct Query {
  std::optional<AssetKind> kind;
  std::vector<std::string> useTags;  // all must be present
  std::optional<std::string> materialType;
  std::optional<std::string> text;  // case-insensitive substring of name, description, materialType
};

using LoadedAsset = std::variant<color::ColorMap, tex::TextureSet, mesh::GlyphAsset, Image>;

std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Content-addressed asset library:
///   <root>/index.json                  array of records
///   <root>/assets/<id>/record.json     the record
///   <root>/assets/<id>/<payload...>    payload files in their native formats
/// Writes go through temp files and atomic renames, serialized by an
/// in-process mutex and an advisory lock on <root>/.lock.
class Library {
 public:
  explicit Library(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// `main` is the payload's main file; manifests (texture sets, glyphs) pull
  /// in the files they reference. Idempotent on identical content + metadata.
  AssetRecord register_asset(const std::filesystem::path& main, AssetKind kind, const Metadata& metadata);

  std::vector<AssetRecord> query(const Query& q = {}) const;
  /// NotFound for unknown ids.
  AssetRecord record(const std::string& id) const;
  /// Path of the main payload file after verifying the hash.
  std::filesystem::path verified_path(const std::string& id) const;
  /// NotFound for unknown ids, Integrity when payload bytes changed.
  LoadedAsset load(const std::string& id) const;

  /// Recreates index.json from the record files.
  void rebuild_index();

 private:
  std::vector<AssetRecord> read_index() const;
  void write_index(const std::vector<AssetRecord>& records);
  std::string hash_payload(const std::filesystem::path& dir, const std::vector<std::string>& files) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
};

std::string to_json(const AssetRecord& record);
std::string to_json(const std::vector<AssetRecord>& records);
AssetRecord record_from_json(std::string_view text);
Metadata metadata_from_json(std::string_view text);
Query query_from_json(std::string_view text);

}  // namespace abr::assets
