#include "abr/assetlib.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <set>
#include <tuple>

namespace abr::assets {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kKindNames[] = {"colormap", "texture", "textureSet", "glyph", "lineTexture", "alphaMask",
                                      "normalMap"};

class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw Error(ErrorCode::Io, "cannot open lock file " + path.string());
    ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

json metadata_json(const Metadata& m) {
  std::vector<std::string> tags = m.intendedUse;
  std::sort(tags.begin(), tags.end());
  return json{{"name", m.name}, {"materialType", m.materialType}, {"intendedUse", tags}, {"description", m.description}};
}

json record_json(const AssetRecord& r) {
  return json{{"id", r.id},           {"kind", to_string(r.kind)}, {"metadata", metadata_json(r.metadata)},
              {"payload", r.payload}, {"contentHash", r.contentHash}, {"created", r.created}};
}

Metadata parse_metadata(const json& j) {
  Metadata m;
  m.name = j.value("name", "");
  m.materialType = j.value("materialType", "");
  m.description = j.value("description", "");
  if (j.contains("intendedUse")) m.intendedUse = j["intendedUse"].get<std::vector<std::string>>();
  std::sort(m.intendedUse.begin(), m.intendedUse.end());
  return m;
}

AssetRecord parse_record(const json& j) {
  AssetRecord r;
  r.id = j.at("id").get<std::string>();
  r.kind = parse_kind(j.at("kind").get<std::string>());
  r.metadata = parse_metadata(j.at("metadata"));
  r.payload = j.at("payload").get<std::vector<std::string>>();
  r.contentHash = j.at("contentHash").get<std::string>();
  r.created = j.value("created", "");
  return r;
}

void sort_records(std::vector<AssetRecord>& records) {
  std::sort(records.begin(), records.end(), [](const AssetRecord& a, const AssetRecord& b) {
    return std::tie(a.created, a.id) < std::tie(b.created, b.id);
  });
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Relative payload paths for `main`, validating that the payload parses as `kind`.
std::vector<std::string> collect_payload(const fs::path& main, AssetKind kind) {
  if (!fs::exists(main)) throw Error(ErrorCode::NotFound, "payload not found: " + main.string());
  const std::string ext = lower(main.extension().string());
  const std::string mainName = main.filename().string();
  auto reject = [&](const std::string& why) {
    return Error(ErrorCode::Validation, std::string("payload rejected as ") + to_string(kind) + ": " + why);
  };
  std::vector<std::string> files{mainName};
  auto addRef = [&](const std::string& rel) {
    const fs::path p = fs::path(rel).lexically_normal();
    if (p.is_absolute() || (!p.empty() && *p.begin() == ".."))
      throw reject("referenced file outside the payload directory: " + rel);
    if (std::find(files.begin(), files.end(), p.generic_string()) == files.end()) files.push_back(p.generic_string());
  };
  try {
    switch (kind) {
      case AssetKind::ColorMap:
        if (ext != ".xml") throw reject("expected a colormap XML file");
        color::parse_colormap_xml(read_text_file(main));
        break;
      case AssetKind::Texture:
      case AssetKind::LineTexture:
      case AssetKind::AlphaMask:
      case AssetKind::NormalMap:
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") throw reject("expected a PNG or JPEG image");
        decode_image(read_file(main));
        break;
      case AssetKind::TextureSet: {
        if (ext != ".json") throw reject("expected a texture-set manifest");
        tex::load_texture_set(main);
        const json doc = json::parse(read_text_file(main));
        for (const auto& e : doc.at("entries"))
          for (const char* key : {"image", "normal", "alpha"})
            if (e.contains(key)) addRef(e[key].get<std::string>());
        break;
      }
      case AssetKind::Glyph: {
        if (ext == ".obj") {
          mesh::load_obj(main).validate();
          break;
        }
        if (ext != ".json") throw reject("expected an OBJ mesh or glyph manifest");
        const json doc = json::parse(read_text_file(main));
        if (doc.value("kind", "") != "glyph") throw reject("manifest is not a glyph manifest");
        mesh::load_glyph_asset(main);
        addRef(doc.at("canonical").get<std::string>());
        for (const auto& e : doc.at("lods")) {
          addRef(e.at("mesh").get<std::string>());
          if (e.contains("normalMap")) addRef(e["normalMap"].get<std::string>());
        }
        break;
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Validation && std::string(e.what()).starts_with("payload rejected")) throw;
    throw reject(e.what());
  } catch (const json::exception& e) {
    throw reject(e.what());
  }
  return files;
}

}  // namespace

const char* to_string(AssetKind kind) { return kKindNames[static_cast<int>(kind)]; }

AssetKind parse_kind(std::string_view text) {
  for (int k = 0; k < 7; ++k)
    if (text == kKindNames[k]) return static_cast<AssetKind>(k);
  throw Error(ErrorCode::InvalidArgument, "unknown asset kind: " + std::string(text));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::Io, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

Library::Library(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "assets", ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create library at " + root_.string() + ": " + ec.message());
}

std::string Library::hash_payload(const fs::path& dir, const std::vector<std::string>& files) const {
  std::vector<std::string> sorted = files;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::uint8_t> buffer;
  for (const auto& name : sorted) {
    const auto bytes = read_file(dir / name);
    buffer.insert(buffer.end(), name.begin(), name.end());
    buffer.push_back(0);
    const std::uint64_t size = bytes.size();
    for (int b = 0; b < 8; ++b) buffer.push_back(static_cast<std::uint8_t>(size >> (8 * b)));
    buffer.insert(buffer.end(), bytes.begin(), bytes.end());
  }
  return sha256_hex(buffer);
}

std::vector<AssetRecord> Library::read_index() const {
  const fs::path index = root_ / "index.json";
  if (!fs::exists(index)) return {};
  try {
    std::vector<AssetRecord> out;
    for (const auto& j : json::parse(read_text_file(index))) out.push_back(parse_record(j));
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, index.string() + ": " + e.what());
  }
}

void Library::write_index(const std::vector<AssetRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(record_json(r));
  write_text_file(root_ / "index.json", arr.dump(2) + "\n");
}

AssetRecord Library::register_asset(const fs::path& main, AssetKind kind, const Metadata& metadata) {
  for (const auto& tag : metadata.intendedUse)
    if (std::find(std::begin(kUseTags), std::end(kUseTags), tag) == std::end(kUseTags))
      throw Error(ErrorCode::Validation, "unknown intended-use tag: " + tag);
  const auto files = collect_payload(main, kind);
  const fs::path srcDir = main.parent_path();
  const std::string contentHash = hash_payload(srcDir, files);
  const json meta = metadata_json(metadata);
  const std::string idSource = contentHash + "\n" + to_string(kind) + "\n" + meta.dump();
  const std::string id = sha256_hex({reinterpret_cast<const std::uint8_t*>(idSource.data()), idSource.size()}).substr(0, 16);

  std::lock_guard guard(mutex_);
  FileLock lock(root_ / ".lock");
  auto records = read_index();
  for (const auto& r : records)
    if (r.id == id) return r;

  AssetRecord rec;
  rec.id = id;
  rec.kind = kind;
  rec.metadata = parse_metadata(meta);
  rec.payload = files;
  rec.contentHash = contentHash;
  rec.created = now_iso();

  const fs::path dest = root_ / "assets" / id;
  fs::create_directories(dest);
  for (const auto& f : files) write_file_atomic(dest / f, read_file(srcDir / f));
  write_text_file(dest / "record.json", record_json(rec).dump(2) + "\n");
  records.push_back(rec);
  sort_records(records);
  write_index(records);
  return rec;
}

std::vector<AssetRecord> Library::query(const Query& q) const {
  std::vector<AssetRecord> out;
  const std::string text = q.text ? lower(*q.text) : "";
  for (auto& r : read_index()) {
    if (q.kind && r.kind != *q.kind) continue;
    if (q.materialType && r.metadata.materialType != *q.materialType) continue;
    bool tags = true;
    for (const auto& t : q.useTags)
      if (std::find(r.metadata.intendedUse.begin(), r.metadata.intendedUse.end(), t) == r.metadata.intendedUse.end())
        tags = false;
    if (!tags) continue;
    if (q.text) {
      const std::string hay = lower(r.metadata.name + "\n" + r.metadata.description + "\n" + r.metadata.materialType);
      if (hay.find(text) == std::string::npos) continue;
    }
    out.push_back(std::move(r));
  }
  sort_records(out);
  return out;
}

AssetRecord Library::record(const std::string& id) const {
  for (auto& r : read_index())
    if (r.id == id) return r;
  throw Error(ErrorCode::NotFound, "asset not found: " + id);
}

fs::path Library::verified_path(const std::string& id) const {
  const AssetRecord rec = record(id);
  const fs::path dir = root_ / "assets" / id;
  std::string actual;
  try {
    actual = hash_payload(dir, rec.payload);
  } catch (const Error& e) {
    throw Error(ErrorCode::Integrity, "asset " + id + " payload unreadable: " + e.what());
  }
  if (actual != rec.contentHash) throw Error(ErrorCode::Integrity, "asset " + id + " failed hash verification");
  return dir / rec.payload.front();
}

LoadedAsset Library::load(const std::string& id) const {
  const fs::path main = verified_path(id);
  switch (record(id).kind) {
    case AssetKind::ColorMap: return color::parse_colormap_xml(read_text_file(main));
    case AssetKind::TextureSet: return tex::load_texture_set(main);
    case AssetKind::Glyph: return mesh::load_glyph_asset(main);
    default: return load_image(main);
  }
}

void Library::rebuild_index() {
  std::lock_guard guard(mutex_);
  FileLock lock(root_ / ".lock");
  std::vector<AssetRecord> records;
  for (const auto& entry : fs::directory_iterator(root_ / "assets")) {
    const fs::path rec = entry.path() / "record.json";
    if (!fs::exists(rec)) continue;
    try {
      records.push_back(parse_record(json::parse(read_text_file(rec))));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, rec.string() + ": " + e.what());
    }
  }
  sort_records(records);
  write_index(records);
}

std::string to_json(const AssetRecord& record) { return record_json(record).dump(); }

std::string to_json(const std::vector<AssetRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(record_json(r));
  return arr.dump();
}

AssetRecord record_from_json(std::string_view text) {
  try {
    return parse_record(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("asset record: ") + e.what());
  }
}

Metadata metadata_from_json(std::string_view text) {
  try {
    return parse_metadata(text.empty() ? json::object() : json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("asset metadata: ") + e.what());
  }
}

Query query_from_json(std::string_view text) {
  Query q;
  try {
    const json j = text.empty() ? json::object() : json::parse(text);
    if (j.contains("kind") && !j["kind"].is_null()) q.kind = parse_kind(j["kind"].get<std::string>());
    if (j.contains("useTags")) q.useTags = j["useTags"].get<std::vector<std::string>>();
    if (j.contains("materialType") && !j["materialType"].is_null()) q.materialType = j["materialType"].get<std::string>();
    if (j.contains("text") && !j["text"].is_null()) q.text = j["text"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("asset query: ") + e.what());
  }
  return q;
}

}  // namespace abr::assets
