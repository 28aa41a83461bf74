#include "idm/manifest.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>

#include "nlohmann/json.hpp"

namespace idm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_bytes(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(data, len, digest, &digest_len, EVP_sha256(), nullptr) != 1)
    throw io_error("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open for hashing: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_bytes(bytes.data(), bytes.size());
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  json j;
  j["version"] = m.version;
  j["round"] = m.round;
  j["images"] = json::array();
  for (const auto& img : m.images) {
    json e = {{"id", img.id}, {"path", img.path}, {"sha256", img.sha256}, {"source", img.source}};
    if (!img.parent_id.empty()) e["parent_id"] = img.parent_id;
    if (!img.enhancer_checkpoint_id.empty()) e["enhancer_checkpoint_id"] = img.enhancer_checkpoint_id;
    j["images"].push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) throw io_error("cannot write manifest: " + path);
  out << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::string& path, bool verify_checksums) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw manifest_error("manifest parse error in " + path + ": " + e.what());
  }

  DatasetManifest m;
  m.version = j.value("version", 1);
  m.round = j.at("round").get<int>();
  for (const auto& e : j.at("images")) {
    ManifestImage img;
    img.id = e.at("id").get<std::string>();
    img.path = e.at("path").get<std::string>();
    img.sha256 = e.at("sha256").get<std::string>();
    img.source = e.value("source", "original");
    img.parent_id = e.value("parent_id", "");
    img.enhancer_checkpoint_id = e.value("enhancer_checkpoint_id", "");
    if (img.source != "original" && img.source != "enhanced")
      throw manifest_error("manifest image " + img.id + ": bad source tag " + img.source);
    m.images.push_back(std::move(img));
  }

  if (verify_checksums) {
    for (const auto& img : m.images) {
      const std::string full = manifest_image_path(path, img);
      if (!fs::exists(full)) throw manifest_error("manifest references missing file: " + full);
      const std::string actual = sha256_file(full);
      if (actual != img.sha256)
        throw manifest_error("checksum mismatch for " + img.id + ": manifest " + img.sha256 +
                             " vs file " + actual);
    }
  }
  return m;
}

std::string manifest_image_path(const std::string& manifest_path, const ManifestImage& img) {
  return (fs::path(manifest_path).parent_path() / img.path).string();
}

}  // namespace idm
