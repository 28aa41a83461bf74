#pragma once

#include <string>
#include <vector>

#include "idm/errors.hpp"

namespace idm {

struct ManifestImage {
  std::string id;
  std::string path;  // relative to the manifest's directory
  std::string sha256;
  std::string source;  // "original" or "enhanced"
  std::string parent_id;
  std::string enhancer_checkpoint_id;
};

// Versioned corpus record. Enhanced rounds reference the previous round's
// images bijectively via parent_id.
struct DatasetManifest {
  int version = 1;
  int round = 0;
  std::vector<ManifestImage> images;

  const ManifestImage* find(const std::string& id) const {
    for (const auto& img : images)
      if (img.id == id) return &img;
    return nullptr;
  }
};

std::string sha256_file(const std::string& path);
std::string sha256_bytes(const void* data, std::size_t len);

void save_manifest(const DatasetManifest& m, const std::string& path);

// Loads and, by default, verifies every checksum against the file on disk
// (paths resolved against the manifest's directory).
DatasetManifest load_manifest(const std::string& path, bool verify_checksums = true);

// Absolute path of an image referenced by a manifest at manifest_path.
std::string manifest_image_path(const std::string& manifest_path, const ManifestImage& img);

}  // namespace idm
