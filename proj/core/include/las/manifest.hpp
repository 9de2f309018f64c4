#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace las {

// One corpus record: exactly one of audio/feats is set; ids are unique
// within a manifest. Stored as JSON Lines.
struct ManifestRecord {
  std::string id;
  std::string audio;  // path to a WAV file
  std::string feats;  // path to an FBNK feature file
  std::string text;   // transcript, may be empty
};

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

}  // namespace las
