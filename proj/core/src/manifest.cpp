#include "las/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "las/errors.hpp"

namespace las {

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("manifest: cannot open: " + path.string());
  std::vector<ManifestRecord> out;
  std::set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("manifest: bad JSON: ") + e.what(), line_no);
    }
    ManifestRecord r;
    if (!j.contains("id")) throw ParseError("manifest: record missing id", line_no);
    r.id = j["id"].get<std::string>();
    r.audio = j.value("audio", "");
    r.feats = j.value("feats", "");
    r.text = j.value("text", "");
    if (r.audio.empty() == r.feats.empty()) {
      throw ParseError("manifest: record '" + r.id + "' needs exactly one of audio/feats", line_no);
    }
    if (!seen.insert(r.id).second) throw ParseError("manifest: duplicate id '" + r.id + "'", line_no);
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("manifest: cannot open for writing: " + path.string());
  for (const ManifestRecord& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    if (!r.audio.empty()) j["audio"] = r.audio;
    if (!r.feats.empty()) j["feats"] = r.feats;
    j["text"] = r.text;
    os << j.dump() << "\n";
  }
  if (!os) throw IoError("manifest: write failed: " + path.string());
}

}  // namespace las
