#include "rmtbvqa/manifest.hpp"

#include <unordered_set>

#include "rmtbvqa/csv.hpp"
#include "rmtbvqa/errors.hpp"

namespace rmtbvqa {

const std::vector<std::string>& manifest_header() {
  static const std::vector<std::string> h{"patch_id",       "source_id",   "enhancement_tag",
                                          "resolution_tag", "reference_link", "proxy_score",
                                          "metric",         "path"};
  return h;
}

std::size_t Manifest::index_of(const std::string& patch_id) const {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].patch_id == patch_id) return i;
  throw InvalidArgument("manifest has no patch '" + patch_id + "'");
}

std::unordered_map<std::string, std::size_t> Manifest::index() const {
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < rows.size(); ++i) idx.emplace(rows[i].patch_id, i);
  return idx;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(m.rows.size());
  std::unordered_set<std::string> seen;
  for (const auto& r : m.rows) {
    if (!seen.insert(r.patch_id).second) throw FormatError("duplicate patch id '" + r.patch_id + "'");
    rows.push_back({r.patch_id, r.source_id, r.enhancement_tag, to_string(r.resolution),
                    r.reference_link, r.proxy_score ? csv::format_real(*r.proxy_score) : "",
                    r.metric, r.path});
  }
  std::vector<std::string> comments;
  if (m.seed) comments.push_back(" seed=" + std::to_string(*m.seed));
  csv::write(path, manifest_header(), rows, comments);
}

Manifest read_manifest(const std::filesystem::path& path) {
  csv::Table t = csv::read(path);
  if (t.header != manifest_header()) {
    throw FormatError(path.string() + ": manifest header must be " + csv::join(manifest_header()));
  }
  Manifest m;
  for (const auto& c : t.comments) {
    const auto pos = c.find("seed=");
    if (pos != std::string::npos) m.seed = std::stoull(c.substr(pos + 5));
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::string where = path.string() + ":" + std::to_string(t.line_numbers[i]);
    ManifestRow r;
    r.patch_id = f[0];
    r.source_id = f[1];
    r.enhancement_tag = f[2];
    try {
      r.resolution = resolution_from_string(f[3]);
      r.proxy_score = csv::parse_optional_real(f[5], "proxy_score");
    } catch (const FormatError& e) {
      throw FormatError(where + ": " + e.what());
    }
    r.reference_link = f[4];
    r.metric = f[6];
    r.path = f[7];
    if (r.patch_id.empty()) throw FormatError(where + ": empty patch_id");
    if (!seen.insert(r.patch_id).second) {
      throw FormatError(where + ": duplicate patch id '" + r.patch_id + "'");
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

std::vector<std::string> validate_manifest(const Manifest& m, const std::filesystem::path& base_dir,
                                           bool check_files) {
  std::vector<std::string> problems;
  const auto idx = m.index();
  if (idx.size() != m.rows.size()) problems.push_back("duplicate patch ids");
  for (const auto& r : m.rows) {
    if (check_files && !std::filesystem::exists(base_dir / r.path)) {
      problems.push_back(r.patch_id + ": missing file " + r.path);
    }
    if (r.reference_link.empty()) {
      if (r.resolution == Resolution::down) problems.push_back(r.patch_id + ": down patch without link");
      continue;
    }
    auto it = idx.find(r.reference_link);
    if (it == idx.end()) {
      problems.push_back(r.patch_id + ": link '" + r.reference_link + "' does not resolve");
      continue;
    }
    const auto& target = m.rows[it->second];
    if (r.resolution == Resolution::down) {
      if (target.resolution != Resolution::full || target.source_id != r.source_id ||
          target.enhancement_tag != r.enhancement_tag) {
        problems.push_back(r.patch_id + ": down link must name a full patch of the same source and tag");
      }
    } else if (target.source_id != r.source_id) {
      problems.push_back(r.patch_id + ": link crosses sources");
    }
  }
  return problems;
}

ManifestRow row_for(const Patch& p, const std::string& path) {
  ManifestRow r;
  r.patch_id = p.patch_id;
  r.source_id = p.source_id;
  r.enhancement_tag = p.enhancement_tag;
  r.resolution = p.resolution;
  r.reference_link = p.reference_link;
  r.proxy_score = p.proxy_score;
  r.path = path;
  return r;
}

}  // namespace rmtbvqa
