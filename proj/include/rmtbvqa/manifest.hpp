#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rmtbvqa/patches.hpp"

namespace rmtbvqa {

// reference_link meaning by row kind:
//   full, unrotated enhanced -> its co-located reference patch
//   full, rotated            -> the unrotated enhanced row it was made from
//   down                     -> its full-resolution counterpart
//   reference rows           -> empty
struct ManifestRow {
  std::string patch_id;
  std::string source_id;
  std::string enhancement_tag;
  Resolution resolution = Resolution::full;
  std::string reference_link;
  std::optional<double> proxy_score;
  std::string metric;
  std::string path;  // relative to the manifest's directory

  bool is_reference() const { return enhancement_tag == kReferenceTag; }
  static constexpr const char* kReferenceTag = "reference";
};

struct Manifest {
  std::optional<std::uint64_t> seed;
  std::vector<ManifestRow> rows;

  /// Index of a patch id; throws InvalidArgument for an unknown id.
  std::size_t index_of(const std::string& patch_id) const;
  std::unordered_map<std::string, std::size_t> index() const;
};

const std::vector<std::string>& manifest_header();

/// Writes header and rows; the seed goes into a leading "# seed=N" line.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
/// Throws FormatError naming the line on a malformed row or duplicate id.
Manifest read_manifest(const std::filesystem::path& path);

/// Checks unique ids, that files exist (relative to base_dir), and that links
/// resolve: down rows to a full row with the same source and enhancement tag.
/// Returns the list of problems; empty means valid.
std::vector<std::string> validate_manifest(const Manifest& m, const std::filesystem::path& base_dir,
                                           bool check_files = true);

ManifestRow row_for(const Patch& p, const std::string& path);

}  // namespace rmtbvqa
