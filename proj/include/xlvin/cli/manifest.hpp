#pragma once

#include <string>
#include <vector>

#include "xlvin/cli/config.hpp"

namespace xlvin::cli {

// Git object hash of a file: SHA-1 over "blob <size>\0" followed by the bytes.
std::string git_blob_sha1(const std::string& path);
std::string git_blob_sha1_bytes(const std::string& bytes);

// Writes <dir>/config.txt and <dir>/manifest.json with the config and the
// hash of each listed file (paths relative to dir). Files already named in
// an existing manifest are kept.
void write_manifest(const std::string& dir, const RunConfig& config, const std::vector<std::string>& files);

} // namespace xlvin::cli
