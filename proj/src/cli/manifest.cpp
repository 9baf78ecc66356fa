#include "xlvin/cli/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/sha.h>

namespace xlvin::cli {

std::string git_blob_sha1_bytes(const std::string& bytes) {
    const std::string object = "blob " + std::to_string(bytes.size()) + std::string(1, '\0') + bytes;
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(object.data()), object.size(), digest);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned char b : digest) {
        out += hex[b >> 4];
        out += hex[b & 15];
    }
    return out;
}

std::string git_blob_sha1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return git_blob_sha1_bytes(ss.str());
}

void write_manifest(const std::string& dir, const RunConfig& config, const std::vector<std::string>& files) {
    namespace fs = std::filesystem;
    {
        std::ofstream out(fs::path(dir) / "config.txt");
        if (!out) throw std::runtime_error("cannot write config.txt in " + dir);
        out << serialize_config(config);
    }
    const fs::path path = fs::path(dir) / "manifest.json";
    nlohmann::json m = nlohmann::json::object();
    if (fs::exists(path)) {
        std::ifstream in(path);
        m = nlohmann::json::parse(in, nullptr, false);
        if (m.is_discarded() || !m.is_object()) m = nlohmann::json::object();
    }
    m["config"] = config_map(config);
    if (!m.contains("files")) m["files"] = nlohmann::json::object();
    m["files"]["config.txt"] = git_blob_sha1((fs::path(dir) / "config.txt").string());
    for (const auto& f : files) m["files"][f] = git_blob_sha1((fs::path(dir) / f).string());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << m.dump(2) << "\n";
}

} // namespace xlvin::cli
