#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace xmf {

inline constexpr std::string_view kVersion = "0.3.0";

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);
/// Hash of a directory: every regular file, sorted by relative path, with
/// the path folded in.
std::string sha256_tree(const std::filesystem::path& dir);

/// What a command consumed and produced. Serialised as sorted JSON with no
/// timestamps, so identical runs give identical manifests.
struct Manifest {
    std::string command;
    std::string version{kVersion};
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config;
    std::map<std::string, std::string> inputs;   // role -> sha256
    std::map<std::string, std::string> outputs;  // file name -> sha256

    /// sha256 of the config map's canonical text.
    std::string config_hash() const;
    std::string to_json() const;
    static Manifest from_json(std::string_view text);
    static std::optional<Manifest> load(const std::filesystem::path& path);
};

}  // namespace xmf
