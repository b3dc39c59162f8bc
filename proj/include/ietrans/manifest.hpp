#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

namespace ietrans {

inline constexpr const char* kToolVersion = "1.0.0";

// Parameters and input fingerprints of one command invocation. Contains no clock or
// host data, so identical runs serialize identically.
struct RunManifest {
    std::string command;
    nlohmann::json params = nlohmann::json::object();
    std::map<std::string, std::string> inputs;  // role -> content fingerprint

    void add_input(const std::string& role, const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

}  // namespace ietrans
