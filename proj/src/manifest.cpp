#include "ietrans/manifest.hpp"

#include "ietrans/data_model.hpp"

namespace ietrans {

void RunManifest::add_input(const std::string& role, const std::filesystem::path& path) {
    inputs[role] = file_fingerprint(path);
}

nlohmann::json RunManifest::to_json() const {
    return {{"tool", "ietrans"},
            {"version", kToolVersion},
            {"command", command},
            {"params", params},
            {"inputs", inputs}};
}

}  // namespace ietrans
