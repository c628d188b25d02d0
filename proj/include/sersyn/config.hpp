#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sersyn/corpus.hpp"
#include "sersyn/promptgen.hpp"
#include "sersyn/strategies.hpp"
#include "sersyn/synthesis.hpp"

namespace sersyn::cli {

/// Everything a run needs, loaded from one JSON file and then patched by
/// command-line overrides. Unknown keys are rejected at every level.
struct RunConfig {
    std::string name = "default";
    std::filesystem::path runs_dir = "runs";
    std::uint64_t seed = 0;
    bool mock = false;
    int jobs = 1;

    promptgen::GenerationConfig generation = promptgen::GenerationConfig::standard();

    synthesis::ClientConfig chat;
    std::string chat_model = "gpt-4";
    double temperature = 1.0;

    synthesis::ClientConfig tts;
    std::vector<std::string> voices = synthesis::default_voices();
    std::vector<std::string> styles = promptgen::standard_emotions();
    std::optional<std::filesystem::path> texts_path;

    std::optional<std::filesystem::path> manifest;
    std::optional<corpus::BlobParams> blob;

    train::TrainPlan plan;
    std::vector<double> sweep_ratios{0.0, 0.25, 0.5, 0.75, 1.0};

    RunConfig();

    /// Pushes seed and mock flags into the sub-configs and validates them.
    void resolve();
    std::filesystem::path run_dir() const { return runs_dir / name; }
};

/// Throws ConfigError on unknown keys or wrongly typed values.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// The resolved configuration in the same schema config_from_json reads.
nlohmann::json config_to_json(const RunConfig& cfg);

corpus::BlobParams blob_from_json(const nlohmann::json& j, corpus::BlobParams base = {});
nlohmann::json blob_to_json(const corpus::BlobParams& p);

}  // namespace sersyn::cli
