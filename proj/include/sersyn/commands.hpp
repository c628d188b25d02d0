#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sersyn/config.hpp"

namespace sersyn::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitTransport = 3,
    kExitData = 4,
};

struct CommandOptions {
    bool force = false;
};

/// Writes prompts.jsonl and texts.jsonl into the run directory.
void cmd_gen_text(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out);

/// Plans emotion-congruent jobs for texts.jsonl and synthesizes the ones
/// not yet listed in speech_manifest.jsonl.
void cmd_gen_speech(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out);

/// Cross-validates the plan; writes fold<k>/ artifacts and results.csv.
void cmd_train(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out,
               std::ostream& err);

/// Writes sweep.csv for cfg.sweep_ratios.
void cmd_sweep(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out);

/// Scores a checkpoint on the test session of one fold.
void cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, int fold,
              std::ostream& out);

/// Loads the training corpus: a blob corpus (generated under the run
/// directory) when configured, otherwise the manifest.
corpus::Corpus load_training_corpus(const RunConfig& cfg);

/// Entry point shared by the executable and the tests. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sersyn::cli
