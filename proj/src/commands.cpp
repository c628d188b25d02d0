#include "sersyn/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "sersyn/errors.hpp"
#include "sersyn/parallel.hpp"
#include "sersyn/sweep.hpp"

namespace sersyn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw IoError("failed writing " + path.string());
}

// Refuses to replace an existing artifact unless --force was given.
void guard_artifact(const fs::path& path, const CommandOptions& opts) {
    if (fs::exists(path) && !opts.force) {
        throw ConfigError(path.string() + " already exists; rerun with --force to overwrite");
    }
}

// Freezes the resolved config as config.<command>.json. An identical copy
// may already exist; a different one needs --force.
void freeze_config(const RunConfig& cfg, const std::string& command, const CommandOptions& opts) {
    const fs::path dir = cfg.run_dir();
    fs::create_directories(dir);
    const fs::path path = dir / ("config." + command + ".json");
    const std::string content = config_to_json(cfg).dump(2) + "\n";
    if (fs::exists(path) && slurp(path) != content && !opts.force) {
        throw ConfigError(path.string() +
                          " holds a different configuration; rerun with --force to overwrite");
    }
    write_file(path, content);
}

std::string text_id(std::size_t tuple_index, int sample) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%05zu_s%02d", tuple_index, sample);
    return buf;
}

std::vector<promptgen::GeneratedText> read_texts(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open texts file " + path.string());
    std::vector<promptgen::GeneratedText> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(promptgen::text_from_record(json::parse(line)));
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ": malformed text record: " + e.what());
        } catch (const ConfigError& e) {
            throw ValidationError(path.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

void cmd_gen_text(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out) {
    const fs::path dir = cfg.run_dir();
    guard_artifact(dir / "texts.jsonl", opts);
    freeze_config(cfg, "gen-text", opts);

    const auto tuples = promptgen::group_tuples(cfg.generation);
    std::vector<promptgen::Prompt> prompts;
    prompts.reserve(tuples.size());
    for (const auto& t : tuples) prompts.push_back(promptgen::render_prompt(t, cfg.generation.length_names));

    synthesis::ChatClient client(cfg.chat);
    std::vector<std::vector<std::string>> completions(tuples.size());
    const int workers = cfg.chat.mock_mode ? 1 : cfg.chat.max_concurrent;
    run_bounded(tuples.size(), workers, [&](std::size_t i) {
        synthesis::ChatRequest req;
        req.system = prompts[i].system;
        req.user = prompts[i].user;
        req.n_samples = cfg.generation.samples_per_tuple;
        req.temperature = cfg.temperature;
        req.model_name = cfg.chat_model;
        completions[i] = client.sample(req);
    });

    std::ostringstream prompt_lines;
    std::ostringstream text_lines;
    std::set<std::string> seen;
    std::map<std::string, std::size_t> rejected;
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < tuples.size(); ++i) {
        prompt_lines << promptgen::prompt_record(tuples[i], prompts[i]).dump() << '\n';
        for (std::size_t s = 0; s < completions[i].size(); ++s) {
            auto text = promptgen::clean_text(completions[i][s], tuples[i], seen);
            if (!text.accepted()) {
                ++rejected[*text.rejected_reason];
                continue;
            }
            text.id = text_id(i, static_cast<int>(s));
            text_lines << promptgen::text_record(text).dump() << '\n';
            ++accepted;
        }
    }
    write_file(dir / "prompts.jsonl", prompt_lines.str());
    write_file(dir / "texts.jsonl", text_lines.str());

    out << "prompts: " << tuples.size() << "\n";
    out << "accepted: " << accepted << "\n";
    for (const char* reason : {"refusal", "too_long", "empty", "duplicate"}) {
        out << "rejected " << reason << ": " << rejected[reason] << "\n";
    }
}

void cmd_gen_speech(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out) {
    const fs::path dir = cfg.run_dir();
    freeze_config(cfg, "gen-speech", opts);
    const fs::path texts_path = cfg.texts_path.value_or(dir / "texts.jsonl");
    const auto texts = read_texts(texts_path);
    const auto jobs = synthesis::plan_jobs(texts, cfg.voices, cfg.styles);

    const fs::path manifest = dir / "speech_manifest.jsonl";
    if (opts.force) fs::remove(manifest);
    std::set<std::string> done;
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                done.insert(json::parse(line).at("id").get<std::string>());
            } catch (const json::exception&) {
                // A torn final line from an interrupted run; the job reruns.
            }
        }
    }

    std::vector<synthesis::SynthesisJob> pending;
    for (const auto& j : jobs) {
        if (!done.contains(j.id)) pending.push_back(j);
    }

    synthesis::TtsClient client(cfg.tts);
    const int workers = cfg.tts.mock_mode ? 1 : cfg.tts.max_concurrent;
    const auto chunk = static_cast<std::size_t>(std::max(workers, 1));
    std::ofstream log(manifest, std::ios::binary | std::ios::app);
    if (!log) throw IoError("cannot open " + manifest.string());
    for (std::size_t start = 0; start < pending.size(); start += chunk) {
        const std::size_t n = std::min(chunk, pending.size() - start);
        std::vector<std::size_t> bytes(n);
        run_bounded(n, workers, [&](std::size_t i) {
            auto job = pending[start + i];
            job.output_path = (dir / job.output_path).string();
            bytes[i] = client.synthesize(job);
        });
        for (std::size_t i = 0; i < n; ++i) {
            log << synthesis::manifest_record(pending[start + i], bytes[i]).dump() << '\n';
        }
        log.flush();
    }
    out << "jobs: " << jobs.size() << "\n";
    out << "skipped (already done): " << jobs.size() - pending.size() << "\n";
    out << "synthesized: " << pending.size() << "\n";
}

corpus::Corpus load_training_corpus(const RunConfig& cfg) {
    if (cfg.blob) {
        auto params = *cfg.blob;
        params.seed = cfg.seed;
        auto corpus = corpus::generate_blob_corpus(params);
        const fs::path blob_dir = cfg.run_dir() / "blob";
        if (!fs::exists(blob_dir / "manifest.jsonl")) corpus::write_corpus(blob_dir, corpus);
        return corpus;
    }
    if (!cfg.manifest) {
        throw ConfigError("no training data: set corpus.manifest or corpus.blob (or pass --blob)");
    }
    return corpus::load_corpus(*cfg.manifest);
}

void cmd_train(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out,
               std::ostream& err) {
    const fs::path dir = cfg.run_dir();
    guard_artifact(dir / "results.csv", opts);
    freeze_config(cfg, "train", opts);
    const auto corpus = load_training_corpus(cfg);
    const auto cv = train::run_cross_validation(corpus, cfg.plan, cfg.jobs);

    for (const auto& f : cv.folds) {
        const fs::path fold_dir = dir / ("fold" + std::to_string(f.fold));
        fs::create_directories(fold_dir);
        std::string lines;
        for (const auto& l : f.result.logs) lines += train::to_json(l).dump() + "\n";
        write_file(fold_dir / "epochs.jsonl", lines);
        model::save_checkpoint(fold_dir / "checkpoint.bin", f.result.model,
                               {std::string(train::to_string(cfg.plan.strategy)),
                                f.result.selected_epoch, cfg.seed});
        write_file(fold_dir / "confusion.json", f.test.confusion.to_json().dump() + "\n");
        for (const auto& w : f.result.warnings) err << "warning: " << w << "\n";
    }
    const double ratio = cfg.plan.strategy == train::Strategy::baseline ? 0.0 : cfg.plan.ratio;
    const std::string csv = metrics::results_csv({{ratio, cv.aggregate}});
    write_file(dir / "results.csv", csv);
    out << csv;
}

void cmd_sweep(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out) {
    const fs::path dir = cfg.run_dir();
    guard_artifact(dir / "sweep.csv", opts);
    freeze_config(cfg, "sweep", opts);
    const auto corpus = load_training_corpus(cfg);
    const auto blocks = metrics::ratio_sweep(corpus, cfg.plan, cfg.sweep_ratios, cfg.jobs);
    const std::string csv = metrics::results_csv(blocks);
    write_file(dir / "sweep.csv", csv);
    out << csv;
}

void cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, int fold, std::ostream& out) {
    if (fold < 1 || fold > corpus::kNumSessions) throw ConfigError("eval: fold must be in 1..5");
    const auto corpus = load_training_corpus(cfg);
    const auto splits = corpus::make_folds(corpus.records, cfg.seed);
    const auto data = train::make_fold_data(corpus, splits[static_cast<std::size_t>(fold - 1)]);
    if (data.test.empty()) throw ValidationError("eval: fold has no test utterances");
    // Mode and hidden size come from the checkpoint; only the feature shape
    // has to agree with the corpus.
    const auto loaded = model::load_checkpoint(checkpoint);
    const auto& x = *data.test.front().features;
    const auto& dims = loaded.model.dims;
    if (dims.input_dim != x.dims || dims.num_classes != corpus::kNumClasses ||
        (loaded.model.mode == model::ReprMode::weighted_layers && dims.layers != x.layers)) {
        throw ValidationError("checkpoint " + checkpoint.string() +
                              " does not fit the corpus feature shape");
    }
    const auto cm = train::evaluate(loaded.model, data.test);
    const auto acc = metrics::wa_ua(cm);
    out << json{{"fold", fold}, {"wa", acc.wa}, {"ua", acc.ua}, {"confusion", cm.to_json()}}.dump()
        << "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Synthetic emotional speech augmentation toolkit", "sersyn"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> name;
    std::optional<std::string> runs_dir;
    bool mock = false;
    CommandOptions opts;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "Global seed");
    app.add_flag("--mock", mock, "Use the offline LLM and TTS backends");
    app.add_option("--jobs", jobs, "Folds trained in parallel");
    app.add_option("--name", name, "Run name (artifacts go to <runs-dir>/<name>)");
    app.add_option("--runs-dir", runs_dir, "Root directory for run artifacts");
    app.add_flag("--force", opts.force, "Overwrite existing artifacts");

    auto* gen_text = app.add_subcommand("gen-text", "Generate emotional text from prompts");
    auto* gen_speech = app.add_subcommand("gen-speech", "Synthesize speech for generated texts");
    std::optional<std::string> texts;
    gen_speech->add_option("--texts", texts, "texts.jsonl to synthesize");

    std::optional<std::string> strategy, repr, manifest;
    std::optional<double> ratio;
    std::optional<int> epochs, batch_size;
    bool blob = false;
    auto add_train_flags = [&](CLI::App* sub) {
        sub->add_option("--strategy", strategy, "baseline|random_mix|adversarial|transfer|curriculum");
        sub->add_option("--repr", repr, "last|weighted");
        sub->add_option("--epochs", epochs);
        sub->add_option("--batch-size", batch_size);
        sub->add_option("--manifest", manifest, "Utterance manifest (JSON lines)");
        sub->add_flag("--blob", blob, "Train on a generated blob corpus");
    };
    auto* train_cmd = app.add_subcommand("train", "Cross-validate one training plan");
    add_train_flags(train_cmd);
    train_cmd->add_option("--ratio", ratio, "Synthetic:real ratio");

    auto* sweep_cmd = app.add_subcommand("sweep", "Cross-validate over synthetic ratios");
    add_train_flags(sweep_cmd);
    std::vector<double> ratios;
    sweep_cmd->add_option("--ratios", ratios, "Comma-separated ratios, 0 = baseline")->delimiter(',');

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a fold's test session");
    add_train_flags(eval_cmd);
    std::string checkpoint;
    int fold = 1;
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--fold", fold)->required();

    std::vector<std::string> argv_storage{"sersyn"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_storage) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (jobs) cfg.jobs = *jobs;
        if (name) cfg.name = *name;
        if (runs_dir) cfg.runs_dir = *runs_dir;
        if (mock) cfg.mock = true;
        if (texts) cfg.texts_path = *texts;
        if (strategy) cfg.plan.strategy = train::parse_strategy(*strategy);
        if (repr) cfg.plan.repr_mode = model::parse_repr_mode(*repr);
        if (epochs) cfg.plan.epochs = *epochs;
        if (batch_size) cfg.plan.batch_size = *batch_size;
        if (ratio) cfg.plan.ratio = *ratio;
        if (manifest) cfg.manifest = *manifest;
        if (blob && !cfg.blob) cfg.blob = corpus::BlobParams{};
        if (!ratios.empty()) cfg.sweep_ratios = ratios;
        cfg.resolve();

        if (gen_text->parsed()) cmd_gen_text(cfg, opts, out);
        else if (gen_speech->parsed()) cmd_gen_speech(cfg, opts, out);
        else if (train_cmd->parsed()) cmd_train(cfg, opts, out, err);
        else if (sweep_cmd->parsed()) cmd_sweep(cfg, opts, out);
        else if (eval_cmd->parsed()) cmd_eval(cfg, checkpoint, fold, out);
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TransportError& e) {
        err << "transport error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const ValidationError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace sersyn::cli
