#include "sersyn/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "sersyn/errors.hpp"

namespace sersyn::cli {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& section) {
    if (!obj.is_object()) throw ConfigError("config: '" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("config: unknown key '" + key + "' in " + section);
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& dst) {
    if (auto it = obj.find(key); it != obj.end()) dst = it->get<T>();
}

void read_client(const json& j, synthesis::ClientConfig& c, const std::string& section,
                 std::string* model = nullptr, double* temperature = nullptr) {
    std::set<std::string> keys{"endpoint_url", "api_key_env", "max_concurrent", "retry_limit",
                               "backoff_ms"};
    if (model) keys.insert({"model", "temperature"});
    check_keys(j, keys, section);
    read(j, "endpoint_url", c.endpoint_url);
    read(j, "api_key_env", c.api_key_env_var);
    read(j, "max_concurrent", c.max_concurrent);
    read(j, "retry_limit", c.retry_limit);
    if (auto it = j.find("backoff_ms"); it != j.end()) {
        c.backoff_base = std::chrono::milliseconds(it->get<long long>());
    }
    if (model) read(j, "model", *model);
    if (temperature) read(j, "temperature", *temperature);
}

json client_to_json(const synthesis::ClientConfig& c) {
    return {{"endpoint_url", c.endpoint_url},
            {"api_key_env", c.api_key_env_var},
            {"max_concurrent", c.max_concurrent},
            {"retry_limit", c.retry_limit},
            {"backoff_ms", c.backoff_base.count()}};
}

void read_plan(const json& j, train::TrainPlan& p) {
    check_keys(j,
               {"strategy", "epochs", "batch_size", "ratio", "repr", "hidden_dim",
                "domain_hidden_dim", "lr", "weight_decay", "beta1", "beta2", "eps", "lambda_grl",
                "adversarial_synthetic_labels", "transfer_lr_factor", "transfer_phase1_epochs",
                "curriculum_chunks", "curriculum_interval", "checkpoint_policy"},
               "plan");
    if (auto it = j.find("strategy"); it != j.end()) p.strategy = train::parse_strategy(it->get<std::string>());
    read(j, "epochs", p.epochs);
    read(j, "batch_size", p.batch_size);
    read(j, "ratio", p.ratio);
    if (auto it = j.find("repr"); it != j.end()) p.repr_mode = model::parse_repr_mode(it->get<std::string>());
    read(j, "hidden_dim", p.hidden_dim);
    read(j, "domain_hidden_dim", p.domain_hidden_dim);
    read(j, "lr", p.optimizer.lr);
    read(j, "weight_decay", p.optimizer.weight_decay);
    read(j, "beta1", p.optimizer.beta1);
    read(j, "beta2", p.optimizer.beta2);
    read(j, "eps", p.optimizer.eps);
    read(j, "lambda_grl", p.lambda_grl);
    read(j, "adversarial_synthetic_labels", p.adversarial_synthetic_labels);
    read(j, "transfer_lr_factor", p.transfer_lr_factor);
    if (auto it = j.find("transfer_phase1_epochs"); it != j.end() && !it->is_null()) {
        p.transfer_phase1_epochs = it->get<int>();
    }
    read(j, "curriculum_chunks", p.curriculum_chunks);
    read(j, "curriculum_interval", p.curriculum_interval);
    if (auto it = j.find("checkpoint_policy"); it != j.end() && !it->is_null()) {
        p.checkpoint_policy = train::parse_checkpoint_policy(it->get<std::string>());
    }
}

json plan_to_json(const train::TrainPlan& p) {
    return {{"strategy", train::to_string(p.strategy)},
            {"epochs", p.epochs},
            {"batch_size", p.batch_size},
            {"ratio", p.ratio},
            {"repr", model::to_string(p.repr_mode)},
            {"hidden_dim", p.hidden_dim},
            {"domain_hidden_dim", p.domain_hidden_dim},
            {"lr", p.optimizer.lr},
            {"weight_decay", p.optimizer.weight_decay},
            {"beta1", p.optimizer.beta1},
            {"beta2", p.optimizer.beta2},
            {"eps", p.optimizer.eps},
            {"lambda_grl", p.lambda_grl},
            {"adversarial_synthetic_labels", p.adversarial_synthetic_labels},
            {"transfer_lr_factor", p.transfer_lr_factor},
            {"transfer_phase1_epochs",
             p.transfer_phase1_epochs ? json(*p.transfer_phase1_epochs) : json(nullptr)},
            {"curriculum_chunks", p.curriculum_chunks},
            {"curriculum_interval", p.curriculum_interval},
            {"checkpoint_policy", p.checkpoint_policy
                                      ? json(train::to_string(*p.checkpoint_policy))
                                      : json(nullptr)}};
}

void read_generation(const json& j, promptgen::GenerationConfig& g) {
    check_keys(j,
               {"narrative_styles", "scenarios", "emotions", "max_tokens", "samples_per_tuple",
                "length_names"},
               "generation");
    if (auto it = j.find("narrative_styles"); it != j.end()) {
        g.narrative_styles.clear();
        for (const auto& s : *it) {
            g.narrative_styles.push_back(promptgen::parse_narrative_style(s.get<std::string>()));
        }
    }
    read(j, "scenarios", g.scenarios);
    read(j, "emotions", g.emotions);
    read(j, "max_tokens", g.max_tokens);
    read(j, "samples_per_tuple", g.samples_per_tuple);
    if (auto it = j.find("length_names"); it != j.end()) {
        g.length_names.clear();
        for (const auto& [k, v] : it->items()) {
            try {
                g.length_names[std::stoi(k)] = v.get<std::string>();
            } catch (const std::logic_error&) {
                throw ConfigError("config: length_names key '" + k + "' is not an integer");
            }
        }
    }
}

json generation_to_json(const promptgen::GenerationConfig& g) {
    json styles = json::array();
    for (auto s : g.narrative_styles) styles.push_back(promptgen::to_string(s));
    json names = json::object();
    for (const auto& [k, v] : g.length_names) names[std::to_string(k)] = v;
    return {{"narrative_styles", styles}, {"scenarios", g.scenarios},
            {"emotions", g.emotions},     {"max_tokens", g.max_tokens},
            {"samples_per_tuple", g.samples_per_tuple}, {"length_names", names}};
}

}  // namespace

RunConfig::RunConfig() {
    chat.endpoint_url = "https://api.openai.com/v1/chat/completions";
    chat.api_key_env_var = "OPENAI_API_KEY";
    tts.endpoint_url = "https://eastus.tts.speech.microsoft.com/cognitiveservices/v1";
    tts.api_key_env_var = "AZURE_SPEECH_KEY";
}

void RunConfig::resolve() {
    if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
        throw ConfigError("config: run name '" + name + "' is not a plain directory name");
    }
    if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
    chat.mock_mode = mock;
    tts.mock_mode = mock;
    chat.mock_seed = seed;
    tts.mock_seed = seed;
    plan.seed = seed;
    generation.validate();
    chat.validate();
    tts.validate();
    if (voices.empty()) throw ConfigError("config: synthesis.voices is empty");
    if (styles.empty()) throw ConfigError("config: synthesis.styles is empty");
    plan.validate();
}

corpus::BlobParams blob_from_json(const json& j, corpus::BlobParams p) {
    check_keys(j,
               {"n_per_class", "n_synthetic", "dims", "layers", "t_min", "t_max",
                "class_separation", "noise_std", "domain_shift"},
               "corpus.blob");
    read(j, "n_per_class", p.n_per_class);
    read(j, "n_synthetic", p.n_synthetic);
    read(j, "dims", p.dims);
    read(j, "layers", p.layers);
    read(j, "t_min", p.t_min);
    read(j, "t_max", p.t_max);
    read(j, "class_separation", p.class_separation);
    read(j, "noise_std", p.noise_std);
    read(j, "domain_shift", p.domain_shift);
    return p;
}

json blob_to_json(const corpus::BlobParams& p) {
    return {{"n_per_class", p.n_per_class}, {"n_synthetic", p.n_synthetic},
            {"dims", p.dims},               {"layers", p.layers},
            {"t_min", p.t_min},             {"t_max", p.t_max},
            {"class_separation", p.class_separation},
            {"noise_std", p.noise_std},     {"domain_shift", p.domain_shift}};
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    try {
        check_keys(j,
                   {"name", "runs_dir", "seed", "mock", "jobs", "generation", "chat", "tts",
                    "synthesis", "corpus", "plan", "sweep"},
                   "top level");
        read(j, "name", cfg.name);
        if (auto it = j.find("runs_dir"); it != j.end()) cfg.runs_dir = it->get<std::string>();
        read(j, "seed", cfg.seed);
        read(j, "mock", cfg.mock);
        read(j, "jobs", cfg.jobs);
        if (auto it = j.find("generation"); it != j.end()) read_generation(*it, cfg.generation);
        if (auto it = j.find("chat"); it != j.end()) {
            read_client(*it, cfg.chat, "chat", &cfg.chat_model, &cfg.temperature);
        }
        if (auto it = j.find("tts"); it != j.end()) read_client(*it, cfg.tts, "tts");
        if (auto it = j.find("synthesis"); it != j.end()) {
            check_keys(*it, {"voices", "styles", "texts"}, "synthesis");
            read(*it, "voices", cfg.voices);
            read(*it, "styles", cfg.styles);
            if (auto t = it->find("texts"); t != it->end() && !t->is_null()) {
                cfg.texts_path = t->get<std::string>();
            }
        }
        if (auto it = j.find("corpus"); it != j.end()) {
            check_keys(*it, {"manifest", "blob"}, "corpus");
            if (auto m = it->find("manifest"); m != it->end() && !m->is_null()) {
                cfg.manifest = m->get<std::string>();
            }
            if (auto b = it->find("blob"); b != it->end() && !b->is_null()) {
                cfg.blob = blob_from_json(*b);
            }
        }
        if (auto it = j.find("plan"); it != j.end()) read_plan(*it, cfg.plan);
        if (auto it = j.find("sweep"); it != j.end()) {
            check_keys(*it, {"ratios"}, "sweep");
            read(*it, "ratios", cfg.sweep_ratios);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const RunConfig& cfg) {
    json chat = client_to_json(cfg.chat);
    chat["model"] = cfg.chat_model;
    chat["temperature"] = cfg.temperature;
    json corpus_section = json::object();
    corpus_section["manifest"] = cfg.manifest ? json(cfg.manifest->string()) : json(nullptr);
    corpus_section["blob"] = cfg.blob ? blob_to_json(*cfg.blob) : json(nullptr);
    return {
        {"name", cfg.name},
        {"runs_dir", cfg.runs_dir.string()},
        {"seed", cfg.seed},
        {"mock", cfg.mock},
        {"jobs", cfg.jobs},
        {"generation", generation_to_json(cfg.generation)},
        {"chat", chat},
        {"tts", client_to_json(cfg.tts)},
        {"synthesis",
         {{"voices", cfg.voices},
          {"styles", cfg.styles},
          {"texts", cfg.texts_path ? json(cfg.texts_path->string()) : json(nullptr)}}},
        {"corpus", corpus_section},
        {"plan", plan_to_json(cfg.plan)},
        {"sweep", {{"ratios", cfg.sweep_ratios}}},
    };
}

}  // namespace sersyn::cli
