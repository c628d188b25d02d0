#include "sersyn/synthesis.hpp"

#include <httplib.h>

#include <cctype>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>
#include <thread>

#include "sersyn/errors.hpp"
#include "sersyn/rng.hpp"

namespace sersyn::synthesis {

namespace {

constexpr std::array<std::string_view, 48> kMockWords{
    "really", "never", "always", "today",   "again",  "truly",   "feel",    "think",
    "know",   "love",  "hate",   "hope",    "wish",   "wait",    "stop",    "look",
    "this",   "that",  "game",   "song",    "story",  "moment",  "night",   "morning",
    "friend", "team",  "place",  "dream",   "chance", "world",   "home",    "time",
    "so",     "very",  "quite",  "just",    "still",  "almost",  "finally", "suddenly",
    "happy",  "sad",   "angry",  "calm",    "bright", "quiet",   "loud",    "strange",
};

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint url '" + url + "' lacks a scheme");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string read_api_key(const ClientConfig& cfg) {
    if (cfg.api_key_env_var.empty()) {
        throw ConfigError("live mode requires api_key_env_var to be configured");
    }
    const char* value = std::getenv(cfg.api_key_env_var.c_str());
    if (value == nullptr || *value == '\0') {
        throw ConfigError("environment variable " + cfg.api_key_env_var +
                          " is not set (required for live mode)");
    }
    return value;
}

bool is_transient(int status) { return status <= 0 || status == 429 || status >= 500; }

// Issues `attempt` until it yields a 2xx response. Transient failures back
// off exponentially: base, 2*base, 4*base, ...
template <typename Attempt>
std::string with_retries(const ClientConfig& cfg, const std::string& what, Attempt attempt) {
    int last_status = 0;
    for (int tries = 0;; ++tries) {
        httplib::Result res = attempt();
        if (res) {
            last_status = res->status;
            if (last_status >= 200 && last_status < 300) return res->body;
        } else {
            last_status = 0;
        }
        if (!is_transient(last_status) || tries >= cfg.retry_limit) {
            throw TransportError(what + " failed after " + std::to_string(tries + 1) +
                                     " attempt(s), last status " + std::to_string(last_status),
                                 last_status);
        }
        std::this_thread::sleep_for(cfg.backoff_base * (1LL << std::min(tries, 20)));
    }
}

}  // namespace

void ClientConfig::validate() const {
    if (max_concurrent < 1) throw ConfigError("client config: max_concurrent must be >= 1");
    if (retry_limit < 0) throw ConfigError("client config: retry_limit must be >= 0");
    if (backoff_base.count() <= 0) throw ConfigError("client config: backoff_base must be > 0");
    if (!mock_mode && endpoint_url.empty()) {
        throw ConfigError("client config: live mode requires endpoint_url");
    }
}

const std::vector<std::string>& default_voices() {
    static const std::vector<std::string> kVoices{
        "en-US-JennyNeural", "en-US-AriaNeural",  "en-US-JaneNeural",
        "en-US-NancyNeural", "en-US-SaraNeural",  "en-US-GuyNeural",
        "en-US-DavisNeural", "en-US-JasonNeural", "en-US-TonyNeural",
    };
    return kVoices;
}

void ConcurrencyGate::acquire() {
    std::unique_lock lock(m_mutex);
    m_cv.wait(lock, [&] { return m_in_flight < m_limit; });
    ++m_in_flight;
}

void ConcurrencyGate::release() {
    {
        std::lock_guard lock(m_mutex);
        --m_in_flight;
    }
    m_cv.notify_one();
}

int implied_word_limit(const std::string& user) {
    static const std::regex kLimit(R"(no more than (\d+) words)");
    std::smatch m;
    if (std::regex_search(user, m, kLimit)) return std::stoi(m[1].str());
    return 0;
}

std::string mock_completion(std::uint64_t seed, const std::string& user, int sample_index) {
    const int limit = implied_word_limit(user);
    const int words = limit > 0 ? std::min(limit, 8) : 8;
    Rng rng(derive_seed(seed ^ fnv1a64(user), static_cast<std::uint64_t>(sample_index)));
    std::string out;
    for (int i = 0; i < words; ++i) {
        if (i > 0) out.push_back(' ');
        out += kMockWords[rng.below(kMockWords.size())];
    }
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    out.push_back('.');
    return out;
}

ChatClient::ChatClient(ClientConfig cfg) : m_cfg(std::move(cfg)), m_gate(m_cfg.max_concurrent) {
    m_cfg.validate();
}

std::vector<std::string> ChatClient::sample(const ChatRequest& req) {
    if (req.n_samples < 1) throw ConfigError("chat request: n_samples must be >= 1");
    if (!std::isfinite(req.temperature) || req.temperature < 0) {
        throw ConfigError("chat request: temperature must be finite and >= 0");
    }
    if (!m_cfg.mock_mode) return sample_live(req);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(req.n_samples));
    for (int i = 0; i < req.n_samples; ++i) {
        out.push_back(mock_completion(m_cfg.mock_seed, req.user, i));
    }
    return out;
}

std::vector<std::string> ChatClient::sample_live(const ChatRequest& req) {
    const std::string key = read_api_key(m_cfg);
    const Endpoint ep = split_url(m_cfg.endpoint_url);
    const nlohmann::json body{
        {"model", req.model_name},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", req.system}},
                                {{"role", "user"}, {"content", req.user}}})},
        {"n", req.n_samples},
        {"temperature", req.temperature},
    };
    const std::string payload = body.dump();

    ConcurrencyGate::Hold hold(m_gate);
    httplib::Client client(ep.origin);
    client.set_read_timeout(std::chrono::seconds(120));
    const httplib::Headers headers{{"Authorization", "Bearer " + key}};
    const std::string response = with_retries(m_cfg, "chat completion", [&] {
        return client.Post(ep.path, headers, payload, "application/json");
    });

    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(response);
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("chat completion returned invalid JSON: ") + e.what(),
                             200);
    }
    std::vector<std::string> out;
    for (const auto& choice : parsed.value("choices", nlohmann::json::array())) {
        out.push_back(choice.at("message").at("content").get<std::string>());
    }
    return out;
}

std::vector<std::string> chat_sample(const ChatRequest& req, const ClientConfig& cfg) {
    return ChatClient(cfg).sample(req);
}

std::string xml_escape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string build_ssml(const SynthesisJob& job) {
    if (job.text.empty()) throw ValidationError("synthesis job " + job.id + ": empty text");
    for (char c : job.text) {
        const auto u = static_cast<unsigned char>(c);
        if (u < 0x20 || u == 0x7F) {
            throw ValidationError("synthesis job " + job.id + ": text contains control character");
        }
    }
    return "<speak version=\"1.0\" xmlns=\"http://www.w3.org/2001/10/synthesis\" "
           "xmlns:mstts=\"https://www.w3.org/2001/mstts\" xml:lang=\"en-US\">"
           "<voice name=\"" +
           xml_escape(job.speaker_voice) + "\"><mstts:express-as style=\"" +
           xml_escape(job.style) + "\">" + xml_escape(job.text) +
           "</mstts:express-as></voice></speak>";
}

std::vector<std::uint8_t> silent_wav() {
    constexpr std::uint32_t kSampleRate = 16000;
    constexpr std::uint16_t kBits = 16;
    constexpr std::uint16_t kChannels = 1;
    constexpr std::uint32_t kDataBytes = kSampleRate * kChannels * (kBits / 8);

    std::vector<std::uint8_t> out;
    out.reserve(44 + kDataBytes);
    auto tag = [&](const char* s) { out.insert(out.end(), s, s + 4); };
    auto u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto u16 = [&](std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    };
    tag("RIFF");
    u32(36 + kDataBytes);
    tag("WAVE");
    tag("fmt ");
    u32(16);
    u16(1);  // PCM
    u16(kChannels);
    u32(kSampleRate);
    u32(kSampleRate * kChannels * (kBits / 8));
    u16(kChannels * (kBits / 8));
    u16(kBits);
    tag("data");
    u32(kDataBytes);
    out.resize(44 + kDataBytes, 0);
    return out;
}

TtsClient::TtsClient(ClientConfig cfg) : m_cfg(std::move(cfg)), m_gate(m_cfg.max_concurrent) {
    m_cfg.validate();
}

std::vector<std::uint8_t> TtsClient::fetch_live(const std::string& ssml) {
    const std::string key = read_api_key(m_cfg);
    const Endpoint ep = split_url(m_cfg.endpoint_url);
    ConcurrencyGate::Hold hold(m_gate);
    httplib::Client client(ep.origin);
    client.set_read_timeout(std::chrono::seconds(120));
    const httplib::Headers headers{
        {"Ocp-Apim-Subscription-Key", key},
        {"X-Microsoft-OutputFormat", "riff-16khz-16bit-mono-pcm"},
    };
    const std::string body = with_retries(m_cfg, "speech synthesis", [&] {
        return client.Post(ep.path, headers, ssml, "application/ssml+xml");
    });
    return {body.begin(), body.end()};
}

std::size_t TtsClient::synthesize(const SynthesisJob& job) {
    const std::string ssml = build_ssml(job);
    const std::vector<std::uint8_t> audio = m_cfg.mock_mode ? silent_wav() : fetch_live(ssml);

    const std::filesystem::path path(job.output_path);
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + job.output_path + " for writing");
    out.write(reinterpret_cast<const char*>(audio.data()),
              static_cast<std::streamsize>(audio.size()));
    if (!out) throw IoError("failed writing " + job.output_path);
    return audio.size();
}

std::size_t tts_synthesize(const SynthesisJob& job, const ClientConfig& cfg) {
    return TtsClient(cfg).synthesize(job);
}

std::vector<SynthesisJob> plan_jobs(const std::vector<promptgen::GeneratedText>& texts,
                                    const std::vector<std::string>& voices,
                                    const std::vector<std::string>& styles) {
    if (texts.empty()) throw ValidationError("plan_jobs: no texts");
    if (voices.empty()) throw ValidationError("plan_jobs: no voices");
    if (styles.empty()) throw ValidationError("plan_jobs: no styles");

    std::vector<SynthesisJob> jobs;
    jobs.reserve(texts.size() * voices.size());
    for (const auto& text : texts) {
        if (!text.cleaned) throw ValidationError("plan_jobs: text " + text.id + " was rejected");
        const std::string& emotion = text.tuple.emotion;
        if (std::find(styles.begin(), styles.end(), emotion) == styles.end()) {
            throw ValidationError("plan_jobs: emotion '" + emotion + "' of text " + text.id +
                                  " is not a configured style");
        }
        for (const auto& voice : voices) {
            SynthesisJob job;
            job.id = text.id + "_" + voice;
            job.text = *text.cleaned;
            job.speaker_voice = voice;
            job.style = emotion;
            job.output_path = "audio/" + job.id + ".wav";
            jobs.push_back(std::move(job));
        }
    }
    return jobs;
}

nlohmann::json manifest_record(const SynthesisJob& job, std::size_t bytes) {
    return {{"id", job.id},         {"text", job.text},
            {"voice", job.speaker_voice}, {"style", job.style},
            {"output_path", job.output_path}, {"bytes", bytes}};
}

}  // namespace sersyn::synthesis
