#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sersyn/promptgen.hpp"

namespace sersyn::synthesis {

struct ChatRequest {
    std::string system;
    std::string user;
    int n_samples = 1;
    double temperature = 1.0;
    std::string model_name = "gpt-4";
};

struct SynthesisJob {
    std::string id;
    std::string text;
    std::string speaker_voice;
    std::string style;
    std::string output_path;
};

struct ClientConfig {
    std::string endpoint_url;
    std::string api_key_env_var;
    int max_concurrent = 4;
    int retry_limit = 3;
    std::chrono::milliseconds backoff_base{500};
    bool mock_mode = true;
    std::uint64_t mock_seed = 0;

    void validate() const;
};

/// Nine opaque voice slots (five "female", four "male") used by default.
const std::vector<std::string>& default_voices();

/// Counting gate bounding the number of requests in flight.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(int limit) : m_limit(limit) {}

    void acquire();
    void release();

    class Hold {
    public:
        explicit Hold(ConcurrencyGate& gate) : m_gate(gate) { m_gate.acquire(); }
        ~Hold() { m_gate.release(); }
        Hold(const Hold&) = delete;
        Hold& operator=(const Hold&) = delete;

    private:
        ConcurrencyGate& m_gate;
    };

private:
    std::mutex m_mutex;
    std::condition_variable m_cv;
    int m_limit;
    int m_in_flight = 0;
};

/// Chat-completion client. Thread-safe; live requests are bounded by
/// ClientConfig::max_concurrent.
class ChatClient {
public:
    explicit ChatClient(ClientConfig cfg);

    std::vector<std::string> sample(const ChatRequest& req);

    const ClientConfig& config() const { return m_cfg; }

private:
    std::vector<std::string> sample_live(const ChatRequest& req);

    ClientConfig m_cfg;
    ConcurrencyGate m_gate;
};

/// Deterministic pseudo-completion used in mock mode. Word count is
/// min(limit parsed from "no more than N words", 8).
std::string mock_completion(std::uint64_t seed, const std::string& user, int sample_index);

/// Parses "no more than N words" out of a prompt. Returns 0 when absent.
int implied_word_limit(const std::string& user);

std::vector<std::string> chat_sample(const ChatRequest& req, const ClientConfig& cfg);

std::string xml_escape(std::string_view text);

/// Renders the express-as SSML document for one job. Throws ValidationError
/// on control characters or an empty text.
std::string build_ssml(const SynthesisJob& job);

/// 44-byte RIFF header followed by one second of 16 kHz 16-bit mono silence.
std::vector<std::uint8_t> silent_wav();

class TtsClient {
public:
    explicit TtsClient(ClientConfig cfg);

    /// Writes audio for the job and returns the byte count.
    std::size_t synthesize(const SynthesisJob& job);

    const ClientConfig& config() const { return m_cfg; }

private:
    std::vector<std::uint8_t> fetch_live(const std::string& ssml);

    ClientConfig m_cfg;
    ConcurrencyGate m_gate;
};

std::size_t tts_synthesize(const SynthesisJob& job, const ClientConfig& cfg);

/// One job per (text, voice), text-major, style = text emotion. Output paths
/// are `audio/<text id>_<voice>.wav` relative to the run directory.
std::vector<SynthesisJob> plan_jobs(const std::vector<promptgen::GeneratedText>& texts,
                                    const std::vector<std::string>& voices,
                                    const std::vector<std::string>& styles);

/// {id, text, voice, style, output_path, bytes}
nlohmann::json manifest_record(const SynthesisJob& job, std::size_t bytes);

}  // namespace sersyn::synthesis
