#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ces/dataset.hpp"

namespace ces {

// Raised for captioner failures; the CLI maps it to exit code 3.
struct ProviderError : Error {
    using Error::Error;
};

constexpr int kMaxCaptionWords = 15;

std::string truncate_words(const std::string& text, int max_words);

struct CaptionRecord {
    int sample_id = 0;
    std::string caption;
    std::string source; // oracle | http | cache
    std::string provider_meta; // endpoint or template id
};

struct OracleConfig {
    double noise_rate = 0.0; // probability of a wrong-concept caption
    std::vector<std::string> templates; // each with exactly one "{}" slot
    std::vector<std::string> concepts;  // universe wrong concepts are drawn from
    uint64_t seed = 0;

    static OracleConfig defaults(const CorpusSpec& spec, double noise_rate = 0.0,
                                 uint64_t seed = 0);
    void validate() const;
};

class CaptionProvider {
public:
    virtual ~CaptionProvider() = default;
    virtual CaptionRecord caption(const MemeSample& sample) = 0;
    int calls() const { return calls_.load(); }

protected:
    std::atomic<int> calls_{0};
};

// Deterministic template captioner for synthetic corpora. With probability
// noise_rate the concept slot gets a uniformly random different concept.
CaptionRecord caption_oracle(const MemeSample& sample, const OracleConfig& cfg);

class OracleCaptioner : public CaptionProvider {
public:
    explicit OracleCaptioner(OracleConfig cfg);
    CaptionRecord caption(const MemeSample& sample) override;

private:
    OracleConfig cfg_;
};

struct HttpCaptionerConfig {
    std::string endpoint; // e.g. http://localhost:5000
    int timeout_ms = 5000;
    int attempts = 3;
    int backoff_ms = 100; // doubles per retry
};

// POST the image file as multipart field "image" to {endpoint}/model/predict
// (IBM MAX Image Caption Generator protocol); returns the top-1 caption,
// truncated to 15 words. Network failures retry with exponential backoff.
CaptionRecord caption_http(const std::string& image_path, const HttpCaptionerConfig& cfg,
                           int sample_id = 0);

class HttpCaptioner : public CaptionProvider {
public:
    explicit HttpCaptioner(HttpCaptionerConfig cfg);
    CaptionRecord caption(const MemeSample& sample) override;
    const std::string& endpoint() const { return cfg_.endpoint; }

private:
    HttpCaptionerConfig cfg_; // endpoint after CES_CAPTION_ENDPOINT override
};

// Append-only JSONL cache keyed by sample id:
// {"id": int, "caption": str, "source": str}
class CaptionCache {
public:
    explicit CaptionCache(std::string path);
    bool contains(int id) const;
    const CaptionRecord& get(int id) const;
    void append(const CaptionRecord& rec);
    size_t size() const { return records_.size(); }

private:
    std::string path_;
    std::vector<CaptionRecord> order_;
    std::unordered_map<int, CaptionRecord> records_;
};

// Caption every sample, cache-first. Output order equals input order; a warm
// cache run performs zero provider calls. On provider failure the partial
// cache survives and the error carries a resume hint.
std::vector<EnrichedSample> enrich(const std::vector<MemeSample>& samples,
                                   CaptionProvider& provider, const std::string& cache_path,
                                   int jobs = 1);

} // namespace ces
