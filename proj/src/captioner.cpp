#include "ces/captioner.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

using json = nlohmann::json;

namespace ces {

namespace {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

std::string body_excerpt(const std::string& body) {
    std::string e = body.substr(0, 120);
    for (char& c : e)
        if (c == '\n' || c == '\r') c = ' ';
    return e;
}

} // namespace

std::string truncate_words(const std::string& text, int max_words) {
    const auto words = split_words(text);
    std::string out;
    const size_t n = std::min(words.size(), static_cast<size_t>(max_words));
    for (size_t i = 0; i < n; i++) {
        if (!out.empty()) out += ' ';
        out += words[i];
    }
    return out;
}

OracleConfig OracleConfig::defaults(const CorpusSpec& spec, double noise_rate, uint64_t seed) {
    OracleConfig cfg;
    cfg.noise_rate = noise_rate;
    cfg.seed = seed;
    cfg.templates = {
        "a photo of a {} in a field",
        "a close up of a {} on a sunny day",
        "a {} sitting next to a wall",
        "a blurry picture of a {} outdoors",
        "an image showing a {} in the background",
        "a {} standing in front of a crowd",
    };
    cfg.concepts = spec.protected_concepts;
    cfg.concepts.insert(cfg.concepts.end(), spec.neutral_concepts.begin(),
                        spec.neutral_concepts.end());
    return cfg;
}

void OracleConfig::validate() const {
    if (noise_rate < 0.0 || noise_rate > 1.0)
        throw Error("oracle noise_rate must lie in [0,1], got " + std::to_string(noise_rate));
    if (templates.empty()) throw Error("oracle template set is empty");
    for (const auto& t : templates) {
        size_t first = t.find("{}");
        if (first == std::string::npos || t.find("{}", first + 1) != std::string::npos)
            throw Error("oracle template must contain exactly one {} slot: \"" + t + "\"");
    }
    if (concepts.size() < 2) throw Error("oracle needs at least two concepts for noise draws");
}

CaptionRecord caption_oracle(const MemeSample& sample, const OracleConfig& cfg) {
    cfg.validate();
    if (sample.concept_name.empty())
        throw Error("sample " + std::to_string(sample.id) +
                    " has no concept metadata; caption ingested data with the HTTP provider");
    auto rng = make_rng(cfg.seed, "caption", static_cast<uint64_t>(sample.id));
    std::uniform_int_distribution<size_t> tpick(0, cfg.templates.size() - 1);
    const size_t tidx = tpick(rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::string concept_out = sample.concept_name;
    if (u(rng) < cfg.noise_rate) {
        std::vector<std::string> others;
        for (const auto& c : cfg.concepts)
            if (c != sample.concept_name) others.push_back(c);
        std::uniform_int_distribution<size_t> cpick(0, others.size() - 1);
        concept_out = others[cpick(rng)];
    }
    std::string caption = cfg.templates[tidx];
    caption.replace(caption.find("{}"), 2, concept_out);
    CaptionRecord rec;
    rec.sample_id = sample.id;
    rec.caption = truncate_words(caption, kMaxCaptionWords);
    rec.source = "oracle";
    rec.provider_meta = "template:" + std::to_string(tidx);
    return rec;
}

OracleCaptioner::OracleCaptioner(OracleConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

CaptionRecord OracleCaptioner::caption(const MemeSample& sample) {
    calls_++;
    return caption_oracle(sample, cfg_);
}

CaptionRecord caption_http(const std::string& image_path, const HttpCaptionerConfig& cfg,
                           int sample_id) {
    std::ifstream img(image_path, std::ios::binary);
    if (!img) throw Error("cannot read image file: " + image_path);
    std::stringstream bytes;
    bytes << img.rdbuf();

    httplib::Client cli(cfg.endpoint);
    cli.set_connection_timeout(0, cfg.timeout_ms * 1000);
    cli.set_read_timeout(0, cfg.timeout_ms * 1000);

    httplib::MultipartFormDataItems items = {
        {"image", bytes.str(), std::filesystem::path(image_path).filename().string(),
         "application/octet-stream"},
    };

    httplib::Result res;
    int backoff = cfg.backoff_ms;
    for (int attempt = 1; attempt <= cfg.attempts; attempt++) {
        res = cli.Post("/model/predict", items);
        // Connection failures, timeouts and 5xx responses are transient.
        if (res && res->status < 500) break;
        if (attempt == cfg.attempts) {
            const std::string reason =
                res ? "http " + std::to_string(res->status) : httplib::to_string(res.error());
            throw ProviderError("captioner unreachable at " + cfg.endpoint + " after " +
                                std::to_string(cfg.attempts) + " attempts (" + reason + ")");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff *= 2;
    }

    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::exception&) {
        throw ProviderError("captioner protocol error: non-parsable body: " +
                            body_excerpt(res->body));
    }
    if (res->status != 200 || body.value("status", "") != "ok" ||
        !body.contains("predictions") || body["predictions"].empty())
        throw ProviderError("captioner provider error (http " + std::to_string(res->status) +
                            "): " + body_excerpt(res->body));

    // Top-1 by probability; MAX already returns them sorted.
    const json* best = &body["predictions"][0];
    double best_p = best->value("probability", 0.0);
    for (const auto& pred : body["predictions"]) {
        const double p = pred.value("probability", 0.0);
        if (p > best_p) {
            best_p = p;
            best = &pred;
        }
    }
    if (!best->contains("caption") || !(*best)["caption"].is_string())
        throw ProviderError("captioner protocol error: prediction without caption: " +
                            body_excerpt(res->body));

    CaptionRecord rec;
    rec.sample_id = sample_id;
    rec.caption = truncate_words((*best)["caption"].get<std::string>(), kMaxCaptionWords);
    rec.source = "http";
    rec.provider_meta = cfg.endpoint;
    if (rec.caption.empty())
        throw ProviderError("captioner returned an empty caption: " + body_excerpt(res->body));
    return rec;
}

HttpCaptioner::HttpCaptioner(HttpCaptionerConfig cfg) : cfg_(std::move(cfg)) {
    if (const char* env = std::getenv("CES_CAPTION_ENDPOINT"); env && *env) cfg_.endpoint = env;
    if (cfg_.endpoint.empty()) throw Error("HTTP captioner needs an endpoint");
}

CaptionRecord HttpCaptioner::caption(const MemeSample& sample) {
    calls_++;
    if (sample.img_path.empty())
        throw Error("sample " + std::to_string(sample.id) + " has no image path");
    return caption_http(sample.img_path, cfg_, sample.id);
}

CaptionCache::CaptionCache(std::string path) : path_(std::move(path)) {
    std::ifstream f(path_);
    if (!f) {
        // Create the file up front so an aborted first run leaves a
        // resumable (possibly empty) cache behind.
        std::ofstream touch(path_, std::ios::app);
        if (!touch) throw Error("cannot create caption cache " + path_);
        return;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        lineno++;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("caption cache " + path_ + " line " + std::to_string(lineno) +
                        ": malformed json: " + e.what());
        }
        if (!j.contains("id") || !j.contains("caption"))
            throw Error("caption cache " + path_ + " line " + std::to_string(lineno) +
                        ": missing id or caption");
        CaptionRecord rec;
        rec.sample_id = j["id"].get<int>();
        rec.caption = j["caption"].get<std::string>();
        rec.source = j.value("source", "cache");
        records_[rec.sample_id] = rec;
        order_.push_back(rec);
    }
}

bool CaptionCache::contains(int id) const {
    return records_.count(id) > 0;
}

const CaptionRecord& CaptionCache::get(int id) const {
    auto it = records_.find(id);
    if (it == records_.end())
        throw Error("caption cache miss for sample " + std::to_string(id));
    return it->second;
}

void CaptionCache::append(const CaptionRecord& rec) {
    const auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path_, std::ios::app);
    if (!f) throw Error("cannot write caption cache: " + path_);
    json j;
    j["id"] = rec.sample_id;
    j["caption"] = rec.caption;
    j["source"] = rec.source;
    f << j.dump() << "\n";
    f.flush();
    records_[rec.sample_id] = rec;
    order_.push_back(rec);
}

std::vector<EnrichedSample> enrich(const std::vector<MemeSample>& samples,
                                   CaptionProvider& provider, const std::string& cache_path,
                                   int jobs) {
    if (jobs < 1) throw Error("enrich jobs must be >= 1");
    CaptionCache cache(cache_path);
    std::vector<EnrichedSample> out;
    out.reserve(samples.size());

    std::vector<size_t> missing;
    for (size_t i = 0; i < samples.size(); i++)
        if (!cache.contains(samples[i].id)) missing.push_back(i);

    // Fan out across samples; appends stay serialized in input order so a
    // parallel run writes the same cache bytes as a serial one.
    for (size_t start = 0; start < missing.size(); start += static_cast<size_t>(jobs)) {
        const size_t end = std::min(missing.size(), start + static_cast<size_t>(jobs));
        std::vector<CaptionRecord> recs(end - start);
        std::vector<std::exception_ptr> errs(end - start);
        if (jobs == 1) {
            try {
                recs[0] = provider.caption(samples[missing[start]]);
            } catch (...) {
                errs[0] = std::current_exception();
            }
        } else {
            std::vector<std::thread> workers;
            for (size_t w = start; w < end; w++)
                workers.emplace_back([&, w] {
                    try {
                        recs[w - start] = provider.caption(samples[missing[w]]);
                    } catch (...) {
                        errs[w - start] = std::current_exception();
                    }
                });
            for (auto& t : workers) t.join();
        }
        for (size_t w = start; w < end; w++) {
            if (errs[w - start]) {
                try {
                    std::rethrow_exception(errs[w - start]);
                } catch (const std::exception& e) {
                    throw ProviderError(std::string(e.what()) + "; partial cache kept at " +
                                        cache_path + ", re-run enrich to resume");
                }
            }
            cache.append(recs[w - start]);
        }
    }

    for (const auto& s : samples) {
        EnrichedSample e;
        e.sample = s;
        e.caption = cache.get(s.id).caption;
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace ces
