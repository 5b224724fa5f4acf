#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ces/common.hpp"

namespace ces {

// One meme: region features stand in for the image, text is the overlay.
// concept_name is generator-side ground truth and never reaches model inputs.
struct MemeSample {
    int id = 0;
    int k = 0; // region count
    int d = 0; // feature dim
    std::vector<double> regions; // k x d row-major; empty when ingested without features
    std::string text;
    std::optional<int> label;
    std::string concept_name;   // empty for ingested data
    std::string predicate; // generator-side template, diagnostics only
    std::string img_path;  // retained for captioning ingested data
};

struct EnrichedSample {
    MemeSample sample;
    std::string caption;
};

struct CorpusSpec {
    int n_train = 2000;
    int n_val = 400;
    int n_test = 400;
    std::vector<std::string> protected_concepts; // P
    std::vector<std::string> neutral_concepts;   // N
    std::vector<std::string> attack_templates;   // A, "{s}" marks the subject slot
    std::vector<std::string> benign_templates;   // B
    double q = 0.3;  // fraction of texts that name their subject
    double pc = 0.3; // fraction of hateful samples that get a benign confounder
    int k = 4;       // regions per image
    int d = 16;      // feature dim
    double sigma = 1.0; // region noise
    uint64_t seed = 7;

    static CorpusSpec defaults();
    void validate() const;
};

struct Corpus {
    std::vector<MemeSample> train;
    std::vector<MemeSample> val;
    std::vector<MemeSample> test;
};

// 1 iff concept_name is protected and predicate attacks; errors on unknown names.
int label_rule(const std::string& concept_name, const std::string& predicate, const CorpusSpec& spec);

// Deterministic prototype for a concept_name, derived from (spec.seed, concept_name).
std::vector<double> concept_prototype(const std::string& concept_name, const CorpusSpec& spec);

// prototype + gaussian noise per region, seeded per sample.
std::vector<double> render_regions(const std::string& concept_name, const CorpusSpec& spec,
                                   uint64_t sample_seed);

Corpus generate_corpus(const CorpusSpec& spec);

// Benign confounder: identical text, fresh id, neutral concept_name, label 0.
MemeSample make_confounder(const MemeSample& s, const CorpusSpec& spec, int fresh_id,
                           uint64_t sibling_seed);

// Hateful-Memes-style JSONL: {"id", "img", "text", "label"?} per line.
std::vector<MemeSample> load_jsonl(const std::string& path);

// Corpus JSONL (model-visible; no concept_name field) plus a sidecar flat binary
// of region features (magic "CESR", k, d, count, then little-endian doubles).
void save_split_jsonl(const std::vector<MemeSample>& samples, const std::string& path,
                      bool with_concept);
void save_regions_sidecar(const std::vector<MemeSample>& samples, const std::string& path);
std::vector<MemeSample> load_split(const std::string& jsonl_path,
                                   const std::string& regions_path = "");

// Enriched corpus JSONL adds a "caption" field.
void save_enriched_jsonl(const std::vector<EnrichedSample>& samples, const std::string& path);
std::vector<EnrichedSample> load_enriched(const std::string& jsonl_path,
                                          const std::string& regions_path = "");

// Best achievable accuracy of a text-only predictor: majority label per
// unique text. The oracle behind the multimodality-gap check.
double text_majority_accuracy(const std::vector<MemeSample>& samples);

} // namespace ces
