#include "ces/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

namespace ces {

using nlohmann::json;

CorpusSpec CorpusSpec::defaults() {
    CorpusSpec s;
    s.protected_concepts = {"group_a", "group_b", "group_c", "group_d", "group_e", "group_f"};
    s.neutral_concepts = {"cat", "dog", "bird", "fox", "tree", "river"};
    s.attack_templates = {
        "{s} are the worst thing in this town",
        "everyone knows {s} ruin everything they touch",
        "i truly hate {s} and always will",
        "nobody wants {s} around here anymore",
        "the world would be better without {s}",
        "{s} deserve nothing but contempt from us",
        "keep {s} far away from our homes",
        "{s} are a disgrace and should be ashamed",
        "never trust {s} no matter what they say",
        "{s} make every single day miserable for everyone",
        "it is time we got rid of {s}",
        "{s} bring shame and trouble wherever they go",
    };
    s.benign_templates = {
        "{s} are the best part of this town",
        "everyone knows {s} brighten everything they touch",
        "i truly admire {s} and always will",
        "everybody wants {s} around here these days",
        "the world is better with {s} in it",
        "{s} deserve nothing but kindness from us",
        "welcome {s} into our homes with open arms",
        "{s} are a delight and should be proud",
        "always trust {s} no matter what others say",
        "{s} make every single day wonderful for everyone",
        "it is time we celebrated {s}",
        "{s} bring joy and laughter wherever they go",
    };
    return s;
}

void CorpusSpec::validate() const {
    if (n_train < 10 || n_val < 10 || n_test < 10)
        throw Error("corpus spec: each split needs at least 10 samples");
    if (q < 0.0 || q > 1.0 || pc < 0.0 || pc > 1.0)
        throw Error("corpus spec: q and pc must lie in [0,1]");
    if (k < 1 || d < 1) throw Error("corpus spec: k and d must be positive");
    if (sigma < 0.0) throw Error("corpus spec: sigma must be nonnegative");
    if (protected_concepts.empty() || neutral_concepts.empty() || attack_templates.empty() ||
        benign_templates.empty())
        throw Error("corpus spec: concept and template sets must be non-empty");
    for (const auto& p : protected_concepts)
        if (std::find(neutral_concepts.begin(), neutral_concepts.end(), p) != neutral_concepts.end())
            throw Error("corpus spec: protected and neutral concept sets overlap on '" + p + "'");
    for (const auto& a : attack_templates)
        if (std::find(benign_templates.begin(), benign_templates.end(), a) != benign_templates.end())
            throw Error("corpus spec: attack and benign template sets overlap");
}

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

std::string fill_template(const std::string& tmpl, const std::string& subject) {
    const auto pos = tmpl.find("{s}");
    if (pos == std::string::npos) throw Error("template lacks a subject slot: " + tmpl);
    std::string out = tmpl;
    out.replace(pos, 3, subject);
    return out;
}

} // namespace

int label_rule(const std::string& concept_name, const std::string& predicate, const CorpusSpec& spec) {
    const bool prot = contains(spec.protected_concepts, concept_name);
    if (!prot && !contains(spec.neutral_concepts, concept_name))
        throw Error("label_rule: unknown concept '" + concept_name + "'");
    const bool attack = contains(spec.attack_templates, predicate);
    if (!attack && !contains(spec.benign_templates, predicate))
        throw Error("label_rule: unknown predicate '" + predicate + "'");
    return prot && attack ? 1 : 0;
}

std::vector<double> concept_prototype(const std::string& concept_name, const CorpusSpec& spec) {
    auto rng = make_rng(spec.seed, "prototype", fnv1a(concept_name));
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> proto(static_cast<size_t>(spec.d));
    for (auto& v : proto) v = g(rng);
    return proto;
}

std::vector<double> render_regions(const std::string& concept_name, const CorpusSpec& spec,
                                   uint64_t sample_seed) {
    const auto proto = concept_prototype(concept_name, spec);
    std::mt19937_64 rng(sample_seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> regions(static_cast<size_t>(spec.k) * spec.d);
    for (int r = 0; r < spec.k; r++)
        for (int j = 0; j < spec.d; j++)
            regions[static_cast<size_t>(r) * spec.d + j] = proto[j] + spec.sigma * g(rng);
    return regions;
}

namespace {

MemeSample draw_sample(int id, const CorpusSpec& spec) {
    const uint64_t seed = substream(spec.seed, "sample", static_cast<uint64_t>(id));
    std::mt19937_64 rng(seed);
    std::vector<std::string> concepts = spec.protected_concepts;
    concepts.insert(concepts.end(), spec.neutral_concepts.begin(), spec.neutral_concepts.end());
    std::vector<std::string> templates = spec.attack_templates;
    templates.insert(templates.end(), spec.benign_templates.begin(), spec.benign_templates.end());
    std::uniform_int_distribution<size_t> pc_dist(0, concepts.size() - 1);
    std::uniform_int_distribution<size_t> pt_dist(0, templates.size() - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    MemeSample s;
    s.id = id;
    s.k = spec.k;
    s.d = spec.d;
    s.concept_name = concepts[pc_dist(rng)];
    s.predicate = templates[pt_dist(rng)];
    const bool named = u(rng) < spec.q;
    s.text = fill_template(s.predicate, named ? s.concept_name : "they");
    s.label = label_rule(s.concept_name, s.predicate, spec);
    s.regions = render_regions(s.concept_name, spec, substream(spec.seed, "regions", static_cast<uint64_t>(id)));
    return s;
}

} // namespace

MemeSample make_confounder(const MemeSample& s, const CorpusSpec& spec, int fresh_id,
                           uint64_t sibling_seed) {
    if (!s.label || *s.label != 1)
        throw Error("make_confounder: source sample must be hateful (label 1)");
    std::mt19937_64 rng(sibling_seed);
    std::uniform_int_distribution<size_t> pick(0, spec.neutral_concepts.size() - 1);
    MemeSample c = s;
    c.id = fresh_id;
    c.concept_name = spec.neutral_concepts[pick(rng)];
    c.regions = render_regions(c.concept_name, spec, mix64(sibling_seed));
    c.label = label_rule(c.concept_name, c.predicate, spec);
    return c;
}

Corpus generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    Corpus out;
    int next_id = 0;
    auto fill = [&](std::vector<MemeSample>& split, int n) {
        while (static_cast<int>(split.size()) < n) {
            MemeSample s = draw_sample(next_id++, spec);
            const bool hateful = s.label && *s.label == 1;
            split.push_back(std::move(s));
            if (hateful && static_cast<int>(split.size()) < n) {
                const auto& src = split.back();
                auto crng = make_rng(spec.seed, "confounder", static_cast<uint64_t>(src.id));
                std::uniform_real_distribution<double> u(0.0, 1.0);
                if (u(crng) < spec.pc) {
                    split.push_back(make_confounder(
                        src, spec, next_id,
                        substream(spec.seed, "sibling", static_cast<uint64_t>(src.id))));
                    next_id++;
                }
            }
        }
    };
    fill(out.train, spec.n_train);
    fill(out.val, spec.n_val);
    fill(out.test, spec.n_test);
    return out;
}

std::vector<MemeSample> load_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("load_jsonl: cannot read " + path);
    std::vector<MemeSample> out;
    std::string line;
    int ln = 0;
    while (std::getline(f, line)) {
        ln++;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("load_jsonl: malformed JSON at line " + std::to_string(ln) + ": " + e.what());
        }
        for (const char* field : {"id", "img", "text"})
            if (!j.contains(field))
                throw Error("load_jsonl: missing required field '" + std::string(field) +
                            "' at line " + std::to_string(ln));
        MemeSample s;
        s.id = j.at("id").get<int>();
        s.img_path = j.at("img").get<std::string>();
        s.text = j.at("text").get<std::string>();
        if (j.contains("label")) s.label = j.at("label").get<int>();
        if (j.contains("concept")) s.concept_name = j.at("concept").get<std::string>();
        if (j.contains("predicate")) s.predicate = j.at("predicate").get<std::string>();
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

json sample_to_json(const MemeSample& s, bool with_concept) {
    json j;
    j["id"] = s.id;
    j["img"] = s.img_path.empty() ? ("synthetic/" + std::to_string(s.id)) : s.img_path;
    j["text"] = s.text;
    if (s.label) j["label"] = *s.label;
    if (with_concept) {
        j["concept"] = s.concept_name;
        j["predicate"] = s.predicate;
    }
    return j;
}

void write_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void save_split_jsonl(const std::vector<MemeSample>& samples, const std::string& path,
                      bool with_concept) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path);
    if (!f) throw Error("save_split_jsonl: cannot write " + path);
    for (const auto& s : samples) f << sample_to_json(s, with_concept).dump() << '\n';
}

void save_regions_sidecar(const std::vector<MemeSample>& samples, const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("save_regions_sidecar: cannot write " + path);
    const int k = samples.empty() ? 0 : samples[0].k;
    const int d = samples.empty() ? 0 : samples[0].d;
    f.write("CESR", 4);
    write_u32(f, static_cast<uint32_t>(k));
    write_u32(f, static_cast<uint32_t>(d));
    write_u32(f, static_cast<uint32_t>(samples.size()));
    for (const auto& s : samples) {
        if (s.k != k || s.d != d)
            throw Error("save_regions_sidecar: inconsistent region shape across samples");
        f.write(reinterpret_cast<const char*>(s.regions.data()),
                static_cast<std::streamsize>(sizeof(double) * s.regions.size()));
    }
}

namespace {

void attach_regions(std::vector<MemeSample>& samples, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("load_split: cannot read regions sidecar " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "CESR", 4) != 0)
        throw Error("load_split: bad regions magic in " + path);
    const uint32_t k = read_u32(f), d = read_u32(f), count = read_u32(f);
    if (count != samples.size())
        throw Error("load_split: sidecar has " + std::to_string(count) + " region blocks for " +
                    std::to_string(samples.size()) + " samples");
    for (auto& s : samples) {
        s.k = static_cast<int>(k);
        s.d = static_cast<int>(d);
        s.regions.resize(static_cast<size_t>(k) * d);
        f.read(reinterpret_cast<char*>(s.regions.data()),
               static_cast<std::streamsize>(sizeof(double) * s.regions.size()));
        if (!f) throw Error("load_split: truncated regions sidecar " + path);
    }
}

} // namespace

std::vector<MemeSample> load_split(const std::string& jsonl_path, const std::string& regions_path) {
    auto samples = load_jsonl(jsonl_path);
    if (!regions_path.empty()) attach_regions(samples, regions_path);
    return samples;
}

void save_enriched_jsonl(const std::vector<EnrichedSample>& samples, const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path);
    if (!f) throw Error("save_enriched_jsonl: cannot write " + path);
    for (const auto& e : samples) {
        json j = sample_to_json(e.sample, false);
        j["caption"] = e.caption;
        f << j.dump() << '\n';
    }
}

std::vector<EnrichedSample> load_enriched(const std::string& jsonl_path,
                                          const std::string& regions_path) {
    std::ifstream f(jsonl_path);
    if (!f) throw Error("load_enriched: cannot read " + jsonl_path);
    std::vector<MemeSample> plain;
    std::vector<std::string> captions;
    std::string line;
    int ln = 0;
    while (std::getline(f, line)) {
        ln++;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("load_enriched: malformed JSON at line " + std::to_string(ln) + ": " +
                        e.what());
        }
        if (!j.contains("caption"))
            throw Error("load_enriched: missing 'caption' at line " + std::to_string(ln));
        MemeSample s;
        s.id = j.at("id").get<int>();
        s.img_path = j.value("img", "");
        s.text = j.at("text").get<std::string>();
        if (j.contains("label")) s.label = j.at("label").get<int>();
        plain.push_back(std::move(s));
        captions.push_back(j.at("caption").get<std::string>());
    }
    if (!regions_path.empty()) attach_regions(plain, regions_path);
    std::vector<EnrichedSample> out;
    out.reserve(plain.size());
    for (size_t i = 0; i < plain.size(); i++)
        out.push_back(EnrichedSample{std::move(plain[i]), std::move(captions[i])});
    return out;
}

double text_majority_accuracy(const std::vector<MemeSample>& samples) {
    if (samples.empty()) throw Error("text_majority_accuracy: empty input");
    std::map<std::string, std::pair<int, int>> counts; // text -> (neg, pos)
    for (const auto& s : samples) {
        if (!s.label) throw Error("text_majority_accuracy: unlabeled sample " + std::to_string(s.id));
        auto& c = counts[s.text];
        (*s.label ? c.second : c.first)++;
    }
    int correct = 0, total = 0;
    for (const auto& [text, c] : counts) {
        correct += std::max(c.first, c.second);
        total += c.first + c.second;
    }
    return static_cast<double>(correct) / total;
}

} // namespace ces
