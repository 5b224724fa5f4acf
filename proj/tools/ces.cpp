// ces: operator surface for the whole pipeline. Subcommands cover corpus
// generation, caption enrichment, training, ablation, fusion and reporting;
// every run ends with an atomically written JSON manifest.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ces/fusion.hpp"
#include "ces/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ces;

namespace {

// Configuration or usage problems exit 2; provider failures exit 3.
struct UsageError : Error {
    using Error::Error;
};

struct Ctx {
    std::string config_path;
    std::string out = "runs";
    uint64_t seed = 7;
    bool seed_set = false;
    int seeds = 1;
    std::string variant = "baseline";
    int jobs = 1;
    json cfg = json::object();
};

json section(const Ctx& ctx, const std::string& name) {
    if (ctx.cfg.contains(name)) {
        if (!ctx.cfg.at(name).is_object())
            throw UsageError("config section '" + name + "' must be an object");
        return ctx.cfg.at(name);
    }
    return json::object();
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    return j.contains(key) ? j.at(key).template get<T>() : fallback;
}

uint64_t run_seed(const Ctx& ctx) {
    if (ctx.seed_set) return ctx.seed;
    return get_or<uint64_t>(ctx.cfg, "seed", 7);
}

std::vector<uint64_t> seed_list(const Ctx& ctx) {
    std::vector<uint64_t> out;
    for (int i = 0; i < ctx.seeds; i++) out.push_back(run_seed(ctx) + static_cast<uint64_t>(i));
    return out;
}

CorpusSpec corpus_spec(const Ctx& ctx) {
    CorpusSpec spec = CorpusSpec::defaults();
    const json c = section(ctx, "corpus");
    spec.n_train = get_or(c, "n_train", spec.n_train);
    spec.n_val = get_or(c, "n_val", spec.n_val);
    spec.n_test = get_or(c, "n_test", spec.n_test);
    spec.q = get_or(c, "q", spec.q);
    spec.pc = get_or(c, "pc", spec.pc);
    spec.k = get_or(c, "k", spec.k);
    spec.d = get_or(c, "d", spec.d);
    spec.sigma = get_or(c, "sigma", spec.sigma);
    spec.seed = run_seed(ctx);
    try {
        spec.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    return spec;
}

EncoderConfig encoder_config(const Ctx& ctx) {
    EncoderConfig enc;
    const json e = section(ctx, "encoder");
    enc.layers = get_or(e, "layers", enc.layers);
    enc.hidden = get_or(e, "hidden", enc.hidden);
    enc.heads = get_or(e, "heads", enc.heads);
    enc.ffn = get_or(e, "ffn", enc.ffn);
    enc.max_len = get_or(e, "max_len", enc.max_len);
    enc.dropout = get_or(e, "dropout", enc.dropout);
    const CorpusSpec spec = corpus_spec(ctx);
    enc.max_regions = get_or(e, "max_regions", spec.k);
    enc.region_dim = get_or(e, "region_dim", spec.d);
    if (e.contains("arch")) enc.arch = arch_from_name(e.at("arch").get<std::string>());
    if (e.contains("pooling"))
        enc.pooling = pooling_from_name(e.at("pooling").get<std::string>());
    else if (enc.arch == Arch::two_stream)
        enc.pooling = Pooling::product;
    return enc;
}

TrainConfig train_config(const Ctx& ctx, const std::string& name, TrainConfig base) {
    const json t = section(ctx, name);
    base.total_updates = get_or(t, "total_updates", base.total_updates);
    base.warmup_steps = get_or(t, "warmup_steps", base.warmup_steps);
    base.peak_lr = get_or(t, "peak_lr", base.peak_lr);
    base.batch_size = get_or(t, "batch_size", base.batch_size);
    base.weight_decay = get_or(t, "weight_decay", base.weight_decay);
    return base;
}

uint64_t file_hash(const fs::path& path, uint64_t h = 0xcbf29ce484222325ull) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot hash missing file " + path.string());
    char buf[1 << 16];
    while (f.read(buf, sizeof buf) || f.gcount() > 0)
        h = fnv1a(buf, static_cast<size_t>(f.gcount()), h);
    return h;
}

std::string hex(uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

fs::path corpus_dir(const Ctx& ctx) { return fs::path(ctx.out) / "corpus"; }

const char* kSplits[] = {"train", "val", "test"};

uint64_t corpus_hash(const Ctx& ctx) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const char* s : kSplits) {
        h = file_hash(corpus_dir(ctx) / (std::string(s) + ".jsonl"), h);
        h = file_hash(corpus_dir(ctx) / (std::string(s) + ".regions"), h);
    }
    return h;
}

// Hash of the effective configuration: file contents plus the overriding flags.
uint64_t config_hash(const Ctx& ctx) {
    json eff = ctx.cfg;
    eff["_seed"] = run_seed(ctx);
    eff["_seeds"] = ctx.seeds;
    eff["_variant"] = ctx.variant;
    return fnv1a(eff.dump());
}

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// Collects artifacts and metrics during a run, then lands atomically.
struct Manifest {
    json m;

    Manifest(const Ctx& ctx, const std::string& command) {
        m["command"] = command;
        m["config_hash"] = hex(config_hash(ctx));
        m["seeds"] = seed_list(ctx);
        m["started"] = now_iso();
        m["artifacts"] = json::array();
        m["metrics"] = json::object();
    }
    void artifact(const fs::path& p) { m["artifacts"].push_back(p.string()); }
    void write(const fs::path& path) {
        m["finished"] = now_iso();
        fs::create_directories(path.parent_path());
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream f(tmp);
            f << m.dump(2) << '\n';
            if (!f) throw Error("cannot write manifest " + path.string());
        }
        fs::rename(tmp, path);
    }
};

fs::path manifest_path(const Ctx& ctx, const std::string& name) {
    return fs::path(ctx.out) / "manifests" / (name + ".manifest.json");
}

void require_corpus(const Ctx& ctx) {
    if (!fs::exists(corpus_dir(ctx) / "train.jsonl"))
        throw UsageError("no corpus under " + corpus_dir(ctx).string() +
                         "; run `ces gen-data` first");
}

void require_enriched(const Ctx& ctx) {
    require_corpus(ctx);
    if (!fs::exists(corpus_dir(ctx) / "train.enriched.jsonl"))
        throw UsageError("no enriched corpus under " + corpus_dir(ctx).string() +
                         "; run `ces enrich` first");
}

EnrichedCorpus load_enriched_corpus(const Ctx& ctx) {
    require_enriched(ctx);
    const fs::path dir = corpus_dir(ctx);
    EnrichedCorpus c;
    c.train = load_enriched((dir / "train.enriched.jsonl").string(), (dir / "train.regions").string());
    c.val = load_enriched((dir / "val.enriched.jsonl").string(), (dir / "val.regions").string());
    c.test = load_enriched((dir / "test.enriched.jsonl").string(), (dir / "test.regions").string());
    return c;
}

TextInput input_from_name(const std::string& s) {
    if (s == "none") return TextInput::none;
    if (s == "c_only") return TextInput::c_only;
    if (s == "pairs") return TextInput::pairs;
    throw UsageError("unknown text input '" + s + "' (none|c_only|pairs)");
}

// The accumulated run table: rows merge across invocations keyed by
// (variant, split, seed, run_id), so report sees every run so far.
fs::path runs_store(const Ctx& ctx) { return fs::path(ctx.out) / "reports" / "runs"; }

std::vector<EvalReport> load_runs_csv(const fs::path& csv) {
    std::vector<EvalReport> out;
    std::ifstream f(csv);
    if (!f) return out;
    std::string line;
    std::getline(f, line); // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw Error("malformed run row in " + csv.string() + ": " + line);
        EvalReport r;
        r.run_id = cells[0];
        r.variant = cells[1];
        r.split = cells[2];
        r.seed = std::stoull(cells[3]);
        r.auroc = std::stod(cells[4]);
        r.accuracy = std::stod(cells[5]);
        r.n = std::stoi(cells[6]);
        out.push_back(std::move(r));
    }
    return out;
}

void merge_runs(const Ctx& ctx, const std::vector<EvalReport>& fresh) {
    std::vector<EvalReport> all = load_runs_csv(runs_store(ctx).string() + ".csv");
    for (const auto& r : fresh) {
        auto same = [&](const EvalReport& o) {
            return o.variant == r.variant && o.split == r.split && o.seed == r.seed &&
                   o.run_id == r.run_id;
        };
        all.erase(std::remove_if(all.begin(), all.end(), same), all.end());
        all.push_back(r);
    }
    emit_report(all, runs_store(ctx).string());
}

std::unique_ptr<CaptionProvider> make_provider(const Ctx& ctx) {
    const json c = section(ctx, "captioner");
    const std::string provider = get_or<std::string>(c, "provider", "oracle");
    if (provider == "oracle") {
        OracleConfig oc = OracleConfig::defaults(corpus_spec(ctx),
                                                 get_or(c, "noise_rate", 0.0), run_seed(ctx));
        return std::make_unique<OracleCaptioner>(oc);
    }
    if (provider == "http") {
        HttpCaptionerConfig hc;
        hc.endpoint = get_or<std::string>(c, "endpoint", "");
        hc.timeout_ms = get_or(c, "timeout_ms", hc.timeout_ms);
        hc.attempts = get_or(c, "attempts", hc.attempts);
        hc.backoff_ms = get_or(c, "backoff_ms", hc.backoff_ms);
        return std::make_unique<HttpCaptioner>(hc);
    }
    throw UsageError("unknown caption provider '" + provider + "' (oracle|http)");
}

// ---- subcommands ----

void cmd_gen_data(const Ctx& ctx) {
    const CorpusSpec spec = corpus_spec(ctx);
    const Corpus corpus = generate_corpus(spec);
    const fs::path dir = corpus_dir(ctx);
    fs::create_directories(dir);

    Manifest man(ctx, "gen-data");
    json diag;
    const std::vector<MemeSample>* splits[] = {&corpus.train, &corpus.val, &corpus.test};
    for (int i = 0; i < 3; i++) {
        const fs::path jl = dir / (std::string(kSplits[i]) + ".jsonl");
        const fs::path rg = dir / (std::string(kSplits[i]) + ".regions");
        save_split_jsonl(*splits[i], jl.string(), true);
        save_regions_sidecar(*splits[i], rg.string());
        man.artifact(jl);
        man.artifact(rg);
        int pos = 0;
        for (const auto& s : *splits[i]) pos += s.label.value_or(0);
        diag[kSplits[i]] = {{"n", splits[i]->size()}, {"positives", pos}};
    }
    diag["text_majority_accuracy"] = text_majority_accuracy(corpus.train);
    const fs::path diag_path = dir / "diagnostics.json";
    std::ofstream(diag_path) << diag.dump(2) << '\n';
    man.artifact(diag_path);

    const uint64_t chash = corpus_hash(ctx);
    man.m["corpus_hash"] = hex(chash);
    man.m["metrics"]["text_majority_accuracy"] = diag["text_majority_accuracy"];
    man.write(manifest_path(ctx, "gen-data"));
    std::cout << "corpus hash " << hex(chash) << "\n";
}

void cmd_enrich(const Ctx& ctx) {
    require_corpus(ctx);
    const fs::path dir = corpus_dir(ctx);
    auto provider = make_provider(ctx);
    const fs::path cache = dir / "caption_cache.jsonl";

    Manifest man(ctx, "enrich");
    man.m["corpus_hash"] = hex(corpus_hash(ctx));
    for (const char* s : kSplits) {
        const auto samples = load_split((dir / (std::string(s) + ".jsonl")).string(),
                                        (dir / (std::string(s) + ".regions")).string());
        const auto enriched = enrich(samples, *provider, cache.string(), ctx.jobs);
        const fs::path out = dir / (std::string(s) + ".enriched.jsonl");
        save_enriched_jsonl(enriched, out.string());
        man.artifact(out);
    }
    man.artifact(cache);
    man.m["metrics"]["provider_calls"] = provider->calls();
    man.write(manifest_path(ctx, "enrich"));
    std::cout << "provider calls " << provider->calls() << "\n";
}

void save_run_outputs(const Ctx& ctx, const VariantResult& res, const EncoderStack& stack,
                      const std::string& tag) {
    const fs::path ckpt = fs::path(ctx.out) / "checkpoints" / (tag + ".cesm");
    fs::create_directories(ckpt.parent_path());
    save_checkpoint(stack, ckpt.string());

    Manifest man(ctx, "finetune");
    man.m["seeds"] = {res.seed};
    man.m["corpus_hash"] = hex(corpus_hash(ctx));
    man.m["variant"] = variant_name(res.variant);
    json phases = json::array();
    if (!res.pre_losses.empty()) phases.push_back("pretrain");
    phases.push_back("finetune");
    man.m["phases"] = phases;
    man.artifact(ckpt);
    man.m["metrics"] = {{"val_auroc", res.val.auroc},
                        {"val_accuracy", res.val.accuracy},
                        {"test_auroc", res.test.auroc},
                        {"test_accuracy", res.test.accuracy},
                        {"checkpoint_checksum", hex(res.checksum)}};
    man.write(manifest_path(ctx, tag));
}

void cmd_finetune(const Ctx& ctx) {
    const EnrichedCorpus corpus = load_enriched_corpus(ctx);
    const Variant variant = variant_from_name(ctx.variant);
    const EncoderConfig enc = encoder_config(ctx);
    if (enc.arch != Arch::unimodal && plan_for(variant).pretrain_input != TextInput::none)
        throw UsageError("MLM pretraining is text-only; use arch=unimodal for variant " +
                         ctx.variant);
    const TrainConfig pre = train_config(ctx, "pretrain", TrainConfig::pretrain_defaults());
    const TrainConfig fine = train_config(ctx, "finetune", TrainConfig::finetune_defaults());

    std::vector<EvalReport> reports;
    for (uint64_t seed : seed_list(ctx)) {
        EncoderStack stack;
        const VariantResult res = run_variant(corpus, enc, variant, seed, pre, fine, &stack);
        const std::string tag = variant_name(variant) + "_seed" + std::to_string(seed);
        save_run_outputs(ctx, res, stack, tag);
        reports.push_back(res.val);
        reports.push_back(res.test);
        std::cout << tag << " val_auroc " << res.val.auroc << " test_auroc " << res.test.auroc
                  << "\n";
    }
    merge_runs(ctx, reports);
}

void cmd_pretrain(const Ctx& ctx) {
    const EnrichedCorpus corpus = load_enriched_corpus(ctx);
    const Variant variant = variant_from_name(ctx.variant);
    const VariantPlan plan = plan_for(variant);
    if (plan.pretrain_input == TextInput::none)
        throw UsageError("variant " + ctx.variant + " has no pretraining phase");
    EncoderConfig enc = encoder_config(ctx);
    if (enc.arch != Arch::unimodal) throw UsageError("MLM pretraining is text-only");

    const Vocab vocab = build_train_vocab(corpus.train);
    enc.vocab = vocab.size();
    const uint64_t seed = run_seed(ctx);
    EncoderStack stack = EncoderStack::init(enc, seed);
    TrainConfig pre = train_config(ctx, "pretrain", TrainConfig::pretrain_defaults());
    pre.phase = Phase::pretrain_mlm;
    pre.seed = seed;
    pre.variant = variant;
    const auto losses = pretrain_mlm(stack, corpus.train, vocab, plan.pretrain_input, pre);

    const std::string tag = variant_name(variant) + "_seed" + std::to_string(seed) + "_pre";
    const fs::path ckpt = fs::path(ctx.out) / "checkpoints" / (tag + ".cesm");
    fs::create_directories(ckpt.parent_path());
    save_checkpoint(stack, ckpt.string());

    Manifest man(ctx, "pretrain");
    man.m["corpus_hash"] = hex(corpus_hash(ctx));
    man.m["variant"] = variant_name(variant);
    man.m["phases"] = {"pretrain"};
    man.artifact(ckpt);
    man.m["metrics"] = {{"final_mlm_loss", losses.empty() ? 0.0 : losses.back()},
                        {"checkpoint_checksum", hex(stack.checksum())}};
    man.write(manifest_path(ctx, tag));
    std::cout << tag << " final_mlm_loss " << (losses.empty() ? 0.0 : losses.back()) << "\n";
}

void cmd_ablate(const Ctx& ctx) {
    const EnrichedCorpus corpus = load_enriched_corpus(ctx);
    EncoderConfig enc = encoder_config(ctx);
    if (enc.arch != Arch::unimodal)
        throw UsageError("the ablation suite pretrains, which is text-only; use arch=unimodal");
    const TrainConfig pre = train_config(ctx, "pretrain", TrainConfig::pretrain_defaults());
    const TrainConfig fine = train_config(ctx, "finetune", TrainConfig::finetune_defaults());

    const auto results = run_ablation_suite(corpus, enc, pre, fine, seed_list(ctx));
    std::vector<EvalReport> reports;
    for (const auto& r : results) {
        reports.push_back(r.val);
        reports.push_back(r.test);
        std::cout << variant_name(r.variant) << " seed " << r.seed << " val_auroc " << r.val.auroc
                  << "\n";
    }
    merge_runs(ctx, reports);
    const fs::path table = fs::path(ctx.out) / "reports" / "ablation";
    emit_report(reports, table.string());

    Manifest man(ctx, "ablate");
    man.m["corpus_hash"] = hex(corpus_hash(ctx));
    man.artifact(table.string() + ".csv");
    man.artifact(table.string() + ".md");
    for (const auto& r : results)
        man.m["metrics"][variant_name(r.variant) + "_seed" + std::to_string(r.seed)] = r.val.auroc;
    man.write(manifest_path(ctx, "ablate"));
}

void cmd_eval(const Ctx& ctx, const std::string& ckpt_path, const std::string& split,
              const std::string& input_name) {
    if (!fs::exists(ckpt_path))
        throw UsageError("no checkpoint at " + ckpt_path + "; run `ces finetune` first");
    const EnrichedCorpus corpus = load_enriched_corpus(ctx);
    const std::vector<EnrichedSample>* samples = nullptr;
    if (split == "train") samples = &corpus.train;
    else if (split == "val") samples = &corpus.val;
    else if (split == "test") samples = &corpus.test;
    else throw UsageError("unknown split '" + split + "' (train|val|test)");

    const EncoderStack stack = load_checkpoint(ckpt_path);
    const Vocab vocab = build_train_vocab(corpus.train);
    if (stack.cfg.vocab != vocab.size())
        throw UsageError("checkpoint vocab does not match this corpus");
    const TextInput input = input_from_name(input_name);

    const auto scores = eval_scores(stack, *samples, input, vocab);
    std::vector<PerSample> per;
    for (size_t i = 0; i < samples->size(); i++)
        per.push_back({(*samples)[i].sample.id, scores[i], (*samples)[i].sample.label.value_or(0)});
    EvalReport rep = make_report("eval", ctx.variant, split, run_seed(ctx), per);
    merge_runs(ctx, {rep});

    const EmbeddingDump dump = extract_embeddings(stack, *samples, input, vocab);
    const fs::path dump_path =
        fs::path(ctx.out) / "embeddings" / (ctx.variant + "_" + split + ".cese");
    fs::create_directories(dump_path.parent_path());
    save_embeddings(dump, dump_path.string());

    Manifest man(ctx, "eval");
    man.m["corpus_hash"] = hex(corpus_hash(ctx));
    man.artifact(dump_path);
    man.m["metrics"] = {{"auroc", rep.auroc}, {"accuracy", rep.accuracy}, {"n", rep.n}};
    man.write(manifest_path(ctx, "eval_" + ctx.variant + "_" + split));
    std::cout << split << " auroc " << rep.auroc << " accuracy " << rep.accuracy << "\n";
}

std::vector<int> labels_for(const std::vector<EnrichedSample>& split,
                            const std::vector<int>& ids) {
    std::map<int, int> by_id;
    for (const auto& s : split) by_id[s.sample.id] = s.sample.label.value_or(0);
    std::vector<int> out;
    for (int id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw UsageError("embedding id " + std::to_string(id) + " is not in this corpus");
        out.push_back(it->second);
    }
    return out;
}

void cmd_fuse(const Ctx& ctx, const std::string& a_train, const std::string& b_train,
              const std::string& a_val, const std::string& b_val) {
    for (const std::string& p : {a_train, b_train, a_val, b_val})
        if (!fs::exists(p))
            throw UsageError("no embedding dump at " + p + "; run `ces eval` first");
    const EnrichedCorpus corpus = load_enriched_corpus(ctx);

    const EmbeddingDump at = load_embeddings(a_train), bt = load_embeddings(b_train);
    const EmbeddingDump av = load_embeddings(a_val), bv = load_embeddings(b_val);
    TrainConfig cfg = train_config(ctx, "fusion", TrainConfig::finetune_defaults());
    cfg.seed = run_seed(ctx);

    const FusionMLP mlp = train_fusion(at, bt, labels_for(corpus.train, at.ids), cfg);
    const auto scores = fuse_predict(mlp, av, bv);
    const auto val_labels = labels_for(corpus.val, av.ids);
    std::vector<PerSample> per;
    for (size_t i = 0; i < scores.size(); i++)
        per.push_back({av.ids[i], scores[i], val_labels[i]});
    EvalReport rep = make_report("fuse", "fused", "val", cfg.seed, per);
    merge_runs(ctx, {rep});

    Manifest man(ctx, "fuse");
    man.m["corpus_hash"] = hex(corpus_hash(ctx));
    man.m["metrics"] = {{"val_auroc", rep.auroc}, {"val_accuracy", rep.accuracy}};
    man.write(manifest_path(ctx, "fuse_seed" + std::to_string(cfg.seed)));
    std::cout << "fused val auroc " << rep.auroc << "\n";
}

void cmd_report(const Ctx& ctx) {
    const auto runs = load_runs_csv(runs_store(ctx).string() + ".csv");
    if (runs.empty())
        throw UsageError("no runs recorded under " + runs_store(ctx).string() +
                         ".csv; run `ces finetune` or `ces ablate` first");

    std::map<std::string, std::map<std::string, std::vector<double>>> agg; // variant -> split -> aurocs
    for (const auto& r : runs) agg[r.variant][r.split].push_back(r.auroc);
    const std::string ref = agg.count("baseline") ? "baseline" : agg.begin()->first;
    const auto& ref_val = agg[ref]["val"];

    auto mean_std = [](const std::vector<double>& v) {
        if (v.empty()) return std::string("-");
        double m = 0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
        std::ostringstream os;
        os.precision(4);
        os << std::fixed << m << " ± " << s;
        return os.str();
    };

    const fs::path md_path = fs::path(ctx.out) / "reports" / "summary.md";
    const fs::path csv_path = fs::path(ctx.out) / "reports" / "summary.csv";
    fs::create_directories(md_path.parent_path());
    std::ofstream md(md_path);
    std::ofstream csv(csv_path);
    md << "| Model | Validation | Test | p vs " << ref << " |\n|---|---|---|---|\n";
    csv << "variant,val_mean,test_mean,p_vs_" << ref << "\n";
    std::ostringstream stdout_table;
    for (const auto& [variant, splits] : agg) {
        std::string pcell = "-";
        std::string pcsv = "";
        auto vit = splits.find("val");
        if (variant != ref && vit != splits.end() && vit->second.size() > 1 &&
            ref_val.size() > 1) {
            const double p = welch_ttest(vit->second, ref_val).p;
            std::ostringstream os;
            os.precision(4);
            os << std::fixed << p;
            // The significance convention: p below 0.02 is highlighted.
            pcell = p < 0.02 ? "**" + os.str() + "**" : os.str();
            pcsv = os.str();
        }
        md << "| " << variant << " | " << mean_std(vit == splits.end() ? std::vector<double>{} : vit->second)
           << " | "
           << mean_std(splits.count("test") ? splits.at("test") : std::vector<double>{}) << " | "
           << pcell << " |\n";
        csv << variant << ',' << mean_std(splits.count("val") ? splits.at("val") : std::vector<double>{})
            << ',' << mean_std(splits.count("test") ? splits.at("test") : std::vector<double>{})
            << ',' << pcsv << '\n';
    }
    md.close();
    csv.close();
    std::cout << std::ifstream(md_path).rdbuf();

    Manifest man(ctx, "report");
    man.artifact(md_path);
    man.artifact(csv_path);
    man.write(manifest_path(ctx, "report"));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"caption-enriched meme classification pipeline"};
    app.require_subcommand(1);
    Ctx ctx;

    app.add_option("--config", ctx.config_path, "JSON configuration file");
    app.add_option("--out", ctx.out, "artifact directory");
    app.add_option("--seed", ctx.seed, "top-level seed")->each([&ctx](auto) { ctx.seed_set = true; });
    app.add_option("--seeds", ctx.seeds, "number of consecutive seeds to sweep");
    app.add_option("--variant", ctx.variant, "training variant");
    app.add_option("--jobs", ctx.jobs, "worker cap for parallel stages");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
    auto* enr = app.add_subcommand("enrich", "caption every sample, cache-first");
    auto* pre = app.add_subcommand("pretrain", "MLM pretraining phase only");
    auto* fin = app.add_subcommand("finetune", "full variant run: pretrain if planned, then finetune");
    auto* abl = app.add_subcommand("ablate", "all five variants over the seed sweep");
    auto* eva = app.add_subcommand("eval", "score a checkpoint on a split and dump embeddings");
    auto* fus = app.add_subcommand("fuse", "late fusion of two embedding dumps");
    auto* rep = app.add_subcommand("report", "aggregate table with Welch p-values");

    std::string ckpt, split = "val", input = "pairs";
    eva->add_option("--ckpt", ckpt, "checkpoint path")->required();
    eva->add_option("--split", split, "train|val|test");
    eva->add_option("--input", input, "text fed to the model: c_only|pairs");

    std::string a_train, b_train, a_val, b_val;
    fus->add_option("--a-train", a_train, "dump of model A on train")->required();
    fus->add_option("--b-train", b_train, "dump of model B on train")->required();
    fus->add_option("--a-val", a_val, "dump of model A on val")->required();
    fus->add_option("--b-val", b_val, "dump of model B on val")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (!ctx.config_path.empty()) {
            std::ifstream f(ctx.config_path);
            if (!f) throw UsageError("cannot read config " + ctx.config_path);
            try {
                ctx.cfg = json::parse(f);
            } catch (const json::exception& e) {
                throw UsageError(std::string("bad config JSON: ") + e.what());
            }
            if (!ctx.cfg.is_object()) throw UsageError("config root must be a JSON object");
        }
        if (ctx.seeds < 1) throw UsageError("--seeds must be positive");
        if (ctx.jobs < 1) throw UsageError("--jobs must be positive");

        if (gen->parsed()) cmd_gen_data(ctx);
        else if (enr->parsed()) cmd_enrich(ctx);
        else if (pre->parsed()) cmd_pretrain(ctx);
        else if (fin->parsed()) cmd_finetune(ctx);
        else if (abl->parsed()) cmd_ablate(ctx);
        else if (eva->parsed()) cmd_eval(ctx, ckpt, split, input);
        else if (fus->parsed()) cmd_fuse(ctx, a_train, b_train, a_val, b_val);
        else if (rep->parsed()) cmd_report(ctx);
        return 0;
    } catch (const ProviderError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
