#include "ces/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

namespace ces {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::ces_full: return "ces_full";
        case Variant::abl_i: return "abl_i";
        case Variant::abl_ii: return "abl_ii";
        case Variant::abl_iii: return "abl_iii";
    }
    throw Error("bad variant enum");
}

Variant variant_from_name(const std::string& s) {
    if (s == "baseline") return Variant::baseline;
    if (s == "ces_full") return Variant::ces_full;
    if (s == "abl_i") return Variant::abl_i;
    if (s == "abl_ii") return Variant::abl_ii;
    if (s == "abl_iii") return Variant::abl_iii;
    throw Error("unknown variant: " + s);
}

VariantPlan plan_for(Variant v) {
    switch (v) {
        case Variant::baseline: return {TextInput::none, TextInput::c_only};
        case Variant::ces_full: return {TextInput::pairs, TextInput::pairs};
        case Variant::abl_i: return {TextInput::none, TextInput::pairs};
        case Variant::abl_ii: return {TextInput::c_only, TextInput::c_only};
        case Variant::abl_iii: return {TextInput::c_only, TextInput::pairs};
    }
    throw Error("bad variant enum");
}

int TrainConfig::warmup() const {
    if (warmup_steps >= 0) return warmup_steps;
    const int tenth = static_cast<int>(std::ceil(0.1 * total_updates));
    return std::min(2000, tenth);
}

void TrainConfig::validate() const {
    if (total_updates < 1) throw Error("total_updates must be positive");
    if (warmup() > total_updates)
        throw Error("warmup_steps " + std::to_string(warmup()) + " exceeds total_updates " +
                    std::to_string(total_updates));
    if (peak_lr <= 0.0) throw Error("peak_lr must be positive");
    if (batch_size < 1) throw Error("batch_size must be positive");
    if (weight_decay < 0.0) throw Error("weight_decay must be nonnegative");
}

TrainConfig TrainConfig::pretrain_defaults() {
    TrainConfig c;
    c.phase = Phase::pretrain_mlm;
    c.total_updates = 1500;
    return c;
}

TrainConfig TrainConfig::finetune_defaults() {
    TrainConfig c;
    c.phase = Phase::finetune;
    c.total_updates = 2000;
    return c;
}

double lr_schedule(int step, const TrainConfig& cfg) {
    cfg.validate();
    if (step < 0 || step > cfg.total_updates)
        throw Error("lr_schedule step " + std::to_string(step) + " outside [0, " +
                    std::to_string(cfg.total_updates) + "]");
    const int w = cfg.warmup();
    if (step < w) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(w);
    if (cfg.total_updates == w) return cfg.peak_lr;
    const double frac = static_cast<double>(step - w) / static_cast<double>(cfg.total_updates - w);
    return cfg.peak_lr * (1.0 + std::cos(M_PI * frac)) / 2.0;
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, int step,
               double lr, const TrainConfig& cfg) {
    if (step < 1) throw Error("adam_step needs step >= 1");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); i++) {
            state.m[i].assign(static_cast<size_t>(params[i].second.numel()), 0.0);
            state.v[i].assign(static_cast<size_t>(params[i].second.numel()), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw Error("adam state does not match parameter list");
    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (size_t i = 0; i < params.size(); i++) {
        Tensor& p = params[i].second;
        if (!p.requires_grad() || !p.has_grad()) continue;
        auto& w = p.data();
        const auto& g = p.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < w.size(); j++) {
            if (!std::isfinite(g[j]))
                throw Error("non-finite gradient in parameter " + params[i].first);
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * w[j]);
        }
    }
    state.t = step;
}

Vocab build_train_vocab(const std::vector<EnrichedSample>& train) {
    std::vector<std::string> texts;
    for (const auto& s : train) {
        texts.push_back(s.sample.text);
        if (!s.caption.empty()) texts.push_back(s.caption);
    }
    return build_vocab(texts);
}

TokenSequence encode_input(const EnrichedSample& s, TextInput input, const Vocab& vocab,
                           int max_len) {
    switch (input) {
        case TextInput::c_only:
            return encode_pair(s.sample.text, std::nullopt, vocab, max_len);
        case TextInput::pairs:
            if (s.caption.empty())
                throw Error("sample " + std::to_string(s.sample.id) +
                            " has no caption; enrich the corpus first");
            return encode_pair(s.sample.text, s.caption, vocab, max_len);
        case TextInput::none:
            break;
    }
    throw Error("cannot encode text input 'none'");
}

namespace {

struct Shuffler {
    std::vector<size_t> order;
    size_t pos = 0;
    int epoch = 0;
    uint64_t seed;

    Shuffler(size_t n, uint64_t seed) : seed(seed) {
        order.resize(n);
        for (size_t i = 0; i < n; i++) order[i] = i;
        reshuffle();
    }
    void reshuffle() {
        auto rng = make_rng(seed, "shuffle", static_cast<uint64_t>(epoch++));
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
    }
    std::vector<size_t> next(int batch) {
        std::vector<size_t> idx;
        for (int i = 0; i < batch; i++) {
            if (pos == order.size()) reshuffle();
            idx.push_back(order[pos++]);
        }
        return idx;
    }
};

void log_step(const std::string& path, Phase phase, int step, double loss, double lr) {
    if (path.empty()) return;
    std::ofstream f(path, std::ios::app);
    nlohmann::json j;
    j["phase"] = phase == Phase::pretrain_mlm ? "pretrain_mlm" : "finetune";
    j["step"] = step;
    j["loss"] = loss;
    j["lr"] = lr;
    f << j.dump() << "\n";
}

Tensor region_tensor(const MemeSample& s) {
    if (s.regions.empty()) return Tensor();
    return Tensor::from({s.k, s.d}, s.regions);
}

} // namespace

std::vector<double> pretrain_mlm(EncoderStack& stack, const std::vector<EnrichedSample>& train,
                                 const Vocab& vocab, TextInput input, const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw Error("pretrain_mlm needs a non-empty training set");
    if (input == TextInput::none) throw Error("pretrain_mlm needs c_only or pairs input");
    if (stack.cfg.arch != Arch::unimodal)
        throw Error("continued pre-training is unimodal only; got " + arch_name(stack.cfg.arch));

    std::vector<TokenSequence> encoded;
    encoded.reserve(train.size());
    for (const auto& s : train) encoded.push_back(encode_input(s, input, vocab, stack.cfg.max_len));

    Shuffler shuffler(train.size(), cfg.seed);
    AdamState state;
    std::vector<double> losses;
    for (int step = 1; step <= cfg.total_updates; step++) {
        const auto idx = shuffler.next(cfg.batch_size);
        std::vector<TokenSequence> seqs;
        std::vector<std::vector<int>> labels;
        for (size_t b = 0; b < idx.size(); b++) {
            const TokenSequence& base = encoded[idx[b]];
            MaskedBatch m = apply_mlm_mask(
                base, vocab, substream(cfg.seed, "mask", static_cast<uint64_t>(step), b));
            TokenSequence corrupted = base;
            corrupted.ids = m.corrupted;
            seqs.push_back(std::move(corrupted));
            labels.push_back(std::move(m.mlm_labels));
        }
        PackedBatch batch = PackedBatch::pack(seqs, stack.cfg.max_len);
        std::vector<int> targets;
        targets.reserve(static_cast<size_t>(batch.total));
        for (int b = 0; b < batch.size(); b++)
            for (int i = 0; i < batch.lengths[static_cast<size_t>(b)]; i++)
                targets.push_back(labels[static_cast<size_t>(b)][static_cast<size_t>(i)]);

        auto drop_rng = make_rng(cfg.seed, "dropout", static_cast<uint64_t>(step));
        Graph g(true, false);
        Tensor h = encode_text(g, stack, batch, &drop_rng).seq;
        Tensor loss = g.softmax_cross_entropy(mlm_logits(g, stack, h), targets);
        stack.zero_grads();
        g.backward(loss);
        const double lr = lr_schedule(step, cfg);
        adam_step(stack.params, state, step, lr, cfg);
        losses.push_back(loss.item());
        if (step % 100 == 0 || step == 1) log_step(cfg.run_log, Phase::pretrain_mlm, step, loss.item(), lr);
    }
    return losses;
}

std::vector<double> eval_scores(const EncoderStack& stack,
                                const std::vector<EnrichedSample>& samples, TextInput input,
                                const Vocab& vocab, int batch_size) {
    std::vector<double> scores;
    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
        std::vector<TokenSequence> seqs;
        RegionBatch regions;
        for (size_t i = start; i < end; i++) {
            seqs.push_back(encode_input(samples[i], input, vocab, stack.cfg.max_len));
            regions.regions.push_back(region_tensor(samples[i].sample));
        }
        PackedBatch batch = PackedBatch::pack(seqs, stack.cfg.max_len);
        Graph g(false, false);
        Tensor logits = classify(g, stack, regions, batch, nullptr);
        for (double z : logits.data()) scores.push_back(1.0 / (1.0 + std::exp(-z)));
    }
    return scores;
}

FinetuneResult finetune(EncoderStack& stack, const EnrichedCorpus& corpus, const Vocab& vocab,
                        const VariantPlan& plan, TrainConfig cfg, bool after_pretrain) {
    if (plan.pretrain_input != TextInput::none && stack.cfg.arch != Arch::unimodal)
        throw Error("multimodal stacks take no continued pre-training phase");
    if (corpus.train.empty()) throw Error("finetune needs a non-empty training set");
    if (after_pretrain) cfg.peak_lr /= 10.0; // gentler rate on a pre-trained backbone
    cfg.validate();

    std::vector<TokenSequence> encoded;
    std::vector<Tensor> regions;
    std::vector<double> labels;
    for (const auto& s : corpus.train) {
        if (!s.sample.label)
            throw Error("sample " + std::to_string(s.sample.id) + " has no label");
        encoded.push_back(encode_input(s, plan.finetune_input, vocab, stack.cfg.max_len));
        regions.push_back(region_tensor(s.sample));
        labels.push_back(static_cast<double>(*s.sample.label));
    }

    Shuffler shuffler(corpus.train.size(), cfg.seed);
    AdamState state;
    FinetuneResult res;
    for (int step = 1; step <= cfg.total_updates; step++) {
        const auto idx = shuffler.next(cfg.batch_size);
        std::vector<TokenSequence> seqs;
        RegionBatch rb;
        std::vector<double> y;
        for (size_t i : idx) {
            seqs.push_back(encoded[i]);
            rb.regions.push_back(regions[i]);
            y.push_back(labels[i]);
        }
        PackedBatch batch = PackedBatch::pack(seqs, stack.cfg.max_len);
        auto drop_rng = make_rng(cfg.seed, "dropout", static_cast<uint64_t>(step));
        Graph g(true, false);
        Tensor loss = g.bce_with_logits(classify(g, stack, rb, batch, &drop_rng), y);
        stack.zero_grads();
        g.backward(loss);
        const double lr = lr_schedule(step, cfg);
        adam_step(stack.params, state, step, lr, cfg);
        res.losses.push_back(loss.item());
        if (step % 100 == 0 || step == 1) log_step(cfg.run_log, Phase::finetune, step, loss.item(), lr);
    }

    auto report = [&](const std::vector<EnrichedSample>& split, const std::string& name) {
        const auto scores = eval_scores(stack, split, plan.finetune_input, vocab);
        std::vector<PerSample> per;
        for (size_t i = 0; i < split.size(); i++)
            per.push_back({split[i].sample.id, scores[i], *split[i].sample.label});
        return make_report("seed" + std::to_string(cfg.seed), variant_name(cfg.variant), name,
                           cfg.seed, per);
    };
    res.val = report(corpus.val, "val");
    res.test = report(corpus.test, "test");
    return res;
}

VariantResult run_variant(const EnrichedCorpus& corpus, EncoderConfig enc, Variant variant,
                          uint64_t seed, const TrainConfig& pre_base,
                          const TrainConfig& fine_base, EncoderStack* out_stack) {
    const VariantPlan plan = plan_for(variant);
    const Vocab vocab = build_train_vocab(corpus.train);
    enc.vocab = vocab.size();

    VariantResult out;
    out.variant = variant;
    out.seed = seed;

    EncoderStack stack = EncoderStack::init(enc, seed);
    bool pretrained = false;
    if (plan.pretrain_input != TextInput::none) {
        TrainConfig pre = pre_base;
        pre.phase = Phase::pretrain_mlm;
        pre.seed = seed;
        pre.variant = variant;
        out.pre_losses = pretrain_mlm(stack, corpus.train, vocab, plan.pretrain_input, pre);
        // Fresh head over the pre-trained backbone.
        EncoderStack fine_stack = EncoderStack::init(enc, substream(seed, "head"));
        load_backbone(fine_stack, stack, {"head."});
        stack = fine_stack;
        pretrained = true;
    }

    TrainConfig fine = fine_base;
    fine.phase = Phase::finetune;
    fine.seed = seed;
    fine.variant = variant;
    FinetuneResult fr = finetune(stack, corpus, vocab, plan, fine, pretrained);
    out.fine_losses = std::move(fr.losses);
    out.val = std::move(fr.val);
    out.test = std::move(fr.test);
    out.checksum = stack.checksum();
    if (out_stack) *out_stack = std::move(stack);
    return out;
}

std::vector<VariantResult> run_ablation_suite(const EnrichedCorpus& corpus,
                                              const EncoderConfig& enc, const TrainConfig& pre,
                                              const TrainConfig& fine,
                                              const std::vector<uint64_t>& seeds) {
    std::vector<VariantResult> out;
    for (Variant v : {Variant::baseline, Variant::ces_full, Variant::abl_i, Variant::abl_ii,
                      Variant::abl_iii})
        for (uint64_t s : seeds) out.push_back(run_variant(corpus, enc, v, s, pre, fine));
    return out;
}

} // namespace ces
