#pragma once

#include <string>
#include <vector>

#include "ces/captioner.hpp"
#include "ces/model.hpp"
#include "ces/stats.hpp"

namespace ces {

enum class Phase { pretrain_mlm, finetune };
enum class TextInput { none, c_only, pairs };
enum class Variant { baseline, ces_full, abl_i, abl_ii, abl_iii };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);

// Which text the two phases see. The five fixed mappings are the whole story:
// baseline (none, c_only), ces_full (pairs, pairs), abl_i (none, pairs),
// abl_ii (c_only, c_only), abl_iii (c_only, pairs).
struct VariantPlan {
    TextInput pretrain_input;
    TextInput finetune_input;
};
VariantPlan plan_for(Variant v);

struct TrainConfig {
    Phase phase = Phase::finetune;
    int total_updates = 2000;
    int warmup_steps = -1; // -1 resolves to min(2000, ceil(0.1 * total))
    double peak_lr = 2e-3;
    int batch_size = 32;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    Variant variant = Variant::baseline;
    std::string run_log; // append JSONL loss records here when non-empty

    int warmup() const;
    void validate() const;
    static TrainConfig pretrain_defaults();
    static TrainConfig finetune_defaults();
};

// Linear warmup to peak, then cosine decay to zero at total_updates.
double lr_schedule(int step, const TrainConfig& cfg);

struct AdamState {
    int t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

// Decoupled-weight-decay Adam over a named parameter list. Parameters that
// took no gradient this step are left untouched.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, int step,
               double lr, const TrainConfig& cfg);

struct EnrichedCorpus {
    std::vector<EnrichedSample> train;
    std::vector<EnrichedSample> val;
    std::vector<EnrichedSample> test;
};

// Token vocabulary over training texts and captions, shared by all variants.
Vocab build_train_vocab(const std::vector<EnrichedSample>& train);

TokenSequence encode_input(const EnrichedSample& s, TextInput input, const Vocab& vocab,
                           int max_len);

std::vector<double> pretrain_mlm(EncoderStack& stack, const std::vector<EnrichedSample>& train,
                                 const Vocab& vocab, TextInput input, const TrainConfig& cfg);

struct FinetuneResult {
    std::vector<double> losses;
    EvalReport val;
    EvalReport test;
};

// after_pretrain scales the peak lr down by 10, mirroring 5e-6 vs 5e-5.
FinetuneResult finetune(EncoderStack& stack, const EnrichedCorpus& corpus, const Vocab& vocab,
                        const VariantPlan& plan, TrainConfig cfg, bool after_pretrain);

std::vector<double> eval_scores(const EncoderStack& stack,
                                const std::vector<EnrichedSample>& samples, TextInput input,
                                const Vocab& vocab, int batch_size = 64);

struct VariantResult {
    Variant variant = Variant::baseline;
    uint64_t seed = 0;
    EvalReport val;
    EvalReport test;
    uint64_t checksum = 0; // fine-tuned stack
    std::vector<double> pre_losses;
    std::vector<double> fine_losses;
};

// Full pipeline for one (variant, seed): optional MLM pretraining, backbone
// handoff with a fresh head, fine-tuning, evaluation on val and test.
VariantResult run_variant(const EnrichedCorpus& corpus, EncoderConfig enc, Variant variant,
                          uint64_t seed, const TrainConfig& pre_base,
                          const TrainConfig& fine_base, EncoderStack* out_stack = nullptr);

std::vector<VariantResult> run_ablation_suite(const EnrichedCorpus& corpus,
                                              const EncoderConfig& enc, const TrainConfig& pre,
                                              const TrainConfig& fine,
                                              const std::vector<uint64_t>& seeds);

} // namespace ces
