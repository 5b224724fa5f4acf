#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ces/model.hpp"

using namespace ces;

namespace {

Vocab tiny_vocab() {
    return build_vocab({"the cat sat on a mat", "a dog ran past the tree",
                        "birds fly over the river", "foxes sleep near town"});
}

EncoderConfig tiny_cfg(Arch arch = Arch::unimodal) {
    EncoderConfig c;
    c.layers = 1;
    c.hidden = 8;
    c.heads = 2;
    c.ffn = 12;
    c.vocab = tiny_vocab().size();
    c.max_len = 12;
    c.max_regions = 3;
    c.region_dim = 5;
    c.dropout = 0.0;
    c.arch = arch;
    if (arch == Arch::two_stream) c.pooling = Pooling::product;
    return c;
}

PackedBatch tiny_batch(const Vocab& v, int max_len = 12) {
    std::vector<TokenSequence> seqs = {
        encode_pair("the cat sat on a mat", std::nullopt, v, max_len),
        encode_pair("a dog ran", std::string("birds fly"), v, max_len),
    };
    return PackedBatch::pack(seqs, max_len);
}

RegionBatch random_regions(const EncoderConfig& cfg, int batch, int k, uint64_t seed) {
    RegionBatch rb;
    auto rng = make_rng(seed, "test_regions");
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < batch; i++) {
        Tensor t = Tensor::zeros({k, cfg.region_dim});
        for (auto& x : t.data()) x = g(rng);
        rb.regions.push_back(t);
    }
    return rb;
}

std::vector<Tensor> all_params(const EncoderStack& s) {
    std::vector<Tensor> out;
    for (const auto& [n, t] : s.params) out.push_back(t);
    return out;
}

void zero_param(EncoderStack& s, const std::string& name) {
    Tensor t = s.param(name);
    std::fill(t.data().begin(), t.data().end(), 0.0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.numel() == b.numel());
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); i++)
        m = std::max(m, std::abs(a.data()[static_cast<size_t>(i)] -
                                 b.data()[static_cast<size_t>(i)]));
    return m;
}

} // namespace

TEST_CASE("config validation") {
    EncoderConfig c = tiny_cfg();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_cfg();
    c.pooling = Pooling::product;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_cfg(Arch::two_stream);
    CHECK_NOTHROW(c.validate());
    CHECK(EncoderConfig::from_json(c.to_json()) == c);
}

TEST_CASE("init: pure function of (config, seed)") {
    const EncoderConfig c = tiny_cfg();
    EncoderStack a = EncoderStack::init(c, 3);
    EncoderStack b = EncoderStack::init(c, 3);
    EncoderStack d = EncoderStack::init(c, 4);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != d.checksum());
    CHECK(a.param_count() == b.param_count());
}

TEST_CASE("encode_text: finite outputs, pad invariance exact") {
    const Vocab v = tiny_vocab();
    EncoderStack s = EncoderStack::init(tiny_cfg(), 1);
    // Second sequence is shorter, so it keeps pad rows after batch trimming.
    std::vector<TokenSequence> seqs = {
        encode_pair("the cat sat on a mat", std::nullopt, v, 12),
        encode_pair("a dog", std::nullopt, v, 12),
    };
    PackedBatch b1 = PackedBatch::pack(seqs, 12);
    Graph g1;
    Tensor h1 = encode_text(g1, s, b1).seq;
    for (double x : h1.data()) CHECK(std::isfinite(x));

    // Alter every pad position's token id.
    int pads = 0;
    for (size_t i = 0; i < seqs[1].ids.size(); i++)
        if (!seqs[1].attn_mask[i]) {
            seqs[1].ids[i] = Vocab::kNumSpecials;
            pads++;
        }
    REQUIRE(pads > 0);
    PackedBatch b2 = PackedBatch::pack(seqs, 12);
    Graph g2;
    Tensor h2 = encode_text(g2, s, b2).seq;
    const int d = s.cfg.hidden;
    for (int row = 0; row < b1.total; row++) {
        if (!b1.valid[static_cast<size_t>(row)]) continue;
        for (int j = 0; j < d; j++)
            CHECK(h1.data()[static_cast<size_t>(row * d + j)] ==
                  h2.data()[static_cast<size_t>(row * d + j)]);
    }
}

TEST_CASE("encode_text: overlong sequence errors") {
    const Vocab v = tiny_vocab();
    EncoderStack s = EncoderStack::init(tiny_cfg(), 1);
    std::vector<TokenSequence> seqs = {encode_pair("the cat", std::nullopt, v, 16)};
    CHECK_THROWS_AS(PackedBatch::pack(seqs, s.cfg.max_len), Error);
}

TEST_CASE("encode_text: gradient of mean(hidden) passes grad_check") {
    const Vocab v = tiny_vocab();
    EncoderStack s = EncoderStack::init(tiny_cfg(), 2);
    const PackedBatch b = tiny_batch(v);
    const double err = grad_check(
        [&](Graph& g) {
            Tensor h = encode_text(g, s, b).seq;
            return g.scale(g.sum(h), 1.0 / static_cast<double>(h.numel()));
        },
        all_params(s), 1e-4);
    CHECK(err <= 1e-4);
}

TEST_CASE("mlm_logits: shape, zero hidden broadcasts the bias") {
    const Vocab v = tiny_vocab();
    EncoderStack s = EncoderStack::init(tiny_cfg(), 3);
    const PackedBatch b = tiny_batch(v);
    Graph g;
    Tensor h = encode_text(g, s, b).seq;
    Tensor logits = mlm_logits(g, s, h);
    CHECK(logits.rows() == b.total);
    CHECK(logits.cols() == s.cfg.vocab);

    Graph g2;
    Tensor zero_h = Tensor::zeros({b.total, s.cfg.hidden});
    Tensor z = mlm_logits(g2, s, zero_h);
    const Tensor bias = s.param("mlm.bias");
    for (int r = 0; r < b.total; r++)
        for (int c = 0; c < s.cfg.vocab; c++)
            CHECK(z.data()[static_cast<size_t>(r * s.cfg.vocab + c)] ==
                  doctest::Approx(bias.data()[static_cast<size_t>(c)]));
}

TEST_CASE("mlm: initial loss within 15% of ln V") {
    const Vocab v = tiny_vocab();
    EncoderStack s = EncoderStack::init(tiny_cfg(), 4);
    std::vector<TokenSequence> seqs;
    std::vector<int> targets;
    for (int i = 0; i < 16; i++)
        seqs.push_back(encode_pair("the cat sat on a mat", std::string("a dog ran past"), v, 12));
    PackedBatch b = PackedBatch::pack(seqs, 12);
    // Mask every 3rd content token.
    int row = 0;
    std::vector<int> ids = b.ids;
    for (size_t i = 0; i < ids.size(); i++) {
        if (!Vocab().is_special(ids[i]) && row++ % 3 == 0) {
            targets.push_back(ids[i]);
            ids[i] = Vocab::kMask;
        } else {
            targets.push_back(kIgnoreLabel);
        }
    }
    PackedBatch masked = b;
    masked.ids = ids;
    Graph g;
    Tensor h = encode_text(g, s, masked).seq;
    Tensor loss = g.softmax_cross_entropy(mlm_logits(g, s, h), targets);
    const double lnv = std::log(static_cast<double>(s.cfg.vocab));
    CHECK(std::abs(loss.item() - lnv) / lnv <= 0.15);
}

TEST_CASE("classify_unimodal: zero head gives logit 0, wrong arch errors") {
    const Vocab v = tiny_vocab();
    EncoderStack s = EncoderStack::init(tiny_cfg(), 5);
    zero_param(s, "head.w");
    zero_param(s, "head.b");
    const PackedBatch b = tiny_batch(v);
    Graph g;
    Tensor logits = classify_unimodal(g, s, b);
    CHECK(logits.rows() == b.size());
    for (double x : logits.data()) CHECK(x == 0.0);

    EncoderStack ms = EncoderStack::init(tiny_cfg(Arch::single_stream), 5);
    Graph g2;
    CHECK_THROWS_AS(classify_unimodal(g2, ms, b), Error);
}

TEST_CASE("classify_unimodal: end-to-end grad_check") {
    const Vocab v = tiny_vocab();
    EncoderStack s = EncoderStack::init(tiny_cfg(), 6);
    const PackedBatch b = tiny_batch(v);
    const std::vector<double> labels = {1.0, 0.0};
    const double err = grad_check(
        [&](Graph& g) { return g.bce_with_logits(classify_unimodal(g, s, b), labels); },
        all_params(s), 1e-4);
    CHECK(err <= 1e-4);
}

TEST_CASE("single_stream: k=0 reproduces encode_text exactly") {
    const Vocab v = tiny_vocab();
    EncoderStack s = EncoderStack::init(tiny_cfg(Arch::single_stream), 7);
    const PackedBatch b = tiny_batch(v);
    RegionBatch empty;
    empty.regions.assign(static_cast<size_t>(b.size()), Tensor());
    Graph g1, g2;
    Tensor joint = encode_single_stream(g1, s, empty, b).seq;
    Tensor text = encode_text(g2, s, b).seq;
    CHECK(max_abs_diff(joint, text) <= 1e-12);
}

TEST_CASE("single_stream: regions prepended, CLS row tracks the text span") {
    const Vocab v = tiny_vocab();
    const EncoderConfig cfg = tiny_cfg(Arch::single_stream);
    EncoderStack s = EncoderStack::init(cfg, 8);
    const PackedBatch b = tiny_batch(v);
    const RegionBatch rb = random_regions(cfg, b.size(), 2, 1);
    Graph g;
    EncodeOut out = encode_single_stream(g, s, rb, b);
    CHECK(out.seq.rows() == b.total + 2 * b.size());
    CHECK(out.cls_rows[0] == 2);
    CHECK(out.cls_rows[1] == 2 + b.lengths[0] + 2);

    // Distinct per-slot position embeddings: no position collision possible.
    const Tensor pos = s.param("region_pos");
    bool differ = false;
    for (int j = 0; j < cfg.hidden; j++)
        differ |= pos.data()[static_cast<size_t>(j)] !=
                  pos.data()[static_cast<size_t>(cfg.hidden + j)];
    CHECK(differ);

    RegionBatch too_many = random_regions(cfg, b.size(), cfg.max_regions + 1, 2);
    Graph g2;
    CHECK_THROWS_AS(encode_single_stream(g2, s, too_many, b), Error);
}

TEST_CASE("single_stream: grad_check through the region projection") {
    const Vocab v = tiny_vocab();
    const EncoderConfig cfg = tiny_cfg(Arch::single_stream);
    EncoderStack s = EncoderStack::init(cfg, 9);
    const PackedBatch b = tiny_batch(v);
    const RegionBatch rb = random_regions(cfg, b.size(), 2, 3);
    const std::vector<double> labels = {0.0, 1.0};
    const double err = grad_check(
        [&](Graph& g) {
            EncodeOut out = encode_single_stream(g, s, rb, b);
            Tensor logit = classify_multimodal(g, s, pool(g, s, out));
            return g.bce_with_logits(logit, labels);
        },
        {s.param("region_proj.w"), s.param("region_proj.b"), s.param("region_pos"),
         s.param("head.w1"), s.param("head.w2")}, 1e-4);
    CHECK(err <= 1e-4);
}

TEST_CASE("two_stream: severed cross-attention reduces txt stream to encode_text") {
    const Vocab v = tiny_vocab();
    const EncoderConfig cfg = tiny_cfg(Arch::two_stream);
    EncoderStack s = EncoderStack::init(cfg, 10);
    for (int l = 0; l < cfg.layers; l++) {
        for (const char* stream : {"txt", "img"}) {
            const std::string p = "layer" + std::to_string(l) + "." + stream + ".";
            zero_param(s, p + "cross.wo");
            zero_param(s, p + "cross.bo");
        }
    }
    const PackedBatch b = tiny_batch(v);
    const RegionBatch rb = random_regions(cfg, b.size(), 3, 4);
    Graph g1, g2;
    EncodeOut two = encode_two_stream(g1, s, rb, b);
    Tensor text_only = encode_text(g2, s, b).seq;
    CHECK(max_abs_diff(two.txt, text_only) <= 1e-12);
}

TEST_CASE("two_stream: output shapes (k x d, len x d)") {
    const Vocab v = tiny_vocab();
    const EncoderConfig cfg = tiny_cfg(Arch::two_stream);
    EncoderStack s = EncoderStack::init(cfg, 11);
    const PackedBatch b = tiny_batch(v);
    const RegionBatch rb = random_regions(cfg, b.size(), 3, 5);
    Graph g;
    EncodeOut out = encode_two_stream(g, s, rb, b);
    CHECK(out.img.rows() == 3 * b.size());
    CHECK(out.img.cols() == cfg.hidden);
    CHECK(out.txt.rows() == b.total);
    CHECK(out.txt.cols() == cfg.hidden);

    RegionBatch empty;
    empty.regions.assign(static_cast<size_t>(b.size()), Tensor());
    Graph g2;
    CHECK_THROWS_AS(encode_two_stream(g2, s, empty, b), Error);
}

TEST_CASE("two_stream: grad_check through cross-attention") {
    const Vocab v = tiny_vocab();
    const EncoderConfig cfg = tiny_cfg(Arch::two_stream);
    EncoderStack s = EncoderStack::init(cfg, 12);
    const PackedBatch b = tiny_batch(v);
    const RegionBatch rb = random_regions(cfg, b.size(), 2, 6);
    const std::vector<double> labels = {1.0, 1.0};
    std::vector<Tensor> cross_params;
    for (const char* stream : {"txt", "img"})
        for (const char* w : {"cross.wq", "cross.wk", "cross.wv", "cross.wo", "cross.bq"})
            cross_params.push_back(s.param(std::string("layer0.") + stream + "." + w));
    cross_params.push_back(s.param("region_proj.w"));
    const double err = grad_check(
        [&](Graph& g) {
            EncodeOut out = encode_two_stream(g, s, rb, b);
            Tensor logit = classify_multimodal(g, s, pool(g, s, out));
            return g.bce_with_logits(logit, labels);
        },
        cross_params, 1e-4);
    CHECK(err <= 1e-4);
}

TEST_CASE("pool: product identities and cls row extraction") {
    const EncoderConfig cfg = tiny_cfg(Arch::two_stream);
    EncoderStack s = EncoderStack::init(cfg, 13);
    const int d = cfg.hidden;
    EncodeOut out;
    out.img = Tensor::from({2, d}, std::vector<double>(static_cast<size_t>(2 * d), 1.0));
    Tensor txt = Tensor::zeros({2, d});
    for (int i = 0; i < 2 * d; i++) txt.data()[static_cast<size_t>(i)] = 0.5 + i;
    out.txt = txt;
    out.img_first_rows = {0, 1};
    out.cls_rows = {0, 1};
    Graph g;
    Tensor pooled = pool(g, s, out);
    CHECK(max_abs_diff(pooled, txt) == 0.0);

    // Zero image side absorbs.
    out.img = Tensor::zeros({2, d});
    Graph g2;
    Tensor zeroed = pool(g2, s, out);
    for (double x : zeroed.data()) CHECK(x == 0.0);

    // cls pooling equals row extraction.
    EncoderStack cs = EncoderStack::init(tiny_cfg(Arch::single_stream), 13);
    EncodeOut so;
    so.seq = txt;
    so.cls_rows = {1, 0};
    Graph g3;
    Tensor cls = pool(g3, cs, so);
    for (int j = 0; j < d; j++) {
        CHECK(cls.data()[static_cast<size_t>(j)] == txt.data()[static_cast<size_t>(d + j)]);
        CHECK(cls.data()[static_cast<size_t>(d + j)] == txt.data()[static_cast<size_t>(j)]);
    }

    // product pooling demands two_stream.
    EncodeOut bad = so;
    Graph g4;
    EncoderStack uni = EncoderStack::init(tiny_cfg(), 13);
    CHECK_NOTHROW(pool(g4, uni, bad));
}

TEST_CASE("classify_multimodal: zero final layer gives probability 0.5; deterministic") {
    const EncoderConfig cfg = tiny_cfg(Arch::single_stream);
    EncoderStack s = EncoderStack::init(cfg, 14);
    zero_param(s, "head.w2");
    zero_param(s, "head.b2");
    Tensor pooled = Tensor::zeros({3, cfg.hidden});
    for (auto& x : pooled.data()) x = 0.3;
    Graph g1, g2;
    Tensor a = classify_multimodal(g1, s, pooled);
    Tensor b = classify_multimodal(g2, s, pooled);
    for (double x : a.data()) CHECK(x == 0.0); // sigmoid(0) = 0.5
    CHECK(max_abs_diff(a, b) == 0.0);

    EncoderStack fresh = EncoderStack::init(cfg, 15);
    const double err = grad_check(
        [&](Graph& g) {
            return g.bce_with_logits(classify_multimodal(g, fresh, pooled), {1.0, 0.0, 1.0});
        },
        {fresh.param("head.w1"), fresh.param("head.b1"), fresh.param("head.w2"),
         fresh.param("head.b2")});
    CHECK(err <= 1e-4);
}

TEST_CASE("checkpoint: round trip, checksum, mismatch rejection") {
    const auto dir = std::filesystem::temp_directory_path() / "ces_ckpt";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.cesm").string();
    EncoderStack s = EncoderStack::init(tiny_cfg(Arch::two_stream), 16);
    save_checkpoint(s, path);
    EncoderStack loaded = load_checkpoint(path);
    CHECK(loaded.checksum() == s.checksum());
    CHECK(loaded.cfg == s.cfg);

    // Corrupt one payload byte: checksum must reject.
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(200);
        char c;
        f.seekg(200);
        f.get(c);
        f.seekp(200);
        f.put(static_cast<char>(c ^ 0x7f));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), Error);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.cesm").string()), Error);
}

TEST_CASE("load_backbone: copies everything but the fresh head") {
    EncoderStack pre = EncoderStack::init(tiny_cfg(), 17);
    for (auto& [name, t] : pre.params)
        for (auto& x : t.data()) x += 0.25; // move away from init
    EncoderStack fine = EncoderStack::init(tiny_cfg(), 18);
    const uint64_t fresh_head = fine.checksum({"head."});
    load_backbone(fine, pre, {"head."});
    CHECK(fine.checksum({"layer0.", "tok_emb", "pos_emb", "seg_emb", "mlm."}) ==
          pre.checksum({"layer0.", "tok_emb", "pos_emb", "seg_emb", "mlm."}));
    CHECK(fine.checksum({"head."}) == fresh_head);
    CHECK(fine.checksum({"head."}) != pre.checksum({"head."}));

    EncoderStack other = EncoderStack::init(tiny_cfg(Arch::single_stream), 17);
    CHECK_THROWS_AS(load_backbone(other, pre, {"head."}), Error);
}
