#include "ces/model.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "ces/text.hpp"

namespace ces {

std::string arch_name(Arch a) {
    switch (a) {
        case Arch::unimodal: return "unimodal";
        case Arch::single_stream: return "single_stream";
        case Arch::two_stream: return "two_stream";
    }
    throw Error("bad arch enum");
}

Arch arch_from_name(const std::string& s) {
    if (s == "unimodal") return Arch::unimodal;
    if (s == "single_stream") return Arch::single_stream;
    if (s == "two_stream") return Arch::two_stream;
    throw Error("unknown architecture: " + s);
}

std::string pooling_name(Pooling p) {
    return p == Pooling::cls ? "cls" : "product";
}

Pooling pooling_from_name(const std::string& s) {
    if (s == "cls") return Pooling::cls;
    if (s == "product") return Pooling::product;
    throw Error("unknown pooling: " + s);
}

void EncoderConfig::validate() const {
    if (layers < 1 || hidden < 1 || heads < 1 || ffn < 1) throw Error("encoder dims must be positive");
    if (hidden % heads != 0)
        throw Error("hidden " + std::to_string(hidden) + " not divisible by heads " +
                    std::to_string(heads));
    if (vocab < Vocab::kNumSpecials) throw Error("encoder vocab too small");
    if (max_len < 5) throw Error("encoder max_len must be at least 5");
    if (max_regions < 0 || region_dim < 1) throw Error("bad region dims");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must lie in [0,1)");
    if (pooling == Pooling::product && arch != Arch::two_stream)
        throw Error("product pooling requires the two_stream architecture");
}

std::string EncoderConfig::to_json() const {
    nlohmann::json j;
    j["layers"] = layers;
    j["hidden"] = hidden;
    j["heads"] = heads;
    j["ffn"] = ffn;
    j["vocab"] = vocab;
    j["max_len"] = max_len;
    j["max_regions"] = max_regions;
    j["region_dim"] = region_dim;
    j["dropout"] = dropout;
    j["arch"] = arch_name(arch);
    j["pooling"] = pooling_name(pooling);
    return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& s) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(s);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad encoder config json: ") + e.what());
    }
    EncoderConfig c;
    c.layers = j.at("layers").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn = j.at("ffn").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.max_regions = j.at("max_regions").get<int>();
    c.region_dim = j.at("region_dim").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.arch = arch_from_name(j.at("arch").get<std::string>());
    c.pooling = pooling_from_name(j.at("pooling").get<std::string>());
    return c;
}

namespace {

bool multimodal(const EncoderConfig& c) {
    return c.arch != Arch::unimodal;
}

// Canonical parameter layout: (name, rows, cols, kind). Everything about a
// stack (init, checkpoints, checksums) is derived from this list.
enum class PKind { weight, embed, bias, ln_gamma };

struct PDesc {
    std::string name;
    int rows;
    int cols;
    PKind kind;
};

std::vector<PDesc> layout(const EncoderConfig& c) {
    std::vector<PDesc> out;
    const int d = c.hidden;
    out.push_back({"tok_emb", c.vocab, d, PKind::embed});
    out.push_back({"pos_emb", c.max_len, d, PKind::embed});
    out.push_back({"seg_emb", 3, d, PKind::embed});
    if (multimodal(c)) {
        out.push_back({"region_proj.w", c.region_dim, d, PKind::weight});
        out.push_back({"region_proj.b", 1, d, PKind::bias});
        out.push_back({"region_pos", std::max(1, c.max_regions), d, PKind::embed});
    }
    std::vector<std::string> streams = {"txt"};
    if (c.arch == Arch::two_stream) streams.push_back("img");
    for (int l = 0; l < c.layers; l++) {
        for (const auto& s : streams) {
            const std::string p = "layer" + std::to_string(l) + "." + s + ".";
            for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
                out.push_back({p + w, d, d, PKind::weight});
            for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
                out.push_back({p + b, 1, d, PKind::bias});
            if (c.arch == Arch::two_stream) {
                for (const char* w : {"cross.wq", "cross.wk", "cross.wv", "cross.wo"})
                    out.push_back({p + w, d, d, PKind::weight});
                for (const char* b : {"cross.bq", "cross.bk", "cross.bv", "cross.bo"})
                    out.push_back({p + b, 1, d, PKind::bias});
            }
            out.push_back({p + "ln1.g", 1, d, PKind::ln_gamma});
            out.push_back({p + "ln1.b", 1, d, PKind::bias});
            out.push_back({p + "ff.w1", d, c.ffn, PKind::weight});
            out.push_back({p + "ff.b1", 1, c.ffn, PKind::bias});
            out.push_back({p + "ff.w2", c.ffn, d, PKind::weight});
            out.push_back({p + "ff.b2", 1, d, PKind::bias});
            out.push_back({p + "ln2.g", 1, d, PKind::ln_gamma});
            out.push_back({p + "ln2.b", 1, d, PKind::bias});
        }
    }
    out.push_back({"mlm.bias", 1, c.vocab, PKind::bias});
    if (c.arch == Arch::unimodal) {
        out.push_back({"head.w", d, 1, PKind::weight});
        out.push_back({"head.b", 1, 1, PKind::bias});
    } else {
        out.push_back({"head.w1", d, d, PKind::weight});
        out.push_back({"head.b1", 1, d, PKind::bias});
        out.push_back({"head.w2", d, 1, PKind::weight});
        out.push_back({"head.b2", 1, 1, PKind::bias});
    }
    return out;
}

} // namespace

Tensor EncoderStack::param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return t;
    throw Error("no parameter named " + name);
}

bool EncoderStack::has_param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return true;
    return false;
}

int64_t EncoderStack::param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

void EncoderStack::zero_grads() {
    for (auto& [name, t] : params)
        if (t.has_grad()) t.zero_grad();
}

uint64_t EncoderStack::checksum() const {
    uint64_t h = fnv1a(cfg.to_json());
    for (const auto& [name, t] : params) {
        h = fnv1a(name, h);
        h = fnv1a(t.data().data(), t.data().size() * sizeof(double), h);
    }
    return h;
}

uint64_t EncoderStack::checksum(const std::vector<std::string>& prefixes) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : params) {
        bool hit = false;
        for (const auto& p : prefixes) hit |= name.rfind(p, 0) == 0;
        if (!hit) continue;
        h = fnv1a(name, h);
        h = fnv1a(t.data().data(), t.data().size() * sizeof(double), h);
    }
    return h;
}

EncoderStack EncoderStack::init(const EncoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    EncoderStack stack;
    stack.cfg = cfg;
    for (const auto& desc : layout(cfg)) {
        const std::vector<int> shape =
            desc.rows == 1 && desc.kind != PKind::weight && desc.kind != PKind::embed
                ? std::vector<int>{desc.cols}
                : std::vector<int>{desc.rows, desc.cols};
        Tensor t = Tensor::zeros(shape, true);
        if (desc.kind == PKind::weight || desc.kind == PKind::embed) {
            auto rng = make_rng(seed, "init", fnv1a(desc.name));
            std::normal_distribution<double> g(0.0, 0.02);
            for (auto& v : t.data()) v = g(rng);
        } else if (desc.kind == PKind::ln_gamma) {
            std::fill(t.data().begin(), t.data().end(), 1.0);
        }
        stack.params.emplace_back(desc.name, t);
    }
    return stack;
}

namespace {

Tensor linear(Graph& g, const EncoderStack& s, const Tensor& x, const std::string& w,
              const std::string& b) {
    return g.add_bias(g.matmul(x, s.param(w)), s.param(b));
}

Tensor maybe_dropout(Graph& g, const EncoderStack& s, const Tensor& x, std::mt19937_64* rng) {
    if (!rng || s.cfg.dropout == 0.0) return x;
    return g.dropout(x, s.cfg.dropout, *rng);
}

Tensor self_attn_block(Graph& g, const EncoderStack& s, const std::string& prefix, Tensor h,
                       const std::vector<AttnSpan>& spans, const std::vector<uint8_t>& valid,
                       std::mt19937_64* rng) {
    Tensor q = linear(g, s, h, prefix + "attn.wq", prefix + "attn.bq");
    Tensor k = linear(g, s, h, prefix + "attn.wk", prefix + "attn.bk");
    Tensor v = linear(g, s, h, prefix + "attn.wv", prefix + "attn.bv");
    Tensor a = g.attention(q, k, v, s.cfg.heads, spans, valid);
    Tensor o = linear(g, s, a, prefix + "attn.wo", prefix + "attn.bo");
    o = maybe_dropout(g, s, o, rng);
    return g.layer_norm(g.add(h, o), s.param(prefix + "ln1.g"), s.param(prefix + "ln1.b"));
}

// Residual-only cross-attention: queries from `h`, keys/values from `other`.
Tensor cross_attn(Graph& g, const EncoderStack& s, const std::string& prefix, const Tensor& h,
                  const Tensor& other, const std::vector<AttnSpan>& spans,
                  const std::vector<uint8_t>& kv_valid, std::mt19937_64* rng) {
    Tensor q = linear(g, s, h, prefix + "cross.wq", prefix + "cross.bq");
    Tensor k = linear(g, s, other, prefix + "cross.wk", prefix + "cross.bk");
    Tensor v = linear(g, s, other, prefix + "cross.wv", prefix + "cross.bv");
    Tensor a = g.attention(q, k, v, s.cfg.heads, spans, kv_valid);
    Tensor o = linear(g, s, a, prefix + "cross.wo", prefix + "cross.bo");
    return g.add(h, maybe_dropout(g, s, o, rng));
}

Tensor ff_block(Graph& g, const EncoderStack& s, const std::string& prefix, Tensor h,
                std::mt19937_64* rng) {
    Tensor f = g.gelu(linear(g, s, h, prefix + "ff.w1", prefix + "ff.b1"));
    f = linear(g, s, f, prefix + "ff.w2", prefix + "ff.b2");
    f = maybe_dropout(g, s, f, rng);
    return g.layer_norm(g.add(h, f), s.param(prefix + "ln2.g"), s.param(prefix + "ln2.b"));
}

Tensor embed_tokens(Graph& g, const EncoderStack& s, const PackedBatch& batch,
                    std::mt19937_64* rng) {
    Tensor h = g.add(g.embedding(s.param("tok_emb"), batch.ids),
                     g.embedding(s.param("pos_emb"), batch.positions));
    h = g.add(h, g.embedding(s.param("seg_emb"), batch.segments));
    return maybe_dropout(g, s, h, rng);
}

// Projected region rows for all samples concatenated, with per-slot position
// embeddings and the region segment row. Returns an undefined tensor when the
// batch carries no regions at all.
Tensor embed_regions(Graph& g, const EncoderStack& s, const RegionBatch& regions,
                     std::mt19937_64* rng, std::vector<int>& counts) {
    counts.clear();
    std::vector<Tensor> parts;
    std::vector<int> pos_ids, seg_ids;
    for (const auto& r : regions.regions) {
        const int k = r.defined() ? r.rows() : 0;
        if (k > s.cfg.max_regions)
            throw Error("sample has " + std::to_string(k) + " regions, max_regions is " +
                        std::to_string(s.cfg.max_regions));
        if (k > 0 && r.cols() != s.cfg.region_dim)
            throw Error("region feature dim " + std::to_string(r.cols()) +
                        " does not match config region_dim " + std::to_string(s.cfg.region_dim));
        counts.push_back(k);
        if (k == 0) continue;
        parts.push_back(r);
        for (int i = 0; i < k; i++) {
            pos_ids.push_back(i);
            seg_ids.push_back(2);
        }
    }
    if (parts.empty()) return Tensor();
    Tensor flat = parts.size() == 1 ? parts[0] : g.concat_rows(parts);
    Tensor h = g.add_bias(g.matmul(flat, s.param("region_proj.w")), s.param("region_proj.b"));
    h = g.add(h, g.embedding(s.param("region_pos"), pos_ids));
    h = g.add(h, g.embedding(s.param("seg_emb"), seg_ids));
    return maybe_dropout(g, s, h, rng);
}

} // namespace

PackedBatch PackedBatch::pack(const std::vector<TokenSequence>& seqs, int max_len) {
    if (seqs.empty()) throw Error("cannot pack an empty batch");
    PackedBatch b;
    int batch_max = 0;
    for (const auto& s : seqs) {
        if (s.length() > max_len)
            throw Error("sequence length " + std::to_string(s.length()) +
                        " exceeds encoder max_len " + std::to_string(max_len));
        int n = 0;
        for (uint8_t m : s.attn_mask) n += m;
        batch_max = std::max(batch_max, n);
    }
    for (const auto& s : seqs) {
        const int len = std::min(s.length(), batch_max);
        b.offsets.push_back(b.total);
        b.lengths.push_back(len);
        b.spans.push_back({b.total, len, b.total, len});
        for (int i = 0; i < len; i++) {
            b.ids.push_back(s.ids[static_cast<size_t>(i)]);
            b.segments.push_back(s.segments[static_cast<size_t>(i)]);
            b.positions.push_back(i);
            b.valid.push_back(s.attn_mask[static_cast<size_t>(i)]);
        }
        b.total += len;
    }
    return b;
}

EncodeOut encode_text(Graph& g, const EncoderStack& stack, const PackedBatch& batch,
                      std::mt19937_64* drop_rng) {
    Tensor h = embed_tokens(g, stack, batch, drop_rng);
    for (int l = 0; l < stack.cfg.layers; l++) {
        const std::string p = "layer" + std::to_string(l) + ".txt.";
        h = self_attn_block(g, stack, p, h, batch.spans, batch.valid, drop_rng);
        h = ff_block(g, stack, p, h, drop_rng);
    }
    EncodeOut out;
    out.seq = h;
    out.cls_rows = batch.offsets;
    return out;
}

Tensor mlm_logits(Graph& g, const EncoderStack& stack, const Tensor& hidden) {
    return g.add_bias(g.matmul(hidden, stack.param("tok_emb"), false, true),
                      stack.param("mlm.bias"));
}

Tensor classify_unimodal(Graph& g, const EncoderStack& stack, const PackedBatch& batch,
                         std::mt19937_64* drop_rng) {
    if (stack.cfg.arch != Arch::unimodal)
        throw Error("classify_unimodal needs a unimodal stack, got " + arch_name(stack.cfg.arch));
    EncodeOut enc = encode_text(g, stack, batch, drop_rng);
    Tensor cls = g.gather_rows(enc.seq, enc.cls_rows);
    return linear(g, stack, cls, "head.w", "head.b");
}

EncodeOut encode_single_stream(Graph& g, const EncoderStack& stack, const RegionBatch& regions,
                               const PackedBatch& batch, std::mt19937_64* drop_rng) {
    if (stack.cfg.arch != Arch::single_stream)
        throw Error("encode_single_stream needs a single_stream stack, got " +
                    arch_name(stack.cfg.arch));
    if (static_cast<int>(regions.regions.size()) != batch.size())
        throw Error("region batch size does not match token batch size");
    std::vector<int> counts;
    Tensor reg = embed_regions(g, stack, regions, drop_rng, counts);
    Tensor txt = embed_tokens(g, stack, batch, drop_rng);

    // Joint sequence per sample: region rows first, then the text span.
    EncodeOut out;
    Tensor h;
    std::vector<AttnSpan> spans;
    std::vector<uint8_t> valid;
    if (!reg.defined()) {
        h = txt;
        spans = batch.spans;
        valid = batch.valid;
        out.cls_rows = batch.offsets;
    } else {
        std::vector<Tensor> parts;
        int joint_off = 0, reg_off = 0;
        for (int i = 0; i < batch.size(); i++) {
            const int k = counts[static_cast<size_t>(i)];
            const int len = batch.lengths[static_cast<size_t>(i)];
            if (k > 0) {
                parts.push_back(g.slice_rows(reg, reg_off, k));
                reg_off += k;
            }
            parts.push_back(g.slice_rows(txt, batch.offsets[static_cast<size_t>(i)], len));
            spans.push_back({joint_off, k + len, joint_off, k + len});
            for (int r = 0; r < k; r++) valid.push_back(1);
            for (int r = 0; r < len; r++)
                valid.push_back(batch.valid[static_cast<size_t>(batch.offsets[static_cast<size_t>(i)] + r)]);
            out.cls_rows.push_back(joint_off + k);
            joint_off += k + len;
        }
        h = g.concat_rows(parts);
    }
    for (int l = 0; l < stack.cfg.layers; l++) {
        const std::string p = "layer" + std::to_string(l) + ".txt.";
        h = self_attn_block(g, stack, p, h, spans, valid, drop_rng);
        h = ff_block(g, stack, p, h, drop_rng);
    }
    out.seq = h;
    return out;
}

EncodeOut encode_two_stream(Graph& g, const EncoderStack& stack, const RegionBatch& regions,
                            const PackedBatch& batch, std::mt19937_64* drop_rng) {
    if (stack.cfg.arch != Arch::two_stream)
        throw Error("encode_two_stream needs a two_stream stack, got " + arch_name(stack.cfg.arch));
    if (static_cast<int>(regions.regions.size()) != batch.size())
        throw Error("region batch size does not match token batch size");
    std::vector<int> counts;
    Tensor reg = embed_regions(g, stack, regions, drop_rng, counts);
    if (!reg.defined()) throw Error("two_stream needs at least one region per sample");

    // Image stream: the projected region rows, k per sample.
    EncodeOut out;
    std::vector<AttnSpan> img_spans;
    std::vector<uint8_t> img_valid;
    int img_off = 0;
    for (int i = 0; i < batch.size(); i++) {
        const int k = counts[static_cast<size_t>(i)];
        if (k == 0) throw Error("two_stream needs at least one region per sample");
        img_spans.push_back({img_off, k, img_off, k});
        for (int r = 0; r < k; r++) img_valid.push_back(1);
        out.img_first_rows.push_back(img_off);
        img_off += k;
    }
    Tensor m = reg;
    Tensor t = embed_tokens(g, stack, batch, drop_rng);

    // Cross spans: text queries over image keys and vice versa.
    std::vector<AttnSpan> t2m, m2t;
    for (int i = 0; i < batch.size(); i++) {
        const AttnSpan& ts = batch.spans[static_cast<size_t>(i)];
        const AttnSpan& ms = img_spans[static_cast<size_t>(i)];
        t2m.push_back({ts.q_off, ts.q_len, ms.kv_off, ms.kv_len});
        m2t.push_back({ms.q_off, ms.q_len, ts.kv_off, ts.kv_len});
    }

    for (int l = 0; l < stack.cfg.layers; l++) {
        const std::string pt = "layer" + std::to_string(l) + ".txt.";
        const std::string pm = "layer" + std::to_string(l) + ".img.";
        t = self_attn_block(g, stack, pt, t, batch.spans, batch.valid, drop_rng);
        m = self_attn_block(g, stack, pm, m, img_spans, img_valid, drop_rng);
        Tensor t2 = cross_attn(g, stack, pt, t, m, t2m, img_valid, drop_rng);
        Tensor m2 = cross_attn(g, stack, pm, m, t, m2t, batch.valid, drop_rng);
        t = ff_block(g, stack, pt, t2, drop_rng);
        m = ff_block(g, stack, pm, m2, drop_rng);
    }
    out.txt = t;
    out.img = m;
    out.cls_rows = batch.offsets;
    return out;
}

Tensor pool(Graph& g, const EncoderStack& stack, const EncodeOut& out) {
    if (stack.cfg.pooling == Pooling::product) {
        if (stack.cfg.arch != Arch::two_stream)
            throw Error("product pooling requires the two_stream architecture");
        Tensor img_first = g.gather_rows(out.img, out.img_first_rows);
        Tensor txt_first = g.gather_rows(out.txt, out.cls_rows);
        return g.mul(img_first, txt_first);
    }
    const Tensor& src = out.seq.defined() ? out.seq : out.txt;
    return g.gather_rows(src, out.cls_rows);
}

Tensor classify_multimodal(Graph& g, const EncoderStack& stack, const Tensor& pooled) {
    if (pooled.cols() != stack.cfg.hidden)
        throw Error("pooled dim " + std::to_string(pooled.cols()) + " does not match hidden " +
                    std::to_string(stack.cfg.hidden));
    Tensor h = g.gelu(linear(g, stack, pooled, "head.w1", "head.b1"));
    return linear(g, stack, h, "head.w2", "head.b2");
}

Tensor classify(Graph& g, const EncoderStack& stack, const RegionBatch& regions,
                const PackedBatch& batch, std::mt19937_64* drop_rng) {
    switch (stack.cfg.arch) {
        case Arch::unimodal:
            return classify_unimodal(g, stack, batch, drop_rng);
        case Arch::single_stream: {
            EncodeOut out = encode_single_stream(g, stack, regions, batch, drop_rng);
            return classify_multimodal(g, stack, pool(g, stack, out));
        }
        case Arch::two_stream: {
            EncodeOut out = encode_two_stream(g, stack, regions, batch, drop_rng);
            return classify_multimodal(g, stack, pool(g, stack, out));
        }
    }
    throw Error("bad arch enum");
}

void save_checkpoint(const EncoderStack& stack, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write checkpoint: " + path);
    const std::string cfg = stack.cfg.to_json();
    f.write("CESM", 4);
    const uint32_t clen = static_cast<uint32_t>(cfg.size());
    f.write(reinterpret_cast<const char*>(&clen), 4);
    f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    uint64_t h = 0xcbf29ce484222325ull;
    uint64_t count = 0;
    for (const auto& [name, t] : stack.params) count += static_cast<uint64_t>(t.numel());
    f.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [name, t] : stack.params) {
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.data().size() * sizeof(double)));
        h = fnv1a(t.data().data(), t.data().size() * sizeof(double), h);
    }
    f.write(reinterpret_cast<const char*>(&h), 8);
    if (!f) throw Error("short write on checkpoint: " + path);
}

EncoderStack load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "CESM") throw Error("bad checkpoint magic in " + path);
    uint32_t clen = 0;
    f.read(reinterpret_cast<char*>(&clen), 4);
    std::string cfg_json(clen, '\0');
    f.read(cfg_json.data(), clen);
    if (!f) throw Error("truncated checkpoint header in " + path);
    const EncoderConfig cfg = EncoderConfig::from_json(cfg_json);
    EncoderStack stack = EncoderStack::init(cfg, 0);
    uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 8);
    if (count != static_cast<uint64_t>(stack.param_count()))
        throw Error("checkpoint parameter count mismatch in " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    for (auto& [name, t] : stack.params) {
        f.read(reinterpret_cast<char*>(t.data().data()),
               static_cast<std::streamsize>(t.data().size() * sizeof(double)));
        h = fnv1a(t.data().data(), t.data().size() * sizeof(double), h);
    }
    uint64_t stored = 0;
    f.read(reinterpret_cast<char*>(&stored), 8);
    if (!f) throw Error("truncated checkpoint payload in " + path);
    if (stored != h) throw Error("checkpoint checksum mismatch in " + path);
    return stack;
}

void load_backbone(EncoderStack& dst, const EncoderStack& src,
                   const std::vector<std::string>& fresh_prefixes) {
    if (!(dst.cfg == src.cfg))
        throw Error("checkpoint config does not match target stack config");
    for (size_t i = 0; i < dst.params.size(); i++) {
        const std::string& name = dst.params[i].first;
        bool fresh = false;
        for (const auto& p : fresh_prefixes) fresh |= name.rfind(p, 0) == 0;
        if (fresh) continue;
        dst.params[i].second.data() = src.params[i].second.data();
    }
}

} // namespace ces
