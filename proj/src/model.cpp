#include "neuroclip/model.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "neuroclip/errors.hpp"

namespace neuroclip::model {

using ad::Tensor;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Init {
    std::mt19937_64 rng;
    std::normal_distribution<double> gauss{0.0, 1.0};
    ModelParams* m;

    NodePtr he_weight(const std::string& name, std::vector<std::size_t> shape,
                      std::size_t fan_in) {
        return weight(name, std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)));
    }
    // Projection layers feed non-rectified paths (attention scores, gating
    // products); the gentler scale keeps initial logits near zero.
    NodePtr xavier_weight(const std::string& name, std::vector<std::size_t> shape,
                          std::size_t fan_in, std::size_t fan_out) {
        return weight(name, std::move(shape),
                      std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
    }
    NodePtr weight(const std::string& name, std::vector<std::size_t> shape, double sd) {
        Tensor t(shape);
        for (auto& v : t.flat()) v = sd * gauss(rng);
        auto p = ad::parameter(std::move(t), name);
        m->named_params.emplace_back(name, p);
        return p;
    }
    NodePtr zeros(const std::string& name, std::vector<std::size_t> shape) {
        auto p = ad::parameter(Tensor(shape), name);
        m->named_params.emplace_back(name, p);
        return p;
    }

    Conv1dLayer conv(const std::string& name, std::size_t cout, std::size_t cin,
                     std::size_t k, std::size_t stride, std::size_t pad) {
        Conv1dLayer l;
        l.w = he_weight(name + ".w", {cout, cin, k}, cin * k);
        l.b = zeros(name + ".b", {cout, 1});
        l.stride = stride;
        l.padding = pad;
        return l;
    }

    ResidualBlock block(const std::string& name, std::size_t cin, std::size_t cout) {
        ResidualBlock b;
        b.c1 = conv(name + ".c1", cout, cin, 3, 1, 1);
        b.c2 = conv(name + ".c2", cout, cout, 3, 1, 1);
        if (cin != cout) {
            b.proj = conv(name + ".proj", cout, cin, 1, 1, 0);
            b.has_proj = true;
        }
        return b;
    }

    EncoderParams encoder(const std::string& name, std::size_t channels,
                          const ModelDims& d) {
        EncoderParams e;
        e.in_channels = channels;
        e.stem = conv(name + ".stem", d.stem_width, channels, 7, 2, 3);
        e.b1 = block(name + ".b1", d.stem_width, d.block_widths_1);
        e.b2 = block(name + ".b2", d.block_widths_1, d.block_widths_2);
        e.b3 = block(name + ".b3", d.block_widths_2, d.block_widths_3);
        e.token_w = xavier_weight(name + ".token.w", {d.block_widths_3, d.embed_dim},
                                  d.block_widths_3, d.embed_dim);
        e.token_b = zeros(name + ".token.b", {1, d.embed_dim});
        e.pool_w = xavier_weight(name + ".pool.w", {d.block_widths_3, d.embed_dim},
                                 d.block_widths_3, d.embed_dim);
        e.pool_b = zeros(name + ".pool.b", {1, d.embed_dim});
        return e;
    }
};

NodePtr apply_conv(const Conv1dLayer& l, const NodePtr& x) {
    return ad::add_colvec(ad::conv1d(x, l.w, l.stride, l.padding), l.b);
}

NodePtr apply_block(const ResidualBlock& b, const NodePtr& x) {
    NodePtr h = apply_conv(b.c2, ad::relu(apply_conv(b.c1, x)));
    NodePtr skip = b.has_proj ? apply_conv(b.proj, x) : x;
    return ad::relu(ad::add(h, skip));
}

}  // namespace

Tensor tensor_from(const Matrix& m) {
    Tensor t({m.rows(), m.cols()});
    t.flat() = m.flat();
    return t;
}

std::vector<NodePtr> ModelParams::all_params() const {
    std::vector<NodePtr> out;
    out.reserve(named_params.size());
    for (const auto& [name, p] : named_params) out.push_back(p);
    return out;
}

std::vector<NodePtr> ModelParams::encoder_params() const {
    std::vector<NodePtr> out;
    for (const auto& [name, p] : named_params)
        if (name.rfind("eeg.", 0) == 0 || name.rfind("fnirs.", 0) == 0) out.push_back(p);
    return out;
}

std::vector<NodePtr> ModelParams::fusion_params() const {
    std::vector<NodePtr> out;
    for (const auto& [name, p] : named_params)
        if (name.rfind("integrator.", 0) == 0 || name.rfind("gating.", 0) == 0)
            out.push_back(p);
    return out;
}

std::vector<NodePtr> ModelParams::head_params(const std::string& head_id) const {
    std::vector<NodePtr> out;
    const std::string prefix = "head." + head_id + ".";
    for (const auto& [name, p] : named_params)
        if (name.rfind(prefix, 0) == 0) out.push_back(p);
    if (out.empty()) throw DataError("unknown decoder head '" + head_id + "'");
    return out;
}

const DecoderHead& ModelParams::head(const std::string& head_id) const {
    auto it = heads.find(head_id);
    if (it == heads.end()) throw DataError("unknown decoder head '" + head_id + "'");
    return it->second;
}

void ModelParams::zero_all_grads() const {
    for (const auto& [name, p] : named_params) p->zero_grad();
}

ModelParams make_model(const ModelDims& dims, std::uint64_t seed) {
    if (dims.embed_dim % dims.n_heads != 0)
        throw ConfigError("embed_dim must be divisible by n_heads");
    ModelParams m;
    m.dims = dims;
    Init init{std::mt19937_64(seed), {}, &m};
    m.eeg_enc = init.encoder("eeg", dims.eeg_channels, dims);
    m.fnirs_enc = init.encoder("fnirs", dims.fnirs_channels, dims);
    m.align.tau = init.zeros("align.tau", {1, 1});
    m.align.beta = init.zeros("align.beta", {1, 1});
    const std::size_t dk = dims.embed_dim / dims.n_heads;
    m.integrator.n_heads = dims.n_heads;
    for (std::size_t h = 0; h < dims.n_heads; ++h) {
        const std::string base = "integrator.h" + std::to_string(h);
        m.integrator.wq.push_back(
            init.xavier_weight(base + ".wq", {dims.embed_dim, dk}, dims.embed_dim, dk));
        m.integrator.wk.push_back(
            init.xavier_weight(base + ".wk", {dims.embed_dim, dk}, dims.embed_dim, dk));
        m.integrator.wv.push_back(
            init.xavier_weight(base + ".wv", {dims.embed_dim, dk}, dims.embed_dim, dk));
    }
    m.integrator.wo = init.xavier_weight("integrator.wo",
                                         {dims.embed_dim, dims.embed_dim},
                                         dims.embed_dim, dims.embed_dim);
    m.gating.w = init.xavier_weight("gating.w", {dims.embed_dim, dims.embed_dim},
                                    dims.embed_dim, dims.embed_dim);
    m.gating.v = init.xavier_weight("gating.v", {dims.embed_dim, dims.embed_dim},
                                    dims.embed_dim, dims.embed_dim);
    return m;
}

void add_head(ModelParams& m, const std::string& head_id, std::size_t n_classes,
              std::uint64_t seed) {
    if (m.heads.count(head_id))
        throw ConfigError("decoder head '" + head_id + "' already registered");
    if (n_classes < 2) throw DataError("decoder head needs >= 2 classes");
    Init init{std::mt19937_64(seed), {}, &m};
    const std::size_t D = m.dims.embed_dim;
    DecoderHead h;
    h.n_classes = n_classes;
    const std::string base = "head." + head_id;
    h.w1 = init.xavier_weight(base + ".w1", {D, D}, D, D);
    h.b1 = init.zeros(base + ".b1", {1, D});
    h.w2 = init.xavier_weight(base + ".w2", {D, n_classes}, D, n_classes);
    h.b2 = init.zeros(base + ".b2", {1, n_classes});
    m.heads[head_id] = h;
}

EncodeOut encode(const EncoderParams& enc, const Matrix& epoch) {
    if (epoch.rows() != enc.in_channels)
        throw ShapeError("encode: epoch has " + std::to_string(epoch.rows()) +
                         " channels, encoder expects " + std::to_string(enc.in_channels));
    NodePtr x = ad::constant(tensor_from(epoch));
    NodePtr h = ad::relu(apply_conv(enc.stem, x));
    h = apply_block(enc.b1, h);
    h = apply_block(enc.b2, h);
    h = apply_block(enc.b3, h);  // [N_K x T']

    EncodeOut out;
    out.activations = h;
    out.tokens = ad::add_rowvec(ad::matmul(ad::transpose(h), enc.token_w), enc.token_b);
    NodePtr mean_t = ad::transpose(ad::mean_axis(h, 1));  // [1 x N_K]
    out.pooled_raw = ad::add_rowvec(ad::matmul(mean_t, enc.pool_w), enc.pool_b);
    out.pooled = ad::l2_normalize(out.pooled_raw, 1);
    return out;
}

NodePtr similarity_logits(const NodePtr& eeg_embeds, const NodePtr& fnirs_embeds,
                          const AlignmentHead& head) {
    const auto& xe = eeg_embeds->value;
    const auto& xf = fnirs_embeds->value;
    if (xe.rank() != 2 || xf.rank() != 2 || xe.cols() != xf.cols() ||
        xe.rows() != xf.rows())
        throw ShapeError("similarity_logits: embedding shapes " + xe.shape_str() +
                         " vs " + xf.shape_str());
    for (const auto* t : {&xe, &xf}) {
        for (std::size_t r = 0; r < t->rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < t->cols(); ++c) s += t->at(r, c) * t->at(r, c);
            if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
                throw DataError("similarity_logits: embedding row " + std::to_string(r) +
                                " is not unit-norm");
        }
    }
    NodePtr alpha = ad::vexp(head.tau);
    return ad::add(ad::mul(ad::matmul(fnirs_embeds, ad::transpose(eeg_embeds)), alpha),
                   head.beta);
}

NodePtr contrastive_loss(const NodePtr& similarity) {
    const auto& s = similarity->value;
    if (s.rank() != 2 || s.rows() != s.cols())
        throw ShapeError("contrastive_loss: similarity must be square, got " +
                         s.shape_str());
    std::vector<std::size_t> diag(s.rows());
    for (std::size_t i = 0; i < s.rows(); ++i) diag[i] = i;
    NodePtr l_f = ad::cross_entropy_logits(similarity, diag);
    NodePtr l_e = ad::cross_entropy_logits(ad::transpose(similarity), diag);
    return ad::scale(ad::add(l_f, l_e), 0.5);
}

NodePtr cross_attention_fuse(const NodePtr& eeg_tokens, const NodePtr& fnirs_tokens,
                             const IntegratorParams& p) {
    const std::size_t D = p.wo->value.rows();
    if (eeg_tokens->value.cols() != D || fnirs_tokens->value.cols() != D)
        throw ShapeError("cross_attention_fuse: token dim " +
                         eeg_tokens->value.shape_str() + "/" +
                         fnirs_tokens->value.shape_str() + " vs D=" + std::to_string(D));
    const double dk = static_cast<double>(D) / static_cast<double>(p.n_heads);
    std::vector<NodePtr> heads;
    heads.reserve(p.n_heads);
    for (std::size_t h = 0; h < p.n_heads; ++h) {
        NodePtr q = ad::matmul(eeg_tokens, p.wq[h]);
        NodePtr k = ad::matmul(fnirs_tokens, p.wk[h]);
        NodePtr v = ad::matmul(fnirs_tokens, p.wv[h]);
        NodePtr scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(dk));
        heads.push_back(ad::matmul(ad::softmax(scores, 1), v));
    }
    return ad::matmul(ad::concat(heads, 1), p.wo);
}

NodePtr roi_gated_refine(const NodePtr& fused, const GatingParams& g) {
    if (fused->value.cols() != g.w->value.rows())
        throw ShapeError("roi_gated_refine: input " + fused->value.shape_str() +
                         " vs gate " + g.w->value.shape_str());
    NodePtr fm = ad::gelu(fused);
    return ad::mul(ad::silu(ad::matmul(fm, g.w)), ad::matmul(fm, g.v));
}

namespace {

NodePtr apply_head(const DecoderHead& h, const NodePtr& x) {
    NodePtr hidden = ad::gelu(ad::add_rowvec(ad::matmul(x, h.w1), h.b1));
    return ad::add_rowvec(ad::matmul(hidden, h.w2), h.b2);
}

}  // namespace

ForwardOut forward_full(const ModelParams& m, const MultimodalEpoch& epoch,
                        const std::string& head_id) {
    const DecoderHead& head = m.head(head_id);
    EncodeOut e = encode(m.eeg_enc, epoch.eeg);
    EncodeOut f = encode(m.fnirs_enc, epoch.fnirs);
    NodePtr fused = cross_attention_fuse(e.tokens, f.tokens, m.integrator);
    NodePtr refined = roi_gated_refine(fused, m.gating);
    NodePtr pooled = ad::transpose(ad::mean_axis(ad::transpose(refined), 1));  // [1 x D]
    ForwardOut out;
    out.logits = apply_head(head, pooled);
    out.activations = e.activations;
    return out;
}

ForwardOut forward_unimodal(const ModelParams& m, const Matrix& epoch, Modality mod,
                            const std::string& head_id) {
    const DecoderHead& head = m.head(head_id);
    EncodeOut e = encode(mod == Modality::eeg ? m.eeg_enc : m.fnirs_enc, epoch);
    ForwardOut out;
    // Decode from the un-normalized projection: response magnitude is part of
    // the class signal and L2 normalization discards it.
    out.logits = apply_head(head, e.pooled_raw);
    out.activations = e.activations;
    return out;
}

NodePtr fused_embedding(const ModelParams& m, const MultimodalEpoch& epoch) {
    EncodeOut e = encode(m.eeg_enc, epoch.eeg);
    EncodeOut f = encode(m.fnirs_enc, epoch.fnirs);
    NodePtr refined =
        roi_gated_refine(cross_attention_fuse(e.tokens, f.tokens, m.integrator), m.gating);
    return ad::transpose(ad::mean_axis(ad::transpose(refined), 1));
}

void save_checkpoint(const ModelParams& m, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    manifest["dtype"] = "f64le";
    json dims;
    dims["eeg_channels"] = m.dims.eeg_channels;
    dims["fnirs_channels"] = m.dims.fnirs_channels;
    dims["embed_dim"] = m.dims.embed_dim;
    dims["stem_width"] = m.dims.stem_width;
    dims["block_widths"] = {m.dims.block_widths_1, m.dims.block_widths_2,
                            m.dims.block_widths_3};
    dims["n_heads"] = m.dims.n_heads;
    manifest["dims"] = dims;
    json heads = json::object();
    for (const auto& [id, h] : m.heads) heads[id] = h.n_classes;
    manifest["heads"] = heads;

    std::string blob;
    json arrays = json::array();
    std::size_t offset = 0;
    for (const auto& [name, p] : m.named_params) {
        json rec;
        rec["name"] = name;
        rec["shape"] = p->value.shape();
        rec["offset"] = offset;
        arrays.push_back(rec);
        const auto& data = p->value.flat();
        const std::size_t bytes = data.size() * sizeof(double);
        blob.append(reinterpret_cast<const char*>(data.data()), bytes);
        offset += data.size();
    }
    manifest["arrays"] = arrays;

    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    std::ofstream bf(fs::path(dir) / "params.f64le", std::ios::binary);
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!mf || !bf) throw DataError("checkpoint write failed under '" + dir + "'");
}

ModelParams load_checkpoint(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("cannot open checkpoint manifest in '" + dir + "'");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw DataError("corrupt checkpoint manifest: " + std::string(e.what()));
    }
    ModelDims dims;
    const auto& jd = manifest.at("dims");
    dims.eeg_channels = jd.at("eeg_channels").get<std::size_t>();
    dims.fnirs_channels = jd.at("fnirs_channels").get<std::size_t>();
    dims.embed_dim = jd.at("embed_dim").get<std::size_t>();
    dims.stem_width = jd.at("stem_width").get<std::size_t>();
    dims.block_widths_1 = jd.at("block_widths").at(0).get<std::size_t>();
    dims.block_widths_2 = jd.at("block_widths").at(1).get<std::size_t>();
    dims.block_widths_3 = jd.at("block_widths").at(2).get<std::size_t>();
    dims.n_heads = jd.at("n_heads").get<std::size_t>();

    ModelParams m = make_model(dims, 0);
    for (const auto& [id, n] : manifest.at("heads").items())
        add_head(m, id, n.get<std::size_t>(), 0);

    std::ifstream bf(fs::path(dir) / "params.f64le", std::ios::binary);
    if (!bf) throw DataError("cannot open checkpoint blob in '" + dir + "'");
    std::stringstream ss;
    ss << bf.rdbuf();
    const std::string blob = ss.str();

    std::map<std::string, NodePtr> by_name;
    for (const auto& [name, p] : m.named_params) by_name[name] = p;
    std::size_t expect_total = 0;
    for (const auto& rec : manifest.at("arrays")) {
        const std::string name = rec.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw DataError("checkpoint names unknown parameter '" + name + "'");
        auto shape = rec.at("shape").get<std::vector<std::size_t>>();
        NodePtr p = it->second;
        if (shape != p->value.shape())
            throw DataError("checkpoint shape mismatch for '" + name + "'");
        const std::size_t offset = rec.at("offset").get<std::size_t>();
        const std::size_t count = p->value.numel();
        if ((offset + count) * sizeof(double) > blob.size())
            throw DataError("checkpoint blob too small for '" + name + "'");
        std::memcpy(p->value.flat().data(), blob.data() + offset * sizeof(double),
                    count * sizeof(double));
        expect_total += count;
    }
    if (expect_total * sizeof(double) != blob.size())
        throw DataError("checkpoint blob size disagrees with manifest");
    return m;
}

}  // namespace neuroclip::model
