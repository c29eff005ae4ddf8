#include "dastgcn/model.hpp"

#include <cmath>

#include <json.hpp>

#include "dastgcn/adjattn.hpp"
#include "dastgcn/gnn.hpp"

namespace dastgcn {

void ModelConfig::validate() const {
    auto positive = [](int64_t v, const char* what) {
        if (v < 1) throw std::invalid_argument(std::string(what) + " must be >= 1");
    };
    positive(n_max, "n_max");
    positive(t_obs, "t_obs");
    positive(t_pred, "t_pred");
    positive(embed_dim, "embed_dim");
    positive(gat_heads, "gat_heads");
    positive(gat_head_dim, "gat_head_dim");
    if (recon_heads != 1) throw std::invalid_argument("recon_heads must be 1");
    auto odd_small = [](int64_t v, const char* what) {
        if (v != 1 && v != 3 && v != 5 && v != 7)
            throw std::invalid_argument(std::string(what) + " must be one of {1,3,5,7}");
    };
    odd_small(stgcn_layers, "stgcn_layers");
    odd_small(txp_layers, "txp_layers");
    if (d_k < 0) throw std::invalid_argument("d_k must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
}

std::string ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["n_max"] = n_max;
    j["t_obs"] = t_obs;
    j["t_pred"] = t_pred;
    j["embed_dim"] = embed_dim;
    j["stgcn_layers"] = stgcn_layers;
    j["txp_layers"] = txp_layers;
    j["gat_heads"] = gat_heads;
    j["gat_head_dim"] = gat_head_dim;
    j["recon_heads"] = recon_heads;
    j["d_k"] = d_k;
    j["disable_gat"] = disable_gat;
    j["disable_adj_attention"] = disable_adj_attention;
    j["scaled_scores"] = scaled_scores;
    j["residual_adjacency"] = residual_adjacency;
    j["gat_on_raw"] = gat_on_raw;
    j["dropout"] = dropout;
    j["kernel_space"] = kernel_space == KernelSpace::Normalized ? "normalized" : "raw";
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    ModelConfig c;
    c.n_max = j.at("n_max").get<int64_t>();
    c.t_obs = j.at("t_obs").get<int64_t>();
    c.t_pred = j.at("t_pred").get<int64_t>();
    c.embed_dim = j.at("embed_dim").get<int64_t>();
    c.stgcn_layers = j.at("stgcn_layers").get<int64_t>();
    c.txp_layers = j.at("txp_layers").get<int64_t>();
    c.gat_heads = j.at("gat_heads").get<int64_t>();
    c.gat_head_dim = j.at("gat_head_dim").get<int64_t>();
    c.recon_heads = j.at("recon_heads").get<int64_t>();
    c.d_k = j.at("d_k").get<int64_t>();
    c.disable_gat = j.at("disable_gat").get<bool>();
    c.disable_adj_attention = j.at("disable_adj_attention").get<bool>();
    c.scaled_scores = j.at("scaled_scores").get<bool>();
    c.residual_adjacency = j.at("residual_adjacency").get<bool>();
    c.gat_on_raw = j.at("gat_on_raw").get<bool>();
    c.dropout = j.at("dropout").get<double>();
    c.kernel_space =
        j.at("kernel_space").get<std::string>() == "raw" ? KernelSpace::Raw : KernelSpace::Normalized;
    c.validate();
    return c;
}

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    init_params(seed);
}

void Model::init_params(uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int64_t m = cfg_.embed_dim;
    const int64_t n_max = cfg_.n_max;
    const int64_t dk = cfg_.dk();

    // Creation order is fixed so a given seed always yields the same weights.
    if (!cfg_.disable_adj_attention) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(n_max));
        params_.create_uniform("adjattn.wq", {dk, n_max}, bound, rng);
        params_.create_uniform("adjattn.wk", {dk, n_max}, bound, rng);
        params_.create_uniform("adjattn.wv", {n_max, n_max}, bound, rng);
    }
    params_.create_uniform("embed.w", {3, m}, 1.0 / std::sqrt(3.0), rng);
    for (int64_t l = 0; l < cfg_.stgcn_layers; ++l)
        params_.create_uniform("stgcn.l" + std::to_string(l) + ".w", {m, m},
                               1.0 / std::sqrt(static_cast<double>(m)), rng);
    if (!cfg_.disable_gat) {
        const int64_t f_in = cfg_.gat_on_raw ? 3 : m;
        const int64_t f_out = cfg_.gat_head_dim;
        for (int64_t k = 0; k < cfg_.gat_heads; ++k) {
            const std::string prefix = "gat.h" + std::to_string(k) + ".";
            params_.create_uniform(prefix + "w", {f_in, f_out},
                                   1.0 / std::sqrt(static_cast<double>(f_in)), rng);
            params_.create_uniform(prefix + "a", {2 * f_out, 1},
                                   1.0 / std::sqrt(static_cast<double>(2 * f_out)), rng);
        }
        params_.create_uniform("fuse.w", {m + cfg_.gat_heads * cfg_.gat_head_dim, m},
                               1.0 / std::sqrt(static_cast<double>(m + cfg_.gat_heads * cfg_.gat_head_dim)),
                               rng);
    }
    for (int64_t l = 0; l < cfg_.txp_layers; ++l) {
        const int64_t c_in = l == 0 ? cfg_.t_obs : cfg_.t_pred;
        params_.create_uniform("txp.l" + std::to_string(l) + ".k", {cfg_.t_pred, c_in, 3},
                               1.0 / std::sqrt(static_cast<double>(c_in * 3)), rng);
    }
    params_.create_uniform("head.out_proj", {m, 9}, 1.0 / std::sqrt(static_cast<double>(m)), rng);
}

Model::Forward Model::forward(Tape& tape, const SceneGraph& graph,
                              const std::vector<Tensor>* adj_override,
                              std::mt19937_64* dropout_rng, GradBuffer* grad_buffer) {
    if (graph.n_max != cfg_.n_max || graph.t_obs != cfg_.t_obs || graph.t_pred != cfg_.t_pred)
        throw ShapeMismatch("scene graph does not match model geometry");
    const int64_t n_max = cfg_.n_max;
    const int64_t m = cfg_.embed_dim;
    const Tensor& mask = graph.mask;

    auto watch = [&](const std::string& name) {
        Param& p = params_.get(name);
        Tensor* sink = &p.grad;
        if (grad_buffer != nullptr)
            sink = &grad_buffer->try_emplace(name, Tensor::zeros(p.value.shape())).first->second;
        return tape.leaf_grad(p.value, sink, "param");
    };

    AdjAttnWeights attn_w;
    if (!cfg_.disable_adj_attention) {
        attn_w.wq = watch("adjattn.wq");
        attn_w.wk = watch("adjattn.wk");
        attn_w.wv = watch("adjattn.wv");
    }
    Var w_embed = watch("embed.w");
    std::vector<Var> stgcn_w;
    for (int64_t l = 0; l < cfg_.stgcn_layers; ++l)
        stgcn_w.push_back(watch("stgcn.l" + std::to_string(l) + ".w"));
    std::vector<GatHeadWeights> gat_w;
    Var fuse_w;
    if (!cfg_.disable_gat) {
        for (int64_t k = 0; k < cfg_.gat_heads; ++k) {
            const std::string prefix = "gat.h" + std::to_string(k) + ".";
            gat_w.push_back({watch(prefix + "w"), watch(prefix + "a")});
        }
        fuse_w = watch("fuse.w");
    }
    TxpWeights txp;
    for (int64_t l = 0; l < cfg_.txp_layers; ++l)
        txp.layers.push_back(watch("txp.l" + std::to_string(l) + ".k"));
    Var out_proj = watch("head.out_proj");

    // Per-step branch evaluation.
    std::vector<Var> fused_steps;
    fused_steps.reserve(static_cast<size_t>(cfg_.t_obs));
    for (int64_t t = 0; t < cfg_.t_obs; ++t) {
        Var adj = tape.leaf(graph.adj_norm[static_cast<size_t>(t)], "adj");
        Var obs = tape.leaf(graph.obs[static_cast<size_t>(t)], "obs");
        Var h = matmul(obs, w_embed);  // n_max x m

        Var a_prime;
        if (adj_override != nullptr)
            a_prime = tape.leaf((*adj_override)[static_cast<size_t>(t)], "adj_override");
        else if (cfg_.disable_adj_attention)
            a_prime = adj;
        else
            a_prime = reconstruct_step(adj, attn_w, mask, cfg_.scaled_scores);
        if (cfg_.residual_adjacency && adj_override == nullptr && !cfg_.disable_adj_attention)
            a_prime = add(adj, a_prime);

        Var x = h;
        for (Var w : stgcn_w) x = stgcn_layer(a_prime, x, w, mask);

        Var fused = x;
        if (!cfg_.disable_gat) {
            Var gat_in = cfg_.gat_on_raw ? obs : h;
            Var gat_out = gat_layer(gat_in, gat_w, mask);
            fused = fuse(x, gat_out, fuse_w, mask);
        }
        if (cfg_.dropout > 0.0 && dropout_rng != nullptr) {
            std::bernoulli_distribution keep(1.0 - cfg_.dropout);
            Tensor dm({n_max, m});
            for (int64_t i = 0; i < dm.numel(); ++i)
                dm[i] = keep(*dropout_rng) ? 1.0 / (1.0 - cfg_.dropout) : 0.0;
            fused = mul(fused, tape.leaf(std::move(dm), "dropout"));
        }
        fused_steps.push_back(fused);
    }

    // Per-node temporal extrapolation and Gaussian head.
    Forward out;
    out.real_nodes = graph.n_real;
    out.forecast.node_count = graph.n_real;
    out.forecast.t_pred = cfg_.t_pred;
    out.forecast.mu = Tensor({graph.n_real, cfg_.t_pred, 3});
    out.forecast.lfac = Tensor({graph.n_real, cfg_.t_pred, 9});

    Var loss_sum;
    for (int64_t i = 0; i < graph.n_real; ++i) {
        Tensor pick({1, n_max});
        pick.at(0, i) = 1.0;
        Var row_sel = tape.leaf(std::move(pick), "node_sel");
        std::vector<Var> rows;
        rows.reserve(static_cast<size_t>(cfg_.t_obs));
        for (Var f : fused_steps) rows.push_back(matmul(row_sel, f));
        Var seq = concat(rows, 0);  // t_obs x m

        Var feat = txp_node_forward(seq, txp);  // t_pred x m
        NodeGaussian g = emit_gaussians_node(feat, out_proj);
        out.clamped_factors += g.clamped;

        Tensor truth_i({cfg_.t_pred, 3});
        for (int64_t s = 0; s < cfg_.t_pred; ++s)
            for (int64_t c = 0; c < 3; ++c) truth_i.at(s, c) = graph.truth.at(s, c, i);
        Var nll = node_nll(g, tape.leaf(std::move(truth_i), "truth"));
        loss_sum = loss_sum.valid() ? add(loss_sum, nll) : nll;

        const Tensor& mu_v = g.mu.value();
        const Tensor& ld_v = g.log_diag.value();
        const Tensor& off_v = g.off_diag.value();
        for (int64_t s = 0; s < cfg_.t_pred; ++s) {
            for (int64_t c = 0; c < 3; ++c) out.forecast.mu.at(i, s, c) = mu_v.at(s, c);
            double* l = out.forecast.lfac.data() + (i * cfg_.t_pred + s) * 9;
            l[0] = std::exp(ld_v.at(s, 0));
            l[4] = std::exp(ld_v.at(s, 1));
            l[8] = std::exp(ld_v.at(s, 2));
            l[3] = off_v.at(s, 0);
            l[6] = off_v.at(s, 1);
            l[7] = off_v.at(s, 2);
        }
    }
    if (!loss_sum.valid()) loss_sum = tape.leaf(Tensor::scalar(0.0), "empty_scene");
    out.loss_sum = loss_sum;
    return out;
}

void Model::reduce_gradients(const GradBuffer& buffer, double factor) {
    for (const auto& [name, g] : buffer) {
        Tensor scaled = g;
        scaled.scale_inplace(factor);
        params_.get(name).grad.add_inplace(scaled);
    }
}

std::vector<Tensor> Model::reconstructed_adjacency(const SceneGraph& graph) {
    std::vector<Tensor> out;
    if (cfg_.disable_adj_attention) {
        out = graph.adj_norm;
        return out;
    }
    Tape tape;
    AdjAttnWeights w{tape.leaf(params_.get("adjattn.wq").value, "wq"),
                     tape.leaf(params_.get("adjattn.wk").value, "wk"),
                     tape.leaf(params_.get("adjattn.wv").value, "wv")};
    for (int64_t t = 0; t < cfg_.t_obs; ++t) {
        Var adj = tape.leaf(graph.adj_norm[static_cast<size_t>(t)], "adj");
        Var a_prime = reconstruct_step(adj, w, graph.mask, cfg_.scaled_scores);
        if (cfg_.residual_adjacency) a_prime = add(adj, a_prime);
        out.push_back(a_prime.value());
    }
    return out;
}

void Model::save(const std::string& path) const { save_checkpoint(path, params_, cfg_.to_json()); }

Model Model::load(const std::string& path) {
    ParamStore probe;
    const std::string meta = load_checkpoint(path, probe);
    Model model(ModelConfig::from_json(meta), 0);
    load_checkpoint(path, model.params_);
    return model;
}

}  // namespace dastgcn
