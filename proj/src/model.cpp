#include "ccast/model.hpp"

#include <cmath>
#include <sstream>

#include "ccast/ckpt.hpp"

namespace ccast {

CsmConfig CsmConfig::defaults() {
    CsmConfig c;
    for (VariableId v : all_variables()) {
        Sphere s = var_sphere(v);
        if (s == Sphere::Atmosphere || s == Sphere::Land) {
            c.atm_vars.push_back(v);
        } else {
            c.ocn_vars.push_back(v);
        }
    }
    return c;
}

void CsmConfig::validate() const {
    if (atm_vars.empty() || ocn_vars.empty()) {
        throw DataError("config: both spheres need at least one variable");
    }
    for (VariableId v : atm_vars) {
        Sphere s = var_sphere(v);
        if (s != Sphere::Atmosphere && s != Sphere::Land) {
            throw DataError("config: " + var_name(v) + " is not an atmosphere/land variable");
        }
    }
    for (VariableId v : ocn_vars) {
        Sphere s = var_sphere(v);
        if (s != Sphere::Ocean && s != Sphere::SeaIce) {
            throw DataError("config: " + var_name(v) + " is not an ocean/sea-ice variable");
        }
    }
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw DataError("config: d_model must be divisible by n_heads");
    }
    if (blocks_per_stack == 0 || coupling_every == 0 ||
        blocks_per_stack % coupling_every != 0) {
        throw DataError("config: blocks_per_stack must be divisible by coupling_every");
    }
    if (patch == 0 || nlat % patch != 0 || nlon % patch != 0) {
        throw DataError("config: grid does not tile by the patch size");
    }
    if (rollout_days == 0 || ensemble_size == 0) {
        throw DataError("config: rollout_days and ensemble_size must be positive");
    }
}

namespace {

class ParamInit {
public:
    explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

    Tensor normal(std::vector<std::size_t> shape, double sd) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        for (double& v : t.values()) v = sd * rng_.normal();
        return t;
    }

    LinearParams linear(std::size_t fan_in, std::size_t fan_out) {
        double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
        return {normal({fan_in, fan_out}, sd), Tensor::zeros({fan_out}, true)};
    }

    BlockParams block(std::size_t d, std::size_t ff_mult) {
        BlockParams bp;
        bp.ln1_g = Tensor::full({d}, 1.0, true);
        bp.ln1_b = Tensor::zeros({d}, true);
        bp.ln2_g = Tensor::full({d}, 1.0, true);
        bp.ln2_b = Tensor::zeros({d}, true);
        bp.q = linear(d, d);
        bp.k = linear(d, d);
        bp.v = linear(d, d);
        bp.o = linear(d, d);
        bp.ff1 = linear(d, ff_mult * d);
        bp.ff2 = linear(ff_mult * d, d);
        return bp;
    }

private:
    Rng rng_;
};

constexpr double k_init_log_sigma = -2.0;

SphereParams init_sphere(ParamInit& pi, const CsmConfig& cfg, std::size_t n_vars) {
    SphereParams sp;
    const std::size_t feat = 2 * n_vars * cfg.patch * cfg.patch;
    sp.embed = pi.linear(feat, cfg.d_model);
    sp.pos = pi.normal({cfg.tokens(), cfg.d_model}, 0.02);
    sp.perturb.l1 = pi.linear(cfg.d_model, cfg.perturb_hidden);
    // Last perturbation layer starts at zero so mu = 0 and log sigma sits at
    // a small constant; the network grows into the distribution during
    // training.
    sp.perturb.l2 = {Tensor::zeros({cfg.perturb_hidden, 2 * cfg.d_model}, true),
                     Tensor::zeros({2 * cfg.d_model}, true)};
    for (std::size_t i = cfg.d_model; i < 2 * cfg.d_model; ++i) {
        sp.perturb.l2.b.values()[i] = k_init_log_sigma;
    }
    for (std::size_t i = 0; i < cfg.blocks_per_stack; ++i) {
        sp.blocks.push_back(pi.block(cfg.d_model, cfg.ff_mult));
    }
    sp.dec_ln_g = Tensor::full({cfg.d_model}, 1.0, true);
    sp.dec_ln_b = Tensor::zeros({cfg.d_model}, true);
    sp.dec = pi.linear(cfg.d_model, n_vars * cfg.patch * cfg.patch);
    sp.norm_mean.assign(n_vars, 0.0);
    sp.norm_std.assign(n_vars, 1.0);
    return sp;
}

}  // namespace

CsmParams CsmParams::init(const CsmConfig& config, std::uint64_t seed) {
    config.validate();
    CsmParams p;
    p.config = config;
    ParamInit pi(derive_seed(seed, seed_purpose::param_init, 0));
    p.atm = init_sphere(pi, config, config.atm_vars.size());
    p.ocn = init_sphere(pi, config, config.ocn_vars.size());
    for (std::size_t c = 0; c < config.coupling_blocks(); ++c) {
        CouplingParams cp;
        cp.block = pi.block(2 * config.d_model, config.ff_mult);
        cp.out = {Tensor::zeros({2 * config.d_model, 2 * config.d_model}, true),
                  Tensor::zeros({2 * config.d_model}, true)};
        p.coupling.push_back(std::move(cp));
    }
    return p;
}

namespace {

void collect_linear(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
                    const LinearParams& lp) {
    out.emplace_back(name + ".w", lp.w);
    out.emplace_back(name + ".b", lp.b);
}

void collect_block(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
                   const BlockParams& bp) {
    out.emplace_back(name + ".ln1.g", bp.ln1_g);
    out.emplace_back(name + ".ln1.b", bp.ln1_b);
    out.emplace_back(name + ".ln2.g", bp.ln2_g);
    out.emplace_back(name + ".ln2.b", bp.ln2_b);
    collect_linear(out, name + ".q", bp.q);
    collect_linear(out, name + ".k", bp.k);
    collect_linear(out, name + ".v", bp.v);
    collect_linear(out, name + ".o", bp.o);
    collect_linear(out, name + ".ff1", bp.ff1);
    collect_linear(out, name + ".ff2", bp.ff2);
}

void collect_sphere(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
                    const SphereParams& sp) {
    collect_linear(out, name + ".embed", sp.embed);
    out.emplace_back(name + ".pos", sp.pos);
    collect_linear(out, name + ".perturb.l1", sp.perturb.l1);
    collect_linear(out, name + ".perturb.l2", sp.perturb.l2);
    for (std::size_t i = 0; i < sp.blocks.size(); ++i) {
        collect_block(out, name + ".block" + std::to_string(i), sp.blocks[i]);
    }
    out.emplace_back(name + ".dec_ln.g", sp.dec_ln_g);
    out.emplace_back(name + ".dec_ln.b", sp.dec_ln_b);
    collect_linear(out, name + ".dec", sp.dec);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> CsmParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    collect_sphere(out, "atm", atm);
    collect_sphere(out, "ocn", ocn);
    for (std::size_t c = 0; c < coupling.size(); ++c) {
        collect_block(out, "coupling" + std::to_string(c) + ".block", coupling[c].block);
        collect_linear(out, "coupling" + std::to_string(c) + ".out", coupling[c].out);
    }
    return out;
}

void CsmParams::zero_grad() const {
    for (auto& [name, t] : named()) t.zero_grad();
}

void CsmParams::zero_coupling_projections() {
    for (auto& cp : coupling) {
        std::fill(cp.out.w.values().begin(), cp.out.w.values().end(), 0.0);
        std::fill(cp.out.b.values().begin(), cp.out.b.values().end(), 0.0);
    }
}

double CsmParams::max_abs_coupling_projection() const {
    double m = 0.0;
    for (const auto& cp : coupling) {
        for (double v : cp.out.w.values()) m = std::max(m, std::abs(v));
        for (double v : cp.out.b.values()) m = std::max(m, std::abs(v));
    }
    return m;
}

void CsmParams::save(const std::string& path) const {
    std::map<std::string, Tensor> entries;
    for (const auto& [name, t] : named()) entries.emplace(name, t);

    auto put_scalar = [&](const std::string& name, double v) {
        entries.emplace(name, Tensor::scalar_value(v));
    };
    auto put_vector = [&](const std::string& name, const std::vector<double>& v) {
        entries.emplace(name, Tensor::from_values({v.size()}, v));
    };
    put_scalar("config.nlat", static_cast<double>(config.nlat));
    put_scalar("config.nlon", static_cast<double>(config.nlon));
    put_scalar("config.d_model", static_cast<double>(config.d_model));
    put_scalar("config.n_heads", static_cast<double>(config.n_heads));
    put_scalar("config.blocks_per_stack", static_cast<double>(config.blocks_per_stack));
    put_scalar("config.coupling_every", static_cast<double>(config.coupling_every));
    put_scalar("config.patch", static_cast<double>(config.patch));
    put_scalar("config.ff_mult", static_cast<double>(config.ff_mult));
    put_scalar("config.perturb_hidden", static_cast<double>(config.perturb_hidden));
    put_scalar("config.ensemble_size", static_cast<double>(config.ensemble_size));
    put_scalar("config.rollout_days", static_cast<double>(config.rollout_days));
    put_scalar("config.resample_noise", config.resample_noise ? 1.0 : 0.0);
    std::vector<double> av, ov;
    for (VariableId v : config.atm_vars) av.push_back(static_cast<double>(v));
    for (VariableId v : config.ocn_vars) ov.push_back(static_cast<double>(v));
    put_vector("config.atm_vars", av);
    put_vector("config.ocn_vars", ov);
    put_vector("norm.atm.mean", atm.norm_mean);
    put_vector("norm.atm.std", atm.norm_std);
    put_vector("norm.ocn.mean", ocn.norm_mean);
    put_vector("norm.ocn.std", ocn.norm_std);
    save_ckpt(path, entries);
}

CsmParams CsmParams::load(const std::string& path) {
    auto entries = load_ckpt(path);
    auto scalar = [&](const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end()) throw DataError("ckpt: missing entry " + name);
        return it->second.scalar();
    };
    CsmConfig cfg;
    cfg.nlat = static_cast<std::size_t>(scalar("config.nlat"));
    cfg.nlon = static_cast<std::size_t>(scalar("config.nlon"));
    cfg.d_model = static_cast<std::size_t>(scalar("config.d_model"));
    cfg.n_heads = static_cast<std::size_t>(scalar("config.n_heads"));
    cfg.blocks_per_stack = static_cast<std::size_t>(scalar("config.blocks_per_stack"));
    cfg.coupling_every = static_cast<std::size_t>(scalar("config.coupling_every"));
    cfg.patch = static_cast<std::size_t>(scalar("config.patch"));
    cfg.ff_mult = static_cast<std::size_t>(scalar("config.ff_mult"));
    cfg.perturb_hidden = static_cast<std::size_t>(scalar("config.perturb_hidden"));
    cfg.ensemble_size = static_cast<std::size_t>(scalar("config.ensemble_size"));
    cfg.rollout_days = static_cast<std::size_t>(scalar("config.rollout_days"));
    cfg.resample_noise = scalar("config.resample_noise") != 0.0;
    for (double v : entries.at("config.atm_vars").values()) {
        cfg.atm_vars.push_back(static_cast<VariableId>(static_cast<int>(v)));
    }
    for (double v : entries.at("config.ocn_vars").values()) {
        cfg.ocn_vars.push_back(static_cast<VariableId>(static_cast<int>(v)));
    }

    CsmParams p = CsmParams::init(cfg, 0);
    for (auto& [name, t] : p.named()) {
        auto it = entries.find(name);
        if (it == entries.end()) throw DataError("ckpt: missing entry " + name);
        if (it->second.shape() != t.shape()) {
            throw DataError("ckpt: shape mismatch for " + name);
        }
        t.values() = it->second.values();
    }
    p.atm.norm_mean = entries.at("norm.atm.mean").values();
    p.atm.norm_std = entries.at("norm.atm.std").values();
    p.ocn.norm_mean = entries.at("norm.ocn.mean").values();
    p.ocn.norm_std = entries.at("norm.ocn.std").values();
    return p;
}

CsmParams CsmParams::clone() const {
    CsmParams p;
    p.config = config;
    auto clone_linear = [](const LinearParams& lp) {
        return LinearParams{lp.w.clone(), lp.b.clone()};
    };
    auto clone_block = [&](const BlockParams& bp) {
        BlockParams out;
        out.ln1_g = bp.ln1_g.clone();
        out.ln1_b = bp.ln1_b.clone();
        out.ln2_g = bp.ln2_g.clone();
        out.ln2_b = bp.ln2_b.clone();
        out.q = clone_linear(bp.q);
        out.k = clone_linear(bp.k);
        out.v = clone_linear(bp.v);
        out.o = clone_linear(bp.o);
        out.ff1 = clone_linear(bp.ff1);
        out.ff2 = clone_linear(bp.ff2);
        return out;
    };
    auto clone_sphere = [&](const SphereParams& sp) {
        SphereParams out;
        out.embed = clone_linear(sp.embed);
        out.pos = sp.pos.clone();
        out.perturb.l1 = clone_linear(sp.perturb.l1);
        out.perturb.l2 = clone_linear(sp.perturb.l2);
        for (const auto& b : sp.blocks) out.blocks.push_back(clone_block(b));
        out.dec_ln_g = sp.dec_ln_g.clone();
        out.dec_ln_b = sp.dec_ln_b.clone();
        out.dec = clone_linear(sp.dec);
        out.norm_mean = sp.norm_mean;
        out.norm_std = sp.norm_std;
        return out;
    };
    p.atm = clone_sphere(atm);
    p.ocn = clone_sphere(ocn);
    for (const auto& cp : coupling) {
        p.coupling.push_back({clone_block(cp.block), clone_linear(cp.out)});
    }
    return p;
}

namespace {

/// Flat index for planes {channels, P} -> tokens {T, channels*p*p}.
std::vector<std::size_t> make_patch_index(std::size_t channels, std::size_t nlat,
                                          std::size_t nlon, std::size_t patch) {
    const std::size_t tlat = nlat / patch, tlon = nlon / patch;
    std::vector<std::size_t> index;
    index.reserve(tlat * tlon * channels * patch * patch);
    for (std::size_t ti = 0; ti < tlat; ++ti) {
        for (std::size_t tj = 0; tj < tlon; ++tj) {
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t di = 0; di < patch; ++di) {
                    for (std::size_t dj = 0; dj < patch; ++dj) {
                        index.push_back(c * nlat * nlon + (ti * patch + di) * nlon +
                                        (tj * patch + dj));
                    }
                }
            }
        }
    }
    return index;
}

/// Inverse table: planes {channels, P} gathered from tokens {T, channels*p*p}.
std::vector<std::size_t> make_unpatch_index(std::size_t channels, std::size_t nlat,
                                            std::size_t nlon, std::size_t patch) {
    const std::size_t tlon = nlon / patch;
    const std::size_t feat = channels * patch * patch;
    std::vector<std::size_t> index(channels * nlat * nlon);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < nlat; ++i) {
            for (std::size_t j = 0; j < nlon; ++j) {
                std::size_t token = (i / patch) * tlon + (j / patch);
                std::size_t offset = c * patch * patch + (i % patch) * patch + (j % patch);
                index[c * nlat * nlon + i * nlon + j] = token * feat + offset;
            }
        }
    }
    return index;
}

}  // namespace

CsmModel::CsmModel(const CsmParams& params)
    : params_(params), grid_(GridSpec::uniform(params.config.nlat, params.config.nlon)) {
    const auto& cfg = params_.config;
    cfg.validate();
    patch_atm_ = make_patch_index(2 * cfg.atm_vars.size(), cfg.nlat, cfg.nlon, cfg.patch);
    patch_ocn_ = make_patch_index(2 * cfg.ocn_vars.size(), cfg.nlat, cfg.nlon, cfg.patch);
    unpatch_atm_ = make_unpatch_index(cfg.atm_vars.size(), cfg.nlat, cfg.nlon, cfg.patch);
    unpatch_ocn_ = make_unpatch_index(cfg.ocn_vars.size(), cfg.nlat, cfg.nlon, cfg.patch);
}

Tensor CsmModel::encode(Graph& g, const SphereParams& sphere, const Tensor& prev,
                        const Tensor& cur) const {
    const auto& cfg = params_.config;
    const bool atm_sphere = &sphere == &params_.atm;
    const auto& index = atm_sphere ? patch_atm_ : patch_ocn_;
    const std::size_t n_vars = atm_sphere ? cfg.atm_vars.size() : cfg.ocn_vars.size();
    Tensor both = g.concat({prev, cur}, 0);  // {2V, P}
    const std::size_t feat = 2 * n_vars * cfg.patch * cfg.patch;
    Tensor tokens = g.gather(both, index, {cfg.tokens(), feat});
    Tensor h = g.linear(tokens, sphere.embed.w, sphere.embed.b);
    return g.add(h, sphere.pos);
}

Tensor CsmModel::decode(Graph& g, const SphereParams& sphere, const Tensor& h,
                        std::size_t n_vars) const {
    const auto& cfg = params_.config;
    const auto& index = &sphere == &params_.atm ? unpatch_atm_ : unpatch_ocn_;
    Tensor x = g.layer_norm(h, sphere.dec_ln_g, sphere.dec_ln_b);
    Tensor tokens = g.linear(x, sphere.dec.w, sphere.dec.b);  // {T, V*p*p}
    return g.gather(tokens, index, {n_vars, cfg.points()});
}

Tensor CsmModel::transformer_block(Graph& g, const BlockParams& bp, const Tensor& x,
                                   std::size_t heads) const {
    Tensor a = g.layer_norm(x, bp.ln1_g, bp.ln1_b);
    Tensor q = g.linear(a, bp.q.w, bp.q.b);
    Tensor k = g.linear(a, bp.k.w, bp.k.b);
    Tensor v = g.linear(a, bp.v.w, bp.v.b);
    Tensor att = g.scaled_dot_product_attention(q, k, v, heads);
    Tensor x1 = g.add(x, g.linear(att, bp.o.w, bp.o.b));
    Tensor f = g.layer_norm(x1, bp.ln2_g, bp.ln2_b);
    f = g.linear(g.gelu(g.linear(f, bp.ff1.w, bp.ff1.b)), bp.ff2.w, bp.ff2.b);
    return g.add(x1, f);
}

CsmModel::PerturbOut CsmModel::perturb(Graph& g, const SphereParams& sphere, const Tensor& x,
                                       const Tensor& eps) const {
    const auto& cfg = params_.config;
    Tensor h = g.gelu(g.linear(x, sphere.perturb.l1.w, sphere.perturb.l1.b));
    Tensor ms = g.linear(h, sphere.perturb.l2.w, sphere.perturb.l2.b);  // {T, 2d}
    auto parts = g.split(ms, 1, {cfg.d_model, cfg.d_model});
    Tensor z = g.gaussian_reparam(parts[0], parts[1], eps);
    return {g.add(x, z), parts[0], parts[1]};
}

CsmModel::CouplingOut CsmModel::coupling_block(Graph& g, const CouplingParams& cp,
                                               const Tensor& h_atm, const Tensor& h_ocn) const {
    const auto& cfg = params_.config;
    if (h_atm.shape() != h_ocn.shape()) {
        throw DataError("coupling_block: sphere feature widths differ " + h_atm.shape_str() +
                        " vs " + h_ocn.shape_str());
    }
    Tensor both = g.concat({h_atm, h_ocn}, 1);  // {T, 2d}
    Tensor u = transformer_block(g, cp.block, both, cfg.n_heads);
    Tensor proj = g.linear(u, cp.out.w, cp.out.b);
    auto parts = g.split(proj, 1, {cfg.d_model, cfg.d_model});
    return {parts[0], parts[1]};
}

CsmModel::StepOut CsmModel::step(Graph& g, const Tensor& atm_prev, const Tensor& atm_cur,
                                 const Tensor& ocn_prev, const Tensor& ocn_cur,
                                 const Tensor& eps_atm, const Tensor& eps_ocn,
                                 bool ablate_coupling, int step_index) const {
    const auto& cfg = params_.config;
    Tensor ha = encode(g, params_.atm, atm_prev, atm_cur);
    Tensor ho = encode(g, params_.ocn, ocn_prev, ocn_cur);

    StepOut out;
    if (eps_atm.defined()) {
        auto pa = perturb(g, params_.atm, ha, eps_atm);
        ha = pa.out;
        out.atm_mu = pa.mu;
        out.atm_log_sigma = pa.log_sigma;
    }
    if (eps_ocn.defined()) {
        auto po = perturb(g, params_.ocn, ho, eps_ocn);
        ho = po.out;
        out.ocn_mu = po.mu;
        out.ocn_log_sigma = po.log_sigma;
    }

    for (std::size_t i = 0; i < cfg.blocks_per_stack; ++i) {
        ha = transformer_block(g, params_.atm.blocks[i], ha, cfg.n_heads);
        ho = transformer_block(g, params_.ocn.blocks[i], ho, cfg.n_heads);
        if (!ablate_coupling && (i + 1) % cfg.coupling_every == 0) {
            const auto& cp = params_.coupling[(i + 1) / cfg.coupling_every - 1];
            auto contrib = coupling_block(g, cp, ha, ho);
            ha = g.add(ha, contrib.atm);
            ho = g.add(ho, contrib.ocn);
        }
    }

    out.atm_next = decode(g, params_.atm, ha, cfg.atm_vars.size());
    out.ocn_next = decode(g, params_.ocn, ho, cfg.ocn_vars.size());

    for (const Tensor* t : {&out.atm_next, &out.ocn_next}) {
        for (double v : t->values()) {
            if (!std::isfinite(v)) {
                throw NumericalError("numerical blow-up at step " +
                                     std::to_string(step_index));
            }
        }
    }
    return out;
}

Tensor CsmModel::planes_from_fields(const std::vector<Field>& fields, bool atm_sphere) const {
    const auto& cfg = params_.config;
    const auto& vars = atm_sphere ? cfg.atm_vars : cfg.ocn_vars;
    const auto& mean = atm_sphere ? params_.atm.norm_mean : params_.ocn.norm_mean;
    const auto& sd = atm_sphere ? params_.atm.norm_std : params_.ocn.norm_std;
    if (fields.size() != vars.size()) {
        throw DataError("planes_from_fields: expected " + std::to_string(vars.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    Tensor t = Tensor::zeros({vars.size(), cfg.points()});
    for (std::size_t v = 0; v < vars.size(); ++v) {
        if (fields[v].var != vars[v]) {
            throw DataError("planes_from_fields: variable order mismatch at " +
                            var_name(vars[v]));
        }
        if (fields[v].size() != cfg.points()) {
            throw DataError("planes_from_fields: grid size mismatch");
        }
        for (std::size_t p = 0; p < cfg.points(); ++p) {
            t.values()[v * cfg.points() + p] = (fields[v].values[p] - mean[v]) / sd[v];
        }
    }
    return t;
}

std::vector<Field> CsmModel::fields_from_planes(const Tensor& planes, bool atm_sphere,
                                                std::int64_t time) const {
    const auto& cfg = params_.config;
    const auto& vars = atm_sphere ? cfg.atm_vars : cfg.ocn_vars;
    const auto& mean = atm_sphere ? params_.atm.norm_mean : params_.ocn.norm_mean;
    const auto& sd = atm_sphere ? params_.atm.norm_std : params_.ocn.norm_std;
    std::vector<Field> out;
    for (std::size_t v = 0; v < vars.size(); ++v) {
        Field f(grid_, vars[v], time);
        for (std::size_t p = 0; p < cfg.points(); ++p) {
            f.values[p] = planes.values()[v * cfg.points() + p] * sd[v] + mean[v];
        }
        out.push_back(std::move(f));
    }
    return out;
}

Tensor CsmModel::sample_eps(Rng& rng) const {
    Tensor t = Tensor::zeros({params_.config.tokens(), params_.config.d_model});
    for (double& v : t.values()) v = rng.normal();
    return t;
}

Tensor CsmModel::zero_eps() const {
    return Tensor::zeros({params_.config.tokens(), params_.config.d_model});
}

MemberForecast CsmModel::rollout(const StepInputFields& init, std::size_t n_steps,
                                 PerturbMode mode, std::uint64_t eps_seed,
                                 bool ablate_coupling) const {
    if (n_steps < 1) throw DataError("rollout: need at least one step");
    const auto& cfg = params_.config;
    Graph g(false);

    Tensor atm_prev = planes_from_fields(init.atm_prev, true);
    Tensor atm_cur = planes_from_fields(init.atm_cur, true);
    Tensor ocn_prev = planes_from_fields(init.ocn_prev, false);
    Tensor ocn_cur = planes_from_fields(init.ocn_cur, false);

    Rng rng(eps_seed);
    auto make_eps = [&]() -> std::pair<Tensor, Tensor> {
        switch (mode) {
            case PerturbMode::None: return {Tensor(), Tensor()};
            case PerturbMode::MeanOnly: return {zero_eps(), zero_eps()};
            case PerturbMode::Sampled: {
                Tensor ea = sample_eps(rng);
                Tensor eo = sample_eps(rng);
                return {ea, eo};
            }
        }
        return {Tensor(), Tensor()};
    };

    MemberForecast fc;
    auto [eps_a, eps_o] = make_eps();
    for (std::size_t s = 1; s <= n_steps; ++s) {
        if (s > 1) {
            if (cfg.resample_noise) {
                std::tie(eps_a, eps_o) = make_eps();
            } else {
                eps_a = Tensor();  // perturbation applies at initialization only
                eps_o = Tensor();
            }
        }
        auto out = step(g, atm_prev, atm_cur, ocn_prev, ocn_cur, eps_a, eps_o,
                        ablate_coupling, static_cast<int>(s));
        auto atm_fields = fields_from_planes(out.atm_next, true, static_cast<std::int64_t>(s));
        auto ocn_fields = fields_from_planes(out.ocn_next, false, static_cast<std::int64_t>(s));
        for (auto& f : atm_fields) fc.vars[f.var].insert(std::move(f));
        for (auto& f : ocn_fields) fc.vars[f.var].insert(std::move(f));
        atm_prev = atm_cur;
        atm_cur = out.atm_next;
        ocn_prev = ocn_cur;
        ocn_cur = out.ocn_next;
    }
    return fc;
}

EnsembleForecast CsmModel::ensemble_forecast(const StepInputFields& init, std::size_t members,
                                             std::uint64_t base_seed,
                                             bool ablate_coupling) const {
    if (members < 1) throw DataError("ensemble_forecast: need at least one member");
    EnsembleForecast ens;
    ens.members.resize(members);
    std::exception_ptr error;
    #pragma omp parallel for schedule(dynamic)
    for (long long m = 0; m < static_cast<long long>(members); ++m) {
        try {
            PerturbMode mode = m == 0 ? PerturbMode::MeanOnly : PerturbMode::Sampled;
            std::uint64_t seed =
                derive_seed(base_seed, seed_purpose::member_eps, static_cast<std::uint64_t>(m));
            ens.members[static_cast<std::size_t>(m)] =
                rollout(init, params_.config.rollout_days, mode, seed, ablate_coupling);
        } catch (...) {
            #pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return ens;
}

}  // namespace ccast
