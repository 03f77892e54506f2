#include "ccast/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ccast {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join_vars(const std::vector<VariableId>& vars) {
    std::string s;
    for (std::size_t i = 0; i < vars.size(); ++i) s += (i ? "," : "") + var_name(vars[i]);
    return s;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

/// Key registry: one entry per (section, key) with a parser and a printer.
struct KeyDef {
    std::string section, key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::vector<KeyDef> key_registry() {
    std::vector<KeyDef> defs;
    auto add = [&](const std::string& sec, const std::string& key, auto setter, auto getter) {
        defs.push_back({sec, key, setter, getter});
    };

    add("grid", "nlat",
        [](RunConfig& c, const std::string& v) { c.nlat = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.nlat); });
    add("grid", "nlon",
        [](RunConfig& c, const std::string& v) { c.nlon = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.nlon); });

    add("toy", "k_ocn",
        [](RunConfig& c, const std::string& v) { c.toy.k_ocn = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.toy.k_ocn); });
    add("toy", "j_ratio",
        [](RunConfig& c, const std::string& v) { c.toy.j_ratio = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.toy.j_ratio); });
    add("toy", "forcing",
        [](RunConfig& c, const std::string& v) { c.toy.forcing = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.toy.forcing); });
    add("toy", "timescale_ratio",
        [](RunConfig& c, const std::string& v) { c.toy.timescale_ratio = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.toy.timescale_ratio); });
    add("toy", "coupling",
        [](RunConfig& c, const std::string& v) { c.toy.coupling = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.toy.coupling); });
    add("toy", "dt",
        [](RunConfig& c, const std::string& v) { c.toy.dt = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.toy.dt); });
    add("toy", "rate",
        [](RunConfig& c, const std::string& v) { c.toy.rate = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.toy.rate); });
    add("toy", "spinup_days",
        [](RunConfig& c, const std::string& v) { c.toy.spinup_days = std::stoi(v); },
        [](const RunConfig& c) { return std::to_string(c.toy.spinup_days); });
    add("toy", "years",
        [](RunConfig& c, const std::string& v) { c.years = std::stoi(v); },
        [](const RunConfig& c) { return std::to_string(c.years); });
    add("toy", "inits_per_year",
        [](RunConfig& c, const std::string& v) { c.inits_per_year = std::stoi(v); },
        [](const RunConfig& c) { return std::to_string(c.inits_per_year); });
    add("toy", "horizon",
        [](RunConfig& c, const std::string& v) { c.horizon = std::stoi(v); },
        [](const RunConfig& c) { return std::to_string(c.horizon); });

    add("model", "d_model",
        [](RunConfig& c, const std::string& v) { c.model.d_model = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.d_model); });
    add("model", "n_heads",
        [](RunConfig& c, const std::string& v) { c.model.n_heads = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.n_heads); });
    add("model", "blocks_per_stack",
        [](RunConfig& c, const std::string& v) { c.model.blocks_per_stack = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.blocks_per_stack); });
    add("model", "coupling_every",
        [](RunConfig& c, const std::string& v) { c.model.coupling_every = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.coupling_every); });
    add("model", "patch",
        [](RunConfig& c, const std::string& v) { c.model.patch = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.patch); });
    add("model", "ff_mult",
        [](RunConfig& c, const std::string& v) { c.model.ff_mult = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.ff_mult); });
    add("model", "perturb_hidden",
        [](RunConfig& c, const std::string& v) { c.model.perturb_hidden = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.perturb_hidden); });
    add("model", "ensemble_size",
        [](RunConfig& c, const std::string& v) { c.model.ensemble_size = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.ensemble_size); });
    add("model", "rollout_days",
        [](RunConfig& c, const std::string& v) { c.model.rollout_days = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.model.rollout_days); });
    add("model", "resample_noise",
        [](RunConfig& c, const std::string& v) {
            if (v != "true" && v != "false") throw DataError("config: bad bool '" + v + "'");
            c.model.resample_noise = v == "true";
        },
        [](const RunConfig& c) { return c.model.resample_noise ? "true" : "false"; });
    add("model", "atm_vars",
        [](RunConfig& c, const std::string& v) {
            c.model.atm_vars.clear();
            for (const auto& name : split_list(v)) c.model.atm_vars.push_back(var_from_name(name));
        },
        [](const RunConfig& c) { return join_vars(c.model.atm_vars); });
    add("model", "ocn_vars",
        [](RunConfig& c, const std::string& v) {
            c.model.ocn_vars.clear();
            for (const auto& name : split_list(v)) c.model.ocn_vars.push_back(var_from_name(name));
        },
        [](const RunConfig& c) { return join_vars(c.model.ocn_vars); });

    add("train", "lr",
        [](RunConfig& c, const std::string& v) { c.train.lr = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.train.lr); });
    add("train", "beta1",
        [](RunConfig& c, const std::string& v) { c.train.beta1 = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.train.beta1); });
    add("train", "beta2",
        [](RunConfig& c, const std::string& v) { c.train.beta2 = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.train.beta2); });
    add("train", "batch",
        [](RunConfig& c, const std::string& v) { c.train.batch = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.train.batch); });
    add("train", "steps_single",
        [](RunConfig& c, const std::string& v) { c.train.steps_single = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.train.steps_single); });
    add("train", "steps_per_curriculum",
        [](RunConfig& c, const std::string& v) {
            c.train.steps_per_curriculum = std::stoull(v);
        },
        [](const RunConfig& c) { return std::to_string(c.train.steps_per_curriculum); });
    add("train", "curriculum",
        [](RunConfig& c, const std::string& v) {
            c.train.curriculum.clear();
            for (const auto& item : split_list(v)) {
                c.train.curriculum.push_back(std::stoull(item));
            }
        },
        [](const RunConfig& c) { return join_sizes(c.train.curriculum); });
    add("train", "kl_weight",
        [](RunConfig& c, const std::string& v) { c.train.kl_weight = std::stod(v); },
        [](const RunConfig& c) { return std::to_string(c.train.kl_weight); });
    add("train", "ckpt_every",
        [](RunConfig& c, const std::string& v) { c.train.ckpt_every = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.train.ckpt_every); });
    add("train", "train_years_end",
        [](RunConfig& c, const std::string& v) { c.train_years_end = std::stoi(v); },
        [](const RunConfig& c) { return std::to_string(c.train_years_end); });

    add("verify", "weeks",
        [](RunConfig& c, const std::string& v) { c.verify_weeks = std::stoi(v); },
        [](const RunConfig& c) { return std::to_string(c.verify_weeks); });
    add("verify", "window_first_day",
        [](RunConfig& c, const std::string& v) { c.window_first_day = std::stoi(v); },
        [](const RunConfig& c) { return std::to_string(c.window_first_day); });
    add("verify", "window_last_day",
        [](RunConfig& c, const std::string& v) { c.window_last_day = std::stoi(v); },
        [](const RunConfig& c) { return std::to_string(c.window_last_day); });
    add("verify", "detrend",
        [](RunConfig& c, const std::string& v) {
            if (v != "true" && v != "false") throw DataError("config: bad bool '" + v + "'");
            c.detrend = v == "true";
        },
        [](const RunConfig& c) { return c.detrend ? "true" : "false"; });
    return defs;
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.model = CsmConfig::defaults();
    c.model.nlat = c.nlat;
    c.model.nlon = c.nlon;
    return c;
}

void RunConfig::finalize() {
    toy.nlat = nlat;
    toy.nlon = nlon;
    model.nlat = nlat;
    model.nlon = nlon;
}

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg = defaults();
    const auto defs = key_registry();
    std::istringstream is(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw UsageError("config line " + std::to_string(line_no) + ": bad section");
            }
            section = t.substr(1, t.size() - 2);
            bool known = false;
            for (const auto& d : defs) known = known || d.section == section;
            if (!known) {
                throw UsageError("config line " + std::to_string(line_no) +
                                 ": unknown section [" + section + "]");
            }
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        const KeyDef* def = nullptr;
        for (const auto& d : defs) {
            if (d.section == section && d.key == key) {
                def = &d;
                break;
            }
        }
        if (!def) {
            throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" +
                             key + "' in section [" + section + "]");
        }
        try {
            def->set(cfg, value);
        } catch (const std::exception&) {
            throw UsageError("config line " + std::to_string(line_no) + ": bad value '" +
                             value + "' for " + key);
        }
    }
    cfg.finalize();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open config file " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str());
}

std::string RunConfig::serialize() const {
    const auto defs = key_registry();
    std::ostringstream os;
    std::string section;
    for (const auto& d : defs) {
        if (d.section != section) {
            if (!section.empty()) os << "\n";
            section = d.section;
            os << "[" << section << "]\n";
        }
        os << d.key << " = " << d.get(*this) << "\n";
    }
    return os.str();
}

}  // namespace ccast
