#include "ccast/modes.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccast/gfb.hpp"

namespace fs = std::filesystem;

namespace ccast {

double EofBasis::project(const std::vector<double>& state, std::size_t k) const {
    if (state.size() != state_dim()) throw DataError("eof project: state size mismatch");
    if (k >= modes.size()) throw DataError("eof project: mode out of range");
    double s = 0.0;
    for (std::size_t j = 0; j < state.size(); ++j) {
        s += weights[j] * (state[j] - center[j]) * modes[k][j];
    }
    return s;
}

double EofBasis::project_standardized(const std::vector<double>& state, std::size_t k) const {
    double sd = pc_std[k];
    if (sd <= 0.0) throw DataError("eof project: degenerate mode spread");
    return project(state, k) / sd;
}

std::vector<double> EofBasis::reconstruct(const std::vector<double>& pcs) const {
    std::vector<double> out = center;
    for (std::size_t k = 0; k < pcs.size() && k < modes.size(); ++k) {
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += pcs[k] * modes[k][j];
    }
    return out;
}

EofBasis eof(const std::vector<std::vector<double>>& samples,
             const std::vector<double>& weights, std::size_t n_modes) {
    if (samples.size() < 2) throw DataError("eof: need >= 2 samples");
    const std::size_t n = samples.size();
    const std::size_t d = weights.size();
    for (double w : weights) {
        if (!(w > 0.0)) throw DataError("eof: weights must be positive");
    }
    for (const auto& s : samples) {
        if (s.size() != d) throw DataError("eof: sample size mismatch");
    }

    std::vector<double> center(d, 0.0);
    for (const auto& s : samples) {
        for (std::size_t j = 0; j < d; ++j) center[j] += s[j];
    }
    for (double& c : center) c /= static_cast<double>(n);

    Eigen::MatrixXd y(n, d);
    std::vector<double> sqw(d);
    for (std::size_t j = 0; j < d; ++j) sqw[j] = std::sqrt(weights[j]);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (samples[i][j] - center[j]) * sqw[j];
        }
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double total = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) total += sv(i) * sv(i);

    double tol = std::max(n, d) * std::numeric_limits<double>::epsilon() *
                 (sv.size() > 0 ? sv(0) : 0.0);
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tol) ++rank;
    }
    if (n_modes > rank) {
        throw DataError("eof: requested " + std::to_string(n_modes) + " modes, rank is " +
                        std::to_string(rank));
    }

    EofBasis basis;
    basis.weights = weights;
    basis.center = std::move(center);
    for (std::size_t k = 0; k < n_modes; ++k) {
        std::vector<double> pattern(d);
        for (std::size_t j = 0; j < d; ++j) {
            pattern[j] = svd.matrixV()(static_cast<Eigen::Index>(j),
                                       static_cast<Eigen::Index>(k)) /
                         sqw[j];
        }
        // Sign: largest-|loading| element positive; first index wins ties.
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j) {
            if (std::abs(pattern[j]) > std::abs(pattern[arg])) arg = j;
        }
        double flip = pattern[arg] < 0.0 ? -1.0 : 1.0;
        for (double& p : pattern) p *= flip;

        double lambda = sv(static_cast<Eigen::Index>(k)) * sv(static_cast<Eigen::Index>(k));
        basis.explained_variance.push_back(total > 0.0 ? lambda / total : 0.0);

        // Training PCs and their population spread.
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double pc = flip * svd.matrixU()(static_cast<Eigen::Index>(i),
                                             static_cast<Eigen::Index>(k)) *
                        sv(static_cast<Eigen::Index>(k));
            var += pc * pc;  // PCs of centered data average to zero
        }
        basis.pc_std.push_back(std::sqrt(var / static_cast<double>(n)));
        basis.modes.push_back(std::move(pattern));
    }
    return basis;
}

double RmmPoint::amplitude() const { return std::sqrt(rmm1 * rmm1 + rmm2 * rmm2); }

int RmmPoint::phase() const {
    double deg = std::atan2(rmm2, rmm1) * 180.0 / M_PI;
    double from_180 = std::fmod(deg - 180.0 + 720.0, 360.0);
    int p = 1 + static_cast<int>(std::floor(from_180 / 45.0));
    return p > 8 ? 8 : p;
}

namespace {

/// Latitude-weighted meridional average over a band, per longitude column.
std::vector<double> meridional_profile(const Field& f, double lat_min, double lat_max) {
    const auto& lats = f.grid.lats();
    const auto& w = f.grid.lat_weights();
    std::vector<double> profile(f.grid.nlon(), 0.0);
    double wsum = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < f.grid.nlat(); ++i) {
        if (lats[i] < lat_min || lats[i] > lat_max) continue;
        any = true;
        wsum += w[i];
        for (std::size_t j = 0; j < f.grid.nlon(); ++j) {
            if (!f.valid(i, j)) throw DataError("meridional profile: masked point in band");
            profile[j] += w[i] * f.at(i, j);
        }
    }
    if (!any || wsum == 0.0) {
        throw DataError("grid does not cover the latitude band " + std::to_string(lat_min) +
                        ".." + std::to_string(lat_max));
    }
    for (double& p : profile) p /= wsum;
    return profile;
}

}  // namespace

RmmBasis fit_rmm_basis(const std::vector<std::vector<Field>>& anomalies_per_var,
                       double band_lat_min, double band_lat_max) {
    if (anomalies_per_var.empty()) throw DataError("rmm fit: no variables");
    const std::size_t nvars = anomalies_per_var.size();
    const std::size_t nsamples = anomalies_per_var.front().size();
    if (nsamples < 2) throw DataError("rmm fit: need >= 2 samples");
    for (const auto& v : anomalies_per_var) {
        if (v.size() != nsamples) throw DataError("rmm fit: sample count mismatch");
    }

    RmmBasis rb;
    rb.band_lat_min = band_lat_min;
    rb.band_lat_max = band_lat_max;
    rb.nlon = anomalies_per_var.front().front().grid.nlon();

    // Per-variable profiles and their pooled spread.
    std::vector<std::vector<std::vector<double>>> profiles(nvars);
    for (std::size_t v = 0; v < nvars; ++v) {
        double ss = 0.0, mean = 0.0;
        std::size_t count = 0;
        for (const auto& f : anomalies_per_var[v]) {
            auto prof = meridional_profile(f, band_lat_min, band_lat_max);
            for (double x : prof) {
                mean += x;
                ++count;
            }
            profiles[v].push_back(std::move(prof));
        }
        mean /= static_cast<double>(count);
        for (const auto& prof : profiles[v]) {
            for (double x : prof) ss += (x - mean) * (x - mean);
        }
        double sd = std::sqrt(ss / static_cast<double>(count));
        if (sd <= 0.0) throw DataError("rmm fit: variable " + std::to_string(v) +
                                       " has zero spread");
        rb.var_std.push_back(sd);
    }

    std::vector<std::vector<double>> states(nsamples);
    for (std::size_t s = 0; s < nsamples; ++s) {
        states[s].reserve(nvars * rb.nlon);
        for (std::size_t v = 0; v < nvars; ++v) {
            for (double x : profiles[v][s]) states[s].push_back(x / rb.var_std[v]);
        }
    }
    std::vector<double> weights(nvars * rb.nlon, 1.0);
    rb.basis = eof(states, weights, 2);
    return rb;
}

RmmSeries rmm(const std::vector<const FieldSeries*>& anomalies_per_var, const RmmBasis& basis) {
    if (anomalies_per_var.size() * basis.nlon != basis.basis.state_dim()) {
        throw DataError("rmm: variable count does not match the basis");
    }
    const auto times = anomalies_per_var.front()->times();
    for (const auto* s : anomalies_per_var) {
        if (s->times() != times) throw DataError("rmm: series time axes differ");
    }
    RmmSeries out;
    for (std::int64_t t : times) {
        std::vector<double> state;
        state.reserve(basis.basis.state_dim());
        for (std::size_t v = 0; v < anomalies_per_var.size(); ++v) {
            auto prof = meridional_profile(anomalies_per_var[v]->at(t), basis.band_lat_min,
                                           basis.band_lat_max);
            for (double x : prof) state.push_back(x / basis.var_std[v]);
        }
        RmmPoint p;
        p.time = t;
        p.rmm1 = basis.basis.project_standardized(state, 0);
        p.rmm2 = basis.basis.project_standardized(state, 1);
        out.push_back(p);
    }
    return out;
}

std::optional<double> bivariate_cor(const std::vector<RmmPoint>& obs,
                                    const std::vector<RmmPoint>& forecast) {
    if (obs.size() != forecast.size() || obs.empty()) {
        throw DataError("bivariate_cor: sample count mismatch");
    }
    double num = 0.0, so = 0.0, sf = 0.0;
    for (std::size_t j = 0; j < obs.size(); ++j) {
        num += obs[j].rmm1 * forecast[j].rmm1 + obs[j].rmm2 * forecast[j].rmm2;
        so += obs[j].rmm1 * obs[j].rmm1 + obs[j].rmm2 * obs[j].rmm2;
        sf += forecast[j].rmm1 * forecast[j].rmm1 + forecast[j].rmm2 * forecast[j].rmm2;
    }
    double den = std::sqrt(so * sf);
    if (den <= 0.0) return std::nullopt;
    return num / den;
}

void RmmBasis::save(const std::string& dir, const GridSpec& grid,
                    const std::vector<VariableId>& vars) const {
    fs::create_directories(dir);
    // Each mode's per-variable longitude profile broadcast across the band
    // rows; re-averaging on load recovers the profile exactly.
    auto write_profile = [&](const std::vector<double>& state, const std::string& stem) {
        for (std::size_t v = 0; v < vars.size(); ++v) {
            Field f(grid, vars[v], 1);
            for (std::size_t i = 0; i < grid.nlat(); ++i) {
                bool in_band = grid.lats()[i] >= band_lat_min && grid.lats()[i] <= band_lat_max;
                for (std::size_t j = 0; j < grid.nlon(); ++j) {
                    f.at(i, j) = in_band ? state[v * nlon + j] : 0.0;
                    f.mask[i * grid.nlon() + j] = in_band ? 1 : 0;
                }
            }
            FieldSeries s;
            s.insert(std::move(f));
            write_gfb((fs::path(dir) / (stem + "_" + var_name(vars[v]) + ".gfb")).string(), s);
        }
    };
    for (std::size_t k = 0; k < basis.modes.size(); ++k) {
        write_profile(basis.modes[k], "rmm_eof" + std::to_string(k + 1));
    }
    write_profile(basis.center, "rmm_center");
    std::ofstream os(fs::path(dir) / "rmm_variance.csv");
    os << "key,value\n";
    os.precision(17);
    for (std::size_t k = 0; k < basis.explained_variance.size(); ++k) {
        os << "explained_variance_" << (k + 1) << "," << basis.explained_variance[k] << "\n";
        os << "pc_std_" << (k + 1) << "," << basis.pc_std[k] << "\n";
    }
    for (std::size_t v = 0; v < vars.size(); ++v) {
        os << "var_std_" << var_name(vars[v]) << "," << var_std[v] << "\n";
    }
    os << "band_lat_min," << band_lat_min << "\n";
    os << "band_lat_max," << band_lat_max << "\n";
}

namespace {

std::map<std::string, double> read_kv_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("missing " + path);
    std::map<std::string, double> kv;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        kv[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
    }
    return kv;
}

}  // namespace

RmmBasis RmmBasis::load(const std::string& dir, const std::vector<VariableId>& vars) {
    auto kv = read_kv_csv((fs::path(dir) / "rmm_variance.csv").string());
    RmmBasis rb;
    rb.band_lat_min = kv.at("band_lat_min");
    rb.band_lat_max = kv.at("band_lat_max");
    for (std::size_t v = 0; v < vars.size(); ++v) {
        rb.var_std.push_back(kv.at("var_std_" + var_name(vars[v])));
    }
    for (std::size_t k = 0;; ++k) {
        auto it = kv.find("explained_variance_" + std::to_string(k + 1));
        if (it == kv.end()) break;
        rb.basis.explained_variance.push_back(it->second);
        rb.basis.pc_std.push_back(kv.at("pc_std_" + std::to_string(k + 1)));
    }

    auto read_profile = [&](const std::string& stem) {
        std::vector<double> state;
        for (std::size_t v = 0; v < vars.size(); ++v) {
            auto series =
                read_gfb((fs::path(dir) / (stem + "_" + var_name(vars[v]) + ".gfb")).string());
            const Field& f = series.entries().begin()->second;
            if (rb.nlon == 0) rb.nlon = f.grid.nlon();
            auto prof = meridional_profile(f, rb.band_lat_min, rb.band_lat_max);
            state.insert(state.end(), prof.begin(), prof.end());
        }
        return state;
    };
    for (std::size_t k = 0; k < rb.basis.explained_variance.size(); ++k) {
        rb.basis.modes.push_back(read_profile("rmm_eof" + std::to_string(k + 1)));
    }
    rb.basis.center = read_profile("rmm_center");
    rb.basis.weights.assign(vars.size() * rb.nlon, 1.0);
    return rb;
}

DomainIndexBasis fit_domain_index_basis(const std::vector<Field>& anomalies,
                                        const BoxSpec& domain) {
    if (anomalies.size() < 2) throw DataError("domain index fit: need >= 2 samples");
    const GridSpec& grid = anomalies.front().grid;
    DomainIndexBasis dib;
    dib.domain = domain;
    for (std::size_t i = 0; i < grid.nlat(); ++i) {
        for (std::size_t j = 0; j < grid.nlon(); ++j) {
            if (domain.contains(grid.lats()[i], grid.lons()[j])) {
                dib.point_index.push_back(i * grid.nlon() + j);
            }
        }
    }
    if (dib.point_index.empty()) throw DataError("domain not covered by grid");

    std::vector<double> weights;
    for (std::size_t p : dib.point_index) {
        weights.push_back(grid.lat_weights()[p / grid.nlon()]);
    }
    std::vector<std::vector<double>> states;
    for (const auto& f : anomalies) {
        f.require_same_grid(anomalies.front(), "domain index fit");
        std::vector<double> s;
        s.reserve(dib.point_index.size());
        for (std::size_t p : dib.point_index) {
            if (!f.mask[p]) throw DataError("domain index fit: masked point in domain");
            s.push_back(f.values[p]);
        }
        states.push_back(std::move(s));
    }
    dib.basis = eof(states, weights, 1);
    return dib;
}

IndexSeries domain_index(const FieldSeries& anomalies, const DomainIndexBasis& basis) {
    IndexSeries out;
    for (const auto& [t, f] : anomalies.entries()) {
        std::vector<double> s;
        s.reserve(basis.point_index.size());
        for (std::size_t p : basis.point_index) {
            if (p >= f.values.size() || !f.mask[p]) {
                throw DataError("domain not covered by grid");
            }
            s.push_back(f.values[p]);
        }
        out.push_back({t, basis.basis.project_standardized(s, 0)});
    }
    return out;
}

void DomainIndexBasis::save(const std::string& dir, const GridSpec& grid,
                            VariableId var) const {
    fs::create_directories(dir);
    auto write_domain = [&](const std::vector<double>& state, const std::string& name) {
        Field f(grid, var, 1);
        std::fill(f.mask.begin(), f.mask.end(), 0);
        for (std::size_t k = 0; k < point_index.size(); ++k) {
            f.values[point_index[k]] = state[k];
            f.mask[point_index[k]] = 1;
        }
        FieldSeries s;
        s.insert(std::move(f));
        write_gfb((fs::path(dir) / name).string(), s);
    };
    write_domain(basis.modes[0], "nao_eof1.gfb");
    write_domain(basis.center, "nao_center.gfb");

    std::ofstream os(fs::path(dir) / "nao_variance.csv");
    os << "key,value\n";
    os.precision(17);
    os << "explained_variance_1," << basis.explained_variance[0] << "\n";
    os << "pc_std_1," << basis.pc_std[0] << "\n";
    os << "lat_min," << domain.lat_min << "\n";
    os << "lat_max," << domain.lat_max << "\n";
    os << "lon_min," << domain.lon_min << "\n";
    os << "lon_max," << domain.lon_max << "\n";
}

DomainIndexBasis DomainIndexBasis::load(const std::string& dir, const GridSpec& grid) {
    auto kv = read_kv_csv((fs::path(dir) / "nao_variance.csv").string());
    DomainIndexBasis dib;
    dib.domain = {kv.at("lat_min"), kv.at("lat_max"), kv.at("lon_min"), kv.at("lon_max")};
    auto series = read_gfb((fs::path(dir) / "nao_eof1.gfb").string());
    const Field& f = series.entries().begin()->second;
    if (f.grid != grid) throw DataError("nao basis: grid mismatch");
    std::vector<double> mode;
    std::vector<double> weights;
    for (std::size_t p = 0; p < f.values.size(); ++p) {
        if (f.mask[p]) {
            dib.point_index.push_back(p);
            mode.push_back(f.values[p]);
            weights.push_back(grid.lat_weights()[p / grid.nlon()]);
        }
    }
    dib.basis.modes.push_back(std::move(mode));
    dib.basis.weights = std::move(weights);
    auto center_series = read_gfb((fs::path(dir) / "nao_center.gfb").string());
    const Field& cf = center_series.entries().begin()->second;
    for (std::size_t p : dib.point_index) dib.basis.center.push_back(cf.values[p]);
    dib.basis.explained_variance.push_back(kv.at("explained_variance_1"));
    dib.basis.pc_std.push_back(kv.at("pc_std_1"));
    return dib;
}

int skill_horizon(const std::vector<std::pair<int, double>>& cor_by_lead, double threshold) {
    if (cor_by_lead.empty()) throw DataError("skill_horizon: empty input");
    int horizon = 0;
    for (const auto& [day, cor] : cor_by_lead) {
        if (cor >= threshold) {
            horizon = day;
        } else {
            break;
        }
    }
    return horizon;
}

}  // namespace ccast
