#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msalab/covering.hpp"
#include "msalab/io.hpp"
#include "msalab/msa.hpp"

namespace msalab {

inline constexpr const char* kCodeVersion = "msalab 0.1.0";

/// One experiment configuration file: a flat JSON document holding every
/// knob the modules expose. Unknown keys are rejected at load time.
struct ExperimentConfig {
    int dimension = 1;
    double density = 1.0;
    std::vector<double> densities;  // optional per-scale override
    std::string density_rule = "fixed";  // fixed | high_disorder
    SingleSiteProfile profile;
    double h = 0.125;
    std::vector<double> scales;
    std::optional<double> ladder_L0;
    double ladder_rho1 = 0.745;
    double E0 = 1.0;
    std::vector<double> energy_grid;
    std::optional<double> mass;
    double eps0 = 0.05, eps1 = 0.05, eps2 = 0.05;
    double kappa = 0.0;  // 0: choose per (L, rho)
    double p = 0.37;
    MsaConstants constants;
    int trials = 100;
    uint64_t seed = 1;
    std::string out_dir = "out";

    std::string raw;  // canonical serialized form, hashed for the manifest

    double mass_or_default() const { return mass.value_or(0.5 * std::sqrt(E0)); }

    double rho_at(size_t scale_idx) const {
        if (!densities.empty()) return densities.at(scale_idx);
        if (density_rule == "high_disorder")
            return high_disorder_density(dimension, profile, p, E0, scales.at(scale_idx));
        return density;
    }

    double kappa_at(size_t scale_idx) const {
        if (kappa > 0.0) return kappa;
        return kappa_for_density(scales.at(scale_idx), dimension, rho_at(scale_idx));
    }

    GoodnessConfig goodness_at(size_t scale_idx) const {
        GoodnessConfig g;
        g.eps1 = eps1;
        g.kappa = kappa_at(scale_idx);
        g.h = h;
        g.profile = profile;
        g.density = rho_at(scale_idx);
        return g;
    }

    DensityParams density_params() const { return DensityParams(eps1, eps2, profile.delta_plus); }

    std::string hash() const { return hex64(fnv1a(raw)); }
};

namespace detail {

inline json experiment_schema() {
    json profile = {{"u_plus", 0}, {"u_minus", 0}, {"delta_plus", 0}, {"delta_minus", 0},
                    {"shape", 0}};
    json ladder = {{"L0", 0}, {"rho1", 0}};
    json energy = {{"E0", 0}, {"grid", 0}};
    json exponents = {{"eps0", 0}, {"eps1", 0}, {"eps2", 0}, {"kappa", 0}};
    json msa = {{"K1", 0}, {"Kprime", 0}, {"C1", 0}, {"corner_cap", 0}, {"n_samples", 0},
                {"p", 0}};
    return json{{"dimension", 0}, {"density", 0},   {"densities", 0}, {"density_rule", 0},
                {"profile", profile}, {"h", 0},     {"scales", 0},    {"ladder", ladder},
                {"energy", energy},   {"mass", 0},  {"exponents", exponents},
                {"msa", msa},         {"trials", 0}, {"seed", 0},     {"out_dir", 0}};
}

}  // namespace detail

/// Parse and validate an experiment config document; throws
/// std::invalid_argument with a message naming the offending key or rule.
inline ExperimentConfig parse_experiment_config(const json& doc) {
    reject_unknown_keys(doc, detail::experiment_schema(), "");
    ExperimentConfig cfg;
    cfg.raw = doc.dump();

    cfg.dimension = doc.value("dimension", 1);
    if (cfg.dimension < 1) throw std::invalid_argument("config: dimension must be >= 1");

    if (doc.contains("profile")) {
        const auto& p = doc.at("profile");
        const std::string shape = p.value("shape", "indicator");
        SingleSiteProfile::Shape sh;
        if (shape == "indicator") sh = SingleSiteProfile::Shape::indicator;
        else if (shape == "trapezoid") sh = SingleSiteProfile::Shape::trapezoid;
        else throw std::invalid_argument("config: profile.shape must be indicator or trapezoid");
        cfg.profile = SingleSiteProfile(p.value("u_plus", 1.0), p.value("u_minus", 1.0),
                                        p.value("delta_plus", 1.0), p.value("delta_minus", 1.0), sh);
    }

    cfg.density = doc.value("density", 1.0);
    if (!(cfg.density > 0.0)) throw std::invalid_argument("config: density must be > 0");
    if (doc.contains("densities")) cfg.densities = doc.at("densities").get<std::vector<double>>();
    cfg.density_rule = doc.value("density_rule", "fixed");
    if (cfg.density_rule != "fixed" && cfg.density_rule != "high_disorder")
        throw std::invalid_argument("config: density_rule must be fixed or high_disorder");

    cfg.h = doc.value("h", 0.125);
    if (!(cfg.h > 0.0 && cfg.h <= cfg.profile.delta_minus / 4.0))
        throw std::invalid_argument("config: h must satisfy 0 < h <= delta_-/4");

    if (doc.contains("scales")) cfg.scales = doc.at("scales").get<std::vector<double>>();
    if (doc.contains("ladder")) {
        const auto& l = doc.at("ladder");
        cfg.ladder_L0 = l.at("L0").get<double>();
        cfg.ladder_rho1 = l.value("rho1", 0.745);
    }
    if (cfg.scales.empty() && !cfg.ladder_L0)
        throw std::invalid_argument("config: provide scales or a ladder");
    for (double L : cfg.scales)
        if (!(L > 1.0)) throw std::invalid_argument("config: scales must exceed 1");
    if (!cfg.densities.empty() && cfg.densities.size() != cfg.scales.size())
        throw std::invalid_argument("config: densities must match scales");

    if (doc.contains("energy")) {
        cfg.E0 = doc.at("energy").value("E0", 1.0);
        if (doc.at("energy").contains("grid"))
            cfg.energy_grid = doc.at("energy").at("grid").get<std::vector<double>>();
    }
    if (!(cfg.E0 > 0.0)) throw std::invalid_argument("config: energy.E0 must be > 0");
    if (doc.contains("mass")) cfg.mass = doc.at("mass").get<double>();

    if (doc.contains("exponents")) {
        const auto& e = doc.at("exponents");
        cfg.eps0 = e.value("eps0", 0.05);
        cfg.eps1 = e.value("eps1", 0.05);
        cfg.eps2 = e.value("eps2", 0.05);
        cfg.kappa = e.value("kappa", 0.0);
    }
    if (!(cfg.eps1 > 0.0 && cfg.eps1 < 0.25 && cfg.eps2 > 0.0 && cfg.eps2 < 0.25))
        throw std::invalid_argument("config: eps1, eps2 must lie in (0, 1/4)");

    if (doc.contains("msa")) {
        const auto& m = doc.at("msa");
        cfg.constants.K1 = m.value("K1", 8);
        cfg.constants.Kprime = m.value("Kprime", 4);
        cfg.constants.C1 = m.value("C1", 1.0);
        cfg.constants.corner_cap = m.value("corner_cap", 12);
        cfg.constants.n_samples = m.value("n_samples", 32);
        cfg.p = m.value("p", 0.37);
    }
    if (!(cfg.p > 0.0)) throw std::invalid_argument("config: msa.p must be > 0");

    cfg.trials = doc.value("trials", 100);
    if (cfg.trials < 1) throw std::invalid_argument("config: trials must be >= 1");
    cfg.seed = doc.value("seed", uint64_t{1});
    cfg.out_dir = doc.value("out_dir", std::string("out"));
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    json doc;
    is >> doc;
    return parse_experiment_config(doc);
}

/// Resolve the configured scale list: either explicit or a validated ladder.
inline std::vector<double> resolve_scales(const ExperimentConfig& cfg) {
    if (!cfg.scales.empty()) return cfg.scales;
    ScaleLadderOverrides ov;
    ov.rho1 = cfg.ladder_rho1;
    ov.p = cfg.p;
    const auto ladder = scale_ladder(*cfg.ladder_L0, cfg.dimension, ov);
    std::vector<double> scales(ladder.levels.rbegin(), ladder.levels.rend());
    return scales;
}

}  // namespace msalab
