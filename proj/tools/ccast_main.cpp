// Command-line driver: generate synthetic truth, build climatology, train
// the coupled model, forecast, verify, and report.

#include <CLI11.hpp>
#include <iostream>

#include "ccast/commands.hpp"

using namespace ccast;

namespace {

RunConfig load_config(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg = RunConfig::defaults();
        cfg.finalize();
        return cfg;
    }
    return RunConfig::parse_file(path);
}

std::vector<InitKey> parse_init_date(const std::string& spec) {
    if (spec.empty()) return {};
    auto colon = spec.find(':');
    if (colon == std::string::npos) {
        throw UsageError("--init-date expects year:date, got '" + spec + "'");
    }
    return {{std::stoi(spec.substr(0, colon)), std::stoi(spec.substr(colon + 1))}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coupled subseasonal forecasting testbed"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, clim_dir, fc_clim_dir, ckpt_path, fc_dir;
    std::string init_date, coupled_dir, ablated_dir;
    std::uint64_t seed = 1;
    std::size_t members = 0;
    bool ablate = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file");
        cmd->add_option("--out", out_dir, "output directory")->required();
        cmd->add_option("--seed", seed, "random seed");
    };

    auto* gen = app.add_subcommand("gen-truth", "integrate the synthetic coupled truth");
    add_common(gen);

    auto* clim = app.add_subcommand("build-clim", "hindcast climatology from the truth");
    add_common(clim);
    clim->add_option("--data", data_dir, "dataset directory")->required();

    auto* train_cmd = app.add_subcommand("train", "optimize the coupled model");
    add_common(train_cmd);
    train_cmd->add_option("--data", data_dir, "dataset directory")->required();

    auto* fc = app.add_subcommand("forecast", "ensemble forecasts from a checkpoint");
    add_common(fc);
    fc->add_option("--data", data_dir, "dataset directory")->required();
    fc->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    fc->add_option("--members", members, "ensemble members (default: config)");
    fc->add_option("--init-date", init_date, "single initialization as year:date");
    fc->add_flag("--ablate-coupling", ablate, "zero the coupling projections");

    auto* verify = app.add_subcommand("verify", "deterministic/probabilistic/extreme skill");
    add_common(verify);
    verify->add_option("--data", data_dir, "dataset directory")->required();
    verify->add_option("--clim", clim_dir, "observation climatology")->required();
    verify->add_option("--forecasts", fc_dir, "forecast directory")->required();
    verify->add_option("--forecast-clim", fc_clim_dir,
                       "forecast climatology (default: --clim)");

    auto* mjo = app.add_subcommand("mjo", "intra-seasonal variability index skill");
    add_common(mjo);
    mjo->add_option("--data", data_dir, "dataset directory")->required();
    mjo->add_option("--clim", clim_dir, "observation climatology")->required();
    mjo->add_option("--forecasts", fc_dir, "forecast directory")->required();
    mjo->add_option("--forecast-clim", fc_clim_dir, "forecast climatology (default: --clim)");

    auto* cd = app.add_subcommand("couple-diag", "cross-sphere correlation diagnostics");
    add_common(cd);
    cd->add_option("--data", data_dir, "dataset directory")->required();
    cd->add_option("--clim", clim_dir, "observation climatology")->required();
    cd->add_option("--forecasts", fc_dir, "forecast directory")->required();
    cd->add_option("--forecast-clim", fc_clim_dir, "forecast climatology (default: --clim)");

    auto* report = app.add_subcommand("report", "coupled vs ablated comparison table");
    report->add_option("--coupled", coupled_dir, "verify output of the coupled run")
        ->required();
    report->add_option("--ablated", ablated_dir, "verify output of the ablated run")
        ->required();
    report->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (gen->parsed()) {
            cmd_gen_truth(cfg, seed, out_dir);
        } else if (clim->parsed()) {
            cmd_build_clim(cfg, data_dir, out_dir);
        } else if (train_cmd->parsed()) {
            cmd_train(cfg, data_dir, seed, out_dir);
        } else if (fc->parsed()) {
            std::size_t m = members ? members : cfg.model.ensemble_size;
            cmd_forecast(cfg, data_dir, ckpt_path, parse_init_date(init_date), m, seed,
                         ablate, out_dir);
        } else if (verify->parsed()) {
            cmd_verify(cfg, data_dir, clim_dir, fc_dir,
                       fc_clim_dir.empty() ? clim_dir : fc_clim_dir, out_dir);
        } else if (mjo->parsed()) {
            cmd_mjo(cfg, data_dir, clim_dir, fc_dir,
                    fc_clim_dir.empty() ? clim_dir : fc_clim_dir, out_dir);
        } else if (cd->parsed()) {
            cmd_couple_diag(cfg, data_dir, clim_dir, fc_dir,
                            fc_clim_dir.empty() ? clim_dir : fc_clim_dir, out_dir);
        } else if (report->parsed()) {
            cmd_report(coupled_dir, ablated_dir, out_dir);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
