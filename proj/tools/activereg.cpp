// Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage or
// configuration error.

#include <activereg/commands.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Active learning for fixed-design regression: fitting, selection and bound validation"};
    app.require_subcommand(1);

    activereg::CommandOptions opts;
    std::string config;
    std::string out = ".";
    unsigned workers = activereg::default_workers();
    std::string bound = "all";
    bool per_rep = false;
    std::size_t reps = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config, "scenario config file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", out, "output directory")->capture_default_str();
        sub->add_option("-w,--workers", workers, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    };
    const std::pair<const char*, const char*> plain[] = {
        {"batch", "select a model and sampling scheme from one labelled draw"},
        {"iterative", "run the sequential learner and write its trace"},
        {"fit", "full-data least squares for every model"},
        {"report", "design conditions, Kraft sum and penalty table"},
    };
    for (const auto& [name, help] : plain) common(app.add_subcommand(name, help));
    CLI::App* validate = app.add_subcommand("validate", "Monte Carlo check of the probability bounds");
    common(validate);
    validate->add_option("-b,--bound", bound, "bound id, comma list, or all")->capture_default_str();
    validate->add_flag("--per-rep", per_rep, "also write per-replication margins as CSV");
    validate->add_option("-r,--replications", reps, "override the configured replication count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    opts.command = app.get_subcommands().front()->get_name();
    opts.config_path = config;
    opts.out_dir = out;
    opts.workers = workers;
    opts.bound = bound;
    opts.per_rep_csv = per_rep;
    if (reps > 0) opts.replications = reps;

    try {
        const activereg::RunReport r = activereg::run_command(opts);
        for (const std::string& o : r.outputs) std::cout << (std::filesystem::path(out) / o).string() << "\n";
        return 0;
    } catch (const activereg::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const activereg::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const activereg::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
