#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mlagen/core/errors.hpp"
#include "mlagen/pipeline/commands.hpp"

using mlagen::pipeline::json;

namespace {

struct CommandOptions {
    std::string config_file;
    std::string run_dir;
    bool quiet = false;
    std::map<std::string, std::optional<std::string>> fields;  // dotted path -> value
};

json load_snapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw mlagen::DependencyError("config snapshot not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw mlagen::ConfigError("config snapshot " + path + " is not valid JSON: " + e.what());
    }
}

json resolve(const CommandOptions& o) {
    json cfg = o.config_file.empty() ? mlagen::pipeline::default_config()
                                     : mlagen::pipeline::merge_defaults(load_snapshot(o.config_file));
    cfg.erase("_notes");
    for (const auto& [path, value] : o.fields)
        if (value) mlagen::pipeline::set_path(cfg, path, *value);
    if (!o.run_dir.empty()) cfg["run_dir"] = o.run_dir;
    mlagen::pipeline::validate_config(cfg);
    return cfg;
}

std::string leaf_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motion latent flow generator: data, training, sampling, evaluation and sink analysis"};
    app.require_subcommand(1);
    app.footer("Relative run directories are resolved under $MLAGEN_RUN_ROOT when it is set.\n"
               "Exit codes: 0 success, 1 failure, 2 validation, 3 missing dependency, 4 numeric failure.");

    const json defaults = mlagen::pipeline::default_config();
    const auto paths = mlagen::pipeline::leaf_paths(defaults);

    std::map<std::string, std::unique_ptr<CommandOptions>> options;
    std::string selected;
    for (const auto& name : mlagen::pipeline::command_names()) {
        auto* sub = app.add_subcommand(name, "Run the " + name + " stage");
        auto& o = *options.emplace(name, std::make_unique<CommandOptions>()).first->second;
        sub->add_option("--config", o.config_file, "Replay a resolved config snapshot (JSON)");
        sub->add_option("--run-dir", o.run_dir, "Run directory (overrides run_dir)");
        sub->add_flag("-q,--quiet", o.quiet, "Only print the final summary lines");
        for (const auto& p : paths) {
            auto& slot = o.fields[p];
            sub->add_option_function<std::string>("--" + p, [&slot](const std::string& v) { slot = v; },
                                                  "default: " + leaf_text(mlagen::pipeline::get_path(defaults, p)))
                ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)
                ->group("Config fields");
        }
        sub->callback([&selected, name] { selected = name; });
    }
    auto* show = app.add_subcommand("print-config", "Print the resolved config as JSON");
    CommandOptions show_opts;
    show->add_option("--config", show_opts.config_file, "Config snapshot to resolve");
    for (const auto& p : paths) {
        auto& slot = show_opts.fields[p];
        show->add_option_function<std::string>("--" + p, [&slot](const std::string& v) { slot = v; })
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)
            ->group("Config fields");
    }
    show->callback([&selected] { selected = "print-config"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(mlagen::ExitCode::validation);
    }

    try {
        if (selected == "print-config") {
            std::cout << resolve(show_opts).dump(2) << '\n';
            return 0;
        }
        const auto& o = *options.at(selected);
        const json cfg = resolve(o);
        mlagen::pipeline::Logger log;
        if (!o.quiet) log = [](const std::string& s) { std::cerr << s << '\n'; };
        const auto result = mlagen::pipeline::run_command(selected, cfg, log);
        if (o.quiet)
            for (const auto& m : result.messages) std::cout << m << '\n';
        std::cout << selected << ": " << result.outputs.size() << " artifact(s) written to "
                  << mlagen::pipeline::run_directory(cfg).string() << (result.warning ? " (warning)" : "") << '\n';
        return 0;
    } catch (const mlagen::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(mlagen::ExitCode::failure);
    }
}
