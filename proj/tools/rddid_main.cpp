#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "rddid/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Regression-discontinuity difference-in-differences estimation"};
    app.require_subcommand(1);

    std::string config_path;
    std::map<std::string, std::string> overrides;

    for (auto command : rddid::kCommands) {
        auto* sub = app.add_subcommand(std::string(command));
        sub->add_option("-c,--config", config_path, "key = value configuration file");
        for (const auto& key : rddid::kConfigKeys) {
            const std::string name(key.name);
            sub->add_option_function<std::string>(
                "--" + name, [&overrides, name](const std::string& v) { overrides[name] = v; },
                std::string(key.help));
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    rddid::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = rddid::parse_config_file(config_path);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
    } catch (const rddid::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return rddid::exit_code(e.category());
    }
    return rddid::run(app.get_subcommands().front()->get_name(), cfg, std::cout, std::cerr);
}
