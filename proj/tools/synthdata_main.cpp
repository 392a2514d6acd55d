#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "rgcop/synthetic.hpp"

// Generates the bundled synthetic tick dataset used by the example
// pipeline configuration and the integration tests.
int main(int argc, char** argv) {
    CLI::App app{"synthetic two-asset tick data generator"};
    std::string out_dir = "data";
    int days = 700;
    unsigned long long seed = 1;
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--days", days, "number of trading days");
    app.add_option("--seed", seed, "generator seed")->required();
    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        rgcop::synthetic::SynthConfig cfg;
        cfg.days = days;
        cfg.seed = seed;
        std::string p1 = out_dir + "/ticks_asset1.csv";
        std::string p2 = out_dir + "/ticks_asset2.csv";
        rgcop::synthetic::write_tick_files(cfg, p1, p2);
        std::cout << "wrote " << p1 << " and " << p2 << " (" << days << " trading days)\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
