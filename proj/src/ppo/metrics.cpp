#include "xlvin/ppo/metrics.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "xlvin/errors.hpp"

namespace xlvin::ppo {

const char* MetricsLog::header() {
    return "wall_time,env_steps,trajectories,difficulty,train_success_window,eval_mean,eval_std,ppo_loss,value_loss,"
           "entropy,transe_loss";
}

MetricsLog::MetricsLog(const std::string& path, bool wall_clock)
    : wall_clock_(wall_clock), start_(std::chrono::steady_clock::now()) {
    file_ = std::fopen(path.c_str(), "w");
    if (!file_) throw std::runtime_error("cannot open metrics file " + path);
    std::fprintf(file_, "%s\n", header());
    std::fflush(file_);
}

MetricsLog::~MetricsLog() {
    if (file_) std::fclose(file_);
}

void MetricsLog::write(MetricsRow row) {
    row.wall_time =
        wall_clock_ ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() : 0.0;
    std::fprintf(file_, "%.17g,%zu,%zu,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.wall_time, row.env_steps,
                 row.trajectories, row.difficulty, row.train_success_window, row.eval_mean, row.eval_std, row.ppo_loss,
                 row.value_loss, row.entropy, row.transe_loss);
    std::fflush(file_);
    ++rows_;
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics file " + path);
    std::string line;
    std::getline(in, line);
    require(line == MetricsLog::header(), "unexpected metrics header in " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        require(f.size() == 11, "metrics row has " + std::to_string(f.size()) + " fields");
        auto d = [&](std::size_t i) { return std::strtod(f[i].c_str(), nullptr); };
        MetricsRow r;
        r.wall_time = d(0);
        r.env_steps = std::stoull(f[1]);
        r.trajectories = std::stoull(f[2]);
        r.difficulty = std::stoi(f[3]);
        r.train_success_window = d(4);
        r.eval_mean = d(5);
        r.eval_std = d(6);
        r.ppo_loss = d(7);
        r.value_loss = d(8);
        r.entropy = d(9);
        r.transe_loss = d(10);
        rows.push_back(r);
    }
    return rows;
}

} // namespace xlvin::ppo
