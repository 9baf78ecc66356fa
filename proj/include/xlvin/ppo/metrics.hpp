#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace xlvin::ppo {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct MetricsRow {
    double wall_time = 0.0;
    std::size_t env_steps = 0;
    std::size_t trajectories = 0;
    int difficulty = 0;
    double train_success_window = kMissing;
    double eval_mean = kMissing;
    double eval_std = kMissing;
    double ppo_loss = kMissing;
    double value_loss = kMissing;
    double entropy = kMissing;
    double transe_loss = kMissing;
};

// Append-only CSV, one flushed line per record, floats printed with 17
// significant digits so they parse back exactly. With wall_clock off the
// wall_time column is always 0, which makes files from identical runs equal.
class MetricsLog {
public:
    MetricsLog(const std::string& path, bool wall_clock = true);
    ~MetricsLog();
    MetricsLog(const MetricsLog&) = delete;
    MetricsLog& operator=(const MetricsLog&) = delete;

    void write(MetricsRow row);
    std::size_t rows() const { return rows_; }
    static const char* header();

private:
    std::FILE* file_ = nullptr;
    bool wall_clock_;
    std::chrono::steady_clock::time_point start_;
    std::size_t rows_ = 0;
};

std::vector<MetricsRow> read_metrics(const std::string& path);

} // namespace xlvin::ppo
