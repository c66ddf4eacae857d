#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "supernotes/mf.hpp"

namespace testutil {

// 2023-01-01T00:00Z, the default ingest floor.
inline constexpr std::int64_t kBaseTs = 1672531200000LL;

class TempDir {
public:
    TempDir() {
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("supernotes_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Independent objective evaluations for the oracle fits. These deliberately
// re-derive the formulas instead of calling into the library.

inline double note_fit_objective(double f, double i, const std::vector<double>& rater_factors,
                                 const std::vector<double>& rater_intercepts,
                                 const std::vector<double>& values, double mu, double lambda_f,
                                 double lambda_i) {
    double total = lambda_f * f * f + lambda_i * i * i;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double err = values[k] - mu - rater_intercepts[k] - i - f * rater_factors[k];
        total += err * err;
    }
    return total;
}

struct GridResult {
    double f = 0.0;
    double i = 0.0;
    double objective = 0.0;
};

// Dense grid with progressive refinement: [-2,2]^2 at 0.01, then two zooms
// around the winner down to 4e-6 resolution, well inside the 1e-4 tolerance
// the fits are compared at.
inline GridResult grid_search_note_fit(const std::vector<double>& rater_factors,
                                       const std::vector<double>& rater_intercepts,
                                       const std::vector<double>& values, double mu,
                                       double lambda_f, double lambda_i) {
    auto sweep = [&](double f_lo, double f_hi, double i_lo, double i_hi, double step) {
        GridResult best;
        best.objective = std::numeric_limits<double>::infinity();
        for (double f = f_lo; f <= f_hi + step / 2; f += step) {
            for (double i = i_lo; i <= i_hi + step / 2; i += step) {
                const double obj = note_fit_objective(f, i, rater_factors, rater_intercepts,
                                                      values, mu, lambda_f, lambda_i);
                if (obj < best.objective) best = {f, i, obj};
            }
        }
        return best;
    };
    GridResult best = sweep(-2.0, 2.0, -2.0, 2.0, 0.01);
    best = sweep(best.f - 0.02, best.f + 0.02, best.i - 0.02, best.i + 0.02, 2e-4);
    return sweep(best.f - 4e-4, best.f + 4e-4, best.i - 4e-4, best.i + 4e-4, 4e-6);
}

// Full training objective for a tiny rating set, re-derived independently.
inline double mf_objective_oracle(double mu, const std::vector<double>& fu,
                                  const std::vector<double>& iu, const std::vector<double>& fn,
                                  const std::vector<double>& in,
                                  const std::vector<std::array<int, 2>>& cells,
                                  const std::vector<double>& values, double lambda_i,
                                  double lambda_f) {
    double total = lambda_i * mu * mu;
    for (double v : iu) total += lambda_i * v * v;
    for (double v : in) total += lambda_i * v * v;
    for (double v : fu) total += lambda_f * v * v;
    for (double v : fn) total += lambda_f * v * v;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const int u = cells[k][0];
        const int n = cells[k][1];
        const double err = mu + iu[u] + in[n] + fu[u] * fn[n] - values[k];
        total += err * err;
    }
    return total;
}

// Grid search over the 2x2 world's nine parameters on a [-2,2] grid at 0.01
// resolution: cyclic 1-D sweeps for the intercept block plus joint 2-D sweeps
// over every (rater factor, note factor) pair, because single-coordinate moves
// stall in the bilinear valley. Several starts, then a local refinement stage.
inline double coordinate_grid_descent_2x2(const std::vector<std::array<int, 2>>& cells,
                                          const std::vector<double>& values, double lambda_i,
                                          double lambda_f) {
    double best_overall = std::numeric_limits<double>::infinity();
    const std::vector<std::array<double, 5>> starts = {
        {0, 0, 0, 0, 0}, {1, -1, 0.5, -0.5, 0.2}, {-1, 1, -0.5, 0.5, -0.2}, {0.5, 0.5, 0.5, 0.5, 0.5}};

    for (const auto& start : starts) {
        double mu = start[4];
        std::vector<double> fu = {start[0], start[1]};
        std::vector<double> iu = {0.0, 0.0};
        std::vector<double> fn = {start[2], start[3]};
        std::vector<double> in = {0.0, 0.0};

        auto eval = [&] {
            return mf_objective_oracle(mu, fu, iu, fn, in, cells, values, lambda_i, lambda_f);
        };

        double current = eval();
        auto sweep_scalar = [&](double& slot, double lo, double hi, double step) {
            const double saved = slot;
            double best_v = saved;
            double best_obj = current;
            for (double v = lo; v <= hi + step / 2; v += step) {
                slot = v;
                const double obj = eval();
                if (obj < best_obj - 1e-15) {
                    best_obj = obj;
                    best_v = v;
                }
            }
            slot = best_v;
            if (best_obj < current - 1e-12) {
                current = best_obj;
                return true;
            }
            return false;
        };
        auto sweep_pair = [&](double& a, double& b, double half_width, double step) {
            const double a0 = a, b0 = b;
            double best_a = a0, best_b = b0;
            double best_obj = current;
            const double a_lo = std::max(-2.0, a0 - half_width);
            const double a_hi = std::min(2.0, a0 + half_width);
            const double b_lo = std::max(-2.0, b0 - half_width);
            const double b_hi = std::min(2.0, b0 + half_width);
            for (double va = a_lo; va <= a_hi + step / 2; va += step) {
                for (double vb = b_lo; vb <= b_hi + step / 2; vb += step) {
                    a = va;
                    b = vb;
                    const double obj = eval();
                    if (obj < best_obj - 1e-15) {
                        best_obj = obj;
                        best_a = va;
                        best_b = vb;
                    }
                }
            }
            a = best_a;
            b = best_b;
            if (best_obj < current - 1e-12) {
                current = best_obj;
                return true;
            }
            return false;
        };

        auto rounds = [&](double half_width, double step, int max_rounds) {
            bool improved = true;
            int guard = 0;
            while (improved && guard++ < max_rounds) {
                improved = false;
                improved |= sweep_scalar(mu, std::max(-2.0, mu - half_width),
                                         std::min(2.0, mu + half_width), step);
                for (double& v : iu) {
                    improved |= sweep_scalar(v, std::max(-2.0, v - half_width),
                                             std::min(2.0, v + half_width), step);
                }
                for (double& v : in) {
                    improved |= sweep_scalar(v, std::max(-2.0, v - half_width),
                                             std::min(2.0, v + half_width), step);
                }
                for (double& u : fu) {
                    for (double& n : fn) improved |= sweep_pair(u, n, half_width, step);
                }
            }
        };

        rounds(4.0, 0.01, 40);    // full-range pass at the stated resolution
        rounds(0.02, 5e-4, 20);   // local refinement
        best_overall = std::min(best_overall, current);
    }
    return best_overall;
}

// O(n^2) pairwise AUC with half-credit ties; the rank-statistic oracle.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace testutil
